//! Principal symbols of the conjugated operator.
//!
//! At the artificial boundary the operator acts, frozen in `y`, as a
//! convolution in the blow-up coordinates `(X, Y)` with kernel
//!
//! ```text
//! K(y, X, Y) = e^{-F X} |Y|^{1-n} chi((X - Q(Yh, Yh) |Y|^2) / |Y|)
//! ```
//!
//! (n = 3, `Yh = Y/|Y|`, `Q` the turning-rate form). Its `(X, Y)` Fourier
//! transform is the boundary principal symbol. Two independent routes are
//! implemented: a numerical transform of the kernel (partial transform in X
//! via stable quadrature recurrences, then a polar FFT in Y), and the
//! closed convolution form `<xi>^{-1} phi(eta/<xi>)` with
//! `phi = |.|^{-1} * exp(-F Q^{-1}(., .)/2)`, valid for the Gaussian
//! alpha-matched cutoff. The interior symbol is probed from the operator
//! kernel itself by an oscillatory integral; it decays like `|zeta|^{-1}`.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::cutoff::{chi_eval, CutoffSpec};
use crate::error::{GeorayError, Result};
use crate::util::{gauss_legendre_on, Sym2};

/// Cutoff profile used in symbol computations.
#[derive(Debug, Clone, Copy)]
pub enum SymbolChi {
    /// Untruncated Gaussian with alpha-matched variance `nu = alpha / F`.
    GaussianMatched,
    /// An operational cutoff (tapered truncation, any variance mode).
    Cutoff(CutoffSpec),
}

impl SymbolChi {
    pub fn eval(&self, s: f64, alpha: f64, digamma: f64) -> f64 {
        match self {
            SymbolChi::GaussianMatched => {
                if alpha <= 0.0 {
                    0.0
                } else {
                    (-0.5 * s * s * digamma / alpha).exp()
                }
            }
            SymbolChi::Cutoff(cs) => chi_eval(cs, s, alpha),
        }
    }

    /// Effective half-width of the support in `s` (exact for cutoffs,
    /// 12 sigma for the Gaussian).
    pub fn s_support(&self, alpha_max: f64, digamma: f64) -> f64 {
        match self {
            SymbolChi::GaussianMatched => 12.0 * (alpha_max / digamma).sqrt(),
            SymbolChi::Cutoff(cs) => cs.s_max,
        }
    }
}

/// Front-face kernel value. Errors at Y = 0 (the conormal point; callers
/// integrate around it in polar coordinates).
pub fn frontface_kernel(
    x_big: f64,
    y_big: [f64; 2],
    chi: &SymbolChi,
    digamma: f64,
    q: Sym2,
) -> Result<f64> {
    let ny = (y_big[0] * y_big[0] + y_big[1] * y_big[1]).sqrt();
    if ny == 0.0 {
        return Err(GeorayError::Domain(
            "front-face kernel is singular at Y = 0".into(),
        ));
    }
    let yh = [y_big[0] / ny, y_big[1] / ny];
    let alpha = q.quad(yh);
    let s = (x_big - alpha * ny * ny) / ny;
    Ok((-digamma * x_big).exp() * chi.eval(s, alpha, digamma) / (ny * ny))
}

/// Partial Fourier transform of the front-face kernel in X:
///
/// `P(xi, Y) = |Y|^{2-n} e^{-(F+i xi) alpha |Y|^2} Xi((F+i xi)|Y|)`, with
/// `Xi(w) = int chi(s) e^{-w s} ds`, evaluated in closed form for the
/// Gaussian and by stable quadrature (single joint exponential) otherwise.
pub fn partial_ft_x(
    chi: &SymbolChi,
    digamma: f64,
    q: Sym2,
    xi: f64,
    y_big: [f64; 2],
) -> Result<Complex64> {
    let ny = (y_big[0] * y_big[0] + y_big[1] * y_big[1]).sqrt();
    if ny == 0.0 {
        return Err(GeorayError::Domain("partial transform needs Y != 0".into()));
    }
    let yh = [y_big[0] / ny, y_big[1] / ny];
    let alpha = q.quad(yh);
    let w = Complex64::new(digamma, xi);
    match chi {
        SymbolChi::GaussianMatched => {
            let nu = alpha / digamma;
            // int e^{-s^2/(2 nu)} e^{-w b s} ds = sqrt(2 pi nu) e^{nu w^2 b^2 / 2}
            let amp = (2.0 * std::f64::consts::PI * nu).sqrt();
            let expo = -w * alpha * ny * ny + 0.5 * nu * w * w * ny * ny;
            Ok(amp * expo.exp() / ny)
        }
        SymbolChi::Cutoff(cs) => {
            let s_max = cs.s_max;
            if s_max <= 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            // Composite quadrature fine enough for the oscillation xi * |Y| s.
            let cycles = (xi.abs() * ny * s_max / std::f64::consts::PI).ceil() as usize + 1;
            let n = (24 * cycles).clamp(64, 20_000);
            let (nodes, weights) = gauss_legendre_on(n, -s_max, s_max);
            let mut acc = Complex64::new(0.0, 0.0);
            for (s, wt) in nodes.iter().zip(&weights) {
                let c = chi_eval(cs, *s, alpha);
                if c == 0.0 {
                    continue;
                }
                // Joint exponential keeps the magnitude bounded by the
                // kernel envelope (no catastrophic cancellation).
                let expo = -w * (alpha * ny * ny + s * ny);
                acc += wt * c * expo.exp();
            }
            Ok(acc / ny)
        }
    }
}

/// Sampled boundary symbol on a (xi, eta) product grid.
#[derive(Debug, Clone)]
pub struct SymbolGrid {
    pub xi_nodes: Vec<f64>,
    pub eta1_nodes: Vec<f64>,
    pub eta2_nodes: Vec<f64>,
    /// xi-major, then eta1, then eta2.
    pub values: Vec<Complex64>,
    pub digamma: f64,
    pub q: Sym2,
}

impl SymbolGrid {
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.eta1_nodes.len() + j) * self.eta2_nodes.len() + k
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.values[self.index(i, j, k)]
    }

    /// Largest |value| on the grid.
    pub fn peak(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// sigma(0, 0, 0); real positive for admissible cutoffs.
    pub fn origin_value(&self) -> Complex64 {
        let i = nearest(&self.xi_nodes, 0.0);
        let j = nearest(&self.eta1_nodes, 0.0);
        let k = nearest(&self.eta2_nodes, 0.0);
        self.value(i, j, k)
    }

    /// Divide by the origin value; returns the factor removed.
    pub fn normalize_at_origin(&mut self) -> Complex64 {
        let v0 = self.origin_value();
        for v in &mut self.values {
            *v /= v0;
        }
        v0
    }

    /// Hermitian symmetry defect: max |sigma(-z) - conj(sigma(z))| over the
    /// grid (requires symmetric node sets).
    pub fn hermitian_defect(&self) -> f64 {
        let (ni, nj, nk) = (
            self.xi_nodes.len(),
            self.eta1_nodes.len(),
            self.eta2_nodes.len(),
        );
        let mut worst = 0.0_f64;
        for i in 0..ni {
            for j in 0..nj {
                for k in 0..nk {
                    let a = self.value(i, j, k);
                    let b = self.value(ni - 1 - i, nj - 1 - j, nk - 1 - k);
                    worst = worst.max((a - b.conj()).norm());
                }
            }
        }
        worst
    }

    /// Trilinear interpolation with |(xi,eta)|^{-1}-type extrapolation
    /// beyond the grid edges.
    pub fn eval_extrapolated(&self, xi: f64, eta: [f64; 2]) -> Complex64 {
        let clamp = |nodes: &Vec<f64>, v: f64| -> (usize, f64, f64) {
            let lo = nodes[0];
            let hi = *nodes.last().unwrap();
            let step = (hi - lo) / (nodes.len() - 1) as f64;
            let vv = v.clamp(lo, hi);
            let u = ((vv - lo) / step).min((nodes.len() - 2) as f64).max(0.0);
            let i = u.floor() as usize;
            (i, u - i.min(nodes.len() - 2) as f64, vv)
        };
        let (i, ti, xi_c) = clamp(&self.xi_nodes, xi);
        let (j, tj, e1_c) = clamp(&self.eta1_nodes, eta[0]);
        let (k, tk, e2_c) = clamp(&self.eta2_nodes, eta[1]);
        let mut acc = Complex64::new(0.0, 0.0);
        for (di, wi) in [(0, 1.0 - ti), (1, ti)] {
            for (dj, wj) in [(0, 1.0 - tj), (1, tj)] {
                for (dk, wk) in [(0, 1.0 - tk), (1, tk)] {
                    acc += wi * wj * wk * self.value(i + di, j + dj, k + dk);
                }
            }
        }
        // Outside the box, continue with the order -1 decay profile.
        let jb = |x: f64, e: [f64; 2]| {
            (self.digamma * self.digamma + x * x + e[0] * e[0] + e[1] * e[1]).sqrt()
        };
        let inside = jb(xi_c, [e1_c, e2_c]);
        let query = jb(xi, eta);
        if query > inside {
            acc *= inside / query;
        }
        acc
    }

    /// CSV export: xi, eta1, eta2, Re, Im, |sigma| <(xi,eta)>.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("xi,eta1,eta2,re,im,abs_weighted\n");
        for (i, &xi) in self.xi_nodes.iter().enumerate() {
            for (j, &e1) in self.eta1_nodes.iter().enumerate() {
                for (k, &e2) in self.eta2_nodes.iter().enumerate() {
                    let v = self.value(i, j, k);
                    let jap =
                        (self.digamma * self.digamma + xi * xi + e1 * e1 + e2 * e2).sqrt();
                    s.push_str(&format!(
                        "{xi},{e1},{e2},{},{},{}\n",
                        v.re,
                        v.im,
                        v.norm() * jap
                    ));
                }
            }
        }
        s
    }
}

fn nearest(nodes: &[f64], v: f64) -> usize {
    let mut best = 0;
    let mut d = f64::INFINITY;
    for (i, &n) in nodes.iter().enumerate() {
        if (n - v).abs() < d {
            d = (n - v).abs();
            best = i;
        }
    }
    best
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Resolution parameters for the numerical symbol transform.
#[derive(Debug, Clone, Copy)]
pub struct SymbolScanConfig {
    pub xi_max: f64,
    pub eta_max: f64,
    pub n_xi: usize,
    pub n_eta: usize,
    pub n_phi: usize,
    pub rho_step: f64,
}

impl Default for SymbolScanConfig {
    fn default() -> Self {
        SymbolScanConfig {
            xi_max: 40.0,
            eta_max: 40.0,
            n_xi: 129,
            n_eta: 129,
            n_phi: 64,
            rho_step: 0.008,
        }
    }
}

/// Numerical boundary symbol: partial transform in X (stable recurrences
/// along the uniform rho grid), FFT in the radial Y variable per angle,
/// then angular quadrature onto the (eta1, eta2) grid.
pub fn boundary_symbol_fft(
    chi: &SymbolChi,
    digamma: f64,
    q: Sym2,
    cfg: &SymbolScanConfig,
) -> Result<SymbolGrid> {
    if digamma <= 0.0 {
        return Err(GeorayError::Validation(
            "boundary symbol needs digamma > 0 (kernel not integrable otherwise)".into(),
        ));
    }
    let [q_lo, q_hi] = q.eigenvalues();
    if q_lo <= 0.0 {
        return Err(GeorayError::Validation("Q must be SPD".into()));
    }
    let xi_nodes = linspace(-cfg.xi_max, cfg.xi_max, cfg.n_xi);
    let eta1_nodes = linspace(-cfg.eta_max, cfg.eta_max, cfg.n_eta);
    let eta2_nodes = linspace(-cfg.eta_max, cfg.eta_max, cfg.n_eta);

    // Radial extent: the kernel envelope e^{-F(alpha rho^2 - s_max rho)}
    // needs rho past the vertex plus a Gaussian margin.
    let s_sup = chi.s_support(q_hi, digamma);
    let rho_max = s_sup / q_lo + 10.0 / (digamma * q_lo).sqrt();
    let n_rho = (rho_max / cfg.rho_step).ceil() as usize;
    // FFT length: u-resolution 2 pi / (N d_rho) fine enough for cubic
    // interpolation of the transform at the eta grid.
    let mut n_fft = 1usize;
    let du_target = 0.05;
    while (std::f64::consts::TAU / (n_fft as f64 * cfg.rho_step)) > du_target
        || n_fft < 2 * n_rho
    {
        n_fft <<= 1;
    }
    let du = std::f64::consts::TAU / (n_fft as f64 * cfg.rho_step);
    let u_nyq = std::f64::consts::PI / cfg.rho_step;
    if cfg.eta_max * std::f64::consts::SQRT_2 >= u_nyq {
        return Err(GeorayError::Accuracy(
            "eta range exceeds the radial Nyquist limit; reduce rho_step".into(),
        ));
    }

    // Angle table.
    let phis: Vec<f64> = (0..cfg.n_phi)
        .map(|i| std::f64::consts::TAU * i as f64 / cfg.n_phi as f64)
        .collect();
    let w_phi = std::f64::consts::TAU / cfg.n_phi as f64;

    // s-quadrature template for cutoff profiles.
    let s_nodes_weights: Option<(Vec<f64>, Vec<f64>)> = match chi {
        SymbolChi::GaussianMatched => None,
        SymbolChi::Cutoff(cs) => {
            if cs.s_max <= 0.0 {
                None
            } else {
                Some(gauss_legendre_on(64, -cs.s_max, cs.s_max))
            }
        }
    };

    let values: Vec<Vec<Complex64>> = xi_nodes
        .par_iter()
        .map(|&xi| {
            let mut planner = FftPlanner::new();
            let fft = planner.plan_fft_forward(n_fft);
            let w = Complex64::new(digamma, xi);
            // Transform tables per angle.
            let mut tables: Vec<Vec<Complex64>> = Vec::with_capacity(cfg.n_phi);
            for &phi in &phis {
                let theta = [phi.cos(), phi.sin()];
                let alpha = q.quad(theta);
                let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
                match (chi, &s_nodes_weights) {
                    (SymbolChi::GaussianMatched, _) => {
                        let nu = alpha / digamma;
                        let amp = (2.0 * std::f64::consts::PI * nu).sqrt();
                        // exponent per rho: (-w alpha + nu w^2 / 2) rho^2
                        let c2 = -w * alpha + 0.5 * nu * w * w;
                        for (j, b) in buf.iter_mut().enumerate().take(n_rho + 1) {
                            let rho = j as f64 * cfg.rho_step;
                            let e = (c2 * rho * rho).exp();
                            let wt = if j == 0 || j == n_rho { 0.5 } else { 1.0 };
                            *b = amp * e * wt * cfg.rho_step;
                        }
                    }
                    (SymbolChi::Cutoff(cs), Some((sn, sw))) => {
                        // E(rho) = sum_i chi(s_i) w_i e^{-w(alpha rho^2 + s_i rho)}
                        // via per-node geometric recurrences in rho.
                        let n_s = sn.len();
                        let mut z: Vec<Complex64> = vec![Complex64::new(1.0, 0.0); n_s];
                        let qf: Vec<Complex64> = sn
                            .iter()
                            .map(|&s| (-w * s * cfg.rho_step).exp())
                            .collect();
                        let cw: Vec<f64> = sn
                            .iter()
                            .zip(sw)
                            .map(|(&s, &wt)| chi_eval(cs, s, alpha) * wt)
                            .collect();
                        // Quadratic factor e^{-w alpha rho^2} recurrence.
                        let dstep = (-w * alpha * cfg.rho_step * cfg.rho_step).exp();
                        let e2 = dstep * dstep;
                        let mut g = Complex64::new(1.0, 0.0);
                        let mut d = dstep;
                        for (j, b) in buf.iter_mut().enumerate().take(n_rho + 1) {
                            let mut acc = Complex64::new(0.0, 0.0);
                            for i in 0..n_s {
                                acc += cw[i] * z[i];
                                z[i] *= qf[i];
                            }
                            let wt = if j == 0 || j == n_rho { 0.5 } else { 1.0 };
                            *b = acc * g * wt * cfg.rho_step;
                            g *= d;
                            d *= e2;
                        }
                    }
                    _ => {}
                }
                fft.process(&mut buf);
                tables.push(buf);
            }
            // Assemble sigma(xi, eta) = sum_phi w_phi T_phi(eta . theta).
            let mut out = vec![Complex64::new(0.0, 0.0); cfg.n_eta * cfg.n_eta];
            for (p, &phi) in phis.iter().enumerate() {
                let theta = [phi.cos(), phi.sin()];
                let t = &tables[p];
                for (j, &e1) in eta1_nodes.iter().enumerate() {
                    for (k, &e2) in eta2_nodes.iter().enumerate() {
                        let u = e1 * theta[0] + e2 * theta[1];
                        out[j * cfg.n_eta + k] += w_phi * sample_fft(t, u, du);
                    }
                }
            }
            out
        })
        .collect();

    let mut flat = Vec::with_capacity(cfg.n_xi * cfg.n_eta * cfg.n_eta);
    for v in values {
        flat.extend(v);
    }
    Ok(SymbolGrid {
        xi_nodes,
        eta1_nodes,
        eta2_nodes,
        values: flat,
        digamma,
        q,
    })
}

/// Sample the FFT table at a continuous frequency u (cubic Catmull-Rom,
/// periodic wrap; the table holds T(u_k) for u_k = k du).
fn sample_fft(t: &[Complex64], u: f64, du: f64) -> Complex64 {
    let n = t.len() as isize;
    let pos = u / du;
    let i0 = pos.floor() as isize;
    let frac = pos - i0 as f64;
    let wrap = |i: isize| -> usize { (((i % n) + n) % n) as usize };
    let pm1 = t[wrap(i0 - 1)];
    let p0 = t[wrap(i0)];
    let p1 = t[wrap(i0 + 1)];
    let p2 = t[wrap(i0 + 2)];
    let c0 = p0;
    let c1 = 0.5 * (p1 - pm1);
    let c2 = pm1 - 2.5 * p0 + 2.0 * p1 - 0.5 * p2;
    let c3 = 0.5 * (p2 - pm1) + 1.5 * (p0 - p1);
    c0 + frac * (c1 + frac * (c2 + frac * c3))
}

/// Scaled complementary error function e^{z^2} erfc(z) for z >= 0.
pub fn erfcx(z: f64) -> f64 {
    if z < 4.0 {
        (z * z).exp() * statrs::function::erf::erfc(z)
    } else {
        // Laplace continued fraction, evaluated backward; good to ~1e-14
        // for z >= 4.
        let mut cf = 0.0;
        for k in (1..=40).rev() {
            cf = (0.5 * k as f64) / (z + cf);
        }
        1.0 / ((z + cf) * std::f64::consts::PI.sqrt())
    }
}

/// The closed convolution form of the boundary symbol for the Gaussian
/// alpha-matched cutoff:
///
/// `sigma(xi, eta) = <xi>^{-1} phi(eta/<xi>)`, `<xi> = sqrt(xi^2 + F^2)`,
/// `phi(v) = int |v - zeta|^{-1} exp(-F Q^{-1}(zeta,zeta)/2) d zeta`,
///
/// evaluated by polar quadrature around the singular point with the radial
/// integral in closed form (erfcx). The overall positive constant is not
/// pinned; comparisons normalize at the origin.
pub fn boundary_symbol_analytic(digamma: f64, q: Sym2, xi: f64, eta: [f64; 2]) -> Result<f64> {
    if digamma <= 0.0 {
        return Err(GeorayError::Validation("digamma must be > 0".into()));
    }
    let q_inv = q.inverse();
    let jap = (xi * xi + digamma * digamma).sqrt();
    let v = [eta[0] / jap, eta[1] / jap];
    let n_phi = 128;
    let mut acc = 0.0;
    for i in 0..n_phi {
        let phi = std::f64::consts::TAU * i as f64 / n_phi as f64;
        let theta = [phi.cos(), phi.sin()];
        // exponent along the ray: -(a rho^2 + 2 b rho + c) with
        // a = (F/2) Q^{-1}(theta,theta), b = (F/2) Q^{-1}(v,theta),
        // c = (F/2) Q^{-1}(v,v).
        let a = 0.5 * digamma * q_inv.quad(theta);
        let qv_cross = q_inv.mul_vec(v);
        let b = 0.5 * digamma * (qv_cross[0] * theta[0] + qv_cross[1] * theta[1]);
        let c = 0.5 * digamma * q_inv.quad(v);
        let z = b / a.sqrt();
        let val = if z >= 0.0 {
            (-c).exp() * erfcx(z)
        } else {
            (z * z - c).exp() * statrs::function::erf::erfc(z)
        };
        acc += val * 0.5 * std::f64::consts::PI.sqrt() / a.sqrt();
    }
    acc *= std::f64::consts::TAU / n_phi as f64;
    Ok(acc / jap)
}

/// Report of the ellipticity lower-bound scan.
#[derive(Debug, Clone)]
pub struct EllipticityReport {
    /// min |sigma| <(xi, eta)> over the grid.
    pub c_min: f64,
    pub argmin: (f64, f64, f64),
    /// 1e-8 of the symbol peak (the numerical noise reference).
    pub noise_floor: f64,
    pub peak: f64,
    pub ok: bool,
}

/// Scan `|sigma(xi,eta)| <(xi,eta)>` for its minimum; elliptic configs keep
/// it far above the noise floor.
pub fn ellipticity_scan(sg: &SymbolGrid) -> EllipticityReport {
    let mut c_min = f64::INFINITY;
    let mut argmin = (0.0, 0.0, 0.0);
    let mut peak = 0.0_f64;
    for (i, &xi) in sg.xi_nodes.iter().enumerate() {
        for (j, &e1) in sg.eta1_nodes.iter().enumerate() {
            for (k, &e2) in sg.eta2_nodes.iter().enumerate() {
                let v = sg.value(i, j, k).norm();
                peak = peak.max(v);
                let jap = (sg.digamma * sg.digamma + xi * xi + e1 * e1 + e2 * e2).sqrt();
                let c = v * jap;
                if c < c_min {
                    c_min = c;
                    argmin = (xi, e1, e2);
                }
            }
        }
    }
    let noise_floor = 1e-8 * peak;
    EllipticityReport {
        c_min,
        argmin,
        noise_floor,
        peak,
        ok: c_min > noise_floor,
    }
}

/// Scaled modified Bessel function e^{-w} I_0(w), used by the isotropic
/// closed-form cross-check.
pub fn i0_scaled(w: f64) -> f64 {
    if w < 15.0 {
        let mut term = 1.0;
        let mut acc = 1.0;
        let q = 0.25 * w * w;
        for k in 1..60 {
            term *= q / ((k * k) as f64);
            acc += term;
            if term < 1e-17 * acc {
                break;
            }
        }
        acc * (-w).exp()
    } else {
        let i = 1.0 / (8.0 * w);
        (1.0 + i * (1.0 + i * (4.5 + i * 37.5))) / (std::f64::consts::TAU * w).sqrt()
    }
}
