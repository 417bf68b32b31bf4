//! Hamiltonian ray tracing in adapted coordinates.
//!
//! Bicharacteristics of `G = F xi^2 + eta^T H eta` are integrated with a
//! fixed-step classical Runge-Kutta scheme:
//!
//! ```text
//! dx/dt  =  2 F xi           dxi/dt    = -(dF/dx xi^2 + eta^T dH/dx eta)
//! dy/dt  =  2 H eta          deta_k/dt = -(dF/dy_k xi^2 + eta^T dH/dy_k eta)
//! ```
//!
//! Rays are parameterized by their initial velocity `lambda d_x + omega d_y`
//! with `|omega| = 1`; momenta are recovered by inverting
//! `dz/dt = 2 diag(F, H) zeta`. Rays are not unit-speed normalized.

use crate::error::{GeorayError, Result};
use crate::metric::MetricModel;

/// Launch data for a single ray.
#[derive(Debug, Clone, Copy)]
pub struct RayParams {
    /// Initial value of the boundary defining function.
    pub x: f64,
    /// Initial tangential position.
    pub y: [f64; 2],
    /// Initial dx/dt.
    pub lambda: f64,
    /// Initial dy/dt, unit length.
    pub omega: [f64; 2],
    /// Half-width of the parameter interval.
    pub t_span: f64,
    /// Integration step.
    pub h: f64,
}

impl RayParams {
    /// Check the structural invariants against the configured `delta0`.
    pub fn validate(&self, delta0: f64) -> Result<()> {
        let n = (self.omega[0] * self.omega[0] + self.omega[1] * self.omega[1]).sqrt();
        if (n - 1.0).abs() > 1e-12 {
            return Err(GeorayError::Validation(format!(
                "|omega| = {n} differs from 1 beyond 1e-12"
            )));
        }
        if !(self.t_span > 0.0) || self.t_span > delta0 * (1.0 + 1e-12) {
            return Err(GeorayError::Validation(format!(
                "t_span = {} outside (0, delta0 = {delta0}]",
                self.t_span
            )));
        }
        if !(self.h > 0.0) || self.h > self.t_span / 16.0 {
            return Err(GeorayError::Validation(format!(
                "step h = {} must lie in (0, t_span/16]",
                self.h
            )));
        }
        Ok(())
    }
}

/// A discretized bicharacteristic: times ascending, positions `(x, y)` and
/// momenta `(xi, eta)` at each time, and the conserved initial energy.
#[derive(Debug, Clone)]
pub struct RayPath {
    pub times: Vec<f64>,
    pub positions: Vec<[f64; 3]>,
    pub momenta: Vec<[f64; 3]>,
    pub energy0: f64,
    /// True if either branch left the model validity box early.
    pub truncated: bool,
}

impl RayPath {
    /// Index of t = 0 in the (time ascending) sample arrays.
    pub fn center_index(&self) -> usize {
        self.times
            .iter()
            .position(|&t| t == 0.0)
            .expect("path contains t = 0")
    }

    /// Velocity `dz/dt = 2 (F xi, H eta)` at a stored sample.
    pub fn velocity_at(&self, m: &MetricModel, i: usize) -> [f64; 3] {
        let [x, y1, y2] = self.positions[i];
        let [xi, e1, e2] = self.momenta[i];
        let f = m.f_coef(x, [y1, y2]);
        let hv = m.h_coef(x, [y1, y2]).mul_vec([2.0 * e1, 2.0 * e2]);
        [2.0 * f * xi, hv[0], hv[1]]
    }

    /// Minimum of the boundary defining function along the path.
    pub fn min_x(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest |t| beyond which the path stays in `x >= x0` on both sides;
    /// `None` if either side never escapes within the window.
    pub fn escape_time(&self, x0: f64) -> Option<f64> {
        let c = self.center_index();
        let n = self.times.len();
        // Latest start of a contiguous x >= x0 run reaching the last sample.
        let mut t_pos = None;
        for i in (c..n).rev() {
            if self.positions[i][0] < x0 {
                break;
            }
            t_pos = Some(self.times[i]);
        }
        // Latest end of a contiguous x >= x0 run starting at the first sample.
        let mut t_neg = None;
        for i in 0..=c {
            if self.positions[i][0] < x0 {
                break;
            }
            t_neg = Some(self.times[i]);
        }
        match (t_pos, t_neg) {
            (Some(tp), Some(tn)) if tp > 0.0 && tn < 0.0 => Some(tp.max(-tn)),
            _ => None,
        }
    }

    /// Dump t, x, y1, y2, xi, eta1, eta2 as CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,x,y1,y2,xi,eta1,eta2\n");
        for i in 0..self.times.len() {
            let p = self.positions[i];
            let q = self.momenta[i];
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.times[i], p[0], p[1], p[2], q[0], q[1], q[2]
            ));
        }
        s
    }
}

type State = [f64; 6];

#[inline]
fn rhs(m: &MetricModel, s: &State) -> State {
    let (x, y) = (s[0], [s[1], s[2]]);
    let (xi, eta) = (s[3], [s[4], s[5]]);
    let f = m.f_coef(x, y);
    let h = m.h_coef(x, y);
    let df_dx = m.df_dx(x, y);
    let df_dy = m.df_dy(x, y);
    let dh_dx = m.dh_dx(x, y);
    let dh_dy = m.dh_dy(x, y);
    let v_y = h.mul_vec([2.0 * eta[0], 2.0 * eta[1]]);
    [
        2.0 * f * xi,
        v_y[0],
        v_y[1],
        -(df_dx * xi * xi + dh_dx.quad(eta)),
        -(df_dy[0] * xi * xi + dh_dy[0].quad(eta)),
        -(df_dy[1] * xi * xi + dh_dy[1].quad(eta)),
    ]
}

#[inline]
fn rk4_step(m: &MetricModel, s: &State, h: f64) -> State {
    let k1 = rhs(m, s);
    let mut s2 = *s;
    for i in 0..6 {
        s2[i] = s[i] + 0.5 * h * k1[i];
    }
    let k2 = rhs(m, &s2);
    for i in 0..6 {
        s2[i] = s[i] + 0.5 * h * k2[i];
    }
    let k3 = rhs(m, &s2);
    for i in 0..6 {
        s2[i] = s[i] + h * k3[i];
    }
    let k4 = rhs(m, &s2);
    let mut out = *s;
    for i in 0..6 {
        out[i] = s[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[inline]
fn energy(m: &MetricModel, s: &State) -> f64 {
    m.f_coef(s[0], [s[1], s[2]]) * s[3] * s[3] + m.h_coef(s[0], [s[1], s[2]]).quad([s[4], s[5]])
}

/// Integrate the bicharacteristic through `(p.x, p.y)` with initial
/// velocity `(p.lambda, p.omega)` over `[-t_span, t_span]`.
///
/// The returned path conserves the Hamiltonian up to 1e-6 relative (an
/// integration error is raised beyond that); branches that leave the
/// validity box are truncated and flagged.
pub fn trace(m: &MetricModel, p: &RayParams) -> Result<RayPath> {
    let (xi, eta) = m.momenta_from_velocity(p.x, p.y, p.lambda, p.omega);
    let s0: State = [p.x, p.y[0], p.y[1], xi, eta[0], eta[1]];
    let e0 = energy(m, &s0);
    if !(e0 > 0.0) {
        return Err(GeorayError::Integration(
            "nonpositive initial energy".into(),
        ));
    }
    let n_steps = (p.t_span / p.h).round() as usize;

    let integrate = |dir: f64| -> Result<(Vec<(f64, State)>, bool)> {
        let mut out = Vec::with_capacity(n_steps);
        let mut s = s0;
        let mut truncated = false;
        for k in 1..=n_steps {
            s = rk4_step(m, &s, dir * p.h);
            let t = dir * p.h * k as f64;
            if !m.validity.contains(s[0], [s[1], s[2]]) {
                truncated = true;
                break;
            }
            let e = energy(m, &s);
            if ((e - e0) / e0).abs() > 1e-6 {
                return Err(GeorayError::Integration(format!(
                    "energy drift {:.3e} at t = {t}; reduce step h",
                    ((e - e0) / e0).abs()
                )));
            }
            out.push((t, s));
        }
        Ok((out, truncated))
    };

    let (fwd, trunc_f) = integrate(1.0)?;
    let (bwd, trunc_b) = integrate(-1.0)?;

    let total = fwd.len() + bwd.len() + 1;
    let mut times = Vec::with_capacity(total);
    let mut positions = Vec::with_capacity(total);
    let mut momenta = Vec::with_capacity(total);
    for (t, s) in bwd.iter().rev() {
        times.push(*t);
        positions.push([s[0], s[1], s[2]]);
        momenta.push([s[3], s[4], s[5]]);
    }
    times.push(0.0);
    positions.push([s0[0], s0[1], s0[2]]);
    momenta.push([s0[3], s0[4], s0[5]]);
    for (t, s) in &fwd {
        times.push(*t);
        positions.push([s[0], s[1], s[2]]);
        momenta.push([s[3], s[4], s[5]]);
    }
    Ok(RayPath {
        times,
        positions,
        momenta,
        energy0: e0,
        truncated: trunc_f || trunc_b,
    })
}

/// Report from [`verify_convexity_bound`].
#[derive(Debug, Clone, Copy)]
pub struct ConvexityReport {
    pub min_x: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Trace the ray and compare the minimum of `x` along it against the
/// quadratic bound `x(t) >= (C/2)(t + lambda/C)^2 + (x - lambda^2/(2C))`
/// minimized over the traced interval, where `C = alpha_lower` is a
/// certified lower bound for the turning-rate form on the region.
pub fn verify_convexity_bound(
    m: &MetricModel,
    p: &RayParams,
    alpha_lower: f64,
) -> Result<ConvexityReport> {
    let c = alpha_lower;
    if !(c > 0.0) {
        return Err(GeorayError::Validation(
            "alpha lower bound must be positive".into(),
        ));
    }
    let path = trace(m, p)?;
    let min_x = path.min_x();
    let rhs_at =
        |t: f64| 0.5 * c * (t + p.lambda / c).powi(2) + (p.x - p.lambda * p.lambda / (2.0 * c));
    let t_star = (-p.lambda / c).clamp(-p.t_span, p.t_span);
    let bound = rhs_at(t_star);
    Ok(ConvexityReport {
        min_x,
        bound,
        ok: min_x >= bound - 1e-6,
    })
}

/// Scattering blow-up coordinates of a point pair in adapted coordinates:
/// `X = (x - x') / x^2`, `Y = (y - y') / x`, with `x = x(z) > 0`.
pub fn scattering_coords(z: [f64; 3], z_prime: [f64; 3]) -> Result<(f64, [f64; 2])> {
    let x = z[0];
    if x <= 0.0 {
        return Err(GeorayError::Domain(format!("x = {x} <= 0")));
    }
    Ok((
        (z[0] - z_prime[0]) / (x * x),
        [(z[1] - z_prime[1]) / x, (z[2] - z_prime[2]) / x],
    ))
}

/// Centered second difference of `x` along the ray at `t = 0`, used to tie
/// the traced dynamics to `alpha_eval` (`x'' = 2 alpha` at tangency).
pub fn second_difference_x(m: &MetricModel, p: &RayParams, h_fd: f64) -> Result<f64> {
    let mut pp = *p;
    pp.t_span = h_fd;
    pp.h = h_fd / 32.0;
    let path = trace(m, &pp)?;
    let c = path.center_index();
    let n = path.times.len();
    if c == 0 || c + 1 >= n || (path.times[n - 1] - h_fd).abs() > 1e-12 || path.times[0] + h_fd > 1e-12 {
        return Err(GeorayError::Integration(
            "ray truncated before the second-difference stencil".into(),
        ));
    }
    let x_p = path.positions[n - 1][0];
    let x_m = path.positions[0][0];
    Ok((x_p - 2.0 * p.x + x_m) / (h_fd * h_fd))
}
