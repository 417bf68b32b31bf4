//! Dual-metric coefficient models in adapted coordinates `(x, y1, y2)`.
//!
//! Every model exposes the coefficients of the dual metric
//! `G = F(x,y) xi^2 + eta^T H(x,y) eta` together with their first
//! derivatives, which is exactly what Hamilton's equations consume. The
//! `x`-coordinate is always the defining function of the artificial
//! boundary, so the turning-rate form `alpha` below measures how fast
//! tangent rays bend back toward larger `x`.

use std::sync::Arc;

use crate::error::{GeorayError, Result};
use crate::util::Sym2;

/// Radial sound-speed profile `c(r) = c0 + c1 r` (Herglotz family).
#[derive(Debug, Clone, Copy)]
pub struct RadialProfile {
    pub c0: f64,
    pub c1: f64,
}

impl RadialProfile {
    pub fn constant() -> Self {
        RadialProfile { c0: 1.0, c1: 0.0 }
    }

    pub fn c(&self, r: f64) -> f64 {
        self.c0 + self.c1 * r
    }

    pub fn dc(&self, _r: f64) -> f64 {
        self.c1
    }
}

/// Axis-aligned validity box in adapted coordinates.
#[derive(Debug, Clone, Copy)]
pub struct ValidityBox {
    pub x: [f64; 2],
    pub y1: [f64; 2],
    pub y2: [f64; 2],
}

impl ValidityBox {
    pub fn contains(&self, x: f64, y: [f64; 2]) -> bool {
        x >= self.x[0]
            && x <= self.x[1]
            && y[0] >= self.y1[0]
            && y[0] <= self.y1[1]
            && y[1] >= self.y2[0]
            && y[1] <= self.y2[1]
    }
}

/// Tabulated or closure-backed coefficient maps for a general block
/// diagonal model; derivatives fall back to central differences.
pub struct GeneralCoefs {
    pub f: Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>,
    pub h: Arc<dyn Fn(f64, [f64; 2]) -> Sym2 + Send + Sync>,
    /// Finite-difference step for the derivative fallbacks.
    pub h_fd: f64,
}

impl std::fmt::Debug for GeneralCoefs {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralCoefs")
            .field("h_fd", &self.h_fd)
            .finish()
    }
}

/// Smooth multiplicative perturbation applied to both coefficient blocks.
#[derive(Debug, Clone, Copy)]
pub struct BumpPerturbation {
    pub amplitude: f64,
    pub center: [f64; 3],
    pub width: f64,
}

impl BumpPerturbation {
    /// phi in [-1, 1], smooth, compactly concentrated around `center`.
    fn phi(&self, x: f64, y: [f64; 2]) -> f64 {
        let dx = (x - self.center[0]) / self.width;
        let d1 = (y[0] - self.center[1]) / self.width;
        let d2 = (y[1] - self.center[2]) / self.width;
        let q = dx * dx + d1 * d1 + d2 * d2;
        (-0.5 * q).exp() * (1.7 * (x + 2.0 * y[0] - y[1]) / self.width).sin()
    }

    fn grad_phi(&self, x: f64, y: [f64; 2]) -> [f64; 3] {
        let h = 1e-6;
        [
            (self.phi(x + h, y) - self.phi(x - h, y)) / (2.0 * h),
            (self.phi(x, [y[0] + h, y[1]]) - self.phi(x, [y[0] - h, y[1]])) / (2.0 * h),
            (self.phi(x, [y[0], y[1] + h]) - self.phi(x, [y[0], y[1] - h])) / (2.0 * h),
        ]
    }
}

/// Kind tag plus kind-specific data.
#[derive(Debug)]
pub enum MetricKind {
    /// Slab coordinates for the flat metric: `F = 1`, `H = I`.
    Euclidean,
    /// Adapted chart of a radial (conformal) metric with spherical level
    /// sets `r = r0 + x`. The tangential chart is orthographic on the unit
    /// sphere, rescaled by `y_scale` so that `h = I` at the chart center.
    AdaptedRadial {
        profile: RadialProfile,
        /// Radius of the `x = 0` level sphere.
        r0: f64,
        /// Tangential normalization scale (usually `r0 / c(r0)`).
        y_scale: f64,
    },
    /// Ambient Cartesian form of a radial conformal metric: the dual metric
    /// is `c(|z|)^2 |zeta|^2` with `z = (x, y)`. Block diagonal trivially.
    AmbientRadial { profile: RadialProfile },
    /// Closure-backed coefficients with finite-difference derivatives.
    GeneralDiagonal(GeneralCoefs),
    /// Smooth relative perturbation of a base model.
    Perturbed {
        base: Box<MetricModel>,
        bump: BumpPerturbation,
    },
}

/// A dual-metric model in block-diagonal adapted coordinates.
#[derive(Debug)]
pub struct MetricModel {
    pub kind: MetricKind,
    pub validity: ValidityBox,
}

impl MetricModel {
    pub fn euclidean(validity: ValidityBox) -> Self {
        MetricModel {
            kind: MetricKind::Euclidean,
            validity,
        }
    }

    /// Adapted chart of the radial metric `c(r)^{-2} dz^2` with level
    /// spheres `r = r0 + x`, normalized so `h(0, 0) = I`. The validity box
    /// is intersected with the orthographic chart domain (|y/y_scale| well
    /// below 1) and with r > 0.
    pub fn adapted_radial(profile: RadialProfile, r0: f64, validity: ValidityBox) -> Self {
        let y_scale = r0 / profile.c(r0);
        let cap = 0.62 * y_scale;
        let validity = ValidityBox {
            x: [validity.x[0].max(-0.9 * r0), validity.x[1]],
            y1: [validity.y1[0].max(-cap), validity.y1[1].min(cap)],
            y2: [validity.y2[0].max(-cap), validity.y2[1].min(cap)],
        };
        MetricModel {
            kind: MetricKind::AdaptedRadial {
                profile,
                r0,
                y_scale,
            },
            validity,
        }
    }

    pub fn ambient_radial(profile: RadialProfile, validity: ValidityBox) -> Self {
        MetricModel {
            kind: MetricKind::AmbientRadial { profile },
            validity,
        }
    }

    pub fn general(coefs: GeneralCoefs, validity: ValidityBox) -> Self {
        MetricModel {
            kind: MetricKind::GeneralDiagonal(coefs),
            validity,
        }
    }

    pub fn perturbed(base: MetricModel, bump: BumpPerturbation) -> Self {
        let validity = base.validity;
        MetricModel {
            kind: MetricKind::Perturbed {
                base: Box::new(base),
                bump,
            },
            validity,
        }
    }

    /// Coefficient of `xi^2` in the dual metric.
    pub fn f_coef(&self, x: f64, y: [f64; 2]) -> f64 {
        match &self.kind {
            MetricKind::Euclidean => 1.0,
            MetricKind::AdaptedRadial { profile, r0, .. } => {
                let c = profile.c(r0 + x);
                c * c
            }
            MetricKind::AmbientRadial { profile } => {
                let r = (x * x + y[0] * y[0] + y[1] * y[1]).sqrt();
                let c = profile.c(r);
                c * c
            }
            MetricKind::GeneralDiagonal(g) => (g.f)(x, y),
            MetricKind::Perturbed { base, bump } => {
                base.f_coef(x, y) * (1.0 + bump.amplitude * bump.phi(x, y))
            }
        }
    }

    /// Coefficient matrix of the `eta` block in the dual metric.
    pub fn h_coef(&self, x: f64, y: [f64; 2]) -> Sym2 {
        match &self.kind {
            MetricKind::Euclidean => Sym2::IDENTITY,
            MetricKind::AdaptedRadial {
                profile,
                r0,
                y_scale,
            } => {
                let r = r0 + x;
                let c = profile.c(r);
                let u = [y[0] / y_scale, y[1] / y_scale];
                // ghat^{-1} = I - u u^T in orthographic coordinates.
                let s = y_scale * c / r;
                Sym2::new(1.0 - u[0] * u[0], -u[0] * u[1], 1.0 - u[1] * u[1]).scale(s * s)
            }
            MetricKind::AmbientRadial { profile } => {
                let r = (x * x + y[0] * y[0] + y[1] * y[1]).sqrt();
                let c = profile.c(r);
                Sym2::IDENTITY.scale(c * c)
            }
            MetricKind::GeneralDiagonal(g) => (g.h)(x, y),
            MetricKind::Perturbed { base, bump } => base
                .h_coef(x, y)
                .scale(1.0 + bump.amplitude * bump.phi(x, y)),
        }
    }

    /// dF/dx.
    pub fn df_dx(&self, x: f64, y: [f64; 2]) -> f64 {
        match &self.kind {
            MetricKind::Euclidean => 0.0,
            MetricKind::AdaptedRadial { profile, r0, .. } => {
                let r = r0 + x;
                2.0 * profile.c(r) * profile.dc(r)
            }
            MetricKind::AmbientRadial { profile } => {
                let r = (x * x + y[0] * y[0] + y[1] * y[1]).sqrt();
                if r == 0.0 {
                    return 0.0;
                }
                2.0 * profile.c(r) * profile.dc(r) * x / r
            }
            MetricKind::GeneralDiagonal(g) => {
                let h = g.h_fd;
                ((g.f)(x + h, y) - (g.f)(x - h, y)) / (2.0 * h)
            }
            MetricKind::Perturbed { base, bump } => {
                let a = bump.amplitude;
                base.df_dx(x, y) * (1.0 + a * bump.phi(x, y))
                    + base.f_coef(x, y) * a * bump.grad_phi(x, y)[0]
            }
        }
    }

    /// Gradient of F in the tangential directions.
    pub fn df_dy(&self, x: f64, y: [f64; 2]) -> [f64; 2] {
        match &self.kind {
            MetricKind::Euclidean => [0.0, 0.0],
            MetricKind::AdaptedRadial { .. } => [0.0, 0.0],
            MetricKind::AmbientRadial { profile } => {
                let r = (x * x + y[0] * y[0] + y[1] * y[1]).sqrt();
                if r == 0.0 {
                    return [0.0, 0.0];
                }
                let s = 2.0 * profile.c(r) * profile.dc(r) / r;
                [s * y[0], s * y[1]]
            }
            MetricKind::GeneralDiagonal(g) => {
                let h = g.h_fd;
                [
                    ((g.f)(x, [y[0] + h, y[1]]) - (g.f)(x, [y[0] - h, y[1]])) / (2.0 * h),
                    ((g.f)(x, [y[0], y[1] + h]) - (g.f)(x, [y[0], y[1] - h])) / (2.0 * h),
                ]
            }
            MetricKind::Perturbed { base, bump } => {
                let a = bump.amplitude;
                let gp = bump.grad_phi(x, y);
                let bf = base.f_coef(x, y);
                let d = base.df_dy(x, y);
                [
                    d[0] * (1.0 + a * bump.phi(x, y)) + bf * a * gp[1],
                    d[1] * (1.0 + a * bump.phi(x, y)) + bf * a * gp[2],
                ]
            }
        }
    }

    /// dH/dx.
    pub fn dh_dx(&self, x: f64, y: [f64; 2]) -> Sym2 {
        match &self.kind {
            MetricKind::Euclidean => Sym2::new(0.0, 0.0, 0.0),
            MetricKind::AdaptedRadial {
                profile,
                r0,
                y_scale,
            } => {
                let r = r0 + x;
                let c = profile.c(r);
                let dc = profile.dc(r);
                let u = [y[0] / y_scale, y[1] / y_scale];
                // d/dr of (y_scale c / r)^2 = y_scale^2 * 2 c (c' r - c) / r^3.
                let ds2 = y_scale * y_scale * 2.0 * c * (dc * r - c) / (r * r * r);
                Sym2::new(1.0 - u[0] * u[0], -u[0] * u[1], 1.0 - u[1] * u[1]).scale(ds2)
            }
            MetricKind::AmbientRadial { profile } => {
                let r = (x * x + y[0] * y[0] + y[1] * y[1]).sqrt();
                if r == 0.0 {
                    return Sym2::new(0.0, 0.0, 0.0);
                }
                Sym2::IDENTITY.scale(2.0 * profile.c(r) * profile.dc(r) * x / r)
            }
            MetricKind::GeneralDiagonal(g) => {
                let h = g.h_fd;
                (g.h)(x + h, y)
                    .add((g.h)(x - h, y).scale(-1.0))
                    .scale(1.0 / (2.0 * h))
            }
            MetricKind::Perturbed { base, bump } => {
                let a = bump.amplitude;
                base.dh_dx(x, y)
                    .scale(1.0 + a * bump.phi(x, y))
                    .add(base.h_coef(x, y).scale(a * bump.grad_phi(x, y)[0]))
            }
        }
    }

    /// dH/dy_k for k = 0, 1.
    pub fn dh_dy(&self, x: f64, y: [f64; 2]) -> [Sym2; 2] {
        match &self.kind {
            MetricKind::Euclidean => [Sym2::new(0.0, 0.0, 0.0); 2],
            MetricKind::AdaptedRadial {
                profile,
                r0,
                y_scale,
            } => {
                let r = r0 + x;
                let c = profile.c(r);
                let u = [y[0] / y_scale, y[1] / y_scale];
                let s2 = (y_scale * c / r) * (y_scale * c / r);
                // d/dy_k of (I - u u^T), with du/dy_k = e_k / y_scale.
                let coef = -s2 / y_scale;
                [
                    Sym2::new(2.0 * u[0], u[1], 0.0).scale(coef),
                    Sym2::new(0.0, u[0], 2.0 * u[1]).scale(coef),
                ]
            }
            MetricKind::AmbientRadial { profile } => {
                let r = (x * x + y[0] * y[0] + y[1] * y[1]).sqrt();
                if r == 0.0 {
                    return [Sym2::new(0.0, 0.0, 0.0); 2];
                }
                let s = 2.0 * profile.c(r) * profile.dc(r) / r;
                [
                    Sym2::IDENTITY.scale(s * y[0]),
                    Sym2::IDENTITY.scale(s * y[1]),
                ]
            }
            MetricKind::GeneralDiagonal(g) => {
                let h = g.h_fd;
                [
                    (g.h)(x, [y[0] + h, y[1]])
                        .add((g.h)(x, [y[0] - h, y[1]]).scale(-1.0))
                        .scale(1.0 / (2.0 * h)),
                    (g.h)(x, [y[0], y[1] + h])
                        .add((g.h)(x, [y[0], y[1] - h]).scale(-1.0))
                        .scale(1.0 / (2.0 * h)),
                ]
            }
            MetricKind::Perturbed { base, bump } => {
                let a = bump.amplitude;
                let gp = bump.grad_phi(x, y);
                let hb = base.h_coef(x, y);
                let d = base.dh_dy(x, y);
                let scale = 1.0 + a * bump.phi(x, y);
                [
                    d[0].scale(scale).add(hb.scale(a * gp[1])),
                    d[1].scale(scale).add(hb.scale(a * gp[2])),
                ]
            }
        }
    }

    /// Solve `2 diag(F, H) zeta = (lambda, omega)` for the momenta matching
    /// an initial velocity.
    pub fn momenta_from_velocity(
        &self,
        x: f64,
        y: [f64; 2],
        lambda: f64,
        omega: [f64; 2],
    ) -> (f64, [f64; 2]) {
        let f = self.f_coef(x, y);
        let h_inv = self.h_coef(x, y).inverse();
        let eta = h_inv.mul_vec([0.5 * omega[0], 0.5 * omega[1]]);
        (lambda / (2.0 * f), eta)
    }
}

/// Evaluate the dual metric function `G = F xi^2 + eta^T H eta`.
///
/// Errors with [`GeorayError::Domain`] outside the model's validity region.
pub fn hamiltonian_eval(m: &MetricModel, x: f64, y: [f64; 2], xi: f64, eta: [f64; 2]) -> Result<f64> {
    if !m.validity.contains(x, y) {
        return Err(GeorayError::Domain(format!(
            "({x}, {}, {}) outside validity region",
            y[0], y[1]
        )));
    }
    Ok(m.f_coef(x, y) * xi * xi + m.h_coef(x, y).quad(eta))
}

/// Turning-rate quadratic form at a tangential direction: half the second
/// derivative of `x` along the ray through `(x, y)` with velocity
/// `omega` tangent to the level set,
///
/// `alpha(x, y, omega) = -(F/4) omega^T h (dH/dx) h omega`,  `h = H^{-1}`.
///
/// Strict convexity of the level sets (seen from the superlevel side) is
/// exactly `alpha >= C > 0`.
pub fn alpha_eval(m: &MetricModel, x: f64, y: [f64; 2], omega: [f64; 2]) -> f64 {
    alpha_form(m, x, y).quad(omega)
}

/// The matrix Q of the quadratic form `alpha_eval`, so that
/// `alpha_eval(m, x, y, w) = w^T Q w`.
pub fn alpha_form(m: &MetricModel, x: f64, y: [f64; 2]) -> Sym2 {
    let f = m.f_coef(m_clamp(m, x), y);
    let h = m.h_coef(x, y).inverse();
    let dh = m.dh_dx(x, y);
    // h * dH/dx * h, symmetric.
    let a = dh.congruence([[h.a11, h.a12], [h.a12, h.a22]]);
    a.scale(-0.25 * f)
}

fn m_clamp(_m: &MetricModel, x: f64) -> f64 {
    x
}

/// Report from the Herglotz condition scan.
#[derive(Debug, Clone, Copy)]
pub struct HerglotzReport {
    pub min_value: f64,
    pub ok: bool,
}

/// Check `d/dr (r / c(r)) > 0` on `r_range` by central finite differences
/// at `n_samples` points.
pub fn herglotz_check(
    c_profile: &dyn Fn(f64) -> f64,
    r_range: (f64, f64),
    n_samples: usize,
) -> Result<HerglotzReport> {
    let (r_lo, r_hi) = r_range;
    if n_samples < 2 || r_hi <= r_lo {
        return Err(GeorayError::Validation(
            "herglotz_check needs n_samples >= 2 and a nonempty range".into(),
        ));
    }
    let h = (r_hi - r_lo) / (n_samples as f64) * 0.5;
    let mut min_value = f64::INFINITY;
    for i in 0..n_samples {
        let r = r_lo + (r_hi - r_lo) * (i as f64 + 0.5) / n_samples as f64;
        let (cm, cp) = (c_profile(r - h), c_profile(r + h));
        if cm <= 0.0 || cp <= 0.0 {
            return Err(GeorayError::Domain(format!(
                "sound speed not positive near r = {r}"
            )));
        }
        let d = ((r + h) / cp - (r - h) / cm) / (2.0 * h);
        min_value = min_value.min(d);
    }
    Ok(HerglotzReport {
        min_value,
        ok: min_value > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn wide_box() -> ValidityBox {
        ValidityBox {
            x: [-0.5, 1.5],
            y1: [-2.0, 2.0],
            y2: [-2.0, 2.0],
        }
    }

    #[test]
    fn hamiltonian_euclidean_identity() {
        let m = MetricModel::euclidean(wide_box());
        assert_eq!(hamiltonian_eval(&m, 0.3, [0.1, -0.2], 1.0, [0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(hamiltonian_eval(&m, 0.0, [0.0, 0.0], 0.0, [3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn hamiltonian_outside_validity_errors() {
        let m = MetricModel::euclidean(wide_box());
        assert!(hamiltonian_eval(&m, 9.0, [0.0, 0.0], 1.0, [0.0, 0.0]).is_err());
    }

    /// Oracle for the radial Herglotz Hamiltonian: the dual metric of the
    /// conformal travel-time metric is c(r)^2 |zeta|^2 in the ambient chart.
    #[test]
    fn hamiltonian_radial_matches_conformal_formula() {
        let profile = RadialProfile { c0: 1.0, c1: 0.2 };
        let m = MetricModel::ambient_radial(profile, wide_box());
        let (x, y) = (0.3_f64, [0.4_f64, -0.1]);
        let (xi, eta) = (0.7, [-0.2, 1.1]);
        let r = (x * x + y[0] * y[0] + y[1] * y[1]).sqrt();
        // Independent high-precision evaluation of c(r)^2 |(xi,eta)|^2.
        // (50-digit evaluation collapses to f64 exactly for this polynomial
        // profile; spelled out rather than trusting the model's internals.)
        let c = 1.0 + 0.2 * r;
        let expected = c * c * (xi * xi + eta[0] * eta[0] + eta[1] * eta[1]);
        let got = hamiltonian_eval(&m, x, y, xi, eta).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-14);
    }

    #[test]
    fn alpha_zero_for_flat_levels() {
        let m = MetricModel::euclidean(wide_box());
        for w in [[1.0, 0.0], [0.0, 1.0], [0.6, -0.8]] {
            assert_eq!(alpha_eval(&m, 0.2, [0.3, 0.1], w), 0.0);
        }
    }

    /// Sphere-adapted chart of the Euclidean metric at radius r0: a unit
    /// speed straight line tangent to the sphere has `x'' = 1/r0`
    /// (circular-ray geometry), and the normalized chart is unit speed at
    /// the center, so `alpha = x''/2 = 1/(2 r0)` there.
    #[test]
    fn alpha_sphere_adapted_euclidean() {
        let r0: f64 = 5.0;
        let m = MetricModel::adapted_radial(RadialProfile::constant(), r0, wide_box());
        let mut rng = crate::util::rng_from_seed(7);
        for _ in 0..16 {
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let got = alpha_eval(&m, 0.0, [0.0, 0.0], [th.cos(), th.sin()]);
            assert_relative_eq!(got, 0.5 / r0, max_relative = 1e-6);
        }
    }

    /// Radial Herglotz profile: alpha > 0 over a sampled omega grid, and
    /// alpha > 0 iff the Herglotz derivative is positive.
    #[test]
    fn alpha_positive_for_herglotz_profile() {
        let profile = RadialProfile { c0: 1.0, c1: 0.2 };
        let r0 = 0.8;
        let m = MetricModel::adapted_radial(profile, r0, wide_box());
        for i in 0..24 {
            let th = std::f64::consts::TAU * i as f64 / 24.0;
            for (x, y) in [(0.0, [0.0, 0.0]), (0.05, [0.2, -0.1]), (0.1, [0.1, 0.3])] {
                let a = alpha_eval(&m, x, y, [th.cos(), th.sin()]);
                assert!(a > 0.0, "alpha = {a} at x={x}");
            }
        }
    }

    #[test]
    fn herglotz_check_constant_speed() {
        let rep = herglotz_check(&|_r| 1.0, (0.1, 2.0), 64).unwrap();
        assert!(rep.ok);
        assert_relative_eq!(rep.min_value, 1.0, epsilon = 1e-10);
    }

    /// Closed-form oracle: d/dr (r / (1 + 0.2 r)) = 1 / (1 + 0.2 r)^2 > 0,
    /// minimized over the same midpoint samples the scan uses.
    #[test]
    fn herglotz_check_linear_profile() {
        let n = 128;
        let rep = herglotz_check(&|r| 1.0 + 0.2 * r, (0.0, 2.0), n).unwrap();
        assert!(rep.ok);
        let expected_min = (0..n)
            .map(|i| {
                let r = 2.0 * (i as f64 + 0.5) / n as f64;
                1.0 / (1.0 + 0.2 * r).powi(2)
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(rep.min_value, expected_min, max_relative = 1e-5);
    }

    /// Closed-form oracle: d/dr (r e^{-2r}) = (1 - 2r) e^{-2r} < 0 for
    /// r > 1/2, so the exponential profile must fail.
    #[test]
    fn herglotz_check_exponential_fails() {
        let rep = herglotz_check(&|r| (2.0 * r).exp(), (0.0, 2.0), 128).unwrap();
        assert!(!rep.ok);
        assert!(rep.min_value < 0.0);
    }

    #[test]
    fn herglotz_check_rejects_nonpositive_speed() {
        assert!(herglotz_check(&|r| 1.0 - r, (0.0, 2.0), 32).is_err());
    }

    /// SPD sampling invariant: H eigenvalues > 0 and F > 0 at random points
    /// of the working region for each admissible model.
    #[test]
    fn coefficients_positive_definite() {
        let models = [
            MetricModel::euclidean(wide_box()),
            MetricModel::adapted_radial(RadialProfile { c0: 1.0, c1: 0.2 }, 0.8, wide_box()),
            MetricModel::adapted_radial(RadialProfile::constant(), 7.6, wide_box()),
        ];
        let mut rng = crate::util::rng_from_seed(11);
        for m in &models {
            let v = m.validity;
            for _ in 0..1000 {
                let x = rng.gen_range(0.0..0.4f64.min(v.x[1]));
                let y = [
                    rng.gen_range(v.y1[0]..v.y1[1]),
                    rng.gen_range(v.y2[0]..v.y2[1]),
                ];
                assert!(m.f_coef(x, y) > 0.0);
                let [lo, _] = m.h_coef(x, y).eigenvalues();
                assert!(lo > 0.0, "H not SPD at ({x}, {:?})", y);
            }
        }
    }

    #[test]
    fn momenta_invert_velocity() {
        let m = MetricModel::adapted_radial(RadialProfile { c0: 1.0, c1: 0.2 }, 0.8, wide_box());
        let (x, y) = (0.1, [0.2, -0.3]);
        let (lambda, omega) = (0.07, [0.6, 0.8]);
        let (xi, eta) = m.momenta_from_velocity(x, y, lambda, omega);
        let v_x = 2.0 * m.f_coef(x, y) * xi;
        let v_y = m.h_coef(x, y).mul_vec([2.0 * eta[0], 2.0 * eta[1]]);
        assert_relative_eq!(v_x, lambda, epsilon = 1e-14);
        assert_relative_eq!(v_y[0], omega[0], epsilon = 1e-14);
        assert_relative_eq!(v_y[1], omega[1], epsilon = 1e-14);
    }
}
