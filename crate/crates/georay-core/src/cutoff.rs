//! The Gaussian-type averaging cutoff `chi`.
//!
//! `chi(s) = exp(-s^2 / (2 nu))` times a quintic taper to compact support
//! in `|s| <= s_max`. In alpha-matched mode the variance is tied to the
//! exponential weight by `nu(y, omega) = alpha(0, y, omega) / F`, the choice
//! that makes the boundary symbol a positive real Gaussian convolution.

use crate::error::{GeorayError, Result};
use crate::util::smoothstep5;

/// How the Gaussian variance is chosen.
#[derive(Debug, Clone, Copy)]
pub enum NuMode {
    /// Fixed variance (ablation mode, and the flat-level-set case).
    Constant(f64),
    /// `nu = alpha / digamma` pointwise in (y, omega).
    AlphaMatched { digamma: f64 },
}

/// Cutoff parameters. `taper_frac` is the trailing fraction of `[0, s_max]`
/// over which the profile is tapered to zero (default 0.1).
#[derive(Debug, Clone, Copy)]
pub struct CutoffSpec {
    pub mode: NuMode,
    pub s_max: f64,
    pub taper_frac: f64,
}

impl CutoffSpec {
    pub fn constant(nu: f64, s_max: f64) -> Self {
        CutoffSpec {
            mode: NuMode::Constant(nu),
            s_max,
            taper_frac: 0.1,
        }
    }

    pub fn alpha_matched(digamma: f64, s_max: f64) -> Self {
        CutoffSpec {
            mode: NuMode::AlphaMatched { digamma },
            s_max,
            taper_frac: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s_max < 0.0 {
            return Err(GeorayError::Validation("s_max must be >= 0".into()));
        }
        if !(0.0..0.9).contains(&self.taper_frac) {
            return Err(GeorayError::Validation(
                "taper_frac must lie in [0, 0.9)".into(),
            ));
        }
        match self.mode {
            NuMode::Constant(nu) => {
                if nu <= 0.0 {
                    return Err(GeorayError::Validation("nu must be > 0".into()));
                }
            }
            NuMode::AlphaMatched { digamma } => {
                if digamma <= 0.0 {
                    return Err(GeorayError::Validation(
                        "alpha-matched cutoff needs digamma > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Variance at a point, given the turning-rate value `alpha` there.
    pub fn nu(&self, alpha: f64) -> f64 {
        match self.mode {
            NuMode::Constant(nu) => nu,
            NuMode::AlphaMatched { digamma } => alpha / digamma,
        }
    }
}

/// Evaluate the cutoff at argument `s` with local turning rate `alpha`
/// (only consulted in alpha-matched mode). Values lie in [0, 1], equal 1 at
/// s = 0 and vanish identically for |s| >= s_max.
pub fn chi_eval(cs: &CutoffSpec, s: f64, alpha: f64) -> f64 {
    let a = s.abs();
    if a >= cs.s_max {
        return 0.0;
    }
    let nu = cs.nu(alpha);
    if nu <= 0.0 {
        return 0.0;
    }
    let gauss = (-0.5 * s * s / nu).exp();
    let taper_start = (1.0 - cs.taper_frac) * cs.s_max;
    if a <= taper_start {
        gauss
    } else {
        gauss * (1.0 - smoothstep5((a - taper_start) / (cs.s_max - taper_start)))
    }
}
