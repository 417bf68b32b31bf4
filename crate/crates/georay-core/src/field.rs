//! Scalar fields on a uniform box grid in adapted coordinates, smooth
//! phantoms, and the binary field file format.
//!
//! Fields are sampled at grid nodes (x-major, then y1, then y2) and
//! extended by zero outside the box, matching the compact-support
//! conventions of the transform theory.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{GeorayError, Result};

/// Anything that can be evaluated at a point of the adapted chart.
pub trait Field: Sync {
    fn eval(&self, z: [f64; 3]) -> f64;
}

/// Uniform node grid: origin, spacing and node counts per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3]) -> Self {
        GridSpec {
            origin,
            spacing,
            dims,
        }
    }

    /// Grid covering `[x_range] x [y1_range] x [y2_range]` with `dims` nodes.
    pub fn from_ranges(x: [f64; 2], y1: [f64; 2], y2: [f64; 2], dims: [usize; 3]) -> Self {
        let spacing = [
            (x[1] - x[0]) / (dims[0] - 1) as f64,
            (y1[1] - y1[0]) / (dims[1] - 1) as f64,
            (y2[1] - y2[0]) / (dims[2] - 1) as f64,
        ];
        GridSpec {
            origin: [x[0], y1[0], y2[0]],
            spacing,
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    /// Inverse of `index`.
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        (i, j, k)
    }

    pub fn x_max(&self) -> f64 {
        self.origin[0] + (self.dims[0] - 1) as f64 * self.spacing[0]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }
}

/// Scalar field sampled on a [`GridSpec`], zero outside the box.
#[derive(Debug, Clone)]
pub struct GridField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn zeros(spec: GridSpec) -> Self {
        GridField {
            values: vec![0.0; spec.len()],
            spec,
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(GeorayError::Validation(format!(
                "value count {} != grid size {}",
                values.len(),
                spec.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeorayError::Validation(
                "field contains non-finite values".into(),
            ));
        }
        Ok(GridField { spec, values })
    }

    /// Sample an arbitrary field at the grid nodes.
    pub fn sample(spec: GridSpec, f: &dyn Field) -> Self {
        let mut values = vec![0.0; spec.len()];
        for i in 0..spec.dims[0] {
            for j in 0..spec.dims[1] {
                for k in 0..spec.dims[2] {
                    values[spec.index(i, j, k)] = f.eval(spec.node(i, j, k));
                }
            }
        }
        GridField { spec, values }
    }

    /// Trilinear interpolation with zero extension outside the node hull.
    pub fn interp(&self, z: [f64; 3]) -> f64 {
        let s = &self.spec;
        let mut t = [0.0_f64; 3];
        let mut i0 = [0_usize; 3];
        for a in 0..3 {
            let u = (z[a] - s.origin[a]) / s.spacing[a];
            if u < 0.0 || u > (s.dims[a] - 1) as f64 {
                return 0.0;
            }
            let fl = u.floor().min((s.dims[a] - 2) as f64).max(0.0);
            i0[a] = fl as usize;
            t[a] = u - fl;
        }
        let mut acc = 0.0;
        for (di, wi) in [(0, 1.0 - t[0]), (1, t[0])] {
            for (dj, wj) in [(0, 1.0 - t[1]), (1, t[1])] {
                for (dk, wk) in [(0, 1.0 - t[2]), (1, t[2])] {
                    let w = wi * wj * wk;
                    if w != 0.0 {
                        acc += w * self.values[s.index(i0[0] + di, i0[1] + dj, i0[2] + dk)];
                    }
                }
            }
        }
        acc
    }

    /// Plain discrete L2 norm with the uniform cell measure.
    pub fn l2_norm(&self) -> f64 {
        let vol = self.spec.cell_volume();
        (self.values.iter().map(|v| v * v).sum::<f64>() * vol).sqrt()
    }

    /// Write the `georay-field v1` format: one ASCII header line, then raw
    /// little-endian f64 values in x-major layout.
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * self.values.len());
        let s = &self.spec;
        buf.extend_from_slice(
            format!(
                "georay-field v1 {} {} {} {:e} {:e} {:e} {:e} {:e} {:e}\n",
                s.dims[0],
                s.dims[1],
                s.dims[2],
                s.origin[0],
                s.origin[1],
                s.origin[2],
                s.spacing[0],
                s.spacing[1],
                s.spacing[2]
            )
            .as_bytes(),
        );
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path)
            .map_err(|e| GeorayError::Io(format!("{}: {e}", path.display())))?;
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            file.read_exact(&mut byte)
                .map_err(|_| GeorayError::Io("truncated field header".into()))?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
            if header.len() > 512 {
                return Err(GeorayError::Io("field header too long".into()));
            }
        }
        let header = String::from_utf8(header)
            .map_err(|_| GeorayError::Io("field header not UTF-8".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 11 || parts[0] != "georay-field" || parts[1] != "v1" {
            return Err(GeorayError::Io(format!("bad field header: {header}")));
        }
        let mut dims = [0usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            *d = parts[2 + i]
                .parse::<usize>()
                .map_err(|e| GeorayError::Io(e.to_string()))?;
        }
        let mut nums = [0.0_f64; 6];
        for (i, n) in nums.iter_mut().enumerate() {
            *n = parts[5 + i]
                .parse::<f64>()
                .map_err(|e| GeorayError::Io(e.to_string()))?;
        }
        let spec = GridSpec::new([nums[0], nums[1], nums[2]], [nums[3], nums[4], nums[5]], dims);
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        if raw.len() != 8 * spec.len() {
            return Err(GeorayError::Io(format!(
                "field payload {} bytes, expected {}",
                raw.len(),
                8 * spec.len()
            )));
        }
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        GridField::from_values(spec, values)
    }
}

impl Field for GridField {
    fn eval(&self, z: [f64; 3]) -> f64 {
        self.interp(z)
    }
}

/// Small helper for CSV and report exports.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Phantoms
// ---------------------------------------------------------------------------

/// Support constraint a phantom must respect: inside the x-slab, inside the
/// y-box, and (through `x_max`) inside the true domain.
#[derive(Debug, Clone, Copy)]
pub struct SupportConstraint {
    pub x_min: f64,
    pub x_max: f64,
    pub y1: [f64; 2],
    pub y2: [f64; 2],
}

impl SupportConstraint {
    fn contains_ball(&self, center: [f64; 3], radius: [f64; 3]) -> bool {
        center[0] - radius[0] >= self.x_min
            && center[0] + radius[0] <= self.x_max
            && center[1] - radius[1] >= self.y1[0]
            && center[1] + radius[1] <= self.y1[1]
            && center[2] - radius[2] >= self.y2[0]
            && center[2] + radius[2] <= self.y2[1]
    }
}

/// Phantom kinds. Shell kinds are radial in the ambient coordinates, which
/// in an adapted radial chart means bumps in `x` times an angular cap.
#[derive(Debug, Clone)]
pub enum Phantom {
    GaussianBump {
        amplitude: f64,
        center: [f64; 3],
        sigma: [f64; 3],
        /// Support cutoff radius in sigma units (taper over the last 15%).
        support_sigmas: f64,
    },
    PolyBump {
        amplitude: f64,
        center: [f64; 3],
        radius: [f64; 3],
    },
    Shell {
        amplitude: f64,
        x_center: f64,
        x_width: f64,
        y_cap: f64,
    },
    TwoShell {
        amplitude: f64,
        x_centers: [f64; 2],
        x_width: f64,
        y_cap: f64,
    },
    /// Oscillatory probe sin(k y1) times a poly bump, for smoothing tests.
    Oscillatory {
        k: f64,
        center: [f64; 3],
        radius: [f64; 3],
    },
}

/// C^2 compactly supported profile (1 - u^2)^3 on |u| < 1.
#[inline]
fn poly_profile(u2: f64) -> f64 {
    if u2 >= 1.0 {
        0.0
    } else {
        let w = 1.0 - u2;
        w * w * w
    }
}

impl Phantom {
    /// Bounding half-widths of the support along each axis.
    pub fn support_radius(&self) -> [f64; 3] {
        match self {
            Phantom::GaussianBump {
                sigma,
                support_sigmas,
                ..
            } => [
                sigma[0] * support_sigmas,
                sigma[1] * support_sigmas,
                sigma[2] * support_sigmas,
            ],
            Phantom::PolyBump { radius, .. } => *radius,
            Phantom::Shell { x_width, y_cap, .. } => [*x_width, *y_cap, *y_cap],
            Phantom::TwoShell {
                x_centers,
                x_width,
                y_cap,
                ..
            } => [
                0.5 * (x_centers[1] - x_centers[0]).abs() + *x_width,
                *y_cap,
                *y_cap,
            ],
            Phantom::Oscillatory { radius, .. } => *radius,
        }
    }

    pub fn support_center(&self) -> [f64; 3] {
        match self {
            Phantom::GaussianBump { center, .. } => *center,
            Phantom::PolyBump { center, .. } => *center,
            Phantom::Shell { x_center, .. } => [*x_center, 0.0, 0.0],
            Phantom::TwoShell { x_centers, .. } => [0.5 * (x_centers[0] + x_centers[1]), 0.0, 0.0],
            Phantom::Oscillatory { center, .. } => *center,
        }
    }

    /// Validate the support constraint and return the phantom unchanged.
    pub fn validated(self, sc: &SupportConstraint) -> Result<Self> {
        let c = self.support_center();
        let r = self.support_radius();
        if !sc.contains_ball(c, r) {
            return Err(GeorayError::Validation(format!(
                "phantom support (center {:?}, radius {:?}) leaks outside the \
                 allowed region [{}, {}] x {:?} x {:?}",
                c, r, sc.x_min, sc.x_max, sc.y1, sc.y2
            )));
        }
        Ok(self)
    }
}

impl Field for Phantom {
    fn eval(&self, z: [f64; 3]) -> f64 {
        match self {
            Phantom::GaussianBump {
                amplitude,
                center,
                sigma,
                support_sigmas,
            } => {
                let mut u2 = 0.0;
                for a in 0..3 {
                    let d = (z[a] - center[a]) / sigma[a];
                    u2 += d * d;
                }
                let u = u2.sqrt();
                if u >= *support_sigmas {
                    return 0.0;
                }
                let taper_start = 0.85 * support_sigmas;
                let taper = if u <= taper_start {
                    1.0
                } else {
                    1.0 - crate::util::smoothstep5((u - taper_start) / (support_sigmas - taper_start))
                };
                amplitude * (-0.5 * u2).exp() * taper
            }
            Phantom::PolyBump {
                amplitude,
                center,
                radius,
            } => {
                let mut u2 = 0.0;
                for a in 0..3 {
                    let d = (z[a] - center[a]) / radius[a];
                    u2 += d * d;
                }
                amplitude * poly_profile(u2)
            }
            Phantom::Shell {
                amplitude,
                x_center,
                x_width,
                y_cap,
            } => {
                let ux = (z[0] - x_center) / x_width;
                let uy2 = (z[1] * z[1] + z[2] * z[2]) / (y_cap * y_cap);
                amplitude * poly_profile(ux * ux) * poly_profile(uy2)
            }
            Phantom::TwoShell {
                amplitude,
                x_centers,
                x_width,
                y_cap,
            } => {
                let uy2 = (z[1] * z[1] + z[2] * z[2]) / (y_cap * y_cap);
                let cap = poly_profile(uy2);
                let u0 = (z[0] - x_centers[0]) / x_width;
                let u1 = (z[0] - x_centers[1]) / x_width;
                amplitude * cap * (poly_profile(u0 * u0) + poly_profile(u1 * u1))
            }
            Phantom::Oscillatory { k, center, radius } => {
                let mut u2 = 0.0;
                for a in 0..3 {
                    let d = (z[a] - center[a]) / radius[a];
                    u2 += d * d;
                }
                (k * z[1]).sin() * poly_profile(u2)
            }
        }
    }
}

/// `a*f + b*g` on a common grid.
pub fn lincomb(a: f64, f: &GridField, b: f64, g: &GridField) -> GridField {
    assert_eq!(f.spec, g.spec);
    let values = f
        .values
        .iter()
        .zip(&g.values)
        .map(|(&x, &y)| a * x + b * y)
        .collect();
    GridField {
        spec: f.spec,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn small_spec() -> GridSpec {
        GridSpec::from_ranges([0.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [9, 9, 9])
    }

    #[test]
    fn interp_constant_and_outside() {
        let spec = small_spec();
        let f = GridField::from_values(spec, vec![3.5; spec.len()]).unwrap();
        assert_relative_eq!(f.interp([0.47, 0.13, -0.22]), 3.5, epsilon = 1e-12);
        assert_eq!(f.interp([1.5, 0.0, 0.0]), 0.0);
        assert_eq!(f.interp([0.5, -1.2, 0.0]), 0.0);
    }

    #[test]
    fn interp_reproduces_affine() {
        let spec = small_spec();
        struct Affine;
        impl Field for Affine {
            fn eval(&self, z: [f64; 3]) -> f64 {
                0.3 + 1.7 * z[0] - 0.8 * z[1] + 0.25 * z[2]
            }
        }
        let f = GridField::sample(spec, &Affine);
        let mut rng = crate::util::rng_from_seed(3);
        for _ in 0..200 {
            let z = [
                rng.gen_range(0.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            assert_relative_eq!(f.interp(z), Affine.eval(z), epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_phantom_center_value_and_floor() {
        let p = Phantom::GaussianBump {
            amplitude: 1.0,
            center: [0.5, 0.0, 0.0],
            sigma: [0.05, 0.1, 0.1],
            support_sigmas: 7.0,
        };
        assert_relative_eq!(p.eval([0.5, 0.0, 0.0]), 1.0, epsilon = 1e-15);
        assert_eq!(p.eval([0.1, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn phantom_support_validation() {
        let sc = SupportConstraint {
            x_min: 0.05,
            x_max: 0.2,
            y1: [-0.5, 0.5],
            y2: [-0.5, 0.5],
        };
        let ok = Phantom::GaussianBump {
            amplitude: 1.0,
            center: [0.125, 0.0, 0.0],
            sigma: [0.01, 0.05, 0.05],
            support_sigmas: 7.0,
        };
        assert!(ok.validated(&sc).is_ok());
        let leak = Phantom::GaussianBump {
            amplitude: 1.0,
            center: [0.125, 0.0, 0.0],
            sigma: [0.02, 0.05, 0.05],
            support_sigmas: 7.0,
        };
        assert!(leak.validated(&sc).is_err());
    }

    #[test]
    fn two_shell_components_disjoint() {
        let p = Phantom::TwoShell {
            amplitude: 1.0,
            x_centers: [0.3, 0.6],
            x_width: 0.1,
            y_cap: 0.5,
        };
        let s1 = Phantom::Shell {
            amplitude: 1.0,
            x_center: 0.3,
            x_width: 0.1,
            y_cap: 0.5,
        };
        let s2 = Phantom::Shell {
            amplitude: 1.0,
            x_center: 0.6,
            x_width: 0.1,
            y_cap: 0.5,
        };
        let mut rng = crate::util::rng_from_seed(4);
        for _ in 0..500 {
            let z = [
                rng.gen_range(0.0..1.0),
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
            ];
            let prod = s1.eval(z) * s2.eval(z);
            assert_eq!(prod, 0.0, "components overlap at {z:?}");
            assert_relative_eq!(p.eval(z), s1.eval(z) + s2.eval(z), epsilon = 1e-15);
        }
    }

    #[test]
    fn field_file_roundtrip() {
        let spec = GridSpec::from_ranges([0.0, 0.4], [-0.4, 0.4], [-0.4, 0.4], [8, 9, 10]);
        let mut rng = crate::util::rng_from_seed(12);
        let values: Vec<f64> = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = GridField::from_values(spec, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.grf");
        f.write_to(&path).unwrap();
        let g = GridField::read_from(&path).unwrap();
        assert_eq!(f.spec, g.spec);
        assert_eq!(f.values, g.values);
    }

    #[test]
    fn rejects_nonfinite_values() {
        let spec = small_spec();
        let mut values = vec![0.0; spec.len()];
        values[3] = f64::NAN;
        assert!(GridField::from_values(spec, values).is_err());
    }
}
