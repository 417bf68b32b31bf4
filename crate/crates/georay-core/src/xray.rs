//! Forward geodesic X-ray transform over the near-tangent family.
//!
//! `If(x, y, lambda, omega) = int f(gamma_{x,y,lambda,omega}(t)) dt` over
//! `(-t_span, t_span)`, by composite trapezoid along the traced ray with
//! the ODE step as the quadrature step. The family is sampled by a
//! [`RayGrid`]: base points in the region, Gauss-Legendre nodes in
//! `lambda` on `[-kappa x, kappa x]` per base point, and uniform angles
//! on the circle.

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{GeorayError, Result};
use crate::field::{Field, GridField};
use crate::flow::{trace, RayParams};
use crate::metric::MetricModel;
use crate::util::gauss_legendre;

/// Quadrature grid over the ray family.
#[derive(Debug, Clone)]
pub struct RayGrid {
    pub base_points: Vec<[f64; 3]>,
    /// Measure weight attached to each base point (grid cell volume).
    pub base_weights: Vec<f64>,
    pub kappa: f64,
    pub n_lambda: usize,
    pub n_omega: usize,
    pub t_span: f64,
    pub t_step: f64,
    gl_nodes: Vec<f64>,
    gl_weights: Vec<f64>,
}

impl RayGrid {
    pub fn new(
        base_points: Vec<[f64; 3]>,
        base_weights: Vec<f64>,
        kappa: f64,
        n_lambda: usize,
        n_omega: usize,
        t_span: f64,
        t_step: f64,
    ) -> Result<Self> {
        if base_points.len() != base_weights.len() {
            return Err(GeorayError::Validation(
                "base point and weight counts differ".into(),
            ));
        }
        if base_points.iter().any(|b| b[0] <= 0.0) {
            return Err(GeorayError::Validation(
                "ray grid base points need x > 0".into(),
            ));
        }
        if kappa <= 0.0 || n_lambda == 0 || n_omega == 0 {
            return Err(GeorayError::Validation("empty ray grid".into()));
        }
        let (gl_nodes, gl_weights) = gauss_legendre(n_lambda);
        Ok(RayGrid {
            base_points,
            base_weights,
            kappa,
            n_lambda,
            n_omega,
            t_span,
            t_step,
            gl_nodes,
            gl_weights,
        })
    }

    /// Lambda quadrature nodes and weights for a base point at height x:
    /// Gauss-Legendre on [-kappa x, kappa x]. Weights sum to 2 kappa x.
    pub fn lambda_nodes(&self, x: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = self.kappa * x;
        self.gl_nodes
            .iter()
            .zip(&self.gl_weights)
            .map(move |(&n, &w)| (half * n, half * w))
    }

    /// Omega angles and the uniform circle weight.
    pub fn omega_nodes(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        let w = std::f64::consts::TAU / self.n_omega as f64;
        (0..self.n_omega).map(move |i| {
            let th = std::f64::consts::TAU * i as f64 / self.n_omega as f64;
            ([th.cos(), th.sin()], w)
        })
    }

    pub fn rays_per_base(&self) -> usize {
        self.n_lambda * self.n_omega
    }

    pub fn len(&self) -> usize {
        self.base_points.len() * self.rays_per_base()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of the datum for (base, lambda, omega).
    pub fn index(&self, base: usize, il: usize, io: usize) -> usize {
        (base * self.n_lambda + il) * self.n_omega + io
    }
}

/// Forward transform of a single ray: composite trapezoid of the field
/// along the traced bicharacteristic.
pub fn xray_single(m: &MetricModel, f: &GridField, p: &RayParams) -> Result<f64> {
    xray_field(m, f, p)
}

/// Generic-field version of [`xray_single`] (analytic phantoms, wrappers).
pub fn xray_field(m: &MetricModel, f: &dyn Field, p: &RayParams) -> Result<f64> {
    let path = trace(m, p)?;
    let n = path.times.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 0..n {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        acc += w * f.eval(path.positions[i]);
    }
    Ok(acc * p.h)
}

/// Data cube over the ray family: base-major, then lambda, then omega.
#[derive(Debug, Clone)]
pub struct XRayData {
    pub values: Vec<f64>,
    pub n_base: usize,
    pub n_lambda: usize,
    pub n_omega: usize,
}

/// Forward transform over the whole grid. Per-ray failures abort with the
/// offending flat indices collected into the error message.
pub fn xray_batch(m: &MetricModel, f: &GridField, rg: &RayGrid) -> Result<XRayData> {
    xray_batch_field(m, f, rg)
}

/// Generic-field version of [`xray_batch`].
pub fn xray_batch_field(m: &MetricModel, f: &dyn Field, rg: &RayGrid) -> Result<XRayData> {
    let per_base: Vec<Result<Vec<f64>>> = rg
        .base_points
        .par_iter()
        .map(|&b| {
            let mut vals = Vec::with_capacity(rg.rays_per_base());
            for (lambda, _) in rg.lambda_nodes(b[0]) {
                for (omega, _) in rg.omega_nodes() {
                    let p = RayParams {
                        x: b[0],
                        y: [b[1], b[2]],
                        lambda,
                        omega,
                        t_span: rg.t_span,
                        h: rg.t_step,
                    };
                    vals.push(xray_field(m, f, &p)?);
                }
            }
            Ok(vals)
        })
        .collect();
    let mut values = Vec::with_capacity(rg.len());
    let mut failures = Vec::new();
    for (i, r) in per_base.into_iter().enumerate() {
        match r {
            Ok(v) => values.extend(v),
            Err(e) => failures.push(format!("base {i}: {e}")),
        }
    }
    if !failures.is_empty() {
        return Err(GeorayError::Integration(format!(
            "{} base points failed: {}",
            failures.len(),
            failures.join("; ")
        )));
    }
    Ok(XRayData {
        values,
        n_base: rg.base_points.len(),
        n_lambda: rg.n_lambda,
        n_omega: rg.n_omega,
    })
}

/// L2 norm of the data with the family measure
/// (base cell volume) x (lambda weight) x (omega weight).
pub fn data_norm(data: &XRayData, rg: &RayGrid) -> f64 {
    let mut acc = 0.0;
    for (ib, &b) in rg.base_points.iter().enumerate() {
        let wb = rg.base_weights[ib];
        for (il, (_, wl)) in rg.lambda_nodes(b[0]).enumerate() {
            for (io, (_, wo)) in rg.omega_nodes().enumerate() {
                let v = data.values[rg.index(ib, il, io)];
                acc += v * v * wb * wl * wo;
            }
        }
    }
    acc.sqrt()
}

impl XRayData {
    /// Write the `georay-xray v1` format: ASCII header, base point triplets,
    /// then the data cube, all little-endian f64.
    pub fn write_to(&self, rg: &RayGrid, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(64 + 8 * (3 * self.n_base + self.values.len()));
        buf.extend_from_slice(
            format!(
                "georay-xray v1 {} {} {} {:e} {:e} {:e}\n",
                self.n_base, self.n_lambda, self.n_omega, rg.kappa, rg.t_span, rg.t_step
            )
            .as_bytes(),
        );
        for b in &rg.base_points {
            for v in b {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Read the data cube and the base-point table written by `write_to`.
    pub fn read_from(path: &Path) -> Result<(XRayData, Vec<[f64; 3]>, [f64; 3])> {
        let mut file = std::fs::File::open(path)
            .map_err(|e| GeorayError::Io(format!("{}: {e}", path.display())))?;
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            file.read_exact(&mut byte)
                .map_err(|_| GeorayError::Io("truncated xray header".into()))?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
            if header.len() > 512 {
                return Err(GeorayError::Io("xray header too long".into()));
            }
        }
        let header = String::from_utf8(header)
            .map_err(|_| GeorayError::Io("xray header not UTF-8".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 8 || parts[0] != "georay-xray" || parts[1] != "v1" {
            return Err(GeorayError::Io(format!("bad xray header: {header}")));
        }
        let n_base: usize = parts[2].parse().map_err(|_| GeorayError::Io("bad n_base".into()))?;
        let n_lambda: usize = parts[3]
            .parse()
            .map_err(|_| GeorayError::Io("bad n_lambda".into()))?;
        let n_omega: usize = parts[4]
            .parse()
            .map_err(|_| GeorayError::Io("bad n_omega".into()))?;
        let kappa: f64 = parts[5].parse().map_err(|_| GeorayError::Io("bad kappa".into()))?;
        let t_span: f64 = parts[6].parse().map_err(|_| GeorayError::Io("bad t_span".into()))?;
        let t_step: f64 = parts[7].parse().map_err(|_| GeorayError::Io("bad t_step".into()))?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;
        let expect = 8 * (3 * n_base + n_base * n_lambda * n_omega);
        if raw.len() != expect {
            return Err(GeorayError::Io(format!(
                "xray payload {} bytes, expected {expect}",
                raw.len()
            )));
        }
        let floats: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut bases = Vec::with_capacity(n_base);
        for i in 0..n_base {
            bases.push([floats[3 * i], floats[3 * i + 1], floats[3 * i + 2]]);
        }
        let values = floats[3 * n_base..].to_vec();
        Ok((
            XRayData {
                values,
                n_base,
                n_lambda,
                n_omega,
            },
            bases,
            [kappa, t_span, t_step],
        ))
    }
}
