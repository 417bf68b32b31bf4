//! The averaged normal operator and its exponential conjugate.
//!
//! `A f(x, y) = int int I f(x, y, lambda, omega) x^{-1} chi(lambda/x)
//! dlambda domega` over the near-tangent family, and
//! `B g = x^{-1} e^{-F/x} A (e^{F/x} g)`, the operator that the scattering
//! theory makes uniformly invertible for `F > 0`.
//!
//! Rays for an output point are integrated on the fly; for iterative work
//! the whole operator is assembled once into sparse rows over the grid
//! (the quadrature is linear in the field, so each row is exact). Rays come
//! in (lambda, omega) / (-lambda, -omega) pairs tracing the same curve, so
//! only half the ray family is traced, with doubled weights.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cutoff::{chi_eval, CutoffSpec};
use crate::error::{GeorayError, Result};
use crate::field::{Field, GridField, GridSpec};
use crate::metric::{alpha_form, MetricModel};
use crate::util::gauss_legendre;
use crate::xray::{RayGrid, XRayData};

/// Everything needed to apply the conjugated operator on a grid.
#[derive(Clone)]
pub struct ConjugatedOp {
    pub metric: Arc<MetricModel>,
    pub grid: GridSpec,
    pub cutoff: CutoffSpec,
    /// Exponential weight strength, strictly positive.
    pub digamma: f64,
    /// Output rows exist only for grid nodes with x >= x_floor ...
    pub x_floor: f64,
    /// ... and x <= x_row_max (the true-boundary cap of the lens region).
    pub x_row_max: f64,
    pub kappa: f64,
    pub n_lambda: usize,
    pub n_omega: usize,
    pub t_span: f64,
    pub t_step: f64,
}

impl ConjugatedOp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        metric: Arc<MetricModel>,
        grid: GridSpec,
        cutoff: CutoffSpec,
        digamma: f64,
        x_floor: f64,
        kappa: f64,
        n_lambda: usize,
        n_omega: usize,
        t_span: f64,
        t_step: f64,
    ) -> Result<Self> {
        if digamma <= 0.0 {
            return Err(GeorayError::Validation(
                "conjugated operator requires digamma > 0".into(),
            ));
        }
        cutoff.validate()?;
        if n_omega % 2 != 0 {
            return Err(GeorayError::Validation(
                "n_omega must be even (orientation pairing)".into(),
            ));
        }
        let v = &metric.validity;
        if grid.origin[0] < v.x[0]
            || grid.x_max() > v.x[1]
            || grid.origin[1] < v.y1[0]
            || grid.origin[1] + (grid.dims[1] - 1) as f64 * grid.spacing[1] > v.y1[1]
            || grid.origin[2] < v.y2[0]
            || grid.origin[2] + (grid.dims[2] - 1) as f64 * grid.spacing[2] > v.y2[1]
        {
            return Err(GeorayError::Validation(
                "field grid exceeds the metric validity box".into(),
            ));
        }
        Ok(ConjugatedOp {
            metric,
            grid,
            cutoff,
            digamma,
            x_floor,
            x_row_max: f64::INFINITY,
            kappa,
            n_lambda,
            n_omega,
            t_span,
            t_step,
        })
    }

    pub fn with_row_cap(mut self, x_row_max: f64) -> Self {
        self.x_row_max = x_row_max;
        self
    }

    /// Flat indices of the grid nodes that carry operator rows.
    pub fn row_nodes(&self) -> Vec<u32> {
        let mut rows = Vec::new();
        for i in 0..self.grid.dims[0] {
            let x = self.grid.node(i, 0, 0)[0];
            if x < self.x_floor || x > self.x_row_max {
                continue;
            }
            for j in 0..self.grid.dims[1] {
                for k in 0..self.grid.dims[2] {
                    rows.push(self.grid.index(i, j, k) as u32);
                }
            }
        }
        rows
    }

    /// Ray quadrature grid with base points at the row nodes (full family;
    /// this is what forward data files are produced over).
    pub fn ray_grid(&self) -> Result<RayGrid> {
        let rows = self.row_nodes();
        let vol = self.grid.cell_volume();
        let bases: Vec<[f64; 3]> = rows
            .iter()
            .map(|&r| {
                let (i, j, k) = self.grid.unindex(r as usize);
                self.grid.node(i, j, k)
            })
            .collect();
        let weights = vec![vol; bases.len()];
        RayGrid::new(
            bases,
            weights,
            self.kappa,
            self.n_lambda,
            self.n_omega,
            self.t_span,
            self.t_step,
        )
    }

    /// The weighted average of forward data with the x^{-1} chi(lambda/x)
    /// factors: turns an `XRayData` cube into `A f` sampled at the rows.
    pub fn average_data(&self, data: &XRayData, rg: &RayGrid) -> Result<GridField> {
        if data.n_base != rg.base_points.len()
            || data.n_lambda != rg.n_lambda
            || data.n_omega != rg.n_omega
        {
            return Err(GeorayError::Validation(
                "data cube does not match the ray grid".into(),
            ));
        }
        let mut out = GridField::zeros(self.grid);
        let rows = self.row_nodes();
        if rows.len() != rg.base_points.len() {
            return Err(GeorayError::Validation(
                "ray grid base points must be the operator rows".into(),
            ));
        }
        for (ib, &node) in rows.iter().enumerate() {
            let b = rg.base_points[ib];
            let q0 = alpha_form(&self.metric, 0.0, [b[1], b[2]]);
            let mut acc = 0.0;
            for (il, (lambda, wl)) in rg.lambda_nodes(b[0]).enumerate() {
                for (io, (omega, wo)) in rg.omega_nodes().enumerate() {
                    let alpha = q0.quad(omega);
                    let chi = chi_eval(&self.cutoff, lambda / b[0], alpha);
                    if chi == 0.0 {
                        continue;
                    }
                    acc += wl * wo * chi / b[0] * data.values[rg.index(ib, il, io)];
                }
            }
            out.values[node as usize] = acc;
        }
        Ok(out)
    }

    /// A f at a single output point by direct quadrature (generic field).
    pub fn apply_a_at(&self, f: &dyn Field, base: [f64; 3]) -> f64 {
        self.quadrature_at(f, base)
    }

    fn quadrature_at(&self, f: &dyn Field, base: [f64; 3]) -> f64 {
        let x_b = base[0];
        let y_b = [base[1], base[2]];
        let q0 = alpha_form(&self.metric, 0.0, y_b);
        let (gl_n, gl_w) = gauss_legendre(self.n_lambda);
        let wo = std::f64::consts::TAU / self.n_omega as f64;
        let mut acc = 0.0;
        for io in 0..self.n_omega / 2 {
            let th = std::f64::consts::TAU * io as f64 / self.n_omega as f64;
            let omega = [th.cos(), th.sin()];
            let alpha = q0.quad(omega);
            for il in 0..self.n_lambda {
                let lambda = self.kappa * x_b * gl_n[il];
                let wl = self.kappa * x_b * gl_w[il];
                let chi = chi_eval(&self.cutoff, lambda / x_b, alpha);
                if chi == 0.0 {
                    continue;
                }
                let w_ray = 2.0 * wo * wl * chi / x_b;
                acc += w_ray * self.integrate_ray(f, base, lambda, omega);
            }
        }
        acc
    }

    /// Trapezoid integral of `f` along one ray (both time directions).
    fn integrate_ray(&self, f: &dyn Field, base: [f64; 3], lambda: f64, omega: [f64; 2]) -> f64 {
        let m = &*self.metric;
        let (xi, eta) = m.momenta_from_velocity(base[0], [base[1], base[2]], lambda, omega);
        let s0 = [base[0], base[1], base[2], xi, eta[0], eta[1]];
        let n_steps = (self.t_span / self.t_step).round() as usize;
        let mut acc = f.eval([s0[0], s0[1], s0[2]]); // t = 0, weight 1
        for dir in [1.0, -1.0] {
            let mut s = s0;
            for k in 1..=n_steps {
                s = rk4(m, &s, dir * self.t_step);
                if !m.validity.contains(s[0], [s[1], s[2]]) {
                    break;
                }
                let w = if k == n_steps { 0.5 } else { 1.0 };
                acc += w * f.eval([s[0], s[1], s[2]]);
            }
        }
        acc * self.t_step
    }

    /// A applied to a grid field (direct quadrature over all rows).
    pub fn apply_a(&self, f: &GridField) -> Result<GridField> {
        if f.spec != self.grid {
            return Err(GeorayError::Validation(
                "field grid does not match the operator grid".into(),
            ));
        }
        self.apply_a_field(f)
    }

    /// A applied to a generic field, sampled at all rows.
    pub fn apply_a_field(&self, f: &dyn Field) -> Result<GridField> {
        let rows = self.row_nodes();
        let vals: Vec<f64> = rows
            .par_iter()
            .map(|&r| {
                let (i, j, k) = self.grid.unindex(r as usize);
                self.quadrature_at(f, self.grid.node(i, j, k))
            })
            .collect();
        let mut out = GridField::zeros(self.grid);
        for (&r, v) in rows.iter().zip(vals) {
            out.values[r as usize] = v;
        }
        Ok(out)
    }

    /// B g = x^{-1} e^{-F/x} A (e^{F/x} g), by direct quadrature.
    pub fn apply_b(&self, g: &GridField) -> Result<GridField> {
        if g.spec != self.grid {
            return Err(GeorayError::Validation(
                "field grid does not match the operator grid".into(),
            ));
        }
        let mut weighted = g.clone();
        for i in 0..self.grid.dims[0] {
            let x = self.grid.node(i, 0, 0)[0];
            let w = (self.digamma / x).exp();
            for j in 0..self.grid.dims[1] {
                for k in 0..self.grid.dims[2] {
                    let idx = self.grid.index(i, j, k);
                    // Zero stays zero even where the weight overflows.
                    let v = if g.values[idx] == 0.0 {
                        0.0
                    } else {
                        g.values[idx] * w
                    };
                    if !v.is_finite() {
                        return Err(GeorayError::WeightOverflow {
                            x,
                            message: "e^{F/x} g overflowed; raise x_floor or lower F".into(),
                        });
                    }
                    weighted.values[idx] = v;
                }
            }
        }
        let mut out = self.apply_a(&weighted)?;
        for &r in &self.row_nodes() {
            let (i, j, k) = self.grid.unindex(r as usize);
            let x = self.grid.node(i, j, k)[0];
            out.values[r as usize] *= (-self.digamma / x).exp() / x;
        }
        Ok(out)
    }

    /// One row of A's kernel against the nodal basis: (node, weight) pairs.
    pub fn kernel_row(&self, base: [f64; 3]) -> Vec<(u32, f64)> {
        let mut ws = Workspace::new(self.grid.len());
        self.splat_rows(base, &mut ws);
        let mut out: Vec<(u32, f64)> = ws
            .touched
            .iter()
            .map(|&c| (c, ws.vals[c as usize]))
            .collect();
        out.sort_unstable_by_key(|&(c, _)| c);
        ws.reset();
        out
    }

    /// Accumulate the A-row for `base` into the workspace: for each ray of
    /// the (halved) family and each trapezoid sample inside the grid,
    /// deposit `w_ray * w_t * (trilinear coefficients)`.
    fn splat_rows(&self, base: [f64; 3], ws: &mut Workspace) {
        let m = &*self.metric;
        let x_b = base[0];
        let y_b = [base[1], base[2]];
        let q0 = alpha_form(m, 0.0, y_b);
        let (gl_n, gl_w) = gauss_legendre(self.n_lambda);
        let wo = std::f64::consts::TAU / self.n_omega as f64;
        let n_steps = (self.t_span / self.t_step).round() as usize;

        // Early-exit pads: once a ray is beyond these and moving outward it
        // can no longer contribute (x'' > 0 pushes escaping rays up).
        let pad = [
            2.0 * self.grid.spacing[0],
            2.0 * self.grid.spacing[1].max(0.05),
            2.0 * self.grid.spacing[2].max(0.05),
        ];
        let x_hi = self.grid.x_max() + pad[0];
        let y1_lo = self.grid.origin[1] - pad[1];
        let y1_hi = self.grid.origin[1] + (self.grid.dims[1] - 1) as f64 * self.grid.spacing[1]
            + pad[1];
        let y2_lo = self.grid.origin[2] - pad[2];
        let y2_hi = self.grid.origin[2] + (self.grid.dims[2] - 1) as f64 * self.grid.spacing[2]
            + pad[2];

        for io in 0..self.n_omega / 2 {
            let th = std::f64::consts::TAU * io as f64 / self.n_omega as f64;
            let omega = [th.cos(), th.sin()];
            let alpha = q0.quad(omega);
            for il in 0..self.n_lambda {
                let lambda = self.kappa * x_b * gl_n[il];
                let wl = self.kappa * x_b * gl_w[il];
                let chi = chi_eval(&self.cutoff, lambda / x_b, alpha);
                if chi == 0.0 {
                    continue;
                }
                let w_ray = 2.0 * wo * wl * chi / x_b;
                let (xi, eta) = m.momenta_from_velocity(x_b, y_b, lambda, omega);
                let s0 = [x_b, y_b[0], y_b[1], xi, eta[0], eta[1]];
                ws.splat(&self.grid, [s0[0], s0[1], s0[2]], w_ray * self.t_step);
                for dir in [1.0, -1.0] {
                    let mut s = s0;
                    for k in 1..=n_steps {
                        s = rk4(m, &s, dir * self.t_step);
                        let pos = [s[0], s[1], s[2]];
                        if !m.validity.contains(s[0], [s[1], s[2]]) {
                            break;
                        }
                        // Outward-and-gone checks.
                        let f_coef = m.f_coef(s[0], [s[1], s[2]]);
                        let vx = 2.0 * f_coef * s[3];
                        if s[0] > x_hi && vx * dir > 0.0 {
                            break;
                        }
                        let hv = m.h_coef(s[0], [s[1], s[2]]).mul_vec([2.0 * s[4], 2.0 * s[5]]);
                        if (s[1] > y1_hi && hv[0] * dir > 0.0)
                            || (s[1] < y1_lo && hv[0] * dir < 0.0)
                            || (s[2] > y2_hi && hv[1] * dir > 0.0)
                            || (s[2] < y2_lo && hv[1] * dir < 0.0)
                        {
                            break;
                        }
                        let w_t = if k == n_steps { 0.5 } else { 1.0 };
                        ws.splat(&self.grid, pos, w_ray * w_t * self.t_step);
                    }
                }
            }
        }
    }

    /// Assemble the sparse A-matrix over all rows. Values are stored f32
    /// (they are bounded quadrature weights); accumulation stays f64.
    pub fn assemble(&self) -> Result<SparseOp> {
        let rows = self.row_nodes();
        let n_threads = rayon::current_num_threads().max(1);
        let chunk = rows.len().div_ceil(n_threads * 4).max(1);
        let chunks: Vec<&[u32]> = rows.chunks(chunk).collect();
        let parts: Vec<(Vec<usize>, Vec<u32>, Vec<f32>)> = chunks
            .par_iter()
            .map(|part| {
                let mut ws = Workspace::new(self.grid.len());
                let mut row_len = Vec::with_capacity(part.len());
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                for &r in *part {
                    let (i, j, k) = self.grid.unindex(r as usize);
                    self.splat_rows(self.grid.node(i, j, k), &mut ws);
                    ws.touched.sort_unstable();
                    for &c in &ws.touched {
                        cols.push(c);
                        vals.push(ws.vals[c as usize] as f32);
                    }
                    row_len.push(ws.touched.len());
                    ws.reset();
                }
                (row_len, cols, vals)
            })
            .collect();
        let nnz: usize = parts.iter().map(|(_, c, _)| c.len()).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0usize);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        for (row_len, c, v) in parts {
            for l in row_len {
                row_ptr.push(row_ptr.last().unwrap() + l);
            }
            cols.extend(c);
            vals.extend(v);
        }
        Ok(SparseOp {
            grid: self.grid,
            row_nodes: rows,
            row_ptr,
            cols,
            vals,
        })
    }

    /// Dense assembly of B restricted to the given columns (grid node
    /// indices). Rows are all operator rows. Refuses above the cell cap.
    pub fn assemble_dense(&self, col_nodes: &[u32]) -> Result<DMatrix<f64>> {
        const CAP: usize = 20_000;
        let rows = self.row_nodes();
        let included = rows.len().max(col_nodes.len());
        if included > CAP {
            return Err(GeorayError::SizeCap {
                included,
                cap: CAP,
                factor: (included as f64 / CAP as f64).cbrt(),
            });
        }
        let mut col_of_node = vec![u32::MAX; self.grid.len()];
        for (c, &node) in col_nodes.iter().enumerate() {
            col_of_node[node as usize] = c as u32;
        }
        let f = self.digamma;
        let entries: Vec<Vec<(usize, usize, f64)>> = rows
            .par_iter()
            .enumerate()
            .map(|(ri, &r)| {
                let (i, j, k) = self.grid.unindex(r as usize);
                let base = self.grid.node(i, j, k);
                let x_r = base[0];
                let mut ws = Workspace::new(self.grid.len());
                self.splat_rows(base, &mut ws);
                let mut out = Vec::new();
                for &node in &ws.touched {
                    let c = col_of_node[node as usize];
                    if c == u32::MAX {
                        continue;
                    }
                    let (ci, _, _) = self.grid.unindex(node as usize);
                    let x_c = self.grid.origin[0] + ci as f64 * self.grid.spacing[0];
                    let conj = (-f * (1.0 / x_r - 1.0 / x_c)).exp();
                    out.push((ri, c as usize, conj / x_r * ws.vals[node as usize]));
                }
                out
            })
            .collect();
        let mut mat = DMatrix::zeros(rows.len(), col_nodes.len());
        for row_entries in entries {
            for (r, c, v) in row_entries {
                mat[(r, c)] = v;
            }
        }
        Ok(mat)
    }
}

#[inline]
fn rk4(m: &MetricModel, s: &[f64; 6], h: f64) -> [f64; 6] {
    #[inline]
    fn rhs(m: &MetricModel, s: &[f64; 6]) -> [f64; 6] {
        let (x, y) = (s[0], [s[1], s[2]]);
        let (xi, eta) = (s[3], [s[4], s[5]]);
        let f = m.f_coef(x, y);
        let h2 = m.h_coef(x, y);
        let df_dx = m.df_dx(x, y);
        let df_dy = m.df_dy(x, y);
        let dh_dx = m.dh_dx(x, y);
        let dh_dy = m.dh_dy(x, y);
        let v_y = h2.mul_vec([2.0 * eta[0], 2.0 * eta[1]]);
        [
            2.0 * f * xi,
            v_y[0],
            v_y[1],
            -(df_dx * xi * xi + dh_dx.quad(eta)),
            -(df_dy[0] * xi * xi + dh_dy[0].quad(eta)),
            -(df_dy[1] * xi * xi + dh_dy[1].quad(eta)),
        ]
    }
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

/// Per-thread splat buffer: dense values plus a touched-index list so the
/// reset costs O(touched), not O(grid).
struct Workspace {
    vals: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<u32>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            vals: vec![0.0; n],
            seen: vec![false; n],
            touched: Vec::with_capacity(4096),
        }
    }

    fn reset(&mut self) {
        for &t in &self.touched {
            self.vals[t as usize] = 0.0;
            self.seen[t as usize] = false;
        }
        self.touched.clear();
    }

    /// Deposit `w * (trilinear hat coefficients at z)`.
    #[inline]
    fn splat(&mut self, spec: &GridSpec, z: [f64; 3], w: f64) {
        let mut t = [0.0_f64; 3];
        let mut i0 = [0_usize; 3];
        for a in 0..3 {
            let u = (z[a] - spec.origin[a]) / spec.spacing[a];
            if u < 0.0 || u > (spec.dims[a] - 1) as f64 {
                return;
            }
            let fl = u.floor().min((spec.dims[a] - 2) as f64).max(0.0);
            i0[a] = fl as usize;
            t[a] = u - fl;
        }
        for (di, wi) in [(0, 1.0 - t[0]), (1, t[0])] {
            for (dj, wj) in [(0, 1.0 - t[1]), (1, t[1])] {
                for (dk, wk) in [(0, 1.0 - t[2]), (1, t[2])] {
                    let c = wi * wj * wk;
                    if c == 0.0 {
                        continue;
                    }
                    let idx = spec.index(i0[0] + di, i0[1] + dj, i0[2] + dk);
                    if !self.seen[idx] {
                        self.seen[idx] = true;
                        self.touched.push(idx as u32);
                    }
                    self.vals[idx] += w * c;
                }
            }
        }
    }
}

/// Sparse rows of the averaged operator A over the grid nodes.
pub struct SparseOp {
    pub grid: GridSpec,
    /// Grid node index of each row.
    pub row_nodes: Vec<u32>,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f32>,
}

impl SparseOp {
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// x-coordinate of a row's node.
    #[inline]
    pub fn row_x(&self, r: usize) -> f64 {
        let (i, _, _) = self.grid.unindex(self.row_nodes[r] as usize);
        self.grid.origin[0] + i as f64 * self.grid.spacing[0]
    }

    /// y = A f: one value per row.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.grid.len());
        (0..self.row_nodes.len())
            .into_par_iter()
            .map(|r| {
                let mut acc = 0.0_f64;
                for idx in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.vals[idx] as f64 * f[self.cols[idx] as usize];
                }
                acc
            })
            .collect()
    }

    /// y = A^T r over grid nodes, deterministic chunked accumulation.
    pub fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.row_nodes.len());
        let n_rows = self.row_nodes.len();
        let n_chunks = rayon::current_num_threads().max(1) * 2;
        let chunk = n_rows.div_ceil(n_chunks).max(1);
        let bounds: Vec<(usize, usize)> = (0..n_rows)
            .step_by(chunk)
            .map(|s| (s, (s + chunk).min(n_rows)))
            .collect();
        let partials: Vec<Vec<f64>> = bounds
            .par_iter()
            .map(|&(s, e)| {
                let mut acc = vec![0.0_f64; self.grid.len()];
                for row in s..e {
                    let rv = r[row];
                    if rv == 0.0 {
                        continue;
                    }
                    for idx in self.row_ptr[row]..self.row_ptr[row + 1] {
                        acc[self.cols[idx] as usize] += self.vals[idx] as f64 * rv;
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0_f64; self.grid.len()];
        for p in partials {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out
    }

    /// Estimated memory footprint in bytes.
    pub fn memory_bytes(&self) -> usize {
        self.cols.len() * 8 + self.row_ptr.len() * 8 + self.row_nodes.len() * 4
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutoff::CutoffSpec;
    use crate::field::Phantom;
    use crate::metric::{MetricModel, RadialProfile, ValidityBox};
    use approx::assert_relative_eq;
    use rand::Rng;

    fn slab_metric() -> Arc<MetricModel> {
        Arc::new(MetricModel::euclidean(ValidityBox {
            x: [-0.6, 1.6],
            y1: [-1.4, 1.4],
            y2: [-1.4, 1.4],
        }))
    }

    fn lens_metric() -> Arc<MetricModel> {
        Arc::new(MetricModel::adapted_radial(
            RadialProfile::constant(),
            7.6,
            ValidityBox {
                x: [-0.6, 1.6],
                y1: [-1.4, 1.4],
                y2: [-1.4, 1.4],
            },
        ))
    }

    fn small_op(metric: Arc<MetricModel>) -> ConjugatedOp {
        let grid = GridSpec::from_ranges([0.0, 0.4], [-0.4, 0.4], [-0.4, 0.4], [13, 13, 13]);
        ConjugatedOp::new(
            metric,
            grid,
            CutoffSpec::constant(0.0625, 1.0),
            1.0,
            0.1,
            1.0,
            8,
            8,
            0.4,
            0.4 / 48.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_field_maps_to_zero() {
        let op = small_op(lens_metric());
        let f = GridField::zeros(op.grid);
        let out = op.apply_a(&f).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
        let out_b = op.apply_b(&f).unwrap();
        assert!(out_b.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_a_linear() {
        let op = small_op(lens_metric());
        let mut rng = crate::util::rng_from_seed(2);
        let fa = GridField::from_values(
            op.grid,
            (0..op.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let fb = GridField::from_values(
            op.grid,
            (0..op.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let da = op.apply_a(&fa).unwrap();
        let db = op.apply_a(&fb).unwrap();
        let combo = crate::field::lincomb(0.6, &fa, -1.7, &fb);
        let dc = op.apply_a(&combo).unwrap();
        for i in 0..dc.values.len() {
            let want = 0.6 * da.values[i] - 1.7 * db.values[i];
            assert!((dc.values[i] - want).abs() <= 1e-10 * (1.0 + want.abs()));
        }
    }

    /// Direct double-quadrature oracle on the flat slab: adaptive-grade
    /// Gauss rules in lambda and omega over closed-form Gaussian line
    /// integrals, compared with apply_a at probe points to 1e-4 relative.
    #[test]
    fn apply_a_matches_nested_quadrature_oracle() {
        let grid = GridSpec::from_ranges([0.0, 0.4], [-0.4, 0.4], [-0.4, 0.4], [13, 13, 13]);
        let op = ConjugatedOp::new(
            slab_metric(),
            grid,
            CutoffSpec::constant(0.0625, 1.0),
            1.0,
            0.1,
            1.0,
            16,
            16,
            0.4,
            0.4 / 64.0,
        )
        .unwrap();
        // The 16-angle circle rule resolves angular structure of width
        // sigma/offset; keep probes close relative to sigma.
        let center = [0.16, 0.02, -0.03];
        let sigma = 0.08;
        let phantom = Phantom::GaussianBump {
            amplitude: 1.0,
            center,
            sigma: [sigma; 3],
            support_sigmas: 7.0,
        };
        // Closed-form segment integral of the Gaussian along the ray
        // through `base` with velocity (l, w), over |t| <= t_span.
        let t_span = op.t_span;
        let line = |base: [f64; 3], lambda: f64, omega: [f64; 2]| -> f64 {
            let v = [lambda, omega[0], omega[1]];
            let dz = crate::util::sub3(base, center);
            let v2 = crate::util::dot3(v, v);
            let speed = v2.sqrt();
            let t_star = -crate::util::dot3(dz, v) / v2;
            let perp = crate::util::sub3(
                dz,
                crate::util::scale3(v, crate::util::dot3(dz, v) / v2),
            );
            let d2 = crate::util::dot3(perp, perp);
            let s2 = std::f64::consts::SQRT_2;
            let erf = statrs::function::erf::erf;
            0.5 * (2.0 * std::f64::consts::PI).sqrt() * sigma
                * (-0.5 * d2 / (sigma * sigma)).exp()
                / speed
                * (erf((t_span - t_star) * speed / (sigma * s2))
                    + erf((t_span + t_star) * speed / (sigma * s2)))
        };
        let mut rng = crate::util::rng_from_seed(8);
        for _ in 0..20 {
            let base = [
                center[0] + rng.gen_range(-0.06..0.06),
                center[1] + rng.gen_range(-0.06..0.06),
                center[2] + rng.gen_range(-0.06..0.06),
            ];
            let got = op.apply_a_at(&phantom, base);
            // Oracle: 64-node GL in lambda x 256 angles, straight lines.
            let (ln, lw) = crate::util::gauss_legendre_on(
                64,
                -op.kappa * base[0],
                op.kappa * base[0],
            );
            let n_om = 256;
            let wo = std::f64::consts::TAU / n_om as f64;
            let mut want = 0.0;
            for i in 0..n_om {
                let th = std::f64::consts::TAU * i as f64 / n_om as f64;
                let omega = [th.cos(), th.sin()];
                for (l, w) in ln.iter().zip(&lw) {
                    let chi = chi_eval(&op.cutoff, l / base[0], 0.0);
                    if chi == 0.0 {
                        continue;
                    }
                    want += w * wo * chi / base[0] * line(base, *l, omega);
                }
            }
            assert_relative_eq!(got, want, max_relative = 1e-4);
        }
    }

    /// apply_B(e^{-F/x} f) = x^{-1} e^{-F/x} apply_A(f), the definition
    /// unwound; pointwise to 1e-12.
    #[test]
    fn apply_b_consistency_identity() {
        let op = small_op(lens_metric());
        let phantom = Phantom::GaussianBump {
            amplitude: 1.0,
            center: [0.2, 0.0, 0.0],
            sigma: [0.04, 0.09, 0.09],
            support_sigmas: 4.0,
        };
        let f = GridField::sample(op.grid, &phantom);
        let mut g = f.clone();
        for i in 0..op.grid.dims[0] {
            let x = op.grid.node(i, 0, 0)[0];
            let w = (-op.digamma / x.max(1e-12)).exp();
            for j in 0..op.grid.dims[1] {
                for k in 0..op.grid.dims[2] {
                    g.values[op.grid.index(i, j, k)] *= w;
                }
            }
        }
        let lhs = op.apply_b(&g).unwrap();
        let a = op.apply_a(&f).unwrap();
        for &r in &op.row_nodes() {
            let (i, j, k) = op.grid.unindex(r as usize);
            let x = op.grid.node(i, j, k)[0];
            let rhs = a.values[r as usize] * (-op.digamma / x).exp() / x;
            let l = lhs.values[r as usize];
            assert!(
                (l - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()),
                "row {r}: {l} vs {rhs}"
            );
        }
    }

    /// Assembled sparse rows reproduce the direct quadrature.
    #[test]
    fn assembled_matches_direct() {
        let op = small_op(lens_metric());
        let sp = op.assemble().unwrap();
        let mut rng = crate::util::rng_from_seed(6);
        let f = GridField::from_values(
            op.grid,
            (0..op.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let direct = op.apply_a(&f).unwrap();
        let fast = sp.apply(&f.values);
        for (r, &node) in sp.row_nodes.iter().enumerate() {
            let d = direct.values[node as usize];
            assert!(
                (fast[r] - d).abs() <= 1e-6 * (1.0 + d.abs()),
                "row {r}: {} vs {d}",
                fast[r]
            );
        }
    }

    /// Kernel support: A's row vanishes on cells with
    /// x' < x - kappa^2 x^2 / (2C) - tol.
    #[test]
    fn kernel_support_bound() {
        let op = small_op(lens_metric());
        let c_alpha = crate::metric::alpha_eval(&op.metric, 0.0, [0.0, 0.0], [1.0, 0.0]);
        let base = [0.3, 0.0, 0.0];
        let row = op.kernel_row(base);
        assert!(!row.is_empty());
        let dip = op.kappa * op.kappa * base[0] * base[0] / (2.0 * c_alpha);
        let tol = 1.5 * op.grid.spacing[0];
        for (node, w) in row {
            if w.abs() < 1e-14 {
                continue;
            }
            let (i, _, _) = op.grid.unindex(node as usize);
            let x_col = op.grid.origin[0] + i as f64 * op.grid.spacing[0];
            assert!(
                x_col >= base[0] - dip - tol,
                "kernel mass at x' = {x_col} below the support bound"
            );
        }
    }

    /// Dense assembly: one included cell reduces to a 1x1 matrix equal to
    /// apply_B of that cell's hat field at that cell; zero cutoff gives the
    /// zero matrix; matvec agrees with apply_b on random coarse fields.
    #[test]
    fn dense_assembly_consistency() {
        let metric = lens_metric();
        let grid = GridSpec::from_ranges([0.0, 0.4], [-0.3, 0.3], [-0.3, 0.3], [9, 9, 9]);
        let op = ConjugatedOp::new(
            metric.clone(),
            grid,
            CutoffSpec::constant(0.0625, 1.0),
            1.0,
            0.1,
            1.0,
            6,
            8,
            0.3,
            0.3 / 48.0,
        )
        .unwrap();

        // One column.
        let mid_node = grid.index(4, 4, 4) as u32;
        let dense = op.assemble_dense(&[mid_node]).unwrap();
        let mut hat = GridField::zeros(grid);
        hat.values[mid_node as usize] = 1.0;
        let b_hat = op.apply_b(&hat).unwrap();
        let rows = op.row_nodes();
        let r_pos = rows.iter().position(|&r| r == mid_node).unwrap();
        assert_relative_eq!(
            dense[(r_pos, 0)],
            b_hat.values[mid_node as usize],
            max_relative = 1e-10
        );

        // Matvec vs apply_b on random fields restricted to the columns.
        let col_nodes: Vec<u32> = rows.clone();
        let dense = op.assemble_dense(&col_nodes).unwrap();
        let mut rng = crate::util::rng_from_seed(10);
        for _ in 0..10 {
            let mut f = GridField::zeros(grid);
            for &c in &col_nodes {
                f.values[c as usize] = rng.gen_range(-1.0..1.0);
            }
            let direct = op.apply_b(&f).unwrap();
            let v = nalgebra::DVector::from_iterator(
                col_nodes.len(),
                col_nodes.iter().map(|&c| f.values[c as usize]),
            );
            let prod = &dense * v;
            for (r, &node) in rows.iter().enumerate() {
                let want = direct.values[node as usize];
                assert!(
                    (prod[r] - want).abs() <= 1e-8 * (1.0 + want.abs()),
                    "row {r}: {} vs {want}",
                    prod[r]
                );
            }
        }

        // Zero cutoff.
        let op0 = ConjugatedOp::new(
            metric,
            grid,
            CutoffSpec::constant(0.0625, 0.0),
            1.0,
            0.1,
            1.0,
            6,
            8,
            0.3,
            0.3 / 48.0,
        )
        .unwrap();
        let dense0 = op0.assemble_dense(&col_nodes).unwrap();
        assert!(dense0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn requires_positive_digamma() {
        let grid = GridSpec::from_ranges([0.0, 0.4], [-0.3, 0.3], [-0.3, 0.3], [9, 9, 9]);
        let err = ConjugatedOp::new(
            lens_metric(),
            grid,
            CutoffSpec::constant(0.0625, 1.0),
            0.0,
            0.1,
            1.0,
            6,
            8,
            0.3,
            0.3 / 48.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn transpose_consistent_with_apply() {
        let op = small_op(lens_metric());
        let sp = op.assemble().unwrap();
        let mut rng = crate::util::rng_from_seed(14);
        let f: Vec<f64> = (0..op.grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..sp.row_nodes.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let af = sp.apply(&f);
        let atr = sp.apply_transpose(&r);
        let lhs: f64 = af.iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = atr.iter().zip(&f).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
    }
}
