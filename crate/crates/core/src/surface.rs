//! Smooth height grids fitted to scattered surface samples.
//!
//! The grid values minimise `‖A z − d‖² + w²‖L z‖²`, where `A` holds bilinear
//! interpolation weights of the data points and `L` stacks second differences
//! along x, along y and across each cell. `w` is the smoothness times the
//! ratio of the 1-norms of `A` and `L`, so the smoothness is dimensionless and
//! does not depend on the node spacing.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::io::sci;

pub const DEFAULT_SMOOTHNESS: f64 = 0.01;
const CG_TOL: f64 = 1e-10;
const SPACING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightGrid {
    x_nodes: Vec<f64>,
    y_nodes: Vec<f64>,
    /// Row-major by y: `z[j * nx + i]` is the value at `(x_nodes[i], y_nodes[j])`.
    z: Vec<f64>,
    smoothness: f64,
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| if i + 1 == n { hi } else { lo + i as f64 * h }).collect()
}

fn check_axis(nodes: &[f64], field: &'static str) -> Result<f64> {
    if nodes.len() < 2 {
        return Err(Error::invalid(field, "need at least 2 nodes"));
    }
    if nodes.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(field, "nodes must be finite"));
    }
    let h = (nodes[nodes.len() - 1] - nodes[0]) / (nodes.len() - 1) as f64;
    if !(h > 0.0) {
        return Err(Error::invalid(field, "nodes must be increasing"));
    }
    for (k, w) in nodes.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > SPACING_TOL.max(1e-6 * h) {
            return Err(Error::invalid(
                field,
                format!("spacing is not uniform at node {}", k + 1),
            ));
        }
    }
    Ok(h)
}

impl HeightGrid {
    pub fn new(x_nodes: Vec<f64>, y_nodes: Vec<f64>, z: Vec<f64>, smoothness: f64) -> Result<Self> {
        check_axis(&x_nodes, "x_nodes")?;
        check_axis(&y_nodes, "y_nodes")?;
        if z.len() != x_nodes.len() * y_nodes.len() {
            return Err(Error::invalid(
                "z",
                format!("expected {} values, got {}", x_nodes.len() * y_nodes.len(), z.len()),
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("z", "grid values must be finite"));
        }
        Ok(Self {
            x_nodes,
            y_nodes,
            z,
            smoothness,
        })
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn y_nodes(&self) -> &[f64] {
        &self.y_nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn ny(&self) -> usize {
        self.y_nodes.len()
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.z[j * self.nx() + i]
    }

    fn hx(&self) -> f64 {
        (self.x_nodes[self.nx() - 1] - self.x_nodes[0]) / (self.nx() - 1) as f64
    }

    fn hy(&self) -> f64 {
        (self.y_nodes[self.ny() - 1] - self.y_nodes[0]) / (self.ny() - 1) as f64
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_nodes[0]
            && x <= self.x_nodes[self.nx() - 1]
            && y >= self.y_nodes[0]
            && y <= self.y_nodes[self.ny() - 1]
    }

    /// Cell indices and local coordinates in `[0, 1]`.
    fn locate(&self, x: f64, y: f64) -> Result<(usize, usize, f64, f64)> {
        if !self.contains(x, y) {
            return Err(Error::Extrapolation { x, y });
        }
        let cell = |v: f64, lo: f64, h: f64, n: usize| {
            let i = (((v - lo) / h).floor() as usize).min(n - 2);
            (i, ((v - lo) / h - i as f64).clamp(0.0, 1.0))
        };
        let (i, t) = cell(x, self.x_nodes[0], self.hx(), self.nx());
        let (j, u) = cell(y, self.y_nodes[0], self.hy(), self.ny());
        Ok((i, j, t, u))
    }

    /// Bilinear interpolation.
    pub fn height(&self, x: f64, y: f64) -> Result<f64> {
        let (i, j, t, u) = self.locate(x, y)?;
        let (z00, z10) = (self.node(i, j), self.node(i + 1, j));
        let (z01, z11) = (self.node(i, j + 1), self.node(i + 1, j + 1));
        Ok((1.0 - t) * (1.0 - u) * z00 + t * (1.0 - u) * z10 + (1.0 - t) * u * z01 + t * u * z11)
    }

    /// Derivative of the bilinear interpolant: node differences across the
    /// cell, blended linearly along the other axis.
    pub fn gradient(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        let (i, j, t, u) = self.locate(x, y)?;
        let (z00, z10) = (self.node(i, j), self.node(i + 1, j));
        let (z01, z11) = (self.node(i, j + 1), self.node(i + 1, j + 1));
        let gx = ((1.0 - u) * (z10 - z00) + u * (z11 - z01)) / self.hx();
        let gy = ((1.0 - t) * (z01 - z00) + t * (z11 - z10)) / self.hy();
        Ok((gx, gy))
    }

    /// `‖L z‖²` with the unscaled difference operator.
    pub fn roughness(&self) -> f64 {
        let mut sum = 0.0;
        for row in reg_rows(self.nx(), self.ny(), self.hx(), self.hy()) {
            let v: f64 = row.iter().map(|&(k, w)| w * self.z[k]).sum();
            sum += v * v;
        }
        sum
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let join = |v: &[f64]| v.iter().map(|&x| sci(x)).collect::<Vec<_>>().join(",");
        let mut out = format!(
            "# x_nodes,{}\n# y_nodes,{}\n# smoothness,{}\n",
            join(&self.x_nodes),
            join(&self.y_nodes),
            sci(self.smoothness)
        );
        for row in self.z.chunks(self.nx()) {
            out.push_str(&join(row));
            out.push('\n');
        }
        w.write_all(out.as_bytes())
            .map_err(|e| Error::io("<grid writer>", e))
    }

    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        const WHAT: &str = "grid csv";
        let parse_list = |s: &str| -> Result<Vec<f64>> {
            s.split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::format(WHAT, format!("`{f}` is not a number")))
                })
                .collect()
        };
        let (mut xs, mut ys, mut smooth) = (None, None, None);
        let mut z = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<grid reader>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let (key, vals) = rest
                    .trim()
                    .split_once(',')
                    .ok_or_else(|| Error::format(WHAT, format!("bad header line `{line}`")))?;
                match key {
                    "x_nodes" => xs = Some(parse_list(vals)?),
                    "y_nodes" => ys = Some(parse_list(vals)?),
                    "smoothness" => smooth = Some(parse_list(vals)?[0]),
                    _ => return Err(Error::format(WHAT, format!("unknown header `{key}`"))),
                }
            } else {
                let row = parse_list(line)?;
                let nx = xs.as_ref().map_or(0, |v: &Vec<f64>| v.len());
                if row.len() != nx {
                    return Err(Error::format(WHAT, format!("row has {} values, expected {nx}", row.len())));
                }
                z.extend(row);
            }
        }
        let xs = xs.ok_or_else(|| Error::format(WHAT, "missing x_nodes header"))?;
        let ys = ys.ok_or_else(|| Error::format(WHAT, "missing y_nodes header"))?;
        Self::new(xs, ys, z, smooth.unwrap_or(f64::NAN))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

pub fn grid_height(g: &HeightGrid, x: f64, y: f64) -> Result<f64> {
    g.height(x, y)
}

pub fn grid_gradient(g: &HeightGrid, x: f64, y: f64) -> Result<(f64, f64)> {
    g.gradient(x, y)
}

type SparseRow = Vec<(usize, f64)>;

fn reg_rows(nx: usize, ny: usize, hx: f64, hy: f64) -> Vec<SparseRow> {
    let id = |i: usize, j: usize| j * nx + i;
    let mut rows = Vec::new();
    let (cx, cy, cxy) = (1.0 / (hx * hx), 1.0 / (hy * hy), 1.0 / (hx * hy));
    for j in 0..ny {
        for i in 1..nx.saturating_sub(1) {
            rows.push(vec![(id(i - 1, j), cx), (id(i, j), -2.0 * cx), (id(i + 1, j), cx)]);
        }
    }
    for j in 1..ny.saturating_sub(1) {
        for i in 0..nx {
            rows.push(vec![(id(i, j - 1), cy), (id(i, j), -2.0 * cy), (id(i, j + 1), cy)]);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            rows.push(vec![
                (id(i, j), cxy),
                (id(i + 1, j), -cxy),
                (id(i, j + 1), -cxy),
                (id(i + 1, j + 1), cxy),
            ]);
        }
    }
    rows
}

fn first_diff_rows(nx: usize, ny: usize, hx: f64, hy: f64) -> Vec<SparseRow> {
    let id = |i: usize, j: usize| j * nx + i;
    let mut rows = Vec::new();
    for j in 0..ny {
        for i in 0..nx - 1 {
            rows.push(vec![(id(i, j), -1.0 / hx), (id(i + 1, j), 1.0 / hx)]);
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx {
            rows.push(vec![(id(i, j), -1.0 / hy), (id(i, j + 1), 1.0 / hy)]);
        }
    }
    rows
}

/// Largest absolute column sum.
fn norm1(rows: &[SparseRow], n: usize) -> f64 {
    let mut col = vec![0.0; n];
    for r in rows {
        for &(k, w) in r {
            col[k] += w.abs();
        }
    }
    col.into_iter().fold(0.0, f64::max)
}

/// Symmetric sparse matrix in compressed rows.
struct Csr {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    /// `Σ w_r · r rᵀ` over the weighted rows.
    fn gram(n: usize, blocks: &[(&[SparseRow], f64)]) -> Self {
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        for (rows, w) in blocks {
            for r in rows.iter() {
                for &(a, va) in r {
                    for &(b, vb) in r {
                        trip.push((a, b, w * va * vb));
                    }
                }
            }
        }
        trip.sort_unstable_by(|p, q| (p.0, p.1).cmp(&(q.0, q.1)));
        let mut ptr = vec![0; n + 1];
        let mut idx = Vec::new();
        let mut val: Vec<f64> = Vec::new();
        let mut last = None;
        for (a, b, v) in trip {
            if last == Some((a, b)) {
                *val.last_mut().unwrap() += v;
            } else {
                idx.push(b);
                val.push(v);
                ptr[a + 1] += 1;
                last = Some((a, b));
            }
        }
        for k in 0..n {
            ptr[k + 1] += ptr[k];
        }
        Self { ptr, idx, val }
    }

    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = (self.ptr[r]..self.ptr[r + 1])
                .map(|k| self.val[k] * x[self.idx[k]])
                .sum();
        }
    }

    fn diag(&self) -> Vec<f64> {
        (0..self.ptr.len() - 1)
            .map(|r| {
                (self.ptr[r]..self.ptr[r + 1])
                    .find(|&k| self.idx[k] == r)
                    .map_or(0.0, |k| self.val[k])
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients.
fn pcg(m: &Csr, b: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_d: Vec<f64> = m
        .diag()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_d).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        if dot(&r, &r).sqrt() <= CG_TOL * bnorm {
            return Ok(x);
        }
        m.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver("surface system is singular".into()));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        for k in 0..n {
            z[k] = r[k] * inv_d[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if dot(&r, &r).sqrt() <= CG_TOL * bnorm {
        Ok(x)
    } else {
        Err(Error::Solver(format!(
            "conjugate gradients did not converge in {max_iter} iterations"
        )))
    }
}

/// Least-squares plane through the points, or `None` when they are
/// collinear or coincident.
fn affine_fit(points: &[[f64; 3]]) -> Option<[f64; 3]> {
    let n = points.len() as f64;
    let (mx, my) = (
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    );
    let mz = points.iter().map(|p| p[2]).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy, dz) = (p[0] - mx, p[1] - my, p[2] - mz);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy).powi(2);
    if !(scale > 0.0) || det <= 1e-12 * scale {
        return None;
    }
    let b = (sxz * syy - syz * sxy) / det;
    let c = (syz * sxx - sxz * sxy) / det;
    Some([mz - b * mx - c * my, b, c])
}

/// Fits a height grid to scattered `(x, y, z)` points lying inside the grid.
///
/// When the points do not determine a plane (fewer than three, or all on a
/// line) a first-difference penalty is added so the solution is unique; a
/// single point then yields a constant grid.
pub fn fit_grid(
    points: &[[f64; 3]],
    x_nodes: &[f64],
    y_nodes: &[f64],
    smoothness: f64,
) -> Result<HeightGrid> {
    if points.is_empty() {
        return Err(Error::Precondition("fit_grid needs at least one point".into()));
    }
    if !(smoothness.is_finite() && smoothness > 0.0) {
        return Err(Error::invalid("smoothness", "must be > 0"));
    }
    let hx = check_axis(x_nodes, "x_nodes")?;
    let hy = check_axis(y_nodes, "y_nodes")?;
    let (nx, ny) = (x_nodes.len(), y_nodes.len());
    let n = nx * ny;
    let shell = HeightGrid {
        x_nodes: x_nodes.to_vec(),
        y_nodes: y_nodes.to_vec(),
        z: vec![0.0; n],
        smoothness,
    };

    // Fit deviations from a baseline plane (or the mean) so that the part of
    // the solution lying in the penalty's null space is exact.
    let plane = affine_fit(points);
    let base = |x: f64, y: f64| match plane {
        Some([a, b, c]) => a + b * x + c * y,
        None => points.iter().map(|p| p[2]).sum::<f64>() / points.len() as f64,
    };

    let mut data = Vec::with_capacity(points.len());
    let mut rhs = vec![0.0; n];
    for p in points {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("points", "coordinates must be finite"));
        }
        let (i, j, t, u) = shell.locate(p[0], p[1])?;
        let row = vec![
            (j * nx + i, (1.0 - t) * (1.0 - u)),
            (j * nx + i + 1, t * (1.0 - u)),
            ((j + 1) * nx + i, (1.0 - t) * u),
            ((j + 1) * nx + i + 1, t * u),
        ];
        let d = p[2] - base(p[0], p[1]);
        for &(k, w) in &row {
            rhs[k] += w * d;
        }
        data.push(row);
    }

    let reg = reg_rows(nx, ny, hx, hy);
    let na = norm1(&data, n);
    let w = smoothness * na / norm1(&reg, n);
    let extra;
    let mut blocks: Vec<(&[SparseRow], f64)> = vec![(&data, 1.0), (&reg, w * w)];
    if plane.is_none() {
        extra = first_diff_rows(nx, ny, hx, hy);
        let wf = smoothness * na / norm1(&extra, n);
        blocks.push((&extra, wf * wf));
    }
    let m = Csr::gram(n, &blocks);
    let dev = pcg(&m, &rhs, 10 * n)?;

    let mut z = vec![0.0; n];
    for j in 0..ny {
        for i in 0..nx {
            z[j * nx + i] = base(x_nodes[i], y_nodes[j]) + dev[j * nx + i];
        }
    }
    HeightGrid::new(x_nodes.to_vec(), y_nodes.to_vec(), z, smoothness)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn axes() -> (Vec<f64>, Vec<f64>) {
        (linspace(0.0, 0.2, 11), linspace(-0.1, 0.1, 9))
    }

    fn scatter(n: usize, seed: u64, f: impl Fn(f64, f64) -> f64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = rng.random_range(0.0..0.2);
                let y = rng.random_range(-0.1..0.1);
                [x, y, f(x, y)]
            })
            .collect()
    }

    #[test]
    fn plane_is_reproduced() {
        let (xs, ys) = axes();
        let plane = |x: f64, y: f64| 0.1 + 0.3 * x - 0.2 * y;
        let g = fit_grid(&scatter(40, 1, plane), &xs, &ys, 0.5).unwrap();
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                assert!((g.node(i, j) - plane(xs[i], ys[j])).abs() < 1e-9);
            }
        }
        let (gx, gy) = g.gradient(0.07, 0.01).unwrap();
        assert!((gx - 0.3).abs() < 1e-9 && (gy + 0.2).abs() < 1e-9);
    }

    #[test]
    fn single_point_gives_constant_grid() {
        let (xs, ys) = axes();
        let pts = vec![[0.05, 0.02, 0.123]; 3];
        let g = fit_grid(&pts, &xs, &ys, 0.01).unwrap();
        assert!(g.values().iter().all(|v| (v - 0.123).abs() < 1e-12));
        let (gx, gy) = g.gradient(0.1, 0.0).unwrap();
        assert!(gx.abs() < 1e-9 && gy.abs() < 1e-9);
    }

    #[test]
    fn collinear_points_still_solve() {
        let (xs, ys) = axes();
        let pts: Vec<[f64; 3]> = (0..5).map(|k| [0.04 * k as f64, 0.0, 0.01 * k as f64]).collect();
        let g = fit_grid(&pts, &xs, &ys, 0.01).unwrap();
        assert!(g.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_bad_input() {
        let (xs, ys) = axes();
        assert!(fit_grid(&[], &xs, &ys, 0.01).is_err());
        assert!(fit_grid(&[[0.1, 0.0, 0.0]], &xs, &ys, 0.0).is_err());
        assert!(matches!(
            fit_grid(&[[0.5, 0.0, 0.0]], &xs, &ys, 0.01),
            Err(Error::Extrapolation { .. })
        ));
        assert!(fit_grid(&[[0.1, 0.0, 0.0]], &[0.0, 0.1, 0.3], &ys, 0.01).is_err());
    }

    #[test]
    fn flat_grid_has_zero_gradient() {
        let (xs, ys) = axes();
        let g = HeightGrid::new(xs.clone(), ys.clone(), vec![0.2; 99], 0.01).unwrap();
        for &(x, y) in &[(0.0, -0.1), (0.2, 0.1), (0.1234, 0.0456)] {
            assert_eq!(g.gradient(x, y).unwrap(), (0.0, 0.0));
        }
        assert!(matches!(g.height(0.3, 0.0), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (xs, ys) = axes();
        let f = |x: f64, y: f64| 0.05 * (20.0 * x).sin() * (15.0 * y).cos() + 0.02 * x * y;
        let g = fit_grid(&scatter(300, 2, f), &xs, &ys, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 100 {
            let x = rng.random_range(0.001..0.199);
            let y = rng.random_range(-0.099..0.099);
            // Skip points whose stencil would straddle a cell boundary, where
            // the bilinear derivative jumps.
            let on_edge = |v: f64, lo: f64, step: f64| {
                let r = (v - lo) / step;
                (r - r.round()).abs() * step < 2.0 * h
            };
            if on_edge(x, 0.0, 0.02) || on_edge(y, -0.1, 0.025) {
                continue;
            }
            let (gx, gy) = g.gradient(x, y).unwrap();
            let fx = (g.height(x + h, y).unwrap() - g.height(x - h, y).unwrap()) / (2.0 * h);
            let fy = (g.height(x, y + h).unwrap() - g.height(x, y - h).unwrap()) / (2.0 * h);
            let scale = gx.abs().max(gy.abs()).max(1e-3);
            assert!((gx - fx).abs() <= 1e-4 * scale, "{gx} {fx}");
            assert!((gy - fy).abs() <= 1e-4 * scale, "{gy} {fy}");
            checked += 1;
        }
    }

    #[test]
    fn error_vanishes_with_smoothness() {
        let (xs, ys) = (linspace(0.0, 0.2, 21), linspace(-0.1, 0.1, 21));
        let f = |x: f64, y: f64| 0.02 * (10.0 * x).sin() + 0.01 * (12.0 * y).cos();
        let pts: Vec<[f64; 3]> = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| [x, y, f(x, y)]))
            .collect();
        let err = |s: f64| {
            let g = fit_grid(&pts, &xs, &ys, s).unwrap();
            let mut e: f64 = 0.0;
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    e = e.max((g.node(i, j) - f(xs[i], ys[j])).abs());
                }
            }
            e
        };
        let (e1, e2, e3) = (err(1.0), err(0.01), err(1e-4));
        assert!(e1 > e2 && e2 > e3, "{e1} {e2} {e3}");
        assert!(e3 < 1e-6);
    }

    #[test]
    fn csv_round_trip() {
        let (xs, ys) = axes();
        let g = fit_grid(&scatter(30, 4, |x, y| x * x - y), &xs, &ys, 0.01).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# x_nodes,"));
        let back = HeightGrid::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.nx(), g.nx());
        for (a, b) in g.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-12));
        }
        assert!(HeightGrid::read_csv("# x_nodes,0,1\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn translation_equivariance(
            seed in 0u64..1000,
            dx in -1.0f64..1.0,
            dy in -1.0f64..1.0,
            dz in -1.0f64..1.0,
        ) {
            let (xs, ys) = axes();
            let pts = scatter(25, seed, |x, y| (30.0 * x).sin() * 0.01 + y * y);
            let g = fit_grid(&pts, &xs, &ys, 0.05).unwrap();
            let moved: Vec<[f64; 3]> = pts.iter().map(|p| [p[0] + dx, p[1] + dy, p[2] + dz]).collect();
            let mx: Vec<f64> = xs.iter().map(|v| v + dx).collect();
            let my: Vec<f64> = ys.iter().map(|v| v + dy).collect();
            let h = fit_grid(&moved, &mx, &my, 0.05).unwrap();
            for (a, b) in g.values().iter().zip(h.values()) {
                prop_assert!((a + dz - b).abs() < 1e-7, "{} {}", a + dz, b);
            }
        }

        #[test]
        fn roughness_decreases_with_smoothness(seed in 0u64..1000, s in 0.001f64..1.0) {
            let (xs, ys) = axes();
            let pts = scatter(30, seed, |x, y| (25.0 * x).sin() * 0.02 + (20.0 * y).cos() * 0.01);
            let a = fit_grid(&pts, &xs, &ys, s).unwrap().roughness();
            let b = fit_grid(&pts, &xs, &ys, 2.0 * s).unwrap().roughness();
            prop_assert!(b <= a * (1.0 + 1e-6) + 1e-12, "{a} {b}");
        }
    }
}
