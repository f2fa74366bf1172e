//! Dense convex QP solver for small problems:
//! minimise `½ uᵀHu + gᵀu` subject to `lb ≤ u ≤ ub` and `A u ≤ b`.
//!
//! Primal active-set method. Constraints are indexed uniformly: `0..n` are
//! the lower bounds, `n..2n` the upper bounds and `2n..2n+m` the rows of `A`.
//! Infinite bounds never enter the working set. A phase-1 LP in `(u, t)`
//! finds a feasible start; if its optimum leaves `t > 0` the problem is
//! reported infeasible together with the phase-1 multipliers as certificate.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITER: usize = 100;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
    Unbounded,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
            QpStatus::Unbounded => "unbounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    /// Constraint indices in the final working set.
    pub active_set: Vec<usize>,
    /// One multiplier per constraint index; zero off the working set.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
    /// For infeasible problems: nonnegative weights on the constraints whose
    /// combination proves infeasibility.
    pub certificate: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖Hu + g + Cᵀμ‖∞`
    pub stationarity: f64,
    /// Largest constraint violation.
    pub primal_feasibility: f64,
    /// Largest negative multiplier magnitude.
    pub dual_feasibility: f64,
    /// `max |μ_i · slack_i|`
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementarity)
    }
}

impl QpProblem {
    /// Problem with box bounds only.
    pub fn boxed(h: DMatrix<f64>, g: DVector<f64>, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            lb,
            ub,
            a: DMatrix::zeros(0, n),
            b: DVector::zeros(0),
        }
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn constraint_count(&self) -> usize {
        2 * self.n() + self.m()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.h.shape() != (n, n) || self.lb.len() != n || self.ub.len() != n {
            return Err(Error::invalid("h", "dimensions of H, g, lb, ub disagree"));
        }
        if self.a.ncols() != n || self.a.nrows() != self.m() {
            return Err(Error::invalid("a", "dimensions of A and b disagree"));
        }
        let scale = self.h.amax().max(f64::MIN_POSITIVE);
        if (&self.h - self.h.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid("h", "must be symmetric"));
        }
        if n > 0 {
            let ev = SymmetricEigen::new(self.h.clone()).eigenvalues;
            if ev.min() < -1e-10 * scale {
                return Err(Error::invalid("h", "must be positive semidefinite"));
            }
        }
        for i in 0..n {
            if self.lb[i].is_nan() || self.ub[i].is_nan() || self.lb[i] > self.ub[i] {
                return Err(Error::invalid("lb", format!("lb[{i}] > ub[{i}]")));
            }
        }
        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !finite(&self.g) || !self.h.iter().all(|x| x.is_finite()) || !self.a.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("g", "entries must be finite"));
        }
        if self.b.iter().any(|x| x.is_nan()) {
            return Err(Error::invalid("b", "entries must not be NaN"));
        }
        Ok(())
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g.dot(u)
    }

    /// Row `i` of the uniform constraint set as `(a_i, b_i)`.
    pub fn constraint(&self, i: usize) -> (DVector<f64>, f64) {
        let n = self.n();
        if i < n {
            let mut a = DVector::zeros(n);
            a[i] = -1.0;
            (a, -self.lb[i])
        } else if i < 2 * n {
            let mut a = DVector::zeros(n);
            a[i - n] = 1.0;
            (a, self.ub[i - n])
        } else {
            (self.a.row(i - 2 * n).transpose(), self.b[i - 2 * n])
        }
    }

    fn enabled(&self, i: usize) -> bool {
        self.constraint(i).1.is_finite()
    }

    /// `b_i − a_iᵀu`, positive when satisfied.
    pub fn slack(&self, i: usize, u: &DVector<f64>) -> f64 {
        let (a, b) = self.constraint(i);
        b - a.dot(u)
    }

    pub fn max_violation(&self, u: &DVector<f64>) -> f64 {
        (0..self.constraint_count())
            .filter(|&i| self.enabled(i))
            .map(|i| (-self.slack(i, u)).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Text dump, one block per matrix, for reproducing a cycle offline.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "qp {} {}", self.n(), self.m());
        let mat = |s: &mut String, name: &str, m: &DMatrix<f64>| {
            let _ = writeln!(s, "{name}");
            for r in 0..m.nrows() {
                let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.17e}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        };
        let vec = |s: &mut String, name: &str, v: &DVector<f64>| {
            let row: Vec<String> = v.iter().map(|v| format!("{v:.17e}")).collect();
            let _ = writeln!(s, "{name}\n{}", row.join(" "));
        };
        mat(&mut s, "H", &self.h);
        vec(&mut s, "g", &self.g);
        vec(&mut s, "lb", &self.lb);
        vec(&mut s, "ub", &self.ub);
        mat(&mut s, "A", &self.a);
        vec(&mut s, "b", &self.b);
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        const WHAT: &str = "qp dump";
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let head = lines.next().ok_or_else(|| Error::format(WHAT, "empty input"))?;
        let dims: Vec<&str> = head.split_whitespace().collect();
        let (n, m) = match dims.as_slice() {
            ["qp", n, m] => (
                n.parse::<usize>().map_err(|_| Error::format(WHAT, "bad n"))?,
                m.parse::<usize>().map_err(|_| Error::format(WHAT, "bad m"))?,
            ),
            _ => return Err(Error::format(WHAT, "expected `qp <n> <m>` header")),
        };
        let mut block = |name: &str, rows: usize, cols: usize| -> Result<Vec<f64>> {
            if lines.next() != Some(name) {
                return Err(Error::format(WHAT, format!("expected block `{name}`")));
            }
            let mut out = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                // Empty vectors are written as a blank line, which the filter drops.
                if cols == 0 {
                    continue;
                }
                let line = lines
                    .next()
                    .ok_or_else(|| Error::format(WHAT, format!("block `{name}` is truncated")))?;
                let vals: Vec<f64> = line
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| Error::format(WHAT, format!("`{v}` is not a number"))))
                    .collect::<Result<_>>()?;
                if vals.len() != cols {
                    return Err(Error::format(WHAT, format!("block `{name}` has a row of wrong length")));
                }
                out.extend(vals);
            }
            Ok(out)
        };
        let h = DMatrix::from_row_slice(n, n, &block("H", n, n)?);
        let g = DVector::from_vec(block("g", 1, n)?);
        let lb = DVector::from_vec(block("lb", 1, n)?);
        let ub = DVector::from_vec(block("ub", 1, n)?);
        let a = DMatrix::from_row_slice(m, n, &block("A", m, n)?);
        let b = DVector::from_vec(block("b", 1, m)?);
        Ok(Self { h, g, lb, ub, a, b })
    }
}

fn finite_amax(v: &DVector<f64>) -> f64 {
    v.iter().filter(|x| x.is_finite()).fold(0.0, |m, x| m.max(x.abs()))
}

/// Orthonormal basis of the null space of the rows `rows`.
fn null_space(rows: &[DVector<f64>], n: usize) -> DMatrix<f64> {
    if rows.is_empty() {
        return DMatrix::identity(n, n);
    }
    let aw = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    let gram = &aw * aw.transpose();
    let proj = match gram.clone().cholesky() {
        Some(ch) => DMatrix::identity(n, n) - aw.transpose() * ch.solve(&aw),
        None => return DMatrix::zeros(n, 0),
    };
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| eig.eigenvalues[k] > 0.5)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

enum Step {
    /// Full Newton step onto the working-set minimiser.
    Newton(DVector<f64>),
    /// Direction of non-increasing curvature along which the objective
    /// decreases without bound until a constraint blocks.
    Ray(DVector<f64>),
    Zero,
}

struct Work<'a> {
    p: &'a QpProblem,
    hnorm: f64,
}

impl Work<'_> {
    fn step(&self, x: &DVector<f64>, w: &[usize]) -> Step {
        let n = self.p.n();
        let rows: Vec<DVector<f64>> = w.iter().map(|&i| self.p.constraint(i).0).collect();
        let z = null_space(&rows, n);
        if z.ncols() == 0 {
            return Step::Zero;
        }
        let grad = &self.p.h * x + &self.p.g;
        let rg = z.transpose() * &grad;
        let gscale = self.hnorm * x.amax() + self.p.g.amax() + 1.0;
        if rg.amax() <= 1e-14 * gscale {
            return Step::Zero;
        }
        let rh = z.transpose() * &self.p.h * &z;
        let eig = SymmetricEigen::new(rh);
        let curv_tol = 1e-12 * self.hnorm.max(1e-300);
        let mut newton = DVector::zeros(z.ncols());
        let mut ray = DVector::zeros(z.ncols());
        let mut has_ray = false;
        for k in 0..z.ncols() {
            let q = eig.eigenvectors.column(k);
            let c = q.dot(&rg);
            if eig.eigenvalues[k] > curv_tol {
                newton -= q * (c / eig.eigenvalues[k]);
            } else if c.abs() > 1e-14 * gscale {
                ray -= q * c;
                has_ray = true;
            }
        }
        if has_ray {
            return Step::Ray(&z * ray);
        }
        let p = &z * newton;
        if p.amax() <= 1e-15 * (1.0 + x.amax()) {
            Step::Zero
        } else {
            Step::Newton(p)
        }
    }

    /// Least-squares multipliers for the working set:
    /// `Hx + g + Σ μ_i a_i = 0`.
    fn multipliers(&self, x: &DVector<f64>, w: &[usize]) -> DVector<f64> {
        if w.is_empty() {
            return DVector::zeros(0);
        }
        let n = self.p.n();
        let aw = DMatrix::from_fn(w.len(), n, |r, c| self.p.constraint(w[r]).0[c]);
        let grad = &self.p.h * x + &self.p.g;
        let rhs = -(&aw * grad);
        let gram = &aw * aw.transpose();
        gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(w.len()))
    }

    /// Runs the active-set iteration from a feasible `x`.
    fn solve(
        &self,
        mut x: DVector<f64>,
        mut w: Vec<usize>,
        max_iter: usize,
    ) -> (DVector<f64>, Vec<usize>, DVector<f64>, QpStatus, usize) {
        let total = self.p.constraint_count();
        let rows: Vec<Option<(DVector<f64>, f64)>> = (0..total)
            .map(|i| self.p.enabled(i).then(|| self.p.constraint(i)))
            .collect();
        for it in 0..max_iter {
            let (p, is_ray) = match self.step(&x, &w) {
                Step::Newton(p) => (p, false),
                Step::Ray(p) => (p, true),
                Step::Zero => {
                    let mu = self.multipliers(&x, &w);
                    let scale = self.hnorm * x.amax() + self.p.g.amax() + 1.0;
                    let (worst, _) = mu.iter().enumerate().fold((None, -1e-12 * scale), |acc, (k, &v)| {
                        if v < acc.1 {
                            (Some(k), v)
                        } else {
                            acc
                        }
                    });
                    match worst {
                        Some(k) => {
                            w.remove(k);
                            continue;
                        }
                        None => {
                            let mut full = DVector::zeros(total);
                            for (k, &i) in w.iter().enumerate() {
                                full[i] = mu[k].max(0.0);
                            }
                            return (x, w, full, QpStatus::Optimal, it);
                        }
                    }
                }
            };
            let mut alpha = if is_ray { f64::INFINITY } else { 1.0 };
            let mut block = None;
            let pscale = p.amax();
            for (i, row) in rows.iter().enumerate() {
                let Some((a, b)) = row else { continue };
                if w.contains(&i) {
                    continue;
                }
                let ap = a.dot(&p);
                if ap > 1e-13 * pscale * a.amax() {
                    let slack = (b - a.dot(&x)).max(0.0);
                    let t = slack / ap;
                    if t < alpha {
                        alpha = t;
                        block = Some(i);
                    }
                }
            }
            if alpha.is_infinite() {
                return (x, w, DVector::zeros(total), QpStatus::Unbounded, it);
            }
            x += &p * alpha;
            if let Some(i) = block {
                w.push(i);
            }
        }
        let full = DVector::zeros(total);
        (x, w, full, QpStatus::MaxIter, max_iter)
    }
}

/// Phase 1: minimise `t` over `lb ≤ u ≤ ub`, `A u − t ≤ b`, `t ≥ 0` starting
/// from `x0` clamped into the box.
fn phase1(p: &QpProblem, x0: &DVector<f64>) -> (DVector<f64>, Option<DVector<f64>>, usize) {
    let (n, m) = (p.n(), p.m());
    let mut u = x0.clone();
    for i in 0..n {
        u[i] = u[i].clamp(p.lb[i], p.ub[i]);
        if !u[i].is_finite() {
            u[i] = if p.lb[i].is_finite() { p.lb[i] } else if p.ub[i].is_finite() { p.ub[i] } else { 0.0 };
        }
    }
    let viol = (0..m)
        .map(|r| p.a.row(r).transpose().dot(&u) - p.b[r])
        .fold(0.0, f64::max);
    if viol <= FEAS_TOL * (1.0 + finite_amax(&p.b)) {
        return (u, None, 0);
    }
    let mut a = DMatrix::zeros(m, n + 1);
    a.view_mut((0, 0), (m, n)).copy_from(&p.a);
    for r in 0..m {
        a[(r, n)] = -1.0;
    }
    let mut g = DVector::zeros(n + 1);
    g[n] = 1.0;
    let mut lb = DVector::zeros(n + 1);
    let mut ub = DVector::from_element(n + 1, f64::INFINITY);
    lb.rows_mut(0, n).copy_from(&p.lb);
    ub.rows_mut(0, n).copy_from(&p.ub);
    let lp = QpProblem {
        h: DMatrix::zeros(n + 1, n + 1),
        g,
        lb,
        ub,
        a,
        b: p.b.clone(),
    };
    let mut x = DVector::zeros(n + 1);
    x.rows_mut(0, n).copy_from(&u);
    x[n] = viol;
    let work = Work { p: &lp, hnorm: 0.0 };
    let (x, _, mu, status, iters) = work.solve(x, Vec::new(), 4 * MAX_ITER);
    let t = x[n];
    let u = x.rows(0, n).into_owned();
    if status == QpStatus::Optimal && t <= FEAS_TOL * (1.0 + finite_amax(&p.b)) {
        return (u, None, iters);
    }
    // Map the LP multipliers back onto the original indexing, dropping t ≥ 0.
    let mut cert = DVector::zeros(p.constraint_count());
    for i in 0..n {
        cert[i] = mu[i];
        cert[n + i] = mu[n + 1 + i];
    }
    for r in 0..m {
        cert[2 * n + r] = mu[2 * (n + 1) + r];
    }
    (u, Some(cert), iters)
}

/// Solver with warm-start memory; one instance per control loop.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    warm: Option<(DVector<f64>, Vec<usize>)>,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    /// Solves `p`, starting from the previous solution and working set when
    /// they are still feasible and consistent.
    pub fn solve(&mut self, p: &QpProblem) -> Result<QpSolution> {
        p.validate()?;
        let start = self.warm.take().and_then(|(x, w)| {
            if x.len() != p.n() || w.iter().any(|&i| i >= p.constraint_count() || !p.enabled(i)) {
                return None;
            }
            let tol = FEAS_TOL * (1.0 + x.amax() + finite_amax(&p.b));
            if p.max_violation(&x) > tol {
                return None;
            }
            let w: Vec<usize> = w.into_iter().filter(|&i| p.slack(i, &x).abs() <= tol).collect();
            let rows: Vec<DVector<f64>> = w.iter().map(|&i| p.constraint(i).0).collect();
            if !rows.is_empty() {
                let aw = DMatrix::from_fn(rows.len(), p.n(), |r, c| rows[r][c]);
                if (&aw * aw.transpose()).cholesky().is_none() {
                    return Some((x, Vec::new()));
                }
            }
            Some((x, w))
        });
        let sol = solve_from(p, start)?;
        if sol.status == QpStatus::Optimal {
            self.warm = Some((sol.u.clone(), sol.active_set.clone()));
        }
        Ok(sol)
    }
}

fn solve_from(p: &QpProblem, start: Option<(DVector<f64>, Vec<usize>)>) -> Result<QpSolution> {
    let n = p.n();
    let total = p.constraint_count();
    let (x0, w0, p1_iters) = match start {
        Some((x, w)) => (x, w, 0),
        None => {
            let (u, cert, iters) = phase1(p, &DVector::zeros(n));
            if let Some(cert) = cert {
                return Ok(QpSolution {
                    objective: p.objective(&u),
                    u,
                    status: QpStatus::Infeasible,
                    active_set: Vec::new(),
                    multipliers: DVector::zeros(total),
                    iterations: iters,
                    certificate: Some(cert),
                });
            }
            (u, Vec::new(), iters)
        }
    };
    let work = Work {
        p,
        hnorm: p.h.amax(),
    };
    let (u, mut w, multipliers, status, iters) = work.solve(x0, w0, MAX_ITER);
    w.sort_unstable();
    Ok(QpSolution {
        objective: p.objective(&u),
        u,
        status,
        active_set: w,
        multipliers,
        iterations: iters + p1_iters,
        certificate: None,
    })
}

/// Cold-start solve.
pub fn qp_solve(p: &QpProblem) -> Result<QpSolution> {
    p.validate()?;
    solve_from(p, None)
}

/// Lawson-Hanson nonnegative least squares: `min ‖C x − d‖` s.t. `x ≥ 0`.
pub fn nnls(c: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    let k = c.ncols();
    let mut x = DVector::zeros(k);
    let mut passive = vec![false; k];
    let tol = 1e-12 * (c.amax() * d.amax()).max(f64::MIN_POSITIVE);
    let ls = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..k).filter(|&j| passive[j]).collect();
        let mut out = DVector::zeros(k);
        if idx.is_empty() {
            return out;
        }
        let cp = DMatrix::from_fn(c.nrows(), idx.len(), |r, j| c[(r, idx[j])]);
        let svd = cp.svd(true, true);
        if let Ok(s) = svd.solve(d, 1e-14) {
            for (j, &i) in idx.iter().enumerate() {
                out[i] = s[j];
            }
        }
        out
    };
    for _ in 0..(3 * k + 10) {
        let wgrad = c.transpose() * (d - c * &x);
        let cand = (0..k)
            .filter(|&j| !passive[j] && wgrad[j] > tol)
            .max_by(|&a, &b| wgrad[a].total_cmp(&wgrad[b]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let s = ls(&passive);
            if (0..k).filter(|&i| passive[i]).all(|i| s[i] > 0.0) {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in 0..k {
                if passive[i] && s[i] <= 0.0 {
                    alpha = alpha.min(x[i] / (x[i] - s[i]));
                }
            }
            x = &x + (&s - &x) * alpha;
            for i in 0..k {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}

/// KKT residuals at `u`, estimating multipliers for the nearly active
/// constraints by nonnegative least squares.
pub fn kkt_check(p: &QpProblem, u: &DVector<f64>) -> KktReport {
    let n = p.n();
    let grad = &p.h * u + &p.g;
    let scale = 1e-7 * (1.0 + u.amax());
    let near: Vec<usize> = (0..p.constraint_count())
        .filter(|&i| p.enabled(i) && p.slack(i, u).abs() <= scale * (1.0 + p.constraint(i).1.abs()))
        .collect();
    let mut mu = DVector::zeros(p.constraint_count());
    if !near.is_empty() {
        let c = DMatrix::from_fn(n, near.len(), |r, j| p.constraint(near[j]).0[r]);
        let s = nnls(&c, &(-&grad));
        for (j, &i) in near.iter().enumerate() {
            mu[i] = s[j];
        }
    }
    kkt_report(p, u, &mu)
}

/// KKT residuals at `u` for the given multipliers.
pub fn kkt_report(p: &QpProblem, u: &DVector<f64>, mu: &DVector<f64>) -> KktReport {
    let mut stat = &p.h * u + &p.g;
    let (mut dual, mut comp): (f64, f64) = (0.0, 0.0);
    for i in 0..p.constraint_count() {
        if mu[i] == 0.0 {
            continue;
        }
        let (a, _) = p.constraint(i);
        stat += a * mu[i];
        dual = dual.max(-mu[i]);
        comp = comp.max((mu[i] * p.slack(i, u)).abs());
    }
    KktReport {
        stationarity: stat.amax(),
        primal_feasibility: p.max_violation(u),
        dual_feasibility: dual,
        complementarity: comp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn box3(h: DMatrix<f64>, g: [f64; 3], lo: f64, hi: f64) -> QpProblem {
        QpProblem::boxed(h, DVector::from_row_slice(&g), DVector::from_element(3, lo), DVector::from_element(3, hi))
    }

    fn random_problem(rng: &mut ChaCha8Rng, m: usize, rank: usize) -> QpProblem {
        let n = 3;
        let mm = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
        let h = mm.transpose() * mm;
        let g = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let lb = DVector::from_fn(n, |_, _| rng.random_range(-2.0..-0.5));
        let ub = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
        // Rows through a random interior point keep the problem feasible.
        let centre = DVector::from_fn(n, |i, _| rng.random_range(lb[i] * 0.5..ub[i] * 0.5));
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(m, |r, _| a.row(r).transpose().dot(&centre) + rng.random_range(0.0..0.5));
        QpProblem { h, g, lb, ub, a, b }
    }

    /// Minimum over every subset of at most three constraints of the
    /// equality-constrained stationary point, keeping feasible ones.
    fn enumeration_oracle(p: &QpProblem) -> f64 {
        let n = p.n();
        let total = p.constraint_count();
        let mut best = f64::INFINITY;
        let mut consider = |set: &[usize]| {
            let k = set.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
            for i in 0..n {
                rhs[i] = -p.g[i];
            }
            for (r, &c) in set.iter().enumerate() {
                let (a, b) = p.constraint(c);
                for j in 0..n {
                    kkt[(n + r, j)] = a[j];
                    kkt[(j, n + r)] = a[j];
                }
                rhs[n + r] = b;
            }
            let svd = kkt.clone().svd(true, true);
            let Ok(sol) = svd.solve(&rhs, 1e-12) else { return };
            if (&kkt * &sol - &rhs).amax() > 1e-8 {
                return;
            }
            let u = sol.rows(0, n).into_owned();
            if p.max_violation(&u) <= 1e-9 {
                best = best.min(p.objective(&u));
            }
        };
        consider(&[]);
        for i in 0..total {
            consider(&[i]);
            for j in i + 1..total {
                consider(&[i, j]);
                for k in j + 1..total {
                    consider(&[i, j, k]);
                }
            }
        }
        best
    }

    #[test]
    fn interior_optimum() {
        let p = box3(DMatrix::identity(3, 3), [0.0; 3], -1.0, 1.0);
        let s = qp_solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.u.amax() < 1e-15);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn clipped_optimum() {
        let p = box3(DMatrix::identity(3, 3), [-3.0, 0.0, 0.0], -1.0, 1.0);
        let s = qp_solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.u[0] - 1.0).abs() < 1e-12 && s.u[1].abs() < 1e-12 && s.u[2].abs() < 1e-12);
        assert_eq!(s.active_set, vec![3]);
        assert!((s.multipliers[3] - 2.0).abs() < 1e-12);
        assert!(kkt_check(&p, &s.u).max() < 1e-7);
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for k in 0..1000 {
            let m = k % 9;
            let rank = if k % 5 == 0 { 2 } else { 3 };
            let p = random_problem(&mut rng, m, rank);
            let s = qp_solve(&p).unwrap();
            assert_eq!(s.status, QpStatus::Optimal, "instance {k}\n{}", p.dump());
            let oracle = enumeration_oracle(&p);
            assert!(
                (s.objective - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
                "instance {k}: {} vs {oracle}",
                s.objective
            );
            let rep = kkt_report(&p, &s.u, &s.multipliers);
            assert!(rep.max() < 1e-7, "instance {k}: {rep:?}");
            assert!(kkt_check(&p, &s.u).max() < 1e-7, "instance {k}");
        }
    }

    #[test]
    fn grid_never_beats_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = random_problem(&mut rng, 4, 3);
            let s = qp_solve(&p).unwrap();
            let steps = 20;
            for i in 0..=steps {
                for j in 0..=steps {
                    for k in 0..=steps {
                        let f = |d: usize, t: usize| p.lb[d] + (p.ub[d] - p.lb[d]) * t as f64 / steps as f64;
                        let u = DVector::from_row_slice(&[f(0, i), f(1, j), f(2, k)]);
                        if p.max_violation(&u) == 0.0 {
                            assert!(p.objective(&u) >= s.objective - 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn infeasible_is_reported_with_certificate() {
        // u0 ≥ 1 through A, but u0 ≤ 0.5 by the box.
        let mut p = box3(DMatrix::identity(3, 3), [0.0; 3], -1.0, 0.5);
        p.a = DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 0.0]);
        p.b = DVector::from_row_slice(&[-1.0]);
        let s = qp_solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        let cert = s.certificate.unwrap();
        assert!(cert.iter().all(|&v| v >= -1e-12));
        // Σ y_i a_i = 0 and Σ y_i b_i < 0 proves infeasibility.
        let mut comb = DVector::zeros(3);
        let mut rhs = 0.0;
        for i in 0..p.constraint_count() {
            if cert[i] != 0.0 {
                let (a, b) = p.constraint(i);
                comb += a * cert[i];
                rhs += b * cert[i];
            }
        }
        assert!(comb.amax() < 1e-9 && rhs < 0.0, "{comb} {rhs}");
    }

    #[test]
    fn psd_hessian_uses_rays() {
        // Linear objective in u1 and u2: optimum at the box corner.
        let mut h = DMatrix::zeros(3, 3);
        h[(0, 0)] = 1.0;
        let p = box3(h, [0.5, -1.0, 1.0], -1.0, 1.0);
        let s = qp_solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.u[0] + 0.5).abs() < 1e-12 && (s.u[1] - 1.0).abs() < 1e-12 && (s.u[2] + 1.0).abs() < 1e-12);
        let mut free = QpProblem::boxed(DMatrix::zeros(1, 1), DVector::from_element(1, 1.0), DVector::from_element(1, f64::NEG_INFINITY), DVector::from_element(1, f64::INFINITY));
        assert_eq!(qp_solve(&free).unwrap().status, QpStatus::Unbounded);
        free.lb[0] = -3.0;
        assert_eq!(qp_solve(&free).unwrap().u[0], -3.0);
    }

    #[test]
    fn rejects_invalid_problems() {
        let mut p = box3(DMatrix::identity(3, 3), [0.0; 3], -1.0, 1.0);
        p.lb[1] = 2.0;
        assert!(qp_solve(&p).is_err());
        let q = box3(-DMatrix::identity(3, 3), [0.0; 3], -1.0, 1.0);
        assert!(qp_solve(&q).is_err());
        let mut r = box3(DMatrix::identity(3, 3), [0.0; 3], -1.0, 1.0);
        r.h[(0, 1)] = 0.5;
        assert!(qp_solve(&r).is_err());
    }

    #[test]
    fn kkt_check_flags_bad_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_problem(&mut rng, 3, 3);
        let s = qp_solve(&p).unwrap();
        assert!(kkt_check(&p, &s.u).max() < 1e-7);
        // An interior point where the gradient is clearly nonzero.
        let mut u = DVector::zeros(3);
        let mut found = false;
        for _ in 0..1000 {
            u = DVector::from_fn(3, |i, _| rng.random_range(p.lb[i] * 0.5..p.ub[i] * 0.5));
            if p.max_violation(&u) == 0.0 && (0..p.m()).all(|r| p.slack(6 + r, &u) > 1e-3) && (&p.h * &u + &p.g).amax() > 1e-2 {
                found = true;
                break;
            }
        }
        assert!(found);
        assert!(kkt_check(&p, &u).stationarity > 1e-3);
        let w = DVector::from_row_slice(&[p.ub[0] + 0.1, 0.0, 0.0]);
        let rep = kkt_check(&box3(DMatrix::identity(3, 3), [0.0; 3], p.lb[0], p.ub[0]), &w);
        assert!((rep.primal_feasibility - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dump_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = random_problem(&mut rng, 4, 3);
        p.ub[2] = f64::INFINITY;
        let back = QpProblem::parse(&p.dump()).unwrap();
        assert_eq!(back, p);
        let q = box3(DMatrix::identity(3, 3), [1.0, 2.0, 3.0], -1.0, 1.0);
        assert_eq!(QpProblem::parse(&q.dump()).unwrap(), q);
        assert!(QpProblem::parse("qp 2 0\nH\n1 0\n").is_err());
    }

    #[test]
    fn max_iter_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_problem(&mut rng, 8, 3);
        let work = Work { p: &p, hnorm: p.h.amax() };
        let (x, _, _) = phase1(&p, &DVector::zeros(3));
        let (_, _, _, status, _) = work.solve(x, Vec::new(), 0);
        assert_eq!(status, QpStatus::MaxIter);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn repeat_and_warm_start_agree(seed in 0u64..100_000, m in 0usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, m, 3);
            let a = qp_solve(&p).unwrap();
            let b = qp_solve(&p).unwrap();
            prop_assert_eq!(&a.u, &b.u);
            let mut solver = QpSolver::new();
            let c = solver.solve(&p).unwrap();
            let d = solver.solve(&p).unwrap();
            prop_assert!((&c.u - &d.u).amax() < 1e-9);
            prop_assert!((c.objective - d.objective).abs() < 1e-9);
        }

        #[test]
        fn beats_every_feasible_box_vertex(seed in 0u64..100_000, m in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, m, 3);
            let s = qp_solve(&p).unwrap();
            for mask in 0..8 {
                let u = DVector::from_fn(3, |i, _| if mask >> i & 1 == 1 { p.ub[i] } else { p.lb[i] });
                if p.max_violation(&u) <= 0.0 {
                    prop_assert!(s.objective <= p.objective(&u) + 1e-12);
                }
            }
        }
    }
}
