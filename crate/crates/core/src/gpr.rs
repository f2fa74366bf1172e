//! Gaussian-process regression over the `(x, y)` plane with a squared
//! exponential kernel and independent length scales.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beyond this many length scales from every training input a prediction
/// falls back to the prior.
pub const EXTRAPOLATION_RADIUS: f64 = 3.0;
const JITTER_START: f64 = 1e-12;
const JITTER_MAX: f64 = 1e-6;
const AUTO_SUBSET: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub signal_var: f64,
    pub length_scales: [f64; 2],
    pub noise_var: f64,
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.signal_var) {
            return Err(Error::invalid("signal_var", "must be > 0"));
        }
        if !self.length_scales.iter().all(|&l| ok(l)) {
            return Err(Error::invalid("length_scales", "must be > 0"));
        }
        if !ok(self.noise_var) {
            return Err(Error::invalid("noise_var", "must be > 0"));
        }
        Ok(())
    }

    /// `ℓ = 2·spacing` on both axes, `σ_f²` = target variance and
    /// `σ_n² = 0.01·σ_f²`.
    pub fn from_spacing(targets: &[f64], spacing: f64) -> Self {
        let var = variance(targets).max(f64::MIN_POSITIVE.sqrt());
        Self {
            signal_var: var,
            length_scales: [2.0 * spacing; 2],
            noise_var: 0.01 * var,
        }
    }

    fn to_log(self) -> [f64; 4] {
        [
            self.signal_var.ln(),
            self.length_scales[0].ln(),
            self.length_scales[1].ln(),
            self.noise_var.ln(),
        ]
    }

    fn from_log(p: &[f64; 4]) -> Self {
        Self {
            signal_var: p[0].exp(),
            length_scales: [p[1].exp(), p[2].exp()],
            noise_var: p[3].exp(),
        }
    }

    fn kernel(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        self.signal_var * (-0.5 * self.scaled_dist2(a, b)).exp()
    }

    fn scaled_dist2(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = (a[0] - b[0]) / self.length_scales[0];
        let dy = (a[1] - b[1]) / self.length_scales[1];
        dx * dx + dy * dy
    }
}

/// How hyperparameters are chosen in [`gpr_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HyperChoice {
    Fixed(Hyperparams),
    /// [`Hyperparams::from_spacing`] with the given spacing.
    Spacing(f64),
    /// Maximise the log marginal likelihood.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprSettings {
    pub hyper: HyperChoice,
    /// Constant prior mean; the target mean when `None`.
    pub prior_mean: Option<f64>,
}

impl Default for GprSettings {
    fn default() -> Self {
        Self {
            hyper: HyperChoice::Auto,
            prior_mean: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    /// Latent-function variance (observation noise excluded).
    pub variance: f64,
    /// True when the point is far from every training input and the prior
    /// was returned.
    pub extrapolated: bool,
}

#[derive(Debug, Clone)]
pub struct GprModel {
    inputs: Vec<[f64; 2]>,
    targets: Vec<f64>,
    hyper: Hyperparams,
    prior_mean: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Serializable description from which a model is rebuilt exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprSpec {
    pub hyperparams: Hyperparams,
    pub prior_mean: f64,
    pub inputs: Vec<[f64; 2]>,
    pub targets: Vec<f64>,
}

fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn kernel_matrix(inputs: &[[f64; 2]], h: &Hyperparams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = h.kernel(inputs[i], inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += h.noise_var;
    }
    k
}

/// Cholesky factor of `K + σ_n² I`, adding diagonal jitter from
/// `1e-12·σ_f²` up to `1e-6·σ_f²` if needed.
fn factor(inputs: &[[f64; 2]], h: &Hyperparams) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let k = kernel_matrix(inputs, h);
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * h.signal_var;
        let mut kj = k.clone();
        for i in 0..inputs.len() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        rel *= 10.0;
    }
    Err(Error::NotPositiveDefinite {
        jitter: JITTER_MAX * h.signal_var,
    })
}

fn log_marginal(inputs: &[[f64; 2]], centred: &DVector<f64>, h: &Hyperparams) -> f64 {
    let Ok((chol, _)) = factor(inputs, h) else {
        return f64::NEG_INFINITY;
    };
    let alpha = chol.solve(centred);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let n = inputs.len() as f64;
    -0.5 * centred.dot(&alpha) - 0.5 * logdet - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Nelder-Mead minimisation of `f` from `x0` with initial simplex step
/// `step` on every axis.
pub(crate) fn nelder_mead<const N: usize>(
    f: impl Fn(&[f64; N]) -> f64,
    x0: [f64; N],
    step: f64,
    max_evals: usize,
    tol: f64,
) -> ([f64; N], f64) {
    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((x0, f(&x0)));
    for i in 0..N {
        let mut p = x0;
        p[i] += step;
        simplex.push((p, f(&p)));
    }
    let mut evals = N + 1;
    let lerp = |a: &[f64; N], b: &[f64; N], t: f64| {
        let mut out = [0.0; N];
        for k in 0..N {
            out[k] = a[k] + t * (b[k] - a[k]);
        }
        out
    };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[N].1);
        if (worst - best).abs() <= tol * (best.abs() + tol) {
            break;
        }
        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for k in 0..N {
                centroid[k] += p[k] / N as f64;
            }
        }
        let xw = simplex[N].0;
        let xr = lerp(&centroid, &xw, -1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &xw, -2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[N].1 {
                let xc = lerp(&centroid, &xr, 0.5);
                (xc, f(&xc))
            } else {
                let xc = lerp(&centroid, &xw, 0.5);
                (xc, f(&xc))
            };
            evals += 1;
            if fc < simplex[N].1.min(fr) {
                simplex[N] = (xc, fc);
            } else {
                let x0 = simplex[0].0;
                for s in simplex.iter_mut().skip(1) {
                    s.0 = lerp(&x0, &s.0, 0.5);
                    s.1 = f(&s.0);
                }
                evals += N;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// Median distance from each input to its nearest neighbour.
fn typical_spacing(inputs: &[[f64; 2]]) -> f64 {
    let mut nn: Vec<f64> = inputs
        .iter()
        .enumerate()
        .map(|(i, a)| {
            inputs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt())
                .filter(|&d| d > 0.0)
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if nn.is_empty() {
        return 1.0;
    }
    nn.sort_by(f64::total_cmp);
    nn[nn.len() / 2]
}

/// Every k-th point so that at most `max` remain.
fn subset<T: Copy>(v: &[T], max: usize) -> Vec<T> {
    if v.len() <= max {
        return v.to_vec();
    }
    (0..max).map(|i| v[i * v.len() / max]).collect()
}

/// Maximises the log marginal likelihood over `(σ_f², ℓ_x, ℓ_y, σ_n²)` with a
/// coarse log-grid followed by Nelder-Mead from the best grid points. Large
/// training sets are thinned to a deterministic subset first.
pub fn optimise_hyperparams(inputs: &[[f64; 2]], targets: &[f64], prior_mean: f64) -> Hyperparams {
    let xs = subset(inputs, AUTO_SUBSET);
    let ys = subset(targets, AUTO_SUBSET);
    let centred = DVector::from_iterator(ys.len(), ys.iter().map(|y| y - prior_mean));
    let var = (centred.dot(&centred) / ys.len() as f64).max(1e-300);
    let d = typical_spacing(inputs);

    // Keep the search inside a sensible box so degenerate optima (ℓ → 0 or
    // σ_n² → 0) cannot be reached.
    let lo = [var.ln() - 7.0, (0.25 * d).ln(), (0.25 * d).ln(), (1e-6 * var).ln()];
    let hi = [var.ln() + 7.0, (100.0 * d).ln(), (100.0 * d).ln(), (2.0 * var).ln()];
    let objective = |p: &[f64; 4]| {
        let mut q = *p;
        let mut penalty = 0.0;
        for k in 0..4 {
            let c = q[k].clamp(lo[k], hi[k]);
            penalty += (q[k] - c).powi(2) * 1e3;
            q[k] = c;
        }
        -log_marginal(&xs, &centred, &Hyperparams::from_log(&q)) + penalty
    };

    let mut starts = Vec::new();
    for &l in &[1.0, 2.0, 4.0] {
        for &nr in &[1e-3, 1e-2, 1e-1] {
            let h = Hyperparams {
                signal_var: var,
                length_scales: [l * d; 2],
                noise_var: nr * var,
            };
            let p = h.to_log();
            starts.push((p, objective(&p)));
        }
    }
    starts.sort_by(|a, b| a.1.total_cmp(&b.1));
    let best = starts
        .iter()
        .take(2)
        .map(|(p, _)| nelder_mead(objective, *p, 0.5, 400, 1e-9))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("two starts");
    let mut p = best.0;
    for k in 0..4 {
        p[k] = p[k].clamp(lo[k], hi[k]);
    }
    Hyperparams::from_log(&p)
}

/// Fits a GP to `targets` observed at `inputs`.
pub fn gpr_fit(inputs: &[[f64; 2]], targets: &[f64], settings: &GprSettings) -> Result<GprModel> {
    if inputs.is_empty() {
        return Err(Error::Precondition("gpr_fit needs at least one training point".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::invalid(
            "targets",
            format!("{} targets for {} inputs", targets.len(), inputs.len()),
        ));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::invalid("targets", "training data must be finite"));
    }
    let prior_mean = settings
        .prior_mean
        .unwrap_or_else(|| targets.iter().sum::<f64>() / targets.len() as f64);
    let hyper = match settings.hyper {
        HyperChoice::Fixed(h) => h,
        HyperChoice::Spacing(s) => {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid("spacing", "must be > 0"));
            }
            Hyperparams::from_spacing(targets, s)
        }
        HyperChoice::Auto if inputs.len() < 3 => Hyperparams::from_spacing(targets, typical_spacing(inputs)),
        HyperChoice::Auto => optimise_hyperparams(inputs, targets, prior_mean),
    };
    GprModel::new(inputs.to_vec(), targets.to_vec(), hyper, prior_mean)
}

impl GprModel {
    pub fn new(inputs: Vec<[f64; 2]>, targets: Vec<f64>, hyper: Hyperparams, prior_mean: f64) -> Result<Self> {
        hyper.validate()?;
        let (chol, jitter) = factor(&inputs, &hyper)?;
        let centred = DVector::from_iterator(targets.len(), targets.iter().map(|y| y - prior_mean));
        let alpha = chol.solve(&centred);
        Ok(Self {
            inputs,
            targets,
            hyper,
            prior_mean,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn from_spec(spec: &GprSpec) -> Result<Self> {
        Self::new(spec.inputs.clone(), spec.targets.clone(), spec.hyperparams, spec.prior_mean)
    }

    pub fn spec(&self) -> GprSpec {
        GprSpec {
            hyperparams: self.hyper,
            prior_mean: self.prior_mean,
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        let centred = DVector::from_iterator(self.targets.len(), self.targets.iter().map(|y| y - self.prior_mean));
        log_marginal(&self.inputs, &centred, &self.hyper)
    }

    /// Kernel column, or `None` when every input is beyond the extrapolation
    /// radius.
    fn k_star(&self, p: [f64; 2]) -> Option<DVector<f64>> {
        let r2 = EXTRAPOLATION_RADIUS * EXTRAPOLATION_RADIUS;
        let mut near = false;
        let k = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|&q| {
                let d2 = self.hyper.scaled_dist2(p, q);
                near |= d2 <= r2;
                self.hyper.signal_var * (-0.5 * d2).exp()
            }),
        );
        near.then_some(k)
    }

    fn prior(&self) -> Prediction {
        Prediction {
            mean: self.prior_mean,
            variance: self.hyper.signal_var,
            extrapolated: true,
        }
    }

    /// Posterior mean only; O(n).
    pub fn predict_mean(&self, x: f64, y: f64) -> f64 {
        match self.k_star([x, y]) {
            Some(k) => self.prior_mean + k.dot(&self.alpha),
            None => self.prior_mean,
        }
    }

    /// Posterior mean and variance; O(n²).
    pub fn predict(&self, x: f64, y: f64) -> Prediction {
        let Some(k) = self.k_star([x, y]) else {
            return self.prior();
        };
        let mean = self.prior_mean + k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .expect("cholesky factor has a positive diagonal");
        let variance = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        Prediction {
            mean,
            variance,
            extrapolated: false,
        }
    }
}

pub fn gpr_predict(m: &GprModel, x: f64, y: f64) -> Prediction {
    m.predict(x, y)
}
