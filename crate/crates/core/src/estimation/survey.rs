use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_hc, refine_surface, FitResult};
use super::protocol::{
    generate_approach, generate_palpation_stream, noise_rng, PalpationProtocol, ProbeSample,
};
use crate::error::{Error, Result};
use crate::model::hc_force;
use crate::model::ContactState;
use crate::phantom::{Bounds, Phantom};

/// Settings for locating the surface before each palpation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurveyOptions {
    /// Force above which the probe counts as touching, N.
    pub contact_threshold: f64,
    /// Consecutive samples above the threshold needed to accept contact.
    pub debounce: usize,
    /// Starting height above the surface, m.
    pub clearance: f64,
    /// Descent speed, m/s.
    pub approach_speed: f64,
    /// Refine the onset height by minimising the fit residual.
    pub refine_surface: bool,
}

impl Default for SurveyOptions {
    fn default() -> Self {
        Self {
            contact_threshold: 0.1,
            debounce: 5,
            clearance: 0.002,
            approach_speed: 0.005,
            refine_surface: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeFlag {
    Ok,
    LambdaUnidentifiable,
    NoContact,
    FitFailed,
}

impl NodeFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeFlag::Ok => "ok",
            NodeFlag::LambdaUnidentifiable => "lambda_unidentifiable",
            NodeFlag::NoContact => "no_contact",
            NodeFlag::FitFailed => "fit_failed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ok" => NodeFlag::Ok,
            "lambda_unidentifiable" => NodeFlag::LambdaUnidentifiable,
            "no_contact" => NodeFlag::NoContact,
            "fit_failed" => NodeFlag::FitFailed,
            _ => return None,
        })
    }

    /// Whether the node's κ estimate can be used downstream.
    pub fn usable(self) -> bool {
        matches!(self, NodeFlag::Ok | NodeFlag::LambdaUnidentifiable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub x: f64,
    pub y: f64,
    pub surface_z: f64,
    pub fit: Option<FitResult>,
    pub flag: NodeFlag,
}

/// Node coordinates along one axis: as many nodes as fit at `spacing`,
/// centred in `[lo, hi]`.
pub fn axis_nodes(lo: f64, hi: f64, spacing: f64) -> Vec<f64> {
    let width = hi - lo;
    let n = ((width / spacing + 1e-9).floor() as usize).max(1);
    let offset = (width - (n - 1) as f64 * spacing) / 2.0;
    (0..n).map(|i| lo + offset + i as f64 * spacing).collect()
}

pub fn grid_nodes(bounds: &Bounds, spacing: f64) -> Vec<(f64, f64)> {
    let xs = axis_nodes(bounds.x_min, bounds.x_max, spacing);
    let ys = axis_nodes(bounds.y_min, bounds.y_max, spacing);
    ys.iter()
        .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
        .collect()
}

/// Height of the first sample that starts a run of `debounce` samples above
/// `threshold`.
pub fn detect_onset(samples: &[ProbeSample], threshold: f64, debounce: usize) -> Option<f64> {
    let need = debounce.max(1);
    let mut run = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.f_sensor > threshold {
            run += 1;
            if run == need {
                return Some(samples[i + 1 - need].z_ee);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// Approach, onset detection and palpation at one node. Never fails: problems
/// are reported through the flag.
pub fn estimate_node(
    ph: &Phantom,
    x: f64,
    y: f64,
    proto: &PalpationProtocol,
    opts: &SurveyOptions,
    seed: u64,
    stream: u64,
) -> PointEstimate {
    let failed = |flag| PointEstimate {
        x,
        y,
        surface_z: f64::NAN,
        fit: None,
        flag,
    };
    // The approach and the palpation draw noise from separate streams.
    let mut rng = noise_rng(seed, 2 * stream + 1);
    let depth = proto.contact_bias + proto.amplitude;
    let approach = match generate_approach(
        ph,
        x,
        y,
        opts.clearance,
        opts.approach_speed,
        depth,
        proto.sample_rate,
        proto.noise_sigma,
        &mut rng,
    ) {
        Ok(a) => a,
        Err(_) => return failed(NodeFlag::FitFailed),
    };
    let Some(z_on) = detect_onset(&approach, opts.contact_threshold, opts.debounce) else {
        return failed(NodeFlag::NoContact);
    };
    let samples = match generate_palpation_stream(ph, x, y, proto, seed, 2 * stream) {
        Ok(s) => s,
        Err(_) => return failed(NodeFlag::FitFailed),
    };
    let beta = ph.beta();
    let m_i = ph.indenter_mass();
    let fitted = if opts.refine_surface {
        refine_surface(&samples, z_on - 0.002, z_on + 0.003, beta, m_i, 1e-8)
    } else {
        fit_hc(&samples, z_on, beta, m_i).map(|f| (z_on, f))
    };
    match fitted {
        Ok((s, fit)) => PointEstimate {
            x,
            y,
            surface_z: s,
            fit: Some(fit),
            flag: if fit.lambda_identifiable {
                NodeFlag::Ok
            } else {
                NodeFlag::LambdaUnidentifiable
            },
        },
        Err(_) => PointEstimate {
            surface_z: z_on,
            ..failed(NodeFlag::FitFailed)
        },
    }
}

/// The palpation record `estimate_node` fits for the node with index
/// `stream`.
pub fn node_palpation(
    ph: &Phantom,
    x: f64,
    y: f64,
    proto: &PalpationProtocol,
    seed: u64,
    stream: u64,
) -> Result<Vec<ProbeSample>> {
    generate_palpation_stream(ph, x, y, proto, seed, 2 * stream)
}

/// Palpates every node of a regular grid over the phantom workspace.
/// Rows are ordered by y, then x. Nodes are processed in parallel but each
/// one draws from its own noise stream, so results do not depend on thread
/// scheduling.
pub fn survey_grid(
    ph: &Phantom,
    spacing: f64,
    proto: &PalpationProtocol,
    seed: u64,
) -> Result<Vec<PointEstimate>> {
    survey_grid_with(ph, spacing, proto, seed, &SurveyOptions::default())
}

pub fn survey_grid_with(
    ph: &Phantom,
    spacing: f64,
    proto: &PalpationProtocol,
    seed: u64,
    opts: &SurveyOptions,
) -> Result<Vec<PointEstimate>> {
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::invalid("spacing", "must be > 0"));
    }
    proto.validate()?;
    let nodes = grid_nodes(&ph.bounds(), spacing);
    Ok(nodes
        .par_iter()
        .enumerate()
        .map(|(i, &(x, y))| estimate_node(ph, x, y, proto, opts, seed, i as u64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationResidual {
    pub duration: f64,
    /// RMS gap between the fitted model and the noiseless tissue force over
    /// one held-out palpation cycle, N.
    pub residual: f64,
    /// `‖r‖/√n` on the training samples, N.
    pub in_sample_residual: f64,
    pub kappa: f64,
    pub lambda: f64,
}

/// Fits palpations of increasing length at `(x, y)` and scores each fit
/// against the true force on a held-out cycle. The true surface height is
/// used so that only the duration varies.
pub fn residual_vs_duration(
    ph: &Phantom,
    x: f64,
    y: f64,
    proto: &PalpationProtocol,
    durations: &[f64],
    seed: u64,
) -> Result<Vec<DurationResidual>> {
    if durations.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("durations", "must be strictly increasing"));
    }
    let truth = ph.query(x, y)?;
    let params = ph.params_at(x, y);
    let (beta, m_i) = (ph.beta(), ph.indenter_mass());

    let validation = PalpationProtocol {
        duration: 1.0 / proto.frequency,
        noise_sigma: 0.0,
        ..*proto
    };
    let held_out = generate_palpation_stream(ph, x, y, &validation, 0, 0)?;

    durations
        .iter()
        .map(|&d| {
            let p = PalpationProtocol { duration: d, ..*proto };
            let data = generate_palpation_stream(ph, x, y, &p, seed, 0)?;
            let fit = fit_hc(&data, truth.surface, beta, m_i)?;
            let sq: f64 = held_out
                .iter()
                .map(|s| {
                    let c = ContactState::new(truth.surface - s.z_ee, -s.zd_ee);
                    let e = hc_force(&fit.params, c) - hc_force(&params, c);
                    e * e
                })
                .sum();
            Ok(DurationResidual {
                duration: d,
                residual: (sq / held_out.len() as f64).sqrt(),
                in_sample_residual: fit.residual,
                kappa: fit.params.kappa,
                lambda: fit.params.lambda,
            })
        })
        .collect()
}

/// Relative κ bias caused by fitting with indenter mass `m_I + delta_m`
/// instead of the true value, on noiseless data at `(x, y)`.
pub fn mass_bias(
    ph: &Phantom,
    x: f64,
    y: f64,
    proto: &PalpationProtocol,
    delta_m: f64,
) -> Result<f64> {
    let truth = ph.query(x, y)?;
    let clean = PalpationProtocol {
        noise_sigma: 0.0,
        ..*proto
    };
    let data = generate_palpation_stream(ph, x, y, &clean, 0, 0)?;
    let fit = fit_hc(&data, truth.surface, ph.beta(), ph.indenter_mass() + delta_m)?;
    Ok(fit.params.kappa / truth.kappa - 1.0)
}
