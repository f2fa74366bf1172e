use serde::{Deserialize, Serialize};

use super::plan::Disturbance;
use crate::control::{ImpedanceGains, Vec3};
use crate::error::{Error, Result};
use crate::model::{hc_force, ContactState};
use crate::phantom::Phantom;

/// Probe state. `a` is the acceleration of the last step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub t: f64,
    pub x: Vec3,
    pub v: Vec3,
    pub a: Vec3,
    /// Control cycle that owns the current step; reported on divergence.
    pub cycle: usize,
}

/// Ground-truth contact at the probe tip.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tissue {
    /// Lifted surface height, m.
    pub surface: f64,
    pub lift: f64,
    pub penetration: f64,
    pub rate: f64,
    /// Upward force on the probe, N. Never negative.
    pub force: f64,
}

impl Tissue {
    pub fn in_contact(&self) -> bool {
        self.penetration >= 0.0
    }
}

pub fn tissue(ph: &Phantom, dist: &Disturbance, t: f64, x: Vec3, v: Vec3) -> Tissue {
    let (lift, lift_rate) = dist.profile(t);
    let surface = ph.sample(x[0], x[1]).surface + lift;
    let (gx, gy) = ph.surface_gradient(x[0], x[1]);
    let penetration = surface - x[2];
    let rate = gx * v[0] + gy * v[1] + lift_rate - v[2];
    let force = hc_force(&ph.params_at(x[0], x[1]), ContactState::new(penetration, rate)).max(0.0);
    Tissue {
        surface,
        lift,
        penetration,
        rate,
        force,
    }
}

/// Impedance setpoint for one physics step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInput {
    pub target: Vec3,
    pub target_velocity: Vec3,
    pub gains: ImpedanceGains,
    /// Kinematic z velocity; overrides the z impedance when set.
    pub z_velocity: Option<f64>,
}

/// What happened during one step, for energy bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub tissue: Tissue,
    pub xd_tilde: Vec3,
    /// Mean relative velocity over the step.
    pub xd_tilde_mid: Vec3,
}

/// Semi-implicit Euler step of `Λẍ̃ = F_tissue − Dẋ̃ − Kx̃` with the target
/// moving at constant velocity over the step.
pub fn step_plant(
    s: &PlantState,
    input: &PlantInput,
    ph: &Phantom,
    dist: &Disturbance,
    dt: f64,
) -> Result<(PlantState, StepRecord)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    let tis = tissue(ph, dist, s.t, s.x, s.v);
    let g = &input.gains;
    let mut next = *s;
    let mut xd_tilde = [0.0; 3];
    let mut mid = [0.0; 3];
    for i in 0..3 {
        let x_tilde = s.x[i] - input.target[i];
        xd_tilde[i] = s.v[i] - input.target_velocity[i];
        let f = if i == 2 { tis.force } else { 0.0 };
        let (a, v) = match input.z_velocity {
            Some(vz) if i == 2 => ((vz - s.v[i]) / dt, vz),
            _ => {
                let a = (f - g.d[i] * xd_tilde[i] - g.k[i] * x_tilde) / g.lambda[i];
                (a, s.v[i] + a * dt)
            }
        };
        next.a[i] = a;
        next.v[i] = v;
        next.x[i] = s.x[i] + v * dt;
        mid[i] = 0.5 * (xd_tilde[i] + v - input.target_velocity[i]);
    }
    next.t = s.t + dt;
    check_divergence(ph, &next)?;
    Ok((
        next,
        StepRecord {
            tissue: tis,
            xd_tilde,
            xd_tilde_mid: mid,
        },
    ))
}

fn check_divergence(ph: &Phantom, s: &PlantState) -> Result<()> {
    let b = ph.bounds();
    let limit = 10.0 * b.width().max(b.height());
    let c = [0.5 * (b.x_min + b.x_max), 0.5 * (b.y_min + b.y_max), ph.config().surface.height];
    let r = ((s.x[0] - c[0]).powi(2) + (s.x[1] - c[1]).powi(2) + (s.x[2] - c[2]).powi(2)).sqrt();
    if !(r <= limit) || s.v.iter().any(|v| !v.is_finite()) {
        return Err(Error::Blowup { cycle: s.cycle });
    }
    Ok(())
}

/// Cumulative energy flows of the rendered impedance, J. Storage uses the
/// discrete spring energy `½ K x̃ (x̃ − dt ẋ̃)`, for which the integrator
/// balances exactly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBook {
    /// Dissipated by the rendered damper.
    pub damper: f64,
    /// Work done by the tissue on the probe.
    pub tissue: f64,
    /// Work injected by stiffness changes.
    pub stiffness: f64,
    /// Storage change from target velocity switches.
    pub frame: f64,
}

/// Kinetic and spring storage over the axes in `axes`.
pub fn storage(g: &ImpedanceGains, x_tilde: Vec3, xd_tilde: Vec3, dt: f64, axes: [bool; 3]) -> (f64, f64) {
    let mut kin = 0.0;
    let mut spring = 0.0;
    for i in (0..3).filter(|&i| axes[i]) {
        kin += 0.5 * g.lambda[i] * xd_tilde[i] * xd_tilde[i];
        spring += 0.5 * g.k[i] * x_tilde[i] * (x_tilde[i] - dt * xd_tilde[i]);
    }
    (kin, spring)
}

impl EnergyBook {
    pub fn record(&mut self, g: &ImpedanceGains, r: &StepRecord, dt: f64, axes: [bool; 3]) {
        for i in (0..3).filter(|&i| axes[i]) {
            self.damper += g.d[i] * r.xd_tilde[i] * r.xd_tilde_mid[i] * dt;
        }
        if axes[2] {
            self.tissue += r.tissue.force * r.xd_tilde_mid[2] * dt;
        }
    }

    /// `Δ(kinetic + spring) + damper − tissue − stiffness − frame` between two
    /// snapshots; zero up to rounding.
    pub fn residual(from: (&EnergyBook, f64), to: (&EnergyBook, f64)) -> f64 {
        let (a, ea) = from;
        let (b, eb) = to;
        (eb - ea) + (b.damper - a.damper) - (b.tissue - a.tissue) - (b.stiffness - a.stiffness) - (b.frame - a.frame)
    }
}
