//! Contact force laws for viscoelastic tissue.
//!
//! Penetration `ε` is the depth of the probe tip below the undeformed surface;
//! negative values mean the probe is not touching the tissue and every law
//! returns exactly zero there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hunt-Crossley material point: `F = κ ε^β + λ ε^β ε̇`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViscoelasticParams {
    /// Elasticity, N·m^-β.
    pub kappa: f64,
    /// Viscosity, N·s·m^-(β+1).
    pub lambda: f64,
    /// Contact-geometry exponent.
    pub beta: f64,
}

pub const BETA_RANGE: (f64, f64) = (1.0, 1.5);

impl ViscoelasticParams {
    pub fn new(kappa: f64, lambda: f64, beta: f64) -> Result<Self> {
        let p = Self {
            kappa,
            lambda,
            beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::invalid("kappa", format!("{} must be finite and >= 0", self.kappa)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda", format!("{} must be finite and >= 0", self.lambda)));
        }
        validate_beta(self.beta)
    }
}

pub(crate) fn validate_beta(beta: f64) -> Result<()> {
    if !(BETA_RANGE.0..=BETA_RANGE.1).contains(&beta) {
        return Err(Error::invalid(
            "beta",
            format!("{beta} outside [{}, {}]", BETA_RANGE.0, BETA_RANGE.1),
        ));
    }
    Ok(())
}

/// Penetration and its rate at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactState {
    /// m
    pub penetration: f64,
    /// m/s
    pub rate: f64,
}

impl ContactState {
    pub fn new(penetration: f64, rate: f64) -> Self {
        Self { penetration, rate }
    }

    pub fn in_contact(&self) -> bool {
        self.penetration >= 0.0
    }
}

/// Hunt-Crossley normal force.
pub fn hc_force(p: &ViscoelasticParams, c: ContactState) -> f64 {
    if c.penetration <= 0.0 {
        return 0.0;
    }
    let eb = c.penetration.powf(p.beta);
    p.kappa * eb + p.lambda * eb * c.rate
}

/// Kelvin-Voigt spring-damper normal force.
pub fn kv_force(k: f64, d: f64, c: ContactState) -> f64 {
    if c.penetration < 0.0 {
        return 0.0;
    }
    k * c.penetration + d * c.rate
}

/// Anything that maps a contact state to a normal force.
pub trait ContactLaw {
    fn force(&self, c: ContactState) -> f64;
}

impl ContactLaw for ViscoelasticParams {
    fn force(&self, c: ContactState) -> f64 {
        hc_force(self, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KelvinVoigt {
    pub stiffness: f64,
    pub damping: f64,
}

impl ContactLaw for KelvinVoigt {
    fn force(&self, c: ContactState) -> f64 {
        kv_force(self.stiffness, self.damping, c)
    }
}

/// Result of integrating a force law around a closed contact cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hysteresis {
    /// `∮ F dε`, J. Energy absorbed by the tissue over the loop.
    pub energy: f64,
    /// Largest force magnitude seen on a sample adjacent to a contact
    /// transition. A law whose loop closes gives a value that shrinks with
    /// the sampling step; a law with a jump at contact does not.
    pub contact_jump: f64,
}

impl Hysteresis {
    pub fn integration_tolerance(samples: usize) -> f64 {
        1e-9 * samples as f64
    }
}

/// Trapezoidal `∮ F dε` over a sampled trajectory that starts and ends out of
/// contact.
pub fn hysteresis_energy<L: ContactLaw + ?Sized>(
    law: &L,
    trajectory: &[ContactState],
) -> Result<Hysteresis> {
    let (first, last) = match (trajectory.first(), trajectory.last()) {
        (Some(f), Some(l)) if trajectory.len() >= 2 => (f, l),
        _ => return Err(Error::Precondition("trajectory needs at least two samples".into())),
    };
    if first.penetration > 0.0 || last.penetration > 0.0 {
        return Err(Error::Precondition(
            "trajectory must start and end out of contact (penetration <= 0)".into(),
        ));
    }

    let forces: Vec<f64> = trajectory.iter().map(|c| law.force(*c)).collect();
    let mut energy = 0.0;
    let mut contact_jump: f64 = 0.0;
    for i in 1..trajectory.len() {
        let (a, b) = (trajectory[i - 1], trajectory[i]);
        energy += 0.5 * (forces[i - 1] + forces[i]) * (b.penetration - a.penetration);
        if (a.penetration > 0.0) != (b.penetration > 0.0) {
            contact_jump = contact_jump.max(forces[i - 1].abs()).max(forces[i].abs());
        }
    }
    Ok(Hysteresis {
        energy,
        contact_jump,
    })
}
