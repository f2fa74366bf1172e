use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Diagonal Cartesian impedance for the three translational axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceGains {
    /// Desired inertia, kg.
    pub lambda: Vec3,
    /// Damping, N·s/m.
    pub d: Vec3,
    /// Stiffness, N/m.
    pub k: Vec3,
}

impl ImpedanceGains {
    /// Gains with damping from [`damping_design`].
    pub fn designed(k: Vec3, lambda: Vec3, zeta: f64) -> Self {
        Self {
            lambda,
            d: damping_design(k, lambda, zeta),
            k,
        }
    }

    pub fn validate(&self, k_min: Vec3, k_max: Vec3) -> Result<()> {
        for i in 0..3 {
            if !(self.lambda[i] > 0.0 && self.d[i] >= 0.0 && self.k[i] > 0.0) {
                return Err(Error::invalid("gains", format!("axis {i}: diagonals must be positive")));
            }
            if self.k[i] < k_min[i] || self.k[i] > k_max[i] {
                return Err(Error::invalid(
                    "gains",
                    format!("axis {i}: stiffness {} outside [{}, {}]", self.k[i], k_min[i], k_max[i]),
                ));
            }
        }
        Ok(())
    }
}

/// `D_ii = 2 ζ √(K_ii Λ_ii)`.
pub fn damping_design(k: Vec3, lambda: Vec3, zeta: f64) -> Vec3 {
    [0, 1, 2].map(|i| 2.0 * zeta * (k[i] * lambda[i]).sqrt())
}

/// `Λ ẍ̃ + D ẋ̃ + K x̃`.
pub fn interaction_force(g: &ImpedanceGains, x_tilde: Vec3, xd_tilde: Vec3, xdd_tilde: Vec3) -> Vec3 {
    [0, 1, 2].map(|i| g.lambda[i] * xdd_tilde[i] + g.d[i] * xd_tilde[i] + g.k[i] * x_tilde[i])
}

/// `aᵀ diag(k) b`
pub(crate) fn quad(a: Vec3, k: Vec3, b: Vec3) -> f64 {
    a[0] * k[0] * b[0] + a[1] * k[1] * b[1] + a[2] * k[2] * b[2]
}
