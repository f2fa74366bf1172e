use serde::{Deserialize, Serialize};

use super::gains::{quad, Vec3};
use crate::error::{Error, Result};

const GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TankConfig {
    /// Initial energy, J.
    pub t0: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Power bound, W (≤ 0).
    pub eta: f64,
    /// Once the floor is hit, stiffness stays at its minimum until the
    /// energy climbs this far above `t_min`, J.
    #[serde(default = "default_rearm")]
    pub rearm: f64,
}

fn default_rearm() -> f64 {
    0.05
}

impl Default for TankConfig {
    fn default() -> Self {
        Self {
            t0: 1.0,
            t_min: 0.05,
            t_max: 2.0,
            eta: -0.5,
            rearm: default_rearm(),
        }
    }
}

impl TankConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min >= 0.0 && self.t_min < self.t_max) {
            return Err(Error::invalid("tank.t_min", "need 0 <= t_min < t_max"));
        }
        if !(self.eta <= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("tank.eta", "must be <= 0"));
        }
        if !((2.0 * self.t0).sqrt() > GUARD) {
            return Err(Error::invalid("tank.t0", "tank must start with positive energy"));
        }
        if !(self.rearm >= 0.0 && self.t_min + self.rearm < self.t_max) {
            return Err(Error::invalid("tank.rearm", "need 0 <= rearm < t_max - t_min"));
        }
        Ok(())
    }
}

/// Energy tank with state `x_t`, energy `T = ½ x_t²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TankState {
    pub x_t: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub eta: f64,
    /// 1 while storage of dissipated energy is enabled.
    pub sigma: f64,
    /// Set when the energy reaches `t_min`; cleared at `t_min + rearm`.
    pub floored: bool,
    pub rearm: f64,
}

impl TankState {
    pub fn new(cfg: &TankConfig) -> Self {
        let mut t = Self {
            x_t: (2.0 * cfg.t0).sqrt(),
            t_min: cfg.t_min,
            t_max: cfg.t_max,
            eta: cfg.eta,
            sigma: 1.0,
            floored: false,
            rearm: cfg.rearm,
        };
        t.sigma = t.sigma_for_energy();
        t.floored = t.energy() <= t.t_min;
        t
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.x_t * self.x_t
    }

    fn sigma_for_energy(&self) -> f64 {
        if self.energy() >= self.t_max {
            0.0
        } else {
            1.0
        }
    }

    /// Whether stiffness may rise above its minimum this cycle.
    pub fn can_extract(&self) -> bool {
        !self.floored && self.energy() > self.t_min
    }
}

/// `Ṫ = σ ẋ̃ᵀDẋ̃ + x̃ᵀ(K − K_min)ẋ̃`, the tank power when stiffness `k` is
/// applied. The variable part only counts while the tank is above its floor.
pub fn tank_power(tank: &TankState, k: Vec3, k_min: Vec3, d: Vec3, x_tilde: Vec3, xd_tilde: Vec3) -> f64 {
    let kv = [0, 1, 2].map(|i| k[i] - k_min[i]);
    let stored = tank.sigma * quad(xd_tilde, d, xd_tilde);
    let exchanged = if tank.energy() > tank.t_min {
        quad(x_tilde, kv, xd_tilde)
    } else {
        0.0
    };
    stored + exchanged
}

/// Explicit Euler step of `ẋ_t = (σ/x_t) ẋ̃ᵀDẋ̃ − (wᵀ/x_t) ẋ̃` with
/// `w = −(K − K_min) x̃` above the floor and 0 otherwise. `σ` for the next
/// step is 0 once `T ≥ T_max`.
pub fn tank_step(
    tank: &TankState,
    k: Vec3,
    k_min: Vec3,
    d: Vec3,
    x_tilde: Vec3,
    xd_tilde: Vec3,
    dt: f64,
) -> Result<TankState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt", "must be > 0"));
    }
    if !(tank.x_t > GUARD) {
        return Err(Error::TankDepleted(tank.x_t));
    }
    let power = tank_power(tank, k, k_min, d, x_tilde, xd_tilde);
    let mut next = *tank;
    next.x_t = tank.x_t + dt * power / tank.x_t;
    if !(next.x_t > GUARD) {
        return Err(Error::TankDepleted(next.x_t));
    }
    next.sigma = next.sigma_for_energy();
    let e = next.energy();
    if e <= next.t_min {
        next.floored = true;
    } else if next.floored && e >= next.t_min + next.rearm {
        next.floored = false;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tank(x_t: f64, sigma: f64) -> TankState {
        TankState {
            x_t,
            sigma,
            ..TankState::new(&TankConfig::default())
        }
    }

    #[test]
    fn idle_tank_is_unchanged() {
        let t = tank(1.3, 0.0);
        let n = tank_step(&t, [100.0; 3], [100.0; 3], [14.0; 3], [0.01; 3], [0.2; 3], 0.002).unwrap();
        assert_eq!(n.x_t, 1.3);
    }

    #[test]
    fn dissipation_charges_tank() {
        // ẋ̃ᵀDẋ̃ = 0.4 W on one axis.
        let t = tank(2f64.sqrt(), 1.0);
        let n = tank_step(&t, [100.0; 3], [100.0; 3], [10.0, 0.0, 0.0], [0.0; 3], [0.2, 0.0, 0.0], 0.002).unwrap();
        let expected = 2f64.sqrt() + 0.002 * 0.4 / 2f64.sqrt();
        assert!((n.x_t - expected).abs() < 1e-15);
        assert!((n.x_t - 1.41478).abs() < 1e-5);
        assert!((n.energy() - 1.0008).abs() < 1e-6);
    }

    #[test]
    fn guard_rejects_empty_tank() {
        let t = tank(1e-7, 1.0);
        assert!(matches!(
            tank_step(&t, [100.0; 3], [100.0; 3], [1.0; 3], [0.0; 3], [0.0; 3], 0.002),
            Err(Error::TankDepleted(_))
        ));
    }

    #[test]
    fn storage_stops_at_t_max() {
        let t = TankState::new(&TankConfig {
            t0: 2.5,
            ..Default::default()
        });
        assert_eq!(t.sigma, 0.0);
        assert!(TankState::new(&TankConfig::default()).sigma == 1.0);
    }

    #[test]
    fn floor_latches_until_rearmed() {
        let cfg = TankConfig::default();
        let mut t = TankState::new(&TankConfig { t0: 0.0501, ..cfg });
        assert!(t.can_extract());
        // Extract 0.2 W for one cycle: energy drops below the floor.
        t = tank_step(&t, [200.0, 100.0, 100.0], [100.0; 3], [0.0; 3], [0.1, 0.0, 0.0], [-0.02, 0.0, 0.0], 0.002).unwrap();
        assert!(t.floored && !t.can_extract());
        // Small refill: still floored.
        t = tank_step(&t, [100.0; 3], [100.0; 3], [10.0; 3], [0.0; 3], [0.1, 0.0, 0.0], 0.002).unwrap();
        assert!(t.floored);
        for _ in 0..100 {
            t = tank_step(&t, [100.0; 3], [100.0; 3], [10.0; 3], [0.0; 3], [0.5, 0.0, 0.0], 0.002).unwrap();
        }
        assert!(!t.floored && t.energy() >= cfg.t_min + cfg.rearm);
    }

    proptest! {
        #[test]
        fn dissipation_never_drains(
            x_t in 0.4f64..2.0,
            v in prop::array::uniform3(-1.0f64..1.0),
            x in prop::array::uniform3(-0.05f64..0.05),
            d in prop::array::uniform3(0.0f64..50.0),
        ) {
            let t = tank(x_t, 1.0);
            let n = tank_step(&t, [100.0; 3], [100.0; 3], d, x, v, 0.002).unwrap();
            prop_assert!(n.energy() >= t.energy());
        }
    }
}
