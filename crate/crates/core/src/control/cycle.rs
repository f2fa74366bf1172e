use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::gains::{damping_design, quad, ImpedanceGains, Vec3};
use super::strategy::{ForceModel, Mode, StrategyConfig};
use super::tank::{tank_power, tank_step, TankState};
use crate::error::{Error, Result};
use crate::qp::{QpProblem, QpSolver, QpStatus};

/// Controller inputs for one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleState {
    /// `x − x_d`, m.
    pub x_tilde: Vec3,
    pub xd_tilde: Vec3,
    pub xdd_tilde: Vec3,
    /// End-effector velocity, m/s.
    pub v_ee: Vec3,
    /// Map surface height and gradient at the probe.
    pub surface: f64,
    pub gradient: (f64, f64),
    pub kappa: f64,
    pub lambda: f64,
    pub beta: f64,
}

/// `ε̇ = ∇z·v_xy − ż`. Positive while penetrating.
pub fn penetration_rate(gradient: (f64, f64), v_ee: Vec3) -> f64 {
    gradient.0 * v_ee[0] + gradient.1 * v_ee[1] - v_ee[2]
}

/// `κ ε^β + λ ε̇ ε^β`, floored at 0.
pub fn force_bound_from_penetration(kappa: f64, lambda: f64, beta: f64, eps: f64, eps_rate: f64) -> f64 {
    let p = eps.max(0.0).powf(beta);
    (kappa * p + lambda * eps_rate * p).max(0.0)
}

/// Desired z force and the ceiling on it for the variable-stiffness modes.
pub fn force_targets(cfg: &StrategyConfig, c: &CycleState) -> Result<(f64, f64)> {
    let rate = penetration_rate(c.gradient, c.v_ee);
    let bound = |eps| force_bound_from_penetration(c.kappa, c.lambda, c.beta, eps, rate);
    match cfg.mode {
        Mode::VsCf => Ok((cfg.f_ref, bound(cfg.eps_max).min(cfg.f_max))),
        Mode::VsVf => Ok((bound(cfg.eps_d), cfg.f_min_const.min(cfg.f_max))),
        m => Err(Error::Precondition(format!("mode {m} has no stiffness QP"))),
    }
}

/// Rate-dependent part of the model force, `Λẍ̃ + Dẋ̃` or zero.
fn model_offset(cfg: &StrategyConfig, c: &CycleState, d: Vec3) -> Vec3 {
    match cfg.force_model {
        ForceModel::Full => [0, 1, 2].map(|i| cfg.lambda[i] * c.xdd_tilde[i] + d[i] * c.xd_tilde[i]),
        ForceModel::QuasiStatic => [0.0; 3],
    }
}

/// Predicted force for stiffness `k`.
pub fn model_force(cfg: &StrategyConfig, c: &CycleState, d: Vec3, k: Vec3) -> Vec3 {
    let a = model_offset(cfg, c, d);
    [0, 1, 2].map(|i| a[i] + k[i] * c.x_tilde[i])
}

/// Builds the stiffness QP. Rows of `A`: z force ceiling, tank floor, power.
pub fn assemble_qp(cfg: &StrategyConfig, c: &CycleState, tank: &TankState, d: Vec3, t_prev: f64) -> Result<QpProblem> {
    let (f_d, ceiling) = force_targets(cfg, c)?;
    let fd = [0.0, 0.0, f_d];
    let a = model_offset(cfg, c, d);
    let x = c.x_tilde;

    let h = DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| x[i] * cfg.q[i] * x[i] + cfg.r[i]));
    let g = DVector::from_fn(3, |i, _| x[i] * cfg.q[i] * (a[i] - fd[i]) - cfg.r[i] * cfg.k_min[i]);

    let stored = tank.sigma * quad(c.xd_tilde, d, c.xd_tilde) - quad(x, cfg.k_min, c.xd_tilde);
    let tank_row = [0, 1, 2].map(|i| -x[i] * c.xd_tilde[i]);
    let mut am = DMatrix::zeros(3, 3);
    am[(0, 2)] = x[2];
    for i in 0..3 {
        am[(1, i)] = tank_row[i];
        am[(2, i)] = tank_row[i];
    }
    let b = DVector::from_vec(vec![
        ceiling - a[2],
        stored + (t_prev - tank.t_min) / cfg.dt,
        stored - tank.eta,
    ]);
    Ok(QpProblem {
        h,
        g,
        lb: DVector::from_row_slice(&cfg.k_min),
        ub: DVector::from_row_slice(&cfg.k_max),
        a: am,
        b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleStatus {
    Optimal,
    Infeasible,
    MaxIter,
    Unbounded,
    /// Tank at its floor; the QP was skipped.
    TankFloor,
    /// Fixed-gain modes.
    Fixed,
}

impl CycleStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleStatus::Optimal => "optimal",
            CycleStatus::Infeasible => "infeasible",
            CycleStatus::MaxIter => "max_iter",
            CycleStatus::Unbounded => "unbounded",
            CycleStatus::TankFloor => "tank_floor",
            CycleStatus::Fixed => "fixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [
            CycleStatus::Optimal,
            CycleStatus::Infeasible,
            CycleStatus::MaxIter,
            CycleStatus::Unbounded,
            CycleStatus::TankFloor,
            CycleStatus::Fixed,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
        .ok_or_else(|| Error::format("cycle status", s.to_string()))
    }
}

impl From<QpStatus> for CycleStatus {
    fn from(s: QpStatus) -> Self {
        match s {
            QpStatus::Optimal => CycleStatus::Optimal,
            QpStatus::Infeasible => CycleStatus::Infeasible,
            QpStatus::MaxIter => CycleStatus::MaxIter,
            QpStatus::Unbounded => CycleStatus::Unbounded,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleReport {
    pub status: CycleStatus,
    pub active_set: Vec<usize>,
    pub iterations: usize,
    /// Applied stiffness.
    pub k: Vec3,
    pub f_desired: f64,
    pub f_ceiling: f64,
    pub penetration_rate: f64,
    /// Energy after the tank step, J.
    pub tank_energy: f64,
    /// `Ṫ` used by the tank step, W.
    pub tank_power: f64,
    pub sigma: f64,
    /// The QP, kept only when it did not solve to optimality.
    pub failed_problem: Option<QpProblem>,
}

/// One control cycle: solve for the stiffness, fall back to `K_min` when
/// the QP fails or the tank sits at its floor, advance the tank with the
/// damping in force during the cycle, then redesign the damping.
pub fn control_cycle(
    cfg: &StrategyConfig,
    c: &CycleState,
    gains: &ImpedanceGains,
    tank: &TankState,
    solver: &mut QpSolver,
) -> Result<(ImpedanceGains, TankState, CycleReport)> {
    let (f_desired, f_ceiling) = force_targets(cfg, c)?;
    let t_prev = tank.energy();
    let mut tank_now = *tank;
    tank_now.sigma = if t_prev >= tank.t_max { 0.0 } else { 1.0 };

    let (k, status, active_set, iterations, failed_problem) = if !tank_now.can_extract() {
        solver.reset();
        (cfg.k_min, CycleStatus::TankFloor, Vec::new(), 0, None)
    } else {
        let p = assemble_qp(cfg, c, &tank_now, gains.d, t_prev)?;
        let sol = solver.solve(&p)?;
        if sol.status == QpStatus::Optimal {
            let k = [0, 1, 2].map(|i| sol.u[i].clamp(cfg.k_min[i], cfg.k_max[i]));
            (k, CycleStatus::Optimal, sol.active_set, sol.iterations, None)
        } else {
            (cfg.k_min, sol.status.into(), sol.active_set, sol.iterations, Some(p))
        }
    };

    let power = tank_power(&tank_now, k, cfg.k_min, gains.d, c.x_tilde, c.xd_tilde);
    let next_tank = tank_step(&tank_now, k, cfg.k_min, gains.d, c.x_tilde, c.xd_tilde, cfg.dt)?;
    let next_gains = ImpedanceGains {
        lambda: cfg.lambda,
        d: damping_design(k, cfg.lambda, cfg.zeta),
        k,
    };
    let report = CycleReport {
        status,
        active_set,
        iterations,
        k,
        f_desired,
        f_ceiling,
        penetration_rate: penetration_rate(c.gradient, c.v_ee),
        tank_energy: next_tank.energy(),
        tank_power: power,
        sigma: tank_now.sigma,
        failed_problem,
    };
    Ok((next_gains, next_tank, report))
}

/// Stateful wrapper owning the gains, tank and warm-started solver.
#[derive(Debug, Clone)]
pub struct Controller {
    pub cfg: StrategyConfig,
    pub gains: ImpedanceGains,
    pub tank: TankState,
    solver: QpSolver,
}

impl Controller {
    pub fn new(cfg: StrategyConfig) -> Result<Self> {
        cfg.validate()?;
        let k = if cfg.mode.is_variable() { cfg.k_min } else { cfg.k_const };
        Ok(Self {
            gains: ImpedanceGains::designed(k, cfg.lambda, cfg.zeta),
            tank: TankState::new(&cfg.tank),
            solver: QpSolver::new(),
            cfg,
        })
    }

    pub fn step(&mut self, c: &CycleState) -> Result<CycleReport> {
        let (g, t, r) = control_cycle(&self.cfg, c, &self.gains, &self.tank, &mut self.solver)?;
        self.gains = g;
        self.tank = t;
        Ok(r)
    }
}
