use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::log::{LogRow, ScanLog};
use super::plan::{Disturbance, ScanPlan};
use super::plant::{step_plant, storage, tissue, EnergyBook, PlantInput, PlantState};
use crate::bodymap::BodyMap;
use crate::control::{
    force_bound_from_penetration, interaction_force, penetration_rate, Controller, CycleState, CycleStatus, Mode,
    StrategyConfig, Vec3,
};
use crate::error::{Error, Result};
use crate::phantom::Phantom;

/// Clamps a point into the map's grid hull.
fn clamp_to_map(map: &BodyMap, x: f64, y: f64) -> (f64, f64) {
    let (xs, ys) = (map.grid.x_nodes(), map.grid.y_nodes());
    (x.clamp(xs[0], xs[xs.len() - 1]), y.clamp(ys[0], ys[ys.len() - 1]))
}

/// Closed-loop scan with controller `cfg`. The run is deterministic; `seed`
/// is accepted for interface symmetry with the stochastic stages and has no
/// effect on the noise-free loop.
pub fn run_scan(
    cfg: &StrategyConfig,
    ph: &Phantom,
    map: &BodyMap,
    plan: &ScanPlan,
    dist: &Disturbance,
    seed: u64,
) -> Result<ScanLog> {
    let _ = seed;
    cfg.validate()?;
    plan.validate(&ph.bounds())?;
    dist.validate()?;
    for p in [plan.start, plan.end] {
        if !map.contains(p[0], p[1]) {
            return Err(Error::Extrapolation { x: p[0], y: p[1] });
        }
    }

    let dt = cfg.dt;
    let dtp = dt / plan.substeps as f64;
    let n_cycles = (plan.duration() / dt).round() as usize;
    let z_d = map.sample(plan.start[0], plan.start[1])?.surface - plan.depth;
    let s0 = ph.sample(plan.start[0], plan.start[1]).surface + dist.profile(0.0).0;
    let mut state = PlantState {
        x: [plan.start[0], plan.start[1], s0],
        ..Default::default()
    };

    let mut ctrl = Controller::new(cfg.clone())?;
    let axes = [true, true, cfg.mode != Mode::Cf];
    let mut book = EnergyBook::default();
    let mut prev_target_v: Option<Vec3> = None;
    let mut prev_err: Option<f64> = None;
    let mut kappa_std = f64::NAN;
    let mut rows = Vec::with_capacity(n_cycles);

    for k in 0..n_cycles {
        let t = k as f64 * dt;
        state.t = t;
        state.cycle = k;
        let (target, target_v) = plan.target(t, z_d);
        let x_tilde = sub(state.x, target);
        let xd_tilde = sub(state.v, target_v);
        let xdd_tilde = state.a;
        let tis = tissue(ph, dist, t, state.x, state.v);
        let (cx, cy) = clamp_to_map(map, state.x[0], state.x[1]);
        let ms = map.sample(cx, cy)?;
        if k % cfg.variance_every == 0 {
            kappa_std = map.kappa_at(cx, cy).variance.max(0.0).sqrt();
        }

        if let Some(pv) = prev_target_v {
            if pv != target_v {
                let before = storage(&ctrl.gains, x_tilde, sub(state.v, pv), dtp, axes);
                let after = storage(&ctrl.gains, x_tilde, xd_tilde, dtp, axes);
                book.frame += (after.0 + after.1) - (before.0 + before.1);
            }
        }
        prev_target_v = Some(target_v);

        let old_gains = ctrl.gains;
        let tank_entry = ctrl.tank.energy();
        let mut z_velocity = None;
        let (status, iters, f_desired, f_ceiling, tank_power) = match cfg.mode {
            Mode::VsCf | Mode::VsVf => {
                let c = CycleState {
                    x_tilde,
                    xd_tilde,
                    xdd_tilde,
                    v_ee: state.v,
                    surface: ms.surface,
                    gradient: ms.gradient,
                    kappa: ms.kappa,
                    lambda: ms.lambda,
                    beta: map.beta,
                };
                let r = ctrl.step(&c)?;
                (r.status, r.iterations, r.f_desired, r.f_ceiling, r.tank_power)
            }
            Mode::Cs => {
                let rate = penetration_rate(ms.gradient, state.v);
                let eps = (ms.surface - state.x[2]).max(0.0);
                let f = force_bound_from_penetration(ms.kappa, ms.lambda, map.beta, eps, rate);
                (CycleStatus::Fixed, 0, f, f64::INFINITY, f64::NAN)
            }
            Mode::Cf => {
                let err = cfg.f_ref - tis.force;
                let derr = prev_err.map_or(0.0, |p| (err - p) / dt);
                prev_err = Some(err);
                // Gains are in cm/s per N and cm per N.
                z_velocity = Some(-(cfg.cf.kp * err + cfg.cf.kd * derr) * 0.01);
                (CycleStatus::Fixed, 0, cfg.f_ref, f64::INFINITY, f64::NAN)
            }
        };
        let gains = ctrl.gains;
        if gains.k != old_gains.k {
            let before = storage(&old_gains, x_tilde, xd_tilde, dtp, axes);
            let after = storage(&gains, x_tilde, xd_tilde, dtp, axes);
            book.stiffness += after.1 - before.1;
        }
        let (e_kinetic, e_spring) = storage(&gains, x_tilde, xd_tilde, dtp, axes);
        let mut shown = gains;
        if cfg.mode == Mode::Cf {
            shown.k[2] = f64::NAN;
            shown.d[2] = f64::NAN;
        }
        rows.push(LogRow {
            t,
            pos: state.x,
            vel: state.v,
            x_tilde,
            f_model: interaction_force(&shown, x_tilde, xd_tilde, xdd_tilde),
            f_tissue: tis.force,
            f_desired,
            f_ceiling,
            k: shown.k,
            d: shown.d,
            tank_energy: if cfg.mode.is_variable() { tank_entry } else { f64::NAN },
            tank_power,
            status,
            qp_iterations: iters,
            eps: tis.penetration,
            eps_rate: tis.rate,
            contact: tis.in_contact(),
            lift: tis.lift,
            kappa_map: ms.kappa,
            kappa_std,
            e_kinetic,
            e_spring,
            w_damper: book.damper,
            w_tissue: book.tissue,
            w_stiffness: book.stiffness,
            w_frame: book.frame,
        });

        let input = PlantInput {
            target,
            target_velocity: target_v,
            gains,
            z_velocity,
        };
        for j in 0..plan.substeps {
            let mut inp = input;
            inp.target = [0, 1, 2].map(|i| target[i] + target_v[i] * dtp * j as f64);
            let (next, rec) = step_plant(&state, &inp, ph, dist, dtp)?;
            book.record(&gains, &rec, dtp, axes);
            state = next;
        }
    }
    Ok(ScanLog {
        mode: cfg.mode,
        dt,
        rows,
    })
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// One safety check with the number of rows it applied to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub pass: bool,
    pub applicable: usize,
}

impl Certificate {
    fn check(rows: impl Iterator<Item = bool>) -> Self {
        let (mut pass, mut applicable) = (true, 0);
        for ok in rows {
            applicable += 1;
            pass &= ok;
        }
        Self { pass, applicable }
    }
}

/// Safety summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySummary {
    pub mode: Mode,
    pub disturbed: bool,
    pub rows: usize,
    pub contact_loss_rows: usize,
    pub min_tank_energy: Option<f64>,
    pub max_force: f64,
    pub max_penetration: f64,
    /// `T ≥ T_min − |η| dt` on every row.
    pub tank_floor: Option<Certificate>,
    /// `(T_{k+1} − T_k)/dt ≥ η − 1e−9` after every optimal cycle.
    pub power_valve: Option<Certificate>,
    /// `K = K_min` on contact-loss rows once the tank reached its floor.
    pub floor_stiffness: Option<Certificate>,
    /// Power bound on rows within 0.5 s after contact is regained.
    pub recontact_power: Option<Certificate>,
    pub stiffness_box: Option<Certificate>,
    /// The force loop keeps pressing down while separated.
    pub cf_pursues_target: Option<Certificate>,
    pub pass: bool,
}

pub fn safety_summary(cfg: &StrategyConfig, log: &ScanLog, disturbed: bool) -> SafetySummary {
    let rows = &log.rows;
    let variable = cfg.mode.is_variable();
    let eta = cfg.tank.eta;
    let tol_t = eta.abs() * cfg.dt;
    let valve_ok = |i: usize| {
        let r = &rows[i];
        let next = rows.get(i + 1).map(|n| n.tank_energy);
        next.map_or(true, |n| (n - r.tank_energy) / log.dt >= eta - 1e-9)
    };

    let mut s = SafetySummary {
        mode: cfg.mode,
        disturbed,
        rows: rows.len(),
        contact_loss_rows: rows.iter().filter(|r| !r.contact).count(),
        min_tank_energy: None,
        max_force: rows.iter().map(|r| r.f_tissue).fold(0.0, f64::max),
        max_penetration: rows.iter().map(|r| r.eps).fold(f64::NEG_INFINITY, f64::max),
        tank_floor: None,
        power_valve: None,
        floor_stiffness: None,
        recontact_power: None,
        stiffness_box: None,
        cf_pursues_target: None,
        pass: true,
    };
    if variable {
        s.min_tank_energy = Some(rows.iter().map(|r| r.tank_energy).fold(f64::INFINITY, f64::min));
        s.tank_floor = Some(Certificate::check(
            rows.iter().map(|r| r.tank_energy >= cfg.tank.t_min - tol_t),
        ));
        s.power_valve = Some(Certificate::check(
            (0..rows.len()).filter(|&i| rows[i].status == CycleStatus::Optimal).map(valve_ok),
        ));
        let mut floored = false;
        let mut after_floor = Vec::new();
        for r in rows {
            if r.contact {
                floored = false;
                continue;
            }
            floored |= r.status == CycleStatus::TankFloor || r.tank_energy <= cfg.tank.t_min;
            if floored {
                after_floor.push(r.k == cfg.k_min);
            }
        }
        s.floor_stiffness = Some(Certificate::check(after_floor.into_iter()));
        let window = (0.5 / log.dt).round() as usize;
        let mut recontact = Vec::new();
        let mut since: Option<usize> = None;
        for i in 0..rows.len() {
            if !rows[i].contact {
                since = Some(0);
                continue;
            }
            if let Some(n) = since {
                if n < window {
                    if rows[i].status == CycleStatus::Optimal {
                        recontact.push(valve_ok(i) && rows[i].tank_power >= eta - 1e-9);
                    }
                    since = Some(n + 1);
                } else {
                    since = None;
                }
            }
        }
        s.recontact_power = Some(Certificate::check(recontact.into_iter()));
        s.stiffness_box = Some(Certificate::check(rows.iter().map(|r| {
            (0..3).all(|i| r.k[i] >= cfg.k_min[i] && r.k[i] <= cfg.k_max[i])
        })));
    }
    if cfg.mode == Mode::Cf {
        s.cf_pursues_target = Some(Certificate::check(
            rows.windows(2).filter(|w| !w[0].contact).map(|w| w[1].vel[2] < 0.0),
        ));
    }
    s.pass = [
        s.tank_floor,
        s.power_valve,
        s.floor_stiffness,
        s.recontact_power,
        s.stiffness_box,
        s.cf_pursues_target,
    ]
    .iter()
    .flatten()
    .all(|c| c.pass);
    s
}

/// Runs every configuration under `dist` concurrently.
pub fn run_disturbance_suite(
    ph: &Phantom,
    map: &BodyMap,
    plan: &ScanPlan,
    dist: &Disturbance,
    modes: &[StrategyConfig],
    seed: u64,
) -> Result<Vec<(ScanLog, SafetySummary)>> {
    dist.validate()?;
    modes
        .par_iter()
        .map(|cfg| {
            let log = run_scan(cfg, ph, map, plan, dist, seed)?;
            let summary = safety_summary(cfg, &log, !dist.is_none());
            Ok((log, summary))
        })
        .collect()
}
