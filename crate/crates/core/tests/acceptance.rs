use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vic_core::estimation::{
    estimate_node, fit_hc, fit_kv, generate_load_unload, generate_palpation, residual_vs_duration, survey_grid,
    LoadUnloadProtocol, PalpationProtocol, SurveyOptions,
};
use vic_core::sim::{LogRow, ScanLog};
use vic_core::*;

const SOFT: (f64, f64) = (0.04, 0.04);
const RIB: (f64, f64) = (0.15, 0.165);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn phantom() -> &'static Phantom {
    static P: OnceLock<Phantom> = OnceLock::new();
    P.get_or_init(Phantom::default)
}

fn noisy() -> PalpationProtocol {
    PalpationProtocol {
        noise_sigma: 0.05,
        ..Default::default()
    }
}

/// Body map from the 1 cm survey.
fn survey_map() -> &'static BodyMap {
    static M: OnceLock<BodyMap> = OnceLock::new();
    M.get_or_init(|| {
        let survey = survey_grid(phantom(), 0.01, &noisy(), 7).unwrap();
        build_body_map(&survey, 1.35, &GridSettings::default(), &GprSettings::default()).unwrap()
    })
}

fn scan(cfg: &StrategyConfig, dist: &Disturbance) -> ScanLog {
    run_scan(cfg, phantom(), survey_map(), &ScanPlan::default(), dist, 0).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn ac1() -> Outcome {
    let ph = phantom();
    let mut worst_clean: f64 = 0.0;
    let mut worst_noisy: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for (x, y) in [SOFT, RIB] {
        let truth = ph.query(x, y).unwrap();
        let data = generate_palpation(ph, x, y, &PalpationProtocol::default(), 0).unwrap();
        let fit = fit_hc(&data, truth.surface, ph.beta(), ph.indenter_mass()).unwrap();
        worst_clean = worst_clean.max(rel(fit.params.kappa, truth.kappa)).max(rel(fit.params.lambda, truth.lambda));
        for seed in 0..20 {
            let t = Instant::now();
            let est = estimate_node(ph, x, y, &noisy(), &SurveyOptions::default(), seed, 0);
            slowest = slowest.max(t.elapsed());
            let p = est.fit.unwrap().params;
            worst_noisy = worst_noisy.max(rel(p.kappa, truth.kappa)).max(rel(p.lambda, truth.lambda));
        }
    }
    outcome(
        worst_clean < 1e-6 && worst_noisy < 0.05 && slowest < Duration::from_secs(1),
        format!("noiseless err {worst_clean:.1e}, noisy err {worst_noisy:.4} over 20 seeds, slowest point {slowest:.2?}"),
    )
}

fn ac2() -> Outcome {
    let ph = phantom();
    let (x, y) = SOFT;
    let proto = LoadUnloadProtocol {
        noise_sigma: 0.01,
        ..Default::default()
    };
    let data = generate_load_unload(ph, x, y, &proto, 3).unwrap();
    let s = ph.query(x, y).unwrap().surface;
    let m = ph.indenter_mass();
    let kv = fit_kv(&data, s, m).unwrap().residual;
    let hc = |b| fit_hc(&data, s, b, m).unwrap().residual;
    let ours = [kv, hc(1.1), hc(1.5), hc(1.35)];
    // Relative residuals as published: KV, then HC at 1.1, 1.5, 1.35.
    let published = [0.066, 0.045, 0.029, 0.014];
    let descending = |v: &[f64]| v.windows(2).all(|w| w[0] > w[1]);
    outcome(
        descending(&published) && descending(&ours),
        format!("KV {:.4} > HC1.1 {:.4} > HC1.5 {:.4} > HC1.35 {:.4} N", ours[0], ours[1], ours[2], ours[3]),
    )
}

fn ac3() -> Outcome {
    let ph = phantom();
    let (mut short, mut long) = (0.0, 0.0);
    let seeds = 20;
    for seed in 0..seeds {
        let r = residual_vs_duration(ph, SOFT.0, SOFT.1, &noisy(), &[0.5, 5.0], seed).unwrap();
        short += r[0].residual / seeds as f64;
        long += r[1].residual / seeds as f64;
    }
    outcome(long < short, format!("mean residual 0.5 s {short:.4} N, 5 s {long:.4} N"))
}

fn ac4() -> Outcome {
    let ph = phantom();
    let map = survey_map();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        // Offset from the 1 cm node lattice by at least 2.5 mm.
        let (x, y) = loop {
            let (x, y) = (rng.random_range(0.01..0.32), rng.random_range(0.01..0.32));
            let off = |v: f64| ((v - 0.005) / 0.01 - ((v - 0.005) / 0.01).round()).abs() * 0.01;
            if off(x) > 0.0025 || off(y) > 0.0025 {
                break (x, y);
            }
        };
        worst = worst.max(rel(map.kappa_at(x, y).mean, ph.query(x, y).unwrap().kappa));
    }
    let contrast = map.kappa_at(RIB.0, RIB.1).mean / map.kappa_at(SOFT.0, SOFT.1).mean;
    outcome(
        worst < 0.10 && contrast > 1.5,
        format!("worst κ error {:.2}% at 50 points, rib/soft contrast {contrast:.2}", worst * 100.0),
    )
}

/// Minimiser of a strictly convex QP by enumeration of active sets of size at
/// most three. `None` when no candidate is feasible.
fn enumerate_qp(p: &QpProblem) -> Option<f64> {
    let n = p.h.nrows();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        rows.push((e.clone(), p.ub[i]));
        rows.push((-e, -p.lb[i]));
    }
    for r in 0..p.a.nrows() {
        rows.push((p.a.row(r).transpose(), p.b[r]));
    }
    let m = rows.len();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if set.len() > n {
            continue;
        }
        let k = set.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        for j in 0..n {
            rhs[j] = -p.g[j];
        }
        for (c, &i) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(n + c, j)] = rows[i].0[j];
                kkt[(j, n + c)] = rows[i].0[j];
            }
            rhs[n + c] = rows[i].1;
        }
        let Some(lu) = kkt.clone().full_piv_lu().try_inverse() else {
            continue;
        };
        let sol = lu * rhs;
        let u = sol.rows(0, n).into_owned();
        let feasible = rows.iter().all(|(a, b)| a.dot(&u) <= b + 1e-9 * (1.0 + b.abs()));
        if feasible {
            let f = 0.5 * u.dot(&(&p.h * &u)) + p.g.dot(&u);
            best = Some(best.map_or(f, |b: f64| b.min(f)));
        }
    }
    best
}

fn random_cycle(rng: &mut ChaCha8Rng) -> (StrategyConfig, CycleState, TankState, [f64; 3], f64) {
    let mode = if rng.random_bool(0.5) { Mode::VsCf } else { Mode::VsVf };
    let cfg = StrategyConfig::for_mode(mode);
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    let c = CycleState {
        x_tilde: [u(-0.005, 0.005), u(-0.005, 0.005), u(-0.002, 0.03)],
        xd_tilde: [u(-0.02, 0.02), u(-0.02, 0.02), u(-0.05, 0.05)],
        xdd_tilde: [u(-0.5, 0.5), u(-0.5, 0.5), u(-0.5, 0.5)],
        v_ee: [u(-0.02, 0.02), u(-0.02, 0.02), u(-0.05, 0.05)],
        surface: 0.0,
        gradient: (u(-0.3, 0.3), u(-0.3, 0.3)),
        kappa: u(1000.0, 20000.0),
        lambda: u(500.0, 5000.0),
        beta: 1.35,
    };
    let mut tank = TankState::new(&cfg.tank);
    let energy = u(cfg.tank.t_min, cfg.tank.t_max);
    tank.x_t = (2.0 * energy).sqrt();
    let k = [u(100.0, 1000.0), u(100.0, 1000.0), u(100.0, 1000.0)];
    let d = [0, 1, 2].map(|i| 2.0 * cfg.zeta * (k[i] * cfg.lambda[i]).sqrt());
    let t_prev = energy + u(-0.01, 0.01);
    (cfg, c, tank, d, t_prev)
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_gap, mut worst_kkt): (f64, f64) = (0.0, 0.0);
    let (mut infeasible, mut mismatched) = (0, 0);
    let mut times = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let (cfg, c, tank, d, t_prev) = random_cycle(&mut rng);
        let p = assemble_qp(&cfg, &c, &tank, d, t_prev).unwrap();
        let t = Instant::now();
        let sol = qp_solve(&p).unwrap();
        times.push(t.elapsed());
        match (sol.status, enumerate_qp(&p)) {
            (QpStatus::Optimal, Some(f)) => {
                let gap = (p.objective(&sol.u) - f).abs() / f.abs().max(1e-12);
                worst_gap = worst_gap.max(gap);
                worst_kkt = worst_kkt.max(kkt_check(&p, &sol.u).max());
            }
            (QpStatus::Infeasible, None) => infeasible += 1,
            _ => mismatched += 1,
        }
    }
    times.sort();
    let median = times[times.len() / 2];
    outcome(
        worst_gap < 1e-6 && worst_kkt < 1e-7 && mismatched == 0,
        format!(
            "objective gap {worst_gap:.1e}, KKT {worst_kkt:.1e}, {infeasible} infeasible agreed, {mismatched} mismatched, median solve {median:.2?}"
        ),
    )
}

/// Homogeneous flat segment once the force loops have settled.
fn steady_soft(r: &LogRow) -> bool {
    r.t >= 3.0 && r.pos[0] <= 0.05
}

fn near_rib(r: &LogRow) -> bool {
    phantom().ribs().iter().any(|rib| (r.pos[0] - rib.center[0]).abs() < rib.width)
}

fn ac6() -> Outcome {
    let ph = phantom();
    let err = |mode| {
        let cfg = StrategyConfig::for_mode(mode);
        let log = scan(&cfg, &Disturbance::none());
        let e = log.rows.iter().filter(|r| steady_soft(r)).map(|r| (r.f_tissue - cfg.f_ref).abs()).fold(0.0, f64::max);
        (e, log)
    };
    let (vs, _) = err(Mode::VsCf);
    let (cf, _) = err(Mode::Cf);
    let cs = scan(&StrategyConfig::for_mode(Mode::Cs), &Disturbance::none());
    let rib_x = ph.ribs()[1].center[0];
    let rib = cs.rows.iter().filter(|r| (r.pos[0] - rib_x).abs() < 0.003).map(|r| r.f_tissue).fold(0.0, f64::max);
    let soft = cs.rows.iter().filter(|r| steady_soft(r)).map(|r| r.f_tissue).fold(0.0, f64::max);
    outcome(
        vs < 0.2 && cf < 0.2 && rib > 3.0 * soft,
        format!("VS-CF err {vs:.3} N, CF err {cf:.3} N, CS rib {rib:.2} N vs soft {soft:.2} N ({:.2}x)", rib / soft),
    )
}

fn ac7() -> Outcome {
    let cf_cfg = StrategyConfig::for_mode(Mode::VsCf);
    let cf = scan(&cf_cfg, &Disturbance::none());
    let max_eps = cf.rows.iter().map(|r| r.eps).fold(f64::NEG_INFINITY, f64::max);
    let vf_cfg = StrategyConfig::for_mode(Mode::VsVf);
    let vf = scan(&vf_cfg, &Disturbance::none());
    let rib_force = vf.rows.iter().filter(|r| near_rib(r)).map(|r| r.f_tissue).fold(0.0, f64::max);
    let eps_err = vf.rows.iter().filter(|r| steady_soft(r)).map(|r| rel(r.eps, vf_cfg.eps_d)).fold(0.0, f64::max);
    outcome(
        max_eps <= cf_cfg.eps_max + 5e-4 && rib_force <= vf_cfg.f_max + 0.1 && eps_err < 0.10,
        format!(
            "VS-CF max ε {:.2} mm, VS-VF rib force {rib_force:.2} N, soft ε error {:.1}%",
            max_eps * 1e3,
            eps_err * 100.0
        ),
    )
}

struct Passivity {
    floor: bool,
    floored_loss_rows: usize,
    floor_stiffness: bool,
    recontact_rows: usize,
    recontact_power: f64,
}

fn passivity(cfg: &StrategyConfig, log: &ScanLog) -> Passivity {
    let rows = &log.rows;
    let eta = cfg.tank.eta.abs();
    let floor = rows.iter().all(|r| r.tank_energy >= cfg.tank.t_min - eta * cfg.dt);
    let (mut floored_loss_rows, mut floor_stiffness) = (0, true);
    let mut reached = false;
    for r in rows {
        if r.contact {
            reached = false;
            continue;
        }
        reached |= r.tank_energy <= cfg.tank.t_min || r.status == CycleStatus::TankFloor;
        if reached {
            floored_loss_rows += 1;
            floor_stiffness &= r.k == cfg.k_min;
        }
    }
    let window = (0.5 / cfg.dt).round() as usize;
    let (mut recontact_rows, mut recontact_power) = (0, f64::NEG_INFINITY);
    for i in 1..rows.len() - 1 {
        if rows[i].contact && !rows[i - 1].contact {
            for j in i..(i + window).min(rows.len() - 1) {
                let drain = (rows[j].tank_energy - rows[j + 1].tank_energy) / cfg.dt;
                recontact_power = recontact_power.max(drain);
                recontact_rows += 1;
            }
        }
    }
    Passivity {
        floor,
        floored_loss_rows,
        floor_stiffness,
        recontact_rows,
        recontact_power,
    }
}

fn ac8() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let (mut floored_rows, mut recontact_rows) = (0, 0);
    for mode in [Mode::VsCf, Mode::VsVf] {
        let default = StrategyConfig::for_mode(mode);
        let mut depleted = default.clone();
        depleted.tank.t0 = 0.052;
        for (cfg, dist) in [(&default, Disturbance::lift(15.0)), (&depleted, Disturbance::fast_drop(15.0))] {
            let log = scan(cfg, &dist);
            let p = passivity(cfg, &log);
            pass &= p.floor && p.floor_stiffness && p.recontact_power <= cfg.tank.eta.abs() + 1e-9;
            floored_rows += p.floored_loss_rows;
            recontact_rows += p.recontact_rows;
            let drain = if p.recontact_rows > 0 { format!("{:.3} W", p.recontact_power) } else { "none".into() };
            notes.push(format!(
                "{mode} T0={}: min T {:.3} J, recontact drain {drain}, K_min on {} floored loss rows",
                cfg.tank.t0,
                log.rows.iter().map(|r| r.tank_energy).fold(f64::INFINITY, f64::min),
                p.floored_loss_rows
            ));
        }
    }
    outcome(pass && floored_rows > 0 && recontact_rows > 0, notes.join("; "))
}

fn ac9() -> Outcome {
    let csv = |log: &ScanLog| {
        let mut out = Vec::new();
        log.write_csv(&mut out).unwrap();
        out
    };
    let ph = phantom();
    let survey_a = survey_grid(ph, 0.05, &noisy(), 9).unwrap();
    let survey_b = survey_grid(ph, 0.05, &noisy(), 9).unwrap();
    let mut identical = survey_a == survey_b;
    let mut worst: f64 = 0.0;
    let fine = ScanPlan {
        substeps: 2 * ScanPlan::default().substeps,
        ..Default::default()
    };
    for mode in Mode::ALL {
        let cfg = StrategyConfig::for_mode(mode);
        let a = scan(&cfg, &Disturbance::lift(15.0));
        let b = scan(&cfg, &Disturbance::lift(15.0));
        identical &= csv(&a) == csv(&b);
        let c = run_scan(&cfg, ph, survey_map(), &fine, &Disturbance::lift(15.0), 0).unwrap();
        let (num, den) = a.rows.iter().zip(&c.rows).fold((0.0, 0.0), |(n, d), (p, q)| {
            (n + (p.f_tissue - q.f_tissue).powi(2), d + p.f_tissue.powi(2))
        });
        worst = worst.max((num / den).sqrt());
    }
    outcome(
        identical && worst < 0.01,
        format!("bitwise identical: {identical}, step halving RMS change {:.3}%", worst * 100.0),
    )
}

fn ac10() -> Outcome {
    let ph = phantom();
    let t = Instant::now();
    let survey = survey_grid(ph, 0.033, &noisy(), 1).unwrap();
    let map = build_body_map(&survey, ph.beta(), &GridSettings::default(), &GprSettings::default()).unwrap();
    let modes: Vec<StrategyConfig> = Mode::ALL.into_iter().map(StrategyConfig::for_mode).collect();
    let mut runs = 0;
    for dist in [Disturbance::none(), Disturbance::lift(15.0)] {
        runs += run_disturbance_suite(ph, &map, &ScanPlan::default(), &dist, &modes, 1).unwrap().len();
    }
    let elapsed = t.elapsed();
    outcome(
        survey.len() == 100 && runs == 8 && elapsed < Duration::from_secs(300),
        format!("{} nodes, {runs} scans in {elapsed:.2?}", survey.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("AC1", "estimator recovery", ac1),
        ("AC2", "contact model residual ordering", ac2),
        ("AC3", "residual vs palpation duration", ac3),
        ("AC4", "map accuracy", ac4),
        ("AC5", "QP against enumeration", ac5),
        ("AC6", "force tracking", ac6),
        ("AC7", "penetration guard", ac7),
        ("AC8", "passivity under disturbance", ac8),
        ("AC9", "determinism and step halving", ac9),
        ("AC10", "end-to-end runtime", ac10),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (id, name, run) in criteria {
        if filter.as_deref().is_some_and(|f| !id.eq_ignore_ascii_case(f)) {
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        println!("{id:<5} {verdict} {name}: {}", result.detail);
        failed += usize::from(!result.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
