//! Fixtures shared by the benchmarks.

use vic_core::estimation::{survey_grid, PalpationProtocol};
use vic_core::{
    assemble_qp, BodyMap, CycleState, GprSettings, GridSettings, HyperChoice, Mode, Phantom, QpProblem,
    StrategyConfig, TankState,
};

/// A pressing state over soft tissue, slightly above the target.
pub fn pressing_state() -> CycleState {
    CycleState {
        x_tilde: [0.0005, -0.0002, 0.012],
        xd_tilde: [0.01, 0.0, -0.004],
        xdd_tilde: [0.0, 0.0, 0.05],
        v_ee: [0.01, 0.0, -0.004],
        surface: 0.05,
        gradient: (0.05, -0.02),
        kappa: 2000.0,
        lambda: 3000.0,
        beta: 1.35,
    }
}

pub fn cycle_qp() -> QpProblem {
    let cfg = StrategyConfig::for_mode(Mode::VsCf);
    let tank = TankState::new(&cfg.tank);
    let d = [20.0; 3];
    assemble_qp(&cfg, &pressing_state(), &tank, d, tank.energy()).expect("valid cycle")
}

/// Body map from a noisy survey at `spacing` with spacing-based GPR
/// hyperparameters.
pub fn body_map(spacing: f64) -> BodyMap {
    let ph = Phantom::default();
    let proto = PalpationProtocol {
        noise_sigma: 0.05,
        ..Default::default()
    };
    let survey = survey_grid(&ph, spacing, &proto, 0).expect("survey");
    let gpr = GprSettings {
        hyper: HyperChoice::Spacing(spacing),
        prior_mean: None,
    };
    vic_core::build_body_map(&survey, ph.beta(), &GridSettings::default(), &gpr).expect("map")
}
