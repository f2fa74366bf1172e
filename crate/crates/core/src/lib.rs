pub mod bodymap;
pub mod control;
pub mod error;
pub mod estimation;
pub mod gpr;
pub mod model;
pub mod phantom;
pub mod qp;
pub mod sim;
pub mod surface;

pub use bodymap::{build_body_map, BodyMap, GridSettings, MapSample};
pub use error::{Error, Result};
pub use gpr::{gpr_fit, gpr_predict, GprModel, GprSettings, HyperChoice, Hyperparams, Prediction};
pub use model::{hc_force, kv_force, ContactState, ViscoelasticParams};
pub use phantom::{Bounds, Phantom, PhantomConfig};
pub use surface::{fit_grid, grid_gradient, grid_height, HeightGrid};
pub use qp::{kkt_check, qp_solve, KktReport, QpProblem, QpSolution, QpSolver, QpStatus};
pub use control::{
    assemble_qp, control_cycle, damping_design, force_bound_from_penetration, interaction_force, penetration_rate,
    tank_step, Controller, CycleReport, CycleState, CycleStatus, ForceModel, ImpedanceGains, Mode, StrategyConfig,
    TankConfig, TankState,
};
pub use sim::{run_disturbance_suite, run_scan, step_plant, Disturbance, SafetySummary, ScanLog, ScanPlan};
