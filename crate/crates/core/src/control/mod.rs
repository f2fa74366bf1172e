//! Variable-stiffness impedance controller with an energy tank.

mod cycle;
mod gains;
mod strategy;
mod tank;

pub use cycle::{
    assemble_qp, control_cycle, force_bound_from_penetration, force_targets, model_force, penetration_rate,
    Controller, CycleReport, CycleState, CycleStatus,
};
pub use gains::{damping_design, interaction_force, ImpedanceGains, Vec3};
pub use strategy::{ForceGains, ForceModel, Mode, StrategyConfig};
pub use tank::{tank_power, tank_step, TankConfig, TankState};
