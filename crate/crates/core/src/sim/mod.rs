//! Closed-loop simulation of the rendered impedance against the phantom.

mod log;
mod plan;
mod plant;
mod run;

pub use log::{LogRow, ScanLog, SCANLOG_HEADER};
pub use plan::{Disturbance, Lift, ScanPlan, MAX_LIFT};
pub use plant::{step_plant, storage, tissue, EnergyBook, PlantInput, PlantState, StepRecord, Tissue};
pub use run::{run_disturbance_suite, run_scan, safety_summary, Certificate, SafetySummary};
