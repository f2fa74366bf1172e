//! Palpation simulation and per-point identification of contact parameters.

pub mod fit;
pub mod io;
pub mod protocol;
pub mod survey;

pub use fit::{beta_sweep, best_beta, fit_hc, fit_kv, refine_surface, ContactModel, FitResult};
pub use protocol::{
    generate_load_unload, generate_palpation, LoadUnloadProtocol, PalpationProtocol, ProbeSample,
};
pub use survey::{
    axis_nodes, detect_onset, estimate_node, grid_nodes, mass_bias, node_palpation, residual_vs_duration,
    survey_grid, survey_grid_with, DurationResidual, NodeFlag, PointEstimate, SurveyOptions,
};
