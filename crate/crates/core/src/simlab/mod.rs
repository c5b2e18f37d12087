//! Simulation laboratory: calibrated synthetic suites, coverage studies for
//! interval estimators and bootstrap ladders, replicate-count sensitivity,
//! replay equivalence checks, and a planted two-model fixture for decision
//! studies.

pub mod calibration;
pub mod coverage;
pub mod planted;
pub mod replay;

pub use calibration::{
    build_calibration, sample_synthetic_tree, sample_synthetic_tree_with_truth, BaseCalibration,
    SimError, SuiteCalibration, SuiteParams, DEFAULT_APP_RATES,
};
pub use coverage::{
    bootstrap_b_sensitivity, coverage_study_base, coverage_study_suite, BSensitivityRow,
    BaseCoverageRow, CoverageError, Estimand, LadderVariant, SuiteCoverageRow,
};
pub use planted::{planted_two_model_suite, PlantedParams};
pub use replay::{random_task_rates, replay_study, ReplayEnv, ReplayResult, ReplaySpec};
