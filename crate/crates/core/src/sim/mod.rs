//! Virtual trials and their operating characteristics.

pub mod engine;
pub mod scenarios;

pub use engine::{
    aggregate, audit_replicate, curve_summary, replicate_seed, run_simulation, run_simulation_with_progress, run_trial,
    CurveSummary, OperatingCharacteristics, ReplicateResult, Simulation, StepAudit,
};
pub use scenarios::{
    builtin_scenario, builtin_scenarios, generate_cohort_outcomes, BioTruth, ScenarioFeatures, ScenarioSpec,
};
