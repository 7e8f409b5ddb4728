//! Bayesian dose finding with a latent probit model for a binary toxicity
//! outcome, an ordinal efficacy outcome and an optional binary biomarker.

pub mod dose;
pub mod error;
pub mod escalation;
pub mod inference;
pub mod model;
pub mod normal;
pub mod sim;

pub use dose::{log_relative_dose, DoseGrid};
pub use error::{Error, Result};
pub use model::{BiomarkerParams, ModelParams, OutcomeModel, OutcomeRecord};
