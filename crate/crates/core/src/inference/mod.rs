//! Priors, likelihood, posterior sampling and overdose-risk summaries.

pub mod diagnostics;
pub mod likelihood;
pub mod prior;
pub mod risk;
pub mod sampler;

pub use likelihood::log_likelihood;
pub use prior::{log_correlation_prior, log_prior, NormalPrior, PriorSpec, UniformPrior};
pub use risk::{
    overdose_probabilities, overdose_probability, overdose_risk_monte_carlo, overdose_risk_reference,
    posterior_tox_risk, target_probability, variance_inflation, BioDirection, BioRule, InflationCheck, ToxRule,
};
pub use sampler::{sample_posterior, McmcConfig, ParamDiagnostics, PosteriorDraws};
