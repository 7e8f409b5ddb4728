use crate::dose::DoseGrid;
use crate::model::{record_prob, ModelParams, OutcomeModel, OutcomeRecord};

/// Observed-data log likelihood Σᵢ log Pr(Yᵢ | dᵢ, θ).
///
/// Under [`OutcomeModel::ToxOnly`] this is the Bernoulli probit likelihood of
/// the DLT outcomes alone. Records must reference valid dose levels; a cell
/// probability of zero contributes −∞.
pub fn log_likelihood(params: &ModelParams, data: &[OutcomeRecord], grid: &DoseGrid, model: OutcomeModel) -> f64 {
    data.iter()
        .map(|rec| {
            let d = grid.covariate(rec.dose_level);
            match record_prob(params, d, rec, model) {
                Ok(p) if p > 0.0 => p.ln(),
                Ok(_) => f64::NEG_INFINITY,
                Err(_) => f64::NAN,
            }
        })
        .sum()
}
