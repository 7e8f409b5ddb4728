use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, OutcomeModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normal prior given by mean and *variance*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalPrior {
    pub mean: f64,
    pub variance: f64,
}

impl NormalPrior {
    pub const fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        -0.5 * (LN_2PI + self.variance.ln()) - 0.5 * (x - self.mean).powi(2) / self.variance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniformPrior {
    pub low: f64,
    pub high: f64,
}

impl UniformPrior {
    pub fn log_density(&self, x: f64) -> f64 {
        if x > self.low && x < self.high {
            -(self.high - self.low).ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// Priors on the model parameters.
///
/// The latent correlation matrix gets the distribution of a Wishart(df, I)
/// matrix rescaled to unit diagonal, i.e. density ∝ |R|^((df − K − 1)/2) on
/// K×K correlation matrices (an LKJ law with shape (df − K + 1)/2). With K = 2
/// and df = 3 this is uniform on ρ ∈ [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub alpha1: NormalPrior,
    pub beta1: NormalPrior,
    pub alpha2: NormalPrior,
    pub beta2: NormalPrior,
    pub gamma2: NormalPrior,
    pub alpha3: NormalPrior,
    pub beta3: NormalPrior,
    pub gamma3: NormalPrior,
    pub zeta: UniformPrior,
    pub wishart_df: u32,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            alpha1: NormalPrior::new(-1.0, 1.25),
            beta1: NormalPrior::new(0.5, 1.25),
            alpha2: NormalPrior::new(-0.5, 1.25),
            beta2: NormalPrior::new(0.7, 1.25),
            gamma2: NormalPrior::new(-0.4, 1.0),
            alpha3: NormalPrior::new(-0.5, 1.25),
            beta3: NormalPrior::new(0.7, 1.25),
            gamma3: NormalPrior::new(-0.4, 1.0),
            zeta: UniformPrior { low: 0.0, high: 6.0 },
            wishart_df: 3,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self, model: OutcomeModel) -> Result<()> {
        let normals = [
            ("alpha1", self.alpha1),
            ("beta1", self.beta1),
            ("alpha2", self.alpha2),
            ("beta2", self.beta2),
            ("gamma2", self.gamma2),
            ("alpha3", self.alpha3),
            ("beta3", self.beta3),
            ("gamma3", self.gamma3),
        ];
        for (name, p) in normals {
            if !(p.variance > 0.0 && p.variance.is_finite()) {
                return Err(Error::config(format!("prior.{name}.variance"), "must be positive"));
            }
            if !p.mean.is_finite() {
                return Err(Error::config(format!("prior.{name}.mean"), "must be finite"));
            }
        }
        if !(self.zeta.low >= 0.0 && self.zeta.low < self.zeta.high && self.zeta.high.is_finite()) {
            return Err(Error::config("prior.zeta", "bounds must satisfy 0 <= low < high"));
        }
        if (self.wishart_df as usize) < model.dim().max(2) {
            return Err(Error::config(
                "prior.wishart_df",
                format!("must be at least the latent dimension {}", model.dim().max(2)),
            ));
        }
        Ok(())
    }

    /// Normal priors of the regression coefficients in sampler order.
    pub(crate) fn coefficient_priors(&self, model: OutcomeModel) -> Vec<NormalPrior> {
        let mut v = vec![self.alpha1, self.beta1];
        if model.has_efficacy() {
            v.extend([self.alpha2, self.beta2, self.gamma2]);
        }
        if model.has_biomarker() {
            v.extend([self.alpha3, self.beta3, self.gamma3]);
        }
        v
    }

    /// LKJ shape implied by the normalized Wishart prior in dimension `k`.
    pub(crate) fn lkj_shape(&self, k: usize) -> f64 {
        (self.wishart_df as f64 - k as f64 + 1.0) / 2.0
    }
}

/// Log normalizing constant of the LKJ(η) density on K×K correlation matrices.
pub(crate) fn lkj_log_normalizer(k: usize, eta: f64) -> f64 {
    let mut c = 0.0;
    for i in 1..k {
        let m = (k - i) as f64;
        let a = eta + (m - 1.0) / 2.0;
        c += (2.0 * eta - 2.0 + m) * m * std::f64::consts::LN_2 + m * ln_beta(a, a);
    }
    c
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// log|R| for a unit-diagonal correlation matrix given by its off-diagonals;
/// `None` when R is not positive definite.
pub(crate) fn log_det_corr(rho12: f64, rho13: f64, rho23: f64, k: usize) -> Option<f64> {
    let det = match k {
        1 => 1.0,
        2 => 1.0 - rho12 * rho12,
        _ => 1.0 + 2.0 * rho12 * rho13 * rho23 - rho12 * rho12 - rho13 * rho13 - rho23 * rho23,
    };
    let ok = det > 0.0 && rho12.abs() < 1.0 && rho13.abs() < 1.0 && rho23.abs() < 1.0;
    ok.then(|| det.ln())
}

/// Log prior density of the correlation structure.
pub fn log_correlation_prior(params: &ModelParams, prior: &PriorSpec, model: OutcomeModel) -> f64 {
    let k = model.dim();
    if k < 2 {
        return 0.0;
    }
    let (r13, r23) = match (&params.biomarker, k) {
        (Some(b), 3) => (b.rho13, b.rho23),
        _ => (0.0, 0.0),
    };
    let eta = prior.lkj_shape(k);
    match log_det_corr(params.rho, r13, r23, k) {
        Some(ld) => (eta - 1.0) * ld - lkj_log_normalizer(k, eta),
        None => f64::NEG_INFINITY,
    }
}

/// Log joint prior density of `params` under `model`.
///
/// Includes every normalizing constant, so at the prior means the value is
/// the plain sum of the component log densities. ζ outside its bounds gives
/// −∞.
pub fn log_prior(params: &ModelParams, prior: &PriorSpec, model: OutcomeModel) -> f64 {
    let mut lp = prior.alpha1.log_density(params.alpha1) + prior.beta1.log_density(params.beta1);
    if model.has_efficacy() {
        lp += prior.alpha2.log_density(params.alpha2)
            + prior.beta2.log_density(params.beta2)
            + prior.gamma2.log_density(params.gamma2)
            + prior.zeta.log_density(params.zeta);
    }
    if model.has_biomarker() {
        let Some(b) = &params.biomarker else {
            return f64::NEG_INFINITY;
        };
        lp +=
            prior.alpha3.log_density(b.alpha3) + prior.beta3.log_density(b.beta3) + prior.gamma3.log_density(b.gamma3);
    }
    lp + log_correlation_prior(params, prior, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BiomarkerParams;

    fn at_means(prior: &PriorSpec) -> ModelParams {
        ModelParams::joint(
            prior.alpha1.mean,
            prior.beta1.mean,
            prior.alpha2.mean,
            prior.beta2.mean,
            prior.gamma2.mean,
            1.0,
            0.0,
        )
    }

    #[test]
    fn log_prior_at_means_is_sum_of_peaks() {
        let prior = PriorSpec::default();
        let lp = log_prior(&at_means(&prior), &prior, OutcomeModel::Joint);
        // four N(·, 1.25) peaks, one N(·, 1) peak, U(0, 6) and uniform ρ on [-1, 1]
        let peak = |v: f64| -0.5 * (2.0 * std::f64::consts::PI * v).ln();
        let expect = 4.0 * peak(1.25) + peak(1.0) - 6f64.ln() - 2f64.ln();
        assert!((lp - expect).abs() < 1e-12, "{lp} vs {expect}");
    }

    #[test]
    fn zeta_outside_support() {
        let prior = PriorSpec::default();
        let mut p = at_means(&prior);
        p.zeta = 7.0;
        assert_eq!(log_prior(&p, &prior, OutcomeModel::Joint), f64::NEG_INFINITY);
        // the toxicity-only model does not involve ζ
        assert!(log_prior(&p, &prior, OutcomeModel::ToxOnly).is_finite());
    }

    #[test]
    fn deterministic() {
        let prior = PriorSpec::default();
        let p = ModelParams::joint(0.3, -0.1, 0.2, 1.0, -0.9, 2.2, 0.4);
        assert_eq!(
            log_prior(&p, &prior, OutcomeModel::Joint).to_bits(),
            log_prior(&p, &prior, OutcomeModel::Joint).to_bits()
        );
    }

    #[test]
    fn lkj_normalizer_closed_forms() {
        // K = 2: ∫(1 − ρ²)^(η−1) dρ = 2^(2η−1) B(η, η)
        for eta in [0.5, 1.0, 1.5, 3.0] {
            let expect = (2.0 * eta - 1.0) * std::f64::consts::LN_2 + ln_beta(eta, eta);
            assert!((lkj_log_normalizer(2, eta) - expect).abs() < 1e-12);
        }
        // K = 3, η = 1: volume of the 3×3 elliptope is π²/2
        let vol = std::f64::consts::PI.powi(2) / 2.0;
        assert!((lkj_log_normalizer(3, 1.0) - vol.ln()).abs() < 1e-12);
    }

    #[test]
    fn trivariate_prior_with_df_four_is_uniform_on_elliptope() {
        let prior = PriorSpec {
            wishart_df: 4,
            ..PriorSpec::default()
        };
        let mut p = at_means(&prior);
        p.rho = 0.2;
        p.biomarker = Some(BiomarkerParams {
            alpha3: 0.0,
            beta3: 0.0,
            gamma3: 0.0,
            rho13: -0.3,
            rho23: 0.5,
        });
        let lc = log_correlation_prior(&p, &prior, OutcomeModel::JointBiomarker);
        let expect = (2.0 / std::f64::consts::PI.powi(2)).ln();
        assert!((lc - expect).abs() < 1e-12);
        p.biomarker.as_mut().unwrap().rho23 = -0.99;
        p.rho = 0.9;
        p.biomarker.as_mut().unwrap().rho13 = 0.9;
        assert_eq!(
            log_correlation_prior(&p, &prior, OutcomeModel::JointBiomarker),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn validation() {
        let mut prior = PriorSpec::default();
        assert!(prior.validate(OutcomeModel::JointBiomarker).is_ok());
        prior.beta2.variance = 0.0;
        assert!(matches!(
            prior.validate(OutcomeModel::Joint),
            Err(Error::Config { field, .. }) if field == "prior.beta2.variance"
        ));
        let prior = PriorSpec {
            wishart_df: 2,
            ..PriorSpec::default()
        };
        assert!(prior.validate(OutcomeModel::JointBiomarker).is_err());
    }
}
