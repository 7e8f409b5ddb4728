//! Overdose risk and target-area probabilities computed from posterior draws.

use serde::{Deserialize, Serialize};

use super::sampler::PosteriorDraws;
use crate::error::{Error, Result};
use crate::model::{bio_response_prob, eff_response_prob, tox_latent_mean, tox_prob, ModelParams};
use crate::normal;

/// Toxicity part of the target area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ToxRule {
    /// DLT probability in `[lower, upper]`.
    Interval { lower: f64, upper: f64 },
    /// DLT probability strictly below `upper`.
    Bound { upper: f64 },
}

impl ToxRule {
    pub fn upper(&self) -> f64 {
        match *self {
            ToxRule::Interval { upper, .. } | ToxRule::Bound { upper } => upper,
        }
    }

    pub fn holds(&self, p: f64) -> bool {
        match *self {
            ToxRule::Interval { lower, upper } => p >= lower && p <= upper,
            ToxRule::Bound { upper } => p < upper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ToxRule::Interval { lower, upper } => {
                if !(lower > 0.0 && lower < upper && upper < 1.0) {
                    return Err(Error::config(
                        "tox_rule",
                        "interval bounds must satisfy 0 < lower < upper < 1",
                    ));
                }
            }
            ToxRule::Bound { upper } => {
                if !(upper > 0.0 && upper < 1.0) {
                    return Err(Error::config("tox_rule.upper", "must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BioDirection {
    /// Response probability must reach the threshold (efficacy-type).
    AtLeast,
    /// Response probability must not exceed the threshold (safety-type).
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BioRule {
    pub direction: BioDirection,
    pub threshold: f64,
}

impl BioRule {
    pub fn holds(&self, p: f64) -> bool {
        match self.direction {
            BioDirection::AtLeast => p >= self.threshold,
            BioDirection::AtMost => p <= self.threshold,
        }
    }
}

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(SPLITMIX_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standard normal ε* attached to posterior draw `index`.
///
/// The value depends only on the draw-set seed and the index, so every dose
/// sees the same ε* for a given draw and repeated evaluations agree.
pub fn latent_noise(seed: u64, index: usize) -> f64 {
    let h = splitmix64(splitmix64(seed) ^ (index as u64).wrapping_mul(SPLITMIX_GAMMA));
    // 53 random bits mapped to the open interval (0, 1)
    let u = ((h >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    normal::inv_cdf(u)
}

/// Per-draw DLT probabilities at covariate `d`.
///
/// Plug-in values are Φ(α₁ + β₁d). Latent-inclusive values add the draw's ε*
/// inside Φ.
pub fn posterior_tox_risk(draws: &PosteriorDraws, d: f64, latent_inclusive: bool) -> Vec<f64> {
    let seed = draws.seed();
    draws
        .draws()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let eta = tox_latent_mean(p, d);
            if latent_inclusive {
                normal::cdf(eta + latent_noise(seed, i))
            } else {
                normal::cdf(eta)
            }
        })
        .collect()
}

/// Posterior probability that the latent-inclusive DLT rate lies in `[tu, 1)`.
pub fn overdose_probability(draws: &PosteriorDraws, d: f64, tu: f64) -> f64 {
    overdose_probabilities(draws, &[d], tu)[0]
}

/// [`overdose_probability`] at several covariates sharing one pass over ε*.
pub fn overdose_probabilities(draws: &PosteriorDraws, ds: &[f64], tu: f64) -> Vec<f64> {
    if !(tu < 1.0) {
        return vec![0.0; ds.len()];
    }
    if !(tu > 0.0) {
        return vec![1.0; ds.len()];
    }
    // Φ(η + ε) ≥ tu  ⇔  η + ε ≥ Φ⁻¹(tu)
    let cut = normal::inv_cdf(tu);
    let seed = draws.seed();
    let mut counts = vec![0usize; ds.len()];
    for (i, p) in draws.draws().iter().enumerate() {
        let eps = latent_noise(seed, i);
        for (c, &d) in counts.iter_mut().zip(ds) {
            if tox_latent_mean(p, d) + eps >= cut {
                *c += 1;
            }
        }
    }
    let n = draws.len() as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Closed-form overdose risk of a dose whose plug-in DLT probability is `pi`.
///
/// Returns `(risk, mean_dlt)` with risk = 1 − Φ(Φ⁻¹(tu) − Φ⁻¹(π)) and
/// mean_dlt = Φ(Φ⁻¹(π)/√2), the mean of Φ(Φ⁻¹(π) + ε).
pub fn overdose_risk_reference(pi: f64, tu: f64) -> (f64, f64) {
    let q = normal::inv_cdf(pi);
    let risk = normal::sf(normal::inv_cdf(tu) - q);
    let mean_dlt = normal::cdf(q / std::f64::consts::SQRT_2);
    (risk, mean_dlt)
}

/// Monte Carlo version of [`overdose_risk_reference`]: draw `n` values of
/// Φ(Φ⁻¹(π) + ε) and report the fraction at or above `tu` and their mean.
pub fn overdose_risk_monte_carlo(pi: f64, tu: f64, n: usize, seed: u64) -> (f64, f64) {
    let q = normal::inv_cdf(pi);
    let mut above = 0usize;
    let mut sum = 0.0;
    for i in 0..n {
        let v = normal::cdf(q + latent_noise(seed, i));
        if v >= tu {
            above += 1;
        }
        sum += v;
    }
    (above as f64 / n as f64, sum / n as f64)
}

/// Per-draw indicator of the target area at covariate `d`, using plug-in
/// probabilities. The efficacy bound applies when the draws carry an efficacy
/// model and the biomarker rule when they carry a biomarker block.
pub fn in_target_area(
    p: &ModelParams,
    d: f64,
    tox_rule: &ToxRule,
    eff_bound: f64,
    bio_rule: Option<&BioRule>,
    with_efficacy: bool,
) -> bool {
    if !tox_rule.holds(tox_prob(p, d)) {
        return false;
    }
    if with_efficacy && eff_response_prob(p, d) < eff_bound {
        return false;
    }
    match (bio_rule, p.biomarker.is_some()) {
        (Some(rule), true) => bio_response_prob(p, d).map(|b| rule.holds(b)).unwrap_or(false),
        _ => true,
    }
}

/// Fraction of posterior draws whose plug-in curves place `d` in the target area.
pub fn target_probability(
    draws: &PosteriorDraws,
    d: f64,
    tox_rule: &ToxRule,
    eff_bound: f64,
    bio_rule: Option<&BioRule>,
) -> f64 {
    let with_eff = draws.model().has_efficacy();
    let hits = draws
        .draws()
        .iter()
        .filter(|p| in_target_area(p, d, tox_rule, eff_bound, bio_rule, with_eff))
        .count();
    hits as f64 / draws.len() as f64
}

/// Sample variances of plug-in and latent-inclusive DLT probabilities at `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InflationCheck {
    pub plug_in_variance: f64,
    pub latent_variance: f64,
}

impl InflationCheck {
    pub fn holds(&self) -> bool {
        self.latent_variance >= self.plug_in_variance
    }
}

fn sample_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn variance_inflation(draws: &PosteriorDraws, d: f64) -> InflationCheck {
    InflationCheck {
        plug_in_variance: sample_variance(&posterior_tox_risk(draws, d, false)),
        latent_variance: sample_variance(&posterior_tox_risk(draws, d, true)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OutcomeModel;

    fn degenerate(alpha1: f64, n: usize) -> PosteriorDraws {
        let p = ModelParams::joint(alpha1, 0.0, -0.5, 0.7, -0.4, 1.0, 0.0);
        PosteriorDraws::from_draws(OutcomeModel::Joint, vec![p; n], 11).unwrap()
    }

    #[test]
    fn plug_in_risk_of_degenerate_draws() {
        let post = degenerate(0.0, 50);
        assert!(posterior_tox_risk(&post, -0.7, false).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn latent_inclusive_mean_at_zero() {
        let post = degenerate(0.0, 100_000);
        let v = posterior_tox_risk(&post, 0.0, true);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        // Var Φ(ε) = 1/12, so the MC s.e. of the mean is about 0.0009
        assert!((m - 0.5).abs() < 0.003, "{m}");
        assert!(sample_variance(&v) > 0.0);
    }

    #[test]
    fn overdose_at_bound_is_half() {
        let tu = 0.33;
        let post = degenerate(normal::inv_cdf(tu), 100_000);
        let p = overdose_probability(&post, 0.0, tu);
        assert!((p - 0.5).abs() < 0.005, "{p}");
        assert_eq!(overdose_probability(&post, 0.0, 1.0), 0.0);
    }

    #[test]
    fn overdose_matches_reference() {
        let post = degenerate(normal::inv_cdf(0.30), 100_000);
        let p = overdose_probability(&post, 0.0, 0.33);
        let (risk, _) = overdose_risk_reference(0.30, 0.33);
        assert!((risk - 0.466_33).abs() < 5e-5);
        let se = (risk * (1.0 - risk) / 1e5).sqrt();
        assert!((p - risk).abs() < 3.0 * se, "{p} vs {risk}");
    }

    #[test]
    fn reference_values() {
        let (risk, mean) = overdose_risk_reference(0.3, 0.3);
        assert!((risk - 0.5).abs() < 1e-12);
        assert!((mean - 0.355_43).abs() < 5e-5);
    }

    #[test]
    fn same_noise_across_doses() {
        assert_eq!(latent_noise(5, 17), latent_noise(5, 17));
        assert_ne!(latent_noise(5, 17), latent_noise(5, 18));
        assert_ne!(latent_noise(5, 17), latent_noise(6, 17));
    }

    #[test]
    fn target_probability_indicators() {
        let rule = ToxRule::Interval {
            lower: 0.16,
            upper: 0.33,
        };
        // tox 0.20 and eff 0.30 at d = 0
        let p = ModelParams::joint(normal::inv_cdf(0.20), 0.3, normal::inv_cdf(0.30), 0.2, -0.1, 1.0, 0.1);
        let post = PosteriorDraws::from_draws(OutcomeModel::Joint, vec![p; 10], 1).unwrap();
        assert_eq!(target_probability(&post, 0.0, &rule, 0.2, None), 1.0);
        let q = ModelParams {
            alpha1: normal::inv_cdf(0.05),
            ..p
        };
        let post = PosteriorDraws::from_draws(OutcomeModel::Joint, vec![q; 10], 1).unwrap();
        assert_eq!(target_probability(&post, 0.0, &rule, 0.2, None), 0.0);
    }

    #[test]
    fn safety_type_biomarker_rule() {
        let mut p = ModelParams::joint(normal::inv_cdf(0.20), 0.0, normal::inv_cdf(0.30), 0.0, 0.0, 1.0, 0.0);
        p.biomarker = Some(crate::model::BiomarkerParams {
            alpha3: normal::inv_cdf(0.54),
            beta3: 0.0,
            gamma3: 0.0,
            rho13: 0.0,
            rho23: 0.0,
        });
        let post = PosteriorDraws::from_draws(OutcomeModel::JointBiomarker, vec![p; 4], 1).unwrap();
        let rule = ToxRule::Interval {
            lower: 0.16,
            upper: 0.33,
        };
        let safety = BioRule {
            direction: BioDirection::AtMost,
            threshold: 0.5,
        };
        assert_eq!(target_probability(&post, 0.0, &rule, 0.2, Some(&safety)), 0.0);
        let efficacy = BioRule {
            direction: BioDirection::AtLeast,
            threshold: 0.5,
        };
        assert_eq!(target_probability(&post, 0.0, &rule, 0.2, Some(&efficacy)), 1.0);
    }

    #[test]
    fn bound_rule_is_strict() {
        let r = ToxRule::Bound { upper: 0.33 };
        assert!(r.holds(0.329));
        assert!(!r.holds(0.33));
        assert!(ToxRule::Interval { lower: 0.4, upper: 0.3 }.validate().is_err());
    }
}
