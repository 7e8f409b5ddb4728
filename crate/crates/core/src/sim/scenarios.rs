use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dose::DoseGrid;
use crate::error::{Error, Result};
use crate::escalation::EscalationConfig;
use crate::inference::{BioDirection, BioRule};
use crate::model::{OutcomeModel, OutcomeRecord};
use crate::normal;

/// True biomarker response rates with the rule the design applies to them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BioTruth {
    pub probs: Vec<f64>,
    pub rule: BioRule,
}

/// Short descriptions of a scenario's shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFeatures {
    pub target_toxicity: String,
    pub efficacy_curve: String,
    pub key_features: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub grid: DoseGrid,
    pub true_tox: Vec<f64>,
    pub true_eff: Vec<f64>,
    #[serde(default)]
    pub true_bio: Option<BioTruth>,
    /// 0-based target levels.
    pub target_levels: Vec<usize>,
    /// Correlation of the latent normals used to generate outcomes; 0 gives
    /// independent margins.
    #[serde(default)]
    pub outcome_correlation: f64,
    #[serde(default)]
    pub features: Option<ScenarioFeatures>,
}

fn check_probs(field: &str, probs: &[f64], n: usize) -> Result<()> {
    if probs.len() != n {
        return Err(Error::config(
            field,
            format!("expected {n} values, got {}", probs.len()),
        ));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
        return Err(Error::config(field, format!("{p} is not a probability")));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.grid.len();
        check_probs("true_tox", &self.true_tox, n)?;
        check_probs("true_eff", &self.true_eff, n)?;
        if let Some(bio) = &self.true_bio {
            check_probs("true_bio.probs", &bio.probs, n)?;
            if !(bio.rule.threshold > 0.0 && bio.rule.threshold < 1.0) {
                return Err(Error::config("true_bio.rule.threshold", "must lie in (0, 1)"));
            }
        }
        if self.target_levels.is_empty() {
            return Err(Error::config("target_levels", "at least one target level is required"));
        }
        if let Some(j) = self.target_levels.iter().find(|&&j| j >= n) {
            return Err(Error::config(
                "target_levels",
                format!("level {} is outside the grid", j + 1),
            ));
        }
        if !(self.outcome_correlation >= 0.0 && self.outcome_correlation < 1.0) {
            return Err(Error::config("outcome_correlation", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn n_levels(&self) -> usize {
        self.grid.len()
    }

    /// Levels above the highest target whose true DLT rate exceeds `tu`.
    pub fn over_toxic_levels(&self, tu: f64) -> Vec<usize> {
        let top = self.target_levels.iter().copied().max().unwrap_or(0);
        (top + 1..self.n_levels()).filter(|&j| self.true_tox[j] > tu).collect()
    }

    /// The default design for this scenario: the three-outcome model with the
    /// scenario's biomarker rule when it has a biomarker, the joint model otherwise.
    pub fn default_design(&self) -> EscalationConfig {
        match &self.true_bio {
            Some(bio) => EscalationConfig {
                model: OutcomeModel::JointBiomarker,
                bio_rule: Some(bio.rule),
                ..EscalationConfig::default()
            },
            None => EscalationConfig::default(),
        }
    }
}

/// Simulate `n` patients treated at `level`.
///
/// Each outcome is a threshold of a standard normal latent; the latents are
/// exchangeable with correlation `outcome_correlation` (independent by
/// default). Efficacy responders are split evenly between the mild and high
/// categories. The biomarker is drawn only when the scenario defines one.
pub fn generate_cohort_outcomes<R: Rng + ?Sized>(
    scenario: &ScenarioSpec,
    level: usize,
    n: usize,
    rng: &mut R,
) -> Vec<OutcomeRecord> {
    let r = scenario.outcome_correlation;
    let (shared_w, own_w) = (r.sqrt(), (1.0 - r).sqrt());
    let below = |p: f64, z: f64| -> bool {
        // event with probability p: z falls below Φ⁻¹(p)
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            z < normal::inv_cdf(p)
        }
    };
    (0..n)
        .map(|_| {
            let shared = if r > 0.0 { normal::std_normal(rng) } else { 0.0 };
            let mut latent = || shared_w * shared + own_w * normal::std_normal(rng);
            let z_tox = latent();
            let z_eff = latent();
            let z_bio = scenario.true_bio.as_ref().map(|_| latent());
            let y_tox = below(scenario.true_tox[level], z_tox) as u8;
            let y_eff = if below(scenario.true_eff[level], z_eff) {
                if rng.random_bool(0.5) {
                    2
                } else {
                    1
                }
            } else {
                0
            };
            let y_bio = scenario
                .true_bio
                .as_ref()
                .zip(z_bio)
                .map(|(b, z)| below(b.probs[level], z) as u8);
            OutcomeRecord::new(level, y_tox, y_eff, y_bio)
        })
        .collect()
}

fn features(t: &str, e: &str, k: &str) -> Option<ScenarioFeatures> {
    Some(ScenarioFeatures {
        target_toxicity: t.into(),
        efficacy_curve: e.into(),
        key_features: k.into(),
    })
}

const TOX_A: [f64; 9] = [0.01, 0.05, 0.10, 0.18, 0.27, 0.38, 0.5, 0.55, 0.7];
const BIO_RISING: [f64; 9] = [0.08, 0.12, 0.23, 0.28, 0.35, 0.41, 0.46, 0.51, 0.54];

fn scenario(
    number: usize,
    tox: [f64; 9],
    eff: [f64; 9],
    bio: Option<([f64; 9], BioDirection, f64)>,
    targets_1based: &[usize],
    feats: Option<ScenarioFeatures>,
) -> ScenarioSpec {
    ScenarioSpec {
        name: format!("scenario{number}"),
        grid: DoseGrid::default_nine_dose(),
        true_tox: tox.to_vec(),
        true_eff: eff.to_vec(),
        true_bio: bio.map(|(p, direction, threshold)| BioTruth {
            probs: p.to_vec(),
            rule: BioRule { direction, threshold },
        }),
        target_levels: targets_1based.iter().map(|j| j - 1).collect(),
        outcome_correlation: 0.0,
        features: feats,
    }
}

/// The nine reference scenarios on the 60–180 mg grid.
///
/// Scenarios 1–6 have toxicity and efficacy only; 7–9 add a biomarker. The
/// biomarker direction of each of 7–9 is the one under which the listed
/// target level is exactly the set of safe doses passing the biomarker cut.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    use BioDirection::*;
    vec![
        scenario(
            1,
            TOX_A,
            [0.05, 0.1, 0.18, 0.22, 0.23, 0.24, 0.25, 0.26, 0.27],
            None,
            &[4, 5],
            features(
                "Two candidates",
                "Plateau, similar for target doses",
                "Response rate just above cut off",
            ),
        ),
        scenario(
            2,
            TOX_A,
            [0.05, 0.1, 0.18, 0.38, 0.4, 0.42, 0.44, 0.45, 0.46],
            None,
            &[4, 5],
            features(
                "Two candidates",
                "Plateau, similar for target doses",
                "High response rate",
            ),
        ),
        scenario(
            3,
            TOX_A,
            [0.05, 0.1, 0.18, 0.28, 0.4, 0.42, 0.44, 0.45, 0.46],
            None,
            &[4, 5],
            features(
                "Two candidates",
                "Plateau, monotone for target doses",
                "Increasing response rate for target doses",
            ),
        ),
        scenario(
            4,
            TOX_A,
            [0.05, 0.15, 0.25, 0.38, 0.25, 0.2, 0.19, 0.19, 0.19],
            None,
            &[4, 5],
            features(
                "Two candidates",
                "Bell shape, peak in mid dose level",
                "Decreasing response rate for target doses",
            ),
        ),
        scenario(
            5,
            [0.01, 0.05, 0.08, 0.12, 0.18, 0.27, 0.38, 0.5, 0.55],
            [0.05, 0.15, 0.25, 0.38, 0.25, 0.2, 0.19, 0.19, 0.19],
            None,
            &[5, 6],
            features(
                "Two candidates",
                "Bell shape, peak in early dose level",
                "Decreasing response rate for target doses",
            ),
        ),
        scenario(
            6,
            [0.01, 0.05, 0.10, 0.14, 0.25, 0.35, 0.5, 0.55, 0.7],
            [0.05, 0.1, 0.18, 0.25, 0.38, 0.28, 0.2, 0.19, 0.19],
            None,
            &[5],
            features("One candidate", "Bell shape", "Target dose with highest response"),
        ),
        scenario(
            7,
            TOX_A,
            [0.05, 0.10, 0.18, 0.22, 0.23, 0.24, 0.25, 0.26, 0.27],
            Some((BIO_RISING, AtMost, 0.3)),
            &[4],
            features(
                "Two candidates",
                "Plateau, similar for target doses",
                "Safety biomarker rising with dose, kept at or below 0.3",
            ),
        ),
        scenario(
            8,
            TOX_A,
            [0.05, 0.10, 0.18, 0.38, 0.4, 0.42, 0.44, 0.45, 0.46],
            Some((BIO_RISING, AtLeast, 0.25)),
            &[4, 5],
            features(
                "Two candidates",
                "Plateau, similar for target doses",
                "Biomarker rising with dose, required at or above 0.25",
            ),
        ),
        scenario(
            9,
            TOX_A,
            [0.05, 0.10, 0.18, 0.28, 0.4, 0.42, 0.44, 0.45, 0.46],
            Some(([0.80, 0.78, 0.65, 0.55, 0.43, 0.35, 0.30, 0.2, 0.2], AtLeast, 0.5)),
            &[4],
            features(
                "Two candidates",
                "Plateau, monotone for target doses",
                "Biomarker falling with dose, required to stay at or above 0.5",
            ),
        ),
    ]
}

/// Look up a builtin scenario by name (`scenario3`) or number (`3`).
pub fn builtin_scenario(name: &str) -> Result<ScenarioSpec> {
    let key = name.trim().to_ascii_lowercase();
    let key = if key.chars().all(|c| c.is_ascii_digit()) {
        format!("scenario{key}")
    } else {
        key.replace([' ', '_', '-'], "")
    };
    builtin_scenarios()
        .into_iter()
        .find(|s| s.name == key)
        .ok_or_else(|| Error::config("scenario", format!("unknown builtin scenario '{name}'")))
}
