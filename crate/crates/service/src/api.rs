//! JSON payloads. Dose levels on the wire are numbered from 1.

use biodose_core::escalation::{Decision, DecisionKind, EscalationConfig, TrialStatus};
use biodose_core::inference::{BioRule, McmcConfig, PriorSpec, ToxRule};
use biodose_core::sim::{BioTruth, ScenarioSpec};
use biodose_core::{Error, OutcomeRecord};
use serde::{Deserialize, Serialize};

use crate::store::{CohortEntry, Snapshot};

/// Body of `POST /trials`. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateTrialRequest {
    /// Raw doses; defaults to 60, 75, ..., 180 mg.
    pub doses: Option<Vec<f64>>,
    /// Reference dose for the log-dose covariate; defaults to the largest dose.
    pub reference_dose: Option<f64>,
    pub standardize: bool,
    pub design: EscalationConfig,
    pub prior: PriorSpec,
    /// Defaults to the service-wide MCMC settings.
    pub mcmc: Option<McmcConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeIn {
    /// Level the patient was treated at; defaults to the current dose.
    #[serde(default)]
    pub dose_level: Option<usize>,
    pub y_tox: u8,
    pub y_eff: u8,
    #[serde(default)]
    pub y_bio: Option<u8>,
}

/// Body of `POST /trials/{id}/cohorts` and `POST /trials/{id}/whatif`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortRequest {
    pub outcomes: Vec<OutcomeIn>,
}

impl CohortRequest {
    /// Convert to 0-based records, filling in the current dose where omitted.
    pub fn records(&self, current_dose: usize) -> Result<Vec<OutcomeRecord>, Error> {
        self.outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let level = match o.dose_level {
                    Some(0) => {
                        return Err(Error::Protocol(format!(
                            "outcomes[{i}].dose_level: levels are numbered from 1"
                        )))
                    }
                    Some(l) => l - 1,
                    None => current_dose,
                };
                Ok(OutcomeRecord::new(level, o.y_tox, o.y_eff, o.y_bio))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CreatedTrial {
    pub id: String,
    pub trial: TrialView,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum StatusView {
    Active,
    StoppedWithRecommendation { level: usize },
    StoppedNoRecommendation,
}

impl From<TrialStatus> for StatusView {
    fn from(s: TrialStatus) -> Self {
        match s {
            TrialStatus::Active => StatusView::Active,
            TrialStatus::StoppedWithRecommendation { level } => {
                StatusView::StoppedWithRecommendation { level: level + 1 }
            }
            TrialStatus::StoppedNoRecommendation => StatusView::StoppedNoRecommendation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DecisionKindView {
    Escalate,
    Stay,
    DeEscalate,
    StopRecommend { level: usize },
    StopNone,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionView {
    pub kind: DecisionKindView,
    pub j_recommend: Option<usize>,
    pub next_dose: Option<usize>,
    pub admissible: Vec<usize>,
    pub target_probabilities: Vec<f64>,
    pub overdose_risks: Vec<f64>,
    pub posterior_mean_tox: Vec<f64>,
    pub posterior_mean_eff: Option<Vec<f64>>,
    pub mcmc_seed: u64,
    pub convergence_warnings: Vec<String>,
    /// True when the decision was computed for a what-if request and not stored.
    pub hypothetical: bool,
}

impl DecisionView {
    pub fn new(d: &Decision, hypothetical: bool) -> Self {
        let kind = match d.kind {
            DecisionKind::Escalate => DecisionKindView::Escalate,
            DecisionKind::Stay => DecisionKindView::Stay,
            DecisionKind::DeEscalate => DecisionKindView::DeEscalate,
            DecisionKind::StopRecommend { level } => DecisionKindView::StopRecommend { level: level + 1 },
            DecisionKind::StopNone => DecisionKindView::StopNone,
        };
        Self {
            kind,
            j_recommend: d.j_recommend.map(|j| j + 1),
            next_dose: d.next_dose.map(|j| j + 1),
            admissible: d.admissible.iter().map(|j| j + 1).collect(),
            target_probabilities: d.target_probabilities.clone(),
            overdose_risks: d.overdose_risks.clone(),
            posterior_mean_tox: d.posterior_mean_tox.clone(),
            posterior_mean_eff: d.posterior_mean_eff.clone(),
            mcmc_seed: d.mcmc_seed,
            convergence_warnings: d.convergence_warnings.clone(),
            hypothetical,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeView {
    pub dose_level: usize,
    pub y_tox: u8,
    pub y_eff: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_bio: Option<u8>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CohortView {
    pub step: usize,
    pub dose_level: usize,
    pub submitted_at_ms: u64,
    pub outcomes: Vec<OutcomeView>,
    pub decision: DecisionView,
}

impl CohortView {
    fn new(step: usize, c: &CohortEntry) -> Self {
        Self {
            step: step + 1,
            dose_level: c.outcomes.first().map_or(0, |r| r.dose_level + 1),
            submitted_at_ms: c.at_ms,
            outcomes: c
                .outcomes
                .iter()
                .map(|r| OutcomeView {
                    dose_level: r.dose_level + 1,
                    y_tox: r.y_tox,
                    y_eff: r.y_eff,
                    y_bio: r.y_bio,
                })
                .collect(),
            decision: DecisionView::new(&c.decision, false),
        }
    }
}

/// `GET /trials/{id}`.
#[derive(Debug, Clone, Serialize)]
pub struct TrialView {
    pub id: String,
    pub status: StatusView,
    pub current_dose: usize,
    pub doses: Vec<f64>,
    pub reference_dose: f64,
    pub standardize: bool,
    pub enrolled: usize,
    pub patients_per_level: Vec<usize>,
    pub design: EscalationConfig,
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
    pub cohorts: Vec<CohortView>,
    pub last_decision: Option<DecisionView>,
    pub created_at_ms: u64,
    pub updated_at_ms: u64,
}

impl TrialView {
    pub fn new(s: &Snapshot) -> Self {
        let grid = &s.state.grid;
        Self {
            id: s.id.clone(),
            status: s.state.status.into(),
            current_dose: s.state.current_dose + 1,
            doses: grid.raw_doses().to_vec(),
            reference_dose: grid.reference_dose(),
            standardize: grid.is_standardized(),
            enrolled: s.state.records.len(),
            patients_per_level: s.state.patients_per_level(),
            design: s.setup.design,
            prior: s.setup.prior,
            mcmc: s.setup.mcmc,
            cohorts: s
                .cohorts
                .iter()
                .enumerate()
                .map(|(i, c)| CohortView::new(i, c))
                .collect(),
            last_decision: s.cohorts.last().map(|c| DecisionView::new(&c.decision, false)),
            created_at_ms: s.created_ms,
            updated_at_ms: s.updated_ms,
        }
    }
}

/// Posterior mean and central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    /// Summarize a sample; sorts in place.
    pub fn from_sample(v: &mut [f64]) -> Self {
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        Self {
            mean,
            lower: quantile(v, 0.025),
            upper: quantile(v, 0.975),
        }
    }
}

// Linear interpolation between order statistics of a sorted sample.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoseSummary {
    pub level: usize,
    pub dose: f64,
    pub tox: Band,
    pub eff: Option<Band>,
    pub bio: Option<Band>,
    pub overdose_risk: f64,
    pub target_probability: f64,
}

/// `GET /trials/{id}/posterior`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub trial_id: String,
    pub n_patients: usize,
    pub n_draws: usize,
    pub mcmc_seed: u64,
    pub tox_rule: ToxRule,
    pub eff_bound: f64,
    pub bio_rule: Option<BioRule>,
    pub overdose_cutoff: f64,
    pub doses: Vec<DoseSummary>,
}

/// One row of `GET /scenarios/builtin`.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioView {
    pub name: String,
    pub doses: Vec<f64>,
    pub true_tox: Vec<f64>,
    pub true_eff: Vec<f64>,
    pub true_bio: Option<BioTruth>,
    pub target_levels: Vec<usize>,
    pub target_toxicity: Option<String>,
    pub efficacy_curve: Option<String>,
    pub key_features: Option<String>,
    pub design: EscalationConfig,
}

impl ScenarioView {
    pub fn new(s: &ScenarioSpec) -> Self {
        let f = s.features.as_ref();
        Self {
            name: s.name.clone(),
            doses: s.grid.raw_doses().to_vec(),
            true_tox: s.true_tox.clone(),
            true_eff: s.true_eff.clone(),
            true_bio: s.true_bio.clone(),
            target_levels: s.target_levels.iter().map(|j| j + 1).collect(),
            target_toxicity: f.map(|f| f.target_toxicity.clone()),
            efficacy_curve: f.map(|f| f.efficacy_curve.clone()),
            key_features: f.map(|f| f.key_features.clone()),
            design: s.default_design(),
        }
    }
}
