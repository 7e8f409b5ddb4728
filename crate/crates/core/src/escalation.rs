//! The dose-finding loop: overdose-controlled admissibility, target-dose
//! selection, one-level moves and stopping.
//!
//! Dose levels are 0-based throughout the library.

use serde::{Deserialize, Serialize};

use crate::dose::DoseGrid;
use crate::error::{Error, Result};
use crate::inference::risk::{in_target_area, splitmix64};
use crate::inference::{
    overdose_probabilities, sample_posterior, BioRule, McmcConfig, PosteriorDraws, PriorSpec, ToxRule,
};
use crate::model::{eff_response_prob, tox_prob, OutcomeModel, OutcomeRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscalationConfig {
    pub model: OutcomeModel,
    pub tox_rule: ToxRule,
    pub eff_bound: f64,
    pub bio_rule: Option<BioRule>,
    pub overdose_cutoff: f64,
    pub cohort_size: usize,
    pub max_patients: usize,
    pub stop_on_retest: bool,
    pub min_cohort_observed: usize,
}

impl Default for EscalationConfig {
    fn default() -> Self {
        Self {
            model: OutcomeModel::Joint,
            tox_rule: ToxRule::Interval {
                lower: 0.16,
                upper: 0.33,
            },
            eff_bound: 0.2,
            bio_rule: None,
            overdose_cutoff: 0.4,
            cohort_size: 3,
            max_patients: 54,
            stop_on_retest: true,
            min_cohort_observed: 3,
        }
    }
}

impl EscalationConfig {
    pub fn validate(&self) -> Result<()> {
        self.tox_rule.validate()?;
        if !(self.eff_bound > 0.0 && self.eff_bound < 1.0) {
            return Err(Error::config("eff_bound", "must lie in (0, 1)"));
        }
        if !(self.overdose_cutoff > 0.0 && self.overdose_cutoff <= 1.0) {
            return Err(Error::config("overdose_cutoff", "must lie in (0, 1]"));
        }
        if self.cohort_size < 1 {
            return Err(Error::config("cohort_size", "must be at least 1"));
        }
        if self.max_patients < self.cohort_size {
            return Err(Error::config("max_patients", "must be at least cohort_size"));
        }
        if self.min_cohort_observed < 1 || self.min_cohort_observed > self.cohort_size {
            return Err(Error::config("min_cohort_observed", "must lie in 1..=cohort_size"));
        }
        match (&self.bio_rule, self.model) {
            (Some(rule), OutcomeModel::JointBiomarker) => {
                if !(rule.threshold > 0.0 && rule.threshold < 1.0) {
                    return Err(Error::config("bio_rule.threshold", "must lie in (0, 1)"));
                }
            }
            (Some(_), _) => {
                return Err(Error::config("bio_rule", "requires the joint_biomarker model"));
            }
            (None, _) => {}
        }
        Ok(())
    }

    /// Size of the next cohort given the patients already enrolled.
    pub fn next_cohort_size(&self, enrolled: usize) -> usize {
        self.cohort_size.min(self.max_patients.saturating_sub(enrolled))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrialStatus {
    Active,
    StoppedWithRecommendation { level: usize },
    StoppedNoRecommendation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub grid: DoseGrid,
    pub records: Vec<OutcomeRecord>,
    pub current_dose: usize,
    pub cohorts_at_dose: Vec<usize>,
    pub recommendation_history: Vec<Option<usize>>,
    pub status: TrialStatus,
}

impl TrialState {
    /// A fresh trial at the lowest dose.
    pub fn new(grid: DoseGrid) -> Self {
        let n = grid.len();
        Self {
            grid,
            records: Vec::new(),
            current_dose: 0,
            cohorts_at_dose: vec![0; n],
            recommendation_history: Vec::new(),
            status: TrialStatus::Active,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == TrialStatus::Active
    }

    /// Number of completed escalation steps.
    pub fn steps(&self) -> usize {
        self.recommendation_history.len()
    }

    pub fn patients_per_level(&self) -> Vec<usize> {
        let mut v = vec![0; self.grid.len()];
        for r in &self.records {
            v[r.dose_level] += 1;
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DecisionKind {
    Escalate,
    Stay,
    DeEscalate,
    StopRecommend { level: usize },
    StopNone,
}

impl DecisionKind {
    pub fn is_stop(&self) -> bool {
        matches!(self, DecisionKind::StopRecommend { .. } | DecisionKind::StopNone)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub j_recommend: Option<usize>,
    /// Dose for the next cohort; `None` once the trial stops.
    pub next_dose: Option<usize>,
    pub admissible: Vec<usize>,
    pub target_probabilities: Vec<f64>,
    pub overdose_risks: Vec<f64>,
    pub posterior_mean_tox: Vec<f64>,
    pub posterior_mean_eff: Option<Vec<f64>>,
    pub mcmc_seed: u64,
    pub convergence_warnings: Vec<String>,
}

/// Levels whose latent-inclusive overdose probability is below the cutoff.
pub fn admissible_doses(draws: &PosteriorDraws, grid: &DoseGrid, cfg: &EscalationConfig) -> Vec<usize> {
    admissible_from_risks(
        &overdose_probabilities(draws, grid.covariates(), cfg.tox_rule.upper()),
        cfg,
    )
}

fn admissible_from_risks(risks: &[f64], cfg: &EscalationConfig) -> Vec<usize> {
    // a cutoff of 1 places no constraint
    risks
        .iter()
        .enumerate()
        .filter(|&(_, &r)| cfg.overdose_cutoff >= 1.0 || r < cfg.overdose_cutoff)
        .map(|(j, _)| j)
        .collect()
}

/// Target-area probability at every level of the grid.
pub fn target_probabilities(draws: &PosteriorDraws, grid: &DoseGrid, cfg: &EscalationConfig) -> Vec<f64> {
    let with_eff = draws.model().has_efficacy();
    let mut hits = vec![0usize; grid.len()];
    for p in draws.draws() {
        for (j, h) in hits.iter_mut().enumerate() {
            if in_target_area(
                p,
                grid.covariate(j),
                &cfg.tox_rule,
                cfg.eff_bound,
                cfg.bio_rule.as_ref(),
                with_eff,
            ) {
                *h += 1;
            }
        }
    }
    let n = draws.len() as f64;
    hits.into_iter().map(|h| h as f64 / n).collect()
}

/// Argmax of the target probability over `admissible`, ties to the lower level.
pub fn select_target_dose(
    draws: &PosteriorDraws,
    grid: &DoseGrid,
    cfg: &EscalationConfig,
    admissible: &[usize],
) -> Option<usize> {
    argmax_lowest(&target_probabilities(draws, grid, cfg), admissible)
}

fn argmax_lowest(probs: &[f64], admissible: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &j in admissible {
        match best {
            Some(b) if probs[j] < probs[b] || (probs[j] == probs[b] && j > b) => {}
            _ => best = Some(j),
        }
    }
    best
}

/// One-level move toward the recommendation.
pub fn next_dose(j_recommend: usize, j_curr: usize) -> usize {
    use std::cmp::Ordering::*;
    match j_recommend.cmp(&j_curr) {
        Greater => j_curr + 1,
        Equal => j_curr,
        Less => j_curr - 1,
    }
}

/// Stopping and movement decision for a state that already includes the
/// latest cohort.
pub fn check_stopping(state: &TrialState, j_recommend: Option<usize>, cfg: &EscalationConfig) -> DecisionKind {
    let Some(j) = j_recommend else {
        return DecisionKind::StopNone;
    };
    if state.records.len() >= cfg.max_patients {
        return DecisionKind::StopRecommend { level: j };
    }
    if cfg.stop_on_retest && state.cohorts_at_dose[j] >= 2 {
        return DecisionKind::StopRecommend { level: j };
    }
    use std::cmp::Ordering::*;
    match j.cmp(&state.current_dose) {
        Greater => DecisionKind::Escalate,
        Equal => DecisionKind::Stay,
        Less => DecisionKind::DeEscalate,
    }
}

/// MCMC seed used at escalation step `step` of a trial seeded with `base`.
pub fn step_seed(base: u64, step: usize) -> u64 {
    splitmix64(base ^ splitmix64(step as u64 ^ 0x5354_4550))
}

fn check_outcomes(state: &TrialState, outcomes: &[OutcomeRecord], cfg: &EscalationConfig) -> Result<()> {
    if !state.is_active() {
        return Err(Error::Lifecycle("trial has stopped".into()));
    }
    let remaining = cfg.max_patients.saturating_sub(state.records.len());
    let required = cfg.min_cohort_observed.min(remaining);
    if outcomes.len() < required.max(1) {
        return Err(Error::Protocol(format!(
            "cohort has {} observed patients, at least {} required",
            outcomes.len(),
            required.max(1)
        )));
    }
    if outcomes.len() > remaining {
        return Err(Error::Protocol(format!(
            "cohort of {} would exceed the maximum of {} patients",
            outcomes.len(),
            cfg.max_patients
        )));
    }
    for rec in outcomes {
        if rec.dose_level != state.current_dose {
            return Err(Error::Protocol(format!(
                "outcome at dose level {} but the current dose level is {}",
                rec.dose_level, state.current_dose
            )));
        }
        rec.validate(state.grid.len())
            .map_err(|e| Error::Protocol(e.to_string()))?;
        if cfg.model.has_biomarker() && rec.y_bio.is_none() {
            return Err(Error::Protocol("biomarker outcome missing".into()));
        }
    }
    Ok(())
}

/// Append a cohort, refit the posterior and decide the next move.
///
/// The MCMC seed is derived from `mcmc.seed` and the step number, so the
/// decision is a pure function of its inputs.
pub fn run_escalation_step(
    state: &TrialState,
    new_outcomes: &[OutcomeRecord],
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    cfg: &EscalationConfig,
) -> Result<(Decision, TrialState)> {
    run_escalation_step_with_posterior(state, new_outcomes, prior, mcmc, cfg).map(|(d, s, _)| (d, s))
}

/// [`run_escalation_step`] that also hands back the fitted posterior.
pub fn run_escalation_step_with_posterior(
    state: &TrialState,
    new_outcomes: &[OutcomeRecord],
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    cfg: &EscalationConfig,
) -> Result<(Decision, TrialState, PosteriorDraws)> {
    cfg.validate()?;
    check_outcomes(state, new_outcomes, cfg)?;

    let mut next = state.clone();
    next.records.extend_from_slice(new_outcomes);
    next.cohorts_at_dose[state.current_dose] += 1;

    let seed = step_seed(mcmc.seed, state.steps());
    let draws = sample_posterior(&next.records, &next.grid, prior, &mcmc.with_seed(seed), cfg.model)?;
    let decision = decide(&next, &draws, cfg, seed);

    next.recommendation_history.push(decision.j_recommend);
    match (decision.kind, decision.next_dose) {
        (DecisionKind::StopRecommend { level }, _) => {
            next.status = TrialStatus::StoppedWithRecommendation { level };
        }
        (DecisionKind::StopNone, _) => next.status = TrialStatus::StoppedNoRecommendation,
        (_, Some(d)) => next.current_dose = d,
        (_, None) => unreachable!("continuing decisions carry a next dose"),
    }
    Ok((decision, next, draws))
}

fn decide(state: &TrialState, draws: &PosteriorDraws, cfg: &EscalationConfig, seed: u64) -> Decision {
    let grid = &state.grid;
    let overdose_risks = overdose_probabilities(draws, grid.covariates(), cfg.tox_rule.upper());
    let admissible = admissible_from_risks(&overdose_risks, cfg);
    let target = target_probabilities(draws, grid, cfg);
    let j_recommend = argmax_lowest(&target, &admissible);
    let kind = check_stopping(state, j_recommend, cfg);
    let next_dose = match (kind.is_stop(), j_recommend) {
        (false, Some(j)) => Some(next_dose(j, state.current_dose)),
        _ => None,
    };
    let posterior_mean_tox = grid
        .covariates()
        .iter()
        .map(|&d| draws.mean_of(|p| tox_prob(p, d)))
        .collect();
    let posterior_mean_eff = cfg.model.has_efficacy().then(|| {
        grid.covariates()
            .iter()
            .map(|&d| draws.mean_of(|p| eff_response_prob(p, d)))
            .collect()
    });
    Decision {
        kind,
        j_recommend,
        next_dose,
        admissible,
        target_probabilities: target,
        overdose_risks,
        posterior_mean_tox,
        posterior_mean_eff,
        mcmc_seed: seed,
        convergence_warnings: draws.convergence_warnings(1.1, 100.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::normal;

    #[test]
    fn next_dose_moves_one_level() {
        assert_eq!(next_dose(5, 3), 4);
        assert_eq!(next_dose(4, 4), 4);
        assert_eq!(next_dose(2, 4), 3);
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let probs = [0.1, 0.5, 0.5, 0.2];
        assert_eq!(argmax_lowest(&probs, &[0, 1, 2, 3]), Some(1));
        assert_eq!(argmax_lowest(&probs, &[2, 3]), Some(2));
        assert_eq!(argmax_lowest(&probs, &[]), None);
    }

    #[test]
    fn target_selection_on_three_levels() {
        // tox (0.05, 0.20, 0.40) and eff (0.1, 0.3, 0.5) reproduced exactly by
        // per-level degenerate draw sets
        let grid = DoseGrid::new(vec![60.0, 120.0, 180.0], 180.0).unwrap();
        let tox = [0.05, 0.20, 0.40];
        let eff = [0.1, 0.3, 0.5];
        let cfg = EscalationConfig::default();
        let mut probs = Vec::new();
        for j in 0..3 {
            let p = ModelParams::joint(
                normal::inv_cdf(tox[j]),
                0.0,
                normal::inv_cdf(eff[j]),
                0.0,
                0.0,
                1.0,
                0.0,
            );
            let post = PosteriorDraws::from_draws(OutcomeModel::Joint, vec![p; 5], 0).unwrap();
            probs.push(target_probabilities(&post, &grid, &cfg)[j]);
        }
        assert_eq!(probs, vec![0.0, 1.0, 0.0]);
        assert_eq!(argmax_lowest(&probs, &[0, 1, 2]), Some(1));
    }

    #[test]
    fn admissibility_thresholds() {
        let cfg = EscalationConfig::default();
        assert_eq!(admissible_from_risks(&[0.1, 0.35, 0.5], &cfg), vec![0, 1]);
        let open = EscalationConfig {
            overdose_cutoff: 1.0,
            ..cfg
        };
        assert_eq!(admissible_from_risks(&[0.1, 0.35, 1.0], &open), vec![0, 1, 2]);
        assert!(admissible_from_risks(&[0.9, 0.95], &cfg).is_empty());
    }

    fn state_with(cohorts: &[(usize, usize)], current: usize) -> TrialState {
        let mut s = TrialState::new(DoseGrid::default_nine_dose());
        for &(level, n) in cohorts {
            for _ in 0..n {
                s.records.extend((0..3).map(|_| OutcomeRecord::new(level, 0, 0, None)));
                s.cohorts_at_dose[level] += 1;
            }
        }
        s.current_dose = current;
        s
    }

    #[test]
    fn stopping_rules() {
        let cfg = EscalationConfig::default();
        // 54 patients reached
        let full = state_with(&[(0, 1), (1, 1), (2, 4), (3, 12)], 3);
        assert_eq!(full.records.len(), 54);
        assert_eq!(
            check_stopping(&full, Some(3), &cfg),
            DecisionKind::StopRecommend { level: 3 }
        );
        // tested twice and recommended again
        let s = state_with(&[(0, 1), (1, 1), (2, 1), (3, 2)], 3);
        assert_eq!(
            check_stopping(&s, Some(3), &cfg),
            DecisionKind::StopRecommend { level: 3 }
        );
        let no_retest = EscalationConfig {
            stop_on_retest: false,
            ..cfg
        };
        assert_eq!(check_stopping(&s, Some(3), &no_retest), DecisionKind::Stay);
        // nothing admissible
        let first = state_with(&[(0, 1)], 0);
        assert_eq!(check_stopping(&first, None, &cfg), DecisionKind::StopNone);
        assert_eq!(check_stopping(&first, Some(4), &cfg), DecisionKind::Escalate);
        let s = state_with(&[(0, 1), (1, 1), (2, 1)], 2);
        assert_eq!(check_stopping(&s, Some(0), &cfg), DecisionKind::DeEscalate);
    }

    fn quick_mcmc() -> McmcConfig {
        McmcConfig {
            burn_in: 500,
            kept_draws: 2000,
            ..McmcConfig::default()
        }
    }

    #[test]
    fn first_cohort_without_events_escalates() {
        let state = TrialState::new(DoseGrid::default_nine_dose());
        let cohort = vec![OutcomeRecord::new(0, 0, 0, None); 3];
        let (d, next) = run_escalation_step(
            &state,
            &cohort,
            &PriorSpec::default(),
            &McmcConfig::default(),
            &EscalationConfig::default(),
        )
        .unwrap();
        assert_eq!(d.kind, DecisionKind::Escalate);
        assert_eq!(next.current_dose, 1);
        assert_eq!(next.cohorts_at_dose[0], 1);
        assert!(d.admissible.contains(&1));
    }

    #[test]
    fn step_errors() {
        let state = TrialState::new(DoseGrid::default_nine_dose());
        let prior = PriorSpec::default();
        let cfg = EscalationConfig::default();
        let wrong = vec![OutcomeRecord::new(2, 0, 0, None); 3];
        assert!(matches!(
            run_escalation_step(&state, &wrong, &prior, &quick_mcmc(), &cfg),
            Err(Error::Protocol(_))
        ));
        let short = vec![OutcomeRecord::new(0, 0, 0, None); 2];
        assert!(matches!(
            run_escalation_step(&state, &short, &prior, &quick_mcmc(), &cfg),
            Err(Error::Protocol(_))
        ));
        let mut stopped = state.clone();
        stopped.status = TrialStatus::StoppedNoRecommendation;
        let ok = vec![OutcomeRecord::new(0, 0, 0, None); 3];
        assert!(matches!(
            run_escalation_step(&stopped, &ok, &prior, &quick_mcmc(), &cfg),
            Err(Error::Lifecycle(_))
        ));
    }

    #[test]
    fn step_is_deterministic() {
        let state = TrialState::new(DoseGrid::default_nine_dose());
        let cohort = vec![
            OutcomeRecord::new(0, 0, 1, None),
            OutcomeRecord::new(0, 1, 0, None),
            OutcomeRecord::new(0, 0, 2, None),
        ];
        let run = || {
            run_escalation_step(
                &state,
                &cohort,
                &PriorSpec::default(),
                &quick_mcmc(),
                &EscalationConfig::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn config_validation() {
        assert!(EscalationConfig::default().validate().is_ok());
        let bad = EscalationConfig {
            tox_rule: ToxRule::Interval {
                lower: 0.33,
                upper: 0.16,
            },
            ..EscalationConfig::default()
        };
        assert!(bad.validate().is_err());
        let bio_without_model = EscalationConfig {
            bio_rule: Some(BioRule {
                direction: crate::inference::BioDirection::AtLeast,
                threshold: 0.3,
            }),
            ..EscalationConfig::default()
        };
        assert!(matches!(bio_without_model.validate(), Err(Error::Config { field, .. }) if field == "bio_rule"));
    }
}
