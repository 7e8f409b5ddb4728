use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::atomic::{AtomicUsize, Ordering};

use super::scenarios::{generate_cohort_outcomes, ScenarioSpec};
use crate::error::{Error, Result};
use crate::escalation::{run_escalation_step_with_posterior, DecisionKind, EscalationConfig, TrialState, TrialStatus};
use crate::inference::risk::splitmix64;
use crate::inference::{variance_inflation, InflationCheck, McmcConfig, PriorSpec};

/// What happened at one escalation step of a simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAudit {
    pub dose: usize,
    pub cohort_size: usize,
    pub enrolled_after: usize,
    pub kind: DecisionKind,
    pub j_recommend: Option<usize>,
    pub next_dose: Option<usize>,
    pub admissible: Vec<usize>,
    pub target_probabilities: Vec<f64>,
    /// Plug-in vs latent-inclusive DLT variance at each level.
    pub inflation: Vec<InflationCheck>,
    pub convergence_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub seed: u64,
    pub selected_level: Option<usize>,
    pub patients_per_level: Vec<usize>,
    pub total_enrolled: usize,
    pub steps: Vec<StepAudit>,
    /// Posterior-mean plug-in curves from the final fit.
    pub final_tox_curve: Vec<f64>,
    pub final_eff_curve: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub scenario: String,
    pub n_replicates: usize,
    pub target_levels: Vec<usize>,
    pub over_toxic_levels: Vec<usize>,
    pub selection_pct: Vec<f64>,
    pub mean_patients: Vec<f64>,
    pub none_pct: f64,
    pub target_pct: f64,
    pub target_mean_patients: f64,
    pub over_toxic_pct: f64,
    pub over_toxic_mean_patients: f64,
    pub mean_total_patients: f64,
}

/// Replicate-averaged posterior-mean curves next to the scenario truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub raw_doses: Vec<f64>,
    pub true_tox: Vec<f64>,
    pub true_eff: Vec<f64>,
    pub mean_tox: Vec<f64>,
    pub mean_eff: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub oc: OperatingCharacteristics,
    pub curves: CurveSummary,
    pub replicates: Vec<ReplicateResult>,
}

/// Seed of replicate `index` under `base_seed`.
pub fn replicate_seed(base_seed: u64, index: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(index as u64))
}

fn check_compatible(scenario: &ScenarioSpec, cfg: &EscalationConfig) -> Result<()> {
    scenario.validate()?;
    cfg.validate()?;
    if cfg.model.has_biomarker() && scenario.true_bio.is_none() {
        return Err(Error::config(
            "model",
            format!("{} has no biomarker but the design models one", scenario.name),
        ));
    }
    Ok(())
}

/// Run one virtual trial from the lowest dose until a stopping rule fires.
pub fn run_trial(
    scenario: &ScenarioSpec,
    cfg: &EscalationConfig,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    seed: u64,
) -> Result<ReplicateResult> {
    check_compatible(scenario, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mcmc = mcmc.with_seed(splitmix64(seed ^ 0x4D43_4D43));
    let mut state = TrialState::new(scenario.grid.clone());
    let mut steps = Vec::new();
    let mut last_curves = (Vec::new(), None);
    while state.is_active() {
        let n = cfg.next_cohort_size(state.records.len());
        let dose = state.current_dose;
        let cohort = generate_cohort_outcomes(scenario, dose, n, &mut rng);
        let (decision, next, draws) = run_escalation_step_with_posterior(&state, &cohort, prior, &mcmc, cfg)?;
        let inflation = scenario
            .grid
            .covariates()
            .iter()
            .map(|&d| variance_inflation(&draws, d))
            .collect();
        steps.push(StepAudit {
            dose,
            cohort_size: n,
            enrolled_after: next.records.len(),
            kind: decision.kind,
            j_recommend: decision.j_recommend,
            next_dose: decision.next_dose,
            admissible: decision.admissible,
            target_probabilities: decision.target_probabilities,
            inflation,
            convergence_warnings: decision.convergence_warnings.len(),
        });
        last_curves = (decision.posterior_mean_tox, decision.posterior_mean_eff);
        state = next;
    }
    let selected_level = match state.status {
        TrialStatus::StoppedWithRecommendation { level } => Some(level),
        _ => None,
    };
    Ok(ReplicateResult {
        seed,
        selected_level,
        patients_per_level: state.patients_per_level(),
        total_enrolled: state.records.len(),
        steps,
        final_tox_curve: last_curves.0,
        final_eff_curve: last_curves.1,
    })
}

/// Summarize replicate results; percentages are of all replicates.
pub fn aggregate(scenario: &ScenarioSpec, tu: f64, replicates: &[ReplicateResult]) -> OperatingCharacteristics {
    let n_levels = scenario.n_levels();
    let n = replicates.len().max(1) as f64;
    let over_toxic = scenario.over_toxic_levels(tu);
    let mut selected = vec![0usize; n_levels];
    let mut none = 0usize;
    let mut patients = vec![0usize; n_levels];
    for r in replicates {
        match r.selected_level {
            Some(j) => selected[j] += 1,
            None => none += 1,
        }
        for (p, &c) in patients.iter_mut().zip(&r.patients_per_level) {
            *p += c;
        }
    }
    let pct = |c: usize| 100.0 * c as f64 / n;
    let sum_over = |levels: &[usize], v: &[usize]| levels.iter().map(|&j| v[j]).sum::<usize>();
    OperatingCharacteristics {
        scenario: scenario.name.clone(),
        n_replicates: replicates.len(),
        target_levels: scenario.target_levels.clone(),
        over_toxic_levels: over_toxic.clone(),
        selection_pct: selected.iter().map(|&c| pct(c)).collect(),
        mean_patients: patients.iter().map(|&c| c as f64 / n).collect(),
        none_pct: pct(none),
        target_pct: pct(sum_over(&scenario.target_levels, &selected)),
        target_mean_patients: sum_over(&scenario.target_levels, &patients) as f64 / n,
        over_toxic_pct: pct(sum_over(&over_toxic, &selected)),
        over_toxic_mean_patients: sum_over(&over_toxic, &patients) as f64 / n,
        mean_total_patients: replicates.iter().map(|r| r.total_enrolled).sum::<usize>() as f64 / n,
    }
}

pub fn curve_summary(scenario: &ScenarioSpec, replicates: &[ReplicateResult]) -> CurveSummary {
    let n_levels = scenario.n_levels();
    let n = replicates.len().max(1) as f64;
    let mut tox = vec![0.0; n_levels];
    let mut eff = vec![0.0; n_levels];
    let mut has_eff = !replicates.is_empty();
    for r in replicates {
        for (t, v) in tox.iter_mut().zip(&r.final_tox_curve) {
            *t += v / n;
        }
        match &r.final_eff_curve {
            Some(curve) => {
                for (e, v) in eff.iter_mut().zip(curve) {
                    *e += v / n;
                }
            }
            None => has_eff = false,
        }
    }
    CurveSummary {
        raw_doses: scenario.grid.raw_doses().to_vec(),
        true_tox: scenario.true_tox.clone(),
        true_eff: scenario.true_eff.clone(),
        mean_tox: tox,
        mean_eff: has_eff.then_some(eff),
    }
}

/// Run `n_replicates` independent trials on up to `parallelism` threads.
///
/// Replicate `i` uses [`replicate_seed`]`(base_seed, i)`, so the output does not
/// depend on the thread count or scheduling.
pub fn run_simulation(
    scenario: &ScenarioSpec,
    cfg: &EscalationConfig,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    n_replicates: usize,
    base_seed: u64,
    parallelism: usize,
) -> Result<Simulation> {
    run_simulation_with_progress(
        scenario,
        cfg,
        prior,
        mcmc,
        n_replicates,
        base_seed,
        parallelism,
        &|_, _| {},
    )
}

/// [`run_simulation`] calling `progress(done, total)` as replicates finish.
#[allow(clippy::too_many_arguments)]
pub fn run_simulation_with_progress(
    scenario: &ScenarioSpec,
    cfg: &EscalationConfig,
    prior: &PriorSpec,
    mcmc: &McmcConfig,
    n_replicates: usize,
    base_seed: u64,
    parallelism: usize,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<Simulation> {
    if n_replicates < 1 {
        return Err(Error::config("replicates", "must be at least 1"));
    }
    if parallelism < 1 {
        return Err(Error::config("parallelism", "must be at least 1"));
    }
    check_compatible(scenario, cfg)?;
    prior.validate(cfg.model)?;
    mcmc.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::config("parallelism", e.to_string()))?;
    let done = AtomicUsize::new(0);
    let replicates: Vec<ReplicateResult> = pool.install(|| {
        (0..n_replicates)
            .into_par_iter()
            .map(|i| {
                let r = run_trial(scenario, cfg, prior, mcmc, replicate_seed(base_seed, i));
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, n_replicates);
                r
            })
            .collect::<Result<_>>()
    })?;
    Ok(Simulation {
        oc: aggregate(scenario, cfg.tox_rule.upper(), &replicates),
        curves: curve_summary(scenario, &replicates),
        replicates,
    })
}

/// Check the escalation invariants recorded in a replicate's audit log.
///
/// Returns a description of the first violation found.
pub fn audit_replicate(r: &ReplicateResult, cfg: &EscalationConfig) -> std::result::Result<(), String> {
    let Some(first) = r.steps.first() else {
        return Err("no escalation steps recorded".into());
    };
    if first.dose != 0 {
        return Err(format!("first cohort at level {}", first.dose + 1));
    }
    if r.total_enrolled > cfg.max_patients {
        return Err(format!("{} patients enrolled", r.total_enrolled));
    }
    if r.patients_per_level.iter().sum::<usize>() != r.total_enrolled {
        return Err("per-level counts do not sum to the total".into());
    }
    for (i, s) in r.steps.iter().enumerate() {
        if let Some(prev) = i.checked_sub(1).map(|k| &r.steps[k]) {
            if prev.next_dose != Some(s.dose) {
                return Err(format!(
                    "step {i} treated level {} after moving to {:?}",
                    s.dose + 1,
                    prev.next_dose
                ));
            }
        }
        if let Some(next) = s.next_dose {
            if next.abs_diff(s.dose) > 1 {
                return Err(format!("step {i} skipped from level {} to {}", s.dose + 1, next + 1));
            }
        }
        if let Some(j) = s.j_recommend {
            if !s.admissible.contains(&j) {
                return Err(format!("step {i} recommended inadmissible level {}", j + 1));
            }
            let best = s
                .admissible
                .iter()
                .map(|&k| s.target_probabilities[k])
                .fold(f64::NEG_INFINITY, f64::max);
            if s.target_probabilities[j] < best {
                return Err(format!("step {i} recommendation is not the target argmax"));
            }
        }
        if s.kind.is_stop() != (i + 1 == r.steps.len()) {
            return Err(format!("step {i} stop flag inconsistent with the log"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenarios::builtin_scenario;

    fn fast() -> McmcConfig {
        McmcConfig {
            burn_in: 200,
            kept_draws: 500,
            ..McmcConfig::default()
        }
    }

    #[test]
    fn trial_is_deterministic_and_bounded() {
        let s = builtin_scenario("scenario1").unwrap();
        let cfg = s.default_design();
        let a = run_trial(&s, &cfg, &PriorSpec::default(), &fast(), 42).unwrap();
        let b = run_trial(&s, &cfg, &PriorSpec::default(), &fast(), 42).unwrap();
        assert_eq!(a, b);
        assert!(a.total_enrolled >= 3 && a.total_enrolled <= 54);
        audit_replicate(&a, &cfg).unwrap();
    }

    #[test]
    fn aggregation_partitions_replicates() {
        let s = builtin_scenario("scenario1").unwrap();
        let mk = |sel: Option<usize>, p: Vec<usize>| ReplicateResult {
            seed: 0,
            selected_level: sel,
            total_enrolled: p.iter().sum(),
            patients_per_level: p,
            steps: vec![],
            final_tox_curve: vec![0.1; 9],
            final_eff_curve: Some(vec![0.2; 9]),
        };
        let reps = vec![
            mk(Some(3), vec![3, 3, 3, 6, 0, 0, 0, 0, 0]),
            mk(Some(5), vec![3, 3, 3, 3, 3, 6, 0, 0, 0]),
            mk(None, vec![3, 0, 0, 0, 0, 0, 0, 0, 0]),
            mk(Some(4), vec![3, 3, 3, 3, 6, 0, 0, 0, 0]),
        ];
        let oc = aggregate(&s, 0.33, &reps);
        assert_eq!(oc.target_pct, 50.0);
        assert_eq!(oc.over_toxic_pct, 25.0);
        assert_eq!(oc.none_pct, 25.0);
        assert!((oc.selection_pct.iter().sum::<f64>() + oc.none_pct - 100.0).abs() < 1e-9);
        assert!((oc.mean_patients.iter().sum::<f64>() - oc.mean_total_patients).abs() < 1e-9);
        assert_eq!(oc.target_mean_patients, (6.0 + 6.0 + 9.0) / 4.0);
        let mut rev = reps.clone();
        rev.reverse();
        assert_eq!(aggregate(&s, 0.33, &rev), oc);
        let c = curve_summary(&s, &reps);
        assert!((c.mean_tox[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn parallelism_does_not_change_results() {
        let s = builtin_scenario("scenario2").unwrap();
        let cfg = s.default_design();
        let run = |threads| run_simulation(&s, &cfg, &PriorSpec::default(), &fast(), 4, 7, threads).unwrap();
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn biomarker_design_needs_biomarker_truth() {
        let s = builtin_scenario("scenario1").unwrap();
        let cfg = builtin_scenario("scenario8").unwrap().default_design();
        assert!(run_trial(&s, &cfg, &PriorSpec::default(), &fast(), 1).is_err());
    }
}
