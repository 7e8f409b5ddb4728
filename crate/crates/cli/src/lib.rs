//! Run configuration, scenario files and output writers for the `biodose` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use biodose_core::escalation::EscalationConfig;
use biodose_core::inference::{BioDirection, BioRule, McmcConfig, PriorSpec, ToxRule};
use biodose_core::sim::{builtin_scenario, BioTruth, ScenarioFeatures, ScenarioSpec, Simulation};
use biodose_core::{DoseGrid, OutcomeModel};
use serde::{Deserialize, Serialize};

/// Scenario as written in configuration files. Dose levels are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub doses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_dose: Option<f64>,
    #[serde(default)]
    pub standardize: bool,
    pub true_tox: Vec<f64>,
    pub true_eff: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_bio: Option<BioTruth>,
    pub target_levels: Vec<usize>,
    #[serde(default)]
    pub outcome_correlation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<ScenarioFeatures>,
}

impl ScenarioFile {
    pub fn from_spec(s: &ScenarioSpec) -> Self {
        Self {
            name: s.name.clone(),
            doses: s.grid.raw_doses().to_vec(),
            reference_dose: Some(s.grid.reference_dose()),
            standardize: s.grid.is_standardized(),
            true_tox: s.true_tox.clone(),
            true_eff: s.true_eff.clone(),
            true_bio: s.true_bio.clone(),
            target_levels: s.target_levels.iter().map(|j| j + 1).collect(),
            outcome_correlation: s.outcome_correlation,
            features: s.features.clone(),
        }
    }

    pub fn into_spec(self) -> anyhow::Result<ScenarioSpec> {
        let reference = match self.reference_dose {
            Some(r) => r,
            None => *self.doses.last().context("scenario.doses: dose grid is empty")?,
        };
        let grid = DoseGrid::with_options(self.doses, reference, self.standardize)?;
        if let Some(&j) = self.target_levels.iter().find(|&&j| j == 0) {
            bail!("scenario.target_levels: level {j} is invalid, levels are numbered from 1");
        }
        let spec = ScenarioSpec {
            name: self.name,
            grid,
            true_tox: self.true_tox,
            true_eff: self.true_eff,
            true_bio: self.true_bio,
            target_levels: self.target_levels.iter().map(|j| j - 1).collect(),
            outcome_correlation: self.outcome_correlation,
            features: self.features,
        };
        spec.validate().map_err(|e| anyhow::anyhow!("scenario.{e}"))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioSource {
    Builtin(String),
    File(PathBuf),
    Inline(ScenarioFile),
}

/// Partial design settings layered over the scenario's default design.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOverrides {
    pub model: Option<OutcomeModel>,
    pub tox_rule: Option<ToxRule>,
    pub eff_bound: Option<f64>,
    pub bio_rule: Option<BioRule>,
    pub overdose_cutoff: Option<f64>,
    pub cohort_size: Option<usize>,
    pub max_patients: Option<usize>,
    pub stop_on_retest: Option<bool>,
    pub min_cohort_observed: Option<usize>,
}

impl DesignOverrides {
    pub fn apply(&self, base: EscalationConfig) -> EscalationConfig {
        let mut c = base;
        if let Some(m) = self.model {
            c.model = m;
            if !m.has_biomarker() {
                c.bio_rule = None;
            }
        }
        if let Some(v) = self.tox_rule {
            c.tox_rule = v;
        }
        if let Some(v) = self.eff_bound {
            c.eff_bound = v;
        }
        if let Some(v) = self.bio_rule {
            c.bio_rule = Some(v);
        }
        if let Some(v) = self.overdose_cutoff {
            c.overdose_cutoff = v;
        }
        if let Some(v) = self.cohort_size {
            c.cohort_size = v;
        }
        if let Some(v) = self.max_patients {
            c.max_patients = v;
        }
        if let Some(v) = self.stop_on_retest {
            c.stop_on_retest = v;
        }
        if let Some(v) = self.min_cohort_observed {
            c.min_cohort_observed = v;
        }
        c
    }
}

/// Contents of a `--config` file. Every key is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub scenario: Option<ScenarioSource>,
    pub design: Option<DesignOverrides>,
    pub prior: Option<PriorSpec>,
    pub mcmc: Option<McmcConfig>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub parallelism: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfigFile {
    /// Read a TOML or JSON config; the format follows the file extension.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        parse_by_extension(path, &text).with_context(|| format!("parsing config {}", path.display()))
    }
}

fn parse_by_extension<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> anyhow::Result<T> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => Ok(serde_json::from_str(text)?),
        Some("toml") => Ok(toml::from_str(text)?),
        other => bail!("unsupported file extension {other:?}; use .toml or .json"),
    }
}

pub fn load_scenario_file(path: &Path) -> anyhow::Result<ScenarioSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scenario file {}", path.display()))?;
    let file: ScenarioFile =
        parse_by_extension(path, &text).with_context(|| format!("parsing scenario file {}", path.display()))?;
    file.into_spec()
}

/// A fully resolved run. Serialized as the run manifest, which is itself a
/// valid config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub design: EscalationConfig,
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
    pub replicates: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: ScenarioSource,
    design: DesignOverrides,
    prior: &'a PriorSpec,
    mcmc: &'a McmcConfig,
    replicates: usize,
    seed: u64,
    parallelism: usize,
    out_dir: &'a Path,
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.replicates < 1 {
            bail!("replicates: must be at least 1");
        }
        if self.parallelism < 1 {
            bail!("parallelism: must be at least 1");
        }
        self.scenario.validate().map_err(|e| anyhow::anyhow!("scenario.{e}"))?;
        self.design.validate().map_err(|e| anyhow::anyhow!("design.{e}"))?;
        self.prior.validate(self.design.model)?;
        self.mcmc.validate()?;
        if self.design.model.has_biomarker() && self.scenario.true_bio.is_none() {
            bail!("design.model: scenario {} has no biomarker truth", self.scenario.name);
        }
        Ok(())
    }

    pub fn manifest_json(&self) -> String {
        let d = &self.design;
        let m = Manifest {
            scenario: ScenarioSource::Inline(ScenarioFile::from_spec(&self.scenario)),
            design: DesignOverrides {
                model: Some(d.model),
                tox_rule: Some(d.tox_rule),
                eff_bound: Some(d.eff_bound),
                bio_rule: d.bio_rule,
                overdose_cutoff: Some(d.overdose_cutoff),
                cohort_size: Some(d.cohort_size),
                max_patients: Some(d.max_patients),
                stop_on_retest: Some(d.stop_on_retest),
                min_cohort_observed: Some(d.min_cohort_observed),
            },
            prior: &self.prior,
            mcmc: &self.mcmc,
            replicates: self.replicates,
            seed: self.seed,
            parallelism: self.parallelism,
            out_dir: &self.out_dir,
        };
        let mut s = serde_json::to_string_pretty(&m).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// Resolve a scenario source to a spec.
pub fn resolve_scenario(src: &ScenarioSource) -> anyhow::Result<ScenarioSpec> {
    match src {
        ScenarioSource::Builtin(name) => Ok(builtin_scenario(name)?),
        ScenarioSource::File(path) => load_scenario_file(path),
        ScenarioSource::Inline(file) => file.clone().into_spec(),
    }
}

/// Parse `NAME=MEAN,VARIANCE` (normal priors) or `zeta=LOW,HIGH` or
/// `wishart_df=N` and apply it to `prior`.
pub fn apply_prior_override(prior: &mut PriorSpec, arg: &str) -> anyhow::Result<()> {
    let (name, value) = arg
        .split_once('=')
        .with_context(|| format!("--prior {arg}: expected NAME=MEAN,VARIANCE"))?;
    let name = name.trim();
    if name == "wishart_df" {
        prior.wishart_df = value
            .trim()
            .parse()
            .with_context(|| format!("--prior {arg}: bad integer"))?;
        return Ok(());
    }
    let nums: Vec<f64> = value
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("--prior {arg}: expected two numbers"))?;
    let [a, b] = nums[..] else {
        bail!("--prior {arg}: expected two numbers");
    };
    let target = match name {
        "alpha1" => &mut prior.alpha1,
        "beta1" => &mut prior.beta1,
        "alpha2" => &mut prior.alpha2,
        "beta2" => &mut prior.beta2,
        "gamma2" => &mut prior.gamma2,
        "alpha3" => &mut prior.alpha3,
        "beta3" => &mut prior.beta3,
        "gamma3" => &mut prior.gamma3,
        "zeta" => {
            prior.zeta.low = a;
            prior.zeta.high = b;
            return Ok(());
        }
        other => bail!("--prior: unknown parameter '{other}'"),
    };
    target.mean = a;
    target.variance = b;
    Ok(())
}

pub fn parse_bio_direction(s: &str) -> anyhow::Result<BioDirection> {
    match s {
        "at_least" | ">=" | "ge" => Ok(BioDirection::AtLeast),
        "at_most" | "<=" | "le" => Ok(BioDirection::AtMost),
        other => bail!("bio direction '{other}': expected at_least or at_most"),
    }
}

fn fmt(v: f64, decimals: usize) -> String {
    format!("{v:.decimals$}")
}

/// Operating-characteristics table: one row per dose level, then summary rows.
pub fn oc_table_csv(cfg: &RunConfig, sim: &Simulation) -> anyhow::Result<Vec<u8>> {
    let oc = &sim.oc;
    let s = &cfg.scenario;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "row",
        "dose",
        "true_tox",
        "true_eff",
        "true_bio",
        "selected_pct",
        "mean_patients",
        "target",
        "over_toxic",
    ])?;
    let bio = |j: usize| s.true_bio.as_ref().map(|b| fmt(b.probs[j], 2)).unwrap_or_default();
    for j in 0..s.n_levels() {
        w.write_record([
            (j + 1).to_string(),
            format!("{}", s.grid.raw_doses()[j]),
            fmt(s.true_tox[j], 2),
            fmt(s.true_eff[j], 2),
            bio(j),
            fmt(oc.selection_pct[j], 1),
            fmt(oc.mean_patients[j], 2),
            (oc.target_levels.contains(&j) as u8).to_string(),
            (oc.over_toxic_levels.contains(&j) as u8).to_string(),
        ])?;
    }
    let summary = |name: &str, pct: String, pts: String| {
        vec![
            name.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            pct,
            pts,
            String::new(),
            String::new(),
        ]
    };
    w.write_record(summary("none", fmt(oc.none_pct, 1), String::new()))?;
    w.write_record(summary(
        "target_doses",
        fmt(oc.target_pct, 1),
        fmt(oc.target_mean_patients, 2),
    ))?;
    w.write_record(summary(
        "over_toxic_doses",
        fmt(oc.over_toxic_pct, 1),
        fmt(oc.over_toxic_mean_patients, 2),
    ))?;
    w.write_record(summary("total", fmt(100.0, 1), fmt(oc.mean_total_patients, 2)))?;
    Ok(w.into_inner()?)
}

/// Replicate-averaged posterior-mean curves alongside the scenario truth.
pub fn curves_csv(cfg: &RunConfig, sim: &Simulation) -> anyhow::Result<Vec<u8>> {
    let c = &sim.curves;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "level",
        "dose",
        "true_tox",
        "posterior_mean_tox",
        "true_eff",
        "posterior_mean_eff",
    ])?;
    for j in 0..c.raw_doses.len() {
        w.write_record([
            (j + 1).to_string(),
            format!("{}", c.raw_doses[j]),
            fmt(c.true_tox[j], 2),
            fmt(c.mean_tox[j], 4),
            fmt(c.true_eff[j], 2),
            c.mean_eff.as_ref().map(|e| fmt(e[j], 4)).unwrap_or_default(),
        ])?;
    }
    let _ = cfg;
    Ok(w.into_inner()?)
}

/// Write every output to a temporary name first and rename once all writes
/// succeeded, so a failed run leaves no partial files.
pub fn write_outputs(dir: &Path, files: &[(&str, Vec<u8>)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut staged = Vec::new();
    let result = (|| -> anyhow::Result<()> {
        for (name, bytes) in files {
            let tmp = dir.join(format!(".{name}.partial"));
            staged.push(tmp.clone());
            let mut f = fs::File::create(&tmp).with_context(|| format!("writing {}", tmp.display()))?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        Ok(())
    })();
    if let Err(e) = result {
        for tmp in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    for (name, _) in files {
        fs::rename(dir.join(format!(".{name}.partial")), dir.join(name))?;
    }
    Ok(())
}

/// Rows for `list-scenarios`.
pub fn scenario_listing(scenarios: &[ScenarioSpec]) -> String {
    let mut out = String::from("name\ttargets\ttarget toxicity\tefficacy curve\tkey features\tbiomarker\n");
    for s in scenarios {
        let targets: Vec<String> = s.target_levels.iter().map(|j| (j + 1).to_string()).collect();
        let (t, e, k) = match &s.features {
            Some(f) => (
                f.target_toxicity.as_str(),
                f.efficacy_curve.as_str(),
                f.key_features.as_str(),
            ),
            None => ("", "", ""),
        };
        let bio = match &s.true_bio {
            Some(b) => format!(
                "{} {}",
                match b.rule.direction {
                    BioDirection::AtLeast => ">=",
                    BioDirection::AtMost => "<=",
                },
                b.rule.threshold
            ),
            None => "-".into(),
        };
        out.push_str(&format!("{}\t{}\t{t}\t{e}\t{k}\t{bio}\n", s.name, targets.join(",")));
    }
    out
}
