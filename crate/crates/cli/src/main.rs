use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use biodose_cli::*;
use biodose_core::escalation::EscalationConfig;
use biodose_core::inference::{BioRule, ToxRule};
use biodose_core::sim::{builtin_scenarios, run_simulation_with_progress};
use biodose_core::{DoseGrid, OutcomeModel};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "biodose", version, about = "Dose-finding trial simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate many trials under one scenario and report operating characteristics.
    Simulate(SimulateArgs),
    /// Print the built-in scenarios.
    ListScenarios,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    ToxOnly,
    Joint,
    JointBiomarker,
}

impl From<ModelArg> for OutcomeModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::ToxOnly => OutcomeModel::ToxOnly,
            ModelArg::Joint => OutcomeModel::Joint,
            ModelArg::JointBiomarker => OutcomeModel::JointBiomarker,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in scenario name, e.g. scenario3.
    #[arg(long, conflicts_with = "scenario_file")]
    scenario: Option<String>,
    /// Scenario definition (.toml or .json).
    #[arg(long)]
    scenario_file: Option<PathBuf>,
    /// Run configuration (.toml or .json). Command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replicates.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,

    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// Toxicity target interval as LOWER,UPPER.
    #[arg(long, value_parser = parse_pair, conflicts_with = "tox_bound")]
    tox_interval: Option<(f64, f64)>,
    /// Toxicity upper bound only.
    #[arg(long)]
    tox_bound: Option<f64>,
    #[arg(long)]
    eff_bound: Option<f64>,
    /// Biomarker rule as DIRECTION:THRESHOLD, e.g. at_least:0.25.
    #[arg(long, value_parser = parse_bio_rule)]
    bio_rule: Option<BioRule>,
    #[arg(long)]
    overdose_cutoff: Option<f64>,
    #[arg(long)]
    cohort_size: Option<usize>,
    #[arg(long)]
    max_patients: Option<usize>,
    #[arg(long)]
    stop_on_retest: Option<bool>,
    /// Override a prior: NAME=MEAN,VARIANCE, zeta=LOW,HIGH or wishart_df=N. Repeatable.
    #[arg(long = "prior")]
    priors: Vec<String>,
    /// Centre and scale the log-dose covariate.
    #[arg(long)]
    standardize: bool,

    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    kept_draws: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,

    /// Suppress progress output.
    #[arg(long, short)]
    quiet: bool,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LOWER,UPPER")?;
    let a = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn parse_bio_rule(s: &str) -> Result<BioRule, String> {
    let (dir, t) = s.split_once(':').ok_or("expected DIRECTION:THRESHOLD")?;
    let direction = parse_bio_direction(dir.trim()).map_err(|e| e.to_string())?;
    let threshold = t.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok(BioRule { direction, threshold })
}

fn resolve(args: &SimulateArgs) -> anyhow::Result<RunConfig> {
    let file = match &args.config {
        Some(p) => RunConfigFile::load(p)?,
        None => RunConfigFile::default(),
    };
    let source = if let Some(name) = &args.scenario {
        ScenarioSource::Builtin(name.clone())
    } else if let Some(p) = &args.scenario_file {
        ScenarioSource::File(p.clone())
    } else if let Some(s) = &file.scenario {
        s.clone()
    } else {
        anyhow::bail!("scenario: give --scenario, --scenario-file or a [scenario] table in --config");
    };
    let mut scenario = resolve_scenario(&source)?;
    if args.standardize && !scenario.grid.is_standardized() {
        scenario.grid =
            DoseGrid::with_options(scenario.grid.raw_doses().to_vec(), scenario.grid.reference_dose(), true)?;
    }

    let mut design = file.design.clone().unwrap_or_default().apply(scenario.default_design());
    let cli_design = DesignOverrides {
        model: args.model.map(Into::into),
        tox_rule: match (args.tox_interval, args.tox_bound) {
            (Some((lower, upper)), _) => Some(ToxRule::Interval { lower, upper }),
            (None, Some(upper)) => Some(ToxRule::Bound { upper }),
            _ => None,
        },
        eff_bound: args.eff_bound,
        bio_rule: args.bio_rule,
        overdose_cutoff: args.overdose_cutoff,
        cohort_size: args.cohort_size,
        max_patients: args.max_patients,
        stop_on_retest: args.stop_on_retest,
        min_cohort_observed: None,
    };
    design = cli_design.apply(design);
    normalize_bio_rule(&mut design, &scenario);

    let mut prior = file.prior.unwrap_or_default();
    for p in &args.priors {
        apply_prior_override(&mut prior, p)?;
    }

    let mut mcmc = file.mcmc.unwrap_or_default();
    if let Some(v) = args.burn_in {
        mcmc.burn_in = v;
    }
    if let Some(v) = args.kept_draws {
        mcmc.kept_draws = v;
    }
    if let Some(v) = args.thin {
        mcmc.thin = v;
    }
    if let Some(v) = args.chains {
        mcmc.n_chains = v;
    }

    let cfg = RunConfig {
        scenario,
        design,
        prior,
        mcmc,
        replicates: args.replicates.or(file.replicates).unwrap_or(1000),
        seed: args.seed.or(file.seed).unwrap_or(20230),
        parallelism: args
            .parallelism
            .or(file.parallelism)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
        out_dir: args
            .out_dir
            .clone()
            .or(file.out_dir)
            .unwrap_or_else(|| PathBuf::from("out")),
    };
    cfg.validate()?;
    Ok(cfg)
}

// A biomarker model needs a biomarker rule; fall back to the scenario's own
// rule when the user switched models without naming one.
fn normalize_bio_rule(design: &mut EscalationConfig, scenario: &biodose_core::sim::ScenarioSpec) {
    if design.model.has_biomarker() && design.bio_rule.is_none() {
        design.bio_rule = scenario.true_bio.as_ref().map(|b| b.rule);
    }
}

fn simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let cfg = resolve(&args)?;
    let quiet = args.quiet;
    if !quiet {
        eprintln!(
            "{}: {} replicates, model {:?}, seed {}, {} threads",
            cfg.scenario.name, cfg.replicates, cfg.design.model, cfg.seed, cfg.parallelism
        );
    }
    let last = AtomicUsize::new(0);
    let progress = |done: usize, total: usize| {
        if quiet {
            return;
        }
        let step = (total / 20).max(1);
        if done == total || done / step > last.load(Ordering::Relaxed) / step {
            last.store(done, Ordering::Relaxed);
            eprint!("\r  {done}/{total} trials");
            if done == total {
                eprintln!();
            }
            let _ = std::io::stderr().flush();
        }
    };
    let sim = run_simulation_with_progress(
        &cfg.scenario,
        &cfg.design,
        &cfg.prior,
        &cfg.mcmc,
        cfg.replicates,
        cfg.seed,
        cfg.parallelism,
        &progress,
    )?;
    let files = [
        ("oc_table.csv", oc_table_csv(&cfg, &sim)?),
        ("curves.csv", curves_csv(&cfg, &sim)?),
        ("manifest.json", cfg.manifest_json().into_bytes()),
    ];
    write_outputs(&cfg.out_dir, &files).context("writing outputs")?;
    if !quiet {
        let oc = &sim.oc;
        eprintln!(
            "selection: target {:.1}%  over-toxic {:.1}%  none {:.1}%  mean patients {:.1}",
            oc.target_pct, oc.over_toxic_pct, oc.none_pct, oc.mean_total_patients
        );
        eprintln!("wrote {}", cfg.out_dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::ListScenarios => {
            print!("{}", scenario_listing(&builtin_scenarios()));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
