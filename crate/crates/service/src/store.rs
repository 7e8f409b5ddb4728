//! Append-only per-trial event logs and state replay.
//!
//! Each trial lives in `<data_dir>/trials/<id>.jsonl`: one `created` line
//! followed by one `cohort` line per accepted submission. State is rebuilt by
//! re-running every escalation step, and each recomputed decision must equal
//! the logged one exactly.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use anyhow::{bail, Context};
use biodose_core::escalation::{run_escalation_step, Decision, EscalationConfig, TrialState};
use biodose_core::inference::{McmcConfig, PriorSpec};
use biodose_core::{DoseGrid, OutcomeRecord};
use serde::{Deserialize, Serialize};

use crate::api::PosteriorSummary;

/// Everything fixed at trial creation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub grid: DoseGrid,
    pub design: EscalationConfig,
    pub prior: PriorSpec,
    pub mcmc: McmcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortEntry {
    pub at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    pub outcomes: Vec<OutcomeRecord>,
    pub decision: Decision,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created { id: String, at_ms: u64, setup: TrialSetup },
    Cohort(CohortEntry),
}

/// Committed state of one trial. Never mutated after publication; a
/// submission builds a new snapshot and swaps it in.
#[derive(Debug)]
pub struct Snapshot {
    pub id: String,
    pub setup: TrialSetup,
    pub state: TrialState,
    pub cohorts: Vec<CohortEntry>,
    pub created_ms: u64,
    pub updated_ms: u64,
    pub posterior: OnceLock<Arc<PosteriorSummary>>,
}

impl Snapshot {
    pub fn new(id: String, setup: TrialSetup, at_ms: u64) -> Self {
        Self {
            id,
            state: TrialState::new(setup.grid.clone()),
            setup,
            cohorts: Vec::new(),
            created_ms: at_ms,
            updated_ms: at_ms,
            posterior: OnceLock::new(),
        }
    }

    pub fn with_cohort(&self, state: TrialState, entry: CohortEntry) -> Self {
        let mut cohorts = self.cohorts.clone();
        let at = entry.at_ms;
        cohorts.push(entry);
        Self {
            id: self.id.clone(),
            setup: self.setup.clone(),
            state,
            cohorts,
            created_ms: self.created_ms,
            updated_ms: at,
            posterior: OnceLock::new(),
        }
    }

    /// Decide the next step for `outcomes` without committing anything.
    pub fn step(&self, outcomes: &[OutcomeRecord]) -> biodose_core::Result<(Decision, TrialState)> {
        let s = &self.setup;
        run_escalation_step(&self.state, outcomes, &s.prior, &s.mcmc, &s.design)
    }
}

pub struct TrialLog {
    dir: PathBuf,
}

impl TrialLog {
    pub fn open(data_dir: &Path) -> anyhow::Result<Self> {
        let dir = data_dir.join("trials");
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir })
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    /// Write a new log holding only the creation event.
    pub fn create(&self, id: &str, at_ms: u64, setup: &TrialSetup) -> anyhow::Result<()> {
        let line = event_line(&Event::Created {
            id: id.to_string(),
            at_ms,
            setup: setup.clone(),
        })?;
        let tmp = self.dir.join(format!(".{id}.jsonl.partial"));
        let mut f = fs::File::create(&tmp)?;
        f.write_all(line.as_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, self.path(id))?;
        Ok(())
    }

    pub fn append(&self, id: &str, entry: &CohortEntry) -> anyhow::Result<()> {
        let line = event_line(&Event::Cohort(entry.clone()))?;
        let mut f = OpenOptions::new().append(true).open(self.path(id))?;
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }

    /// Replay every stored trial.
    pub fn load_all(&self) -> anyhow::Result<Vec<Snapshot>> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| replay(p).with_context(|| format!("replaying {}", p.display())))
            .collect()
    }
}

fn event_line(e: &Event) -> anyhow::Result<String> {
    let mut s = serde_json::to_string(e)?;
    s.push('\n');
    Ok(s)
}

pub fn replay(path: &Path) -> anyhow::Result<Snapshot> {
    let text = fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<Event>(line) {
            Ok(e) => events.push(e),
            // A crash mid-append can leave a torn final line; that submission
            // was never acknowledged.
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => break,
            Err(e) => bail!("line {}: {e}", i + 1),
        }
    }
    let mut iter = events.into_iter();
    let Some(Event::Created { id, at_ms, setup }) = iter.next() else {
        bail!("log does not start with a created event");
    };
    let mut snap = Snapshot::new(id, setup, at_ms);
    for (step, event) in iter.enumerate() {
        let Event::Cohort(entry) = event else {
            bail!("duplicate created event at step {}", step + 1);
        };
        let (decision, state) = snap
            .step(&entry.outcomes)
            .with_context(|| format!("step {}", step + 1))?;
        if decision != entry.decision {
            bail!("step {}: recomputed decision differs from the logged one", step + 1);
        }
        snap = snap.with_cohort(state, entry);
    }
    Ok(snap)
}
