//! Simulate, run and score batches on disk.
//!
//! A bundle is a directory holding the resolved `config.txt` and one
//! `seq_NNN/` subdirectory per sequence with its `gt.csv`. Sequences are
//! regenerated from the config on load and checked against the stored ground
//! truth. Runs write `trajectory.csv`, `events.csv` and `tree.snapshot` next
//! to the ground truth (`tracker_only.csv` for the baseline).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::controller::{trajectory, ControllerStats};
use crate::error::{Error, Result};
use crate::io::{parse_ground_truth, parse_trajectory, write_events, write_ground_truth, write_trajectory, RunConfig};
use crate::metrics::{recovery_eval_events, RecoveryReport};
use crate::sim::{generate_batch, run_controller, run_tracker_baseline, SyntheticSequence};

pub const CONFIG_FILE: &str = "config.txt";
pub const GT_FILE: &str = "gt.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const TRACKER_ONLY_FILE: &str = "tracker_only.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SNAPSHOT_FILE: &str = "tree.snapshot";

pub fn sequence_dir(root: &Path, index: usize) -> PathBuf {
    root.join(format!("seq_{index:03}"))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Generates the batch described by `config` and writes it as a bundle.
pub fn simulate_bundle(config: &RunConfig, root: &Path) -> Result<Bundle> {
    config.validate()?;
    let sequences: Vec<Arc<SyntheticSequence>> = generate_batch(&config.sim, config.sequences)?
        .into_iter()
        .map(Arc::new)
        .collect();
    fs::create_dir_all(root)?;
    write(&root.join(CONFIG_FILE), &config.to_text())?;
    for (i, seq) in sequences.iter().enumerate() {
        let dir = sequence_dir(root, i);
        fs::create_dir_all(&dir)?;
        write(&dir.join(GT_FILE), &write_ground_truth(&seq.gt))?;
    }
    Ok(Bundle {
        root: root.to_path_buf(),
        config: config.clone(),
        sequences,
    })
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub root: PathBuf,
    pub config: RunConfig,
    pub sequences: Vec<Arc<SyntheticSequence>>,
}

impl Bundle {
    /// Reads a bundle, regenerating its sequences and verifying each stored
    /// ground-truth file against them.
    pub fn load(root: &Path) -> Result<Bundle> {
        let config = RunConfig::parse(&read(&root.join(CONFIG_FILE))?)?;
        let sequences: Vec<Arc<SyntheticSequence>> = generate_batch(&config.sim, config.sequences)?
            .into_iter()
            .map(Arc::new)
            .collect();
        for (i, seq) in sequences.iter().enumerate() {
            let path = sequence_dir(root, i).join(GT_FILE);
            let stored = parse_ground_truth(&read(&path)?)?;
            if stored != seq.gt {
                return Err(Error::invalid(format!(
                    "{} does not match the sequence generated from {CONFIG_FILE}",
                    path.display()
                )));
            }
        }
        Ok(Bundle {
            root: root.to_path_buf(),
            config,
            sequences,
        })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Text outputs of one sequence run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub index: usize,
    pub trajectory: String,
    /// Absent for the tracker-only baseline.
    pub events: Option<String>,
    pub snapshot: Option<String>,
    pub stats: Option<ControllerStats>,
}

/// Runs the controller (or the bare tracker) on sequence `index`.
pub fn run_one(config: &RunConfig, seq: &Arc<SyntheticSequence>, index: usize, tracker_only: bool) -> Result<RunOutput> {
    if tracker_only {
        let results = run_tracker_baseline(seq, &config.sim)?;
        return Ok(RunOutput {
            index,
            trajectory: write_trajectory(&results),
            events: None,
            snapshot: None,
            stats: None,
        });
    }
    let run = run_controller(seq, &config.sim, &config.controller)?;
    Ok(RunOutput {
        index,
        trajectory: write_trajectory(&run.results),
        events: Some(write_events(&run.events)),
        snapshot: Some(run.tree.to_snapshot()),
        stats: Some(run.stats),
    })
}

/// Writes one run's files into `seq_NNN/` under `out_root`.
pub fn write_output(out_root: &Path, output: &RunOutput) -> Result<()> {
    let dir = sequence_dir(out_root, output.index);
    fs::create_dir_all(&dir)?;
    match (&output.events, &output.snapshot) {
        (Some(events), Some(snapshot)) => {
            write(&dir.join(TRAJECTORY_FILE), &output.trajectory)?;
            write(&dir.join(EVENTS_FILE), events)?;
            write(&dir.join(SNAPSHOT_FILE), snapshot)?;
        }
        _ => write(&dir.join(TRACKER_ONLY_FILE), &output.trajectory)?,
    }
    Ok(())
}

/// Recovery report of every sequence of a bundle, reading the named
/// trajectory file from each sequence directory under `runs_root`.
///
/// Loss events come from the simulator's schedule, so teleports count as well
/// as absences.
pub fn bundle_recovery(bundle: &Bundle, runs_root: &Path, file: &str) -> Result<Vec<RecoveryReport>> {
    let m = &bundle.config.metrics;
    bundle
        .sequences
        .iter()
        .enumerate()
        .map(|(i, seq)| {
            let path = sequence_dir(runs_root, i).join(file);
            let pred = trajectory(&parse_trajectory(&read(&path)?)?);
            recovery_eval_events(&pred, &seq.gt, &seq.loss_events(), m.overlap_threshold, &m.budgets, m.recovery_anchor)
        })
        .collect()
}
