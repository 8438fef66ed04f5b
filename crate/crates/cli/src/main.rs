use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use pnrecover::controller::Controller;
use pnrecover::io::{parse_boxes, RunConfig};
use pnrecover::metrics::{curve_table, evaluate, recovery_eval, RecoveryAnchor, RecoveryReport};
use pnrecover::oracle::check_classifiers;
use pnrecover::pipeline::{
    bundle_recovery, run_one, simulate_bundle, write_output, Bundle, TRACKER_ONLY_FILE, TRAJECTORY_FILE,
};
use pnrecover::sim::sim_ports;
use pnrecover::{Error, Result};

const SEED_ENV: &str = "PNRECOVER_SEED";

#[derive(Parser)]
#[command(name = "pnrecover", version, about = "Recoverable tracking with a positive/negative sample tree")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic batch and write it as a bundle directory.
    Simulate {
        /// Config file of `key = value` lines; unset keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `sim.seed` (and the PNRECOVER_SEED variable).
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `run.sequences`.
        #[arg(long)]
        sequences: Option<usize>,
    },
    /// Run the controller (or the bare tracker) on every sequence of a bundle.
    Run {
        #[arg(long)]
        bundle: PathBuf,
        /// Extra `key = value` overrides for tree, controller and metrics keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output root; defaults to the bundle directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 picks one per core.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run the tracker alone, without state checks or detection.
        #[arg(long)]
        tracker_only: bool,
    },
    /// Score a trajectory against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Skip frames whose ground truth is absent.
        #[arg(long)]
        ignore_absent_frames: bool,
        /// Also write the three curves to this file.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Recovery-ability report for one trajectory or a whole bundle.
    Recovery {
        #[arg(long, conflicts_with = "bundle", requires = "gt")]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, required_unless_present = "pred")]
        bundle: Option<PathBuf>,
        /// Directory holding the run outputs; defaults to the bundle directory.
        #[arg(long)]
        runs: Option<PathBuf>,
        /// Score the tracker-only trajectories of the bundle.
        #[arg(long)]
        tracker_only: bool,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Comma-separated frame budgets.
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,10,20,30")]
        budgets: Vec<usize>,
        #[arg(long, default_value = "reappearance")]
        anchor: RecoveryAnchor,
    },
    /// Fuzz the tree classifiers against the brute-force references.
    OracleCheck {
        #[arg(long, default_value_t = 10_000)]
        cases: usize,
        /// Defaults to PNRECOVER_SEED, then 7.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the tree of a bundle sequence after a number of frames.
    Snapshot {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 0)]
        sequence: usize,
        /// Frames to process; defaults to the whole sequence.
        #[arg(long)]
        frames: Option<usize>,
    },
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config {
                key: SEED_ENV.into(),
                message: format!("cannot parse `{v}`"),
            }),
        Err(_) => Ok(None),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn simulate(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>, sequences: Option<usize>) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(s) = env_seed()? {
        cfg.sim.seed = s;
    }
    if let Some(path) = config {
        cfg.apply(&read(&path)?)?;
    }
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    if let Some(n) = sequences {
        cfg.sequences = n;
    }
    let bundle = simulate_bundle(&cfg, &out)?;
    let events: usize = bundle.sequences.iter().map(|s| s.loss_events().len()).sum();
    println!(
        "wrote {} sequences ({} loss events) to {}",
        bundle.len(),
        events,
        out.display()
    );
    Ok(())
}

fn run(bundle: PathBuf, config: Option<PathBuf>, out: Option<PathBuf>, jobs: usize, tracker_only: bool) -> Result<()> {
    let bundle = Bundle::load(&bundle)?;
    let mut cfg = bundle.config.clone();
    if let Some(path) = config {
        cfg.apply(&read(&path)?)?;
        if cfg.sim != bundle.config.sim || cfg.sequences != bundle.config.sequences {
            return Err(Error::Config {
                key: "sim".into(),
                message: "simulation keys are fixed by the bundle".into(),
            });
        }
    }
    let out = out.unwrap_or_else(|| bundle.root.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    // Each task writes only its own sequence directory.
    let outputs: Vec<Result<_>> = pool.install(|| {
        bundle
            .sequences
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                let output = run_one(&cfg, seq, i, tracker_only)?;
                write_output(&out, &output)?;
                Ok(output)
            })
            .collect()
    });
    let mut losses = 0;
    let mut recoveries = 0;
    for o in outputs {
        if let Some(stats) = o?.stats {
            losses += stats.loss_events;
            recoveries += stats.recoveries;
        }
    }
    let what = if tracker_only { "tracker-only" } else { "controller" };
    println!("{what} ran {} sequences into {}", bundle.len(), out.display());
    if !tracker_only {
        println!("loss_events {losses}\nrecoveries {recoveries}");
    }
    Ok(())
}

fn eval(pred: PathBuf, gt: PathBuf, ignore_absent_frames: bool, curves: Option<PathBuf>) -> Result<()> {
    let p = parse_boxes(&read(&pred)?)?;
    let g = parse_boxes(&read(&gt)?)?;
    let result = evaluate(&p, &g, pnrecover::metrics::EvalOptions { ignore_absent_frames })?;
    print!("{}", result.summary());
    if let Some(path) = curves {
        fs::write(&path, result.curves_table())?;
    }
    Ok(())
}

struct RecoveryArgs {
    pred: Option<PathBuf>,
    gt: Option<PathBuf>,
    bundle: Option<PathBuf>,
    runs: Option<PathBuf>,
    tracker_only: bool,
    threshold: f64,
    budgets: Vec<usize>,
    anchor: RecoveryAnchor,
}

fn recovery(mut a: RecoveryArgs) -> Result<()> {
    a.budgets.sort_unstable();
    a.budgets.dedup();
    if let (Some(pred), Some(gt)) = (&a.pred, &a.gt) {
        let p = parse_boxes(&read(pred)?)?;
        let g = parse_boxes(&read(gt)?)?;
        let report = recovery_eval(&p, &g, a.threshold, &a.budgets, a.anchor)?;
        print!("{}", report.events_table());
        print!("{}", report.curve_table());
        return Ok(());
    }
    let root = a.bundle.expect("clap requires --bundle without --pred");
    let mut bundle = Bundle::load(&root)?;
    bundle.config.metrics.overlap_threshold = a.threshold;
    bundle.config.metrics.budgets = a.budgets.clone();
    bundle.config.metrics.recovery_anchor = a.anchor;
    let runs = a.runs.unwrap_or(root);
    let file = if a.tracker_only { TRACKER_ONLY_FILE } else { TRAJECTORY_FILE };
    let reports = bundle_recovery(&bundle, &runs, file)?;
    let pooled = RecoveryReport::pooled(&reports, &a.budgets);
    println!("events {}", pooled.events.len());
    println!("# pooled");
    print!("{}", pooled.curve_table());
    println!("# per_sequence_mean");
    print!("{}", curve_table(&RecoveryReport::per_sequence_mean(&reports, &a.budgets)));
    Ok(())
}

fn oracle_check(cases: usize, seed: Option<u64>) -> Result<()> {
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(7),
    };
    let r = check_classifiers(cases, seed);
    println!("positive_path first_hit {}/{} agree", r.positive_path_first_hit, r.cases);
    println!("positive_path full_scan {}/{} agree", r.positive_path_full_scan, r.cases);
    println!("negative_path {}/{} agree", r.negative_path, r.cases);
    let worst = r
        .positive_path_first_hit
        .min(r.positive_path_full_scan)
        .min(r.negative_path);
    println!("{worst}/{} agree", r.cases);
    if !r.all_agree() {
        return Err(Error::InvalidInput("classifier disagrees with the reference".into()));
    }
    Ok(())
}

fn snapshot(bundle: PathBuf, sequence: usize, frames: Option<usize>) -> Result<()> {
    let bundle = Bundle::load(&bundle)?;
    let seq = bundle.sequences.get(sequence).ok_or_else(|| {
        Error::InvalidInput(format!("bundle has {} sequences, no index {sequence}", bundle.len()))
    })?;
    let all = seq.frames();
    let n = frames.unwrap_or(all.len()).clamp(1, all.len());
    let mut c = Controller::init(
        &all[0],
        seq.initial_box()?,
        sim_ports(seq, &bundle.config.sim),
        bundle.config.controller.clone(),
    )?;
    for f in &all[1..n] {
        if let Err(e) = c.step(f) {
            c.note_port_failure(f.index, e.to_string());
        }
    }
    print!("{}", c.tree().to_snapshot());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            seed,
            sequences,
        } => simulate(config, out, seed, sequences),
        Command::Run {
            bundle,
            config,
            out,
            jobs,
            tracker_only,
        } => run(bundle, config, out, jobs, tracker_only),
        Command::Eval {
            pred,
            gt,
            ignore_absent_frames,
            curves,
        } => eval(pred, gt, ignore_absent_frames, curves),
        Command::Recovery {
            pred,
            gt,
            bundle,
            runs,
            tracker_only,
            threshold,
            budgets,
            anchor,
        } => recovery(RecoveryArgs {
            pred,
            gt,
            bundle,
            runs,
            tracker_only,
            threshold,
            budgets,
            anchor,
        }),
        Command::OracleCheck { cases, seed } => oracle_check(cases, seed),
        Command::Snapshot {
            bundle,
            sequence,
            frames,
        } => snapshot(bundle, sequence, frames),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
