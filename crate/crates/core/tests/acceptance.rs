//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::cell::RefCell;
use std::path::Path;
use std::rc::Rc;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnrecover::controller::{trajectory, Event};
use pnrecover::embedding::{triplet_hinge_loss, DEFAULT_TRIPLET_MARGIN};
use pnrecover::io::RunConfig;
use pnrecover::metrics::{evaluate, iou, recovery_eval_events, EvalOptions, RecoveryAnchor, RecoveryReport};
use pnrecover::oracle::{check_classifiers, ReplayTree};
use pnrecover::pipeline::{run_one, sequence_dir, simulate_bundle, write_output, EVENTS_FILE, SNAPSHOT_FILE, TRAJECTORY_FILE};
use pnrecover::sim::{
    generate_batch, run_tracker_baseline, sim_ports, SimConfig, SimEvent, SimFrame, SyntheticSequence,
};
use pnrecover::{
    BoundingBox, Controller, ControllerConfig, Detector, Embedder, FeatureVector, Mode, PnTree, PortError, Ports,
    Tracker,
};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed < Duration::from_secs(limit_s)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let r = check_classifiers(10_000, 7);
    let elapsed = start.elapsed();
    outcome(
        r.all_agree() && within(elapsed, 10),
        format!(
            "positive path first-hit {}/{}, full-scan {}/{}, negative path {}/{} in {:.2?}",
            r.positive_path_first_hit, r.cases, r.positive_path_full_scan, r.cases, r.negative_path, r.cases, elapsed
        ),
    )
}

fn unit(rng: &mut ChaCha8Rng, center: &[f64], spread: f64) -> Vec<f64> {
    let v: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-spread..spread)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn fv(v: &[f64]) -> FeatureVector {
    FeatureVector::new(v.to_vec()).unwrap()
}

/// Random engine and replay trees driven by the same update stream.
fn paired_updates(seed: u64, updates: usize, positive_share: f64) -> (PnTree, ReplayTree, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 16;
    let centers: Vec<Vec<f64>> = (0..4).map(|_| unit(&mut rng, &vec![0.0; dim], 1.0)).collect();
    let template = unit(&mut rng, &centers[0], 0.05);
    let background = unit(&mut rng, &centers[1], 0.05);
    let mut tree = PnTree::new(fv(&template), fv(&background), 10).unwrap();
    let mut replay = ReplayTree::new(&template, &background, 10);
    let mut merges = 0;
    for _ in 0..updates {
        let c = &centers[rng.gen_range(0..centers.len())];
        let x = unit(&mut rng, c, 0.08);
        if rng.gen_bool(positive_share) {
            let report = tree.update_positive(&fv(&x), 0.9).unwrap();
            merges += report.merged as usize;
            replay.update_positive(&x, 0.9);
        } else {
            tree.append_negative(&fv(&x)).unwrap();
            replay.append_negative(&x);
        }
    }
    (tree, replay, merges)
}

fn running_mean() -> Outcome {
    let start = Instant::now();
    let (tree, replay, merges) = paired_updates(21, 1000, 1.0);
    let ordered = ReplayTree::ordered(&replay.positive);
    let mut worst: f64 = 0.0;
    let mut matched = ordered.len() == tree.positive_branch().len();
    for (node, reference) in tree.positive_branch().iter().zip(&ordered) {
        matched &= node.seq() == reference.stamp && node.count() as usize == reference.samples.len();
        for (a, b) in node.feature().as_slice().iter().zip(reference.sample_mean()) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        matched && worst <= 1e-9 && merges > 0 && within(elapsed, 5),
        format!("{merges} merges, max deviation from sample mean {worst:.2e} in {elapsed:.2?}"),
    )
}

fn capacity_recency() -> Outcome {
    let (tree, replay, _) = paired_updates(5, 1000, 0.5);
    let engine_p: Vec<u64> = tree.positive_branch().iter().map(|n| n.seq()).collect();
    let engine_n: Vec<u64> = tree.negative_branch().iter().map(|n| n.seq()).collect();
    let replay_p: Vec<u64> = ReplayTree::ordered(&replay.positive).iter().map(|n| n.stamp).collect();
    let replay_n: Vec<u64> = ReplayTree::ordered(&replay.negative).iter().map(|n| n.stamp).collect();
    let features_match = tree
        .positive_branch()
        .iter()
        .zip(ReplayTree::ordered(&replay.positive))
        .all(|(a, b)| a.feature().as_slice() == b.feature.as_slice())
        && tree
            .negative_branch()
            .iter()
            .zip(ReplayTree::ordered(&replay.negative))
            .all(|(a, b)| a.feature().as_slice() == b.feature.as_slice());
    let pass = engine_p.len() <= 10 && engine_n.len() <= 10 && engine_p == replay_p && engine_n == replay_n && features_match;
    outcome(
        pass,
        format!(
            "branch lengths {}/{}, recency stamps match replay: {}",
            engine_p.len(),
            engine_n.len(),
            engine_p == replay_p && engine_n == replay_n
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Call {
    Track,
    Reinit,
    Detect,
    Embed,
}

type CallLog = Rc<RefCell<Vec<Call>>>;

struct Logged<P> {
    inner: P,
    log: CallLog,
}

impl<P: Tracker<SimFrame>> Tracker<SimFrame> for Logged<P> {
    fn reinit(&mut self, frame: &SimFrame, target: &BoundingBox) -> Result<(), PortError> {
        self.log.borrow_mut().push(Call::Reinit);
        self.inner.reinit(frame, target)
    }

    fn track(&mut self, frame: &SimFrame) -> Result<BoundingBox, PortError> {
        self.log.borrow_mut().push(Call::Track);
        self.inner.track(frame)
    }
}

impl<P: Detector<SimFrame>> Detector<SimFrame> for Logged<P> {
    fn detect(&mut self, frame: &SimFrame) -> Result<Vec<BoundingBox>, PortError> {
        self.log.borrow_mut().push(Call::Detect);
        self.inner.detect(frame)
    }
}

impl<P: Embedder<SimFrame>> Embedder<SimFrame> for Logged<P> {
    fn embed(&mut self, frame: &SimFrame, region: &BoundingBox) -> Result<FeatureVector, PortError> {
        self.log.borrow_mut().push(Call::Embed);
        self.inner.embed(frame, region)
    }
}

fn default_batch() -> (SimConfig, Vec<Arc<SyntheticSequence>>) {
    let cfg = SimConfig::default();
    let seqs = generate_batch(&cfg, 50).unwrap().into_iter().map(Arc::new).collect();
    (cfg, seqs)
}

fn transition_discipline() -> Outcome {
    let (cfg, seqs) = default_batch();
    let mut violations = Vec::new();
    let (mut entries, mut negative_appends, mut frames) = (0, 0, 0);
    for (s, seq) in seqs.iter().enumerate() {
        let log: CallLog = Rc::default();
        let p = sim_ports(seq, &cfg);
        let ports = Ports {
            tracker: Logged { inner: p.tracker, log: log.clone() },
            detector: Logged { inner: p.detector, log: log.clone() },
            embedder: Logged { inner: p.embedder, log: log.clone() },
        };
        let all = seq.frames();
        let mut c = Controller::init(&all[0], seq.initial_box().unwrap(), ports, ControllerConfig::default()).unwrap();
        for f in &all[1..] {
            log.borrow_mut().clear();
            let before = c.mode();
            c.step(f).unwrap();
            frames += 1;
            let calls = log.borrow().clone();
            let first_detect = calls.iter().position(|&k| k == Call::Detect);
            let tracks: Vec<usize> = calls.iter().enumerate().filter(|(_, &k)| k == Call::Track).map(|(i, _)| i).collect();
            // Tracking mode ends at the first detector call of a frame.
            let entered_detection = before == Mode::Tracking && first_detect.is_some();
            if before == Mode::Detecting && !tracks.is_empty() {
                violations.push(format!("seq {s} frame {}: tracker called in detecting mode", f.index));
            }
            if before == Mode::Tracking && tracks.len() != 1 {
                violations.push(format!("seq {s} frame {}: {} tracker calls", f.index, tracks.len()));
            }
            if let (Some(d), Some(&t)) = (first_detect, tracks.last()) {
                if t > d {
                    violations.push(format!("seq {s} frame {}: tracker called after detection", f.index));
                }
            }
            if before == Mode::Tracking && c.mode() == Mode::Detecting && !entered_detection {
                violations.push(format!("seq {s} frame {}: lost without detecting", f.index));
            }
            entries += entered_detection as usize;
        }
        negative_appends += c.events().iter().filter(|e| matches!(e, Event::NegativeAppended { .. })).count();
        if c.stats().negative_appends != c.stats().loss_events {
            violations.push(format!("seq {s}: stats disagree"));
        }
    }
    let pass = violations.is_empty() && negative_appends == entries && entries > 0;
    outcome(
        pass,
        format!(
            "{frames} frames, {entries} tracking->detecting transitions, {negative_appends} negative appends, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

fn recovery_behavior() -> Outcome {
    let start = Instant::now();
    let (cfg, seqs) = default_batch();
    let budgets: Vec<usize> = (0..=30).collect();
    let controller_cfg = ControllerConfig::default();
    let mut ctrl = Vec::new();
    let mut base = Vec::new();
    let mut teleport_or_occlusion = 0;
    for seq in &seqs {
        let events = seq.loss_events();
        teleport_or_occlusion += seq
            .events
            .iter()
            .filter(|e| matches!(e, SimEvent::Occlusion { .. } | SimEvent::Teleport { .. }))
            .filter(|e| events.iter().any(|&(l, _)| l == e.first_frame()))
            .count();
        let run = pnrecover::sim::run_controller(seq, &cfg, &controller_cfg).unwrap();
        let pred = trajectory(&run.results);
        ctrl.push(recovery_eval_events(&pred, &seq.gt, &events, 0.5, &budgets, RecoveryAnchor::Reappearance).unwrap());
        let pred = trajectory(&run_tracker_baseline(seq, &cfg).unwrap());
        base.push(recovery_eval_events(&pred, &seq.gt, &events, 0.5, &budgets, RecoveryAnchor::Reappearance).unwrap());
    }
    let c = RecoveryReport::pooled(&ctrl, &budgets);
    let b = RecoveryReport::pooled(&base, &budgets);
    let c5 = c.rate_within(5).unwrap_or(0.0);
    let b_ever = b.ever_recovered_rate().unwrap_or(1.0);
    let dominates = c.curve.iter().zip(&b.curve).all(|(x, y)| x.1 >= y.1)
        && c.ever_recovered_rate() >= b.ever_recovered_rate();
    let elapsed = start.elapsed();
    let pass = teleport_or_occlusion >= 40 && c5 >= 0.90 && b_ever <= 0.30 && dominates && within(elapsed, 60);
    outcome(
        pass,
        format!(
            "{} loss events ({teleport_or_occlusion} teleport/occlusion); controller {:.3} within 5 frames; \
             tracker-only {:.3} within 5, {:.3} ever; curve dominates: {dominates}; {elapsed:.2?}",
            c.events.len(),
            c5,
            b.rate_within(5).unwrap_or(0.0),
            b_ever
        ),
    )
}

fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(x, y, w, h).unwrap()
}

fn metrics_golden() -> Outcome {
    let unit_case = iou(&bb(0.0, 0.0, 1.0, 1.0), &bb(0.5, 0.0, 1.0, 1.0));
    let (_, seqs) = default_batch();
    let gt = &seqs[0].gt;
    let perfect = evaluate(gt, gt, EvalOptions::default()).unwrap();
    let perfect_ok = perfect.success_auc == 1.0 && perfect.precision_at_20 == 1.0 && perfect.normalized_precision_auc == 1.0;

    // IoU 1, IoU 0.5625 with center error sqrt(5), and a missed frame.
    // Success sweep over t = i/50 gives (51 + 29 + 0) / 153; normalized
    // precision over t = i/200 gives (101 + 56 + 0) / 303.
    let g = bb(0.0, 0.0, 10.0, 10.0);
    let pred = [Some(g), Some(bb(2.0, 1.0, 10.0, 10.0)), None];
    let r = evaluate(&pred, &[Some(g); 3], EvalOptions::default()).unwrap();
    let three_ok = (r.success_auc - 80.0 / 153.0).abs() <= 1e-12
        && (r.normalized_precision_auc - 157.0 / 303.0).abs() <= 1e-12
        && (r.precision_at_20 - 2.0 / 3.0).abs() <= 1e-12;
    outcome(
        unit_case == 1.0 / 3.0 && perfect_ok && three_ok,
        format!(
            "unit-square IoU {unit_case}; pred = gt scores {:.3}/{:.3}/{:.3}; 3-frame success {:.15} (expected {:.15})",
            perfect.success_auc,
            perfect.precision_at_20,
            perfect.normalized_precision_auc,
            r.success_auc,
            80.0 / 153.0
        ),
    )
}

fn hinge_loss() -> Outcome {
    let m = DEFAULT_TRIPLET_MARGIN;
    let violated = triplet_hinge_loss(0.6, 0.4, true, m).unwrap();
    let satisfied = triplet_hinge_loss(0.2, 0.6, true, m).unwrap();
    outcome(
        m == 0.05 && (violated - 0.25).abs() <= 1e-12 && satisfied == 0.0,
        format!("margin {m}: violated case {violated}, satisfied case {satisfied}"),
    )
}

fn pipeline_files(root: &Path) -> Vec<Vec<u8>> {
    let cfg = RunConfig::default();
    let bundle = simulate_bundle(&cfg, root).unwrap();
    let mut files = Vec::new();
    for (i, seq) in bundle.sequences.iter().enumerate() {
        write_output(root, &run_one(&cfg, seq, i, false).unwrap()).unwrap();
        for name in [TRAJECTORY_FILE, EVENTS_FILE, SNAPSHOT_FILE] {
            files.push(std::fs::read(sequence_dir(root, i).join(name)).unwrap());
        }
    }
    files
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = pipeline_files(a.path());
    let fb = pipeline_files(b.path());
    let same = fa.len() == fb.len() && fa.iter().zip(&fb).all(|(x, y)| x == y);
    let bytes: usize = fa.iter().map(Vec::len).sum();
    outcome(same && !fa.is_empty(), format!("{} files, {bytes} bytes, byte-identical: {same}", fa.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("running mean", running_mean),
        ("capacity and recency", capacity_recency),
        ("controller transition discipline", transition_discipline),
        ("recovery behavior", recovery_behavior),
        ("metrics golden values", metrics_golden),
        ("hinge loss", hinge_loss),
        ("determinism", determinism),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += !o.pass as usize;
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed in {:.2?}", criteria.len() - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
