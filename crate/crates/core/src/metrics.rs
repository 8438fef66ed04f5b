//! Tracking scores: IoU success curve, center-error precision, normalized
//! precision, and the recovery-ability report.
//!
//! Trajectories are slices of `Option<BoundingBox>`, `None` meaning the target
//! is reported (or annotated) absent in that frame.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Center-error threshold, in pixels, of the precision score.
pub const PRECISION_THRESHOLD: f64 = 20.0;
/// Number of IoU thresholds in the success curve (0.00, 0.02, ..., 1.00).
pub const SUCCESS_POINTS: usize = 51;
/// Number of normalized-error thresholds (0.000, 0.005, ..., 0.500).
pub const NORM_PRECISION_POINTS: usize = 101;
/// Pixel thresholds of the emitted precision curve (0..=50).
pub const PRECISION_POINTS: usize = 51;
/// Overlap a prediction must exceed to count as a recovery.
pub const DEFAULT_RECOVERY_OVERLAP: f64 = 0.5;

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn success_threshold(i: usize) -> f64 {
    i as f64 / 50.0
}

pub fn norm_precision_threshold(i: usize) -> f64 {
    i as f64 / 200.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    /// Skip frames whose ground truth is absent instead of scoring them.
    pub ignore_absent_frames: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub success_auc: f64,
    pub precision_at_20: f64,
    pub normalized_precision_auc: f64,
    /// `(iou threshold, success rate)`, 51 points.
    pub success_curve: Vec<(f64, f64)>,
    /// `(pixel threshold, precision)`, 51 points.
    pub precision_curve: Vec<(f64, f64)>,
    /// `(normalized threshold, precision)`, 101 points.
    pub normalized_precision_curve: Vec<(f64, f64)>,
    /// Number of frames that were scored.
    pub frame_count: usize,
}

impl EvalResult {
    pub fn summary(&self) -> String {
        format!(
            "frames {}\nsuccess_auc {:.3}\nprecision_at_20 {:.3}\nnormalized_precision_auc {:.3}\n",
            self.frame_count, self.success_auc, self.precision_at_20, self.normalized_precision_auc
        )
    }

    /// Curves as comma-separated rows `curve,threshold,value`.
    pub fn curves_table(&self) -> String {
        let mut out = String::from("curve,threshold,value\n");
        for (name, curve) in [
            ("success", &self.success_curve),
            ("precision", &self.precision_curve),
            ("normalized_precision", &self.normalized_precision_curve),
        ] {
            for (t, v) in curve {
                let _ = writeln!(out, "{name},{t},{v}");
            }
        }
        out
    }
}

enum FrameScore {
    /// Ground truth absent and prediction absent.
    CorrectAbsence,
    /// Any frame where no overlap can be scored as a hit.
    Miss,
    Overlap {
        iou: f64,
        center_error: f64,
        normalized_error: f64,
    },
}

impl FrameScore {
    fn success_hit(&self, threshold: f64) -> bool {
        match *self {
            FrameScore::CorrectAbsence => true,
            FrameScore::Miss => false,
            FrameScore::Overlap { iou, .. } => {
                if threshold == 0.0 {
                    iou > 0.0
                } else {
                    iou >= threshold
                }
            }
        }
    }

    fn precision_hit(&self, threshold: f64) -> bool {
        match *self {
            FrameScore::CorrectAbsence => true,
            FrameScore::Miss => false,
            FrameScore::Overlap { center_error, .. } => center_error <= threshold,
        }
    }

    fn normalized_hit(&self, threshold: f64) -> bool {
        match *self {
            FrameScore::CorrectAbsence => true,
            FrameScore::Miss => false,
            FrameScore::Overlap { normalized_error, .. } => normalized_error <= threshold,
        }
    }
}

fn score_frame(pred: Option<&BoundingBox>, gt: Option<&BoundingBox>) -> FrameScore {
    match (pred, gt) {
        (None, None) => FrameScore::CorrectAbsence,
        (Some(_), None) | (None, Some(_)) => FrameScore::Miss,
        (Some(p), Some(g)) => {
            let (px, py) = p.center();
            let (gx, gy) = g.center();
            FrameScore::Overlap {
                iou: iou(p, g),
                center_error: (px - gx).hypot(py - gy),
                normalized_error: ((px - gx) / g.w).hypot((py - gy) / g.h),
            }
        }
    }
}

fn rate(scores: &[FrameScore], hit: impl Fn(&FrameScore) -> bool) -> f64 {
    scores.iter().filter(|s| hit(s)).count() as f64 / scores.len() as f64
}

/// Scores a predicted trajectory against ground truth.
///
/// Success at threshold `t` counts IoU `>= t` (IoU `> 0` at `t = 0`).
/// Frames where the ground truth is absent are hits at every threshold iff the
/// prediction is absent too, unless `ignore_absent_frames` is set.
pub fn evaluate(
    pred: &[Option<BoundingBox>],
    gt: &[Option<BoundingBox>],
    options: EvalOptions,
) -> Result<EvalResult> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectory has {} frames but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    let scores: Vec<FrameScore> = pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| !(options.ignore_absent_frames && g.is_none()))
        .map(|(p, g)| score_frame(p.as_ref(), g.as_ref()))
        .collect();
    if scores.is_empty() {
        return Err(Error::invalid("no frames to score"));
    }

    let success_curve: Vec<(f64, f64)> = (0..SUCCESS_POINTS)
        .map(success_threshold)
        .map(|t| (t, rate(&scores, |s| s.success_hit(t))))
        .collect();
    let precision_curve: Vec<(f64, f64)> = (0..PRECISION_POINTS)
        .map(|i| i as f64)
        .map(|t| (t, rate(&scores, |s| s.precision_hit(t))))
        .collect();
    let normalized_precision_curve: Vec<(f64, f64)> = (0..NORM_PRECISION_POINTS)
        .map(norm_precision_threshold)
        .map(|t| (t, rate(&scores, |s| s.normalized_hit(t))))
        .collect();

    let mean = |c: &[(f64, f64)]| c.iter().map(|(_, v)| v).sum::<f64>() / c.len() as f64;
    Ok(EvalResult {
        success_auc: mean(&success_curve),
        precision_at_20: rate(&scores, |s| s.precision_hit(PRECISION_THRESHOLD)),
        normalized_precision_auc: mean(&normalized_precision_curve),
        success_curve,
        precision_curve,
        normalized_precision_curve,
        frame_count: scores.len(),
    })
}

/// Frame from which recovery latency is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RecoveryAnchor {
    /// First frame the target is visible again.
    #[default]
    Reappearance,
    /// First frame of the absence.
    Loss,
}

impl RecoveryAnchor {
    pub fn as_str(self) -> &'static str {
        match self {
            RecoveryAnchor::Reappearance => "reappearance",
            RecoveryAnchor::Loss => "loss",
        }
    }
}

impl FromStr for RecoveryAnchor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "reappearance" => Ok(RecoveryAnchor::Reappearance),
            "loss" => Ok(RecoveryAnchor::Loss),
            other => Err(format!("expected reappearance or loss, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryEvent {
    pub loss_frame: usize,
    pub reappear_frame: usize,
    /// Frames from the anchor to the first overlapping prediction; `None` if never.
    pub frames_to_recover: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecoveryReport {
    pub events: Vec<RecoveryEvent>,
    /// `(frame budget, fraction of events recovered within it)`.
    pub curve: Vec<(usize, f64)>,
}

fn curve_for(events: &[RecoveryEvent], budgets: &[usize]) -> Vec<(usize, f64)> {
    if events.is_empty() {
        return Vec::new();
    }
    budgets
        .iter()
        .map(|&b| {
            let hits = events
                .iter()
                .filter(|e| e.frames_to_recover.is_some_and(|k| k <= b))
                .count();
            (b, hits as f64 / events.len() as f64)
        })
        .collect()
}

impl RecoveryReport {
    /// Fraction of events recovered at any point, i.e. the curve at an unbounded budget.
    pub fn ever_recovered_rate(&self) -> Option<f64> {
        if self.events.is_empty() {
            return None;
        }
        let n = self.events.iter().filter(|e| e.frames_to_recover.is_some()).count();
        Some(n as f64 / self.events.len() as f64)
    }

    /// Rate at one budget, computed from the events.
    pub fn rate_within(&self, budget: usize) -> Option<f64> {
        curve_for(&self.events, &[budget]).first().map(|&(_, r)| r)
    }

    /// All events of several sequences treated as one population.
    pub fn pooled(reports: &[RecoveryReport], budgets: &[usize]) -> RecoveryReport {
        let events: Vec<RecoveryEvent> = reports.iter().flat_map(|r| r.events.iter().copied()).collect();
        let curve = curve_for(&events, budgets);
        RecoveryReport { events, curve }
    }

    /// Per-budget mean of per-sequence rates, over sequences with at least one event.
    pub fn per_sequence_mean(reports: &[RecoveryReport], budgets: &[usize]) -> Vec<(usize, f64)> {
        let with_events: Vec<&RecoveryReport> = reports.iter().filter(|r| !r.events.is_empty()).collect();
        if with_events.is_empty() {
            return Vec::new();
        }
        budgets
            .iter()
            .map(|&b| {
                let total: f64 = with_events
                    .iter()
                    .map(|r| curve_for(&r.events, &[b])[0].1)
                    .sum();
                (b, total / with_events.len() as f64)
            })
            .collect()
    }

    pub fn events_table(&self) -> String {
        let mut out = String::from("loss_frame,reappear_frame,frames_to_recover\n");
        for e in &self.events {
            let k = e.frames_to_recover.map_or_else(|| "inf".to_string(), |k| k.to_string());
            let _ = writeln!(out, "{},{},{}", e.loss_frame, e.reappear_frame, k);
        }
        out
    }

    pub fn curve_table(&self) -> String {
        curve_table(&self.curve)
    }
}

pub fn curve_table(curve: &[(usize, f64)]) -> String {
    let mut out = String::from("budget,recovery_rate\n");
    for (b, r) in curve {
        let _ = writeln!(out, "{b},{r}");
    }
    out
}

/// Measures how quickly the prediction re-acquires the target after each
/// ground-truth absence interval.
///
/// An event is recovered at the first frame of the following visible stretch
/// whose IoU with the ground truth exceeds `overlap_threshold`.
pub fn recovery_eval(
    pred: &[Option<BoundingBox>],
    gt: &[Option<BoundingBox>],
    overlap_threshold: f64,
    budgets: &[usize],
    anchor: RecoveryAnchor,
) -> Result<RecoveryReport> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectory has {} frames but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    let intervals = absence_intervals(gt);
    recovery_eval_events(pred, gt, &intervals, overlap_threshold, budgets, anchor)
}

/// `(loss frame, reappearance frame)` of every ground-truth absence that is
/// followed by a visible frame.
pub fn absence_intervals(gt: &[Option<BoundingBox>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < gt.len() {
        if gt[t].is_some() {
            t += 1;
            continue;
        }
        let loss_frame = t;
        while t < gt.len() && gt[t].is_none() {
            t += 1;
        }
        if t < gt.len() {
            out.push((loss_frame, t));
        }
    }
    out
}

/// Like [`recovery_eval`], but with the loss events given explicitly as
/// `(loss frame, reappearance frame)` pairs. This admits events such as a
/// target jumping away, which leave no gap in the ground truth.
///
/// The search for each event stops at the next ground-truth absence.
pub fn recovery_eval_events(
    pred: &[Option<BoundingBox>],
    gt: &[Option<BoundingBox>],
    loss_events: &[(usize, usize)],
    overlap_threshold: f64,
    budgets: &[usize],
    anchor: RecoveryAnchor,
) -> Result<RecoveryReport> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "trajectory has {} frames but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut events = Vec::with_capacity(loss_events.len());
    for &(loss_frame, reappear_frame) in loss_events {
        if loss_frame > reappear_frame || reappear_frame >= gt.len() || gt[reappear_frame].is_none() {
            return Err(Error::invalid(format!(
                "loss event {loss_frame}-{reappear_frame} does not end on a visible frame"
            )));
        }
        let end = (reappear_frame..gt.len()).find(|&f| gt[f].is_none()).unwrap_or(gt.len());
        let hit = (reappear_frame..end).find(|&f| match (&pred[f], &gt[f]) {
            (Some(p), Some(g)) => iou(p, g) > overlap_threshold,
            _ => false,
        });
        let origin = match anchor {
            RecoveryAnchor::Reappearance => reappear_frame,
            RecoveryAnchor::Loss => loss_frame,
        };
        events.push(RecoveryEvent {
            loss_frame,
            reappear_frame,
            frames_to_recover: hit.map(|f| f - origin),
        });
    }
    let curve = curve_for(&events, budgets);
    Ok(RecoveryReport { events, curve })
}
