//! Tracker/detector association driven by the sample tree.
//!
//! The controller runs in one of two modes. While [`Mode::Tracking`] only the
//! tracker is queried; each tracked box is embedded and checked against the
//! tree along the positive path. A negative verdict stores the sample as a
//! negative node and switches to [`Mode::Detecting`] within the same frame.
//! While detecting, detector candidates are checked along the negative path and
//! the first positive one re-initializes the tracker.
//!
//! Frame handles are opaque to the controller apart from their size, which is
//! only needed to pick the initial background sample.

use std::fmt;
use std::marker::PhantomData;

use crate::embedding::FeatureVector;
use crate::error::{Error, PortError, Result};
use crate::geometry::BoundingBox;
use crate::metrics::iou;
use crate::pn_tree::{
    Branch, PnTree, PositivePathMode, UpdateReport, DEFAULT_CAPACITY, DEFAULT_TAU_NEW,
};

/// Size information the controller needs from a frame handle.
pub trait FrameGeometry {
    /// `(width, height)` of the frame.
    fn frame_size(&self) -> (f64, f64);
}

/// Local tracker. `track` is only called after `reinit`.
pub trait Tracker<F: ?Sized> {
    fn reinit(&mut self, frame: &F, target: &BoundingBox) -> std::result::Result<(), PortError>;
    fn track(&mut self, frame: &F) -> std::result::Result<BoundingBox, PortError>;
}

/// Global detector returning candidates best-first.
pub trait Detector<F: ?Sized> {
    fn init(&mut self, _frame: &F, _target: &BoundingBox) -> std::result::Result<(), PortError> {
        Ok(())
    }
    fn detect(&mut self, frame: &F) -> std::result::Result<Vec<BoundingBox>, PortError>;
}

/// Appearance embedder; output dimension must be constant.
pub trait Embedder<F: ?Sized> {
    fn embed(&mut self, frame: &F, region: &BoundingBox) -> std::result::Result<FeatureVector, PortError>;
}

impl<F: ?Sized, T: Tracker<F> + ?Sized> Tracker<F> for Box<T> {
    fn reinit(&mut self, frame: &F, target: &BoundingBox) -> std::result::Result<(), PortError> {
        (**self).reinit(frame, target)
    }
    fn track(&mut self, frame: &F) -> std::result::Result<BoundingBox, PortError> {
        (**self).track(frame)
    }
}

impl<F: ?Sized, D: Detector<F> + ?Sized> Detector<F> for Box<D> {
    fn init(&mut self, frame: &F, target: &BoundingBox) -> std::result::Result<(), PortError> {
        (**self).init(frame, target)
    }
    fn detect(&mut self, frame: &F) -> std::result::Result<Vec<BoundingBox>, PortError> {
        (**self).detect(frame)
    }
}

impl<F: ?Sized, E: Embedder<F> + ?Sized> Embedder<F> for Box<E> {
    fn embed(&mut self, frame: &F, region: &BoundingBox) -> std::result::Result<FeatureVector, PortError> {
        (**self).embed(frame, region)
    }
}

/// The three ports a controller drives.
#[derive(Debug)]
pub struct Ports<T, D, E> {
    pub tracker: T,
    pub detector: D,
    pub embedder: E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Tracking,
    Detecting,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Tracking => "tracking",
            Mode::Detecting => "detecting",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetState {
    Present,
    Absent,
}

/// Which engine produced a frame's box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Tracker,
    Detector,
    None,
}

impl Source {
    pub fn code(self) -> char {
        match self {
            Source::Tracker => 'T',
            Source::Detector => 'D',
            Source::None => 'N',
        }
    }

    pub fn from_code(c: &str) -> Option<Source> {
        match c {
            "T" => Some(Source::Tracker),
            "D" => Some(Source::Detector),
            "N" => Some(Source::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameResult {
    pub frame_index: usize,
    pub bbox: Option<BoundingBox>,
    pub state: TargetState,
    pub source: Source,
}

impl FrameResult {
    pub fn present(frame_index: usize, bbox: BoundingBox, source: Source) -> Self {
        Self {
            frame_index,
            bbox: Some(bbox),
            state: TargetState::Present,
            source,
        }
    }

    pub fn absent(frame_index: usize) -> Self {
        Self {
            frame_index,
            bbox: None,
            state: TargetState::Absent,
            source: Source::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub capacity: usize,
    pub tau_new: f64,
    pub positive_path_mode: PositivePathMode,
    /// Store detector candidates judged negative as negative nodes.
    pub append_rejected_detections: bool,
    /// Abort the whole run on a port failure instead of emitting an absent frame.
    pub halt_on_port_error: bool,
    /// Region used for the initial negative sample; chosen automatically when `None`.
    pub background_box: Option<BoundingBox>,
    pub record_events: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            tau_new: DEFAULT_TAU_NEW,
            positive_path_mode: PositivePathMode::default(),
            append_rejected_detections: false,
            halt_on_port_error: false,
            background_box: None,
            record_events: true,
        }
    }
}

/// Audit record of a controller decision.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Init { template: BoundingBox, background: BoundingBox },
    ModeChange { frame: usize, from: Mode, to: Mode },
    PositiveMerged { frame: usize, seq: u64, count: u64 },
    PositiveAppended { frame: usize, seq: u64 },
    NegativeAppended { frame: usize, seq: u64 },
    Pruned { frame: usize, branch: Branch, seq: u64 },
    PortFailure { frame: usize, message: String },
}

impl Event {
    pub fn frame(&self) -> usize {
        match *self {
            Event::Init { .. } => 0,
            Event::ModeChange { frame, .. }
            | Event::PositiveMerged { frame, .. }
            | Event::PositiveAppended { frame, .. }
            | Event::NegativeAppended { frame, .. }
            | Event::Pruned { frame, .. }
            | Event::PortFailure { frame, .. } => frame,
        }
    }
}

fn fmt_box(b: &BoundingBox) -> String {
    format!("{},{},{},{}", b.x, b.y, b.w, b.h)
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Init { template, background } => {
                write!(f, "0,init,{},{}", fmt_box(template), fmt_box(background))
            }
            Event::ModeChange { frame, from, to } => write!(f, "{frame},mode,{from},{to}"),
            Event::PositiveMerged { frame, seq, count } => {
                write!(f, "{frame},positive_merge,{seq},{count}")
            }
            Event::PositiveAppended { frame, seq } => write!(f, "{frame},positive_append,{seq}"),
            Event::NegativeAppended { frame, seq } => write!(f, "{frame},negative_append,{seq}"),
            Event::Pruned { frame, branch, seq } => write!(f, "{frame},prune,{branch},{seq}"),
            Event::PortFailure { frame, message } => {
                write!(f, "{frame},port_failure,{}", message.replace(['\n', ','], " "))
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControllerStats {
    /// Frames processed after initialization.
    pub frames: usize,
    pub tracked_frames: usize,
    pub detecting_frames: usize,
    /// Tracking -> Detecting transitions.
    pub loss_events: usize,
    /// Detecting -> Tracking transitions.
    pub recoveries: usize,
    /// Frames between each loss and the matching recovery.
    pub recovery_latencies: Vec<usize>,
    pub positive_merges: usize,
    pub positive_appends: usize,
    pub negative_appends: usize,
    pub port_failures: usize,
}

/// Picks a target-sized box at the in-frame position farthest from the target
/// center with zero overlap. Halves the size until such a position exists.
pub fn choose_background_box(target: &BoundingBox, width: f64, height: f64) -> Result<BoundingBox> {
    let (tcx, tcy) = target.center();
    let (mut w, mut h) = (target.w, target.h);
    for _ in 0..32 {
        if w <= width && h <= height {
            let xs = [w / 2.0, width - w / 2.0];
            let ys = [h / 2.0, height - h / 2.0];
            let mut corners: Vec<(f64, f64, f64)> = ys
                .iter()
                .flat_map(|&cy| xs.iter().map(move |&cx| (cx, cy)))
                .map(|(cx, cy)| ((cx - tcx).hypot(cy - tcy), cx, cy))
                .collect();
            // Stable sort keeps top-left, top-right, bottom-left, bottom-right on ties.
            corners.sort_by(|a, b| b.0.total_cmp(&a.0));
            for (_, cx, cy) in corners {
                let candidate = BoundingBox::from_center(cx, cy, w, h)?;
                if iou(&candidate, target) == 0.0 {
                    return Ok(candidate);
                }
            }
        }
        w /= 2.0;
        h /= 2.0;
    }
    Err(Error::invalid("no in-frame background region disjoint from the target"))
}

fn port_err(frame: usize) -> impl Fn(PortError) -> Error {
    move |source| Error::Port { frame, source }
}

fn rejected(frame: usize, what: &str, e: Error) -> Error {
    Error::Port {
        frame,
        source: PortError::new(format!("{what} rejected: {e}")),
    }
}

/// Recoverable-tracking state machine for one sequence.
pub struct Controller<F: ?Sized, T, D, E> {
    tracker: T,
    detector: D,
    embedder: E,
    tree: PnTree,
    config: ControllerConfig,
    mode: Mode,
    last_box: Option<BoundingBox>,
    next_frame: usize,
    lost_at: Option<usize>,
    stats: ControllerStats,
    events: Vec<Event>,
    _frame: PhantomData<fn(&F)>,
}

impl<F, T, D, E> Controller<F, T, D, E>
where
    F: FrameGeometry + ?Sized,
    T: Tracker<F>,
    D: Detector<F>,
    E: Embedder<F>,
{
    /// Embeds the target and a background sample on the first frame, builds
    /// the tree and initializes both engines. The controller starts tracking.
    pub fn init(frame: &F, target: BoundingBox, ports: Ports<T, D, E>, config: ControllerConfig) -> Result<Self> {
        target.validate()?;
        let (width, height) = frame.frame_size();
        if !target.is_within(width, height) {
            return Err(Error::invalid(format!(
                "target box {target:?} is outside the {width}x{height} frame"
            )));
        }
        let Ports {
            mut tracker,
            mut detector,
            mut embedder,
        } = ports;

        let background = match config.background_box {
            Some(b) => {
                b.validate()?;
                b
            }
            None => choose_background_box(&target, width, height)?,
        };
        let template = embedder.embed(frame, &target).map_err(port_err(0))?;
        let negative = embedder.embed(frame, &background).map_err(port_err(0))?;
        let tree = PnTree::new(template, negative, config.capacity).map_err(|e| rejected(0, "initial embedding", e))?;
        tracker.reinit(frame, &target).map_err(port_err(0))?;
        detector.init(frame, &target).map_err(port_err(0))?;

        let mut events = Vec::new();
        if config.record_events {
            events.push(Event::Init {
                template: target,
                background,
            });
        }
        Ok(Self {
            tracker,
            detector,
            embedder,
            tree,
            config,
            mode: Mode::Tracking,
            last_box: Some(target),
            next_frame: 1,
            lost_at: None,
            stats: ControllerStats::default(),
            events,
            _frame: PhantomData,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn tree(&self) -> &PnTree {
        &self.tree
    }

    pub fn last_box(&self) -> Option<BoundingBox> {
        self.last_box
    }

    pub fn stats(&self) -> &ControllerStats {
        &self.stats
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Index the next call to [`Controller::step`] will assign.
    pub fn next_frame_index(&self) -> usize {
        self.next_frame
    }

    /// Processes one frame.
    ///
    /// On a port failure the frame index still advances, but mode, tree,
    /// statistics and events are left as they were.
    pub fn step(&mut self, frame: &F) -> Result<FrameResult> {
        let index = self.next_frame;
        self.next_frame += 1;
        match self.mode {
            Mode::Tracking => self.step_tracking(frame, index),
            Mode::Detecting => self.step_detecting(frame, index),
        }
    }

    /// Records a failed frame in the event log and statistics.
    pub fn note_port_failure(&mut self, frame: usize, message: String) {
        self.stats.port_failures += 1;
        if self.config.record_events {
            self.events.push(Event::PortFailure { frame, message });
        }
    }

    fn step_tracking(&mut self, frame: &F, index: usize) -> Result<FrameResult> {
        let tracked = self.tracker.track(frame).map_err(port_err(index))?;
        tracked.validate().map_err(|e| rejected(index, "tracker box", e))?;
        let x = self.embedder.embed(frame, &tracked).map_err(port_err(index))?;
        let label = self
            .tree
            .classify_positive_path_with(&x, self.config.positive_path_mode)
            .map_err(|e| rejected(index, "embedding", e))?;

        if label.is_positive() {
            let report = self.tree.update_positive(&x, self.config.tau_new)?;
            let mut events = Vec::new();
            positive_events(&mut events, index, &report);
            self.commit_events(events);
            self.stats.frames += 1;
            self.stats.tracked_frames += 1;
            self.tally(&report);
            self.last_box = Some(tracked);
            return Ok(FrameResult::present(index, tracked, Source::Tracker));
        }

        // Target lost: the rejected sample becomes a negative node and the
        // detector searches this same frame.
        let mut tree = self.tree.clone();
        let report = tree.append_negative(&x)?;
        let mut events = Vec::new();
        negative_events(&mut events, index, &report);
        events.push(Event::ModeChange {
            frame: index,
            from: Mode::Tracking,
            to: Mode::Detecting,
        });
        let mut reports = vec![report];
        let found = self.search(frame, index, &mut tree, &mut events, &mut reports)?;
        let result = self.finish_search(frame, index, tree, events, reports, found)?;

        self.stats.frames += 1;
        self.stats.tracked_frames += 1;
        self.stats.loss_events += 1;
        if result.source == Source::Detector {
            self.stats.recovery_latencies.push(0);
        } else {
            self.lost_at = Some(index);
        }
        Ok(result)
    }

    fn step_detecting(&mut self, frame: &F, index: usize) -> Result<FrameResult> {
        let mut tree = self.tree.clone();
        let mut events = Vec::new();
        let mut reports = Vec::new();
        let found = self.search(frame, index, &mut tree, &mut events, &mut reports)?;
        let result = self.finish_search(frame, index, tree, events, reports, found)?;
        self.stats.frames += 1;
        self.stats.detecting_frames += 1;
        if result.source == Source::Detector {
            let lost_at = self.lost_at.take().unwrap_or(index);
            self.stats.recovery_latencies.push(index - lost_at);
        }
        Ok(result)
    }

    /// Runs the detector and returns the first candidate judged positive.
    fn search(
        &mut self,
        frame: &F,
        index: usize,
        tree: &mut PnTree,
        events: &mut Vec<Event>,
        reports: &mut Vec<UpdateReport>,
    ) -> Result<Option<(BoundingBox, FeatureVector)>> {
        let candidates = self.detector.detect(frame).map_err(port_err(index))?;
        for candidate in candidates {
            candidate.validate().map_err(|e| rejected(index, "detector box", e))?;
            let x = self.embedder.embed(frame, &candidate).map_err(port_err(index))?;
            let label = tree
                .classify_negative_path(&x)
                .map_err(|e| rejected(index, "embedding", e))?;
            if label.is_positive() {
                return Ok(Some((candidate, x)));
            }
            if self.config.append_rejected_detections {
                let report = tree.append_negative(&x)?;
                negative_events(events, index, &report);
                reports.push(report);
            }
        }
        Ok(None)
    }

    /// Applies the outcome of a detector search. Nothing is committed unless
    /// every port call succeeded.
    fn finish_search(
        &mut self,
        frame: &F,
        index: usize,
        mut tree: PnTree,
        mut events: Vec<Event>,
        mut reports: Vec<UpdateReport>,
        found: Option<(BoundingBox, FeatureVector)>,
    ) -> Result<FrameResult> {
        let result = match found {
            Some((candidate, x)) => {
                let report = tree.update_positive(&x, self.config.tau_new)?;
                self.tracker.reinit(frame, &candidate).map_err(port_err(index))?;
                positive_events(&mut events, index, &report);
                events.push(Event::ModeChange {
                    frame: index,
                    from: Mode::Detecting,
                    to: Mode::Tracking,
                });
                reports.push(report);
                self.mode = Mode::Tracking;
                self.last_box = Some(candidate);
                self.stats.recoveries += 1;
                FrameResult::present(index, candidate, Source::Detector)
            }
            None => {
                self.mode = Mode::Detecting;
                self.last_box = None;
                FrameResult::absent(index)
            }
        };
        for report in &reports {
            self.tally(report);
        }
        self.tree = tree;
        self.commit_events(events);
        Ok(result)
    }

    fn tally(&mut self, report: &UpdateReport) {
        match (report.branch, report.merged) {
            (Branch::Positive, true) => self.stats.positive_merges += 1,
            (Branch::Positive, false) => self.stats.positive_appends += 1,
            (Branch::Negative, _) => self.stats.negative_appends += 1,
        }
    }

    fn commit_events(&mut self, events: Vec<Event>) {
        if self.config.record_events {
            self.events.extend(events);
        }
    }

    pub fn into_parts(self) -> (PnTree, ControllerStats, Vec<Event>, Ports<T, D, E>) {
        (
            self.tree,
            self.stats,
            self.events,
            Ports {
                tracker: self.tracker,
                detector: self.detector,
                embedder: self.embedder,
            },
        )
    }
}

fn positive_events(events: &mut Vec<Event>, frame: usize, report: &UpdateReport) {
    events.push(if report.merged {
        Event::PositiveMerged {
            frame,
            seq: report.seq,
            count: report.count,
        }
    } else {
        Event::PositiveAppended { frame, seq: report.seq }
    });
    prune_events(events, frame, report);
}

fn negative_events(events: &mut Vec<Event>, frame: usize, report: &UpdateReport) {
    events.push(Event::NegativeAppended { frame, seq: report.seq });
    prune_events(events, frame, report);
}

fn prune_events(events: &mut Vec<Event>, frame: usize, report: &UpdateReport) {
    events.extend(report.pruned.iter().map(|&seq| Event::Pruned {
        frame,
        branch: report.branch,
        seq,
    }));
}

/// Output of [`run_sequence`].
#[derive(Debug)]
pub struct SequenceRun<T, D, E> {
    pub results: Vec<FrameResult>,
    pub tree: PnTree,
    pub stats: ControllerStats,
    pub events: Vec<Event>,
    pub ports: Ports<T, D, E>,
}

/// Runs the controller over a whole sequence. Frame 0 is trusted and echoes
/// `target`.
pub fn run_sequence<F, T, D, E>(
    ports: Ports<T, D, E>,
    frames: &[F],
    target: BoundingBox,
    config: ControllerConfig,
) -> Result<SequenceRun<T, D, E>>
where
    F: FrameGeometry,
    T: Tracker<F>,
    D: Detector<F>,
    E: Embedder<F>,
{
    let first = frames.first().ok_or_else(|| Error::invalid("sequence has no frames"))?;
    let halt = config.halt_on_port_error;
    let mut controller = Controller::init(first, target, ports, config)?;
    let mut results = Vec::with_capacity(frames.len());
    results.push(FrameResult::present(0, target, Source::Tracker));
    for frame in &frames[1..] {
        match controller.step(frame) {
            Ok(result) => results.push(result),
            Err(Error::Port { frame: index, source }) if !halt => {
                controller.note_port_failure(index, source.0);
                results.push(FrameResult::absent(index));
            }
            Err(e) => return Err(e),
        }
    }
    let (tree, stats, events, ports) = controller.into_parts();
    Ok(SequenceRun {
        results,
        tree,
        stats,
        events,
        ports,
    })
}

/// Tracker-only baseline: no state checks and no detector, the tracker's box
/// is reported every frame.
pub fn run_tracker_only<F, T>(mut tracker: T, frames: &[F], target: BoundingBox) -> Result<Vec<FrameResult>>
where
    F: FrameGeometry,
    T: Tracker<F>,
{
    let first = frames.first().ok_or_else(|| Error::invalid("sequence has no frames"))?;
    target.validate()?;
    tracker.reinit(first, &target).map_err(port_err(0))?;
    let mut results = Vec::with_capacity(frames.len());
    results.push(FrameResult::present(0, target, Source::Tracker));
    for (index, frame) in frames.iter().enumerate().skip(1) {
        let b = tracker.track(frame).map_err(port_err(index))?;
        results.push(FrameResult::present(index, b, Source::Tracker));
    }
    Ok(results)
}

/// Boxes of a result list, `None` where the target was reported absent.
pub fn trajectory(results: &[FrameResult]) -> Vec<Option<BoundingBox>> {
    results.iter().map(|r| r.bbox).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    // A scripted world: frame i carries the box the tracker will return, the
    // detector candidates, and a lookup from box x-coordinate to embedding.
    #[derive(Clone)]
    struct ScriptFrame {
        track: BoundingBox,
        detections: Vec<BoundingBox>,
    }

    impl FrameGeometry for ScriptFrame {
        fn frame_size(&self) -> (f64, f64) {
            (1000.0, 1000.0)
        }
    }

    type Log = Rc<RefCell<Vec<&'static str>>>;

    struct ScriptTracker(Log, bool);
    impl Tracker<ScriptFrame> for ScriptTracker {
        fn reinit(&mut self, _f: &ScriptFrame, _b: &BoundingBox) -> std::result::Result<(), PortError> {
            self.0.borrow_mut().push("reinit");
            Ok(())
        }
        fn track(&mut self, f: &ScriptFrame) -> std::result::Result<BoundingBox, PortError> {
            self.0.borrow_mut().push("track");
            if self.1 && f.track.x == 999.0 {
                return Err(PortError::new("tracker crashed"));
            }
            Ok(f.track)
        }
    }

    struct ScriptDetector(Log);
    impl Detector<ScriptFrame> for ScriptDetector {
        fn detect(&mut self, f: &ScriptFrame) -> std::result::Result<Vec<BoundingBox>, PortError> {
            self.0.borrow_mut().push("detect");
            Ok(f.detections.clone())
        }
    }

    // Target boxes sit at x < 500 and embed to e0; anything else embeds to e1.
    struct ScriptEmbedder;
    impl Embedder<ScriptFrame> for ScriptEmbedder {
        fn embed(&mut self, _f: &ScriptFrame, b: &BoundingBox) -> std::result::Result<FeatureVector, PortError> {
            let v = if b.x < 500.0 { vec![1.0, 0.0, 0.0] } else { vec![0.0, 1.0, 0.0] };
            Ok(FeatureVector::new(v).unwrap())
        }
    }

    fn bb(x: f64) -> BoundingBox {
        BoundingBox::new(x, 100.0, 50.0, 50.0).unwrap()
    }

    fn frame(track: f64, detections: &[f64]) -> ScriptFrame {
        ScriptFrame {
            track: bb(track),
            detections: detections.iter().map(|&x| bb(x)).collect(),
        }
    }

    fn ports(log: &Log, failing: bool) -> Ports<ScriptTracker, ScriptDetector, ScriptEmbedder> {
        Ports {
            tracker: ScriptTracker(log.clone(), failing),
            detector: ScriptDetector(log.clone()),
            embedder: ScriptEmbedder,
        }
    }

    #[test]
    fn background_box_is_far_and_disjoint() {
        let target = BoundingBox::new(10.0, 10.0, 40.0, 30.0).unwrap();
        let bg = choose_background_box(&target, 640.0, 480.0).unwrap();
        assert_eq!(iou(&bg, &target), 0.0);
        assert_eq!((bg.w, bg.h), (40.0, 30.0));
        assert_eq!(bg.center(), (620.0, 465.0));
        // A target covering most of the frame forces a smaller background box.
        let big = BoundingBox::new(0.0, 0.0, 90.0, 90.0).unwrap();
        let bg = choose_background_box(&big, 100.0, 100.0).unwrap();
        assert_eq!(iou(&bg, &big), 0.0);
        assert!(bg.is_within(100.0, 100.0));
    }

    #[test]
    fn init_validates_target() {
        let log = Log::default();
        let f = frame(0.0, &[]);
        let bad = BoundingBox { x: 0.0, y: 0.0, w: 0.0, h: 5.0 };
        assert!(Controller::init(&f, bad, ports(&log, false), ControllerConfig::default()).is_err());
        let outside = BoundingBox::new(990.0, 0.0, 50.0, 50.0).unwrap();
        assert!(Controller::init(&f, outside, ports(&log, false), ControllerConfig::default()).is_err());
    }

    #[test]
    fn init_builds_tree_and_starts_tracking() {
        let log = Log::default();
        let c = Controller::init(&frame(0.0, &[]), bb(0.0), ports(&log, false), ControllerConfig::default()).unwrap();
        assert_eq!(c.mode(), Mode::Tracking);
        assert_eq!(c.tree().positive_branch().len(), 1);
        assert_eq!(c.tree().negative_branch().len(), 1);
        assert_eq!(c.tree().root().feature().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(c.tree().negative_branch()[0].feature().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(*log.borrow(), vec!["reinit"]);
    }

    #[test]
    fn loss_then_same_frame_recovery() {
        let log = Log::default();
        let frames = vec![
            frame(0.0, &[]),
            frame(10.0, &[]),
            // Tracker drifts onto background; detector finds the target at once.
            frame(600.0, &[700.0, 20.0]),
            frame(25.0, &[]),
        ];
        let run = run_sequence(ports(&log, false), &frames, bb(0.0), ControllerConfig::default()).unwrap();
        let sources: Vec<Source> = run.results.iter().map(|r| r.source).collect();
        assert_eq!(sources, vec![Source::Tracker, Source::Tracker, Source::Detector, Source::Tracker]);
        assert_eq!(run.results[2].bbox, Some(bb(20.0)));
        assert_eq!(run.stats.loss_events, 1);
        assert_eq!(run.stats.recoveries, 1);
        assert_eq!(run.stats.recovery_latencies, vec![0]);
        assert_eq!(run.stats.negative_appends, 1);
        assert_eq!(
            *log.borrow(),
            vec!["reinit", "track", "track", "detect", "reinit", "track"]
        );
    }

    #[test]
    fn absent_frames_until_detection() {
        let log = Log::default();
        let frames = vec![
            frame(0.0, &[]),
            frame(600.0, &[]),
            frame(600.0, &[800.0]),
            frame(600.0, &[30.0]),
            frame(30.0, &[]),
        ];
        let run = run_sequence(ports(&log, false), &frames, bb(0.0), ControllerConfig::default()).unwrap();
        let states: Vec<TargetState> = run.results.iter().map(|r| r.state).collect();
        assert_eq!(
            states,
            vec![TargetState::Present, TargetState::Absent, TargetState::Absent, TargetState::Present, TargetState::Present]
        );
        assert_eq!(run.results[3].source, Source::Detector);
        assert_eq!(run.stats.recovery_latencies, vec![2]);
        // The rejected detection at frame 2 is not stored by default.
        assert_eq!(run.tree.negative_branch().len(), 2);
        assert_eq!(
            *log.borrow(),
            vec!["reinit", "track", "detect", "detect", "detect", "reinit", "track"]
        );
        let modes: Vec<String> = run
            .events
            .iter()
            .filter(|e| matches!(e, Event::ModeChange { .. }))
            .map(|e| e.to_string())
            .collect();
        assert_eq!(modes, vec!["1,mode,tracking,detecting", "3,mode,detecting,tracking"]);
    }

    #[test]
    fn rejected_detections_stored_when_enabled() {
        let log = Log::default();
        let frames = vec![frame(0.0, &[]), frame(600.0, &[]), frame(600.0, &[800.0, 900.0])];
        let config = ControllerConfig {
            append_rejected_detections: true,
            ..ControllerConfig::default()
        };
        let run = run_sequence(ports(&log, false), &frames, bb(0.0), config).unwrap();
        assert_eq!(run.tree.negative_branch().len(), 4);
    }

    #[test]
    fn port_failure_leaves_state_untouched() {
        let log = Log::default();
        let frames = [frame(0.0, &[]), frame(10.0, &[]), frame(999.0, &[]), frame(12.0, &[])];
        let mut c = Controller::init(&frames[0], bb(0.0), ports(&log, true), ControllerConfig::default()).unwrap();
        c.step(&frames[1]).unwrap();
        let snapshot = c.tree().to_snapshot();
        let stats = c.stats().clone();
        match c.step(&frames[2]) {
            Err(Error::Port { frame, .. }) => assert_eq!(frame, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(c.tree().to_snapshot(), snapshot);
        assert_eq!(c.stats(), &stats);
        assert_eq!(c.mode(), Mode::Tracking);
        assert_eq!(c.step(&frames[3]).unwrap().frame_index, 3);
    }

    #[test]
    fn port_failure_policy_in_runs() {
        let log = Log::default();
        let frames = vec![frame(0.0, &[]), frame(999.0, &[]), frame(12.0, &[])];
        let run = run_sequence(ports(&log, true), &frames, bb(0.0), ControllerConfig::default()).unwrap();
        assert_eq!(run.results[1], FrameResult::absent(1));
        assert_eq!(run.results[2].source, Source::Tracker);
        assert_eq!(run.stats.port_failures, 1);
        assert!(run.events.iter().any(|e| matches!(e, Event::PortFailure { frame: 1, .. })));

        let halting = ControllerConfig {
            halt_on_port_error: true,
            ..ControllerConfig::default()
        };
        assert!(matches!(
            run_sequence(ports(&log, true), &frames, bb(0.0), halting),
            Err(Error::Port { frame: 1, .. })
        ));
    }

    #[test]
    fn single_frame_sequence_echoes_target() {
        let log = Log::default();
        let run = run_sequence(ports(&log, false), &[frame(0.0, &[])], bb(0.0), ControllerConfig::default()).unwrap();
        assert_eq!(run.results, vec![FrameResult::present(0, bb(0.0), Source::Tracker)]);
        let empty: [ScriptFrame; 0] = [];
        assert!(run_sequence(ports(&log, false), &empty, bb(0.0), ControllerConfig::default()).is_err());
    }
}
