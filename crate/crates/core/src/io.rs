//! Text formats: ground-truth and trajectory tables, event logs, and the flat
//! `key = value` run configuration.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! table reloads bit-identically.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::controller::{ControllerConfig, Event, FrameResult, Source, TargetState};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::metrics::{EvalOptions, RecoveryAnchor, DEFAULT_RECOVERY_OVERLAP};
use crate::sim::{SimConfig, SimEvent};

pub const GT_HEADER: &str = "frame,present,x,y,w,h";
pub const TRAJECTORY_HEADER: &str = "frame,present,x,y,w,h,source";
pub const EVENTS_HEADER: &str = "frame,kind,details";

fn box_fields(b: Option<&BoundingBox>) -> String {
    match b {
        Some(b) => format!("1,{},{},{},{}", b.x, b.y, b.w, b.h),
        None => "0,,,,".to_string(),
    }
}

pub fn write_ground_truth(gt: &[Option<BoundingBox>]) -> String {
    let mut out = String::with_capacity(gt.len() * 40);
    let _ = writeln!(out, "{GT_HEADER}");
    for (t, b) in gt.iter().enumerate() {
        let _ = writeln!(out, "{t},{}", box_fields(b.as_ref()));
    }
    out
}

pub fn write_trajectory(results: &[FrameResult]) -> String {
    let mut out = String::with_capacity(results.len() * 44);
    let _ = writeln!(out, "{TRAJECTORY_HEADER}");
    for r in results {
        let _ = writeln!(out, "{},{},{}", r.frame_index, box_fields(r.bbox.as_ref()), r.source.code());
    }
    out
}

pub fn write_events(events: &[Event]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{EVENTS_HEADER}");
    for e in events {
        let _ = writeln!(out, "{e}");
    }
    out
}

struct Row<'a> {
    line: usize,
    frame: usize,
    fields: Vec<&'a str>,
}

fn table_rows<'a>(text: &'a str, header: &str) -> Result<Vec<Row<'a>>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));
    match lines.next() {
        Some((_, h)) if h == header => {}
        Some((n, h)) => return Err(Error::parse(n, format!("expected header `{header}`, got `{h}`"))),
        None => return Err(Error::parse(1, "empty file")),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .enumerate()
        .map(|(expected, (line, l))| {
            let fields: Vec<&str> = l.split(',').map(str::trim).collect();
            let frame: usize = fields[0]
                .parse()
                .map_err(|_| Error::parse(line, format!("bad frame index `{}`", fields[0])))?;
            if frame != expected {
                return Err(Error::parse(line, format!("expected frame {expected}, got {frame}")));
            }
            Ok(Row { line, frame, fields })
        })
        .collect()
}

/// Parses `present,x,y,w,h` starting at `fields[1]`.
fn parse_box(row: &Row) -> Result<Option<BoundingBox>> {
    let f = &row.fields;
    let line = row.line;
    match f[1] {
        "0" => {
            if f[2..6].iter().any(|v| !v.is_empty()) {
                return Err(Error::parse(line, "absent row must leave x,y,w,h empty"));
            }
            Ok(None)
        }
        "1" => {
            let mut v = [0.0; 4];
            for (slot, text) in v.iter_mut().zip(&f[2..6]) {
                *slot = text
                    .parse()
                    .map_err(|_| Error::parse(line, format!("bad number `{text}`")))?;
            }
            BoundingBox::new(v[0], v[1], v[2], v[3])
                .map(Some)
                .map_err(|e| Error::parse(line, e.to_string()))
        }
        other => Err(Error::parse(line, format!("present must be 0 or 1, got `{other}`"))),
    }
}

fn expect_fields(row: &Row, n: usize) -> Result<()> {
    if row.fields.len() != n {
        return Err(Error::parse(
            row.line,
            format!("expected {n} fields, got {}", row.fields.len()),
        ));
    }
    Ok(())
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<Option<BoundingBox>>> {
    table_rows(text, GT_HEADER)?
        .iter()
        .map(|row| {
            expect_fields(row, 6)?;
            parse_box(row)
        })
        .collect()
}

pub fn parse_trajectory(text: &str) -> Result<Vec<FrameResult>> {
    table_rows(text, TRAJECTORY_HEADER)?
        .iter()
        .map(|row| {
            expect_fields(row, 7)?;
            let bbox = parse_box(row)?;
            let source = Source::from_code(row.fields[6])
                .ok_or_else(|| Error::parse(row.line, format!("unknown source `{}`", row.fields[6])))?;
            Ok(FrameResult {
                frame_index: row.frame,
                bbox,
                state: if bbox.is_some() { TargetState::Present } else { TargetState::Absent },
                source,
            })
        })
        .collect()
}

/// Reads either a trajectory or a ground-truth table as a list of boxes.
pub fn parse_boxes(text: &str) -> Result<Vec<Option<BoundingBox>>> {
    if text.lines().next().map(str::trim_end) == Some(TRAJECTORY_HEADER) {
        Ok(parse_trajectory(text)?.into_iter().map(|r| r.bbox).collect())
    } else {
        parse_ground_truth(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub ignore_absent_frames: bool,
    pub recovery_anchor: RecoveryAnchor,
    pub overlap_threshold: f64,
    /// Frame budgets of the recovery curve.
    pub budgets: Vec<usize>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            ignore_absent_frames: false,
            recovery_anchor: RecoveryAnchor::Reappearance,
            overlap_threshold: DEFAULT_RECOVERY_OVERLAP,
            budgets: (0..=30).collect(),
        }
    }
}

impl MetricsConfig {
    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            ignore_absent_frames: self.ignore_absent_frames,
        }
    }
}

/// Everything a simulate/run/eval pipeline needs, as one flat key space.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub controller: ControllerConfig,
    pub sim: SimConfig,
    pub metrics: MetricsConfig,
    /// Sequences per batch.
    pub sequences: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            controller: ControllerConfig::default(),
            sim: SimConfig::default(),
            metrics: MetricsConfig::default(),
            sequences: 50,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{raw}`")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{raw}`"))),
    }
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines over the current values. Blank lines and
    /// lines starting with `#` are skipped; a key may appear once.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, format!("expected key = value, got `{line}`")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, format!("set twice (line {})", i + 1)));
            }
            self.set(key, raw.trim())?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if self.controller.capacity == 0 {
            return Err(Error::config("tree.capacity", "must be at least 1"));
        }
        if !(self.controller.tau_new > -1.0 && self.controller.tau_new < 1.0) {
            return Err(Error::config("tree.tau_new", "must lie strictly between -1 and 1"));
        }
        if !(0.0..1.0).contains(&self.metrics.overlap_threshold) {
            return Err(Error::config("metrics.overlap_threshold", "must lie in [0, 1)"));
        }
        if self.sequences == 0 {
            return Err(Error::config("run.sequences", "must be at least 1"));
        }
        self.sim.validate()
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let c = &mut self.controller;
        let s = &mut self.sim;
        let m = &mut self.metrics;
        match key {
            "tree.capacity" => c.capacity = value(key, raw)?,
            "tree.tau_new" => c.tau_new = value(key, raw)?,
            "tree.positive_path_mode" => c.positive_path_mode = value(key, raw)?,
            "controller.append_rejected_detections" => c.append_rejected_detections = flag(key, raw)?,
            "controller.halt_on_port_error" => c.halt_on_port_error = flag(key, raw)?,
            "controller.record_events" => c.record_events = flag(key, raw)?,
            "controller.background_box" => {
                c.background_box = if raw == "auto" {
                    None
                } else {
                    let v: Vec<f64> = list(key, raw)?;
                    if v.len() != 4 {
                        return Err(Error::config(key, "expected `auto` or x,y,w,h"));
                    }
                    Some(BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| Error::config(key, e.to_string()))?)
                }
            }
            "sim.seed" => s.seed = value(key, raw)?,
            "sim.length" => s.length = value(key, raw)?,
            "sim.frame_width" => s.frame_width = value(key, raw)?,
            "sim.frame_height" => s.frame_height = value(key, raw)?,
            "sim.dim" => s.dim = value(key, raw)?,
            "sim.box_min" => s.box_min = value(key, raw)?,
            "sim.box_max" => s.box_max = value(key, raw)?,
            "sim.max_speed" => s.max_speed = value(key, raw)?,
            "sim.acceleration" => s.acceleration = value(key, raw)?,
            "sim.appearance_drift" => s.appearance_drift = value(key, raw)?,
            "sim.target_spread_deg" => s.target_spread_deg = value(key, raw)?,
            "sim.noise" => s.noise = value(key, raw)?,
            "sim.distractors" => s.distractors = value(key, raw)?,
            "sim.distractor_separation_deg" => s.distractor_separation_deg = value(key, raw)?,
            "sim.distractor_spread_deg" => s.distractor_spread_deg = value(key, raw)?,
            "sim.clutter_spread_deg" => s.clutter_spread_deg = value(key, raw)?,
            "sim.occlusions" => s.occlusions = value(key, raw)?,
            "sim.out_of_views" => s.out_of_views = value(key, raw)?,
            "sim.teleports" => s.teleports = value(key, raw)?,
            "sim.appearance_jumps" => s.appearance_jumps = value(key, raw)?,
            "sim.event_min_len" => s.event_min_len = value(key, raw)?,
            "sim.event_max_len" => s.event_max_len = value(key, raw)?,
            "sim.appearance_jump_deg" => s.appearance_jump_deg = value(key, raw)?,
            "sim.schedule" => {
                s.schedule = if raw == "random" {
                    None
                } else {
                    let events: std::result::Result<Vec<SimEvent>, String> = raw
                        .split(',')
                        .map(str::trim)
                        .filter(|e| !e.is_empty())
                        .map(str::parse)
                        .collect();
                    Some(events.map_err(|e| Error::config(key, e))?)
                }
            }
            "tracker.search_area_factor" => s.tracker.search_area_factor = value(key, raw)?,
            "tracker.drift_noise" => s.tracker.drift_noise = value(key, raw)?,
            "tracker.lock_on_distractors" => s.tracker.lock_on_distractors = flag(key, raw)?,
            "detector.recall" => s.detector.recall = value(key, raw)?,
            "detector.max_candidates" => s.detector.max_candidates = value(key, raw)?,
            "detector.include_distractors" => s.detector.include_distractors = flag(key, raw)?,
            "metrics.ignore_absent_frames" => m.ignore_absent_frames = flag(key, raw)?,
            "metrics.recovery_anchor" => {
                m.recovery_anchor = raw.parse().map_err(|e: String| Error::config(key, e))?
            }
            "metrics.overlap_threshold" => m.overlap_threshold = value(key, raw)?,
            "metrics.budgets" => {
                let mut b: Vec<usize> = list(key, raw)?;
                b.sort_unstable();
                b.dedup();
                m.budgets = b;
            }
            "run.sequences" => self.sequences = value(key, raw)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Every key with its current value; [`RunConfig::parse`] reads it back
    /// to an equal config.
    pub fn to_text(&self) -> String {
        let c = &self.controller;
        let s = &self.sim;
        let m = &self.metrics;
        let background = c
            .background_box
            .map_or_else(|| "auto".to_string(), |b| format!("{},{},{},{}", b.x, b.y, b.w, b.h));
        let schedule = s.schedule.as_ref().map_or_else(|| "random".to_string(), |e| join(e));
        let rows: Vec<(&str, String)> = vec![
            ("tree.capacity", c.capacity.to_string()),
            ("tree.tau_new", c.tau_new.to_string()),
            ("tree.positive_path_mode", c.positive_path_mode.as_str().to_string()),
            ("controller.append_rejected_detections", c.append_rejected_detections.to_string()),
            ("controller.halt_on_port_error", c.halt_on_port_error.to_string()),
            ("controller.record_events", c.record_events.to_string()),
            ("controller.background_box", background),
            ("sim.seed", s.seed.to_string()),
            ("sim.length", s.length.to_string()),
            ("sim.frame_width", s.frame_width.to_string()),
            ("sim.frame_height", s.frame_height.to_string()),
            ("sim.dim", s.dim.to_string()),
            ("sim.box_min", s.box_min.to_string()),
            ("sim.box_max", s.box_max.to_string()),
            ("sim.max_speed", s.max_speed.to_string()),
            ("sim.acceleration", s.acceleration.to_string()),
            ("sim.appearance_drift", s.appearance_drift.to_string()),
            ("sim.target_spread_deg", s.target_spread_deg.to_string()),
            ("sim.noise", s.noise.to_string()),
            ("sim.distractors", s.distractors.to_string()),
            ("sim.distractor_separation_deg", s.distractor_separation_deg.to_string()),
            ("sim.distractor_spread_deg", s.distractor_spread_deg.to_string()),
            ("sim.clutter_spread_deg", s.clutter_spread_deg.to_string()),
            ("sim.occlusions", s.occlusions.to_string()),
            ("sim.out_of_views", s.out_of_views.to_string()),
            ("sim.teleports", s.teleports.to_string()),
            ("sim.appearance_jumps", s.appearance_jumps.to_string()),
            ("sim.event_min_len", s.event_min_len.to_string()),
            ("sim.event_max_len", s.event_max_len.to_string()),
            ("sim.appearance_jump_deg", s.appearance_jump_deg.to_string()),
            ("sim.schedule", schedule),
            ("tracker.search_area_factor", s.tracker.search_area_factor.to_string()),
            ("tracker.drift_noise", s.tracker.drift_noise.to_string()),
            ("tracker.lock_on_distractors", s.tracker.lock_on_distractors.to_string()),
            ("detector.recall", s.detector.recall.to_string()),
            ("detector.max_candidates", s.detector.max_candidates.to_string()),
            ("detector.include_distractors", s.detector.include_distractors.to_string()),
            ("metrics.ignore_absent_frames", m.ignore_absent_frames.to_string()),
            ("metrics.recovery_anchor", m.recovery_anchor.as_str().to_string()),
            ("metrics.overlap_threshold", m.overlap_threshold.to_string()),
            ("metrics.budgets", join(&m.budgets)),
            ("run.sequences", self.sequences.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
