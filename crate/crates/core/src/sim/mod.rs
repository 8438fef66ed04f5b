//! Deterministic synthetic tracking world.
//!
//! A sequence is a ground-truth trajectory for one target plus a few
//! distractor objects, each carrying a unit-length appearance vector per
//! frame. Frames are abstract handles ([`SimFrame`]); the mock engines in
//! [`ports`] read the sequence directly.
//!
//! Appearance geometry: the target's appearance wanders inside a spherical cap
//! around a target center. Distractors wander inside small caps clustered
//! around a clutter direction, which is also the background appearance. The
//! clutter direction sits far enough from the target center that every
//! distractor stays at least `distractor_separation_deg` away from the target
//! at all times.
//!
//! Everything is derived from `SimConfig::seed`.

pub mod ports;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::controller::{
    run_sequence, run_tracker_only, ControllerConfig, FrameGeometry, FrameResult, Ports, SequenceRun,
};
use crate::embedding::FeatureVector;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub use ports::{MockDetector, MockDetectorParams, MockEmbedder, MockTracker, MockTrackerParams};

/// Fraction of the tracker's search radius by which teleports and
/// reappearances must clear the previous position.
const CLEARANCE: f64 = 1.5;
const WARMUP_FRAMES: usize = 30;

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEvent {
    /// Target hidden in place on frames `start..=end`.
    Occlusion { start: usize, end: usize },
    /// Target outside the frame on `start..=end`; it re-enters at a border.
    OutOfView { start: usize, end: usize },
    /// Target jumps beyond the tracker's search region at this frame.
    Teleport { frame: usize },
    /// Target appearance changes abruptly at this frame.
    AppearanceJump { frame: usize },
}

impl SimEvent {
    pub fn first_frame(&self) -> usize {
        match *self {
            SimEvent::Occlusion { start, .. } | SimEvent::OutOfView { start, .. } => start,
            SimEvent::Teleport { frame } | SimEvent::AppearanceJump { frame } => frame,
        }
    }

    pub fn last_frame(&self) -> usize {
        match *self {
            SimEvent::Occlusion { end, .. } | SimEvent::OutOfView { end, .. } => end,
            SimEvent::Teleport { frame } | SimEvent::AppearanceJump { frame } => frame,
        }
    }

    /// Absence interval, for events that hide the target.
    pub fn absence(&self) -> Option<(usize, usize)> {
        match *self {
            SimEvent::Occlusion { start, end } | SimEvent::OutOfView { start, end } => Some((start, end)),
            _ => None,
        }
    }
}

impl fmt::Display for SimEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimEvent::Occlusion { start, end } => write!(f, "occlusion:{start}-{end}"),
            SimEvent::OutOfView { start, end } => write!(f, "out_of_view:{start}-{end}"),
            SimEvent::Teleport { frame } => write!(f, "teleport:{frame}"),
            SimEvent::AppearanceJump { frame } => write!(f, "appearance_jump:{frame}"),
        }
    }
}

impl FromStr for SimEvent {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (kind, at) = s
            .split_once(':')
            .ok_or_else(|| format!("expected kind:frames, got `{s}`"))?;
        let range = |at: &str| -> std::result::Result<(usize, usize), String> {
            let (a, b) = at.split_once('-').ok_or_else(|| format!("expected start-end, got `{at}`"))?;
            let a = a.trim().parse().map_err(|_| format!("bad frame `{a}`"))?;
            let b = b.trim().parse().map_err(|_| format!("bad frame `{b}`"))?;
            if b < a {
                return Err(format!("interval `{at}` ends before it starts"));
            }
            Ok((a, b))
        };
        let frame = |at: &str| at.trim().parse::<usize>().map_err(|_| format!("bad frame `{at}`"));
        match kind.trim() {
            "occlusion" => range(at).map(|(start, end)| SimEvent::Occlusion { start, end }),
            "out_of_view" => range(at).map(|(start, end)| SimEvent::OutOfView { start, end }),
            "teleport" => frame(at).map(|frame| SimEvent::Teleport { frame }),
            "appearance_jump" => frame(at).map(|frame| SimEvent::AppearanceJump { frame }),
            other => Err(format!("unknown event kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub length: usize,
    pub frame_width: f64,
    pub frame_height: f64,
    /// Embedding dimension.
    pub dim: usize,
    /// Object box sides are drawn uniformly from `[box_min, box_max]`.
    pub box_min: f64,
    pub box_max: f64,
    /// Per-frame speed limit, pixels.
    pub max_speed: f64,
    /// Standard deviation of per-frame velocity changes, pixels.
    pub acceleration: f64,
    /// Angular appearance step per frame, radians.
    pub appearance_drift: f64,
    /// Radius of the target's appearance cap, degrees.
    pub target_spread_deg: f64,
    /// Embedding noise magnitude (expected norm of the noise vector).
    pub noise: f64,
    pub distractors: usize,
    /// Minimum angle between any distractor appearance and the target's.
    pub distractor_separation_deg: f64,
    /// Radius of each distractor's appearance cap, degrees.
    pub distractor_spread_deg: f64,
    /// Angle between the clutter direction and each distractor cap center, degrees.
    pub clutter_spread_deg: f64,
    pub occlusions: usize,
    pub out_of_views: usize,
    pub teleports: usize,
    pub appearance_jumps: usize,
    pub event_min_len: usize,
    pub event_max_len: usize,
    /// Minimum appearance change of an appearance jump, degrees.
    pub appearance_jump_deg: f64,
    /// Explicit event list; replaces the random schedule when set.
    pub schedule: Option<Vec<SimEvent>>,
    pub tracker: MockTrackerParams,
    pub detector: MockDetectorParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            length: 600,
            frame_width: 640.0,
            frame_height: 480.0,
            dim: 64,
            box_min: 30.0,
            box_max: 60.0,
            max_speed: 3.0,
            acceleration: 0.5,
            appearance_drift: 0.01,
            target_spread_deg: 20.0,
            noise: 0.05,
            distractors: 2,
            distractor_separation_deg: 60.0,
            distractor_spread_deg: 10.0,
            clutter_spread_deg: 15.0,
            occlusions: 1,
            out_of_views: 1,
            teleports: 1,
            appearance_jumps: 1,
            event_min_len: 10,
            event_max_len: 30,
            appearance_jump_deg: 15.0,
            schedule: None,
            tracker: MockTrackerParams::default(),
            detector: MockDetectorParams::default(),
        }
    }
}

impl SimConfig {
    /// Angle between the target cap center and the clutter direction.
    fn clutter_angle_deg(&self) -> f64 {
        self.distractor_separation_deg
            + self.target_spread_deg
            + self.distractor_spread_deg
            + self.clutter_spread_deg
    }

    /// Distance the tracker cannot see past: half the diagonal of the search
    /// region around a box of side `box_max`.
    pub fn search_radius(&self) -> f64 {
        self.tracker.search_area_factor.sqrt() * self.box_max * std::f64::consts::SQRT_2 / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        let key_err = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.length == 0 {
            return key_err("sim.length", "must be at least 1".into());
        }
        if !(self.frame_width > 0.0 && self.frame_height > 0.0) {
            return key_err("sim.frame_width", "frame size must be positive".into());
        }
        if !(self.box_min > 0.0 && self.box_min <= self.box_max) {
            return key_err("sim.box_min", "need 0 < box_min <= box_max".into());
        }
        if self.box_max * 2.0 > self.frame_width.min(self.frame_height) {
            return key_err("sim.box_max", "boxes must be at most half the frame".into());
        }
        if self.dim < 3 + self.distractors {
            return key_err("sim.dim", format!("need at least {} dimensions", 3 + self.distractors));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return key_err("sim.noise", "must be non-negative".into());
        }
        if !(self.appearance_drift >= 0.0 && self.max_speed >= 0.0 && self.acceleration >= 0.0) {
            return key_err("sim.appearance_drift", "drift, speed and acceleration must be non-negative".into());
        }
        if !(0.0..=180.0).contains(&self.distractor_separation_deg) {
            return key_err("sim.distractor_separation_deg", "must lie in [0, 180]".into());
        }
        for (key, v) in [
            ("sim.target_spread_deg", self.target_spread_deg),
            ("sim.distractor_spread_deg", self.distractor_spread_deg),
            ("sim.clutter_spread_deg", self.clutter_spread_deg),
        ] {
            if !(0.0..90.0).contains(&v) {
                return key_err(key, "must lie in [0, 90)".into());
            }
        }
        if self.clutter_angle_deg() > 180.0 {
            return key_err(
                "sim.distractor_separation_deg",
                format!(
                    "separation plus appearance spreads is {:.1} degrees, more than 180",
                    self.clutter_angle_deg()
                ),
            );
        }
        if self.appearance_jump_deg > 2.0 * self.target_spread_deg {
            return key_err("sim.appearance_jump_deg", "cannot exceed the target cap diameter".into());
        }
        if self.event_min_len == 0 || self.event_min_len > self.event_max_len {
            return key_err("sim.event_min_len", "need 1 <= event_min_len <= event_max_len".into());
        }
        if self.search_radius() * CLEARANCE * 2.0 > self.frame_width.hypot(self.frame_height) * 0.8 {
            return key_err("tracker.search_area_factor", "search region too large for the frame".into());
        }
        self.tracker.validate()?;
        self.detector.validate()?;
        if let Some(schedule) = &self.schedule {
            for e in schedule {
                if e.first_frame() == 0 || e.last_frame() >= self.length {
                    return key_err("sim.schedule", format!("event `{e}` must lie within frames 1..{}", self.length));
                }
            }
        }
        Ok(())
    }
}

/// Per-frame handle passed to the engines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimFrame {
    pub index: usize,
    pub width: f64,
    pub height: f64,
}

impl FrameGeometry for SimFrame {
    fn frame_size(&self) -> (f64, f64) {
        (self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistractorTrack {
    pub boxes: Vec<BoundingBox>,
    pub latent: Vec<FeatureVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub seed: u64,
    pub frame_width: f64,
    pub frame_height: f64,
    /// Target box per frame; `None` while occluded or out of view.
    pub gt: Vec<Option<BoundingBox>>,
    /// Target appearance per frame, unit length.
    pub latent: Vec<FeatureVector>,
    pub distractors: Vec<DistractorTrack>,
    /// Appearance of anything that is not an object.
    pub background: FeatureVector,
    pub events: Vec<SimEvent>,
    pub noise: f64,
}

impl SyntheticSequence {
    pub fn len(&self) -> usize {
        self.gt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gt.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.background.dim()
    }

    pub fn present(&self, t: usize) -> bool {
        self.gt[t].is_some()
    }

    pub fn frame(&self, index: usize) -> SimFrame {
        SimFrame {
            index,
            width: self.frame_width,
            height: self.frame_height,
        }
    }

    pub fn frames(&self) -> Vec<SimFrame> {
        (0..self.len()).map(|i| self.frame(i)).collect()
    }

    pub fn initial_box(&self) -> Result<BoundingBox> {
        self.gt
            .first()
            .copied()
            .flatten()
            .ok_or_else(|| Error::invalid("target absent on the first frame"))
    }

    /// `(loss frame, reappearance frame)` of every event that takes the target
    /// away from the tracker: absences that end inside the sequence, and
    /// teleports (which reappear on the frame they happen).
    pub fn loss_events(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .events
            .iter()
            .filter_map(|e| match *e {
                SimEvent::Occlusion { start, end } | SimEvent::OutOfView { start, end } => Some((start, end + 1)),
                SimEvent::Teleport { frame } => Some((frame, frame)),
                SimEvent::AppearanceJump { .. } => None,
            })
            .filter(|&(_, r)| r < self.len() && self.present(r))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

// Unit-sphere helpers over plain vectors.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0).acos()
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random unit vector orthogonal to `base` (assumed unit).
fn tangent(rng: &mut ChaCha8Rng, base: &[f64]) -> Vec<f64> {
    loop {
        let g = gaussian(rng, base.len());
        let p = dot(&g, base);
        let t: Vec<f64> = g.iter().zip(base).map(|(gi, bi)| gi - p * bi).collect();
        if dot(&t, &t) > 1e-12 {
            return unit(t);
        }
    }
}

/// Point at angle `theta` from unit `base` along unit tangent `dir`.
fn rotate(base: &[f64], dir: &[f64], theta: f64) -> Vec<f64> {
    let (s, c) = theta.sin_cos();
    unit(base.iter().zip(dir).map(|(b, d)| c * b + s * d).collect())
}

/// Pulls `v` back onto the cap of radius `radius` around `center` if it left it.
fn clamp_to_cap(v: Vec<f64>, center: &[f64], radius: f64) -> Vec<f64> {
    if angle(&v, center) <= radius {
        return v;
    }
    let p = dot(&v, center);
    let t: Vec<f64> = v.iter().zip(center).map(|(vi, ci)| vi - p * ci).collect();
    if dot(&t, &t) <= 1e-24 {
        return center.to_vec();
    }
    rotate(center, &unit(t), radius)
}

/// Gram-Schmidt on Gaussian draws.
fn orthonormal_set(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        for b in &basis {
            let p = dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= p * bi;
            }
        }
        if dot(&v, &v) > 1e-9 {
            basis.push(unit(v));
        }
    }
    basis
}

struct Walker {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    w: f64,
    h: f64,
}

impl Walker {
    fn spawn(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> Self {
        let w = rng.gen_range(cfg.box_min..=cfg.box_max);
        let h = rng.gen_range(cfg.box_min..=cfg.box_max);
        Walker {
            cx: rng.gen_range(w / 2.0..=cfg.frame_width - w / 2.0),
            cy: rng.gen_range(h / 2.0..=cfg.frame_height - h / 2.0),
            vx: 0.0,
            vy: 0.0,
            w,
            h,
        }
    }

    fn advance(&mut self, rng: &mut ChaCha8Rng, cfg: &SimConfig) {
        let ax: f64 = StandardNormal.sample(rng);
        let ay: f64 = StandardNormal.sample(rng);
        self.vx += ax * cfg.acceleration;
        self.vy += ay * cfg.acceleration;
        let speed = self.vx.hypot(self.vy);
        if speed > cfg.max_speed {
            let k = if speed > 0.0 { cfg.max_speed / speed } else { 0.0 };
            self.vx *= k;
            self.vy *= k;
        }
        self.cx += self.vx;
        self.cy += self.vy;
        let (lo_x, hi_x) = (self.w / 2.0, cfg.frame_width - self.w / 2.0);
        let (lo_y, hi_y) = (self.h / 2.0, cfg.frame_height - self.h / 2.0);
        if self.cx < lo_x || self.cx > hi_x {
            self.cx = self.cx.clamp(lo_x, hi_x);
            self.vx = -self.vx;
        }
        if self.cy < lo_y || self.cy > hi_y {
            self.cy = self.cy.clamp(lo_y, hi_y);
            self.vy = -self.vy;
        }
    }

    fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.cx - self.w / 2.0,
            y: self.cy - self.h / 2.0,
            w: self.w,
            h: self.h,
        }
    }

    /// Moves to a random in-frame position at least `min_dist` from
    /// `(from_x, from_y)`. With `at_border`, the box touches a frame edge.
    fn relocate(&mut self, rng: &mut ChaCha8Rng, cfg: &SimConfig, from: (f64, f64), min_dist: f64, at_border: bool) {
        let (lo_x, hi_x) = (self.w / 2.0, cfg.frame_width - self.w / 2.0);
        let (lo_y, hi_y) = (self.h / 2.0, cfg.frame_height - self.h / 2.0);
        let mut best = (f64::NEG_INFINITY, self.cx, self.cy);
        for _ in 0..256 {
            let (mut x, mut y) = (rng.gen_range(lo_x..=hi_x), rng.gen_range(lo_y..=hi_y));
            if at_border {
                match rng.gen_range(0..4) {
                    0 => x = lo_x,
                    1 => x = hi_x,
                    2 => y = lo_y,
                    _ => y = hi_y,
                }
            }
            let d = (x - from.0).hypot(y - from.1);
            if d > min_dist {
                best = (d, x, y);
                break;
            }
            if d > best.0 {
                best = (d, x, y);
            }
        }
        self.cx = best.1;
        self.cy = best.2;
        self.vx = 0.0;
        self.vy = 0.0;
    }
}

struct Appearance {
    center: Vec<f64>,
    radius: f64,
    current: Vec<f64>,
}

impl Appearance {
    fn drift(&mut self, rng: &mut ChaCha8Rng, step: f64) {
        if step <= 0.0 {
            return;
        }
        let dir = tangent(rng, &self.current);
        let moved = rotate(&self.current, &dir, step);
        self.current = clamp_to_cap(moved, &self.center, self.radius);
    }

    fn jump(&mut self, rng: &mut ChaCha8Rng, min_angle: f64) {
        for _ in 0..1000 {
            let dir = tangent(rng, &self.center);
            let candidate = rotate(&self.center, &dir, rng.gen_range(0.0..=self.radius));
            if angle(&candidate, &self.current) >= min_angle {
                self.current = candidate;
                return;
            }
        }
        // Opposite edge of the cap.
        let p = dot(&self.current, &self.center);
        let t: Vec<f64> = self.current.iter().zip(&self.center).map(|(c, m)| p * m - c).collect();
        let dir = if dot(&t, &t) > 1e-24 { unit(t) } else { tangent(rng, &self.center) };
        self.current = rotate(&self.center, &dir, self.radius);
    }

    fn feature(&self) -> FeatureVector {
        FeatureVector::new(self.current.clone()).expect("unit vectors are valid features")
    }
}

fn random_schedule(rng: &mut ChaCha8Rng, cfg: &SimConfig) -> Result<Vec<SimEvent>> {
    #[derive(Clone, Copy)]
    enum Kind {
        Occlusion,
        OutOfView,
        Teleport,
        Jump,
    }
    let mut kinds = Vec::new();
    kinds.extend(std::iter::repeat_n(Kind::Occlusion, cfg.occlusions));
    kinds.extend(std::iter::repeat_n(Kind::OutOfView, cfg.out_of_views));
    kinds.extend(std::iter::repeat_n(Kind::Teleport, cfg.teleports));
    kinds.extend(std::iter::repeat_n(Kind::Jump, cfg.appearance_jumps));
    if kinds.is_empty() {
        return Ok(Vec::new());
    }
    use rand::seq::SliceRandom;
    kinds.shuffle(rng);

    let gap = 10;
    let usable = cfg.length.saturating_sub(2 * WARMUP_FRAMES);
    let slot = usable / kinds.len();
    if slot < cfg.event_max_len + gap {
        return Err(Error::config(
            "sim.length",
            format!(
                "{} frames cannot hold {} events of up to {} frames",
                cfg.length,
                kinds.len(),
                cfg.event_max_len
            ),
        ));
    }
    let mut events = Vec::with_capacity(kinds.len());
    for (i, kind) in kinds.into_iter().enumerate() {
        let slot_start = WARMUP_FRAMES + i * slot;
        let len = match kind {
            Kind::Occlusion | Kind::OutOfView => rng.gen_range(cfg.event_min_len..=cfg.event_max_len),
            _ => 1,
        };
        let start = slot_start + rng.gen_range(0..=slot - len - gap);
        let end = start + len - 1;
        events.push(match kind {
            Kind::Occlusion => SimEvent::Occlusion { start, end },
            Kind::OutOfView => SimEvent::OutOfView { start, end },
            Kind::Teleport => SimEvent::Teleport { frame: start },
            Kind::Jump => SimEvent::AppearanceJump { frame: start },
        });
    }
    Ok(events)
}

/// Generates a sequence from `cfg`. Identical configs give identical sequences.
pub fn generate_sequence(cfg: &SimConfig) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let deg = std::f64::consts::PI / 180.0;

    // Appearance layout.
    let axes = orthonormal_set(&mut rng, cfg.dim, 2 + cfg.distractors);
    let target_center = axes[0].clone();
    let clutter = rotate(&axes[0], &axes[1], cfg.clutter_angle_deg() * deg);
    let target_radius = cfg.target_spread_deg * deg;
    let start_dir = tangent(&mut rng, &target_center);
    let start = rotate(&target_center, &start_dir, rng.gen_range(0.0..=target_radius / 2.0));
    let mut target_look = Appearance {
        center: target_center,
        radius: target_radius,
        current: start,
    };
    let mut distractor_looks: Vec<Appearance> = (0..cfg.distractors)
        .map(|i| {
            // Rotate the clutter direction towards a fresh orthogonal axis.
            let p = dot(&axes[2 + i], &clutter);
            let dir = unit(axes[2 + i].iter().zip(&clutter).map(|(a, c)| a - p * c).collect());
            let center = rotate(&clutter, &dir, cfg.clutter_spread_deg * deg);
            Appearance {
                current: center.clone(),
                center,
                radius: cfg.distractor_spread_deg * deg,
            }
        })
        .collect();
    let background = FeatureVector::new(clutter).expect("unit vector");

    let events = match &cfg.schedule {
        Some(s) => s.clone(),
        None => random_schedule(&mut rng, cfg)?,
    };

    let mut absent = vec![false; cfg.length];
    let mut reappear_at_border = vec![None; cfg.length + 1];
    let mut teleport = vec![false; cfg.length];
    let mut jump = vec![false; cfg.length];
    for e in &events {
        match *e {
            SimEvent::Occlusion { start, end } | SimEvent::OutOfView { start, end } => {
                absent[start..=end].iter_mut().for_each(|a| *a = true);
                reappear_at_border[end + 1] = Some(matches!(e, SimEvent::OutOfView { .. }));
            }
            SimEvent::Teleport { frame } => teleport[frame] = true,
            SimEvent::AppearanceJump { frame } => jump[frame] = true,
        }
    }

    let mut target = Walker::spawn(&mut rng, cfg);
    let mut others: Vec<Walker> = (0..cfg.distractors).map(|_| Walker::spawn(&mut rng, cfg)).collect();
    let clearance = cfg.search_radius() * CLEARANCE;

    let mut gt = Vec::with_capacity(cfg.length);
    let mut latent = Vec::with_capacity(cfg.length);
    let mut distractors: Vec<DistractorTrack> = (0..cfg.distractors)
        .map(|_| DistractorTrack {
            boxes: Vec::with_capacity(cfg.length),
            latent: Vec::with_capacity(cfg.length),
        })
        .collect();
    let mut last_visible = (target.cx, target.cy);

    for t in 0..cfg.length {
        if t > 0 {
            let before = (target.cx, target.cy);
            target.advance(&mut rng, cfg);
            if teleport[t] {
                target.relocate(&mut rng, cfg, before, clearance, false);
            }
            if let Some(at_border) = reappear_at_border[t] {
                target.relocate(&mut rng, cfg, last_visible, clearance, at_border);
            }
            if jump[t] {
                target_look.jump(&mut rng, cfg.appearance_jump_deg * deg);
            } else {
                target_look.drift(&mut rng, cfg.appearance_drift);
            }
            for (walker, look) in others.iter_mut().zip(distractor_looks.iter_mut()) {
                walker.advance(&mut rng, cfg);
                look.drift(&mut rng, cfg.appearance_drift);
            }
        }
        if absent[t] {
            gt.push(None);
        } else {
            gt.push(Some(target.bbox()));
            last_visible = (target.cx, target.cy);
        }
        latent.push(target_look.feature());
        for ((track, walker), look) in distractors.iter_mut().zip(&others).zip(&distractor_looks) {
            track.boxes.push(walker.bbox());
            track.latent.push(look.feature());
        }
    }

    Ok(SyntheticSequence {
        seed: cfg.seed,
        frame_width: cfg.frame_width,
        frame_height: cfg.frame_height,
        gt,
        latent,
        distractors,
        background,
        events,
        noise: cfg.noise,
    })
}

/// Seed of sequence `index` in a batch built from `base_seed`.
pub fn batch_seed(base_seed: u64, index: usize) -> u64 {
    mix_seed(base_seed, index as u64)
}

/// Generates `count` sequences whose seeds derive from `cfg.seed`.
pub fn generate_batch(cfg: &SimConfig, count: usize) -> Result<Vec<SyntheticSequence>> {
    (0..count)
        .map(|i| {
            let c = SimConfig {
                seed: batch_seed(cfg.seed, i),
                ..cfg.clone()
            };
            generate_sequence(&c)
        })
        .collect()
}

pub type SimPorts = Ports<MockTracker, MockDetector, MockEmbedder>;

/// Mock engines wired to one sequence.
pub fn sim_ports(seq: &Arc<SyntheticSequence>, cfg: &SimConfig) -> SimPorts {
    Ports {
        tracker: MockTracker::new(seq.clone(), cfg.tracker, mix_seed(seq.seed, 1)),
        detector: MockDetector::new(seq.clone(), cfg.detector, mix_seed(seq.seed, 2)),
        embedder: MockEmbedder::new(seq.clone(), mix_seed(seq.seed, 3)),
    }
}

/// Runs the full controller on a sequence with the mock engines.
pub fn run_controller(
    seq: &Arc<SyntheticSequence>,
    cfg: &SimConfig,
    controller: &ControllerConfig,
) -> Result<SequenceRun<MockTracker, MockDetector, MockEmbedder>> {
    run_sequence(sim_ports(seq, cfg), &seq.frames(), seq.initial_box()?, controller.clone())
}

/// Runs the mock tracker alone on a sequence.
pub fn run_tracker_baseline(seq: &Arc<SyntheticSequence>, cfg: &SimConfig) -> Result<Vec<FrameResult>> {
    let tracker = MockTracker::new(seq.clone(), cfg.tracker, mix_seed(seq.seed, 1));
    run_tracker_only(tracker, &seq.frames(), seq.initial_box()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> SimConfig {
        SimConfig {
            occlusions: 0,
            out_of_views: 0,
            teleports: 0,
            appearance_jumps: 0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn degenerate_config_is_constant() {
        let cfg = SimConfig {
            appearance_drift: 0.0,
            max_speed: 0.0,
            length: 50,
            ..quiet()
        };
        let seq = generate_sequence(&cfg).unwrap();
        assert!(seq.gt.iter().all(|b| *b == seq.gt[0] && b.is_some()));
        assert!(seq.latent.iter().all(|l| *l == seq.latent[0]));
        assert!(seq.events.is_empty());
    }

    #[test]
    fn same_seed_same_sequence() {
        let a = generate_sequence(&SimConfig::default()).unwrap();
        let b = generate_sequence(&SimConfig::default()).unwrap();
        assert_eq!(a, b);
        let c = generate_sequence(&SimConfig { seed: 8, ..SimConfig::default() }).unwrap();
        assert_ne!(a.gt, c.gt);
    }

    #[test]
    fn scheduled_occlusion_controls_presence() {
        let cfg = SimConfig {
            schedule: Some(vec![SimEvent::Occlusion { start: 40, end: 55 }]),
            length: 120,
            ..SimConfig::default()
        };
        let seq = generate_sequence(&cfg).unwrap();
        for t in 0..seq.len() {
            assert_eq!(!seq.present(t), (40..=55).contains(&t), "frame {t}");
        }
    }

    #[test]
    fn default_schedule_has_every_event_kind() {
        for seed in 0..20 {
            let seq = generate_sequence(&SimConfig { seed, ..SimConfig::default() }).unwrap();
            let mut kinds = [0usize; 4];
            for e in &seq.events {
                kinds[match e {
                    SimEvent::Occlusion { .. } => 0,
                    SimEvent::OutOfView { .. } => 1,
                    SimEvent::Teleport { .. } => 2,
                    SimEvent::AppearanceJump { .. } => 3,
                }] += 1;
            }
            assert_eq!(kinds, [1, 1, 1, 1]);
            assert!(seq.present(0));
        }
    }

    #[test]
    fn sequence_invariants_hold() {
        let deg = std::f64::consts::PI / 180.0;
        for seed in 0..10 {
            let cfg = SimConfig { seed, ..SimConfig::default() };
            let seq = generate_sequence(&cfg).unwrap();
            let jumps: Vec<usize> = seq
                .events
                .iter()
                .filter_map(|e| match e {
                    SimEvent::AppearanceJump { frame } => Some(*frame),
                    _ => None,
                })
                .collect();
            for t in 0..seq.len() {
                assert!((seq.latent[t].norm() - 1.0).abs() < 1e-12);
                if t > 0 && !jumps.contains(&t) {
                    let a = angle(seq.latent[t].as_slice(), seq.latent[t - 1].as_slice());
                    assert!(a <= cfg.appearance_drift + 1e-9, "step {a} at {t}");
                }
                for d in &seq.distractors {
                    let a = angle(seq.latent[t].as_slice(), d.latent[t].as_slice());
                    assert!(a >= cfg.distractor_separation_deg * deg - 1e-9);
                }
                if let Some(b) = seq.gt[t] {
                    // Edge-clamped boxes may overshoot by a rounding error.
                    assert!(b.x >= 0.0 && b.y >= 0.0);
                    assert!(b.right() <= cfg.frame_width + 1e-9 && b.bottom() <= cfg.frame_height + 1e-9);
                }
            }
            for e in &seq.events {
                if let SimEvent::Teleport { frame } = *e {
                    let jump = seq.gt[frame].unwrap().center_distance(&seq.gt[frame - 1].unwrap());
                    assert!(jump > cfg.search_radius());
                }
            }
        }
    }

    #[test]
    fn unsatisfiable_separation_is_a_config_error() {
        let cfg = SimConfig {
            distractor_separation_deg: 170.0,
            ..SimConfig::default()
        };
        assert!(matches!(generate_sequence(&cfg), Err(Error::Config { .. })));
        let cfg = SimConfig {
            distractor_separation_deg: 190.0,
            ..SimConfig::default()
        };
        assert!(matches!(generate_sequence(&cfg), Err(Error::Config { .. })));
    }

    #[test]
    fn event_parsing() {
        for text in ["occlusion:10-20", "out_of_view:5-5", "teleport:7", "appearance_jump:99"] {
            let e: SimEvent = text.parse().unwrap();
            assert_eq!(e.to_string(), text);
        }
        assert!("occlusion:20-10".parse::<SimEvent>().is_err());
        assert!("melt:3".parse::<SimEvent>().is_err());
    }
}
