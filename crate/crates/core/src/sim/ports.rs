//! Mock tracker, detector and embedder that read a [`SyntheticSequence`].
//!
//! All randomness is keyed on the engine seed and the frame (plus the queried
//! box where one exists), so a port gives the same answer to the same question
//! regardless of call history.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{mix_seed, SimFrame, SyntheticSequence};
use crate::controller::{Detector, Embedder, Tracker};
use crate::embedding::FeatureVector;
use crate::error::{Error, PortError, Result};
use crate::geometry::BoundingBox;
use crate::metrics::iou;

/// Minimum overlap for an embedded region to take an object's appearance.
pub const EMBED_OVERLAP: f64 = 0.25;

fn box_key(b: &BoundingBox) -> u64 {
    [b.x, b.y, b.w, b.h]
        .iter()
        .fold(0, |acc, v| mix_seed(acc, v.to_bits()))
}

fn frame_rng(seed: u64, frame: usize, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, frame as u64), salt))
}

/// Moves `b` the least amount needed to fit inside the frame.
fn keep_in_frame(b: BoundingBox, width: f64, height: f64) -> BoundingBox {
    BoundingBox {
        x: b.x.clamp(0.0, (width - b.w).max(0.0)),
        y: b.y.clamp(0.0, (height - b.h).max(0.0)),
        ..b
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockTrackerParams {
    /// Search region area as a multiple of the previous box area.
    pub search_area_factor: f64,
    /// Standard deviation of the reported center, pixels.
    pub drift_noise: f64,
    /// Follow a distractor inside the search region when the target is not there.
    pub lock_on_distractors: bool,
}

impl Default for MockTrackerParams {
    fn default() -> Self {
        Self {
            search_area_factor: 4.5,
            drift_noise: 0.5,
            lock_on_distractors: true,
        }
    }
}

impl MockTrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_area_factor >= 1.0 && self.search_area_factor.is_finite()) {
            return Err(Error::config("tracker.search_area_factor", "must be at least 1"));
        }
        if !(self.drift_noise >= 0.0 && self.drift_noise.is_finite()) {
            return Err(Error::config("tracker.drift_noise", "must be non-negative"));
        }
        Ok(())
    }
}

/// Local tracker: sees only a region around its previous box.
///
/// If the target's center is inside the region it reports the target. Failing
/// that it may latch onto the nearest distractor in the region, and otherwise
/// it keeps reporting (a jittered copy of) its previous box.
#[derive(Debug, Clone)]
pub struct MockTracker {
    seq: Arc<SyntheticSequence>,
    params: MockTrackerParams,
    seed: u64,
    prev: Option<BoundingBox>,
}

impl MockTracker {
    pub fn new(seq: Arc<SyntheticSequence>, params: MockTrackerParams, seed: u64) -> Self {
        Self {
            seq,
            params,
            seed,
            prev: None,
        }
    }

    pub fn previous_box(&self) -> Option<BoundingBox> {
        self.prev
    }

    fn check_frame(&self, frame: &SimFrame) -> std::result::Result<(), PortError> {
        if frame.index >= self.seq.len() {
            return Err(PortError::new(format!(
                "frame {} outside a sequence of {} frames",
                frame.index,
                self.seq.len()
            )));
        }
        Ok(())
    }
}

impl Tracker<SimFrame> for MockTracker {
    fn reinit(&mut self, frame: &SimFrame, target: &BoundingBox) -> std::result::Result<(), PortError> {
        self.check_frame(frame)?;
        target.validate().map_err(|e| PortError::new(e.to_string()))?;
        self.prev = Some(*target);
        Ok(())
    }

    fn track(&mut self, frame: &SimFrame) -> std::result::Result<BoundingBox, PortError> {
        self.check_frame(frame)?;
        let prev = self.prev.ok_or_else(|| PortError::new("tracker used before reinit"))?;
        let t = frame.index;
        let region = prev.scaled_about_center(self.params.search_area_factor.sqrt());
        let (pcx, pcy) = prev.center();

        let target = self.seq.gt[t].filter(|g| {
            let (cx, cy) = g.center();
            region.contains_point(cx, cy)
        });
        let found = target.or_else(|| {
            if !self.params.lock_on_distractors {
                return None;
            }
            self.seq
                .distractors
                .iter()
                .map(|d| d.boxes[t])
                .filter(|b| b.intersects(&region))
                .min_by(|a, b| {
                    let da = { let (x, y) = a.center(); (x - pcx).hypot(y - pcy) };
                    let db = { let (x, y) = b.center(); (x - pcx).hypot(y - pcy) };
                    da.total_cmp(&db)
                })
        });
        let base = found.unwrap_or(prev);

        let mut rng = frame_rng(self.seed, t, box_key(&prev));
        let (dx, dy) = if self.params.drift_noise > 0.0 {
            let n = Normal::new(0.0, self.params.drift_noise).expect("validated noise");
            (n.sample(&mut rng), n.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        let out = keep_in_frame(base.translated(dx, dy), frame.width, frame.height);
        self.prev = Some(out);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockDetectorParams {
    /// Probability that a visible target is among the candidates.
    pub recall: f64,
    pub max_candidates: usize,
    /// Report distractor objects as candidates too.
    pub include_distractors: bool,
}

impl Default for MockDetectorParams {
    fn default() -> Self {
        Self {
            recall: 0.9,
            max_candidates: 3,
            include_distractors: true,
        }
    }
}

impl MockDetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.recall) {
            return Err(Error::config("detector.recall", "must lie in [0, 1]"));
        }
        if self.max_candidates == 0 {
            return Err(Error::config("detector.max_candidates", "must be at least 1"));
        }
        Ok(())
    }
}

/// Global detector: returns the target with probability `recall` plus
/// distractors, best first. Confidences are random, so a distractor can
/// outrank the target.
#[derive(Debug, Clone)]
pub struct MockDetector {
    seq: Arc<SyntheticSequence>,
    params: MockDetectorParams,
    seed: u64,
}

impl MockDetector {
    pub fn new(seq: Arc<SyntheticSequence>, params: MockDetectorParams, seed: u64) -> Self {
        Self { seq, params, seed }
    }
}

impl Detector<SimFrame> for MockDetector {
    fn detect(&mut self, frame: &SimFrame) -> std::result::Result<Vec<BoundingBox>, PortError> {
        let t = frame.index;
        if t >= self.seq.len() {
            return Err(PortError::new(format!("frame {t} outside the sequence")));
        }
        let mut rng = frame_rng(self.seed, t, 0);
        let hit = rng.gen::<f64>() < self.params.recall;
        let mut scored: Vec<(f64, BoundingBox)> = Vec::new();
        if let Some(g) = self.seq.gt[t].filter(|_| hit) {
            scored.push((rng.gen_range(0.5..1.0), g));
        }
        if self.params.include_distractors {
            for d in &self.seq.distractors {
                scored.push((rng.gen_range(0.3..0.8), d.boxes[t]));
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored.truncate(self.params.max_candidates);
        let out: Vec<BoundingBox> = scored.into_iter().map(|(_, b)| b).collect();
        Ok(out)
    }
}

/// Embedder: the appearance of whichever object best overlaps the region,
/// or the background, plus isotropic noise, normalized.
///
/// Noise is drawn per component with variance `noise^2 / dim`, so its
/// expected norm is about `noise`.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    seq: Arc<SyntheticSequence>,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(seq: Arc<SyntheticSequence>, seed: u64) -> Self {
        Self { seq, seed }
    }

    /// Noise-free appearance of a region.
    pub fn latent(&self, t: usize, region: &BoundingBox) -> &FeatureVector {
        let seq = &*self.seq;
        let Some(clipped) = region.clipped(seq.frame_width, seq.frame_height) else {
            return &seq.background;
        };
        let mut best: Option<(f64, &FeatureVector)> = seq.gt[t].map(|g| (iou(&clipped, &g), &seq.latent[t]));
        for d in &seq.distractors {
            let o = iou(&clipped, &d.boxes[t]);
            if best.is_none_or(|(b, _)| o > b) {
                best = Some((o, &d.latent[t]));
            }
        }
        match best {
            Some((o, f)) if o >= EMBED_OVERLAP => f,
            _ => &seq.background,
        }
    }
}

impl Embedder<SimFrame> for MockEmbedder {
    fn embed(&mut self, frame: &SimFrame, region: &BoundingBox) -> std::result::Result<FeatureVector, PortError> {
        let t = frame.index;
        if t >= self.seq.len() {
            return Err(PortError::new(format!("frame {t} outside the sequence")));
        }
        region.validate().map_err(|e| PortError::new(e.to_string()))?;
        let base = self.latent(t, region);
        let sigma = self.seq.noise;
        if sigma == 0.0 {
            return Ok(base.clone());
        }
        let scale = sigma / (base.dim() as f64).sqrt();
        let mut rng = frame_rng(self.seed, t, box_key(region));
        let noisy: Vec<f64> = base
            .as_slice()
            .iter()
            .map(|v| {
                let z: f64 = StandardNormal.sample(&mut rng);
                v + scale * z
            })
            .collect();
        let n = noisy.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Ok(base.clone());
        }
        FeatureVector::new(noisy.into_iter().map(|v| v / n).collect()).map_err(|e| PortError::new(e.to_string()))
    }
}
