//! Brute-force reference implementations of the tree rules.
//!
//! Nothing here calls into [`crate::pn_tree`] logic: trees are copied into
//! plain vectors, walk orders are enumerated explicitly, and the update rule is
//! replayed on an unordered node list keyed by recency stamps. The fuzz driver
//! [`check_classifiers`] compares the engine with these references.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::FeatureVector;
use crate::pn_tree::{PnTree, PositivePathMode, TargetLabel};

fn similarity(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
    }
    for v in a {
        na += v * v;
    }
    for v in b {
        nb += v * v;
    }
    (dot / (na * nb).sqrt()).clamp(-1.0, 1.0)
}

/// A tree flattened into plain vectors, branches listed shallowest first.
#[derive(Debug, Clone)]
pub struct PlainTree {
    pub root: Vec<f64>,
    pub positive: Vec<Vec<f64>>,
    pub negative: Vec<Vec<f64>>,
}

impl From<&PnTree> for PlainTree {
    fn from(tree: &PnTree) -> Self {
        PlainTree {
            root: tree.root().feature().as_slice().to_vec(),
            positive: tree
                .positive_branch()
                .iter()
                .map(|n| n.feature().as_slice().to_vec())
                .collect(),
            negative: tree
                .negative_branch()
                .iter()
                .map(|n| n.feature().as_slice().to_vec())
                .collect(),
        }
    }
}

impl PlainTree {
    fn positive_walk(&self) -> Vec<(TargetLabel, &[f64])> {
        let mut walk = Vec::new();
        let mut i = self.positive.len();
        while i > 0 {
            i -= 1;
            walk.push((TargetLabel::Positive, self.positive[i].as_slice()));
        }
        for n in &self.negative {
            walk.push((TargetLabel::Negative, n.as_slice()));
        }
        walk
    }

    /// Positive-path rule: nodes other than the root that beat the root's
    /// similarity decide; none means positive.
    pub fn positive_path(&self, x: &[f64], mode: PositivePathMode) -> TargetLabel {
        let reference = similarity(x, &self.root);
        let beating: Vec<(TargetLabel, f64)> = self
            .positive_walk()
            .into_iter()
            .map(|(label, f)| (label, similarity(x, f)))
            .filter(|&(_, s)| s > reference)
            .collect();
        match mode {
            PositivePathMode::FirstHit => beating.first().map_or(TargetLabel::Positive, |&(l, _)| l),
            PositivePathMode::FullScan => {
                let top = beating.iter().map(|&(_, s)| s).fold(f64::NEG_INFINITY, f64::max);
                beating
                    .iter()
                    .find(|&&(_, s)| s == top)
                    .map_or(TargetLabel::Positive, |&(l, _)| l)
            }
        }
    }

    /// Negative-path rule: argmax over negative nodes (deepest first), the
    /// root, then positive nodes (shallowest first); first maximum wins.
    pub fn negative_path(&self, x: &[f64]) -> TargetLabel {
        let mut walk: Vec<(TargetLabel, &[f64])> = self
            .negative
            .iter()
            .rev()
            .map(|f| (TargetLabel::Negative, f.as_slice()))
            .collect();
        walk.push((TargetLabel::Positive, &self.root));
        walk.extend(self.positive.iter().map(|f| (TargetLabel::Positive, f.as_slice())));
        let sims: Vec<f64> = walk.iter().map(|(_, f)| similarity(x, f)).collect();
        let top = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let idx = sims.iter().position(|&s| s == top).expect("nonempty walk");
        walk[idx].0
    }
}

/// A node of the replay reference, keeping every contributing sample.
#[derive(Debug, Clone)]
pub struct ReplayNode {
    pub stamp: u64,
    pub feature: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl ReplayNode {
    pub fn sample_mean(&self) -> Vec<f64> {
        let k = self.samples.len() as f64;
        let mut mean = vec![0.0; self.feature.len()];
        for s in &self.samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        mean.iter().map(|m| m / k).collect()
    }
}

/// Replays the update rules on unordered node lists keyed by stamp.
#[derive(Debug, Clone)]
pub struct ReplayTree {
    pub capacity: usize,
    pub positive: Vec<ReplayNode>,
    pub negative: Vec<ReplayNode>,
    clock: u64,
}

impl ReplayTree {
    pub fn new(template: &[f64], background: &[f64], capacity: usize) -> Self {
        let node = |stamp, f: &[f64]| ReplayNode {
            stamp,
            feature: f.to_vec(),
            samples: vec![f.to_vec()],
        };
        ReplayTree {
            capacity,
            positive: vec![node(1, template)],
            negative: vec![node(2, background)],
            clock: 3,
        }
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock - 1
    }

    pub fn update_positive(&mut self, x: &[f64], tau_new: f64) {
        let stamp = self.tick();
        // Best match; ties go to the most recently stamped node.
        let mut best: Option<(usize, f64, u64)> = None;
        for (i, node) in self.positive.iter().enumerate() {
            let s = similarity(x, &node.feature);
            let better = match best {
                None => true,
                Some((_, bs, bstamp)) => s > bs || (s == bs && node.stamp > bstamp),
            };
            if better {
                best = Some((i, s, node.stamp));
            }
        }
        match best {
            Some((i, s, _)) if s >= tau_new => {
                let node = &mut self.positive[i];
                let n = node.samples.len() as f64;
                node.feature = node
                    .feature
                    .iter()
                    .zip(x)
                    .map(|(old, xi)| (xi + old * n) / (n + 1.0))
                    .collect();
                node.samples.push(x.to_vec());
                node.stamp = stamp;
            }
            _ => self.positive.push(ReplayNode {
                stamp,
                feature: x.to_vec(),
                samples: vec![x.to_vec()],
            }),
        }
        Self::evict(&mut self.positive, self.capacity);
    }

    pub fn append_negative(&mut self, x: &[f64]) {
        let stamp = self.tick();
        self.negative.push(ReplayNode {
            stamp,
            feature: x.to_vec(),
            samples: vec![x.to_vec()],
        });
        Self::evict(&mut self.negative, self.capacity);
    }

    fn evict(nodes: &mut Vec<ReplayNode>, capacity: usize) {
        while nodes.len() > capacity {
            let oldest = nodes
                .iter()
                .enumerate()
                .min_by_key(|(_, n)| n.stamp)
                .map(|(i, _)| i)
                .unwrap();
            nodes.remove(oldest);
        }
    }

    /// Nodes of a branch sorted by stamp, i.e. shallowest first.
    pub fn ordered(nodes: &[ReplayNode]) -> Vec<&ReplayNode> {
        let mut v: Vec<&ReplayNode> = nodes.iter().collect();
        v.sort_by_key(|n| n.stamp);
        v
    }
}

/// One randomized classifier case: a tree and a test feature.
#[derive(Debug, Clone)]
pub struct ClassifierCase {
    pub tree: PnTree,
    pub x: FeatureVector,
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: &[f64], scale: f64) -> Vec<f64> {
    base.iter().map(|v| v + rng.gen_range(-scale..scale)).collect()
}

/// Builds a random tree by replaying random updates drawn around a few
/// cluster centers, then picks a test feature that is often an exact copy of a
/// node (to exercise tie handling).
pub fn random_case(rng: &mut ChaCha8Rng) -> ClassifierCase {
    let dim = rng.gen_range(2..=12);
    let capacity = rng.gen_range(1..=10);
    let centers: Vec<Vec<f64>> = (0..rng.gen_range(2..=5)).map(|_| unit(rng, dim)).collect();
    let spread: f64 = [0.0, 0.05, 0.3, 1.0][rng.gen_range(0..4)];
    let draw = |rng: &mut ChaCha8Rng| {
        let c = centers.choose(rng).unwrap();
        loop {
            let v = jitter(rng, c, spread.max(1e-9));
            if v.iter().any(|x| *x != 0.0) {
                return FeatureVector::new(v).unwrap();
            }
        }
    };
    let template = draw(rng);
    let background = draw(rng);
    let mut tree = PnTree::new(template, background, capacity).unwrap();
    let tau = rng.gen_range(0.3..0.99);
    for _ in 0..rng.gen_range(0..40) {
        let x = draw(rng);
        if rng.gen_bool(0.6) {
            tree.update_positive(&x, tau).unwrap();
        } else {
            tree.append_negative(&x).unwrap();
        }
    }
    let x = match rng.gen_range(0..5) {
        0 => tree.root().feature().clone(),
        1 | 2 => {
            let nodes = tree.path_order(crate::pn_tree::PathDirection::Positive);
            let node = nodes.choose(rng).unwrap();
            let scale = [1.0, 2.0, 0.5][rng.gen_range(0..3)];
            node.feature().scaled(scale).unwrap()
        }
        _ => draw(rng),
    };
    ClassifierCase { tree, x }
}

/// Agreement counts from [`check_classifiers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgreementReport {
    pub cases: usize,
    pub positive_path_first_hit: usize,
    pub positive_path_full_scan: usize,
    pub negative_path: usize,
}

impl AgreementReport {
    pub fn all_agree(&self) -> bool {
        self.positive_path_first_hit == self.cases
            && self.positive_path_full_scan == self.cases
            && self.negative_path == self.cases
    }
}

/// Runs `cases` seeded random cases through the engine classifiers and the
/// references above.
pub fn check_classifiers(cases: usize, seed: u64) -> AgreementReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AgreementReport {
        cases,
        ..Default::default()
    };
    for _ in 0..cases {
        let case = random_case(&mut rng);
        let plain = PlainTree::from(&case.tree);
        let x = case.x.as_slice();
        for (mode, slot) in [
            (PositivePathMode::FirstHit, &mut report.positive_path_first_hit),
            (PositivePathMode::FullScan, &mut report.positive_path_full_scan),
        ] {
            let engine = case.tree.classify_positive_path_with(&case.x, mode).ok();
            if engine == Some(plain.positive_path(x, mode)) {
                *slot += 1;
            }
        }
        if case.tree.classify_negative_path(&case.x).ok() == Some(plain.negative_path(x)) {
            report.negative_path += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fuzz_agrees() {
        let report = check_classifiers(500, 11);
        assert!(report.all_agree(), "{report:?}");
    }

    #[test]
    fn replay_tracks_engine_on_short_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = unit(&mut rng, 6);
        let b = unit(&mut rng, 6);
        let mut tree = PnTree::new(FeatureVector::new(t.clone()).unwrap(), FeatureVector::new(b.clone()).unwrap(), 4).unwrap();
        let mut replay = ReplayTree::new(&t, &b, 4);
        for _ in 0..200 {
            let x = unit(&mut rng, 6);
            if rng.gen_bool(0.7) {
                tree.update_positive(&FeatureVector::new(x.clone()).unwrap(), 0.6).unwrap();
                replay.update_positive(&x, 0.6);
            } else {
                tree.append_negative(&FeatureVector::new(x.clone()).unwrap()).unwrap();
                replay.append_negative(&x);
            }
        }
        let engine: Vec<&[f64]> = tree.positive_branch().iter().map(|n| n.feature().as_slice()).collect();
        let reference: Vec<&[f64]> = ReplayTree::ordered(&replay.positive).iter().map(|n| n.feature.as_slice()).collect();
        assert_eq!(engine, reference);
    }
}
