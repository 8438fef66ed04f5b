//! Positive/negative sample tree.
//!
//! The tree keeps a fixed root (the initial target template) and two chains of
//! aggregated sample nodes. Each chain is ordered by depth, and depth encodes
//! recency: the deepest node is the most recently added or refreshed one. A
//! chain never holds more than `capacity` nodes; the shallowest node is dropped
//! first.
//!
//! Classification walks the nodes in one of two orders and compares cosine
//! similarities against the test feature. See [`PnTree::classify_positive_path`]
//! and [`PnTree::classify_negative_path`].

mod snapshot;

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::embedding::{cosine, FeatureVector};
use crate::error::{Error, Result};

pub use snapshot::SNAPSHOT_HEADER;

/// Default number of nodes per branch.
pub const DEFAULT_CAPACITY: usize = 10;
/// Default similarity at or above which a positive sample is merged instead of appended.
pub const DEFAULT_TAU_NEW: f64 = 0.85;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeLabel {
    Root,
    Positive,
    Negative,
}

impl NodeLabel {
    /// The classification outcome a node votes for. The root stores the target
    /// template, so it votes positive.
    pub fn target_label(self) -> TargetLabel {
        match self {
            NodeLabel::Root | NodeLabel::Positive => TargetLabel::Positive,
            NodeLabel::Negative => TargetLabel::Negative,
        }
    }
}

/// Whether a test sample is judged to be the target (present) or not (absent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetLabel {
    Positive,
    Negative,
}

impl TargetLabel {
    pub fn is_positive(self) -> bool {
        matches!(self, TargetLabel::Positive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Positive,
    Negative,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Positive => "positive",
            Branch::Negative => "negative",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathDirection {
    /// Positive leaves (deepest first), root, negative nodes (shallowest first).
    Positive,
    /// Exact reverse of the positive path.
    Negative,
}

/// How the positive-path walk picks its stopping node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositivePathMode {
    /// Stop at the first node in walk order that is strictly more similar to
    /// the test sample than the root.
    FirstHit,
    /// Walk both branches completely; among the nodes strictly more similar
    /// than the root, the most similar one decides (first in walk order on ties).
    #[default]
    FullScan,
}

impl PositivePathMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PositivePathMode::FirstHit => "first_hit",
            PositivePathMode::FullScan => "full_scan",
        }
    }
}

impl FromStr for PositivePathMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "first_hit" => Ok(PositivePathMode::FirstHit),
            "full_scan" => Ok(PositivePathMode::FullScan),
            other => Err(format!("expected first_hit or full_scan, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnNode {
    feature: FeatureVector,
    count: u64,
    seq: u64,
    label: NodeLabel,
}

impl PnNode {
    fn new(feature: FeatureVector, label: NodeLabel, seq: u64) -> Self {
        Self {
            feature,
            count: 1,
            seq,
            label,
        }
    }

    /// Running mean of every sample merged into this node.
    pub fn feature(&self) -> &FeatureVector {
        &self.feature
    }

    /// Number of samples aggregated into the node (at least 1).
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Insertion/refresh stamp; larger means more recent.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn label(&self) -> NodeLabel {
        self.label
    }
}

/// Outcome of a single tree update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub branch: Branch,
    /// True when the sample was merged into an existing node.
    pub merged: bool,
    /// Depth index (0 = shallowest) of the updated node after pruning.
    pub target_index: usize,
    /// Sequence stamp of the updated node.
    pub seq: u64,
    /// Sample count of the updated node.
    pub count: u64,
    /// Sequence stamps of nodes dropped by pruning, oldest first.
    pub pruned: Vec<u64>,
}

/// Running-mean merge: `(x + old * n) / (n + 1)`, elementwise.
pub fn merge_features(old: &FeatureVector, x: &FeatureVector, n: u64) -> Result<FeatureVector> {
    old.check_same_dim(x)?;
    if n == 0 {
        return Err(Error::invalid("merge count must be at least 1"));
    }
    let n = n as f64;
    let merged = old
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(o, xi)| (xi + o * n) / (n + 1.0))
        .collect();
    FeatureVector::new(merged)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnTree {
    root: PnNode,
    positive: VecDeque<PnNode>,
    negative: VecDeque<PnNode>,
    capacity: usize,
    next_seq: u64,
}

impl PnTree {
    /// Builds a tree whose root and first positive node hold `template` and whose
    /// first negative node holds `background`.
    pub fn new(template: FeatureVector, background: FeatureVector, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("branch capacity must be at least 1"));
        }
        template.check_same_dim(&background)?;
        if template.is_zero() || background.is_zero() {
            return Err(Error::invalid("tree features must be nonzero"));
        }
        let root = PnNode::new(template.clone(), NodeLabel::Root, 0);
        let positive = VecDeque::from([PnNode::new(template, NodeLabel::Positive, 1)]);
        let negative = VecDeque::from([PnNode::new(background, NodeLabel::Negative, 2)]);
        Ok(Self {
            root,
            positive,
            negative,
            capacity,
            next_seq: 3,
        })
    }

    pub fn root(&self) -> &PnNode {
        &self.root
    }

    /// Positive nodes, shallowest first.
    pub fn positive_branch(&self) -> &VecDeque<PnNode> {
        &self.positive
    }

    /// Negative nodes, shallowest first.
    pub fn negative_branch(&self) -> &VecDeque<PnNode> {
        &self.negative
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.root.feature.dim()
    }

    /// Total node count including the root.
    pub fn len(&self) -> usize {
        1 + self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    fn check_sample(&self, x: &FeatureVector) -> Result<()> {
        self.root.feature.check_same_dim(x)?;
        if x.is_zero() {
            return Err(Error::invalid("sample feature must be nonzero"));
        }
        Ok(())
    }

    fn take_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    /// Adds a positive sample.
    ///
    /// The sample is compared with every positive node (the root is excluded).
    /// If the best similarity reaches `tau_new` the sample is merged into that
    /// node, which is then moved to the deepest position; otherwise it becomes a
    /// new deepest node. Ties go to the deeper node.
    pub fn update_positive(&mut self, x: &FeatureVector, tau_new: f64) -> Result<UpdateReport> {
        self.check_sample(x)?;
        if !(tau_new > -1.0 && tau_new < 1.0) {
            return Err(Error::invalid(format!("tau_new must lie in (-1, 1), got {tau_new}")));
        }

        let mut best: Option<(usize, f64)> = None;
        for (i, node) in self.positive.iter().enumerate() {
            let s = cosine(x, &node.feature)?;
            if best.is_none_or(|(_, b)| s >= b) {
                best = Some((i, s));
            }
        }

        let seq = self.take_seq();
        let merged = match best {
            Some((i, s)) if s >= tau_new => {
                let mut node = self.positive.remove(i).expect("index from enumeration");
                node.feature = merge_features(&node.feature, x, node.count)?;
                node.count += 1;
                node.seq = seq;
                self.positive.push_back(node);
                true
            }
            _ => {
                self.positive
                    .push_back(PnNode::new(x.clone(), NodeLabel::Positive, seq));
                false
            }
        };
        let pruned = prune(&mut self.positive, self.capacity);
        let node = self.positive.back().expect("branch is nonempty");
        Ok(UpdateReport {
            branch: Branch::Positive,
            merged,
            target_index: self.positive.len() - 1,
            seq: node.seq,
            count: node.count,
            pruned,
        })
    }

    /// Appends a negative sample as the deepest negative node.
    pub fn append_negative(&mut self, x: &FeatureVector) -> Result<UpdateReport> {
        self.check_sample(x)?;
        let seq = self.take_seq();
        self.negative
            .push_back(PnNode::new(x.clone(), NodeLabel::Negative, seq));
        let pruned = prune(&mut self.negative, self.capacity);
        Ok(UpdateReport {
            branch: Branch::Negative,
            merged: false,
            target_index: self.negative.len() - 1,
            seq,
            count: 1,
            pruned,
        })
    }

    /// Every node of the tree in walk order.
    pub fn path_order(&self, direction: PathDirection) -> Vec<&PnNode> {
        let forward = self
            .positive
            .iter()
            .rev()
            .chain(std::iter::once(&self.root))
            .chain(self.negative.iter());
        match direction {
            PathDirection::Positive => forward.collect(),
            PathDirection::Negative => {
                let mut nodes: Vec<&PnNode> = forward.collect();
                nodes.reverse();
                nodes
            }
        }
    }

    /// Positive-path classification using the default walking mode.
    pub fn classify_positive_path(&self, x: &FeatureVector) -> Result<TargetLabel> {
        self.classify_positive_path_with(x, PositivePathMode::default())
    }

    /// Decides whether a sample from a tracked (currently positive) target is
    /// still the target.
    ///
    /// Nodes are compared with the similarity to the root as the reference.
    /// Only nodes strictly more similar than the root can decide the label; if
    /// none is, the sample is positive.
    pub fn classify_positive_path_with(
        &self,
        x: &FeatureVector,
        mode: PositivePathMode,
    ) -> Result<TargetLabel> {
        self.check_sample(x)?;
        let root_sim = cosine(x, &self.root.feature)?;
        let mut best: Option<(f64, NodeLabel)> = None;
        for node in self.path_order(PathDirection::Positive) {
            if node.label == NodeLabel::Root {
                continue;
            }
            let s = cosine(x, &node.feature)?;
            if s <= root_sim {
                continue;
            }
            match mode {
                PositivePathMode::FirstHit => return Ok(node.label.target_label()),
                PositivePathMode::FullScan => {
                    if best.is_none_or(|(b, _)| s > b) {
                        best = Some((s, node.label));
                    }
                }
            }
        }
        Ok(best.map_or(TargetLabel::Positive, |(_, label)| label.target_label()))
    }

    /// Decides whether a sample found while the target is lost is the target.
    ///
    /// Walks the whole negative path, root included, and returns the label of
    /// the most similar node; the first maximum in walk order wins ties.
    pub fn classify_negative_path(&self, x: &FeatureVector) -> Result<TargetLabel> {
        self.check_sample(x)?;
        let mut best: Option<(f64, NodeLabel)> = None;
        for node in self.path_order(PathDirection::Negative) {
            let s = cosine(x, &node.feature)?;
            if best.is_none_or(|(b, _)| s > b) {
                best = Some((s, node.label));
            }
        }
        let (_, label) = best.expect("path always contains the root");
        Ok(label.target_label())
    }
}

/// Drops the shallowest nodes until the branch fits. Returns the dropped stamps.
fn prune(branch: &mut VecDeque<PnNode>, capacity: usize) -> Vec<u64> {
    let mut pruned = Vec::new();
    while branch.len() > capacity {
        if let Some(node) = branch.pop_front() {
            pruned.push(node.seq);
        }
    }
    pruned
}
