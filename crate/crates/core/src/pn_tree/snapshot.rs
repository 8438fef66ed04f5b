//! Line-oriented text snapshot of a [`PnTree`].
//!
//! ```text
//! pn-tree-snapshot v1
//! capacity=10
//! next_seq=7
//! R,0,1,0.5,0.25,...
//! P,1,3,0.48,0.27,...
//! N,2,1,-0.1,0.9,...
//! ```
//!
//! The root line comes first, then positive nodes and negative nodes, each
//! branch shallowest first. Node lines are `label,seq,count,values...`.
//! Values use Rust's shortest round-trip float formatting, so a snapshot
//! reloads bit-identically.

use std::collections::VecDeque;
use std::fmt::Write as _;

use super::{NodeLabel, PnNode, PnTree};
use crate::embedding::FeatureVector;
use crate::error::{Error, Result};

pub const SNAPSHOT_HEADER: &str = "pn-tree-snapshot v1";

fn label_code(label: NodeLabel) -> char {
    match label {
        NodeLabel::Root => 'R',
        NodeLabel::Positive => 'P',
        NodeLabel::Negative => 'N',
    }
}

impl PnTree {
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SNAPSHOT_HEADER}");
        let _ = writeln!(out, "capacity={}", self.capacity);
        let _ = writeln!(out, "next_seq={}", self.next_seq);
        for node in std::iter::once(&self.root)
            .chain(self.positive.iter())
            .chain(self.negative.iter())
        {
            let _ = write!(out, "{},{},{}", label_code(node.label), node.seq, node.count);
            for v in node.feature.as_slice() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses a snapshot produced by [`PnTree::to_snapshot`], checking every
    /// structural invariant of the tree.
    pub fn from_snapshot(text: &str) -> Result<PnTree> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));

        let (n, header) = lines.next().ok_or_else(|| Error::parse(1, "empty snapshot"))?;
        if header != SNAPSHOT_HEADER {
            return Err(Error::parse(n, format!("expected `{SNAPSHOT_HEADER}`")));
        }
        let capacity: usize = header_value(lines.next(), "capacity", 2)?;
        let next_seq: u64 = header_value(lines.next(), "next_seq", 3)?;
        if capacity == 0 {
            return Err(Error::parse(2, "capacity must be at least 1"));
        }

        let mut root: Option<PnNode> = None;
        let mut positive = VecDeque::new();
        let mut negative = VecDeque::new();
        let mut dim: Option<usize> = None;

        for (n, line) in lines {
            if line.is_empty() {
                continue;
            }
            let node = parse_node(n, line)?;
            match dim {
                None => dim = Some(node.feature.dim()),
                Some(d) if d != node.feature.dim() => {
                    return Err(Error::parse(n, format!("expected {d} values, got {}", node.feature.dim())));
                }
                _ => {}
            }
            if node.feature.is_zero() {
                return Err(Error::parse(n, "node feature is the zero vector"));
            }
            if node.seq >= next_seq {
                return Err(Error::parse(n, "node seq is not below next_seq"));
            }
            match node.label {
                NodeLabel::Root => {
                    if root.is_some() || !positive.is_empty() || !negative.is_empty() {
                        return Err(Error::parse(n, "root must be the first and only R line"));
                    }
                    root = Some(node);
                }
                NodeLabel::Positive => {
                    if root.is_none() || !negative.is_empty() {
                        return Err(Error::parse(n, "positive nodes must follow the root"));
                    }
                    push_ordered(&mut positive, node, n)?;
                }
                NodeLabel::Negative => {
                    if root.is_none() {
                        return Err(Error::parse(n, "negative nodes must follow the root"));
                    }
                    push_ordered(&mut negative, node, n)?;
                }
            }
        }

        let last = text.lines().count().max(1);
        let root = root.ok_or_else(|| Error::parse(last, "missing root node"))?;
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::parse(last, "both branches need at least one node"));
        }
        if positive.len() > capacity || negative.len() > capacity {
            return Err(Error::parse(last, "branch exceeds capacity"));
        }
        Ok(PnTree {
            root,
            positive,
            negative,
            capacity,
            next_seq,
        })
    }
}

fn header_value<T: std::str::FromStr>(line: Option<(usize, &str)>, key: &str, n: usize) -> Result<T> {
    let (n, line) = line.ok_or_else(|| Error::parse(n, format!("missing `{key}=` line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix('='))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(n, format!("expected `{key}=<integer>`")))
}

fn parse_node(n: usize, line: &str) -> Result<PnNode> {
    let mut fields = line.split(',');
    let label = match fields.next() {
        Some("R") => NodeLabel::Root,
        Some("P") => NodeLabel::Positive,
        Some("N") => NodeLabel::Negative,
        other => return Err(Error::parse(n, format!("unknown node label {other:?}"))),
    };
    let seq: u64 = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::parse(n, "bad seq field"))?;
    let count: u64 = fields
        .next()
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| Error::parse(n, "bad count field"))?;
    if count == 0 {
        return Err(Error::parse(n, "count must be at least 1"));
    }
    let values = fields
        .map(|f| f.parse::<f64>().map_err(|_| Error::parse(n, format!("bad feature value `{f}`"))))
        .collect::<Result<Vec<f64>>>()?;
    let feature = FeatureVector::new(values).map_err(|e| Error::parse(n, e.to_string()))?;
    Ok(PnNode {
        feature,
        count,
        seq,
        label,
    })
}

fn push_ordered(branch: &mut VecDeque<PnNode>, node: PnNode, n: usize) -> Result<()> {
    if let Some(prev) = branch.back() {
        if node.seq <= prev.seq {
            return Err(Error::parse(n, "seq must increase with depth"));
        }
    }
    branch.push_back(node);
    Ok(())
}
