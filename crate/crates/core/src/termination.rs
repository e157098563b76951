//! Locally adaptive termination.
//!
//! Each singleton's linear path is scanned for break points, indices where
//! the first difference of the path-scaled parameter sets a new cumulative
//! maximum. Breaks from all paths are counted at the merge nodes they are
//! attributed to; nodes whose count lies in the upper tail of the count
//! histogram are removed together with their successors.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::hac::{HacError, Hierarchy, NodeId};
use crate::params::ParamStream;

#[derive(Debug, Error, PartialEq)]
pub enum TerminationError {
    #[error("node {0} is not a singleton")]
    NotSingleton(NodeId),
    #[error("no trace for singleton {0}")]
    MissingTrace(NodeId),
    #[error("significance fraction {0} outside (0, 1)")]
    BadSignificance(f64),
    #[error(transparent)]
    Hierarchy(#[from] HacError),
}

/// How path differences are taken. Only first differences over the path
/// index are supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DifferenceKind {
    #[default]
    PathIndex,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathTrace {
    pub start: NodeId,
    pub nodes: Vec<NodeId>,
    /// Parameter values scaled to [0, 1] over the path.
    pub f: Vec<f64>,
    /// `d[j] = f[j + 1] - f[j]`.
    pub d: Vec<f64>,
    pub cmax: Vec<f64>,
    pub breakpoints: BTreeSet<usize>,
}

impl PathTrace {
    /// CSV: `j,node_id,f,D,Cmax,is_break`; row `j` describes the merge
    /// forming `nodes[j + 1]`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["j", "node_id", "f", "D", "Cmax", "is_break"])?;
        for j in 0..self.d.len() {
            w.write_record([
                j.to_string(),
                self.nodes[j + 1].to_string(),
                self.f[j + 1].to_string(),
                self.d[j].to_string(),
                self.cmax[j].to_string(),
                u8::from(self.breakpoints.contains(&j)).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Min-max scale to [0, 1]; a constant sequence maps to all zeros.
pub fn min_max_scale(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    raw.iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// First differences of `f`, their cumulative maxima and the strict-record
/// indices `j >= 1`.
pub fn differences(f: &[f64]) -> (Vec<f64>, Vec<f64>, BTreeSet<usize>) {
    let d: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
    let mut cmax = Vec::with_capacity(d.len());
    let mut breakpoints = BTreeSet::new();
    let mut best = f64::NEG_INFINITY;
    for (j, &dj) in d.iter().enumerate() {
        if j >= 1 && dj > best {
            breakpoints.insert(j);
        }
        best = best.max(dj);
        cmax.push(best);
    }
    (d, cmax, breakpoints)
}

/// Trace the path from singleton `h0`. The singleton itself takes the raw
/// value 0.
pub fn trace_path(hierarchy: &Hierarchy, stream: &ParamStream, h0: NodeId) -> Result<PathTrace, TerminationError> {
    if !hierarchy.node(h0)?.is_singleton() {
        return Err(TerminationError::NotSingleton(h0));
    }
    let nodes = hierarchy.path_from(h0)?;
    let raw: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &n)| if i == 0 { 0.0 } else { stream.get(n).unwrap_or(0.0) })
        .collect();
    let f = min_max_scale(&raw);
    let (d, cmax, breakpoints) = differences(&f);
    Ok(PathTrace {
        start: h0,
        nodes,
        f,
        d,
        cmax,
        breakpoints,
    })
}

/// Trace every singleton path, in singleton order.
pub fn trace_all(hierarchy: &Hierarchy, stream: &ParamStream) -> Result<Vec<PathTrace>, TerminationError> {
    let singletons: Vec<NodeId> = hierarchy.singletons().collect();
    singletons
        .par_iter()
        .map(|&h0| trace_path(hierarchy, stream, h0))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BreakCounts {
    /// `F(h)` for every node, indexed by [`NodeId`].
    pub counts: Vec<usize>,
    pub significance: usize,
    pub p: f64,
}

impl BreakCounts {
    pub fn count(&self, h: NodeId) -> usize {
        self.counts.get(h.index()).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Number of merge nodes per count value.
    pub fn histogram(&self, hierarchy: &Hierarchy) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for node in hierarchy.merge_nodes() {
            *hist.entry(self.count(node.id)).or_insert(0) += 1;
        }
        hist
    }

    /// CSV: `count_value,num_nodes` over merge nodes.
    pub fn write_histogram_csv<W: Write>(&self, hierarchy: &Hierarchy, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["count_value", "num_nodes"])?;
        for (value, n) in self.histogram(hierarchy) {
            w.write_record([value.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smallest `v` such that at most a fraction `p` of `values` exceed `v`.
pub fn significance_threshold(values: &[usize], p: f64) -> usize {
    let n = values.len();
    if n == 0 {
        return 0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    // count above v must be <= floor(p * n), up to float noise
    let allowed = (p * n as f64 + 1e-9).floor() as usize;
    if allowed >= n {
        return 0;
    }
    // the (n - allowed)-th smallest value leaves at most `allowed` above it
    sorted[n - allowed - 1]
}

/// Accumulate break points of all singleton traces at the nodes they are
/// attributed to.
pub fn count_breaks(hierarchy: &Hierarchy, traces: &[PathTrace], p: f64) -> Result<BreakCounts, TerminationError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(TerminationError::BadSignificance(p));
    }
    let by_start: BTreeMap<NodeId, &PathTrace> = traces.iter().map(|t| (t.start, t)).collect();
    let mut counts = vec![0usize; hierarchy.len()];
    for h0 in hierarchy.singletons() {
        let trace = by_start.get(&h0).ok_or(TerminationError::MissingTrace(h0))?;
        for &j in &trace.breakpoints {
            counts[trace.nodes[j + 1].index()] += 1;
        }
    }
    let merge_counts: Vec<usize> = hierarchy.merge_nodes().map(|n| counts[n.id.index()]).collect();
    Ok(BreakCounts {
        significance: significance_threshold(&merge_counts, p),
        counts,
        p,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TrimmedHierarchy {
    pub removed: BTreeSet<NodeId>,
    pub terminals: BTreeSet<NodeId>,
}

/// Remove every node whose count exceeds `threshold`, and its successors.
pub fn trim_at(hierarchy: &Hierarchy, counts: &BreakCounts, threshold: usize) -> TrimmedHierarchy {
    let mut removed = BTreeSet::new();
    for node in hierarchy.nodes() {
        if counts.count(node.id) <= threshold {
            continue;
        }
        let mut cur = Some(node.id);
        while let Some(h) = cur {
            if !removed.insert(h) {
                break;
            }
            cur = hierarchy.nodes()[h.index()].successor;
        }
    }
    let terminals = hierarchy
        .nodes()
        .iter()
        .filter(|n| !removed.contains(&n.id))
        .filter(|n| n.successor.is_none_or(|s| removed.contains(&s)))
        .map(|n| n.id)
        .collect();
    TrimmedHierarchy { removed, terminals }
}

/// [`trim_at`] the significance threshold.
pub fn trim(hierarchy: &Hierarchy, counts: &BreakCounts) -> TrimmedHierarchy {
    trim_at(hierarchy, counts, counts.significance)
}

/// Terminals grouping at least `min_size` ISOLs.
pub fn filter_terminals(trimmed: &TrimmedHierarchy, hierarchy: &Hierarchy, min_size: usize) -> BTreeSet<NodeId> {
    trimmed
        .terminals
        .iter()
        .copied()
        .filter(|&h| hierarchy.nodes()[h.index()].members.len() >= min_size)
        .collect()
}
