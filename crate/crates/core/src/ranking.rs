//! Dispersion scoring of candidate clusters.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hac::{HacError, Hierarchy, NodeId};
use crate::raster::{Isol, PixelCoord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankingError {
    #[error("cannot score an empty pixel set")]
    EmptyCluster,
    #[error("unknown score key `{0}`; expected mean or sum")]
    UnknownKey(String),
    #[error(transparent)]
    Hierarchy(#[from] HacError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DispersionStats {
    pub centroid: [f64; 2],
    pub sum_abs_dev: f64,
    pub mean_abs_dev: f64,
    pub max_abs_dev: f64,
    /// `mean_abs_dev / max_abs_dev`, 0 for a single point.
    pub score: f64,
    /// `sum_abs_dev / max_abs_dev`, the ratio listed in reference score tables.
    pub ratio_table: f64,
    pub pixel_count: usize,
}

impl DispersionStats {
    pub fn key(&self, key: ScoreKey) -> f64 {
        match key {
            ScoreKey::Mean => self.score,
            ScoreKey::Sum => self.ratio_table,
        }
    }
}

/// Which dispersion ratio orders the candidates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKey {
    #[default]
    Mean,
    Sum,
}

impl FromStr for ScoreKey {
    type Err = RankingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(ScoreKey::Mean),
            "sum" => Ok(ScoreKey::Sum),
            _ => Err(RankingError::UnknownKey(s.to_string())),
        }
    }
}

impl fmt::Display for ScoreKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKey::Mean => "mean",
            ScoreKey::Sum => "sum",
        })
    }
}

/// `num / den`, or 0 when `den` is 0.
pub fn dispersion_ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Score real-valued points.
pub fn score_points(points: &[[f64; 2]]) -> Result<DispersionStats, RankingError> {
    if points.is_empty() {
        return Err(RankingError::EmptyCluster);
    }
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p[0], sy + p[1]));
    let centroid = [sx / n, sy / n];
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for p in points {
        let dev = (p[0] - centroid[0]).hypot(p[1] - centroid[1]);
        sum += dev;
        max = max.max(dev);
    }
    let mean = sum / n;
    Ok(DispersionStats {
        centroid,
        sum_abs_dev: sum,
        mean_abs_dev: mean,
        max_abs_dev: max,
        score: dispersion_ratio(mean, max).min(1.0),
        ratio_table: dispersion_ratio(sum, max),
        pixel_count: points.len(),
    })
}

pub fn score_cluster(pixels: &[PixelCoord]) -> Result<DispersionStats, RankingError> {
    let points: Vec<[f64; 2]> = pixels.iter().map(|p| [p.x as f64, p.y as f64]).collect();
    score_points(&points)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedCandidate {
    pub node: NodeId,
    pub stats: DispersionStats,
}

/// Score every terminal on its ISOL pixels and sort ascending by `key`,
/// ties by node id.
pub fn rank_candidates(
    hierarchy: &Hierarchy,
    isols: &[Isol],
    terminals: &BTreeSet<NodeId>,
    key: ScoreKey,
) -> Result<Vec<RankedCandidate>, RankingError> {
    let terminals: Vec<NodeId> = terminals.iter().copied().collect();
    let mut ranked = terminals
        .par_iter()
        .map(|&node| {
            let pixels = hierarchy.group_pixels(node, isols)?;
            Ok(RankedCandidate {
                node,
                stats: score_cluster(&pixels)?,
            })
        })
        .collect::<Result<Vec<_>, RankingError>>()?;
    ranked.sort_by(|a, b| a.stats.key(key).total_cmp(&b.stats.key(key)).then(a.node.cmp(&b.node)));
    Ok(ranked)
}
