//! Per-node geometric parameters of the agglomeration hierarchy.
//!
//! Every node carries its total ISOL area (`n_pix`) and perimeter (`n_edge`).
//! Merge nodes additionally carry the parameters of the merge that formed
//! them:
//!
//! * `a_merge`: connective area between the two merged groups,
//! * `l_hat`: mean length of the cross-group links,
//! * `lw_ratio`: `l_hat² / a_merge`, the length/width ratio of the connective
//!   area viewed as a rectangle (0 when `a_merge` is 0),
//! * `a_cumulative`: pixel count of the union of the connective areas of this
//!   merge and every merge below it in the hierarchy.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hac::{Hierarchy, NodeId};
use crate::links::LinkStore;
use crate::raster::Isol;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParamError {
    #[error("unknown parameter `{0}`; expected a_merge, l_hat, lw_ratio, n_pix, n_edge, a_cumulative, lw_over_acum or NUM/DEN")]
    UnknownChoice(String),
}

/// Parameters of the merge forming a node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeParams {
    pub a_merge: usize,
    pub l_hat: f64,
    pub lw_ratio: f64,
    pub a_cumulative: usize,
    /// Number of cross-group links the means are taken over.
    pub link_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub n_pix: usize,
    pub n_edge: usize,
    /// Absent for singletons.
    pub merge: Option<MergeParams>,
}

/// Parameters for every node, indexed by [`NodeId`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamTable {
    nodes: Vec<NodeParams>,
}

impl ParamTable {
    pub fn get(&self, id: NodeId) -> Option<&NodeParams> {
        self.nodes.get(id.index())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeParams)> + '_ {
        self.nodes.iter().enumerate().map(|(i, p)| (NodeId(i), p))
    }

    /// CSV: `node_id,merge_iteration,a_merge,l_hat,lw_ratio,n_pix,n_edge,a_cumulative`.
    /// Merge-only columns are blank for singletons.
    pub fn write_csv<W: Write>(&self, hierarchy: &Hierarchy, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "node_id",
            "merge_iteration",
            "a_merge",
            "l_hat",
            "lw_ratio",
            "n_pix",
            "n_edge",
            "a_cumulative",
        ])?;
        for (id, p) in self.iter() {
            let iteration = hierarchy
                .node(id)
                .ok()
                .and_then(|n| n.merge_iteration)
                .map(|i| i.to_string())
                .unwrap_or_default();
            let (a_merge, l_hat, lw, acum) = match &p.merge {
                Some(m) => (
                    m.a_merge.to_string(),
                    m.l_hat.to_string(),
                    m.lw_ratio.to_string(),
                    m.a_cumulative.to_string(),
                ),
                None => Default::default(),
            };
            w.write_record([
                id.to_string(),
                iteration,
                a_merge,
                l_hat,
                lw,
                p.n_pix.to_string(),
                p.n_edge.to_string(),
                acum,
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn union_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Compute [`NodeParams`] for every node. `isols` is the sorted ISOL list the
/// hierarchy was built from.
pub fn compute_params(hierarchy: &Hierarchy, isols: &[Isol], store: &LinkStore) -> ParamTable {
    let mut nodes = Vec::with_capacity(hierarchy.len());
    // cumulative link-pixel unions, dropped once the successor has used them
    let mut cumulative: Vec<Option<Vec<u32>>> = vec![None; hierarchy.len()];

    for node in hierarchy.nodes() {
        let id = node.id.index();
        if node.is_singleton() {
            let isol = &isols[id];
            debug_assert_eq!(isol.id, node.members[0]);
            nodes.push(NodeParams {
                n_pix: isol.pixel_count(),
                n_edge: isol.edge_count(),
                merge: None,
            });
            cumulative[id] = Some(Vec::new());
            continue;
        }
        let (a, b) = (node.ancestors[0].index(), node.ancestors[1].index());
        let members_a = &hierarchy.nodes()[a].members;
        let members_b = &hierarchy.nodes()[b].members;

        let mut pixels = Vec::new();
        let (mut link_count, mut total_length) = (0usize, 0usize);
        for &x in members_a {
            for &y in members_b {
                if let Some(s) = store.summary(x, y) {
                    pixels.extend_from_slice(&s.pixels);
                    link_count += s.link_count;
                    total_length += s.total_length;
                }
            }
        }
        pixels.sort_unstable();
        pixels.dedup();

        let cum_a = cumulative[a].take().unwrap_or_default();
        let cum_b = cumulative[b].take().unwrap_or_default();
        let cum = union_sorted(&union_sorted(&cum_a, &cum_b), &pixels);

        let a_merge = pixels.len();
        let l_hat = if link_count > 0 {
            total_length as f64 / link_count as f64
        } else {
            0.0
        };
        let lw_ratio = if a_merge > 0 {
            l_hat * l_hat / a_merge as f64
        } else {
            0.0
        };
        nodes.push(NodeParams {
            n_pix: nodes[a].n_pix + nodes[b].n_pix,
            n_edge: nodes[a].n_edge + nodes[b].n_edge,
            merge: Some(MergeParams {
                a_merge,
                l_hat,
                lw_ratio,
                a_cumulative: cum.len(),
                link_count,
            }),
        });
        cumulative[id] = Some(cum);
    }
    ParamTable { nodes }
}

/// A single node parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamField {
    AMerge,
    LHat,
    LwRatio,
    NPix,
    NEdge,
    ACumulative,
}

impl ParamField {
    const ALL: [ParamField; 6] = [
        ParamField::AMerge,
        ParamField::LHat,
        ParamField::LwRatio,
        ParamField::NPix,
        ParamField::NEdge,
        ParamField::ACumulative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamField::AMerge => "a_merge",
            ParamField::LHat => "l_hat",
            ParamField::LwRatio => "lw_ratio",
            ParamField::NPix => "n_pix",
            ParamField::NEdge => "n_edge",
            ParamField::ACumulative => "a_cumulative",
        }
    }

    fn value(self, p: &NodeParams) -> Option<f64> {
        match self {
            ParamField::NPix => Some(p.n_pix as f64),
            ParamField::NEdge => Some(p.n_edge as f64),
            ParamField::AMerge => p.merge.map(|m| m.a_merge as f64),
            ParamField::LHat => p.merge.map(|m| m.l_hat),
            ParamField::LwRatio => p.merge.map(|m| m.lw_ratio),
            ParamField::ACumulative => p.merge.map(|m| m.a_cumulative as f64),
        }
    }
}

impl FromStr for ParamField {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ParamField::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ParamError::UnknownChoice(s.to_string()))
    }
}

/// The scalar tracked along linear paths.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamChoice {
    Field(ParamField),
    /// `lw_ratio / a_cumulative`.
    LwOverAcum,
    /// `numerator / denominator`, 0 where the denominator is 0.
    Ratio(ParamField, ParamField),
}

impl ParamChoice {
    pub const A_MERGE: ParamChoice = ParamChoice::Field(ParamField::AMerge);
}

impl Default for ParamChoice {
    fn default() -> Self {
        ParamChoice::A_MERGE
    }
}

impl FromStr for ParamChoice {
    type Err = ParamError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "lw_over_acum" {
            return Ok(ParamChoice::LwOverAcum);
        }
        if let Some((num, den)) = s.split_once('/') {
            let err = || ParamError::UnknownChoice(s.to_string());
            let num = num.trim().parse().map_err(|_| err())?;
            let den = den.trim().parse().map_err(|_| err())?;
            return Ok(ParamChoice::Ratio(num, den));
        }
        s.parse().map(ParamChoice::Field)
    }
}

impl fmt::Display for ParamChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamChoice::Field(field) => f.write_str(field.name()),
            ParamChoice::LwOverAcum => f.write_str("lw_over_acum"),
            ParamChoice::Ratio(n, d) => write!(f, "{}/{}", n.name(), d.name()),
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-node scalar values of a [`ParamChoice`]; defined on merge nodes only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStream {
    values: Vec<Option<f64>>,
}

impl ParamStream {
    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        Self { values }
    }

    pub fn get(&self, id: NodeId) -> Option<f64> {
        self.values.get(id.index()).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evaluate `choice` on every merge node.
pub fn parameter_stream(hierarchy: &Hierarchy, params: &ParamTable, choice: ParamChoice) -> ParamStream {
    let values = hierarchy
        .nodes()
        .iter()
        .map(|node| {
            let p = params.get(node.id)?;
            let m = p.merge?;
            Some(match choice {
                ParamChoice::Field(field) => field.value(p)?,
                ParamChoice::LwOverAcum => ratio(m.lw_ratio, m.a_cumulative as f64),
                ParamChoice::Ratio(num, den) => ratio(num.value(p)?, den.value(p)?),
            })
        })
        .collect();
    ParamStream { values }
}
