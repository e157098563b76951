//! Agglomerative merging under group connective distance, and the resulting
//! agglomeration hierarchy.
//!
//! Every iteration merges the two active groups at the smallest connective
//! distance. Ties are broken on the pair of smallest member ids
//! `(min(lo), min(hi))`, so runs are reproducible. Merging stops when no
//! active pair is connected; disconnected scenes give a forest.
//!
//! Node ids are dense: singletons take `0..M` in ISOL id order and the node
//! formed at merge iteration `i` (1-based) takes `M - 1 + i`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::links::LinkStore;
use crate::raster::{Isol, PixelCoord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HacError {
    #[error("unknown hierarchy node {0}")]
    UnknownNode(NodeId),
    #[error("ISOL list does not match hierarchy singletons")]
    IsolMismatch,
}

/// Handle of a hierarchy node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One group of ISOLs that existed at some point of the merging.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub id: NodeId,
    /// Member ISOL ids, ascending.
    pub members: Vec<u32>,
    /// The two groups merged to form this one; empty for singletons.
    pub ancestors: Vec<NodeId>,
    pub successor: Option<NodeId>,
    pub merge_iteration: Option<usize>,
    /// Connective distance realized by the merge.
    pub merge_distance: Option<usize>,
}

impl HierarchyNode {
    pub fn is_singleton(&self) -> bool {
        self.ancestors.is_empty()
    }
}

/// One step of the merge sequence, for comparisons and reports.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeStep {
    pub iteration: usize,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub distance: usize,
}

/// The agglomeration hierarchy (a binary merge forest).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hierarchy {
    nodes: Vec<HierarchyNode>,
    roots: Vec<NodeId>,
    singleton_ids: BTreeMap<u32, NodeId>,
}

/// Priority key of an active pair: distance, then the smaller and larger of
/// the two groups' minimum member ids. Node ids ride along for lookup.
type PairKey = (usize, u32, u32, usize, usize);

struct ActiveGroup {
    min_member: u32,
    members: Vec<u32>,
}

/// Merge state with incrementally maintained pixel unions between active
/// groups.
struct Merger {
    groups: HashMap<usize, ActiveGroup>,
    unions: HashMap<(usize, usize), Vec<u32>>,
    adjacency: HashMap<usize, BTreeSet<usize>>,
    queue: BTreeSet<PairKey>,
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl Merger {
    fn key(&self, a: usize, b: usize) -> PairKey {
        let distance = self.unions[&ordered(a, b)].len();
        let (ma, mb) = (self.groups[&a].min_member, self.groups[&b].min_member);
        if ma < mb {
            (distance, ma, mb, a, b)
        } else {
            (distance, mb, ma, b, a)
        }
    }

    fn connect(&mut self, a: usize, b: usize, pixels: Vec<u32>) {
        self.unions.insert(ordered(a, b), pixels);
        self.adjacency.entry(a).or_default().insert(b);
        self.adjacency.entry(b).or_default().insert(a);
        let key = self.key(a, b);
        self.queue.insert(key);
    }

    /// Retire group `g`, returning its neighbours and their pixel unions.
    fn retire(&mut self, g: usize) -> BTreeMap<usize, Vec<u32>> {
        let mut out = BTreeMap::new();
        for n in self.adjacency.remove(&g).unwrap_or_default() {
            let key = self.key(g, n);
            self.queue.remove(&key);
            if let Some(adj) = self.adjacency.get_mut(&n) {
                adj.remove(&g);
            }
            let pixels = self.unions.remove(&ordered(g, n)).unwrap_or_default();
            out.insert(n, pixels);
        }
        out
    }
}

/// Run agglomerative merging over `isols` with the group connective distance
/// served by `store`.
pub fn agglomerate(isols: &[Isol], store: &LinkStore) -> Hierarchy {
    let mut ids: Vec<u32> = isols.iter().map(|i| i.id).collect();
    ids.sort_unstable();
    ids.dedup();
    let m = ids.len();

    let mut nodes: Vec<HierarchyNode> = ids
        .iter()
        .enumerate()
        .map(|(i, &id)| HierarchyNode {
            id: NodeId(i),
            members: vec![id],
            ancestors: Vec::new(),
            successor: None,
            merge_iteration: None,
            merge_distance: None,
        })
        .collect();
    let singleton_ids: BTreeMap<u32, NodeId> = ids.iter().enumerate().map(|(i, &id)| (id, NodeId(i))).collect();

    let mut merger = Merger {
        groups: ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                (
                    i,
                    ActiveGroup {
                        min_member: id,
                        members: vec![id],
                    },
                )
            })
            .collect(),
        unions: HashMap::new(),
        adjacency: HashMap::new(),
        queue: BTreeSet::new(),
    };
    for (pair, summary) in store.summaries() {
        if let (Some(a), Some(b)) = (singleton_ids.get(&pair.low()), singleton_ids.get(&pair.high())) {
            merger.connect(a.0, b.0, summary.pixels.clone());
        }
    }

    let mut iteration = 0;
    while let Some(&(distance, _, _, a, b)) = merger.queue.first() {
        iteration += 1;
        let c = m - 1 + iteration;
        let from_a = merger.retire(a);
        let mut from_b = merger.retire(b);
        let group_a = merger.groups.remove(&a).expect("active group");
        let group_b = merger.groups.remove(&b).expect("active group");
        let members = merge_sorted(&group_a.members, &group_b.members);

        nodes[a].successor = Some(NodeId(c));
        nodes[b].successor = Some(NodeId(c));
        nodes.push(HierarchyNode {
            id: NodeId(c),
            members: members.clone(),
            ancestors: vec![NodeId(a), NodeId(b)],
            successor: None,
            merge_iteration: Some(iteration),
            merge_distance: Some(distance),
        });
        merger.groups.insert(
            c,
            ActiveGroup {
                min_member: group_a.min_member.min(group_b.min_member),
                members,
            },
        );

        let mut neighbours: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for (n, pixels) in from_a {
            if n == b {
                continue;
            }
            let combined = match from_b.remove(&n) {
                Some(other) => merge_sorted(&pixels, &other),
                None => pixels,
            };
            neighbours.insert(n, combined);
        }
        for (n, pixels) in from_b {
            if n != a {
                neighbours.insert(n, pixels);
            }
        }
        for (n, pixels) in neighbours {
            merger.connect(c, n, pixels);
        }
    }

    let roots = nodes.iter().filter(|n| n.successor.is_none()).map(|n| n.id).collect();
    Hierarchy {
        nodes,
        roots,
        singleton_ids,
    }
}

impl Hierarchy {
    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of singleton nodes (ISOLs).
    pub fn singleton_count(&self) -> usize {
        self.singleton_ids.len()
    }

    /// Number of merges performed.
    pub fn merge_count(&self) -> usize {
        self.nodes.len() - self.singleton_ids.len()
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn node(&self, id: NodeId) -> Result<&HierarchyNode, HacError> {
        self.nodes.get(id.0).ok_or(HacError::UnknownNode(id))
    }

    /// Singleton node of an ISOL.
    pub fn singleton(&self, isol_id: u32) -> Option<NodeId> {
        self.singleton_ids.get(&isol_id).copied()
    }

    pub fn singletons(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.singleton_ids.len()).map(NodeId)
    }

    /// Merge nodes in iteration order.
    pub fn merge_nodes(&self) -> impl Iterator<Item = &HierarchyNode> + '_ {
        self.nodes[self.singleton_ids.len()..].iter()
    }

    /// k-fold successor; `None` if the path ends first.
    pub fn successor(&self, h: NodeId, k: usize) -> Result<Option<NodeId>, HacError> {
        let mut current = self.node(h)?.id;
        for _ in 0..k {
            match self.nodes[current.0].successor {
                Some(next) => current = next,
                None => return Ok(None),
            }
        }
        Ok(Some(current))
    }

    /// Linear path from `h0` down to its root, inclusive.
    pub fn path_from(&self, h0: NodeId) -> Result<Vec<NodeId>, HacError> {
        let mut path = vec![self.node(h0)?.id];
        while let Some(next) = self.nodes[path[path.len() - 1].0].successor {
            path.push(next);
        }
        Ok(path)
    }

    /// `h` together with all its transitive ancestors.
    pub fn ancestors_all(&self, h: NodeId) -> Result<BTreeSet<NodeId>, HacError> {
        let mut out = BTreeSet::new();
        let mut stack = vec![self.node(h)?.id];
        while let Some(n) = stack.pop() {
            if out.insert(n) {
                stack.extend(self.nodes[n.0].ancestors.iter().copied());
            }
        }
        Ok(out)
    }

    /// Pixels of all member ISOLs of `h`. `isols` must be the ISOL list the
    /// hierarchy was built from, sorted by id.
    pub fn group_pixels(&self, h: NodeId, isols: &[Isol]) -> Result<Vec<PixelCoord>, HacError> {
        if isols.len() != self.singleton_ids.len() {
            return Err(HacError::IsolMismatch);
        }
        let node = self.node(h)?;
        let mut pixels = Vec::new();
        for id in &node.members {
            let idx = self.singleton_ids[id].0;
            if isols[idx].id != *id {
                return Err(HacError::IsolMismatch);
            }
            pixels.extend_from_slice(&isols[idx].pixels);
        }
        pixels.sort_unstable();
        Ok(pixels)
    }

    /// The sequence of merges, each side given by its member ids.
    pub fn merge_sequence(&self) -> Vec<MergeStep> {
        self.merge_nodes()
            .map(|n| {
                let mut left = self.nodes[n.ancestors[0].0].members.clone();
                let mut right = self.nodes[n.ancestors[1].0].members.clone();
                if left[0] > right[0] {
                    std::mem::swap(&mut left, &mut right);
                }
                MergeStep {
                    iteration: n.merge_iteration.unwrap_or_default(),
                    left,
                    right,
                    distance: n.merge_distance.unwrap_or_default(),
                }
            })
            .collect()
    }

    /// JSON array of nodes.
    pub fn write_json<W: Write>(&self, out: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(out, &self.nodes)
    }
}
