//! Connective links between ISOLs and the connective distance they induce.
//!
//! From every edge pixel of every ISOL a ray is walked in each of the eight
//! compass directions, one pixel per step. The ray keeps going while it is on
//! interstitial (label `0`) pixels. If the first labeled pixel it meets belongs
//! to a different ISOL, the traversed interstitial pixels form a connective
//! link. Rays that leave the raster or come back to their own ISOL are dropped.
//!
//! The connective distance between two ISOLs, or two disjoint groups of
//! ISOLs, is the number of distinct interstitial pixels covered by all links
//! joining them. Pairs with no link at all are at [`Distance::Infinite`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Isol, LabeledRaster, PixelCoord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinkError {
    #[error("ISOL groups must be non-empty")]
    EmptyGroup,
    #[error("ISOL {0} appears in both groups")]
    Overlap(u32),
}

/// The eight compass directions. `y` grows downwards (south).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Direction {
    pub const ALL: [Direction; 8] = [
        Direction::N,
        Direction::NE,
        Direction::E,
        Direction::SE,
        Direction::S,
        Direction::SW,
        Direction::W,
        Direction::NW,
    ];

    /// Pixel step `(dx, dy)`.
    pub const fn offset(self) -> (i64, i64) {
        match self {
            Direction::N => (0, -1),
            Direction::NE => (1, -1),
            Direction::E => (1, 0),
            Direction::SE => (1, 1),
            Direction::S => (0, 1),
            Direction::SW => (-1, 1),
            Direction::W => (-1, 0),
            Direction::NW => (-1, -1),
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            Direction::N => "N",
            Direction::NE => "NE",
            Direction::E => "E",
            Direction::SE => "SE",
            Direction::S => "S",
            Direction::SW => "SW",
            Direction::W => "W",
            Direction::NW => "NW",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A straight ray across interstitial pixels from one ISOL to another.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConnectiveLink {
    pub origin_isol: u32,
    pub target_isol: u32,
    pub direction: Direction,
    pub origin_pixel: PixelCoord,
    /// Label-0 pixels crossed, in walking order. Empty for touching segments.
    pub interstitial_pixels: Vec<PixelCoord>,
}

impl ConnectiveLink {
    /// Link length: the number of interstitial pixels crossed.
    pub fn len(&self) -> usize {
        self.interstitial_pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interstitial_pixels.is_empty()
    }
}

/// Unordered pair of distinct ISOL ids, stored as `(low, high)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IsolPair(u32, u32);

impl IsolPair {
    /// `None` when `a == b`.
    pub fn new(a: u32, b: u32) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(IsolPair(a, b)),
            std::cmp::Ordering::Greater => Some(IsolPair(b, a)),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn low(self) -> u32 {
        self.0
    }

    pub fn high(self) -> u32 {
        self.1
    }
}

/// Connective distance: a pixel count, or no connection at all.
///
/// Ordered so that every finite distance sorts before `Infinite`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Distance {
    Finite(usize),
    Infinite,
}

impl Distance {
    pub fn finite(self) -> Option<usize> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Infinite => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Distance::Finite(_))
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Finite(d) => write!(f, "{d}"),
            Distance::Infinite => f.write_str("inf"),
        }
    }
}

/// Aggregate of all links recorded for one ISOL pair.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairSummary {
    /// Sorted, de-duplicated row-major indices of all interstitial pixels.
    pub pixels: Vec<u32>,
    /// Number of links (multiset cardinality).
    pub link_count: usize,
    /// Sum of link lengths.
    pub total_length: usize,
}

/// All connective links of a scene, keyed by unordered ISOL pair.
#[derive(Clone, Debug, Default)]
pub struct LinkStore {
    width: usize,
    links: BTreeMap<IsolPair, Vec<ConnectiveLink>>,
    summaries: BTreeMap<IsolPair, PairSummary>,
    neighbours: BTreeMap<u32, BTreeSet<u32>>,
}

/// Walk one ray from `origin` in `direction`.
fn walk_ray(
    raster: &LabeledRaster,
    origin_isol: u32,
    origin: PixelCoord,
    direction: Direction,
    max_ray: Option<usize>,
) -> Option<ConnectiveLink> {
    let (dx, dy) = direction.offset();
    let (mut x, mut y) = (origin.x as i64, origin.y as i64);
    let mut crossed = Vec::new();
    loop {
        x += dx;
        y += dy;
        let label = raster.label_checked(x, y)?;
        if label == 0 {
            if max_ray.is_some_and(|m| crossed.len() >= m) {
                return None;
            }
            crossed.push(PixelCoord::new(x as u32, y as u32));
            continue;
        }
        if label == origin_isol {
            return None;
        }
        return Some(ConnectiveLink {
            origin_isol,
            target_isol: label,
            direction,
            origin_pixel: origin,
            interstitial_pixels: crossed,
        });
    }
}

/// Cast rays from every edge pixel of every ISOL in all eight directions.
///
/// `max_ray` caps the number of interstitial pixels a link may cross; rays
/// running longer are discarded. `None` means unlimited.
///
/// Work is spread over ISOLs in parallel; links are merged back in ISOL id
/// order so the store is identical to a sequential run.
pub fn cast_rays(raster: &LabeledRaster, isols: &[Isol], max_ray: Option<usize>) -> LinkStore {
    let per_isol: Vec<Vec<ConnectiveLink>> = isols
        .par_iter()
        .map(|isol| {
            let mut found = Vec::new();
            for &p in &isol.edge_pixels {
                for dir in Direction::ALL {
                    if let Some(link) = walk_ray(raster, isol.id, p, dir, max_ray) {
                        found.push(link);
                    }
                }
            }
            found
        })
        .collect();
    LinkStore::from_links(raster.width(), per_isol.into_iter().flatten())
}

impl LinkStore {
    /// Build a store from arbitrary links. `width` is the raster width used to
    /// index pixels.
    pub fn from_links<I>(width: usize, links: I) -> Self
    where
        I: IntoIterator<Item = ConnectiveLink>,
    {
        let mut map: BTreeMap<IsolPair, Vec<ConnectiveLink>> = BTreeMap::new();
        for link in links {
            let pair =
                IsolPair::new(link.origin_isol, link.target_isol).expect("connective link joins two distinct ISOLs");
            map.entry(pair).or_default().push(link);
        }
        let mut neighbours: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        let summaries = map
            .iter()
            .map(|(&pair, links)| {
                neighbours.entry(pair.low()).or_default().insert(pair.high());
                neighbours.entry(pair.high()).or_default().insert(pair.low());
                let mut pixels: Vec<u32> = links
                    .iter()
                    .flat_map(|l| l.interstitial_pixels.iter())
                    .map(|p| (p.y as usize * width + p.x as usize) as u32)
                    .collect();
                pixels.sort_unstable();
                pixels.dedup();
                let summary = PairSummary {
                    pixels,
                    link_count: links.len(),
                    total_length: links.iter().map(ConnectiveLink::len).sum(),
                };
                (pair, summary)
            })
            .collect();
        Self {
            width,
            links: map,
            summaries,
            neighbours,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of ISOL pairs with at least one link.
    pub fn pair_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.values().map(Vec::len).sum()
    }

    /// The set L(a, b); empty when the pair is unconnected.
    pub fn links(&self, a: u32, b: u32) -> &[ConnectiveLink] {
        IsolPair::new(a, b)
            .and_then(|pair| self.links.get(&pair))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn summary(&self, a: u32, b: u32) -> Option<&PairSummary> {
        IsolPair::new(a, b).and_then(|pair| self.summaries.get(&pair))
    }

    /// Connected pairs in ascending order.
    pub fn pairs(&self) -> impl Iterator<Item = (IsolPair, &[ConnectiveLink])> + '_ {
        self.links.iter().map(|(&p, l)| (p, l.as_slice()))
    }

    pub fn summaries(&self) -> impl Iterator<Item = (IsolPair, &PairSummary)> + '_ {
        self.summaries.iter().map(|(&p, s)| (p, s))
    }

    /// ISOLs sharing at least one link with `isol`.
    pub fn neighbours(&self, isol: u32) -> impl Iterator<Item = u32> + '_ {
        self.neighbours.get(&isol).into_iter().flatten().copied()
    }

    pub fn pixel_index(&self, p: PixelCoord) -> u32 {
        (p.y as usize * self.width + p.x as usize) as u32
    }

    pub fn pixel_coord(&self, index: u32) -> PixelCoord {
        let index = index as usize;
        PixelCoord::new((index % self.width) as u32, (index / self.width) as u32)
    }

    /// d(a, b): size of the union of interstitial pixels over L(a, b).
    pub fn pair_distance(&self, a: u32, b: u32) -> Distance {
        match self.summary(a, b) {
            Some(s) => Distance::Finite(s.pixels.len()),
            None => Distance::Infinite,
        }
    }

    /// All links joining a member of `group_a` to a member of `group_b`.
    pub fn cross_links<'a>(
        &'a self,
        group_a: &'a [u32],
        group_b: &'a [u32],
    ) -> impl Iterator<Item = &'a ConnectiveLink> + 'a {
        group_a
            .iter()
            .flat_map(move |&a| group_b.iter().flat_map(move |&b| self.links(a, b).iter()))
    }

    /// Union of interstitial pixels over all cross-group links, or `None` when
    /// no such link exists.
    pub fn group_pixels(&self, group_a: &[u32], group_b: &[u32]) -> Result<Option<BTreeSet<PixelCoord>>, LinkError> {
        check_groups(group_a, group_b)?;
        let mut any = false;
        let mut pixels = BTreeSet::new();
        for link in self.cross_links(group_a, group_b) {
            any = true;
            pixels.extend(link.interstitial_pixels.iter().copied());
        }
        Ok(any.then_some(pixels))
    }

    /// Group connective distance: size of the union of interstitial pixels
    /// over every link between a member of `group_a` and a member of `group_b`.
    pub fn group_distance(&self, group_a: &[u32], group_b: &[u32]) -> Result<Distance, LinkError> {
        Ok(match self.group_pixels(group_a, group_b)? {
            Some(pixels) => Distance::Finite(pixels.len()),
            None => Distance::Infinite,
        })
    }

    /// Debug dump: `origin_isol,target_isol,direction,origin_x,origin_y,length`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "origin_isol",
            "target_isol",
            "direction",
            "origin_x",
            "origin_y",
            "length",
        ])?;
        for links in self.links.values() {
            for l in links {
                w.write_record([
                    l.origin_isol.to_string(),
                    l.target_isol.to_string(),
                    l.direction.to_string(),
                    l.origin_pixel.x.to_string(),
                    l.origin_pixel.y.to_string(),
                    l.len().to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_groups(group_a: &[u32], group_b: &[u32]) -> Result<(), LinkError> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(LinkError::EmptyGroup);
    }
    let a: BTreeSet<u32> = group_a.iter().copied().collect();
    match group_b.iter().find(|b| a.contains(b)) {
        Some(&shared) => Err(LinkError::Overlap(shared)),
        None => Ok(()),
    }
}
