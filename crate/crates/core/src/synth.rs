//! Synthetic labeled scenes with known groupings.
//!
//! All geometry is integer; randomness comes from ChaCha8 so a seed gives the
//! same raster on every platform.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::LabeledRaster;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("geometry does not fit in a {size}x{size} raster: {reason}")]
    DoesNotFit { size: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthScene {
    pub raster: LabeledRaster,
    pub truth_groups: Vec<Vec<u32>>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Truth {
    seed: u64,
    truth_groups: Vec<Vec<u32>>,
}

impl SynthScene {
    /// JSON sidecar `{"seed": .., "truth_groups": [[..], ..]}`.
    pub fn write_truth<W: Write>(&self, out: W) -> serde_json::Result<()> {
        serde_json::to_writer_pretty(
            out,
            &Truth {
                seed: self.seed,
                truth_groups: self.truth_groups.clone(),
            },
        )
    }

    pub fn read_truth(json: &str) -> serde_json::Result<(u64, Vec<Vec<u32>>)> {
        let t: Truth = serde_json::from_str(json)?;
        Ok((t.seed, t.truth_groups))
    }
}

/// Axis-aligned filled rectangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    fn right(&self) -> usize {
        self.x + self.w
    }

    fn bottom(&self) -> usize {
        self.y + self.h
    }

    fn intersects(&self, o: &Rect) -> bool {
        self.x < o.right() && o.x < self.right() && self.y < o.bottom() && o.y < self.bottom()
    }
}

/// A rectangle or a plus made of two crossing bars.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Blob {
    Rect(Rect),
    Plus { horizontal: Rect, vertical: Rect },
}

impl Blob {
    fn bars(&self) -> Vec<Rect> {
        match *self {
            Blob::Rect(r) => vec![r],
            Blob::Plus { horizontal, vertical } => vec![horizontal, vertical],
        }
    }

    fn overlaps(&self, other: &Blob) -> bool {
        self.bars().iter().any(|a| other.bars().iter().any(|b| a.intersects(b)))
    }

    fn fits(&self, size: usize) -> bool {
        self.bars().iter().all(|r| r.right() <= size && r.bottom() <= size)
    }
}

fn paint(size: usize, blobs: &[Blob]) -> LabeledRaster {
    let mut raster = LabeledRaster::zeros(size, size).expect("size is positive");
    for (i, blob) in blobs.iter().enumerate() {
        for r in blob.bars() {
            for y in r.y..r.bottom() {
                for x in r.x..r.right() {
                    raster.set(x, y, i as u32 + 1);
                }
            }
        }
    }
    raster
}

const CORNER: usize = 8;
const MID: usize = 6;

/// Cells of a rectangular frame of `k` blobs, clockwise from the top-left
/// corner, with its top-left at the origin. Corner cells are `CORNER`
/// square, the rest `MID` long and `CORNER` thick, separated by `gap`.
fn frame(k: usize, gap: usize) -> (Vec<Rect>, usize, usize) {
    let even = k + k % 2;
    let sum = even / 2 + 2;
    let ny = sum / 2;
    let nx = sum - ny;
    let offsets = |n: usize| -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(n);
        let mut at = 0;
        for i in 0..n {
            let len = if i == 0 || i + 1 == n { CORNER } else { MID };
            out.push((at, len));
            at += len + gap;
        }
        out
    };
    let cols = offsets(nx);
    let rows = offsets(ny);
    let width = cols[nx - 1].0 + cols[nx - 1].1;
    let height = rows[ny - 1].0 + rows[ny - 1].1;

    let mut ring: Vec<(usize, usize)> = Vec::with_capacity(even);
    ring.extend((0..nx).map(|i| (i, 0)));
    ring.extend((1..ny).map(|j| (nx - 1, j)));
    ring.extend((0..nx - 1).rev().map(|i| (i, ny - 1)));
    ring.extend((1..ny - 1).rev().map(|j| (0, j)));

    let mut cells: Vec<Rect> = ring
        .iter()
        .map(|&(i, j)| Rect::new(cols[i].0, rows[j].0, cols[i].1, rows[j].1))
        .collect();
    if k % 2 == 1 {
        // fuse the first two cells of the top row
        let b = cells.remove(1);
        cells[0].w = b.right() - cells[0].x;
    }
    (cells, width, height)
}

/// `k` blobs forming a closed frame with `gap`-pixel valleys between
/// neighbours, plus up to four larger outliers.
///
/// Outliers are laid out as up to two pairs. The first joins the ring through
/// a thin bundle of long links, the second through a broad one; each pair is
/// itself joined by a short straight bundle. Link areas are sized from the
/// background area enclosed by the frame so the ring completes before any
/// outlier attaches.
pub fn generate_ring(seed: u64, k: usize, gap: usize, outliers: usize, size: usize) -> Result<SynthScene, SynthError> {
    if k < 3 {
        return Err(SynthError::InvalidArgument(format!(
            "ring needs at least 3 blobs, got {k}"
        )));
    }
    if gap == 0 {
        return Err(SynthError::InvalidArgument("gap must be positive".into()));
    }
    if outliers > 4 {
        return Err(SynthError::InvalidArgument(format!(
            "at most 4 outliers are supported, got {outliers}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fit = |reason: &str| SynthError::DoesNotFit {
        size,
        reason: reason.to_string(),
    };

    let (cells, fw, fh) = frame(k, gap);
    let ring_area: usize = cells.iter().map(|c| c.w * c.h).sum();
    // every ring link pixel is background inside the frame
    let enclosed = fw * fh - ring_area;

    let ox = 4 + rng.gen_range(0..=4);
    let oy = 4 + rng.gen_range(0..=4);
    let mut blobs: Vec<Blob> = cells
        .iter()
        .map(|c| Blob::Rect(Rect::new(c.x + ox, c.y + oy, c.w, c.h)))
        .collect();

    if outliers > 0 {
        // first outlier: its top `rows` rows face the frame's bottom rows;
        // fewer, longer links where there is room
        let jitter = rng.gen_range(0..=4);
        let pair_w = 10 + rng.gen_range(0..=1);
        let pair_h = 14;
        let pair_gap = pair_w + 2;
        let near = (2 * enclosed + 40).max(3 * pair_w * pair_gap + 60);
        let (rows, reach) = (4..=CORNER)
            .map(|rows| (rows, near.div_ceil(rows) + jitter))
            .find(|&(_, reach)| ox + fw + reach + pair_w <= size)
            .ok_or_else(|| fit("first outlier"))?;
        let o1 = Rect::new(ox + fw + reach, oy + fh - rows, pair_w, pair_h);
        if !Blob::Rect(o1).fits(size) {
            return Err(fit("first outlier"));
        }
        blobs.push(Blob::Rect(o1));
        if outliers > 1 {
            let o2 = Rect::new(o1.x, o1.bottom() + pair_gap, pair_w, pair_h);
            if !Blob::Rect(o2).fits(size) {
                return Err(fit("second outlier"));
            }
            blobs.push(Blob::Rect(o2));
        }
        if outliers > 2 {
            // broad bundle straight below the frame
            let s_area = rows * reach;
            let below = (2 * s_area + 2 * (s_area / 3) + 80).div_ceil(fw.saturating_sub(2 * gap).max(1));
            let h3 = 12;
            let o3 = Rect::new(ox, oy + fh + below + rng.gen_range(0..=3), fw, h3);
            if !Blob::Rect(o3).fits(size) {
                return Err(fit("third outlier"));
            }
            blobs.push(Blob::Rect(o3));
            if outliers > 3 {
                let o4 = Rect::new(ox, o3.bottom() + 2 * h3 - 4, fw, h3);
                if !Blob::Rect(o4).fits(size) {
                    return Err(fit("fourth outlier"));
                }
                blobs.push(Blob::Rect(o4));
            }
        }
    }

    let raster = paint(size, &blobs);
    let mut truth_groups = vec![(1..=k as u32).collect::<Vec<u32>>()];
    truth_groups.extend((k as u32 + 1..=(k + outliers) as u32).map(|id| vec![id]));
    Ok(SynthScene {
        raster,
        truth_groups,
        seed,
    })
}

const RANDOM_RETRIES: usize = 2000;

/// `n` non-overlapping random rectangles and plus shapes, each its own truth
/// group.
pub fn generate_random(seed: u64, n: usize, size: usize) -> Result<SynthScene, SynthError> {
    if n == 0 {
        return Err(SynthError::InvalidArgument("need at least one ISOL".into()));
    }
    if size == 0 {
        return Err(SynthError::InvalidArgument("size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_extent = (size / 5).max(1);
    let mut blobs: Vec<Blob> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut placed = false;
        for _ in 0..RANDOM_RETRIES {
            let blob = random_blob(&mut rng, size, max_extent);
            if blob.fits(size) && blobs.iter().all(|b| !b.overlaps(&blob)) {
                blobs.push(blob);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SynthError::DoesNotFit {
                size,
                reason: format!("could not place blob {} of {n}", blobs.len() + 1),
            });
        }
    }
    Ok(SynthScene {
        raster: paint(size, &blobs),
        truth_groups: (1..=n as u32).map(|id| vec![id]).collect(),
        seed,
    })
}

fn random_blob(rng: &mut ChaCha8Rng, size: usize, max_extent: usize) -> Blob {
    if max_extent >= 3 && rng.gen_bool(0.3) {
        let arm = rng.gen_range(1..=(max_extent / 3).max(1));
        let thick = rng.gen_range(1..=(max_extent / 3).max(1));
        let extent = 2 * arm + thick;
        let x = rng.gen_range(0..=size.saturating_sub(extent));
        let y = rng.gen_range(0..=size.saturating_sub(extent));
        Blob::Plus {
            horizontal: Rect::new(x, y + arm, extent, thick),
            vertical: Rect::new(x + arm, y, thick, extent),
        }
    } else {
        let w = rng.gen_range(1..=max_extent);
        let h = rng.gen_range(1..=max_extent);
        let x = rng.gen_range(0..=size - w.min(size));
        let y = rng.gen_range(0..=size - h.min(size));
        Blob::Rect(Rect::new(x, y, w, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::links::cast_rays;
    use crate::raster::extract_isols;

    fn all_ids(scene: &SynthScene) -> Vec<u32> {
        let mut ids: Vec<u32> = scene.truth_groups.iter().flatten().copied().collect();
        ids.sort_unstable();
        ids
    }

    #[test]
    fn ring_with_three_outliers() {
        let scene = generate_ring(0, 8, 2, 3, 128).unwrap();
        assert_eq!(scene.raster.isol_ids(), (1..=11).collect::<Vec<u32>>());
        assert_eq!(all_ids(&scene), scene.raster.isol_ids());

        let isols = extract_isols(&scene.raster);
        let store = cast_rays(&scene.raster, &isols, None);
        let ring = &scene.truth_groups[0];
        let intra = ring
            .iter()
            .flat_map(|&a| ring.iter().map(move |&b| (a, b)))
            .filter_map(|(a, b)| (a < b).then(|| store.pair_distance(a, b).finite()).flatten())
            .max()
            .unwrap();
        let cross = ring
            .iter()
            .flat_map(|&a| (9..=11).map(move |o| (a, o)))
            .filter_map(|(a, o)| store.pair_distance(a, o).finite())
            .min()
            .unwrap();
        assert!(intra * 3 < cross, "intra {intra} cross {cross}");
    }

    #[test]
    fn ring_without_outliers_is_one_group() {
        let scene = generate_ring(5, 8, 2, 0, 64).unwrap();
        assert_eq!(scene.truth_groups, vec![(1..=8).collect::<Vec<u32>>()]);
    }

    #[test]
    fn ring_sizes() {
        for k in 3..=14 {
            let scene = generate_ring(1, k, 2, 0, 96).unwrap();
            assert_eq!(scene.raster.isol_ids().len(), k, "k = {k}");
            assert_eq!(extract_isols(&scene.raster).len(), k);
        }
    }

    #[test]
    fn ring_is_deterministic() {
        assert_eq!(generate_ring(9, 8, 2, 4, 192), generate_ring(9, 8, 2, 4, 192));
    }

    #[test]
    fn ring_errors() {
        assert!(matches!(
            generate_ring(0, 2, 2, 0, 64),
            Err(SynthError::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_ring(0, 8, 0, 0, 64),
            Err(SynthError::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_ring(0, 8, 2, 5, 192),
            Err(SynthError::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_ring(0, 8, 2, 4, 60),
            Err(SynthError::DoesNotFit { .. })
        ));
    }

    #[test]
    fn random_single() {
        let scene = generate_random(3, 1, 40).unwrap();
        assert_eq!(scene.raster.isol_ids(), vec![1]);
        assert_eq!(scene.truth_groups, vec![vec![1]]);
    }

    #[test]
    fn random_twelve() {
        let scene = generate_random(11, 12, 40).unwrap();
        assert_eq!(scene.raster.isol_ids(), (1..=12).collect::<Vec<u32>>());
    }

    #[test]
    fn random_blobs_are_connected_and_disjoint() {
        for seed in 0..100 {
            let scene = generate_random(seed, 12, 40).unwrap();
            let isols = extract_isols(&scene.raster);
            assert_eq!(isols.len(), 12);
            for isol in &isols {
                assert!(is_four_connected(&isol.pixels), "seed {seed} isol {}", isol.id);
            }
        }
    }

    fn is_four_connected(pixels: &[crate::raster::PixelCoord]) -> bool {
        use std::collections::BTreeSet;
        let set: BTreeSet<(u32, u32)> = pixels.iter().map(|p| (p.x, p.y)).collect();
        let mut seen = BTreeSet::new();
        let mut stack = vec![*set.iter().next().unwrap()];
        while let Some((x, y)) = stack.pop() {
            if !seen.insert((x, y)) {
                continue;
            }
            for (dx, dy) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                let n = ((x as i64 + dx) as u32, (y as i64 + dy) as u32);
                if set.contains(&n) && !seen.contains(&n) {
                    stack.push(n);
                }
            }
        }
        seen.len() == set.len()
    }

    #[test]
    fn random_errors() {
        assert!(matches!(generate_random(0, 0, 40), Err(SynthError::InvalidArgument(_))));
        assert!(matches!(
            generate_random(0, 500, 10),
            Err(SynthError::DoesNotFit { .. })
        ));
    }

    #[test]
    fn truth_sidecar_round_trip() {
        let scene = generate_ring(4, 8, 2, 2, 192).unwrap();
        let mut buf = Vec::new();
        scene.write_truth(&mut buf).unwrap();
        let (seed, groups) = SynthScene::read_truth(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(seed, 4);
        assert_eq!(groups, scene.truth_groups);
    }
}
