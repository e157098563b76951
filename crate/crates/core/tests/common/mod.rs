//! Brute-force reference implementations and invariant checks shared by
//! integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use crownmerge::{
    agglomerate, cast_rays, compute_params, count_breaks, extract_isols, generate_random, min_max_scale,
    parameter_stream, score_points, trace_all, trim, Hierarchy, LabeledRaster, NodeId, ParamChoice, PathTrace,
};

pub const CORPUS_SIZE: u64 = 120;

/// The oracle corpus: 40x40 scenes with 2 to 12 ISOLs.
pub fn corpus() -> Vec<LabeledRaster> {
    (0..CORPUS_SIZE).map(corpus_scene).collect()
}

pub fn corpus_scene(seed: u64) -> LabeledRaster {
    let n = 2 + (seed % 11) as usize;
    generate_random(seed, n, 40).expect("corpus scene fits").raster
}

type Pixel = (i64, i64);

/// Interstitial pixel unions per unordered ISOL pair, found by walking rays
/// from every boundary pixel directly on the label grid.
pub fn oracle_links(raster: &LabeledRaster) -> BTreeMap<(u32, u32), BTreeSet<Pixel>> {
    let (w, h) = (raster.width() as i64, raster.height() as i64);
    let at = |x: i64, y: i64| -> Option<u32> {
        (x >= 0 && y >= 0 && x < w && y < h).then(|| raster.get(x as usize, y as usize))
    };
    let mut out: BTreeMap<(u32, u32), BTreeSet<Pixel>> = BTreeMap::new();
    for y in 0..h {
        for x in 0..w {
            let label = at(x, y).unwrap();
            if label == 0 {
                continue;
            }
            let boundary = [(0, 1), (1, 0), (0, -1), (-1, 0)]
                .iter()
                .any(|(dx, dy)| at(x + dx, y + dy) != Some(label));
            if !boundary {
                continue;
            }
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let mut path = Vec::new();
                    let (mut cx, mut cy) = (x + dx, y + dy);
                    let hit = loop {
                        match at(cx, cy) {
                            None => break None,
                            Some(0) => path.push((cx, cy)),
                            Some(l) => break (l != label).then_some(l),
                        }
                        cx += dx;
                        cy += dy;
                    };
                    if let Some(other) = hit {
                        let key = (label.min(other), label.max(other));
                        out.entry(key).or_default().extend(path);
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleMerge {
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub distance: usize,
}

/// Agglomerate by exhaustive search, recomputing every group distance from
/// the raw pair unions at every iteration.
pub fn oracle_merges(raster: &LabeledRaster) -> Vec<OracleMerge> {
    let links = oracle_links(raster);
    let mut groups: Vec<BTreeSet<u32>> = raster.isol_ids().into_iter().map(|i| BTreeSet::from([i])).collect();
    let mut merges = Vec::new();
    loop {
        let mut best: Option<((usize, u32, u32), usize, usize)> = None;
        for i in 0..groups.len() {
            for j in i + 1..groups.len() {
                let mut union: BTreeSet<Pixel> = BTreeSet::new();
                let mut linked = false;
                for &a in &groups[i] {
                    for &b in &groups[j] {
                        if let Some(px) = links.get(&(a.min(b), a.max(b))) {
                            linked = true;
                            union.extend(px.iter().copied());
                        }
                    }
                }
                if !linked {
                    continue;
                }
                let (mi, mj) = (*groups[i].first().unwrap(), *groups[j].first().unwrap());
                let key = (union.len(), mi.min(mj), mi.max(mj));
                if best.as_ref().is_none_or(|(k, _, _)| key < *k) {
                    best = Some((key, i, j));
                }
            }
        }
        let Some(((distance, _, _), i, j)) = best else {
            break;
        };
        let b = groups.remove(j);
        let a = groups.remove(i);
        let (mut left, mut right): (Vec<u32>, Vec<u32>) = (a.iter().copied().collect(), b.iter().copied().collect());
        if left[0] > right[0] {
            std::mem::swap(&mut left, &mut right);
        }
        merges.push(OracleMerge { left, right, distance });
        groups.push(a.union(&b).copied().collect());
    }
    merges
}

/// Library merge sequence in the oracle's shape.
pub fn library_merges(raster: &LabeledRaster) -> Vec<OracleMerge> {
    let isols = extract_isols(raster);
    let store = cast_rays(raster, &isols, None);
    agglomerate(&isols, &store)
        .merge_sequence()
        .into_iter()
        .map(|s| OracleMerge {
            left: s.left,
            right: s.right,
            distance: s.distance,
        })
        .collect()
}

/// `{j >= 1 | d[j] > d[k] for all k < j}`, from the raw path values with
/// the singleton start at 0.
pub fn oracle_breakpoints(raw_after_start: &[f64]) -> BTreeSet<usize> {
    let mut raw = vec![0.0];
    raw.extend_from_slice(raw_after_start);
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let f: Vec<f64> = raw
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect();
    let d: Vec<f64> = f.windows(2).map(|w| w[1] - w[0]).collect();
    (1..d.len()).filter(|&j| d[..j].iter().all(|&e| d[j] > e)).collect()
}

/// Walk successors by hand from a singleton.
pub fn oracle_path(h: &Hierarchy, start: NodeId) -> Vec<NodeId> {
    let mut path = vec![start];
    while let Some(next) = h.nodes()[path.last().unwrap().index()].successor {
        path.push(next);
    }
    path
}

/// Compare every singleton trace against the strict-record oracle, using
/// merge distances read straight off the nodes for `a_merge` and the library
/// stream otherwise. Returns the number of mismatching paths.
pub fn termination_mismatches(raster: &LabeledRaster, choice: ParamChoice) -> usize {
    let isols = extract_isols(raster);
    let store = cast_rays(raster, &isols, None);
    let h = agglomerate(&isols, &store);
    let params = compute_params(&h, &isols, &store);
    let stream = parameter_stream(&h, &params, choice);
    let traces = trace_all(&h, &stream).unwrap();
    let mut bad = 0;
    for trace in &traces {
        let path = oracle_path(&h, trace.start);
        let raw: Vec<f64> = path[1..]
            .iter()
            .map(|&n| {
                if choice == ParamChoice::A_MERGE {
                    h.nodes()[n.index()].merge_distance.unwrap() as f64
                } else {
                    stream.get(n).unwrap_or(0.0)
                }
            })
            .collect();
        if path != trace.nodes || oracle_breakpoints(&raw) != trace.breakpoints {
            bad += 1;
        }
    }
    bad
}

fn check(ok: bool, what: &str, failures: &mut Vec<String>) {
    if !ok {
        failures.push(what.to_string());
    }
}

fn translated_score_matches(points: &[[f64; 2]], shift: [f64; 2]) -> bool {
    let a = score_points(points).unwrap();
    let moved: Vec<[f64; 2]> = points.iter().map(|p| [p[0] + shift[0], p[1] + shift[1]]).collect();
    let b = score_points(&moved).unwrap();
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
    close(a.score, b.score)
        && close(a.mean_abs_dev, b.mean_abs_dev)
        && close(a.max_abs_dev, b.max_abs_dev)
        && close(a.sum_abs_dev, b.sum_abs_dev)
        && close(a.ratio_table, b.ratio_table)
}

fn affine_breaks_match(trace: &PathTrace, raw: &[f64], a: f64, b: f64) -> bool {
    let moved: Vec<f64> = raw.iter().map(|v| a * v + b).collect();
    let (_, _, breaks) = crownmerge::differences(&min_max_scale(&moved));
    breaks == trace.breakpoints
}

/// Every named invariant on one scene; returns the names that failed.
pub fn invariant_failures(raster: &LabeledRaster) -> Vec<String> {
    let mut failures = Vec::new();
    let isols = extract_isols(raster);
    let store = cast_rays(raster, &isols, None);
    let ids: Vec<u32> = isols.iter().map(|i| i.id).collect();

    // links: symmetry and union subadditivity
    for &a in &ids {
        for &b in &ids {
            check(
                store.pair_distance(a, b) == store.pair_distance(b, a),
                "distance symmetry",
                &mut failures,
            );
        }
    }
    for w in ids.windows(3) {
        let (a, b, c) = (w[0], w[1], w[2]);
        let ab = store.group_distance(&[a, b], &[c]).unwrap().finite();
        let ac = store.group_distance(&[a], &[c]).unwrap().finite();
        let bc = store.group_distance(&[b], &[c]).unwrap().finite();
        let ok = match (ab, ac, bc) {
            (Some(ab), ac, bc) => ab <= ac.unwrap_or(0) + bc.unwrap_or(0) && ab >= ac.max(bc).unwrap_or(0),
            (None, None, None) => true,
            _ => false,
        };
        check(ok, "union subadditivity", &mut failures);
    }

    // hierarchy well-formedness
    let h = agglomerate(&isols, &store);
    let m = ids.len();
    check(h.len() == 2 * m - h.roots().len(), "node count", &mut failures);
    if h.roots().len() == 1 {
        check(h.len() == 2 * m - 1, "node count 2M-1", &mut failures);
    }
    let root_members: usize = h.roots().iter().map(|&r| h.nodes()[r.index()].members.len()).sum();
    check(root_members == m, "roots partition", &mut failures);
    for node in h.nodes() {
        let shape_ok = match node.ancestors.as_slice() {
            [] => node.members.len() == 1 && node.merge_iteration.is_none(),
            [x, y] => {
                let (x, y) = (&h.nodes()[x.index()], &h.nodes()[y.index()]);
                let mut joined = x.members.clone();
                joined.extend(&y.members);
                joined.sort_unstable();
                x.successor == Some(node.id) && y.successor == Some(node.id) && joined == node.members
            }
            _ => false,
        };
        check(shape_ok, "ancestor structure", &mut failures);
    }

    // params
    let params = compute_params(&h, &isols, &store);
    for node in h.merge_nodes() {
        let p = params.get(node.id).unwrap().merge.unwrap();
        check(p.a_merge <= p.a_cumulative, "a_merge <= a_cumulative", &mut failures);
        if let Some(s) = node.successor {
            let next = params.get(s).unwrap().merge.unwrap();
            check(
                p.a_cumulative <= next.a_cumulative,
                "a_cumulative monotone",
                &mut failures,
            );
        }
    }

    // termination; the affine maps are exact in floating point for each stream
    for (choice, a, b) in [(ParamChoice::A_MERGE, 3.0, 7.0), (ParamChoice::LwOverAcum, 4.0, 0.0)] {
        let stream = parameter_stream(&h, &params, choice);
        let traces = trace_all(&h, &stream).unwrap();
        for t in &traces {
            check(t.cmax.windows(2).all(|w| w[0] <= w[1]), "cmax monotone", &mut failures);
            let raw: Vec<f64> = std::iter::once(0.0)
                .chain(t.nodes[1..].iter().map(|&n| stream.get(n).unwrap_or(0.0)))
                .collect();
            check(affine_breaks_match(t, &raw, a, b), "affine breakpoints", &mut failures);
        }
        let counts = count_breaks(&h, &traces, 0.25).unwrap();
        let per_path: usize = traces.iter().map(|t| t.breakpoints.len()).sum();
        check(counts.total() == per_path, "count conservation", &mut failures);
        let trimmed = trim(&h, &counts);
        for &r in &trimmed.removed {
            if let Some(s) = h.nodes()[r.index()].successor {
                check(trimmed.removed.contains(&s), "trim successor closure", &mut failures);
            }
        }
    }

    // ranking
    for isol in &isols {
        let pts: Vec<[f64; 2]> = isol.pixels.iter().map(|p| [p.x as f64, p.y as f64]).collect();
        let s = score_points(&pts).unwrap();
        check((0.0..=1.0).contains(&s.score), "score in [0, 1]", &mut failures);
        check(
            translated_score_matches(&pts, [13.0, -5.0]),
            "score translation",
            &mut failures,
        );
    }
    for node in h.merge_nodes() {
        let pts: Vec<[f64; 2]> = h
            .group_pixels(node.id, &isols)
            .unwrap()
            .iter()
            .map(|p| [p.x as f64, p.y as f64])
            .collect();
        let s = score_points(&pts).unwrap();
        check((0.0..=1.0).contains(&s.score), "score in [0, 1]", &mut failures);
    }

    failures.sort();
    failures.dedup();
    failures
}
