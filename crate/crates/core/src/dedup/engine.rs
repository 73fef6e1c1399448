//! Tiled all-pairs similarity and the sequential greedy reducer.
//!
//! The upper triangle of the similarity matrix is cut into square tiles.
//! Tiles are scored independently (optionally on a rayon pool) and only
//! pairs above the threshold are kept, so memory is bounded by the tile
//! size plus the number of near-duplicate pairs. Removal decisions are then
//! made by one pass in input order.

use rayon::prelude::*;

use super::cosine::dot;

pub const DEFAULT_TILE_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// Rayon's global pool.
    #[default]
    Parallel,
    /// A dedicated pool with this many threads.
    Threads(usize),
}

/// One removal decided by the reducer: `removed` duplicates the earlier kept
/// record `kept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Decision {
    pub removed: usize,
    pub kept: usize,
    pub similarity: f64,
}

/// Similarity of two unit vectors, clamped against rounding.
pub(crate) fn unit_similarity(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b).clamp(-1.0, 1.0)
}

/// For every `j`, the earlier rows `i < j` whose similarity exceeds the
/// threshold, sorted by `i`.
pub(crate) fn candidate_pairs(
    unit: &[Vec<f64>],
    threshold: f64,
    tile: usize,
    parallelism: Parallelism,
) -> Vec<Vec<(usize, f64)>> {
    let n = unit.len();
    let tile = tile.max(1);
    let blocks = n.div_ceil(tile);
    let tiles: Vec<(usize, usize)> = (0..blocks)
        .flat_map(|row| (row..blocks).map(move |col| (row, col)))
        .collect();

    let score_tile = |&(row, col): &(usize, usize)| -> Vec<(usize, usize, f64)> {
        let rows = row * tile..((row + 1) * tile).min(n);
        let cols = col * tile..((col + 1) * tile).min(n);
        let mut hits = Vec::new();
        for j in cols {
            for i in rows.clone() {
                if i >= j {
                    break;
                }
                let s = unit_similarity(&unit[i], &unit[j]);
                if s > threshold {
                    hits.push((j, i, s));
                }
            }
        }
        hits
    };

    let scored: Vec<Vec<(usize, usize, f64)>> = match parallelism {
        Parallelism::Sequential => tiles.iter().map(score_tile).collect(),
        Parallelism::Parallel => tiles.par_iter().map(score_tile).collect(),
        Parallelism::Threads(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map(|pool| pool.install(|| tiles.par_iter().map(score_tile).collect()))
            .unwrap_or_else(|_| tiles.iter().map(score_tile).collect()),
    };

    let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (j, i, s) in scored.into_iter().flatten() {
        per_row[j].push((i, s));
    }
    for row in &mut per_row {
        row.sort_by_key(|&(i, _)| i);
    }
    per_row
}

/// Greedy forward scan: a record is removed iff some earlier *kept* record
/// exceeds the threshold. Its logged partner is the earliest such record.
pub(crate) fn reduce(candidates: &[Vec<(usize, f64)>]) -> (Vec<bool>, Vec<Decision>) {
    let mut kept = vec![false; candidates.len()];
    let mut decisions = Vec::new();
    for (j, row) in candidates.iter().enumerate() {
        match row.iter().find(|(i, _)| kept[*i]) {
            Some(&(i, s)) => decisions.push(Decision {
                removed: j,
                kept: i,
                similarity: s,
            }),
            None => kept[j] = true,
        }
    }
    (kept, decisions)
}
