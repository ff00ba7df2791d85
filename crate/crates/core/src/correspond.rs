//! Grid partitioning of feature correspondences, region correspondence
//! scores, and selection of the six most representative correspondence pairs.
//!
//! A region's score counts only matches whose endpoints fall in the *same*
//! grid cell of both frames, not the raw per-cell feature count. The six
//! selected points are the highest-confidence match of each of the six
//! best-scoring regions.

use alloc::vec;
use alloc::vec::Vec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CorrespondError {
    #[error("empty correspondence set")]
    EmptyInput,
    #[error("only {available} regions with nonzero score, {needed} needed")]
    InsufficientRegions { available: usize, needed: usize },
    #[error("grid must have at least 6 cells and positive image dimensions")]
    InvalidGrid,
}

/// A pixel-space feature match between frame i and frame j with the matcher's
/// confidence score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p_i: [f64; 2],
    pub p_j: [f64; 2],
    pub confidence: f64,
}

/// Grid layout shared by both frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub image_w: f64,
    pub image_h: f64,
}

impl GridConfig {
    pub fn new(rows: usize, cols: usize, image_w: f64, image_h: f64) -> Result<Self, CorrespondError> {
        if rows * cols < 6 || image_w <= 0.0 || image_h <= 0.0 {
            return Err(CorrespondError::InvalidGrid);
        }
        Ok(GridConfig { rows, cols, image_w, image_h })
    }

    /// Cell of a pixel. Cells are half-open, so a point on an interior
    /// boundary lands in the higher-index cell; the image border is clamped
    /// into the last row/column.
    pub fn cell_of(&self, p: &[f64; 2]) -> (usize, usize) {
        let col = ((p[0] * self.cols as f64 / self.image_w) as usize).min(self.cols - 1);
        let row = ((p[1] * self.rows as f64 / self.image_h) as usize).min(self.rows - 1);
        (row, col)
    }
}

/// Matched-feature count of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionScore {
    pub cell: (usize, usize),
    pub score: usize,
}

/// Assigns every correspondence to exactly one cell by its frame-i pixel.
/// Returned as index lists per cell, row-major.
pub fn grid_partition(
    corrs: &[Correspondence],
    cfg: &GridConfig,
) -> Result<Vec<Vec<usize>>, CorrespondError> {
    if corrs.is_empty() {
        return Err(CorrespondError::EmptyInput);
    }
    let mut cells = vec![Vec::new(); cfg.rows * cfg.cols];
    for (idx, c) in corrs.iter().enumerate() {
        let (row, col) = cfg.cell_of(&c.p_i);
        cells[row * cfg.cols + col].push(idx);
    }
    Ok(cells)
}

/// Indices of correspondences that count towards `cell`'s region score: the
/// frame-i point lies in the cell and the frame-j point lies in the same
/// (row, col) cell of frame j.
pub fn cell_members(cell: (usize, usize), corrs: &[Correspondence], cfg: &GridConfig) -> Vec<usize> {
    corrs
        .iter()
        .enumerate()
        .filter(|(_, c)| cfg.cell_of(&c.p_i) == cell && cfg.cell_of(&c.p_j) == cell)
        .map(|(idx, _)| idx)
        .collect()
}

/// Region correspondence score of one cell.
pub fn correspondence_score(cell: (usize, usize), corrs: &[Correspondence], cfg: &GridConfig) -> usize {
    cell_members(cell, corrs, cfg).len()
}

/// Scores every cell of the grid, row-major.
pub fn score_regions(corrs: &[Correspondence], cfg: &GridConfig) -> Vec<RegionScore> {
    let mut scores = Vec::with_capacity(cfg.rows * cfg.cols);
    for row in 0..cfg.rows {
        for col in 0..cfg.cols {
            scores.push(RegionScore { cell: (row, col), score: correspondence_score((row, col), corrs, cfg) });
        }
    }
    scores
}

/// The `k` distinct cells with the highest scores. Ties rank the
/// lexicographically smaller (row, col) first. Cells with score zero never
/// qualify.
pub fn select_top_regions(scores: &[RegionScore], k: usize) -> Result<Vec<(usize, usize)>, CorrespondError> {
    let mut nonzero: Vec<&RegionScore> = scores.iter().filter(|s| s.score > 0).collect();
    if nonzero.len() < k {
        return Err(CorrespondError::InsufficientRegions { available: nonzero.len(), needed: k });
    }
    nonzero.sort_by(|a, b| b.score.cmp(&a.score).then(a.cell.cmp(&b.cell)));
    Ok(nonzero[..k].iter().map(|s| s.cell).collect())
}

/// Picks, per selected cell, the member correspondence with the highest
/// confidence; confidence ties resolve to the lowest correspondence index.
pub fn select_six_points(
    cells: &[(usize, usize)],
    corrs: &[Correspondence],
    cfg: &GridConfig,
) -> Result<Vec<usize>, CorrespondError> {
    let mut picked = Vec::with_capacity(cells.len());
    for &cell in cells {
        let members = cell_members(cell, corrs, cfg);
        let best = members
            .iter()
            .copied()
            .max_by(|&a, &b| {
                corrs[a]
                    .confidence
                    .partial_cmp(&corrs[b].confidence)
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(b.cmp(&a)) // lower index wins ties
            })
            .ok_or(CorrespondError::InsufficientRegions { available: 0, needed: 1 })?;
        picked.push(best);
    }
    Ok(picked)
}

/// Full selection pipeline: score regions, take the six best, pick one point
/// per region.
///
/// When fewer than six regions have a nonzero score, the selection relaxes to
/// the available regions and fills the remainder with the globally
/// highest-confidence unused correspondences, so degraded inputs still yield
/// six points whenever six distinct correspondences exist.
pub fn select_representative_six(
    corrs: &[Correspondence],
    cfg: &GridConfig,
) -> Result<Vec<usize>, CorrespondError> {
    if corrs.is_empty() {
        return Err(CorrespondError::EmptyInput);
    }
    let scores = score_regions(corrs, cfg);
    let picked = match select_top_regions(&scores, 6) {
        Ok(cells) => select_six_points(&cells, corrs, cfg)?,
        Err(CorrespondError::InsufficientRegions { available, .. }) => {
            if corrs.len() < 6 {
                return Err(CorrespondError::InsufficientRegions { available, needed: 6 });
            }
            let cells = select_top_regions(&scores, available)?;
            let mut picked = select_six_points(&cells, corrs, cfg)?;
            let mut rest: Vec<usize> = (0..corrs.len()).filter(|i| !picked.contains(i)).collect();
            rest.sort_by(|&a, &b| {
                corrs[b]
                    .confidence
                    .partial_cmp(&corrs[a].confidence)
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            picked.extend(rest.into_iter().take(6 - picked.len()));
            if picked.len() < 6 {
                return Err(CorrespondError::InsufficientRegions { available, needed: 6 });
            }
            picked
        }
        Err(e) => return Err(e),
    };
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cfg2x3() -> GridConfig {
        GridConfig::new(2, 3, 100.0, 100.0).unwrap()
    }

    fn c(p_i: [f64; 2], p_j: [f64; 2], confidence: f64) -> Correspondence {
        Correspondence { p_i, p_j, confidence }
    }

    #[test]
    fn corner_point_lands_in_first_cell() {
        let cfg = cfg2x3();
        let corrs = [c([0.0, 0.0], [0.0, 0.0], 1.0)];
        let cells = grid_partition(&corrs, &cfg).unwrap();
        assert_eq!(cells[0], vec![0]);
    }

    #[test]
    fn partition_is_exhaustive() {
        let cfg = GridConfig::new(4, 4, 64.0, 64.0).unwrap();
        let mut corrs = Vec::new();
        for k in 0..97 {
            let u = (k as f64 * 13.7) % 64.0;
            let v = (k as f64 * 7.3) % 64.0;
            corrs.push(c([u, v], [u, v], 0.5));
        }
        let cells = grid_partition(&corrs, &cfg).unwrap();
        let total: usize = cells.iter().map(|v| v.len()).sum();
        assert_eq!(total, corrs.len());
    }

    #[test]
    fn boundary_points_go_to_higher_cell() {
        let cfg = GridConfig::new(2, 4, 100.0, 100.0).unwrap();
        // interior boundaries belong to the right/lower cell
        assert_eq!(cfg.cell_of(&[25.0, 0.0]), (0, 1));
        assert_eq!(cfg.cell_of(&[0.0, 50.0]), (1, 0));
        // the outer border is clamped into the last cell
        assert_eq!(cfg.cell_of(&[100.0, 100.0]), (1, 3));
    }

    #[test]
    fn empty_input_rejected() {
        assert_eq!(grid_partition(&[], &cfg2x3()), Err(CorrespondError::EmptyInput));
    }

    #[test]
    fn score_counts_only_same_cell_matches() {
        let cfg = GridConfig::new(2, 3, 90.0, 60.0).unwrap();
        let corrs = [
            c([10.0, 10.0], [20.0, 15.0], 0.9), // both in (0,0)
            c([12.0, 11.0], [80.0, 50.0], 0.9), // j side elsewhere
            c([40.0, 10.0], [50.0, 20.0], 0.9), // both in (0,1)
        ];
        assert_eq!(correspondence_score((0, 0), &corrs, &cfg), 1);
        assert_eq!(correspondence_score((0, 1), &corrs, &cfg), 1);
        assert_eq!(correspondence_score((1, 1), &corrs, &cfg), 0);
    }

    #[test]
    fn score_on_identity_pair_equals_cell_count() {
        let cfg = GridConfig::new(2, 3, 90.0, 60.0).unwrap();
        let corrs: Vec<_> = (0..10)
            .map(|k| {
                let p = [((k * 17) % 90) as f64, ((k * 29) % 60) as f64];
                c(p, p, 0.5)
            })
            .collect();
        let cells = grid_partition(&corrs, &cfg).unwrap();
        for row in 0..2 {
            for col in 0..3 {
                assert_eq!(correspondence_score((row, col), &corrs, &cfg), cells[row * 3 + col].len());
            }
        }
    }

    #[test]
    fn fig2_style_counting() {
        // Six same-cell matches in cell (1,1) plus strays elsewhere: score 6.
        let cfg = GridConfig::new(2, 3, 90.0, 60.0).unwrap();
        let mut corrs = Vec::new();
        for k in 0..6 {
            let p = [35.0 + k as f64, 35.0 + k as f64];
            corrs.push(c(p, [40.0, 40.0], 0.8));
        }
        corrs.push(c([36.0, 36.0], [5.0, 5.0], 0.9)); // j side leaves the cell
        corrs.push(c([5.0, 36.0], [36.0, 36.0], 0.9));
        assert_eq!(correspondence_score((1, 1), &corrs, &cfg), 6);
    }

    #[test]
    fn top_regions_sorted_with_lexicographic_ties() {
        let scores = [
            RegionScore { cell: (0, 0), score: 3 },
            RegionScore { cell: (0, 1), score: 7 },
            RegionScore { cell: (1, 0), score: 7 },
            RegionScore { cell: (1, 1), score: 1 },
        ];
        let top = select_top_regions(&scores, 3).unwrap();
        assert_eq!(top, vec![(0, 1), (1, 0), (0, 0)]);
    }

    #[test]
    fn top_regions_need_enough_nonzero() {
        let scores = [
            RegionScore { cell: (0, 0), score: 2 },
            RegionScore { cell: (0, 1), score: 0 },
        ];
        assert_eq!(
            select_top_regions(&scores, 2),
            Err(CorrespondError::InsufficientRegions { available: 1, needed: 2 })
        );
    }

    #[test]
    fn top_regions_matches_full_sort_oracle() {
        // Brute-force oracle: sort everything, take the prefix.
        let mut scores = Vec::new();
        for row in 0..4 {
            for col in 0..4 {
                scores.push(RegionScore { cell: (row, col), score: (row * 7 + col * 13) % 5 });
            }
        }
        let k = 6;
        let got = select_top_regions(&scores, k).unwrap();
        let mut oracle: Vec<&RegionScore> = scores.iter().filter(|s| s.score > 0).collect();
        oracle.sort_by(|a, b| b.score.cmp(&a.score).then(a.cell.cmp(&b.cell)));
        let oracle: Vec<(usize, usize)> = oracle[..k].iter().map(|s| s.cell).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn six_points_prefer_confidence_then_index() {
        let cfg = GridConfig::new(2, 3, 60.0, 40.0).unwrap();
        // Cell (0,0) holds three members with a confidence tie at 0.9.
        let corrs = [
            c([1.0, 1.0], [2.0, 2.0], 0.9),
            c([3.0, 3.0], [4.0, 4.0], 0.9),
            c([5.0, 5.0], [6.0, 6.0], 0.3),
            c([25.0, 5.0], [25.0, 6.0], 0.7), // cell (0,1)
        ];
        let picked = select_six_points(&[(0, 0), (0, 1)], &corrs, &cfg).unwrap();
        assert_eq!(picked, vec![0, 3]);
    }

    #[test]
    fn six_points_match_per_cell_scan_oracle() {
        let cfg = GridConfig::new(3, 3, 90.0, 90.0).unwrap();
        let mut corrs = Vec::new();
        let mut state = 1u64;
        for k in 0..60u32 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = ((state >> 33) % 90) as f64;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let v = ((state >> 33) % 90) as f64;
            corrs.push(c([u, v], [u, v], ((k * 11) % 100) as f64 / 100.0));
        }
        let cells = select_top_regions(&score_regions(&corrs, &cfg), 6).unwrap();
        let picked = select_six_points(&cells, &corrs, &cfg).unwrap();
        for (cell, &idx) in cells.iter().zip(&picked) {
            let members = cell_members(*cell, &corrs, &cfg);
            assert!(members.contains(&idx));
            for m in members {
                assert!(corrs[m].confidence <= corrs[idx].confidence || m == idx);
            }
        }
        // selected cells pairwise distinct
        for a in 0..cells.len() {
            for b in a + 1..cells.len() {
                assert_ne!(cells[a], cells[b]);
            }
        }
    }

    #[test]
    fn fallback_fills_from_global_pool() {
        let cfg = GridConfig::new(2, 3, 60.0, 40.0).unwrap();
        // All ten matches collapse into two regions only.
        let mut corrs = Vec::new();
        for k in 0..5 {
            corrs.push(c([1.0 + k as f64, 1.0], [1.0 + k as f64, 1.0], 0.1 * k as f64));
            corrs.push(c([25.0 + k as f64, 1.0], [25.0 + k as f64, 1.0], 0.05 * k as f64));
        }
        let picked = select_representative_six(&corrs, &cfg).unwrap();
        assert_eq!(picked.len(), 6);
        let mut unique = picked.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 6);
    }
}
