//! Seeded scene and episode generation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::geometry::{Episode, Point2, Pose2D};
use crate::grid::{Cell, CellIndex, OccupancyGrid};
use crate::rng::SplitMix64;
use crate::runner::geodesic_length;

use super::EvalError;

/// Minimum distance from a start or goal to any non-free cell.
pub const MIN_CLEARANCE: f64 = 0.2;
/// Minimum geodesic distance between start and goal.
pub const MIN_GEODESIC: f64 = 1.0;
pub const MAX_DENSITY: f64 = 0.45;
pub const RESOLUTION: f64 = 0.1;
const BODY_RADIUS: f64 = 0.1;
const MAX_TRIES_PER_EPISODE: usize = 5000;

/// Scenes keyed by id plus the episodes that reference them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Suite {
    pub scenes: BTreeMap<String, OccupancyGrid>,
    pub episodes: Vec<Episode>,
}

impl Suite {
    pub fn scene_of(&self, episode: &Episode) -> Result<&OccupancyGrid, EvalError> {
        self.scenes.get(&episode.scene_id).ok_or_else(|| {
            EvalError::Suite(format!("episode {} names unknown scene {}", episode.episode_id, episode.scene_id))
        })
    }

    /// Appends another suite. Scene ids must not collide.
    pub fn extend(&mut self, other: Suite) -> Result<(), EvalError> {
        for (id, g) in other.scenes {
            if self.scenes.insert(id.clone(), g).is_some() {
                return Err(EvalError::Suite(format!("duplicate scene id {id}")));
            }
        }
        self.episodes.extend(other.episodes);
        Ok(())
    }
}

/// Distance from `p` to the nearest non-free cell or the grid edge.
pub fn clearance(grid: &OccupancyGrid, p: Point2) -> f64 {
    let res = grid.resolution();
    let local = grid.to_local(p);
    let mut best =
        local.x.min(local.y).min(grid.width() as f64 * res - local.x).min(grid.height() as f64 * res - local.y);
    for (c, cell) in grid.iter_cells() {
        if cell == Cell::Free {
            continue;
        }
        let (x0, y0) = (c.col as f64 * res, c.row as f64 * res);
        let dx = (x0 - local.x).max(0.0).max(local.x - (x0 + res));
        let dy = (y0 - local.y).max(0.0).max(local.y - (y0 + res));
        best = best.min(dx.hypot(dy));
    }
    best
}

/// Square scene with an occupied border and random rectangular obstacles
/// covering about `density` of the interior. Rectangles that would split
/// the traversable space are skipped, so every pair of traversable cells
/// stays connected.
pub fn generate_scene(rng: &mut SplitMix64, size: usize, density: f64) -> OccupancyGrid {
    let origin = Pose2D::new(0.0, 0.0, 0.0).expect("finite");
    let mut g = OccupancyGrid::filled(size, size, RESOLUTION, origin, Cell::Free).expect("valid size");
    for i in 0..size {
        for c in [CellIndex::new(i, 0), CellIndex::new(i, size - 1), CellIndex::new(0, i), CellIndex::new(size - 1, i)]
        {
            g.set(c, Cell::Occupied);
        }
    }
    let interior = size.saturating_sub(2);
    let target = (density * (interior * interior) as f64).round() as usize;
    let max_side = (size / 6).max(1) as u64;
    let mut filled = 0;
    let mut attempts = 0;
    while filled < target && attempts < 20_000 && interior > 0 {
        attempts += 1;
        let w = 1 + rng.below(max_side) as usize;
        let h = 1 + rng.below(max_side) as usize;
        let col = 1 + rng.below(interior as u64) as usize;
        let row = 1 + rng.below(interior as u64) as usize;
        let mut placed = Vec::new();
        for r in row..(row + h).min(size - 1) {
            for c in col..(col + w).min(size - 1) {
                let cell = CellIndex::new(c, r);
                if filled + placed.len() < target && g.get(cell) == Some(Cell::Free) {
                    g.set(cell, Cell::Occupied);
                    placed.push(cell);
                }
            }
        }
        if traversable_connected(&g) {
            filled += placed.len();
        } else {
            for cell in placed {
                g.set(cell, Cell::Free);
            }
        }
    }
    g
}

/// Whether the cells a body of radius one cell can occupy form one
/// 8-connected region (no corner cutting). Such a cell is free with free
/// orthogonal neighbours.
fn traversable_connected(g: &OccupancyGrid) -> bool {
    let (w, h) = (g.width() as i64, g.height() as i64);
    let free = |c: i64, r: i64| g.get_signed(c, r) == Some(Cell::Free);
    let ok = |c: i64, r: i64| free(c, r) && free(c - 1, r) && free(c + 1, r) && free(c, r - 1) && free(c, r + 1);
    let cells: Vec<(i64, i64)> = (0..h).flat_map(|r| (0..w).map(move |c| (c, r))).filter(|&(c, r)| ok(c, r)).collect();
    let Some(&first) = cells.first() else { return true };
    let mut seen = vec![false; (w * h) as usize];
    let at = |c: i64, r: i64| (r * w + c) as usize;
    seen[at(first.0, first.1)] = true;
    let mut stack = vec![first];
    let mut reached = 1;
    while let Some((c, r)) = stack.pop() {
        for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let (nc, nr) = (c + dc, r + dr);
            if !ok(nc, nr) || seen[at(nc, nr)] {
                continue;
            }
            if dc != 0 && dr != 0 && !(ok(c + dc, r) && ok(c, r + dr)) {
                continue;
            }
            seen[at(nc, nr)] = true;
            reached += 1;
            stack.push((nc, nr));
        }
    }
    reached == cells.len()
}

/// Samples `n` episodes on `grid` with clearance, connectivity and minimum
/// geodesic length.
pub fn sample_episodes(
    rng: &mut SplitMix64,
    grid: &OccupancyGrid,
    scene_id: &str,
    n: usize,
) -> Result<Vec<Episode>, EvalError> {
    let candidates: Vec<Point2> = grid
        .iter_cells()
        .filter(|&(_, cell)| cell == Cell::Free)
        .map(|(c, _)| grid.cell_center(c))
        .filter(|&p| clearance(grid, p) >= MIN_CLEARANCE)
        .collect();
    let mut out = Vec::with_capacity(n);
    let mut tries = 0;
    while out.len() < n {
        tries += 1;
        if tries > MAX_TRIES_PER_EPISODE * n.max(1) || candidates.len() < 2 {
            return Err(EvalError::Generation(format!(
                "scene {scene_id}: placed {} of {n} episodes before giving up",
                out.len()
            )));
        }
        let s = candidates[rng.below(candidates.len() as u64) as usize];
        let g = candidates[rng.below(candidates.len() as u64) as usize];
        let heading = rng.range_f64(-PI, PI);
        match geodesic_length(grid, s, g, BODY_RADIUS) {
            Ok(d) if d >= MIN_GEODESIC => {}
            _ => continue,
        }
        out.push(Episode {
            episode_id: format!("{scene_id}_ep{:02}", out.len()),
            scene_id: scene_id.to_string(),
            start: Pose2D::new(s.x, s.y, heading).expect("finite"),
            goal: g,
        });
    }
    Ok(out)
}

/// Deterministic suite: `n_scenes` random scenes with `n_episodes` each.
pub fn generate_episode_suite(
    seed: u64,
    n_scenes: usize,
    n_episodes: usize,
    scene_size: usize,
    obstacle_density: f64,
) -> Result<Suite, EvalError> {
    if !(0.0..=MAX_DENSITY).contains(&obstacle_density) {
        return Err(EvalError::Generation(format!("obstacle density {obstacle_density} outside [0, {MAX_DENSITY}]")));
    }
    if scene_size < 5 {
        return Err(EvalError::Generation(format!("scene size {scene_size} is below 5 cells")));
    }
    let mut master = SplitMix64::new(seed);
    let mut suite = Suite::default();
    for i in 0..n_scenes {
        let mut rng = SplitMix64::new(master.next_u64());
        let id = format!("scene_{i:03}");
        let grid = generate_scene(&mut rng, scene_size, obstacle_density);
        let eps = sample_episodes(&mut rng, &grid, &id, n_episodes)?;
        suite.scenes.insert(id, grid);
        suite.episodes.extend(eps);
    }
    Ok(suite)
}
