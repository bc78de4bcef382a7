//! Costmap inflation, A* global planning and a pure-pursuit controller.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use thiserror::Error;

use super::LaserScan;
use crate::geometry::{wrap, Point2, Pose2D, VelocityCommand};
use crate::grid::{Cell, CellIndex, OccupancyGrid};
use crate::sim::raycast;

/// Marks every free cell whose centre lies within `radius` of a non-free
/// cell centre as occupied. Unknown cells act as obstacles and are kept.
pub fn inflate_map(grid: &OccupancyGrid, radius: f64) -> OccupancyGrid {
    let mut out = grid.clone();
    if radius <= 0.0 {
        return out;
    }
    let rc = radius / grid.resolution();
    let limit = rc * rc + 1e-9;
    let k = rc.floor() as i64;
    let (w, h) = (grid.width() as i64, grid.height() as i64);
    for (c, cell) in grid.iter_cells() {
        if cell == Cell::Free {
            continue;
        }
        for dr in -k..=k {
            for dc in -k..=k {
                if (dc * dc + dr * dr) as f64 > limit {
                    continue;
                }
                let (col, row) = (c.col as i64 + dc, c.row as i64 + dr);
                if col < 0 || row < 0 || col >= w || row >= h {
                    continue;
                }
                let idx = CellIndex::new(col as usize, row as usize);
                if out.get(idx) == Some(Cell::Free) {
                    out.set(idx, Cell::Occupied);
                }
            }
        }
    }
    out
}

/// Exact 8-connected path cost as counts of orthogonal and diagonal moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PathCost {
    pub straight: u32,
    pub diagonal: u32,
}

impl PathCost {
    /// Cost in cell units.
    pub fn cells(&self) -> f64 {
        self.straight as f64 + self.diagonal as f64 * SQRT_2
    }

    pub fn metres(&self, resolution: f64) -> f64 {
        self.cells() * resolution
    }

    fn add(self, diagonal: bool) -> Self {
        if diagonal {
            Self { straight: self.straight, diagonal: self.diagonal + 1 }
        } else {
            Self { straight: self.straight + 1, diagonal: self.diagonal }
        }
    }
}

impl PartialOrd for PathCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PathCost {
    /// Exact comparison of `a + b·√2` for integers `a`, `b`.
    fn cmp(&self, other: &Self) -> Ordering {
        let da = self.straight as i64 - other.straight as i64;
        let db = self.diagonal as i64 - other.diagonal as i64;
        // sign of da + db·√2
        match (da.signum(), db.signum()) {
            (0, 0) => Ordering::Equal,
            (a, b) if a >= 0 && b >= 0 => Ordering::Greater,
            (a, b) if a <= 0 && b <= 0 => Ordering::Less,
            (a, _) => {
                // opposite signs: compare da² with 2·db²
                let lhs = da * da;
                let rhs = 2 * db * db;
                let mag = lhs.cmp(&rhs);
                if a > 0 {
                    mag
                } else {
                    mag.reverse()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("{0} lies outside the map")]
    OutOfMap(&'static str),
    #[error("start cell is blocked")]
    StartBlocked,
    #[error("goal cell is blocked")]
    GoalBlocked,
    #[error("goal is unreachable from start")]
    NoPath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub cells: Vec<CellIndex>,
    /// World-frame cell centres.
    pub waypoints: Vec<Point2>,
    pub cost: PathCost,
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    h: f64,
    index: usize,
    g: PathCost,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // reversed so the max-heap pops the smallest (f, h, index)
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.h.total_cmp(&self.h)).then(other.index.cmp(&self.index))
    }
}

const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Shortest 8-connected path between the cells containing `start` and
/// `goal`. Only free cells are traversable and diagonal moves may not cut a
/// blocked corner.
pub fn plan_global(map: &OccupancyGrid, start: Point2, goal: Point2) -> Result<Path, PlanError> {
    let s = map.world_to_cell(start.x, start.y).ok_or(PlanError::OutOfMap("start"))?;
    let g = map.world_to_cell(goal.x, goal.y).ok_or(PlanError::OutOfMap("goal"))?;
    if map.get(s) != Some(Cell::Free) {
        return Err(PlanError::StartBlocked);
    }
    if map.get(g) != Some(Cell::Free) {
        return Err(PlanError::GoalBlocked);
    }
    let (w, h) = (map.width(), map.height());
    let free = |col: i64, row: i64| map.get_signed(col, row) == Some(Cell::Free);
    let heuristic = |i: usize| ((i % w) as f64 - g.col as f64).hypot((i / w) as f64 - g.row as f64);
    let start_i = map.index_of(s);
    let goal_i = map.index_of(g);
    let mut best: Vec<Option<PathCost>> = vec![None; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut heap = BinaryHeap::new();
    best[start_i] = Some(PathCost::default());
    let h0 = heuristic(start_i);
    heap.push(Open { f: h0, h: h0, index: start_i, g: PathCost::default() });
    while let Some(open) = heap.pop() {
        if best[open.index] != Some(open.g) {
            continue;
        }
        if open.index == goal_i {
            let mut cells = vec![g];
            let mut i = goal_i;
            while i != start_i {
                i = parent[i];
                cells.push(CellIndex::new(i % w, i / w));
            }
            cells.reverse();
            let waypoints = cells.iter().map(|&c| map.cell_center(c)).collect();
            return Ok(Path { cells, waypoints, cost: open.g });
        }
        let (col, row) = ((open.index % w) as i64, (open.index / w) as i64);
        for (dc, dr) in MOVES {
            let (nc, nr) = (col + dc, row + dr);
            if !free(nc, nr) {
                continue;
            }
            let diagonal = dc != 0 && dr != 0;
            if diagonal && !(free(col + dc, row) && free(col, row + dr)) {
                continue;
            }
            let ni = nr as usize * w + nc as usize;
            let ng = open.g.add(diagonal);
            if best[ni].is_some_and(|b| b <= ng) {
                continue;
            }
            best[ni] = Some(ng);
            parent[ni] = open.index;
            let nh = heuristic(ni);
            heap.push(Open { f: ng.cells() + nh, h: nh, index: ni, g: ng });
        }
    }
    Err(PlanError::NoPath)
}

/// Pure-pursuit parameters. Speeds in m/s, yaw rates in deg/s, distances in
/// metres.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerParams {
    pub lookahead: f64,
    pub v_max: f64,
    /// Yaw gain in 1/s applied to the heading error.
    pub k_ang: f64,
    pub w_max_deg: f64,
    /// Forward clearance at which linear speed reaches zero.
    pub stop_distance: f64,
    /// Forward clearance below which linear speed starts ramping down.
    pub slow_distance: f64,
    pub waypoint_radius: f64,
    /// Half-width of the corridor checked for obstacles ahead.
    pub body_radius: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            lookahead: 0.3,
            v_max: 0.25,
            k_ang: 2.0,
            w_max_deg: 30.0,
            stop_distance: 0.15,
            slow_distance: 0.4,
            waypoint_radius: 0.1,
            body_radius: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    pub global_path: Vec<Point2>,
    pub current_waypoint_index: usize,
    /// Inflated planning map.
    pub map: OccupancyGrid,
}

impl PlannerState {
    pub fn new(path: &Path, map: OccupancyGrid) -> Self {
        Self { global_path: path.waypoints.clone(), current_waypoint_index: 0, map }
    }

    pub fn final_waypoint(&self) -> Option<Point2> {
        self.global_path.last().copied()
    }
}

fn visible(map: &OccupancyGrid, from: Point2, to: Point2) -> bool {
    let d = from.distance(to);
    let bearing = (to.y - from.y).atan2(to.x - from.x);
    raycast(map, from, bearing, d, 0.0).is_ok_and(|r| r >= d)
}

/// One control decision toward the lookahead waypoint.
pub fn classical_controller(
    pose: &Pose2D,
    planner: &mut PlannerState,
    scan: &LaserScan,
    params: &ControllerParams,
) -> VelocityCommand {
    let path = &planner.global_path;
    if path.is_empty() {
        return VelocityCommand::ZERO;
    }
    let here = pose.position();
    let last = path.len() - 1;
    let mut idx = planner.current_waypoint_index.min(last);
    // progress to the closest remaining waypoint so the target is never behind
    let mut best = here.distance(path[idx]);
    for (j, p) in path.iter().enumerate().skip(idx + 1) {
        let d = here.distance(*p);
        if d < best {
            best = d;
            idx = j;
        }
    }
    while idx < last && here.distance(path[idx]) < params.waypoint_radius {
        idx += 1;
    }
    planner.current_waypoint_index = idx;
    let ahead = path[idx..].iter().position(|p| here.distance(*p) >= params.lookahead).map_or(last, |k| idx + k);
    // pull the target back until the chord to it stays in free space of the
    // planning map, so corner cutting never steers into an obstacle
    let target =
        (idx + 1..=ahead).rev().map(|j| path[j]).find(|&p| visible(&planner.map, here, p)).unwrap_or(path[idx]);
    let error = wrap((target.y - here.y).atan2(target.x - here.x) - pose.theta);
    let yaw = (params.k_ang * error).to_degrees().clamp(-params.w_max_deg, params.w_max_deg);
    let front = scan.front_distance(params.body_radius);
    let ramp = ((front - params.stop_distance) / (params.slow_distance - params.stop_distance)).clamp(0.0, 1.0);
    let v = params.v_max * error.cos().max(0.0) * ramp;
    VelocityCommand::planar(v, yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn empty(w: usize, h: usize) -> OccupancyGrid {
        OccupancyGrid::filled(w, h, 0.1, Pose2D::new(0.0, 0.0, 0.0).unwrap(), Cell::Free).unwrap()
    }

    /// Brute-force inflation: every cell against every obstacle.
    fn inflate_oracle(grid: &OccupancyGrid, radius: f64) -> OccupancyGrid {
        let mut out = grid.clone();
        let res = grid.resolution();
        for (c, cell) in grid.iter_cells() {
            if cell != Cell::Free {
                continue;
            }
            let near = grid.iter_cells().any(|(o, oc)| {
                oc != Cell::Free && {
                    let dx = (c.col as f64 - o.col as f64) * res;
                    let dy = (c.row as f64 - o.row as f64) * res;
                    dx * dx + dy * dy <= radius * radius + 1e-12
                }
            });
            if near {
                out.set(c, Cell::Occupied);
            }
        }
        out
    }

    fn random_grid(rng: &mut SplitMix64, w: usize, h: usize, density: f64) -> OccupancyGrid {
        let mut g = empty(w, h);
        for row in 0..h {
            for col in 0..w {
                if rng.next_f64() < density {
                    g.set(CellIndex::new(col, row), Cell::Occupied);
                }
            }
        }
        g
    }

    #[test]
    fn inflate_examples() {
        let mut g = empty(9, 9);
        assert_eq!(inflate_map(&g, 0.3), g);
        g.set(CellIndex::new(4, 4), Cell::Occupied);
        assert_eq!(inflate_map(&g, 0.0), g);
        let inf = inflate_map(&g, 0.15);
        assert_eq!(inf, inflate_oracle(&g, 0.15));
        // 3×3 block: 8-neighbourhood within 1.5 cells, distance-2 ring is not
        assert_eq!(inf.count(Cell::Occupied), 9);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                assert_eq!(inf.get_signed(4 + dc, 4 + dr), Some(Cell::Occupied));
            }
        }
        let mut u = empty(5, 5);
        u.set(CellIndex::new(0, 0), Cell::Unknown);
        let inf = inflate_map(&u, 0.1);
        assert_eq!(inf.get(CellIndex::new(0, 0)), Some(Cell::Unknown));
        assert_eq!(inf.get(CellIndex::new(1, 0)), Some(Cell::Occupied));
    }

    #[test]
    fn inflate_matches_oracle_on_random_maps() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..20 {
            let g = random_grid(&mut rng, 15, 12, 0.08);
            for r in [0.1, 0.15, 0.1707, 0.25] {
                assert_eq!(inflate_map(&g, r), inflate_oracle(&g, r));
            }
        }
    }

    #[test]
    fn cost_order_is_exact() {
        let c = |s, d| PathCost { straight: s, diagonal: d };
        assert!(c(3, 0) > c(0, 2)); // 3 > 2.83
        assert!(c(0, 3) > c(4, 0)); // 4.24 > 4
        assert!(c(7, 0) < c(0, 5)); // 7 < 7.07
        assert_eq!(c(2, 2).cmp(&c(2, 2)), Ordering::Equal);
        assert!(c(1, 1) < c(3, 0));
    }

    #[test]
    fn plan_examples() {
        let g = empty(20, 5);
        let p = plan_global(&g, Point2::new(0.55, 0.25), Point2::new(1.55, 0.25)).unwrap();
        assert_eq!(p.cost, PathCost { straight: 10, diagonal: 0 });
        assert!((p.cost.metres(0.1) - 1.0).abs() < 1e-12);
        assert_eq!(p.waypoints.len(), 11);

        let g = empty(20, 20);
        let p = plan_global(&g, Point2::new(0.05, 0.05), Point2::new(1.95, 1.95)).unwrap();
        assert_eq!(p.cost, PathCost { straight: 0, diagonal: 19 });
        assert!((p.cost.metres(0.1) - 19.0 * SQRT_2 * 0.1).abs() < 1e-12);

        let mut sealed = empty(10, 10);
        for i in 3..=7 {
            for (c, r) in [(i, 3), (i, 7), (3, i), (7, i)] {
                sealed.set(CellIndex::new(c, r), Cell::Occupied);
            }
        }
        assert_eq!(plan_global(&sealed, Point2::new(0.05, 0.05), Point2::new(0.55, 0.55)), Err(PlanError::NoPath));
        assert_eq!(
            plan_global(&sealed, Point2::new(0.35, 0.35), Point2::new(0.55, 0.55)),
            Err(PlanError::StartBlocked)
        );
        assert_eq!(plan_global(&sealed, Point2::new(0.05, 0.05), Point2::new(0.35, 0.75)), Err(PlanError::GoalBlocked));
        assert!(matches!(
            plan_global(&sealed, Point2::new(-1.0, 0.05), Point2::new(0.55, 0.55)),
            Err(PlanError::OutOfMap(_))
        ));
    }

    #[test]
    fn no_corner_cutting() {
        let mut g = empty(3, 3);
        g.set(CellIndex::new(1, 0), Cell::Occupied);
        let p = plan_global(&g, Point2::new(0.05, 0.05), Point2::new(0.25, 0.15)).unwrap();
        // (0,0) → (0,1) → (1,1)... cannot step diagonally past the block
        assert_eq!(p.cells[1], CellIndex::new(0, 1));
    }

    /// Plain Dijkstra over f64 costs with the same move rules.
    fn dijkstra_oracle(g: &OccupancyGrid, s: CellIndex, t: CellIndex) -> Option<f64> {
        let (w, h) = (g.width(), g.height());
        let mut dist = vec![f64::INFINITY; w * h];
        let mut done = vec![false; w * h];
        dist[g.index_of(s)] = 0.0;
        loop {
            let mut u = None;
            for i in 0..w * h {
                if !done[i] && dist[i].is_finite() && u.is_none_or(|j: usize| dist[i] < dist[j]) {
                    u = Some(i);
                }
            }
            let u = u?;
            if u == g.index_of(t) {
                return Some(dist[u]);
            }
            done[u] = true;
            let (c, r) = ((u % w) as i64, (u / w) as i64);
            let free = |c: i64, r: i64| g.get_signed(c, r) == Some(Cell::Free);
            for dc in -1..=1 {
                for dr in -1..=1 {
                    if (dc, dr) == (0, 0) || !free(c + dc, r + dr) {
                        continue;
                    }
                    if dc != 0 && dr != 0 && !(free(c + dc, r) && free(c, r + dr)) {
                        continue;
                    }
                    let v = (r + dr) as usize * w + (c + dc) as usize;
                    let step = if dc != 0 && dr != 0 { SQRT_2 } else { 1.0 };
                    if dist[u] + step < dist[v] {
                        dist[v] = dist[u] + step;
                    }
                }
            }
        }
    }

    #[test]
    fn astar_matches_dijkstra_on_random_grids() {
        let mut rng = SplitMix64::new(11);
        let mut solvable = 0;
        for _ in 0..60 {
            let g = random_grid(&mut rng, 30, 30, 0.25);
            let free: Vec<CellIndex> = g.iter_cells().filter(|(_, c)| *c == Cell::Free).map(|(i, _)| i).collect();
            let s = free[rng.below(free.len() as u64) as usize];
            let t = free[rng.below(free.len() as u64) as usize];
            let plan = plan_global(&g, g.cell_center(s), g.cell_center(t));
            match dijkstra_oracle(&g, s, t) {
                Some(d) => {
                    let p = plan.unwrap();
                    assert!((p.cost.cells() - d).abs() < 1e-9, "{} vs {d}", p.cost.cells());
                    solvable += 1;
                }
                None => assert_eq!(plan, Err(PlanError::NoPath)),
            }
        }
        assert!(solvable > 20);
    }

    #[test]
    fn controller_examples() {
        let p = ControllerParams::default();
        let clear = LaserScan { angle_min: -0.8, angle_max: 0.8, ranges: vec![3.0; 64], range_max: 3.0 };
        let map = empty(40, 40);
        let path: Vec<Point2> = (0..=10).map(|i| Point2::new(0.05 + 0.1 * i as f64, 0.05)).collect();
        let mut st = PlannerState { global_path: path.clone(), current_waypoint_index: 0, map: map.clone() };
        let cmd = classical_controller(&Pose2D::new(0.05, 0.05, 0.0).unwrap(), &mut st, &clear, &p);
        assert!((cmd.forward() - p.v_max).abs() < 1e-12);
        assert!(cmd.yaw_rate_deg().abs() < 1e-9);
        assert_eq!(st.current_waypoint_index, 1);

        let mut st = PlannerState { global_path: path.clone(), current_waypoint_index: 0, map: map.clone() };
        let cmd = classical_controller(&Pose2D::new(0.05, 0.05, 3.1).unwrap(), &mut st, &clear, &p);
        assert_eq!(cmd.yaw_rate_deg().abs(), 30.0);
        assert_eq!(cmd.forward(), 0.0);

        let mut blocked = clear.clone();
        blocked.ranges[31] = p.stop_distance;
        blocked.ranges[32] = p.stop_distance;
        let mut st = PlannerState { global_path: path, current_waypoint_index: 0, map };
        let cmd = classical_controller(&Pose2D::new(0.05, 0.05, 0.0).unwrap(), &mut st, &blocked, &p);
        assert_eq!(cmd.forward(), 0.0);
    }

    proptest! {
        #[test]
        fn controller_output_is_bounded(x in -1.0f64..1.0, y in -1.0f64..1.0, th in -std::f64::consts::PI..std::f64::consts::PI,
                                        wx in -2.0f64..2.0, wy in -2.0f64..2.0, near in 0.0f64..3.0) {
            let p = ControllerParams::default();
            let mut ranges = vec![3.0; 16];
            ranges[7] = near.max(1e-3);
            let scan = LaserScan { angle_min: -0.8, angle_max: 0.8, ranges, range_max: 3.0 };
            let mut st = PlannerState { global_path: vec![Point2::new(wx, wy)], current_waypoint_index: 0, map: empty(2, 2) };
            let cmd = classical_controller(&Pose2D::new(x, y, th).unwrap(), &mut st, &scan, &p);
            prop_assert!(cmd.is_finite());
            prop_assert!(cmd.forward() >= 0.0 && cmd.forward() <= p.v_max);
            prop_assert!(cmd.yaw_rate_deg().abs() <= p.w_max_deg);
        }

        #[test]
        fn paths_stay_on_free_cells(seed in any::<u64>()) {
            let mut rng = SplitMix64::new(seed);
            let g = inflate_map(&random_grid(&mut rng, 20, 20, 0.1), 0.1);
            let free: Vec<CellIndex> = g.iter_cells().filter(|(_, c)| *c == Cell::Free).map(|(i, _)| i).collect();
            prop_assume!(free.len() >= 2);
            let s = free[rng.below(free.len() as u64) as usize];
            let t = free[rng.below(free.len() as u64) as usize];
            if let Ok(p) = plan_global(&g, g.cell_center(s), g.cell_center(t)) {
                for w in p.cells.windows(2) {
                    let dc = w[0].col.abs_diff(w[1].col);
                    let dr = w[0].row.abs_diff(w[1].row);
                    prop_assert!(dc <= 1 && dr <= 1 && dc + dr > 0);
                }
                prop_assert!(p.cells.iter().all(|&c| g.get(c) == Some(Cell::Free)));
            }
        }
    }
}
