//! Disc-versus-grid contact queries shared by both simulator backends.
//!
//! Queries run in the grid frame, where cell `(c, r)` is the box
//! `[c·res, (c+1)·res] × [r·res, (r+1)·res]`. The swept disc's entry time into
//! a cell is the ray's entry time into the cell box inflated by the disc
//! radius (two stretched boxes plus four corner circles).

use crate::geometry::Point2;
use crate::grid::{Cell, OccupancyGrid};

/// Gap left between the disc and the obstacle when motion is truncated.
pub const SEPARATION_EPS: f64 = 1e-6;

/// Which cells stop a moving or sensing disc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockPolicy {
    /// Occupied, unknown and out-of-grid cells all block. Used for motion.
    Solid,
    /// Only occupied cells block; beyond the grid is empty space. Used for
    /// range sensing.
    OccupiedOnly,
}

#[inline]
pub(crate) fn blocks(grid: &OccupancyGrid, col: i64, row: i64, policy: BlockPolicy) -> bool {
    match (grid.get_signed(col, row), policy) {
        (Some(Cell::Free), _) => false,
        (Some(Cell::Occupied), _) => true,
        (Some(Cell::Unknown), BlockPolicy::Solid) | (None, BlockPolicy::Solid) => true,
        (Some(Cell::Unknown), BlockPolicy::OccupiedOnly) | (None, BlockPolicy::OccupiedOnly) => false,
    }
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl Aabb {
    fn cell(res: f64, col: i64, row: i64) -> Self {
        Self { x0: col as f64 * res, y0: row as f64 * res, x1: (col + 1) as f64 * res, y1: (row + 1) as f64 * res }
    }

    fn closest(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(self.x0, self.x1), p.y.clamp(self.y0, self.y1))
    }
}

#[inline]
fn sub(a: Point2, b: Point2) -> Point2 {
    Point2::new(a.x - b.x, a.y - b.y)
}

#[inline]
fn dot(a: Point2, b: Point2) -> f64 {
    a.x * b.x + a.y * b.y
}

fn cell_range(lo: f64, hi: f64, res: f64) -> std::ops::RangeInclusive<i64> {
    ((lo / res).floor() as i64)..=((hi / res).floor() as i64)
}

/// True when the open disc intersects a blocking cell (tangency is allowed).
pub fn disc_overlaps(grid: &OccupancyGrid, center: Point2, radius: f64, policy: BlockPolicy) -> bool {
    let res = grid.resolution();
    let r2 = radius * radius;
    for row in cell_range(center.y - radius, center.y + radius, res) {
        for col in cell_range(center.x - radius, center.x + radius, res) {
            if !blocks(grid, col, row, policy) {
                continue;
            }
            let c = Aabb::cell(res, col, row).closest(center);
            let d = sub(center, c);
            if dot(d, d) < r2 {
                return true;
            }
        }
    }
    false
}

/// Slab test. Returns the entry parameter when the ray hits the box at or
/// after t = 0.
fn ray_box_entry(p: Point2, u: Point2, b: &Aabb) -> Option<f64> {
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for (o, d, lo, hi) in [(p.x, u.x, b.x0, b.x1), (p.y, u.y, b.y0, b.y1)] {
        if d == 0.0 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (a, c) = ((lo - o) / d, (hi - o) / d);
            let (a, c) = if a <= c { (a, c) } else { (c, a) };
            tmin = tmin.max(a);
            tmax = tmax.min(c);
        }
    }
    (tmin <= tmax && tmax >= 0.0).then_some(tmin.max(0.0))
}

/// Entry parameter of a unit-direction ray into a circle.
fn ray_circle_entry(p: Point2, u: Point2, c: Point2, r: f64) -> Option<f64> {
    let m = sub(p, c);
    let b = dot(u, m);
    let cc = dot(m, m) - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t_far = -b + disc.sqrt();
    if t_far < 0.0 {
        return None;
    }
    Some((-b - disc.sqrt()).max(0.0))
}

fn rounded_box_entry(p: Point2, u: Point2, b: &Aabb, r: f64) -> Option<f64> {
    let wide = Aabb { x0: b.x0 - r, y0: b.y0, x1: b.x1 + r, y1: b.y1 };
    let tall = Aabb { x0: b.x0, y0: b.y0 - r, x1: b.x1, y1: b.y1 + r };
    let corners = [Point2::new(b.x0, b.y0), Point2::new(b.x1, b.y0), Point2::new(b.x0, b.y1), Point2::new(b.x1, b.y1)];
    let mut best: Option<f64> = None;
    let mut take = |t: Option<f64>| {
        if let Some(t) = t {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    };
    take(ray_box_entry(p, u, &wide));
    take(ray_box_entry(p, u, &tall));
    if r > 0.0 {
        for c in corners {
            take(ray_circle_entry(p, u, c, r));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact {
    /// Distance travelled along the direction before touching.
    pub t: f64,
    /// Unit contact normal pointing from the obstacle toward the disc.
    pub normal: Point2,
}

/// First contact of a disc of `radius` moving from `p` along unit direction
/// `u` for at most `max_dist`. Cells the disc already touches only count when
/// the motion heads into them.
pub fn sweep(
    grid: &OccupancyGrid,
    p: Point2,
    u: Point2,
    max_dist: f64,
    radius: f64,
    policy: BlockPolicy,
) -> Option<Contact> {
    let res = grid.resolution();
    let end = Point2::new(p.x + u.x * max_dist, p.y + u.y * max_dist);
    let pad = radius + res;
    let r2 = radius * radius;
    let mut best: Option<Contact> = None;
    for row in cell_range(p.y.min(end.y) - pad, p.y.max(end.y) + pad, res) {
        for col in cell_range(p.x.min(end.x) - pad, p.x.max(end.x) + pad, res) {
            if !blocks(grid, col, row, policy) {
                continue;
            }
            let cell = Aabb::cell(res, col, row);
            let c = cell.closest(p);
            let v = sub(p, c);
            let t = if dot(v, v) <= r2 {
                if dot(v, u) < 0.0 {
                    0.0
                } else {
                    continue;
                }
            } else {
                match rounded_box_entry(p, u, &cell, radius) {
                    Some(t) => t,
                    None => continue,
                }
            };
            if t > max_dist || best.is_some_and(|b| t >= b.t) {
                continue;
            }
            let q = Point2::new(p.x + u.x * t, p.y + u.y * t);
            let n = sub(q, cell.closest(q));
            let len = dot(n, n).sqrt();
            let normal = if len > 0.0 { Point2::new(n.x / len, n.y / len) } else { Point2::new(-u.x, -u.y) };
            // grazing or receding contacts (possible at t = 0 through rounding) do not block
            if dot(normal, u) >= 0.0 {
                continue;
            }
            best = Some(Contact { t, normal });
        }
    }
    best
}

/// Result of moving a disc through the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moved {
    pub position: Point2,
    pub contact: bool,
}

/// Moves a disc centred at world point `from` by world displacement `disp`.
///
/// Motion is truncated [`SEPARATION_EPS`] short of the first contact. With
/// `slide`, the blocked remainder is projected once onto the contact tangent
/// and swept again (truncating, no further projection). The returned
/// position never overlaps a solid cell provided `from` did not.
pub fn move_disc(grid: &OccupancyGrid, from: Point2, disp: Point2, radius: f64, slide: bool) -> Moved {
    let len = dot(disp, disp).sqrt();
    if len == 0.0 {
        return Moved { position: from, contact: false };
    }
    let (first, contact) = segment(grid, from, disp, len, radius);
    let Some(contact) = contact else {
        return Moved { position: first, contact: false };
    };
    if !slide {
        return Moved { position: first, contact: true };
    }
    // remainder of the intended displacement, in world coordinates
    let rem = Point2::new(from.x + disp.x - first.x, from.y + disp.y - first.y);
    let n = rotate(contact.normal, grid.origin().theta);
    let rn = dot(rem, n);
    if rn >= 0.0 {
        return Moved { position: first, contact: true };
    }
    let tangent = Point2::new(rem.x - n.x * rn, rem.y - n.y * rn);
    let tlen = dot(tangent, tangent).sqrt();
    if tlen == 0.0 {
        return Moved { position: first, contact: true };
    }
    let (second, _) = segment(grid, first, tangent, tlen, radius);
    Moved { position: second, contact: true }
}

fn rotate(v: Point2, theta: f64) -> Point2 {
    if theta == 0.0 {
        return v;
    }
    let (s, c) = theta.sin_cos();
    Point2::new(c * v.x - s * v.y, s * v.x + c * v.y)
}

/// One truncating sweep from `from` (world frame). Returns the reached world
/// position and the contact, if any.
fn segment(grid: &OccupancyGrid, from: Point2, disp: Point2, len: f64, radius: f64) -> (Point2, Option<Contact>) {
    let u_world = Point2::new(disp.x / len, disp.y / len);
    let u_local = rotate(u_world, -grid.origin().theta);
    let contact = sweep(grid, grid.to_local(from), u_local, len, radius, BlockPolicy::Solid);
    let travel = match contact {
        Some(c) => (c.t - SEPARATION_EPS).max(0.0),
        None => len,
    };
    let target = |s: f64| {
        if s == len {
            Point2::new(from.x + disp.x, from.y + disp.y)
        } else {
            Point2::new(from.x + u_world.x * s, from.y + u_world.y * s)
        }
    };
    // floating-point guard: back off until the candidate is verifiably clear
    let mut s = travel;
    let mut backoff = SEPARATION_EPS;
    while s > 0.0 {
        let cand = target(s);
        if !disc_overlaps(grid, grid.to_local(cand), radius, BlockPolicy::Solid) {
            return (cand, contact);
        }
        s -= backoff;
        backoff *= 2.0;
    }
    (from, contact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2D;
    use crate::grid::CellIndex;

    fn grid_with_wall_column(col: usize) -> OccupancyGrid {
        let mut g = OccupancyGrid::filled(40, 40, 0.1, Pose2D::new(-2.0, -2.0, 0.0).unwrap(), Cell::Free).unwrap();
        for row in 0..40 {
            g.set(CellIndex::new(col, row), Cell::Occupied);
        }
        g
    }

    #[test]
    fn head_on_contact_distance() {
        // wall face at local x = 2.3, i.e. world x = 0.3
        let g = grid_with_wall_column(23);
        let c =
            sweep(&g, g.to_local(Point2::new(0.0, 0.05)), Point2::new(1.0, 0.0), 1.0, 0.1, BlockPolicy::Solid).unwrap();
        assert!((c.t - 0.2).abs() < 1e-12, "{}", c.t);
        assert_eq!(c.normal, Point2::new(-1.0, 0.0));
    }

    #[test]
    fn moving_away_from_touching_wall_is_free() {
        let g = grid_with_wall_column(23);
        let p = g.to_local(Point2::new(0.2, 0.05));
        assert!(sweep(&g, p, Point2::new(-1.0, 0.0), 0.5, 0.1, BlockPolicy::Solid).is_none());
        assert_eq!(sweep(&g, p, Point2::new(1.0, 0.0), 0.5, 0.1, BlockPolicy::Solid).unwrap().t, 0.0);
    }

    #[test]
    fn slide_along_wall() {
        let g = grid_with_wall_column(23);
        let s = 0.25 / 2f64.sqrt();
        let m = move_disc(&g, Point2::new(0.1, 0.0), Point2::new(s, s), 0.1, true);
        assert!(m.contact);
        assert!(m.position.x < 0.2 && m.position.x > 0.2 - 2e-6);
        // tangential remainder carried the disc further up the wall
        assert!((m.position.y - s).abs() < 1e-5 && m.position.y > 0.17);
        let t = move_disc(&g, Point2::new(0.1, 0.0), Point2::new(s, s), 0.1, false);
        assert!(t.position.y < 0.1 + 1e-9);
    }

    #[test]
    fn out_of_grid_blocks_motion() {
        let g = OccupancyGrid::filled(10, 10, 0.1, Pose2D::new(0.0, 0.0, 0.0).unwrap(), Cell::Free).unwrap();
        let m = move_disc(&g, Point2::new(0.5, 0.5), Point2::new(1.0, 0.0), 0.1, false);
        assert!(m.contact);
        assert!((m.position.x - 0.9).abs() < 2e-6);
    }
}
