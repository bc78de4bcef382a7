//! Occupancy grids and the ASCII scene file format.
//!
//! Scene files look like
//!
//! ```text
//! resolution 0.1
//! origin -1.5 -1.5 0
//! #####
//! #...#
//! #####
//! ```
//!
//! `.` is free, `#` occupied and `?` unknown. The last text row is grid row 0,
//! so the file reads as a map with y pointing up.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    pub fn as_char(self) -> char {
        match self {
            Cell::Free => '.',
            Cell::Occupied => '#',
            Cell::Unknown => '?',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '.' => Some(Cell::Free),
            '#' => Some(Cell::Occupied),
            '?' => Some(Cell::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("cell count {cells} does not match {width}x{height}")]
    SizeMismatch { width: usize, height: usize, cells: usize },
    #[error("resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("grid must have at least one cell")]
    Empty,
    #[error("origin must be finite")]
    BadOrigin,
    #[error("scene line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Column/row index of a grid cell. Row 0 is the bottom row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub col: usize,
    pub row: usize,
}

impl CellIndex {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// A row-major 2D occupancy map. Cell `(0, 0)` has its lower-left corner at
/// `origin`; the grid axes are rotated by `origin.theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    width: usize,
    height: usize,
    resolution: f64,
    origin: Pose2D,
    cells: Vec<Cell>,
}

impl OccupancyGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f64,
        origin: Pose2D,
        cells: Vec<Cell>,
    ) -> Result<Self, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::Empty);
        }
        if width * height != cells.len() {
            return Err(GridError::SizeMismatch { width, height, cells: cells.len() });
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::BadResolution(resolution));
        }
        if !(origin.x.is_finite() && origin.y.is_finite() && origin.theta.is_finite()) {
            return Err(GridError::BadOrigin);
        }
        Ok(Self { width, height, resolution, origin, cells })
    }

    pub fn filled(width: usize, height: usize, resolution: f64, origin: Pose2D, cell: Cell) -> Result<Self, GridError> {
        Self::new(width, height, resolution, origin, vec![cell; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Pose2D {
        self.origin
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn index_of(&self, c: CellIndex) -> usize {
        c.row * self.width + c.col
    }

    pub fn get(&self, c: CellIndex) -> Option<Cell> {
        (c.col < self.width && c.row < self.height).then(|| self.cells[self.index_of(c)])
    }

    /// Cell state for signed indices; `None` outside the grid.
    pub fn get_signed(&self, col: i64, row: i64) -> Option<Cell> {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return None;
        }
        Some(self.cells[row as usize * self.width + col as usize])
    }

    pub fn set(&mut self, c: CellIndex, cell: Cell) {
        let i = self.index_of(c);
        self.cells[i] = cell;
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (CellIndex, Cell)> + '_ {
        self.cells.iter().enumerate().map(move |(i, &c)| (CellIndex::new(i % self.width, i / self.width), c))
    }

    /// World point expressed in the grid frame (origin at the grid corner,
    /// axes along columns and rows).
    pub fn to_local(&self, p: Point2) -> Point2 {
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        if self.origin.theta == 0.0 {
            return Point2::new(dx, dy);
        }
        let (s, c) = self.origin.theta.sin_cos();
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn to_world(&self, p: Point2) -> Point2 {
        if self.origin.theta == 0.0 {
            return Point2::new(p.x + self.origin.x, p.y + self.origin.y);
        }
        let (s, c) = self.origin.theta.sin_cos();
        Point2::new(c * p.x - s * p.y + self.origin.x, s * p.x + c * p.y + self.origin.y)
    }

    /// Signed cell coordinates of a grid-frame point (floor division).
    pub fn local_to_signed_cell(&self, p: Point2) -> (i64, i64) {
        ((p.x / self.resolution).floor() as i64, (p.y / self.resolution).floor() as i64)
    }

    /// The cell containing a world point, or `None` when out of bounds.
    pub fn world_to_cell(&self, x: f64, y: f64) -> Option<CellIndex> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let (c, r) = self.local_to_signed_cell(self.to_local(Point2::new(x, y)));
        (c >= 0 && r >= 0 && (c as usize) < self.width && (r as usize) < self.height)
            .then(|| CellIndex::new(c as usize, r as usize))
    }

    pub fn cell_center(&self, c: CellIndex) -> Point2 {
        self.to_world(Point2::new((c.col as f64 + 0.5) * self.resolution, (c.row as f64 + 0.5) * self.resolution))
    }

    pub fn count(&self, cell: Cell) -> usize {
        self.cells.iter().filter(|&&c| c == cell).count()
    }

    pub fn parse_scene(text: &str) -> Result<Self, GridError> {
        text.parse()
    }

    /// Renders the grid in the scene file format. Parsing the output yields
    /// an equal grid.
    pub fn to_scene_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "resolution {}", self.resolution);
        let _ = writeln!(out, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.theta);
        for row in (0..self.height).rev() {
            for col in 0..self.width {
                out.push(self.cells[row * self.width + col].as_char());
            }
            out.push('\n');
        }
        out
    }
}

impl FromStr for OccupancyGrid {
    type Err = GridError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut resolution = None;
        let mut origin = None;
        let mut rows: Vec<Vec<Cell>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| GridError::Parse { line: line_no, msg };
            if let Some(rest) = line.strip_prefix("resolution") {
                let v: f64 = rest.trim().parse().map_err(|e| perr(format!("bad resolution: {e}")))?;
                resolution = Some(v);
            } else if let Some(rest) = line.strip_prefix("origin") {
                let vals = rest
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| perr(format!("bad origin: {e}")))?;
                if vals.len() != 3 {
                    return Err(perr(format!("origin needs 3 values, got {}", vals.len())));
                }
                let pose = Pose2D::new(vals[0], vals[1], vals[2]).map_err(|e| perr(e.to_string()))?;
                origin = Some(pose);
            } else {
                let row = line
                    .chars()
                    .map(|c| Cell::from_char(c).ok_or_else(|| perr(format!("unexpected character {c:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(perr(format!("row width {} differs from {}", row.len(), first.len())));
                    }
                }
                rows.push(row);
            }
        }
        let resolution = resolution.ok_or(GridError::Parse { line: 0, msg: "missing resolution header".into() })?;
        let origin = origin.ok_or(GridError::Parse { line: 0, msg: "missing origin header".into() })?;
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        let cells = rows.into_iter().rev().flatten().collect();
        OccupancyGrid::new(width, height, resolution, origin, cells)
    }
}
