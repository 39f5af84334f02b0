//! MaxEnt state log partition function on a square grid.
//!
//! Sign convention: `V(goal) = 0` and `V` decreases with the soft cost-to-go,
//! so `-V` is a smoothed cost estimate. Backups use the 8-neighborhood:
//!
//! `V(s) = log sum_a exp(-c(s, a) + V(s'))`, with `c(s, a) = cost(s') * |a|`
//!
//! where `|a|` is 1 for edge moves and sqrt(2) for diagonal ones. The backup
//! only converges when every cell cost exceeds roughly `ln 8`; cheaper grids
//! have an unbounded partition function and report `NonConvergence`.

use std::io::Write;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{NgscError, Result};
use crate::geometry::{Environment, Point2, Rect};
use crate::policy::ActionField;

pub const CONVERGENCE_TOL: f64 = 1e-6;

const NEIGHBORS: [(i64, i64); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

/// Row-major square grid of per-cell scalars; row 0 is the `min.y` edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub resolution: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn filled(resolution: usize, v: f64) -> Self {
        Self { resolution, values: vec![v; resolution * resolution] }
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.resolution + col
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.index(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let i = self.index(row, col);
        self.values[i] = v;
    }

    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let n = self.resolution as i64;
        let (r, c) = ((idx / self.resolution) as i64, (idx % self.resolution) as i64);
        NEIGHBORS.iter().filter_map(move |&(dr, dc)| {
            let (rr, cc) = (r + dr, c + dc);
            (rr >= 0 && rr < n && cc >= 0 && cc < n).then(|| {
                let len = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                ((rr * n + cc) as usize, len)
            })
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub bounds: Rect,
    pub grid: Grid,
    pub goal_cell: usize,
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Iterates soft Bellman backups until the sup-norm change drops below
/// [`CONVERGENCE_TOL`].
pub fn soft_value_iteration(cost: &Grid, goal_cell: usize, max_iterations: usize) -> Result<Grid> {
    let cells = cost.values.len();
    if cells != cost.resolution * cost.resolution || goal_cell >= cells {
        return Err(NgscError::InvalidConfig(format!("goal cell {goal_cell} outside a {cells}-cell grid")));
    }
    if cost.values.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(NgscError::InvalidConfig("cell costs must be finite and nonnegative".into()));
    }

    let mut v = vec![f64::NEG_INFINITY; cells];
    v[goal_cell] = 0.0;
    if cells == 1 {
        return Ok(Grid { resolution: cost.resolution, values: v });
    }

    let mut residual = f64::INFINITY;
    for _ in 0..max_iterations {
        let mut next = v.clone();
        residual = 0.0;
        for (s, slot) in next.iter_mut().enumerate() {
            if s == goal_cell {
                continue;
            }
            let mut terms = [f64::NEG_INFINITY; 8];
            let mut k = 0;
            for (sp, len) in cost.neighbors(s) {
                terms[k] = -cost.values[sp] * len + v[sp];
                k += 1;
            }
            let backup = log_sum_exp(&terms[..k]);
            let change = if backup == v[s] { 0.0 } else { (backup - v[s]).abs() };
            residual = residual.max(if change.is_nan() { f64::INFINITY } else { change });
            *slot = backup;
        }
        v = next;
        if residual < CONVERGENCE_TOL {
            return Ok(Grid { resolution: cost.resolution, values: v });
        }
    }
    Err(NgscError::NonConvergence { iterations: max_iterations, residual })
}

impl ValueGrid {
    pub fn cell_center(&self, idx: usize) -> Point2 {
        let n = self.grid.resolution as f64;
        let (r, c) = (idx / self.grid.resolution, idx % self.grid.resolution);
        Point2::new(
            self.bounds.min.x + (c as f64 + 0.5) * self.bounds.width() / n,
            self.bounds.min.y + (r as f64 + 0.5) * self.bounds.height() / n,
        )
    }

    pub fn cell_of(bounds: &Rect, resolution: usize, p: Point2) -> usize {
        let n = resolution as f64;
        let c = (((p.x - bounds.min.x) / bounds.width() * n).floor() as i64).clamp(0, resolution as i64 - 1);
        let r = (((p.y - bounds.min.y) / bounds.height() * n).floor() as i64).clamp(0, resolution as i64 - 1);
        r as usize * resolution + c as usize
    }

    /// Bilinear interpolation between cell centers, clamped at the border.
    pub fn interpolate(&self, p: Point2) -> f64 {
        let n = self.grid.resolution;
        let fx = ((p.x - self.bounds.min.x) / self.bounds.width() * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let fy = ((p.y - self.bounds.min.y) / self.bounds.height() * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let (c0, r0) = (fx.floor() as usize, fy.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(n - 1), (r0 + 1).min(n - 1));
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let g = |r, c| self.grid.get(r, c);
        let bottom = g(r0, c0) * (1.0 - tx) + g(r0, c1) * tx;
        let top = g(r1, c0) * (1.0 - tx) + g(r1, c1) * tx;
        bottom * (1.0 - ty) + top * ty
    }

    /// Writes a `#`-prefixed header followed by one comma-separated line per
    /// grid row, starting at the `min.y` edge.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# resolution={} x_min={} y_min={} x_max={} y_max={} goal_cell={}",
            self.grid.resolution,
            self.bounds.min.x,
            self.bounds.min.y,
            self.bounds.max.x,
            self.bounds.max.y,
            self.goal_cell
        )?;
        for row in self.grid.values.chunks(self.grid.resolution) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Costs used to build the value grid of an environment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValueCostConfig {
    pub resolution: usize,
    /// Per-cell cost in free space; must exceed ln 8 for convergence.
    pub base_cost: f64,
    pub obstacle_cost: f64,
    /// Cost falloff length outside the obstacle surface, meters.
    pub obstacle_falloff: f64,
    pub max_iterations: usize,
}

impl Default for ValueCostConfig {
    fn default() -> Self {
        Self { resolution: 50, base_cost: 3.0, obstacle_cost: 60.0, obstacle_falloff: 0.015, max_iterations: 20_000 }
    }
}

pub fn environment_cost_grid(env: &Environment, cfg: &ValueCostConfig) -> Grid {
    let n = cfg.resolution;
    let proto = ValueGrid { bounds: env.workspace, grid: Grid::filled(n, 0.0), goal_cell: 0 };
    let mut grid = Grid::filled(n, cfg.base_cost);
    for (i, v) in grid.values.iter_mut().enumerate() {
        let sd = env.signed_distance(proto.cell_center(i));
        *v += if sd <= 0.0 { cfg.obstacle_cost } else { cfg.obstacle_cost * (-sd / cfg.obstacle_falloff).exp() };
    }
    grid
}

/// Soft value grid for reaching `goal` in `env`.
pub fn environment_value_grid(env: &Environment, goal: Point2, cfg: &ValueCostConfig) -> Result<ValueGrid> {
    let cost = environment_cost_grid(env, cfg);
    let goal_cell = ValueGrid::cell_of(&env.workspace, cfg.resolution, goal);
    let grid = soft_value_iteration(&cost, goal_cell, cfg.max_iterations)?;
    Ok(ValueGrid { bounds: env.workspace, grid, goal_cell })
}

/// Normalized ascent direction of the interpolated value grid.
#[derive(Clone, Debug)]
pub struct ValueField {
    pub values: ValueGrid,
    pub stencil: f64,
}

impl ValueField {
    pub fn new(values: ValueGrid) -> Self {
        let stencil = 0.5 * values.bounds.width() / values.grid.resolution as f64;
        Self { values, stencil }
    }
}

impl ActionField for ValueField {
    fn action(&self, s: Point2) -> Vector2<f64> {
        let h = self.stencil;
        let gx =
            self.values.interpolate(Point2::new(s.x + h, s.y)) - self.values.interpolate(Point2::new(s.x - h, s.y));
        let gy =
            self.values.interpolate(Point2::new(s.x, s.y + h)) - self.values.interpolate(Point2::new(s.x, s.y - h));
        let g = Vector2::new(gx, gy);
        let n = g.norm();
        if n > 1e-12 {
            g / n
        } else {
            Vector2::zeros()
        }
    }
}
