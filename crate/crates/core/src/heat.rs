//! Explicit finite-difference heat solver with obstacle insulation.
//!
//! Each step applies
//!
//! ```text
//! u'[i,j] = u[i,j] + c * (sum of u over valid neighbours - V * u[i,j])
//! ```
//!
//! where the valid neighbours are the in-bounds free 4-neighbours and `V` is
//! their count. Obstacle cells and the map border carry no flux, so the free
//! mass is conserved and heat never enters an obstacle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridMap};
use crate::par::Exec;

/// Non-negative scalar field over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatField {
    width: usize,
    height: usize,
    values: Vec<f64>,
    total_mass: f64,
}

impl HeatField {
    pub fn zeros(width: usize, height: usize) -> Self {
        HeatField {
            width,
            height,
            values: vec![0.0; width * height],
            total_mass: 0.0,
        }
    }

    /// A point mass at `cell`.
    pub fn delta(map: &GridMap, cell: Cell, mass: f64) -> Result<Self> {
        map.check_free(cell)?;
        let mut f = HeatField::zeros(map.width(), map.height());
        f.values[map.index(cell)] = mass;
        f.total_mass = mass;
        Ok(f)
    }

    /// Wraps raw values after checking them against `map`.
    pub fn from_values(map: &GridMap, values: Vec<f64>) -> Result<Self> {
        if values.len() != map.len() {
            return Err(Error::DimensionMismatch {
                expected_w: map.width(),
                expected_h: map.height(),
                got_w: values.len(),
                got_h: 1,
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("heat value {v} at index {i} is not a finite non-negative number")));
            }
            if v > 0.0 && map.obstacles()[i] {
                let c = map.cell(i);
                return Err(Error::ObstacleCell { x: c.x, y: c.y });
            }
        }
        Ok(Self::from_raw(map.width(), map.height(), values))
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<f64>) -> Self {
        let total_mass = values.iter().sum();
        HeatField {
            width,
            height,
            values,
            total_mass,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn at(&self, cell: Cell) -> f64 {
        self.values[cell.y * self.width + cell.x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverParams {
    /// Per-step conductivity in free cells.
    pub coeff: f64,
    /// Dispersion time advanced by one step.
    pub dk: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams { coeff: 0.25, dk: 0.25 }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.coeff > 0.0 && self.coeff <= 0.25) {
            return Err(Error::Config(format!("coeff {} must lie in (0, 1/4]", self.coeff)));
        }
        // alpha = 1, dx = 1: stability needs dk <= 1/4.
        if !(self.dk > 0.0 && self.dk <= 0.25) {
            return Err(Error::Config(format!("dk {} violates the stability bound dk <= 1/4", self.dk)));
        }
        Ok(())
    }
}

/// Number of explicit steps covering dispersion time `k`.
pub fn steps_for_dispersion_time(k: f64, params: &SolverParams) -> Result<usize> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Config(format!("dispersion time {k} must be finite and >= 0")));
    }
    Ok((k / params.dk).round() as usize)
}

/// Precomputed stencil for one map. Reusable across fields and step counts.
#[derive(Debug, Clone)]
pub struct HeatSolver {
    width: usize,
    height: usize,
    coeff: f64,
    // Neighbour validity in N, S, E, W order, 1.0 or 0.0 per cell.
    north: Vec<f64>,
    south: Vec<f64>,
    east: Vec<f64>,
    west: Vec<f64>,
    valid: Vec<f64>,
    exec: Exec,
}

impl HeatSolver {
    pub fn new(map: &GridMap, params: &SolverParams) -> Result<Self> {
        params.validate()?;
        let (w, h) = (map.width(), map.height());
        let n = map.len();
        let mut s = HeatSolver {
            width: w,
            height: h,
            coeff: params.coeff,
            north: vec![0.0; n],
            south: vec![0.0; n],
            east: vec![0.0; n],
            west: vec![0.0; n],
            valid: vec![0.0; n],
            exec: Exec::default(),
        };
        let obs = map.obstacles();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if obs[i] {
                    continue;
                }
                let free = |j: usize| if obs[j] { 0.0 } else { 1.0 };
                s.north[i] = if y > 0 { free(i - w) } else { 0.0 };
                s.south[i] = if y + 1 < h { free(i + w) } else { 0.0 };
                s.east[i] = if x + 1 < w { free(i + 1) } else { 0.0 };
                s.west[i] = if x > 0 { free(i - 1) } else { 0.0 };
                s.valid[i] = s.north[i] + s.south[i] + s.east[i] + s.west[i];
            }
        }
        Ok(s)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    /// Applies `n_steps` updates to `field`.
    pub fn evolve(&self, field: &HeatField, n_steps: usize) -> Result<HeatField> {
        if field.width != self.width || field.height != self.height {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: field.width,
                got_h: field.height,
            });
        }
        if n_steps == 0 {
            return Ok(field.clone());
        }
        let values = self.evolve_values(&field.values, n_steps);
        Ok(HeatField::from_raw(self.width, self.height, values))
    }

    pub(crate) fn evolve_values(&self, values: &[f64], n_steps: usize) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let pw = w + 2;
        // Zero-padded buffers so every interior cell has four addressable neighbours.
        let mut cur = vec![0.0; pw * (h + 2)];
        for y in 0..h {
            cur[(y + 1) * pw + 1..(y + 1) * pw + 1 + w].copy_from_slice(&values[y * w..(y + 1) * w]);
        }
        let mut next = cur.clone();
        for _ in 0..n_steps {
            self.step(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        let mut out = vec![0.0; w * h];
        for y in 0..h {
            out[y * w..(y + 1) * w].copy_from_slice(&cur[(y + 1) * pw + 1..(y + 1) * pw + 1 + w]);
        }
        out
    }

    fn step(&self, cur: &[f64], next: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        let pw = w + 2;
        let c = self.coeff;
        let interior = &mut next[pw..(h + 1) * pw];
        self.exec.for_each_row(interior, pw, |y, row| {
            let base = (y + 1) * pw;
            let up = &cur[base - pw..base];
            let mid = &cur[base..base + pw];
            let down = &cur[base + pw..base + 2 * pw];
            let m = y * w;
            let (mn, ms, me, mw, v) = (
                &self.north[m..m + w],
                &self.south[m..m + w],
                &self.east[m..m + w],
                &self.west[m..m + w],
                &self.valid[m..m + w],
            );
            for x in 0..w {
                let u = mid[x + 1];
                let s = up[x + 1] * mn[x] + down[x + 1] * ms[x] + mid[x + 2] * me[x] + mid[x] * mw[x];
                row[x + 1] = u + c * (s - v[x] * u);
            }
        });
    }
}

/// One-shot evolution; builds the stencil for `map` and runs `n_steps`.
pub fn evolve(field: &HeatField, map: &GridMap, n_steps: usize, params: &SolverParams) -> Result<HeatField> {
    map.check_same_shape(field.width, field.height)?;
    HeatSolver::new(map, params)?.evolve(field, n_steps)
}
