//! Collision-avoiding diffusion kernels.
//!
//! A kernel is a point mass (or a goal distribution) evolved by the insulated
//! heat solver for a dispersion time `k`, then smoothed, masked and
//! normalised into a [`ProbabilityField`]. Obstacles and cells that heat can
//! not reach always carry exactly zero probability.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{component_labels, Cell, GridMap, Scenario};
use crate::heat::{steps_for_dispersion_time, HeatField, HeatSolver, SolverParams};

/// Geometric schedule of dispersion times over the diffusion levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSchedule {
    pub levels: usize,
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for KernelSchedule {
    fn default() -> Self {
        KernelSchedule {
            levels: 10,
            k_min: 12.5,
            k_max: 3612.5,
        }
    }
}

impl KernelSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Config(format!("schedule needs at least 2 levels, got {}", self.levels)));
        }
        if !(self.k_min > 0.0 && self.k_max > self.k_min && self.k_max.is_finite()) {
            return Err(Error::Config(format!(
                "schedule needs 0 < k_min < k_max, got {} and {}",
                self.k_min, self.k_max
            )));
        }
        Ok(())
    }

    pub fn check_level(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.levels {
            return Err(Error::LevelOutOfRange {
                level: t,
                levels: self.levels,
            });
        }
        Ok(())
    }

    /// Dispersion time of level `t` (1-based).
    pub fn k(&self, t: usize) -> Result<f64> {
        self.check_level(t)?;
        if t == self.levels {
            return Ok(self.k_max);
        }
        let frac = (t - 1) as f64 / (self.levels - 1) as f64;
        Ok(self.k_min * (self.k_max / self.k_min).powf(frac))
    }

    /// Standard deviation of the free-space heat kernel at level `t`.
    pub fn sigma(&self, t: usize) -> Result<f64> {
        Ok((2.0 * self.k(t)?).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldRole {
    P0,
    P0t,
    Pt,
    Pgoal,
}

/// Normalised, non-negative field over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField {
    width: usize,
    height: usize,
    values: Vec<f64>,
    role: FieldRole,
}

/// First and second moments of a field, per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
}

impl ProbabilityField {
    /// Normalises arbitrary non-negative values; used for synthetic fields.
    pub fn from_weights(width: usize, height: usize, mut values: Vec<f64>, role: FieldRole) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                got_w: values.len(),
                got_h: 1,
            });
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("probability weights must be finite and non-negative".into()));
        }
        let sum: f64 = values.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroMass);
        }
        values.iter_mut().for_each(|v| *v /= sum);
        Ok(ProbabilityField {
            width,
            height,
            values,
            role,
        })
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

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn at(&self, cell: Cell) -> f64 {
        self.values[cell.y * self.width + cell.x]
    }

    pub fn with_role(mut self, role: FieldRole) -> Self {
        self.role = role;
        self
    }

    /// The same values as an (unnormalised) heat field.
    pub fn to_heat(&self) -> HeatField {
        HeatField::from_raw(self.width, self.height, self.values.clone())
    }

    pub fn moments(&self) -> Moments {
        moments(&self.values, self.width)
    }
}

pub(crate) fn moments(values: &[f64], width: usize) -> Moments {
    let (mut m, mut mx, mut my) = (0.0, 0.0, 0.0);
    for (i, &v) in values.iter().enumerate() {
        m += v;
        mx += v * (i % width) as f64;
        my += v * (i / width) as f64;
    }
    let (mx, my) = (mx / m, my / m);
    let (mut vx, mut vy) = (0.0, 0.0);
    for (i, &v) in values.iter().enumerate() {
        let dx = (i % width) as f64 - mx;
        let dy = (i / width) as f64 - my;
        vx += v * dx * dx;
        vy += v * dy * dy;
    }
    Moments {
        mean_x: mx,
        mean_y: my,
        var_x: vx / m,
        var_y: vy / m,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelParams {
    /// Dispersion time of the goal distribution.
    pub h: f64,
    /// Std of the post-smoothing Gaussian, in cells.
    pub smooth_sigma: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { h: 2.0, smooth_sigma: 1.0 }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        if !(self.smooth_sigma >= 0.0 && self.smooth_sigma.is_finite()) {
            return Err(Error::Config(format!("smooth_sigma must be >= 0, got {}", self.smooth_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalSubset {
    All,
    ReachableOnly,
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian blur with zero padding outside the grid.
fn blur(values: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let (w, h) = (width as isize, height as isize);
    let mut tmp = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let xx = x + k as isize - r;
                if (0..w).contains(&xx) {
                    acc += t * values[(y * w + xx) as usize];
                }
            }
            tmp[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                let yy = y + k as isize - r;
                if (0..h).contains(&yy) {
                    acc += t * tmp[(yy * w + x) as usize];
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

/// Everything needed to build kernels on one map.
#[derive(Debug, Clone)]
pub struct KernelBuilder {
    map: GridMap,
    solver: HeatSolver,
    solver_params: SolverParams,
    params: KernelParams,
    schedule: KernelSchedule,
    labels: Vec<Option<u32>>,
    n_components: u32,
    taps: Option<Vec<f64>>,
}

impl KernelBuilder {
    pub fn new(map: &GridMap, schedule: KernelSchedule, params: KernelParams, solver_params: SolverParams) -> Result<Self> {
        schedule.validate()?;
        params.validate()?;
        let (labels, n_components) = component_labels(map);
        Ok(KernelBuilder {
            map: map.clone(),
            solver: HeatSolver::new(map, &solver_params)?,
            solver_params,
            params,
            schedule,
            labels,
            n_components,
            taps: (params.smooth_sigma > 0.0).then(|| gaussian_taps(params.smooth_sigma)),
        })
    }

    pub fn with_defaults(map: &GridMap) -> Result<Self> {
        Self::new(map, KernelSchedule::default(), KernelParams::default(), SolverParams::default())
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn schedule(&self) -> &KernelSchedule {
        &self.schedule
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn solver(&self) -> &HeatSolver {
        &self.solver
    }

    /// Explicit steps for level `t`.
    pub fn steps(&self, t: usize) -> Result<usize> {
        steps_for_dispersion_time(self.schedule.k(t)?, &self.solver_params)
    }

    /// Smooths, masks and normalises a raw heat field.
    ///
    /// Smoothing is applied per connected free component so that mass never
    /// crosses a wall into a region the heat could not reach.
    pub fn finalize(&self, raw: &HeatField, role: FieldRole) -> Result<ProbabilityField> {
        self.map.check_same_shape(raw.width(), raw.height())?;
        let (w, h) = (self.map.width(), self.map.height());
        let values = raw.values();
        let mut out = match &self.taps {
            None => values
                .iter()
                .zip(&self.labels)
                .map(|(&v, l)| if l.is_some() { v } else { 0.0 })
                .collect(),
            Some(taps) => {
                let mut mass = vec![0.0; self.n_components as usize];
                for (&v, l) in values.iter().zip(&self.labels) {
                    if let Some(l) = l {
                        mass[*l as usize] += v;
                    }
                }
                let mut out = vec![0.0; values.len()];
                for (comp, &m) in mass.iter().enumerate() {
                    if m <= 0.0 {
                        continue;
                    }
                    let comp = Some(comp as u32);
                    let restricted: Vec<f64> = values
                        .iter()
                        .zip(&self.labels)
                        .map(|(&v, l)| if *l == comp { v } else { 0.0 })
                        .collect();
                    let blurred = blur(&restricted, w, h, taps);
                    // Blur spills onto walls; rescale so the component keeps its mass.
                    let kept: f64 = blurred.iter().zip(&self.labels).filter(|(_, l)| **l == comp).map(|(b, _)| b).sum();
                    let rescale = m / kept;
                    for ((o, b), l) in out.iter_mut().zip(blurred).zip(&self.labels) {
                        if *l == comp {
                            *o += b * rescale;
                        }
                    }
                }
                out
            }
        };
        let sum: f64 = out.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::ZeroMass);
        }
        out.iter_mut().for_each(|v| *v /= sum);
        Ok(ProbabilityField {
            width: w,
            height: h,
            values: out,
            role,
        })
    }

    /// Equal-weight point masses at the selected goals, evolved for `h`.
    pub fn goal_distribution(&self, scenario: &Scenario, subset: GoalSubset) -> Result<ProbabilityField> {
        let cells: Vec<Cell> = scenario
            .goals
            .iter()
            .filter(|g| subset == GoalSubset::All || g.reachable)
            .map(|g| g.cell)
            .collect();
        if cells.is_empty() {
            return Err(Error::Empty("goal set"));
        }
        let mut raw = vec![0.0; self.map.len()];
        let w = 1.0 / cells.len() as f64;
        for &c in &cells {
            self.map.check_free(c)?;
            raw[self.map.index(c)] += w;
        }
        let n = steps_for_dispersion_time(self.params.h, &self.solver_params)?;
        let evolved = self.solver.evolve_values(&raw, n);
        let role = match subset {
            GoalSubset::All => FieldRole::P0,
            GoalSubset::ReachableOnly => FieldRole::Pgoal,
        };
        self.finalize(&HeatField::from_raw(self.map.width(), self.map.height(), evolved), role)
    }

    /// `p0` evolved to level `t`, before smoothing and normalisation.
    pub fn perturbed_raw(&self, p0: &ProbabilityField, t: usize) -> Result<HeatField> {
        self.map.check_same_shape(p0.width(), p0.height())?;
        let n = self.steps(t)?;
        Ok(HeatField::from_raw(
            p0.width(),
            p0.height(),
            self.solver.evolve_values(p0.values(), n),
        ))
    }

    pub fn perturbed_distribution(&self, p0: &ProbabilityField, t: usize) -> Result<ProbabilityField> {
        let raw = self.perturbed_raw(p0, t)?;
        self.finalize(&raw, FieldRole::Pt)
    }

    /// Unit point mass at `x0` evolved to level `t`, before finalisation.
    pub fn kernel_raw(&self, x0: Cell, t: usize) -> Result<HeatField> {
        let delta = HeatField::delta(&self.map, x0, 1.0)?;
        let n = self.steps(t)?;
        self.solver.evolve(&delta, n)
    }

    pub fn kernel_from_source(&self, x0: Cell, t: usize) -> Result<ProbabilityField> {
        let raw = self.kernel_raw(x0, t)?;
        self.finalize(&raw, FieldRole::P0t)
    }

    /// All levels `1..=T` for a starting field, evolving incrementally.
    pub fn level_stack(&self, start: &HeatField, role: FieldRole) -> Result<Vec<ProbabilityField>> {
        self.map.check_same_shape(start.width(), start.height())?;
        let mut values = start.values().to_vec();
        let mut done = 0;
        let mut out = Vec::with_capacity(self.schedule.levels);
        for t in 1..=self.schedule.levels {
            let n = self.steps(t)?;
            values = self.solver.evolve_values(&values, n - done);
            done = n;
            out.push(self.finalize(&HeatField::from_raw(start.width(), start.height(), values.clone()), role)?);
        }
        Ok(out)
    }

    /// `p_t` for every level of the schedule.
    pub fn perturbed_stack(&self, p0: &ProbabilityField) -> Result<Vec<ProbabilityField>> {
        self.level_stack(&p0.to_heat(), FieldRole::Pt)
    }

    pub fn kernel_stack(&self, x0: Cell) -> Result<Vec<ProbabilityField>> {
        self.level_stack(&HeatField::delta(&self.map, x0, 1.0)?, FieldRole::P0t)
    }
}

/// Per-source, per-level cache. Each source is computed at most once; readers
/// of an entry being computed block until it is ready.
pub struct LevelCache<V> {
    entries: Mutex<HashMap<Cell, Arc<OnceLock<Arc<Vec<V>>>>>>,
    computed: AtomicUsize,
}

impl<V> Default for LevelCache<V> {
    fn default() -> Self {
        LevelCache {
            entries: Mutex::new(HashMap::new()),
            computed: AtomicUsize::new(0),
        }
    }
}

impl<V> LevelCache<V> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the levels for `source`, building them with `build` on first use.
    pub fn get_or_build(&self, source: Cell, build: impl FnOnce() -> Vec<V>) -> Arc<Vec<V>> {
        let slot = {
            let mut entries = self.entries.lock().expect("cache lock poisoned");
            entries.entry(source).or_default().clone()
        };
        slot.get_or_init(|| {
            self.computed.fetch_add(1, Ordering::Relaxed);
            Arc::new(build())
        })
        .clone()
    }

    /// Number of sources built so far.
    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }
}
