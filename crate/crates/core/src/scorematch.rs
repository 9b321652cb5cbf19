//! Denoising score matching for a per-map tabulated score model.
//!
//! The model holds one vector grid per diffusion level and answers queries by
//! bilinear interpolation, the same contract as an exact [`ScoreField`].
//! Training regresses it onto the scores of the collision-avoiding kernels
//! `p_0t(. | x0)` at states drawn from those kernels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, Scenario};
use crate::kernel::{GoalSubset, KernelBuilder, LevelCache, ProbabilityField};
use crate::par::Exec;
use crate::sampler::{lambda, ScoreProvider};
use crate::score::{bilinear, score_field, ScoreField, State, Vec2};
use crate::seed;

/// Inverse-CDF table for repeated draws from a [`ProbabilityField`].
#[derive(Debug, Clone)]
pub struct CategoricalTable {
    width: usize,
    height: usize,
    cdf: Vec<f64>,
}

impl CategoricalTable {
    pub fn new(p: &ProbabilityField) -> Self {
        let mut acc = 0.0;
        let cdf = p
            .values()
            .iter()
            .map(|&v| {
                acc += v;
                acc
            })
            .collect();
        CategoricalTable {
            width: p.width(),
            height: p.height(),
            cdf,
        }
    }

    pub fn draw_cell(&self, rng: &mut impl Rng) -> Cell {
        let total = *self.cdf.last().expect("non-empty field");
        let u = rng.random::<f64>() * total;
        // First index whose cumulative mass exceeds u; zero-mass cells are never picked.
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        Cell::new(i % self.width, i / self.width)
    }

    /// A cell draw plus uniform jitter inside that cell.
    pub fn draw(&self, rng: &mut impl Rng) -> State {
        let c = self.draw_cell(rng);
        let jx: f64 = rng.random::<f64>() - 0.5;
        let jy: f64 = rng.random::<f64>() - 0.5;
        State::new(c.x as f64 + jx, c.y as f64 + jy).clamped(self.width, self.height)
    }
}

/// One draw from `p`: a categorical cell, then uniform jitter within it.
pub fn sample_from_field(p: &ProbabilityField, rng: &mut impl Rng) -> State {
    CategoricalTable::new(p).draw(rng)
}

/// Per-level vector grids queried by bilinear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedScoreModel {
    width: usize,
    height: usize,
    levels: Vec<Vec<Vec2>>,
}

impl TabulatedScoreModel {
    pub fn zeros(width: usize, height: usize, levels: usize) -> Self {
        TabulatedScoreModel {
            width,
            height,
            levels: vec![vec![[0.0; 2]; width * height]; levels],
        }
    }

    pub fn from_fields(fields: &[ScoreField]) -> Result<Self> {
        let first = fields.first().ok_or(Error::Empty("score fields"))?;
        let (width, height) = (first.width(), first.height());
        for f in fields {
            if f.width() != width || f.height() != height {
                return Err(Error::DimensionMismatch {
                    expected_w: width,
                    expected_h: height,
                    got_w: f.width(),
                    got_h: f.height(),
                });
            }
        }
        Ok(TabulatedScoreModel {
            width,
            height,
            levels: fields.iter().map(|f| f.vectors().to_vec()).collect(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, t: usize) -> &[Vec2] {
        &self.levels[t - 1]
    }

    pub fn level_field(&self, t: usize) -> ScoreField {
        ScoreField::from_vectors(self.width, self.height, self.levels[t - 1].clone())
            .expect("model entries stay finite")
    }

    pub fn query(&self, s: State, t: usize) -> Result<Vec2> {
        let (idx, w) = bilinear(s, self.width, self.height)?;
        let grid = &self.levels[t - 1];
        let mut out = [0.0; 2];
        for (&i, &wi) in idx.iter().zip(&w) {
            out[0] += wi * grid[i][0];
            out[1] += wi * grid[i][1];
        }
        Ok(out)
    }
}

impl ScoreProvider for TabulatedScoreModel {
    fn score(&self, s: State, t: usize) -> Vec2 {
        self.query(s, t).unwrap_or([0.0, 0.0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_iterations: usize,
    pub seed: u64,
    /// Minimum `p0` mass for a cell to be used as a training source.
    pub support_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            batch_size: 256,
            n_iterations: 20_000,
            seed: 0,
            support_threshold: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

struct KernelEntry {
    table: CategoricalTable,
    score: ScoreField,
}

/// Lazily built per-source kernels and their score fields.
pub struct KernelTargets<'a> {
    builder: &'a KernelBuilder,
    cache: LevelCache<KernelEntry>,
}

impl<'a> KernelTargets<'a> {
    pub fn new(builder: &'a KernelBuilder) -> Self {
        KernelTargets {
            builder,
            cache: LevelCache::new(),
        }
    }

    fn entry(&self, x0: Cell) -> std::sync::Arc<Vec<KernelEntry>> {
        self.cache.get_or_build(x0, || {
            self.builder
                .kernel_stack(x0)
                .expect("training sources are free cells")
                .iter()
                .map(|p| KernelEntry {
                    table: CategoricalTable::new(p),
                    score: score_field(p),
                })
                .collect()
        })
    }

    /// `grad log p_0t(xt | x0)` from the cached kernel.
    pub fn target(&self, x0: Cell, t: usize, xt: State) -> Vec2 {
        self.entry(x0)[t - 1].score.score_at(xt).unwrap_or([0.0, 0.0])
    }

    pub fn draw_xt(&self, x0: Cell, t: usize, rng: &mut impl Rng) -> State {
        self.entry(x0)[t - 1].table.draw(rng)
    }

    /// Number of distinct sources whose kernels have been built.
    pub fn sources_built(&self) -> usize {
        self.cache.computed()
    }

    pub fn builder(&self) -> &KernelBuilder {
        self.builder
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsmSample {
    pub t: usize,
    pub x0: Cell,
    pub xt: State,
}

/// Mean of `lambda(t) * |model(xt, t) - grad log p_0t(xt | x0)|^2` over the batch.
pub fn dsm_loss(model: &TabulatedScoreModel, targets: &KernelTargets<'_>, batch: &[DsmSample]) -> f64 {
    let schedule = targets.builder.schedule();
    let sum: f64 = batch
        .iter()
        .map(|b| {
            let m = model.query(b.xt, b.t).unwrap_or([0.0, 0.0]);
            let y = targets.target(b.x0, b.t, b.xt);
            let lam = lambda(b.t, schedule, model.width).expect("level within schedule");
            lam * ((m[0] - y[0]).powi(2) + (m[1] - y[1]).powi(2))
        })
        .sum();
    sum / batch.len() as f64
}

/// Draws `(t, x0, xt)` triples: `t` uniform, `x0` from the restricted `p0`,
/// `xt` from the kernel of `x0` at level `t`.
pub fn draw_batch(
    p0_table: &CategoricalTable,
    targets: &KernelTargets<'_>,
    levels: usize,
    size: usize,
    rng: &mut impl Rng,
) -> Vec<DsmSample> {
    (0..size)
        .map(|_| {
            let t = rng.random_range(1..=levels);
            let x0 = p0_table.draw_cell(rng);
            let xt = targets.draw_xt(x0, t, rng);
            DsmSample { t, x0, xt }
        })
        .collect()
}

/// `p0` restricted to cells holding at least `threshold` mass.
pub fn restricted_p0(p0: &ProbabilityField, threshold: f64) -> Result<ProbabilityField> {
    let vals = p0.values().iter().map(|&v| if v >= threshold { v } else { 0.0 }).collect();
    ProbabilityField::from_weights(p0.width(), p0.height(), vals, p0.role())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TabulatedScoreModel,
    /// Batch loss before each update.
    pub losses: Vec<f64>,
    pub sources: usize,
}

/// Plain minibatch SGD on the model entries. Gradients reach the four
/// corner entries of each query through the bilinear weights.
pub fn train(scenario: &Scenario, builder: &KernelBuilder, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    builder.map().check_same_shape(scenario.map.width(), scenario.map.height())?;
    let schedule = *builder.schedule();
    let (w, h) = (scenario.map.width(), scenario.map.height());
    let p0 = builder.goal_distribution(scenario, GoalSubset::All)?;
    let p0_table = CategoricalTable::new(&restricted_p0(&p0, config.support_threshold)?);
    let targets = KernelTargets::new(builder);
    let lambdas: Vec<f64> = (1..=schedule.levels)
        .map(|t| lambda(t, &schedule, w))
        .collect::<Result<_>>()?;

    let mut model = TabulatedScoreModel::zeros(w, h, schedule.levels);
    let mut rng = seed::stream(&[config.seed, 0x4453_4d00]);
    let mut losses = Vec::with_capacity(config.n_iterations);
    let exec = Exec::default();
    let scale = 2.0 * config.learning_rate / config.batch_size as f64;

    for iteration in 0..config.n_iterations {
        let batch = draw_batch(&p0_table, &targets, schedule.levels, config.batch_size, &mut rng);
        // Residuals are computed against the pre-update parameters.
        let residuals: Vec<([usize; 4], [f64; 4], Vec2, f64)> = exec.map_range(batch.len(), |i| {
            let b = &batch[i];
            let (idx, wts) = bilinear(b.xt, w, h).expect("draws are clamped into the domain");
            let grid = &model.levels[b.t - 1];
            let mut m = [0.0; 2];
            for (&j, &wj) in idx.iter().zip(&wts) {
                m[0] += wj * grid[j][0];
                m[1] += wj * grid[j][1];
            }
            let y = targets.target(b.x0, b.t, b.xt);
            (idx, wts, [m[0] - y[0], m[1] - y[1]], lambdas[b.t - 1])
        });
        let loss = residuals
            .iter()
            .map(|(_, _, r, lam)| lam * (r[0] * r[0] + r[1] * r[1]))
            .sum::<f64>()
            / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        losses.push(loss);
        for (b, (idx, wts, r, lam)) in batch.iter().zip(&residuals) {
            let grid = &mut model.levels[b.t - 1];
            for (&j, &wj) in idx.iter().zip(wts) {
                let g = scale * lam * wj;
                grid[j][0] -= g * r[0];
                grid[j][1] -= g * r[1];
            }
        }
    }
    if model.levels.iter().flatten().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            iteration: config.n_iterations,
        });
    }
    Ok(TrainOutcome {
        model,
        losses,
        sources: targets.sources_built(),
    })
}

/// Means of consecutive non-overlapping windows.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    values
        .chunks(window)
        .filter(|c| c.len() == window)
        .map(|c| c.iter().sum::<f64>() / window as f64)
        .collect()
}
