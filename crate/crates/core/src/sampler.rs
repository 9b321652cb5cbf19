//! Annealed Langevin dynamics over the diffusion levels.
//!
//! The update runs in normalised coordinates `u = x / L`, where `L` is the
//! configured coordinate scale (half the map width by default), so the step
//! sizes `alpha_t` are independent of the grid resolution. Scores supplied in
//! cell units are rescaled accordingly.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridMap, Scenario};
use crate::kernel::{KernelSchedule, ProbabilityField};
use crate::score::{score_field, ScoreField, State, Vec2};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    Standard,
    Modified,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub inner_iters: usize,
    pub mode: SamplerMode,
    pub k1: f64,
    pub k2: f64,
    pub max_reject: u32,
    /// Cells per unit of sampler coordinates; `None` means half the map width.
    pub coord_scale: Option<f64>,
    /// Upper bound on the drift displacement of one step, in cells.
    pub max_drift: f64,
    /// Multiplier on the Langevin noise; 1 is the sampler proper, 0 a
    /// deterministic ascent on the same scores.
    pub noise_scale: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            epsilon: 0.0008,
            inner_iters: 100,
            mode: SamplerMode::Modified,
            k1: 0.6,
            k2: 0.4,
            max_reject: 32,
            coord_scale: None,
            max_drift: 1.0,
            noise_scale: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.inner_iters == 0 {
            return bad("inner_iters must be at least 1".into());
        }
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return bad(format!("k1 and k2 must be positive, got {} and {}", self.k1, self.k2));
        }
        if self.max_reject == 0 {
            return bad("max_reject must be at least 1".into());
        }
        if let Some(l) = self.coord_scale {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("coord_scale must be positive, got {l}"));
            }
        }
        if !(self.max_drift > 0.0) {
            return bad(format!("max_drift must be positive, got {}", self.max_drift));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale must be non-negative, got {}", self.noise_scale));
        }
        Ok(())
    }

    pub fn scale_for(&self, width: usize) -> f64 {
        self.coord_scale.unwrap_or(width as f64 / 2.0)
    }

    /// Total Langevin steps of one unfrozen run.
    pub fn total_steps(&self, schedule: &KernelSchedule) -> usize {
        schedule.levels * self.inner_iters
    }
}

/// `lambda(t) = f(sigma_t)^2` with `f(sigma) = min(sigma, width / 2)`.
pub fn lambda(t: usize, schedule: &KernelSchedule, width: usize) -> Result<f64> {
    let sigma = schedule.sigma(t)?;
    let f = sigma.min(width as f64 / 2.0);
    Ok(f * f)
}

/// Step size `epsilon * lambda(t) / lambda(T)`.
pub fn alpha(t: usize, schedule: &KernelSchedule, config: &SamplerConfig, width: usize) -> Result<f64> {
    let top = lambda(schedule.levels, schedule, width)?;
    Ok(config.epsilon * lambda(t, schedule, width)? / top)
}

fn drift_coeff(alpha_t: f64, mode: SamplerMode, k1: f64) -> f64 {
    match mode {
        SamplerMode::Standard => alpha_t,
        SamplerMode::Modified => alpha_t.powf(k1),
    }
}

fn noise_scale(alpha_t: f64, mode: SamplerMode, k1: f64, k2: f64) -> f64 {
    match mode {
        SamplerMode::Standard => alpha_t.sqrt(),
        SamplerMode::Modified => alpha_t.powf((k1 + k2) / 2.0),
    }
}

/// One Langevin update. Standard: `s + a/2 * score + sqrt(a) * z`;
/// modified: `s + a^k1/2 * score + a^((k1+k2)/2) * z`.
pub fn langevin_step(s: State, score: Vec2, alpha_t: f64, noise: Vec2, mode: SamplerMode, k1: f64, k2: f64) -> State {
    let d = drift_coeff(alpha_t, mode, k1) / 2.0;
    let n = noise_scale(alpha_t, mode, k1, k2);
    State::new(s.x + d * score[0] + n * noise[0], s.y + d * score[1] + n * noise[1])
}

/// Source of scores in cell units, per level `t` in `1..=T`.
pub trait ScoreProvider: Sync {
    /// Score at `s`, which the caller has already clamped into the domain.
    fn score(&self, s: State, t: usize) -> Vec2;
}

/// Exact score fields, one per level.
#[derive(Debug, Clone)]
pub struct ScoreStack {
    levels: Vec<ScoreField>,
}

impl ScoreStack {
    pub fn new(levels: Vec<ScoreField>) -> Self {
        ScoreStack { levels }
    }

    pub fn from_fields(fields: &[ProbabilityField]) -> Self {
        ScoreStack {
            levels: fields.iter().map(score_field).collect(),
        }
    }

    pub fn level(&self, t: usize) -> &ScoreField {
        &self.levels[t - 1]
    }

    pub fn levels(&self) -> &[ScoreField] {
        &self.levels
    }
}

impl ScoreProvider for ScoreStack {
    fn score(&self, s: State, t: usize) -> Vec2 {
        self.levels[t - 1].score_at(s).unwrap_or([0.0, 0.0])
    }
}

/// A fixed score function for every level.
pub struct FnScore<F>(pub F);

impl<F: Fn(State, usize) -> Vec2 + Sync> ScoreProvider for FnScore<F> {
    fn score(&self, s: State, t: usize) -> Vec2 {
        (self.0)(s, t)
    }
}

/// What happens when a proposal leaves free space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionPolicy {
    /// Redraw the noise; freeze after `max_reject` consecutive failures.
    Reject,
    /// Freeze as soon as a proposal touches an obstacle. Proposals leaving
    /// the map are still redrawn as under `Reject`.
    Freeze,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFlags {
    pub accepted: bool,
    pub rejected: u32,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub steps: Vec<StepFlags>,
    pub frozen: bool,
    pub seed: u64,
}

impl Trajectory {
    pub fn final_state(&self) -> State {
        *self.states.last().expect("trajectory holds its initial state")
    }

    pub fn record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            seed: self.seed,
            frozen: self.frozen,
            states: self.states.clone(),
        }
    }
}

/// One JSON-lines row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub frozen: bool,
    pub states: Vec<State>,
}

pub fn write_jsonl<'a>(records: impl IntoIterator<Item = &'a TrajectoryRecord>) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl(text: &str) -> Result<Vec<TrajectoryRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Counters from one run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub final_state: State,
    pub frozen: bool,
    pub proposals: u64,
    pub rejections: u64,
    pub steps: usize,
}

/// Spacing of the collision probes along a proposed move, in cells.
pub const SEGMENT_STEP: f64 = 0.25;

/// The annealing loop. `visit` sees every recorded state after the initial one.
#[allow(clippy::too_many_arguments)]
pub fn run_langevin(
    map: &GridMap,
    provider: &dyn ScoreProvider,
    x_init: State,
    schedule: &KernelSchedule,
    config: &SamplerConfig,
    seed: u64,
    policy: CollisionPolicy,
    mut visit: impl FnMut(State, StepFlags),
) -> Result<RunSummary> {
    config.validate()?;
    schedule.validate()?;
    let (w, h) = (map.width(), map.height());
    if !map.is_free_at(x_init.x, x_init.y) || !x_init.in_domain(w, h) {
        return match map.cell_at(x_init.x, x_init.y) {
            Some(c) => Err(Error::ObstacleCell { x: c.x, y: c.y }),
            None => Err(Error::OutOfDomain {
                x: x_init.x,
                y: x_init.y,
                max_x: (w - 1) as f64,
                max_y: (h - 1) as f64,
            }),
        };
    }
    let scale = config.scale_for(w);
    let mut rng = seed::rng(seed);
    let mut cur = x_init;
    let mut summary = RunSummary {
        final_state: x_init,
        frozen: false,
        proposals: 0,
        rejections: 0,
        steps: 0,
    };
    for t in (1..=schedule.levels).rev() {
        let a = alpha(t, schedule, config, w)?;
        let drift_per_score = drift_coeff(a, config.mode, config.k1) / 2.0 * scale * scale;
        for _ in 0..config.inner_iters {
            let mut sc = provider.score(cur.clamped(w, h), t);
            let drift = drift_per_score * sc[0].hypot(sc[1]);
            if drift > config.max_drift {
                let shrink = config.max_drift / drift;
                sc = [sc[0] * shrink, sc[1] * shrink];
            }
            let su = State::new(cur.x / scale, cur.y / scale);
            let score_u = [sc[0] * scale, sc[1] * scale];
            let mut rejected = 0u32;
            let mut frozen = false;
            loop {
                let z: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let z = [z[0] * config.noise_scale, z[1] * config.noise_scale];
                let pu = langevin_step(su, score_u, a, z, config.mode, config.k1, config.k2);
                let prop = State::new(pu.x * scale, pu.y * scale);
                summary.proposals += 1;
                let inside = prop.in_domain(w, h);
                if inside && map.segment_is_free((cur.x, cur.y), (prop.x, prop.y), SEGMENT_STEP) {
                    cur = prop;
                    break;
                }
                summary.rejections += 1;
                rejected += 1;
                let hit_obstacle = inside && policy == CollisionPolicy::Freeze;
                if hit_obstacle || rejected >= config.max_reject {
                    frozen = true;
                    break;
                }
            }
            summary.steps += 1;
            let flags = StepFlags {
                accepted: !frozen,
                rejected,
                frozen,
            };
            if frozen {
                visit(cur, flags);
                summary.frozen = true;
                summary.final_state = cur;
                return Ok(summary);
            }
            visit(cur, flags);
        }
    }
    summary.final_state = cur;
    Ok(summary)
}

/// Full trajectory with per-step flags.
pub fn sample_trajectory(
    scenario: &Scenario,
    provider: &dyn ScoreProvider,
    x_init: State,
    schedule: &KernelSchedule,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Trajectory> {
    trace(&scenario.map, provider, x_init, schedule, config, seed, CollisionPolicy::Reject)
}

pub(crate) fn trace(
    map: &GridMap,
    provider: &dyn ScoreProvider,
    x_init: State,
    schedule: &KernelSchedule,
    config: &SamplerConfig,
    seed: u64,
    policy: CollisionPolicy,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(config.total_steps(schedule) + 1);
    let mut steps = Vec::with_capacity(config.total_steps(schedule));
    states.push(x_init);
    let summary = run_langevin(map, provider, x_init, schedule, config, seed, policy, |s, f| {
        if !f.frozen {
            states.push(s);
        }
        steps.push(f);
    })?;
    Ok(Trajectory {
        states,
        steps,
        frozen: summary.frozen,
        seed,
    })
}

/// Uniform draw inside the scenario's initial region.
pub fn initial_state(scenario: &Scenario, seed: u64) -> State {
    let mut rng = seed::stream(&[seed, 0x494e_4954]);
    let r = scenario.initial_region;
    let cx = r.x + rng.random_range(0..r.w);
    let cy = r.y + rng.random_range(0..r.h);
    let jx: f64 = rng.random::<f64>() - 0.5;
    let jy: f64 = rng.random::<f64>() - 0.5;
    State::new(cx as f64 + jx, cy as f64 + jy).clamped(scenario.map.width(), scenario.map.height())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, Rect};

    fn cfg() -> SamplerConfig {
        SamplerConfig::default()
    }

    #[test]
    fn alpha_endpoints() {
        let s = KernelSchedule::default();
        assert_eq!(alpha(10, &s, &cfg(), 64).unwrap(), 0.0008);
        // sigma_1 = 5, lambda_1 = 25; sigma_T = 85 capped at 32, lambda_T = 1024.
        let expect = 0.0008 * 25.0 / 1024.0;
        assert!((alpha(1, &s, &cfg(), 64).unwrap() - expect).abs() < 1e-18);
        assert!((expect - 1.953e-5).abs() < 1e-8);
        let top = alpha(10, &s, &cfg(), 64).unwrap();
        let mut prev = 0.0;
        for t in 1..=10 {
            let a = alpha(t, &s, &cfg(), 64).unwrap();
            assert!(a <= top && a >= prev);
            prev = a;
        }
        assert!(alpha(0, &s, &cfg(), 64).is_err());
        assert!(alpha(11, &s, &cfg(), 64).is_err());
    }

    #[test]
    fn step_arithmetic() {
        let s = State::new(3.0, 4.0);
        for mode in [SamplerMode::Standard, SamplerMode::Modified] {
            assert_eq!(langevin_step(s, [0.0, 0.0], 0.0008, [0.0, 0.0], mode, 0.6, 0.4), s);
        }
        let out = langevin_step(s, [1.0, 0.0], 0.0008, [0.0, 0.0], SamplerMode::Standard, 0.6, 0.4);
        assert!((out.x - 3.0004).abs() < 1e-15 && out.y == 4.0);

        let drift = langevin_step(State::new(0.0, 0.0), [1.0, 0.0], 0.0008, [0.0, 0.0], SamplerMode::Modified, 0.6, 0.4);
        let noise = langevin_step(State::new(0.0, 0.0), [0.0, 0.0], 0.0008, [1.0, 0.0], SamplerMode::Modified, 0.6, 0.4);
        let a06 = (0.6 * 0.0008f64.ln()).exp();
        assert!((drift.x - a06 / 2.0).abs() < 1e-15);
        assert!((a06 / 2.0 - 0.0069314).abs() < 1e-6);
        assert!((noise.x - 0.0008f64.sqrt()).abs() < 1e-15);
        assert!((noise.x - 0.02828).abs() < 1e-5);
    }

    fn chamber_scenario() -> Scenario {
        // 4x4 chamber in the top-left, goal far away outside it.
        let map = GridMap::from_fn(24, 24, |x, y| (x == 5 && y <= 5) || (y == 5 && x <= 5)).unwrap();
        Scenario::new(map, &[Cell::new(18, 18)], Rect { x: 1, y: 1, w: 3, h: 3 }, 0).unwrap()
    }

    #[test]
    fn sealed_start_never_escapes() {
        let s = chamber_scenario();
        let b = crate::kernel::KernelBuilder::with_defaults(&s.map).unwrap();
        let p0 = b.goal_distribution(&s, crate::kernel::GoalSubset::All).unwrap();
        let stack = ScoreStack::from_fields(&b.perturbed_stack(&p0).unwrap());
        let sched = KernelSchedule::default();
        for seed in 0..5 {
            let tr = sample_trajectory(&s, &stack, initial_state(&s, seed), &sched, &cfg(), seed).unwrap();
            assert!(tr.states.iter().all(|st| st.x < 4.5 && st.y < 4.5), "escaped");
            assert!(tr.states.iter().all(|st| s.map.is_free_at(st.x, st.y)));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = chamber_scenario();
        let zero = FnScore(|_: State, _: usize| [0.0, 0.0]);
        let sched = KernelSchedule::default();
        let x = State::new(2.0, 2.0);
        let a = sample_trajectory(&s, &zero, x, &sched, &cfg(), 9).unwrap();
        let b = sample_trajectory(&s, &zero, x, &sched, &cfg(), 9).unwrap();
        let c = sample_trajectory(&s, &zero, x, &sched, &cfg(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn start_in_obstacle_is_error() {
        let s = chamber_scenario();
        let zero = FnScore(|_: State, _: usize| [0.0, 0.0]);
        let r = sample_trajectory(&s, &zero, State::new(5.0, 2.0), &KernelSchedule::default(), &cfg(), 0);
        assert!(matches!(r, Err(Error::ObstacleCell { x: 5, y: 2 })));
    }

    #[test]
    fn length_and_freeze_accounting() {
        let s = chamber_scenario();
        let sched = KernelSchedule::default();
        let zero = FnScore(|_: State, _: usize| [0.0, 0.0]);
        let tr = sample_trajectory(&s, &zero, State::new(2.0, 2.0), &sched, &cfg(), 1).unwrap();
        if !tr.frozen {
            assert_eq!(tr.states.len(), 1001);
            assert_eq!(tr.steps.len(), 1000);
        }
        // A score that always pushes far outside the map freezes at once.
        let push = FnScore(|_: State, _: usize| [-1e9, 0.0]);
        let c = SamplerConfig { max_drift: 1e12, ..cfg() };
        let tr = sample_trajectory(&s, &push, State::new(2.0, 2.0), &sched, &c, 1).unwrap();
        assert!(tr.frozen);
        assert_eq!(tr.states.len(), 1);
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.steps[0].rejected, c.max_reject);
    }

    #[test]
    fn jsonl_round_trip() {
        let r = TrajectoryRecord {
            seed: 3,
            frozen: false,
            states: vec![State::new(1.0, 2.5), State::new(1.25, 2.0)],
        };
        let text = write_jsonl([&r]).unwrap();
        assert_eq!(text, "{\"seed\":3,\"frozen\":false,\"states\":[[1.0,2.5],[1.25,2.0]]}\n");
        assert_eq!(read_jsonl(&text).unwrap(), vec![r]);
    }
}
