//! Benchmark protocol: success rate and KL divergence over seeded episodes.

use serde::{Deserialize, Serialize};

use crate::baselines::{bc_fit_horizon, bc_rollout, gaussian_diffusion_sample, gaussian_plus_rrt, RRTStarConfig};
use crate::error::{Error, Result};
use crate::grid::{generate_scenario, GridMap, MapGenConfig, Scenario, ScenarioKind};
use crate::heat::SolverParams;
use crate::kernel::{GoalSubset, KernelBuilder, KernelParams, KernelSchedule, ProbabilityField};
use crate::par::Exec;
use crate::sampler::{initial_state, run_langevin, sample_trajectory, CollisionPolicy, SamplerConfig, ScoreProvider, ScoreStack};
use crate::score::State;
use crate::scorematch::{train, TrainConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_episodes: usize,
    pub n_samples: usize,
    pub success_radius: f64,
    pub kl_smoothing: f64,
    pub base_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_episodes: 100,
            n_samples: 100,
            success_radius: 3.0,
            kl_smoothing: 1e-9,
            base_seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 || self.n_samples == 0 {
            return Err(Error::Config("n_episodes and n_samples must be positive".into()));
        }
        if !(self.success_radius > 0.0) {
            return Err(Error::Config("success_radius must be positive".into()));
        }
        if !(self.kl_smoothing > 0.0) {
            return Err(Error::Config("kl_smoothing must be positive".into()));
        }
        Ok(())
    }

    pub fn sample_seed(&self, episode: usize, sample: usize) -> u64 {
        seed::hash64(&[self.base_seed, episode as u64, sample as u64])
    }
}

/// Percentage of states within `radius` of a reachable goal centre.
pub fn success_rate(finals: &[State], scenario: &Scenario, radius: f64) -> f64 {
    if finals.is_empty() {
        return 0.0;
    }
    let hits = finals.iter().filter(|s| hits_reachable(scenario, **s, radius)).count();
    100.0 * hits as f64 / finals.len() as f64
}

fn hits_reachable(scenario: &Scenario, s: State, radius: f64) -> bool {
    scenario.reachable_goals().any(|g| s.distance(State::center_of(g.cell)) <= radius)
}

/// `KL(p_goal || q)` where `q` is the nearest-cell histogram of `finals`,
/// smoothed by `delta` over the free cells of `map`.
pub fn kl_divergence(finals: &[State], p_goal: &ProbabilityField, map: &GridMap, delta: f64) -> Result<f64> {
    map.check_same_shape(p_goal.width(), p_goal.height())?;
    if finals.is_empty() {
        return Err(Error::Empty("final states"));
    }
    let (w, h) = (map.width(), map.height());
    let mut counts = vec![0usize; w * h];
    for s in finals {
        let c = s.clamped(w, h);
        let cell = map.cell_at(c.x, c.y).expect("clamped into the grid");
        counts[map.index(cell)] += 1;
    }
    let n = finals.len() as f64;
    let free = map.obstacles().iter().map(|&o| !o);
    let norm: f64 = counts
        .iter()
        .zip(free)
        .filter(|(_, f)| *f)
        .map(|(&c, _)| c as f64 / n + delta)
        .sum();
    let mut kl = 0.0;
    for (i, &p) in p_goal.values().iter().enumerate() {
        if p > 0.0 {
            let q = (counts[i] as f64 / n + delta) / norm;
            kl += p * (p / q).ln();
        }
    }
    Ok(kl)
}

/// Result of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOutcome {
    pub final_state: State,
    pub frozen: bool,
    pub proposals: u64,
    pub rejections: u64,
    /// Recorded states (including the initial one).
    pub states: u64,
    /// Recorded states outside free space.
    pub violations: u64,
}

impl SampleOutcome {
    pub fn frozen_at(x: State) -> Self {
        SampleOutcome {
            final_state: x,
            frozen: true,
            proposals: 0,
            rejections: 0,
            states: 1,
            violations: 0,
        }
    }

    fn from_states(map: &GridMap, states: &[State], frozen: bool) -> Self {
        SampleOutcome {
            final_state: *states.last().expect("non-empty"),
            frozen,
            proposals: 0,
            rejections: 0,
            states: states.len() as u64,
            violations: states.iter().filter(|s| !map.is_free_at(s.x, s.y)).count() as u64,
        }
    }
}

/// A planner bound to one scenario.
pub trait PreparedPlanner: Sync {
    fn sample(&self, x_init: State, seed: u64) -> Result<SampleOutcome>;
}

/// A planner that can be set up on any scenario.
pub trait Planner: Sync {
    fn name(&self) -> &str;
    fn prepare<'a>(&'a self, scenario: &'a Scenario) -> Result<Box<dyn PreparedPlanner + 'a>>;
}

/// Shared kernel settings for planners that build heat kernels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelSetup {
    pub schedule: KernelSchedule,
    pub params: KernelParams,
    pub solver: SolverParams,
}

impl KernelSetup {
    pub fn builder(&self, map: &GridMap) -> Result<KernelBuilder> {
        KernelBuilder::new(map, self.schedule, self.params, self.solver)
    }

    /// Exact score stack of `p_t` for all goals of `scenario`.
    pub fn score_stack(&self, scenario: &Scenario) -> Result<ScoreStack> {
        let b = self.builder(&scenario.map)?;
        let p0 = b.goal_distribution(scenario, GoalSubset::All)?;
        Ok(ScoreStack::from_fields(&b.perturbed_stack(&p0)?))
    }
}

fn langevin_outcome(
    map: &GridMap,
    provider: &dyn ScoreProvider,
    x_init: State,
    schedule: &KernelSchedule,
    config: &SamplerConfig,
    seed: u64,
) -> Result<SampleOutcome> {
    let mut states = 1u64;
    let mut violations = u64::from(!map.is_free_at(x_init.x, x_init.y));
    let r = run_langevin(map, provider, x_init, schedule, config, seed, CollisionPolicy::Reject, |s, f| {
        if !f.frozen {
            states += 1;
            violations += u64::from(!map.is_free_at(s.x, s.y));
        }
    })?;
    Ok(SampleOutcome {
        final_state: r.final_state,
        frozen: r.frozen,
        proposals: r.proposals,
        rejections: r.rejections,
        states,
        violations,
    })
}

struct StackPlanner<'a, P> {
    map: &'a GridMap,
    provider: P,
    schedule: KernelSchedule,
    sampler: SamplerConfig,
}

impl<P: ScoreProvider> PreparedPlanner for StackPlanner<'_, P> {
    fn sample(&self, x_init: State, seed: u64) -> Result<SampleOutcome> {
        langevin_outcome(self.map, &self.provider, x_init, &self.schedule, &self.sampler, seed)
    }
}

/// Langevin sampling on exact collision-avoiding scores.
#[derive(Debug, Clone, Default)]
pub struct HeatDiffusion {
    pub kernel: KernelSetup,
    pub sampler: SamplerConfig,
}

impl Planner for HeatDiffusion {
    fn name(&self) -> &str {
        "ours"
    }

    fn prepare<'a>(&'a self, scenario: &'a Scenario) -> Result<Box<dyn PreparedPlanner + 'a>> {
        Ok(Box::new(StackPlanner {
            map: &scenario.map,
            provider: self.kernel.score_stack(scenario)?,
            schedule: self.kernel.schedule,
            sampler: self.sampler,
        }))
    }
}

/// Langevin sampling on a score model trained by denoising score matching.
#[derive(Debug, Clone, Default)]
pub struct TrainedDiffusion {
    pub kernel: KernelSetup,
    pub sampler: SamplerConfig,
    pub train: TrainConfig,
}

impl Planner for TrainedDiffusion {
    fn name(&self) -> &str {
        "ours-trained"
    }

    fn prepare<'a>(&'a self, scenario: &'a Scenario) -> Result<Box<dyn PreparedPlanner + 'a>> {
        let b = self.kernel.builder(&scenario.map)?;
        let cfg = TrainConfig {
            seed: seed::hash64(&[self.train.seed, scenario.seed]),
            ..self.train
        };
        let model = train(scenario, &b, &cfg)?.model;
        Ok(Box::new(StackPlanner {
            map: &scenario.map,
            provider: model,
            schedule: self.kernel.schedule,
            sampler: self.sampler,
        }))
    }
}

#[derive(Debug, Clone, Default)]
pub struct GaussianDiffusion {
    pub schedule: KernelSchedule,
    pub sampler: SamplerConfig,
}

struct GaussianPrepared<'a> {
    planner: &'a GaussianDiffusion,
    scenario: &'a Scenario,
}

impl PreparedPlanner for GaussianPrepared<'_> {
    fn sample(&self, x_init: State, seed: u64) -> Result<SampleOutcome> {
        let p = self.planner;
        let tr = gaussian_diffusion_sample(self.scenario, x_init, &p.schedule, &p.sampler, seed)?;
        let mut out = SampleOutcome::from_states(&self.scenario.map, &tr.states, tr.frozen);
        out.proposals = tr.steps.len() as u64;
        out.rejections = tr.steps.iter().map(|s| s.rejected as u64).sum();
        Ok(out)
    }
}

impl Planner for GaussianDiffusion {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn prepare<'a>(&'a self, scenario: &'a Scenario) -> Result<Box<dyn PreparedPlanner + 'a>> {
        Ok(Box::new(GaussianPrepared { planner: self, scenario }))
    }
}

#[derive(Debug, Clone, Default)]
pub struct GaussianRrt {
    pub schedule: KernelSchedule,
    pub sampler: SamplerConfig,
    pub rrt: RRTStarConfig,
}

struct GaussianRrtPrepared<'a> {
    planner: &'a GaussianRrt,
    scenario: &'a Scenario,
}

impl PreparedPlanner for GaussianRrtPrepared<'_> {
    fn sample(&self, x_init: State, seed: u64) -> Result<SampleOutcome> {
        let p = self.planner;
        let tr = gaussian_plus_rrt(self.scenario, x_init, &p.schedule, &p.sampler, &p.rrt, seed)?;
        Ok(SampleOutcome::from_states(&self.scenario.map, &tr.states, tr.frozen))
    }
}

impl Planner for GaussianRrt {
    fn name(&self) -> &str {
        "gaussian+rrt"
    }

    fn prepare<'a>(&'a self, scenario: &'a Scenario) -> Result<Box<dyn PreparedPlanner + 'a>> {
        Ok(Box::new(GaussianRrtPrepared { planner: self, scenario }))
    }
}

/// Behaviour cloning of primary-method experts, one expert set per
/// reachable goal, pooled.
#[derive(Debug, Clone)]
pub struct BehaviorCloning {
    pub kernel: KernelSetup,
    pub sampler: SamplerConfig,
    pub experts_per_goal: usize,
    /// Noise scale of the expert runs; 1 runs the primary sampler unchanged.
    pub expert_noise: f64,
    /// Rollout length; `None` uses the sampler's total step count.
    pub rollout_steps: Option<usize>,
    /// Experts are cut at their first state within this distance of the
    /// goal. Annealed runs overshoot at the coarse levels and double back,
    /// which a time-blind cell average turns into sinks.
    pub expert_cutoff: Option<f64>,
    /// Steps over which expert velocity is averaged to form each label.
    pub horizon: usize,
}

impl Default for BehaviorCloning {
    fn default() -> Self {
        BehaviorCloning {
            kernel: KernelSetup::default(),
            sampler: SamplerConfig::default(),
            experts_per_goal: 2048,
            expert_noise: 1.0,
            rollout_steps: None,
            expert_cutoff: Some(3.0),
            horizon: 30,
        }
    }
}

struct BcPrepared<'a> {
    model: crate::baselines::BCFieldModel,
    scenario: &'a Scenario,
    steps: usize,
}

impl PreparedPlanner for BcPrepared<'_> {
    fn sample(&self, x_init: State, _seed: u64) -> Result<SampleOutcome> {
        let tr = bc_rollout(&self.model, self.scenario, x_init, self.steps)?;
        Ok(SampleOutcome::from_states(&self.scenario.map, &tr.states, tr.frozen))
    }
}

impl Planner for BehaviorCloning {
    fn name(&self) -> &str {
        "bc"
    }

    fn prepare<'a>(&'a self, scenario: &'a Scenario) -> Result<Box<dyn PreparedPlanner + 'a>> {
        let expert = SamplerConfig {
            noise_scale: self.expert_noise,
            ..self.sampler
        };
        let mut experts = Vec::new();
        for (gi, goal) in scenario.goals.iter().enumerate() {
            if !goal.reachable {
                continue;
            }
            let single = scenario.single_goal(gi);
            let stack = self.kernel.score_stack(&single)?;
            for j in 0..self.experts_per_goal {
                let s = seed::hash64(&[scenario.seed, 0x4243, gi as u64, j as u64]);
                let x = initial_state(scenario, s);
                let mut tr = sample_trajectory(&single, &stack, x, &self.kernel.schedule, &expert, s)?;
                if let Some(r) = self.expert_cutoff {
                    let g = State::center_of(goal.cell);
                    if let Some(i) = tr.states.iter().position(|s| s.distance(g) <= r) {
                        tr.states.truncate(i + 1);
                        tr.steps.truncate(i);
                    }
                }
                experts.push(tr);
            }
        }
        let model = bc_fit_horizon(&experts, scenario.map.width(), scenario.map.height(), self.horizon)?;
        Ok(Box::new(BcPrepared {
            model,
            scenario,
            steps: self.rollout_steps.unwrap_or(self.sampler.total_steps(&self.kernel.schedule)),
        }))
    }
}

/// Aggregates for one (model, scenario kind) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub samples: u64,
    pub successes: u64,
    pub frozen: u64,
    pub failed_episodes: u64,
    /// Finals within the success radius of each goal, by goal index.
    pub goal_hits: Vec<u64>,
    /// Finals within the success radius of an unreachable goal.
    pub near_unreachable: u64,
    pub proposals: u64,
    pub rejections: u64,
    pub recorded_states: u64,
    pub collision_violations: u64,
    /// Per-episode success percentages.
    pub episode_success: Vec<f64>,
}

impl Diagnostics {
    pub fn rejection_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.rejections as f64 / self.proposals as f64
        }
    }

    /// Share of successful samples captured by each goal.
    pub fn goal_shares(&self) -> Vec<f64> {
        let total: u64 = self.goal_hits.iter().sum();
        self.goal_hits
            .iter()
            .map(|&h| if total == 0 { 0.0 } else { h as f64 / total as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub scenario: ScenarioKind,
    pub success_rate: f64,
    /// Mean of per-episode KL values, in nats.
    pub kl_divergence: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

pub const CSV_HEADER: &str = "model,scenario,success_rate,kl_divergence";

impl MetricsTable {
    pub fn get(&self, model: &str, kind: ScenarioKind) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.model == model && r.scenario == kind)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{},{},{:.4},{:.6}\n", r.model, r.scenario, r.success_rate, r.kl_divergence));
        }
        out
    }
}

/// A compact identifier of the build that produced a report.
pub fn build_id() -> &'static str {
    env!("HEATPLAN_BUILD_ID")
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<'a, C: Serialize> {
    pub build: &'static str,
    pub config: &'a C,
    pub metrics: &'a MetricsTable,
}

struct EpisodeResult {
    outcomes: Vec<SampleOutcome>,
    failed: bool,
    kl: f64,
    scenario: Scenario,
}

fn run_episode(planner: &dyn Planner, scenario: Scenario, p_goal: &ProbabilityField, episode: usize, config: &EvalConfig) -> Result<EpisodeResult> {
    let exec = Exec::default();
    let inits: Vec<(u64, State)> = (0..config.n_samples)
        .map(|j| {
            let s = config.sample_seed(episode, j);
            (s, initial_state(&scenario, s))
        })
        .collect();
    let (outcomes, failed) = match planner.prepare(&scenario) {
        Ok(prepared) => {
            let outs = exec.map_range(inits.len(), |j| {
                let (s, x) = inits[j];
                prepared.sample(x, s).unwrap_or_else(|_| SampleOutcome::frozen_at(x))
            });
            (outs, false)
        }
        Err(_) => (inits.iter().map(|&(_, x)| SampleOutcome::frozen_at(x)).collect(), true),
    };
    let finals: Vec<State> = outcomes.iter().map(|o| o.final_state).collect();
    let kl = kl_divergence(&finals, p_goal, &scenario.map, config.kl_smoothing)?;
    Ok(EpisodeResult {
        outcomes,
        failed,
        kl,
        scenario,
    })
}

/// Runs every planner on `n_episodes` generated scenarios of each kind.
/// Episode `i` uses map seed `base_seed + i`; results do not depend on the
/// degree of parallelism.
pub fn run_benchmark(
    planners: &[&dyn Planner],
    kinds: &[ScenarioKind],
    mapgen: &MapGenConfig,
    kernel: &KernelSetup,
    config: &EvalConfig,
) -> Result<MetricsTable> {
    config.validate()?;
    let mut table = MetricsTable::default();
    for &kind in kinds {
        let cfg = mapgen.clone().with_kind(kind);
        let scenarios: Vec<Result<(Scenario, ProbabilityField)>> = Exec::default().map_range(config.n_episodes, |i| {
            let s = generate_scenario(&cfg, config.base_seed.wrapping_add(i as u64))?;
            let p_goal = kernel.builder(&s.map)?.goal_distribution(&s, GoalSubset::ReachableOnly)?;
            Ok((s, p_goal))
        });
        let scenarios = scenarios.into_iter().collect::<Result<Vec<_>>>()?;
        for planner in planners {
            let episodes = Exec::default().map_range(scenarios.len(), |i| {
                let (s, p) = &scenarios[i];
                run_episode(*planner, s.clone(), p, i, config)
            });
            let episodes = episodes.into_iter().collect::<Result<Vec<_>>>()?;
            table.rows.push(aggregate(planner.name(), kind, &episodes, config));
        }
    }
    Ok(table)
}

fn aggregate(model: &str, kind: ScenarioKind, episodes: &[EpisodeResult], config: &EvalConfig) -> MetricsRow {
    let r = config.success_radius;
    let mut d = Diagnostics {
        samples: 0,
        successes: 0,
        frozen: 0,
        failed_episodes: 0,
        goal_hits: vec![0; kind.goal_count()],
        near_unreachable: 0,
        proposals: 0,
        rejections: 0,
        recorded_states: 0,
        collision_violations: 0,
        episode_success: Vec::with_capacity(episodes.len()),
    };
    let mut kl_sum = 0.0;
    for ep in episodes {
        d.failed_episodes += u64::from(ep.failed);
        kl_sum += ep.kl;
        let finals: Vec<State> = ep.outcomes.iter().map(|o| o.final_state).collect();
        d.episode_success.push(success_rate(&finals, &ep.scenario, r));
        for o in &ep.outcomes {
            d.samples += 1;
            d.frozen += u64::from(o.frozen);
            d.proposals += o.proposals;
            d.rejections += o.rejections;
            d.recorded_states += o.states;
            d.collision_violations += o.violations;
            d.successes += u64::from(hits_reachable(&ep.scenario, o.final_state, r));
            for (gi, g) in ep.scenario.goals.iter().enumerate() {
                if o.final_state.distance(State::center_of(g.cell)) <= r {
                    if g.reachable {
                        d.goal_hits[gi] += 1;
                    } else {
                        d.near_unreachable += 1;
                    }
                }
            }
        }
    }
    MetricsRow {
        model: model.to_string(),
        scenario: kind,
        success_rate: 100.0 * d.successes as f64 / d.samples as f64,
        kl_divergence: kl_sum / episodes.len() as f64,
        diagnostics: d,
    }
}
