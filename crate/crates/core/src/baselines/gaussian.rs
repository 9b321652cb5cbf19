//! Obstacle-blind Gaussian diffusion and its RRT* repair.

use crate::error::Result;
use crate::grid::Scenario;
use crate::kernel::KernelSchedule;
use crate::sampler::{trace, CollisionPolicy, SamplerConfig, ScoreProvider, StepFlags, Trajectory};
use crate::score::{analytic_gaussian_score, State, Vec2};

use super::rrt::{rrt_star, RRTStarConfig};

/// Equal-weight isotropic Gaussian mixture over every goal, with the capped
/// `sigma_t = min(sqrt(2 k(t)), width / 2)`.
#[derive(Debug, Clone)]
pub struct GaussianScore {
    means: Vec<State>,
    weights: Vec<f64>,
    sigmas: Vec<f64>,
}

impl ScoreProvider for GaussianScore {
    fn score(&self, s: State, t: usize) -> Vec2 {
        analytic_gaussian_score(s, &self.means, self.sigmas[t - 1], &self.weights)
    }
}

impl GaussianScore {
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }
}

pub fn gaussian_score(scenario: &Scenario, schedule: &KernelSchedule) -> Result<GaussianScore> {
    let cap = scenario.map.width() as f64 / 2.0;
    let sigmas = (1..=schedule.levels)
        .map(|t| Ok(schedule.sigma(t)?.min(cap)))
        .collect::<Result<Vec<f64>>>()?;
    let n = scenario.goals.len();
    Ok(GaussianScore {
        means: scenario.goals.iter().map(|g| State::center_of(g.cell)).collect(),
        weights: vec![1.0 / n as f64; n],
        sigmas,
    })
}

/// Annealed Langevin on the Gaussian mixture score; any collision freezes.
pub fn gaussian_diffusion_sample(
    scenario: &Scenario,
    x_init: State,
    schedule: &KernelSchedule,
    config: &SamplerConfig,
    seed: u64,
) -> Result<Trajectory> {
    let score = gaussian_score(scenario, schedule)?;
    trace(&scenario.map, &score, x_init, schedule, config, seed, CollisionPolicy::Freeze)
}

/// Goal sampled on an obstacle-free copy of the map, then RRT* on the real
/// map. A planning failure leaves the trajectory frozen at `x_init`.
pub fn gaussian_plus_rrt(
    scenario: &Scenario,
    x_init: State,
    schedule: &KernelSchedule,
    config: &SamplerConfig,
    rrt: &RRTStarConfig,
    seed: u64,
) -> Result<Trajectory> {
    let open = scenario.without_obstacles();
    let goal = gaussian_diffusion_sample(&open, x_init, schedule, config, seed)?.final_state();
    let frozen = |seed| Trajectory {
        states: vec![x_init],
        steps: vec![StepFlags {
            accepted: false,
            rejected: 0,
            frozen: true,
        }],
        frozen: true,
        seed,
    };
    if !scenario.map.is_free_at(goal.x, goal.y) {
        return Ok(frozen(seed));
    }
    let cfg = RRTStarConfig { seed, ..*rrt };
    let out = rrt_star(&scenario.map, x_init, goal, &cfg)?;
    Ok(match out.path {
        Some(path) => Trajectory {
            steps: vec![
                StepFlags {
                    accepted: true,
                    rejected: 0,
                    frozen: false,
                };
                path.len() - 1
            ],
            states: path,
            frozen: false,
            seed,
        },
        None => frozen(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{generate_scenario, Cell, GridMap, MapGenConfig, Rect, ScenarioKind};
    use crate::sampler::sample_trajectory;

    #[test]
    fn sigma_is_capped() {
        let map = GridMap::free(64, 64).unwrap();
        let s = Scenario::new(map, &[Cell::new(50, 50)], Rect { x: 1, y: 1, w: 2, h: 2 }, 0).unwrap();
        let g = gaussian_score(&s, &KernelSchedule::default()).unwrap();
        assert!((g.sigma(1) - 5.0).abs() < 1e-12);
        assert_eq!(g.sigma(10), 32.0);
    }

    #[test]
    fn matches_primary_sampler_on_open_map() {
        let map = GridMap::free(64, 64).unwrap();
        let s = Scenario::new(map, &[Cell::new(45, 40)], Rect { x: 20, y: 20, w: 6, h: 6 }, 0).unwrap();
        let sched = KernelSchedule::default();
        let cfg = SamplerConfig::default();
        let score = gaussian_score(&s, &sched).unwrap();
        for seed in 0..20 {
            let x = crate::sampler::initial_state(&s, seed);
            let a = gaussian_diffusion_sample(&s, x, &sched, &cfg, seed).unwrap();
            let b = sample_trajectory(&s, &score, x, &sched, &cfg, seed).unwrap();
            if !a.frozen {
                assert_eq!(a.states, b.states);
            }
        }
    }

    #[test]
    fn rrt_variant_freezes_on_blocked_goal() {
        let cfg = MapGenConfig::default().with_kind(ScenarioKind::Unreachable);
        let s = generate_scenario(&cfg, 11).unwrap();
        let sched = KernelSchedule::default();
        let sc = SamplerConfig::default();
        let rrt = RRTStarConfig {
            max_iterations: 1500,
            ..RRTStarConfig::default()
        };
        let mut outcomes = [0usize; 2];
        for seed in 0..16 {
            let x = crate::sampler::initial_state(&s, seed);
            let tr = gaussian_plus_rrt(&s, x, &sched, &sc, &rrt, seed).unwrap();
            assert!(tr.states.iter().all(|p| s.map.is_free_at(p.x, p.y)));
            if tr.frozen {
                assert_eq!(tr.states, vec![x]);
            }
            outcomes[tr.frozen as usize] += 1;
        }
        assert!(outcomes[0] > 0 && outcomes[1] > 0, "{outcomes:?}");
    }
}
