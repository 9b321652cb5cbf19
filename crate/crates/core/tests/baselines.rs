use heatplan::baselines::{bc_fit, bc_rollout};
use heatplan::eval::KernelSetup;
use heatplan::grid::{Cell, GridMap, Rect, Scenario};
use heatplan::sampler::{initial_state, sample_trajectory, SamplerConfig};
use heatplan::score::State;

fn experts(s: &Scenario, noise: f64, n: usize) -> Vec<heatplan::sampler::Trajectory> {
    let setup = KernelSetup::default();
    let stack = setup.score_stack(s).unwrap();
    let cfg = SamplerConfig {
        noise_scale: noise,
        ..SamplerConfig::default()
    };
    let goal = State::center_of(s.goals[0].cell);
    (0..n as u64)
        .map(|j| {
            let x = initial_state(s, j);
            let mut tr = sample_trajectory(s, &stack, x, &setup.schedule, &cfg, j).unwrap();
            if let Some(i) = tr.states.iter().position(|q| q.distance(goal) <= 3.0) {
                tr.states.truncate(i + 1);
            }
            tr
        })
        .collect()
}

#[test]
fn single_goal_field_points_at_the_goal() {
    let map = GridMap::free(48, 48).unwrap();
    let goal = Cell::new(36, 24);
    let s = Scenario::new(map, &[goal], Rect { x: 9, y: 23, w: 3, h: 3 }, 0).unwrap();
    let m = bc_fit(&experts(&s, 0.0, 64), 48, 48).unwrap();
    let g = State::center_of(goal);
    let (mut visited, mut toward) = (0, 0);
    for i in 0..48 * 48 {
        if m.counts[i] == 0 {
            continue;
        }
        let c = s.map.cell(i);
        let v = m.vectors[i];
        if v == [0.0, 0.0] {
            continue;
        }
        visited += 1;
        if v[0] * (g.x - c.x as f64) + v[1] * (g.y - c.y as f64) > 0.0 {
            toward += 1;
        }
    }
    assert!(visited > 20);
    assert!(toward as f64 >= 0.95 * visited as f64, "{toward}/{visited}");

    let tr = bc_rollout(&m, &s, State::new(10.0, 24.0), 1000).unwrap();
    assert!(!tr.frozen);
    assert!(tr.states.last().unwrap().x > 10.0);
}
