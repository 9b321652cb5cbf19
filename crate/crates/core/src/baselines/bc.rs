//! Behaviour cloning as a per-cell mean displacement field.
//!
//! The per-cell mean is the exact minimiser of squared displacement error,
//! which is also why opposing expert modes cancel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Scenario;
use crate::sampler::{StepFlags, Trajectory, SEGMENT_STEP};
use crate::score::{bilinear, State, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BCFieldModel {
    pub width: usize,
    pub height: usize,
    pub vectors: Vec<Vec2>,
    pub counts: Vec<u32>,
    /// Step-count input carried for interface parity; the field ignores it.
    pub stationary_number: usize,
}

impl BCFieldModel {
    pub fn query(&self, s: State) -> Vec2 {
        let Ok((idx, w)) = bilinear(s, self.width, self.height) else {
            return [0.0, 0.0];
        };
        let mut out = [0.0; 2];
        for (&i, &wi) in idx.iter().zip(&w) {
            out[0] += wi * self.vectors[i][0];
            out[1] += wi * self.vectors[i][1];
        }
        out
    }

    /// Mean squared error of the fitted vectors against every expert step.
    pub fn training_mse(&self, experts: &[Trajectory]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for_each_step(experts, self.width, self.height, |i, d| {
            let v = self.vectors[i];
            sum += (v[0] - d[0]).powi(2) + (v[1] - d[1]).powi(2);
            n += 1;
        });
        sum / n as f64
    }
}

fn for_each_step(experts: &[Trajectory], width: usize, height: usize, mut f: impl FnMut(usize, Vec2)) {
    for tr in experts {
        for pair in tr.states.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            f(cell_index(a, width, height), [b.x - a.x, b.y - a.y]);
        }
    }
}

fn cell_index(s: State, width: usize, height: usize) -> usize {
    let cx = ((s.x + 0.5).floor().max(0.0) as usize).min(width - 1);
    let cy = ((s.y + 0.5).floor().max(0.0) as usize).min(height - 1);
    cy * width + cx
}

/// Averages expert step displacements per starting cell.
pub fn bc_fit(experts: &[Trajectory], width: usize, height: usize) -> Result<BCFieldModel> {
    bc_fit_horizon(experts, width, height, 1)
}

fn mean_field(pairs: impl Iterator<Item = (State, State)>, width: usize, height: usize) -> BCFieldModel {
    let mut sums = vec![[0.0f64; 2]; width * height];
    let mut counts = vec![0u32; width * height];
    for (a, b) in pairs {
        let i = cell_index(a, width, height);
        sums[i][0] += b.x - a.x;
        sums[i][1] += b.y - a.y;
        counts[i] += 1;
    }
    let vectors = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { [0.0, 0.0] } else { [s[0] / c as f64, s[1] / c as f64] })
        .collect();
    BCFieldModel {
        width,
        height,
        vectors,
        counts,
        stationary_number: 0,
    }
}

/// [`bc_fit`] with each step labelled by the expert's mean velocity over the
/// next `horizon` steps (fewer at the end of a trajectory). Single Langevin
/// steps are mostly injected noise; the averaged label keeps the heading.
/// `horizon = 1` is the plain per-step fit.
pub fn bc_fit_horizon(experts: &[Trajectory], width: usize, height: usize, horizon: usize) -> Result<BCFieldModel> {
    let h = horizon.max(1);
    let pairs = experts.iter().flat_map(|tr| {
        let st = &tr.states;
        (0..st.len().saturating_sub(1)).map(move |i| {
            let j = (i + h).min(st.len() - 1);
            let k = (j - i) as f64;
            let a = st[i];
            (a, State::new(a.x + (st[j].x - a.x) / k, a.y + (st[j].y - a.y) / k))
        })
    });
    let m = mean_field(pairs, width, height);
    if m.counts.iter().all(|&c| c == 0) {
        return Err(Error::Empty("expert steps"));
    }
    Ok(m)
}

/// Follows the cloned field from `x_init`; a move into an obstacle freezes the rollout.
pub fn bc_rollout(model: &BCFieldModel, scenario: &Scenario, x_init: State, n_steps: usize) -> Result<Trajectory> {
    let map = &scenario.map;
    map.check_same_shape(model.width, model.height)?;
    match map.cell_at(x_init.x, x_init.y) {
        Some(c) => map.check_free(c)?,
        None => {
            return Err(Error::OutOfDomain {
                x: x_init.x,
                y: x_init.y,
                max_x: (map.width() - 1) as f64,
                max_y: (map.height() - 1) as f64,
            })
        }
    }
    let mut states = vec![x_init];
    let mut steps = Vec::with_capacity(n_steps);
    let mut cur = x_init;
    let mut frozen = false;
    for _ in 0..n_steps {
        let d = model.query(cur);
        let next = State::new(cur.x + d[0], cur.y + d[1]);
        let ok = next.in_domain(map.width(), map.height())
            && map.segment_is_free((cur.x, cur.y), (next.x, next.y), SEGMENT_STEP);
        if !ok {
            frozen = true;
            steps.push(StepFlags {
                accepted: false,
                rejected: 1,
                frozen: true,
            });
            break;
        }
        cur = next;
        states.push(cur);
        steps.push(StepFlags {
            accepted: true,
            rejected: 0,
            frozen: false,
        });
    }
    Ok(Trajectory {
        states,
        steps,
        frozen,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, GridMap, Rect};

    fn traj(states: &[(f64, f64)]) -> Trajectory {
        Trajectory {
            states: states.iter().map(|&(x, y)| State::new(x, y)).collect(),
            steps: vec![],
            frozen: false,
            seed: 0,
        }
    }

    #[test]
    fn opposing_modes_cancel() {
        let experts = [traj(&[(5.0, 5.0), (6.0, 5.0)]), traj(&[(5.1, 4.9), (4.1, 4.9)])];
        let m = bc_fit(&experts, 10, 10).unwrap();
        assert_eq!(m.vectors[5 * 10 + 5], [0.0, 0.0]);
        assert_eq!(m.counts[5 * 10 + 5], 2);
        assert_eq!(m.vectors[0], [0.0, 0.0]);
    }

    #[test]
    fn horizon_labels_average_future_velocity() {
        // Zig-zag with net drift +1/2 per step in x.
        let pts: Vec<(f64, f64)> = (0..9).map(|i| (2.0 + 0.5 * i as f64, if i % 2 == 0 { 4.0 } else { 4.4 })).collect();
        let experts = [traj(&pts)];
        let m = bc_fit_horizon(&experts, 12, 8, 2).unwrap();
        // First state at (2, 4): two steps ahead lands on (3, 4).
        let v = m.vectors[4 * 12 + 2];
        assert!((v[0] - 0.5).abs() < 1e-12 && v[1].abs() < 1e-12, "{v:?}");
        // Last step only has one step left.
        let a = State::new(pts[7].0, pts[7].1);
        let i = cell_index(a, 12, 8);
        assert_eq!(m.counts[i], 1);
        assert!((m.vectors[i][0] - 0.5).abs() < 1e-12 && (m.vectors[i][1] + 0.4).abs() < 1e-12);
        assert_eq!(bc_fit_horizon(&experts, 12, 8, 1).unwrap(), bc_fit(&experts, 12, 8).unwrap());
    }

    #[test]
    fn fit_is_mse_minimiser() {
        let experts = [
            traj(&[(2.0, 2.0), (3.0, 2.5), (3.2, 3.0), (4.0, 3.1)]),
            traj(&[(2.2, 2.1), (2.9, 2.0), (3.1, 2.2)]),
        ];
        let m = bc_fit(&experts, 8, 8).unwrap();
        let base = m.training_mse(&experts);
        for i in [2 * 8 + 2, 2 * 8 + 3, 3 * 8 + 3] {
            for d in [[0.01, 0.0], [0.0, -0.01]] {
                let mut p = m.clone();
                p.vectors[i][0] += d[0];
                p.vectors[i][1] += d[1];
                assert!(p.training_mse(&experts) > base);
            }
        }
    }

    #[test]
    fn empty_data_is_error() {
        assert!(matches!(bc_fit(&[], 4, 4), Err(Error::Empty(_))));
        assert!(bc_fit(&[traj(&[(1.0, 1.0)])], 4, 4).is_err());
    }

    #[test]
    fn zero_field_rollout_stays_put() {
        let map = GridMap::free(8, 8).unwrap();
        let s = Scenario::new(map, &[Cell::new(6, 6)], Rect { x: 1, y: 1, w: 2, h: 2 }, 0).unwrap();
        let m = BCFieldModel {
            width: 8,
            height: 8,
            vectors: vec![[0.0, 0.0]; 64],
            counts: vec![0; 64],
            stationary_number: 0,
        };
        let tr = bc_rollout(&m, &s, State::new(1.5, 1.5), 20).unwrap();
        assert_eq!(tr.states.len(), 21);
        assert!(tr.states.iter().all(|&x| x == State::new(1.5, 1.5)));
    }

    #[test]
    fn rollout_freezes_at_walls() {
        let map = GridMap::from_fn(8, 8, |x, _| x == 4).unwrap();
        let s = Scenario::new(map, &[Cell::new(1, 6)], Rect { x: 1, y: 1, w: 2, h: 2 }, 0).unwrap();
        let m = BCFieldModel {
            width: 8,
            height: 8,
            vectors: vec![[0.5, 0.0]; 64],
            counts: vec![1; 64],
            stationary_number: 0,
        };
        let tr = bc_rollout(&m, &s, State::new(1.0, 1.0), 20).unwrap();
        assert!(tr.frozen);
        assert!(tr.states.iter().all(|x| s.map.is_free_at(x.x, x.y)));
        assert!((tr.final_state().x - 3.0).abs() < 1e-12);
    }
}
