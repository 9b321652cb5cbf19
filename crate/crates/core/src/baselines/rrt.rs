//! RRT* with a uniform-grid spatial index.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{reachable_set, GridMap};
use crate::sampler::SEGMENT_STEP;
use crate::score::State;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RRTStarConfig {
    pub max_iterations: usize,
    pub step_size: f64,
    pub neighborhood_radius: f64,
    pub goal_bias: f64,
    pub seed: u64,
    /// Distance at which the goal counts as connected.
    pub goal_tolerance: f64,
}

impl Default for RRTStarConfig {
    fn default() -> Self {
        RRTStarConfig {
            max_iterations: 5000,
            step_size: 2.0,
            neighborhood_radius: 6.0,
            goal_bias: 0.05,
            seed: 0,
            goal_tolerance: 2.0,
        }
    }
}

impl RRTStarConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if self.max_iterations == 0 || !pos(self.step_size) || !pos(self.neighborhood_radius) || !pos(self.goal_tolerance) {
            return Err(Error::Config("RRT* iterations, step, radius and tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.goal_bias) {
            return Err(Error::Config(format!("goal_bias {} not in [0, 1)", self.goal_bias)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub x: f64,
    pub y: f64,
    pub parent: Option<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RrtTree {
    pub nodes: Vec<TreeNode>,
}

impl RrtTree {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrtOutcome {
    /// Start-to-goal polyline, or `None` when no connection was found.
    pub path: Option<Vec<State>>,
    pub cost: f64,
    pub iterations: usize,
    pub tree: RrtTree,
}

impl RrtOutcome {
    fn failed(iterations: usize, tree: RrtTree) -> Self {
        RrtOutcome {
            path: None,
            cost: f64::INFINITY,
            iterations,
            tree,
        }
    }
}

struct Index {
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl Index {
    fn new(width: f64, height: f64, cell: f64) -> Self {
        let cols = (width / cell).ceil().max(1.0) as usize;
        let rows = (height / cell).ceil().max(1.0) as usize;
        Index {
            cell,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        }
    }

    fn bucket(&self, x: f64, y: f64) -> (usize, usize) {
        let bx = ((x / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let by = ((y / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        (bx, by)
    }

    fn insert(&mut self, id: usize, x: f64, y: f64) {
        let (bx, by) = self.bucket(x, y);
        self.buckets[by * self.cols + bx].push(id);
    }

    /// Ids in buckets within `ring` of the bucket holding `(x, y)`.
    fn around(&self, x: f64, y: f64, ring: usize, mut f: impl FnMut(usize)) {
        let (bx, by) = self.bucket(x, y);
        for yy in by.saturating_sub(ring)..=(by + ring).min(self.rows - 1) {
            for xx in bx.saturating_sub(ring)..=(bx + ring).min(self.cols - 1) {
                self.buckets[yy * self.cols + xx].iter().for_each(|&i| f(i));
            }
        }
    }
}

struct Tree {
    pts: Vec<(f64, f64)>,
    parent: Vec<Option<usize>>,
    cost: Vec<f64>,
    children: Vec<Vec<usize>>,
}

impl Tree {
    fn add(&mut self, p: (f64, f64), parent: Option<usize>, cost: f64) -> usize {
        let id = self.pts.len();
        self.pts.push(p);
        self.parent.push(parent);
        self.cost.push(cost);
        self.children.push(Vec::new());
        if let Some(q) = parent {
            self.children[q].push(id);
        }
        id
    }

    fn reparent(&mut self, id: usize, new_parent: usize, new_cost: f64) {
        if let Some(old) = self.parent[id] {
            self.children[old].retain(|&c| c != id);
        }
        self.parent[id] = Some(new_parent);
        self.children[new_parent].push(id);
        let delta = new_cost - self.cost[id];
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            self.cost[n] += delta;
            stack.extend_from_slice(&self.children[n]);
        }
    }
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    dist2(a, b).sqrt()
}

/// Standard RRT*: goal-biased sampling, steering by `step_size`, lowest-cost
/// parent selection and rewiring inside `neighborhood_radius`. The best goal
/// connection seen over all iterations is returned.
pub fn rrt_star(map: &GridMap, start: State, goal: State, config: &RRTStarConfig) -> Result<RrtOutcome> {
    config.validate()?;
    let (w, h) = (map.width(), map.height());
    for s in [start, goal] {
        let c = map.cell_at(s.x, s.y).ok_or(Error::OutOfDomain {
            x: s.x,
            y: s.y,
            max_x: (w - 1) as f64,
            max_y: (h - 1) as f64,
        })?;
        map.check_free(c)?;
    }
    let free = |a: (f64, f64), b: (f64, f64)| map.segment_is_free(a, b, SEGMENT_STEP);
    let (sp, gp) = ((start.x, start.y), (goal.x, goal.y));

    let mut tree = Tree {
        pts: Vec::new(),
        parent: Vec::new(),
        cost: Vec::new(),
        children: Vec::new(),
    };
    tree.add(sp, None, 0.0);
    let dump = |tree: &Tree| RrtTree {
        nodes: (0..tree.pts.len())
            .map(|i| TreeNode {
                x: tree.pts[i].0,
                y: tree.pts[i].1,
                parent: tree.parent[i],
                cost: tree.cost[i],
            })
            .collect(),
    };

    // No free path can exist between disconnected components.
    let sc = map.cell_at(sp.0, sp.1).expect("checked above");
    let gc = map.cell_at(gp.0, gp.1).expect("checked above");
    if !reachable_set(map, &[sc])?.contains(gc) {
        return Ok(RrtOutcome::failed(config.max_iterations, dump(&tree)));
    }

    let radius = config.neighborhood_radius;
    let mut index = Index::new(w as f64, h as f64, radius / 2.0);
    index.insert(0, sp.0, sp.1);
    let hi_x = (w - 1) as f64;
    let hi_y = (h - 1) as f64;
    let mut rng = seed::stream(&[config.seed, 0x5252_5400]);
    // Node ids connected to the goal.
    let mut goal_links: Vec<usize> = Vec::new();
    if dist(sp, gp) <= config.goal_tolerance && free(sp, gp) {
        goal_links.push(0);
    }
    let mut near: Vec<(f64, usize)> = Vec::new();

    for _ in 0..config.max_iterations {
        let sample = if rng.random::<f64>() < config.goal_bias {
            gp
        } else {
            (rng.random::<f64>() * hi_x, rng.random::<f64>() * hi_y)
        };
        // Nearest node: widen the bucket search until something is found,
        // then one more ring to be exact.
        let mut nearest = None;
        let mut best = f64::INFINITY;
        let max_ring = index.cols.max(index.rows);
        let mut ring = 1;
        while ring <= max_ring {
            index.around(sample.0, sample.1, ring, |i| {
                let d = dist2(tree.pts[i], sample);
                if d < best {
                    best = d;
                    nearest = Some(i);
                }
            });
            if nearest.is_some() && best <= (ring as f64 * index.cell).powi(2) {
                break;
            }
            ring += 1;
        }
        let nearest = nearest.expect("tree is never empty");
        let np = tree.pts[nearest];
        let d = dist(np, sample);
        if d < 1e-9 {
            continue;
        }
        let new = if d > config.step_size {
            let f = config.step_size / d;
            (np.0 + f * (sample.0 - np.0), np.1 + f * (sample.1 - np.1))
        } else {
            sample
        };
        if !map.is_free_at(new.0, new.1) {
            continue;
        }

        near.clear();
        let r2 = radius * radius;
        index.around(new.0, new.1, 2, |i| {
            let d = dist2(tree.pts[i], new);
            if d <= r2 {
                near.push((d.sqrt(), i));
            }
        });
        // Cheapest collision-free parent. The cheapest candidate is usually
        // visible, so only sort when it is not.
        let key = |&(d, i): &(f64, usize)| (tree.cost[i] + d, i);
        let cheapest = near
            .iter()
            .min_by(|a, b| key(a).0.total_cmp(&key(b).0).then(a.1.cmp(&b.1)))
            .copied();
        let chosen = match cheapest {
            Some(c) if free(tree.pts[c.1], new) => Some(c),
            Some(_) => {
                near.sort_by(|a, b| key(a).0.total_cmp(&key(b).0).then(a.1.cmp(&b.1)));
                near[1..].iter().find(|&&(_, i)| free(tree.pts[i], new)).copied()
            }
            None => None,
        };
        let Some((pd, parent)) = chosen else {
            continue;
        };
        let new_cost = tree.cost[parent] + pd;
        let id = tree.add(new, Some(parent), new_cost);
        index.insert(id, new.0, new.1);

        for &(d, i) in &near {
            if i == parent {
                continue;
            }
            let c = new_cost + d;
            if c + 1e-12 < tree.cost[i] && free(new, tree.pts[i]) {
                tree.reparent(i, id, c);
            }
        }
        if dist(new, gp) <= config.goal_tolerance && free(new, gp) {
            goal_links.push(id);
        }
    }

    let best = goal_links
        .iter()
        .map(|&i| (tree.cost[i] + dist(tree.pts[i], gp), i))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let tree_dump = dump(&tree);
    let Some((cost, last)) = best else {
        return Ok(RrtOutcome::failed(config.max_iterations, tree_dump));
    };
    let mut path = vec![goal];
    let mut cur = Some(last);
    while let Some(i) = cur {
        let p = tree.pts[i];
        if dist(p, gp) > 0.0 || i == 0 {
            path.push(State::new(p.0, p.1));
        }
        cur = tree.parent[i];
    }
    path.reverse();
    Ok(RrtOutcome {
        path: Some(path),
        cost,
        iterations: config.max_iterations,
        tree: tree_dump,
    })
}

/// Euclidean length of a polyline.
pub fn path_length(path: &[State]) -> f64 {
    path.windows(2).map(|p| p[0].distance(p[1])).sum()
}
