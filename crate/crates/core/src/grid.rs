//! Occupancy grids, seeded scenario generation, reachability and map I/O.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const MIN_SIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// A rectangular occupancy grid. Each cell is either free or an obstacle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    obstacle: Vec<bool>,
}

impl GridMap {
    /// An obstacle-free map.
    pub fn free(width: usize, height: usize) -> Result<Self> {
        Self::from_fn(width, height, |_, _| false)
    }

    /// Builds a map where `is_obstacle(x, y)` decides each cell.
    pub fn from_fn(width: usize, height: usize, is_obstacle: impl Fn(usize, usize) -> bool) -> Result<Self> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(Error::Config(format!(
                "map must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
            )));
        }
        let obstacle = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| is_obstacle(x, y))
            .collect();
        Ok(GridMap {
            width,
            height,
            obstacle,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.obstacle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacle.is_empty()
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    #[inline]
    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    /// Obstacle flags in row-major order.
    pub fn obstacles(&self) -> &[bool] {
        &self.obstacle
    }

    #[inline]
    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.obstacle[self.index(cell)]
    }

    #[inline]
    pub fn is_free(&self, cell: Cell) -> bool {
        !self.is_obstacle(cell)
    }

    pub fn set_obstacle(&mut self, cell: Cell, obstacle: bool) {
        let i = self.index(cell);
        self.obstacle[i] = obstacle;
    }

    pub fn free_count(&self) -> usize {
        self.obstacle.iter().filter(|&&o| !o).count()
    }

    pub fn check_cell(&self, cell: Cell) -> Result<()> {
        if !self.contains(cell) {
            return Err(Error::OutOfGrid {
                x: cell.x,
                y: cell.y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    /// Fails unless `cell` is inside the grid and free.
    pub fn check_free(&self, cell: Cell) -> Result<()> {
        self.check_cell(cell)?;
        if self.is_obstacle(cell) {
            return Err(Error::ObstacleCell { x: cell.x, y: cell.y });
        }
        Ok(())
    }

    pub fn check_same_shape(&self, width: usize, height: usize) -> Result<()> {
        if width != self.width || height != self.height {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: width,
                got_h: height,
            });
        }
        Ok(())
    }

    /// In-bounds 4-neighbours in N, S, E, W order.
    pub fn neighbors4(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let Cell { x, y } = cell;
        let (w, h) = (self.width, self.height);
        [
            (y > 0).then(|| Cell::new(x, y - 1)),
            (y + 1 < h).then(|| Cell::new(x, y + 1)),
            (x + 1 < w).then(|| Cell::new(x + 1, y)),
            (x > 0).then(|| Cell::new(x - 1, y)),
        ]
        .into_iter()
        .flatten()
    }

    /// Cell containing a continuous position, if any.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        let cx = (x + 0.5).floor();
        let cy = (y + 0.5).floor();
        if cx < 0.0 || cy < 0.0 || cx >= self.width as f64 || cy >= self.height as f64 {
            return None;
        }
        Some(Cell::new(cx as usize, cy as usize))
    }

    /// True when `(x, y)` lies in a free cell of the grid.
    pub fn is_free_at(&self, x: f64, y: f64) -> bool {
        self.cell_at(x, y).is_some_and(|c| self.is_free(c))
    }

    /// True when every point sampled along the segment, at most `step` apart
    /// and including both endpoints, lies in a free cell.
    pub fn segment_is_free(&self, a: (f64, f64), b: (f64, f64), step: f64) -> bool {
        let len = (b.0 - a.0).hypot(b.1 - a.1);
        let n = (len / step).ceil().max(1.0) as usize;
        (0..=n).all(|i| {
            let f = i as f64 / n as f64;
            self.is_free_at(a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1))
        })
    }
}

/// A set of grid cells stored as a dense mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    width: usize,
    bits: Vec<bool>,
}

impl CellMask {
    pub fn empty(width: usize, height: usize) -> Self {
        CellMask {
            width,
            bits: vec![false; width * height],
        }
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.bits[cell.y * self.width + cell.x]
    }

    pub fn insert(&mut self, cell: Cell) {
        self.bits[cell.y * self.width + cell.x] = true;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Cell::new(i % self.width, i / self.width))
    }
}

/// 4-connected free-cell closure of `sources`.
pub fn reachable_set(map: &GridMap, sources: &[Cell]) -> Result<CellMask> {
    let mut seen = CellMask::empty(map.width(), map.height());
    let mut queue = VecDeque::new();
    for &s in sources {
        map.check_free(s)?;
        if !seen.contains(s) {
            seen.insert(s);
            queue.push_back(s);
        }
    }
    while let Some(c) = queue.pop_front() {
        for n in map.neighbors4(c) {
            if map.is_free(n) && !seen.contains(n) {
                seen.insert(n);
                queue.push_back(n);
            }
        }
    }
    Ok(seen)
}

/// Label of every free cell's 4-connected component; `None` on obstacles.
pub fn component_labels(map: &GridMap) -> (Vec<Option<u32>>, u32) {
    let mut labels = vec![None; map.len()];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..map.len() {
        if map.obstacles()[start] || labels[start].is_some() {
            continue;
        }
        labels[start] = Some(next);
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for n in map.neighbors4(map.cell(i)) {
                let j = map.index(n);
                if !map.obstacles()[j] && labels[j].is_none() {
                    labels[j] = Some(next);
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    (labels, next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Unimodal,
    Multimodal,
    Unreachable,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [
        ScenarioKind::Unimodal,
        ScenarioKind::Multimodal,
        ScenarioKind::Unreachable,
    ];

    pub fn goal_count(self) -> usize {
        match self {
            ScenarioKind::Unimodal => 1,
            ScenarioKind::Multimodal | ScenarioKind::Unreachable => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Unimodal => "unimodal",
            ScenarioKind::Multimodal => "multimodal",
            ScenarioKind::Unreachable => "unreachable",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unimodal" => Ok(ScenarioKind::Unimodal),
            "multimodal" => Ok(ScenarioKind::Multimodal),
            "unreachable" => Ok(ScenarioKind::Unreachable),
            other => Err(Error::Config(format!("unknown scenario kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub cell: Cell,
    pub reachable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub fn contains(&self, c: Cell) -> bool {
        c.x >= self.x && c.x < self.x + self.w && c.y >= self.y && c.y < self.y + self.h
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.y..self.y + self.h).flat_map(move |y| (self.x..self.x + self.w).map(move |x| Cell::new(x, y)))
    }

    /// Centre of the rectangle in continuous cell coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + (self.w as f64 - 1.0) / 2.0,
            self.y as f64 + (self.h as f64 - 1.0) / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub map: GridMap,
    pub goals: Vec<Goal>,
    pub initial_region: Rect,
    pub seed: u64,
}

impl Scenario {
    /// Builds a scenario, deriving reachability labels from the map.
    pub fn new(map: GridMap, goal_cells: &[Cell], initial_region: Rect, seed: u64) -> Result<Self> {
        if initial_region.w == 0 || initial_region.h == 0 {
            return Err(Error::Empty("initial region"));
        }
        let sources: Vec<Cell> = initial_region.cells().collect();
        for &c in &sources {
            map.check_free(c)?;
        }
        let reach = reachable_set(&map, &sources)?;
        let mut goals = Vec::with_capacity(goal_cells.len());
        for &g in goal_cells {
            map.check_free(g)?;
            goals.push(Goal {
                cell: g,
                reachable: reach.contains(g),
            });
        }
        Ok(Scenario {
            map,
            goals,
            initial_region,
            seed,
        })
    }

    pub fn reachable_goals(&self) -> impl Iterator<Item = &Goal> {
        self.goals.iter().filter(|g| g.reachable)
    }

    /// The same map and start region with a single goal.
    pub fn single_goal(&self, index: usize) -> Scenario {
        Scenario {
            map: self.map.clone(),
            goals: vec![self.goals[index]],
            initial_region: self.initial_region,
            seed: self.seed,
        }
    }

    /// The same goals and start region on an obstacle-free map.
    pub fn without_obstacles(&self) -> Scenario {
        let map = GridMap::free(self.map.width(), self.map.height()).expect("dimensions already validated");
        Scenario {
            map,
            goals: self
                .goals
                .iter()
                .map(|g| Goal {
                    cell: g.cell,
                    reachable: true,
                })
                .collect(),
            initial_region: self.initial_region,
            seed: self.seed,
        }
    }

    pub fn sidecar(&self) -> ScenarioFile {
        ScenarioFile {
            seed: self.seed,
            goals: self
                .goals
                .iter()
                .map(|g| GoalEntry {
                    x: g.cell.x,
                    y: g.cell.y,
                    reachable: g.reachable,
                })
                .collect(),
            initial_region: self.initial_region,
        }
    }

    /// Rebuilds a scenario from a map and its sidecar; reachability labels
    /// must agree with the map.
    pub fn from_sidecar(map: GridMap, file: &ScenarioFile) -> Result<Self> {
        let cells: Vec<Cell> = file.goals.iter().map(|g| Cell::new(g.x, g.y)).collect();
        let s = Scenario::new(map, &cells, file.initial_region, file.seed)?;
        for (g, entry) in s.goals.iter().zip(&file.goals) {
            if g.reachable != entry.reachable {
                return Err(Error::Config(format!(
                    "goal {} labelled reachable={} but map says {}",
                    g.cell, entry.reachable, g.reachable
                )));
            }
        }
        Ok(s)
    }
}

/// JSON sidecar stored next to a PGM map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub goals: Vec<GoalEntry>,
    pub initial_region: Rect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalEntry {
    pub x: usize,
    pub y: usize,
    pub reachable: bool,
}

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Span { min, max }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapGenConfig {
    pub width: usize,
    pub height: usize,
    pub n_obstacles: Span,
    pub obstacle_size: Span,
    pub noise_density: f64,
    pub scenario_kind: ScenarioKind,
    /// Distance in cells from the start-region centre to each goal.
    pub goal_distance: Span,
    /// Side of the square start region.
    pub initial_size: usize,
    /// Obstacle rectangles stay this many cells away from the start region.
    pub initial_clearance: usize,
    /// Chebyshev radius kept obstacle-free around reachable goals.
    pub goal_clearance: usize,
    pub ring_radius: usize,
    /// Minimum distance in cells between a goal and the map border.
    pub border_margin: usize,
    pub max_attempts: u32,
}

impl Default for MapGenConfig {
    fn default() -> Self {
        MapGenConfig {
            width: 64,
            height: 64,
            n_obstacles: Span::new(6, 10),
            obstacle_size: Span::new(3, 10),
            noise_density: 0.05,
            scenario_kind: ScenarioKind::Unimodal,
            goal_distance: Span::new(22, 28),
            initial_size: 3,
            initial_clearance: 5,
            goal_clearance: 4,
            ring_radius: 3,
            border_margin: 8,
            max_attempts: 64,
        }
    }
}

impl MapGenConfig {
    pub fn with_kind(mut self, kind: ScenarioKind) -> Self {
        self.scenario_kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return bad(format!("map must be at least {MIN_SIDE}x{MIN_SIDE}"));
        }
        if !(0.0..=1.0).contains(&self.noise_density) {
            return bad(format!("noise_density {} not in [0, 1]", self.noise_density));
        }
        for (name, s) in [
            ("n_obstacles", self.n_obstacles),
            ("obstacle_size", self.obstacle_size),
            ("goal_distance", self.goal_distance),
        ] {
            if s.min > s.max {
                return bad(format!("{name} range is empty ({}..={})", s.min, s.max));
            }
        }
        if self.obstacle_size.min == 0 {
            return bad("obstacle_size must be at least 1".into());
        }
        if self.initial_size == 0 || self.initial_size + 2 > self.width.min(self.height) {
            return bad(format!("initial_size {} does not fit the map", self.initial_size));
        }
        if self.ring_radius < 2 {
            return bad("ring_radius must be at least 2".into());
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        Ok(())
    }
}

/// Noise bookkeeping from one generation pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStats {
    /// Free cells eligible for noise flipping.
    pub eligible: usize,
    pub flipped: usize,
    pub attempts: u32,
}

/// Deterministically generates a scenario for `(config, seed)`.
pub fn generate_scenario(config: &MapGenConfig, seed: u64) -> Result<Scenario> {
    generate_with_stats(config, seed).map(|(s, _)| s)
}

pub fn generate_with_stats(config: &MapGenConfig, seed: u64) -> Result<(Scenario, NoiseStats)> {
    config.validate()?;
    let mut last_reason = String::new();
    for attempt in 0..config.max_attempts {
        match try_generate(config, seed, attempt) {
            Ok(GenOutcome::Done(s, mut stats)) => {
                stats.attempts = attempt + 1;
                return Ok((s, stats));
            }
            Ok(GenOutcome::Retry(reason)) => last_reason = reason,
            Err(e) => return Err(e),
        }
    }
    Err(Error::InfeasibleConfig {
        attempts: config.max_attempts,
        reason: last_reason,
    })
}

enum GenOutcome {
    Done(Scenario, NoiseStats),
    Retry(String),
}

fn chebyshev(a: Cell, b: Cell) -> usize {
    a.x.abs_diff(b.x).max(a.y.abs_diff(b.y))
}

fn try_generate(cfg: &MapGenConfig, seed: u64, attempt: u32) -> Result<GenOutcome> {
    let mut rng = seed::stream(&[seed, attempt as u64, 0x4d41_5047]);
    let (w, h) = (cfg.width, cfg.height);
    let n_goals = cfg.scenario_kind.goal_count();

    // Start region near the middle of the map.
    let side = cfg.initial_size;
    let jitter_x = w / 8;
    let jitter_y = h / 8;
    let base_x = (w - side) / 2;
    let base_y = (h - side) / 2;
    let ix = (base_x + rng.random_range(0..=2 * jitter_x)).saturating_sub(jitter_x).min(w - side);
    let iy = (base_y + rng.random_range(0..=2 * jitter_y)).saturating_sub(jitter_y).min(h - side);
    let init = Rect { x: ix, y: iy, w: side, h: side };
    let (cx, cy) = init.center();

    // Goals share one drawn distance; a second goal sits roughly opposite the first.
    let margin = cfg.border_margin.max(cfg.ring_radius + 2);
    let mut goals: Vec<Cell> = Vec::with_capacity(n_goals);
    let first_angle = rng.random::<f64>() * 2.0 * PI;
    let d = cfg.goal_distance.draw(&mut rng) as f64;
    for k in 0..n_goals {
        let mut placed = None;
        for _ in 0..200 {
            let angle = if k == 0 {
                first_angle
            } else {
                first_angle + PI + (rng.random::<f64>() - 0.5) * PI / 6.0
            };
            let gx = (cx + d * angle.cos()).round();
            let gy = (cy + d * angle.sin()).round();
            let lo = margin as f64;
            if gx < lo || gy < lo || gx > (w - 1 - margin) as f64 || gy > (h - 1 - margin) as f64 {
                if k == 0 {
                    break;
                }
                continue;
            }
            let g = Cell::new(gx as usize, gy as usize);
            let far_from_init = init.cells().all(|c| chebyshev(c, g) > cfg.goal_clearance + cfg.ring_radius);
            let far_from_goals = goals.iter().all(|&o| chebyshev(o, g) > 2 * (cfg.ring_radius + 2));
            if far_from_init && far_from_goals {
                placed = Some(g);
                break;
            }
        }
        match placed {
            Some(g) => goals.push(g),
            None => return Ok(GenOutcome::Retry("could not place goals".into())),
        }
    }
    let ringed = match cfg.scenario_kind {
        ScenarioKind::Unreachable => Some(rng.random_range(0..n_goals)),
        _ => None,
    };

    let goal_zone = |c: Cell, pad: usize| {
        goals.iter().enumerate().any(|(i, &g)| {
            let r = if Some(i) == ringed { cfg.ring_radius + 1 } else { cfg.goal_clearance };
            chebyshev(c, g) <= r + pad
        })
    };
    let init_zone = |c: Cell, pad: usize| {
        c.x + pad >= init.x && c.x < init.x + init.w + pad && c.y + pad >= init.y && c.y < init.y + init.h + pad
    };

    let mut map = GridMap::free(w, h)?;

    // Rectangles, rejected when they touch a protected zone.
    let n_rects = cfg.n_obstacles.draw(&mut rng);
    for _ in 0..n_rects {
        for _ in 0..50 {
            let rw = cfg.obstacle_size.draw(&mut rng).min(w);
            let rh = cfg.obstacle_size.draw(&mut rng).min(h);
            let rect = Rect {
                x: rng.random_range(0..=w - rw),
                y: rng.random_range(0..=h - rh),
                w: rw,
                h: rh,
            };
            if rect.cells().any(|c| goal_zone(c, 1) || init_zone(c, cfg.initial_clearance)) {
                continue;
            }
            for c in rect.cells() {
                map.set_obstacle(c, true);
            }
            break;
        }
    }

    // Salt noise outside the protected zones.
    let mut eligible = 0;
    let mut flipped = 0;
    for i in 0..map.len() {
        let c = map.cell(i);
        if map.is_obstacle(c) || goal_zone(c, 0) || init_zone(c, cfg.initial_clearance.saturating_sub(1)) {
            continue;
        }
        eligible += 1;
        if rng.random::<f64>() < cfg.noise_density {
            map.set_obstacle(c, true);
            flipped += 1;
        }
    }

    // Drop isolated single-cell obstacles.
    let isolated: Vec<Cell> = (0..map.len())
        .map(|i| map.cell(i))
        .filter(|&c| map.is_obstacle(c) && map.neighbors4(c).all(|n| map.is_free(n)))
        .collect();
    for c in isolated {
        map.set_obstacle(c, false);
    }

    if let Some(r) = ringed {
        let g = goals[r];
        let rad = cfg.ring_radius;
        for y in g.y - rad..=g.y + rad {
            for x in g.x - rad..=g.x + rad {
                let c = Cell::new(x, y);
                map.set_obstacle(c, chebyshev(c, g) == rad);
            }
        }
    }

    let scenario = Scenario::new(map, &goals, init, seed)?;
    for (i, g) in scenario.goals.iter().enumerate() {
        let want = Some(i) != ringed;
        if g.reachable != want {
            return Ok(GenOutcome::Retry(format!("goal {} reachability is {}", g.cell, g.reachable)));
        }
    }
    Ok(GenOutcome::Done(
        scenario,
        NoiseStats {
            eligible,
            flipped,
            attempts: 0,
        },
    ))
}

/// Encodes a map as binary PGM: 0 = obstacle, 255 = free.
pub fn save_map(map: &GridMap) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", map.width(), map.height());
    let mut out = Vec::with_capacity(header.len() + map.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(map.obstacles().iter().map(|&o| if o { 0u8 } else { 255u8 }));
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => return,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
    }
}

/// Decodes a binary PGM map. Only pixel values 0 and 255 are accepted.
pub fn load_map(bytes: &[u8]) -> Result<GridMap> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(0, "missing P5 magic"));
    }
    let mut hdr = Header { bytes, pos: 2 };
    let width = hdr.number("width")?;
    let height = hdr.number("height")?;
    let maxval_at = hdr.pos;
    let maxval = hdr.number("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(maxval_at, format!("maxval must be 255, got {maxval}")));
    }
    match bytes.get(hdr.pos) {
        Some(b) if b.is_ascii_whitespace() => hdr.pos += 1,
        _ => return Err(Error::parse(hdr.pos, "expected whitespace after maxval")),
    }
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::parse(3, format!("dimensions {width}x{height} below {MIN_SIDE}x{MIN_SIDE}")));
    }
    let body = &bytes[hdr.pos..];
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(3, "dimensions overflow"))?;
    if body.len() != expected {
        return Err(Error::parse(
            hdr.pos + body.len().min(expected),
            format!("expected {expected} pixel bytes, found {}", body.len()),
        ));
    }
    let mut obstacle = Vec::with_capacity(expected);
    for (i, &p) in body.iter().enumerate() {
        match p {
            0 => obstacle.push(true),
            255 => obstacle.push(false),
            v => return Err(Error::parse(hdr.pos + i, format!("pixel value {v} is neither 0 nor 255"))),
        }
    }
    Ok(GridMap {
        width,
        height,
        obstacle,
    })
}
