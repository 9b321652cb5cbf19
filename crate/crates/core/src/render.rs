//! PPM rendering of maps, probability fields, trajectories and goals.
//!
//! Row 0 of the image is `y = 0`, matching the PGM map files.

use crate::error::{Error, Result};
use crate::grid::{Cell, GridMap, Scenario};
use crate::score::State;

pub type Rgb = [u8; 3];

pub const OBSTACLE: Rgb = [0, 0, 0];
pub const FREE: Rgb = [255, 255, 255];
pub const TRAJECTORY: Rgb = [255, 0, 0];
pub const GOAL: Rgb = [0, 255, 0];

/// Ramp end for the densest cell of a field; zero mass stays white.
const RAMP_TOP: Rgb = [16, 48, 160];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Image {
    /// Obstacles black, free space white.
    pub fn from_map(map: &GridMap) -> Self {
        Image {
            width: map.width(),
            height: map.height(),
            pixels: map.obstacles().iter().map(|&o| if o { OBSTACLE } else { FREE }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    fn check(&self, w: usize, h: usize) -> Result<()> {
        if (w, h) != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected_w: self.width,
                expected_h: self.height,
                got_w: w,
                got_h: h,
            });
        }
        Ok(())
    }

    /// Shades free cells by `values / max(values)`. Obstacle pixels are left black.
    pub fn shade_field(&mut self, map: &GridMap, width: usize, height: usize, values: &[f64]) -> Result<()> {
        self.check(width, height)?;
        self.check(map.width(), map.height())?;
        if values.len() != width * height {
            return Err(Error::Config(format!(
                "field holds {} values for a {width}x{height} grid",
                values.len()
            )));
        }
        let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Ok(());
        }
        for (i, &v) in values.iter().enumerate() {
            if map.obstacles()[i] {
                continue;
            }
            let t = if v.is_finite() { (v / max).clamp(0.0, 1.0) } else { 0.0 };
            self.pixels[i] = ramp(t);
        }
        Ok(())
    }

    /// Marks the cell under each state red. States outside the grid are skipped.
    pub fn draw_states(&mut self, map: &GridMap, states: &[State]) -> Result<()> {
        self.check(map.width(), map.height())?;
        for s in states {
            if let Some(c) = map.cell_at(s.x, s.y) {
                if map.is_free(c) {
                    self.pixels[map.index(c)] = TRAJECTORY;
                }
            }
        }
        Ok(())
    }

    /// Draws a 3x3 green cross on each goal, leaving obstacle pixels black.
    pub fn draw_goals(&mut self, map: &GridMap, goals: &[Cell]) -> Result<()> {
        self.check(map.width(), map.height())?;
        for g in goals {
            map.check_cell(*g)?;
            let (x, y) = (g.x as i64, g.y as i64);
            for (dx, dy) in [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)] {
                let (px, py) = (x + dx, y + dy);
                if px < 0 || py < 0 || px >= self.width as i64 || py >= self.height as i64 {
                    continue;
                }
                let c = Cell::new(px as usize, py as usize);
                if map.is_free(c) {
                    self.pixels[map.index(c)] = GOAL;
                }
            }
        }
        Ok(())
    }

    /// Binary PPM bytes.
    pub fn to_ppm(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + 3 * self.pixels.len());
        out.extend_from_slice(header.as_bytes());
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

fn ramp(t: f64) -> Rgb {
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    [mix(FREE[0], RAMP_TOP[0]), mix(FREE[1], RAMP_TOP[1]), mix(FREE[2], RAMP_TOP[2])]
}

/// What to draw over a scenario.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overlay<'a> {
    /// Row-major scalar field with its dimensions.
    pub field: Option<(usize, usize, &'a [f64])>,
    pub trajectories: &'a [Vec<State>],
    pub goals: bool,
}

/// Field first, then trajectories, then goal crosses on top.
pub fn render(scenario: &Scenario, overlay: &Overlay<'_>) -> Result<Vec<u8>> {
    let map = &scenario.map;
    let mut img = Image::from_map(map);
    if let Some((w, h, v)) = overlay.field {
        img.shade_field(map, w, h, v)?;
    }
    for t in overlay.trajectories {
        img.draw_states(map, t)?;
    }
    if overlay.goals {
        let cells: Vec<Cell> = scenario.goals.iter().map(|g| g.cell).collect();
        img.draw_goals(map, &cells)?;
    }
    Ok(img.to_ppm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;

    fn body(ppm: &[u8], header: &str) -> Vec<u8> {
        assert!(ppm.starts_with(header.as_bytes()));
        ppm[header.len()..].to_vec()
    }

    #[test]
    fn free_map_is_all_white() {
        let map = GridMap::free(12, 9).unwrap();
        let ppm = Image::from_map(&map).to_ppm();
        let px = body(&ppm, "P6\n12 9\n255\n");
        assert_eq!(px.len(), 12 * 9 * 3);
        assert!(px.iter().all(|&b| b == 255));
    }

    #[test]
    fn obstacles_stay_black_under_every_overlay() {
        let map = GridMap::from_fn(10, 10, |x, _| x == 5).unwrap();
        let s = Scenario::new(map, &[Cell::new(6, 4)], Rect { x: 1, y: 1, w: 2, h: 2 }, 0).unwrap();
        let field = vec![1.0; 100];
        let traj = vec![vec![State::new(5.0, 3.0), State::new(4.0, 3.0)]];
        let ppm = render(
            &s,
            &Overlay {
                field: Some((10, 10, &field)),
                trajectories: &traj,
                goals: true,
            },
        )
        .unwrap();
        let px = body(&ppm, "P6\n10 10\n255\n");
        let at = |x: usize, y: usize| -> Rgb {
            let i = 3 * (y * 10 + x);
            [px[i], px[i + 1], px[i + 2]]
        };
        for y in 0..10 {
            assert_eq!(at(5, y), OBSTACLE);
        }
        assert_eq!(at(4, 3), TRAJECTORY);
        assert_eq!(at(6, 4), GOAL);
        assert_eq!(at(7, 4), GOAL);
        assert_eq!(at(6, 3), GOAL);
        assert_eq!(at(7, 5), ramp(1.0));
    }

    #[test]
    fn ramp_ends() {
        assert_eq!(ramp(0.0), FREE);
        assert_eq!(ramp(1.0), RAMP_TOP);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let map = GridMap::free(8, 8).unwrap();
        let mut img = Image::from_map(&map);
        assert!(matches!(
            img.shade_field(&map, 8, 7, &[0.0; 56]),
            Err(Error::DimensionMismatch { .. })
        ));
        let other = GridMap::free(9, 8).unwrap();
        assert!(img.draw_states(&other, &[]).is_err());
    }

    #[test]
    fn bytes_are_deterministic() {
        let map = GridMap::from_fn(16, 16, |x, y| (x * 7 + y * 3) % 11 == 0).unwrap();
        let s = Scenario::new(map, &[Cell::new(8, 8)], Rect { x: 1, y: 1, w: 2, h: 2 }, 0).unwrap();
        let traj = vec![vec![State::new(2.2, 2.7), State::new(3.9, 4.1)]];
        let ov = Overlay {
            field: None,
            trajectories: &traj,
            goals: true,
        };
        assert_eq!(render(&s, &ov).unwrap(), render(&s, &ov).unwrap());
    }
}
