//! Score fields: gradients of log-probability on the grid, queried at
//! continuous states by bilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::kernel::ProbabilityField;

pub type Vec2 = [f64; 2];

/// Probability floor applied before taking logs.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// Continuous position in cell units; cell `(i, j)` has its centre at `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct State {
    pub x: f64,
    pub y: f64,
}

impl State {
    pub const fn new(x: f64, y: f64) -> Self {
        State { x, y }
    }

    pub fn center_of(cell: Cell) -> Self {
        State::new(cell.x as f64, cell.y as f64)
    }

    pub fn distance(&self, other: State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Clamps into `[0, width-1] x [0, height-1]`.
    pub fn clamped(self, width: usize, height: usize) -> Self {
        State::new(
            self.x.clamp(0.0, (width - 1) as f64),
            self.y.clamp(0.0, (height - 1) as f64),
        )
    }

    pub fn in_domain(&self, width: usize, height: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x <= (width - 1) as f64 && self.y <= (height - 1) as f64
    }
}

impl From<[f64; 2]> for State {
    fn from(v: [f64; 2]) -> Self {
        State::new(v[0], v[1])
    }
}

impl From<State> for [f64; 2] {
    fn from(s: State) -> Self {
        [s.x, s.y]
    }
}

/// Corner indices and weights for bilinear interpolation at `s`.
pub fn bilinear(s: State, width: usize, height: usize) -> Result<([usize; 4], [f64; 4])> {
    if !(s.in_domain(width, height)) {
        return Err(Error::OutOfDomain {
            x: s.x,
            y: s.y,
            max_x: (width - 1) as f64,
            max_y: (height - 1) as f64,
        });
    }
    let x0 = (s.x.floor() as usize).min(width - 2);
    let y0 = (s.y.floor() as usize).min(height - 2);
    let fx = s.x - x0 as f64;
    let fy = s.y - y0 as f64;
    let i = y0 * width + x0;
    Ok((
        [i, i + 1, i + width, i + width + 1],
        [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
    ))
}

/// Per-cell 2-vectors of `d log p / dx` and `d log p / dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreField {
    width: usize,
    height: usize,
    vectors: Vec<Vec2>,
    floor: f64,
}

impl ScoreField {
    pub fn from_vectors(width: usize, height: usize, vectors: Vec<Vec2>) -> Result<Self> {
        if vectors.len() != width * height || width < 2 || height < 2 {
            return Err(Error::DimensionMismatch {
                expected_w: width,
                expected_h: height,
                got_w: vectors.len(),
                got_h: 1,
            });
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("score vectors must be finite".into()));
        }
        Ok(ScoreField {
            width,
            height,
            vectors,
            floor: DEFAULT_FLOOR,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn vectors(&self) -> &[Vec2] {
        &self.vectors
    }

    pub fn at(&self, cell: Cell) -> Vec2 {
        self.vectors[cell.y * self.width + cell.x]
    }

    /// Bilinearly interpolated score at `s`.
    pub fn score_at(&self, s: State) -> Result<Vec2> {
        let (idx, w) = bilinear(s, self.width, self.height)?;
        let mut out = [0.0; 2];
        for (&i, &wi) in idx.iter().zip(&w) {
            out[0] += wi * self.vectors[i][0];
            out[1] += wi * self.vectors[i][1];
        }
        Ok(out)
    }
}

/// Central differences of `ln max(p, floor)`; one-sided on the outer edge.
pub fn score_field_with_floor(p: &ProbabilityField, floor: f64) -> ScoreField {
    let (w, h) = (p.width(), p.height());
    let logp: Vec<f64> = p.values().iter().map(|&v| v.max(floor).ln()).collect();
    let at = |x: usize, y: usize| logp[y * w + x];
    let mut vectors = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let dx = if x == 0 {
                at(1, y) - at(0, y)
            } else if x == w - 1 {
                at(x, y) - at(x - 1, y)
            } else {
                (at(x + 1, y) - at(x - 1, y)) / 2.0
            };
            let dy = if y == 0 {
                at(x, 1) - at(x, 0)
            } else if y == h - 1 {
                at(x, y) - at(x, y - 1)
            } else {
                (at(x, y + 1) - at(x, y - 1)) / 2.0
            };
            vectors.push([dx, dy]);
        }
    }
    ScoreField {
        width: w,
        height: h,
        vectors,
        floor,
    }
}

pub fn score_field(p: &ProbabilityField) -> ScoreField {
    score_field_with_floor(p, DEFAULT_FLOOR)
}

/// Exact score of an isotropic Gaussian mixture `sum_i w_i N(s; mu_i, sigma^2 I)`.
pub fn analytic_gaussian_score(s: State, means: &[State], sigma: f64, weights: &[f64]) -> Vec2 {
    debug_assert_eq!(means.len(), weights.len());
    let inv_var = 1.0 / (sigma * sigma);
    // Responsibilities via log-sum-exp.
    let logits: Vec<f64> = means
        .iter()
        .zip(weights)
        .map(|(m, &w)| {
            let d2 = (s.x - m.x).powi(2) + (s.y - m.y).powi(2);
            w.ln() - 0.5 * d2 * inv_var
        })
        .collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut norm = 0.0;
    let mut out = [0.0; 2];
    for (m, &l) in means.iter().zip(&logits) {
        let r = (l - top).exp();
        norm += r;
        out[0] += r * (m.x - s.x);
        out[1] += r * (m.y - s.y);
    }
    [out[0] * inv_var / norm, out[1] * inv_var / norm]
}

/// Cosine similarity of two flattened vector fields over the selected cells.
pub fn field_cosine(a: &[Vec2], b: &[Vec2], select: impl Fn(usize) -> bool) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (i, (u, v)) in a.iter().zip(b).enumerate() {
        if !select(i) {
            continue;
        }
        dot += u[0] * v[0] + u[1] * v[1];
        na += u[0] * u[0] + u[1] * u[1];
        nb += v[0] * v[0] + v[1] * v[1];
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::FieldRole;

    fn linear_field(w: usize, h: usize) -> ScoreField {
        let v = (0..w * h).map(|i| [(i % w) as f64, (i / w) as f64]).collect();
        ScoreField::from_vectors(w, h, v).unwrap()
    }

    #[test]
    fn uniform_has_zero_interior_score() {
        let p = ProbabilityField::from_weights(10, 10, vec![1.0; 100], FieldRole::Pt).unwrap();
        let s = score_field(&p);
        for y in 1..9 {
            for x in 1..9 {
                assert_eq!(s.at(Cell::new(x, y)), [0.0, 0.0]);
            }
        }
    }

    #[test]
    fn discrete_gaussian_matches_analytic() {
        let (w, h) = (48, 48);
        let (mx, my, sigma) = (24.0, 22.0, 4.0);
        let vals: Vec<f64> = (0..w * h)
            .map(|i| {
                let dx = (i % w) as f64 - mx;
                let dy = (i / w) as f64 - my;
                (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let p = ProbabilityField::from_weights(w, h, vals, FieldRole::Pt).unwrap();
        let s = score_field(&p);
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                if p.at(Cell::new(x, y)) <= 1e-6 {
                    continue;
                }
                let v = s.at(Cell::new(x, y));
                let e = [-(x as f64 - mx) / (sigma * sigma), -(y as f64 - my) / (sigma * sigma)];
                // log p is quadratic, so central differences are exact.
                assert!((v[0] - e[0]).abs() < 1e-9 && (v[1] - e[1]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn score_points_away_from_obstacle() {
        // Obstacle column at x = 5 holds zero probability.
        let vals: Vec<f64> = (0..100).map(|i| if i % 10 == 5 { 0.0 } else { 1.0 }).collect();
        let p = ProbabilityField::from_weights(10, 10, vals, FieldRole::Pt).unwrap();
        let s = score_field(&p);
        for y in 0..10 {
            assert!(s.at(Cell::new(6, y))[0] > 0.0);
            assert!(s.at(Cell::new(4, y))[0] < 0.0);
        }
        assert!(s.vectors().iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn interpolation_at_centres_and_midpoints() {
        let v: Vec<Vec2> = (0..16).map(|i| [i as f64 * 0.5, -(i as f64)]).collect();
        let f = ScoreField::from_vectors(4, 4, v.clone()).unwrap();
        assert_eq!(f.score_at(State::new(2.0, 1.0)).unwrap(), v[6]);
        assert_eq!(f.score_at(State::new(3.0, 3.0)).unwrap(), v[15]);
        let mid = f.score_at(State::new(1.5, 2.0)).unwrap();
        assert_eq!(mid, [(v[9][0] + v[10][0]) / 2.0, (v[9][1] + v[10][1]) / 2.0]);
    }

    #[test]
    fn out_of_domain_query_fails() {
        let f = linear_field(5, 5);
        assert!(f.score_at(State::new(-0.1, 1.0)).is_err());
        assert!(f.score_at(State::new(1.0, 4.01)).is_err());
        assert!(f.score_at(State::new(4.0, 4.0)).is_ok());
    }

    #[test]
    fn single_gaussian_closed_form() {
        let mu = State::new(3.0, -2.0);
        assert_eq!(analytic_gaussian_score(mu, &[mu], 1.5, &[1.0]), [0.0, 0.0]);
        let s = State::new(4.0, 1.0);
        let got = analytic_gaussian_score(s, &[mu], 2.0, &[1.0]);
        assert!((got[0] + 0.25).abs() < 1e-15 && (got[1] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn mixture_matches_finite_differences() {
        let means = [State::new(10.0, 10.0), State::new(20.0, 14.0)];
        let weights = [0.5, 0.5];
        let sigma = 3.0;
        let logp = |s: State| {
            means
                .iter()
                .zip(&weights)
                .map(|(m, w)| w * (-((s.x - m.x).powi(2) + (s.y - m.y).powi(2)) / (2.0 * sigma * sigma)).exp())
                .sum::<f64>()
                .ln()
        };
        // Point on the perpendicular bisector.
        let mid = State::new(15.0, 12.0);
        let axis = [10.0 / 116f64.sqrt(), 4.0 / 116f64.sqrt()];
        let s = State::new(mid.x - 2.0 * axis[1], mid.y + 2.0 * axis[0]);
        let got = analytic_gaussian_score(s, &means, sigma, &weights);
        assert!((got[0] * axis[0] + got[1] * axis[1]).abs() < 1e-12);
        let h = 1e-6;
        let fd = [
            (logp(State::new(s.x + h, s.y)) - logp(State::new(s.x - h, s.y))) / (2.0 * h),
            (logp(State::new(s.x, s.y + h)) - logp(State::new(s.x, s.y - h))) / (2.0 * h),
        ];
        assert!((fd[0] - got[0]).abs() < 1e-5 && (fd[1] - got[1]).abs() < 1e-5);
    }
}
