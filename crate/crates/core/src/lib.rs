//! Collision-avoiding diffusion planning on occupancy grids.
//!
//! Goal distributions are diffused with an obstacle-masked heat equation
//! instead of a Gaussian kernel, so their scores never point through walls and
//! mass never crosses into disconnected regions. Annealed Langevin dynamics on
//! those scores produce goals together with the trajectories reaching them.

pub mod baselines;
pub mod cli;
pub mod error;
pub mod eval;
pub mod field_io;
pub mod grid;
pub mod heat;
pub mod kernel;
pub mod par;
pub mod render;
pub mod sampler;
pub mod score;
pub mod scorematch;
pub mod seed;

pub use error::{Error, Result};
