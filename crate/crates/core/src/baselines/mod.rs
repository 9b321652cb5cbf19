//! Comparison planners: behaviour cloning, obstacle-blind Gaussian
//! diffusion, and Gaussian goal sampling followed by RRT*.

pub mod bc;
pub mod gaussian;
pub mod rrt;

pub use bc::{bc_fit, bc_fit_horizon, bc_rollout, BCFieldModel};
pub use gaussian::{gaussian_diffusion_sample, gaussian_plus_rrt, gaussian_score, GaussianScore};
pub use rrt::{rrt_star, RRTStarConfig, RrtOutcome, RrtTree};
