//! Desk-scale goal-conditioned test-time training.
//!
//! The crate is organized around the experiment pipeline:
//!
//! - [`nn`]: dense MLP numerics — forward passes, hand-written gradients for
//!   the fixed loss set, Adam, and exact parameter snapshot/restore.
//! - [`env`]: deterministic goal-reaching mazes (discrete grid + continuous
//!   point) sharing a sparse `{-1, 0}` goal reward.
//! - [`data`]: scripted offline dataset generation (expert / play regimes),
//!   persistence, and a spatial-hash index over sub-trajectory start states.
//! - [`backbone`]: offline pre-training (goal-conditioned BC, IQL with AWR or
//!   DDPG+BC extraction) with hindsight goal relabeling.
//! - [`select`]: the test-time data-selection engine — relevance filtering,
//!   H-step return scoring, critic-free returns, percentile optimality.
//! - [`ttt`]: the receding-horizon fine-tune / rollout / reset evaluation
//!   loop, plus the evaluation and ablation protocols.
//! - [`flops`]: the analytic inference-compute model and FLOP-matched width
//!   solving.

pub mod backbone;
pub mod data;
pub mod env;
mod error;
pub mod flops;
pub mod nn;
pub mod seeding;
pub mod select;
pub mod ttt;

pub use error::{Error, Result};
