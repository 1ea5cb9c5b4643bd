//! Turn-based hex combat simulator with a hierarchical reinforcement-learning
//! agent stack.
//!
//! - [`hexgrid`]: axial coordinates, rings, disks.
//! - [`engine`]: rules, scenarios, episode logs.
//! - [`observation`]: fixed-size local and global encodings.
//! - [`behaviors`]: scripted policies and the `BehaviorModel` trait.
//! - [`learn`]: approximators, tabular and deep Q-learning, score predictors.
//! - [`multimodel`]: behavior arbitration by predicted score.
//! - [`hierarchy`]: commander, managers, and goal-conditioned units.
//! - [`playserver`]: human-vs-AI protocol and WebSocket server.

pub mod behaviors;
pub mod cli;
pub mod engine;
pub mod error;
pub mod fuzz;
pub mod hexgrid;
pub mod hierarchy;
pub mod learn;
pub mod multimodel;
pub mod observation;
pub mod playserver;

pub use error::{Error, Result};
