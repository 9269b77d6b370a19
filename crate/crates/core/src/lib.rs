//! Multi-critic reinforcement learning for dynamic portfolio optimisation.
//!
//! The crate is organised bottom-up: [`data`] loads price tables and lays the
//! period grid over them, [`accounting`] keeps the share-level book, [`env`]
//! turns both into a trading MDP with a per-asset reward factor matrix,
//! [`nn`] and [`agent`] implement the learner, [`baselines`] holds the
//! auxiliary weight providers and classical benchmark strategies, and
//! [`backtest`] evaluates any of them out of sample.

pub mod accounting;
pub mod agent;
pub mod backtest;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod env;
mod error;
pub mod nn;
pub mod seed;
pub mod synthetic;

pub use error::{Error, Result};
