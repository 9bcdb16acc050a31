//! Model-based planning distilled into a maximum-entropy policy.
//!
//! Two tiers share this crate:
//!
//! * an exact tabular tier ([`soft_pi`]) where multi-step soft policy
//!   improvement, its distillation into a one-step policy, and extended
//!   policy iteration are computed with linear solves and checked against
//!   brute-force oracles, and
//! * a function-approximation tier ([`nn`], [`ensemble`], [`agent`]) that
//!   trains ensembles of dynamics models and improves a stack of per-step
//!   policies by differentiating planned rollouts.
//!
//! [`verify`] and [`registry`] expose both tiers to the command-line harness
//! by name.

pub mod agent;
pub mod buffer;
pub mod ensemble;
pub mod error;
pub mod mdp;
pub mod nn;
pub mod registry;
pub mod report;
pub mod rng;
pub mod soft_pi;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
