//! Q-learning with multi-step optimality bounds.
//!
//! The library trains Q-functions (tabular or small dense networks) with the
//! standard replay + frozen-target loop, optionally tightened by multi-step
//! lower/upper bounds on Q* enforced through a quadratic penalty. Everything
//! is sized for desk-scale experiments where exact dynamic-programming
//! oracles are available, so the bound machinery can be verified against
//! ground truth rather than eyeballed.

pub mod agent;
pub mod bounds;
pub mod checkpoint;
pub mod env;
pub mod eval;
pub mod error;
pub mod nn;
pub mod qfunction;
pub mod replay;

pub use error::{CoreError, Result};
