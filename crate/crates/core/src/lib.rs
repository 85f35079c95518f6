//! Adaptive and non-adaptive influence maximization under the independent
//! cascade model with myopic feedback.
//!
//! The crate has exact evaluators for small graphs, which enumerate live-edge
//! graphs, and Monte Carlo evaluators for larger ones. On top of these sit the
//! greedy policies, brute-force OPT_N / OPT_A oracles, instance-level checks
//! of the 2-level model inequalities, and a stochastic submodular maximization
//! counterpart over item states.

pub mod diffusion;
pub mod error;
pub mod graph;
pub mod harness;
pub mod oracle;
pub mod policy;
pub mod smsm;
pub mod verify;

pub use error::{Error, ParseErrorKind, Resource, Result};
pub use graph::{InfluenceGraph, LiveEdgeGraph, LivePair, NodeId, SeedSet};
