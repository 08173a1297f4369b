//! Belief-based age-of-information scheduling for uplink multiuser MIMO.

pub mod belief;
pub mod bounds;
pub mod channel;
pub mod cli;
pub mod config;
pub mod drift;
pub mod error;
pub mod policy;
pub mod report;
pub mod rng;
pub mod sim;
pub mod verify;

pub use belief::{BeliefTriple, Observation};
pub use bounds::{Bound, BoundReport, XiDistribution};
pub use channel::{ChannelParams, SuccessTable};
pub use drift::{ActionSet, DriftWeights};
pub use error::{Error, Result};
pub use policy::{Policy, PolicyKind, PolicySpec};
pub use rng::SimRng;
pub use sim::{MonteCarloSummary, NetworkConfig, RunResult};
