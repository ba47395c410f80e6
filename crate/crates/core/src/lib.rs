//! Exact queueing analysis of coded transmissions over binary symmetric and
//! Gilbert-Elliott channels, with code-parameter selection and a Monte Carlo
//! cross-check.

pub mod channel;
pub mod coding;
pub mod error;
pub mod math;
pub mod optimizer;
mod poly;
pub mod queueing;
pub mod simulator;
pub mod traffic;

pub use channel::{ChannelKind, ChannelModel};
pub use coding::{CodeSpec, FailureProfile, Scheme, WeightModel};
pub use error::{Error, Result};
pub use traffic::TrafficModel;
