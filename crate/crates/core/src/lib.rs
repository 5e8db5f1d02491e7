//! Flows, quasi-stationary distributions and Monte Carlo validation for
//! continuous- and discrete-state branching processes that explode.

pub mod discrete;
pub mod error;
pub mod fixtures;
pub mod flow;
pub mod mechanism;
pub mod montecarlo;
pub mod qsd;
pub mod quad;
pub mod roots;
pub mod special;
pub mod verify;

pub use error::{Error, Result};
pub use mechanism::{classify, Asymptote, BranchingMechanism, Classification, Criticality, NuComponent};
