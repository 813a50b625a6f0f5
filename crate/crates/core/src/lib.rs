//! Multi-agent Monte Carlo tree search over factored joint-action spaces.
//!
//! Each tree node keeps a small candidate set of joint actions and an
//! asinh-GLM surrogate of the return. New candidates come from one-agent
//! deviations ranked by predicted gain and two-agent deviations ranked by
//! predicted coordinated gain.

pub mod action_space;
pub mod environment;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod planner;
pub mod proposal;
pub mod surrogate;

pub use action_space::{Direction, JointAction, JointActionSpace};
pub use environment::{EpisodicMatGame, Environment, PayoffTensor, RewardFn, TensorKind, TensorSpec};
pub use error::{Error, Result};
pub use planner::{run_search, BaselineConfig, PlannerConfig, SearchTrace};
pub use proposal::ProposalConfig;
pub use surrogate::{SupervisionSample, SurrogateParams};
