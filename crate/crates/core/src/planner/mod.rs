//! Tree search with per-node surrogates and interaction-guided candidate
//! sets, plus the flat-UCB and sampled-pUCT baselines.

mod baselines;
mod nonzero;
mod trace;

use serde::{Deserialize, Serialize};

use crate::action_space::JointAction;
use crate::error::{Error, Result};
use crate::proposal::ProposalConfig;

pub use baselines::{run_baseline, run_flat_ucb, run_sampled_puct, BaselineConfig, BaselineMode};
pub use nonzero::{run_search, EdgeStats, NodeId, SearchNode, SearchTree, Simulation};
pub use trace::{ExpansionRecord, SearchTrace, StepRecord, ThetaSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// `argmax_C η(θ, a)`.
    EtaOnly,
    /// `η` plus a pUCT-shaped visit bonus.
    EtaPlusVisit,
    /// Unvisited candidates first in `η` order, then the best visited action.
    Anchored,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    ParentCopy,
    Zero,
}

/// Constants of the asinh link used by every node surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LinkConfig {
    /// `c = s`, `α = 1/s` with `s` the environment reward scale.
    RewardScaled,
    Fixed { c: f64, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub n_sim: usize,
    pub proposal: ProposalConfig,
    pub learning_rate: f64,
    pub grad_steps_per_backup: usize,
    /// Overrides the environment discount when set.
    pub discount: Option<f64>,
    pub selection_mode: SelectionMode,
    /// Weight of the visit bonus under [`SelectionMode::EtaPlusVisit`].
    pub c_explore: f64,
    pub warm_start: WarmStart,
    pub link: LinkConfig,
    /// Random actions drawn at expansion; `None` fills up to the cap.
    pub init_random: Option<usize>,
    /// Add one unseen random action whenever every candidate is visited.
    pub prior_refill: bool,
    /// Actions placed in the root candidate set before random draws.
    pub root_seeds: Vec<JointAction>,
    /// Root `θ` snapshot cadence in simulations; 0 disables.
    pub theta_snapshot_every: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_sim: 1000,
            proposal: ProposalConfig::default(),
            learning_rate: 0.05,
            grad_steps_per_backup: 1,
            discount: None,
            selection_mode: SelectionMode::Anchored,
            c_explore: 1.0,
            warm_start: WarmStart::ParentCopy,
            link: LinkConfig::RewardScaled,
            init_random: None,
            prior_refill: true,
            root_seeds: Vec::new(),
            theta_snapshot_every: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim == 0 {
            return Err(Error::InvalidConfig("n_sim must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(g) = self.discount {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidConfig(format!("discount must lie in [0, 1), got {g}")));
            }
        }
        if !(self.c_explore.is_finite() && self.c_explore >= 0.0) {
            return Err(Error::InvalidConfig("c_explore must be nonnegative".into()));
        }
        if let LinkConfig::Fixed { c, alpha } = self.link {
            if !(c > 0.0 && alpha > 0.0 && c.is_finite() && alpha.is_finite()) {
                return Err(Error::InvalidConfig("link constants must be positive".into()));
            }
        }
        self.proposal.validate()
    }
}
