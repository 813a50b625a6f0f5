use serde::{Deserialize, Serialize};

use crate::action_space::{Direction, JointAction};

/// One simulation (or one bandit pull) as seen from the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based.
    pub iter: usize,
    pub selected_action: JointAction,
    pub reward: f64,
    #[serde(rename = "return")]
    pub ret: f64,
    /// Composite surrogate error at the root before the update.
    pub xi: Option<f64>,
    /// Best action found so far at the root.
    pub incumbent: JointAction,
    /// True reward of `incumbent`.
    pub incumbent_value: f64,
    /// Running value estimate of `incumbent`.
    pub q1_of_incumbent: Option<f64>,
    /// `argmax_C η` at the root, when a surrogate exists.
    pub eta_incumbent: Option<JointAction>,
    pub eta_incumbent_value: Option<f64>,
    /// Cumulative executed actions.
    pub env_queries: u64,
    /// Cumulative counterfactual reward-model queries.
    pub model_queries: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSnapshot {
    pub iter: usize,
    pub theta: Vec<f64>,
}

/// Surrogate diagnostics logged when a node is expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub iter: usize,
    pub depth: usize,
    pub base: JointAction,
    pub u: Direction,
    pub v: Option<Direction>,
    /// `η(a^(u)) − η(a)`.
    pub delta1: f64,
    /// `η(a^(u,v)) − η(a)`.
    pub pair_gain: Option<f64>,
    /// `Δ²_{u,v} η(a)`.
    pub mixed: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub planner: String,
    pub records: Vec<StepRecord>,
    pub theta_snapshots: Vec<ThetaSnapshot>,
    pub expansions: Vec<ExpansionRecord>,
    /// Root visit counts, ascending by action.
    pub root_visits: Vec<(JointAction, u64)>,
}

impl SearchTrace {
    pub fn new(planner: impl Into<String>) -> Self {
        Self {
            planner: planner.into(),
            ..Self::default()
        }
    }

    pub fn selected_actions(&self) -> impl Iterator<Item = &JointAction> {
        self.records.iter().map(|r| &r.selected_action)
    }

    pub fn incumbents(&self) -> impl Iterator<Item = &JointAction> {
        self.records.iter().map(|r| &r.incumbent)
    }

    pub fn final_incumbent_value(&self) -> Option<f64> {
        self.records.last().map(|r| r.incumbent_value)
    }

    /// Visit distribution over root actions.
    pub fn root_policy(&self) -> Vec<(JointAction, f64)> {
        let total: u64 = self.root_visits.iter().map(|(_, n)| n).sum();
        self.root_visits
            .iter()
            .map(|(a, n)| (a.clone(), *n as f64 / total.max(1) as f64))
            .collect()
    }
}
