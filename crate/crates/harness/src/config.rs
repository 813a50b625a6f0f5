//! Experiment files.
//!
//! ```toml
//! [experiment]
//! name = "smoke"
//! budget = 100
//!
//! [[env]]
//! kind = "linear"
//! n = 2
//! d = 3
//! seeds = [0, 1]
//!
//! [[planner]]
//! name = "nonzero"
//! kind = "nonzero"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nonzero_core::environment::{EpisodicMatGame, PayoffTensor, TensorKind, TensorSpec, DEFAULT_DENSE_CAP};
use nonzero_core::planner::{BaselineConfig, BaselineMode, LinkConfig, PlannerConfig, SelectionMode, WarmStart};
use nonzero_core::proposal::ProposalConfig;

use crate::error::{HarnessError, Result};

/// Metrics the runner knows how to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FinalValue,
    FinalReturn,
    BestReward,
    EnvQueries,
    ModelQueries,
    GlobalValue,
    FinalIsLocal,
    HittingTime,
    HittingTimeQueries,
    HitCensored,
    IndicatorRegret,
    GapRegret,
    RegretSlope,
}

impl Metric {
    pub const ALL: [Metric; 13] = [
        Metric::FinalValue,
        Metric::FinalReturn,
        Metric::BestReward,
        Metric::EnvQueries,
        Metric::ModelQueries,
        Metric::GlobalValue,
        Metric::FinalIsLocal,
        Metric::HittingTime,
        Metric::HittingTimeQueries,
        Metric::HitCensored,
        Metric::IndicatorRegret,
        Metric::GapRegret,
        Metric::RegretSlope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FinalValue => "final_value",
            Metric::FinalReturn => "final_return",
            Metric::BestReward => "best_reward",
            Metric::EnvQueries => "env_queries",
            Metric::ModelQueries => "model_queries",
            Metric::GlobalValue => "global_value",
            Metric::FinalIsLocal => "final_is_local",
            Metric::HittingTime => "hitting_time",
            Metric::HittingTimeQueries => "hitting_time_queries",
            Metric::HitCensored => "hit_censored",
            Metric::IndicatorRegret => "indicator_regret",
            Metric::GapRegret => "gap_regret",
            Metric::RegretSlope => "regret_slope",
        }
    }

    /// Whether the metric enumerates the whole action space.
    pub fn needs_oracle(self) -> bool {
        !matches!(
            self,
            Metric::FinalValue | Metric::FinalReturn | Metric::BestReward | Metric::EnvQueries | Metric::ModelQueries
        )
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub budget: usize,
    #[serde(default)]
    pub eps1: f64,
    #[serde(default)]
    pub eps2: f64,
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallel: usize,
    pub metrics: Option<Vec<Metric>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub kind: TensorKind,
    pub n: usize,
    pub d: usize,
    pub seeds: Vec<u64>,
    pub label: Option<String>,
    #[serde(default = "one")]
    pub horizon: usize,
    #[serde(default)]
    pub discount: f64,
    pub dense_cap: Option<u64>,
    #[serde(default)]
    pub query_noise: bool,
}

fn one() -> usize {
    1
}

impl EnvSection {
    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| format!("{}_n{}_d{}", self.kind, self.n, self.d))
    }

    pub fn build(&self, seed: u64) -> Result<EpisodicMatGame> {
        let spec = TensorSpec {
            kind: self.kind,
            n: self.n,
            d: self.d,
            seed,
            dense_cap: self.dense_cap.unwrap_or(DEFAULT_DENSE_CAP),
            query_noise: self.query_noise,
        };
        let tensor = PayoffTensor::from_spec(spec)?;
        Ok(EpisodicMatGame::new(tensor, self.horizon, self.discount)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Nonzero,
    FlatUcb,
    SampledPuct,
    FullPuct,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerSection {
    pub name: String,
    pub kind: PlannerKind,
    // Search planner.
    pub candidate_cap: Option<usize>,
    pub k_single: Option<usize>,
    pub k_pair: Option<usize>,
    pub pair_sample_budget: Option<usize>,
    pub learning_rate: Option<f64>,
    pub grad_steps_per_backup: Option<usize>,
    pub selection_mode: Option<SelectionMode>,
    pub c_explore: Option<f64>,
    pub warm_start: Option<WarmStart>,
    pub init_random: Option<usize>,
    pub prior_refill: Option<bool>,
    pub link_c: Option<f64>,
    pub link_alpha: Option<f64>,
    pub theta_snapshot_every: Option<usize>,
    // Baselines.
    pub exploration: Option<f64>,
    pub sample_count: Option<usize>,
}

/// A planner ready to run.
#[derive(Debug, Clone, PartialEq)]
pub enum PlannerSpec {
    Search(PlannerConfig),
    Baseline(BaselineConfig),
}

impl PlannerSection {
    fn search_keys(&self) -> Vec<&'static str> {
        let mut used = Vec::new();
        let mut mark = |present: bool, key: &'static str| {
            if present {
                used.push(key);
            }
        };
        mark(self.candidate_cap.is_some(), "candidate_cap");
        mark(self.k_single.is_some(), "k_single");
        mark(self.k_pair.is_some(), "k_pair");
        mark(self.pair_sample_budget.is_some(), "pair_sample_budget");
        mark(self.learning_rate.is_some(), "learning_rate");
        mark(self.grad_steps_per_backup.is_some(), "grad_steps_per_backup");
        mark(self.selection_mode.is_some(), "selection_mode");
        mark(self.c_explore.is_some(), "c_explore");
        mark(self.warm_start.is_some(), "warm_start");
        mark(self.init_random.is_some(), "init_random");
        mark(self.prior_refill.is_some(), "prior_refill");
        mark(self.link_c.is_some(), "link_c");
        mark(self.link_alpha.is_some(), "link_alpha");
        mark(self.theta_snapshot_every.is_some(), "theta_snapshot_every");
        used
    }

    pub fn resolve(&self, budget: usize) -> Result<PlannerSpec> {
        let bad = |key: &str| {
            HarnessError::Config(format!(
                "planner `{}`: key `{key}` does not apply to kind {:?}",
                self.name, self.kind
            ))
        };
        match self.kind {
            PlannerKind::Nonzero => {
                if self.exploration.is_some() {
                    return Err(bad("exploration"));
                }
                if self.sample_count.is_some() {
                    return Err(bad("sample_count"));
                }
                let d = PlannerConfig::default();
                let p = ProposalConfig::default();
                let link = match (self.link_c, self.link_alpha) {
                    (None, None) => LinkConfig::RewardScaled,
                    (Some(c), Some(alpha)) => LinkConfig::Fixed { c, alpha },
                    _ => {
                        return Err(HarnessError::Config(format!(
                            "planner `{}`: link_c and link_alpha go together",
                            self.name
                        )))
                    }
                };
                let cfg = PlannerConfig {
                    n_sim: budget,
                    proposal: ProposalConfig {
                        k_single: self.k_single.unwrap_or(p.k_single),
                        k_pair: self.k_pair.unwrap_or(p.k_pair),
                        pair_sample_budget: self.pair_sample_budget.unwrap_or(p.pair_sample_budget),
                        candidate_cap: self.candidate_cap.unwrap_or(p.candidate_cap),
                    },
                    learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
                    grad_steps_per_backup: self.grad_steps_per_backup.unwrap_or(d.grad_steps_per_backup),
                    selection_mode: self.selection_mode.unwrap_or(d.selection_mode),
                    c_explore: self.c_explore.unwrap_or(d.c_explore),
                    warm_start: self.warm_start.unwrap_or(d.warm_start),
                    link,
                    init_random: self.init_random.or(d.init_random),
                    prior_refill: self.prior_refill.unwrap_or(d.prior_refill),
                    theta_snapshot_every: self.theta_snapshot_every.unwrap_or(d.theta_snapshot_every),
                    ..d
                };
                cfg.validate()
                    .map_err(|e| HarnessError::Config(format!("planner `{}`: {e}", self.name)))?;
                Ok(PlannerSpec::Search(cfg))
            }
            kind => {
                if let Some(key) = self.search_keys().first() {
                    return Err(bad(key));
                }
                let mode = match kind {
                    PlannerKind::FlatUcb => BaselineMode::FlatUcb,
                    PlannerKind::FullPuct => BaselineMode::FullPuct,
                    PlannerKind::SampledPuct => BaselineMode::SampledPuct {
                        sample_count: self.sample_count.ok_or_else(|| {
                            HarnessError::Config(format!("planner `{}`: sampled_puct needs sample_count", self.name))
                        })?,
                    },
                    PlannerKind::Nonzero => unreachable!(),
                };
                if self.sample_count.is_some() && kind != PlannerKind::SampledPuct {
                    return Err(bad("sample_count"));
                }
                let default = match mode {
                    BaselineMode::FlatUcb => BaselineConfig::flat_ucb().exploration,
                    _ => BaselineConfig::sampled_puct(1).exploration,
                };
                let cfg = BaselineConfig {
                    mode,
                    exploration: self.exploration.unwrap_or(default),
                };
                cfg.validate()
                    .map_err(|e| HarnessError::Config(format!("planner `{}`: {e}", self.name)))?;
                Ok(PlannerSpec::Baseline(cfg))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub env: Vec<EnvSection>,
    #[serde(default)]
    pub planner: Vec<PlannerSection>,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub parallel: Option<usize>,
    pub budget: Option<usize>,
}

fn safe_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') && s != "." && s != ".."
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.experiment.out = Some(out.clone());
        }
        if let Some(seeds) = &o.seeds {
            for env in &mut self.env {
                env.seeds = seeds.clone();
            }
        }
        if let Some(p) = o.parallel {
            self.experiment.parallel = p;
        }
        if let Some(b) = o.budget {
            self.experiment.budget = b;
        }
    }

    /// Output root: config, then `NONZERO_OUT`, then `results`.
    pub fn out_root(&self) -> PathBuf {
        self.experiment
            .out
            .clone()
            .or_else(|| std::env::var_os("NONZERO_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("results"))
    }

    pub fn metrics(&self) -> Vec<Metric> {
        let mut m = self.experiment.metrics.clone().unwrap_or_else(|| Metric::ALL.to_vec());
        m.sort();
        m.dedup();
        m
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if !safe_name(&e.name) {
            return Err(HarnessError::Config(format!("experiment name `{}` is not a safe path component", e.name)));
        }
        if e.budget == 0 {
            return Err(HarnessError::Config("budget must be at least 1".into()));
        }
        if !(e.eps1.is_finite() && e.eps1 >= 0.0 && e.eps2.is_finite() && e.eps2 >= 0.0) {
            return Err(HarnessError::Config("eps1 and eps2 must be finite and nonnegative".into()));
        }
        if self.env.is_empty() {
            return Err(HarnessError::Config("at least one [[env]] is required".into()));
        }
        let mut labels = Vec::new();
        for env in &self.env {
            if env.seeds.is_empty() {
                return Err(HarnessError::Config(format!("env `{}` has an empty seed list", env.label())));
            }
            if !safe_name(&env.label()) {
                return Err(HarnessError::Config(format!("env label `{}` is not a safe path component", env.label())));
            }
            if labels.contains(&env.label()) {
                return Err(HarnessError::Config(format!("duplicate env label `{}`", env.label())));
            }
            labels.push(env.label());
        }
        if self.planner.is_empty() {
            return Err(HarnessError::Config("at least one [[planner]] is required".into()));
        }
        let mut names = Vec::new();
        for p in &self.planner {
            if !safe_name(&p.name) {
                return Err(HarnessError::Config(format!("planner name `{}` is not a safe path component", p.name)));
            }
            if names.contains(&&p.name) {
                return Err(HarnessError::Config(format!("duplicate planner name `{}`", p.name)));
            }
            names.push(&p.name);
            p.resolve(e.budget)?;
        }
        Ok(())
    }
}
