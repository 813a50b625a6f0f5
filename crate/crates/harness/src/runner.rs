use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use nonzero_core::environment::{EpisodicMatGame, Environment};
use nonzero_core::metrics::{
    gap_regret, hitting_time, indicator_regret, loglog_slope, separation_ratio, HittingTime,
};
use nonzero_core::oracle::{global_argmax, local_maximizer_set, LocalMaximizerSet, ENUMERATION_CAP};
use nonzero_core::planner::{run_baseline, run_search, SearchTrace};
use nonzero_core::{Error as CoreError, JointAction};

use crate::config::{ExperimentConfig, Metric, PlannerKind, PlannerSpec};
use crate::error::{HarnessError, Result};
use crate::output;

/// One `(env, planner, seed)` cell of a sweep.
#[derive(Debug, Clone)]
pub struct Job {
    pub env: usize,
    pub planner: usize,
    pub seed: u64,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub env: String,
    pub planner: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleData {
    pub argmax: JointAction,
    pub global_value: f64,
    pub set: LocalMaximizerSet,
}

#[derive(Debug)]
pub struct JobResult {
    pub job: Job,
    pub dir: PathBuf,
    pub rows: Vec<Row>,
    pub hit: Option<(HittingTime, HittingTime)>,
}

/// Everything a finished sweep produced.
#[derive(Debug)]
pub struct Outcome {
    pub exp_dir: PathBuf,
    pub results: Vec<JobResult>,
    pub separation: Vec<Row>,
}

impl Outcome {
    pub fn rows(&self) -> impl Iterator<Item = &Row> {
        self.results.iter().flat_map(|r| r.rows.iter()).chain(&self.separation)
    }
}

pub fn pool(parallel: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot build thread pool: {e}")))
}

fn cardinality_label(env: &EpisodicMatGame) -> String {
    let space = env.space();
    space
        .cardinality()
        .map(|c| c.to_string())
        .unwrap_or_else(|| format!("{}^{}", space.actions_per_agent(), space.agents()))
}

/// Refuses oracle metrics on spaces the enumerator would not finish.
fn check_oracle_cap(cfg: &ExperimentConfig, metrics: &[Metric]) -> Result<()> {
    let Some(metric) = metrics.iter().find(|m| m.needs_oracle()) else {
        return Ok(());
    };
    for env_cfg in &cfg.env {
        let env = env_cfg.build(env_cfg.seeds[0])?;
        let card = env.space().cardinality();
        if card.is_none_or(|c| c > ENUMERATION_CAP) {
            return Err(HarnessError::OracleCap {
                metric: metric.name().to_string(),
                source: CoreError::CapExceeded {
                    needed: cardinality_label(&env),
                    cap: ENUMERATION_CAP,
                },
            });
        }
    }
    Ok(())
}

pub fn compute_oracle(env: &EpisodicMatGame, eps1: f64, eps2: f64) -> Result<OracleData> {
    let (argmax, global_value) = global_argmax(env)?;
    let set = local_maximizer_set(env, eps1, eps2)?;
    Ok(OracleData {
        argmax,
        global_value,
        set,
    })
}

pub fn run_planner(env: &EpisodicMatGame, spec: &PlannerSpec, budget: usize, seed: u64) -> Result<SearchTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trace = match spec {
        PlannerSpec::Search(cfg) => {
            let mut cfg = cfg.clone();
            cfg.n_sim = budget;
            run_search(env, &cfg, &mut rng)?.1
        }
        PlannerSpec::Baseline(cfg) => run_baseline(env, cfg, budget, &mut rng)?,
    };
    Ok(trace)
}

fn job_dir(cfg: &ExperimentConfig, exp_dir: &Path, job: &Job) -> PathBuf {
    let mut dir = exp_dir.to_path_buf();
    if cfg.env.len() > 1 {
        dir.push(cfg.env[job.env].label());
    }
    dir.push(&cfg.planner[job.planner].name);
    dir.push(job.seed.to_string());
    dir
}

fn basic_metrics(trace: &SearchTrace, metrics: &[Metric], push: &mut impl FnMut(Metric, f64)) {
    let Some(last) = trace.records.last() else {
        return;
    };
    for &m in metrics {
        match m {
            Metric::FinalValue => push(m, last.incumbent_value),
            Metric::FinalReturn => push(m, last.ret),
            Metric::BestReward => push(m, trace.records.iter().map(|r| r.reward).fold(f64::NEG_INFINITY, f64::max)),
            Metric::EnvQueries => push(m, last.env_queries as f64),
            Metric::ModelQueries => push(m, last.model_queries as f64),
            _ => {}
        }
    }
}

/// Hitting time in executions and in total reward queries.
fn hitting(trace: &SearchTrace, set: &LocalMaximizerSet) -> (HittingTime, HittingTime) {
    let budget = trace.records.len();
    let hit = hitting_time(trace.selected_actions(), set);
    let steps = HittingTime::new(hit, budget);
    let queries = |i: usize| {
        let r = &trace.records[i];
        (r.env_queries + r.model_queries) as usize
    };
    let by_queries = match hit {
        Some(t) => HittingTime::new(Some(queries(t - 1)), 0),
        None => HittingTime::new(None, trace.records.last().map_or(0, |_| queries(budget - 1))),
    };
    (steps, by_queries)
}

fn oracle_metrics(
    env: &EpisodicMatGame,
    trace: &SearchTrace,
    oracle: &OracleData,
    metrics: &[Metric],
    push: &mut impl FnMut(Metric, f64),
) -> Result<()> {
    let Some(last) = trace.records.last() else {
        return Ok(());
    };
    let (steps, queries) = hitting(trace, &oracle.set);
    let indicator = indicator_regret(trace.selected_actions(), &oracle.set)?;
    for &m in metrics {
        match m {
            Metric::GlobalValue => push(m, oracle.global_value),
            Metric::FinalIsLocal => push(m, f64::from(u8::from(oracle.set.contains(&last.incumbent)))),
            Metric::HittingTime => push(m, steps.steps as f64),
            Metric::HittingTimeQueries => push(m, queries.steps as f64),
            Metric::HitCensored => push(m, f64::from(u8::from(steps.censored))),
            Metric::IndicatorRegret => push(m, indicator[indicator.len() - 1]),
            Metric::GapRegret => {
                let gap = gap_regret(trace.selected_actions(), env, &oracle.set)?;
                push(m, gap[gap.len() - 1]);
            }
            Metric::RegretSlope => {
                let t = indicator.len();
                match loglog_slope(&indicator, (t / 100).max(1), t) {
                    Ok(slope) => push(m, slope),
                    // Zero regret or a single step: no slope to report.
                    Err(CoreError::NonPositiveSeries { .. } | CoreError::InvalidConfig(_)) => {}
                    Err(e) => return Err(e.into()),
                }
            }
            _ => {}
        }
    }
    Ok(())
}

fn run_job(
    cfg: &ExperimentConfig,
    exp_dir: &Path,
    job: Job,
    env: &EpisodicMatGame,
    oracle: Option<&OracleData>,
    metrics: &[Metric],
) -> Result<JobResult> {
    let planner = &cfg.planner[job.planner];
    let spec = planner.resolve(cfg.experiment.budget)?;
    let trace = run_planner(env, &spec, cfg.experiment.budget, job.seed)?;
    if let Some(bad) = trace.records.iter().find(|r| !(r.reward.is_finite() && r.ret.is_finite())) {
        return Err(CoreError::NumericFailure(format!("non-finite reward at step {}", bad.iter)).into());
    }

    let dir = job_dir(cfg, exp_dir, &job);
    output::write_trace(&dir, &trace)?;

    let mut rows = Vec::new();
    let env_label = cfg.env[job.env].label();
    let mut push = |m: Metric, value: f64| {
        rows.push(Row {
            env: env_label.clone(),
            planner: planner.name.clone(),
            seed: job.seed,
            metric: m.name().to_string(),
            value,
        })
    };
    basic_metrics(&trace, metrics, &mut push);
    let mut hit = None;
    if let Some(oracle) = oracle {
        oracle_metrics(env, &trace, oracle, metrics, &mut push)?;
        hit = Some(hitting(&trace, &oracle.set));
    }
    rows.sort_by_key(|r| Metric::ALL.iter().position(|m| m.name() == r.metric));
    Ok(JobResult { job, dir, rows, hit })
}

/// Separation rows for the first search planner against the first flat UCB.
fn separation_rows(cfg: &ExperimentConfig, results: &[JobResult]) -> Vec<Row> {
    let find = |kind: PlannerKind| cfg.planner.iter().position(|p| p.kind == kind);
    let (Some(nz), Some(ucb)) = (find(PlannerKind::Nonzero), find(PlannerKind::FlatUcb)) else {
        return Vec::new();
    };
    let mut by_cell: BTreeMap<(usize, u64), [Option<(HittingTime, HittingTime)>; 2]> = BTreeMap::new();
    for r in results {
        let Some(hit) = r.hit else { continue };
        let slot = if r.job.planner == nz {
            0
        } else if r.job.planner == ucb {
            1
        } else {
            continue;
        };
        by_cell.entry((r.job.env, r.job.seed)).or_default()[slot] = Some(hit);
    }
    let mut rows = Vec::new();
    for ((env, seed), cell) in by_cell {
        let [Some(nz_hit), Some(ucb_hit)] = cell else { continue };
        let steps = separation_ratio(ucb_hit.0, nz_hit.0);
        let queries = separation_ratio(ucb_hit.1, nz_hit.1);
        for (metric, value) in [
            ("separation_ratio", steps.ratio),
            ("separation_ratio_queries", queries.ratio),
            ("separation_incomparable", f64::from(u8::from(steps.incomparable()))),
            ("separation_lower_bound", f64::from(u8::from(steps.is_lower_bound()))),
        ] {
            rows.push(Row {
                env: cfg.env[env].label(),
                planner: "separation".into(),
                seed,
                metric: metric.into(),
                value,
            });
        }
    }
    rows
}

/// Runs every `(env, planner, seed)` job and writes traces and summaries.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    let metrics = cfg.metrics();
    check_oracle_cap(cfg, &metrics)?;
    let needs_oracle = metrics.iter().any(|m| m.needs_oracle());

    let exp_dir = cfg.out_root().join(&cfg.experiment.name);
    if exp_dir.exists() {
        eprintln!("warning: overwriting {}", exp_dir.display());
        std::fs::remove_dir_all(&exp_dir)?;
    }
    std::fs::create_dir_all(&exp_dir)?;

    let pool = pool(cfg.experiment.parallel)?;
    let cells: Vec<(usize, u64)> = cfg
        .env
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.seeds.iter().map(move |&s| (i, s)))
        .collect();

    let results = pool.install(|| -> Result<Vec<JobResult>> {
        let envs: Vec<(EpisodicMatGame, Option<OracleData>)> = cells
            .par_iter()
            .map(|&(i, seed)| {
                let env_cfg = &cfg.env[i];
                let env = env_cfg.build(seed)?;
                let oracle = if needs_oracle {
                    Some(compute_oracle(&env, cfg.experiment.eps1, cfg.experiment.eps2)?)
                } else {
                    None
                };
                Ok((env, oracle))
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, Job)> = cells
            .iter()
            .enumerate()
            .flat_map(|(c, &(env, seed))| (0..cfg.planner.len()).map(move |planner| (c, Job { env, planner, seed })))
            .collect();
        jobs.into_par_iter()
            .map(|(c, job)| {
                let (env, oracle) = &envs[c];
                run_job(cfg, &exp_dir, job, env, oracle.as_ref(), &metrics)
            })
            .collect()
    })?;

    let separation = separation_rows(cfg, &results);
    let outcome = Outcome {
        exp_dir,
        results,
        separation,
    };
    output::write_summary(cfg, &outcome)?;
    Ok(outcome)
}

/// `run` plus the cross-planner comparison table.
pub fn run_matrix(cfg: &ExperimentConfig) -> Result<Outcome> {
    if cfg.planner.len() < 2 {
        return Err(HarnessError::Config(format!(
            "matrix needs at least 2 planners, got {}",
            cfg.planner.len()
        )));
    }
    let outcome = run_experiment(cfg)?;
    output::write_comparison(cfg, &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Serialize)]
pub struct OracleDump {
    pub env: String,
    pub seed: u64,
    pub eps1: f64,
    pub eps2: f64,
    pub argmax: JointAction,
    pub global_value: f64,
    pub members: Vec<JointAction>,
    pub values: Vec<f64>,
}

/// Local-maximizer sets for every `(env, seed)`.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<Vec<OracleDump>> {
    if cfg.env.is_empty() {
        return Err(HarnessError::Config("at least one [[env]] is required".into()));
    }
    check_oracle_cap(cfg, &[Metric::HittingTime]).map_err(|e| match e {
        HarnessError::OracleCap { source, .. } => HarnessError::OracleCap {
            metric: "local_maximizer_set".into(),
            source,
        },
        other => other,
    })?;
    let cells: Vec<(usize, u64)> = cfg
        .env
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let (eps1, eps2) = (cfg.experiment.eps1, cfg.experiment.eps2);
    let dumps = pool(cfg.experiment.parallel)?.install(|| {
        cells
            .par_iter()
            .map(|&(i, seed)| {
                let env = cfg.env[i].build(seed)?;
                let data = compute_oracle(&env, eps1, eps2)?;
                let members: Vec<JointAction> = data.set.actions().collect();
                let values = members.iter().map(|a| Environment::reward(&env, a)).collect();
                Ok(OracleDump {
                    env: cfg.env[i].label(),
                    seed,
                    eps1,
                    eps2,
                    argmax: data.argmax,
                    global_value: data.global_value,
                    members,
                    values,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let dir = cfg.out_root().join(&cfg.experiment.name).join("oracle");
    std::fs::create_dir_all(&dir)?;
    for d in &dumps {
        let path = dir.join(format!("{}_{}.json", d.env, d.seed));
        std::fs::write(path, serde_json::to_string_pretty(d)? + "\n")?;
    }
    Ok(dumps)
}
