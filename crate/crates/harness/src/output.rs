use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use nonzero_core::metrics::median;
use nonzero_core::planner::SearchTrace;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::runner::{Outcome, Row};

pub const SUMMARY_SCHEMA: &str = "nonzero-summary/1";
pub const COMPARISON_SCHEMA: &str = "nonzero-comparison/1";

/// Seconds since the epoch; the only nondeterministic field in any output.
pub fn generated_at() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// `trace.jsonl`, plus `theta.jsonl` and `expansions.jsonl` when non-empty.
pub fn write_trace(dir: &Path, trace: &SearchTrace) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_jsonl(&dir.join("trace.jsonl"), &trace.records)?;
    if !trace.theta_snapshots.is_empty() {
        write_jsonl(&dir.join("theta.jsonl"), &trace.theta_snapshots)?;
    }
    if !trace.expansions.is_empty() {
        write_jsonl(&dir.join("expansions.jsonl"), &trace.expansions)?;
    }
    Ok(())
}

fn exp_column(cfg: &ExperimentConfig, env: &str) -> String {
    if cfg.env.len() > 1 {
        format!("{}/{}", cfg.experiment.name, env)
    } else {
        cfg.experiment.name.clone()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            n,
            mean,
            std: var.sqrt(),
            median: median(values)?,
            q1: quantile(&sorted, 0.25),
            q3: quantile(&sorted, 0.75),
        })
    }
}

#[derive(Debug, Serialize)]
struct Cell {
    env: String,
    planner: String,
    metric: String,
    #[serde(flatten)]
    stats: Stats,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    schema: &'static str,
    generated_at: u64,
    experiment: &'a str,
    budget: usize,
    eps1: f64,
    eps2: f64,
    cells: Vec<Cell>,
}

/// Groups rows by `(env, planner, metric)`, keeping config and first-seen order.
fn grouped<'a>(cfg: &ExperimentConfig, rows: impl Iterator<Item = &'a Row>) -> Vec<(String, String, String, Vec<f64>)> {
    let env_rank = |e: &str| cfg.env.iter().position(|x| x.label() == e).unwrap_or(usize::MAX);
    let planner_rank = |p: &str| cfg.planner.iter().position(|x| x.name == p).unwrap_or(usize::MAX);
    let mut metrics: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(usize, usize, usize), (String, String, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let m = match metrics.iter().position(|x| *x == r.metric) {
            Some(m) => m,
            None => {
                metrics.push(r.metric.clone());
                metrics.len() - 1
            }
        };
        groups
            .entry((env_rank(&r.env), planner_rank(&r.planner), m))
            .or_insert_with(|| (r.env.clone(), r.planner.clone(), Vec::new()))
            .2
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((_, _, m), (env, planner, values))| (env, planner, metrics[m].clone(), values))
        .collect()
}

pub fn write_summary(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<()> {
    let stamp = generated_at();
    let mut csv = format!("# schema={SUMMARY_SCHEMA} generated_at={stamp}\nexp,planner,seed,metric,value\n");
    for r in outcome.rows() {
        writeln!(csv, "{},{},{},{},{}", exp_column(cfg, &r.env), r.planner, r.seed, r.metric, r.value)
            .expect("string write");
    }
    std::fs::write(outcome.exp_dir.join("summary.csv"), csv)?;

    let cells = grouped(cfg, outcome.rows())
        .into_iter()
        .filter_map(|(env, planner, metric, values)| {
            Stats::of(&values).map(|stats| Cell {
                env,
                planner,
                metric,
                stats,
            })
        })
        .collect();
    let summary = Summary {
        schema: SUMMARY_SCHEMA,
        generated_at: stamp,
        experiment: &cfg.experiment.name,
        budget: cfg.experiment.budget,
        eps1: cfg.experiment.eps1,
        eps2: cfg.experiment.eps2,
        cells,
    };
    std::fs::write(outcome.exp_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

const COMPARED: [&str; 3] = ["final_value", "final_return", "hitting_time"];

fn fmt_opt(s: Option<&Stats>, f: impl Fn(&Stats) -> f64) -> String {
    s.map(|s| format!("{}", f(s))).unwrap_or_default()
}

/// `comparison.csv` and `comparison.txt`: one row per `(env, planner)`.
pub fn write_comparison(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<()> {
    let mut stats: BTreeMap<(String, String, String), Stats> = BTreeMap::new();
    let mut censored: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (env, planner, metric, values) in grouped(cfg, outcome.rows()) {
        if metric == "hit_censored" {
            censored.insert((env.clone(), planner.clone()), values.iter().filter(|v| **v > 0.5).count());
        }
        if let Some(s) = Stats::of(&values) {
            stats.insert((env, planner, metric), s);
        }
    }

    let mut csv = format!("# schema={COMPARISON_SCHEMA}\nenv,planner,seeds");
    for m in COMPARED {
        write!(csv, ",{m}_mean,{m}_std").expect("string write");
    }
    csv.push_str(",censored\n");
    let mut table = vec![vec![
        "env".to_string(),
        "planner".into(),
        "seeds".into(),
        "final value".into(),
        "final return".into(),
        "hitting time".into(),
        "censored".into(),
    ]];
    for env in &cfg.env {
        let label = env.label();
        for p in &cfg.planner {
            let get = |m: &str| stats.get(&(label.clone(), p.name.clone(), m.to_string()));
            let cens = censored.get(&(label.clone(), p.name.clone())).map(|c| c.to_string()).unwrap_or_default();
            write!(csv, "{},{},{}", label, p.name, env.seeds.len()).expect("string write");
            let mut line = vec![label.clone(), p.name.clone(), env.seeds.len().to_string()];
            for m in COMPARED {
                let s = get(m);
                write!(csv, ",{},{}", fmt_opt(s, |s| s.mean), fmt_opt(s, |s| s.std)).expect("string write");
                line.push(s.map(|s| format!("{:.3} ± {:.3}", s.mean, s.std)).unwrap_or_else(|| "-".into()));
            }
            writeln!(csv, ",{cens}").expect("string write");
            line.push(if cens.is_empty() { "-".into() } else { cens });
            table.push(line);
        }
    }
    std::fs::write(outcome.exp_dir.join("comparison.csv"), csv)?;

    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut txt = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
            .collect();
        writeln!(txt, "{}", cells.join("  ").trim_end()).expect("string write");
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            writeln!(txt, "{}", "-".repeat(total)).expect("string write");
        }
    }
    std::fs::write(outcome.exp_dir.join("comparison.txt"), txt)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_match_hand_computation() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.q1, 1.75);
        assert_eq!(s.q3, 3.25);
        assert!(Stats::of(&[]).is_none());
        assert_eq!(Stats::of(&[7.0]).unwrap().std, 0.0);
    }
}
