//! Invariant checks over a written `trace.jsonl`.

use std::collections::BTreeMap;
use std::path::Path;

use nonzero_core::planner::StepRecord;
use nonzero_core::JointAction;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub line: usize,
    pub message: String,
}

pub fn read_trace(path: &Path) -> Result<Vec<StepRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// Checks step numbering, counters, action shapes and finiteness.
///
/// With `deterministic`, also requires that an action always earns the same
/// reward and that the incumbent never scores below an earlier incumbent.
pub fn verify_records(records: &[StepRecord], deterministic: bool) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |line: usize, message: String| out.push(Violation { line, message });
    let n = records.first().map(|r| r.selected_action.len());
    let mut seen: BTreeMap<&JointAction, f64> = BTreeMap::new();
    let mut best_incumbent = f64::NEG_INFINITY;
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        if r.iter != line {
            flag(line, format!("iter {} where {line} was expected", r.iter));
        }
        let floats = [Some(r.reward), Some(r.ret), Some(r.incumbent_value), r.xi, r.q1_of_incumbent, r.eta_incumbent_value];
        if floats.iter().flatten().any(|x| !x.is_finite()) {
            flag(line, "non-finite value".into());
        }
        if Some(r.selected_action.len()) != n || Some(r.incumbent.len()) != n {
            flag(line, "joint action length changed".into());
        }
        if let Some(prev) = i.checked_sub(1).map(|j| &records[j]) {
            if r.env_queries <= prev.env_queries {
                flag(line, format!("env_queries {} did not increase", r.env_queries));
            }
            if r.model_queries < prev.model_queries {
                flag(line, format!("model_queries fell to {}", r.model_queries));
            }
        }
        if deterministic {
            match seen.get(&r.selected_action) {
                Some(&prev) if prev != r.reward => {
                    flag(line, format!("{} earned {} after earning {prev}", r.selected_action, r.reward));
                }
                _ => {
                    seen.insert(&r.selected_action, r.reward);
                }
            }
            if r.incumbent_value < best_incumbent {
                flag(line, format!("incumbent value fell to {}", r.incumbent_value));
            }
            best_incumbent = best_incumbent.max(r.incumbent_value);
        }
    }
    out
}

pub fn verify_file(path: &Path, deterministic: bool) -> Result<Vec<Violation>> {
    Ok(verify_records(&read_trace(path)?, deterministic))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iter: usize, a: Vec<usize>, reward: f64, inc: f64) -> StepRecord {
        StepRecord {
            iter,
            selected_action: JointAction::new(a.clone()),
            reward,
            ret: reward,
            xi: None,
            incumbent: JointAction::new(a),
            incumbent_value: inc,
            q1_of_incumbent: None,
            eta_incumbent: None,
            eta_incumbent_value: None,
            env_queries: iter as u64,
            model_queries: 0,
        }
    }

    #[test]
    fn clean_trace_passes() {
        let recs = vec![record(1, vec![0, 0], 0.0, 0.0), record(2, vec![1, 0], 1.0, 1.0)];
        assert!(verify_records(&recs, true).is_empty());
    }

    #[test]
    fn catches_each_violation() {
        let mut recs = vec![
            record(1, vec![0, 0], 0.0, 2.0),
            record(3, vec![0, 0], 1.0, 1.0),
            record(3, vec![0, 0, 0], f64::NAN, 1.0),
        ];
        recs[2].env_queries = 2;
        let v = verify_records(&recs, true);
        let has = |s: &str| v.iter().any(|x| x.message.contains(s));
        assert!(has("iter 3 where 2"));
        assert!(has("earned 1"));
        assert!(has("incumbent value fell"));
        assert!(has("non-finite"));
        assert!(has("length changed"));
        assert!(has("did not increase"));
        assert_eq!(verify_records(&recs[..2], false).len(), 1);
    }
}
