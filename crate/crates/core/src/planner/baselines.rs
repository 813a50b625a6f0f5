use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::trace::{SearchTrace, StepRecord};
use crate::action_space::{JointAction, JointActionSpace};
use crate::environment::Environment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BaselineMode {
    /// UCB1 over every joint action.
    FlatUcb,
    /// pUCT over `sample_count` uniform draws per node.
    SampledPuct { sample_count: usize },
    /// pUCT over all of `A`.
    FullPuct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub mode: BaselineMode,
    /// `c(s)`; must be positive.
    pub exploration: f64,
}

impl BaselineConfig {
    pub fn flat_ucb() -> Self {
        Self {
            mode: BaselineMode::FlatUcb,
            exploration: 1.0,
        }
    }

    pub fn sampled_puct(sample_count: usize) -> Self {
        Self {
            mode: BaselineMode::SampledPuct { sample_count },
            exploration: 1.25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exploration.is_finite() && self.exploration > 0.0) {
            return Err(Error::InvalidConfig("exploration constant must be positive".into()));
        }
        if let BaselineMode::SampledPuct { sample_count: 0 } = self.mode {
            return Err(Error::InvalidConfig("sample_count must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn run_baseline<E: Environment + ?Sized>(
    env: &E,
    cfg: &BaselineConfig,
    budget: usize,
    rng: &mut dyn RngCore,
) -> Result<SearchTrace> {
    cfg.validate()?;
    match cfg.mode {
        BaselineMode::FlatUcb => run_flat_ucb(env, budget, cfg.exploration, rng),
        BaselineMode::SampledPuct { sample_count } => {
            run_sampled_puct(env, budget, sample_count, cfg.exploration, rng)
        }
        BaselineMode::FullPuct => {
            let card = env.space().cardinality().unwrap_or(u64::MAX);
            run_sampled_puct(env, budget, usize::try_from(card).unwrap_or(usize::MAX), cfg.exploration, rng)
        }
    }
}

/// UCB1 with optimistic initialization over all `d^n` arms.
///
/// Unpulled arms are pulled first in index order, so the arm table grows
/// lazily and spaces far beyond the budget stay cheap. Once every arm has
/// been pulled the rule is `mean + c·s·√(ln t / n)` with `s` the reward scale.
pub fn run_flat_ucb<E: Environment + ?Sized>(
    env: &E,
    budget: usize,
    exploration: f64,
    rng: &mut dyn RngCore,
) -> Result<SearchTrace> {
    if !(exploration.is_finite() && exploration > 0.0) {
        return Err(Error::InvalidConfig("exploration constant must be positive".into()));
    }
    let space = *env.space();
    let card = space.cardinality().unwrap_or(u64::MAX);
    let bonus = exploration * env.reward_scale();
    let mut trace = SearchTrace::new("flat_ucb");
    // (pulls, mean) indexed by arm, filled in index order.
    let mut arms: Vec<(u64, f64)> = Vec::new();
    let mut incumbent: usize = 0;

    for t in 1..=budget {
        let arm = if (arms.len() as u64) < card {
            arms.push((0, 0.0));
            arms.len() - 1
        } else {
            let log_t = (t as f64).ln();
            let mut best = (0, f64::NEG_INFINITY);
            for (i, &(n, mean)) in arms.iter().enumerate() {
                let score = mean + bonus * (log_t / n as f64).sqrt();
                if score > best.1 {
                    best = (i, score);
                }
            }
            best.0
        };
        let a = space.action_at(arm as u64);
        let r = env.sample_reward(&a, rng);
        let entry = &mut arms[arm];
        entry.0 += 1;
        entry.1 += (r - entry.1) / entry.0 as f64;

        let better = |i: usize, j: usize| arms[i].1 > arms[j].1 || (arms[i].1 == arms[j].1 && i < j);
        if t == 1 || better(arm, incumbent) {
            incumbent = arm;
        } else if arm == incumbent {
            incumbent = (0..arms.len()).fold(0, |b, i| if better(i, b) { i } else { b });
        }
        let inc_action = space.action_at(incumbent as u64);
        trace.records.push(StepRecord {
            iter: t,
            selected_action: a,
            reward: r,
            ret: r,
            xi: None,
            incumbent_value: env.reward(&inc_action),
            q1_of_incumbent: Some(arms[incumbent].1),
            incumbent: inc_action,
            eta_incumbent: None,
            eta_incumbent_value: None,
            env_queries: t as u64,
            model_queries: 0,
        });
    }
    trace.root_visits = arms
        .iter()
        .enumerate()
        .map(|(i, &(n, _))| (space.action_at(i as u64), n))
        .collect();
    Ok(trace)
}

#[derive(Debug, Clone)]
struct PuctNode {
    depth: usize,
    expanded: bool,
    /// Sampled support `T(s)` with empirical frequencies `β̂`.
    arms: Vec<(JointAction, f64)>,
    stats: Vec<(u64, f64)>,
    children: BTreeMap<usize, usize>,
}

impl PuctNode {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            expanded: false,
            arms: Vec::new(),
            stats: Vec::new(),
            children: BTreeMap::new(),
        }
    }

    fn expand(&mut self, space: &JointActionSpace, sample_count: usize, rng: &mut dyn RngCore) -> Result<()> {
        let card = space.cardinality();
        if card.is_some_and(|c| sample_count as u64 >= c) {
            let c = card.expect("checked") as f64;
            self.arms = space.iter()?.map(|a| (a, 1.0 / c)).collect();
        } else {
            let mut counts: BTreeMap<JointAction, usize> = BTreeMap::new();
            for _ in 0..sample_count {
                *counts.entry(space.sample_uniform(rng)).or_default() += 1;
            }
            self.arms = counts
                .into_iter()
                .map(|(a, k)| (a, k as f64 / sample_count as f64))
                .collect();
        }
        self.stats = vec![(0, 0.0); self.arms.len()];
        self.expanded = true;
        Ok(())
    }

    /// `Q̄ + c·(β̂/β)·P·√ΣN/(1+N)` with a uniform prior `P = β`, where `Q̄` is
    /// min-max normalized over visited arms and 0 for unvisited ones.
    fn select(&self, exploration: f64) -> usize {
        let visited = self.stats.iter().filter(|s| s.0 > 0).map(|s| s.1);
        let (lo, hi) = visited.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), q| (l.min(q), h.max(q)));
        let total: u64 = self.stats.iter().map(|s| s.0).sum();
        let root_total = (total as f64).sqrt();
        let mut best = (0, f64::NEG_INFINITY);
        for (i, ((_, beta_hat), &(n, q))) in self.arms.iter().zip(&self.stats).enumerate() {
            let q_norm = if n > 0 && hi > lo { (q - lo) / (hi - lo) } else { 0.0 };
            let score = q_norm + exploration * beta_hat * root_total / (1 + n) as f64;
            if score > best.1 {
                best = (i, score);
            }
        }
        best.0
    }

    fn incumbent(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &(n, q)) in self.stats.iter().enumerate() {
            if n > 0 && best.is_none_or(|b| q > self.stats[b].1) {
                best = Some(i);
            }
        }
        best
    }
}

/// pUCT over per-node uniform samples of `sample_count` actions drawn with
/// replacement; exhaustive when `sample_count ≥ |A|`.
pub fn run_sampled_puct<E: Environment + ?Sized>(
    env: &E,
    budget: usize,
    sample_count: usize,
    exploration: f64,
    rng: &mut dyn RngCore,
) -> Result<SearchTrace> {
    if sample_count == 0 {
        return Err(Error::InvalidConfig("sample_count must be at least 1".into()));
    }
    if !(exploration.is_finite() && exploration > 0.0) {
        return Err(Error::InvalidConfig("exploration constant must be positive".into()));
    }
    let space = *env.space();
    let horizon = env.horizon();
    let discount = env.discount();
    let mut nodes = vec![PuctNode::new(0)];
    let mut trace = SearchTrace::new("sampled_puct");
    let mut executed = 0u64;

    for t in 1..=budget {
        let mut path: Vec<(usize, usize, f64)> = Vec::new();
        let mut id = 0;
        loop {
            let fresh = !nodes[id].expanded;
            if fresh {
                nodes[id].expand(&space, sample_count, rng)?;
            }
            let arm = nodes[id].select(exploration);
            let r = env.sample_reward(&nodes[id].arms[arm].0, rng);
            path.push((id, arm, r));
            if fresh || nodes[id].depth + 1 >= horizon {
                break;
            }
            id = match nodes[id].children.get(&arm) {
                Some(&c) => c,
                None => {
                    let c = nodes.len();
                    let depth = nodes[id].depth + 1;
                    nodes.push(PuctNode::new(depth));
                    nodes[id].children.insert(arm, c);
                    c
                }
            };
        }
        executed += path.len() as u64;
        let mut ret = 0.0;
        for &(id, arm, r) in path.iter().rev() {
            ret = r + discount * ret;
            let s = &mut nodes[id].stats[arm];
            s.0 += 1;
            s.1 += (ret - s.1) / s.0 as f64;
        }

        let root = &nodes[0];
        let inc = root.incumbent().expect("root visited");
        let inc_action = root.arms[inc].0.clone();
        let (_, first_arm, first_r) = path[0];
        trace.records.push(StepRecord {
            iter: t,
            selected_action: root.arms[first_arm].0.clone(),
            reward: first_r,
            ret,
            xi: None,
            incumbent_value: env.reward(&inc_action),
            q1_of_incumbent: Some(root.stats[inc].1),
            incumbent: inc_action,
            eta_incumbent: None,
            eta_incumbent_value: None,
            env_queries: executed,
            model_queries: 0,
        });
    }
    trace.root_visits = nodes[0]
        .arms
        .iter()
        .zip(&nodes[0].stats)
        .map(|((a, _), &(n, _))| (a.clone(), n))
        .collect();
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{EpisodicMatGame, FnReward, PayoffTensor, RewardFn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Constant(JointActionSpace);

    impl Environment for Constant {
        fn space(&self) -> &JointActionSpace {
            &self.0
        }
        fn reward(&self, _: &JointAction) -> f64 {
            0.0
        }
        fn reward_scale(&self) -> f64 {
            1.0
        }
    }

    struct FromFn<F>(FnReward<F>);

    impl<F: Fn(&JointAction) -> f64 + Sync> Environment for FromFn<F> {
        fn space(&self) -> &JointActionSpace {
            RewardFn::space(&self.0)
        }
        fn reward(&self, a: &JointAction) -> f64 {
            RewardFn::reward(&self.0, a)
        }
        fn reward_scale(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn two_armed_ucb_exploits() {
        let s = JointActionSpace::new(1, 2).unwrap();
        let env = FromFn(FnReward::new(s, |a: &JointAction| if a[0] == 1 { 1.0 } else { 0.0 }));
        let trace = run_flat_ucb(&env, 10_000, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let good = trace.records[9000..]
            .iter()
            .filter(|r| r.selected_action[0] == 1)
            .count();
        assert!(good >= 950, "{good}");
    }

    #[test]
    fn ucb_covers_distinct_arms_first() {
        let env = EpisodicMatGame::bandit(PayoffTensor::make_nonlinear(3, 4, 0).unwrap());
        let trace = run_flat_ucb(&env, 50, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut seen: Vec<_> = trace.selected_actions().cloned().collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 50);
    }

    #[test]
    fn ucb_is_deterministic_and_cheap_on_huge_spaces() {
        let env = EpisodicMatGame::bandit(PayoffTensor::make_nonlinear(8, 10, 0).unwrap());
        let a = run_flat_ucb(&env, 2000, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let b = run_flat_ucb(&env, 2000, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ucb_incumbent_is_best_pulled_arm() {
        let t = PayoffTensor::make_nonlinear(2, 3, 1).unwrap();
        let env = EpisodicMatGame::bandit(t.clone());
        let trace = run_flat_ucb(&env, 40, 1.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let best = t
            .space()
            .iter()
            .unwrap()
            .map(|a| t.reward(&a))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(trace.final_incumbent_value().unwrap(), best);
    }

    #[test]
    fn puct_is_uniform_under_zero_rewards() {
        let env = Constant(JointActionSpace::new(2, 2).unwrap());
        for budget in [7, 40, 101] {
            let trace = run_sampled_puct(&env, budget, 4, 1.25, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            let visits: Vec<u64> = trace.root_visits.iter().map(|x| x.1).collect();
            assert_eq!(visits.len(), 4);
            let (lo, hi) = (visits.iter().min().unwrap(), visits.iter().max().unwrap());
            assert!(hi - lo <= 1, "{visits:?}");
        }
    }

    #[test]
    fn exhaustive_sample_matches_full_puct() {
        let env = EpisodicMatGame::bandit(PayoffTensor::make_nonlinear(2, 3, 2).unwrap());
        let full = run_baseline(
            &env,
            &BaselineConfig {
                mode: BaselineMode::FullPuct,
                exploration: 1.25,
            },
            300,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let sampled = run_sampled_puct(&env, 300, 50, 1.25, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(full.root_visits, sampled.root_visits);
    }

    #[test]
    fn sampled_support_is_a_subset() {
        let env = EpisodicMatGame::bandit(PayoffTensor::make_linear(4, 5, 0).unwrap());
        let trace = run_sampled_puct(&env, 100, 8, 1.25, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(trace.root_visits.len() <= 8);
        assert_eq!(trace.root_visits.iter().map(|x| x.1).sum::<u64>(), 100);
    }

    #[test]
    fn config_validation() {
        assert!(BaselineConfig::flat_ucb().validate().is_ok());
        assert!(BaselineConfig::sampled_puct(0).validate().is_err());
        let bad = BaselineConfig {
            exploration: 0.0,
            ..BaselineConfig::flat_ucb()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rng_is_consumed_only_by_sampling() {
        let env = EpisodicMatGame::bandit(PayoffTensor::make_linear(2, 2, 0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        run_flat_ucb(&env, 10, 1.0, &mut rng).unwrap();
        let mut fresh = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(rng.random::<u64>(), fresh.random::<u64>());
    }
}
