use std::collections::BTreeMap;

use rand::{Rng, RngCore};

use super::trace::{ExpansionRecord, SearchTrace, StepRecord, ThetaSnapshot};
use super::{LinkConfig, PlannerConfig, SelectionMode, WarmStart};
use crate::action_space::{JointAction, JointActionSpace};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::proposal::{best_by_eta, propose_from};
use crate::surrogate::{composite_error, sgd_step, SupervisionSample, SurrogateParams};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EdgeStats {
    pub visits: u64,
    /// Incremental mean of returns credited to the edge.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub expanded: bool,
    /// `C(s)`.
    pub candidates: Vec<JointAction>,
    /// Every action ever executed here, including evicted candidates.
    pub stats: BTreeMap<JointAction, EdgeStats>,
    pub params: SurrogateParams,
    pub children: BTreeMap<JointAction, NodeId>,
    incumbent: Option<JointAction>,
}

impl SearchNode {
    fn new(depth: usize, parent: Option<NodeId>, params: SurrogateParams) -> Self {
        Self {
            depth,
            parent,
            expanded: false,
            candidates: Vec::new(),
            stats: BTreeMap::new(),
            params,
            children: BTreeMap::new(),
            incumbent: None,
        }
    }

    /// Visited action with the highest value, ties to the smallest index.
    pub fn incumbent(&self) -> Option<&JointAction> {
        self.incumbent.as_ref()
    }

    pub fn visits(&self) -> u64 {
        self.stats.values().map(|s| s.visits).sum()
    }

    fn q(&self, a: &JointAction) -> Option<f64> {
        self.stats.get(a).map(|s| s.value)
    }

    fn refresh_incumbent(&mut self, updated: &JointAction) {
        let value = self.stats[updated].value;
        let better = |q: f64, a: &JointAction, bq: f64, b: &JointAction| q > bq || (q == bq && a < b);
        match self.incumbent.clone() {
            None => self.incumbent = Some(updated.clone()),
            Some(inc) if &inc == updated => {
                // Its value may have dropped under noisy rewards.
                let mut best = (updated.clone(), value);
                for (a, s) in &self.stats {
                    if better(s.value, a, best.1, &best.0) {
                        best = (a.clone(), s.value);
                    }
                }
                self.incumbent = Some(best.0);
            }
            Some(inc) => {
                if better(value, updated, self.stats[&inc].value, &inc) {
                    self.incumbent = Some(updated.clone());
                }
            }
        }
    }
}

/// One executed step of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub steps: Vec<(NodeId, JointAction, f64)>,
}

/// Search tree over one environment.
pub struct SearchTree<'e, E: Environment + ?Sized> {
    env: &'e E,
    cfg: PlannerConfig,
    space: JointActionSpace,
    discount: f64,
    scale: f64,
    pub nodes: Vec<SearchNode>,
    pub trace: SearchTrace,
    env_queries: u64,
    model_queries: u64,
    iter: usize,
    last_root_xi: Option<f64>,
}

pub const ROOT: NodeId = 0;

impl<'e, E: Environment + ?Sized> SearchTree<'e, E> {
    pub fn new(env: &'e E, cfg: PlannerConfig) -> Result<Self> {
        cfg.validate()?;
        let space = *env.space();
        for a in &cfg.root_seeds {
            space.validate(a)?;
        }
        let scale = env.reward_scale().max(1e-12);
        let (c, alpha) = match cfg.link {
            LinkConfig::RewardScaled => (scale, 1.0 / scale),
            LinkConfig::Fixed { c, alpha } => (c, alpha),
        };
        let root = SearchNode::new(0, None, SurrogateParams::zeros(&space, c, alpha)?);
        let discount = cfg.discount.unwrap_or_else(|| env.discount());
        Ok(Self {
            env,
            space,
            discount,
            scale,
            nodes: vec![root],
            trace: SearchTrace::new("nonzero"),
            env_queries: 0,
            model_queries: 0,
            iter: 0,
            last_root_xi: None,
            cfg,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.cfg
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[ROOT]
    }

    pub fn env_queries(&self) -> u64 {
        self.env_queries
    }

    pub fn model_queries(&self) -> u64 {
        self.model_queries
    }

    /// Fills `C(node)`, warm-starts `θ`, and logs surrogate diagnostics.
    pub fn expand_node(&mut self, id: NodeId, rng: &mut dyn RngCore) -> Result<()> {
        if self.nodes[id].expanded {
            return Ok(());
        }
        let cap = self.cfg.proposal.candidate_cap;
        let card = self.space.cardinality();
        let mut cands: Vec<JointAction> = Vec::new();
        let push = |cands: &mut Vec<JointAction>, a: JointAction| {
            if cands.len() < cap && !cands.contains(&a) {
                cands.push(a);
            }
        };
        if id == ROOT {
            for a in &self.cfg.root_seeds {
                push(&mut cands, a.clone());
            }
        } else if let Some(best) = self.nodes[id]
            .parent
            .and_then(|p| self.nodes[p].incumbent().cloned())
        {
            push(&mut cands, best);
        }

        let exhaustive = self.cfg.init_random.is_none() && card.is_some_and(|c| c <= cap as u64);
        if exhaustive {
            for a in self.space.iter()? {
                push(&mut cands, a);
            }
        } else {
            let extra = self.cfg.init_random.unwrap_or(cap);
            let target = (cands.len() + extra).min(cap);
            let target = card.map_or(target, |c| target.min(c as usize));
            while cands.len() < target {
                push(&mut cands, self.space.sample_uniform(rng));
            }
        }
        if cands.is_empty() {
            return Err(Error::InvalidConfig(
                "expansion produced no candidates; provide root_seeds or init_random > 0".into(),
            ));
        }

        let params = match (self.cfg.warm_start, self.nodes[id].parent) {
            (WarmStart::ParentCopy, Some(p)) => self.nodes[p].params.clone(),
            (_, _) => {
                let p = &self.nodes[id].params;
                SurrogateParams::zeros(&self.space, p.c, p.alpha)?.with_link(p.link)
            }
        };

        let base = best_by_eta(&params, &cands).cloned().expect("nonempty");
        let record = if self.space.agents() >= 2 {
            let (u, v) = self.space.sample_direction_pair(&base, rng)?;
            ExpansionRecord {
                iter: self.iter,
                depth: self.nodes[id].depth,
                u,
                v: Some(v),
                delta1: params.delta1(&base, u)?,
                pair_gain: Some(params.eta(&base.apply_pair(u, v)?) - params.eta(&base)),
                mixed: Some(params.delta2(&base, u, v)?),
                base,
            }
        } else {
            let u = self.space.sample_direction(&base, rng);
            ExpansionRecord {
                iter: self.iter,
                depth: self.nodes[id].depth,
                u,
                v: None,
                delta1: params.delta1(&base, u)?,
                pair_gain: None,
                mixed: None,
                base,
            }
        };
        self.trace.expansions.push(record);

        let node = &mut self.nodes[id];
        node.candidates = cands;
        node.params = params;
        node.expanded = true;
        Ok(())
    }

    /// The action the selection rule picks at an expanded node.
    pub fn select_action(&self, id: NodeId) -> JointAction {
        let node = &self.nodes[id];
        let p = &node.params;
        match self.cfg.selection_mode {
            SelectionMode::EtaOnly => best_by_eta(p, &node.candidates).cloned().expect("expanded node"),
            SelectionMode::EtaPlusVisit => {
                let total = node.visits() as f64;
                let bonus = self.cfg.c_explore * self.scale;
                let mut best: Option<(&JointAction, f64)> = None;
                for a in &node.candidates {
                    let n = node.stats.get(a).map_or(0, |s| s.visits) as f64;
                    let score = p.eta(a) + bonus * total.sqrt() / (1.0 + n);
                    match best {
                        Some((b, bs)) if score < bs || (score == bs && a >= b) => {}
                        _ => best = Some((a, score)),
                    }
                }
                best.expect("expanded node").0.clone()
            }
            SelectionMode::Anchored => {
                let unvisited: Vec<JointAction> = node
                    .candidates
                    .iter()
                    .filter(|a| !node.stats.contains_key(*a))
                    .cloned()
                    .collect();
                match best_by_eta(p, &unvisited) {
                    Some(a) => a.clone(),
                    None => node
                        .incumbent()
                        .cloned()
                        .unwrap_or_else(|| best_by_eta(p, &node.candidates).cloned().expect("expanded node")),
                }
            }
        }
    }

    /// Nodes and actions the selection rule walks through without changing
    /// the tree; stops at the first unexpanded node or at the horizon.
    pub fn select_path(&self) -> Vec<(NodeId, JointAction)> {
        let mut path = Vec::new();
        let mut id = ROOT;
        while self.nodes[id].expanded {
            let a = self.select_action(id);
            let next = self.nodes[id].children.get(&a).copied();
            path.push((id, a));
            match next {
                Some(child) if self.nodes[id].depth + 1 < self.env.horizon() => id = child,
                _ => break,
            }
        }
        path
    }

    fn child(&mut self, id: NodeId, a: &JointAction) -> NodeId {
        if let Some(&c) = self.nodes[id].children.get(a) {
            return c;
        }
        let depth = self.nodes[id].depth + 1;
        let params = self.nodes[id].params.clone();
        let child = self.nodes.len();
        self.nodes.push(SearchNode::new(depth, Some(id), params));
        self.nodes[id].children.insert(a.clone(), child);
        child
    }

    /// Select, expand, and execute down to a fresh leaf or the horizon.
    pub fn simulate(&mut self, rng: &mut dyn RngCore) -> Result<Simulation> {
        self.iter += 1;
        let mut steps = Vec::new();
        let mut id = ROOT;
        loop {
            let fresh = !self.nodes[id].expanded;
            if fresh {
                self.expand_node(id, rng)?;
            }
            let a = self.select_action(id);
            let r = self.env.sample_reward(&a, rng);
            self.env_queries += 1;
            steps.push((id, a.clone(), r));
            if fresh || self.nodes[id].depth + 1 >= self.env.horizon() {
                break;
            }
            id = self.child(id, &a);
        }
        let sim = Simulation { steps };
        self.backup_path(&sim, rng)?;
        self.record(&sim);
        Ok(sim)
    }

    /// Credits returns, fits each node surrogate on one counterfactual
    /// sample, and refreshes candidate sets, leaf first.
    pub fn backup_path(&mut self, sim: &Simulation, rng: &mut dyn RngCore) -> Result<()> {
        let mut ret = 0.0;
        let mut returns = vec![0.0; sim.steps.len()];
        for (k, (_, _, r)) in sim.steps.iter().enumerate().rev() {
            ret = r + self.discount * ret;
            returns[k] = ret;
        }
        for (k, (id, a, r)) in sim.steps.iter().enumerate().rev() {
            let id = *id;
            {
                let node = &mut self.nodes[id];
                let s = node.stats.entry(a.clone()).or_default();
                s.visits += 1;
                s.value += (returns[k] - s.value) / s.visits as f64;
                node.refresh_incumbent(a);
            }

            let sample = self.counterfactual_sample(a, *r, rng)?;
            let node = &mut self.nodes[id];
            let xi = composite_error(&node.params, &sample)?;
            for _ in 0..self.cfg.grad_steps_per_backup {
                node.params = sgd_step(&node.params, std::slice::from_ref(&sample), self.cfg.learning_rate)?;
            }
            if id == ROOT {
                self.last_root_xi = Some(xi);
            }
            self.refresh_candidates(id, rng)?;
        }
        Ok(())
    }

    fn counterfactual_sample(&mut self, a: &JointAction, r_a: f64, rng: &mut dyn RngCore) -> Result<SupervisionSample> {
        let env = self.env;
        if self.space.agents() >= 2 {
            let (u, v) = self.space.sample_direction_pair(a, rng)?;
            let r_u = env.reward(&a.apply_direction(u)?);
            let r_v = env.reward(&a.apply_direction(v)?);
            let r_uv = env.reward(&a.apply_pair(u, v)?);
            self.model_queries += 3;
            SupervisionSample::from_rewards(a.clone(), u, Some(v), r_a, r_u, r_v, r_uv)
        } else {
            let u = self.space.sample_direction(a, rng);
            let r_u = env.reward(&a.apply_direction(u)?);
            self.model_queries += 1;
            SupervisionSample::from_rewards(a.clone(), u, None, r_a, r_u, r_u, r_u)
        }
    }

    /// Evicts stale candidates, adds proposals, and refills on stalls.
    fn refresh_candidates(&mut self, id: NodeId, rng: &mut dyn RngCore) -> Result<()> {
        let cap = self.cfg.proposal.candidate_cap;
        let want = self.cfg.proposal.k_single + self.cfg.proposal.k_pair;
        let mode = self.cfg.selection_mode;
        let node = &mut self.nodes[id];

        let base = match (mode, node.incumbent()) {
            (SelectionMode::Anchored, Some(inc)) => inc.clone(),
            _ => best_by_eta(&node.params, &node.candidates).cloned().expect("expanded node"),
        };
        while cap - node.candidates.len().min(cap) < want && evict_one(node, &base) {}
        let room = cap.saturating_sub(node.candidates.len());
        let proposals = {
            let n: &SearchNode = node;
            propose_from(
                &n.params,
                &base,
                |a| n.stats.contains_key(a) || n.candidates.contains(a),
                room,
                &self.cfg.proposal,
                rng,
            )?
        };
        node.candidates.extend(proposals.into_iter().map(|p| p.candidate));

        let stalled = node.candidates.iter().all(|a| node.stats.contains_key(a));
        if self.cfg.prior_refill && stalled {
            let seen = node.stats.len() as u64 + node.candidates.iter().filter(|a| !node.stats.contains_key(*a)).count() as u64;
            if self.space.cardinality().is_none_or(|c| seen < c) {
                if node.candidates.len() >= cap {
                    evict_one(node, &base);
                }
                if node.candidates.len() < cap {
                    let fresh = unseen_action(&self.space, node, rng);
                    node.candidates.push(fresh);
                }
            }
        }
        Ok(())
    }

    fn record(&mut self, sim: &Simulation) {
        let root = &self.nodes[ROOT];
        let (_, a, r) = &sim.steps[0];
        let mut ret = 0.0;
        for (_, _, r) in sim.steps.iter().rev() {
            ret = r + self.discount * ret;
        }
        let incumbent = root.incumbent().cloned().expect("root visited");
        let eta_inc = best_by_eta(&root.params, &root.candidates).cloned();
        let record = StepRecord {
            iter: self.iter,
            selected_action: a.clone(),
            reward: *r,
            ret,
            xi: self.last_root_xi,
            incumbent_value: self.env.reward(&incumbent),
            q1_of_incumbent: root.q(&incumbent),
            eta_incumbent_value: eta_inc.as_ref().map(|e| self.env.reward(e)),
            eta_incumbent: eta_inc,
            incumbent,
            env_queries: self.env_queries,
            model_queries: self.model_queries,
        };
        self.trace.records.push(record);
        let every = self.cfg.theta_snapshot_every;
        if every > 0 && self.iter.is_multiple_of(every) {
            self.trace.theta_snapshots.push(ThetaSnapshot {
                iter: self.iter,
                theta: root.params.theta.clone(),
            });
        }
    }

    /// Root visit distribution over every action executed there.
    pub fn root_policy(&self) -> Vec<(JointAction, f64)> {
        let root = &self.nodes[ROOT];
        let total = root.visits().max(1) as f64;
        root.stats
            .iter()
            .map(|(a, s)| (a.clone(), s.visits as f64 / total))
            .collect()
    }

    pub fn into_trace(mut self) -> SearchTrace {
        self.trace.root_visits = self.nodes[ROOT]
            .stats
            .iter()
            .map(|(a, s)| (a.clone(), s.visits))
            .collect();
        self.trace
    }
}

/// Drops the visited non-incumbent candidate with the lowest value.
fn evict_one(node: &mut SearchNode, keep: &JointAction) -> bool {
    let incumbent = node.incumbent.clone();
    let victim = node
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, a)| *a != keep && Some(*a) != incumbent.as_ref())
        .filter_map(|(i, a)| node.stats.get(a).map(|s| (i, s.value, a)))
        .min_by(|x, y| x.1.total_cmp(&y.1).then_with(|| y.2.cmp(x.2)))
        .map(|(i, _, _)| i);
    match victim {
        Some(i) => {
            node.candidates.remove(i);
            true
        }
        None => false,
    }
}

/// A uniformly drawn action that has never been executed or proposed at the
/// node; falls back to a scan from a random start after repeated misses.
fn unseen_action(space: &JointActionSpace, node: &SearchNode, rng: &mut dyn RngCore) -> JointAction {
    let known = |a: &JointAction| node.stats.contains_key(a) || node.candidates.contains(a);
    for _ in 0..32 {
        let a = space.sample_uniform(rng);
        if !known(&a) {
            return a;
        }
    }
    let card = space.cardinality().expect("scan fallback only runs on small spaces");
    let start = rng.random_range(0..card);
    (0..card)
        .map(|k| space.action_at((start + k) % card))
        .find(|a| !known(a))
        .expect("an unseen action exists")
}

/// Runs `n_sim` simulations from the root.
pub fn run_search<E: Environment + ?Sized>(
    env: &E,
    cfg: &PlannerConfig,
    rng: &mut dyn RngCore,
) -> Result<(Vec<(JointAction, f64)>, SearchTrace)> {
    let mut tree = SearchTree::new(env, cfg.clone())?;
    for _ in 0..cfg.n_sim {
        tree.simulate(rng)?;
    }
    let policy = tree.root_policy();
    Ok((policy, tree.into_trace()))
}
