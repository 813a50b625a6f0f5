//! Joint-action combinatorics: the product space of per-agent actions, the
//! n-hot encoding, and the one- and two-agent deviations that form the edges
//! of the joint-action graph.
//!
//! Linear indices put agent 0 in the most significant position, so ordering
//! by linear index is the lexicographic order of the action vectors. Every
//! "smallest index" tie-break in the crate relies on that.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The joint-action space `A = [d]^n` of `n` agents with `d` local actions each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointActionSpace {
    n: usize,
    d: usize,
}

impl JointActionSpace {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpace("agent count must be at least 1".into()));
        }
        if d < 2 {
            return Err(Error::InvalidSpace(format!(
                "per-agent action count must be at least 2, got {d}"
            )));
        }
        Ok(Self { n, d })
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn actions_per_agent(&self) -> usize {
        self.d
    }

    /// Length of the n-hot encoding, `n * d`.
    pub fn encoding_len(&self) -> usize {
        self.n * self.d
    }

    /// `d^n` when it fits in a `u64`.
    pub fn cardinality(&self) -> Option<u64> {
        let n = u32::try_from(self.n).ok()?;
        (self.d as u64).checked_pow(n)
    }

    /// Natural log of `d^n`; always finite.
    pub fn log_cardinality(&self) -> f64 {
        self.n as f64 * (self.d as f64).ln()
    }

    /// Number of feasible one-agent deviations from any action, `n (d - 1)`.
    pub fn neighbor_count(&self) -> usize {
        self.n * (self.d - 1)
    }

    /// Number of unordered distinct-agent direction pairs at any action.
    pub fn pair_count(&self) -> usize {
        self.n * (self.n - 1) / 2 * (self.d - 1) * (self.d - 1)
    }

    pub fn validate(&self, a: &JointAction) -> Result<()> {
        if a.len() != self.n {
            return Err(Error::InvalidAction(format!(
                "expected {} agents, got {}",
                self.n,
                a.len()
            )));
        }
        if let Some((i, &x)) = a.iter().enumerate().find(|(_, &x)| x >= self.d) {
            return Err(Error::InvalidAction(format!(
                "agent {i} plays {x}, outside [0, {})",
                self.d
            )));
        }
        Ok(())
    }

    pub fn validate_direction(&self, u: Direction) -> Result<()> {
        if u.agent >= self.n || u.target >= self.d {
            return Err(Error::InvalidAction(format!(
                "direction {u} outside {} agents x {} actions",
                self.n, self.d
            )));
        }
        Ok(())
    }

    /// Multiplier of agent `i` in the linear index.
    pub fn stride(&self, agent: usize) -> u64 {
        (self.d as u64).pow((self.n - 1 - agent) as u32)
    }

    /// Position of `a` in lexicographic order, when the space is indexable.
    pub fn linear_index(&self, a: &JointAction) -> Option<u64> {
        self.cardinality()?;
        Some(
            a.iter()
                .fold(0u64, |acc, &x| acc * self.d as u64 + x as u64),
        )
    }

    /// Inverse of [`linear_index`](Self::linear_index).
    pub fn action_at(&self, mut index: u64) -> JointAction {
        let mut actions = vec![0usize; self.n];
        for slot in actions.iter_mut().rev() {
            *slot = (index % self.d as u64) as usize;
            index /= self.d as u64;
        }
        JointAction(actions)
    }

    /// Every joint action in linear-index order. Fails when `d^n` overflows.
    pub fn iter(&self) -> Result<impl Iterator<Item = JointAction> + '_> {
        let card = self.cardinality().ok_or_else(|| Error::CapExceeded {
            needed: format!("{}^{}", self.d, self.n),
            cap: u64::MAX,
        })?;
        Ok((0..card).map(move |i| self.action_at(i)))
    }

    /// `ψ(a)`: one 1 per agent block at position `i * d + a_i`.
    pub fn encode_nhot(&self, a: &JointAction) -> Result<Vec<f64>> {
        self.validate(a)?;
        let mut psi = vec![0.0; self.encoding_len()];
        for (i, &x) in a.iter().enumerate() {
            psi[i * self.d + x] = 1.0;
        }
        Ok(psi)
    }

    /// All `n (d - 1)` feasible one-agent deviations, agent-major with
    /// ascending target.
    pub fn neighbors(&self, a: &JointAction) -> Vec<(Direction, JointAction)> {
        let mut out = Vec::with_capacity(self.neighbor_count());
        for (i, &current) in a.iter().enumerate() {
            for j in (0..self.d).filter(|&j| j != current) {
                let u = Direction::new(i, j);
                let mut next = a.clone();
                next.0[i] = j;
                out.push((u, next));
            }
        }
        out
    }

    /// Feasible directions at `a`, in the same order as [`neighbors`](Self::neighbors).
    pub fn directions(&self, a: &JointAction) -> impl Iterator<Item = Direction> + '_ {
        let a = a.clone();
        (0..self.n).flat_map(move |i| {
            let current = a[i];
            (0..self.d)
                .filter(move |&j| j != current)
                .map(move |j| Direction::new(i, j))
        })
    }

    /// Unordered distinct-agent pairs `(u, v)` with `u.agent < v.agent`, in
    /// lexicographic order of `(u, v)`.
    pub fn direction_pairs(&self, a: &JointAction) -> Vec<(Direction, Direction)> {
        let dirs: Vec<Direction> = self.directions(a).collect();
        let mut out = Vec::with_capacity(self.pair_count());
        for (x, &u) in dirs.iter().enumerate() {
            for &v in &dirs[x + 1..] {
                if v.agent != u.agent {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Uniform draw from `A`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> JointAction {
        JointAction((0..self.n).map(|_| rng.random_range(0..self.d)).collect())
    }

    /// Uniform draw over feasible directions at `a`.
    pub fn sample_direction<R: Rng + ?Sized>(&self, a: &JointAction, rng: &mut R) -> Direction {
        let agent = rng.random_range(0..self.n);
        Direction::new(agent, self.sample_target(a[agent], rng))
    }

    /// Uniform draw over ordered feasible pairs `(u, v)` on distinct agents.
    pub fn sample_direction_pair<R: Rng + ?Sized>(
        &self,
        a: &JointAction,
        rng: &mut R,
    ) -> Result<(Direction, Direction)> {
        if self.n < 2 {
            return Err(Error::NoPairAvailable);
        }
        let i = rng.random_range(0..self.n);
        let mut k = rng.random_range(0..self.n - 1);
        if k >= i {
            k += 1;
        }
        let u = Direction::new(i, self.sample_target(a[i], rng));
        let v = Direction::new(k, self.sample_target(a[k], rng));
        Ok((u, v))
    }

    fn sample_target<R: Rng + ?Sized>(&self, current: usize, rng: &mut R) -> usize {
        let j = rng.random_range(0..self.d - 1);
        if j >= current {
            j + 1
        } else {
            j
        }
    }
}

impl fmt::Display for JointActionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} agents x {} actions", self.n, self.d)
    }
}

/// One local action index per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointAction(pub Vec<usize>);

impl JointAction {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// `a^(u)`: agent `u.agent` switched to `u.target`.
    pub fn apply_direction(&self, u: Direction) -> Result<JointAction> {
        let current = *self.0.get(u.agent).ok_or_else(|| {
            Error::InvalidAction(format!("agent {} out of range {}", u.agent, self.len()))
        })?;
        if current == u.target {
            return Err(Error::InfeasibleDeviation {
                agent: u.agent,
                target: u.target,
            });
        }
        let mut next = self.clone();
        next.0[u.agent] = u.target;
        Ok(next)
    }

    /// `a^(u,v)`: both one-agent changes applied; `u` and `v` must move
    /// different agents.
    pub fn apply_pair(&self, u: Direction, v: Direction) -> Result<JointAction> {
        if u.agent == v.agent {
            return Err(Error::InvalidPair(u.agent));
        }
        // Check both against the original action so order never matters.
        self.apply_direction(v)?;
        let mut next = self.apply_direction(u)?;
        next.0[v.agent] = v.target;
        Ok(next)
    }

    /// Number of agents whose actions differ.
    pub fn hamming(&self, other: &JointAction) -> usize {
        self.0.iter().zip(&other.0).filter(|(x, y)| x != y).count()
    }
}

impl std::ops::Deref for JointAction {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for JointAction {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

/// A one-agent deviation `u = (agent <- target)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Direction {
    pub agent: usize,
    pub target: usize,
}

impl Direction {
    pub fn new(agent: usize, target: usize) -> Self {
        Self { agent, target }
    }

    pub fn is_feasible(&self, a: &JointAction) -> bool {
        a.get(self.agent).is_some_and(|&x| x != self.target)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<-{}", self.agent, self.target)
    }
}
