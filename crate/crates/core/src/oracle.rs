//! Brute-force ground truth for instances small enough to enumerate.

use rayon::prelude::*;
use serde::Serialize;

use crate::action_space::{JointAction, JointActionSpace};
use crate::environment::RewardFn;
use crate::error::{Error, Result};

/// Largest `|A|` the oracle will enumerate.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// Gains of the best one- and two-agent deviations at one action.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalOptimalityReport {
    pub a: JointAction,
    pub g1: f64,
    /// `-inf` with a single agent.
    pub g2: f64,
    pub is_local: bool,
}

/// Empirical smoothness maxima over the whole domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothnessReport {
    /// `max |Δ_u f(a)|`.
    pub zeta1: f64,
    /// `max |Δ²_{u,v} f(a)|`.
    pub zeta2: f64,
    /// `max |Δ²_{u,v} f(a^(w)) − Δ²_{u,v} f(a)|`.
    pub zeta3: f64,
}

/// `ε_H = 6·√ζ₃·ε`, the pair tolerance matched to a single-step tolerance.
pub fn eps_h(eps: f64, zeta3: f64) -> f64 {
    6.0 * zeta3.sqrt() * eps
}

fn enumerable(space: &JointActionSpace, cap: u64) -> Result<u64> {
    match space.cardinality() {
        Some(card) if card <= cap => Ok(card),
        Some(card) => Err(Error::CapExceeded {
            needed: card.to_string(),
            cap,
        }),
        None => Err(Error::CapExceeded {
            needed: format!("{}^{}", space.actions_per_agent(), space.agents()),
            cap,
        }),
    }
}

/// Decodes a linear index into per-agent actions.
fn digits(space: &JointActionSpace, index: u64) -> Vec<usize> {
    space.action_at(index).0
}

/// Exact maximizer, ties broken by smallest linear index.
pub fn global_argmax<F: RewardFn + ?Sized>(f: &F) -> Result<(JointAction, f64)> {
    global_argmax_with_cap(f, ENUMERATION_CAP)
}

pub fn global_argmax_with_cap<F: RewardFn + ?Sized>(f: &F, cap: u64) -> Result<(JointAction, f64)> {
    let space = *f.space();
    let card = enumerable(&space, cap)?;
    let (index, value) = (0..card)
        .into_par_iter()
        .map(|i| (i, f.reward_at(i)))
        .reduce(
            || (u64::MAX, f64::NEG_INFINITY),
            |x, y| {
                if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) {
                    y
                } else {
                    x
                }
            },
        );
    Ok((space.action_at(index), value))
}

/// Best single gain, and best pair gain if `pair_limit` is not exceeded by
/// the singles. Pair scanning stops early once a gain above `pair_limit`
/// turns up, so the returned `g2` is then only a lower bound.
fn gains_at<F: RewardFn + ?Sized>(
    f: &F,
    space: &JointActionSpace,
    index: u64,
    single_limit: f64,
    pair_limit: f64,
) -> (f64, f64) {
    let a = digits(space, index);
    let n = space.agents();
    let d = space.actions_per_agent();
    let base = f.reward_at(index);
    let shift = |agent: usize, target: usize, from: u64| -> u64 {
        let stride = space.stride(agent);
        from - a[agent] as u64 * stride + target as u64 * stride
    };

    let mut g1 = f64::NEG_INFINITY;
    for i in 0..n {
        for j in (0..d).filter(|&j| j != a[i]) {
            g1 = g1.max(f.reward_at(shift(i, j, index)) - base);
        }
    }
    if g1 > single_limit {
        return (g1, f64::NAN);
    }

    let mut g2 = f64::NEG_INFINITY;
    for i in 0..n {
        for k in i + 1..n {
            for j in (0..d).filter(|&j| j != a[i]) {
                let ui = shift(i, j, index);
                for l in (0..d).filter(|&l| l != a[k]) {
                    g2 = g2.max(f.reward_at(shift(k, l, ui)) - base);
                    if g2 > pair_limit {
                        return (g1, g2);
                    }
                }
            }
        }
    }
    (g1, g2)
}

/// `(G₁(a), G₂(a))`; `G₂` is `-inf` when there is a single agent.
pub fn deviation_gains<F: RewardFn + ?Sized>(f: &F, a: &JointAction) -> Result<(f64, f64)> {
    let space = *f.space();
    space.validate(a)?;
    let index = space.linear_index(a).ok_or_else(|| Error::CapExceeded {
        needed: "linear index beyond u64".into(),
        cap: u64::MAX,
    })?;
    Ok(gains_at(f, &space, index, f64::INFINITY, f64::INFINITY))
}

pub fn local_report<F: RewardFn + ?Sized>(
    f: &F,
    a: &JointAction,
    eps1: f64,
    eps2: f64,
) -> Result<LocalOptimalityReport> {
    let (g1, g2) = deviation_gains(f, a)?;
    Ok(LocalOptimalityReport {
        a: a.clone(),
        g1,
        g2,
        is_local: g1 <= eps1 && g2 <= eps2,
    })
}

/// All `(ε₁, ε₂)`-local maximizers of a tensor.
#[derive(Debug, Clone, Serialize)]
pub struct LocalMaximizerSet {
    pub space: JointActionSpace,
    pub eps1: f64,
    pub eps2: f64,
    /// Linear indices of members, ascending.
    pub members: Vec<u64>,
    #[serde(skip)]
    mask: Vec<bool>,
}

impl LocalMaximizerSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains_index(&self, index: u64) -> bool {
        self.mask.get(index as usize).copied().unwrap_or(false)
    }

    pub fn contains(&self, a: &JointAction) -> bool {
        self.space.validate(a).is_ok()
            && self
                .space
                .linear_index(a)
                .is_some_and(|i| self.contains_index(i))
    }

    pub fn actions(&self) -> impl Iterator<Item = JointAction> + '_ {
        self.members.iter().map(|&i| self.space.action_at(i))
    }

    /// Member closest to `a` in Hamming distance; ties go to the higher
    /// value, then the smaller index.
    pub fn nearest<F: RewardFn + ?Sized>(&self, f: &F, a: &JointAction) -> Result<(JointAction, f64)> {
        let mut best: Option<(usize, f64, JointAction)> = None;
        for m in self.actions() {
            let dist = m.hamming(a);
            let value = f.reward(&m);
            let better = match &best {
                None => true,
                Some((bd, bv, _)) => dist < *bd || (dist == *bd && value > *bv),
            };
            if better {
                best = Some((dist, value, m));
            }
        }
        best.map(|(_, v, m)| (m, v)).ok_or(Error::EmptyLocalSet)
    }
}

pub fn local_maximizer_set<F: RewardFn + ?Sized>(f: &F, eps1: f64, eps2: f64) -> Result<LocalMaximizerSet> {
    local_maximizer_set_with_cap(f, eps1, eps2, ENUMERATION_CAP)
}

pub fn local_maximizer_set_with_cap<F: RewardFn + ?Sized>(
    f: &F,
    eps1: f64,
    eps2: f64,
    cap: u64,
) -> Result<LocalMaximizerSet> {
    let space = *f.space();
    let card = enumerable(&space, cap)?;
    let mask: Vec<bool> = (0..card)
        .into_par_iter()
        .map(|i| {
            let (g1, g2) = gains_at(f, &space, i, eps1, eps2);
            g1 <= eps1 && g2 <= eps2
        })
        .collect();
    let members = (0..card).filter(|&i| mask[i as usize]).collect();
    Ok(LocalMaximizerSet {
        space,
        eps1,
        eps2,
        members,
        mask,
    })
}

/// Exact `ζ₁, ζ₂, ζ₃` by full enumeration of `(a, u)`, `(a, u, v)` and
/// `(a, u, v, w)`, where `u` and `v` move distinct agents and must stay
/// feasible at `a^(w)`.
pub fn estimate_smoothness<F: RewardFn + ?Sized>(f: &F) -> Result<SmoothnessReport> {
    let space = *f.space();
    let card = enumerable(&space, ENUMERATION_CAP)?;
    let n = space.agents();
    let d = space.actions_per_agent();

    let mixed_at = |a: &[usize], index: u64, i: usize, j: usize, k: usize, l: usize| -> f64 {
        let si = space.stride(i);
        let sk = space.stride(k);
        let iu = index - a[i] as u64 * si + j as u64 * si;
        let iv = index - a[k] as u64 * sk + l as u64 * sk;
        let iuv = iu - a[k] as u64 * sk + l as u64 * sk;
        (f.reward_at(iuv) + f.reward_at(index)) - (f.reward_at(iu) + f.reward_at(iv))
    };

    let (zeta1, zeta2, zeta3) = (0..card)
        .into_par_iter()
        .map(|index| {
            let a = digits(&space, index);
            let base = f.reward_at(index);
            let (mut z1, mut z2, mut z3) = (0.0f64, 0.0f64, 0.0f64);
            for i in 0..n {
                let si = space.stride(i);
                for j in (0..d).filter(|&j| j != a[i]) {
                    let iu = index - a[i] as u64 * si + j as u64 * si;
                    z1 = z1.max((f.reward_at(iu) - base).abs());
                }
            }
            for i in 0..n {
                for k in i + 1..n {
                    for j in (0..d).filter(|&j| j != a[i]) {
                        for l in (0..d).filter(|&l| l != a[k]) {
                            let m = mixed_at(&a, index, i, j, k, l);
                            z2 = z2.max(m.abs());
                            for wa in 0..n {
                                let sw = space.stride(wa);
                                for wt in (0..d).filter(|&t| t != a[wa]) {
                                    if (wa == i && wt == j) || (wa == k && wt == l) {
                                        continue;
                                    }
                                    let mut shifted = a.clone();
                                    shifted[wa] = wt;
                                    let wi = index - a[wa] as u64 * sw + wt as u64 * sw;
                                    let m2 = mixed_at(&shifted, wi, i, j, k, l);
                                    z3 = z3.max((m2 - m).abs());
                                }
                            }
                        }
                    }
                }
            }
            (z1, z2, z3)
        })
        .reduce(
            || (0.0, 0.0, 0.0),
            |x, y| (x.0.max(y.0), x.1.max(y.1), x.2.max(y.2)),
        );
    Ok(SmoothnessReport {
        zeta1,
        zeta2,
        zeta3,
    })
}
