//! Interaction-guided candidate proposals: singles ranked by predicted gain,
//! pairs ranked by predicted coordinated gain with the mixed difference kept
//! alongside.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action_space::{Direction, JointAction, JointActionSpace};
use crate::error::{Error, Result};
use crate::surrogate::SurrogateParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProposalConfig {
    pub k_single: usize,
    pub k_pair: usize,
    /// Pairs are scored exhaustively up to this many, sampled beyond it.
    pub pair_sample_budget: usize,
    /// Upper bound on `|C(s)|`.
    pub candidate_cap: usize,
}

impl Default for ProposalConfig {
    fn default() -> Self {
        Self {
            k_single: 2,
            k_pair: 2,
            pair_sample_budget: 4096,
            candidate_cap: 16,
        }
    }
}

impl ProposalConfig {
    /// Either count may be zero for ablations, but not both.
    pub fn validate(&self) -> Result<()> {
        if self.k_single + self.k_pair == 0 {
            return Err(Error::InvalidConfig("k_single and k_pair are both zero".into()));
        }
        if self.candidate_cap == 0 {
            return Err(Error::InvalidConfig("candidate_cap must be positive".into()));
        }
        if self.k_single + self.k_pair > self.candidate_cap {
            return Err(Error::InvalidConfig(format!(
                "k_single + k_pair = {} exceeds candidate_cap {}",
                self.k_single + self.k_pair,
                self.candidate_cap
            )));
        }
        if self.k_pair > 0 && self.pair_sample_budget == 0 {
            return Err(Error::InvalidConfig("pair_sample_budget must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalKind {
    Single(Direction),
    Pair(Direction, Direction),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredProposal {
    pub candidate: JointAction,
    pub origin: JointAction,
    pub kind: ProposalKind,
    /// Predicted gain `η(candidate) − η(origin)`.
    pub score: f64,
    /// `Δ²_{u,v} η(origin)` for pairs, 0 for singles.
    pub mixed: f64,
}

/// One proposal per feasible direction, best predicted gain first.
pub fn score_singles(p: &SurrogateParams, base: &JointAction) -> Result<Vec<ScoredProposal>> {
    let space = JointActionSpace::new(p.n, p.d)?;
    space.validate(base)?;
    let eta = p.eta(base);
    let mut out: Vec<ScoredProposal> = space
        .neighbors(base)
        .into_iter()
        .map(|(u, candidate)| ScoredProposal {
            score: p.eta(&candidate) - eta,
            candidate,
            origin: base.clone(),
            kind: ProposalKind::Single(u),
            mixed: 0.0,
        })
        .collect();
    // Stable sort keeps the (agent, target) order among ties.
    out.sort_by(|x, y| y.score.total_cmp(&x.score));
    Ok(out)
}

/// Decodes the `index`-th unordered pair in the order of
/// [`JointActionSpace::direction_pairs`].
fn pair_at(space: &JointActionSpace, base: &JointAction, mut index: usize) -> (Direction, Direction) {
    let n = space.agents();
    let d1 = space.actions_per_agent() - 1;
    let block = d1 * d1;
    let mut i = 0;
    loop {
        let here = (n - 1 - i) * block;
        if index < here {
            break;
        }
        index -= here;
        i += 1;
    }
    let j = index / (d1 * (n - 1 - i));
    let rest = index % (d1 * (n - 1 - i));
    let k = i + 1 + rest / d1;
    let l = rest % d1;
    let lift = |agent: usize, t: usize| if t >= base[agent] { t + 1 } else { t };
    (Direction::new(i, lift(i, j)), Direction::new(k, lift(k, l)))
}

/// Pairs ranked by `η(base^(u,v)) − η(base)`. All pairs are scored when
/// there are at most `budget`; otherwise `budget` distinct pairs are drawn
/// uniformly. Ties go to the smaller candidate index. Empty for one agent.
pub fn score_pairs<R: Rng + ?Sized>(
    p: &SurrogateParams,
    base: &JointAction,
    rng: &mut R,
    budget: usize,
) -> Result<Vec<ScoredProposal>> {
    let space = JointActionSpace::new(p.n, p.d)?;
    space.validate(base)?;
    if space.agents() < 2 {
        return Ok(Vec::new());
    }
    let total = space.pair_count();
    let pairs: Vec<(Direction, Direction)> = if total <= budget {
        space.direction_pairs(base)
    } else {
        let mut picked = sample(rng, total, budget).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| pair_at(&space, base, i)).collect()
    };
    let eta = p.eta(base);
    let mut out = Vec::with_capacity(pairs.len());
    for (u, v) in pairs {
        let candidate = base.apply_pair(u, v)?;
        let e_uv = p.eta(&candidate);
        out.push(ScoredProposal {
            score: e_uv - eta,
            mixed: p.delta2(base, u, v)?,
            candidate,
            origin: base.clone(),
            kind: ProposalKind::Pair(u, v),
        });
    }
    out.sort_by(|x, y| {
        y.score
            .total_cmp(&x.score)
            .then_with(|| x.candidate.cmp(&y.candidate))
    });
    Ok(out)
}

/// Candidate maximizing `η`, ties to the smallest index.
pub fn best_by_eta<'a>(p: &SurrogateParams, candidates: &'a [JointAction]) -> Option<&'a JointAction> {
    let mut best: Option<(&JointAction, f64)> = None;
    for a in candidates {
        let e = p.eta(a);
        match best {
            Some((b, be)) if e < be || (e == be && a >= b) => {}
            _ => best = Some((a, e)),
        }
    }
    best.map(|(a, _)| a)
}

/// Up to `k_single` singles and `k_pair` pairs from `base`, skipping anything
/// `is_excluded` accepts, and keeping at most `room` of them (lowest scores
/// dropped first).
pub fn propose_from<R: Rng + ?Sized>(
    p: &SurrogateParams,
    base: &JointAction,
    is_excluded: impl Fn(&JointAction) -> bool,
    room: usize,
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<Vec<ScoredProposal>> {
    let mut chosen: Vec<ScoredProposal> = Vec::new();
    if room == 0 {
        return Ok(chosen);
    }
    if cfg.k_single > 0 {
        chosen.extend(
            score_singles(p, base)?
                .into_iter()
                .filter(|s| !is_excluded(&s.candidate))
                .take(cfg.k_single),
        );
    }
    if cfg.k_pair > 0 && p.n >= 2 {
        let pairs = score_pairs(p, base, rng, cfg.pair_sample_budget)?;
        let mut taken = 0;
        for s in pairs {
            if taken == cfg.k_pair {
                break;
            }
            if is_excluded(&s.candidate) || chosen.iter().any(|c| c.candidate == s.candidate) {
                continue;
            }
            chosen.push(s);
            taken += 1;
        }
    }
    chosen.sort_by(|x, y| y.score.total_cmp(&x.score));
    chosen.truncate(room);
    Ok(chosen)
}

/// New candidates grown from the `η`-best member of `candidates`.
pub fn propose<R: Rng + ?Sized>(
    p: &SurrogateParams,
    candidates: &[JointAction],
    cfg: &ProposalConfig,
    rng: &mut R,
) -> Result<Vec<JointAction>> {
    cfg.validate()?;
    let base = best_by_eta(p, candidates)
        .ok_or_else(|| Error::InvalidConfig("propose needs at least one candidate".into()))?
        .clone();
    let room = cfg.candidate_cap.saturating_sub(candidates.len());
    Ok(propose_from(p, &base, |a| candidates.contains(a), room, cfg, rng)?
        .into_iter()
        .map(|s| s.candidate)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{PayoffTensor, RewardFn};
    use crate::surrogate::{sgd_step, LinkKind, SupervisionSample};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ja(v: &[usize]) -> JointAction {
        JointAction(v.to_vec())
    }

    fn space(n: usize, d: usize) -> JointActionSpace {
        JointActionSpace::new(n, d).unwrap()
    }

    #[test]
    fn zero_theta_gives_tie_order() {
        let s = space(3, 3);
        let p = SurrogateParams::zeros(&s, 1.0, 1.0).unwrap();
        let base = ja(&[1, 0, 2]);
        let out = score_singles(&p, &base).unwrap();
        assert_eq!(out.len(), s.neighbor_count());
        assert!(out.iter().all(|x| x.score == 0.0));
        let dirs: Vec<Direction> = s.directions(&base).collect();
        let got: Vec<Direction> = out
            .iter()
            .map(|x| match x.kind {
                ProposalKind::Single(u) => u,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, dirs);
    }

    #[test]
    fn top_single_example() {
        let s = space(2, 3);
        let p = SurrogateParams::new(&s, vec![0.0, 1.0, 5.0, 0.0, 0.0, 0.0], 1.0, 1.0).unwrap();
        let out = score_singles(&p, &ja(&[0, 0])).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out[0].kind, ProposalKind::Single(Direction::new(0, 2)));
        assert!((out[0].score - 5f64.asinh()).abs() < 1e-15);
        assert_eq!(out[0].candidate, ja(&[2, 0]));
    }

    #[test]
    fn pair_decoding_matches_enumeration() {
        for (n, d) in [(2, 2), (3, 3), (4, 3), (3, 5)] {
            let s = space(n, d);
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 10 + d as u64);
            for _ in 0..20 {
                let base = s.sample_uniform(&mut rng);
                let listed = s.direction_pairs(&base);
                let decoded: Vec<_> = (0..s.pair_count()).map(|i| pair_at(&s, &base, i)).collect();
                assert_eq!(listed, decoded);
            }
        }
    }

    #[test]
    fn identity_link_pair_score_is_sum_of_singles() {
        let s = space(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = SurrogateParams::new(&s, theta, 1.0, 1.0).unwrap().with_link(LinkKind::Identity);
        let base = ja(&[0, 3, 1]);
        for pr in score_pairs(&p, &base, &mut rng, usize::MAX).unwrap() {
            let ProposalKind::Pair(u, v) = pr.kind else { unreachable!() };
            let sum = p.delta1(&base, u).unwrap() + p.delta1(&base, v).unwrap();
            assert!((pr.score - sum).abs() < 1e-12);
            assert!(pr.mixed.abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_and_large_budget_agree() {
        let s = space(3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let p = SurrogateParams::new(&s, theta, 1.0, 1.0).unwrap();
        let base = ja(&[2, 2, 0]);
        let a = score_pairs(&p, &base, &mut rng, s.pair_count()).unwrap();
        let b = score_pairs(&p, &base, &mut rng, usize::MAX).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), s.pair_count());
        assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn sampled_pairs_are_distinct_and_sized() {
        let s = space(5, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = SurrogateParams::zeros(&s, 1.0, 1.0).unwrap();
        let base = s.sample_uniform(&mut rng);
        let out = score_pairs(&p, &base, &mut rng, 40).unwrap();
        assert_eq!(out.len(), 40);
        let mut cands: Vec<_> = out.iter().map(|x| x.candidate.clone()).collect();
        cands.sort();
        cands.dedup();
        assert_eq!(cands.len(), 40);
        for x in &out {
            let ProposalKind::Pair(u, v) = x.kind else { unreachable!() };
            assert_eq!(base.apply_pair(u, v).unwrap(), x.candidate);
        }
    }

    #[test]
    fn single_agent_has_no_pairs() {
        let s = space(1, 4);
        let p = SurrogateParams::zeros(&s, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(score_pairs(&p, &ja(&[2]), &mut rng, 10).unwrap().is_empty());
        let cfg = ProposalConfig::default();
        let out = propose(&p, &[ja(&[2])], &cfg, &mut rng).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn propose_respects_exclusion_and_cap() {
        let s = space(2, 2);
        let p = SurrogateParams::zeros(&s, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let all: Vec<JointAction> = s.iter().unwrap().collect();
        let cfg = ProposalConfig {
            candidate_cap: 4,
            ..ProposalConfig::default()
        };
        assert!(propose(&p, &all, &cfg, &mut rng).unwrap().is_empty());

        let cfg = ProposalConfig {
            candidate_cap: 4,
            k_single: 2,
            k_pair: 2,
            ..ProposalConfig::default()
        };
        let cands = vec![ja(&[0, 0]), ja(&[1, 1])];
        let tight = ProposalConfig {
            candidate_cap: 2,
            k_single: 1,
            k_pair: 1,
            ..cfg.clone()
        };
        assert!(propose(&p, &cands, &tight, &mut rng).unwrap().is_empty());
        let out = propose(&p, &cands, &cfg, &mut rng).unwrap();
        assert_eq!(out, vec![ja(&[1, 0]), ja(&[0, 1])]);
    }

    #[test]
    fn propose_is_deterministic() {
        let s = space(4, 6);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let theta: Vec<f64> = (0..24).map(|_| r.random_range(-1.0..1.0)).collect();
        let p = SurrogateParams::new(&s, theta, 1.0, 1.0).unwrap();
        let cfg = ProposalConfig {
            pair_sample_budget: 30,
            ..ProposalConfig::default()
        };
        let cands = vec![s.sample_uniform(&mut r), s.sample_uniform(&mut r)];
        let x = propose(&p, &cands, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let y = propose(&p, &cands, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn config_validation() {
        assert!(ProposalConfig::default().validate().is_ok());
        let bad = ProposalConfig {
            k_single: 0,
            k_pair: 0,
            ..ProposalConfig::default()
        };
        assert!(bad.validate().is_err());
        let over = ProposalConfig {
            k_single: 10,
            k_pair: 10,
            candidate_cap: 16,
            ..ProposalConfig::default()
        };
        assert!(over.validate().is_err());
        let singles_only = ProposalConfig {
            k_pair: 0,
            ..ProposalConfig::default()
        };
        assert!(singles_only.validate().is_ok());
    }

    /// Fits `θ` by SGD to the rewards around the trap point, both pair orders.
    fn fit_to_trap(t: &PayoffTensor) -> SurrogateParams {
        let s = *t.space();
        let trap = t.trap_layout().unwrap().trap.clone();
        let batch: Vec<SupervisionSample> = s
            .direction_pairs(&trap)
            .into_iter()
            .flat_map(|(u, v)| [(u, v), (v, u)])
            .map(|(u, v)| SupervisionSample::from_fn(trap.clone(), u, Some(v), |a| t.reward(a)).unwrap())
            .collect();
        let scale = t.reward_scale();
        let mut p = SurrogateParams::zeros(&s, scale, 1.0 / scale).unwrap();
        for _ in 0..3000 {
            p = sgd_step(&p, &batch, 0.5).unwrap();
        }
        p
    }

    #[test]
    fn trap_escape_is_proposed() {
        for seed in 0..50 {
            let t = PayoffTensor::make_trap(4, 2, seed).unwrap();
            let layout = t.trap_layout().unwrap().clone();
            let p = fit_to_trap(&t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = score_pairs(&p, &layout.trap, &mut rng, usize::MAX).unwrap();
            assert_eq!(pairs[0].candidate, layout.escape, "seed {seed}");

            let cfg = ProposalConfig::default();
            let out = propose(&p, &[layout.trap.clone()], &cfg, &mut rng).unwrap();
            assert!(out.contains(&layout.escape), "seed {seed}");

            // A monotone link over an additive score cannot make every single
            // lose while a pair gains: the best pair never beats the best
            // single by more than the sum of two single gains allows.
            let singles = score_singles(&p, &layout.trap).unwrap();
            if pairs[0].score > 0.0 {
                assert!(singles[0].score > 0.0);
            }
        }
    }
}
