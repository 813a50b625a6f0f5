//! MatGame payoff tensors and the episodic wrapper the planners query.
//!
//! Rewards are deterministic. The nonlinear kind bakes its noise into the
//! tensor through a counter-based hash of `(seed, action)`, so a dense table
//! and on-demand evaluation return bit-identical values and the output is
//! independent of any RNG crate version.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::action_space::{Direction, JointAction, JointActionSpace};
use crate::error::Result;
use crate::surrogate::SurrogateParams;

/// Default number of entries above which tensors are evaluated on demand.
pub const DEFAULT_DENSE_CAP: u64 = 10_000_000;

/// Anything that assigns a deterministic reward to every joint action.
pub trait RewardFn: Sync {
    fn space(&self) -> &JointActionSpace;

    fn reward(&self, a: &JointAction) -> f64;

    /// Reward at a linear index; override when a table lookup is cheaper.
    fn reward_at(&self, index: u64) -> f64 {
        self.reward(&self.space().action_at(index))
    }
}

/// Wraps a closure as a [`RewardFn`].
pub struct FnReward<F> {
    space: JointActionSpace,
    f: F,
}

impl<F: Fn(&JointAction) -> f64 + Sync> FnReward<F> {
    pub fn new(space: JointActionSpace, f: F) -> Self {
        Self { space, f }
    }
}

impl<F: Fn(&JointAction) -> f64 + Sync> RewardFn for FnReward<F> {
    fn space(&self) -> &JointActionSpace {
        &self.space
    }

    fn reward(&self, a: &JointAction) -> f64 {
        (self.f)(a)
    }
}

/// The surrogate `η(θ, ·)` viewed as a reward landscape.
pub struct SurrogateLandscape<'a> {
    pub space: JointActionSpace,
    pub params: &'a SurrogateParams,
}

impl RewardFn for SurrogateLandscape<'_> {
    fn space(&self) -> &JointActionSpace {
        &self.space
    }

    fn reward(&self, a: &JointAction) -> f64 {
        self.params.eta(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorKind {
    /// `R(a) = Σ_i a_i`.
    Linear,
    /// Linear sum plus baked-in `N(0, 2²) + U(−3, 3)` noise per entry.
    Nonlinear,
    /// A coordination trap: every one-agent deviation from the trap point
    /// loses, one two-agent deviation gains.
    Trap,
}

impl std::fmt::Display for TensorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TensorKind::Linear => "linear",
            TensorKind::Nonlinear => "nonlinear",
            TensorKind::Trap => "trap",
        })
    }
}

/// Config record that fully determines a tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub kind: TensorKind,
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: u64,
    /// Adds a fresh noise draw on every sampled query. Off by default.
    #[serde(default)]
    pub query_noise: bool,
}

fn default_dense_cap() -> u64 {
    DEFAULT_DENSE_CAP
}

impl TensorSpec {
    pub fn new(kind: TensorKind, n: usize, d: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            d,
            seed,
            dense_cap: DEFAULT_DENSE_CAP,
            query_noise: false,
        }
    }

    pub fn build(&self) -> Result<PayoffTensor> {
        PayoffTensor::from_spec(self.clone())
    }
}

/// Layout of a [`TensorKind::Trap`] tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapLayout {
    pub trap: JointAction,
    pub u: Direction,
    pub v: Direction,
    pub escape: JointAction,
}

/// Trap values: the trap point is 0 and the escape pair is +2. The two
/// single deviations that make up the escape cost 0.5 each, every other
/// single costs between 1 and 1.5, and anything farther costs at least its
/// Hamming distance to the trap.
const TRAP_ESCAPE_VALUE: f64 = 2.0;
const TRAP_SHALLOW_SINGLE: f64 = -0.5;

#[derive(Debug, Clone)]
pub struct PayoffTensor {
    spec: TensorSpec,
    space: JointActionSpace,
    dense: Option<Vec<f64>>,
    trap: Option<TrapLayout>,
}

impl PayoffTensor {
    pub fn make_linear(n: usize, d: usize, seed: u64) -> Result<Self> {
        Self::from_spec(TensorSpec::new(TensorKind::Linear, n, d, seed))
    }

    pub fn make_nonlinear(n: usize, d: usize, seed: u64) -> Result<Self> {
        Self::from_spec(TensorSpec::new(TensorKind::Nonlinear, n, d, seed))
    }

    /// Coordination-trap tensor; needs at least two agents.
    pub fn make_trap(n: usize, d: usize, seed: u64) -> Result<Self> {
        Self::from_spec(TensorSpec::new(TensorKind::Trap, n, d, seed))
    }

    pub fn from_spec(spec: TensorSpec) -> Result<Self> {
        let space = JointActionSpace::new(spec.n, spec.d)?;
        let trap = match spec.kind {
            TensorKind::Trap => Some(trap_layout(&space, spec.seed)?),
            _ => None,
        };
        let mut tensor = Self {
            spec,
            space,
            dense: None,
            trap,
        };
        if let Some(card) = space.cardinality().filter(|&c| c <= tensor.spec.dense_cap) {
            let table = (0..card)
                .map(|i| tensor.evaluate(&space.action_at(i)))
                .collect();
            tensor.dense = Some(table);
        }
        Ok(tensor)
    }

    pub fn spec(&self) -> &TensorSpec {
        &self.spec
    }

    pub fn kind(&self) -> TensorKind {
        self.spec.kind
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    pub fn trap_layout(&self) -> Option<&TrapLayout> {
        self.trap.as_ref()
    }

    /// On-demand evaluation; the dense table is filled from this.
    pub fn evaluate(&self, a: &JointAction) -> f64 {
        let linear: f64 = a.iter().map(|&x| x as f64).sum();
        match self.spec.kind {
            TensorKind::Linear => linear,
            TensorKind::Nonlinear => {
                let (gauss, uniform) = baked_noise(self.spec.seed, a);
                linear + gauss + uniform
            }
            TensorKind::Trap => {
                let layout = self.trap.as_ref().expect("trap tensors carry a layout");
                trap_value(layout, self.spec.seed, a)
            }
        }
    }

    /// Upper bound on typical `|R|`, used to scale the surrogate link.
    pub fn reward_scale(&self) -> f64 {
        let linear = (self.spec.n * (self.spec.d - 1)) as f64;
        match self.spec.kind {
            TensorKind::Linear => linear.max(1.0),
            TensorKind::Nonlinear => linear + 9.0,
            TensorKind::Trap => (self.spec.n as f64 + 1.5).max(TRAP_ESCAPE_VALUE),
        }
    }
}

impl RewardFn for PayoffTensor {
    fn space(&self) -> &JointActionSpace {
        &self.space
    }

    fn reward(&self, a: &JointAction) -> f64 {
        debug_assert!(self.space.validate(a).is_ok(), "invalid action {a}");
        match (&self.dense, self.space.linear_index(a)) {
            (Some(table), Some(i)) => table[i as usize],
            _ => self.evaluate(a),
        }
    }

    fn reward_at(&self, index: u64) -> f64 {
        match &self.dense {
            Some(table) => table[index as usize],
            None => self.evaluate(&self.space.action_at(index)),
        }
    }
}

/// Source of rewards for the planners.
pub trait Environment: Sync {
    fn space(&self) -> &JointActionSpace;

    /// Deterministic (expected) reward.
    fn reward(&self, a: &JointAction) -> f64;

    /// Reward as observed by one query.
    fn sample_reward(&self, a: &JointAction, _rng: &mut dyn RngCore) -> f64 {
        self.reward(a)
    }

    /// Steps per episode.
    fn horizon(&self) -> usize {
        1
    }

    fn discount(&self) -> f64 {
        0.0
    }

    fn reward_scale(&self) -> f64;
}

/// Repeated play of one payoff tensor for `horizon` steps.
#[derive(Debug, Clone)]
pub struct EpisodicMatGame {
    pub tensor: PayoffTensor,
    horizon: usize,
    discount: f64,
}

impl EpisodicMatGame {
    pub fn new(tensor: PayoffTensor, horizon: usize, discount: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(crate::Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(crate::Error::InvalidConfig(format!(
                "discount must lie in [0, 1), got {discount}"
            )));
        }
        Ok(Self {
            tensor,
            horizon,
            discount,
        })
    }

    /// Single-step bandit over the tensor.
    pub fn bandit(tensor: PayoffTensor) -> Self {
        Self {
            tensor,
            horizon: 1,
            discount: 0.0,
        }
    }

    /// `Σ_t γ^t R(a_t)` over at most `horizon` actions.
    pub fn episode_return(&self, actions: &[JointAction]) -> f64 {
        let mut total = 0.0;
        let mut weight = 1.0;
        for a in actions.iter().take(self.horizon) {
            total += weight * self.tensor.reward(a);
            weight *= self.discount;
        }
        total
    }
}

impl Environment for EpisodicMatGame {
    fn space(&self) -> &JointActionSpace {
        &self.tensor.space
    }

    fn reward(&self, a: &JointAction) -> f64 {
        self.tensor.reward(a)
    }

    fn sample_reward(&self, a: &JointAction, rng: &mut dyn RngCore) -> f64 {
        let base = self.tensor.reward(a);
        if !self.tensor.spec.query_noise {
            return base;
        }
        let key = rng.next_u64();
        let (gauss, uniform) = noise_from_key(key);
        base + gauss + uniform
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn reward_scale(&self) -> f64 {
        self.tensor.reward_scale()
    }
}

impl RewardFn for EpisodicMatGame {
    fn space(&self) -> &JointActionSpace {
        &self.tensor.space
    }

    fn reward(&self, a: &JointAction) -> f64 {
        self.tensor.reward(a)
    }

    fn reward_at(&self, index: u64) -> f64 {
        self.tensor.reward_at(index)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Counter-based hash of `(seed, a)`; stable across versions.
fn action_key(seed: u64, a: &JointAction) -> u64 {
    let mut h = splitmix64(seed ^ 0x6A09_E667_F3BC_C908);
    for &x in a.iter() {
        h = splitmix64(h ^ (x as u64).wrapping_add(0x3C6E_F372_FE94_F82B));
    }
    h
}

/// Uniform in `[0, 1)` with 53 random bits.
fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `(N(0, 2²), U(−3, 3))` from one key via Box-Muller.
fn noise_from_key(key: u64) -> (f64, f64) {
    let u1 = 1.0 - unit(splitmix64(key ^ 1));
    let u2 = unit(splitmix64(key ^ 2));
    let u3 = unit(splitmix64(key ^ 3));
    let gauss = 2.0 * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
    (gauss, -3.0 + 6.0 * u3)
}

fn baked_noise(seed: u64, a: &JointAction) -> (f64, f64) {
    noise_from_key(action_key(seed, a))
}

fn trap_layout(space: &JointActionSpace, seed: u64) -> Result<TrapLayout> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x7261_7073);
    let trap = space.sample_uniform(&mut rng);
    let (u, v) = space.sample_direction_pair(&trap, &mut rng)?;
    let escape = trap.apply_pair(u, v)?;
    Ok(TrapLayout { trap, u, v, escape })
}

fn trap_value(layout: &TrapLayout, seed: u64, a: &JointAction) -> f64 {
    if *a == layout.escape {
        return TRAP_ESCAPE_VALUE;
    }
    let distance = a.hamming(&layout.trap);
    if distance == 0 {
        return 0.0;
    }
    let jitter = 0.5 * unit(action_key(seed, a));
    if distance == 1 {
        let on_escape = [layout.u, layout.v]
            .iter()
            .any(|w| a[w.agent] == w.target);
        return if on_escape {
            TRAP_SHALLOW_SINGLE
        } else {
            -1.0 - jitter
        };
    }
    -(distance as f64) - jitter
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ja(v: &[usize]) -> JointAction {
        JointAction(v.to_vec())
    }

    #[test]
    fn linear_examples() {
        let t = PayoffTensor::make_linear(2, 3, 0).unwrap();
        assert_eq!(t.reward(&ja(&[1, 2])), 3.0);
        assert_eq!(t.reward(&ja(&[0, 0])), 0.0);

        let t = PayoffTensor::make_linear(4, 5, 0).unwrap();
        let best = t
            .space()
            .iter()
            .unwrap()
            .map(|a| t.reward(&a))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(best, 16.0);
        assert_eq!(t.reward(&JointAction::zeros(4)), 0.0);
    }

    #[test]
    fn nonlinear_is_deterministic() {
        let t = PayoffTensor::make_nonlinear(3, 4, 99).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let a = t.space().sample_uniform(&mut rng);
            assert_eq!(t.reward(&a).to_bits(), t.reward(&a).to_bits());
            assert!(t.reward(&a).is_finite());
        }
        let again = PayoffTensor::make_nonlinear(3, 4, 99).unwrap();
        for a in t.space().iter().unwrap() {
            assert_eq!(t.reward(&a).to_bits(), again.reward(&a).to_bits());
        }
    }

    #[test]
    fn nonlinear_noise_has_zero_mean() {
        // Per-entry variance of N(0, 4) + U(-3, 3) is 4 + 3 = 7.
        let mut total = 0.0;
        let mut count = 0usize;
        for seed in 0..50 {
            let t = PayoffTensor::make_nonlinear(4, 5, seed).unwrap();
            for a in t.space().iter().unwrap() {
                let linear: f64 = a.iter().map(|&x| x as f64).sum();
                total += t.reward(&a) - linear;
                count += 1;
            }
        }
        let mean = total / count as f64;
        let sigma = (7.0 / count as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sigma, "mean {mean}, sigma {sigma}");
    }

    #[test]
    fn nonlinear_noise_variance_matches_declared_law() {
        let t = PayoffTensor::make_nonlinear(6, 8, 3).unwrap();
        let (mut s1, mut s2, mut below, mut count) = (0.0, 0.0, 0usize, 0usize);
        for a in t.space().iter().unwrap() {
            let linear: f64 = a.iter().map(|&x| x as f64).sum();
            let e = t.reward(&a) - linear;
            s1 += e;
            s2 += e * e;
            below += usize::from(e < -9.0);
            count += 1;
        }
        let var = s2 / count as f64 - (s1 / count as f64).powi(2);
        assert!((var - 7.0).abs() < 0.1, "variance {var}");
        assert!(below < count / 1000);
    }

    #[test]
    fn seeds_change_the_tensor() {
        for s in 0..10 {
            let a = PayoffTensor::make_nonlinear(2, 3, s).unwrap();
            let b = PayoffTensor::make_nonlinear(2, 3, s + 100).unwrap();
            assert!(a
                .space()
                .iter()
                .unwrap()
                .any(|x| a.reward(&x) != b.reward(&x)));
        }
    }

    #[test]
    fn dense_and_functional_agree_bit_exactly() {
        for kind in [TensorKind::Linear, TensorKind::Nonlinear, TensorKind::Trap] {
            let dense = TensorSpec::new(kind, 3, 4, 17).build().unwrap();
            let functional = TensorSpec {
                dense_cap: 0,
                ..TensorSpec::new(kind, 3, 4, 17)
            }
            .build()
            .unwrap();
            assert!(dense.is_dense() && !functional.is_dense());
            for (i, a) in dense.space().iter().unwrap().enumerate() {
                assert_eq!(dense.reward(&a).to_bits(), functional.reward(&a).to_bits());
                assert_eq!(
                    dense.reward_at(i as u64).to_bits(),
                    functional.reward_at(i as u64).to_bits()
                );
            }
        }
    }

    #[test]
    fn large_tensors_are_functional() {
        let t = PayoffTensor::make_nonlinear(8, 10, 1).unwrap();
        assert!(!t.is_dense());
        let a = ja(&[9, 9, 9, 9, 9, 9, 9, 9]);
        assert!(t.reward(&a).is_finite());
    }

    #[test]
    fn linear_tensor_has_no_interaction() {
        for n in 2..=4 {
            for d in 2..=4 {
                let t = PayoffTensor::make_linear(n, d, 0).unwrap();
                let s = *t.space();
                for a in s.iter().unwrap() {
                    for (u, v) in s.direction_pairs(&a) {
                        let r = |x: &JointAction| t.reward(x);
                        let mixed = r(&a.apply_pair(u, v).unwrap())
                            - r(&a.apply_direction(u).unwrap())
                            - r(&a.apply_direction(v).unwrap())
                            + r(&a);
                        assert_eq!(mixed, 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn trap_layout_is_a_trap() {
        for seed in 0..20 {
            let t = PayoffTensor::make_trap(4, 3, seed).unwrap();
            let layout = t.trap_layout().unwrap().clone();
            let s = *t.space();
            let base = t.reward(&layout.trap);
            assert_eq!(base, 0.0);
            for (_, next) in s.neighbors(&layout.trap) {
                assert!(t.reward(&next) < base);
            }
            let improving: Vec<JointAction> = s
                .direction_pairs(&layout.trap)
                .into_iter()
                .map(|(u, v)| layout.trap.apply_pair(u, v).unwrap())
                .filter(|x| t.reward(x) > base)
                .collect();
            assert_eq!(improving, vec![layout.escape.clone()]);
        }
        assert!(PayoffTensor::make_trap(1, 3, 0).is_err());
    }

    #[test]
    fn episode_return_under_constant_action() {
        let t = PayoffTensor::make_nonlinear(2, 3, 5).unwrap();
        let a = ja(&[2, 1]);
        let r = t.reward(&a);
        let game = EpisodicMatGame::new(t, 7, 0.9).unwrap();
        let got = game.episode_return(&vec![a; 7]);
        let expected = r * (1.0 - 0.9f64.powi(7)) / (1.0 - 0.9);
        assert!((got - expected).abs() < 1e-10);
    }

    #[test]
    fn episodic_game_validates() {
        let t = PayoffTensor::make_linear(2, 2, 0).unwrap();
        assert!(EpisodicMatGame::new(t.clone(), 0, 0.5).is_err());
        assert!(EpisodicMatGame::new(t.clone(), 3, 1.0).is_err());
        assert!(EpisodicMatGame::new(t, 3, 0.0).is_ok());
    }

    #[test]
    fn query_noise_is_off_by_default() {
        let game = EpisodicMatGame::bandit(PayoffTensor::make_linear(2, 3, 0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(game.sample_reward(&ja(&[1, 1]), &mut rng), 2.0);

        let spec = TensorSpec {
            query_noise: true,
            ..TensorSpec::new(TensorKind::Linear, 2, 3, 0)
        };
        let noisy = EpisodicMatGame::bandit(spec.build().unwrap());
        let draws: Vec<f64> = (0..5)
            .map(|_| noisy.sample_reward(&ja(&[1, 1]), &mut rng))
            .collect();
        assert!(draws.windows(2).any(|w| w[0] != w[1]));
        assert_eq!(Environment::reward(&noisy, &ja(&[1, 1])), 2.0);
    }
}
