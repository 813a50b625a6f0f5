//! The asinh-GLM return surrogate `η(θ, a) = c · asinh(α · ⟨θ, ψ(a)⟩)`, its
//! discrete first and mixed second differences, and the four-target squared
//! loss that fits `θ` to observed rewards.
//!
//! `w(θ)` is the identity map, so the score `z` of an action is the sum of the
//! `n` entries of `θ` its n-hot encoding selects.

use serde::{Deserialize, Serialize};

use crate::action_space::{Direction, JointAction, JointActionSpace};
use crate::error::{Error, Result};

/// Which link turns the additive score into a return estimate.
///
/// `Identity` exists for ablations and tests: it makes the surrogate exactly
/// additive, so every mixed difference is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    #[default]
    Asinh,
    Identity,
}

/// Node-wise surrogate parameters: `θ ∈ R^{n·d}` plus the link scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub n: usize,
    pub d: usize,
    pub theta: Vec<f64>,
    pub c: f64,
    pub alpha: f64,
    #[serde(default)]
    pub link: LinkKind,
}

impl SurrogateParams {
    pub fn new(space: &JointActionSpace, theta: Vec<f64>, c: f64, alpha: f64) -> Result<Self> {
        if theta.len() != space.encoding_len() {
            return Err(Error::DimensionMismatch {
                expected: space.encoding_len(),
                actual: theta.len(),
            });
        }
        if !(c > 0.0 && c.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "link scales must be positive and finite (c = {c}, alpha = {alpha})"
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NumericFailure("non-finite theta entry".into()));
        }
        Ok(Self {
            n: space.agents(),
            d: space.actions_per_agent(),
            theta,
            c,
            alpha,
            link: LinkKind::Asinh,
        })
    }

    /// `θ = 0` with link scales `(c, α)`.
    pub fn zeros(space: &JointActionSpace, c: f64, alpha: f64) -> Result<Self> {
        Self::new(space, vec![0.0; space.encoding_len()], c, alpha)
    }

    pub fn with_link(mut self, link: LinkKind) -> Self {
        self.link = link;
        self
    }

    /// `⟨θ, ψ⟩` for an explicit encoding vector.
    pub fn score(&self, psi: &[f64]) -> Result<f64> {
        if psi.len() != self.theta.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta.len(),
                actual: psi.len(),
            });
        }
        Ok(self.theta.iter().zip(psi).map(|(t, p)| t * p).sum())
    }

    /// Additive score of an action: `Σ_i θ[i·d + a_i]`.
    pub fn z(&self, a: &JointAction) -> f64 {
        debug_assert_eq!(a.len(), self.n);
        a.iter()
            .enumerate()
            .map(|(i, &x)| self.theta[i * self.d + x])
            .sum()
    }

    /// The link `g`.
    pub fn link(&self, z: f64) -> f64 {
        match self.link {
            LinkKind::Asinh => self.c * (self.alpha * z).asinh(),
            LinkKind::Identity => z,
        }
    }

    /// `g'(z)`; for asinh this is `c·α / sqrt(1 + (α z)²)`.
    pub fn link_derivative(&self, z: f64) -> f64 {
        match self.link {
            LinkKind::Asinh => self.c * self.alpha / 1f64.hypot(self.alpha * z),
            LinkKind::Identity => 1.0,
        }
    }

    pub fn eta(&self, a: &JointAction) -> f64 {
        self.link(self.z(a))
    }

    /// `Δ_u η(θ, a) = η(a^(u)) − η(a)`.
    pub fn delta1(&self, a: &JointAction, u: Direction) -> Result<f64> {
        let au = a.apply_direction(u)?;
        Ok(self.eta(&au) - self.eta(a))
    }

    /// `Δ²_{u,v} η(θ, a) = η(a^(u,v)) − η(a^(u)) − η(a^(v)) + η(a)`.
    pub fn delta2(&self, a: &JointAction, u: Direction, v: Direction) -> Result<f64> {
        let [e_a, e_u, e_v, e_uv] = self.corner_values(a, u, v)?;
        Ok(mixed(e_a, e_u, e_v, e_uv))
    }

    /// `[η(a^(u,v)) − η(a)] − [Δ_u + Δ_v + Δ²_{u,v}]`, zero up to rounding.
    pub fn decomposition_residual(&self, a: &JointAction, u: Direction, v: Direction) -> Result<f64> {
        let [e_a, e_u, e_v, e_uv] = self.corner_values(a, u, v)?;
        let total = e_uv - e_a;
        let parts = (e_u - e_a) + (e_v - e_a) + mixed(e_a, e_u, e_v, e_uv);
        Ok(total - parts)
    }

    /// `ŷ(θ, x) = [η(a), η(a^(u)), Δ_u η, Δ²_{u,v} η]`.
    ///
    /// Without a second direction the mixed component is 0.
    pub fn predict4(&self, a: &JointAction, u: Direction, v: Option<Direction>) -> Result<[f64; 4]> {
        let au = a.apply_direction(u)?;
        let e_a = self.eta(a);
        let e_u = self.eta(&au);
        let second = match v {
            Some(v) => {
                let av = a.apply_direction(v)?;
                let auv = a.apply_pair(u, v)?;
                mixed(e_a, e_u, self.eta(&av), self.eta(&auv))
            }
            None => 0.0,
        };
        Ok([e_a, e_u, e_u - e_a, second])
    }

    fn corner_values(&self, a: &JointAction, u: Direction, v: Direction) -> Result<[f64; 4]> {
        let auv = a.apply_pair(u, v)?;
        let au = a.apply_direction(u)?;
        let av = a.apply_direction(v)?;
        Ok([self.eta(a), self.eta(&au), self.eta(&av), self.eta(&auv)])
    }

    /// Adds `scale · g'(z(a)) · ψ(a)` into `grad`.
    fn accumulate(&self, grad: &mut [f64], a: &JointAction, scale: f64) {
        if scale == 0.0 {
            return;
        }
        let w = scale * self.link_derivative(self.z(a));
        for (i, &x) in a.iter().enumerate() {
            grad[i * self.d + x] += w;
        }
    }
}

fn mixed(e_a: f64, e_u: f64, e_v: f64, e_uv: f64) -> f64 {
    (e_uv + e_a) - (e_u + e_v)
}

/// One supervised query `x = (a, u, v)` with its four reward-derived targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisionSample {
    pub a: JointAction,
    pub u: Direction,
    pub v: Option<Direction>,
    /// `[r(a), r(a^(u)), Δ_u r, Δ²_{u,v} r]`.
    pub y: [f64; 4],
}

impl SupervisionSample {
    /// Checks that `y[2] = y[1] − y[0]` up to rounding and that the
    /// directions are usable at `a`.
    pub fn new(a: JointAction, u: Direction, v: Option<Direction>, y: [f64; 4]) -> Result<Self> {
        a.apply_direction(u)?;
        if let Some(v) = v {
            a.apply_pair(u, v)?;
        }
        if y.iter().any(|t| !t.is_finite()) {
            return Err(Error::NumericFailure("non-finite supervision target".into()));
        }
        let scale = 1.0 + y[0].abs().max(y[1].abs());
        if (y[2] - (y[1] - y[0])).abs() > 1e-9 * scale {
            return Err(Error::InconsistentTarget(format!(
                "first difference {} != {} - {}",
                y[2], y[1], y[0]
            )));
        }
        Ok(Self { a, u, v, y })
    }

    /// Builds the targets from the four corner rewards.
    pub fn from_rewards(
        a: JointAction,
        u: Direction,
        v: Option<Direction>,
        r_a: f64,
        r_u: f64,
        r_v: f64,
        r_uv: f64,
    ) -> Result<Self> {
        let second = if v.is_some() { mixed(r_a, r_u, r_v, r_uv) } else { 0.0 };
        Self::new(a, u, v, [r_a, r_u, r_u - r_a, second])
    }

    /// Queries `reward` at every corner the sample needs.
    pub fn from_fn(
        a: JointAction,
        u: Direction,
        v: Option<Direction>,
        reward: impl Fn(&JointAction) -> f64,
    ) -> Result<Self> {
        let au = a.apply_direction(u)?;
        let (r_v, r_uv) = match v {
            Some(v) => (reward(&a.apply_direction(v)?), reward(&a.apply_pair(u, v)?)),
            None => (0.0, 0.0),
        };
        let (r_a, r_u) = (reward(&a), reward(&au));
        Self::from_rewards(a, u, v, r_a, r_u, r_v, r_uv)
    }
}

/// `ξ`: the unscaled squared error over the four targets of one sample.
pub fn composite_error(p: &SurrogateParams, sample: &SupervisionSample) -> Result<f64> {
    let y_hat = p.predict4(&sample.a, sample.u, sample.v)?;
    Ok(y_hat
        .iter()
        .zip(&sample.y)
        .map(|(h, y)| (h - y).powi(2))
        .sum())
}

/// Mean over the batch of `¼ Σ_k (ŷ_k − y_k)²`.
pub fn nonuct_loss(p: &SurrogateParams, batch: &[SupervisionSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        total += 0.25 * composite_error(p, s)?;
    }
    Ok(total / batch.len() as f64)
}

/// Exact gradient of [`nonuct_loss`] with respect to `θ`.
pub fn loss_gradient(p: &SurrogateParams, batch: &[SupervisionSample]) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut grad = vec![0.0; p.theta.len()];
    let norm = 1.0 / batch.len() as f64;
    for s in batch {
        let y_hat = p.predict4(&s.a, s.u, s.v)?;
        // d/dθ of ¼ r² is ½ r dŷ/dθ.
        let r: Vec<f64> = y_hat
            .iter()
            .zip(&s.y)
            .map(|(h, y)| 0.5 * norm * (h - y))
            .collect();
        let au = s.a.apply_direction(s.u)?;
        // ŷ0 = η(a), ŷ1 = η(a^u), ŷ2 = η(a^u) − η(a).
        let mut coef_a = r[0] - r[2];
        let mut coef_u = r[1] + r[2];
        if let Some(v) = s.v {
            // ŷ3 = η(a^uv) − η(a^u) − η(a^v) + η(a).
            coef_a += r[3];
            coef_u -= r[3];
            p.accumulate(&mut grad, &s.a.apply_direction(v)?, -r[3]);
            p.accumulate(&mut grad, &s.a.apply_pair(s.u, v)?, r[3]);
        }
        p.accumulate(&mut grad, &s.a, coef_a);
        p.accumulate(&mut grad, &au, coef_u);
    }
    Ok(grad)
}

/// `θ ← θ − lr · ∇L`; link scales are unchanged.
pub fn sgd_step(
    p: &SurrogateParams,
    batch: &[SupervisionSample],
    learning_rate: f64,
) -> Result<SurrogateParams> {
    if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be a non-negative finite number, got {learning_rate}"
        )));
    }
    let grad = loss_gradient(p, batch)?;
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericFailure("non-finite loss gradient".into()));
    }
    let mut next = p.clone();
    for (t, g) in next.theta.iter_mut().zip(&grad) {
        *t -= learning_rate * g;
    }
    if next.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NumericFailure("theta diverged".into()));
    }
    Ok(next)
}
