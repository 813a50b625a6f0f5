//! Local regret, log-log slopes, hitting times, separation ratios, and the
//! theory constants derived from measured smoothness.

use serde::Serialize;

use crate::action_space::JointAction;
use crate::environment::RewardFn;
use crate::error::{Error, Result};
use crate::oracle::{eps_h, LocalMaximizerSet, SmoothnessReport};

/// `R_T = Σ_{t≤T} 1[a_t ∉ set]` for every prefix.
pub fn indicator_regret<'a>(
    actions: impl IntoIterator<Item = &'a JointAction>,
    set: &LocalMaximizerSet,
) -> Result<Vec<f64>> {
    let mut total = 0.0;
    actions
        .into_iter()
        .map(|a| {
            set.space.validate(a)?;
            total += if set.contains(a) { 0.0 } else { 1.0 };
            Ok(total)
        })
        .collect()
}

/// Cumulative `max(0, f(m) − f(a_t))` with `m` the nearest member of `set`.
pub fn gap_regret<'a, F: RewardFn + ?Sized>(
    actions: impl IntoIterator<Item = &'a JointAction>,
    f: &F,
    set: &LocalMaximizerSet,
) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Err(Error::EmptyLocalSet);
    }
    let mut total = 0.0;
    actions
        .into_iter()
        .map(|a| {
            set.space.validate(a)?;
            if !set.contains(a) {
                let (_, value) = set.nearest(f, a)?;
                total += (value - f.reward(a)).max(0.0);
            }
            Ok(total)
        })
        .collect()
}

/// Per-step regret bookkeeping under both readings.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RegretLedger {
    pub actions: Vec<JointAction>,
    pub rewards: Vec<f64>,
    pub indicator: Vec<bool>,
    pub gaps: Vec<f64>,
    pub cumulative_indicator: Vec<f64>,
    pub cumulative_gap: Vec<f64>,
}

impl RegretLedger {
    pub fn build<'a, F: RewardFn + ?Sized>(
        actions: impl IntoIterator<Item = &'a JointAction>,
        f: &F,
        set: &LocalMaximizerSet,
    ) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::EmptyLocalSet);
        }
        let mut ledger = Self::default();
        let (mut ci, mut cg) = (0.0, 0.0);
        for a in actions {
            set.space.validate(a)?;
            let r = f.reward(a);
            let outside = !set.contains(a);
            let gap = if outside {
                (set.nearest(f, a)?.1 - r).max(0.0)
            } else {
                0.0
            };
            ci += f64::from(u8::from(outside));
            cg += gap;
            ledger.actions.push(a.clone());
            ledger.rewards.push(r);
            ledger.indicator.push(outside);
            ledger.gaps.push(gap);
            ledger.cumulative_indicator.push(ci);
            ledger.cumulative_gap.push(cg);
        }
        Ok(ledger)
    }
}

/// Least-squares slope of `ln R_T` against `ln T` for `T` in
/// `[t_min, t_max]`, with `series[T - 1] = R_T`.
pub fn loglog_slope(series: &[f64], t_min: usize, t_max: usize) -> Result<f64> {
    if t_min == 0 || t_max > series.len() || t_min >= t_max {
        return Err(Error::InvalidConfig(format!(
            "slope window [{t_min}, {t_max}] does not fit a series of length {}",
            series.len()
        )));
    }
    let mut xs = Vec::with_capacity(t_max - t_min + 1);
    let mut ys = Vec::with_capacity(t_max - t_min + 1);
    for t in t_min..=t_max {
        let value = series[t - 1];
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveSeries { t, value });
        }
        xs.push((t as f64).ln());
        ys.push(value.ln());
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(sxy / sxx)
}

/// First 1-based step whose action is in `set`, or `None`.
pub fn hitting_time<'a>(
    actions: impl IntoIterator<Item = &'a JointAction>,
    set: &LocalMaximizerSet,
) -> Option<usize> {
    actions
        .into_iter()
        .position(|a| set.contains(a))
        .map(|i| i + 1)
}

/// Hitting time with the `budget + 1` sentinel for runs that never hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingTime {
    pub steps: usize,
    pub censored: bool,
}

impl HittingTime {
    pub fn new(hit: Option<usize>, budget: usize) -> Self {
        match hit {
            Some(t) => Self {
                steps: t,
                censored: false,
            },
            None => Self {
                steps: budget + 1,
                censored: true,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationRatio {
    /// `T_UCB / T_NonZero`, with censored times at `budget + 1`.
    pub ratio: f64,
    pub ucb_censored: bool,
    pub nonzero_censored: bool,
}

impl SeparationRatio {
    /// Both runs censored: the ratio carries no information.
    pub fn incomparable(&self) -> bool {
        self.ucb_censored && self.nonzero_censored
    }

    /// A censored UCB time makes the ratio a lower bound.
    pub fn is_lower_bound(&self) -> bool {
        self.ucb_censored && !self.nonzero_censored
    }
}

pub fn separation_ratio(ucb: HittingTime, nonzero: HittingTime) -> SeparationRatio {
    SeparationRatio {
        ratio: ucb.steps as f64 / nonzero.steps as f64,
        ucb_censored: ucb.censored,
        nonzero_censored: nonzero.censored,
    }
}

/// Ratio of the two hitting times into `set` for traces run with `budget`.
pub fn separation_ratio_of<'a>(
    ucb_actions: impl IntoIterator<Item = &'a JointAction>,
    nonzero_actions: impl IntoIterator<Item = &'a JointAction>,
    set: &LocalMaximizerSet,
    budget: usize,
) -> SeparationRatio {
    separation_ratio(
        HittingTime::new(hitting_time(ucb_actions, set), budget),
        HittingTime::new(hitting_time(nonzero_actions, set), budget),
    )
}

/// Median; incomparable ratios should be passed as 1.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub eps: f64,
    pub c1: f64,
    /// `6·√ζ₃·ε`.
    pub eps2: f64,
    /// `c₁·min(ε²/(ζ₂+1), ε^{3/2}/√ζ₃)`; the second branch is dropped when `ζ₃ = 0`.
    pub nu: f64,
    /// `max(4ζ₂ε⁻², √ζ₃·ε^{−3/2})`.
    pub kappa: f64,
    /// `2 + ζ₁/ζ₂`, infinite when `ζ₂ = 0`.
    pub big_c1: f64,
}

impl TheoryConstants {
    /// `(1 + C₁·√(4T·R_T))·K`, the regret envelope for `T` steps with
    /// cumulative surrogate error `R_T`.
    pub fn regret_bound(&self, t: f64, cumulative_error: f64) -> f64 {
        (1.0 + self.big_c1 * (4.0 * t * cumulative_error).sqrt()) * self.kappa
    }
}

pub fn theory_constants(report: &SmoothnessReport, eps: f64, c1: f64) -> Result<TheoryConstants> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
    }
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(Error::InvalidConfig(format!("c1 must be positive, got {c1}")));
    }
    let SmoothnessReport { zeta1, zeta2, zeta3 } = *report;
    if ![zeta1, zeta2, zeta3].iter().all(|z| z.is_finite() && *z >= 0.0) {
        return Err(Error::InvalidConfig("smoothness constants must be finite and nonnegative".into()));
    }
    let curvature = eps * eps / (zeta2 + 1.0);
    let nu = if zeta3 > 0.0 {
        c1 * curvature.min(eps.powf(1.5) / zeta3.sqrt())
    } else {
        c1 * curvature
    };
    let kappa = (4.0 * zeta2 / (eps * eps)).max(zeta3.sqrt() * eps.powf(-1.5));
    Ok(TheoryConstants {
        zeta1,
        zeta2,
        zeta3,
        eps,
        c1,
        eps2: eps_h(eps, zeta3),
        nu,
        kappa,
        big_c1: 2.0 + zeta1 / zeta2,
    })
}
