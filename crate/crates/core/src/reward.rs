//! Super-arm reward functions and the combinatorial argmax oracle.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest base-arm count accepted by [`brute_force_argmax`].
pub const BRUTE_FORCE_MAX_ARMS: usize = 20;

/// A monotone, Lipschitz reward `f(A, w) = f̃(w|_A)`.
///
/// Both shipped functions depend on `w` only through `Σ_e w_e` and are
/// non-decreasing in it, which is what makes greedy top-K selection exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RewardFunction {
    /// `f̃(w) = Σ w_e`
    LinearSum,
    /// `f̃(w) = c·(1 − exp(−Σ w_e / c))`
    SaturatingConcave { scale: f64 },
}

impl Default for RewardFunction {
    fn default() -> Self {
        RewardFunction::LinearSum
    }
}

impl fmt::Display for RewardFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RewardFunction::LinearSum => write!(f, "linear_sum"),
            RewardFunction::SaturatingConcave { scale } => write!(f, "saturating_concave(c={scale})"),
        }
    }
}

impl RewardFunction {
    pub fn saturating(scale: f64) -> Result<Self> {
        let f = RewardFunction::SaturatingConcave { scale };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            RewardFunction::LinearSum => Ok(()),
            RewardFunction::SaturatingConcave { scale } => {
                if scale.is_finite() && scale > 0.0 {
                    Ok(())
                } else {
                    Err(invalid("reward_function.scale", format!("must be finite and > 0, got {scale}")))
                }
            }
        }
    }

    fn outer(&self, sum: f64) -> f64 {
        match *self {
            RewardFunction::LinearSum => sum,
            RewardFunction::SaturatingConcave { scale } => -scale * (-sum / scale).exp_m1(),
        }
    }

    /// `f̃(weights)` where `weights` is the restriction of `w` to the action, in arm order.
    pub fn evaluate(&self, weights: &[f64]) -> Result<f64> {
        if weights.is_empty() {
            return Err(Error::EmptyWeights);
        }
        Ok(self.outer(weights.iter().sum()))
    }

    /// Value of the base action `arms` under the per-arm values `values`.
    pub fn evaluate_arms(&self, arms: &[usize], values: &[f64]) -> Result<f64> {
        if arms.is_empty() {
            return Err(Error::EmptyWeights);
        }
        Ok(self.outer(arms.iter().map(|&e| values[e]).sum()))
    }

    /// Lipschitz constant `P(k)` for actions of size `k`, w.r.t. the Euclidean norm
    /// on `w ≥ 0`.
    pub fn lipschitz_constant(&self, k: usize) -> f64 {
        // The outer map has slope ≤ 1 on w ≥ 0 for both functions; the sum is √k-Lipschitz.
        (k as f64).sqrt()
    }
}

/// A super arm: the conservative set `A₀`, or a non-empty set of at most K base arms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "arms", rename_all = "snake_case")]
pub enum ActionSet {
    Conservative,
    /// Sorted, distinct base-arm ids.
    Base(Vec<usize>),
}

impl ActionSet {
    /// Validated base action.
    pub fn base(mut arms: Vec<usize>, num_arms: usize, max_arms: usize) -> Result<Self> {
        arms.sort_unstable();
        arms.dedup();
        if arms.is_empty() || arms.len() > max_arms {
            return Err(invalid("action", format!("needs 1..={max_arms} arms, got {}", arms.len())));
        }
        if let Some(&e) = arms.iter().find(|&&e| e >= num_arms) {
            return Err(invalid("action", format!("arm id {e} out of range [0, {num_arms})")));
        }
        Ok(ActionSet::Base(arms))
    }

    pub fn is_conservative(&self) -> bool {
        matches!(self, ActionSet::Conservative)
    }

    /// Base-arm ids (empty for the conservative set).
    pub fn arms(&self) -> &[usize] {
        match self {
            ActionSet::Conservative => &[],
            ActionSet::Base(a) => a,
        }
    }
}

impl fmt::Display for ActionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionSet::Conservative => write!(f, "A0"),
            ActionSet::Base(a) => write!(f, "{a:?}"),
        }
    }
}

fn check_oracle_inputs(values: &[f64], max_arms: usize) -> Result<()> {
    if values.is_empty() {
        return Err(invalid("ucb_values", "need at least one base arm"));
    }
    if max_arms == 0 {
        return Err(invalid("K", "must be positive"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ucb values"));
    }
    Ok(())
}

/// `argmax_{A ⊆ E, 1 ≤ |A| ≤ K} f(A, values)` by greedy top-K selection.
///
/// Exact for reward functions non-decreasing in `Σ_{e∈A} values_e`: take the
/// best arm, then every further arm with a strictly positive value, up to K.
/// Ties go to the lowest arm id.
pub fn argmax_super_arm(f: &RewardFunction, values: &[f64], max_arms: usize) -> Result<ActionSet> {
    check_oracle_inputs(values, max_arms)?;
    match f {
        RewardFunction::LinearSum | RewardFunction::SaturatingConcave { .. } => {}
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut arms = Vec::with_capacity(max_arms);
    arms.push(order[0]);
    arms.extend(order[1..].iter().copied().take_while(|&e| values[e] > 0.0).take(max_arms - 1));
    arms.sort_unstable();
    Ok(ActionSet::Base(arms))
}

/// Exhaustive search over every non-empty subset of size ≤ K.
///
/// Test oracle for [`argmax_super_arm`]; ties go to the lexicographically
/// smallest sorted id list.
pub fn brute_force_argmax(f: &RewardFunction, values: &[f64], max_arms: usize) -> Result<ActionSet> {
    if values.len() > BRUTE_FORCE_MAX_ARMS {
        return Err(invalid(
            "ucb_values",
            format!("brute force limited to {BRUTE_FORCE_MAX_ARMS} arms, got {}", values.len()),
        ));
    }
    check_oracle_inputs(values, max_arms)?;
    let m = values.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1u32..(1u32 << m) {
        if mask.count_ones() as usize > max_arms {
            continue;
        }
        let arms: Vec<usize> = (0..m).filter(|&e| mask & (1 << e) != 0).collect();
        let value = f.evaluate_arms(&arms, values)?;
        let better = match &best {
            None => true,
            Some((bv, ba)) => value > *bv || (value == *bv && arms < *ba),
        };
        if better {
            best = Some((value, arms));
        }
    }
    Ok(ActionSet::Base(best.expect("at least one subset").1))
}
