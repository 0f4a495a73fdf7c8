//! Decision policies.
//!
//! * **CCConUCB** with a known conservative reward `μ₀` or with an unknown one
//!   (then `μ₀` is replaced by the conservative arms' own confidence bounds).
//!   Each round it forms the optimistic candidate `B_t`, lower-bounds the
//!   cumulative reward it would have earned by playing it, and falls back to
//!   the conservative set `A₀` when that bound drops below `(1 − α)·t·μ₀`.
//! * **C²UCB**: the unconstrained optimistic comparator.
//! * **AlwaysConservative**: plays `A₀` every round.
//!
//! [`step`] is a pure function of `(state, history, context, config)`;
//! [`commit`] applies the observed feedback. Conservative rounds leave the
//! [`RidgeState`] untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::RoundContext;
use crate::error::{invalid, Error, Result};
use crate::linalg::{FeatureVector, IngestUpdate, RidgeState, WeightBound};
use crate::reward::{argmax_super_arm, ActionSet, RewardFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    #[serde(rename = "ccconucb")]
    CcconUcb,
    #[serde(rename = "c2ucb")]
    C2Ucb,
    AlwaysConservative,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::CcconUcb => "ccconucb",
            PolicyKind::C2Ucb => "c2ucb",
            PolicyKind::AlwaysConservative => "always_conservative",
        })
    }
}

impl FromStr for PolicyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ccconucb" => Ok(PolicyKind::CcconUcb),
            "c2ucb" => Ok(PolicyKind::C2Ucb),
            "always_conservative" => Ok(PolicyKind::AlwaysConservative),
            other => Err(invalid("policy", format!("unknown policy `{other}`"))),
        }
    }
}

/// How past optimistic plays are lower-bounded in the safety check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecomputeMode {
    /// `L(t, n)`: re-evaluate every past play under the current estimate.
    #[default]
    #[serde(alias = "Fresh")]
    Fresh,
    /// `L(n, n)`: reuse the lower bound computed when the play was made.
    #[serde(alias = "Static")]
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Conservatism level `α ∈ (0, 1)`.
    pub alpha: f64,
    /// Maximum super-arm size `K`.
    pub max_arms: usize,
    /// Known conservative reward `μ₀`; `None` selects the unknown-reward variant.
    pub mu0: Option<f64>,
    pub reward_function: RewardFunction,
    pub recompute_mode: RecomputeMode,
}

impl PolicyConfig {
    pub fn new(alpha: f64, max_arms: usize, mu0: Option<f64>) -> Self {
        Self {
            alpha,
            max_arms,
            mu0,
            reward_function: RewardFunction::LinearSum,
            recompute_mode: RecomputeMode::Fresh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_arms == 0 {
            return Err(invalid("K", "must be positive"));
        }
        if let Some(mu0) = self.mu0 {
            if !(mu0.is_finite() && mu0 >= 0.0) {
                return Err(invalid("mu0", format!("must be finite and ≥ 0, got {mu0}")));
            }
        }
        self.reward_function.validate()
    }
}

/// One round in `N_t`: what was played and with which features.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticPlay {
    pub round: usize,
    pub action: ActionSet,
    pub features: Vec<FeatureVector>,
    /// `f(A_n, L_{n,n})`, the lower bound used when the play was certified.
    pub static_lower: f64,
}

/// The partition of past rounds into `N_t` (stored in full) and `D_t` (counted).
///
/// Also caches `‖x‖²_{V⁻¹}` for every stored feature. The cache is kept in
/// step with the ridge state by [`commit`] through O(d) Sherman–Morrison
/// downdates; when it is out of step, readers fall back to direct evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    plays: Vec<OptimisticPlay>,
    conservative_rounds: usize,
    /// Stored features back to back, for the per-round sweeps.
    flat: Vec<f64>,
    sq_norms: Vec<f64>,
    synced_ingests: Option<u64>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rounds completed so far, `t = n_t + d_t`.
    pub fn rounds(&self) -> usize {
        self.plays.len() + self.conservative_rounds
    }

    /// `n_t = |N_t|`
    pub fn optimistic_count(&self) -> usize {
        self.plays.len()
    }

    /// `d_t = |D_t|`
    pub fn conservative_count(&self) -> usize {
        self.conservative_rounds
    }

    pub fn plays(&self) -> &[OptimisticPlay] {
        &self.plays
    }

    /// Every stored feature of every optimistic play, in play order.
    pub fn stored_features(&self) -> impl Iterator<Item = &FeatureVector> {
        self.plays.iter().flat_map(|p| p.features.iter())
    }

    fn is_synced(&self, state: &RidgeState) -> bool {
        self.synced_ingests == Some(state.ingests())
    }

    /// Recompute every cached norm directly from `state`.
    pub fn resync(&mut self, state: &RidgeState) {
        self.sq_norms = self
            .flat
            .chunks_exact(state.dim())
            .map(|x| state.quad_form(x).max(0.0))
            .collect();
        self.synced_ingests = Some(state.ingests());
    }

    /// Apply one ingest's rank-one change to the cached norms. `state` is the
    /// state after the ingest.
    pub fn absorb(&mut self, update: &IngestUpdate, state: &RidgeState) {
        let in_step = self.synced_ingests.map(|s| s + 1) == Some(state.ingests());
        if update.refreshed || !in_step {
            self.resync(state);
            return;
        }
        let u = update.vinv_x.as_slice();
        let scale = 1.0 / update.denom;
        for (sq, x) in self.sq_norms.iter_mut().zip(self.flat.chunks_exact(state.dim())) {
            let proj = dot(x, u);
            *sq = (*sq - proj * proj * scale).max(0.0);
        }
        self.synced_ingests = Some(state.ingests());
    }

    fn push_play(&mut self, state: &RidgeState, play: OptimisticPlay) {
        let synced = self.is_synced(state) || self.plays.is_empty();
        for x in &play.features {
            self.flat.extend_from_slice(x.as_slice());
            self.sq_norms.push(state.quad_form(x.as_slice()).max(0.0));
        }
        self.plays.push(play);
        if synced {
            self.synced_ingests = Some(state.ingests());
        }
    }

    fn record_conservative(&mut self) {
        self.conservative_rounds += 1;
    }

    /// Visit the current bounds `(U_{t,n,e}, L_{t,n,e})` of every stored feature.
    pub fn for_each_bound(&self, state: &RidgeState, mut visit: impl FnMut(usize, &FeatureVector, WeightBound)) {
        let synced = self.is_synced(state);
        let mut k = 0;
        for (i, play) in self.plays.iter().enumerate() {
            for x in &play.features {
                let b = if synced {
                    state.bounds_with_norm_squared(x.as_slice(), self.sq_norms[k])
                } else {
                    state.bounds_unchecked(x.as_slice())
                };
                visit(i, x, b);
                k += 1;
            }
        }
    }

    /// `Σ_{n∈N_t} Σ_{e∈A_n} ‖x_{n,e}‖²_{V⁻¹}` under `state`.
    pub fn norm_sum(&self, state: &RidgeState) -> f64 {
        if self.is_synced(state) {
            self.sq_norms.iter().sum()
        } else {
            self.flat.chunks_exact(state.dim()).map(|x| state.quad_form(x).max(0.0)).sum()
        }
    }

    /// `Σ_{n∈N_{t−1}} f(A_n, L_{t,n})` under the configured recompute mode.
    pub fn lower_bound_sum(&self, state: &RidgeState, cfg: &PolicyConfig) -> Result<f64> {
        if cfg.recompute_mode == RecomputeMode::Static {
            return Ok(self.plays.iter().map(|p| p.static_lower).sum());
        }
        let synced = self.is_synced(state);
        let theta = state.theta_hat().as_slice();
        let radius = state.radius();
        let mut rows = self.flat.chunks_exact(state.dim()).zip(0..);
        let mut lowers = Vec::with_capacity(cfg.max_arms);
        let mut total = 0.0;
        for play in &self.plays {
            lowers.clear();
            for (x, k) in rows.by_ref().take(play.features.len()) {
                let sq = if synced { self.sq_norms[k] } else { state.quad_form(x) };
                lowers.push(WeightBound::from_parts(dot(x, theta), radius * sq.max(0.0).sqrt()).lower);
            }
            total += match (play.action.is_conservative(), cfg.mu0) {
                (true, Some(mu0)) => mu0,
                _ => cfg.reward_function.evaluate(&lowers)?,
            };
        }
        Ok(total)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outcome of one policy step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    /// The action to play, `A_t`.
    pub action: ActionSet,
    /// The conservative fallback was forced (`A_t = A₀`, round joins `D_t`).
    pub was_conservative: bool,
    /// `ψ_t`, the certified lower bound on cumulative reward.
    pub psi: f64,
    /// Right-hand side `ψ_t` was compared against.
    pub threshold: f64,
    /// `ψ_t ≥ threshold`
    pub certified: bool,
    /// The optimistic candidate `B_t`.
    pub candidate: ActionSet,
    /// `f(B_t, L_{t,t})`
    pub candidate_lower: f64,
}

/// Result of the revenue-constraint check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintCheck {
    pub psi: f64,
    pub threshold: f64,
    pub pass: bool,
    /// `f(B_t, L_{t,t})`
    pub candidate_lower: f64,
}

fn check_context(state: &RidgeState, ctx: &RoundContext<'_>) -> Result<()> {
    let d = state.dim();
    if ctx.base_features.is_empty() {
        return Err(invalid("context", "no base arms"));
    }
    for x in ctx.base_features.iter().chain(ctx.conservative_features) {
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: x.dim(),
            });
        }
    }
    Ok(())
}

/// Per-arm bounds `(U_{t,t,e}, L_{t,t,e})` for every base arm.
pub fn base_arm_bounds(state: &RidgeState, ctx: &RoundContext<'_>) -> Result<Vec<WeightBound>> {
    check_context(state, ctx)?;
    Ok(ctx.base_features.iter().map(|x| state.bounds_unchecked(x.as_slice())).collect())
}

fn conservative_bounds(state: &RidgeState, ctx: &RoundContext<'_>) -> Vec<WeightBound> {
    ctx.conservative_features
        .iter()
        .map(|x| state.bounds_unchecked(x.as_slice()))
        .collect()
}

/// `f(A₀, U_{t,0})` from the conservative arms' own confidence bounds.
pub fn conservative_upper(state: &RidgeState, ctx: &RoundContext<'_>, f: &RewardFunction) -> Result<f64> {
    check_context(state, ctx)?;
    let uppers: Vec<f64> = conservative_bounds(state, ctx).iter().map(|b| b.upper).collect();
    f.evaluate(&uppers)
}

fn base_argmax(state: &RidgeState, ctx: &RoundContext<'_>, cfg: &PolicyConfig) -> Result<(ActionSet, f64)> {
    let uppers: Vec<f64> = base_arm_bounds(state, ctx)?.iter().map(|b| b.upper).collect();
    let best = argmax_super_arm(&cfg.reward_function, &uppers, cfg.max_arms)?;
    let value = cfg.reward_function.evaluate_arms(best.arms(), &uppers)?;
    Ok((best, value))
}

/// The optimistic candidate `B_t`: `A₀` if its value strictly beats the best
/// base super arm under the upper bounds, otherwise that super arm.
pub fn select_candidate(state: &RidgeState, ctx: &RoundContext<'_>, cfg: &PolicyConfig) -> Result<ActionSet> {
    let (best, best_value) = base_argmax(state, ctx, cfg)?;
    let conservative_value = match cfg.mu0 {
        Some(mu0) => mu0,
        None => conservative_upper(state, ctx, &cfg.reward_function)?,
    };
    Ok(if conservative_value > best_value {
        ActionSet::Conservative
    } else {
        best
    })
}

/// `f(B_t, L_{t,t})`; for `B_t = A₀` this is `μ₀` when known.
fn candidate_lower(
    state: &RidgeState,
    ctx: &RoundContext<'_>,
    candidate: &ActionSet,
    cfg: &PolicyConfig,
) -> Result<f64> {
    let f = &cfg.reward_function;
    match (candidate, cfg.mu0) {
        (ActionSet::Conservative, Some(mu0)) => Ok(mu0),
        _ => {
            let lowers: Vec<f64> = ctx
                .features_of(candidate)
                .into_iter()
                .map(|x| state.bounds_unchecked(x.as_slice()).lower)
                .collect();
            f.evaluate(&lowers)
        }
    }
}

/// Known-`μ₀` check: `ψ_t = Σ_{N_{t−1}} f(A_n, L_{t,n}) + f(B_t, L_{t,t}) + d_{t−1}·μ₀ ≥ (1 − α)·t·μ₀`.
pub fn constraint_check_known(
    history: &History,
    state: &RidgeState,
    candidate: &ActionSet,
    ctx: &RoundContext<'_>,
    cfg: &PolicyConfig,
) -> Result<ConstraintCheck> {
    let mu0 = cfg.mu0.ok_or(Error::MissingConservativeReward)?;
    check_context(state, ctx)?;
    let t = (history.rounds() + 1) as f64;
    let candidate_lower = candidate_lower(state, ctx, candidate, cfg)?;
    let psi = history.lower_bound_sum(state, cfg)? + candidate_lower + history.conservative_count() as f64 * mu0;
    let threshold = (1.0 - cfg.alpha) * t * mu0;
    Ok(ConstraintCheck {
        psi,
        threshold,
        pass: psi >= threshold,
        candidate_lower,
    })
}

/// Unknown-`μ₀` check: `μ₀` is replaced by `f(A₀, U_{t,0})` on both sides.
pub fn constraint_check_unknown(
    history: &History,
    state: &RidgeState,
    candidate: &ActionSet,
    ctx: &RoundContext<'_>,
    cfg: &PolicyConfig,
) -> Result<ConstraintCheck> {
    let unknown = PolicyConfig { mu0: None, ..cfg.clone() };
    let u0 = conservative_upper(state, ctx, &cfg.reward_function)?;
    let t = (history.rounds() + 1) as f64;
    let candidate_lower = candidate_lower(state, ctx, candidate, &unknown)?;
    let psi = history.lower_bound_sum(state, &unknown)? + candidate_lower + history.conservative_count() as f64 * u0;
    let threshold = (1.0 - cfg.alpha) * t * u0;
    Ok(ConstraintCheck {
        psi,
        threshold,
        pass: psi >= threshold,
        candidate_lower,
    })
}

fn constraint_check(
    history: &History,
    state: &RidgeState,
    candidate: &ActionSet,
    ctx: &RoundContext<'_>,
    cfg: &PolicyConfig,
) -> Result<ConstraintCheck> {
    if cfg.mu0.is_some() {
        constraint_check_known(history, state, candidate, ctx, cfg)
    } else {
        constraint_check_unknown(history, state, candidate, ctx, cfg)
    }
}

/// Decide the action for round `history.rounds() + 1`.
///
/// C²UCB and AlwaysConservative still evaluate the constraint for auditing
/// but ignore the outcome.
pub fn step(
    kind: PolicyKind,
    state: &RidgeState,
    history: &History,
    ctx: &RoundContext<'_>,
    cfg: &PolicyConfig,
) -> Result<Decision> {
    let (candidate, action_if_pass, forced) = match kind {
        PolicyKind::CcconUcb => {
            let candidate = select_candidate(state, ctx, cfg)?;
            (candidate.clone(), candidate, None)
        }
        PolicyKind::C2Ucb => {
            let (best, _) = base_argmax(state, ctx, cfg)?;
            (best.clone(), best, Some(false))
        }
        PolicyKind::AlwaysConservative => {
            check_context(state, ctx)?;
            (ActionSet::Conservative, ActionSet::Conservative, Some(true))
        }
    };
    let check = constraint_check(history, state, &candidate, ctx, cfg)?;
    let was_conservative = forced.unwrap_or(!check.pass);
    let action = if was_conservative {
        ActionSet::Conservative
    } else {
        action_if_pass
    };
    Ok(Decision {
        action,
        was_conservative,
        psi: check.psi,
        threshold: check.threshold,
        certified: check.pass,
        candidate,
        candidate_lower: check.candidate_lower,
    })
}

/// Apply the feedback of a decision.
///
/// A conservative round only increments `d_t`. Otherwise every played arm's
/// `(x, w)` is ingested and the play is appended to `N_t`. `weights` are the
/// realized weights of `decision.action` in arm order.
pub fn commit(
    state: &mut RidgeState,
    history: &mut History,
    decision: &Decision,
    ctx: &RoundContext<'_>,
    weights: &[f64],
) -> Result<()> {
    if decision.was_conservative {
        history.record_conservative();
        return Ok(());
    }
    let features: Vec<FeatureVector> = ctx.features_of(&decision.action).into_iter().cloned().collect();
    if features.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            actual: weights.len(),
        });
    }
    if !history.is_synced(state) {
        history.resync(state);
    }
    for (x, &w) in features.iter().zip(weights) {
        let update = state.ingest(x, w)?;
        history.absorb(&update, state);
    }
    let round = history.rounds() + 1;
    history.push_play(
        state,
        OptimisticPlay {
            round,
            action: decision.action.clone(),
            features,
            static_lower: decision.candidate_lower,
        },
    );
    Ok(())
}
