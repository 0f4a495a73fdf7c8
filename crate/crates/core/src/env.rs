//! Seeded synthetic linear-reward environments.
//!
//! Each arm's expected weight is `θ*ᵀx`; realized weights add 1-sub-Gaussian
//! noise. Base-arm features are redrawn every round (rejection-sampled so
//! expected weights stay non-negative and `‖x‖² ≤ L`), while the conservative
//! set `A₀` keeps fixed features, so its expected reward `μ₀` is stationary.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::FeatureVector;
use crate::reward::{argmax_super_arm, ActionSet, RewardFunction};
use crate::rng::{stream_rng, Stream};

/// Draws allowed to any single rejection-sampling loop.
pub const DEFAULT_RETRY_BUDGET: u64 = 1_000_000;

/// Observation noise added to expected weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    Uniform { halfwidth: f64 },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Gaussian { sigma: 1.0 }
    }
}

impl NoiseModel {
    /// Both laws must be 1-sub-Gaussian: `σ ≤ 1` or halfwidth `≤ 1`.
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            NoiseModel::Gaussian { sigma } => ("noise.sigma", sigma),
            NoiseModel::Uniform { halfwidth } => ("noise.halfwidth", halfwidth),
        };
        if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
            return Err(invalid(name, format!("must lie in [0, 1] for 1-sub-Gaussian noise, got {v}")));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseModel::Uniform { halfwidth } => {
                if halfwidth == 0.0 {
                    0.0
                } else {
                    rng.random_range(-halfwidth..=halfwidth)
                }
            }
        }
    }
}

/// Per-coordinate law for base-arm (and conservative-arm) features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureLaw {
    /// Independent `U(low, high)` coordinates.
    Uniform { low: f64, high: f64 },
}

impl Default for FeatureLaw {
    fn default() -> Self {
        FeatureLaw::Uniform { low: -1.0, high: 1.0 }
    }
}

impl FeatureLaw {
    fn validate(&self) -> Result<()> {
        let FeatureLaw::Uniform { low, high } = *self;
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(invalid("feature_law", format!("need finite low < high, got [{low}, {high}]")));
        }
        Ok(())
    }

    fn sample(&self, dim: usize, rng: &mut impl Rng) -> FeatureVector {
        let FeatureLaw::Uniform { low, high } = *self;
        FeatureVector::new((0..dim).map(|_| rng.random_range(low..high)).collect())
    }
}

/// Shape of a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of base arms `M`.
    pub num_arms: usize,
    /// Feature dimension `d`.
    pub dim: usize,
    /// Maximum super-arm size `K`.
    pub max_arms: usize,
    /// Bound `S` on `‖θ*‖₂`.
    pub theta_norm_bound: f64,
    /// Bound `L` on `‖x‖₂²`.
    pub feature_norm_bound: f64,
    /// Size of the conservative set `A₀` (at most `K`).
    pub num_conservative: usize,
    /// Each conservative arm's expected weight lies between the weights of
    /// these two ranks (1 = best) in a reference draw of base arms.
    pub conservative_rank_low: usize,
    pub conservative_rank_high: usize,
    pub noise: NoiseModel,
    pub feature_law: FeatureLaw,
    pub reward_function: RewardFunction,
    pub retry_budget: u64,
}

impl GeneratorConfig {
    /// Defaults for `M` arms in dimension `d` with super arms of size ≤ K:
    /// `U(−1,1)` features, `L = d`, `S = √d`, `N(0,1)` noise, `|A₀| = K`,
    /// conservative arms between the 9th and 8th best reference weights.
    pub fn new(num_arms: usize, dim: usize, max_arms: usize) -> Self {
        Self {
            num_arms,
            dim,
            max_arms,
            theta_norm_bound: (dim as f64).sqrt(),
            feature_norm_bound: dim as f64,
            num_conservative: max_arms,
            conservative_rank_low: 9,
            conservative_rank_high: 8,
            noise: NoiseModel::default(),
            feature_law: FeatureLaw::default(),
            reward_function: RewardFunction::LinearSum,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_arms == 0 {
            return Err(invalid("M", "must be positive"));
        }
        if self.dim == 0 {
            return Err(invalid("d", "must be positive"));
        }
        if self.max_arms == 0 || self.max_arms > self.num_arms {
            return Err(invalid("K", format!("must lie in [1, M={}], got {}", self.num_arms, self.max_arms)));
        }
        if !(self.theta_norm_bound.is_finite() && self.theta_norm_bound > 0.0) {
            return Err(invalid("S", "must be finite and > 0"));
        }
        if !(self.feature_norm_bound.is_finite() && self.feature_norm_bound > 0.0) {
            return Err(invalid("L", "must be finite and > 0"));
        }
        if self.num_conservative == 0 || self.num_conservative > self.max_arms {
            return Err(invalid(
                "num_conservative",
                format!("must lie in [1, K={}], got {}", self.max_arms, self.num_conservative),
            ));
        }
        let (lo, hi) = (self.conservative_rank_low, self.conservative_rank_high);
        if hi == 0 || lo < hi || lo > self.num_arms {
            return Err(invalid(
                "conservative_rank",
                format!("need 1 ≤ high ({hi}) ≤ low ({lo}) ≤ M ({})", self.num_arms),
            ));
        }
        self.noise.validate()?;
        self.feature_law.validate()?;
        self.reward_function.validate()?;
        Ok(())
    }
}

/// A fully generated environment; immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentInstance {
    pub config: GeneratorConfig,
    pub seed: u64,
    pub theta_star: Vec<f64>,
    pub conservative_features: Vec<FeatureVector>,
    /// `[low, high]` bracket of expected weights the conservative arms were placed in.
    pub conservative_bracket: (f64, f64),
    /// True expected reward `μ₀ = f(A₀, w*₀)` of the conservative set.
    pub mu0_true: f64,
}

/// Features seen in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundContext<'a> {
    pub t: usize,
    pub base_features: Vec<FeatureVector>,
    pub conservative_features: &'a [FeatureVector],
}

impl RoundContext<'_> {
    pub fn num_arms(&self) -> usize {
        self.base_features.len()
    }

    /// Features of the arms in `action`.
    pub fn features_of(&self, action: &ActionSet) -> Vec<&FeatureVector> {
        match action {
            ActionSet::Conservative => self.conservative_features.iter().collect(),
            ActionSet::Base(arms) => arms.iter().map(|&e| &self.base_features[e]).collect(),
        }
    }
}

/// Ground truth for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleQuantities {
    pub best_action: ActionSet,
    pub best_value: f64,
    /// `f(A*_t, w*_t) − μ₀` (non-negative since `A₀` is feasible).
    pub gap_to_mu0: f64,
}

fn sample_admissible(
    law: &FeatureLaw,
    dim: usize,
    norm_bound: f64,
    budget: u64,
    what: &'static str,
    rng: &mut impl Rng,
    accept: impl Fn(&FeatureVector) -> bool,
) -> Result<FeatureVector> {
    for _ in 0..budget {
        let x = law.sample(dim, rng);
        if x.norm_squared() <= norm_bound && accept(&x) {
            return Ok(x);
        }
    }
    Err(Error::RetryBudgetExhausted { what, budget })
}

impl EnvironmentInstance {
    /// Draw `θ* ~ N(0, I_d)`, shrink it to `‖θ*‖ ≤ S`, then place the conservative arms.
    pub fn generate(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, Stream::Instance, 0);
        let mut theta: Vec<f64> = (0..config.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > config.theta_norm_bound {
            let scale = config.theta_norm_bound / norm;
            theta.iter_mut().for_each(|v| *v *= scale);
        }
        Self::place_conservative(config, seed, theta, &mut rng)
    }

    /// Build an instance around a given `θ*` (must satisfy `‖θ*‖ ≤ S`).
    pub fn with_theta(config: GeneratorConfig, theta_star: Vec<f64>, seed: u64) -> Result<Self> {
        config.validate()?;
        if theta_star.len() != config.dim {
            return Err(Error::DimensionMismatch {
                expected: config.dim,
                actual: theta_star.len(),
            });
        }
        let norm = theta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= config.theta_norm_bound) {
            return Err(invalid("theta_star", format!("norm {norm} exceeds S = {}", config.theta_norm_bound)));
        }
        let mut rng = stream_rng(seed, Stream::Instance, 0);
        Self::place_conservative(config, seed, theta_star, &mut rng)
    }

    fn place_conservative(
        config: GeneratorConfig,
        seed: u64,
        theta_star: Vec<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let positive = |x: &FeatureVector| x.dot(&theta_star) >= 0.0;
        let mut reference = Vec::with_capacity(config.num_arms);
        for _ in 0..config.num_arms {
            let x = sample_admissible(
                &config.feature_law,
                config.dim,
                config.feature_norm_bound,
                config.retry_budget,
                "drawing reference base arms",
                rng,
                positive,
            )?;
            reference.push(x.dot(&theta_star));
        }
        reference.sort_by(|a, b| b.total_cmp(a));
        let bracket = (
            reference[config.conservative_rank_low - 1],
            reference[config.conservative_rank_high - 1],
        );
        let in_bracket = |x: &FeatureVector| {
            let w = x.dot(&theta_star);
            w >= bracket.0 && w <= bracket.1
        };
        let mut conservative_features = Vec::with_capacity(config.num_conservative);
        for _ in 0..config.num_conservative {
            conservative_features.push(sample_admissible(
                &config.feature_law,
                config.dim,
                config.feature_norm_bound,
                config.retry_budget,
                "placing conservative arms in the reference bracket",
                rng,
                in_bracket,
            )?);
        }
        let conservative_weights: Vec<f64> = conservative_features.iter().map(|x| x.dot(&theta_star)).collect();
        let mu0_true = config.reward_function.evaluate(&conservative_weights)?;
        Ok(Self {
            config,
            seed,
            theta_star,
            conservative_features,
            conservative_bracket: bracket,
            mu0_true,
        })
    }

    pub fn reward_function(&self) -> &RewardFunction {
        &self.config.reward_function
    }

    /// `θ*ᵀx`
    pub fn expected_weight(&self, x: &FeatureVector) -> f64 {
        x.dot(&self.theta_star)
    }

    /// Fresh base-arm features for round `t`, drawn from `rng`.
    pub fn sample_round_context(&self, t: usize, rng: &mut impl Rng) -> Result<RoundContext<'_>> {
        let cfg = &self.config;
        let positive = |x: &FeatureVector| self.expected_weight(x) >= 0.0;
        let base_features = (0..cfg.num_arms)
            .map(|_| {
                sample_admissible(
                    &cfg.feature_law,
                    cfg.dim,
                    cfg.feature_norm_bound,
                    cfg.retry_budget,
                    "drawing round features",
                    rng,
                    positive,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RoundContext {
            t,
            base_features,
            conservative_features: &self.conservative_features,
        })
    }

    /// Expected weights `w*_{t,e}` of every base arm.
    pub fn expected_base_weights(&self, ctx: &RoundContext<'_>) -> Vec<f64> {
        ctx.base_features.iter().map(|x| self.expected_weight(x)).collect()
    }

    /// Expected weights of the arms in `action`, in arm order.
    pub fn expected_weights_of(&self, ctx: &RoundContext<'_>, action: &ActionSet) -> Vec<f64> {
        ctx.features_of(action).into_iter().map(|x| self.expected_weight(x)).collect()
    }

    /// `f(A, w*_t)`
    pub fn expected_reward(&self, ctx: &RoundContext<'_>, action: &ActionSet) -> Result<f64> {
        match action {
            ActionSet::Conservative => Ok(self.mu0_true),
            ActionSet::Base(_) => self.reward_function().evaluate(&self.expected_weights_of(ctx, action)),
        }
    }

    /// Semi-bandit feedback: `w_e = θ*ᵀx_e + ε_e` for the played arms only.
    pub fn realize_weights(&self, ctx: &RoundContext<'_>, action: &ActionSet, rng: &mut impl Rng) -> Vec<f64> {
        ctx.features_of(action)
            .into_iter()
            .map(|x| self.expected_weight(x) + self.config.noise.sample(rng))
            .collect()
    }

    /// True optimum over `Θ^K = {A₀} ∪ {A : 1 ≤ |A| ≤ K}`.
    pub fn oracle_quantities(&self, ctx: &RoundContext<'_>) -> Result<OracleQuantities> {
        let f = self.reward_function();
        let weights = self.expected_base_weights(ctx);
        let best_base = argmax_super_arm(f, &weights, self.config.max_arms)?;
        let base_value = f.evaluate_arms(best_base.arms(), &weights)?;
        let (best_action, best_value) = if self.mu0_true > base_value {
            (ActionSet::Conservative, self.mu0_true)
        } else {
            (best_base, base_value)
        };
        Ok(OracleQuantities {
            best_action,
            best_value,
            gap_to_mu0: best_value - self.mu0_true,
        })
    }

    /// JSON snapshot for replay.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::brute_force_argmax;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig::new(20, 5, 2)
    }

    #[test]
    fn generation_is_deterministic() {
        let a = EnvironmentInstance::generate(small_config(), 42).unwrap();
        let b = EnvironmentInstance::generate(small_config(), 42).unwrap();
        assert_eq!(a, b);
        let c = EnvironmentInstance::generate(small_config(), 43).unwrap();
        assert_ne!(a.theta_star, c.theta_star);
    }

    #[test]
    fn generated_instance_respects_bounds() {
        for seed in 0..20 {
            let inst = EnvironmentInstance::generate(small_config(), seed).unwrap();
            let norm = inst.theta_star.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= inst.config.theta_norm_bound + 1e-12);
            assert_eq!(inst.conservative_features.len(), 2);
            let (lo, hi) = inst.conservative_bracket;
            assert!(lo <= hi);
            let mut total = 0.0;
            for x in &inst.conservative_features {
                assert!(x.norm_squared() <= inst.config.feature_norm_bound);
                let w = inst.expected_weight(x);
                assert!(w >= lo && w <= hi);
                total += w;
            }
            assert_eq!(inst.mu0_true, total);
        }
    }

    #[test]
    fn paper_scale_shape() {
        let inst = EnvironmentInstance::generate(GeneratorConfig::new(100, 10, 2), 1).unwrap();
        assert_eq!(inst.theta_star.len(), 10);
        let ctx = inst.sample_round_context(1, &mut stream_rng(1, Stream::Context, 1)).unwrap();
        assert_eq!(ctx.num_arms(), 100);
        assert!(ctx.base_features.iter().all(|x| x.dim() == 10));
    }

    #[test]
    fn positive_theta_on_positive_law_needs_no_rejection() {
        let mut cfg = GeneratorConfig::new(10, 1, 1);
        cfg.feature_law = FeatureLaw::Uniform { low: 0.0, high: 1.0 };
        cfg.theta_norm_bound = 1.0;
        cfg.feature_norm_bound = 1.0;
        cfg.num_conservative = 1;
        let inst = EnvironmentInstance::with_theta(cfg, vec![1.0], 3).unwrap();
        let ctx = inst.sample_round_context(1, &mut stream_rng(3, Stream::Context, 1)).unwrap();
        for x in &ctx.base_features {
            assert_eq!(inst.expected_weight(x), x.as_slice()[0]);
        }
    }

    #[test]
    fn contexts_reproduce_from_rng_state() {
        let inst = EnvironmentInstance::generate(small_config(), 5).unwrap();
        let a = inst.sample_round_context(3, &mut stream_rng(9, Stream::Context, 3)).unwrap();
        let b = inst.sample_round_context(3, &mut stream_rng(9, Stream::Context, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_features_satisfy_constraints() {
        let inst = EnvironmentInstance::generate(small_config(), 11).unwrap();
        let mut rng = stream_rng(11, Stream::Context, 0);
        let mut count = 0;
        while count < 100_000 {
            let ctx = inst.sample_round_context(count, &mut rng).unwrap();
            for x in &ctx.base_features {
                assert!(x.norm_squared() <= inst.config.feature_norm_bound);
                assert!(inst.expected_weight(x) >= 0.0);
            }
            count += ctx.num_arms();
        }
    }

    #[test]
    fn noiseless_realization_is_exact() {
        let mut cfg = small_config();
        cfg.noise = NoiseModel::Gaussian { sigma: 0.0 };
        let inst = EnvironmentInstance::generate(cfg, 2).unwrap();
        let mut rng = stream_rng(2, Stream::Noise, 1);
        let ctx = inst.sample_round_context(1, &mut rng).unwrap();
        let action = ActionSet::Base(vec![1, 4]);
        assert_eq!(inst.realize_weights(&ctx, &action, &mut rng), inst.expected_weights_of(&ctx, &action));
        let w0 = inst.realize_weights(&ctx, &ActionSet::Conservative, &mut rng);
        let expected: Vec<f64> = inst.conservative_features.iter().map(|x| inst.expected_weight(x)).collect();
        assert_eq!(w0, expected);
    }

    #[test]
    fn gaussian_noise_mean_converges() {
        let inst = EnvironmentInstance::generate(small_config(), 8).unwrap();
        let ctx = inst.sample_round_context(1, &mut stream_rng(8, Stream::Context, 1)).unwrap();
        let action = ActionSet::Base(vec![0]);
        let truth = inst.expected_weights_of(&ctx, &action)[0];
        let mut rng = stream_rng(8, Stream::Noise, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| inst.realize_weights(&ctx, &action, &mut rng)[0]).sum::<f64>() / n as f64;
        assert!((mean - truth).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn oracle_matches_exhaustive_search() {
        let mut cfg = GeneratorConfig::new(12, 4, 3);
        cfg.num_conservative = 2;
        for seed in 0..30 {
            let inst = EnvironmentInstance::generate(cfg.clone(), seed).unwrap();
            let ctx = inst.sample_round_context(1, &mut stream_rng(seed, Stream::Context, 1)).unwrap();
            let w = inst.expected_base_weights(&ctx);
            let f = inst.reward_function();
            let brute = brute_force_argmax(f, &w, 3).unwrap();
            let brute_value = f.evaluate_arms(brute.arms(), &w).unwrap().max(inst.mu0_true);
            let oracle = inst.oracle_quantities(&ctx).unwrap();
            assert_eq!(oracle.best_value, brute_value);
            assert!(oracle.gap_to_mu0 >= 0.0);
        }
    }

    #[test]
    fn zero_weights_have_zero_gap() {
        let mut cfg = GeneratorConfig::new(4, 2, 2);
        cfg.conservative_rank_low = 3;
        cfg.conservative_rank_high = 2;
        let inst = EnvironmentInstance::with_theta(cfg, vec![0.0, 0.0], 1).unwrap();
        assert_eq!(inst.mu0_true, 0.0);
        let ctx = inst.sample_round_context(1, &mut stream_rng(1, Stream::Context, 1)).unwrap();
        assert_eq!(inst.oracle_quantities(&ctx).unwrap().gap_to_mu0, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config();
        cfg.noise = NoiseModel::Gaussian { sigma: 1.5 };
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.num_conservative = 3;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.conservative_rank_low = 21;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config();
        cfg.max_arms = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn impossible_bracket_exhausts_budget() {
        let mut cfg = small_config();
        cfg.feature_norm_bound = 1e-9;
        cfg.retry_budget = 1000;
        assert!(matches!(
            EnvironmentInstance::generate(cfg, 1),
            Err(Error::RetryBudgetExhausted { .. })
        ));
    }

    #[test]
    fn snapshot_round_trips() {
        let inst = EnvironmentInstance::generate(small_config(), 77).unwrap();
        let back = EnvironmentInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }
}
