//! Episode runner, metrics and runtime probes.
//!
//! [`run_episode`] drives environment → policy → feedback for `T` rounds and
//! returns an [`Episode`]: the [`RunLog`] (one [`RunRecord`] per round) plus a
//! [`StateTrace`] of the quantities the probes need. Probes compare both
//! sides of the analytic inequalities numerically and report rather than
//! panic.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentInstance;
use crate::error::{invalid, Error, Result};
use crate::linalg::{RidgeState, DEFAULT_REFRESH_INTERVAL};
use crate::policy::{commit, step, History, PolicyConfig, PolicyKind, RecomputeMode};
use crate::reward::ActionSet;
use crate::rng::{stream_rng, Stream};

/// Absolute slack allowed by the inequality probes.
pub const PROBE_TOLERANCE: f64 = 1e-9;

/// Horizons above this check the O(n·K·d) probes only every
/// [`SPARSE_PROBE_CADENCE`] rounds.
pub const DENSE_PROBE_HORIZON: usize = 10_000;
pub const SPARSE_PROBE_CADENCE: usize = 50;

/// Minimum number of episodes for the coverage probe.
pub const MIN_COVERAGE_EPISODES: usize = 100;

/// Learner parameters for one episode. Dimensions, `K`, `S`, `L` and the
/// reward function come from the environment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub alpha: f64,
    /// Give the learner the true `μ₀` (known-reward variant).
    pub known_mu0: bool,
    /// Ridge regularizer; `None` uses the feature bound `L`.
    pub lambda: Option<f64>,
    pub delta: f64,
    pub recompute_mode: RecomputeMode,
    pub refresh_interval: usize,
    pub horizon: usize,
    /// Rounds between norm-sum evaluations; `None` picks 1 up to
    /// [`DENSE_PROBE_HORIZON`] and [`SPARSE_PROBE_CADENCE`] beyond.
    pub probe_cadence: Option<usize>,
    /// Track whether `θ*ᵀx` stays inside every played arm's interval.
    pub track_coverage: bool,
    /// Multiplier on `H` used only by the coverage tracker.
    pub coverage_radius_scale: f64,
}

impl EpisodeConfig {
    /// Defaults: known `μ₀`, `λ = L`, `δ = 0.1`, fresh recomputation.
    pub fn new(alpha: f64, horizon: usize) -> Self {
        Self {
            alpha,
            known_mu0: true,
            lambda: None,
            delta: 0.1,
            recompute_mode: RecomputeMode::Fresh,
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
            horizon,
            probe_cadence: None,
            track_coverage: true,
            coverage_radius_scale: 1.0,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn unknown_mu0(mut self) -> Self {
        self.known_mu0 = false;
        self
    }

    pub fn cadence(&self) -> usize {
        self.probe_cadence.unwrap_or(if self.horizon <= DENSE_PROBE_HORIZON {
            1
        } else {
            SPARSE_PROBE_CADENCE
        })
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(invalid("T", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if self.probe_cadence == Some(0) {
            return Err(invalid("probe_cadence", "must be positive"));
        }
        if !(self.coverage_radius_scale.is_finite() && self.coverage_radius_scale > 0.0) {
            return Err(invalid("coverage_radius_scale", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn lambda_for(&self, instance: &EnvironmentInstance) -> f64 {
        self.lambda.unwrap_or(instance.config.feature_norm_bound)
    }

    /// Policy parameters for this episode on `instance`.
    pub fn policy_config(&self, instance: &EnvironmentInstance) -> PolicyConfig {
        PolicyConfig {
            alpha: self.alpha,
            max_arms: instance.config.max_arms,
            mu0: self.known_mu0.then_some(instance.mu0_true),
            reward_function: instance.config.reward_function,
            recompute_mode: self.recompute_mode,
        }
    }
}

/// Episode metadata; everything the metrics and probes need besides the records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub instance_seed: u64,
    pub episode_seed: u64,
    pub policy: PolicyKind,
    pub config: EpisodeConfig,
    /// The regularizer actually used.
    pub lambda: f64,
    pub mu0_true: f64,
    pub num_arms: usize,
    pub dim: usize,
    pub max_arms: usize,
    pub theta_norm_bound: f64,
    pub feature_norm_bound: f64,
    /// Lipschitz constant `P(K)` of the reward function.
    pub lipschitz: f64,
}

impl RunMeta {
    /// Human-readable policy label, e.g. `ccconucb_known(alpha=0.2)`.
    pub fn label(&self) -> String {
        policy_label(self.policy, self.config.known_mu0, self.config.alpha)
    }
}

pub fn policy_label(kind: PolicyKind, known_mu0: bool, alpha: f64) -> String {
    match kind {
        PolicyKind::CcconUcb if known_mu0 => format!("ccconucb_known(alpha={alpha})"),
        PolicyKind::CcconUcb => format!("ccconucb_unknown(alpha={alpha})"),
        other => other.to_string(),
    }
}

/// One round of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub t: usize,
    pub action: ActionSet,
    pub was_conservative: bool,
    /// Realized weights of the played arms.
    pub weights: Vec<f64>,
    /// `f(A_t, w*_t)`
    pub expected_reward: f64,
    /// `f(A*_t, w*_t)`
    pub optimal_reward: f64,
    pub psi: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub meta: RunMeta,
    pub records: Vec<RunRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LogLine {
    Meta(RunMeta),
    Round(RunRecord),
}

impl RunLog {
    pub fn horizon(&self) -> usize {
        self.records.len()
    }

    /// Write as NDJSON: one `meta` line, then one `round` line per record.
    pub fn write_ndjson(&self, mut out: impl Write) -> io::Result<()> {
        serde_json::to_writer(&mut out, &LogLine::Meta(self.meta.clone()))?;
        out.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut out, &LogLine::Round(r.clone()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_ndjson(input: impl BufRead) -> io::Result<Self> {
        let mut meta = None;
        let mut records = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(&line)? {
                LogLine::Meta(m) => meta = Some(m),
                LogLine::Round(r) => records.push(r),
            }
        }
        let meta = meta.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "missing meta line"))?;
        Ok(Self { meta, records })
    }
}

/// Learner state after each round (row 0 is the initial state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub optimistic: usize,
    pub conservative: usize,
    pub log_det_v: f64,
    pub radius: f64,
    /// `Σ_{n∈N_t} Σ_{e∈A_n} ‖x_{n,e}‖²_{V_t⁻¹}`, on probe rounds.
    pub norm_sum: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateTrace {
    pub rows: Vec<TraceRow>,
}

/// A completed episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub log: RunLog,
    pub trace: StateTrace,
    /// `θ*ᵀx` stayed inside `[θ̂ᵀx ∓ H‖x‖_{V⁻¹}]` for every played arm at every round.
    pub coverage_held: bool,
    /// Unknown-`μ₀` rounds where `d_{t−1} ≥ (1 − α)t`, outside the range the
    /// safety argument for that variant covers.
    pub unknown_check_outside_validity: usize,
}

fn trace_row(t: usize, state: &RidgeState, history: &History, norm_sum: Option<f64>) -> TraceRow {
    TraceRow {
        t,
        optimistic: history.optimistic_count(),
        conservative: history.conservative_count(),
        log_det_v: state.log_det_v(),
        radius: state.radius(),
        norm_sum,
    }
}

/// Run one episode of `kind` on `instance`.
///
/// Contexts for round `t` come from stream `(episode_seed, Context, t)` and
/// noise from `(episode_seed, Noise, t)`, so different policies run on the
/// same `episode_seed` see identical contexts.
pub fn run_episode(
    instance: &EnvironmentInstance,
    kind: PolicyKind,
    config: &EpisodeConfig,
    episode_seed: u64,
) -> Result<Episode> {
    config.validate()?;
    let pcfg = config.policy_config(instance);
    pcfg.validate()?;
    let icfg = &instance.config;
    let lambda = config.lambda_for(instance);
    if lambda < icfg.feature_norm_bound {
        warn!(
            "lambda = {lambda} is below the feature bound L = {}; the regret guarantees assume lambda >= L",
            icfg.feature_norm_bound
        );
    }
    let mut state = RidgeState::new(icfg.dim, lambda, icfg.theta_norm_bound, config.delta)?
        .with_refresh_interval(config.refresh_interval);
    let mut history = History::new();
    let cadence = config.cadence();
    let scale = config.coverage_radius_scale;
    let theta = &instance.theta_star;

    let mut records = Vec::with_capacity(config.horizon);
    let mut trace = StateTrace {
        rows: vec![trace_row(0, &state, &history, Some(0.0))],
    };
    let mut coverage_held = true;
    let mut outside_validity = 0;

    for t in 1..=config.horizon {
        let ctx = instance.sample_round_context(t, &mut stream_rng(episode_seed, Stream::Context, t as u64))?;
        let oracle = instance.oracle_quantities(&ctx)?;
        let decision = step(kind, &state, &history, &ctx, &pcfg)?;

        if kind == PolicyKind::CcconUcb
            && !config.known_mu0
            && history.conservative_count() as f64 >= (1.0 - config.alpha) * t as f64
        {
            outside_validity += 1;
            debug!("round {t}: unknown-mu0 check applied with d_(t-1) >= (1 - alpha) t");
        }

        let weights = instance.realize_weights(&ctx, &decision.action, &mut stream_rng(episode_seed, Stream::Noise, t as u64));
        let expected_reward = instance.expected_reward(&ctx, &decision.action)?;

        let ingesting = !decision.was_conservative;
        if ingesting && config.track_coverage && coverage_held {
            for x in ctx.features_of(&decision.action) {
                let b = state.weight_bounds(x)?;
                if (instance.expected_weight(x) - b.center).abs() > scale * b.halfwidth {
                    coverage_held = false;
                }
            }
        }

        commit(&mut state, &mut history, &decision, &ctx, &weights)?;

        if ingesting && config.track_coverage && coverage_held {
            history.for_each_bound(&state, |_, x, b| {
                if (x.dot(theta) - b.center).abs() > scale * b.halfwidth {
                    coverage_held = false;
                }
            });
        }

        let norm_sum = (t % cadence == 0 || t == config.horizon).then(|| history.norm_sum(&state));
        trace.rows.push(trace_row(t, &state, &history, norm_sum));
        records.push(RunRecord {
            t,
            action: decision.action,
            was_conservative: decision.was_conservative,
            weights,
            expected_reward,
            optimal_reward: oracle.best_value,
            psi: decision.psi,
            threshold: decision.threshold,
        });
    }

    Ok(Episode {
        log: RunLog {
            meta: RunMeta {
                instance_seed: instance.seed,
                episode_seed,
                policy: kind,
                config: config.clone(),
                lambda,
                mu0_true: instance.mu0_true,
                num_arms: icfg.num_arms,
                dim: icfg.dim,
                max_arms: icfg.max_arms,
                theta_norm_bound: icfg.theta_norm_bound,
                feature_norm_bound: icfg.feature_norm_bound,
                lipschitz: icfg.reward_function.lipschitz_constant(icfg.max_arms),
            },
            records,
        },
        trace,
        coverage_held,
        unknown_check_outside_validity: outside_validity,
    })
}

/// One unit of work for [`run_batch`].
#[derive(Debug, Clone)]
pub struct Job {
    pub instance: Arc<EnvironmentInstance>,
    pub kind: PolicyKind,
    pub config: EpisodeConfig,
    pub episode_seed: u64,
}

/// Run jobs on `workers` threads; results come back in job order.
pub fn run_batch(jobs: &[Job], workers: usize) -> Vec<Result<Episode>> {
    let run = |job: &Job| run_episode(&job.instance, job.kind, &job.config, job.episode_seed);
    if workers <= 1 {
        return jobs.iter().map(run).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
        Err(e) => {
            warn!("could not build a {workers}-thread pool ({e}); running sequentially");
            jobs.iter().map(run).collect()
        }
    }
}

/// Cumulative pseudo-regret `r_t = Σ_{s≤t} [f(A*_s, w*_s) − f(A_s, w*_s)]`.
pub fn pseudo_regret(log: &RunLog) -> Vec<f64> {
    log.records
        .iter()
        .scan(0.0, |acc, r| {
            *acc += r.optimal_reward - r.expected_reward;
            Some(*acc)
        })
        .collect()
}

/// Rounds `t` where `Σ_{s≤t} f(A_s, w*_s) < (1 − α)·t·μ₀`.
pub fn constraint_violations(log: &RunLog, alpha: f64, mu0: f64) -> usize {
    let mut total = 0.0;
    log.records
        .iter()
        .filter(|r| {
            total += r.expected_reward;
            total < (1.0 - alpha) * r.t as f64 * mu0
        })
        .count()
}

/// Like [`constraint_violations`] but with realized rewards `f(A_s, w_s)` on
/// the left and realized conservative rewards on the right-hand baseline.
pub fn realized_constraint_violations(log: &RunLog, alpha: f64, mu0: f64, f: &crate::reward::RewardFunction) -> usize {
    let mut total = 0.0;
    log.records
        .iter()
        .filter(|r| {
            total += f.evaluate(&r.weights).unwrap_or(0.0);
            total < (1.0 - alpha) * r.t as f64 * mu0
        })
        .count()
}

/// `(n_T, d_T)`: optimistic and conservative round counts.
pub fn selection_counts(log: &RunLog) -> (usize, usize) {
    let d = log.records.iter().filter(|r| r.was_conservative).count();
    (log.records.len() - d, d)
}

/// First round at which the cumulative expected reward of `ccc` strictly
/// exceeds that of `conservative`.
pub fn endurance_time(ccc: &RunLog, conservative: &RunLog) -> Result<Option<usize>> {
    if ccc.horizon() != conservative.horizon() {
        return Err(Error::Incompatible(format!(
            "horizon mismatch: {} vs {}",
            ccc.horizon(),
            conservative.horizon()
        )));
    }
    let (mut a, mut b) = (0.0, 0.0);
    for (x, y) in ccc.records.iter().zip(&conservative.records) {
        a += x.expected_reward;
        b += y.expected_reward;
        if a > b {
            return Ok(Some(x.t));
        }
    }
    Ok(None)
}

/// Outcome of one runtime probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub name: String,
    pub rounds_checked: usize,
    /// Largest `lhs − rhs` seen; `None` when nothing was checked.
    pub worst_excess: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ProbeResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            rounds_checked: 0,
            worst_excess: None,
            tolerance: PROBE_TOLERANCE,
            pass: true,
            notes: Vec::new(),
        }
    }

    fn observe(&mut self, lhs: f64, rhs: f64) {
        let excess = lhs - rhs;
        self.rounds_checked += 1;
        self.worst_excess = Some(self.worst_excess.map_or(excess, |w| w.max(excess)));
        if !(excess <= self.tolerance) {
            self.pass = false;
        }
    }

    fn observe_strict(&mut self, lhs: f64, rhs: f64) {
        self.observe(lhs, rhs);
        if !(lhs - rhs < self.tolerance) {
            self.pass = false;
        }
    }

    /// Smallest `rhs − lhs` seen.
    pub fn min_slack(&self) -> Option<f64> {
        self.worst_excess.map(|w| -w)
    }

    /// Fold another result for the same probe into this one.
    pub fn merge(&mut self, other: &ProbeResult) {
        self.rounds_checked += other.rounds_checked;
        self.worst_excess = match (self.worst_excess, other.worst_excess) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.pass &= other.pass;
        self.notes.extend(other.notes.iter().cloned());
    }
}

/// A set of named probe results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probes: Vec<ProbeResult>,
}

impl ProbeReport {
    pub fn all_pass(&self) -> bool {
        self.probes.iter().all(|p| p.pass)
    }

    pub fn get(&self, name: &str) -> Option<&ProbeResult> {
        self.probes.iter().find(|p| p.name == name)
    }

    /// Add `result`, merging with an existing entry of the same name.
    pub fn absorb(&mut self, result: ProbeResult) {
        match self.probes.iter_mut().find(|p| p.name == result.name) {
            Some(p) => p.merge(&result),
            None => self.probes.push(result),
        }
    }
}

pub const PROBE_DETERMINANT: &str = "determinant_bound";
pub const PROBE_NORM_SUMS: &str = "norm_sum_bounds";
pub const PROBE_CONSERVATIVE_ROUNDS: &str = "conservative_round_bound";
pub const PROBE_COVERAGE: &str = "confidence_coverage";

/// `log det V_t ≤ d·log(λ + n_t·K·L/d)` at every traced round.
pub fn probe_lemma2(log: &RunLog, trace: &StateTrace) -> ProbeResult {
    let m = &log.meta;
    let d = m.dim as f64;
    let (lambda, k, l) = (m.lambda, m.max_arms as f64, m.feature_norm_bound);
    let mut result = ProbeResult::new(PROBE_DETERMINANT);
    for row in &trace.rows {
        result.observe(row.log_det_v, d * (lambda + row.optimistic as f64 * k * l / d).ln());
    }
    result
}

/// The two upper bounds on `Σ_{n∈N_t} Σ_{e∈A_n} ‖x_{n,e}‖²_{V_t⁻¹}` for `N = n_t·K`:
/// `N·[1 − (λ/(λ + N·L/d))^{d/N}]` and `N·L·d/(λd + N·L)`.
pub fn norm_sum_bounds(optimistic: usize, max_arms: usize, dim: usize, lambda: f64, l: f64) -> (f64, f64) {
    if optimistic == 0 {
        return (0.0, 0.0);
    }
    let n = (optimistic * max_arms) as f64;
    let d = dim as f64;
    let ratio = lambda / (lambda + n * l / d);
    let det_form = -n * ((d / n) * ratio.ln()).exp_m1();
    let trace_form = n * l * d / (lambda * d + n * l);
    (det_form, trace_form)
}

/// Norm sum ≤ min of the two bounds at every probed round; also counts rounds
/// where the tighter bound disagrees with the `n_t·K ≤ d` rule of thumb.
pub fn probe_norm_sums(log: &RunLog, trace: &StateTrace) -> ProbeResult {
    let m = &log.meta;
    let mut result = ProbeResult::new(PROBE_NORM_SUMS);
    let mut mismatches = 0;
    for row in &trace.rows {
        let Some(sum) = row.norm_sum else { continue };
        let (det_form, trace_form) =
            norm_sum_bounds(row.optimistic, m.max_arms, m.dim, m.lambda, m.feature_norm_bound);
        result.observe(sum, det_form.min(trace_form));
        let first_tighter = det_form <= trace_form;
        let rule = row.optimistic * m.max_arms <= m.dim;
        if row.optimistic > 0 && first_tighter != rule {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        result
            .notes
            .push(format!("{mismatches} rounds where the tighter bound contradicts the n_t*K <= d rule"));
    }
    result
}

/// `C_t = √λ·S + √(2·log(1/δ) + d·log(1 + K·L·t/(λ·d)))`
pub fn closed_form_radius(meta: &RunMeta, t: usize) -> f64 {
    let c = &meta.config;
    let d = meta.dim as f64;
    let inner = 2.0 * (1.0 / c.delta).ln()
        + d * (1.0 + meta.max_arms as f64 * meta.feature_norm_bound * t as f64 / (meta.lambda * d)).ln();
    meta.lambda.sqrt() * meta.theta_norm_bound + inner.sqrt()
}

/// The bound on conservative-round counts for the known-`μ₀` variant, checked
/// at every conservative round `t` on probe rows:
///
/// ```text
/// d_{t−1} < ([1 − (1 + n)α]μ₀ − n·Δ_min)/(αμ₀) + 2·P·C_{t−1}·√(n·Σ‖x‖²_{V⁻¹})/(αμ₀)
/// ```
///
/// where `n = n_{t−1} = n_t` and `V = V_{t−1} = V_t` (a conservative round
/// changes neither), and `Δ_min` is the smallest per-round gap
/// `f(A*_t, w*_t) − μ₀` in the episode. Rounds where the same inequality fails
/// with `d_t` and `C_t` in place of `d_{t−1}` and `C_{t−1}` are counted in a note.
/// Skipped (zero rounds checked) for other policies or when `μ₀ ≤ 0`.
pub fn probe_conservative_rounds(log: &RunLog, trace: &StateTrace) -> ProbeResult {
    let m = &log.meta;
    let mut result = ProbeResult::new(PROBE_CONSERVATIVE_ROUNDS);
    if m.policy != PolicyKind::CcconUcb || !m.config.known_mu0 || !(m.mu0_true > 0.0) {
        return result;
    }
    let mu0 = m.mu0_true;
    let alpha = m.config.alpha;
    let delta_min = log
        .records
        .iter()
        .map(|r| r.optimal_reward - mu0)
        .fold(f64::INFINITY, f64::min);
    let rhs = |n: f64, sum: f64, t: usize| {
        ((1.0 - (1.0 + n) * alpha) * mu0 - n * delta_min) / (alpha * mu0)
            + 2.0 * m.lipschitz * closed_form_radius(m, t) * (n * sum).sqrt() / (alpha * mu0)
    };
    let mut current_round_misses = 0;
    for (row, rec) in trace.rows.iter().skip(1).zip(&log.records) {
        if !rec.was_conservative {
            continue;
        }
        let Some(sum) = row.norm_sum else { continue };
        let n = row.optimistic as f64;
        let d_t = row.conservative as f64;
        result.observe_strict(d_t - 1.0, rhs(n, sum, row.t - 1));
        if d_t - rhs(n, sum, row.t) >= PROBE_TOLERANCE {
            current_round_misses += 1;
        }
    }
    if current_round_misses > 0 {
        result.notes.push(format!(
            "{current_round_misses} conservative rounds exceed the bound when d_t and C_t replace d_(t-1) and C_(t-1)"
        ));
    }
    result
}

/// Run every per-episode probe.
pub fn probe_episode(episode: &Episode) -> ProbeReport {
    ProbeReport {
        probes: vec![
            probe_lemma2(&episode.log, &episode.trace),
            probe_norm_sums(&episode.log, &episode.trace),
            probe_conservative_rounds(&episode.log, &episode.trace),
        ],
    }
}

/// Fraction of episodes whose confidence intervals missed `θ*ᵀx` for some
/// played arm at some round must be at most `δ + 2√(δ(1−δ)/R)`.
pub fn probe_confidence_coverage(episodes: &[Episode]) -> Result<ProbeResult> {
    let held: Vec<bool> = episodes.iter().map(|e| e.coverage_held).collect();
    let delta = episodes.first().map_or(0.1, |e| e.log.meta.config.delta);
    let mut result = probe_coverage_flags(&held, delta)?;
    result.rounds_checked = episodes.iter().map(|e| e.log.horizon()).sum();
    Ok(result)
}

/// [`probe_confidence_coverage`] from per-episode `coverage_held` flags.
pub fn probe_coverage_flags(held: &[bool], delta: f64) -> Result<ProbeResult> {
    if held.len() < MIN_COVERAGE_EPISODES {
        return Err(Error::TooFewEpisodes {
            required: MIN_COVERAGE_EPISODES,
            actual: held.len(),
        });
    }
    let r = held.len() as f64;
    let failures = held.iter().filter(|h| !**h).count();
    let mut result = ProbeResult::new(PROBE_COVERAGE);
    result.tolerance = 0.0;
    result.observe(failures as f64 / r, delta + 2.0 * (delta * (1.0 - delta) / r).sqrt());
    result.rounds_checked = held.len();
    result.notes.push(format!("{failures} of {} episodes left the confidence set", held.len()));
    Ok(result)
}

/// One row of the per-round average-regret summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub t: usize,
    pub mean_avg_regret: f64,
    pub std_avg_regret: f64,
    pub policy: String,
}

/// Per-round mean and (population) standard deviation of `r_t / t` across runs
/// sharing one policy and configuration.
pub fn aggregate(logs: &[&RunLog]) -> Result<Vec<AggregateRow>> {
    let first = logs.first().ok_or_else(|| Error::Incompatible("no runs to aggregate".into()))?;
    for log in &logs[1..] {
        if log.meta.policy != first.meta.policy
            || log.meta.config != first.meta.config
            || log.horizon() != first.horizon()
        {
            return Err(Error::Incompatible(format!(
                "cannot pool {} with {}",
                log.meta.label(),
                first.meta.label()
            )));
        }
    }
    let curves: Vec<Vec<f64>> = logs.iter().map(|l| pseudo_regret(l)).collect();
    aggregate_regret(&first.meta.label(), &curves)
}

/// [`aggregate`] from cumulative regret curves `r_1, …, r_T` of equal length.
pub fn aggregate_regret(label: &str, curves: &[Vec<f64>]) -> Result<Vec<AggregateRow>> {
    let horizon = curves.first().map_or(0, Vec::len);
    if curves.is_empty() || curves.iter().any(|c| c.len() != horizon) {
        return Err(Error::Incompatible("regret curves are missing or differ in length".into()));
    }
    let n = curves.len() as f64;
    Ok((0..horizon)
        .map(|i| {
            let t = (i + 1) as f64;
            let mean = curves.iter().map(|c| c[i] / t).sum::<f64>() / n;
            let var = curves.iter().map(|c| (c[i] / t - mean).powi(2)).sum::<f64>() / n;
            AggregateRow {
                t: i + 1,
                mean_avg_regret: mean,
                std_avg_regret: var.sqrt(),
                policy: label.to_string(),
            }
        })
        .collect())
}

/// CSV with header `t,mean_avg_regret,std_avg_regret,policy`.
pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("t,mean_avg_regret,std_avg_regret,policy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.t, r.mean_avg_regret, r.std_avg_regret, r.policy);
    }
    out
}

/// Endurance time of one CCConUCB run against the always-conservative run on
/// the same instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceSample {
    pub instance_seed: u64,
    pub alpha: f64,
    /// Mean per-round gap `f(A*_t, w*_t) − μ₀` of the instance.
    pub gap: f64,
    pub endurance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceSummary {
    pub alpha: f64,
    /// 0 = low, 1 = medium, 2 = high gap.
    pub tercile: usize,
    /// Runs in this cell (instances × replicates).
    pub runs: usize,
    /// Runs that never overtook the baseline; counted as `T + 1`.
    pub censored: usize,
    pub mean_endurance: f64,
}

/// Mean per-round gap to `μ₀`, read from an always-conservative log.
pub fn mean_gap(conservative: &RunLog) -> f64 {
    let n = conservative.horizon().max(1) as f64;
    conservative
        .records
        .iter()
        .map(|r| r.optimal_reward - conservative.meta.mu0_true)
        .sum::<f64>()
        / n
}

/// Tercile (0, 1, 2) of each value by rank; ties broken by position.
pub fn terciles(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n = values.len();
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * 3 / n;
    }
    out
}

/// Mean endurance per `(α, gap tercile)`. Terciles are formed over the
/// distinct instances present in `samples`.
pub fn summarize_endurance(samples: &[EnduranceSample], horizon: usize) -> Vec<EnduranceSummary> {
    let mut instances: Vec<(u64, f64)> = Vec::new();
    for s in samples {
        if !instances.iter().any(|(seed, _)| *seed == s.instance_seed) {
            instances.push((s.instance_seed, s.gap));
        }
    }
    let gaps: Vec<f64> = instances.iter().map(|i| i.1).collect();
    let tercile_of = terciles(&gaps);
    let mut alphas: Vec<f64> = samples.iter().map(|s| s.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut out = Vec::new();
    for &alpha in &alphas {
        for tercile in 0..3 {
            let group: Vec<&EnduranceSample> = samples
                .iter()
                .filter(|s| s.alpha == alpha)
                .filter(|s| {
                    let idx = instances.iter().position(|(seed, _)| *seed == s.instance_seed).unwrap();
                    tercile_of[idx] == tercile
                })
                .collect();
            if group.is_empty() {
                continue;
            }
            let censored = group.iter().filter(|s| s.endurance.is_none()).count();
            let total: f64 = group.iter().map(|s| s.endurance.unwrap_or(horizon + 1) as f64).sum();
            out.push(EnduranceSummary {
                alpha,
                tercile,
                runs: group.len(),
                censored,
                mean_endurance: total / group.len() as f64,
            });
        }
    }
    out
}
