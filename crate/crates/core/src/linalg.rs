//! Ridge-regression sufficient statistics and confidence bounds.
//!
//! [`RidgeState`] carries the regularized design matrix `V = λI + Σ x xᵀ`,
//! its inverse, the response accumulator `Y = Σ w x`, the estimate
//! `θ̂ = V⁻¹Y`, `log det V` and the confidence radius
//!
//! ```text
//! H = √λ·S + √(log det V − d·log λ − 2·log δ)
//! ```
//!
//! The inverse is maintained with the Sherman–Morrison identity (O(d²) per
//! observation) and rebuilt from a Cholesky factorization of `V` every
//! `refresh_interval` observations to wash out drift.

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of ingests between full refactorizations.
pub const DEFAULT_REFRESH_INTERVAL: usize = 1000;

/// A feature vector `x` for one arm in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn view(&self) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.0, self.0.len())
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Confidence interval for one expected weight `θ*ᵀx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightBound {
    /// `max(0, center − halfwidth)`
    pub lower: f64,
    /// `center + halfwidth`
    pub upper: f64,
    /// `θ̂ᵀx`
    pub center: f64,
    /// `H·‖x‖_{V⁻¹}`
    pub halfwidth: f64,
}

impl WeightBound {
    pub fn from_parts(center: f64, halfwidth: f64) -> Self {
        Self {
            lower: (center - halfwidth).max(0.0),
            upper: center + halfwidth,
            center,
            halfwidth,
        }
    }

    /// Whether `value` lies in the unclamped interval `[center − halfwidth, center + halfwidth]`.
    pub fn contains(&self, value: f64) -> bool {
        value >= self.center - self.halfwidth && value <= self.center + self.halfwidth
    }
}

/// What changed in `V⁻¹` during one ingest.
///
/// Callers holding squared Mahalanobis norms of other vectors can downdate
/// them in O(d): `‖z‖²_{V'⁻¹} = ‖z‖²_{V⁻¹} − (zᵀ·vinv_x)² / denom`.
#[derive(Debug, Clone)]
pub struct IngestUpdate {
    /// `V⁻¹x` under the inverse before the update.
    pub vinv_x: DVector<f64>,
    /// `1 + xᵀV⁻¹x` under the inverse before the update.
    pub denom: f64,
    /// The inverse was rebuilt from scratch; cached norms must be recomputed.
    pub refreshed: bool,
}

/// Confidence radius `√λ·S + √(log det V − d·log λ − 2·log δ)`.
///
/// The argument of the square root is clamped at zero against round-off.
pub fn confidence_radius(lambda: f64, norm_bound: f64, delta: f64, log_det_v: f64, dim: usize) -> f64 {
    let excess = log_det_v - dim as f64 * lambda.ln() - 2.0 * delta.ln();
    lambda.sqrt() * norm_bound + excess.max(0.0).sqrt()
}

/// Regularized least-squares sufficient statistics shared by the UCB policies.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    dim: usize,
    lambda: f64,
    norm_bound: f64,
    delta: f64,
    refresh_interval: usize,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    y: DVector<f64>,
    theta_hat: DVector<f64>,
    log_det_v: f64,
    radius: f64,
    ingests: u64,
    since_refresh: usize,
}

impl RidgeState {
    /// Fresh state: `V = λI`, `Y = 0`, `θ̂ = 0`, `H = √λS + √(2 log(1/δ))`.
    pub fn new(dim: usize, lambda: f64, norm_bound: f64, delta: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(invalid("lambda", format!("must be finite and > 0, got {lambda}")));
        }
        if !(norm_bound.is_finite() && norm_bound > 0.0) {
            return Err(invalid("S", format!("must be finite and > 0, got {norm_bound}")));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1], got {delta}")));
        }
        let log_det_v = dim as f64 * lambda.ln();
        Ok(Self {
            dim,
            lambda,
            norm_bound,
            delta,
            refresh_interval: DEFAULT_REFRESH_INTERVAL,
            v: DMatrix::identity(dim, dim) * lambda,
            v_inv: DMatrix::identity(dim, dim) / lambda,
            y: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
            log_det_v,
            radius: confidence_radius(lambda, norm_bound, delta, log_det_v, dim),
            ingests: 0,
            since_refresh: 0,
        })
    }

    /// Set how many ingests pass between full refactorizations (0 disables them).
    pub fn with_refresh_interval(mut self, interval: usize) -> Self {
        self.refresh_interval = interval;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
    pub fn delta(&self) -> f64 {
        self.delta
    }
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }
    pub fn v_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }
    pub fn log_det_v(&self) -> f64 {
        self.log_det_v
    }
    /// Current confidence radius `H`.
    pub fn radius(&self) -> f64 {
        self.radius
    }
    /// Number of observations ingested so far.
    pub fn ingests(&self) -> u64 {
        self.ingests
    }

    fn check_dim(&self, x: &FeatureVector) -> Result<()> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        Ok(())
    }

    /// Add one observation `(x, w)`: `V += xxᵀ`, `Y += w·x`, then refresh
    /// `V⁻¹`, `θ̂`, `log det V` and `H`. The state is untouched on error.
    pub fn ingest(&mut self, x: &FeatureVector, w: f64) -> Result<IngestUpdate> {
        self.check_dim(x)?;
        if !x.is_finite() {
            return Err(Error::NonFinite("feature vector"));
        }
        if !w.is_finite() {
            return Err(Error::NonFinite("observed weight"));
        }
        let xv = x.view();
        let vinv_x = &self.v_inv * xv;
        let denom = 1.0 + xv.dot(&vinv_x);

        let mut v = self.v.clone();
        v.ger(1.0, &xv, &xv, 1.0);
        let mut y = self.y.clone();
        y.axpy(w, &xv, 1.0);

        let since_refresh = self.since_refresh + 1;
        let refreshed = self.refresh_interval > 0 && since_refresh >= self.refresh_interval;
        let (v_inv, theta_hat, log_det_v) = if refreshed {
            factorize(&v, &y)?
        } else {
            let mut v_inv = self.v_inv.clone();
            v_inv.ger(-1.0 / denom, &vinv_x, &vinv_x, 1.0);
            let theta_hat = &v_inv * &y;
            (v_inv, theta_hat, self.log_det_v + denom.ln())
        };
        if !(v.iter().all(|a| a.is_finite())
            && y.iter().all(|a| a.is_finite())
            && theta_hat.iter().all(|a| a.is_finite())
            && v_inv.iter().all(|a| a.is_finite())
            && log_det_v.is_finite())
        {
            return Err(Error::NonFinite("ridge state after ingest"));
        }

        self.v = v;
        self.y = y;
        self.v_inv = v_inv;
        self.theta_hat = theta_hat;
        self.log_det_v = log_det_v;
        self.radius = confidence_radius(self.lambda, self.norm_bound, self.delta, log_det_v, self.dim);
        self.ingests += 1;
        self.since_refresh = if refreshed { 0 } else { since_refresh };
        Ok(IngestUpdate {
            vinv_x,
            denom,
            refreshed,
        })
    }

    /// Rebuild `V⁻¹`, `θ̂` and `log det V` from `V` and `Y` by Cholesky factorization.
    pub fn refresh(&mut self) -> Result<()> {
        let (v_inv, theta_hat, log_det_v) = factorize(&self.v, &self.y)?;
        self.v_inv = v_inv;
        self.theta_hat = theta_hat;
        self.log_det_v = log_det_v;
        self.radius = confidence_radius(self.lambda, self.norm_bound, self.delta, log_det_v, self.dim);
        self.since_refresh = 0;
        Ok(())
    }

    /// `xᵀV⁻¹x`, clamped at zero.
    pub fn mahalanobis_norm_squared(&self, x: &FeatureVector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.quad_form(x.as_slice()).max(0.0))
    }

    /// `‖x‖_{V⁻¹} = √(xᵀV⁻¹x)`.
    pub fn mahalanobis_norm(&self, x: &FeatureVector) -> Result<f64> {
        self.mahalanobis_norm_squared(x).map(f64::sqrt)
    }

    /// `θ̂ᵀx`
    pub fn estimate(&self, x: &FeatureVector) -> Result<f64> {
        self.check_dim(x)?;
        Ok(x.dot(self.theta_hat.as_slice()))
    }

    /// Upper and lower confidence bounds on `θ*ᵀx` at the current radius.
    pub fn weight_bounds(&self, x: &FeatureVector) -> Result<WeightBound> {
        self.check_dim(x)?;
        Ok(self.bounds_unchecked(x.as_slice()))
    }

    pub(crate) fn bounds_unchecked(&self, x: &[f64]) -> WeightBound {
        let center: f64 = x.iter().zip(self.theta_hat.iter()).map(|(a, b)| a * b).sum();
        let halfwidth = self.radius * self.quad_form(x).max(0.0).sqrt();
        WeightBound::from_parts(center, halfwidth)
    }

    /// Bounds from a cached squared Mahalanobis norm.
    pub(crate) fn bounds_with_norm_squared(&self, x: &[f64], sq_norm: f64) -> WeightBound {
        let center: f64 = x.iter().zip(self.theta_hat.iter()).map(|(a, b)| a * b).sum();
        WeightBound::from_parts(center, self.radius * sq_norm.max(0.0).sqrt())
    }

    pub(crate) fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for j in 0..d {
            let col = self.v_inv.column(j);
            let mut s = 0.0;
            for i in 0..d {
                s += col[i] * x[i];
            }
            acc += s * x[j];
        }
        acc
    }
}

fn factorize(v: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>, f64)> {
    let chol = v
        .clone()
        .cholesky()
        .ok_or(Error::NonFinite("design matrix lost positive definiteness"))?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|l| l.ln()).sum::<f64>();
    let theta = chol.solve(y);
    let v_inv = chol.inverse();
    Ok((v_inv, theta, log_det))
}
