//! Generalized linear model estimation with confidence bounds.
//!
//! A [`GlmEstimator`] accumulates `(φ, y)` pairs, keeps the design matrix
//! `W = Σ φφᵀ` up to date, and fits the maximum-likelihood coefficients by
//! damped Newton iterations on the score `Σ (y − μ(φᵀθ)) φ`. Confidence
//! statements use the radius `β = (3Lσ/ξ)·√(log(3/δ))`:
//!
//! * for a state whose feature is known: `|value − μ(φᵀθ̃)| ≤ β‖φ‖_{W⁻¹}`;
//! * for a state whose feature is unknown: `0 ≤ value ≤ μ(‖θ̃‖) + β·λ_max(W⁻¹)`.
//!
//! All inversions use `W + 1e-6·I`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, SymMatrix};

/// Ridge added to `W` before any inversion.
pub const RIDGE: f64 = 1e-6;
/// Required norm of the score at a fitted coefficient vector.
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const MAX_STEP_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Identity,
    Sigmoid,
}

impl LinkKind {
    #[inline]
    pub fn mean(self, x: f64) -> f64 {
        match self {
            LinkKind::Identity => x,
            LinkKind::Sigmoid => sigmoid(x),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            LinkKind::Identity => 1.0,
            LinkKind::Sigmoid => {
                let p = sigmoid(x);
                p * (1.0 - p)
            }
        }
    }
}

impl std::str::FromStr for LinkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" | "linear" => Ok(LinkKind::Identity),
            "sigmoid" | "logistic" => Ok(LinkKind::Sigmoid),
            other => Err(Error::InvalidConfig(format!("unknown link '{other}'"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Link with its derivative bounds: `L ≥ sup μ'`, `M ≥ sup |μ''|`,
/// `ξ ≤ inf μ'` over the admissible region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkFunction {
    pub kind: LinkKind,
    pub l: f64,
    pub m: f64,
    pub xi: f64,
}

impl LinkFunction {
    pub fn identity() -> Self {
        Self {
            kind: LinkKind::Identity,
            l: 1.0,
            m: 0.0,
            xi: 1.0,
        }
    }

    /// Sigmoid with `ξ = μ'(1)`, the value for `θ̃ = 0`.
    pub fn sigmoid() -> Self {
        Self {
            kind: LinkKind::Sigmoid,
            l: 0.25,
            m: 1.0 / (6.0 * 3f64.sqrt()),
            xi: LinkKind::Sigmoid.derivative(1.0),
        }
    }

    pub fn new(kind: LinkKind) -> Self {
        match kind {
            LinkKind::Identity => Self::identity(),
            LinkKind::Sigmoid => Self::sigmoid(),
        }
    }

    #[inline]
    pub fn mean(&self, x: f64) -> f64 {
        self.kind.mean(x)
    }

    /// Refreshes `ξ` for the current estimate: the infimum of `μ'` over
    /// `|φᵀθ| ≤ ‖θ̃‖ + 1`.
    fn refresh_xi(&mut self, theta_norm: f64) {
        if self.kind == LinkKind::Sigmoid {
            self.xi = self.kind.derivative(theta_norm + 1.0);
        }
    }
}

/// Closed interval `[lo, hi]`; endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const UNBOUNDED: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn centered(mid: f64, radius: f64) -> Self {
        Self::new(mid - radius, mid + radius)
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `(3Lσ/ξ)·√(log(3/δ))`
pub fn confidence_radius(l: f64, sigma: f64, xi: f64, delta: f64) -> f64 {
    3.0 * l * sigma / xi * (3.0 / delta).ln().sqrt()
}

/// `√(2Hd·log((t+H)/d))`, clamped at zero when `t + H ≤ d`.
pub fn sum_norm_bound(t: usize, horizon: usize, d: usize) -> f64 {
    let ratio = (t + horizon) as f64 / d as f64;
    if ratio <= 1.0 {
        return 0.0;
    }
    (2.0 * horizon as f64 * d as f64 * ratio.ln()).sqrt()
}

/// Outcome of a successful fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    pub score_norm: f64,
}

/// One GLM (reward or safety) with its data and confidence machinery.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmEstimator {
    link: LinkFunction,
    dim: usize,
    sigma: f64,
    delta: f64,
    design: SymMatrix,
    /// Observed features, `n × d` row-major.
    features: Vec<f64>,
    targets: Vec<f64>,
    theta: Vec<f64>,
    fitted: bool,
    beta: f64,
    /// `(W + RIDGE·I)⁻¹`
    design_inv: SymMatrix,
    /// Smallest eigenvalue of `W`.
    lambda_min: f64,
}

impl GlmEstimator {
    pub fn new(kind: LinkKind, dim: usize, sigma: f64, delta: f64) -> Self {
        assert!(dim > 0);
        assert!(sigma >= 0.0, "sigma must be nonnegative");
        assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
        let link = LinkFunction::new(kind);
        Self {
            beta: confidence_radius(link.l, sigma, link.xi, delta),
            link,
            dim,
            sigma,
            delta,
            design: SymMatrix::zeros(dim),
            features: Vec::new(),
            targets: Vec::new(),
            theta: vec![0.0; dim],
            fitted: false,
            design_inv: SymMatrix::identity(dim).shifted(1.0 / RIDGE - 1.0),
            lambda_min: 0.0,
        }
    }

    pub fn link(&self) -> &LinkFunction {
        &self.link
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_observations(&self) -> usize {
        self.targets.len()
    }

    pub fn observations(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.features.chunks(self.dim).zip(self.targets.iter().copied())
    }

    pub fn design_matrix(&self) -> &SymMatrix {
        &self.design
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Appends one observation and folds `φφᵀ` into `W`. The coefficients
    /// are not refit.
    pub fn update(&mut self, feature: &[f64], y: f64) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: feature.len(),
            });
        }
        let nrm = norm(feature);
        if nrm > 1.0 + 1e-9 {
            return Err(Error::FeatureNormExceeded { norm: nrm });
        }
        self.features.extend_from_slice(feature);
        self.targets.push(y);
        self.design.add_outer(feature, 1.0);
        self.refresh_design()
    }

    fn refresh_design(&mut self) -> Result<()> {
        self.design_inv = self.design.shifted(RIDGE).inverse()?;
        self.lambda_min = self.design.eigenvalues()[0].max(0.0);
        Ok(())
    }

    /// `Σ (y − μ(φᵀθ)) φ − penalty·θ`
    fn score(&self, theta: &[f64], penalty: f64) -> Vec<f64> {
        let mut s: Vec<f64> = theta.iter().map(|t| -penalty * t).collect();
        for (phi, y) in self.observations() {
            let r = y - self.link.mean(dot(phi, theta));
            for (si, p) in s.iter_mut().zip(phi) {
                *si += r * p;
            }
        }
        s
    }

    /// `Σ μ'(φᵀθ) φφᵀ + shift·I`
    fn hessian(&self, theta: &[f64], shift: f64) -> SymMatrix {
        match self.link.kind {
            LinkKind::Identity => self.design.shifted(shift),
            LinkKind::Sigmoid => {
                let mut h = SymMatrix::zeros(self.dim);
                for (phi, _) in self.observations() {
                    h.add_outer(phi, self.link.kind.derivative(dot(phi, theta)));
                }
                h.shifted(shift)
            }
        }
    }

    /// Maximum-likelihood fit, warm-started from the current coefficients.
    pub fn fit_mle(&mut self) -> Result<FitReport> {
        if self.n_observations() < self.dim {
            return Err(Error::InsufficientObservations {
                have: self.n_observations(),
                need: self.dim,
            });
        }
        self.newton(0.0)
    }

    /// Ridge-penalized likelihood fit. Always has a unique solution for
    /// `penalty > 0`; used when the plain likelihood has no maximizer.
    pub fn fit_penalized(&mut self, penalty: f64) -> Result<FitReport> {
        assert!(penalty > 0.0);
        self.theta.iter_mut().for_each(|t| *t = 0.0);
        self.newton(penalty)
    }

    fn newton(&mut self, penalty: f64) -> Result<FitReport> {
        let mut theta = self.theta.clone();
        let mut score = self.score(&theta, penalty);
        let mut score_norm = norm(&score);
        let mut iterations = 0;
        while score_norm > SCORE_TOLERANCE {
            if iterations == MAX_NEWTON_ITERATIONS || !score_norm.is_finite() {
                return Err(Error::NewtonDivergence { score_norm });
            }
            iterations += 1;
            let step = self.hessian(&theta, penalty + RIDGE).cholesky()?.solve(&score);
            let mut scale = 1.0;
            let mut accepted = false;
            for _ in 0..=MAX_STEP_HALVINGS {
                let trial: Vec<f64> = theta.iter().zip(&step).map(|(t, s)| t + scale * s).collect();
                let trial_score = self.score(&trial, penalty);
                let trial_norm = norm(&trial_score);
                if trial_norm < score_norm {
                    theta = trial;
                    score = trial_score;
                    score_norm = trial_norm;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonDivergence { score_norm });
            }
        }
        self.theta = theta;
        self.fitted = true;
        self.link.refresh_xi(norm(&self.theta));
        self.beta = self.beta();
        Ok(FitReport {
            iterations,
            score_norm,
        })
    }

    /// Confidence radius for the current link constants.
    pub fn beta(&self) -> f64 {
        confidence_radius(self.link.l, self.sigma, self.link.xi, self.delta)
    }

    /// `μ(φᵀθ̃)`
    pub fn predict(&self, feature: &[f64]) -> f64 {
        self.link.mean(dot(feature, &self.theta))
    }

    /// `(φᵀ W⁻¹ φ)^{1/2}`
    pub fn weighted_norm(&self, feature: &[f64]) -> f64 {
        self.design_inv.quad_form(feature).max(0.0).sqrt()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// `λ_max(W⁻¹) = 1/λ_min(W)`; fails when `W` is singular at the ridge
    /// scale.
    pub fn lambda_max_inv(&self) -> Result<f64> {
        if self.lambda_min <= RIDGE {
            return Err(Error::SingularDesign);
        }
        Ok(1.0 / (self.lambda_min + RIDGE))
    }

    /// `512 σ² M² ξ⁻⁴ (d² + log(1/δ))`
    pub fn eig_threshold(&self) -> f64 {
        let d = self.dim as f64;
        512.0 * self.sigma.powi(2) * self.link.m.powi(2) * self.link.xi.powi(-4) * (d * d + (1.0 / self.delta).ln())
    }

    pub fn eig_condition_met(&self) -> bool {
        self.lambda_min >= self.eig_threshold()
    }

    /// `[μ(φᵀθ̃) ± β‖φ‖_{W⁻¹}]`, for states whose feature is known.
    pub fn interval_inside(&self, feature: &[f64]) -> Result<Interval> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        Ok(Interval::centered(self.predict(feature), self.beta * self.weighted_norm(feature)))
    }

    /// `[0, μ(‖θ̃‖) + β·λ_max(W⁻¹)]`, for states whose feature is unknown.
    pub fn interval_outside(&self) -> Result<Interval> {
        if !self.fitted {
            return Err(Error::NotFitted);
        }
        Ok(Interval::new(0.0, self.outside_upper()))
    }

    fn outside_upper(&self) -> f64 {
        self.link.mean(norm(&self.theta)) + self.beta / (self.lambda_min + RIDGE)
    }

    /// Upper confidence bound: inside branch when `feature` is known,
    /// outside branch otherwise.
    pub fn upper_bound(&self, feature: Option<&[f64]>) -> Result<f64> {
        match feature {
            Some(phi) => Ok(self.interval_inside(phi)?.hi),
            None => Ok(self.interval_outside()?.hi),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn basis(d: usize, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    }

    #[test]
    fn single_update_outer_product() {
        let mut est = GlmEstimator::new(LinkKind::Identity, 3, 0.1, 0.05);
        est.update(&basis(3, 0), 0.5).unwrap();
        assert_eq!(est.design_matrix(), &SymMatrix::diagonal(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn orthonormal_updates_span_identity() {
        let mut est = GlmEstimator::new(LinkKind::Identity, 3, 0.1, 0.05);
        est.update(&basis(3, 0), 0.1).unwrap();
        est.update(&basis(3, 2), 0.2).unwrap();
        assert_eq!(est.design_matrix(), &SymMatrix::diagonal(&[1.0, 0.0, 1.0]));
    }

    #[test]
    fn oversized_feature_rejected() {
        let mut est = GlmEstimator::new(LinkKind::Identity, 2, 0.1, 0.05);
        let err = est.update(&[1.0, 0.1], 0.0).unwrap_err();
        assert!(matches!(err, Error::FeatureNormExceeded { .. }));
        assert_eq!(est.n_observations(), 0);
    }

    #[test]
    fn beta_closed_form() {
        assert_eq!(confidence_radius(1.0, 0.0, 0.3, 0.05), 0.0);
        let b = confidence_radius(1.0, 0.1, 1.0, 0.05);
        // 0.3 * sqrt(ln 60)
        assert!((b - 0.607_035).abs() < 1e-6, "{b}");
        let b2 = confidence_radius(1.0, 0.2, 1.0, 0.05);
        assert_eq!(b2, 2.0 * b);
    }

    #[test]
    fn fit_requires_enough_data() {
        let mut est = GlmEstimator::new(LinkKind::Identity, 3, 0.1, 0.05);
        est.update(&basis(3, 0), 0.5).unwrap();
        assert!(matches!(est.fit_mle(), Err(Error::InsufficientObservations { have: 1, need: 3 })));
    }

    #[test]
    fn not_fitted_intervals_error() {
        let est = GlmEstimator::new(LinkKind::Sigmoid, 2, 0.1, 0.05);
        assert!(matches!(est.interval_inside(&[0.5, 0.5]), Err(Error::NotFitted)));
        assert!(matches!(est.interval_outside(), Err(Error::NotFitted)));
    }

    #[test]
    fn identity_noiseless_fit_is_exact() {
        let theta_star = [0.3, -0.2, 0.5];
        let mut est = GlmEstimator::new(LinkKind::Identity, 3, 0.0, 0.05);
        for phi in [[0.5, 0.1, 0.2], [0.0, 0.7, 0.1], [0.2, 0.2, 0.6], [0.4, 0.4, 0.4]] {
            est.update(&phi, dot(&phi, &theta_star)).unwrap();
        }
        est.fit_mle().unwrap();
        for (a, b) in est.theta().iter().zip(theta_star) {
            assert!((a - b).abs() < 1e-8);
        }
        // σ = 0 collapses the interval
        let iv = est.interval_inside(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(iv.lo, iv.hi);
    }

    #[test]
    fn sigmoid_midpoint_fit() {
        let mut est = GlmEstimator::new(LinkKind::Sigmoid, 2, 0.1, 0.05);
        for _ in 0..4 {
            est.update(&[1.0, 0.0], 0.5).unwrap();
        }
        est.update(&[0.0, 1.0], 0.5).unwrap();
        est.fit_mle().unwrap();
        assert!(est.theta()[0].abs() < 1e-8);
    }

    #[test]
    fn sigmoid_outside_interval_at_zero() {
        let mut est = GlmEstimator::new(LinkKind::Sigmoid, 2, 0.0, 0.05);
        est.update(&[1.0, 0.0], 0.5).unwrap();
        est.update(&[0.0, 1.0], 0.5).unwrap();
        est.fit_mle().unwrap();
        let iv = est.interval_outside().unwrap();
        assert_eq!(iv.lo, 0.0);
        assert!((iv.hi - 0.5).abs() < 1e-9);
    }

    #[test]
    fn weighted_norm_scalar_cases() {
        let mut est = GlmEstimator::new(LinkKind::Identity, 2, 0.1, 0.05);
        est.update(&[1.0, 0.0], 0.0).unwrap();
        est.update(&[0.0, 1.0], 0.0).unwrap();
        assert!((est.weighted_norm(&[0.6, 0.8]) - 1.0).abs() < 1e-6);
        for _ in 0..3 {
            est.update(&[1.0, 0.0], 0.0).unwrap();
            est.update(&[0.0, 1.0], 0.0).unwrap();
        }
        assert!((est.weighted_norm(&[0.6, 0.8]) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn lambda_of_diagonal_design() {
        let mut est = GlmEstimator::new(LinkKind::Identity, 3, 0.1, 0.05);
        est.update(&basis(3, 0), 0.0).unwrap();
        for _ in 0..2 {
            est.update(&basis(3, 1), 0.0).unwrap();
        }
        for _ in 0..3 {
            est.update(&basis(3, 2), 0.0).unwrap();
        }
        assert!((est.lambda_min() - 1.0).abs() < 1e-12);
        assert!((est.lambda_max_inv().unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn singular_design_reports_error() {
        let mut est = GlmEstimator::new(LinkKind::Identity, 2, 0.1, 0.05);
        est.update(&[1.0, 0.0], 0.0).unwrap();
        assert!(matches!(est.lambda_max_inv(), Err(Error::SingularDesign)));
    }

    #[test]
    fn eig_condition_trivial_cases() {
        let mut id = GlmEstimator::new(LinkKind::Identity, 3, 0.1, 0.05);
        assert_eq!(id.eig_threshold(), 0.0);
        assert!(id.eig_condition_met());
        id.update(&basis(3, 0), 0.0).unwrap();
        assert!(id.eig_condition_met());
        let sig = GlmEstimator::new(LinkKind::Sigmoid, 3, 0.0, 0.05);
        assert_eq!(sig.eig_threshold(), 0.0);
        assert!(sig.eig_condition_met());
    }

    #[test]
    fn eig_threshold_closed_form() {
        // sigmoid, σ = 0.1, d = 5, δ = 0.05, ξ = μ'(1)
        let est = GlmEstimator::new(LinkKind::Sigmoid, 5, 0.1, 0.05);
        let xi = 0.196_611_933_241_481_85_f64;
        let m = 1.0 / (6.0 * 3f64.sqrt());
        let expect = 512.0 * 0.01 * m * m / xi.powi(4) * (25.0 + 20f64.ln());
        assert!((est.eig_threshold() - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn sum_norm_bound_values() {
        assert_eq!(sum_norm_bound(0, 5, 5), 0.0);
        let b = sum_norm_bound(395, 5, 5);
        assert!((b - 14.8017).abs() < 1e-3, "{b}");
        let mut prev = 0.0;
        for h in 1..50 {
            let v = sum_norm_bound(100, h, 5);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn interval_narrows_with_repeats() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut est = GlmEstimator::new(LinkKind::Identity, 3, 0.1, 0.05);
        for _ in 0..5 {
            let phi: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 0.5).collect();
            est.update(&phi, 0.3).unwrap();
        }
        est.fit_mle().unwrap();
        let phi = [0.3, 0.4, 0.2];
        let mut width = est.interval_inside(&phi).unwrap().width();
        for _ in 0..20 {
            est.update(&phi, 0.4).unwrap();
            est.fit_mle().unwrap();
            let w = est.interval_inside(&phi).unwrap().width();
            assert!(w <= width + 1e-12);
            width = w;
        }
    }

    #[test]
    fn penalized_fit_exists_for_separable_data() {
        // y > 1 wherever the feature points one way: no finite maximizer
        let mut est = GlmEstimator::new(LinkKind::Sigmoid, 1, 0.1, 0.05);
        est.update(&[1.0], 1.2).unwrap();
        est.update(&[0.5], 1.1).unwrap();
        assert!(matches!(est.fit_mle(), Err(Error::NewtonDivergence { .. })));
        let report = est.fit_penalized(1.0).unwrap();
        assert!(report.score_norm <= SCORE_TOLERANCE);
        assert!(est.is_fitted());
    }
}
