//! One-point gradient estimation from single cost evaluations.
//!
//! An agent that can only observe its scalar cost builds a gradient surrogate
//! by perturbing its cluster action along a random unit direction `z`, pulled
//! slightly toward an interior safety ball so the perturbed query stays
//! feasible, and scaling the observed cost back along `z`:
//! `d = (n_i / sigma) * J(query) * z`. The surrogate's error has mean of
//! order `sigma` and second moment of order `1 / sigma^2`.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::game::{ClusterSpec, GameError, GameSpec, JointAction};
use crate::vecmath::norm;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("sphere sample needs dimension >= 1")]
    ZeroDimension,
    #[error("direction has norm {norm}, expected 1 within 1e-12")]
    NotUnit { norm: f64 },
    #[error("sigma must be positive and finite, got {sigma}")]
    BadSigma { sigma: f64 },
    #[error("query radius sigma = {sigma} must stay below the safety radius {radius}")]
    SigmaExceedsRadius { sigma: f64, radius: f64 },
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Uniformly distributed direction on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereSample {
    direction: Vec<f64>,
}

impl SphereSample {
    /// Wrap an explicit direction; the norm must already be 1 within 1e-12.
    pub fn new(direction: Vec<f64>) -> Result<Self, EstimatorError> {
        if direction.is_empty() {
            return Err(EstimatorError::ZeroDimension);
        }
        let n = norm(&direction);
        if (n - 1.0).abs() > 1e-12 {
            return Err(EstimatorError::NotUnit { norm: n });
        }
        Ok(Self { direction })
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }
}

/// Draw a uniform direction by normalizing independent standard normals.
pub fn sample_unit_sphere(dim: usize, rng: &mut impl Rng) -> Result<SphereSample, EstimatorError> {
    if dim == 0 {
        return Err(EstimatorError::ZeroDimension);
    }
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&raw);
        // Resampling guard: a draw this close to the origin is astronomically
        // rare but would wreck the normalization.
        if n > 1e-12 {
            return Ok(SphereSample {
                direction: raw.into_iter().map(|v| v / n).collect(),
            });
        }
    }
}

/// Feasible perturbed query `x + sigma * (z - (x - p) / r)`.
///
/// Written as the convex combination `(1 - sigma/r) x + (sigma/r) (p + r z)`
/// of the current point and a point of the safety ball, so the result stays
/// in the box whenever `sigma < r`. A final clamp absorbs float rounding of
/// at most a few ulps.
pub fn build_query_point(
    x: &[f64],
    z: &SphereSample,
    sigma: f64,
    cluster: &ClusterSpec,
) -> Result<Vec<f64>, EstimatorError> {
    let n = cluster.agent_count();
    if x.len() != n {
        return Err(EstimatorError::DimensionMismatch {
            expected: n,
            got: x.len(),
        });
    }
    if z.dim() != n {
        return Err(EstimatorError::DimensionMismatch {
            expected: n,
            got: z.dim(),
        });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EstimatorError::BadSigma { sigma });
    }
    let r = cluster.safety_radius();
    if sigma >= r {
        return Err(EstimatorError::SigmaExceedsRadius { sigma, radius: r });
    }
    for (k, (&v, iv)) in x.iter().zip(cluster.intervals()).enumerate() {
        if !iv.contains(v) {
            return Err(EstimatorError::Game(GameError::Infeasible {
                component: k,
                value: v,
                lower: iv.lower(),
                upper: iv.upper(),
            }));
        }
    }
    let s = sigma / r;
    let p = cluster.safety_center();
    let mut query = Vec::with_capacity(n);
    for k in 0..n {
        let q = (1.0 - s) * x[k] + s * p[k] + sigma * z.direction()[k];
        let clamped = cluster.intervals()[k].clamp(q);
        debug_assert!((q - clamped).abs() <= 1e-9 * (1.0 + q.abs()));
        query.push(clamped);
    }
    Ok(query)
}

/// A gradient surrogate together with everything that produced it, so each
/// estimate is auditable back to its single oracle value.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    d: Vec<f64>,
    sample: SphereSample,
    sigma: f64,
    oracle_value: f64,
}

impl GradientEstimate {
    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn sample(&self) -> &SphereSample {
        &self.sample
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn oracle_value(&self) -> f64 {
        self.oracle_value
    }
}

/// Scale a single observed cost back along the sampled direction:
/// `d = (n_i / sigma) * oracle_value * z`. `n_i` must match the sample's
/// dimension; it is the cluster size.
pub fn estimate_gradient(
    oracle_value: f64,
    z: SphereSample,
    sigma: f64,
    n_i: usize,
) -> Result<GradientEstimate, EstimatorError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EstimatorError::BadSigma { sigma });
    }
    if n_i != z.dim() {
        return Err(EstimatorError::DimensionMismatch {
            expected: z.dim(),
            got: n_i,
        });
    }
    let scale = n_i as f64 / sigma * oracle_value;
    let d = z.direction().iter().map(|&v| scale * v).collect();
    Ok(GradientEstimate {
        d,
        sample: z,
        sigma,
        oracle_value,
    })
}

/// Monte-Carlo moments of the estimation error `e = d - grad J_i^j(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMoments {
    /// Monte-Carlo estimate of `E ||e||`.
    pub mean_error_norm: f64,
    /// Monte-Carlo estimate of `E ||e||^2`.
    pub mean_sq_error_norm: f64,
    /// Norm of the Monte-Carlo mean of `e` (the systematic part of the error).
    pub bias_norm: f64,
}

/// Measure the estimator's error moments for agent `j` of cluster `i` at a
/// fixed joint point: only cluster `i`'s block is perturbed per sample, other
/// clusters stay at their base values, and the error is taken against the
/// exact local gradient at the unperturbed point.
pub fn estimator_error_moments(
    spec: &GameSpec,
    i: usize,
    j: usize,
    x: &JointAction,
    sigma: f64,
    samples: usize,
    rng: &mut impl Rng,
) -> Result<ErrorMoments, EstimatorError> {
    let cluster = spec.cluster(i);
    let n_i = cluster.agent_count();
    let reference = spec.local_gradient(i, j, x)?;
    let range = spec.cluster_range(i);

    let mut sum_norm = 0.0;
    let mut sum_sq = 0.0;
    let mut sum_vec = vec![0.0; n_i];
    let mut joint_values = x.as_slice().to_vec();
    for _ in 0..samples {
        let z = sample_unit_sphere(n_i, rng)?;
        let query = build_query_point(&x.as_slice()[range.clone()], &z, sigma, cluster)?;
        joint_values[range.clone()].copy_from_slice(&query);
        let joint = spec.joint_action_unchecked(joint_values.clone());
        let value = spec.eval_local_cost(i, j, &joint)?;
        let estimate = estimate_gradient(value, z, sigma, n_i)?;
        let mut sq = 0.0;
        for (k, (d, g)) in estimate.d().iter().zip(&reference).enumerate() {
            let e = d - g;
            sq += e * e;
            sum_vec[k] += e;
        }
        sum_sq += sq;
        sum_norm += sq.sqrt();
    }
    let inv = 1.0 / samples as f64;
    for v in &mut sum_vec {
        *v *= inv;
    }
    Ok(ErrorMoments {
        mean_error_norm: sum_norm * inv,
        mean_sq_error_norm: sum_sq * inv,
        bias_norm: norm(&sum_vec),
    })
}
