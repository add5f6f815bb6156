//! Ground-truth equilibrium computation with exact gradients.
//!
//! The equilibrium of a monotone cluster game solves the variational
//! inequality over the joint box with the stacked cluster-gradient mapping.
//! [`solve_vi`] runs an extragradient iteration (two projections per step,
//! adaptive step length), [`verify_ne_kkt`] checks the first-order box
//! conditions, and [`best_response_check`] brute-forces single-cluster
//! deviations. The three checks are independent, so agreement pins the
//! equilibrium down without a published reference vector.

use rand::Rng;
use thiserror::Error;

use crate::game::{GameError, GameSpec, JointAction};
use crate::rng::{stream, tag};
use crate::vecmath::{dist, norm, sub_scaled};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("tolerance must be positive and finite, got {tol}")]
    BadTolerance { tol: f64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Seed of the solver's internal randomness (step-length probing and
/// brute-force candidates); fixed so every solve is reproducible.
const INTERNAL_SEED: u64 = 0;

/// Result of an extragradient solve.
#[derive(Debug, Clone, PartialEq)]
pub struct VISolution {
    point: JointAction,
    residual: f64,
    iterations: u64,
    converged: bool,
    residual_history: Vec<f64>,
    last_backtrack: Option<u64>,
}

impl VISolution {
    pub fn point(&self) -> &JointAction {
        &self.point
    }

    /// Natural residual `||x - proj(x - F(x))||` at the returned point.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> u64 {
        self.iterations
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Residual before each iteration, ending with the final residual.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// Index into the residual history of the last step-length halving.
    pub fn last_backtrack(&self) -> Option<u64> {
        self.last_backtrack
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<(), SolverError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Numeric(format!(
            "{what} produced a non-finite component"
        )));
    }
    Ok(())
}

/// Uniform draw from the joint box.
fn random_feasible(spec: &GameSpec, rng: &mut impl Rng) -> Vec<f64> {
    let mut values = Vec::with_capacity(spec.total_dim());
    for cluster in spec.clusters() {
        for iv in cluster.intervals() {
            values.push(rng.gen_range(iv.lower()..=iv.upper()));
        }
    }
    values
}

fn game_mapping_at(spec: &GameSpec, values: &[f64]) -> Result<Vec<f64>, SolverError> {
    let joint = spec.joint_action_unchecked(values.to_vec());
    let f = spec.game_mapping(&joint)?;
    check_finite(&f, "game mapping")?;
    Ok(f)
}

/// Largest observed difference quotient of the mapping over random pairs;
/// seeds the initial extragradient step length at its reciprocal.
fn estimate_lipschitz(spec: &GameSpec) -> Result<f64, SolverError> {
    let mut rng = stream(INTERNAL_SEED, &[tag::LIPSCHITZ]);
    let mut estimate = 0.0f64;
    for _ in 0..100 {
        let u = random_feasible(spec, &mut rng);
        let v = random_feasible(spec, &mut rng);
        let gap = dist(&u, &v);
        if gap < 1e-12 {
            continue;
        }
        let fu = game_mapping_at(spec, &u)?;
        let fv = game_mapping_at(spec, &v)?;
        let df: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a - b).collect();
        estimate = estimate.max(norm(&df) / gap);
    }
    Ok(estimate)
}

/// Solve the box variational inequality from the midpoint start.
pub fn solve_vi(spec: &GameSpec, tol: f64, max_iter: u64) -> Result<VISolution, SolverError> {
    let start = spec.midpoint().into_vec();
    solve_vi_from(spec, &start, tol, max_iter)
}

/// Solve the box variational inequality from a chosen start (projected onto
/// the box first). Exceeding `max_iter` yields a non-converged solution, not
/// an error; only numeric breakdown is an error.
pub fn solve_vi_from(
    spec: &GameSpec,
    start: &[f64],
    tol: f64,
    max_iter: u64,
) -> Result<VISolution, SolverError> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(SolverError::BadTolerance { tol });
    }
    let lipschitz = estimate_lipschitz(spec)?;
    let mut tau = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let mut x = spec.project(start)?;
    let mut residual_history = Vec::new();
    let mut last_backtrack = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;

    while iterations < max_iter {
        let fx = game_mapping_at(spec, &x)?;
        residual = dist(&x, &spec.project(&sub_scaled(&x, 1.0, &fx))?);
        residual_history.push(residual);
        if residual <= tol {
            converged = true;
            break;
        }

        // Probe step: y = proj(x - tau F(x)), shrinking tau until the mapping
        // varies slowly enough over the probe (tau ||F(x) - F(y)|| <= 0.9 ||x - y||).
        let mut y = spec.project(&sub_scaled(&x, tau, &fx))?;
        let mut fy = game_mapping_at(spec, &y)?;
        loop {
            let step = dist(&x, &y);
            if step == 0.0 {
                break;
            }
            let df: Vec<f64> = fx.iter().zip(&fy).map(|(a, b)| a - b).collect();
            if tau * norm(&df) <= 0.9 * step {
                break;
            }
            tau *= 0.5;
            if tau < 1e-30 {
                return Err(SolverError::Numeric(
                    "step length underflowed during backtracking".to_string(),
                ));
            }
            last_backtrack = Some(iterations);
            y = spec.project(&sub_scaled(&x, tau, &fx))?;
            fy = game_mapping_at(spec, &y)?;
        }

        x = spec.project(&sub_scaled(&x, tau, &fy))?;
        check_finite(&x, "iterate")?;
        iterations += 1;
    }

    if !converged {
        // Report the residual of the point actually returned.
        let fx = game_mapping_at(spec, &x)?;
        residual = dist(&x, &spec.project(&sub_scaled(&x, 1.0, &fx))?);
        residual_history.push(residual);
    }

    Ok(VISolution {
        point: spec.joint_action_unchecked(x),
        residual,
        iterations,
        converged,
        residual_history,
        last_backtrack,
    })
}

/// Where a component sits relative to its interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundPosition {
    Interior,
    AtLower,
    AtUpper,
}

/// First-order check of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct KktComponent {
    /// Flat index into the joint action.
    pub component: usize,
    pub value: f64,
    pub gradient: f64,
    pub position: BoundPosition,
    /// Zero when the component's condition holds exactly.
    pub violation: f64,
}

/// Componentwise first-order conditions at a candidate equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    components: Vec<KktComponent>,
    max_violation: f64,
    tol: f64,
}

impl KktReport {
    pub fn is_satisfied(&self) -> bool {
        self.max_violation <= self.tol
    }

    pub fn max_violation(&self) -> f64 {
        self.max_violation
    }

    pub fn components(&self) -> &[KktComponent] {
        &self.components
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }
}

/// Check the box first-order conditions: interior components need a vanishing
/// cluster-gradient component, components at the lower bound need it
/// nonnegative, at the upper bound nonpositive (each up to `tol`). A component
/// within `tol` of a bound counts as sitting on it.
pub fn verify_ne_kkt(spec: &GameSpec, x: &JointAction, tol: f64) -> Result<KktReport, SolverError> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(SolverError::BadTolerance { tol });
    }
    let gradient = spec.game_mapping(x)?;
    let mut components = Vec::with_capacity(spec.total_dim());
    let mut max_violation = 0.0f64;
    let mut flat = 0;
    for cluster in spec.clusters() {
        for iv in cluster.intervals() {
            let value = x.as_slice()[flat];
            let g = gradient[flat];
            let (position, violation) = if value - iv.lower() <= tol {
                (BoundPosition::AtLower, (-g).max(0.0))
            } else if iv.upper() - value <= tol {
                (BoundPosition::AtUpper, g.max(0.0))
            } else {
                (BoundPosition::Interior, g.abs())
            };
            max_violation = max_violation.max(violation);
            components.push(KktComponent {
                component: flat,
                value,
                gradient: g,
                position,
                violation,
            });
            flat += 1;
        }
    }
    Ok(KktReport {
        components,
        max_violation,
        tol,
    })
}

/// Brute-force deviation gap of cluster `i` at `x`: how much lower the
/// cluster cost could go over a `grid`-per-axis lattice (grid capped at 15)
/// plus 1e4 random feasible cluster actions, holding the other clusters
/// fixed. Zero means no tested deviation improves on `x`.
pub fn best_response_check(
    spec: &GameSpec,
    x: &JointAction,
    i: usize,
    grid: u32,
) -> Result<f64, SolverError> {
    let cluster = spec.cluster(i);
    let n_i = cluster.agent_count();
    let range = spec.cluster_range(i);
    let grid = grid.clamp(1, 15) as usize;

    let mut values = x.as_slice().to_vec();
    let own_cost = spec.eval_cluster_cost(i, x)?;
    let mut best = own_cost;

    let eval_candidate =
        |candidate: &[f64], values: &mut Vec<f64>| -> Result<f64, SolverError> {
            values[range.clone()].copy_from_slice(candidate);
            let joint = spec.joint_action_unchecked(values.clone());
            Ok(spec.eval_cluster_cost(i, &joint)?)
        };

    // Lattice sweep: counter in base `grid` over the cluster's axes.
    let mut index = vec![0usize; n_i];
    let mut candidate = vec![0.0; n_i];
    let total = (grid as u64).pow(n_i as u32);
    for _ in 0..total {
        for (k, iv) in cluster.intervals().iter().enumerate() {
            candidate[k] = if grid == 1 {
                iv.midpoint()
            } else {
                iv.lower() + iv.width() * index[k] as f64 / (grid - 1) as f64
            };
        }
        best = best.min(eval_candidate(&candidate, &mut values)?);
        for slot in index.iter_mut() {
            *slot += 1;
            if *slot < grid {
                break;
            }
            *slot = 0;
        }
    }

    let mut rng = stream(INTERNAL_SEED, &[tag::BEST_RESPONSE, i as u64]);
    for _ in 0..10_000 {
        for (k, iv) in cluster.intervals().iter().enumerate() {
            candidate[k] = rng.gen_range(iv.lower()..=iv.upper());
        }
        best = best.min(eval_candidate(&candidate, &mut values)?);
    }

    Ok((own_cost - best).max(0.0))
}
