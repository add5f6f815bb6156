//! Cluster games: box action sets, local and cluster costs, and the game
//! mapping used by the reference solver.
//!
//! A game has `n` clusters; cluster `i` contains `n_i` agents, each owning a
//! scalar action. Agent `j` of cluster `i` has a local cost `J_i^j` over the
//! joint action, and the cluster cost is the agent average
//! `J_i = (1/n_i) sum_j J_i^j`. The game mapping stacks each cluster's
//! gradient of its own cost with respect to its own action block.

mod cournot;
mod quadratic;

pub use cournot::{CournotCluster, CournotParams};
pub use quadratic::QuadraticParams;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("interval [{lower}, {upper}] is empty or degenerate (lower < upper required)")]
    BadInterval { lower: f64, upper: f64 },
    #[error("interval bounds must be finite, got [{lower}, {upper}]")]
    NonFiniteBound { lower: f64, upper: f64 },
    #[error("cluster must contain at least one agent")]
    EmptyCluster,
    #[error("game must contain at least one cluster")]
    EmptyGame,
    #[error("safety center has {got} components, cluster has {expected} agents")]
    SafetyCenterDimension { expected: usize, got: usize },
    #[error(
        "safety ball of radius {radius} around component {component} = {center} \
         leaves the box [{lower}, {upper}]"
    )]
    SafetyBallEscapesBox {
        component: usize,
        center: f64,
        radius: f64,
        lower: f64,
        upper: f64,
    },
    #[error("safety radius must be positive, got {radius}")]
    NonPositiveRadius { radius: f64 },
    #[error("cluster index {cluster} out of range, game has {clusters} clusters")]
    ClusterIndex { cluster: usize, clusters: usize },
    #[error("agent index {agent} out of range, cluster {cluster} has {agents} agents")]
    AgentIndex {
        cluster: usize,
        agent: usize,
        agents: usize,
    },
    #[error("expected {expected} components, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("component {component} = {value} outside [{lower}, {upper}]")]
    Infeasible {
        component: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("cost of agent {agent} in cluster {cluster} is not finite")]
    NonFiniteCost { cluster: usize, agent: usize },
    #[error("no analytic gradient for cluster {cluster} agent {agent} and finite differences are disabled")]
    GradientUnavailable { cluster: usize, agent: usize },
    #[error(
        "component {component} = {value} is within the finite-difference step {step} \
         of its bound; gradients need interior points"
    )]
    TooCloseToBoundary {
        component: usize,
        value: f64,
        step: f64,
    },
    #[error("invalid game parameters: {0}")]
    InvalidParams(String),
}

/// Feasible interval of one agent's scalar action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionInterval {
    lower: f64,
    upper: f64,
}

impl ActionInterval {
    pub fn new(lower: f64, upper: f64) -> Result<Self, GameError> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(GameError::NonFiniteBound { lower, upper });
        }
        if lower >= upper {
            return Err(GameError::BadInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lower && v <= self.upper
    }
}

/// Largest ball centered at the box midpoint: radius is the smallest half-width.
pub fn default_safety_ball(intervals: &[ActionInterval]) -> Result<(Vec<f64>, f64), GameError> {
    if intervals.is_empty() {
        return Err(GameError::EmptyCluster);
    }
    let center: Vec<f64> = intervals.iter().map(|iv| iv.midpoint()).collect();
    let radius = intervals
        .iter()
        .map(|iv| 0.5 * iv.width())
        .fold(f64::INFINITY, f64::min);
    Ok((center, radius))
}

/// One cluster's box action set together with its interior safety ball.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    intervals: Vec<ActionInterval>,
    safety_center: Vec<f64>,
    safety_radius: f64,
}

impl ClusterSpec {
    pub fn new(
        intervals: Vec<ActionInterval>,
        safety_center: Vec<f64>,
        safety_radius: f64,
    ) -> Result<Self, GameError> {
        if intervals.is_empty() {
            return Err(GameError::EmptyCluster);
        }
        if safety_center.len() != intervals.len() {
            return Err(GameError::SafetyCenterDimension {
                expected: intervals.len(),
                got: safety_center.len(),
            });
        }
        if !(safety_radius > 0.0) || !safety_radius.is_finite() {
            return Err(GameError::NonPositiveRadius {
                radius: safety_radius,
            });
        }
        for (k, (iv, &c)) in intervals.iter().zip(&safety_center).enumerate() {
            // Ulp-scale slack so a ball measured off the box midpoint is not
            // rejected for a rounding error in midpoint +/- half-width.
            let slack = 4.0
                * f64::EPSILON
                * (c.abs() + safety_radius)
                    .max(iv.lower().abs())
                    .max(iv.upper().abs())
                    .max(1.0);
            if c - safety_radius < iv.lower() - slack || c + safety_radius > iv.upper() + slack {
                return Err(GameError::SafetyBallEscapesBox {
                    component: k,
                    center: c,
                    radius: safety_radius,
                    lower: iv.lower(),
                    upper: iv.upper(),
                });
            }
        }
        Ok(Self {
            intervals,
            safety_center,
            safety_radius,
        })
    }

    /// Cluster with the default (largest centered) safety ball.
    pub fn with_default_safety_ball(intervals: Vec<ActionInterval>) -> Result<Self, GameError> {
        let (center, radius) = default_safety_ball(&intervals)?;
        Self::new(intervals, center, radius)
    }

    pub fn agent_count(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[ActionInterval] {
        &self.intervals
    }

    pub fn safety_center(&self) -> &[f64] {
        &self.safety_center
    }

    pub fn safety_radius(&self) -> f64 {
        self.safety_radius
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.midpoint()).collect()
    }

    pub fn contains(&self, v: &[f64]) -> bool {
        v.len() == self.intervals.len()
            && v.iter().zip(&self.intervals).all(|(&x, iv)| iv.contains(x))
    }

    /// Componentwise clamp: the Euclidean projection onto the box.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>, GameError> {
        if v.len() != self.intervals.len() {
            return Err(GameError::Dimension {
                expected: self.intervals.len(),
                got: v.len(),
            });
        }
        Ok(v.iter()
            .zip(&self.intervals)
            .map(|(&x, iv)| iv.clamp(x))
            .collect())
    }

    fn check_feasible(&self, v: &[f64]) -> Result<(), GameError> {
        if v.len() != self.intervals.len() {
            return Err(GameError::Dimension {
                expected: self.intervals.len(),
                got: v.len(),
            });
        }
        for (k, (&x, iv)) in v.iter().zip(&self.intervals).enumerate() {
            if !iv.contains(x) {
                return Err(GameError::Infeasible {
                    component: k,
                    value: x,
                    lower: iv.lower(),
                    upper: iv.upper(),
                });
            }
        }
        Ok(())
    }
}

/// Joint action of all clusters, stored flat with cluster blocks in order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAction {
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl JointAction {
    pub(crate) fn unchecked(values: Vec<f64>, offsets: Vec<usize>) -> Self {
        debug_assert_eq!(*offsets.last().unwrap(), values.len());
        Self { values, offsets }
    }

    pub fn cluster_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn cluster(&self, i: usize) -> &[f64] {
        &self.values[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Cost evaluators of a cluster game.
///
/// Implementations must be pure: the same joint action always yields the same
/// cost. `local_gradient` returns the gradient of `J_i^j` with respect to the
/// cluster's own action block when a closed form is available.
pub trait CostModel: Send + Sync {
    fn local_cost(&self, cluster: usize, agent: usize, joint: &JointAction) -> f64;

    fn local_gradient(
        &self,
        cluster: usize,
        agent: usize,
        joint: &JointAction,
    ) -> Option<Vec<f64>> {
        let _ = (cluster, agent, joint);
        None
    }
}

/// Full description of an n-cluster game.
pub struct GameSpec {
    clusters: Vec<ClusterSpec>,
    cost: Box<dyn CostModel>,
    offsets: Vec<usize>,
    fd_step: Option<f64>,
}

impl GameSpec {
    pub fn new(clusters: Vec<ClusterSpec>, cost: Box<dyn CostModel>) -> Result<Self, GameError> {
        if clusters.is_empty() {
            return Err(GameError::EmptyGame);
        }
        let mut offsets = Vec::with_capacity(clusters.len() + 1);
        offsets.push(0);
        for c in &clusters {
            offsets.push(offsets.last().unwrap() + c.agent_count());
        }
        Ok(Self {
            clusters,
            cost,
            offsets,
            fd_step: Some(1e-5),
        })
    }

    /// Set the central finite-difference step used when a cost model has no
    /// analytic gradient, or `None` to make such gradients an error.
    pub fn with_fd_fallback(mut self, step: Option<f64>) -> Self {
        self.fd_step = step;
        self
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster(&self, i: usize) -> &ClusterSpec {
        &self.clusters[i]
    }

    pub fn clusters(&self) -> &[ClusterSpec] {
        &self.clusters
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.agent_count()).collect()
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn cluster_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Smallest safety radius over all clusters; bounds valid query radii.
    pub fn min_safety_radius(&self) -> f64 {
        self.clusters
            .iter()
            .map(|c| c.safety_radius())
            .fold(f64::INFINITY, f64::min)
    }

    fn check_cluster(&self, i: usize) -> Result<(), GameError> {
        if i >= self.clusters.len() {
            return Err(GameError::ClusterIndex {
                cluster: i,
                clusters: self.clusters.len(),
            });
        }
        Ok(())
    }

    fn check_agent(&self, i: usize, j: usize) -> Result<(), GameError> {
        self.check_cluster(i)?;
        if j >= self.clusters[i].agent_count() {
            return Err(GameError::AgentIndex {
                cluster: i,
                agent: j,
                agents: self.clusters[i].agent_count(),
            });
        }
        Ok(())
    }

    /// Validated joint action: dimension and componentwise feasibility.
    pub fn joint_action(&self, values: Vec<f64>) -> Result<JointAction, GameError> {
        if values.len() != self.total_dim() {
            return Err(GameError::Dimension {
                expected: self.total_dim(),
                got: values.len(),
            });
        }
        for (i, cluster) in self.clusters.iter().enumerate() {
            cluster.check_feasible(&values[self.cluster_range(i)])?;
        }
        Ok(JointAction::unchecked(values, self.offsets.clone()))
    }

    pub(crate) fn joint_action_unchecked(&self, values: Vec<f64>) -> JointAction {
        JointAction::unchecked(values, self.offsets.clone())
    }

    pub fn is_feasible(&self, values: &[f64]) -> bool {
        values.len() == self.total_dim()
            && self
                .clusters
                .iter()
                .enumerate()
                .all(|(i, c)| c.contains(&values[self.cluster_range(i)]))
    }

    /// Componentwise projection of a flat vector onto the joint box.
    pub fn project(&self, values: &[f64]) -> Result<Vec<f64>, GameError> {
        if values.len() != self.total_dim() {
            return Err(GameError::Dimension {
                expected: self.total_dim(),
                got: values.len(),
            });
        }
        let mut out = Vec::with_capacity(values.len());
        for (i, cluster) in self.clusters.iter().enumerate() {
            out.extend(cluster.project(&values[self.cluster_range(i)])?);
        }
        Ok(out)
    }

    /// Joint action with every component at its box midpoint.
    pub fn midpoint(&self) -> JointAction {
        let values = self
            .clusters
            .iter()
            .flat_map(|c| c.midpoint())
            .collect();
        self.joint_action_unchecked(values)
    }

    /// Local cost `J_i^j(x)` of agent `j` in cluster `i`.
    pub fn eval_local_cost(&self, i: usize, j: usize, x: &JointAction) -> Result<f64, GameError> {
        self.check_agent(i, j)?;
        let value = self.cost.local_cost(i, j, x);
        if !value.is_finite() {
            return Err(GameError::NonFiniteCost {
                cluster: i,
                agent: j,
            });
        }
        Ok(value)
    }

    /// Cluster cost `J_i(x) = (1/n_i) sum_j J_i^j(x)`.
    pub fn eval_cluster_cost(&self, i: usize, x: &JointAction) -> Result<f64, GameError> {
        self.check_cluster(i)?;
        let n = self.clusters[i].agent_count();
        let mut total = 0.0;
        for j in 0..n {
            total += self.eval_local_cost(i, j, x)?;
        }
        Ok(total / n as f64)
    }

    /// Gradient of the local cost `J_i^j` with respect to cluster `i`'s block,
    /// analytic when the cost model provides one, otherwise central finite
    /// differences with the configured step.
    pub fn local_gradient(&self, i: usize, j: usize, x: &JointAction) -> Result<Vec<f64>, GameError> {
        self.check_agent(i, j)?;
        if let Some(grad) = self.cost.local_gradient(i, j, x) {
            if grad.len() != self.clusters[i].agent_count() {
                return Err(GameError::Dimension {
                    expected: self.clusters[i].agent_count(),
                    got: grad.len(),
                });
            }
            return Ok(grad);
        }
        let step = self.fd_step.ok_or(GameError::GradientUnavailable {
            cluster: i,
            agent: j,
        })?;
        self.fd_local_gradient(i, j, x, step)
    }

    fn fd_local_gradient(
        &self,
        i: usize,
        j: usize,
        x: &JointAction,
        step: f64,
    ) -> Result<Vec<f64>, GameError> {
        let offset = self.offsets[i];
        let cluster = &self.clusters[i];
        let mut grad = vec![0.0; cluster.agent_count()];
        let mut values = x.as_slice().to_vec();
        for k in 0..cluster.agent_count() {
            let iv = cluster.intervals()[k];
            let v = values[offset + k];
            if v - step < iv.lower() || v + step > iv.upper() {
                return Err(GameError::TooCloseToBoundary {
                    component: offset + k,
                    value: v,
                    step,
                });
            }
            values[offset + k] = v + step;
            let plus = self
                .cost
                .local_cost(i, j, &JointAction::unchecked(values.clone(), self.offsets.clone()));
            values[offset + k] = v - step;
            let minus = self
                .cost
                .local_cost(i, j, &JointAction::unchecked(values.clone(), self.offsets.clone()));
            values[offset + k] = v;
            let d = (plus - minus) / (2.0 * step);
            if !d.is_finite() {
                return Err(GameError::NonFiniteCost {
                    cluster: i,
                    agent: j,
                });
            }
            grad[k] = d;
        }
        Ok(grad)
    }

    /// Gradient of the cluster cost `J_i` with respect to cluster `i`'s block.
    pub fn exact_cluster_gradient(&self, i: usize, x: &JointAction) -> Result<Vec<f64>, GameError> {
        self.check_cluster(i)?;
        let n = self.clusters[i].agent_count();
        let mut grad = vec![0.0; n];
        for j in 0..n {
            let local = self.local_gradient(i, j, x)?;
            for (g, l) in grad.iter_mut().zip(&local) {
                *g += l;
            }
        }
        let inv = 1.0 / n as f64;
        for g in &mut grad {
            *g *= inv;
        }
        Ok(grad)
    }

    /// The game mapping `F(x)`: cluster gradients stacked in cluster order.
    pub fn game_mapping(&self, x: &JointAction) -> Result<Vec<f64>, GameError> {
        let mut out = Vec::with_capacity(self.total_dim());
        for i in 0..self.clusters.len() {
            out.extend(self.exact_cluster_gradient(i, x)?);
        }
        Ok(out)
    }
}

impl std::fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GameSpec")
            .field("clusters", &self.clusters)
            .field("fd_step", &self.fd_step)
            .finish_non_exhaustive()
    }
}

#[cfg(test)]
mod tests;
