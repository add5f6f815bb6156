//! Separable quadratic game: each agent pulls its cluster toward a target.
//!
//! Agent `j` of cluster `i` pays `J_i^j(x) = 0.5 * ||x_i - c_i||^2`, so every
//! agent in a cluster shares the cost and the unique equilibrium is the
//! projection of each target onto its box. Useful as a noise-friendly
//! benchmark because costs stay small near the equilibrium.

use super::{ActionInterval, ClusterSpec, CostModel, GameError, GameSpec, JointAction};

/// Targets and boxes of the separable quadratic game.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticParams {
    /// Per-cluster target points; the length of each sets the cluster size.
    pub targets: Vec<Vec<f64>>,
    /// Per-cluster `[lower, upper]` bounds shared by that cluster's agents.
    pub bounds: Vec<(f64, f64)>,
}

impl QuadraticParams {
    pub fn new(targets: Vec<Vec<f64>>, bounds: Vec<(f64, f64)>) -> Result<Self, GameError> {
        if targets.is_empty() {
            return Err(GameError::EmptyGame);
        }
        if targets.len() != bounds.len() {
            return Err(GameError::InvalidParams(format!(
                "{} targets but {} bound pairs",
                targets.len(),
                bounds.len()
            )));
        }
        if targets.iter().any(|t| t.is_empty()) {
            return Err(GameError::EmptyCluster);
        }
        Ok(Self { targets, bounds })
    }

    /// Two clusters of two agents on `[0, 10]^2` with interior targets.
    pub fn two_cluster_example() -> Self {
        Self::new(
            vec![vec![4.0, 6.0], vec![7.0, 3.0]],
            vec![(0.0, 10.0), (0.0, 10.0)],
        )
        .expect("built-in quadratic parameters are valid")
    }

    pub fn into_game(self) -> Result<GameSpec, GameError> {
        let mut specs = Vec::with_capacity(self.targets.len());
        for (target, &(lower, upper)) in self.targets.iter().zip(&self.bounds) {
            let intervals = (0..target.len())
                .map(|_| ActionInterval::new(lower, upper))
                .collect::<Result<Vec<_>, _>>()?;
            specs.push(ClusterSpec::with_default_safety_ball(intervals)?);
        }
        GameSpec::new(specs, Box::new(self))
    }
}

impl CostModel for QuadraticParams {
    fn local_cost(&self, cluster: usize, _agent: usize, joint: &JointAction) -> f64 {
        let target = &self.targets[cluster];
        joint
            .cluster(cluster)
            .iter()
            .zip(target)
            .map(|(&x, &c)| (x - c) * (x - c))
            .sum::<f64>()
            * 0.5
    }

    fn local_gradient(
        &self,
        cluster: usize,
        _agent: usize,
        joint: &JointAction,
    ) -> Option<Vec<f64>> {
        let target = &self.targets[cluster];
        Some(
            joint
                .cluster(cluster)
                .iter()
                .zip(target)
                .map(|(&x, &c)| x - c)
                .collect(),
        )
    }
}
