//! Cournot oligopoly with clustered firms and a shared linear inverse demand.
//!
//! Agent `j` of cluster `i` produces `x_i^j` and pays
//! `J_i^j(x) = a_i^j (x_i^j)^2 + b_i^j x_i^j + c_i^j - x_i^j P(x)` where
//! `P(x) = P_c - sum of all production`. The price couples all clusters.

use super::{ActionInterval, ClusterSpec, CostModel, GameError, GameSpec, JointAction};

/// Per-agent quadratic cost coefficients of one Cournot cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotCluster {
    /// Quadratic production-cost coefficients, one per agent; all positive.
    pub a: Vec<f64>,
    /// Linear production-cost coefficients, one per agent.
    pub b: Vec<f64>,
    /// Fixed costs, one per agent.
    pub c: Vec<f64>,
    /// Common production interval `[lower, upper]` for every agent.
    pub lower: f64,
    pub upper: f64,
}

/// Parameters of a clustered Cournot market.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotParams {
    clusters: Vec<CournotCluster>,
    price_cap: f64,
}

impl CournotParams {
    pub fn new(clusters: Vec<CournotCluster>, price_cap: f64) -> Result<Self, GameError> {
        if clusters.is_empty() {
            return Err(GameError::EmptyGame);
        }
        let mut max_supply = 0.0;
        for (i, cl) in clusters.iter().enumerate() {
            let n = cl.a.len();
            if n == 0 {
                return Err(GameError::EmptyCluster);
            }
            if cl.b.len() != n || cl.c.len() != n {
                return Err(GameError::InvalidParams(format!(
                    "cluster {i}: coefficient vectors a, b, c must share one length"
                )));
            }
            if let Some(&bad) = cl.a.iter().find(|&&a| !(a > 0.0)) {
                return Err(GameError::InvalidParams(format!(
                    "cluster {i}: quadratic coefficients must be positive, got {bad}"
                )));
            }
            max_supply += cl.upper * n as f64;
        }
        if !(price_cap > max_supply) {
            return Err(GameError::InvalidParams(format!(
                "price cap {price_cap} must exceed the maximum total supply {max_supply} \
                 so the price stays positive"
            )));
        }
        Ok(Self {
            clusters,
            price_cap,
        })
    }

    /// Two-cluster market with four firms per cluster used throughout the
    /// test suite and the bundled scenarios.
    pub fn duopoly() -> Self {
        Self::new(
            vec![
                CournotCluster {
                    a: vec![5.0, 8.0, 4.0, 5.0],
                    b: vec![10.0, 11.0, 9.0, 12.0],
                    c: vec![1.0, 3.0, 2.0, 5.0],
                    lower: 0.0,
                    upper: 20.0,
                },
                CournotCluster {
                    a: vec![3.0, 7.0, 9.0, 2.0],
                    b: vec![10.0, 11.0, 12.0, 9.0],
                    c: vec![3.0, 2.0, 3.0, 1.0],
                    lower: 0.0,
                    upper: 10.0,
                },
            ],
            250.0,
        )
        .expect("built-in market parameters are valid")
    }

    pub fn price_cap(&self) -> f64 {
        self.price_cap
    }

    pub fn clusters(&self) -> &[CournotCluster] {
        &self.clusters
    }

    /// Market price at a joint production level.
    pub fn price(&self, joint: &JointAction) -> f64 {
        self.price_cap - joint.as_slice().iter().sum::<f64>()
    }

    /// Assemble the playable game: boxes with default safety balls plus costs.
    pub fn into_game(self) -> Result<GameSpec, GameError> {
        let mut specs = Vec::with_capacity(self.clusters.len());
        for cl in &self.clusters {
            let intervals = (0..cl.a.len())
                .map(|_| ActionInterval::new(cl.lower, cl.upper))
                .collect::<Result<Vec<_>, _>>()?;
            specs.push(ClusterSpec::with_default_safety_ball(intervals)?);
        }
        GameSpec::new(specs, Box::new(self))
    }
}

impl CostModel for CournotParams {
    fn local_cost(&self, cluster: usize, agent: usize, joint: &JointAction) -> f64 {
        let cl = &self.clusters[cluster];
        let x = joint.cluster(cluster)[agent];
        let price = self.price(joint);
        cl.a[agent] * x * x + cl.b[agent] * x + cl.c[agent] - x * price
    }

    fn local_gradient(
        &self,
        cluster: usize,
        agent: usize,
        joint: &JointAction,
    ) -> Option<Vec<f64>> {
        // d J_i^j / d x_i^k = delta_jk (2 a_j x_j + b_j - P(x)) + x_j:
        // the price term contributes x_j to every in-cluster component.
        let cl = &self.clusters[cluster];
        let own = joint.cluster(cluster);
        let price = self.price(joint);
        let xj = own[agent];
        let mut grad = vec![xj; own.len()];
        grad[agent] += 2.0 * cl.a[agent] * xj + cl.b[agent] - price;
        Some(grad)
    }
}
