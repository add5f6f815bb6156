//! Intra-cluster communication graphs and consensus mixing.
//!
//! Each cluster's agents exchange state over a connected undirected graph.
//! The mixing matrix built here follows the Metropolis–Hastings rule, which
//! yields symmetric doubly stochastic weights from local degrees alone.

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph needs at least one node")]
    ZeroNodes,
    #[error("self-loop on node {node} is not allowed")]
    SelfLoop { node: usize },
    #[error("edge ({k}, {j}) out of range for {nodes} nodes")]
    EdgeOutOfRange { k: usize, j: usize, nodes: usize },
    #[error("graph is not connected")]
    Disconnected,
    #[error("mixing matrix must be square, row {row} has {got} entries for {nodes} nodes")]
    NotSquare { row: usize, got: usize, nodes: usize },
    #[error("mixing matrix entry ({k}, {j}) is not finite")]
    NonFiniteWeight { k: usize, j: usize },
    #[error("expected {expected} agent states, got {got}")]
    StateCount { expected: usize, got: usize },
    #[error("agent states must share one length, state {index} has {got} (first has {first})")]
    StateLength {
        index: usize,
        got: usize,
        first: usize,
    },
}

/// Connected undirected graph on nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    node_count: usize,
    edges: BTreeSet<(usize, usize)>, // stored with k < j
}

impl UndirectedGraph {
    /// Graph from an edge list; edges are unordered and deduplicated.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if node_count == 0 {
            return Err(GraphError::ZeroNodes);
        }
        let mut set = BTreeSet::new();
        for &(k, j) in edges {
            if k == j {
                return Err(GraphError::SelfLoop { node: k });
            }
            if k >= node_count || j >= node_count {
                return Err(GraphError::EdgeOutOfRange {
                    k,
                    j,
                    nodes: node_count,
                });
            }
            set.insert((k.min(j), k.max(j)));
        }
        let graph = Self {
            node_count,
            edges: set,
        };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(graph)
    }

    /// Every pair of distinct nodes adjacent.
    pub fn complete(node_count: usize) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for k in 0..node_count {
            for j in k + 1..node_count {
                edges.push((k, j));
            }
        }
        Self::new(node_count, &edges)
    }

    /// Chain `0 - 1 - ... - (n-1)`.
    pub fn path(node_count: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..node_count).map(|j| (j - 1, j)).collect();
        Self::new(node_count, &edges)
    }

    /// Path closed into a cycle (coincides with the path for n <= 2).
    pub fn ring(node_count: usize) -> Result<Self, GraphError> {
        let mut edges: Vec<_> = (1..node_count).map(|j| (j - 1, j)).collect();
        if node_count > 2 {
            edges.push((node_count - 1, 0));
        }
        Self::new(node_count, &edges)
    }

    /// Node 0 adjacent to every other node.
    pub fn star(node_count: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..node_count).map(|j| (0, j)).collect();
        Self::new(node_count, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, k: usize, j: usize) -> bool {
        k != j && self.edges.contains(&(k.min(j), k.max(j)))
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == node || b == node)
            .count()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                let w = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Consensus weights over one cluster's graph, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    weights: Vec<f64>,
}

impl MixingMatrix {
    /// Matrix from explicit rows. Only shape and finiteness are enforced here;
    /// use [`validate_mixing`] to check the consensus invariants.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, GraphError> {
        let n = rows.len();
        if n == 0 {
            return Err(GraphError::ZeroNodes);
        }
        let mut weights = Vec::with_capacity(n * n);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::NotSquare {
                    row: k,
                    got: row.len(),
                    nodes: n,
                });
            }
            for (j, &w) in row.iter().enumerate() {
                if !w.is_finite() {
                    return Err(GraphError::NonFiniteWeight { k, j });
                }
                weights.push(w);
            }
        }
        Ok(Self { n, weights })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.weights[k * self.n + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.n..(k + 1) * self.n]
    }

    /// One synchronous consensus step: output `j` is `sum_l w_jl * states[l]`.
    ///
    /// Doubly stochastic weights keep the componentwise average over agents
    /// unchanged, so mixing redistributes but never creates mass.
    pub fn mix(&self, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, GraphError> {
        if states.len() != self.n {
            return Err(GraphError::StateCount {
                expected: self.n,
                got: states.len(),
            });
        }
        let dim = states.first().map_or(0, |s| s.len());
        for (index, s) in states.iter().enumerate() {
            if s.len() != dim {
                return Err(GraphError::StateLength {
                    index,
                    got: s.len(),
                    first: dim,
                });
            }
        }
        let mut out = vec![vec![0.0; dim]; self.n];
        for (j, target) in out.iter_mut().enumerate() {
            for (l, source) in states.iter().enumerate() {
                let w = self.get(j, l);
                if w == 0.0 {
                    continue;
                }
                for (t, &s) in target.iter_mut().zip(source) {
                    *t += w * s;
                }
            }
        }
        Ok(out)
    }
}

/// Metropolis–Hastings weights: `w_kj = 1 / (1 + max(deg k, deg j))` on edges,
/// the residual on the diagonal. Symmetric and doubly stochastic by
/// construction on any connected graph.
pub fn build_metropolis_weights(g: &UndirectedGraph) -> MixingMatrix {
    let n = g.node_count();
    let degrees: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut weights = vec![0.0; n * n];
    for (k, j) in g.edges() {
        let w = 1.0 / (1.0 + degrees[k].max(degrees[j]) as f64);
        weights[k * n + j] = w;
        weights[j * n + k] = w;
    }
    for k in 0..n {
        let off_diagonal: f64 = (0..n).filter(|&j| j != k).map(|j| weights[k * n + j]).sum();
        weights[k * n + k] = 1.0 - off_diagonal;
    }
    MixingMatrix { n, weights }
}

/// Everything [`validate_mixing`] found wrong with a matrix/graph pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MixingReport {
    violations: Vec<String>,
}

impl MixingReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }
}

/// Check a mixing matrix against the consensus requirements: nonnegativity,
/// row and column sums of 1 (within 1e-12), symmetry, and a sparsity pattern
/// that is positive exactly on edges and the diagonal. Report-valued: every
/// violation is listed, nothing panics.
pub fn validate_mixing(w: &MixingMatrix, g: &UndirectedGraph) -> MixingReport {
    const TOL: f64 = 1e-12;
    let mut violations = Vec::new();
    let n = w.node_count();
    if n != g.node_count() {
        violations.push(format!(
            "matrix has {n} nodes but graph has {}",
            g.node_count()
        ));
        return MixingReport { violations };
    }
    for k in 0..n {
        for j in 0..n {
            let v = w.get(k, j);
            if v < 0.0 {
                violations.push(format!("negative weight w[{k}][{j}] = {v}"));
            }
            if j > k && (v - w.get(j, k)).abs() > TOL {
                violations.push(format!(
                    "asymmetric pair w[{k}][{j}] = {v} vs w[{j}][{k}] = {}",
                    w.get(j, k)
                ));
            }
            if k != j {
                let adjacent = g.has_edge(k, j);
                if adjacent && v <= 0.0 {
                    violations.push(format!("edge ({k}, {j}) has non-positive weight {v}"));
                } else if !adjacent && v != 0.0 {
                    violations.push(format!("non-edge ({k}, {j}) has weight {v}"));
                }
            }
        }
        let row_sum: f64 = w.row(k).iter().sum();
        if (row_sum - 1.0).abs() > TOL {
            violations.push(format!("row {k} sums to {row_sum}"));
        }
        let col_sum: f64 = (0..n).map(|j| w.get(j, k)).sum();
        if (col_sum - 1.0).abs() > TOL {
            violations.push(format!("column {k} sums to {col_sum}"));
        }
    }
    MixingReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_connected_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> UndirectedGraph {
        let n = rng.gen_range(1..=max_nodes);
        // Random spanning tree first, then extra edges.
        let mut edges = Vec::new();
        for v in 1..n {
            edges.push((rng.gen_range(0..v), v));
        }
        for k in 0..n {
            for j in k + 1..n {
                if rng.gen_bool(0.25) {
                    edges.push((k, j));
                }
            }
        }
        UndirectedGraph::new(n, &edges).unwrap()
    }

    #[test]
    fn construction_rejects_bad_edge_lists() {
        assert!(matches!(
            UndirectedGraph::new(0, &[]),
            Err(GraphError::ZeroNodes)
        ));
        assert!(matches!(
            UndirectedGraph::new(3, &[(1, 1)]),
            Err(GraphError::SelfLoop { node: 1 })
        ));
        assert!(matches!(
            UndirectedGraph::new(3, &[(0, 3)]),
            Err(GraphError::EdgeOutOfRange { .. })
        ));
        assert!(matches!(
            UndirectedGraph::new(4, &[(0, 1), (2, 3)]),
            Err(GraphError::Disconnected)
        ));
    }

    #[test]
    fn edges_are_unordered_and_deduplicated() {
        let g = UndirectedGraph::new(3, &[(0, 1), (1, 0), (1, 2), (2, 1)]).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(0, 1));
        assert!(g.has_edge(1, 0));
        assert!(!g.has_edge(0, 2));
    }

    #[test]
    fn presets_have_expected_shapes() {
        let complete = UndirectedGraph::complete(4).unwrap();
        assert_eq!(complete.edge_count(), 6);
        assert!((0..4).all(|v| complete.degree(v) == 3));

        let path = UndirectedGraph::path(4).unwrap();
        assert_eq!(path.edge_count(), 3);
        assert_eq!(path.degree(0), 1);
        assert_eq!(path.degree(1), 2);

        let ring = UndirectedGraph::ring(4).unwrap();
        assert_eq!(ring.edge_count(), 4);
        assert!((0..4).all(|v| ring.degree(v) == 2));
        // Small rings coincide with paths rather than doubling an edge.
        assert_eq!(UndirectedGraph::ring(2).unwrap().edge_count(), 1);

        let star = UndirectedGraph::star(5).unwrap();
        assert_eq!(star.edge_count(), 4);
        assert_eq!(star.degree(0), 4);
        assert_eq!(star.degree(3), 1);

        assert_eq!(UndirectedGraph::complete(1).unwrap().edge_count(), 0);
    }

    #[test]
    fn metropolis_weights_on_known_graphs() {
        let two = build_metropolis_weights(&UndirectedGraph::complete(2).unwrap());
        assert_eq!(two.row(0), &[0.5, 0.5]);
        assert_eq!(two.row(1), &[0.5, 0.5]);

        let single = build_metropolis_weights(&UndirectedGraph::complete(1).unwrap());
        assert_eq!(single.row(0), &[1.0]);

        let path3 = build_metropolis_weights(&UndirectedGraph::path(3).unwrap());
        let third = 1.0 / 3.0;
        let expected = [
            [2.0 * third, third, 0.0],
            [third, third, third],
            [0.0, third, 2.0 * third],
        ];
        for (k, row) in expected.iter().enumerate() {
            for (j, want) in row.iter().enumerate() {
                assert!(
                    (path3.get(k, j) - want).abs() <= 1e-15,
                    "w[{k}][{j}] = {} vs {want}",
                    path3.get(k, j)
                );
            }
        }

        // Complete graph on 4 nodes: every weight 1/4.
        let k4 = build_metropolis_weights(&UndirectedGraph::complete(4).unwrap());
        for k in 0..4 {
            for j in 0..4 {
                assert_eq!(k4.get(k, j), 0.25);
            }
        }
    }

    #[test]
    fn metropolis_weights_validate_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..100 {
            let g = random_connected_graph(&mut rng, 20);
            let w = build_metropolis_weights(&g);
            let report = validate_mixing(&w, &g);
            assert!(report.is_valid(), "violations: {:?}", report.violations());
        }
    }

    #[test]
    fn validation_reports_each_violation_class() {
        let g = UndirectedGraph::path(3).unwrap();
        // Row 0 sums to 0.9 and breaks symmetry; (0, 2) is a non-edge.
        let w = MixingMatrix::from_rows(vec![
            vec![0.5, 0.3, 0.1],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![0.0, 1.0 / 3.0, 2.0 / 3.0],
        ])
        .unwrap();
        let report = validate_mixing(&w, &g);
        assert!(!report.is_valid());
        let text = report.violations().join("\n");
        assert!(text.contains("row 0 sums to 0.9"));
        assert!(text.contains("non-edge (0, 2)"));
        assert!(text.contains("asymmetric pair"));
    }

    #[test]
    fn mixing_preserves_identical_states_and_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = UndirectedGraph::ring(5).unwrap();
        let w = build_metropolis_weights(&g);

        let s = vec![1.0, -2.0, 0.5];
        let same = vec![s.clone(); 5];
        let mixed = w.mix(&same).unwrap();
        for out in &mixed {
            for (a, b) in out.iter().zip(&s) {
                assert!((a - b).abs() <= 1e-15);
            }
        }

        for _ in 0..20 {
            let states: Vec<Vec<f64>> = (0..5)
                .map(|_| (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect())
                .collect();
            let before: Vec<f64> = (0..3)
                .map(|d| states.iter().map(|s| s[d]).sum::<f64>() / 5.0)
                .collect();
            let mixed = w.mix(&states).unwrap();
            let after: Vec<f64> = (0..3)
                .map(|d| mixed.iter().map(|s| s[d]).sum::<f64>() / 5.0)
                .collect();
            for (a, b) in before.iter().zip(&after) {
                assert!((a - b).abs() <= 1e-12, "average moved: {a} -> {b}");
            }
        }
    }

    #[test]
    fn identity_matrix_leaves_states_unchanged() {
        let w = MixingMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let states = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(w.mix(&states).unwrap(), states);
    }

    #[test]
    fn mixing_rejects_mismatched_dimensions() {
        let w = build_metropolis_weights(&UndirectedGraph::path(3).unwrap());
        assert!(matches!(
            w.mix(&[vec![1.0], vec![2.0]]),
            Err(GraphError::StateCount {
                expected: 3,
                got: 2
            })
        ));
        assert!(matches!(
            w.mix(&[vec![1.0], vec![2.0, 3.0], vec![4.0]]),
            Err(GraphError::StateLength { index: 1, .. })
        ));
    }

    #[test]
    fn repeated_mixing_reaches_consensus_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for graph in [
            UndirectedGraph::complete(4).unwrap(),
            UndirectedGraph::path(4).unwrap(),
            UndirectedGraph::ring(4).unwrap(),
            UndirectedGraph::star(4).unwrap(),
        ] {
            let w = build_metropolis_weights(&graph);
            let mut states: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect())
                .collect();
            let mean: Vec<f64> = (0..4)
                .map(|d| states.iter().map(|s| s[d]).sum::<f64>() / 4.0)
                .collect();
            let spread = |states: &[Vec<f64>]| -> f64 {
                states
                    .iter()
                    .map(|s| {
                        s.iter()
                            .zip(&mean)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(0.0, f64::max)
            };
            let initial = spread(&states);
            for _ in 0..200 {
                states = w.mix(&states).unwrap();
            }
            assert!(
                spread(&states) <= 1e-8 * initial,
                "spread {} after 200 rounds (initial {initial})",
                spread(&states)
            );
        }
    }
}
