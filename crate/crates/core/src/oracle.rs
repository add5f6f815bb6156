//! The per-round cost oracle.
//!
//! Each iteration every agent submits one feasible query for its own cluster
//! block. The oracle completes each agent's query into a full joint point by
//! picking one representative query from every other cluster, evaluates that
//! agent's local cost there, and hands back the scalar value — never a
//! gradient. Representative choices are drawn from counter-based streams so
//! answers are independent of evaluation order.

use rand::Rng;
use thiserror::Error;

use crate::game::{GameError, GameSpec, JointAction};
use crate::rng::{stream, tag};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("round has {got} clusters, game has {expected}")]
    ClusterCount { expected: usize, got: usize },
    #[error("round is incomplete: cluster {cluster} submitted {got} queries, needs {expected}")]
    IncompleteRound {
        cluster: usize,
        expected: usize,
        got: usize,
    },
    #[error("query of agent {agent} in cluster {cluster} has {got} components, expected {expected}")]
    QueryDimension {
        cluster: usize,
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("query of agent {agent} in cluster {cluster} is infeasible: {source}")]
    InfeasibleQuery {
        cluster: usize,
        agent: usize,
        source: GameError,
    },
    #[error("fixed-agent policy lists {got} indices, game has {expected} clusters")]
    FixedIndexCount { expected: usize, got: usize },
    #[error("fixed-agent policy picks agent {agent} in cluster {cluster}, which has {agents} agents")]
    FixedIndexRange {
        cluster: usize,
        agent: usize,
        agents: usize,
    },
    #[error("iteration index starts at 1")]
    ZeroIteration,
    #[error("cluster index {cluster} out of range")]
    ClusterIndex { cluster: usize },
    #[error("agent index {agent} out of range in cluster {cluster}")]
    AgentIndex { cluster: usize, agent: usize },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// All queries of one synchronous round: `queries[i][j]` is the feasible
/// cluster-`i` point submitted by agent `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRound {
    queries: Vec<Vec<Vec<f64>>>,
}

impl QueryRound {
    /// Validate completeness, dimensions, and feasibility of every query.
    pub fn new(spec: &GameSpec, queries: Vec<Vec<Vec<f64>>>) -> Result<Self, OracleError> {
        if queries.len() != spec.cluster_count() {
            return Err(OracleError::ClusterCount {
                expected: spec.cluster_count(),
                got: queries.len(),
            });
        }
        for (i, cluster_queries) in queries.iter().enumerate() {
            let cluster = spec.cluster(i);
            if cluster_queries.len() != cluster.agent_count() {
                return Err(OracleError::IncompleteRound {
                    cluster: i,
                    expected: cluster.agent_count(),
                    got: cluster_queries.len(),
                });
            }
            for (j, q) in cluster_queries.iter().enumerate() {
                if q.len() != cluster.agent_count() {
                    return Err(OracleError::QueryDimension {
                        cluster: i,
                        agent: j,
                        expected: cluster.agent_count(),
                        got: q.len(),
                    });
                }
                if !cluster.contains(q) {
                    let source = cluster
                        .project(q)
                        .err()
                        .unwrap_or_else(|| infeasible_detail(cluster, q));
                    return Err(OracleError::InfeasibleQuery {
                        cluster: i,
                        agent: j,
                        source,
                    });
                }
            }
        }
        Ok(Self { queries })
    }

    pub fn query(&self, cluster: usize, agent: usize) -> &[f64] {
        &self.queries[cluster][agent]
    }

    pub fn cluster_count(&self) -> usize {
        self.queries.len()
    }
}

fn infeasible_detail(cluster: &crate::game::ClusterSpec, q: &[f64]) -> GameError {
    for (k, (&v, iv)) in q.iter().zip(cluster.intervals()).enumerate() {
        if !iv.contains(v) {
            return GameError::Infeasible {
                component: k,
                value: v,
                lower: iv.lower(),
                upper: iv.upper(),
            };
        }
    }
    GameError::Dimension {
        expected: cluster.agent_count(),
        got: q.len(),
    }
}

/// How the oracle picks the representative query of each other cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CombinationPolicy {
    /// Independent uniform draw per (asking agent, other cluster, iteration).
    UniformRandom,
    /// Always the listed agent of each cluster.
    FixedAgent(Vec<usize>),
    /// Iteration t uses agent (t - 1) mod n_k of cluster k.
    RoundRobin,
}

impl CombinationPolicy {
    pub(crate) fn validate(&self, spec: &GameSpec) -> Result<(), OracleError> {
        if let CombinationPolicy::FixedAgent(indices) = self {
            if indices.len() != spec.cluster_count() {
                return Err(OracleError::FixedIndexCount {
                    expected: spec.cluster_count(),
                    got: indices.len(),
                });
            }
            for (cluster, &agent) in indices.iter().enumerate() {
                let agents = spec.cluster(cluster).agent_count();
                if agent >= agents {
                    return Err(OracleError::FixedIndexRange {
                        cluster,
                        agent,
                        agents,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Seed and iteration index identifying one oracle round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundContext {
    pub seed: u64,
    /// 1-based iteration counter of the run.
    pub iteration: u64,
}

/// Representative agent of cluster `k` chosen for asking agent (i, j).
fn representative(
    policy: &CombinationPolicy,
    ctx: RoundContext,
    i: usize,
    j: usize,
    k: usize,
    agents_in_k: usize,
) -> usize {
    match policy {
        CombinationPolicy::UniformRandom => {
            let mut rng = stream(
                ctx.seed,
                &[
                    tag::REPRESENTATIVE,
                    ctx.iteration,
                    i as u64,
                    j as u64,
                    k as u64,
                ],
            );
            rng.gen_range(0..agents_in_k)
        }
        CombinationPolicy::FixedAgent(indices) => indices[k],
        CombinationPolicy::RoundRobin => ((ctx.iteration - 1) % agents_in_k as u64) as usize,
    }
}

/// The joint point assembled for agent (i, j): its own query in block `i`,
/// one representative query per other cluster.
pub fn assemble_joint_query(
    spec: &GameSpec,
    round: &QueryRound,
    i: usize,
    j: usize,
    policy: &CombinationPolicy,
    ctx: RoundContext,
) -> Result<JointAction, OracleError> {
    let (joint, _) = assemble_with_representatives(spec, round, i, j, policy, ctx)?;
    Ok(joint)
}

fn assemble_with_representatives(
    spec: &GameSpec,
    round: &QueryRound,
    i: usize,
    j: usize,
    policy: &CombinationPolicy,
    ctx: RoundContext,
) -> Result<(JointAction, Vec<usize>), OracleError> {
    if round.cluster_count() != spec.cluster_count() {
        return Err(OracleError::ClusterCount {
            expected: spec.cluster_count(),
            got: round.cluster_count(),
        });
    }
    if i >= spec.cluster_count() {
        return Err(OracleError::ClusterIndex { cluster: i });
    }
    if j >= spec.cluster(i).agent_count() {
        return Err(OracleError::AgentIndex {
            cluster: i,
            agent: j,
        });
    }
    if ctx.iteration == 0 {
        return Err(OracleError::ZeroIteration);
    }
    policy.validate(spec)?;

    let mut values = Vec::with_capacity(spec.total_dim());
    let mut reps = Vec::with_capacity(spec.cluster_count());
    for k in 0..spec.cluster_count() {
        let rep = if k == i {
            j
        } else {
            representative(policy, ctx, i, j, k, spec.cluster(k).agent_count())
        };
        reps.push(rep);
        values.extend_from_slice(round.query(k, rep));
    }
    // Feasible by construction: every submitted query passed the round check.
    Ok((spec.joint_action_unchecked(values), reps))
}

/// One scalar answer per agent plus the representatives that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnswer {
    values: Vec<Vec<f64>>,
    representatives: Vec<Vec<Vec<usize>>>,
}

impl OracleAnswer {
    /// Cost value returned to agent `j` of cluster `i`.
    pub fn value(&self, cluster: usize, agent: usize) -> f64 {
        self.values[cluster][agent]
    }

    /// Map cluster -> representative agent used for (cluster, agent)'s answer;
    /// the asking agent represents its own cluster.
    pub fn representatives(&self, cluster: usize, agent: usize) -> &[usize] {
        &self.representatives[cluster][agent]
    }
}

/// Answer every agent of the round: evaluate each local cost at its assembled
/// joint query. Pure costs plus pre-drawn representatives make the result
/// independent of evaluation order.
pub fn answer_queries(
    spec: &GameSpec,
    round: &QueryRound,
    policy: &CombinationPolicy,
    ctx: RoundContext,
) -> Result<OracleAnswer, OracleError> {
    let mut values = Vec::with_capacity(spec.cluster_count());
    let mut representatives = Vec::with_capacity(spec.cluster_count());
    for i in 0..spec.cluster_count() {
        let n_i = spec.cluster(i).agent_count();
        let mut cluster_values = Vec::with_capacity(n_i);
        let mut cluster_reps = Vec::with_capacity(n_i);
        for j in 0..n_i {
            let (joint, reps) = assemble_with_representatives(spec, round, i, j, policy, ctx)?;
            cluster_values.push(spec.eval_local_cost(i, j, &joint)?);
            cluster_reps.push(reps);
        }
        values.push(cluster_values);
        representatives.push(cluster_reps);
    }
    Ok(OracleAnswer {
        values,
        representatives,
    })
}
