//! The distributed seeking loop: mix, query, estimate, projected step.
//!
//! Agents never see gradients. Each iteration `t` (1-based) every agent
//! averages its neighbors' cluster estimates through the mixing matrix,
//! perturbs its own pre-mix estimate into a feasible query, receives a single
//! cost value from the oracle, scales it into a gradient surrogate, and takes
//! a projected step:
//!
//! `x_i^(j)(t+1) = proj_box( sum_l w_jl x_i^(l)(t) - alpha_t d_i^j(t) )`
//!
//! with diminishing step `alpha_t = alpha0 / tau^a` and query radius
//! `sigma_t = sigma0 / tau^b`, `tau = t + t_offset - 1`. All substeps consume
//! iteration-`t` state, so the update is synchronous across agents.

use thiserror::Error;

use crate::estimator::{build_query_point, estimate_gradient, sample_unit_sphere, EstimatorError};
use crate::game::{GameError, GameSpec};
use crate::graph::{build_metropolis_weights, GraphError, MixingMatrix, UndirectedGraph};
use crate::oracle::{answer_queries, CombinationPolicy, OracleError, QueryRound, RoundContext};
use crate::rng::{stream, tag};
use crate::vecmath::{dist, mean, norm, sub_scaled};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("schedule is invalid: {}", .0.join("; "))]
    InvalidSchedule(Vec<String>),
    #[error("{got} graphs supplied for {expected} clusters")]
    GraphCount { expected: usize, got: usize },
    #[error("graph {cluster} has {nodes} nodes, cluster has {agents} agents")]
    GraphSize {
        cluster: usize,
        agents: usize,
        nodes: usize,
    },
    #[error("record_every must be at least 1")]
    ZeroRecordEvery,
    #[error("reference point has {got} components, game has {expected}")]
    ReferenceDimension { expected: usize, got: usize },
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Diminishing step-size and query-radius schedule.
///
/// Valid parameters satisfy `1/2 < a <= 1`, `b >= 0`, `a + b > 1`, and
/// `2a - 2b > 1`; the initial radius must fit inside every safety ball.
/// [`validate_schedule`] checks all of these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub alpha0: f64,
    pub sigma0: f64,
    pub a: f64,
    pub b: f64,
    /// Origin of the decay clock: iteration t uses tau = t + t_offset - 1.
    pub t_offset: u64,
}

impl Schedule {
    /// The classic exponent pair `a = 1`, `b = 1/3` with the clock at 1.
    pub fn standard(alpha0: f64, sigma0: f64) -> Self {
        Self {
            alpha0,
            sigma0,
            a: 1.0,
            b: 1.0 / 3.0,
            t_offset: 1,
        }
    }

    fn tau(&self, t: u64) -> f64 {
        (t + self.t_offset.saturating_sub(1)) as f64
    }

    /// Step size at iteration `t >= 1`.
    pub fn alpha(&self, t: u64) -> f64 {
        self.alpha0 / self.tau(t).powf(self.a)
    }

    /// Query radius at iteration `t >= 1`.
    pub fn sigma(&self, t: u64) -> f64 {
        self.sigma0 / self.tau(t).powf(self.b)
    }
}

/// Outcome of [`validate_schedule`]; empty means every constraint holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScheduleReport {
    violations: Vec<String>,
}

impl ScheduleReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }
}

/// Check every schedule constraint, naming each violated one.
pub fn validate_schedule(s: &Schedule, spec: &GameSpec) -> ScheduleReport {
    let mut violations = Vec::new();
    if !(s.alpha0 > 0.0 && s.alpha0.is_finite()) {
        violations.push(format!(
            "alpha0 > 0 violated: step scale alpha0 = {}",
            s.alpha0
        ));
    }
    if !(s.sigma0 > 0.0 && s.sigma0.is_finite()) {
        violations.push(format!(
            "sigma0 > 0 violated: query radius scale sigma0 = {}",
            s.sigma0
        ));
    }
    if s.t_offset == 0 {
        violations.push("t_offset >= 1 violated: the decay clock starts at 1".to_string());
    }
    if !(s.a > 0.5 && s.a <= 1.0) {
        violations.push(format!("1/2 < a <= 1 violated: a = {}", s.a));
    }
    if !(s.b >= 0.0) {
        violations.push(format!("b >= 0 violated: b = {}", s.b));
    }
    if !(s.a + s.b > 1.0) {
        violations.push(format!("a + b > 1 violated: a + b = {}", s.a + s.b));
    }
    if !(2.0 * s.a - 2.0 * s.b > 1.0) {
        violations.push(format!(
            "2a - 2b > 1 violated: 2a - 2b = {}",
            2.0 * s.a - 2.0 * s.b
        ));
    }
    let r = spec.min_safety_radius();
    // b >= 0 makes sigma nonincreasing, so the first iteration is the worst.
    let sigma_start = s.sigma(1);
    if !(sigma_start < r) {
        violations.push(format!(
            "sigma < min safety radius violated: sigma(1) = {sigma_start} vs radius {r}"
        ));
    }
    ScheduleReport { violations }
}

/// One agent's view: which cluster it belongs to and its current estimate of
/// the whole cluster action (component `agent` is its own action).
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub cluster: usize,
    pub agent: usize,
    pub estimate: Vec<f64>,
}

/// Spread of one cluster's agent estimates: `max_j ||x^(j) - mean||`.
pub fn consensus_error(states: &[Vec<f64>]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let center = mean(states);
    states
        .iter()
        .map(|s| dist(s, &center))
        .fold(0.0, f64::max)
}

/// How the agents' estimates start out.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// Every agent starts at its cluster's box midpoint.
    Midpoint,
    /// All agents of cluster `i` start at block `i` of this joint action.
    Explicit(Vec<f64>),
}

/// One recorded snapshot of a run.
///
/// `joint` stacks each agent's own action (component `j` of agent `j`'s
/// estimate); `alpha`/`sigma` are the values used by the step that produced
/// this state (the upcoming first-step values on the initial row).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub iteration: u64,
    pub alpha: f64,
    pub sigma: f64,
    pub err_to_ne: Option<f64>,
    pub consensus: Vec<f64>,
    pub joint: Vec<f64>,
}

/// Full trajectory of one seeded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub policy: String,
    /// Content hash of the scenario that produced the run; empty for runs
    /// assembled directly from library calls.
    pub scenario_hash: String,
    pub cluster_sizes: Vec<usize>,
    /// Queries that passed the per-round feasibility check; one per agent
    /// per iteration.
    pub queries_validated: u64,
    pub rows: Vec<RunRow>,
}

impl RunRecord {
    pub fn final_row(&self) -> &RunRow {
        self.rows.last().expect("a run record always has rows")
    }

    pub fn row_at(&self, iteration: u64) -> Option<&RunRow> {
        self.rows.iter().find(|r| r.iteration == iteration)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.final_row().err_to_ne
    }
}

/// The simulation loop over one game, graph set, schedule, and seed.
#[derive(Debug)]
pub struct Engine<'a> {
    spec: &'a GameSpec,
    matrices: Vec<MixingMatrix>,
    schedule: Schedule,
    policy: CombinationPolicy,
    seed: u64,
    states: Vec<Vec<Vec<f64>>>,
    next_iteration: u64,
    queries_validated: u64,
}

impl<'a> Engine<'a> {
    pub fn new(
        spec: &'a GameSpec,
        graphs: &[UndirectedGraph],
        schedule: Schedule,
        policy: CombinationPolicy,
        seed: u64,
        initial: InitialState,
    ) -> Result<Self, EngineError> {
        if graphs.len() != spec.cluster_count() {
            return Err(EngineError::GraphCount {
                expected: spec.cluster_count(),
                got: graphs.len(),
            });
        }
        for (i, g) in graphs.iter().enumerate() {
            let agents = spec.cluster(i).agent_count();
            if g.node_count() != agents {
                return Err(EngineError::GraphSize {
                    cluster: i,
                    agents,
                    nodes: g.node_count(),
                });
            }
        }
        let report = validate_schedule(&schedule, spec);
        if !report.is_valid() {
            return Err(EngineError::InvalidSchedule(report.violations().to_vec()));
        }
        policy.validate(spec)?;

        let start: Vec<Vec<f64>> = match initial {
            InitialState::Midpoint => spec.clusters().iter().map(|c| c.midpoint()).collect(),
            InitialState::Explicit(values) => {
                let joint = spec.joint_action(values)?;
                (0..spec.cluster_count())
                    .map(|i| joint.cluster(i).to_vec())
                    .collect()
            }
        };
        let states = spec
            .clusters()
            .iter()
            .enumerate()
            .map(|(i, c)| vec![start[i].clone(); c.agent_count()])
            .collect();

        Ok(Self {
            spec,
            matrices: graphs.iter().map(build_metropolis_weights).collect(),
            schedule,
            policy,
            seed,
            states,
            next_iteration: 1,
            queries_validated: 0,
        })
    }

    /// Iterations completed so far.
    pub fn completed_iterations(&self) -> u64 {
        self.next_iteration - 1
    }

    pub fn cluster_states(&self, cluster: usize) -> &[Vec<f64>] {
        &self.states[cluster]
    }

    pub fn agent_state(&self, cluster: usize, agent: usize) -> AgentState {
        AgentState {
            cluster,
            agent,
            estimate: self.states[cluster][agent].clone(),
        }
    }

    /// Joint action assembled from each agent's own component.
    pub fn joint_action_values(&self) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.spec.total_dim());
        for cluster_states in &self.states {
            for (j, state) in cluster_states.iter().enumerate() {
                values.push(state[j]);
            }
        }
        values
    }

    pub fn consensus(&self, cluster: usize) -> f64 {
        consensus_error(&self.states[cluster])
    }

    /// Advance one synchronous iteration.
    pub fn step(&mut self) -> Result<(), EngineError> {
        let t = self.next_iteration;
        let alpha = self.schedule.alpha(t);
        let sigma = self.schedule.sigma(t);

        // Queries perturb the iteration-t states, before any mixing.
        let mut samples = Vec::with_capacity(self.spec.cluster_count());
        let mut queries = Vec::with_capacity(self.spec.cluster_count());
        for (i, cluster_states) in self.states.iter().enumerate() {
            let cluster = self.spec.cluster(i);
            let n_i = cluster.agent_count();
            let mut cluster_samples = Vec::with_capacity(n_i);
            let mut cluster_queries = Vec::with_capacity(n_i);
            for (j, state) in cluster_states.iter().enumerate() {
                let mut rng = stream(self.seed, &[tag::SPHERE, t, i as u64, j as u64]);
                let z = sample_unit_sphere(n_i, &mut rng)?;
                cluster_queries.push(build_query_point(state, &z, sigma, cluster)?);
                cluster_samples.push(z);
            }
            samples.push(cluster_samples);
            queries.push(cluster_queries);
        }
        let round = QueryRound::new(self.spec, queries)?;
        self.queries_validated += self.spec.total_dim() as u64;
        let answers = answer_queries(
            self.spec,
            &round,
            &self.policy,
            RoundContext {
                seed: self.seed,
                iteration: t,
            },
        )?;

        // Consensus mix of the same iteration-t states.
        let mut mixed = Vec::with_capacity(self.spec.cluster_count());
        for (w, cluster_states) in self.matrices.iter().zip(&self.states) {
            let m = w.mix(cluster_states)?;
            debug_assert!(
                dist(&mean(&m), &mean(cluster_states)) <= 1e-12,
                "mixing moved the cluster average"
            );
            mixed.push(m);
        }

        for (i, cluster_samples) in samples.into_iter().enumerate() {
            let cluster = self.spec.cluster(i);
            let n_i = cluster.agent_count();
            for (j, z) in cluster_samples.into_iter().enumerate() {
                let estimate = estimate_gradient(answers.value(i, j), z, sigma, n_i)?;
                let target = sub_scaled(&mixed[i][j], alpha, estimate.d());
                self.states[i][j] = cluster.project(&target)?;
            }
        }
        self.next_iteration += 1;
        Ok(())
    }

    fn record_row(&self, iteration: u64, reference: Option<&[f64]>) -> RunRow {
        let joint = self.joint_action_values();
        let step_index = iteration.max(1);
        RunRow {
            iteration,
            alpha: self.schedule.alpha(step_index),
            sigma: self.schedule.sigma(step_index),
            err_to_ne: reference.map(|ne| {
                let diff: Vec<f64> = joint.iter().zip(ne).map(|(a, b)| a - b).collect();
                norm(&diff)
            }),
            consensus: (0..self.spec.cluster_count())
                .map(|i| self.consensus(i))
                .collect(),
            joint,
        }
    }

    /// Run `iterations` steps, recording every `record_every` iterations plus
    /// the initial and final states. `reference` is the equilibrium used for
    /// the recorded error column.
    pub fn run(
        mut self,
        iterations: u64,
        record_every: u64,
        reference: Option<&[f64]>,
    ) -> Result<RunRecord, EngineError> {
        if record_every == 0 {
            return Err(EngineError::ZeroRecordEvery);
        }
        if let Some(ne) = reference {
            if ne.len() != self.spec.total_dim() {
                return Err(EngineError::ReferenceDimension {
                    expected: self.spec.total_dim(),
                    got: ne.len(),
                });
            }
        }
        let mut rows = vec![self.record_row(0, reference)];
        for t in 1..=iterations {
            self.step()?;
            if t % record_every == 0 || t == iterations {
                rows.push(self.record_row(t, reference));
            }
        }
        Ok(RunRecord {
            seed: self.seed,
            policy: policy_name(&self.policy),
            scenario_hash: String::new(),
            cluster_sizes: self.spec.cluster_sizes(),
            queries_validated: self.queries_validated,
            rows,
        })
    }
}

fn policy_name(policy: &CombinationPolicy) -> String {
    match policy {
        CombinationPolicy::UniformRandom => "uniform-random".to_string(),
        CombinationPolicy::FixedAgent(indices) => {
            let list: Vec<String> = indices.iter().map(|i| i.to_string()).collect();
            format!("fixed-agent({})", list.join(","))
        }
        CombinationPolicy::RoundRobin => "round-robin".to_string(),
    }
}
