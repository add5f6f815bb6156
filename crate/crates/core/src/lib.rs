//! Distributed Nash equilibrium seeking for cluster games under bandit feedback.
//!
//! Clusters of cooperating agents play a noncooperative game against each
//! other. Each agent observes only scalar values of its own cost function,
//! builds one-point gradient estimates from randomized queries, exchanges
//! local estimates with in-cluster neighbours over a communication graph,
//! and runs projected gradient steps with decaying step size and query
//! radius. A variational-inequality solver provides reference equilibria
//! for error tracking, and scenario I/O covers TOML configs, CSV
//! trajectories, JSON summaries, and SVG convergence plots.

pub mod config;
pub mod engine;
pub mod estimator;
pub mod game;
pub mod graph;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod solver;

pub(crate) mod vecmath;

pub use config::{
    canonical_toml, parse_scenario, parse_scenario_str, scenario_hash, ClusterConfig, ConfigError,
    GameConfig, RunConfig, ScenarioBundle, ScenarioConfig, ScheduleConfig, TopologyConfig,
};
pub use engine::{
    consensus_error, validate_schedule, AgentState, Engine, EngineError, InitialState, RunRecord,
    RunRow, Schedule, ScheduleReport,
};
pub use estimator::{
    build_query_point, estimate_gradient, estimator_error_moments, sample_unit_sphere,
    ErrorMoments, EstimatorError, GradientEstimate, SphereSample,
};
pub use game::{
    default_safety_ball, ActionInterval, ClusterSpec, CostModel, CournotCluster, CournotParams,
    GameError, GameSpec, JointAction, QuadraticParams,
};
pub use graph::{
    build_metropolis_weights, validate_mixing, GraphError, MixingMatrix, MixingReport,
    UndirectedGraph,
};
pub use oracle::{
    answer_queries, assemble_joint_query, CombinationPolicy, OracleAnswer, OracleError,
    QueryRound, RoundContext,
};
pub use report::{
    emit_convergence_plot, read_trajectory_csv, summarize_run, summarize_sweep,
    summary_json_string, sweep_json_string, write_summary_json, write_sweep_json,
    write_trajectory_csv, ReportError, RunSummary, SweepSummary,
};
pub use solver::{
    best_response_check, solve_vi, solve_vi_from, verify_ne_kkt, BoundPosition, KktComponent,
    KktReport, SolverError, VISolution,
};
