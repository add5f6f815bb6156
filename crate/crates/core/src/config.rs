//! Scenario files: parsing, validation, canonical form, and content hashing.
//!
//! A scenario is one TOML file declaring the game, the per-cluster
//! communication topology, the decay schedule, and the run parameters.
//! Parsing is strict — unknown keys are rejected, missing keys are listed all
//! at once, and semantic violations are collected rather than reported one by
//! one. The canonical serialization of a parsed scenario feeds a SHA-256
//! content hash, so two files that differ only in comments, ordering, or
//! whitespace name the same experiment.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{validate_schedule, Engine, EngineError, InitialState, Schedule};
use crate::game::{
    ActionInterval, ClusterSpec, CournotCluster, CournotParams, GameSpec, QuadraticParams,
};
use crate::graph::{build_metropolis_weights, validate_mixing, UndirectedGraph};
use crate::oracle::CombinationPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    // The io::Error stays in the chain via #[source]; repeating it in the
    // message would print the cause twice when callers render the chain.
    #[error("cannot read {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario syntax error: {0}")]
    Syntax(String),
    #[error("unknown field in scenario: {0}")]
    UnknownField(String),
    #[error("scenario is missing required fields: {}", .0.join(", "))]
    MissingFields(Vec<String>),
    #[error("invalid scenario:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
}

/// Game section: the kind discriminator plus per-cluster parameter blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    /// "cournot" or "quadratic".
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_cap: Option<f64>,
    pub cluster: Vec<ClusterConfig>,
}

/// One cluster's parameters. Which fields apply depends on the game kind:
/// production-cost coefficients `a`, `b`, `c` for "cournot", `target` for
/// "quadratic". The safety-ball override must give center and radius together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
    pub lower: f64,
    pub upper: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_center: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_radius: Option<f64>,
}

/// One cluster's communication graph: a named preset or an explicit edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,
}

/// Decay schedule parameters as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub alpha0: f64,
    pub sigma0: f64,
    pub a: f64,
    pub b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_offset: Option<u64>,
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> Schedule {
        Schedule {
            alpha0: self.alpha0,
            sigma0: self.sigma0,
            a: self.a,
            b: self.b,
            t_offset: self.t_offset.unwrap_or(1),
        }
    }
}

/// Run section: oracle policy, horizon, seeds, recording, initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// "uniform-random", "round-robin", or "fixed-agent".
    pub policy: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_agents: Option<Vec<usize>>,
    pub iterations: u64,
    pub seeds: Vec<u64>,
    pub record_every: u64,
    /// "midpoint" (default) or "explicit" with `initial_values`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_values: Option<Vec<f64>>,
}

/// A parsed scenario file, exactly as declared (post-validation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub game: GameConfig,
    pub topology: Vec<TopologyConfig>,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
}

/// Everything a scenario builds: the declarative config plus the constructed
/// game, graphs, schedule, policy, and initial-state mode, and the content
/// hash of the canonical form.
pub struct ScenarioBundle {
    pub config: ScenarioConfig,
    pub game: GameSpec,
    pub graphs: Vec<UndirectedGraph>,
    pub schedule: Schedule,
    pub policy: CombinationPolicy,
    pub initial: InitialState,
    pub hash: String,
}

impl ScenarioBundle {
    /// Engine wired to this scenario for one seed.
    pub fn engine(&self, seed: u64) -> Result<Engine<'_>, EngineError> {
        Engine::new(
            &self.game,
            &self.graphs,
            self.schedule,
            self.policy.clone(),
            seed,
            self.initial.clone(),
        )
    }
}

impl std::fmt::Debug for ScenarioBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScenarioBundle")
            .field("config", &self.config)
            .field("hash", &self.hash)
            .finish_non_exhaustive()
    }
}

/// Scenario files compiled into the library.
pub mod builtin {
    /// Two-cluster production market (the headline experiment).
    pub const COURNOT: &str = include_str!("../../../scenarios/cournot.toml");
    /// Separable quadratic benchmark with a closed-form equilibrium.
    pub const QUADRATIC: &str = include_str!("../../../scenarios/quadratic.toml");

    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "cournot" => Some(COURNOT),
            "quadratic" => Some(QUADRATIC),
            _ => None,
        }
    }
}

/// Parse and fully validate a scenario file.
pub fn parse_scenario(path: &Path) -> Result<ScenarioBundle, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Parse and fully validate scenario text.
pub fn parse_scenario_str(text: &str) -> Result<ScenarioBundle, ConfigError> {
    let value: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let missing = collect_missing(&value);
    if !missing.is_empty() {
        return Err(ConfigError::MissingFields(missing));
    }
    let config: ScenarioConfig = toml::from_str(text).map_err(classify_serde_error)?;
    build_bundle(config)
}

fn classify_serde_error(e: toml::de::Error) -> ConfigError {
    let message = e.to_string();
    if message.contains("unknown field") {
        ConfigError::UnknownField(message)
    } else {
        ConfigError::Syntax(message)
    }
}

/// Presence-only pass listing every absent required key at once.
fn collect_missing(value: &toml::Value) -> Vec<String> {
    let mut missing = Vec::new();
    let table = match value.as_table() {
        Some(t) => t,
        None => return vec!["scenario must be a table".to_string()],
    };

    match table.get("game").and_then(|v| v.as_table()) {
        None => {
            missing.push("game.kind".to_string());
            missing.push("game.cluster".to_string());
        }
        Some(game) => {
            if !game.contains_key("kind") {
                missing.push("game.kind".to_string());
            }
            match game.get("cluster").and_then(|v| v.as_array()) {
                None => missing.push("game.cluster".to_string()),
                Some(clusters) if clusters.is_empty() => {
                    missing.push("game.cluster".to_string())
                }
                Some(clusters) => {
                    for (k, cluster) in clusters.iter().enumerate() {
                        for field in ["lower", "upper"] {
                            let present = cluster
                                .as_table()
                                .is_some_and(|t| t.contains_key(field));
                            if !present {
                                missing.push(format!("game.cluster[{k}].{field}"));
                            }
                        }
                    }
                }
            }
        }
    }

    let has_topology = table
        .get("topology")
        .and_then(|v| v.as_array())
        .is_some_and(|a| !a.is_empty());
    if !has_topology {
        missing.push("topology".to_string());
    }

    let schedule = table.get("schedule").and_then(|v| v.as_table());
    for field in ["alpha0", "sigma0", "a", "b"] {
        if !schedule.is_some_and(|t| t.contains_key(field)) {
            missing.push(format!("schedule.{field}"));
        }
    }

    let run = table.get("run").and_then(|v| v.as_table());
    for field in ["policy", "iterations", "seeds", "record_every"] {
        if !run.is_some_and(|t| t.contains_key(field)) {
            missing.push(format!("run.{field}"));
        }
    }

    missing
}

/// The scenario rewritten in canonical key order and formatting.
pub fn canonical_toml(config: &ScenarioConfig) -> Result<String, ConfigError> {
    toml::to_string(config).map_err(|e| ConfigError::Syntax(e.to_string()))
}

/// SHA-256 of the canonical form, as lowercase hex.
pub fn scenario_hash(config: &ScenarioConfig) -> Result<String, ConfigError> {
    let canonical = canonical_toml(config)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn build_bundle(config: ScenarioConfig) -> Result<ScenarioBundle, ConfigError> {
    let mut violations = Vec::new();

    if let Some(game) = build_game(&config.game, &mut violations) {
        let graphs = build_graphs(&config.topology, &game, &mut violations);

        let schedule = config.schedule.to_schedule();
        let report = validate_schedule(&schedule, &game);
        violations.extend(report.violations().iter().map(|v| format!("schedule: {v}")));

        let policy = build_policy(&config.run, &game, &mut violations);
        let initial = build_initial(&config.run, &game, &mut violations);
        validate_run(&config.run, &mut violations);

        if violations.is_empty() {
            let hash = scenario_hash(&config)?;
            return Ok(ScenarioBundle {
                game,
                graphs: graphs.expect("no violations means graphs were built"),
                schedule,
                policy: policy.expect("no violations means the policy was built"),
                initial: initial.expect("no violations means the initial state was built"),
                hash,
                config,
            });
        }
    } else {
        // Game-independent checks still run so one pass reports everything.
        validate_run(&config.run, &mut violations);
        for (i, topo) in config.topology.iter().enumerate() {
            check_topology_shape(i, topo, &mut violations);
        }
    }

    Err(ConfigError::Invalid(violations))
}

fn build_game(config: &GameConfig, violations: &mut Vec<String>) -> Option<GameSpec> {
    match game_into_spec(config) {
        Ok(game) => Some(game),
        Err(errors) => {
            violations.extend(errors);
            None
        }
    }
}

fn game_into_spec(config: &GameConfig) -> Result<GameSpec, Vec<String>> {
    let mut errors = Vec::new();
    match config.kind.as_str() {
        "cournot" => {
            if config.price_cap.is_none() {
                errors.push("game.price_cap is required when kind = \"cournot\"".to_string());
            }
            let mut clusters = Vec::new();
            for (k, cl) in config.game_clusters() {
                if cl.target.is_some() {
                    errors.push(format!(
                        "game.cluster[{k}].target only applies to quadratic games"
                    ));
                }
                match (&cl.a, &cl.b, &cl.c) {
                    (Some(a), Some(b), Some(c)) => clusters.push(CournotCluster {
                        a: a.clone(),
                        b: b.clone(),
                        c: c.clone(),
                        lower: cl.lower,
                        upper: cl.upper,
                    }),
                    _ => errors.push(format!(
                        "game.cluster[{k}] needs cost coefficients a, b, c for a cournot game"
                    )),
                }
            }
            if !errors.is_empty() {
                return Err(errors);
            }
            let params = CournotParams::new(clusters, config.price_cap.unwrap())
                .map_err(|e| vec![format!("game: {e}")])?;
            assemble_spec(config, Box::new(params))
        }
        "quadratic" => {
            if config.price_cap.is_some() {
                errors.push("game.price_cap only applies to cournot games".to_string());
            }
            let mut targets = Vec::new();
            let mut bounds = Vec::new();
            for (k, cl) in config.game_clusters() {
                for (field, present) in [("a", cl.a.is_some()), ("b", cl.b.is_some()), ("c", cl.c.is_some())] {
                    if present {
                        errors.push(format!(
                            "game.cluster[{k}].{field} only applies to cournot games"
                        ));
                    }
                }
                match &cl.target {
                    Some(t) => {
                        targets.push(t.clone());
                        bounds.push((cl.lower, cl.upper));
                    }
                    None => errors.push(format!(
                        "game.cluster[{k}] needs a target for a quadratic game"
                    )),
                }
            }
            if !errors.is_empty() {
                return Err(errors);
            }
            let params = QuadraticParams::new(targets, bounds)
                .map_err(|e| vec![format!("game: {e}")])?;
            assemble_spec(config, Box::new(params))
        }
        other => Err(vec![format!(
            "game.kind must be \"cournot\" or \"quadratic\", got \"{other}\""
        )]),
    }
}

impl GameConfig {
    fn game_clusters(&self) -> impl Iterator<Item = (usize, &ClusterConfig)> {
        self.cluster.iter().enumerate()
    }

    fn cluster_size(&self, k: usize) -> usize {
        let cl = &self.cluster[k];
        cl.a.as_ref()
            .map(|v| v.len())
            .or_else(|| cl.target.as_ref().map(|v| v.len()))
            .unwrap_or(0)
    }
}

/// Build the boxes (honoring safety-ball overrides) around a validated cost
/// model.
fn assemble_spec(
    config: &GameConfig,
    cost: Box<dyn crate::game::CostModel>,
) -> Result<GameSpec, Vec<String>> {
    let mut errors = Vec::new();
    let mut clusters = Vec::new();
    for (k, cl) in config.game_clusters() {
        let size = config.cluster_size(k);
        let intervals: Result<Vec<_>, _> =
            (0..size).map(|_| ActionInterval::new(cl.lower, cl.upper)).collect();
        let intervals = match intervals {
            Ok(v) => v,
            Err(e) => {
                errors.push(format!("game.cluster[{k}]: {e}"));
                continue;
            }
        };
        let built = match (&cl.safety_center, cl.safety_radius) {
            (Some(center), Some(radius)) => ClusterSpec::new(intervals, center.clone(), radius),
            (None, None) => ClusterSpec::with_default_safety_ball(intervals),
            _ => {
                errors.push(format!(
                    "game.cluster[{k}]: safety_center and safety_radius must be given together"
                ));
                continue;
            }
        };
        match built {
            Ok(c) => clusters.push(c),
            Err(e) => errors.push(format!("game.cluster[{k}]: {e}")),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    GameSpec::new(clusters, cost).map_err(|e| vec![format!("game: {e}")])
}

const PRESETS: [&str; 4] = ["complete", "ring", "path", "star"];

fn check_topology_shape(i: usize, topo: &TopologyConfig, violations: &mut Vec<String>) -> bool {
    match (&topo.preset, &topo.edges) {
        (Some(_), Some(_)) => {
            violations.push(format!(
                "topology[{i}]: give either a preset or an edge list, not both"
            ));
            false
        }
        (None, None) => {
            violations.push(format!(
                "topology[{i}]: needs a preset or an edge list"
            ));
            false
        }
        (Some(name), None) if !PRESETS.contains(&name.as_str()) => {
            violations.push(format!(
                "topology[{i}]: unknown preset \"{name}\" (available: {})",
                PRESETS.join(", ")
            ));
            false
        }
        _ => true,
    }
}

fn build_graphs(
    topology: &[TopologyConfig],
    game: &GameSpec,
    violations: &mut Vec<String>,
) -> Option<Vec<UndirectedGraph>> {
    if topology.len() != game.cluster_count() {
        violations.push(format!(
            "topology lists {} graphs but the game has {} clusters",
            topology.len(),
            game.cluster_count()
        ));
        return None;
    }
    let mut graphs = Vec::with_capacity(topology.len());
    let mut ok = true;
    for (i, topo) in topology.iter().enumerate() {
        if !check_topology_shape(i, topo, violations) {
            ok = false;
            continue;
        }
        let n = game.cluster(i).agent_count();
        let built = match (&topo.preset, &topo.edges) {
            (Some(name), None) => match name.as_str() {
                "complete" => UndirectedGraph::complete(n),
                "ring" => UndirectedGraph::ring(n),
                "path" => UndirectedGraph::path(n),
                "star" => UndirectedGraph::star(n),
                _ => unreachable!("preset names checked above"),
            },
            (None, Some(edges)) => {
                let pairs: Vec<(usize, usize)> =
                    edges.iter().map(|&[k, j]| (k, j)).collect();
                UndirectedGraph::new(n, &pairs)
            }
            _ => unreachable!("shape checked above"),
        };
        match built {
            Ok(g) => {
                let weights = build_metropolis_weights(&g);
                let report = validate_mixing(&weights, &g);
                if !report.is_valid() {
                    violations.extend(
                        report
                            .violations()
                            .iter()
                            .map(|v| format!("topology[{i}] mixing: {v}")),
                    );
                    ok = false;
                } else {
                    graphs.push(g);
                }
            }
            Err(e) => {
                violations.push(format!("topology[{i}]: {e}"));
                ok = false;
            }
        }
    }
    ok.then_some(graphs)
}

fn build_policy(
    run: &RunConfig,
    game: &GameSpec,
    violations: &mut Vec<String>,
) -> Option<CombinationPolicy> {
    let policy = match run.policy.as_str() {
        "uniform-random" => CombinationPolicy::UniformRandom,
        "round-robin" => CombinationPolicy::RoundRobin,
        "fixed-agent" => match &run.fixed_agents {
            Some(indices) => CombinationPolicy::FixedAgent(indices.clone()),
            None => {
                violations.push(
                    "run.fixed_agents is required when policy = \"fixed-agent\"".to_string(),
                );
                return None;
            }
        },
        other => {
            violations.push(format!(
                "run.policy must be \"uniform-random\", \"round-robin\", or \"fixed-agent\", \
                 got \"{other}\""
            ));
            return None;
        }
    };
    if run.policy != "fixed-agent" && run.fixed_agents.is_some() {
        violations.push("run.fixed_agents only applies to the fixed-agent policy".to_string());
        return None;
    }
    if let Err(e) = policy.validate(game) {
        violations.push(format!("run: {e}"));
        return None;
    }
    Some(policy)
}

fn build_initial(
    run: &RunConfig,
    game: &GameSpec,
    violations: &mut Vec<String>,
) -> Option<InitialState> {
    match (run.initial.as_deref().unwrap_or("midpoint"), &run.initial_values) {
        ("midpoint", None) => Some(InitialState::Midpoint),
        ("midpoint", Some(_)) => {
            violations.push(
                "run.initial_values only applies when initial = \"explicit\"".to_string(),
            );
            None
        }
        ("explicit", Some(values)) => match game.joint_action(values.clone()) {
            Ok(_) => Some(InitialState::Explicit(values.clone())),
            Err(e) => {
                violations.push(format!("run.initial_values: {e}"));
                None
            }
        },
        ("explicit", None) => {
            violations.push(
                "run.initial_values is required when initial = \"explicit\"".to_string(),
            );
            None
        }
        (other, _) => {
            violations.push(format!(
                "run.initial must be \"midpoint\" or \"explicit\", got \"{other}\""
            ));
            None
        }
    }
}

fn validate_run(run: &RunConfig, violations: &mut Vec<String>) {
    if run.seeds.is_empty() {
        violations.push("run.seeds must list at least one seed".to_string());
    }
    let unique: BTreeSet<u64> = run.seeds.iter().copied().collect();
    if unique.len() != run.seeds.len() {
        violations.push("run.seeds contains duplicates".to_string());
    }
    if run.record_every == 0 {
        violations.push("run.record_every must be at least 1".to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_market_scenario_parses_to_the_table_parameters() {
        let bundle = parse_scenario_str(builtin::COURNOT).unwrap();
        assert_eq!(bundle.config.game.kind, "cournot");
        assert_eq!(bundle.config.game.price_cap, Some(250.0));
        let c = &bundle.config.game.cluster;
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].a.as_deref(), Some(&[5.0, 8.0, 4.0, 5.0][..]));
        assert_eq!(c[0].b.as_deref(), Some(&[10.0, 11.0, 9.0, 12.0][..]));
        assert_eq!(c[0].c.as_deref(), Some(&[1.0, 3.0, 2.0, 5.0][..]));
        assert_eq!((c[0].lower, c[0].upper), (0.0, 20.0));
        assert_eq!(c[1].a.as_deref(), Some(&[3.0, 7.0, 9.0, 2.0][..]));
        assert_eq!(c[1].b.as_deref(), Some(&[10.0, 11.0, 12.0, 9.0][..]));
        assert_eq!(c[1].c.as_deref(), Some(&[3.0, 2.0, 3.0, 1.0][..]));
        assert_eq!((c[1].lower, c[1].upper), (0.0, 10.0));
        assert_eq!(bundle.game.total_dim(), 8);
        assert_eq!(bundle.config.run.seeds, vec![1, 2, 3, 4, 5]);
        assert_eq!(bundle.config.run.iterations, 100_000);
        assert_eq!(bundle.policy, CombinationPolicy::UniformRandom);
        assert_eq!(bundle.initial, InitialState::Midpoint);
    }

    #[test]
    fn bundled_quadratic_scenario_parses() {
        let bundle = parse_scenario_str(builtin::QUADRATIC).unwrap();
        assert_eq!(bundle.config.game.kind, "quadratic");
        assert_eq!(
            bundle.config.game.cluster[0].target.as_deref(),
            Some(&[4.0, 6.0][..])
        );
        assert_eq!(bundle.game.cluster_sizes(), vec![2, 2]);
    }

    #[test]
    fn canonical_form_round_trips() {
        let bundle = parse_scenario_str(builtin::COURNOT).unwrap();
        let canonical = canonical_toml(&bundle.config).unwrap();
        let reparsed = parse_scenario_str(&canonical).unwrap();
        assert_eq!(bundle.config, reparsed.config);
        assert_eq!(bundle.hash, reparsed.hash);
    }

    #[test]
    fn hash_ignores_formatting_but_tracks_values() {
        let bundle = parse_scenario_str(builtin::COURNOT).unwrap();

        // Same scenario, different comments and key order inside tables.
        let reordered = builtin::COURNOT
            .replace(
                "[schedule]\nalpha0 = 5.0\nsigma0 = 2.0",
                "[schedule]\n# retuned\nsigma0 = 2.0\nalpha0 = 5.0",
            );
        assert_ne!(reordered, builtin::COURNOT);
        let same = parse_scenario_str(&reordered).unwrap();
        assert_eq!(same.hash, bundle.hash);

        let changed = builtin::COURNOT.replace("alpha0 = 5.0", "alpha0 = 2.0");
        let different = parse_scenario_str(&changed).unwrap();
        assert_ne!(different.hash, bundle.hash);
    }

    #[test]
    fn empty_file_lists_every_required_field() {
        let err = parse_scenario_str("").unwrap_err();
        match err {
            ConfigError::MissingFields(fields) => {
                for expected in [
                    "game.kind",
                    "game.cluster",
                    "topology",
                    "schedule.alpha0",
                    "schedule.sigma0",
                    "schedule.a",
                    "schedule.b",
                    "run.policy",
                    "run.iterations",
                    "run.seeds",
                    "run.record_every",
                ] {
                    assert!(
                        fields.iter().any(|f| f == expected),
                        "missing list lacks {expected}: {fields:?}"
                    );
                }
            }
            other => panic!("expected missing-fields error, got {other:?}"),
        }
    }

    #[test]
    fn absent_cluster_bounds_are_reported_per_cluster() {
        let text = builtin::QUADRATIC.replace("target = [7.0, 3.0]\nlower = 0.0", "target = [7.0, 3.0]");
        let err = parse_scenario_str(&text).unwrap_err();
        match err {
            ConfigError::MissingFields(fields) => {
                assert_eq!(fields, vec!["game.cluster[1].lower".to_string()]);
            }
            other => panic!("expected missing-fields error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_their_own_error_class() {
        let text = builtin::COURNOT.replace("alpha0 = 5.0", "alpha0 = 5.0\nalphax = 3.0");
        assert!(matches!(
            parse_scenario_str(&text),
            Err(ConfigError::UnknownField(_))
        ));
    }

    #[test]
    fn broken_toml_is_a_syntax_error_with_position() {
        let err = parse_scenario_str("game = {").unwrap_err();
        match err {
            ConfigError::Syntax(message) => assert!(message.contains("line 1")),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn equal_exponents_violate_the_damping_constraint() {
        let text = builtin::COURNOT.replace("b = 0.3333333333333333", "b = 1.0");
        let err = parse_scenario_str(&text).unwrap_err();
        match err {
            ConfigError::Invalid(violations) => {
                assert!(
                    violations.iter().any(|v| v.contains("2a - 2b > 1")),
                    "violations: {violations:?}"
                );
            }
            other => panic!("expected constraint violation, got {other:?}"),
        }
    }

    #[test]
    fn oversized_query_radius_is_rejected() {
        let text = builtin::COURNOT.replace("sigma0 = 2.0", "sigma0 = 5.0");
        let err = parse_scenario_str(&text).unwrap_err();
        match err {
            ConfigError::Invalid(violations) => {
                assert!(violations
                    .iter()
                    .any(|v| v.contains("sigma < min safety radius")));
            }
            other => panic!("expected constraint violation, got {other:?}"),
        }
    }

    #[test]
    fn topology_entries_are_validated() {
        let unknown = builtin::COURNOT.replacen("preset = \"complete\"", "preset = \"mesh\"", 1);
        match parse_scenario_str(&unknown).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("unknown preset \"mesh\"")))
            }
            other => panic!("{other:?}"),
        }

        let missing_one = builtin::COURNOT.replacen("[[topology]]\npreset = \"complete\"\n\n", "", 1);
        match parse_scenario_str(&missing_one).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("1 graphs but the game has 2")))
            }
            other => panic!("{other:?}"),
        }

        let edges = builtin::COURNOT.replacen(
            "preset = \"complete\"",
            "edges = [[0, 1], [1, 2], [2, 3]]",
            1,
        );
        let bundle = parse_scenario_str(&edges).unwrap();
        assert_eq!(bundle.graphs[0].edge_count(), 3);
        assert_eq!(bundle.graphs[0].degree(1), 2);

        let disconnected = builtin::COURNOT.replacen(
            "preset = \"complete\"",
            "edges = [[0, 1], [2, 3]]",
            1,
        );
        match parse_scenario_str(&disconnected).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("not connected")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn policy_section_is_validated() {
        let missing = builtin::COURNOT.replace(
            "policy = \"uniform-random\"",
            "policy = \"fixed-agent\"",
        );
        match parse_scenario_str(&missing).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("run.fixed_agents is required")))
            }
            other => panic!("{other:?}"),
        }

        let fixed = builtin::COURNOT.replace(
            "policy = \"uniform-random\"",
            "policy = \"fixed-agent\"\nfixed_agents = [2, 0]",
        );
        let bundle = parse_scenario_str(&fixed).unwrap();
        assert_eq!(bundle.policy, CombinationPolicy::FixedAgent(vec![2, 0]));

        let out_of_range = builtin::COURNOT.replace(
            "policy = \"uniform-random\"",
            "policy = \"fixed-agent\"\nfixed_agents = [2, 7]",
        );
        match parse_scenario_str(&out_of_range).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("picks agent 7")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn initial_state_section_is_validated() {
        let explicit = builtin::COURNOT.replace(
            "initial = \"midpoint\"",
            "initial = \"explicit\"\ninitial_values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]",
        );
        let bundle = parse_scenario_str(&explicit).unwrap();
        assert_eq!(
            bundle.initial,
            InitialState::Explicit(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
        );

        let infeasible = builtin::COURNOT.replace(
            "initial = \"midpoint\"",
            "initial = \"explicit\"\ninitial_values = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 18.0]",
        );
        match parse_scenario_str(&infeasible).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("run.initial_values")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn run_section_catches_bad_seed_lists_and_cadence() {
        let dup = builtin::COURNOT.replace("seeds = [1, 2, 3, 4, 5]", "seeds = [1, 1]");
        match parse_scenario_str(&dup).unwrap_err() {
            ConfigError::Invalid(v) => assert!(v.iter().any(|s| s.contains("duplicates"))),
            other => panic!("{other:?}"),
        }

        let none = builtin::COURNOT.replace("seeds = [1, 2, 3, 4, 5]", "seeds = []");
        match parse_scenario_str(&none).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("at least one seed")))
            }
            other => panic!("{other:?}"),
        }

        let zero = builtin::COURNOT.replace("record_every = 100", "record_every = 0");
        match parse_scenario_str(&zero).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("record_every")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kind_specific_fields_must_match_the_kind() {
        let mixed = builtin::QUADRATIC.replace(
            "target = [4.0, 6.0]",
            "target = [4.0, 6.0]\na = [1.0, 1.0]",
        );
        match parse_scenario_str(&mixed).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("only applies to cournot")))
            }
            other => panic!("{other:?}"),
        }

        let capless = builtin::COURNOT.replace("price_cap = 250.0\n", "");
        match parse_scenario_str(&capless).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("game.price_cap is required")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn safety_ball_overrides_are_applied_or_rejected() {
        let shifted = builtin::COURNOT.replacen(
            "lower = 0.0\nupper = 20.0",
            "lower = 0.0\nupper = 20.0\nsafety_center = [8.0, 8.0, 8.0, 8.0]\nsafety_radius = 6.0",
            1,
        );
        let bundle = parse_scenario_str(&shifted).unwrap();
        assert_eq!(bundle.game.cluster(0).safety_radius(), 6.0);
        assert_eq!(bundle.game.cluster(0).safety_center(), &[8.0; 4]);

        let escaping = builtin::COURNOT.replacen(
            "lower = 0.0\nupper = 20.0",
            "lower = 0.0\nupper = 20.0\nsafety_center = [8.0, 8.0, 8.0, 8.0]\nsafety_radius = 9.0",
            1,
        );
        match parse_scenario_str(&escaping).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("leaves the box")))
            }
            other => panic!("{other:?}"),
        }

        let lonely = builtin::COURNOT.replacen(
            "lower = 0.0\nupper = 20.0",
            "lower = 0.0\nupper = 20.0\nsafety_radius = 6.0",
            1,
        );
        match parse_scenario_str(&lonely).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert!(v.iter().any(|s| s.contains("given together")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn engines_built_from_a_bundle_run() {
        let bundle = parse_scenario_str(builtin::QUADRATIC).unwrap();
        let record = bundle.engine(1).unwrap().run(200, 100, None).unwrap();
        assert_eq!(record.rows.len(), 3);
        assert_eq!(record.seed, 1);
    }
}
