use super::*;
use crate::vecmath::{dist, dot};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cournot_game() -> GameSpec {
    CournotParams::duopoly().into_game().unwrap()
}

/// Random feasible joint action, at distance >= `margin` from every bound.
fn random_feasible(spec: &GameSpec, rng: &mut ChaCha8Rng, margin: f64) -> Vec<f64> {
    let mut values = Vec::with_capacity(spec.total_dim());
    for cluster in spec.clusters() {
        for iv in cluster.intervals() {
            values.push(rng.gen_range(iv.lower() + margin..iv.upper() - margin));
        }
    }
    values
}

struct ZeroCost;

impl CostModel for ZeroCost {
    fn local_cost(&self, _: usize, _: usize, _: &JointAction) -> f64 {
        0.0
    }
}

/// Quadratic pull toward a target, deliberately without an analytic gradient
/// so the finite-difference path gets exercised.
struct FdOnlyQuadratic {
    target: Vec<f64>,
}

impl CostModel for FdOnlyQuadratic {
    fn local_cost(&self, cluster: usize, _: usize, joint: &JointAction) -> f64 {
        joint
            .cluster(cluster)
            .iter()
            .zip(&self.target)
            .map(|(&x, &c)| (x - c) * (x - c))
            .sum::<f64>()
            * 0.5
    }
}

#[test]
fn interval_rejects_degenerate_and_non_finite_bounds() {
    assert!(ActionInterval::new(0.0, 20.0).is_ok());
    assert!(matches!(
        ActionInterval::new(3.0, 3.0),
        Err(GameError::BadInterval { .. })
    ));
    assert!(matches!(
        ActionInterval::new(5.0, 2.0),
        Err(GameError::BadInterval { .. })
    ));
    assert!(matches!(
        ActionInterval::new(f64::NAN, 1.0),
        Err(GameError::NonFiniteBound { .. })
    ));
    assert!(matches!(
        ActionInterval::new(0.0, f64::INFINITY),
        Err(GameError::NonFiniteBound { .. })
    ));
}

#[test]
fn default_safety_ball_matches_box_geometry() {
    let boxes = |bounds: &[(f64, f64)]| -> Vec<ActionInterval> {
        bounds
            .iter()
            .map(|&(l, u)| ActionInterval::new(l, u).unwrap())
            .collect()
    };

    let (c, r) = default_safety_ball(&boxes(&[(0.0, 20.0); 4])).unwrap();
    assert_eq!(c, vec![10.0; 4]);
    assert_eq!(r, 10.0);

    let (c, r) = default_safety_ball(&boxes(&[(0.0, 10.0); 4])).unwrap();
    assert_eq!(c, vec![5.0; 4]);
    assert_eq!(r, 5.0);

    let (c, r) = default_safety_ball(&boxes(&[(0.0, 20.0), (0.0, 2.0)])).unwrap();
    assert_eq!(c, vec![10.0, 1.0]);
    assert_eq!(r, 1.0);
}

#[test]
fn safety_ball_containment_holds_for_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let dim = rng.gen_range(1..6);
        let intervals: Vec<ActionInterval> = (0..dim)
            .map(|_| {
                let lo = rng.gen_range(-10.0..10.0);
                let hi = lo + rng.gen_range(0.5..15.0);
                ActionInterval::new(lo, hi).unwrap()
            })
            .collect();
        let cluster = ClusterSpec::with_default_safety_ball(intervals).unwrap();
        for (k, iv) in cluster.intervals().iter().enumerate() {
            let c = cluster.safety_center()[k];
            let r = cluster.safety_radius();
            assert!(c - r >= iv.lower() - 1e-12);
            assert!(c + r <= iv.upper() + 1e-12);
        }
    }
}

#[test]
fn cluster_spec_rejects_escaping_or_degenerate_safety_balls() {
    let intervals = vec![
        ActionInterval::new(0.0, 20.0).unwrap(),
        ActionInterval::new(0.0, 2.0).unwrap(),
    ];
    assert!(matches!(
        ClusterSpec::new(intervals.clone(), vec![10.0, 1.0], 1.5),
        Err(GameError::SafetyBallEscapesBox { component: 1, .. })
    ));
    assert!(matches!(
        ClusterSpec::new(intervals.clone(), vec![10.0, 1.0], 0.0),
        Err(GameError::NonPositiveRadius { .. })
    ));
    assert!(matches!(
        ClusterSpec::new(intervals, vec![10.0], 1.0),
        Err(GameError::SafetyCenterDimension { .. })
    ));
}

#[test]
fn cournot_local_costs_at_known_points() {
    let game = cournot_game();
    let origin = game.joint_action(vec![0.0; 8]).unwrap();
    assert_eq!(game.eval_local_cost(0, 0, &origin).unwrap(), 1.0);

    let mut v = vec![0.0; 8];
    v[0] = 1.0;
    let x = game.joint_action(v).unwrap();
    assert_eq!(game.eval_local_cost(0, 0, &x).unwrap(), -233.0);
}

#[test]
fn cournot_cluster_cost_averages_fixed_costs_at_origin() {
    let game = cournot_game();
    let origin = game.joint_action(vec![0.0; 8]).unwrap();
    assert_eq!(game.eval_cluster_cost(0, &origin).unwrap(), 2.75);
    // Cluster 2 fixed costs: (3 + 2 + 3 + 1) / 4.
    assert_eq!(game.eval_cluster_cost(1, &origin).unwrap(), 2.25);
}

#[test]
fn zero_cost_model_evaluates_to_zero_everywhere() {
    let intervals = vec![ActionInterval::new(-1.0, 1.0).unwrap(); 3];
    let cluster = ClusterSpec::with_default_safety_ball(intervals).unwrap();
    let game = GameSpec::new(vec![cluster], Box::new(ZeroCost)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let x = game.joint_action(random_feasible(&game, &mut rng, 0.0)).unwrap();
        assert_eq!(game.eval_local_cost(0, 1, &x).unwrap(), 0.0);
        assert_eq!(game.eval_cluster_cost(0, &x).unwrap(), 0.0);
        assert_eq!(game.exact_cluster_gradient(0, &x).unwrap(), vec![0.0; 3]);
    }
}

#[test]
fn singleton_cluster_cost_equals_its_local_cost() {
    let params = QuadraticParams::new(
        vec![vec![2.0], vec![1.0, 3.0]],
        vec![(0.0, 10.0), (0.0, 10.0)],
    )
    .unwrap();
    let game = params.into_game().unwrap();
    let x = game.joint_action(vec![5.0, 4.0, 4.0]).unwrap();
    assert_eq!(
        game.eval_cluster_cost(0, &x).unwrap(),
        game.eval_local_cost(0, 0, &x).unwrap()
    );
}

#[test]
fn quadratic_gradient_is_displacement_from_target() {
    // Zero target makes the cluster cost ||x||^2 / 2 with gradient x.
    let params = QuadraticParams::new(vec![vec![0.0, 0.0]], vec![(-5.0, 10.0)]).unwrap();
    let game = params.into_game().unwrap();
    let x = game.joint_action(vec![3.0, -2.0]).unwrap();
    assert_eq!(game.exact_cluster_gradient(0, &x).unwrap(), vec![3.0, -2.0]);

    let example = QuadraticParams::two_cluster_example().into_game().unwrap();
    let x = example.joint_action(vec![5.0, 5.0, 5.0, 5.0]).unwrap();
    assert_eq!(example.exact_cluster_gradient(0, &x).unwrap(), vec![1.0, -1.0]);
    assert_eq!(example.exact_cluster_gradient(1, &x).unwrap(), vec![-2.0, 2.0]);
}

#[test]
fn cournot_cluster_gradient_at_origin() {
    // Component k of cluster 1: (b_k - price_cap) / 4 at the origin.
    let game = cournot_game();
    let origin = game.joint_action(vec![0.0; 8]).unwrap();
    let g = game.exact_cluster_gradient(0, &origin).unwrap();
    assert_eq!(g, vec![-60.0, -59.75, -60.25, -59.5]);
}

#[test]
fn analytic_gradients_match_central_differences() {
    let game = cournot_game();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let step = 1e-5;
    for _ in 0..25 {
        let values = random_feasible(&game, &mut rng, 0.1);
        let x = game.joint_action(values.clone()).unwrap();
        for i in 0..game.cluster_count() {
            let analytic = game.exact_cluster_gradient(i, &x).unwrap();
            let offset = game.cluster_range(i).start;
            for k in 0..game.cluster(i).agent_count() {
                let mut plus = values.clone();
                plus[offset + k] += step;
                let mut minus = values.clone();
                minus[offset + k] -= step;
                let fd = (game
                    .eval_cluster_cost(i, &game.joint_action(plus).unwrap())
                    .unwrap()
                    - game
                        .eval_cluster_cost(i, &game.joint_action(minus).unwrap())
                        .unwrap())
                    / (2.0 * step);
                let scale = analytic[k].abs().max(1.0);
                assert!(
                    (analytic[k] - fd).abs() / scale <= 1e-6,
                    "cluster {i} comp {k}: analytic {} vs fd {fd}",
                    analytic[k]
                );
            }
        }
    }
}

#[test]
fn fd_fallback_recovers_quadratic_gradient() {
    let intervals = vec![ActionInterval::new(0.0, 10.0).unwrap(); 2];
    let cluster = ClusterSpec::with_default_safety_ball(intervals).unwrap();
    let game = GameSpec::new(
        vec![cluster],
        Box::new(FdOnlyQuadratic {
            target: vec![4.0, 6.0],
        }),
    )
    .unwrap();
    let x = game.joint_action(vec![7.0, 2.0]).unwrap();
    let g = game.exact_cluster_gradient(0, &x).unwrap();
    assert!((g[0] - 3.0).abs() < 1e-7);
    assert!((g[1] - -4.0).abs() < 1e-7);

    // Too close to a bound for the central step.
    let edge = game.joint_action(vec![10.0, 5.0]).unwrap();
    assert!(matches!(
        game.local_gradient(0, 0, &edge),
        Err(GameError::TooCloseToBoundary { component: 0, .. })
    ));
}

#[test]
fn disabled_fd_fallback_makes_gradients_an_error() {
    let intervals = vec![ActionInterval::new(0.0, 10.0).unwrap(); 2];
    let cluster = ClusterSpec::with_default_safety_ball(intervals).unwrap();
    let game = GameSpec::new(
        vec![cluster],
        Box::new(FdOnlyQuadratic {
            target: vec![4.0, 6.0],
        }),
    )
    .unwrap()
    .with_fd_fallback(None);
    let x = game.joint_action(vec![5.0, 5.0]).unwrap();
    assert!(matches!(
        game.local_gradient(0, 0, &x),
        Err(GameError::GradientUnavailable { .. })
    ));
}

#[test]
fn game_mapping_concatenates_cluster_gradients() {
    let game = cournot_game();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let x = game
        .joint_action(random_feasible(&game, &mut rng, 0.0))
        .unwrap();
    let f = game.game_mapping(&x).unwrap();
    assert_eq!(f.len(), 8);
    let g1 = game.exact_cluster_gradient(0, &x).unwrap();
    let g2 = game.exact_cluster_gradient(1, &x).unwrap();
    assert_eq!(&f[..4], &g1[..]);
    assert_eq!(&f[4..], &g2[..]);
}

#[test]
fn projection_clamps_componentwise() {
    let game = cournot_game();
    let p = game
        .project(&[-5.0, 25.0, 3.0, 7.0, -1.0, 11.0, 2.0, 10.5])
        .unwrap();
    assert_eq!(p, vec![0.0, 20.0, 3.0, 7.0, 0.0, 10.0, 2.0, 10.0]);
}

#[test]
fn projection_is_idempotent_and_nonexpansive() {
    let game = cournot_game();
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..200 {
        let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-30.0..50.0)).collect();
        let v: Vec<f64> = (0..8).map(|_| rng.gen_range(-30.0..50.0)).collect();
        let pu = game.project(&u).unwrap();
        let pv = game.project(&v).unwrap();
        assert_eq!(game.project(&pu).unwrap(), pu);
        assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-12);
        assert!(game.is_feasible(&pu));
    }
}

#[test]
fn projection_is_the_nearest_feasible_point() {
    let game = cournot_game();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let u: Vec<f64> = (0..8).map(|_| rng.gen_range(-30.0..50.0)).collect();
        let pu = game.project(&u).unwrap();
        let best = dist(&u, &pu);
        for _ in 0..100 {
            let cand = random_feasible(&game, &mut rng, 0.0);
            assert!(dist(&u, &cand) >= best - 1e-12);
        }
    }
}

#[test]
fn cournot_mapping_is_monotone_on_random_pairs() {
    let game = cournot_game();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..200 {
        let u = random_feasible(&game, &mut rng, 0.0);
        let v = random_feasible(&game, &mut rng, 0.0);
        if u == v {
            continue;
        }
        let fu = game
            .game_mapping(&game.joint_action(u.clone()).unwrap())
            .unwrap();
        let fv = game
            .game_mapping(&game.joint_action(v.clone()).unwrap())
            .unwrap();
        let du: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert!(
            dot(&du, &dx) > 0.0,
            "monotonicity violated at u = {u:?}, v = {v:?}"
        );
    }
}

#[test]
fn cournot_price_stays_positive_on_the_feasible_box() {
    let params = CournotParams::duopoly();
    let game = CournotParams::duopoly().into_game().unwrap();
    // Worst case: everyone at their upper bound.
    let top = game.joint_action(vec![
        20.0, 20.0, 20.0, 20.0, 10.0, 10.0, 10.0, 10.0,
    ])
    .unwrap();
    assert_eq!(params.price(&top), 130.0);
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    for _ in 0..200 {
        let x = game
            .joint_action(random_feasible(&game, &mut rng, 0.0))
            .unwrap();
        assert!(params.price(&x) > 0.0);
    }
}

#[test]
fn cournot_params_validation_catches_bad_inputs() {
    let cluster = CournotCluster {
        a: vec![1.0, 2.0],
        b: vec![0.0, 0.0],
        c: vec![0.0, 0.0],
        lower: 0.0,
        upper: 10.0,
    };
    // Price cap below maximum supply would let the price go negative.
    assert!(matches!(
        CournotParams::new(vec![cluster.clone()], 15.0),
        Err(GameError::InvalidParams(_))
    ));
    let mut flat = cluster.clone();
    flat.a = vec![1.0, 0.0];
    assert!(matches!(
        CournotParams::new(vec![flat], 100.0),
        Err(GameError::InvalidParams(_))
    ));
    let mut ragged = cluster;
    ragged.b = vec![0.0];
    assert!(matches!(
        CournotParams::new(vec![ragged], 100.0),
        Err(GameError::InvalidParams(_))
    ));
}

#[test]
fn joint_action_validation_reports_offending_component() {
    let game = cournot_game();
    assert!(matches!(
        game.joint_action(vec![0.0; 7]),
        Err(GameError::Dimension {
            expected: 8,
            got: 7
        })
    ));
    let mut v = vec![5.0; 8];
    v[6] = 10.5; // cluster 2 upper bound is 10
    match game.joint_action(v) {
        Err(GameError::Infeasible {
            component, value, ..
        }) => {
            assert_eq!(component, 2); // index within the cluster block
            assert_eq!(value, 10.5);
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn index_errors_are_reported() {
    let game = cournot_game();
    let x = game.midpoint();
    assert!(matches!(
        game.eval_cluster_cost(2, &x),
        Err(GameError::ClusterIndex { .. })
    ));
    assert!(matches!(
        game.eval_local_cost(0, 4, &x),
        Err(GameError::AgentIndex { .. })
    ));
}

#[test]
fn midpoint_sits_at_box_centers() {
    let game = cournot_game();
    assert_eq!(
        game.midpoint().as_slice(),
        &[10.0, 10.0, 10.0, 10.0, 5.0, 5.0, 5.0, 5.0]
    );
    assert_eq!(game.min_safety_radius(), 5.0);
}
