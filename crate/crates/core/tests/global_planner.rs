mod common;

use common::{enumerate_walks, oracle_cost, oracle_fastest, oracle_optimum, random_network, walk_stats};
use proptest::prelude::*;
use uuvplan::de::DeParams;
use uuvplan::global::{decode_route, plan_global, GlobalError, GlobalProblem};
use uuvplan::network::Network;

const SPEED: f64 = 2.4;

fn problem<'a>(net: &'a Network, budget: f64, collected: &'a [bool]) -> GlobalProblem<'a> {
    GlobalProblem {
        network: net,
        start: net.start_id,
        goal: net.goal_id,
        budget,
        speed: SPEED,
        collected,
    }
}

fn full_de() -> DeParams {
    DeParams {
        population: 50,
        generations: 300,
        ..DeParams::default()
    }
}

#[test]
fn complete_six_node_graph_matches_enumeration() {
    let mut hits = 0;
    let trials = 100;
    for seed in 0..trials {
        let net = random_network(6, 1.0, 1000 + seed);
        let collected = vec![false; net.len()];
        // generous: every walk of the complete graph fits
        let budget: f64 = net
            .edges
            .iter()
            .map(|e| net.edge_metrics(e.from, e.to, SPEED).unwrap().1)
            .sum();
        let best = oracle_optimum(&net, budget, SPEED);
        let plan = plan_global(&problem(&net, budget, &collected), &full_de(), 5, seed).unwrap();
        if plan.route.cost <= best * 1.05 {
            hits += 1;
        }
        assert!(plan.route.cost >= best - 1e-9, "planner beat the enumeration");
    }
    assert!(hits >= 95, "{hits}/{trials} within 5%");
}

#[test]
fn route_cost_agrees_with_walk_oracle() {
    let net = random_network(6, 0.6, 7);
    let collected = vec![false; net.len()];
    let budget = 4000.0;
    let plan = plan_global(&problem(&net, budget, &collected), &full_de(), 2, 3).unwrap();
    let (t, v) = walk_stats(&net, &plan.route.sequence, SPEED);
    assert!((plan.route.time - t).abs() < 1e-9);
    assert_eq!(plan.route.total_value, v);
    assert!((plan.route.cost - oracle_cost(t, v, net.len(), budget)).abs() < 1e-12);
}

#[test]
fn budget_below_fastest_walk_is_infeasible() {
    let net = random_network(5, 0.5, 11);
    let collected = vec![false; net.len()];
    let fastest = oracle_fastest(&net, SPEED);
    let err = plan_global(&problem(&net, fastest * 0.9, &collected), &full_de(), 1, 0).unwrap_err();
    assert!(matches!(err, GlobalError::NoFeasibleRoute { .. }));
    let ok = plan_global(&problem(&net, fastest * 1.0001, &collected), &full_de(), 1, 0).unwrap();
    assert!(ok.route.time <= fastest * 1.0001);
}

#[test]
fn every_decodable_walk_is_enumerated() {
    let net = random_network(6, 0.7, 5);
    let walks = enumerate_walks(&net);
    let collected = vec![false; net.len()];
    let p = problem(&net, 1e6, &collected);
    for k in 0..200u64 {
        let keys: Vec<f64> = (0..net.len()).map(|i| ((k * 31 + i as u64 * 17) % 97) as f64 / 97.0).collect();
        let r = decode_route(&keys, &p).unwrap();
        assert!(walks.contains(&r.sequence), "{:?}", r.sequence);
    }
}

fn edge_simple_goal_terminated(seq: &[u32], start: u32, goal: u32) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    seq.first() == Some(&start)
        && seq.last() == Some(&goal)
        && seq[..seq.len() - 1].iter().all(|&s| s != goal)
        && seq.windows(2).all(|w| seen.insert((w[0].min(w[1]), w[0].max(w[1]))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decoded_walks_are_edge_simple_and_end_at_goal(
        seed in 0u64..10_000,
        keys in prop::collection::vec(0.0f64..1.0, 20),
        budget_factor in 1.0f64..4.0,
    ) {
        let net = random_network(20, 0.15, seed);
        let collected = vec![false; net.len()];
        let budget = oracle_fastest_dijkstra(&net) * budget_factor;
        let p = problem(&net, budget, &collected);
        let r = decode_route(&keys, &p).unwrap();
        prop_assert!(edge_simple_goal_terminated(&r.sequence, net.start_id, net.goal_id));
        prop_assert!(r.sequence.windows(2).all(|w| net.is_usable(w[0], w[1])));
        prop_assert!(r.time <= budget * (1.0 + 1e-12));
    }

    #[test]
    fn decode_is_deterministic(seed in 0u64..1000, keys in prop::collection::vec(0.0f64..1.0, 8)) {
        let net = random_network(8, 0.4, seed);
        let collected = vec![false; net.len()];
        let p = problem(&net, 1e5, &collected);
        prop_assert_eq!(decode_route(&keys, &p).unwrap(), decode_route(&keys, &p).unwrap());
    }
}

/// Fastest start-goal time by plain Dijkstra over straight-line leg times.
fn oracle_fastest_dijkstra(net: &Network) -> f64 {
    let n = net.len();
    let pos = |i: usize| net.stations[i].position;
    let idx = |id: u32| net.stations.iter().position(|s| s.id == id).unwrap();
    let mut best = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    best[idx(net.start_id)] = 0.0;
    for _ in 0..n {
        let Some(u) = (0..n).filter(|&i| !done[i]).min_by(|&a, &b| best[a].total_cmp(&best[b])) else {
            break;
        };
        done[u] = true;
        for e in &net.edges {
            let (a, b) = (idx(e.from), idx(e.to));
            let v = if a == u { b } else if b == u { a } else { continue };
            let d = pos(u).iter().zip(pos(v)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
            best[v] = best[v].min(best[u] + d / SPEED);
        }
    }
    best[idx(net.goal_id)]
}
