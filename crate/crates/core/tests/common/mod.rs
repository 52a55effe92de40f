#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uuvplan::network::{Network, Station, StationKind};

pub fn station(id: u32, position: [f64; 3], value: u32) -> Station {
    Station {
        id,
        position,
        kind: StationKind::Fixed,
        value,
        drift_bound: [0.0; 3],
        drift_sigma: 0.0,
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Random connected network on stations `1..=n` in a 3 km box; start 1,
/// goal n. `density` is the probability of each extra edge beyond a random
/// spanning tree; 1.0 gives the complete graph.
pub fn random_network(n: usize, density: f64, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stations: Vec<Station> = (1..=n as u32)
        .map(|id| {
            let p = [rng.random::<f64>() * 3000.0, rng.random::<f64>() * 3000.0, rng.random::<f64>() * 200.0];
            station(id, p, rng.random_range(1..=5))
        })
        .collect();
    let mut edges = Vec::new();
    for j in 2..=n as u32 {
        edges.push((rng.random_range(1..j), j));
    }
    for a in 1..=n as u32 {
        for b in a + 1..=n as u32 {
            if rng.random::<f64>() < density && !edges.contains(&(a, b)) {
                edges.push((a, b));
            }
        }
    }
    Network::new(stations, &edges, 1, n as u32).unwrap()
}

/// The route cost, written out independently of the library.
pub fn oracle_cost(time: f64, value: u32, n_total: usize, budget: f64) -> f64 {
    let rel = (time - budget) / budget;
    rel.abs() + n_total as f64 / (value as f64 + 1.0) + 100.0 * rel.max(0.0)
}

/// Every edge-simple walk from start that stops at its first arrival at the
/// goal, as station-id sequences.
pub fn enumerate_walks(net: &Network) -> Vec<Vec<u32>> {
    let pairs: Vec<(u32, u32)> = net.edges.iter().map(|e| (e.from, e.to)).collect();
    let mut out = Vec::new();
    let mut used = vec![false; pairs.len()];
    let mut walk = vec![net.start_id];
    fn dfs(
        pairs: &[(u32, u32)],
        goal: u32,
        used: &mut [bool],
        walk: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        let cur = *walk.last().unwrap();
        if cur == goal {
            out.push(walk.clone());
            return;
        }
        for (e, &(a, b)) in pairs.iter().enumerate() {
            if used[e] || (a != cur && b != cur) {
                continue;
            }
            let next = if a == cur { b } else { a };
            used[e] = true;
            walk.push(next);
            dfs(pairs, goal, used, walk, out);
            walk.pop();
            used[e] = false;
        }
    }
    dfs(&pairs, net.goal_id, &mut used, &mut walk, &mut out);
    out
}

/// Time and first-visit value of a walk at `speed`.
pub fn walk_stats(net: &Network, walk: &[u32], speed: f64) -> (f64, u32) {
    let pos = |id: u32| net.stations.iter().find(|s| s.id == id).unwrap();
    let mut seen = vec![walk[0]];
    let mut time = 0.0;
    let mut value = 0;
    for w in walk.windows(2) {
        time += dist(pos(w[0]).position, pos(w[1]).position) / speed;
        if !seen.contains(&w[1]) {
            seen.push(w[1]);
            value += pos(w[1]).value;
        }
    }
    (time, value)
}

/// Minimum cost over all enumerated walks.
pub fn oracle_optimum(net: &Network, budget: f64, speed: f64) -> f64 {
    enumerate_walks(net)
        .iter()
        .map(|w| {
            let (t, v) = walk_stats(net, w, speed);
            oracle_cost(t, v, net.len(), budget)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Fastest start-goal time by brute force over the enumerated walks.
pub fn oracle_fastest(net: &Network, speed: f64) -> f64 {
    enumerate_walks(net)
        .iter()
        .map(|w| walk_stats(net, w, speed).0)
        .fold(f64::INFINITY, f64::min)
}
