//! Route-level planner: random-key genomes decoded into edge walks over the
//! network, scored by time-budget fit and collected station value.

use thiserror::Error;

use crate::de::{optimize, DeError, DeParams};
use crate::network::{Network, NetworkError};
use crate::rng::child_seed;

/// Weight of the overtime term. Must be at least the station count so that
/// any overtime route costs more than any in-budget one.
pub const OVERTIME_WEIGHT: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlobalError {
    #[error("genome cannot be decoded into a start-goal walk")]
    Undecodable,
    #[error("shortest route needs {shortest:.1} s but only {budget:.1} s remain")]
    NoFeasibleRoute { shortest: f64, budget: f64 },
    #[error("goal unreachable from the current station")]
    Unreachable,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    De(#[from] DeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteLeg {
    pub from: u32,
    pub to: u32,
    pub distance: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub sequence: Vec<u32>,
    pub legs: Vec<RouteLeg>,
    pub distance: f64,
    pub time: f64,
    pub total_value: u32,
    pub cost: f64,
}

impl Route {
    pub fn stations(&self) -> usize {
        self.sequence.len()
    }
}

/// Everything a route decode depends on.
#[derive(Debug, Clone, Copy)]
pub struct GlobalProblem<'a> {
    pub network: &'a Network,
    pub start: u32,
    pub goal: u32,
    /// Available time T_M, seconds.
    pub budget: f64,
    pub speed: f64,
    /// Per station index: value already collected earlier in the mission.
    pub collected: &'a [bool],
}

/// `|T − T_M|/T_M + n/(Σρ + 1) + W·max(0, (T − T_M)/T_M)`.
pub fn route_cost(time: f64, value: u32, station_count: usize, budget: f64) -> f64 {
    let gap = (time - budget).abs() / budget;
    let worth = station_count as f64 / (f64::from(value) + 1.0);
    let over = ((time - budget) / budget).max(0.0);
    gap + worth + OVERTIME_WEIGHT * over
}

/// Scores a decode result; an undecodable genome costs +∞.
pub fn score(route: &Result<Route, GlobalError>) -> f64 {
    route.as_ref().map_or(f64::INFINITY, |r| r.cost)
}

fn assemble(path: &[usize], problem: &GlobalProblem) -> Route {
    let net = problem.network;
    let mut seen: Vec<bool> = problem.collected.to_vec();
    seen.resize(net.len(), false);
    seen[path[0]] = true;
    let mut legs = Vec::with_capacity(path.len().saturating_sub(1));
    let mut value = 0;
    for w in path.windows(2) {
        let d = net.span(w[0], w[1]);
        legs.push(RouteLeg {
            from: net.stations[w[0]].id,
            to: net.stations[w[1]].id,
            distance: d,
            time: d / problem.speed,
        });
        if !seen[w[1]] {
            seen[w[1]] = true;
            value += net.stations[w[1]].value;
        }
    }
    let distance: f64 = legs.iter().map(|l| l.distance).sum();
    let time = distance / problem.speed;
    Route {
        sequence: path.iter().map(|&i| net.stations[i].id).collect(),
        cost: route_cost(time, value, net.len(), problem.budget),
        legs,
        distance,
        time,
        total_value: value,
    }
}

/// Greedy constrained walk. From the current station, candidate moves are
/// unused edges not yet taken by this walk, ranked by descending key. The first candidate from which the goal is
/// still reachable is taken if the elapsed time plus its leg plus the
/// fastest finish stays within budget; otherwise the walk diverts onto the
/// fastest path to the goal. The walk ends on arriving at the goal.
pub fn decode_route(keys: &[f64], problem: &GlobalProblem) -> Result<Route, GlobalError> {
    let net = problem.network;
    let start = net.index_of(problem.start)?;
    let goal = net.index_of(problem.goal)?;
    if keys.len() != net.len() {
        return Err(DeError::LengthMismatch(net.len(), keys.len()).into());
    }
    let mut blocked = vec![false; net.edges.len()];
    let mut path = vec![start];
    let mut cur = start;
    let mut elapsed = 0.0;
    let mut candidates: Vec<(usize, usize)> = Vec::new();

    while cur != goal {
        candidates.clear();
        candidates.extend(
            net.neighbours(cur)
                .iter()
                .filter(|&&(_, e)| !net.edges[e].used && !blocked[e]),
        );
        candidates.sort_by(|&(a, _), &(b, _)| {
            keys[b]
                .total_cmp(&keys[a])
                .then(net.stations[a].id.cmp(&net.stations[b].id))
        });
        let mut step = None;
        for &(next, e) in &candidates {
            blocked[e] = true;
            let finish = net.shortest_path(next, goal, problem.speed, &blocked);
            blocked[e] = false;
            if let Some((_, finish_time)) = finish {
                step = Some((next, e, finish_time));
                break;
            }
        }
        let Some((next, e, finish_time)) = step else {
            return Err(GlobalError::Undecodable);
        };
        let leg = net.span(cur, next) / problem.speed;
        if elapsed + leg + finish_time > problem.budget {
            let (tail, _) = net
                .shortest_path(cur, goal, problem.speed, &blocked)
                .ok_or(GlobalError::Undecodable)?;
            path.extend_from_slice(&tail[1..]);
            break;
        }
        blocked[e] = true;
        elapsed += leg;
        path.push(next);
        cur = next;
    }
    Ok(assemble(&path, problem))
}

/// Fastest route to the goal, ignoring value.
pub fn shortest_route(problem: &GlobalProblem) -> Result<Route, GlobalError> {
    let net = problem.network;
    let (path, _) = net
        .shortest_path(net.index_of(problem.start)?, net.index_of(problem.goal)?, problem.speed, &[])
        .ok_or(GlobalError::Unreachable)?;
    Ok(assemble(&path, problem))
}

/// Evaluates an explicit station sequence (used when re-checking the
/// remainder of a route on a drifted snapshot).
pub fn route_from_sequence(sequence: &[u32], problem: &GlobalProblem) -> Result<Route, GlobalError> {
    let net = problem.network;
    let mut path = Vec::with_capacity(sequence.len());
    for w in sequence.windows(2) {
        if !net.is_usable(w[0], w[1]) {
            return Err(NetworkError::NoSuchEdge(w[0], w[1]).into());
        }
    }
    for &id in sequence {
        path.push(net.index_of(id)?);
    }
    if path.is_empty() {
        return Err(GlobalError::Undecodable);
    }
    Ok(assemble(&path, problem))
}

#[derive(Debug, Clone)]
pub struct GlobalPlan {
    pub route: Route,
    /// Best-cost trace of every restart.
    pub traces: Vec<Vec<f64>>,
}

/// Runs `restarts` independent DE searches over route genomes and keeps the
/// cheapest decoded route.
pub fn plan_global(
    problem: &GlobalProblem,
    params: &DeParams,
    restarts: usize,
    seed: u64,
) -> Result<GlobalPlan, GlobalError> {
    let fastest = shortest_route(problem)?;
    if fastest.time > problem.budget {
        return Err(GlobalError::NoFeasibleRoute {
            shortest: fastest.time,
            budget: problem.budget,
        });
    }
    let n = problem.network.len();
    let mut best: Option<Route> = None;
    let mut traces = Vec::new();
    for r in 0..restarts.max(1) {
        let config = params.config(child_seed(seed, r as u64), vec![[0.0, 1.0]; n]);
        let out = optimize(&config, &[], |keys| {
            let route = decode_route(keys, problem);
            Ok::<_, GlobalError>((score(&route), route.ok()))
        })?;
        traces.push(out.trace);
        if let Some(route) = out.best.aux {
            if best.as_ref().is_none_or(|b| route.cost < b.cost) {
                best = Some(route);
            }
        }
    }
    let route = match best {
        Some(r) if r.cost <= fastest.cost => r,
        _ => fastest,
    };
    Ok(GlobalPlan { route, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Station, StationKind};

    fn st(id: u32, x: f64, y: f64, value: u32) -> Station {
        Station {
            id,
            position: [x, y, 0.0],
            kind: StationKind::Fixed,
            value,
            drift_bound: [0.0; 3],
            drift_sigma: 0.0,
        }
    }

    fn triangle() -> Network {
        Network::new(
            vec![st(1, 0.0, 0.0, 0), st(2, 50.0, 80.0, 3), st(3, 100.0, 0.0, 1)],
            &[(1, 2), (2, 3), (1, 3)],
            1,
            3,
        )
        .unwrap()
    }

    fn problem<'a>(net: &'a Network, budget: f64, collected: &'a [bool]) -> GlobalProblem<'a> {
        GlobalProblem {
            network: net,
            start: net.start_id,
            goal: net.goal_id,
            budget,
            speed: 1.0,
            collected,
        }
    }

    #[test]
    fn line_network_forces_route() {
        let net = Network::new(
            vec![st(1, 0.0, 0.0, 0), st(2, 10.0, 0.0, 2), st(3, 20.0, 0.0, 1)],
            &[(1, 2), (2, 3)],
            1,
            3,
        )
        .unwrap();
        let c = vec![false; 3];
        for keys in [[0.1, 0.9, 0.5], [0.9, 0.0, 0.1]] {
            let r = decode_route(&keys, &problem(&net, 1000.0, &c)).unwrap();
            assert_eq!(r.sequence, vec![1, 2, 3]);
        }
    }

    #[test]
    fn triangle_detour_with_generous_budget() {
        let net = triangle();
        let c = vec![false; 3];
        let r = decode_route(&[0.0, 0.9, 0.1], &problem(&net, 1000.0, &c)).unwrap();
        assert_eq!(r.sequence, vec![1, 2, 3]);
        assert_eq!(r.total_value, 4);
        assert_eq!(r.legs.len(), 2);
    }

    #[test]
    fn triangle_diverts_under_tight_budget() {
        let net = triangle();
        let c = vec![false; 3];
        let r = decode_route(&[0.0, 0.9, 0.1], &problem(&net, 101.0, &c)).unwrap();
        assert_eq!(r.sequence, vec![1, 3]);
        assert_eq!(r.time, 100.0);
    }

    #[test]
    fn cost_hand_values() {
        assert!((route_cost(900.0, 9, 20, 1000.0) - 2.1).abs() < 1e-12);
        assert!((route_cost(1000.0, 1_000_000, 20, 1000.0) - 20.0 / 1_000_001.0).abs() < 1e-15);
        assert!(route_cost(950.0, 20, 20, 1000.0) < route_cost(950.0, 10, 20, 1000.0));
        // same gap either side of the budget; only the overtime term differs
        let d = route_cost(1100.0, 5, 20, 1000.0) - route_cost(900.0, 5, 20, 1000.0);
        assert!((d - OVERTIME_WEIGHT * 0.1).abs() < 1e-9);
        assert_eq!(score(&Err(GlobalError::Undecodable)), f64::INFINITY);
    }

    #[test]
    fn collected_stations_add_no_value() {
        let net = triangle();
        let c = vec![false, true, false];
        let r = decode_route(&[0.0, 0.9, 0.1], &problem(&net, 1000.0, &c)).unwrap();
        assert_eq!(r.total_value, 1);
    }

    #[test]
    fn two_node_plan() {
        let net = Network::new(vec![st(1, 0.0, 0.0, 0), st(2, 30.0, 40.0, 4)], &[(1, 2)], 1, 2).unwrap();
        let c = vec![false; 2];
        let plan = plan_global(&problem(&net, 100.0, &c), &DeParams::default().reduced(0.05), 2, 1).unwrap();
        assert_eq!(plan.route.sequence, vec![1, 2]);
        assert_eq!(plan.traces.len(), 2);
    }

    #[test]
    fn infeasible_budget_reported() {
        let net = triangle();
        let c = vec![false; 3];
        let err = plan_global(&problem(&net, 50.0, &c), &DeParams::default(), 1, 1).unwrap_err();
        assert!(matches!(err, GlobalError::NoFeasibleRoute { .. }));
    }

    #[test]
    fn sequence_check_rejects_used_edges() {
        let net = triangle().consume_edge(1, 2).unwrap();
        let c = vec![false; 3];
        assert!(route_from_sequence(&[1, 2, 3], &problem(&net, 1000.0, &c)).is_err());
        let ok = route_from_sequence(&[1, 3], &problem(&net, 1000.0, &c)).unwrap();
        assert_eq!(ok.time, 100.0);
    }
}
