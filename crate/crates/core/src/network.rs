//! The deforming sensor network: stations, edges, drift and reachability.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{current_at, ClusteredMap, VortexField};
use crate::rng::SimRng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("goal {goal} is unreachable from {start}")]
    UnreachableGoal { start: u32, goal: u32 },
    #[error("station {0} lies on a coast cell")]
    CoastalPlacement(u32),
    #[error("no edge between {0} and {1}")]
    NoSuchEdge(u32, u32),
    #[error("edge {0}-{1} was already used")]
    AlreadyUsed(u32, u32),
    #[error("unknown station {0}")]
    UnknownStation(u32),
    #[error("duplicate station id {0}")]
    DuplicateStation(u32),
    #[error("station {0} must be of kind fixed")]
    NotFixed(u32),
    #[error("could not place station {0} in water")]
    PlacementFailed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationKind {
    Fixed,
    Drifting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Station {
    pub id: u32,
    pub position: [f64; 3],
    pub kind: StationKind,
    pub value: u32,
    /// Per-axis maximum excursion from the anchor, meters.
    pub drift_bound: [f64; 3],
    pub drift_sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: u32,
    pub to: u32,
    /// Value collected on arrival at `to`.
    pub priority: f64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub stations: Vec<Station>,
    pub edges: Vec<Edge>,
    pub start_id: u32,
    pub goal_id: u32,
    pub anchor_positions: Vec<[f64; 3]>,
    index: BTreeMap<u32, usize>,
    /// Per station index: (neighbour index, edge index), sorted by neighbour id.
    adjacency: Vec<Vec<(usize, usize)>>,
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl Network {
    /// Assembles a network from placed stations and an undirected edge list.
    /// Duplicate pairs are merged; self loops are rejected as `NoSuchEdge`.
    pub fn new(
        stations: Vec<Station>,
        edge_pairs: &[(u32, u32)],
        start_id: u32,
        goal_id: u32,
    ) -> Result<Self, NetworkError> {
        let mut index = BTreeMap::new();
        for (i, s) in stations.iter().enumerate() {
            if index.insert(s.id, i).is_some() {
                return Err(NetworkError::DuplicateStation(s.id));
            }
        }
        for id in [start_id, goal_id] {
            let i = *index.get(&id).ok_or(NetworkError::UnknownStation(id))?;
            if stations[i].kind != StationKind::Fixed {
                return Err(NetworkError::NotFixed(id));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut edges = Vec::new();
        for &(a, b) in edge_pairs {
            if a == b {
                return Err(NetworkError::NoSuchEdge(a, b));
            }
            let bi = *index.get(&b).ok_or(NetworkError::UnknownStation(b))?;
            index.get(&a).ok_or(NetworkError::UnknownStation(a))?;
            if seen.insert((a.min(b), a.max(b))) {
                edges.push(Edge {
                    from: a,
                    to: b,
                    priority: f64::from(stations[bi].value),
                    used: false,
                });
            }
        }
        let anchor_positions = stations.iter().map(|s| s.position).collect();
        let mut net = Self {
            stations,
            edges,
            start_id,
            goal_id,
            anchor_positions,
            index,
            adjacency: Vec::new(),
        };
        net.rebuild_adjacency();
        Ok(net)
    }

    fn rebuild_adjacency(&mut self) {
        let mut adj = vec![Vec::new(); self.stations.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            let a = self.index[&edge.from];
            let b = self.index[&edge.to];
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| self.stations[n].id);
        }
        self.adjacency = adj;
    }

    pub fn len(&self) -> usize {
        self.stations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stations.is_empty()
    }

    pub fn index_of(&self, id: u32) -> Result<usize, NetworkError> {
        self.index.get(&id).copied().ok_or(NetworkError::UnknownStation(id))
    }

    pub fn station(&self, id: u32) -> Result<&Station, NetworkError> {
        Ok(&self.stations[self.index_of(id)?])
    }

    pub fn neighbours(&self, idx: usize) -> &[(usize, usize)] {
        &self.adjacency[idx]
    }

    pub fn edge_index(&self, i: u32, j: u32) -> Result<usize, NetworkError> {
        let a = self.index_of(i)?;
        let b = self.index_of(j)?;
        self.adjacency[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, e)| e)
            .ok_or(NetworkError::NoSuchEdge(i, j))
    }

    pub fn is_usable(&self, i: u32, j: u32) -> bool {
        self.edge_index(i, j).is_ok_and(|e| !self.edges[e].used)
    }

    /// Distance between station indices.
    #[inline]
    pub fn span(&self, a: usize, b: usize) -> f64 {
        distance(self.stations[a].position, self.stations[b].position)
    }

    /// Current 3D distance and nominal traversal time of edge `(i, j)`.
    pub fn edge_metrics(&self, i: u32, j: u32, speed: f64) -> Result<(f64, f64), NetworkError> {
        self.edge_index(i, j)?;
        let d = self.span(self.index_of(i)?, self.index_of(j)?);
        Ok((d, d / speed))
    }

    pub fn consume_edge(&self, i: u32, j: u32) -> Result<Self, NetworkError> {
        let e = self.edge_index(i, j)?;
        if self.edges[e].used {
            return Err(NetworkError::AlreadyUsed(i, j));
        }
        let mut out = self.clone();
        out.edges[e].used = true;
        Ok(out)
    }

    pub fn unused_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.used).count()
    }

    /// Whether `to` is reachable from `from` over unused edges that are not
    /// flagged in `blocked` (indexed by edge).
    pub fn reachable_avoiding(&self, from: usize, to: usize, blocked: &[bool]) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(n) = stack.pop() {
            for &(m, e) in &self.adjacency[n] {
                if self.edges[e].used || blocked.get(e).copied().unwrap_or(false) || seen[m] {
                    continue;
                }
                if m == to {
                    return true;
                }
                seen[m] = true;
                stack.push(m);
            }
        }
        false
    }

    pub fn reachable(&self, from_id: u32, to_id: u32) -> bool {
        match (self.index_of(from_id), self.index_of(to_id)) {
            (Ok(a), Ok(b)) => self.reachable_avoiding(a, b, &[]),
            _ => false,
        }
    }

    /// Minimum-time path over unused, unblocked edges at `speed`. Returns
    /// station indices (including both ends) and the nominal time.
    pub fn shortest_path(
        &self,
        from: usize,
        to: usize,
        speed: f64,
        blocked: &[bool],
    ) -> Option<(Vec<usize>, f64)> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl Ord for Item {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
            }
        }
        impl PartialOrd for Item {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        let n = self.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0.0;
        heap.push(Item(0.0, from));
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if u == to {
                break;
            }
            for &(v, e) in &self.adjacency[u] {
                if self.edges[e].used || blocked.get(e).copied().unwrap_or(false) {
                    continue;
                }
                let nd = d + self.span(u, v) / speed;
                if nd < dist[v] {
                    dist[v] = nd;
                    prev[v] = u;
                    heap.push(Item(nd, v));
                }
            }
        }
        if !dist[to].is_finite() {
            return None;
        }
        let mut path = vec![to];
        let mut cur = to;
        while cur != from {
            cur = prev[cur];
            path.push(cur);
        }
        path.reverse();
        Some((path, dist[to]))
    }

    /// Moves every drifting station once. Each proposal is the current
    /// position plus the local current vector plus per-axis Gaussian jitter;
    /// proposals leaving the anchor bound box, the water column or the water
    /// cells are redrawn up to 100 times, after which the station holds.
    pub fn drift_stations(&self, field: &VortexField, map: &ClusteredMap, rng: &mut SimRng) -> Self {
        let mut out = self.clone();
        let depth = map.grid.depth_extent;
        for (i, s) in out.stations.iter_mut().enumerate() {
            if s.kind != StationKind::Drifting {
                continue;
            }
            let anchor = self.anchor_positions[i];
            let c = current_at([s.position[0], s.position[1]], field);
            let drift = [c.vx, c.vy, 0.0];
            for _ in 0..100 {
                let mut p = s.position;
                for axis in 0..3 {
                    let g: f64 = if s.drift_sigma > 0.0 {
                        rng.sample::<f64, _>(StandardNormal) * s.drift_sigma
                    } else {
                        0.0
                    };
                    p[axis] += drift[axis] + g;
                }
                let inside = (0..3).all(|a| (p[a] - anchor[a]).abs() <= s.drift_bound[a]);
                if inside && p[2] >= 0.0 && p[2] <= depth && !map.is_coast(p[0], p[1]) {
                    s.position = p;
                    break;
                }
            }
        }
        out
    }
}

/// Explicit or randomly placed coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coord {
    At(f64),
    Random,
}

impl Serialize for Coord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Coord::At(v) => s.serialize_f64(*v),
            Coord::Random => s.serialize_str("random"),
        }
    }
}

impl<'de> Deserialize<'de> for Coord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Coord::At(v)),
            Raw::Int(v) => Ok(Coord::At(v as f64)),
            Raw::Text(t) if t == "random" => Ok(Coord::Random),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"random\", found {t:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub id: u32,
    pub x: Coord,
    pub y: Coord,
    pub z: Coord,
    pub kind: StationKind,
    pub value: u32,
    #[serde(default)]
    pub bound: Option<[f64; 3]>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

/// Network section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSpec {
    /// Station count when no explicit station list is given.
    pub count: usize,
    pub drifting_fraction: f64,
    /// Inclusive range of generated integer station values.
    pub values: [u32; 2],
    pub bound: [f64; 3],
    pub sigma: f64,
    /// Auto-adjacency radius, meters; used when `edges` is empty.
    pub comm_range: f64,
    pub start: u32,
    /// Defaults to the highest station id.
    pub goal: Option<u32>,
    pub edges: Vec<[u32; 2]>,
    pub stations: Vec<StationSpec>,
    /// Placement retries when a generated layout leaves the goal unreachable.
    pub placement_attempts: usize,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            count: 20,
            drifting_fraction: 0.5,
            values: [1, 5],
            bound: [50.0, 50.0, 10.0],
            sigma: 15.0,
            comm_range: 3500.0,
            start: 1,
            goal: None,
            edges: Vec::new(),
            stations: Vec::new(),
            placement_attempts: 50,
        }
    }
}

impl NetworkSpec {
    pub fn goal_id(&self) -> u32 {
        self.goal.unwrap_or_else(|| {
            if self.stations.is_empty() {
                self.count as u32
            } else {
                self.stations.iter().map(|s| s.id).max().unwrap_or(0)
            }
        })
    }
}

/// Places stations and builds adjacency. Random coordinates are drawn
/// uniformly over the map extent and redrawn while they fall on coast.
pub fn build_network(
    spec: &NetworkSpec,
    map: &ClusteredMap,
    rng: &mut SimRng,
) -> Result<Network, NetworkError> {
    let goal = spec.goal_id();
    let attempts = if spec.stations.iter().all(|s| !has_random(s)) && !spec.stations.is_empty() {
        1
    } else {
        spec.placement_attempts.max(1)
    };
    let mut last_err = NetworkError::UnreachableGoal {
        start: spec.start,
        goal,
    };
    for _ in 0..attempts {
        let stations = place_stations(spec, map, goal, rng)?;
        let pairs: Vec<(u32, u32)> = if spec.edges.is_empty() {
            range_edges(&stations, spec.comm_range)
        } else {
            spec.edges.iter().map(|e| (e[0], e[1])).collect()
        };
        let net = Network::new(stations, &pairs, spec.start, goal)?;
        let generated = spec.stations.is_empty() && spec.edges.is_empty();
        if net.reachable(spec.start, goal) && (!generated || usable_layout(&net)) {
            return Ok(net);
        }
        last_err = NetworkError::UnreachableGoal {
            start: spec.start,
            goal,
        };
    }
    Err(last_err)
}

/// Generated layouts must be connected, and the start must have a
/// neighbour besides the goal; otherwise every route is the trivial one.
fn usable_layout(net: &Network) -> bool {
    let Ok(start) = net.index_of(net.start_id) else {
        return false;
    };
    let all_reachable = net.stations.iter().all(|s| net.reachable(net.start_id, s.id));
    all_reachable && net.neighbours(start).iter().any(|&(j, _)| net.stations[j].id != net.goal_id)
}

fn has_random(s: &StationSpec) -> bool {
    [s.x, s.y, s.z].contains(&Coord::Random)
}

fn place_stations(
    spec: &NetworkSpec,
    map: &ClusteredMap,
    goal: u32,
    rng: &mut SimRng,
) -> Result<Vec<Station>, NetworkError> {
    let [ex, ey, ez] = map.extent();
    let mut out = Vec::new();
    if spec.stations.is_empty() {
        for id in 1..=spec.count as u32 {
            let fixed = id == spec.start || id == goal || rng.random::<f64>() >= spec.drifting_fraction;
            let value = rng.random_range(spec.values[0]..=spec.values[1]);
            let position = random_water_point(map, [ex, ey, ez], rng).ok_or(NetworkError::PlacementFailed(id))?;
            out.push(Station {
                id,
                position,
                kind: if fixed {
                    StationKind::Fixed
                } else {
                    StationKind::Drifting
                },
                value,
                drift_bound: spec.bound,
                drift_sigma: spec.sigma,
            });
        }
        return Ok(out);
    }
    for s in &spec.stations {
        let explicit = !has_random(s);
        let mut position = [0.0; 3];
        let mut placed = false;
        for _ in 0..10_000 {
            let mut draw = |c: Coord, hi: f64| match c {
                Coord::At(v) => v,
                Coord::Random => rng.random::<f64>() * hi,
            };
            position = [draw(s.x, ex), draw(s.y, ey), draw(s.z, ez)];
            if !map.is_coast(position[0], position[1]) {
                placed = true;
                break;
            }
            if explicit {
                break;
            }
        }
        if !placed {
            return Err(if explicit {
                NetworkError::CoastalPlacement(s.id)
            } else {
                NetworkError::PlacementFailed(s.id)
            });
        }
        out.push(Station {
            id: s.id,
            position,
            kind: s.kind,
            value: s.value,
            drift_bound: s.bound.unwrap_or(spec.bound),
            drift_sigma: s.sigma.unwrap_or(spec.sigma),
        });
    }
    Ok(out)
}

fn random_water_point(map: &ClusteredMap, extent: [f64; 3], rng: &mut SimRng) -> Option<[f64; 3]> {
    for _ in 0..10_000 {
        let p = [
            rng.random::<f64>() * extent[0],
            rng.random::<f64>() * extent[1],
            rng.random::<f64>() * extent[2],
        ];
        if !map.is_coast(p[0], p[1]) {
            return Some(p);
        }
    }
    None
}

/// Pairs of stations within `range` of each other, ordered by id.
pub fn range_edges(stations: &[Station], range: f64) -> Vec<(u32, u32)> {
    let mut pairs = Vec::new();
    for (i, a) in stations.iter().enumerate() {
        for b in &stations[i + 1..] {
            if distance(a.position, b.position) <= range {
                pairs.push((a.id, b.id));
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::VortexParams;
    use crate::rng::seeded;

    fn fixed(id: u32, position: [f64; 3]) -> Station {
        Station {
            id,
            position,
            kind: StationKind::Fixed,
            value: id,
            drift_bound: [0.0; 3],
            drift_sigma: 0.0,
        }
    }

    fn line() -> Network {
        Network::new(
            vec![
                fixed(1, [0.0, 0.0, 0.0]),
                fixed(2, [100.0, 0.0, 0.0]),
                fixed(3, [200.0, 0.0, 0.0]),
            ],
            &[(1, 2), (2, 3)],
            1,
            3,
        )
        .unwrap()
    }

    fn water() -> ClusteredMap {
        ClusteredMap::open_water(100, 100, 10.0, 100.0)
    }

    #[test]
    fn explicit_line_network() {
        let n = line();
        assert_eq!(n.edges.len(), 2);
        assert!(n.reachable(1, 3));
    }

    #[test]
    fn edge_metrics_hand_values() {
        let n = Network::new(
            vec![fixed(1, [0.0, 0.0, 0.0]), fixed(2, [3.0, 4.0, 0.0])],
            &[(1, 2)],
            1,
            2,
        )
        .unwrap();
        assert_eq!(n.edge_metrics(1, 2, 1.0).unwrap(), (5.0, 5.0));
        assert_eq!(n.edge_metrics(2, 1, 1.0).unwrap(), (5.0, 5.0));

        let n = Network::new(
            vec![fixed(1, [1000.0, 2000.0, 100.0]), fixed(2, [4000.0, 6000.0, 100.0])],
            &[(1, 2)],
            1,
            2,
        )
        .unwrap();
        let (d, t) = n.edge_metrics(1, 2, 2.82).unwrap();
        assert_eq!(d, 5000.0);
        assert!((t - 1773.0496).abs() < 1e-3);
        assert_eq!(n.edge_metrics(1, 1, 2.82), Err(NetworkError::NoSuchEdge(1, 1)));
    }

    #[test]
    fn self_loops_rejected_at_build() {
        let r = Network::new(vec![fixed(1, [0.0; 3]), fixed(2, [1.0; 3])], &[(1, 1)], 1, 2);
        assert_eq!(r.unwrap_err(), NetworkError::NoSuchEdge(1, 1));
    }

    #[test]
    fn consume_marks_used() {
        let n = line().consume_edge(1, 2).unwrap();
        assert!(!n.is_usable(1, 2));
        assert!(n.is_usable(2, 3));
        assert_eq!(n.consume_edge(2, 1).unwrap_err(), NetworkError::AlreadyUsed(2, 1));
        assert!(!n.reachable(1, 3));
    }

    #[test]
    fn goal_cut_off_after_consuming_incident_edges() {
        let n = Network::new(
            vec![
                fixed(1, [0.0; 3]),
                fixed(2, [10.0, 0.0, 0.0]),
                fixed(3, [20.0, 0.0, 0.0]),
                fixed(4, [30.0, 0.0, 0.0]),
            ],
            &[(1, 2), (2, 3), (1, 3), (3, 4), (2, 4)],
            1,
            4,
        )
        .unwrap();
        assert!(n.reachable(1, 4));
        let cut = n.consume_edge(3, 4).unwrap().consume_edge(2, 4).unwrap();
        assert!(!cut.reachable(1, 4));
        assert!(cut.shortest_path(0, 3, 1.0, &[]).is_none());
    }

    #[test]
    fn shortest_path_prefers_short_legs() {
        let n = Network::new(
            vec![
                fixed(1, [0.0, 0.0, 0.0]),
                fixed(2, [50.0, 10.0, 0.0]),
                fixed(3, [100.0, 0.0, 0.0]),
                fixed(4, [50.0, 500.0, 0.0]),
            ],
            &[(1, 2), (2, 3), (1, 4), (4, 3)],
            1,
            3,
        )
        .unwrap();
        let (path, t) = n.shortest_path(0, 2, 1.0, &[]).unwrap();
        assert_eq!(path, vec![0, 1, 2]);
        assert!((t - 2.0 * 2600f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn coastal_explicit_station_rejected() {
        let mut map = water();
        map.set_coast(5, 5, true);
        let spec = NetworkSpec {
            stations: vec![
                StationSpec {
                    id: 1,
                    x: Coord::At(55.0),
                    y: Coord::At(55.0),
                    z: Coord::At(0.0),
                    kind: StationKind::Fixed,
                    value: 0,
                    bound: None,
                    sigma: None,
                },
                StationSpec {
                    id: 2,
                    x: Coord::At(500.0),
                    y: Coord::At(500.0),
                    z: Coord::At(0.0),
                    kind: StationKind::Fixed,
                    value: 1,
                    bound: None,
                    sigma: None,
                },
            ],
            edges: vec![[1, 2]],
            ..NetworkSpec::default()
        };
        assert_eq!(
            build_network(&spec, &map, &mut seeded(0)).unwrap_err(),
            NetworkError::CoastalPlacement(1)
        );
    }

    #[test]
    fn fixed_only_network_does_not_drift() {
        let n = line();
        let field = VortexField::with_vortices(
            vec![VortexParams::new([50.0, 50.0], 20.0, 100.0)],
            [0.0, 0.0, 1000.0, 1000.0],
        );
        assert_eq!(n.drift_stations(&field, &water(), &mut seeded(1)), n);
    }

    #[test]
    fn drifting_station_still_without_forcing() {
        let mut s = fixed(2, [500.0, 500.0, 50.0]);
        s.kind = StationKind::Drifting;
        s.drift_bound = [50.0, 50.0, 10.0];
        let n = Network::new(vec![fixed(1, [0.0; 3]), s, fixed(3, [900.0; 3])], &[(1, 2), (2, 3)], 1, 3)
            .unwrap();
        let out = n.drift_stations(&VortexField::calm([0.0; 4]), &water(), &mut seeded(2));
        assert_eq!(out, n);
    }
}
