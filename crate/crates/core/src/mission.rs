//! Mission executor: plans a route, flies it leg by leg in fixed time steps,
//! and replans locally on hazards and globally on overruns or a broken route.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::de::DeParams;
use crate::env::{
    current_at, perturb_field, point_in_collision, step_obstacles, ClusteredMap, Obstacle,
    ObstacleForecast, VortexField,
};
use crate::global::{
    plan_global, route_cost, route_from_sequence, shortest_route, GlobalError, GlobalProblem, Route,
};
use crate::local::{
    plan_local, replan_local, tangential_speed, KinematicPeaks, LocalCostWeights, LocalEnv,
    LocalError, LocalPath, SplineConfig,
};
use crate::network::{distance, Network};
use crate::rng::{child_seed, derive_seed, stream, SimRng, STREAM_DE_GLOBAL, STREAM_DE_LOCAL, STREAM_MISSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleConfig {
    /// Upper bound on commanded speed, m/s.
    pub max_speed: f64,
    /// Speed through the water used by both planners, m/s.
    pub cruise_speed: f64,
    /// Battery time available at launch, s.
    #[serde(rename = "T_M")]
    pub battery: f64,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            max_speed: 2.82,
            cruise_speed: 2.4,
            battery: 14_400.0,
        }
    }
}

impl VehicleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.battery > 0.0) {
            return Err("vehicle.T_M must be > 0".into());
        }
        if !(self.max_speed > 0.0) {
            return Err("vehicle.max_speed must be > 0".into());
        }
        if !(self.cruise_speed > 0.0 && self.cruise_speed <= self.max_speed) {
            return Err("vehicle.cruise_speed must be in (0, max_speed]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    /// Simulation step, s.
    pub dt: f64,
    /// Hazards are looked for along the path within this range, m.
    pub sensing_radius: f64,
    /// Extra obstacle radius used when planning a leg, m.
    pub planning_clearance: f64,
    /// Extra obstacle radius used when checking a flown path; kept below the
    /// planning clearance so a fresh plan does not immediately re-trigger.
    pub detection_clearance: f64,
    /// Fractional overrun of a leg's expected time that triggers a global replan.
    pub replan_slack: f64,
    /// Minimum time between hazard replans on one leg, s.
    pub replan_cooldown: f64,
    /// DE budget multiplier for the one retry after a leg finds no path.
    pub local_retry_factor: f64,
    /// Furthest ahead obstacle envelopes are forecast when planning a leg, s.
    pub forecast_horizon: f64,
    pub max_local_replans: usize,
    /// Battery time held back from every route plan, s.
    pub reserve: f64,
    /// Fraction added to every nominal leg time when planning routes.
    pub time_margin: f64,
    /// Generation budget of replans relative to the initial plans.
    pub replan_generations: f64,
    pub global_restarts: usize,
    pub drift_every_leg: bool,
    pub perturb_every_leg: bool,
    /// Keep the per-tick trace in the report.
    pub record_ticks: bool,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            dt: 1.0,
            sensing_radius: 500.0,
            planning_clearance: 40.0,
            detection_clearance: 20.0,
            replan_slack: 0.05,
            replan_cooldown: 30.0,
            forecast_horizon: 600.0,
            local_retry_factor: 2.0,
            max_local_replans: 20,
            reserve: 300.0,
            time_margin: 0.02,
            replan_generations: 0.5,
            global_restarts: 3,
            drift_every_leg: true,
            perturb_every_leg: true,
            record_ticks: true,
        }
    }
}

impl MissionConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("mission.dt", self.dt),
            ("mission.sensing_radius", self.sensing_radius),
            ("mission.replan_generations", self.replan_generations),
            ("mission.forecast_horizon", self.forecast_horizon),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{name} must be > 0"));
            }
        }
        let non_negative = [
            ("mission.planning_clearance", self.planning_clearance),
            ("mission.detection_clearance", self.detection_clearance),
            ("mission.replan_slack", self.replan_slack),
            ("mission.replan_cooldown", self.replan_cooldown),
            ("mission.local_retry_factor", self.local_retry_factor),
            ("mission.reserve", self.reserve),
            ("mission.time_margin", self.time_margin),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0) {
                return Err(format!("{name} must be >= 0"));
            }
        }
        if self.global_restarts == 0 {
            return Err("mission.global_restarts must be >= 1".into());
        }
        Ok(())
    }
}

/// Everything a mission is flown in.
#[derive(Debug, Clone)]
pub struct World {
    /// Ground truth used for collision accounting.
    pub map: ClusteredMap,
    /// Coast grown by a safety margin; planners and station placement use it.
    pub planning_map: ClusteredMap,
    pub field: VortexField,
    pub obstacles: Vec<Obstacle>,
    pub network: Network,
}

#[derive(Debug, Clone)]
pub struct MissionSetup {
    pub world: World,
    pub vehicle: VehicleConfig,
    pub mission: MissionConfig,
    pub global_de: DeParams,
    pub local_de: DeParams,
    pub weights: LocalCostWeights,
    pub spline: SplineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VehicleState {
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    pub yaw_rate: f64,
    pub speed: f64,
    /// Battery time left, s.
    pub battery: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LegOutcome {
    pub from: u32,
    pub to: u32,
    /// Expected time from the route planner, s.
    pub planned: f64,
    /// Flown time, s.
    pub actual: f64,
    pub distance: f64,
    pub local_replans: usize,
    pub collided: bool,
    pub value: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReplanReason {
    /// The last leg took longer than expected.
    Overrun,
    /// An edge of the remaining route is gone.
    EdgeMissing,
    /// The remaining route no longer fits the battery.
    RouteTooLong,
    /// A predicted obstacle envelope crosses the path ahead.
    Hazard,
    /// The current stalled the vehicle.
    Stall,
}

impl ReplanReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ReplanReason::Overrun => "overrun",
            ReplanReason::EdgeMissing => "edge-missing",
            ReplanReason::RouteTooLong => "route-too-long",
            ReplanReason::Hazard => "hazard",
            ReplanReason::Stall => "stall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanKind {
    Global,
    Local,
}

impl PlanKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PlanKind::Global => "global",
            PlanKind::Local => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplanEvent {
    pub time: f64,
    pub kind: PlanKind,
    pub reason: ReplanReason,
    /// Whether the replan produced a new plan.
    pub succeeded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub time: f64,
    pub position: [f64; 3],
    pub yaw: f64,
    pub leg: usize,
}

/// Best-cost trace of one DE run.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanTrace {
    pub kind: PlanKind,
    pub leg: usize,
    pub trace: Vec<f64>,
}

/// Kinematic peaks of a path the executor flew.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcceptedPath {
    pub leg: usize,
    pub peaks: KinematicPeaks,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionReport {
    pub global_replans: usize,
    /// Flown route time, s.
    pub route_time: f64,
    pub residual_time: f64,
    pub total_value: u32,
    pub stations_visited: usize,
    pub total_cost: f64,
    /// Host time spent, s. Not part of any written artifact.
    pub wall_clock: f64,
    pub legs: Vec<LegOutcome>,
    pub success: bool,
    pub failure: Option<String>,
    pub sequence: Vec<u32>,
    pub initial_route: Option<Route>,
    pub collisions: usize,
    pub replans: Vec<ReplanEvent>,
    pub ticks: Vec<TickRecord>,
    pub traces: Vec<PlanTrace>,
    pub accepted_paths: Vec<AcceptedPath>,
}

impl MissionReport {
    pub fn overrun_replans(&self) -> usize {
        self.replans
            .iter()
            .filter(|r| r.kind == PlanKind::Global && r.reason == ReplanReason::Overrun)
            .count()
    }

    pub fn local_replans(&self) -> usize {
        self.legs.iter().map(|l| l.local_replans).sum()
    }
}

/// Route-level replan test after a leg: overrun beyond `slack`, then a
/// missing edge in the rest of the route, then the rest of the route
/// (re-timed on the current snapshot) exceeding the remaining battery.
#[allow(clippy::too_many_arguments)]
pub fn should_replan_global(
    actual: f64,
    planned: f64,
    remaining_route: &[u32],
    network: &Network,
    remaining_budget: f64,
    speed: f64,
    slack: f64,
    collected: &[bool],
) -> Option<ReplanReason> {
    if actual > planned * (1.0 + slack) {
        return Some(ReplanReason::Overrun);
    }
    if remaining_route.windows(2).any(|w| !network.is_usable(w[0], w[1])) {
        return Some(ReplanReason::EdgeMissing);
    }
    if remaining_route.len() >= 2 {
        let problem = GlobalProblem {
            network,
            start: remaining_route[0],
            goal: remaining_route[remaining_route.len() - 1],
            budget: remaining_budget.max(f64::MIN_POSITIVE),
            speed,
            collected,
        };
        match route_from_sequence(remaining_route, &problem) {
            Ok(r) if r.time > remaining_budget => return Some(ReplanReason::RouteTooLong),
            Ok(_) => {}
            Err(_) => return Some(ReplanReason::EdgeMissing),
        }
    }
    None
}

/// Where the vehicle is along a path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Progress {
    pub segment: usize,
    /// Distance travelled into `segment`, m.
    pub offset: f64,
}

impl Progress {
    pub fn position(&self, path: &LocalPath) -> [f64; 3] {
        let s = &path.samples;
        if self.segment + 1 >= s.len() {
            return s[s.len() - 1].position;
        }
        let (p, q) = (s[self.segment].position, s[self.segment + 1].position);
        let len = distance(p, q);
        let f = if len > 0.0 { self.offset / len } else { 0.0 };
        std::array::from_fn(|k| p[k] + f * (q[k] - p[k]))
    }

    /// Planned path time at this point.
    pub fn path_time(&self, path: &LocalPath) -> f64 {
        let s = &path.samples;
        if self.segment + 1 >= s.len() {
            return path.time;
        }
        let len = distance(s[self.segment].position, s[self.segment + 1].position);
        let f = if len > 0.0 { self.offset / len } else { 0.0 };
        s[self.segment].time + f * (s[self.segment + 1].time - s[self.segment].time)
    }

    pub fn done(&self, path: &LocalPath) -> bool {
        self.segment + 1 >= path.samples.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickEvent {
    Arrived,
    Stalled,
    HazardDetected(u32),
}

/// Moves along `path` for up to `dt` seconds at the ground speed given by the
/// live current. Returns the time actually used (less than `dt` only on
/// arrival) and whether the current pinned the speed at its floor.
pub fn advance(path: &LocalPath, progress: &mut Progress, field: &VortexField, cruise: f64, dt: f64) -> (f64, bool) {
    let s = &path.samples;
    let mut left = dt;
    let mut stalled = false;
    while left > 0.0 && !progress.done(path) {
        let (p, q) = (s[progress.segment].position, s[progress.segment + 1].position);
        let len = distance(p, q);
        let rest = len - progress.offset;
        if len <= 0.0 || rest <= 0.0 {
            progress.segment += 1;
            progress.offset = 0.0;
            continue;
        }
        let t = [(q[0] - p[0]) / len, (q[1] - p[1]) / len, (q[2] - p[2]) / len];
        let here = progress.position(path);
        let c = current_at([here[0], here[1]], field);
        let mut along = tangential_speed(cruise, t, [c.vx, c.vy]);
        if along < 0.1 * cruise {
            along = 0.1 * cruise;
            stalled = true;
        }
        if rest <= along * left {
            left -= rest / along;
            progress.segment += 1;
            progress.offset = 0.0;
        } else {
            progress.offset += along * left;
            left = 0.0;
        }
    }
    (dt - left, stalled)
}

/// First obstacle whose forecast envelope (plus `clearance`) covers a path
/// sample ahead of the vehicle within `sensing_radius` of it.
pub fn hazard_ahead(
    path: &LocalPath,
    progress: &Progress,
    obstacles: &[Obstacle],
    field: &VortexField,
    sensing_radius: f64,
    clearance: f64,
) -> Option<u32> {
    let here = progress.position(path);
    let now = progress.path_time(path);
    for o in obstacles {
        let f = ObstacleForecast::new(o, field, clearance);
        if distance(o.position, here) > sensing_radius + f.base_radius + f.growth * 600.0 {
            continue;
        }
        // the leg's end is fixed by the route, so it cannot be planned around
        let ahead = progress.segment + 1..path.samples.len() - 1;
        for s in &path.samples[ahead] {
            if distance(s.position, here) > sensing_radius {
                break;
            }
            if f.contains(s.position, s.time - now) {
                return Some(o.id);
            }
        }
    }
    None
}

/// One simulation step of a leg: move, step obstacles, look for hazards.
#[allow(clippy::too_many_arguments)]
pub fn tick_leg(
    state: &VehicleState,
    path: &LocalPath,
    progress: &mut Progress,
    field: &VortexField,
    obstacles: &mut Vec<Obstacle>,
    config: &MissionConfig,
    rng: &mut SimRng,
    dt: f64,
) -> (VehicleState, f64, Vec<TickEvent>) {
    let (used, stalled) = advance(path, progress, field, state.speed, dt);
    *obstacles = step_obstacles(obstacles, field, used, rng);
    let mut events = Vec::new();
    let mut next = *state;
    next.position = progress.position(path);
    let k = progress.segment.min(path.samples.len() - 1);
    next.yaw = path.samples[k].yaw;
    next.pitch = path.samples[k].pitch;
    next.yaw_rate = path.samples[k].yaw_rate;
    next.battery -= used;
    if stalled {
        events.push(TickEvent::Stalled);
    }
    if progress.done(path) {
        events.push(TickEvent::Arrived);
    } else if let Some(id) = hazard_ahead(
        path,
        progress,
        obstacles,
        field,
        config.sensing_radius,
        config.detection_clearance,
    ) {
        events.push(TickEvent::HazardDetected(id));
    }
    (next, used, events)
}

struct Seeds {
    global: u64,
    local: u64,
    global_count: u64,
    local_count: u64,
}

impl Seeds {
    fn next_global(&mut self) -> u64 {
        self.global_count += 1;
        child_seed(self.global, self.global_count)
    }

    fn next_local(&mut self) -> u64 {
        self.local_count += 1;
        child_seed(self.local, self.local_count)
    }
}

/// Runs the whole mission. Never panics on mission-level failure; the
/// report carries `success = false` and a reason instead.
pub fn run_mission(setup: &MissionSetup, seed: u64) -> MissionReport {
    let started = Instant::now();
    let mut report = Executor::new(setup, seed).run();
    report.wall_clock = started.elapsed().as_secs_f64();
    report
}

/// The route the mission would start with, without flying it. Traces of
/// the DE runs come back alongside.
pub fn plan_initial_route(setup: &MissionSetup, seed: u64) -> Result<(Route, Vec<PlanTrace>), GlobalError> {
    let mut ex = Executor::new(setup, seed);
    let start = ex.network.index_of(ex.network.start_id)?;
    ex.collected[start] = true;
    let route = ex.plan_route(ex.network.start_id, false)?;
    Ok((route, ex.report.traces))
}

struct Executor<'a> {
    setup: &'a MissionSetup,
    rng: SimRng,
    seeds: Seeds,
    network: Network,
    field: VortexField,
    obstacles: Vec<Obstacle>,
    collected: Vec<bool>,
    report: MissionReport,
    elapsed: f64,
}

impl<'a> Executor<'a> {
    fn new(setup: &'a MissionSetup, seed: u64) -> Self {
        let w = &setup.world;
        Self {
            setup,
            rng: stream(seed, STREAM_MISSION),
            seeds: Seeds {
                global: derive_seed(seed, STREAM_DE_GLOBAL),
                local: derive_seed(seed, STREAM_DE_LOCAL),
                global_count: 0,
                local_count: 0,
            },
            network: w.network.clone(),
            field: w.field.clone(),
            obstacles: w.obstacles.clone(),
            collected: vec![false; w.network.len()],
            report: MissionReport {
                global_replans: 0,
                route_time: 0.0,
                residual_time: setup.vehicle.battery,
                total_value: 0,
                stations_visited: 0,
                total_cost: f64::INFINITY,
                wall_clock: 0.0,
                legs: Vec::new(),
                success: false,
                failure: None,
                sequence: Vec::new(),
                initial_route: None,
                collisions: 0,
                replans: Vec::new(),
                ticks: Vec::new(),
                traces: Vec::new(),
                accepted_paths: Vec::new(),
            },
            elapsed: 0.0,
        }
    }

    fn remaining(&self) -> f64 {
        self.setup.vehicle.battery - self.elapsed
    }

    /// Route from `from` to the goal within the remaining battery less the
    /// reserve; falls back to the full remaining battery, then to the
    /// fastest route regardless of budget.
    fn plan_route(&mut self, from: u32, replan: bool) -> Result<Route, GlobalError> {
        let s = self.setup;
        let params = if replan {
            s.global_de.reduced(s.mission.replan_generations)
        } else {
            s.global_de.clone()
        };
        let leg = self.report.legs.len();
        let remaining = self.remaining();
        let budgets = [remaining - s.mission.reserve, remaining];
        let speed = self.effective_speed();
        for budget in budgets {
            if budget <= 0.0 {
                continue;
            }
            let problem = GlobalProblem {
                network: &self.network,
                start: from,
                goal: self.network.goal_id,
                budget,
                speed,
                collected: &self.collected,
            };
            let seed = self.seeds.next_global();
            match plan_global(&problem, &params, s.mission.global_restarts, seed) {
                Ok(plan) => {
                    for trace in plan.traces {
                        self.report.traces.push(PlanTrace {
                            kind: PlanKind::Global,
                            leg,
                            trace,
                        });
                    }
                    return Ok(plan.route);
                }
                Err(GlobalError::NoFeasibleRoute { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let problem = GlobalProblem {
            network: &self.network,
            start: from,
            goal: self.network.goal_id,
            budget: remaining.max(f64::MIN_POSITIVE),
            speed,
            collected: &self.collected,
        };
        shortest_route(&problem)
    }

    /// Cruise speed scaled down by how much flown legs overran their
    /// nominal times, so replans budget for the conditions seen so far.
    fn effective_speed(&self) -> f64 {
        let cruise = self.setup.vehicle.cruise_speed;
        let planned: f64 = self.report.legs.iter().map(|l| l.planned).sum();
        let actual: f64 = self.report.legs.iter().map(|l| l.actual).sum();
        let observed = if actual > 0.0 { (planned / actual).min(1.0) } else { 1.0 };
        cruise * observed / (1.0 + self.setup.mission.time_margin)
    }

    fn fail(mut self, reason: &str) -> MissionReport {
        self.report.failure = Some(reason.to_string());
        self.finish()
    }

    fn finish(mut self) -> MissionReport {
        let r = &mut self.report;
        r.route_time = self.elapsed;
        r.residual_time = self.setup.vehicle.battery - self.elapsed;
        let mut seen: Vec<u32> = r.sequence.clone();
        seen.sort_unstable();
        seen.dedup();
        r.stations_visited = seen.len();
        r.total_cost = route_cost(
            self.elapsed,
            r.total_value,
            self.network.len(),
            self.setup.vehicle.battery,
        );
        self.report
    }

    fn run(mut self) -> MissionReport {
        let s = self.setup;
        let goal = self.network.goal_id;
        let mut at = self.network.start_id;
        let start_idx = match self.network.index_of(at) {
            Ok(i) => i,
            Err(e) => return self.fail(&e.to_string()),
        };
        self.collected[start_idx] = true;
        self.report.sequence.push(at);
        let mut position = self.network.stations[start_idx].position;

        let mut route = match self.plan_route(at, false) {
            Ok(r) => r,
            Err(e) => return self.fail(&e.to_string()),
        };
        self.report.initial_route = Some(route.clone());
        let mut cursor = 0;

        while at != goal {
            if self.remaining() <= 0.0 {
                return self.fail("battery exhausted");
            }
            let next = route.sequence[cursor + 1];
            if s.mission.perturb_every_leg {
                // noise is applied to the nominal field, not compounded
                self.field = perturb_field(&s.world.field, &mut self.rng);
            }
            let target = match self.network.station(next) {
                Ok(st) => st.position,
                Err(e) => return self.fail(&e.to_string()),
            };
            let planned = distance(position, target) / s.vehicle.cruise_speed;
            let leg_index = self.report.legs.len();

            let flown = if distance(position, target) < 1e-6 {
                Some(LegFlight::default())
            } else {
                let critical = self
                    .network
                    .consume_edge(at, next)
                    .is_ok_and(|n| !n.reachable(at, goal));
                self.fly_leg(position, target, leg_index, critical)
            };
            let Some(flight) = flown else {
                // no acceptable path: drop the edge and let the route planner
                // find another way
                if let Ok(n) = self.network.consume_edge(at, next) {
                    self.network = n;
                }
                let rest = &route.sequence[cursor..];
                let reason = should_replan_global(
                    0.0,
                    0.0,
                    rest,
                    &self.network,
                    self.remaining(),
                    s.vehicle.cruise_speed,
                    s.mission.replan_slack,
                    &self.collected,
                );
                if let Some(reason) = reason {
                    match self.global_replan(at, reason) {
                        Some(r) => {
                            route = r;
                            cursor = 0;
                            continue;
                        }
                        None => return self.fail("goal cut off"),
                    }
                }
                return self.fail("goal cut off");
            };

            self.elapsed += flight.time;
            position = flight.end;
            if flight.exhausted {
                self.report.legs.push(LegOutcome {
                    from: at,
                    to: next,
                    planned,
                    actual: flight.time,
                    distance: flight.distance,
                    local_replans: flight.local_replans,
                    collided: flight.collided,
                    value: 0,
                });
                return self.fail("battery exhausted");
            }
            if let Ok(n) = self.network.consume_edge(at, next) {
                self.network = n;
            }
            if s.mission.drift_every_leg {
                self.network = self
                    .network
                    .drift_stations(&self.field, &s.world.planning_map, &mut self.rng);
            }
            let idx = self.network.index_of(next).unwrap_or(0);
            let value = if self.collected[idx] {
                0
            } else {
                self.collected[idx] = true;
                self.network.stations[idx].value
            };
            self.report.total_value += value;
            self.report.sequence.push(next);
            self.report.legs.push(LegOutcome {
                from: at,
                to: next,
                planned,
                actual: flight.time,
                distance: flight.distance,
                local_replans: flight.local_replans,
                collided: flight.collided,
                value,
            });
            at = next;
            cursor += 1;
            if at == goal {
                break;
            }
            // the station may have drifted away from where the vehicle stopped
            let rest = &route.sequence[cursor..];
            let reason = should_replan_global(
                flight.time,
                planned,
                rest,
                &self.network,
                self.remaining(),
                s.vehicle.cruise_speed,
                s.mission.replan_slack,
                &self.collected,
            );
            if let Some(reason) = reason {
                match self.global_replan(at, reason) {
                    Some(r) => {
                        route = r;
                        cursor = 0;
                    }
                    None => return self.fail("goal cut off"),
                }
            }
        }
        self.report.success = self.remaining() >= 0.0;
        if !self.report.success {
            self.report.failure = Some("battery exhausted".into());
        }
        self.finish()
    }

    fn global_replan(&mut self, at: u32, reason: ReplanReason) -> Option<Route> {
        self.report.global_replans += 1;
        let route = self.plan_route(at, true).ok();
        self.report.replans.push(ReplanEvent {
            time: self.elapsed,
            kind: PlanKind::Global,
            reason,
            succeeded: route.is_some(),
        });
        route
    }

    /// Plans and flies one leg; `None` when no acceptable path was found.
    /// `critical` marks a leg whose edge is the only way left to the goal.
    fn fly_leg(&mut self, from: [f64; 3], to: [f64; 3], leg: usize, critical: bool) -> Option<LegFlight> {
        let s = self.setup;
        let hazards: Vec<ObstacleForecast> = self
            .obstacles
            .iter()
            .map(|o| ObstacleForecast::new(o, &self.field, s.mission.planning_clearance))
            .collect();
        let env = LocalEnv {
            field: &self.field,
            map: &s.world.planning_map,
            hazards: &hazards,
            time_offset: 0.0,
            horizon: s.mission.forecast_horizon,
        };
        // a leg the goal depends on gets a few ever larger searches before
        // it is given up
        let retries = match s.mission.local_retry_factor > 1.0 {
            false => 0,
            true if critical => 3,
            true => 1,
        };
        let mut de = s.local_de.clone();
        let mut attempt = 0;
        let plan = loop {
            let seed = self.seeds.next_local();
            match plan_local(from, to, &env, &s.weights, &s.spline, &de, seed, &[]) {
                Ok(p) => break p,
                Err(LocalError::NoFeasiblePath { .. }) if attempt < retries => {
                    attempt += 1;
                    de = de.enlarged(s.mission.local_retry_factor);
                }
                Err(_) => return None,
            }
        };
        self.report.traces.push(PlanTrace {
            kind: PlanKind::Local,
            leg,
            trace: plan.trace,
        });
        let mut path = plan.path;
        self.accept(leg, &path);

        let mut flight = LegFlight::default();
        let mut progress = Progress::default();
        let mut state = VehicleState {
            position: from,
            speed: s.weights.cruise_speed,
            battery: self.remaining(),
            ..VehicleState::default()
        };
        let mut last_replan = f64::NEG_INFINITY;
        let replan_de = s.local_de.reduced(s.mission.replan_generations);
        let mut last = from;
        loop {
            let dt = s.mission.dt.min(state.battery.max(0.0));
            if dt <= 0.0 {
                flight.exhausted = true;
                break;
            }
            let (next, used, events) = tick_leg(
                &state,
                &path,
                &mut progress,
                &self.field,
                &mut self.obstacles,
                &s.mission,
                &mut self.rng,
                dt,
            );
            state = next;
            flight.time += used;
            flight.distance += distance(last, state.position);
            last = state.position;
            if point_in_collision(state.position, &s.world.map, &self.obstacles) {
                self.report.collisions += 1;
                flight.collided = true;
            }
            if s.mission.record_ticks {
                self.report.ticks.push(TickRecord {
                    time: self.elapsed + flight.time,
                    position: state.position,
                    yaw: state.yaw,
                    leg,
                });
            }
            let mut trigger = None;
            for e in &events {
                match e {
                    TickEvent::Arrived => {
                        flight.end = state.position;
                        return Some(flight);
                    }
                    TickEvent::HazardDetected(_) => trigger = Some(ReplanReason::Hazard),
                    TickEvent::Stalled => trigger = trigger.or(Some(ReplanReason::Stall)),
                }
            }
            if let Some(reason) = trigger {
                if flight.time - last_replan >= s.mission.replan_cooldown
                    && flight.local_replans < s.mission.max_local_replans
                {
                    last_replan = flight.time;
                    flight.local_replans += 1;
                    let hazards: Vec<ObstacleForecast> = self
                        .obstacles
                        .iter()
                        .map(|o| ObstacleForecast::new(o, &self.field, s.mission.planning_clearance))
                        .collect();
                    let env = LocalEnv {
                        field: &self.field,
                        map: &s.world.planning_map,
                        hazards: &hazards,
                        time_offset: 0.0,
                        horizon: s.mission.forecast_horizon,
                    };
                    let seed = self.seeds.next_local();
                    let result = replan_local(
                        state.position,
                        to,
                        &path,
                        &env,
                        &s.weights,
                        &s.spline,
                        &replan_de,
                        seed,
                    );
                    let ok = result.is_ok();
                    if let Ok(plan) = result {
                        self.report.traces.push(PlanTrace {
                            kind: PlanKind::Local,
                            leg,
                            trace: plan.trace,
                        });
                        path = plan.path;
                        progress = Progress::default();
                        self.accept(leg, &path);
                    }
                    self.report.replans.push(ReplanEvent {
                        time: self.elapsed + flight.time,
                        kind: PlanKind::Local,
                        reason,
                        succeeded: ok,
                    });
                }
            }
        }
        flight.end = state.position;
        Some(flight)
    }

    fn accept(&mut self, leg: usize, path: &LocalPath) {
        self.report.accepted_paths.push(AcceptedPath {
            leg,
            peaks: path.peaks(),
            violation: path.violation,
        });
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct LegFlight {
    time: f64,
    distance: f64,
    local_replans: usize,
    collided: bool,
    exhausted: bool,
    end: [f64; 3],
}
