//! Run artifacts: single missions, Monte Carlo batches and field grids.
//!
//! Every file opens with `#` lines naming the scenario, seed and crate
//! version, followed by a CSV header row (or `key = value` lines for the
//! report). Floats use Rust's shortest round-trip formatting so values read
//! back bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::env::current::field_grid;
use crate::global::{GlobalError, Route};
use crate::mission::{plan_initial_route, run_mission, MissionReport, PlanTrace};
use crate::rng::stream;
use crate::scenario::{ScenarioError, Scenario};
use crate::VERSION;

/// Stream label for per-trial station-count redraws.
pub const STREAM_MONTECARLO: &str = "montecarlo";

/// Grid nodes per axis in the field dump written next to a run.
pub const RUN_FIELD_RESOLUTION: usize = 200;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Global(#[from] GlobalError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn write_file(path: &Path, text: &str) -> Result<(), OutputError> {
    let io = |e: std::io::Error| OutputError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io)?;
        }
    }
    fs::write(path, text).map_err(io)
}

pub fn header(scenario: &str, seed: u64) -> String {
    format!("# scenario: {scenario}\n# seed: {seed}\n# version: uuvplan {VERSION}\n")
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}

/// `key = value` summary of one mission. The first five keys follow the
/// columns of a single-mission results table.
pub fn report_text(report: &MissionReport, scenario: &str, seed: u64) -> String {
    let mut s = header(scenario, seed);
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv("time", report.route_time.to_string());
    kv("existent_time", report.residual_time.to_string());
    kv("total_value", report.total_value.to_string());
    kv("number_of_stations", report.stations_visited.to_string());
    kv("cost", report.total_cost.to_string());
    kv("success", report.success.to_string());
    kv("failure", report.failure.clone().unwrap_or_default());
    kv("global_replans", report.global_replans.to_string());
    kv("overrun_replans", report.overrun_replans().to_string());
    kv("local_replans", report.local_replans().to_string());
    kv("collisions", report.collisions.to_string());
    kv("legs", report.legs.len().to_string());
    kv("sequence", join(&report.sequence));
    kv(
        "initial_route",
        report
            .initial_route
            .as_ref()
            .map(|r| join(&r.sequence))
            .unwrap_or_default(),
    );
    s
}

pub fn legs_csv(report: &MissionReport, scenario: &str, seed: u64) -> String {
    let mut s = header(scenario, seed);
    s.push_str("leg,from,to,planned,actual,distance,local_replans,collided,value\n");
    for (i, l) in report.legs.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{},{},{},{}",
            l.from, l.to, l.planned, l.actual, l.distance, l.local_replans, l.collided, l.value
        );
    }
    s
}

pub fn ticks_csv(report: &MissionReport, scenario: &str, seed: u64) -> String {
    let mut s = header(scenario, seed);
    s.push_str("t,x,y,z,yaw,leg\n");
    for t in &report.ticks {
        let [x, y, z] = t.position;
        let _ = writeln!(s, "{},{x},{y},{z},{},{}", t.time, t.yaw, t.leg);
    }
    s
}

pub fn replans_csv(report: &MissionReport, scenario: &str, seed: u64) -> String {
    let mut s = header(scenario, seed);
    s.push_str("time,kind,reason,succeeded\n");
    for r in &report.replans {
        let _ = writeln!(s, "{},{},{},{}", r.time, r.kind.as_str(), r.reason.as_str(), r.succeeded);
    }
    s
}

pub fn convergence_csv(traces: &[PlanTrace], scenario: &str, seed: u64) -> String {
    let mut s = header(scenario, seed);
    s.push_str("plan,kind,leg,generation,best_cost\n");
    for (p, t) in traces.iter().enumerate() {
        for (g, c) in t.trace.iter().enumerate() {
            let _ = writeln!(s, "{p},{},{},{g},{c}", t.kind.as_str(), t.leg);
        }
    }
    s
}

pub fn route_text(route: &Route, scenario: &str, seed: u64) -> String {
    let mut s = header(scenario, seed);
    let _ = writeln!(s, "sequence = {}", join(&route.sequence));
    let _ = writeln!(s, "distance = {}", route.distance);
    let _ = writeln!(s, "time = {}", route.time);
    let _ = writeln!(s, "total_value = {}", route.total_value);
    let _ = writeln!(s, "number_of_stations = {}", route.stations());
    let _ = writeln!(s, "cost = {}", route.cost);
    s
}

/// Current field of the world built for `seed`, sampled on a
/// `resolution × resolution` grid over the field extent.
pub fn field_csv(sc: &Scenario, seed: u64, resolution: usize) -> Result<String, OutputError> {
    let world = sc.build_world(seed)?;
    let [x0, y0, x1, y1] = sc.extent();
    let mut s = header(&sc.name, seed);
    s.push_str("x,y,v_cx,v_cy\n");
    for [x, y, vx, vy] in field_grid(&world.field, [x0, x1], [y0, y1], resolution, resolution) {
        let _ = writeln!(s, "{x},{y},{vx},{vy}");
    }
    Ok(s)
}

pub fn field_dump(sc: &Scenario, seed: u64, resolution: usize, out_path: &Path) -> Result<(), OutputError> {
    write_file(out_path, &field_csv(sc, seed, resolution)?)
}

/// Plans the opening route only and writes it to `route.txt` and
/// `convergence.csv` when `out_dir` is given.
pub fn plan_once(sc: &Scenario, seed: u64, out_dir: Option<&Path>) -> Result<Route, OutputError> {
    let setup = sc.mission_setup(seed)?;
    let (route, traces) = plan_initial_route(&setup, seed)?;
    if let Some(dir) = out_dir {
        write_file(&dir.join("route.txt"), &route_text(&route, &sc.name, seed))?;
        write_file(&dir.join("convergence.csv"), &convergence_csv(&traces, &sc.name, seed))?;
    }
    Ok(route)
}

/// Flies one mission and writes its artifacts into `out_dir`. Files are
/// written whether or not the mission succeeded.
pub fn run_once(sc: &Scenario, seed: u64, out_dir: &Path) -> Result<MissionReport, OutputError> {
    let setup = sc.mission_setup(seed)?;
    let report = run_mission(&setup, seed);
    let name = &sc.name;
    write_file(&out_dir.join("report.txt"), &report_text(&report, name, seed))?;
    write_file(&out_dir.join("legs.csv"), &legs_csv(&report, name, seed))?;
    write_file(&out_dir.join("ticks.csv"), &ticks_csv(&report, name, seed))?;
    write_file(&out_dir.join("replans.csv"), &replans_csv(&report, name, seed))?;
    write_file(&out_dir.join("convergence.csv"), &convergence_csv(&report.traces, name, seed))?;
    field_dump(sc, seed, RUN_FIELD_RESOLUTION, &out_dir.join("field.csv"))?;
    Ok(report)
}

/// One row of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: usize,
    pub seed: u64,
    pub station_count: usize,
    pub success: bool,
    pub failure: Option<String>,
    pub global_replans: usize,
    pub overrun_replans: usize,
    pub local_replans: usize,
    pub route_time: f64,
    pub residual_time: f64,
    pub total_value: u32,
    pub stations_visited: usize,
    pub total_cost: f64,
    pub collisions: usize,
}

impl TrialRow {
    /// Columns aggregated in the summary, by name.
    pub const METRICS: [&'static str; 6] = [
        "global_replans",
        "route_time",
        "residual_time",
        "total_value",
        "stations_visited",
        "total_cost",
    ];

    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "global_replans" => self.global_replans as f64,
            "route_time" => self.route_time,
            "residual_time" => self.residual_time,
            "total_value" => self.total_value as f64,
            "stations_visited" => self.stations_visited as f64,
            "total_cost" => self.total_cost,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub sd: f64,
    pub se: f64,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate {
            n,
            mean: f64::NAN,
            sd: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Aggregate {
        n,
        mean,
        sd,
        se: sd / (n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub rows: Vec<TrialRow>,
    pub success_rate: f64,
    /// Per metric, over successful trials only.
    pub aggregates: Vec<(&'static str, Aggregate)>,
}

pub fn summarize(rows: Vec<TrialRow>) -> BatchSummary {
    let ok: Vec<&TrialRow> = rows.iter().filter(|r| r.success).collect();
    let aggregates = TrialRow::METRICS
        .iter()
        .map(|&m| {
            let v: Vec<f64> = ok.iter().filter_map(|r| r.metric(m)).collect();
            (m, aggregate(&v))
        })
        .collect();
    let success_rate = ok.len() as f64 / rows.len().max(1) as f64;
    BatchSummary {
        rows,
        success_rate,
        aggregates,
    }
}

/// Scenario for trial `seed`, with the station count redrawn when the
/// scenario asks for it.
pub fn trial_scenario(sc: &Scenario, seed: u64) -> Scenario {
    let mut sc = sc.clone();
    if let Some([lo, hi]) = sc.montecarlo.station_range {
        if sc.network.stations.is_empty() {
            sc.network.count = stream(seed, STREAM_MONTECARLO).random_range(lo..=hi);
        }
    }
    sc
}

fn run_trial(sc: &Scenario, trial: usize, seed: u64) -> (TrialRow, Option<MissionReport>) {
    let tsc = trial_scenario(sc, seed);
    let station_count = tsc.network.count;
    let blank = TrialRow {
        trial,
        seed,
        station_count,
        success: false,
        failure: None,
        global_replans: 0,
        overrun_replans: 0,
        local_replans: 0,
        route_time: 0.0,
        residual_time: tsc.vehicle.battery,
        total_value: 0,
        stations_visited: 0,
        total_cost: f64::INFINITY,
        collisions: 0,
    };
    match tsc.mission_setup(seed) {
        Ok(setup) => {
            let r = run_mission(&setup, seed);
            let row = TrialRow {
                success: r.success,
                failure: r.failure.clone(),
                global_replans: r.global_replans,
                overrun_replans: r.overrun_replans(),
                local_replans: r.local_replans(),
                route_time: r.route_time,
                residual_time: r.residual_time,
                total_value: r.total_value,
                stations_visited: r.stations_visited,
                total_cost: r.total_cost,
                collisions: r.collisions,
                ..blank
            };
            (row, Some(r))
        }
        Err(e) => (
            TrialRow {
                failure: Some(e.to_string()),
                ..blank
            },
            None,
        ),
    }
}

/// Runs `trials` missions with seeds `base_seed + i` across the available
/// cores. Results come back in trial order.
pub fn run_trials(sc: &Scenario, trials: usize, base_seed: u64) -> Vec<(TrialRow, Option<MissionReport>)> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(trials.max(1));
    let mut slots: Vec<Option<(TrialRow, Option<MissionReport>)>> = vec![None; trials];
    std::thread::scope(|scope| {
        let chunks: Vec<_> = slots
            .chunks_mut(trials.div_ceil(workers).max(1))
            .enumerate()
            .map(|(c, chunk)| {
                let first = c * trials.div_ceil(workers).max(1);
                scope.spawn(move || {
                    for (k, slot) in chunk.iter_mut().enumerate() {
                        let i = first + k;
                        *slot = Some(run_trial(sc, i, base_seed.wrapping_add(i as u64)));
                    }
                })
            })
            .collect();
        for h in chunks {
            h.join().expect("trial worker panicked");
        }
    });
    slots.into_iter().map(|s| s.expect("every trial filled")).collect()
}

pub fn trials_csv(rows: &[TrialRow], scenario: &str, base_seed: u64) -> String {
    let mut s = header(scenario, base_seed);
    s.push_str(
        "trial,seed,stations,success,failure,global_replans,overrun_replans,local_replans,\
         route_time,residual_time,total_value,stations_visited,total_cost,collisions\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.trial,
            r.seed,
            r.station_count,
            r.success,
            r.failure.as_deref().unwrap_or("").replace(',', ";"),
            r.global_replans,
            r.overrun_replans,
            r.local_replans,
            r.route_time,
            r.residual_time,
            r.total_value,
            r.stations_visited,
            r.total_cost,
            r.collisions
        );
    }
    s
}

pub fn summary_csv(summary: &BatchSummary, scenario: &str, base_seed: u64) -> String {
    let mut s = header(scenario, base_seed);
    s.push_str("metric,n,mean,sd,se\n");
    let _ = writeln!(s, "success_rate,{},{},,", summary.rows.len(), summary.success_rate);
    for (m, a) in &summary.aggregates {
        let _ = writeln!(s, "{m},{},{},{},{}", a.n, a.mean, a.sd, a.se);
    }
    s
}

/// Batch of missions; per-trial failures are recorded and the batch goes on.
pub fn run_monte_carlo(sc: &Scenario, trials: usize, base_seed: u64, out_dir: &Path) -> Result<BatchSummary, OutputError> {
    let rows: Vec<TrialRow> = run_trials(sc, trials, base_seed).into_iter().map(|(r, _)| r).collect();
    let summary = summarize(rows);
    write_file(&out_dir.join("trials.csv"), &trials_csv(&summary.rows, &sc.name, base_seed))?;
    write_file(&out_dir.join("summary.csv"), &summary_csv(&summary, &sc.name, base_seed))?;
    Ok(summary)
}
