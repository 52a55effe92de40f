//! Leg-level planner: DE over the interior control points of a clamped
//! B-spline between two stations, scored by traversal time under the current
//! plus penalties for kinematic-limit excess and collisions.

pub mod spline;

use std::f64::consts::PI;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::de::{optimize, DeError, DeParams};
use crate::env::{current_at, point_in_collision, ClusteredMap, Obstacle, ObstacleForecast, VortexField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalError {
    #[error("leg endpoints coincide")]
    DegenerateEndpoints,
    #[error("current cancels forward progress at sample {sample}")]
    AdverseStall { sample: usize },
    #[error("no collision-free path within kinematic limits (best cost {best_cost})")]
    NoFeasiblePath { best_cost: f64 },
    #[error(transparent)]
    De(#[from] DeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplineConfig {
    /// Control points including both pinned endpoints.
    pub control_count: usize,
    pub degree: usize,
    /// Minimum number of samples per path.
    pub samples_per_path: usize,
    /// Longer paths get extra samples so consecutive samples stay at most
    /// this far apart along the control polygon.
    pub max_spacing: f64,
    /// Horizontal corridor growth as a fraction of the leg length.
    pub corridor_inflation: f64,
}

impl Default for SplineConfig {
    fn default() -> Self {
        Self {
            control_count: 8,
            degree: 3,
            samples_per_path: 80,
            max_spacing: 40.0,
            corridor_inflation: 0.25,
        }
    }
}

impl SplineConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.control_count < 4 {
            return Err("spline.control_count must be >= 4".into());
        }
        if self.degree < 3 || self.degree >= self.control_count {
            return Err("spline.degree must be >= 3 and below control_count".into());
        }
        if self.samples_per_path < 10 * self.control_count {
            return Err("spline.samples_per_path must be >= 10 * control_count".into());
        }
        if !(self.max_spacing > 0.0) {
            return Err("spline.max_spacing must be > 0".into());
        }
        if !(self.corridor_inflation >= 0.0) {
            return Err("spline.corridor_inflation must be >= 0".into());
        }
        Ok(())
    }

    pub fn genome_len(&self) -> usize {
        3 * (self.control_count - 2)
    }

    fn sample_count(&self, control: &[[f64; 3]]) -> usize {
        let polygon: f64 = control.windows(2).map(|w| dist(w[0], w[1])).sum();
        let dense = (polygon / self.max_spacing).ceil() as usize + 1;
        self.samples_per_path.max(dense)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Largest excess over samples.
    #[default]
    Max,
    /// Summed excess over samples.
    Sum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalCostWeights {
    /// Surge, sway, yaw-rate and collision weights.
    pub weights: [f64; 4],
    pub surge_max: f64,
    pub sway_max: f64,
    /// rad/s. Files may also give degrees as e.g. `"17deg"`.
    #[serde(deserialize_with = "angle_rate")]
    pub yaw_rate_max: f64,
    /// Filled in from the vehicle section.
    #[serde(skip)]
    pub cruise_speed: f64,
    pub aggregation: Aggregation,
    /// While searching, limits are tightened by this fraction so that the
    /// accepted path clears the true limits.
    pub planning_margin: f64,
}

impl Default for LocalCostWeights {
    fn default() -> Self {
        Self {
            weights: [10.0, 10.0, 10.0, 100.0],
            surge_max: 2.7,
            sway_max: 0.5,
            yaw_rate_max: 17f64.to_radians(),
            cruise_speed: 2.4,
            aggregation: Aggregation::Max,
            planning_margin: 0.02,
        }
    }
}

impl LocalCostWeights {
    pub fn validate(&self) -> Result<(), String> {
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err("local_cost.weights must all be >= 0".into());
        }
        if !(self.surge_max > 0.0 && self.sway_max >= 0.0 && self.yaw_rate_max > 0.0) {
            return Err("local_cost limits must be positive".into());
        }
        if !(self.cruise_speed > 0.0) {
            return Err("local_cost.cruise_speed must be > 0".into());
        }
        if !(0.0..0.5).contains(&self.planning_margin) {
            return Err("local_cost.planning_margin must be in [0, 0.5)".into());
        }
        Ok(())
    }

    /// Copy with every limit shrunk by `planning_margin`.
    pub fn tightened(&self) -> Self {
        let f = 1.0 - self.planning_margin;
        Self {
            surge_max: self.surge_max * f,
            sway_max: self.sway_max * f,
            yaw_rate_max: self.yaw_rate_max * f,
            ..self.clone()
        }
    }
}

fn angle_rate<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) => parse_angle(&s).map_err(serde::de::Error::custom),
    }
}

/// Parses `"17deg"`, `"0.3rad"` or a bare number (radians).
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let t = s.trim();
    let (num, deg) = if let Some(n) = t.strip_suffix("deg") {
        (n, true)
    } else if let Some(n) = t.strip_suffix("rad") {
        (n, false)
    } else {
        (t, false)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("bad angle '{s}', expected e.g. \"17deg\""))?;
    Ok(if deg { v.to_radians() } else { v })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathSample {
    pub position: [f64; 3],
    pub yaw: f64,
    pub pitch: f64,
    /// Ground velocity.
    pub velocity: [f64; 3],
    pub surge: f64,
    pub sway: f64,
    pub yaw_rate: f64,
    /// Time from the start of the path.
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalPath {
    pub samples: Vec<PathSample>,
    pub length: f64,
    pub time: f64,
    /// Fraction of samples in collision.
    pub violation: f64,
    pub cost: f64,
}

/// Largest surge, |sway| and |yaw rate| over a path.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicPeaks {
    pub surge: f64,
    pub sway: f64,
    pub yaw_rate: f64,
}

impl LocalPath {
    pub fn start(&self) -> [f64; 3] {
        self.samples[0].position
    }

    pub fn end(&self) -> [f64; 3] {
        self.samples[self.samples.len() - 1].position
    }

    pub fn peaks(&self) -> KinematicPeaks {
        self.samples.iter().fold(KinematicPeaks::default(), |p, s| KinematicPeaks {
            surge: p.surge.max(s.surge),
            sway: p.sway.max(s.sway.abs()),
            yaw_rate: p.yaw_rate.max(s.yaw_rate.abs()),
        })
    }

    /// True when no limit in `w` is exceeded anywhere and nothing collides.
    pub fn within_limits(&self, w: &LocalCostWeights) -> bool {
        let p = self.peaks();
        self.violation == 0.0 && p.surge <= w.surge_max && p.sway <= w.sway_max && p.yaw_rate <= w.yaw_rate_max
    }
}

#[inline]
fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

/// Control points: the two endpoints around the genome's interior points.
pub fn control_points(genes: &[f64], a: [f64; 3], b: [f64; 3]) -> Vec<[f64; 3]> {
    let mut c = Vec::with_capacity(genes.len() / 3 + 2);
    c.push(a);
    c.extend(genes.chunks_exact(3).map(|g| [g[0], g[1], g[2]]));
    c.push(b);
    c
}

/// Geometry only: samples, heading angles and length.
pub fn build_path(genes: &[f64], a: [f64; 3], b: [f64; 3], config: &SplineConfig) -> Result<LocalPath, LocalError> {
    if dist(a, b) < 1e-9 {
        return Err(LocalError::DegenerateEndpoints);
    }
    if genes.len() != config.genome_len() {
        return Err(DeError::LengthMismatch(config.genome_len(), genes.len()).into());
    }
    let control = control_points(genes, a, b);
    let points = spline::sample(&control, config.degree, config.sample_count(&control));
    Ok(path_from_points(&points))
}

/// Wraps a polyline as a path with headings filled in.
pub fn path_from_points(points: &[[f64; 3]]) -> LocalPath {
    let n = points.len();
    let mut samples: Vec<PathSample> = points
        .iter()
        .map(|&position| PathSample {
            position,
            ..PathSample::default()
        })
        .collect();
    let mut length = 0.0;
    for k in 0..n.saturating_sub(1) {
        let (p, q) = (points[k], points[k + 1]);
        let (dx, dy, dz) = (q[0] - p[0], q[1] - p[1], q[2] - p[2]);
        length += (dx * dx + dy * dy + dz * dz).sqrt();
        samples[k].yaw = dy.atan2(dx);
        samples[k].pitch = (-dz).atan2(dx.hypot(dy));
    }
    if n >= 2 {
        samples[n - 1].yaw = samples[n - 2].yaw;
        samples[n - 1].pitch = samples[n - 2].pitch;
    }
    LocalPath {
        samples,
        length,
        time: 0.0,
        violation: 0.0,
        cost: 0.0,
    }
}

/// Unit direction of segment `k` (the last sample reuses the final segment);
/// `None` for a zero-length segment.
fn tangent(samples: &[PathSample], k: usize) -> Option<[f64; 3]> {
    let k = k.min(samples.len() - 2);
    let (p, q) = (samples[k].position, samples[k + 1].position);
    let d = dist(p, q);
    (d > 1e-12).then(|| [(q[0] - p[0]) / d, (q[1] - p[1]) / d, (q[2] - p[2]) / d])
}

/// Ground-speed projection onto a unit tangent for cruise speed `v`.
#[inline]
pub fn tangential_speed(v: f64, t: [f64; 3], current: [f64; 2]) -> f64 {
    v + current[0] * t[0] + current[1] * t[1]
}

/// Fills velocities, body-frame surge/sway, cumulative time and yaw rate.
pub fn path_states(path: &LocalPath, w: &LocalCostWeights, field: &VortexField) -> Result<LocalPath, LocalError> {
    let mut out = path.clone();
    let n = out.samples.len();
    if n < 2 {
        return Err(LocalError::DegenerateEndpoints);
    }
    let v = w.cruise_speed;
    let mut last_t = [1.0, 0.0, 0.0];
    let mut elapsed = 0.0;
    for k in 0..n {
        let t = tangent(&out.samples, k).unwrap_or(last_t);
        last_t = t;
        let p = out.samples[k].position;
        let c = current_at([p[0], p[1]], field);
        let along = tangential_speed(v, t, [c.vx, c.vy]);
        if along < 0.1 * v {
            return Err(LocalError::AdverseStall { sample: k });
        }
        let yaw = out.samples[k].yaw;
        let s = &mut out.samples[k];
        s.velocity = [v * t[0] + c.vx, v * t[1] + c.vy, v * t[2]];
        s.surge = along;
        s.sway = -c.vx * yaw.sin() + c.vy * yaw.cos();
        s.time = elapsed;
        if k + 1 < n {
            elapsed += dist(p, out.samples[k + 1].position) / along;
        }
    }
    out.time = elapsed;
    for k in 0..n {
        let (lo, hi) = (k.saturating_sub(1), (k + 1).min(n - 1));
        let dt = out.samples[hi].time - out.samples[lo].time;
        out.samples[k].yaw_rate = if dt > 0.0 {
            wrap(out.samples[hi].yaw - out.samples[lo].yaw) / dt
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Fraction of samples in collision with the coast or an obstacle as it
/// stands now.
pub fn violation_sum(path: &LocalPath, map: &ClusteredMap, obstacles: &[Obstacle]) -> f64 {
    let hits = path
        .samples
        .iter()
        .filter(|s| point_in_collision(s.position, map, obstacles))
        .count();
    hits as f64 / path.samples.len() as f64
}

/// Like [`violation_sum`] but against obstacle forecasts, each sample checked
/// at the moment it will be reached (`time_offset` plus its path time),
/// looking no further ahead than `horizon`. The two endpoints are fixed by
/// the route, so only the coast is checked there.
pub fn forecast_violation(
    path: &LocalPath,
    map: &ClusteredMap,
    hazards: &[ObstacleForecast],
    time_offset: f64,
    horizon: f64,
) -> f64 {
    let last = path.samples.len() - 1;
    let hits = path
        .samples
        .iter()
        .enumerate()
        .filter(|&(i, s)| {
            map.is_coast(s.position[0], s.position[1])
                || (i != 0
                    && i != last
                    && hazards.iter().any(|h| h.contains(s.position, (time_offset + s.time).min(horizon))))
        })
        .count();
    hits as f64 / path.samples.len() as f64
}

/// `T/T_ref` plus weighted limit excesses plus the weighted collision
/// fraction, where `T_ref` is the straight-line time at cruise speed.
pub fn path_cost(path: &LocalPath, w: &LocalCostWeights) -> f64 {
    let straight = dist(path.start(), path.end()) / w.cruise_speed;
    let excess = |f: &dyn Fn(&PathSample) -> f64| {
        let it = path.samples.iter().map(|s| f(s).max(0.0));
        match w.aggregation {
            Aggregation::Max => it.fold(0.0, f64::max),
            Aggregation::Sum => it.sum(),
        }
    };
    let surge = excess(&|s| s.surge - w.surge_max);
    let sway = excess(&|s| s.sway.abs() - w.sway_max);
    let yaw = excess(&|s| s.yaw_rate.abs() - w.yaw_rate_max);
    let [e1, e2, e3, e4] = w.weights;
    path.time / straight + e1 * surge + e2 * sway + e3 * yaw + e4 * path.violation
}

/// What a leg is planned against.
#[derive(Debug, Clone, Copy)]
pub struct LocalEnv<'a> {
    pub field: &'a VortexField,
    pub map: &'a ClusteredMap,
    pub hazards: &'a [ObstacleForecast],
    /// Seconds between the forecast snapshot and the path start.
    pub time_offset: f64,
    /// Forecasts are frozen beyond this many seconds; later hazards are
    /// left to replanning in flight.
    pub horizon: f64,
}

/// Full evaluation of one genome; `None` when the path stalls.
pub fn evaluate(
    genes: &[f64],
    a: [f64; 3],
    b: [f64; 3],
    env: &LocalEnv,
    w: &LocalCostWeights,
    config: &SplineConfig,
) -> Result<Option<LocalPath>, LocalError> {
    let geometry = build_path(genes, a, b, config)?;
    let mut path = match path_states(&geometry, w, env.field) {
        Ok(p) => p,
        Err(LocalError::AdverseStall { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    path.violation = forecast_violation(&path, env.map, env.hazards, env.time_offset, env.horizon);
    path.cost = path_cost(&path, w);
    Ok(Some(path))
}

/// Axis-aligned search box for interior control points.
pub fn corridor(a: [f64; 3], b: [f64; 3], extent: [f64; 3], inflation: f64) -> [[f64; 2]; 3] {
    let grow = inflation * dist(a, b);
    let horiz = |i: usize| {
        [
            (a[i].min(b[i]) - grow).max(0.0),
            (a[i].max(b[i]) + grow).min(extent[i]),
        ]
    };
    [horiz(0), horiz(1), [0.0, extent[2]]]
}

pub fn genome_bounds(a: [f64; 3], b: [f64; 3], extent: [f64; 3], config: &SplineConfig) -> Vec<[f64; 2]> {
    let box3 = corridor(a, b, extent, config.corridor_inflation);
    (0..config.control_count - 2).flat_map(|_| box3).collect()
}

/// Interior points evenly spaced on the chord.
pub fn straight_genome(a: [f64; 3], b: [f64; 3], config: &SplineConfig) -> Vec<f64> {
    let m = config.control_count;
    (1..m - 1)
        .flat_map(|i| {
            let f = i as f64 / (m - 1) as f64;
            (0..3).map(move |k| a[k] + f * (b[k] - a[k]))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LocalPlan {
    pub path: LocalPath,
    pub genes: Vec<f64>,
    pub trace: Vec<f64>,
}

/// Evolves a leg from `a` to `b`. The straight chord always seeds the
/// population, after any caller-provided warm starts. The returned path is
/// collision-free and inside every kinematic limit, or the call fails.
#[allow(clippy::too_many_arguments)]
pub fn plan_local(
    a: [f64; 3],
    b: [f64; 3],
    env: &LocalEnv,
    w: &LocalCostWeights,
    config: &SplineConfig,
    de: &DeParams,
    seed: u64,
    warm: &[Vec<f64>],
) -> Result<LocalPlan, LocalError> {
    if dist(a, b) < 1e-9 {
        return Err(LocalError::DegenerateEndpoints);
    }
    let search = w.tightened();
    let bounds = genome_bounds(a, b, env.map.extent(), config);
    let mut seeds: Vec<Vec<f64>> = warm.to_vec();
    seeds.push(straight_genome(a, b, config));
    seeds.truncate(de.population);
    let out = optimize(&de.config(seed, bounds), &seeds, |g| {
        let path = evaluate(g, a, b, env, &search, config)?;
        Ok::<_, LocalError>((path.as_ref().map_or(f64::INFINITY, |p| p.cost), path))
    })?;
    match out.best.aux {
        Some(mut path) if path.within_limits(w) => {
            path.cost = path_cost(&path, w);
            Ok(LocalPlan {
                path,
                genes: out.best.genes,
                trace: out.trace,
            })
        }
        _ => Err(LocalError::NoFeasiblePath {
            best_cost: out.best.cost,
        }),
    }
}

/// Warm-start genome from the part of `previous` still ahead of `position`,
/// shifted so its end lands on `target`: interior control points are read
/// off that polyline at even arc-length fractions.
pub fn resample_remaining(previous: &LocalPath, position: [f64; 3], target: [f64; 3], config: &SplineConfig) -> Vec<f64> {
    let samples = &previous.samples;
    let nearest = (0..samples.len())
        .min_by(|&i, &j| dist(samples[i].position, position).total_cmp(&dist(samples[j].position, position)))
        .unwrap_or(0);
    let mut poly = vec![position];
    poly.extend(samples[(nearest + 1).min(samples.len() - 1)..].iter().map(|s| s.position));
    let mut arc = vec![0.0];
    for w in poly.windows(2) {
        arc.push(arc[arc.len() - 1] + dist(w[0], w[1]));
    }
    let total = arc[arc.len() - 1];
    let end = poly[poly.len() - 1];
    let shift = [target[0] - end[0], target[1] - end[1], target[2] - end[2]];
    let at = |s: f64| -> [f64; 3] {
        let j = arc.partition_point(|&x| x < s).clamp(1, arc.len() - 1);
        let span = arc[j] - arc[j - 1];
        let f = if span > 0.0 { (s - arc[j - 1]) / span } else { 0.0 };
        let frac = if total > 0.0 { s / total } else { 1.0 };
        std::array::from_fn(|k| poly[j - 1][k] + f * (poly[j][k] - poly[j - 1][k]) + frac * shift[k])
    };
    let m = config.control_count;
    (1..m - 1).flat_map(|i| at(total * i as f64 / (m - 1) as f64)).collect()
}

/// Replans mid-leg from `position`, seeding the search with the remainder
/// of the previous path.
#[allow(clippy::too_many_arguments)]
pub fn replan_local(
    position: [f64; 3],
    target: [f64; 3],
    previous: &LocalPath,
    env: &LocalEnv,
    w: &LocalCostWeights,
    config: &SplineConfig,
    de: &DeParams,
    seed: u64,
) -> Result<LocalPlan, LocalError> {
    let warm = resample_remaining(previous, position, target, config);
    plan_local(position, target, env, w, config, de, seed, &[warm])
}
