//! Static, uncertain and mobile obstacles with confidence envelopes.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::current::{current_at, VortexField};
use super::map::ClusteredMap;
use crate::rng::SimRng;

/// z-score of the two-sided 98% band.
pub const Z_98: f64 = 2.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    Static,
    Uncertain,
    Mobile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub id: u32,
    pub kind: ObstacleKind,
    pub position: [f64; 3],
    /// Current radius Θ_r. Uncertain obstacles resample it every step.
    pub radius: f64,
    /// Mean radius Θ_r0 the uncertain resampling is centred on.
    pub nominal_radius: f64,
    #[serde(default)]
    pub radius_sigma: f64,
    #[serde(default)]
    pub motion_sigma: f64,
    #[serde(default = "one")]
    pub confidence_margin: f64,
}

fn one() -> f64 {
    1.0
}

impl Obstacle {
    pub fn new(id: u32, kind: ObstacleKind, position: [f64; 3], radius: f64) -> Self {
        Self {
            id,
            kind,
            position,
            radius,
            nominal_radius: radius,
            radius_sigma: 0.0,
            motion_sigma: 0.0,
            confidence_margin: 1.0,
        }
    }

    /// Radius before any motion uncertainty: the larger of the current radius
    /// and, for uncertain obstacles, the 98% upper bound of the resampled one.
    pub fn base_radius(&self) -> f64 {
        let r = match self.kind {
            ObstacleKind::Uncertain => self
                .radius
                .max(self.nominal_radius + Z_98 * self.radius_sigma),
            _ => self.radius,
        };
        self.confidence_margin.max(1.0) * r
    }

    /// Envelope after `horizon` seconds of drift uncertainty in a current of
    /// magnitude `current_speed`.
    pub fn envelope_radius(&self, horizon: f64, current_speed: f64) -> f64 {
        let spread = match self.kind {
            ObstacleKind::Mobile => self.motion_sigma * current_speed * horizon.max(0.0),
            _ => 0.0,
        };
        self.base_radius() + Z_98 * spread
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Advances every obstacle by `dt` seconds.
pub fn step_obstacles(
    obstacles: &[Obstacle],
    field: &VortexField,
    dt: f64,
    rng: &mut SimRng,
) -> Vec<Obstacle> {
    obstacles
        .iter()
        .map(|o| {
            let mut o = o.clone();
            match o.kind {
                ObstacleKind::Static => {}
                ObstacleKind::Mobile => {
                    let c = current_at([o.position[0], o.position[1]], field);
                    let jitter = o.motion_sigma * c.magnitude() * dt;
                    let mut g = [0.0; 3];
                    if jitter > 0.0 {
                        for gi in &mut g {
                            *gi = rng.sample::<f64, _>(StandardNormal) * jitter;
                        }
                    }
                    o.position[0] += c.vx * dt + g[0];
                    o.position[1] += c.vy * dt + g[1];
                    o.position[2] += g[2];
                }
                ObstacleKind::Uncertain => {
                    if o.radius_sigma > 0.0 {
                        let g: f64 = rng.sample(StandardNormal);
                        o.radius = (o.nominal_radius + o.radius_sigma * g)
                            .max(0.1 * o.nominal_radius);
                    }
                }
            }
            o
        })
        .collect()
}

/// Closed-ball membership test against coast cells and envelopes at zero
/// prediction horizon. Points off the raster count as collisions.
pub fn point_in_collision(point: [f64; 3], map: &ClusteredMap, obstacles: &[Obstacle]) -> bool {
    map.is_coast(point[0], point[1])
        || obstacles
            .iter()
            .any(|o| dist3(point, o.position) <= o.envelope_radius(0.0, 0.0))
}

/// Obstacle state extrapolated along the local current, used when checking
/// path samples that will be reached `horizon` seconds from now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleForecast {
    pub id: u32,
    pub position: [f64; 3],
    pub velocity: [f64; 2],
    pub base_radius: f64,
    /// Envelope growth, meters per second of horizon.
    pub growth: f64,
}

impl ObstacleForecast {
    pub fn new(o: &Obstacle, field: &VortexField, clearance: f64) -> Self {
        let (velocity, speed) = match o.kind {
            ObstacleKind::Mobile => {
                let c = current_at([o.position[0], o.position[1]], field);
                ([c.vx, c.vy], c.magnitude())
            }
            _ => ([0.0, 0.0], 0.0),
        };
        Self {
            id: o.id,
            position: o.position,
            velocity,
            base_radius: o.envelope_radius(0.0, speed) + clearance,
            growth: o.envelope_radius(1.0, speed) - o.envelope_radius(0.0, speed),
        }
    }

    #[inline]
    pub fn contains(&self, point: [f64; 3], horizon: f64) -> bool {
        let h = horizon.max(0.0);
        let cx = self.position[0] + self.velocity[0] * h;
        let cy = self.position[1] + self.velocity[1] * h;
        let r = self.base_radius + self.growth * h;
        let d2 = (point[0] - cx).powi(2)
            + (point[1] - cy).powi(2)
            + (point[2] - self.position[2]).powi(2);
        d2 <= r * r
    }
}

pub fn forecast(obstacles: &[Obstacle], field: &VortexField, clearance: f64) -> Vec<ObstacleForecast> {
    obstacles
        .iter()
        .map(|o| ObstacleForecast::new(o, field, clearance))
        .collect()
}

/// Random obstacle population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleRecipe {
    pub static_count: usize,
    pub uncertain_count: usize,
    pub mobile_count: usize,
    pub radius: [f64; 2],
    pub radius_sigma: f64,
    pub motion_sigma: f64,
    pub confidence_margin: f64,
    /// Minimum gap between an obstacle envelope and any station, meters.
    pub station_clearance: f64,
}

impl Default for ObstacleRecipe {
    fn default() -> Self {
        Self {
            static_count: 5,
            uncertain_count: 4,
            mobile_count: 4,
            radius: [80.0, 200.0],
            radius_sigma: 15.0,
            motion_sigma: 0.3,
            confidence_margin: 1.1,
            station_clearance: 250.0,
        }
    }
}

/// Places obstacles uniformly over water, clear of the given points.
pub fn generate_obstacles(
    recipe: &ObstacleRecipe,
    map: &ClusteredMap,
    keep_clear: &[[f64; 3]],
    first_id: u32,
    rng: &mut SimRng,
) -> Vec<Obstacle> {
    let [ex, ey, ez] = map.extent();
    let kinds = std::iter::repeat_n(ObstacleKind::Static, recipe.static_count)
        .chain(std::iter::repeat_n(ObstacleKind::Uncertain, recipe.uncertain_count))
        .chain(std::iter::repeat_n(ObstacleKind::Mobile, recipe.mobile_count));
    let mut out = Vec::new();
    for (n, kind) in kinds.enumerate() {
        let radius = recipe.radius[0] + rng.random::<f64>() * (recipe.radius[1] - recipe.radius[0]);
        let mut o = Obstacle {
            id: first_id + n as u32,
            kind,
            position: [0.0; 3],
            radius,
            nominal_radius: radius,
            radius_sigma: if kind == ObstacleKind::Uncertain {
                recipe.radius_sigma
            } else {
                0.0
            },
            motion_sigma: if kind == ObstacleKind::Mobile {
                recipe.motion_sigma
            } else {
                0.0
            },
            confidence_margin: recipe.confidence_margin,
        };
        let reach = o.base_radius() + recipe.station_clearance;
        for _ in 0..1000 {
            let p = [
                rng.random::<f64>() * ex,
                rng.random::<f64>() * ey,
                rng.random::<f64>() * ez,
            ];
            if map.is_coast(p[0], p[1]) {
                continue;
            }
            if keep_clear.iter().all(|s| dist3(*s, p) > reach) {
                o.position = p;
                out.push(o);
                break;
            }
        }
    }
    out
}
