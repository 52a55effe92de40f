//! Two-dimensional current field built from superposed Lamb vortices.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;

/// Beyond this value of r²/ℓ² the core factor `1 - exp(-r²/ℓ²)` is exactly
/// 1.0 in double precision, so the exponential is skipped.
const CORE_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexParams {
    pub center: [f64; 2],
    /// Core radius ℓ, meters.
    pub radius: f64,
    /// Circulation scale, m²/s. Positive spins counter-clockwise.
    pub strength: f64,
    /// Origin that center perturbations are taken relative to (the vortex's
    /// tile corner for generated fields).
    #[serde(default)]
    pub origin: [f64; 2],
}

impl VortexParams {
    pub fn new(center: [f64; 2], radius: f64, strength: f64) -> Self {
        Self {
            center,
            radius,
            strength,
            origin: [0.0, 0.0],
        }
    }

    /// Velocity induced at `(x, y)` by this vortex alone.
    #[inline]
    pub fn velocity_at(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let r2 = dx * dx + dy * dy;
        let l2 = self.radius * self.radius;
        if r2 < 1e-18 * l2 {
            return (0.0, 0.0);
        }
        let q = r2 / l2;
        let core = if q > CORE_CUTOFF { 1.0 } else { -(-q).exp_m1() };
        let f = self.strength * core / (TAU * r2);
        (-f * dy, f * dx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CurrentSample {
    pub vx: f64,
    pub vy: f64,
}

impl CurrentSample {
    pub fn magnitude(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VortexField {
    pub vortices: Vec<VortexParams>,
    /// Range the per-update noise scale is drawn from.
    pub noise_range: [f64; 2],
    /// `[x_min, y_min, x_max, y_max]` the field was generated over.
    pub extent: [f64; 4],
    /// Tile edge length; when set, perturbed centers stay inside their tile.
    pub tile_size: Option<f64>,
    /// Uniform drift added everywhere, m/s.
    #[serde(default)]
    pub background: [f64; 2],
}

impl VortexField {
    pub fn calm(extent: [f64; 4]) -> Self {
        Self {
            vortices: Vec::new(),
            noise_range: [0.0, 0.0],
            extent,
            tile_size: None,
            background: [0.0, 0.0],
        }
    }

    pub fn uniform(velocity: [f64; 2], extent: [f64; 4]) -> Self {
        Self {
            background: velocity,
            ..Self::calm(extent)
        }
    }

    pub fn with_vortices(vortices: Vec<VortexParams>, extent: [f64; 4]) -> Self {
        Self {
            vortices,
            ..Self::calm(extent)
        }
    }
}

/// Current at a horizontal point: the vector sum of every vortex
/// contribution. Defined everywhere, including outside `field.extent`.
#[inline]
pub fn current_at(point: [f64; 2], field: &VortexField) -> CurrentSample {
    let mut s = CurrentSample {
        vx: field.background[0],
        vy: field.background[1],
    };
    for v in &field.vortices {
        let (vx, vy) = v.velocity_at(point[0], point[1]);
        s.vx += vx;
        s.vy += vy;
    }
    s
}

/// One noise event: a single scale `s ~ U(noise_range)` is drawn, then every
/// parameter `p` of every vortex becomes `p·(1 + s·g)` with `g ~ N(0, 1)`.
pub fn perturb_field(field: &VortexField, rng: &mut SimRng) -> VortexField {
    let [lo, hi] = field.noise_range;
    let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let mut out = field.clone();
    if s == 0.0 {
        return out;
    }
    for v in &mut out.vortices {
        for axis in 0..2 {
            let g: f64 = rng.sample(StandardNormal);
            let mut offset = (v.center[axis] - v.origin[axis]) * (1.0 + s * g);
            if let Some(tile) = field.tile_size {
                offset = offset.clamp(0.0, tile);
            }
            v.center[axis] = v.origin[axis] + offset;
        }
        let g: f64 = rng.sample(StandardNormal);
        v.radius = (v.radius * (1.0 + s * g)).max(1e-3 * v.radius);
        let g: f64 = rng.sample(StandardNormal);
        v.strength *= 1.0 + s * g;
    }
    out
}

/// How a field is sampled: independent 2–5 vortex patches per square tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VortexRecipe {
    pub tile: f64,
    pub count: [usize; 2],
    pub radius: [f64; 2],
    /// Magnitude range of the strength; the sign is drawn separately.
    pub strength: [f64; 2],
    pub noise: [f64; 2],
}

impl Default for VortexRecipe {
    fn default() -> Self {
        Self {
            tile: 2000.0,
            count: [2, 5],
            radius: [150.0, 400.0],
            strength: [100.0, 400.0],
            noise: [0.1, 0.8],
        }
    }
}

pub fn generate_field(recipe: &VortexRecipe, extent: [f64; 4], rng: &mut SimRng) -> VortexField {
    let [x0, y0, x1, y1] = extent;
    let nx = ((x1 - x0) / recipe.tile).ceil().max(1.0) as usize;
    let ny = ((y1 - y0) / recipe.tile).ceil().max(1.0) as usize;
    let mut vortices = Vec::new();
    for ty in 0..ny {
        for tx in 0..nx {
            let origin = [x0 + tx as f64 * recipe.tile, y0 + ty as f64 * recipe.tile];
            let n = rng.random_range(recipe.count[0]..=recipe.count[1]);
            for _ in 0..n {
                let center = [
                    origin[0] + rng.random::<f64>() * recipe.tile,
                    origin[1] + rng.random::<f64>() * recipe.tile,
                ];
                let radius = uniform(rng, recipe.radius);
                let magnitude = uniform(rng, recipe.strength);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                vortices.push(VortexParams {
                    center,
                    radius,
                    strength: sign * magnitude,
                    origin,
                });
            }
        }
    }
    VortexField {
        vortices,
        noise_range: recipe.noise,
        extent,
        tile_size: Some(recipe.tile),
        background: [0.0, 0.0],
    }
}

fn uniform(rng: &mut SimRng, [lo, hi]: [f64; 2]) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

/// Samples the field on an `nx × ny` node grid spanning `[x0, x1] × [y0, y1]`
/// (both ends included). Rows are ordered by y, then x.
pub fn field_grid(
    field: &VortexField,
    x_range: [f64; 2],
    y_range: [f64; 2],
    nx: usize,
    ny: usize,
) -> Vec<[f64; 4]> {
    let step = |range: [f64; 2], n: usize, i: usize| {
        if n <= 1 {
            range[0]
        } else {
            range[0] + (range[1] - range[0]) * i as f64 / (n - 1) as f64
        }
    };
    let mut rows = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = step(y_range, ny, j);
        for i in 0..nx {
            let x = step(x_range, nx, i);
            let c = current_at([x, y], field);
            rows.push([x, y, c.vx, c.vy]);
        }
    }
    rows
}
