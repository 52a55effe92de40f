//! Raster occupancy map and its k-means partition into water and coast.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EnvError;
use crate::rng::SimRng;

/// Regular raster over the horizontal plane. Row `j` covers
/// `y ∈ [j·cell_size, (j+1)·cell_size)`, column `i` covers the same span in x.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub values: Vec<f64>,
    pub depth_extent: f64,
}

impl GridMap {
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        values: Vec<f64>,
        depth_extent: f64,
    ) -> Result<Self, EnvError> {
        if width == 0 || height == 0 || values.is_empty() {
            return Err(EnvError::EmptyRaster);
        }
        if values.len() != width * height {
            return Err(EnvError::RasterShape {
                expected: width * height,
                found: values.len(),
            });
        }
        if !(cell_size > 0.0) || !(depth_extent >= 0.0) {
            return Err(EnvError::InvalidGeometry);
        }
        Ok(Self {
            width,
            height,
            cell_size,
            values,
            depth_extent,
        })
    }

    /// Parses a headerless grayscale grid: one row per line, whitespace
    /// separated integers in 0..=255.
    pub fn parse_raster(text: &str, cell_size: f64, depth_extent: f64) -> Result<Self, EnvError> {
        let mut values = Vec::new();
        let mut width = 0;
        let mut height = 0;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                let v: u8 = tok.parse().map_err(|_| EnvError::RasterParse {
                    line: lineno + 1,
                    token: tok.to_string(),
                })?;
                values.push(f64::from(v));
            }
            let row = values.len() - before;
            if height == 0 {
                width = row;
            } else if row != width {
                return Err(EnvError::RasterParse {
                    line: lineno + 1,
                    token: format!("row has {row} cells, expected {width}"),
                });
            }
            height += 1;
        }
        Self::new(width, height, cell_size, values, depth_extent)
    }

    pub fn load_raster(path: &Path, cell_size: f64, depth_extent: f64) -> Result<Self, EnvError> {
        let text = fs::read_to_string(path).map_err(|e| EnvError::Io(e.to_string()))?;
        Self::parse_raster(&text, cell_size, depth_extent)
    }

    pub fn to_raster_text(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 4);
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{}", v.round() as i64)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn extent_x(&self) -> f64 {
        self.width as f64 * self.cell_size
    }

    pub fn extent_y(&self) -> f64 {
        self.height as f64 * self.cell_size
    }

    /// Cell containing `(x, y)`, or `None` outside the raster.
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let col = (x / self.cell_size) as usize;
        let row = (y / self.cell_size) as usize;
        (col < self.width && row < self.height).then_some((col, row))
    }
}

/// Which cluster is considered navigable water.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WaterLabel {
    /// The cluster with the lowest mean intensity.
    #[default]
    Low,
    /// The cluster with the highest mean intensity.
    High,
}

/// Binary occupancy (1 = coast, 0 = water) plus the clustering that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredMap {
    pub grid: GridMap,
    pub centers: Vec<f64>,
    pub k: usize,
    /// Cluster index of every raster cell, row-major.
    pub assignment: Vec<u8>,
    pub water_cluster: usize,
    /// k-means objective recorded after every iteration.
    pub objective_trace: Vec<f64>,
}

/// Total squared distance of every value to its assigned center.
pub fn kmeans_objective(values: &[f64], assignment: &[u8], centers: &[f64]) -> f64 {
    values
        .iter()
        .zip(assignment)
        .map(|(v, &a)| (v - centers[a as usize]).powi(2))
        .sum()
}

pub fn cluster_map(
    raster: &GridMap,
    k: usize,
    max_iters: usize,
    water: WaterLabel,
) -> Result<ClusteredMap, EnvError> {
    if raster.values.is_empty() {
        return Err(EnvError::EmptyRaster);
    }
    if k < 2 {
        return Err(EnvError::KTooLarge { k, distinct: 0 });
    }
    if k > u8::MAX as usize {
        return Err(EnvError::KTooLarge { k, distinct: 255 });
    }

    // Lloyd's algorithm on the weighted histogram of distinct values; every
    // cell with the same intensity lands in the same cluster.
    let mut sorted = raster.values.clone();
    sorted.sort_by(f64::total_cmp);
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match distinct.last_mut() {
            Some((last, count)) if last.to_bits() == v.to_bits() => *count += 1.0,
            _ => distinct.push((v, 1.0)),
        }
    }
    if k > distinct.len() {
        return Err(EnvError::KTooLarge {
            k,
            distinct: distinct.len(),
        });
    }

    let mut centers = initial_centers(&distinct, k);
    let mut labels: Vec<u8> = vec![u8::MAX; distinct.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let next: Vec<u8> = distinct
            .iter()
            .map(|&(v, _)| nearest(&centers, v))
            .collect();
        if next == labels {
            break;
        }
        labels = next;
        let mut sums = vec![0.0; k];
        let mut counts = vec![0.0; k];
        for (&(v, c), &l) in distinct.iter().zip(&labels) {
            sums[l as usize] += v * c;
            counts[l as usize] += c;
        }
        for j in 0..k {
            if counts[j] > 0.0 {
                centers[j] = sums[j] / counts[j];
            }
        }
        trace.push(
            distinct
                .iter()
                .zip(&labels)
                .map(|(&(v, c), &l)| c * (v - centers[l as usize]).powi(2))
                .sum(),
        );
    }

    let water_cluster = match water {
        WaterLabel::Low => argmin(&centers),
        WaterLabel::High => argmax(&centers),
    };
    let assignment: Vec<u8> = raster
        .values
        .iter()
        .map(|&v| {
            let idx = distinct
                .binary_search_by(|(d, _)| d.total_cmp(&v))
                .expect("value drawn from raster");
            labels[idx]
        })
        .collect();
    let occupancy = assignment
        .iter()
        .map(|&a| if a as usize == water_cluster { 0.0 } else { 1.0 })
        .collect();

    Ok(ClusteredMap {
        grid: GridMap {
            values: occupancy,
            ..raster.clone()
        },
        centers,
        k,
        assignment,
        water_cluster,
        objective_trace: trace,
    })
}

/// Centers at evenly spaced quantiles of the weighted histogram. If two
/// quantiles collapse onto one value, fall back to quantiles of the distinct
/// values themselves.
fn initial_centers(distinct: &[(f64, f64)], k: usize) -> Vec<f64> {
    let total: f64 = distinct.iter().map(|d| d.1).sum();
    let mut centers = Vec::with_capacity(k);
    for j in 0..k {
        let target = (j as f64 + 0.5) / k as f64 * total;
        let mut acc = 0.0;
        let mut pick = distinct[distinct.len() - 1].0;
        for &(v, c) in distinct {
            acc += c;
            if acc >= target {
                pick = v;
                break;
            }
        }
        centers.push(pick);
    }
    if centers.windows(2).any(|w| w[0] == w[1]) {
        let n = distinct.len();
        centers = (0..k)
            .map(|j| {
                let idx = ((j as f64 + 0.5) / k as f64 * n as f64) as usize;
                distinct[idx.min(n - 1)].0
            })
            .collect();
    }
    centers
}

#[inline]
fn nearest(centers: &[f64], v: f64) -> u8 {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = (v - c).abs();
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best as u8
}

fn argmin(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |b, i| if xs[i] < xs[b] { i } else { b })
}

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len()).fold(0, |b, i| if xs[i] > xs[b] { i } else { b })
}

impl ClusteredMap {
    /// All-water map, for fixtures and obstacle-only scenarios.
    pub fn open_water(width: usize, height: usize, cell_size: f64, depth_extent: f64) -> Self {
        Self::from_occupancy(GridMap {
            width,
            height,
            cell_size,
            values: vec![0.0; width * height],
            depth_extent,
        })
    }

    /// Wraps an already binary grid.
    pub fn from_occupancy(grid: GridMap) -> Self {
        let assignment: Vec<u8> = grid.values.iter().map(|&v| u8::from(v > 0.5)).collect();
        let values = assignment.iter().map(|&a| f64::from(a)).collect();
        Self {
            grid: GridMap { values, ..grid },
            centers: vec![0.0, 1.0],
            k: 2,
            assignment,
            water_cluster: 0,
            objective_trace: Vec::new(),
        }
    }

    /// True for coast cells and anything outside the raster.
    #[inline]
    pub fn is_coast(&self, x: f64, y: f64) -> bool {
        match self.grid.cell_of(x, y) {
            Some((c, r)) => self.grid.get(c, r) > 0.5,
            None => true,
        }
    }

    pub fn set_coast(&mut self, col: usize, row: usize, coast: bool) {
        let idx = row * self.grid.width + col;
        self.grid.values[idx] = if coast { 1.0 } else { 0.0 };
    }

    pub fn extent(&self) -> [f64; 3] {
        [self.grid.extent_x(), self.grid.extent_y(), self.grid.depth_extent]
    }

    pub fn water_fraction(&self) -> f64 {
        let water = self.grid.values.iter().filter(|&&v| v < 0.5).count();
        water as f64 / self.grid.values.len() as f64
    }

    /// Coast grown by `cells` in every direction (square structuring element).
    pub fn dilated(&self, cells: usize) -> Self {
        if cells == 0 {
            return self.clone();
        }
        let (w, h) = (self.grid.width, self.grid.height);
        let src = &self.grid.values;
        let mut rows = vec![0.0; w * h];
        for r in 0..h {
            for c in 0..w {
                let lo = c.saturating_sub(cells);
                let hi = (c + cells).min(w - 1);
                if src[r * w + lo..=r * w + hi].iter().any(|&v| v > 0.5) {
                    rows[r * w + c] = 1.0;
                }
            }
        }
        let mut out = vec![0.0; w * h];
        for c in 0..w {
            for r in 0..h {
                let lo = r.saturating_sub(cells);
                let hi = (r + cells).min(h - 1);
                if (lo..=hi).any(|rr| rows[rr * w + c] > 0.5) {
                    out[r * w + c] = 1.0;
                }
            }
        }
        let mut map = self.clone();
        map.grid.values = out;
        map
    }
}

/// Recipe for a synthetic coastline raster: a wavy western shore plus round
/// islands, water and land intensities blurred by Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticCoast {
    pub width: usize,
    pub height: usize,
    /// Mean distance of the western shore from x = 0, meters.
    pub shore_offset: f64,
    pub shore_amplitude: f64,
    pub shore_wavelength: f64,
    pub islands: usize,
    pub island_radius: [f64; 2],
    pub water_intensity: f64,
    pub land_intensity: f64,
    pub intensity_noise: f64,
}

impl Default for SyntheticCoast {
    fn default() -> Self {
        Self {
            width: 1000,
            height: 1000,
            shore_offset: 500.0,
            shore_amplitude: 250.0,
            shore_wavelength: 4000.0,
            islands: 2,
            island_radius: [150.0, 350.0],
            water_intensity: 40.0,
            land_intensity: 190.0,
            intensity_noise: 15.0,
        }
    }
}

pub fn synthetic_raster(
    recipe: &SyntheticCoast,
    cell_size: f64,
    depth_extent: f64,
    rng: &mut SimRng,
) -> Result<GridMap, EnvError> {
    let (w, h) = (recipe.width, recipe.height);
    let ex = w as f64 * cell_size;
    let ey = h as f64 * cell_size;
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let islands: Vec<(f64, f64, f64)> = (0..recipe.islands)
        .map(|_| {
            let r = recipe.island_radius[0]
                + rng.random::<f64>() * (recipe.island_radius[1] - recipe.island_radius[0]);
            let x = 0.25 * ex + rng.random::<f64>() * 0.6 * ex;
            let y = 0.15 * ey + rng.random::<f64>() * 0.7 * ey;
            (x, y, r)
        })
        .collect();
    let mut values = Vec::with_capacity(w * h);
    for row in 0..h {
        let y = (row as f64 + 0.5) * cell_size;
        let shore = recipe.shore_offset
            + recipe.shore_amplitude
                * (std::f64::consts::TAU * y / recipe.shore_wavelength + phase).sin();
        for col in 0..w {
            let x = (col as f64 + 0.5) * cell_size;
            let land = x < shore
                || islands
                    .iter()
                    .any(|&(ix, iy, r)| (x - ix).powi(2) + (y - iy).powi(2) < r * r);
            let mean = if land {
                recipe.land_intensity
            } else {
                recipe.water_intensity
            };
            let g: f64 = rng.sample(StandardNormal);
            values.push((mean + recipe.intensity_noise * g).round().clamp(0.0, 255.0) + 0.0);
        }
    }
    GridMap::new(w, h, cell_size, values, depth_extent)
}
