//! Scenario files: one TOML document with a section per subsystem. Every
//! section is optional and falls back to documented defaults; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::de::DeParams;
use crate::env::{
    cluster_map, generate_field, generate_obstacles, synthetic_raster, ClusteredMap, EnvError,
    GridMap, Obstacle, ObstacleRecipe, SyntheticCoast, VortexField, VortexParams, VortexRecipe,
    WaterLabel,
};
use crate::local::{LocalCostWeights, SplineConfig};
use crate::mission::{MissionConfig, MissionSetup, VehicleConfig, World};
use crate::network::{build_network, NetworkError, NetworkSpec};
use crate::rng::{stream, STREAM_ENV, STREAM_NETWORK};

/// The reference scenario: 10 × 10 × 1 km, 20 stations, four-hour battery.
pub const PAPER_BASELINE: &str = include_str!("../scenarios/paper_baseline.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<usize>, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    /// Operating volume, meters: x, y, depth.
    pub size: [f64; 3],
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            size: [10_000.0, 10_000.0, 1_000.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    /// No coast at all.
    Open,
    #[default]
    Synthetic,
    Raster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub source: MapSource,
    /// Whitespace-separated intensity rows; relative to the scenario file.
    pub raster: Option<PathBuf>,
    pub cell_size: f64,
    pub clusters: usize,
    pub water: WaterLabel,
    pub kmeans_iterations: usize,
    /// Cells the coast is grown by for planning.
    pub planning_dilation: usize,
    pub synthetic: SyntheticCoast,
}

impl Default for MapSection {
    fn default() -> Self {
        Self {
            source: MapSource::Synthetic,
            raster: None,
            cell_size: 10.0,
            clusters: 2,
            water: WaterLabel::Low,
            kmeans_iterations: 100,
            planning_dilation: 5,
            synthetic: SyntheticCoast::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurrentSection {
    pub tile: f64,
    pub count: [usize; 2],
    pub radius: [f64; 2],
    pub strength: [f64; 2],
    pub noise: [f64; 2],
    /// Explicit vortices; when given, none are generated.
    pub vortices: Vec<VortexParams>,
}

impl Default for CurrentSection {
    fn default() -> Self {
        let r = VortexRecipe::default();
        Self {
            tile: r.tile,
            count: r.count,
            radius: r.radius,
            strength: r.strength,
            noise: r.noise,
            vortices: Vec::new(),
        }
    }
}

impl CurrentSection {
    pub fn recipe(&self) -> VortexRecipe {
        VortexRecipe {
            tile: self.tile,
            count: self.count,
            radius: self.radius,
            strength: self.strength,
            noise: self.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstacleSection {
    pub static_count: usize,
    pub uncertain_count: usize,
    pub mobile_count: usize,
    pub radius: [f64; 2],
    pub radius_sigma: f64,
    pub motion_sigma: f64,
    pub confidence_margin: f64,
    pub station_clearance: f64,
    /// Explicit obstacles, added after the generated ones.
    pub list: Vec<Obstacle>,
}

impl Default for ObstacleSection {
    fn default() -> Self {
        let r = ObstacleRecipe::default();
        Self {
            static_count: r.static_count,
            uncertain_count: r.uncertain_count,
            mobile_count: r.mobile_count,
            radius: r.radius,
            radius_sigma: r.radius_sigma,
            motion_sigma: r.motion_sigma,
            confidence_margin: r.confidence_margin,
            station_clearance: r.station_clearance,
            list: Vec::new(),
        }
    }
}

impl ObstacleSection {
    pub fn recipe(&self) -> ObstacleRecipe {
        ObstacleRecipe {
            static_count: self.static_count,
            uncertain_count: self.uncertain_count,
            mobile_count: self.mobile_count,
            radius: self.radius,
            radius_sigma: self.radius_sigma,
            motion_sigma: self.motion_sigma,
            confidence_margin: self.confidence_margin,
            station_clearance: self.station_clearance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeSection {
    pub global: DeParams,
    pub local: DeParams,
}

impl Default for DeSection {
    fn default() -> Self {
        Self {
            global: DeParams::default(),
            local: DeParams {
                population: 30,
                generations: 80,
                ..DeParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    /// Inclusive station-count range redrawn for every trial.
    pub station_range: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub field: FieldSection,
    pub map: MapSection,
    pub currents: CurrentSection,
    pub obstacles: ObstacleSection,
    pub network: NetworkSpec,
    pub vehicle: VehicleConfig,
    pub mission: MissionConfig,
    pub local_cost: LocalCostWeights,
    pub spline: SplineConfig,
    pub de: DeSection,
    pub montecarlo: MonteCarloSection,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "unnamed".into(),
            seed: 0,
            field: FieldSection::default(),
            map: MapSection::default(),
            currents: CurrentSection::default(),
            obstacles: ObstacleSection::default(),
            network: NetworkSpec::default(),
            vehicle: VehicleConfig::default(),
            mission: MissionConfig::default(),
            local_cost: LocalCostWeights::default(),
            spline: SplineConfig::default(),
            de: DeSection::default(),
            montecarlo: MonteCarloSection::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let mut sc: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    sc.base_dir = base_dir.to_path_buf();
    sc.local_cost.cruise_speed = sc.vehicle.cruise_speed;
    sc.validate()?;
    Ok(sc)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_scenario(&text, &base)
}

pub fn paper_baseline() -> Scenario {
    parse_scenario(PAPER_BASELINE, Path::new(".")).expect("bundled scenario is valid")
}

/// The scenario as TOML with every default spelled out.
pub fn echo(sc: &Scenario) -> String {
    toml::to_string(sc).expect("scenario serializes")
}

fn range_ok(r: [f64; 2]) -> bool {
    r[0] <= r[1]
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.check().map_err(ScenarioError::Validation)
    }

    fn check(&self) -> Result<(), String> {
        if self.field.size.iter().any(|v| !(*v > 0.0)) {
            return Err("field.size must be positive".into());
        }
        let m = &self.map;
        if !(m.cell_size > 0.0) {
            return Err("map.cell_size must be > 0".into());
        }
        if m.clusters < 2 {
            return Err("map.clusters must be >= 2".into());
        }
        match m.source {
            MapSource::Synthetic => {
                let s = &m.synthetic;
                let w = s.width as f64 * m.cell_size;
                let h = s.height as f64 * m.cell_size;
                if (w - self.field.size[0]).abs() > 1e-6 || (h - self.field.size[1]).abs() > 1e-6 {
                    return Err("map.synthetic width/height times cell_size must equal field.size".into());
                }
                if !range_ok(s.island_radius) {
                    return Err("map.synthetic.island_radius must be ordered".into());
                }
            }
            MapSource::Raster => match &m.raster {
                None => return Err("map.raster is required when map.source = \"raster\"".into()),
                Some(p) if !self.base_dir.join(p).is_file() => {
                    return Err(format!("map.raster file {} does not exist", p.display()))
                }
                Some(_) => {}
            },
            MapSource::Open => {}
        }
        let c = &self.currents;
        if !(c.tile > 0.0) {
            return Err("currents.tile must be > 0".into());
        }
        if c.count[0] > c.count[1] {
            return Err("currents.count must be ordered".into());
        }
        if !(c.radius[0] > 0.0 && range_ok(c.radius)) {
            return Err("currents.radius must be positive and ordered".into());
        }
        if !(c.strength[0] >= 0.0 && range_ok(c.strength)) {
            return Err("currents.strength must be non-negative and ordered".into());
        }
        if !(c.noise[0] >= 0.0 && range_ok(c.noise)) {
            return Err("currents.noise must be non-negative and ordered".into());
        }
        if c.vortices.iter().any(|v| !(v.radius > 0.0)) {
            return Err("currents.vortices radius must be > 0".into());
        }
        let o = &self.obstacles;
        if !(o.radius[0] > 0.0 && range_ok(o.radius)) {
            return Err("obstacles.radius must be positive and ordered".into());
        }
        if !(o.radius_sigma >= 0.0 && o.motion_sigma >= 0.0 && o.station_clearance >= 0.0) {
            return Err("obstacles sigmas and clearance must be >= 0".into());
        }
        if !(o.confidence_margin >= 1.0) {
            return Err("obstacles.confidence_margin must be >= 1".into());
        }
        if o.list.iter().any(|x| !(x.radius > 0.0)) {
            return Err("obstacles.list radius must be > 0".into());
        }
        let n = &self.network;
        if n.stations.is_empty() && n.count < 2 {
            return Err("network.count must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&n.drifting_fraction) {
            return Err("network.drifting_fraction must be in [0, 1]".into());
        }
        if n.values[0] > n.values[1] {
            return Err("network.values must be ordered".into());
        }
        if !(n.comm_range > 0.0) {
            return Err("network.comm_range must be > 0".into());
        }
        if n.start == n.goal_id() {
            return Err("network.start and network.goal must differ".into());
        }
        if !(n.sigma >= 0.0) || n.bound.iter().any(|b| !(*b >= 0.0)) {
            return Err("network.sigma and network.bound must be >= 0".into());
        }
        self.vehicle.validate()?;
        self.mission.validate()?;
        self.local_cost.validate()?;
        self.spline.validate()?;
        self.de.global.validate("de.global")?;
        self.de.local.validate("de.local")?;
        if let Some([lo, hi]) = self.montecarlo.station_range {
            if lo < 2 || lo > hi {
                return Err("montecarlo.station_range must be ordered with a minimum of 2".into());
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> [f64; 4] {
        [0.0, 0.0, self.field.size[0], self.field.size[1]]
    }

    /// Builds the world for `seed`: coast map, current field, stations and
    /// obstacles, each from its own labelled stream.
    pub fn build_world(&self, seed: u64) -> Result<World, ScenarioError> {
        let mut env_rng = stream(seed, STREAM_ENV);
        let [sx, sy, depth] = self.field.size;
        let m = &self.map;
        let map = match m.source {
            MapSource::Open => {
                let w = (sx / m.cell_size).round() as usize;
                let h = (sy / m.cell_size).round() as usize;
                ClusteredMap::open_water(w, h, m.cell_size, depth)
            }
            MapSource::Synthetic => {
                let raster = synthetic_raster(&m.synthetic, m.cell_size, depth, &mut env_rng)?;
                cluster_map(&raster, m.clusters, m.kmeans_iterations, m.water)?
            }
            MapSource::Raster => {
                let path = self.base_dir.join(m.raster.as_deref().unwrap_or(Path::new("")));
                let raster = GridMap::load_raster(&path, m.cell_size, depth)?;
                cluster_map(&raster, m.clusters, m.kmeans_iterations, m.water)?
            }
        };
        let planning_map = map.dilated(m.planning_dilation);

        let field = if self.currents.vortices.is_empty() {
            generate_field(&self.currents.recipe(), self.extent(), &mut env_rng)
        } else {
            let mut f = VortexField::with_vortices(self.currents.vortices.clone(), self.extent());
            f.noise_range = self.currents.noise;
            f
        };

        let mut net_rng = stream(seed, STREAM_NETWORK);
        let network = build_network(&self.network, &planning_map, &mut net_rng)?;

        let anchors: Vec<[f64; 3]> = network.stations.iter().map(|s| s.position).collect();
        let mut obstacles = generate_obstacles(&self.obstacles.recipe(), &planning_map, &anchors, 1, &mut env_rng);
        let next_id = obstacles.iter().map(|o| o.id + 1).max().unwrap_or(1);
        obstacles.extend(self.obstacles.list.iter().enumerate().map(|(i, o)| Obstacle {
            id: next_id + i as u32,
            ..o.clone()
        }));

        Ok(World {
            map,
            planning_map,
            field,
            obstacles,
            network,
        })
    }

    pub fn mission_setup(&self, seed: u64) -> Result<MissionSetup, ScenarioError> {
        let mut weights = self.local_cost.clone();
        weights.cruise_speed = self.vehicle.cruise_speed;
        Ok(MissionSetup {
            world: self.build_world(seed)?,
            vehicle: self.vehicle.clone(),
            mission: self.mission.clone(),
            global_de: self.de.global.clone(),
            local_de: self.de.local.clone(),
            weights,
            spline: self.spline.clone(),
        })
    }
}
