//! Operating volume: clustered coast map, vortex current field, obstacles.

pub mod current;
pub mod map;
pub mod obstacle;

use thiserror::Error;

pub use current::{
    current_at, field_grid, generate_field, perturb_field, CurrentSample, VortexField,
    VortexParams, VortexRecipe,
};
pub use map::{cluster_map, synthetic_raster, ClusteredMap, GridMap, SyntheticCoast, WaterLabel};
pub use obstacle::{
    forecast, generate_obstacles, point_in_collision, step_obstacles, Obstacle, ObstacleForecast,
    ObstacleKind, ObstacleRecipe,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("raster is empty")]
    EmptyRaster,
    #[error("raster has {found} cells, expected {expected}")]
    RasterShape { expected: usize, found: usize },
    #[error("cell size and depth must be positive")]
    InvalidGeometry,
    #[error("k = {k} is invalid: need 2 <= k <= {distinct} distinct intensities")]
    KTooLarge { k: usize, distinct: usize },
    #[error("raster line {line}: bad value {token:?}")]
    RasterParse { line: usize, token: String },
    #[error("raster io: {0}")]
    Io(String),
}
