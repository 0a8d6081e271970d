//! Gap worlds, terrain queries and simulated depth sensing.

mod depth;
mod heightmap;
mod world;

pub use depth::{
    camera_pose_from_body, preprocess_depth, read_pgm16, render_depth, write_pgm16, CameraIntrinsics,
    CameraMount, CameraPose, DepthImage, PREPROCESSED_HEIGHT, PREPROCESSED_WIDTH, RAW_HEIGHT, RAW_WIDTH,
};
pub use heightmap::{HeightmapParams, HeightmapWindow, HEIGHTMAP_COLS, HEIGHTMAP_ROWS};
pub use world::{
    generate_gap_world, GapWorld, GapWorldParams, Segment, SegmentKind, TerrainSample, W_MIN,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("maximum gap width {w_max} is below the minimum {w_min}")]
    InvalidWidth { w_min: f64, w_max: f64 },
    #[error("invalid world layout: {0}")]
    InvalidLayout(String),
    #[error("depth image has shape {width}x{height}, expected {expected_width}x{expected_height}")]
    BadShape {
        width: usize,
        height: usize,
        expected_width: usize,
        expected_height: usize,
    },
    #[error("malformed depth file: {0}")]
    BadPgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
