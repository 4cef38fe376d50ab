//! File formats: PLY geometry, netpbm images and the dataset layout.

pub mod dataset;
pub mod image;
pub mod ply;

pub use dataset::{CameraFile, Dataset, Mode, PipelineConfig, Scene};
pub use ply::{read_ply, write_mesh, write_point_cloud, PlyData, PlyEncoding};
