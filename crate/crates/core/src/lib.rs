pub mod bench;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod hashmap;
pub mod io;
pub mod tsdf;

pub use error::{Error, Result};
pub use hashmap::{Backend, BatchResult, SpatialHashMap, SpatialHashSet, ValueSchema};
