//! Random unit cells, the surrogate solver, augmentation and persistence.

mod dataset;
mod io;
pub mod oracle;
pub mod polygon;
mod raster;
mod types;

pub use dataset::{augment, generate_dataset, generate_record, record_rng, split, GenerationRanges};
pub use io::{decode_dataset, encode_dataset, load_dataset, save_dataset, DATASET_MAGIC, RECORD_BYTES};
pub use oracle::surrogate_spectrum;
pub use polygon::{random_polygon, Point, PolygonParams};
pub use raster::rasterize;
pub use types::*;
