//! File formats and dataset directories.

pub mod dataset;
pub mod export;
pub mod pfm;
pub mod png;

pub use dataset::{load_dataset, save_dataset, Dataset, DatasetManifest};
pub use pfm::{load_normal_map, read_pfm, save_normal_map, save_scalar_map, write_pfm, FloatImage};
pub use png::{save_error_png, save_normal_png};
