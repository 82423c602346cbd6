//! Data ingestion: MNIST IDX files, the two-digit task, box normalization,
//! the non-parallelism check and synthetic testbeds.

mod assumption;
mod dataset;
mod idx;
mod synthetic;

pub use assumption::{
    angle_between, boxes_contain_parallel, check_assumption2, check_points, check_points_with,
    Assumption2Method, Assumption2Report, EXACT_MAX_DIM, PARALLEL_TOL,
};
pub use dataset::{normalize_assumption1, Dataset};
pub use idx::{
    encode_idx, load_idx, make_binary_task, parse_idx, BinaryTask, RawDataset, IMAGES_MAGIC,
    LABELS_MAGIC,
};
pub use synthetic::{
    generate as generate_synthetic, synthetic_dataset, SyntheticSpec, DEFAULT_FLOOR,
    MAX_CONSECUTIVE_REJECTIONS,
};

use std::path::Path;

use crate::error::Result;

/// Options for turning an IDX pair into a normalized binary dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistTaskSpec {
    pub positive: u8,
    pub negative: u8,
    pub limit: Option<usize>,
    pub epsilon: f64,
    /// Average-pool to `side x side` before normalizing.
    pub downsample: Option<usize>,
}

impl Default for MnistTaskSpec {
    fn default() -> Self {
        Self {
            positive: 2,
            negative: 5,
            limit: None,
            epsilon: 0.0,
            downsample: None,
        }
    }
}

/// Standard MNIST file names inside a directory.
pub fn mnist_paths(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    (
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
    )
}

pub fn load_mnist_task(dir: &Path, spec: &MnistTaskSpec) -> Result<Dataset> {
    let (images, labels) = mnist_paths(dir);
    let raw = load_idx(&images, &labels)?;
    let mut task = make_binary_task(&raw, spec.positive, spec.negative, spec.limit)?;
    if let Some(side) = spec.downsample {
        task = task.downsample(side)?;
    }
    normalize_assumption1(&task, spec.epsilon)
}
