//! Data pipeline: dataset scanning, netpbm/PNG decoding, augmentation,
//! deterministic batching, and a synthetic benchmark generator.

pub mod augment;
pub mod dataset;
mod error;
pub mod netpbm;
pub mod synth;

pub use augment::{apply_plan, augment, hflip, resize, rotate, zoom, AugmentConfig, AugmentPlan};
pub use dataset::{
    batches, compute_norm_stats, epoch_order, load_image, scan_dataset, synth_dataset, Batch,
    BatchConfig, BatchStream, DatasetIndex, NormStats, SampleRecord, Source, Split, WORKERS_ENV,
};
pub use error::{DataError, Result};
pub use synth::SynthSpec;
