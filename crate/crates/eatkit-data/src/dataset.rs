//! Dataset indexing, deterministic splits, image loading and batching.
//!
//! On-disk layout is class-per-directory: `root/<class_name>/*.{ppm,pgm,png}`.
//! The split is a pure function of (lexicographically sorted paths, seed,
//! ratios); the synthetic dataset flows through the same index type with
//! in-memory sources.

use std::fs;
use std::path::{Path, PathBuf};

use eatkit_tensor::{seeds, Tensor};
use rand::seq::SliceRandom;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use serde::{Deserialize, Serialize};

use crate::augment::{augment, resize, AugmentConfig};
use crate::error::{DataError, Result};
use crate::netpbm;
use crate::synth::{generate_sample, SynthSpec};

pub const WORKERS_ENV: &str = "EATKIT_DATA_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(name: &str) -> Option<Split> {
        match name {
            "train" => Some(Split::Train),
            "val" | "validation" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Source {
    File(PathBuf),
    Synth { class: usize, index: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub source: Source,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    classes: Vec<String>,
    samples: Vec<SampleRecord>,
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
    seed: u64,
    ratios: (f64, f64, f64),
    synth: Option<SynthSpec>,
    /// undecodable files skipped during scanning
    pub warnings: usize,
}

impl DatasetIndex {
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn split_indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// Load one sample as a (3, target_h, target_w) tensor in [0, 1].
    pub fn load_sample(&self, i: usize, target_h: usize, target_w: usize) -> Result<Tensor> {
        let record = &self.samples[i];
        let raw = match &record.source {
            Source::File(path) => load_image(path)?,
            Source::Synth { class, index } => {
                let spec = self
                    .synth
                    .as_ref()
                    .expect("synthetic sample in a non-synthetic index");
                generate_sample(spec, *class, *index)
            }
        };
        Ok(resize(&raw, target_h, target_w))
    }

    /// Deterministic key-sorted JSON for the index cache file.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("index serializes");
        serde_json::to_string_pretty(&value).expect("index prints")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DataError::Cache(e.to_string()))
    }
}

/// Validate ratios: non-negative, summing to 1.
fn check_ratios(ratios: (f64, f64, f64)) -> Result<()> {
    let (a, b, c) = ratios;
    if a < 0.0 || b < 0.0 || c < 0.0 || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "split ratios must be non-negative and sum to 1, got {:?}",
            ratios
        )));
    }
    Ok(())
}

/// Stratified deterministic split: per class, shuffle with a seed derived
/// from (seed, class) and cut at rounded cumulative boundaries.
fn assign_splits(
    per_class: &[Vec<usize>],
    ratios: (f64, f64, f64),
    seed: u64,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (class, members) in per_class.iter().enumerate() {
        let mut order = members.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(
            seeds::stream(seed, "split"),
            &[class as u64],
        ));
        order.shuffle(&mut rng);
        let n = order.len();
        let b1 = (n as f64 * ratios.0).round() as usize;
        let b2 = ((n as f64 * (ratios.0 + ratios.1)).round() as usize).clamp(b1, n);
        let b1 = b1.min(n);
        train.extend_from_slice(&order[..b1]);
        val.extend_from_slice(&order[b1..b2]);
        test.extend_from_slice(&order[b2..]);
    }
    (train, val, test)
}

const EXTENSIONS: [&str; 3] = ["ppm", "pgm", "png"];

/// Scan a class-per-directory tree. Class order is the lexicographic
/// directory order; files that fail a header probe are skipped and counted.
pub fn scan_dataset(root: &Path, ratios: (f64, f64, f64), seed: u64) -> Result<DatasetIndex> {
    check_ratios(ratios)?;
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    class_dirs.sort();

    let mut classes = Vec::new();
    let mut samples = Vec::new();
    let mut per_class: Vec<Vec<usize>> = Vec::new();
    let mut warnings = 0usize;
    for dir in &class_dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .and_then(|e| e.to_str())
                        .map(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
                        .unwrap_or(false)
            })
            .collect();
        files.sort();

        let label = classes.len();
        let mut members = Vec::new();
        for file in files {
            if probe_decodable(&file) {
                members.push(samples.len());
                samples.push(SampleRecord {
                    source: Source::File(file),
                    label,
                });
            } else {
                warnings += 1;
            }
        }
        if !members.is_empty() {
            classes.push(
                dir.file_name()
                    .and_then(|n| n.to_str())
                    .unwrap_or("unnamed")
                    .to_string(),
            );
            per_class.push(members);
        }
    }
    if classes.is_empty() {
        return Err(DataError::EmptyRoot(root.to_path_buf()));
    }
    let (train, val, test) = assign_splits(&per_class, ratios, seed);
    Ok(DatasetIndex {
        classes,
        samples,
        train,
        val,
        test,
        seed,
        ratios,
        synth: None,
        warnings,
    })
}

/// Cheap decodability check: header parse plus payload-length validation
/// for netpbm, header probe for PNG.
fn probe_decodable(path: &Path) -> bool {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "ppm" | "pgm" => fs::read(path)
            .ok()
            .and_then(|bytes| {
                let (header, offset) = netpbm::decode_header(path, &bytes).ok()?;
                let expected = header.width * header.height * header.channels;
                (bytes.len() - offset >= expected).then_some(())
            })
            .is_some(),
        "png" => image::image_dimensions(path).is_ok(),
        _ => false,
    }
}

/// In-memory synthetic dataset with the same index machinery.
pub fn synth_dataset(spec: SynthSpec, ratios: (f64, f64, f64)) -> Result<DatasetIndex> {
    check_ratios(ratios)?;
    if spec.classes < 2 {
        return Err(DataError::Config(format!(
            "synthetic dataset needs >= 2 classes, got {}",
            spec.classes
        )));
    }
    let mut samples = Vec::with_capacity(spec.classes * spec.per_class);
    let mut per_class = Vec::with_capacity(spec.classes);
    for class in 0..spec.classes {
        let mut members = Vec::with_capacity(spec.per_class);
        for index in 0..spec.per_class {
            members.push(samples.len());
            samples.push(SampleRecord {
                source: Source::Synth { class, index },
                label: class,
            });
        }
        per_class.push(members);
    }
    let (train, val, test) = assign_splits(&per_class, ratios, spec.seed);
    Ok(DatasetIndex {
        classes: (0..spec.classes).map(|c| format!("synth{}", c)).collect(),
        samples,
        train,
        val,
        test,
        seed: spec.seed,
        ratios,
        synth: Some(spec),
        warnings: 0,
    })
}

/// Decode a PPM/PGM/PNG file to a (3, H, W) tensor in [0, 1]; grayscale is
/// replicated across the three channels.
pub fn load_image(path: &Path) -> Result<Tensor> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "ppm" | "pgm" => {
            let bytes = fs::read(path)?;
            let img = netpbm::decode(path, &bytes)?;
            let (h, w) = (img.height, img.width);
            let mut data = vec![0.0; 3 * h * w];
            match img.channels {
                1 => {
                    for (i, &b) in img.pixels.iter().enumerate() {
                        let v = b as f64 / 255.0;
                        data[i] = v;
                        data[h * w + i] = v;
                        data[2 * h * w + i] = v;
                    }
                }
                3 => {
                    for i in 0..h * w {
                        for c in 0..3 {
                            data[c * h * w + i] = img.pixels[i * 3 + c] as f64 / 255.0;
                        }
                    }
                }
                _ => unreachable!("netpbm decoder yields 1 or 3 channels"),
            }
            Ok(Tensor::new(vec![3, h, w], data)?)
        }
        "png" => {
            let img = image::open(path)
                .map_err(|e| DataError::Png(format!("{}: {}", path.display(), e)))?
                .to_rgb8();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let mut data = vec![0.0; 3 * h * w];
            for (i, px) in img.pixels().enumerate() {
                for c in 0..3 {
                    data[c * h * w + i] = px.0[c] as f64 / 255.0;
                }
            }
            Ok(Tensor::new(vec![3, h, w], data)?)
        }
        _ => Err(DataError::UnsupportedFormat {
            path: path.to_path_buf(),
        }),
    }
}

/// Per-channel standardization statistics, computed once from the train
/// split and persisted in checkpoints.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct NormStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl NormStats {
    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; 3],
            std: [1.0; 3],
        }
    }
}

/// Mean/std of each channel over the (resized, un-augmented) train split,
/// accumulated in index order for determinism.
pub fn compute_norm_stats(
    index: &DatasetIndex,
    target_h: usize,
    target_w: usize,
) -> Result<NormStats> {
    let ids = index.split_indices(Split::Train);
    if ids.is_empty() {
        return Err(DataError::EmptySplit("train"));
    }
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    let mut count = 0usize;
    for &i in ids {
        let img = index.load_sample(i, target_h, target_w)?;
        let plane = target_h * target_w;
        for c in 0..3 {
            for &v in &img.data()[c * plane..(c + 1) * plane] {
                sum[c] += v;
                sum_sq[c] += v * v;
            }
        }
        count += plane;
    }
    let mut stats = NormStats::identity();
    for c in 0..3 {
        let mean = sum[c] / count as f64;
        let var = (sum_sq[c] / count as f64 - mean * mean).max(0.0);
        stats.mean[c] = mean;
        stats.std[c] = var.sqrt().max(1e-6);
    }
    Ok(stats)
}

/// A standardized batch ready for the model.
#[derive(Clone, Debug)]
pub struct Batch {
    /// (B, 3, H, W), scaled to [0,1] then per-channel standardized
    pub images: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct BatchConfig {
    pub batch_size: usize,
    pub target_h: usize,
    pub target_w: usize,
    /// base seed; shuffle and augmentation streams are derived per epoch
    pub seed: u64,
    /// applied to the train split only
    pub augment: Option<AugmentConfig>,
    pub stats: NormStats,
}

/// Deterministic per-epoch sample order for a split.
pub fn epoch_order(index: &DatasetIndex, split: Split, epoch: u64, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = index.split_indices(split).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::mix(
        seeds::stream(seed, "shuffle"),
        &[epoch, split as u64],
    ));
    order.shuffle(&mut rng);
    order
}

/// Lazy batch stream. Emission order is independent of the worker count:
/// every sample's augmentation stream is keyed by (seed, epoch, sample id).
pub struct BatchStream<'a> {
    index: &'a DatasetIndex,
    order: Vec<usize>,
    cursor: usize,
    split: Split,
    epoch: u64,
    cfg: BatchConfig,
    pool: Option<rayon::ThreadPool>,
}

pub fn batches<'a>(
    index: &'a DatasetIndex,
    split: Split,
    epoch: u64,
    cfg: &BatchConfig,
) -> Result<BatchStream<'a>> {
    if cfg.batch_size == 0 {
        return Err(DataError::Config("batch_size must be >= 1".into()));
    }
    let order = epoch_order(index, split, epoch, cfg.seed);
    if order.is_empty() {
        return Err(DataError::EmptySplit(split.name()));
    }
    let workers = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1);
    let pool = (workers > 1)
        .then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .ok()
        })
        .flatten();
    Ok(BatchStream {
        index,
        order,
        cursor: 0,
        split,
        epoch,
        cfg: cfg.clone(),
        pool,
    })
}

impl BatchStream<'_> {
    fn prepare_one(&self, sample_id: usize) -> Result<(Vec<f64>, usize)> {
        let cfg = &self.cfg;
        let mut img = self
            .index
            .load_sample(sample_id, cfg.target_h, cfg.target_w)?;
        if self.split == Split::Train {
            if let Some(aug) = &cfg.augment {
                let sample_seed = seeds::mix(
                    seeds::stream(cfg.seed, "augment"),
                    &[self.epoch, sample_id as u64],
                );
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
                img = augment(&img, &mut rng, aug);
            }
        }
        let plane = cfg.target_h * cfg.target_w;
        let mut data = img.into_data();
        for c in 0..3 {
            let (mean, std) = (cfg.stats.mean[c], cfg.stats.std[c]);
            for v in &mut data[c * plane..(c + 1) * plane] {
                *v = (*v - mean) / std;
            }
        }
        Ok((data, self.index.samples()[sample_id].label))
    }

    fn assemble(&self, ids: &[usize]) -> Result<Batch> {
        let prepared: Vec<Result<(Vec<f64>, usize)>> = match &self.pool {
            Some(pool) => pool.install(|| {
                use rayon::prelude::*;
                ids.par_iter().map(|&i| self.prepare_one(i)).collect()
            }),
            None => ids.iter().map(|&i| self.prepare_one(i)).collect(),
        };
        let plane = 3 * self.cfg.target_h * self.cfg.target_w;
        let mut images = Vec::with_capacity(ids.len() * plane);
        let mut labels = Vec::with_capacity(ids.len());
        for item in prepared {
            let (data, label) = item?;
            images.extend_from_slice(&data);
            labels.push(label);
        }
        let images = Tensor::new(
            vec![ids.len(), 3, self.cfg.target_h, self.cfg.target_w],
            images,
        )?;
        Ok(Batch { images, labels })
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.cfg.batch_size).min(self.order.len());
        let ids: Vec<usize> = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(self.assemble(&ids))
    }
}
