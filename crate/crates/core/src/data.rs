//! Data generation and ingestion: the synthetic regression task, IDX image
//! files, CSV tables, and a deterministic pattern-image generator for running
//! the classification experiments without external datasets.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::TargetsRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub enum Labels {
    Classes(Vec<usize>),
    Targets(Array2<f64>),
}

#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub labels: Labels,
    pub split: Split,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn targets_ref(&self) -> TargetsRef<'_> {
        match &self.labels {
            Labels::Classes(c) => TargetsRef::Classes(c),
            Labels::Targets(t) => TargetsRef::Values(t.view()),
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes(c) => c.iter().max().map(|&m| m + 1),
            Labels::Targets(_) => None,
        }
    }
}

/// Synthetic 1-d regression task: noisy samples of
/// `y = x + 0.3 sin(2 pi (x + eps)) + 0.3 sin(4 pi (x + eps)) + eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionTask {
    pub n_train: usize,
    pub train_range: (f64, f64),
    pub test_range: (f64, f64),
    /// Standard deviation of eps (one draw per point, shared by all three
    /// occurrences in the formula).
    pub noise_std: f64,
    pub n_test: usize,
}

impl Default for RegressionTask {
    fn default() -> Self {
        Self {
            n_train: 10_000,
            train_range: (0.0, 0.5),
            test_range: (-0.5, 1.2),
            noise_std: 0.02,
            n_test: 10_000,
        }
    }
}

impl RegressionTask {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Contract("n_train and n_test must be >= 1".into()));
        }
        if self.train_range.0 >= self.train_range.1 || self.test_range.0 >= self.test_range.1 {
            return Err(Error::Contract("ranges must be ordered lo < hi".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Contract("noise_std must be nonnegative".into()));
        }
        Ok(())
    }
}

/// The generator curve at a given noise realization.
pub fn regression_curve(x: f64, eps: f64) -> f64 {
    use std::f64::consts::PI;
    x + 0.3 * (2.0 * PI * (x + eps)).sin() + 0.3 * (4.0 * PI * (x + eps)).sin() + eps
}

/// Training samples drawn uniformly from the train range plus an equally
/// spaced noiseless test grid over the test range.
pub fn gen_regression<R: Rng>(
    task: &RegressionTask,
    rng: &mut R,
) -> Result<(LabeledDataset, LabeledDataset)> {
    task.validate()?;
    let normal = StandardNormal;

    let mut train_x = Array2::<f64>::zeros((task.n_train, 1));
    let mut train_y = Array2::<f64>::zeros((task.n_train, 1));
    for i in 0..task.n_train {
        let x = rng.random_range(task.train_range.0..task.train_range.1);
        let z: f64 = normal.sample(rng);
        let eps = task.noise_std * z;
        train_x[(i, 0)] = x;
        train_y[(i, 0)] = regression_curve(x, eps);
    }

    let mut test_x = Array2::<f64>::zeros((task.n_test, 1));
    let mut test_y = Array2::<f64>::zeros((task.n_test, 1));
    let (lo, hi) = task.test_range;
    for i in 0..task.n_test {
        let x = if task.n_test == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (task.n_test - 1) as f64
        };
        test_x[(i, 0)] = x;
        test_y[(i, 0)] = regression_curve(x, 0.0);
    }

    Ok((
        LabeledDataset {
            features: train_x,
            labels: Labels::Targets(train_y),
            split: Split::Train,
        },
        LabeledDataset {
            features: test_x,
            labels: Labels::Targets(test_y),
            split: Split::Test,
        },
    ))
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct IdxReader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> IdxReader<'a> {
    fn read_u32(&mut self) -> Result<u32> {
        if self.offset + 4 > self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: truncated at byte offset {}",
                self.path.display(),
                self.offset
            )));
        }
        let v = u32::from_be_bytes(self.bytes[self.offset..self.offset + 4].try_into().unwrap());
        self.offset += 4;
        Ok(v)
    }

    fn read_bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "{}: truncated at byte offset {} (needed {n} more bytes)",
                self.path.display(),
                self.offset
            )));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }
}

/// Load an IDX image/label file pair. Pixels are scaled to `[0, 1]` by
/// dividing by 255 and images are flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let image_bytes = fs::read(images_path)?;
    let mut r = IdxReader {
        bytes: &image_bytes,
        offset: 0,
        path: images_path,
    };
    let magic = r.read_u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x} at byte offset 0 (expected {IDX_IMAGES_MAGIC:#010x})",
            images_path.display()
        )));
    }
    let count = r.read_u32()? as usize;
    let rows = r.read_u32()? as usize;
    let cols = r.read_u32()? as usize;
    let pixels = r.read_bytes(count * rows * cols)?;

    let label_bytes = fs::read(labels_path)?;
    let mut r = IdxReader {
        bytes: &label_bytes,
        offset: 0,
        path: labels_path,
    };
    let magic = r.read_u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: bad magic {magic:#010x} at byte offset 0 (expected {IDX_LABELS_MAGIC:#010x})",
            labels_path.display()
        )));
    }
    let label_count = r.read_u32()? as usize;
    if label_count != count {
        return Err(Error::Format(format!(
            "{} has {label_count} labels but {} has {count} images",
            labels_path.display(),
            images_path.display()
        )));
    }
    let labels = r.read_bytes(label_count)?;

    let dim = rows * cols;
    let features = Array2::from_shape_fn((count, dim), |(i, j)| {
        f64::from(pixels[i * dim + j]) / 255.0
    });
    Ok(LabeledDataset {
        features,
        labels: Labels::Classes(labels.iter().map(|&l| l as usize).collect()),
        split: Split::Train,
    })
}

/// Write images (one flattened `rows*cols` row per image) in IDX format.
pub fn write_idx_images(path: &Path, images: &Array2<u8>, rows: usize, cols: usize) -> Result<()> {
    if images.ncols() != rows * cols {
        return Err(Error::Shape(format!(
            "images have {} columns, expected rows*cols = {}",
            images.ncols(),
            rows * cols
        )));
    }
    let mut out = Vec::with_capacity(16 + images.len());
    out.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.nrows() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend(images.iter().copied());
    fs::write(path, out)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out)?;
    Ok(())
}

/// Deterministic subsample taken before any other processing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvSubsample {
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CsvSchema {
    /// Columns to one-hot encode; all other feature columns must be numeric.
    pub categorical: Vec<String>,
    pub subsample: Option<CsvSubsample>,
}

/// Load a labeled CSV table: header row, comma separated.
///
/// Feature columns keep header order; each categorical column expands to one
/// column per level (levels sorted), and labels map to `0..k` by sorted
/// distinct value.
pub fn load_csv(path: &Path, label_column: &str, schema: &CsvSchema) -> Result<LabeledDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::Format(format!(
                "{}: label column {label_column:?} not found",
                path.display()
            ))
        })?;

    let mut records: Vec<csv::StringRecord> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            Error::Format(format!("{}: row {}: {e}", path.display(), i + 2))
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::Format(format!("{}: no data rows", path.display())));
    }

    if let Some(sub) = schema.subsample {
        if sub.n < records.len() {
            let mut idx: Vec<usize> = (0..records.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(sub.seed);
            idx.shuffle(&mut rng);
            idx.truncate(sub.n);
            idx.sort_unstable();
            records = idx.into_iter().map(|i| records[i].clone()).collect();
        }
    }

    // column layout: numeric columns contribute one feature, categorical
    // columns one per sorted level
    enum Col {
        Numeric(usize),
        Categorical(usize, Vec<String>),
    }
    let mut cols = Vec::new();
    for (j, name) in headers.iter().enumerate() {
        if j == label_idx {
            continue;
        }
        if schema.categorical.iter().any(|c| c == name) {
            let mut levels: Vec<String> =
                records.iter().map(|r| r[j].to_string()).collect();
            levels.sort();
            levels.dedup();
            cols.push(Col::Categorical(j, levels));
        } else {
            cols.push(Col::Numeric(j));
        }
    }
    let width: usize = cols
        .iter()
        .map(|c| match c {
            Col::Numeric(_) => 1,
            Col::Categorical(_, levels) => levels.len(),
        })
        .sum();

    let mut features = Array2::<f64>::zeros((records.len(), width));
    for (i, record) in records.iter().enumerate() {
        let mut k = 0;
        for col in &cols {
            match col {
                Col::Numeric(j) => {
                    features[(i, k)] = record[*j].trim().parse::<f64>().map_err(|_| {
                        Error::Format(format!(
                            "{}: row {}: column {:?} value {:?} is not numeric",
                            path.display(),
                            i + 2,
                            headers[*j],
                            &record[*j]
                        ))
                    })?;
                    k += 1;
                }
                Col::Categorical(j, levels) => {
                    let pos = levels
                        .iter()
                        .position(|l| l == &record[*j])
                        .expect("levels collected from the same records");
                    features[(i, k + pos)] = 1.0;
                    k += levels.len();
                }
            }
        }
    }

    // sorted distinct labels -> 0..k (numeric sort when every label parses)
    let mut distinct: Vec<String> = records.iter().map(|r| r[label_idx].to_string()).collect();
    distinct.sort();
    distinct.dedup();
    if let Ok(nums) = distinct
        .iter()
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<f64>, _>>()
    {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(distinct).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        distinct = pairs.into_iter().map(|(_, s)| s).collect();
    }
    let labels: Vec<usize> = records
        .iter()
        .map(|r| {
            distinct
                .iter()
                .position(|d| d == &r[label_idx])
                .expect("distinct covers all labels")
        })
        .collect();

    Ok(LabeledDataset {
        features,
        labels: Labels::Classes(labels),
        split: Split::Train,
    })
}

/// Parameters for the synthetic pattern-image classification task used when no
/// real image dataset is on disk: each class is a smooth random prototype and
/// samples are shifted, rescaled, noised renderings of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternTask {
    pub num_classes: usize,
    pub side: usize,
    pub noise_std: f64,
    pub max_shift: usize,
    /// Seed for the class prototypes (fixed so train and test share classes).
    pub prototype_seed: u64,
}

impl Default for PatternTask {
    fn default() -> Self {
        Self {
            num_classes: 10,
            side: 28,
            noise_std: 0.15,
            max_shift: 2,
            prototype_seed: 7,
        }
    }
}

fn pattern_prototype(task: &PatternTask, class: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(task.prototype_seed ^ (class as u64).wrapping_mul(0x9e37));
    let side = task.side;
    let mut proto = vec![0.0f64; side * side];
    // a handful of localized strokes well inside the frame, so the border
    // stays dark the way scanned digits do
    let margin = (side / 4).max(task.max_shift + 2);
    let lo = margin as f64;
    let hi = (side - margin) as f64;
    for _ in 0..4 {
        let cx = rng.random_range(lo..hi);
        let cy = rng.random_range(lo..hi);
        let sigma = rng.random_range(1.2..2.6);
        let amp = rng.random_range(0.7..1.0);
        for i in 0..side {
            for j in 0..side {
                let d2 = (i as f64 - cx).powi(2) + (j as f64 - cy).powi(2);
                proto[i * side + j] += amp * (-d2 / (2.0 * sigma * sigma)).exp();
            }
        }
    }
    for v in &mut proto {
        *v = v.min(1.0);
        // cut faint tails so off-stroke pixels are exactly zero
        if *v < 0.02 {
            *v = 0.0;
        }
    }
    proto
}

/// Generate `n` byte images with balanced random classes.
///
/// Samples are the class prototype shifted by up to `max_shift` pixels (zero
/// fill, so the border stays exactly zero), dimmed by a random brightness and
/// perturbed by noise on the stroke support only.
pub fn gen_pattern_images<R: Rng>(
    task: &PatternTask,
    n: usize,
    rng: &mut R,
) -> (Array2<u8>, Vec<u8>) {
    let side = task.side as i64;
    let protos: Vec<Vec<f64>> = (0..task.num_classes)
        .map(|c| pattern_prototype(task, c))
        .collect();
    let normal = StandardNormal;
    let mut images = Array2::<u8>::zeros((n, (side * side) as usize));
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let class = rng.random_range(0..task.num_classes);
        let shift = task.max_shift as i64;
        let dx = rng.random_range(-shift..=shift);
        let dy = rng.random_range(-shift..=shift);
        let brightness = rng.random_range(0.6..1.0);
        let proto = &protos[class];
        for i in 0..side {
            for j in 0..side {
                let si = i + dx;
                let sj = j + dy;
                let source = if (0..side).contains(&si) && (0..side).contains(&sj) {
                    proto[(si * side + sj) as usize]
                } else {
                    0.0
                };
                if source > 0.0 {
                    let z: f64 = normal.sample(rng);
                    let v = (source * (brightness + task.noise_std * z)).clamp(0.0, 1.0);
                    images[(r as usize, (i * side + j) as usize)] = (v * 255.0).round() as u8;
                }
            }
        }
        labels.push(class as u8);
    }
    (images, labels)
}

/// The pattern task as a ready-to-train dataset, using the same `/255` scaling
/// as the IDX loader.
pub fn gen_pattern_dataset<R: Rng>(
    task: &PatternTask,
    n: usize,
    split: Split,
    rng: &mut R,
) -> LabeledDataset {
    let (images, labels) = gen_pattern_images(task, n, rng);
    let features = images.mapv(|b| f64::from(b) / 255.0);
    LabeledDataset {
        features,
        labels: Labels::Classes(labels.into_iter().map(usize::from).collect()),
        split,
    }
}
