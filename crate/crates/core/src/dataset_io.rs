//! IDX image datasets (the MNIST family), binary corruption of their labels,
//! train/validation splitting and model-based similarity confidences.
//!
//! Images are kept as raw bytes and scaled by 1/255 on access; the full
//! MNIST training set as `f64` vectors would take ~380 MB.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;

use crate::datagen::{pair_with_posteriors, LabeledExample, Provenance, SconfDataset};
use crate::losses::{Label, LossKind};
use crate::model::{stack_rows, Architecture};
use crate::numeric::sigmoid;
use crate::optim::AdamConfig;
use crate::risk::{EstimatorKind, RiskSpec};
use crate::rng::{self, stream};
use crate::trainer::{train_supervised, BatchSize, TrainConfig};
use crate::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// One decoded example: pixels in `[0, 1]` and the original class label.
#[derive(Debug, Clone, PartialEq)]
pub struct RawExample {
    pub pixels: Vec<f64>,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxDataset {
    pub rows: usize,
    pub cols: usize,
    images: Vec<u8>,
    pub labels: Vec<u8>,
}

impl IdxDataset {
    pub fn new(rows: usize, cols: usize, images: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != rows * cols * labels.len() {
            return Err(Error::Data(format!(
                "{} image bytes do not hold {} images of {rows}x{cols}",
                images.len(),
                labels.len()
            )));
        }
        Ok(IdxDataset { rows, cols, images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let d = self.dim();
        &self.images[i * d..(i + 1) * d]
    }

    pub fn pixels(&self, i: usize) -> Vec<f64> {
        self.image_bytes(i).iter().map(|&b| f64::from(b) / 255.0).collect()
    }

    pub fn example(&self, i: usize) -> RawExample {
        RawExample { pixels: self.pixels(i), label: self.labels[i] }
    }

    pub fn examples(&self, indices: &[usize]) -> Vec<RawExample> {
        indices.iter().map(|&i| self.example(i)).collect()
    }

    pub fn all(&self) -> Vec<RawExample> {
        (0..self.len()).map(|i| self.example(i)).collect()
    }
}

/// Reads a file, gunzipping it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { path: self.path.to_path_buf(), offset: self.pos as u64, msg: msg.into() }
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.bytes.get(self.pos..self.pos + 4).ok_or_else(|| self.err("truncated header"))?;
        self.pos += 4;
        Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")))
    }

    fn magic(&mut self, want: u32) -> Result<()> {
        let got = self.u32_be()?;
        if got != want {
            self.pos -= 4;
            return Err(self.err(format!("bad magic 0x{got:08x}, expected 0x{want:08x}")));
        }
        Ok(())
    }

    fn body(&mut self, len: usize) -> Result<&[u8]> {
        let available = self.bytes.len() - self.pos;
        if available < len {
            self.pos = self.bytes.len();
            return Err(self.err(format!("truncated data: expected {len} bytes, found {available}")));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }
}

/// Parses an image file: returns `(count, rows, cols, pixel bytes)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut c = Cursor { bytes, pos: 0, path };
    c.magic(IMAGES_MAGIC)?;
    let n = c.u32_be()? as usize;
    let rows = c.u32_be()? as usize;
    let cols = c.u32_be()? as usize;
    let data = c.body(n * rows * cols)?.to_vec();
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes after image data"));
    }
    Ok((n, rows, cols, data))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let mut c = Cursor { bytes, pos: 0, path };
    c.magic(LABELS_MAGIC)?;
    let n = c.u32_be()? as usize;
    let data = c.body(n)?.to_vec();
    if c.pos != bytes.len() {
        return Err(c.err("trailing bytes after label data"));
    }
    Ok(data)
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let n = pixels.len() / (rows * cols).max(1);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image file and its label file (either may be gzip-compressed).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<IdxDataset> {
    let (n, rows, cols, images) = parse_idx_images(&read_maybe_gz(images_path)?, images_path)?;
    let label_bytes = read_maybe_gz(labels_path)?;
    let labels = parse_idx_labels(&label_bytes, labels_path)?;
    if labels.len() != n {
        // The count field of the label file sits at byte 4.
        return Err(Error::Parse {
            path: labels_path.to_path_buf(),
            offset: 4,
            msg: format!("{} labels for {n} images", labels.len()),
        });
    }
    IdxDataset::new(rows, cols, images, labels)
}

/// Locates `<prefix>-images-idx3-ubyte[.gz]` and the matching labels file in
/// `dir`; `prefix` is `train` or `t10k`.
pub fn find_idx_pair(dir: &Path, prefix: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let pick = |stem: String| {
        for name in [stem.clone(), format!("{stem}.gz")] {
            let p = dir.join(&name);
            if p.is_file() {
                return Ok(p);
            }
        }
        Err(Error::io(
            dir.join(&stem),
            std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found (also tried .gz)"),
        ))
    };
    Ok((pick(format!("{prefix}-images-idx3-ubyte"))?, pick(format!("{prefix}-labels-idx1-ubyte"))?))
}

/// A partition of a multi-class label space into a positive and a negative
/// class.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryCorruption {
    pub dataset_name: String,
    /// Every valid original label.
    pub labels: Vec<u8>,
    pub positive_classes: Vec<u8>,
    pub pi_plus_nominal: f64,
}

impl BinaryCorruption {
    pub fn new(name: &str, labels: Vec<u8>, positive_classes: Vec<u8>, pi_plus_nominal: f64) -> Result<Self> {
        if let Some(c) = positive_classes.iter().find(|c| !labels.contains(c)) {
            return Err(Error::Config(format!("positive class {c} is outside the label space of {name}")));
        }
        Ok(BinaryCorruption { dataset_name: name.to_string(), labels, positive_classes, pi_plus_nominal })
    }

    /// Built-in rules: `mnist`, `fashion`, `kmnist`, `emnist-digits`,
    /// `emnist-letters`, `emnist-balanced`.
    pub fn preset(name: &str) -> Result<Self> {
        let range = |a: u8, b: u8| (a..=b).collect::<Vec<u8>>();
        let (labels, positive, pi) = match name {
            "mnist" => (range(0, 9), range(0, 2), 0.3),
            "fashion" => (range(0, 9), vec![0, 2, 3, 6], 0.4),
            "kmnist" => (range(0, 9), range(0, 6), 0.7),
            "emnist-digits" => (range(0, 9), range(0, 5), 0.6),
            "emnist-letters" => (range(1, 26), range(1, 16), 0.6153),
            "emnist-balanced" => (range(0, 46), range(0, 26), 0.5744),
            other => return Err(Error::Config(format!("unknown corruption rule {other:?}"))),
        };
        Self::new(name, labels, positive, pi)
    }

    pub fn label_of(&self, original: u8) -> Result<Label> {
        if self.positive_classes.contains(&original) {
            Ok(Label::Positive)
        } else if self.labels.contains(&original) {
            Ok(Label::Negative)
        } else {
            Err(Error::Data(format!("label {original} is not covered by the {} rule", self.dataset_name)))
        }
    }

    pub fn positive_fraction(&self, originals: &[u8]) -> Result<f64> {
        let mut pos = 0usize;
        for &l in originals {
            if self.label_of(l)? == Label::Positive {
                pos += 1;
            }
        }
        Ok(pos as f64 / originals.len() as f64)
    }
}

pub fn corrupt_binary(examples: &[RawExample], rule: &BinaryCorruption) -> Result<Vec<LabeledExample>> {
    examples.iter().map(|e| Ok(LabeledExample { x: e.pixels.clone(), y: rule.label_of(e.label)? })).collect()
}

/// Seeded permutation of `0..n` split into the first `n_train` and the next
/// `n_val` indices.
pub fn split_indices(n: usize, n_train: usize, n_val: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train + n_val > n {
        return Err(Error::Data(format!("cannot split {n} examples into {n_train} + {n_val}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, stream::SPLIT));
    let val = order[n_train..n_train + n_val].to_vec();
    order.truncate(n_train);
    Ok((order, val))
}

/// Seeded subset of `k` indices from `0..n`, in random order.
pub fn subsample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::Data(format!("cannot draw {k} of {n} examples")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed, stream::SUBSAMPLE));
    order.truncate(k);
    Ok(order)
}

/// Which model produces the posteriors behind the confidences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfidenceHead {
    /// The configured network trained with logistic loss.
    Network(Architecture),
    /// Plain logistic regression on the inputs.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceModelConfig {
    pub head: ConfidenceHead,
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub weight_decay: f64,
}

impl ConfidenceModelConfig {
    /// 10 epochs, batch 3000, learning rate 1e-2 on the given network.
    pub fn image_default(arch: Architecture) -> Self {
        ConfidenceModelConfig {
            head: ConfidenceHead::Network(arch),
            epochs: 10,
            batch: 3000,
            lr0: 1e-2,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfidences {
    pub dataset: SconfDataset,
    /// Model posterior of every input, aligned with the input order.
    pub posteriors: Vec<f64>,
}

/// Fits a probabilistic classifier to `labeled`, then returns posteriors
/// (`sigmoid` of the score) for `labeled` and for each set in `extra`.
pub fn fit_posteriors(
    labeled: &[LabeledExample],
    extra: &[&[Vec<f64>]],
    cfg: &ConfidenceModelConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if labeled.is_empty() {
        return Err(Error::Contract("confidence model needs labeled data".into()));
    }
    let d = labeled[0].x.len();
    let arch = match cfg.head {
        ConfidenceHead::Network(a) => a,
        ConfidenceHead::Linear => Architecture::Linear { d },
    };
    let tc = TrainConfig {
        arch,
        risk: RiskSpec::new(EstimatorKind::Supervised, 0.5, LossKind::Logistic)?,
        epochs: cfg.epochs,
        batch: BatchSize::Pairs(cfg.batch),
        optim: AdamConfig { lr0: cfg.lr0, weight_decay: cfg.weight_decay, ..AdamConfig::default() },
        seed,
        eval_every: cfg.epochs.max(1),
    };
    let (p, _) = train_supervised(labeled, &[], &[], &tc)?;
    let posts = |rows: &mut dyn Iterator<Item = &[f64]>| -> Result<Vec<f64>> {
        let x = stack_rows(rows, d)?;
        Ok(p.predict(x.view())?.into_iter().map(sigmoid).collect())
    };
    let own = posts(&mut labeled.iter().map(|e| e.x.as_slice()))?;
    let others = extra.iter().map(|set| posts(&mut set.iter().map(Vec::as_slice))).collect::<Result<Vec<_>>>()?;
    Ok((own, others))
}

/// Trains the confidence model on `labeled`, drops the labels and pairs the
/// inputs with confidences from the model posteriors. An odd trailing
/// example is left out of the pairing.
pub fn posterior_model_confidences(
    labeled: &[LabeledExample],
    cfg: &ConfidenceModelConfig,
    seed: u64,
) -> Result<ModelConfidences> {
    let (posteriors, _) = fit_posteriors(labeled, &[], cfg, seed)?;
    let even = labeled.len() - labeled.len() % 2;
    let points: Vec<Vec<f64>> = labeled[..even].iter().map(|e| e.x.clone()).collect();
    let dataset = pair_with_posteriors(&points, &posteriors[..even], seed, Provenance::Model)?;
    Ok(ModelConfidences { dataset, posteriors })
}
