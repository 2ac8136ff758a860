//! IDX-format dataset loading, normalization, and seeded mini-batching.
//!
//! Labels are kept as `1..=L` internally: MNIST and Fashion-MNIST bytes
//! (`0..=9`) are shifted by one at parse time, EMNIST-Letters already uses
//! `1..=26` natively. Pixels are normalized to `[0, 1]` by a plain division
//! by 255 with no centering.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use crate::array::RealArray;
use crate::error::{Error, Result};
use crate::rng::seeded_permutation;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetName {
    Mnist,
    FashionMnist,
    EmnistLetters,
}

impl DatasetName {
    pub fn num_classes(self) -> usize {
        match self {
            DatasetName::Mnist | DatasetName::FashionMnist => 10,
            DatasetName::EmnistLetters => 26,
        }
    }

    /// Reported losses for MNIST are scaled by 100, the others by 10.
    pub fn loss_scale(self) -> f64 {
        match self {
            DatasetName::Mnist => 100.0,
            _ => 10.0,
        }
    }

    /// Directory name under the data root.
    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::FashionMnist => "fashion-mnist",
            DatasetName::EmnistLetters => "emnist-letters",
        }
    }

    /// `(images, labels)` file stems for a split, without the optional
    /// `.gz` suffix.
    pub fn file_stems(self, split: Split) -> (String, String) {
        match self {
            DatasetName::Mnist | DatasetName::FashionMnist => {
                let prefix = match split {
                    Split::Train => "train",
                    Split::Test => "t10k",
                };
                (
                    format!("{prefix}-images-idx3-ubyte"),
                    format!("{prefix}-labels-idx1-ubyte"),
                )
            }
            DatasetName::EmnistLetters => {
                let prefix = match split {
                    Split::Train => "emnist-letters-train",
                    Split::Test => "emnist-letters-test",
                };
                (
                    format!("{prefix}-images-idx3-ubyte"),
                    format!("{prefix}-labels-idx1-ubyte"),
                )
            }
        }
    }

    /// Native label bytes below 1 (MNIST-style `0..=9`) are shifted up by
    /// one; EMNIST-Letters is already 1-based.
    fn label_shift(self) -> usize {
        match self {
            DatasetName::Mnist | DatasetName::FashionMnist => 1,
            DatasetName::EmnistLetters => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// An immutable loaded dataset split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: DatasetName,
    pub split: Split,
    /// `[n, 1, 28, 28]` pixels in `[0, 1]`.
    pub images: RealArray,
    /// Class ids in `1..=num_classes`.
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub loss_scale: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copies example `i` into a row of `dst` starting at `row * 784`.
    fn copy_example(&self, i: usize, dst: &mut [f64], row: usize) {
        let pixels = 28 * 28;
        dst[row * pixels..(row + 1) * pixels]
            .copy_from_slice(&self.images.data()[i * pixels..(i + 1) * pixels]);
    }

    /// A new dataset containing `indices` in order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let pixels = 28 * 28;
        let mut data = vec![0.0; indices.len() * pixels];
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            self.copy_example(i, &mut data, row);
            labels.push(self.labels[i]);
        }
        Dataset {
            name: self.name,
            split: self.split,
            images: RealArray::from_vec(vec![indices.len(), 1, 28, 28], data)
                .expect("consistent subset shape"),
            labels,
            num_classes: self.num_classes,
            loss_scale: self.loss_scale,
        }
    }

    /// Materializes the batch holding `indices`.
    pub fn gather(&self, indices: &[usize]) -> MiniBatch {
        let pixels = 28 * 28;
        let mut data = vec![0.0; indices.len() * pixels];
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            self.copy_example(i, &mut data, row);
            labels.push(self.labels[i]);
        }
        MiniBatch {
            indices: indices.to_vec(),
            inputs: RealArray::from_vec(vec![indices.len(), 1, 28, 28], data)
                .expect("consistent batch shape"),
            labels,
        }
    }
}

/// One mini-batch: dataset positions, inputs `[B, 1, 28, 28]`, labels `[B]`.
/// The last batch of an epoch may be smaller than the configured size.
#[derive(Debug, Clone)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
    pub inputs: RealArray,
    pub labels: Vec<usize>,
}

impl MiniBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// The example order for one epoch: a permutation of `0..n` fully determined
/// by `(seed, epoch)`.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub seed: u64,
    pub epoch: usize,
    pub permutation: Vec<usize>,
}

impl BatchPlan {
    pub fn new(n: usize, seed: u64, epoch: usize) -> BatchPlan {
        BatchPlan {
            seed,
            epoch,
            permutation: seeded_permutation(n, seed, epoch as u64),
        }
    }
}

/// Parses an IDX container: big-endian magic, big-endian 32-bit dimension
/// sizes, then unsigned byte payload.
pub fn parse_idx(bytes: &[u8]) -> Result<(Vec<usize>, Vec<u8>)> {
    if bytes.len() < 4 {
        return Err(Error::Length {
            expected: 4,
            actual: bytes.len(),
        });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().expect("4 bytes"));
    let ndims = match magic {
        LABEL_MAGIC => 1,
        IMAGE_MAGIC => 3,
        _ => return Err(Error::Format { magic }),
    };
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Length {
            expected: header,
            actual: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(ndims);
    for i in 0..ndims {
        let off = 4 + 4 * i;
        dims.push(u32::from_be_bytes(bytes[off..off + 4].try_into().expect("4 bytes")) as usize);
    }
    let expected: usize = dims.iter().product();
    let payload = &bytes[header..];
    if payload.len() != expected {
        return Err(Error::Length {
            expected,
            actual: payload.len(),
        });
    }
    Ok((dims, payload.to_vec()))
}

/// `value / 255` exactly, no mean centering.
pub fn normalize(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&b| b as f64 / 255.0).collect()
}

/// Splits one epoch into consecutive chunks of `batch_size` under a fresh
/// permutation; the final short chunk is retained.
pub fn make_batches(
    dataset: &Dataset,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<MiniBatch>> {
    if batch_size < 2 {
        return Err(Error::Config(format!(
            "batch_size must be at least 2, got {batch_size}"
        )));
    }
    let plan = BatchPlan::new(dataset.len(), seed, epoch);
    Ok(plan
        .permutation
        .chunks(batch_size)
        .map(|chunk| dataset.gather(chunk))
        .collect())
}

/// Reads a file, transparently inflating gzip content (magic `1f 8b`).
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("neither {} nor {}.gz exists", plain.display(), stem),
    )))
}

/// Loads one dataset split from `<data_root>/<dataset>/`, accepting plain or
/// gzip-compressed IDX files.
pub fn load_dataset(data_root: &Path, name: DatasetName, split: Split) -> Result<Dataset> {
    let dir = data_root.join(name.dir_name());
    let (image_stem, label_stem) = name.file_stems(split);
    let image_bytes = read_maybe_gzip(&find_file(&dir, &image_stem)?)?;
    let label_bytes = read_maybe_gzip(&find_file(&dir, &label_stem)?)?;

    let (image_dims, image_payload) = parse_idx(&image_bytes)?;
    let (label_dims, label_payload) = parse_idx(&label_bytes)?;
    if image_dims.len() != 3 || image_dims[1] != 28 || image_dims[2] != 28 {
        return Err(Error::Input(format!(
            "expected n x 28 x 28 images, got dims {image_dims:?}"
        )));
    }
    if label_dims[0] != image_dims[0] {
        return Err(Error::Length {
            expected: image_dims[0],
            actual: label_dims[0],
        });
    }

    let n = image_dims[0];
    let images = RealArray::from_vec(vec![n, 1, 28, 28], normalize(&image_payload))?;
    let num_classes = name.num_classes();
    let shift = name.label_shift();
    let mut labels = Vec::with_capacity(n);
    for (i, &b) in label_payload.iter().enumerate() {
        let label = b as usize + shift;
        if label < 1 || label > num_classes {
            return Err(Error::Label {
                index: i,
                label,
                classes: num_classes,
            });
        }
        labels.push(label);
    }

    Ok(Dataset {
        name,
        split,
        images,
        labels,
        num_classes,
        loss_scale: name.loss_scale(),
    })
}
