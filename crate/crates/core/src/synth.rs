//! Procedurally generated stand-in datasets.
//!
//! Emits IDX files with the same layout, sizes and label conventions as the
//! real benchmark downloads, so the whole pipeline (loader, training,
//! histograms, experiments) runs and is testable offline.
//!
//! Images are smooth per-class prototype patterns under per-example contrast
//! and pixel noise. The training split is drawn narrowly; the held-out split
//! draws from a broader style distribution — wider contrast, stronger pixel
//! noise, partial morphs toward another class's prototype, and a small tail
//! of deeply confusable examples — the way real benchmark test splits come
//! from different writers and carry their share of barely-recognizable
//! instances. Labels are always the generating class, so models that grow
//! overconfident on the narrow training style pay for it in held-out
//! cross-entropy.
//!
//! Generation is fully deterministic per `(dataset, split)`.

use std::fs;
use std::path::Path;

use crate::data::{DatasetName, Split};
use crate::error::Result;
use crate::rng::Rng;

const SIDE: usize = 28;
const GRID: usize = 7;
const FIXTURE_SEED: u64 = 0x5eed_da7a;

/// Style envelope of one split.
struct StyleParams {
    contrast_lo: f64,
    contrast_hi: f64,
    pixel_noise: f64,
    /// Maximum morph weight toward a second prototype; 0 disables morphing.
    morph_max: f64,
    /// Fraction of examples drawn almost entirely from the other prototype
    /// while keeping the generating label: the stand-in for the mislabeled
    /// and barely-recognizable instances real test sets contain.
    hard_rate: f64,
    hard_lo: f64,
    hard_hi: f64,
}

fn style(split: Split) -> StyleParams {
    match split {
        Split::Train => StyleParams {
            contrast_lo: 0.75,
            contrast_hi: 1.0,
            pixel_noise: 0.10,
            morph_max: 0.0,
            hard_rate: 0.0,
            hard_lo: 0.0,
            hard_hi: 0.0,
        },
        Split::Test => StyleParams {
            contrast_lo: 0.60,
            contrast_hi: 1.0,
            pixel_noise: 0.20,
            morph_max: 0.30,
            hard_rate: 0.05,
            hard_lo: 0.85,
            hard_hi: 1.0,
        },
    }
}

/// Canonical `(train, test)` example counts of the mimicked distribution.
pub fn canonical_sizes(name: DatasetName) -> (usize, usize) {
    match name {
        DatasetName::Mnist | DatasetName::FashionMnist => (60_000, 10_000),
        DatasetName::EmnistLetters => (124_800, 20_800),
    }
}

fn dataset_id(name: DatasetName) -> u64 {
    match name {
        DatasetName::Mnist => 1,
        DatasetName::FashionMnist => 2,
        DatasetName::EmnistLetters => 3,
    }
}

fn stream_id(name: DatasetName, split: Split) -> u64 {
    let s = match split {
        Split::Train => 0u64,
        Split::Test => 1,
    };
    dataset_id(name) * 16 + s
}

/// Smooth prototype in `[0, 1]`: a seeded coarse grid, bilinearly upsampled.
/// Prototypes are shared by both splits of a dataset.
fn prototype(class: usize, name: DatasetName) -> Vec<f64> {
    let mut rng = Rng::from_seed_stream(FIXTURE_SEED, dataset_id(name) * 1000 + class as u64);
    let mut grid = [0.0; GRID * GRID];
    for v in &mut grid {
        *v = rng.range_f64(0.02, 0.98);
    }
    let mut out = vec![0.0; SIDE * SIDE];
    let scale = (GRID - 1) as f64 / (SIDE - 1) as f64;
    for i in 0..SIDE {
        for j in 0..SIDE {
            let u = i as f64 * scale;
            let v = j as f64 * scale;
            let (i0, j0) = (u.floor() as usize, v.floor() as usize);
            let (i1, j1) = ((i0 + 1).min(GRID - 1), (j0 + 1).min(GRID - 1));
            let (du, dv) = (u - i0 as f64, v - j0 as f64);
            let top = grid[i0 * GRID + j0] * (1.0 - dv) + grid[i0 * GRID + j1] * dv;
            let bot = grid[i1 * GRID + j0] * (1.0 - dv) + grid[i1 * GRID + j1] * dv;
            out[i * SIDE + j] = top * (1.0 - du) + bot * du;
        }
    }
    out
}

/// One generated example: pixel bytes and a label in `1..=classes`.
fn generate_example(
    prototypes: &[Vec<f64>],
    classes: usize,
    params: &StyleParams,
    rng: &mut Rng,
    pixels: &mut [u8],
) -> usize {
    let class = rng.below(classes as u64) as usize + 1;
    let (morph_to, morph_weight) = if params.morph_max > 0.0 {
        let mut other = rng.below(classes as u64) as usize + 1;
        if other == class {
            other = class % classes + 1;
        }
        let weight = if rng.next_f64() < params.hard_rate {
            rng.range_f64(params.hard_lo, params.hard_hi)
        } else {
            rng.range_f64(0.0, params.morph_max)
        };
        (other, weight)
    } else {
        (class, 0.0)
    };
    let contrast = rng.range_f64(params.contrast_lo, params.contrast_hi);
    let proto = &prototypes[class - 1];
    let other = &prototypes[morph_to - 1];
    for (idx, px) in pixels.iter_mut().enumerate() {
        let base = (1.0 - morph_weight) * proto[idx] + morph_weight * other[idx];
        let v = contrast * base + rng.range_f64(-params.pixel_noise, params.pixel_noise);
        *px = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    class
}

fn idx_image_header(n: usize) -> [u8; 16] {
    let mut h = [0u8; 16];
    h[..4].copy_from_slice(&0x0000_0803u32.to_be_bytes());
    h[4..8].copy_from_slice(&(n as u32).to_be_bytes());
    h[8..12].copy_from_slice(&(SIDE as u32).to_be_bytes());
    h[12..16].copy_from_slice(&(SIDE as u32).to_be_bytes());
    h
}

fn idx_label_header(n: usize) -> [u8; 8] {
    let mut h = [0u8; 8];
    h[..4].copy_from_slice(&0x0000_0801u32.to_be_bytes());
    h[4..8].copy_from_slice(&(n as u32).to_be_bytes());
    h
}

/// Writes one split as a pair of raw IDX files under
/// `<root>/<dataset-dir>/`.
pub fn write_split(root: &Path, name: DatasetName, split: Split, n: usize) -> Result<()> {
    let classes = name.num_classes();
    let prototypes: Vec<Vec<f64>> = (1..=classes).map(|c| prototype(c, name)).collect();
    let params = style(split);
    let mut rng = Rng::from_seed_stream(FIXTURE_SEED, stream_id(name, split));

    let mut images = Vec::with_capacity(16 + n * SIDE * SIDE);
    images.extend_from_slice(&idx_image_header(n));
    let mut labels = Vec::with_capacity(8 + n);
    labels.extend_from_slice(&idx_label_header(n));

    // Native byte convention: 0-based for the MNIST-style sets, 1-based for
    // EMNIST-Letters (mirrors the real files).
    let byte_shift = match name {
        DatasetName::EmnistLetters => 0,
        _ => 1,
    };
    let mut pixels = vec![0u8; SIDE * SIDE];
    for _ in 0..n {
        let label = generate_example(&prototypes, classes, &params, &mut rng, &mut pixels);
        images.extend_from_slice(&pixels);
        labels.push((label - byte_shift) as u8);
    }

    let dir = root.join(name.dir_name());
    fs::create_dir_all(&dir)?;
    let (image_stem, label_stem) = name.file_stems(split);
    fs::write(dir.join(image_stem), images)?;
    fs::write(dir.join(label_stem), labels)?;
    Ok(())
}

/// Writes both splits of a dataset at its canonical sizes, skipping files
/// that already exist.
pub fn ensure_fixture(root: &Path, name: DatasetName) -> Result<()> {
    let (train_n, test_n) = canonical_sizes(name);
    for (split, n) in [(Split::Train, train_n), (Split::Test, test_n)] {
        let dir = root.join(name.dir_name());
        let (image_stem, label_stem) = name.file_stems(split);
        if dir.join(&image_stem).exists() && dir.join(&label_stem).exists() {
            continue;
        }
        write_split(root, name, split, n)?;
    }
    Ok(())
}
