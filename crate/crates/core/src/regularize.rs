//! Label-noise injection and loss-rank example trimming.
//!
//! These two operators are the heart of the method: labels are re-drawn
//! uniformly with probability `rho` freshly at every iteration, and the
//! `floor(eps * B / 2)` lowest- and highest-loss examples of the batch are
//! dropped before the gradient step, which keeps the surviving loss mass
//! centered on the batch median. A linear schedule ramps the trim ratio with
//! training progress.

use std::cell::Cell;
use std::io::Write;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::nn::{softmax_cross_entropy, PerExampleLoss};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimSchedule {
    Constant,
    Linear,
}

/// Noise probability, trim ratio, and trim schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimNoiseConfig {
    pub rho: f64,
    pub eps: f64,
    pub schedule: TrimSchedule,
}

impl TrimNoiseConfig {
    pub fn new(rho: f64, eps: f64, schedule: TrimSchedule) -> Result<TrimNoiseConfig> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Config(format!("rho must be in [0, 1], got {rho}")));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Config(format!("eps must be in [0, 1), got {eps}")));
        }
        Ok(TrimNoiseConfig { rho, eps, schedule })
    }
}

/// Labels after one noise draw, with the redrawn positions marked. Where
/// `flipped` is false the label equals the original; a redrawn label may
/// still coincide with the original since the uniform draw includes it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisedLabels {
    pub labels: Vec<usize>,
    pub flipped: Vec<bool>,
}

/// Replaces each label independently with probability `rho` by a uniform
/// draw over `1..=classes` (the true class included).
///
/// RNG discipline: one coin per example in batch order, and one class draw
/// consumed only when the coin flips, so replay is exact for any `rho`.
pub fn inject_label_noise(
    labels: &[usize],
    rho: f64,
    classes: usize,
    rng: &mut Rng,
) -> Result<NoisedLabels> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho must be in [0, 1], got {rho}")));
    }
    let mut out = Vec::with_capacity(labels.len());
    let mut flipped = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        if label < 1 || label > classes {
            return Err(Error::Label {
                index: i,
                label,
                classes,
            });
        }
        let flip = rng.next_f64() < rho;
        if flip {
            out.push(rng.below(classes as u64) as usize + 1);
        } else {
            out.push(label);
        }
        flipped.push(flip);
    }
    Ok(NoisedLabels {
        labels: out,
        flipped,
    })
}

/// The batch positions kept and removed by one trim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrimResult {
    /// Kept batch positions, ascending.
    pub kept: Vec<usize>,
    /// Positions removed for lowest loss, ascending.
    pub removed_low: Vec<usize>,
    /// Positions removed for highest loss, ascending.
    pub removed_high: Vec<usize>,
    pub k_per_side: usize,
}

thread_local! {
    static TRIM_COMPARISONS: Cell<u64> = const { Cell::new(0) };
}

/// Comparisons performed by [`trim_batch`] ranking since the last reset.
/// Exposed for the complexity assertion in the test suite.
pub fn trim_comparison_count() -> u64 {
    TRIM_COMPARISONS.with(|c| c.get())
}

pub fn reset_trim_comparison_count() {
    TRIM_COMPARISONS.with(|c| c.set(0));
}

/// Ranks examples by ascending loss (stable, so ties resolve by batch
/// position) and removes the `floor(eps_effective * B / 2)` lowest and
/// highest. The kept count is always at least 1.
pub fn trim_batch(losses: &PerExampleLoss, eps_effective: f64) -> Result<TrimResult> {
    let b = losses.len();
    if b == 0 {
        return Err(Error::Input("cannot trim an empty batch".into()));
    }
    if !(0.0..1.0).contains(&eps_effective) {
        return Err(Error::Config(format!(
            "effective trim ratio must be in [0, 1), got {eps_effective}"
        )));
    }
    let mut k = (eps_effective * b as f64 / 2.0).floor() as usize;
    if 2 * k >= b {
        // degenerate guard; unreachable for eps < 1 but kept per contract
        k = (b - 1) / 2;
    }

    let values = losses.values();
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&a, &bi| {
        TRIM_COMPARISONS.with(|c| c.set(c.get() + 1));
        values[a].total_cmp(&values[bi])
    });

    let mut removed_low = order[..k].to_vec();
    let mut removed_high = order[b - k..].to_vec();
    let mut kept = order[k..b - k].to_vec();
    removed_low.sort_unstable();
    removed_high.sort_unstable();
    kept.sort_unstable();
    Ok(TrimResult {
        kept,
        removed_low,
        removed_high,
        k_per_side: k,
    })
}

/// The trim ratio in force at training progress `theta` (completed
/// iterations over total iterations): `eps` for the constant schedule,
/// `theta * eps` for the linear one.
pub fn effective_trim_ratio(config: &TrimNoiseConfig, theta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Clock(format!("theta must be in [0, 1], got {theta}")));
    }
    Ok(match config.schedule {
        TrimSchedule::Constant => config.eps,
        TrimSchedule::Linear => theta * config.eps,
    })
}

/// Per-example cross-entropy of `model` over the whole dataset under the
/// given labels, in dataset order.
pub fn dataset_losses(model: &Model, dataset: &Dataset, labels: &[usize]) -> Result<Vec<f64>> {
    const CHUNK: usize = 512;
    if labels.len() != dataset.len() {
        return Err(Error::Dimension {
            op: "dataset_losses",
            lhs: format!("{} examples", dataset.len()),
            rhs: format!("{} labels", labels.len()),
        });
    }
    let mut losses = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let batch = dataset.gather(chunk);
        let logits = model.forward(&batch.inputs)?;
        let chunk_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
        let (loss, _) = softmax_cross_entropy(&logits, &chunk_labels)?;
        losses.extend_from_slice(loss.values());
    }
    Ok(losses)
}

/// Frequencies of per-example loss under original and noised labels, on
/// shared log-spaced bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LossHistogram {
    /// `bins + 1` ascending edges.
    pub bin_edges: Vec<f64>,
    pub counts_original: Vec<u64>,
    pub counts_noised: Vec<u64>,
}

/// Histograms dataset losses twice: once under the original labels and once
/// under a single noise draw at `rho`. Edges are log-spaced over
/// `[min positive loss, max loss]` across both series.
pub fn loss_histogram(
    model: &Model,
    dataset: &Dataset,
    rho: f64,
    bins: usize,
    rng: &mut Rng,
) -> Result<LossHistogram> {
    if bins < 10 {
        return Err(Error::Config(format!("need at least 10 bins, got {bins}")));
    }
    let original = dataset_losses(model, dataset, &dataset.labels)?;
    let noised_labels = inject_label_noise(&dataset.labels, rho, dataset.num_classes, rng)?;
    let noised = dataset_losses(model, dataset, &noised_labels.labels)?;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in original.iter().chain(&noised) {
        if v > 0.0 && v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    if !lo.is_finite() || hi <= 0.0 {
        return Err(Error::DegenerateRange(
            "all losses are zero; nothing to bin".into(),
        ));
    }

    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    let span = ln_hi - ln_lo;
    let bin_edges: Vec<f64> = (0..=bins)
        .map(|i| (ln_lo + span * i as f64 / bins as f64).exp())
        .collect();
    let bin_of = |v: f64| -> usize {
        if v <= lo || span <= 0.0 {
            return 0;
        }
        let idx = ((v.ln() - ln_lo) / span * bins as f64).floor() as usize;
        idx.min(bins - 1)
    };

    let mut counts_original = vec![0u64; bins];
    let mut counts_noised = vec![0u64; bins];
    for &v in &original {
        counts_original[bin_of(v)] += 1;
    }
    for &v in &noised {
        counts_noised[bin_of(v)] += 1;
    }
    Ok(LossHistogram {
        bin_edges,
        counts_original,
        counts_noised,
    })
}

/// CSV export: `bin_lo,bin_hi,count_original,count_noised`, one row per bin.
pub fn write_histogram_csv(hist: &LossHistogram, path: &Path) -> Result<()> {
    let mut out = String::from("bin_lo,bin_hi,count_original,count_noised\n");
    for i in 0..hist.counts_original.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            hist.bin_edges[i],
            hist.bin_edges[i + 1],
            hist.counts_original[i],
            hist.counts_noised[i]
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
