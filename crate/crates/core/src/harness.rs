//! Seeded multi-trial experiments and their aggregation.
//!
//! A trial trains one model for a fixed number of epochs, evaluating the
//! full test set (clean labels) and the training view (original, un-noised
//! labels) after every epoch. Noise and trimming touch only the gradient
//! path, never the reported losses.
//!
//! Seeding: trial `k` uses `base_seed + k`; within a trial, weight init,
//! batch permutations, and label noise draw from independent streams of the
//! trial seed (stream ids 1, 2, 3), so any single trial can be re-run in
//! isolation.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::data::{load_dataset, make_batches, Dataset, DatasetName, Split};
use crate::error::{Error, Result};
use crate::model::{Arch, InputShape, Model};
use crate::nn::softmax_cross_entropy;
use crate::optimize::{
    trimsgd_train_step, LrSchedule, OptimizerKind, OptimizerState, ScheduleKind, TrainClock,
};
use crate::regularize::{TrimNoiseConfig, TrimSchedule};
use crate::rng::{derive_seed, seeded_permutation, Rng};

const STREAM_INIT: u64 = 1;
const STREAM_DATA: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// Everything a run needs. Also the on-disk JSON schema used by the CLI.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    pub arch: Arch,
    pub optimizer: OptimizerKind,
    pub eta0: f64,
    pub lr_schedule: ScheduleKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub rho: f64,
    pub eps: f64,
    pub trim_schedule: TrimSchedule,
    pub trials: usize,
    pub base_seed: u64,
    /// Desk-scale mode: train on the first `n` examples of the seed-0
    /// shuffle of the training set. `None` trains on everything.
    #[serde(default)]
    pub train_subset: Option<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.eta0 <= 0.0 {
            return Err(Error::Config("eta0 must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must be in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if let Some(n) = self.train_subset {
            if n == 0 {
                return Err(Error::Config("train_subset must be positive".into()));
            }
        }
        self.trim_noise()?;
        Ok(())
    }

    pub fn trim_noise(&self) -> Result<TrimNoiseConfig> {
        TrimNoiseConfig::new(self.rho, self.eps, self.trim_schedule)
    }

    pub fn trial_seed(&self, trial_index: usize) -> u64 {
        self.base_seed.wrapping_add(trial_index as u64)
    }

    fn schedule(&self) -> LrSchedule {
        match self.lr_schedule {
            ScheduleKind::Constant => LrSchedule::constant(self.eta0),
            ScheduleKind::Sigmoid => LrSchedule::sigmoid(self.eta0),
        }
    }

    fn input_shape(&self) -> InputShape {
        match self.arch {
            Arch::LeNet => InputShape::Image {
                channels: 1,
                height: 28,
                width: 28,
            },
            _ => InputShape::Flat(28 * 28),
        }
    }
}

/// Train and test splits of one dataset.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Loads both splits from `<data_root>/<dataset>/`.
pub fn load_experiment_data(data_root: &Path, name: DatasetName) -> Result<LoadedData> {
    Ok(LoadedData {
        train: load_dataset(data_root, name, Split::Train)?,
        test: load_dataset(data_root, name, Split::Test)?,
    })
}

/// Per-epoch trajectories of one trial.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub seed: u64,
    /// Mean training loss under original labels, one value per epoch.
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
    pub test_acc: Vec<f64>,
    /// Learning rate at the last step of each epoch.
    pub lr: Vec<f64>,
    /// Size of the training view actually optimized over.
    pub train_examples: usize,
    pub full_train_examples: usize,
    pub test_examples: usize,
    /// Wall time; informational only, never written to replayable outputs.
    #[serde(skip)]
    pub wall_time_secs: f64,
    pub config: ExperimentConfig,
}

/// Mean loss over the dataset and top-1 accuracy, evaluated in fixed chunks
/// with ascending-index accumulation.
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<(f64, f64)> {
    const CHUNK: usize = 512;
    let n = dataset.len();
    let classes = dataset.num_classes;
    let indices: Vec<usize> = (0..n).collect();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(CHUNK) {
        let batch = dataset.gather(chunk);
        let logits = model.forward(&batch.inputs)?;
        let (losses, _) = softmax_cross_entropy(&logits, &batch.labels)?;
        for &v in losses.values() {
            loss_sum += v;
        }
        for (row, &label) in logits.data().chunks_exact(classes).zip(&batch.labels) {
            let mut best = 0usize;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            if best + 1 == label {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

/// The training view for a config: either the whole set or the first
/// `train_subset` examples of its seed-0 shuffle (shared by all trials).
pub fn training_view(config: &ExperimentConfig, data: &LoadedData) -> Result<Dataset> {
    match config.train_subset {
        None => Ok(data.train.clone()),
        Some(n) => {
            if n > data.train.len() {
                return Err(Error::Config(format!(
                    "train_subset {n} exceeds the {} available examples",
                    data.train.len()
                )));
            }
            let perm = seeded_permutation(data.train.len(), 0, 0);
            Ok(data.train.subset(&perm[..n]))
        }
    }
}

/// Trains one trial and keeps the final model.
pub fn train_trial(
    config: &ExperimentConfig,
    trial_index: usize,
    data: &LoadedData,
) -> Result<(Model, TrialResult)> {
    config.validate()?;
    let started = Instant::now();
    let trial_seed = config.trial_seed(trial_index);
    let train_view = training_view(config, data)?;
    let trim_noise = config.trim_noise()?;
    let schedule = config.schedule();

    let mut model = Model::build(
        config.arch,
        config.input_shape(),
        data.train.num_classes,
        derive_seed(trial_seed, STREAM_INIT),
    )?;
    let mut opt = OptimizerState::new(
        config.optimizer,
        model.param_count(),
        config.momentum,
        config.weight_decay,
    );
    let data_seed = derive_seed(trial_seed, STREAM_DATA);
    let mut noise_rng = Rng::from_seed_stream(trial_seed, STREAM_NOISE);

    let batches_per_epoch = train_view.len().div_ceil(config.batch_size);
    let mut clock = TrainClock::new(config.epochs * batches_per_epoch)?;

    let mut result = TrialResult {
        trial_index,
        seed: trial_seed,
        train_loss: Vec::with_capacity(config.epochs),
        test_loss: Vec::with_capacity(config.epochs),
        test_acc: Vec::with_capacity(config.epochs),
        lr: Vec::with_capacity(config.epochs),
        train_examples: train_view.len(),
        full_train_examples: data.train.len(),
        test_examples: data.test.len(),
        wall_time_secs: 0.0,
        config: config.clone(),
    };

    for epoch in 0..config.epochs {
        clock.epoch = epoch;
        let mut last_lr = f64::NAN;
        for batch in make_batches(&train_view, config.batch_size, data_seed, epoch)? {
            let report = trimsgd_train_step(
                &mut model,
                &batch,
                &trim_noise,
                &mut opt,
                &schedule,
                &clock,
                &mut noise_rng,
            )?;
            clock.advance();
            last_lr = report.lr;
            if !report.trimmed_mean_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    lr: report.lr,
                });
            }
        }

        let (train_loss, _) = evaluate(&model, &train_view)?;
        let (test_loss, test_acc) = evaluate(&model, &data.test)?;
        if !train_loss.is_finite() || !test_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                lr: last_lr,
            });
        }
        result.train_loss.push(train_loss);
        result.test_loss.push(test_loss);
        result.test_acc.push(test_acc);
        result.lr.push(last_lr);
    }

    result.wall_time_secs = started.elapsed().as_secs_f64();
    Ok((model, result))
}

/// Trains one trial, discarding the model.
pub fn run_trial(
    config: &ExperimentConfig,
    trial_index: usize,
    data: &LoadedData,
) -> Result<TrialResult> {
    train_trial(config, trial_index, data).map(|(_, r)| r)
}

/// Cross-trial summary. `mean_test_loss` averages the final tenth of the
/// epochs over all trials; `min_test_loss` is the minimum anywhere. Both are
/// multiplied by the dataset's loss scale.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AggregateResult {
    pub mean_test_loss: f64,
    pub min_test_loss: f64,
    pub mean_train_curve: Vec<f64>,
    pub mean_test_curve: Vec<f64>,
    pub mean_acc_curve: Vec<f64>,
    pub window_epochs: usize,
    pub loss_scale: f64,
    pub config: ExperimentConfig,
}

/// Mean that is invariant to input order: values are summed smallest-first.
fn symmetric_mean(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

pub fn aggregate(results: &[TrialResult], loss_scale: f64) -> Result<AggregateResult> {
    let first = results
        .first()
        .ok_or_else(|| Error::Aggregation("no trial results".into()))?;
    for r in results {
        if r.config != first.config {
            return Err(Error::Aggregation(format!(
                "trial {} ran a different configuration",
                r.trial_index
            )));
        }
    }
    let epochs = first.config.epochs;
    let window = epochs.div_ceil(10);

    let window_values: Vec<f64> = results
        .iter()
        .flat_map(|r| r.test_loss[epochs - window..].iter().copied())
        .collect();
    let mean_test_loss = loss_scale * symmetric_mean(&window_values);
    let min_test_loss = loss_scale
        * results
            .iter()
            .flat_map(|r| r.test_loss.iter().copied())
            .fold(f64::INFINITY, f64::min);

    let curve = |select: fn(&TrialResult) -> &Vec<f64>| -> Vec<f64> {
        (0..epochs)
            .map(|e| {
                let vals: Vec<f64> = results.iter().map(|r| select(r)[e]).collect();
                symmetric_mean(&vals)
            })
            .collect()
    };

    Ok(AggregateResult {
        mean_test_loss,
        min_test_loss,
        mean_train_curve: curve(|r| &r.train_loss),
        mean_test_curve: curve(|r| &r.test_loss),
        mean_acc_curve: curve(|r| &r.test_acc),
        window_epochs: window,
        loss_scale,
        config: first.config.clone(),
    })
}

/// Runs all trials of a config (in parallel when `jobs > 1`; trial order in
/// the output is fixed either way) and aggregates them.
pub fn run_experiment(
    config: &ExperimentConfig,
    data: &LoadedData,
    jobs: usize,
) -> Result<(Vec<TrialResult>, AggregateResult)> {
    config.validate()?;
    let indices: Vec<usize> = (0..config.trials).collect();
    let results: Vec<Result<TrialResult>> = if jobs <= 1 {
        indices.iter().map(|&i| run_trial(config, i, data)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            indices
                .par_iter()
                .map(|&i| run_trial(config, i, data))
                .collect()
        })
    };
    let mut trials = Vec::with_capacity(results.len());
    for r in results {
        trials.push(r?);
    }
    let agg = aggregate(&trials, data.train.loss_scale)?;
    Ok((trials, agg))
}

/// One cell of a noise/trim sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepCell {
    pub rho: f64,
    pub eps: f64,
    pub aggregate: AggregateResult,
}

/// Cartesian product of `rho_values` x `eps_values` (rho outer, eps inner),
/// every cell run with the template's base seed.
pub fn sweep(
    template: &ExperimentConfig,
    rho_values: &[f64],
    eps_values: &[f64],
    data: &LoadedData,
    jobs: usize,
) -> Result<Vec<SweepCell>> {
    if rho_values.is_empty() || eps_values.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    let mut cells = Vec::with_capacity(rho_values.len() * eps_values.len());
    for &rho in rho_values {
        for &eps in eps_values {
            let mut config = template.clone();
            config.rho = rho;
            config.eps = eps;
            let (_, agg) = run_experiment(&config, data, jobs)?;
            cells.push(SweepCell {
                rho,
                eps,
                aggregate: agg,
            });
        }
    }
    Ok(cells)
}

/// Results CSV: one row per `(trial, epoch)`, columns
/// `trial,epoch,train_loss,test_loss,test_acc,lr`. Epochs are 1-based.
/// Floats use shortest round-trip formatting, so the file replays exactly.
pub fn results_csv(results: &[TrialResult]) -> String {
    let mut out = String::from("trial,epoch,train_loss,test_loss,test_acc,lr\n");
    for r in results {
        for e in 0..r.train_loss.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.trial_index,
                e + 1,
                r.train_loss[e],
                r.test_loss[e],
                r.test_acc[e],
                r.lr[e]
            ));
        }
    }
    out
}

pub fn write_results_csv(results: &[TrialResult], path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(results_csv(results).as_bytes())?;
    Ok(())
}

/// Sweep CSV: `rho,eps,mean_test_loss,min_test_loss`, row-major in the grid
/// order.
pub fn write_sweep_csv(cells: &[SweepCell], path: &Path) -> Result<()> {
    let mut out = String::from("rho,eps,mean_test_loss,min_test_loss\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{}\n",
            c.rho, c.eps, c.aggregate.mean_test_loss, c.aggregate.min_test_loss
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// The JSON sidecar written next to a results CSV: config echo, derived
/// seeds, actual dataset sizes, and the aggregate metrics. Deterministic for
/// a fixed config and data (no timestamps).
#[derive(Debug, Clone, serde::Serialize)]
pub struct ExperimentMetadata {
    pub config: ExperimentConfig,
    pub trial_seeds: Vec<u64>,
    pub train_examples: usize,
    pub full_train_examples: usize,
    pub test_examples: usize,
    pub loss_scale: f64,
    pub window_epochs: usize,
    pub mean_test_loss: f64,
    pub min_test_loss: f64,
}

pub fn experiment_metadata(results: &[TrialResult], agg: &AggregateResult) -> ExperimentMetadata {
    ExperimentMetadata {
        config: agg.config.clone(),
        trial_seeds: results.iter().map(|r| r.seed).collect(),
        train_examples: results.first().map_or(0, |r| r.train_examples),
        full_train_examples: results.first().map_or(0, |r| r.full_train_examples),
        test_examples: results.first().map_or(0, |r| r.test_examples),
        loss_scale: agg.loss_scale,
        window_epochs: agg.window_epochs,
        mean_test_loss: agg.mean_test_loss,
        min_test_loss: agg.min_test_loss,
    }
}

pub fn write_metadata_json(metadata: &ExperimentMetadata, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(metadata)?;
    std::fs::write(path, text)?;
    Ok(())
}
