//! Scratch probe for timing and dynamics (temporary).

use std::time::Instant;

use trimsgd::data::DatasetName;
use trimsgd::harness::{
    load_experiment_data, run_experiment, train_trial, ExperimentConfig, LoadedData,
};
use trimsgd::model::Arch;
use trimsgd::optimize::{OptimizerKind, ScheduleKind};
use trimsgd::regularize::{loss_histogram, TrimSchedule};
use trimsgd::rng::Rng;
use trimsgd::synth::ensure_fixture;

fn base_config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetName::Mnist,
        arch: Arch::Nn2,
        optimizer: OptimizerKind::Sgd,
        eta0: 0.01,
        lr_schedule: ScheduleKind::Sigmoid,
        batch_size: 128,
        epochs: 40,
        momentum: 0.9,
        weight_decay: 0.0,
        rho: 0.0,
        eps: 0.0,
        trim_schedule: TrimSchedule::Linear,
        trials: 3,
        base_seed: 0,
        train_subset: Some(10_000),
    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "speed".into());
    let root = std::path::PathBuf::from("/tmp/trimsgd-fixtures");
    let t0 = Instant::now();
    ensure_fixture(&root, DatasetName::Mnist).unwrap();
    println!("fixture gen/check: {:.1}s", t0.elapsed().as_secs_f64());

    let t0 = Instant::now();
    let data = load_experiment_data(&root, DatasetName::Mnist).unwrap();
    println!(
        "load: {:.1}s ({} train / {} test)",
        t0.elapsed().as_secs_f64(),
        data.train.len(),
        data.test.len()
    );

    match mode.as_str() {
        "speed" => speed(&data),
        "fig1" => fig1(&data),
        "table" => table(&data),
        other => panic!("unknown mode {other}"),
    }
}

fn speed(data: &LoadedData) {
    let mut config = base_config();
    config.epochs = 2;
    config.trials = 1;
    let t0 = Instant::now();
    let (_, result) = train_trial(&config, 0, data).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "2 epochs (train+eval): {:.1}s -> {:.2}s/epoch; acc after 2: {:.3}",
        dt,
        dt / 2.0,
        result.test_acc[1]
    );
}

fn fig1(data: &LoadedData) {
    let mut config = base_config();
    config.epochs = 20;
    config.lr_schedule = ScheduleKind::Constant;
    config.momentum = 0.0;
    config.trials = 1;
    let t0 = Instant::now();
    let (model, result) = train_trial(&config, 0, data).unwrap();
    println!(
        "train 20 epochs: {:.0}s, final train loss {:.4}, test acc {:.3}",
        t0.elapsed().as_secs_f64(),
        result.train_loss[19],
        result.test_acc[19]
    );
    let view = trimsgd::harness::training_view(&config, data).unwrap();
    let orig = trimsgd::regularize::dataset_losses(&model, &view, &view.labels).unwrap();
    let noised_labels =
        trimsgd::regularize::inject_label_noise(&view.labels, 0.1, 10, &mut Rng::from_seed(77))
            .unwrap();
    let noised = trimsgd::regularize::dataset_losses(&model, &view, &noised_labels.labels).unwrap();
    let max_orig = orig.iter().cloned().fold(0.0, f64::max);
    let max_noised = noised.iter().cloned().fold(0.0, f64::max);
    println!(
        "max orig {max_orig:.3}, max noised {max_noised:.3}, ratio {:.2}",
        max_noised / max_orig
    );
    let mut rng = Rng::from_seed(5);
    let hist = loss_histogram(&model, &view, 0.1, 100, &mut rng).unwrap();
    println!(
        "histogram sums: {} / {}",
        hist.counts_original.iter().sum::<u64>(),
        hist.counts_noised.iter().sum::<u64>()
    );
}

fn table(data: &LoadedData) {
    let baseline = base_config();
    let mut ours = base_config();
    ours.rho = 0.10;
    ours.eps = 0.20;

    let t0 = Instant::now();
    let (_, agg_base) = run_experiment(&baseline, data, 3).unwrap();
    println!(
        "baseline: mean {:.3} min {:.3} ({:.0}s)",
        agg_base.mean_test_loss,
        agg_base.min_test_loss,
        t0.elapsed().as_secs_f64()
    );
    let t0 = Instant::now();
    let (_, agg_ours) = run_experiment(&ours, data, 3).unwrap();
    println!(
        "ours:     mean {:.3} min {:.3} ({:.0}s)",
        agg_ours.mean_test_loss,
        agg_ours.min_test_loss,
        t0.elapsed().as_secs_f64()
    );
    println!(
        "ratio ours/baseline = {:.4}",
        agg_ours.mean_test_loss / agg_base.mean_test_loss
    );
}
