//! Subcommand implementations.

use std::fs;
use std::path::Path;

use trimsgd::harness::{
    experiment_metadata, load_experiment_data, run_experiment, sweep, train_trial,
    write_metadata_json, write_results_csv, write_sweep_csv, AggregateResult, ExperimentConfig,
    LoadedData,
};
use trimsgd::model::Model;
use trimsgd::optimize::{OptimizerKind, ScheduleKind};
use trimsgd::regularize::{loss_histogram, write_histogram_csv};
use trimsgd::rng::Rng;

use crate::config::{load_config, FileConfig};
use crate::plot::{emit_plot, write_histogram_svg, PlotStyle};
use crate::{CliError, HistogramArgs, PlotArgs, RunArgs};

/// Stream id for the histogram's single noise draw.
const STREAM_HISTOGRAM: u64 = 4;

fn prepare(args: &RunArgs) -> Result<(FileConfig, LoadedData), CliError> {
    let mut overrides = args.set.clone();
    if let Some(trials) = args.trials {
        overrides.push(format!("trials={trials}"));
    }
    if let Some(seed) = args.seed {
        overrides.push(format!("base_seed={seed}"));
    }
    let file = load_config(&args.config, &overrides)?;
    let config = file.experiment();
    config.validate()?;
    let data = load_experiment_data(&args.data_dir, config.dataset)?;
    fs::create_dir_all(&args.out)?;
    Ok((file, data))
}

fn report_aggregate(label: &str, agg: &AggregateResult) {
    println!(
        "{label}: mean test loss {:.4} (x{} scale), min test loss {:.4}, last-epoch acc {:.4}",
        agg.mean_test_loss,
        agg.loss_scale,
        agg.min_test_loss,
        agg.mean_acc_curve.last().copied().unwrap_or(f64::NAN)
    );
}

fn run_and_write(
    config: &ExperimentConfig,
    data: &LoadedData,
    jobs: usize,
    out: &Path,
    prefix: &str,
) -> Result<AggregateResult, CliError> {
    let (results, agg) = run_experiment(config, data, jobs)?;
    write_results_csv(&results, &out.join(format!("{prefix}results.csv")))?;
    let meta = experiment_metadata(&results, &agg);
    write_metadata_json(&meta, &out.join(format!("{prefix}metadata.json")))?;
    Ok(agg)
}

pub fn train(args: &RunArgs) -> Result<(), CliError> {
    let (file, data) = prepare(args)?;
    let config = file.experiment();
    let agg = run_and_write(&config, &data, args.jobs, &args.out, "")?;
    report_aggregate("experiment", &agg);

    let series = vec![
        ("train loss".to_string(), agg.mean_train_curve.clone()),
        ("test loss".to_string(), agg.mean_test_curve.clone()),
    ];
    emit_plot(
        &series,
        &PlotStyle {
            log_y: false,
            y_label: "loss".into(),
        },
        &args.out.join("curves.svg"),
    )?;
    println!("wrote {}", args.out.join("results.csv").display());
    Ok(())
}

/// The four comparison arms: plain SGD, RMSprop and Adam without noise or
/// trimming (adaptive methods run a constant learning rate), and the
/// noised/trimmed run from the config.
pub fn compare(args: &RunArgs) -> Result<(), CliError> {
    let (file, data) = prepare(args)?;
    let base = file.experiment();

    let mut arms: Vec<(&str, ExperimentConfig)> = Vec::new();
    let mut sgd = base.clone();
    sgd.optimizer = OptimizerKind::Sgd;
    sgd.rho = 0.0;
    sgd.eps = 0.0;
    arms.push(("sgd", sgd));
    for (name, kind) in [("rmsprop", OptimizerKind::RmsProp), ("adam", OptimizerKind::Adam)] {
        let mut arm = base.clone();
        arm.optimizer = kind;
        arm.rho = 0.0;
        arm.eps = 0.0;
        arm.lr_schedule = ScheduleKind::Constant;
        arm.eta0 = file.adaptive_eta0();
        arms.push((name, arm));
    }
    let mut ours = base.clone();
    ours.optimizer = OptimizerKind::Sgd;
    arms.push(("ours", ours));

    let mut summary = String::from("method,mean_test_loss,min_test_loss\n");
    let mut curves = Vec::new();
    for (name, config) in &arms {
        let agg = run_and_write(config, &data, args.jobs, &args.out, &format!("{name}-"))?;
        report_aggregate(name, &agg);
        summary.push_str(&format!(
            "{name},{},{}\n",
            agg.mean_test_loss, agg.min_test_loss
        ));
        curves.push((name.to_string(), agg.mean_test_curve.clone()));
    }
    fs::write(args.out.join("comparison.csv"), summary)?;
    emit_plot(
        &curves,
        &PlotStyle {
            log_y: false,
            y_label: "test loss".into(),
        },
        &args.out.join("compare.svg"),
    )?;
    println!("wrote {}", args.out.join("comparison.csv").display());
    Ok(())
}

pub fn run_sweep(args: &RunArgs) -> Result<(), CliError> {
    let (file, data) = prepare(args)?;
    let template = file.experiment();
    let cells = sweep(
        &template,
        &file.rho_grid(),
        &file.eps_grid(),
        &data,
        args.jobs,
    )?;
    for cell in &cells {
        println!(
            "rho={:.3} eps={:.3}: mean test loss {:.4}, min {:.4}",
            cell.rho, cell.eps, cell.aggregate.mean_test_loss, cell.aggregate.min_test_loss
        );
    }
    write_sweep_csv(&cells, &args.out.join("sweep.csv"))?;

    let meta = serde_json::json!({
        "config": file,
        "rho_grid": file.rho_grid(),
        "eps_grid": file.eps_grid(),
    });
    fs::write(
        args.out.join("sweep-metadata.json"),
        serde_json::to_string_pretty(&meta).expect("serializable"),
    )?;

    // one curve per eps value: mean test loss over the rho grid
    let rho_grid = file.rho_grid();
    let mut curves = Vec::new();
    for (j, &eps) in file.eps_grid().iter().enumerate() {
        let values: Vec<f64> = rho_grid
            .iter()
            .enumerate()
            .map(|(i, _)| cells[i * file.eps_grid().len() + j].aggregate.mean_test_loss)
            .collect();
        curves.push((format!("eps={eps}"), values));
    }
    emit_plot(
        &curves,
        &PlotStyle {
            log_y: false,
            y_label: "mean test loss".into(),
        },
        &args.out.join("sweep.svg"),
    )?;
    println!("wrote {}", args.out.join("sweep.csv").display());
    Ok(())
}

pub fn histogram(args: &HistogramArgs) -> Result<(), CliError> {
    let (file, data) = prepare(&args.run)?;
    let config = file.experiment();

    let model = match &args.checkpoint {
        Some(path) => Model::load_checkpoint(path)?,
        None => {
            println!("training a model for the histogram ({} epochs)", config.epochs);
            let (model, _) = train_trial(&config, 0, &data)?;
            let ckpt = args.run.out.join("histogram-model.tgm");
            model.save_checkpoint(&ckpt)?;
            println!("saved checkpoint {}", ckpt.display());
            model
        }
    };

    let view = trimsgd::harness::training_view(&config, &data)?;
    let mut rng = Rng::from_seed_stream(config.base_seed, STREAM_HISTOGRAM);
    let hist = loss_histogram(&model, &view, config.rho, args.bins, &mut rng)?;

    write_histogram_csv(&hist, &args.run.out.join("histogram.csv"))?;
    write_histogram_svg(&hist, &args.run.out.join("histogram.svg"))?;
    println!(
        "histogram over {} examples at rho={}, {} bins; wrote {}",
        view.len(),
        config.rho,
        args.bins,
        args.run.out.join("histogram.csv").display()
    );
    Ok(())
}

/// Mean of `column` per epoch across trials, from one results CSV.
fn csv_epoch_means(path: &Path, column: &str) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Usage(format!("{} is empty", path.display())))?;
    let col = header
        .split(',')
        .position(|c| c == column)
        .ok_or_else(|| CliError::Usage(format!("no column `{column}` in {}", path.display())))?;
    let epoch_col = header
        .split(',')
        .position(|c| c == "epoch")
        .ok_or_else(|| CliError::Usage(format!("no epoch column in {}", path.display())))?;

    let mut sums: Vec<(f64, usize)> = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let epoch: usize = cells[epoch_col]
            .parse()
            .map_err(|_| CliError::Usage(format!("bad epoch value in {}", path.display())))?;
        let value: f64 = cells[col]
            .parse()
            .map_err(|_| CliError::Usage(format!("bad {column} value in {}", path.display())))?;
        if sums.len() < epoch {
            sums.resize(epoch, (0.0, 0));
        }
        sums[epoch - 1].0 += value;
        sums[epoch - 1].1 += 1;
    }
    Ok(sums.iter().map(|(s, n)| s / (*n).max(1) as f64).collect())
}

pub fn plot_files(args: &PlotArgs) -> Result<(), CliError> {
    let mut series = Vec::new();
    for input in &args.inputs {
        let name = input
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| input.display().to_string());
        series.push((name, csv_epoch_means(input, &args.column)?));
    }
    fs::create_dir_all(&args.out)?;
    let path = args.out.join("plot.svg");
    emit_plot(
        &series,
        &PlotStyle {
            log_y: args.log_y,
            y_label: args.column.replace('_', " "),
        },
        &path,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

