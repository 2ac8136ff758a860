use clap::Parser;
use trimsgd_cli::{commands, Cli, Command};

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Compare(args) => commands::compare(args),
        Command::Sweep(args) => commands::run_sweep(args),
        Command::Histogram(args) => commands::histogram(args),
        Command::Plot(args) => commands::plot_files(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
