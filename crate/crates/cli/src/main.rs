use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rwre_cli::config::ExperimentConfig;
use rwre_cli::plot::{emit_plot, PlotSpec};
use rwre_cli::{early_failure, execute, prepare};

/// Random walks in random environment: exact quantities, simulations, rate
/// functions and Bessel-ratio checks. Every run writes CSV tables and a JSON
/// manifest to the output directory.
#[derive(Parser)]
#[command(name = "rwre", version, about, allow_negative_numbers = true)]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ExperimentConfig,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Environments and good-environment events.
    #[command(subcommand)]
    Env(EnvCmd),
    /// Exact quenched quantities.
    #[command(subcommand)]
    Exact(ExactCmd),
    /// Monte Carlo experiments.
    #[command(subcommand)]
    Mc(McCmd),
    /// Rate functions.
    #[command(subcommand)]
    Rate(RateCmd),
    /// Inequality checks.
    #[command(subcommand)]
    Verify(VerifyCmd),
    /// SVG line plot of a CSV table.
    Plot(PlotArgs),
    /// Run the command named in the config file.
    Run,
}

#[derive(Subcommand)]
enum EnvCmd {
    /// Sample omega on [lo, hi] with its potential.
    Sample,
    /// Derived constants and event flags for sampled candidates.
    CheckGood,
}

#[derive(Subcommand)]
enum ExactCmd {
    HitProb,
    ExitTime,
    Laplace,
}

#[derive(Subcommand)]
enum McCmd {
    /// Simulated hitting probabilities and exit times against exact values.
    Tau,
    /// Valley lemmas on a rejection-sampled good environment.
    Lemmas,
    /// Growth of the damped first-passage moment.
    Prop12,
    /// Spread of the rescaled position.
    Sinai,
}

#[derive(Subcommand)]
enum RateCmd {
    /// Annealed cumulant function, curvature criterion, rate function.
    Discrete,
    /// Diffusion rate functions against the drifted Brownian benchmark.
    Continuous,
}

#[derive(Subcommand)]
enum VerifyCmd {
    /// Bessel-ratio bounds on a log grid.
    Bessel,
}

#[derive(Args)]
struct PlotArgs {
    /// Input CSV written by this tool.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long = "x-col")]
    x_col: String,
    /// One or more y columns.
    #[arg(long = "y-col", value_delimiter = ',', required = true)]
    y_col: Vec<String>,
    #[arg(long)]
    log_x: bool,
    #[arg(long)]
    log_y: bool,
    #[arg(long)]
    title: Option<String>,
    /// SVG output path.
    #[arg(long = "svg")]
    svg: PathBuf,
}

fn command_name(cmd: &Cmd) -> Option<&'static str> {
    Some(match cmd {
        Cmd::Env(EnvCmd::Sample) => "env sample",
        Cmd::Env(EnvCmd::CheckGood) => "env check-good",
        Cmd::Exact(ExactCmd::HitProb) => "exact hit-prob",
        Cmd::Exact(ExactCmd::ExitTime) => "exact exit-time",
        Cmd::Exact(ExactCmd::Laplace) => "exact laplace",
        Cmd::Mc(McCmd::Tau) => "mc tau",
        Cmd::Mc(McCmd::Lemmas) => "mc lemmas",
        Cmd::Mc(McCmd::Prop12) => "mc prop12",
        Cmd::Mc(McCmd::Sinai) => "mc sinai",
        Cmd::Rate(RateCmd::Discrete) => "rate discrete",
        Cmd::Rate(RateCmd::Continuous) => "rate continuous",
        Cmd::Verify(VerifyCmd::Bessel) => "verify bessel",
        Cmd::Plot(_) | Cmd::Run => return None,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Cmd::Plot(p) = &cli.cmd {
        let spec = PlotSpec {
            x: p.x_col.clone(),
            y: p.y_col.clone(),
            log_x: p.log_x,
            log_y: p.log_y,
            title: p.title.clone(),
        };
        return match emit_plot(&p.csv, &spec, &p.svg) {
            Ok(()) => {
                println!("wrote {}", p.svg.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        };
    }
    let name = command_name(&cli.cmd);
    let prepared = match prepare(name, cli.config.as_deref(), &cli.params) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(early_failure(name.unwrap_or("run"), &cli.params, &e) as u8);
        }
    };
    let (manifest, code) = execute(&prepared);
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    match &manifest.failure {
        Some(f) => eprintln!("error [{} {}]: {}", f.module, f.kind, f.message),
        None => {
            for f in &manifest.files {
                println!("wrote {} ({} rows)", f.path, f.rows);
            }
        }
    }
    ExitCode::from(code as u8)
}
