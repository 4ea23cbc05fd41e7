//! Experiment orchestration for `rwre`: config handling, CSV tables, run
//! manifests and SVG plots.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use rwre_core::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rwre_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => match e.class() {
                ErrorClass::Validation => 2,
                ErrorClass::Convergence => 3,
            },
            CliError::Config(_) | CliError::Plot(_) => 2,
            CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }

    pub fn module(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.module(),
            CliError::Config(_) => "cli_report::config",
            CliError::Plot(_) => "cli_report::plot",
            CliError::Io(_) | CliError::Csv(_) => "cli_report::output",
        }
    }

    /// Variant name of the wrapped module error, e.g. `EpsPrimeTooLarge`.
    pub fn kind(&self) -> String {
        let dbg = match self {
            CliError::Core(e) => match e {
                rwre_core::Error::Env(e) => format!("{e:?}"),
                rwre_core::Error::Chain(e) => format!("{e:?}"),
                rwre_core::Error::Sim(e) => format!("{e:?}"),
                rwre_core::Error::Rate(e) => format!("{e:?}"),
                rwre_core::Error::Special(e) => format!("{e:?}"),
            },
            other => format!("{other:?}"),
        };
        innermost_variant(&dbg)
    }
}

/// `Env(EpsPrimeTooLarge { .. })` -> `EpsPrimeTooLarge`.
fn innermost_variant(dbg: &str) -> String {
    let mut rest = dbg;
    loop {
        let end = rest
            .find(|c: char| !c.is_alphanumeric() && c != '_')
            .unwrap_or(rest.len());
        let (name, tail) = rest.split_at(end);
        match tail.strip_prefix('(') {
            Some(inner) if inner.starts_with(|c: char| c.is_ascii_uppercase()) => rest = inner,
            _ => return name.to_string(),
        }
    }
}

macro_rules! core_from {
    ($($t:ty),*) => {
        $( impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        } )*
    };
}

core_from!(
    rwre_core::env_model::EnvError,
    rwre_core::chain_exact::ChainError,
    rwre_core::mc_sim::SimError,
    rwre_core::rate_discrete::RateError,
    rwre_core::special_cont::SpecialError
);

use std::path::PathBuf;
use std::time::Instant;

use config::ExperimentConfig;
use output::{write_manifest, write_tables, Failure, RunManifest};

/// Resolved configuration of one run, after file/flag merging.
pub struct Prepared {
    pub command: String,
    pub config: ExperimentConfig,
    pub seed_generated: bool,
}

/// Merges the optional config file with flags, fixes the thread count and
/// draws a seed for randomized commands that lack one.
pub fn prepare(
    command: Option<&str>,
    file: Option<&std::path::Path>,
    flags: &ExperimentConfig,
) -> Result<Prepared, CliError> {
    let base = match file {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut config = base.overlay(flags);
    let command = match command {
        Some(c) => c.to_string(),
        None => config
            .command
            .clone()
            .ok_or_else(|| CliError::Config("config file names no `command`".into()))?,
    };
    if !commands::COMMANDS.contains(&command.as_str()) {
        return Err(CliError::Config(format!("unknown command {command:?}")));
    }
    config.command = Some(command.clone());
    config.resolve_threads(flags.threads);
    let mut seed_generated = false;
    if config.seed.is_none() && commands::is_randomized(&command) {
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        config.seed = Some(rwre_core::rng::mix64(nanos));
        seed_generated = true;
    }
    Ok(Prepared {
        command,
        config,
        seed_generated,
    })
}

fn failure(e: &CliError) -> Failure {
    Failure {
        module: e.module().to_string(),
        kind: e.kind(),
        exit_code: e.exit_code(),
        message: e.to_string(),
    }
}

/// Runs a prepared command, writes its tables and manifest, and returns the
/// manifest with the process exit code.
pub fn execute(p: &Prepared) -> (RunManifest, i32) {
    let started = chrono::Utc::now();
    let t0 = Instant::now();
    let out = p.config.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let result = commands::run(&p.command, &p.config)
        .and_then(|o| write_tables(&out, &o.tables).map(|files| (files, o.warnings)));
    let (files, warnings, fail) = match result {
        Ok((f, w)) => (f, w, None),
        Err(e) => (Vec::new(), Vec::new(), Some(e)),
    };
    let code = fail.as_ref().map_or(0, CliError::exit_code);
    let mut manifest = RunManifest {
        tool: "rwre",
        version: env!("CARGO_PKG_VERSION"),
        schema_version: output::SCHEMA_VERSION,
        command: p.command.clone(),
        config: p.config.clone(),
        seed: p.config.seed,
        seed_generated: p.seed_generated,
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        wall_time_secs: t0.elapsed().as_secs_f64(),
        status: if fail.is_none() { "ok" } else { "error" },
        failure: fail.as_ref().map(failure),
        files,
        warnings,
    };
    if let Err(e) = write_manifest(&out, &manifest) {
        manifest.status = "error";
        manifest.failure = Some(failure(&e));
        return (manifest, e.exit_code().max(1));
    }
    (manifest, code)
}

/// Manifest for a run that failed before its configuration was resolved.
pub fn early_failure(command: &str, flags: &ExperimentConfig, e: &CliError) -> i32 {
    let now = chrono::Utc::now().to_rfc3339();
    let m = RunManifest {
        tool: "rwre",
        version: env!("CARGO_PKG_VERSION"),
        schema_version: output::SCHEMA_VERSION,
        command: command.to_string(),
        config: flags.clone(),
        seed: flags.seed,
        seed_generated: false,
        started: now.clone(),
        finished: now,
        wall_time_secs: 0.0,
        status: "error",
        failure: Some(failure(e)),
        files: Vec::new(),
        warnings: Vec::new(),
    };
    let out = flags.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let _ = write_manifest(&out, &m);
    e.exit_code()
}
