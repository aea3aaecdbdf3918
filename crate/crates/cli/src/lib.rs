// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Command-line front end: configuration, result files and figures.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "qsens",
    version,
    about = "Sensitivity analysis and robustness certificates for quantum gate controls"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML); defaults reproduce the three-spin case study.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides `seed` in the config).
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Error threshold ε [default: 0.01].
    #[arg(long, global = true, value_name = "F", allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Step size d of the iterative worst-case margin [default: 1e-4].
    #[arg(
        long = "alg1-step",
        global = true,
        value_name = "F",
        allow_negative_numbers = true
    )]
    pub alg1_step: Option<f64>,
    /// Output directory [default: results].
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize controllers and write controller files plus a manifest.
    Synthesize,
    /// Sensitivities ζ, bounds B1/B2/B3 and worst-case directions.
    Analyze(ControllerArgs),
    /// Analytic and iterative perturbation margins.
    Certify(ControllerArgs),
    /// Perturbed error and sensitivity over a δ grid.
    Sweep(ControllerArgs),
    /// Render SVG figures from the result CSVs.
    Plot,
    /// Run synthesize, analyze, certify, sweep and plot in sequence.
    CaseStudy,
}

#[derive(Debug, Args)]
pub struct ControllerArgs {
    /// Directory holding manifest.csv [default: <out>/controllers].
    #[arg(long, value_name = "DIR")]
    pub controllers: Option<PathBuf>,
}

/// Applies command-line overrides to a loaded (or default) config.
pub fn resolve_config(common: &CommonArgs) -> CliResult<(ExperimentConfig, PathBuf)> {
    let (mut config, path) = match &common.config {
        Some(p) => (ExperimentConfig::load(p)?, p.clone()),
        None => (ExperimentConfig::default(), PathBuf::from("<defaults>")),
    };
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(e) = common.epsilon {
        config.analysis.epsilon = e;
    }
    if let Some(d) = common.alg1_step {
        config.analysis.alg1_step = d;
    }
    if let Some(o) = &common.out {
        config.output.dir = o.clone();
    }
    config.validate(&path)?;
    Ok((config, path))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.common.jobs {
        if n == 0 {
            return Err(CliError::config(
                std::path::Path::new("--jobs"),
                "must be ≥ 1",
            ));
        }
        if let Err(e) = qsens_core::parallel::set_threads(n) {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let (config, path) = resolve_config(&cli.common)?;
    if let Command::Plot = cli.command {
        commands::plot(&config.output.dir)?;
        return Ok(());
    }
    let ctx = Context::new(config, path)?;
    io::create_dir(ctx.out_dir())?;
    match &cli.command {
        Command::Synthesize => {
            commands::synthesize(&ctx)?;
        }
        Command::Analyze(a) => {
            commands::analyze(&ctx, a.controllers.as_deref())?;
        }
        Command::Certify(a) => {
            commands::certify(&ctx, a.controllers.as_deref())?;
        }
        Command::Sweep(a) => {
            commands::sweep(&ctx, a.controllers.as_deref())?;
        }
        Command::CaseStudy => {
            print!("{}", commands::case_study(&ctx)?);
        }
        Command::Plot => unreachable!(),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_and_override() {
        let cli = Cli::try_parse_from([
            "qsens",
            "certify",
            "--seed",
            "5",
            "--epsilon",
            "0.02",
            "--alg1-step",
            "1e-3",
            "--out",
            "/tmp/x",
            "--jobs",
            "2",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Certify(_)));
        let (cfg, _) = resolve_config(&cli.common).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.analysis.epsilon, 0.02);
        assert_eq!(cfg.analysis.alg1_step, 1e-3);
        assert_eq!(cfg.output.dir, PathBuf::from("/tmp/x"));
    }

    #[test]
    fn defaults_match_documentation() {
        let cli = Cli::try_parse_from(["qsens", "analyze"]).unwrap();
        let (cfg, _) = resolve_config(&cli.common).unwrap();
        assert_eq!(cfg.analysis.epsilon, 0.01);
        assert_eq!(cfg.analysis.alg1_step, 1e-4);
    }

    #[test]
    fn invalid_override_is_config_error() {
        let cli = Cli::try_parse_from(["qsens", "analyze", "--epsilon", "-1"]).unwrap();
        assert_eq!(resolve_config(&cli.common).unwrap_err().exit_code(), 2);
    }
}
