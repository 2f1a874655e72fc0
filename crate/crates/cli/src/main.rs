//! `savif` command-line driver.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, PRESETS};

/// Environment variable that overrides the output directory.
const OUTPUT_ENV: &str = "SAVIF_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "savif",
    version,
    about = "Energy-preserving SAV integrating-factor solvers for the 2D nonlinear Schrödinger equation with wave operator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory, writing diagnostics and a final checkpoint.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Continue from checkpoint.csv in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Error against step size on the manufactured solution.
    SweepTemporal(Common),
    /// Error against grid size on the manufactured solution.
    SweepSpatial(Common),
    /// Relative energy error along one unforced trajectory.
    Energy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resume: bool,
    },
    /// Resolve and validate a configuration, then print it as TOML.
    ValidateConfig(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file, layered over the preset if both are given.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides `io.output_dir`.
    #[arg(long, value_name = "DIR", env = OUTPUT_ENV)]
    output: Option<PathBuf>,
    #[arg(long, value_name = "NAME", value_parser = PRESETS)]
    preset: Option<String>,
    /// Set a dotted config key, e.g. `problem.N=64` (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self, kind: Option<&str>) -> Result<RunConfig> {
        if self.config.is_none() && self.preset.is_none() {
            bail!("give --config PATH or --preset NAME");
        }
        let text = match &self.config {
            Some(p) => Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?),
            None => None,
        };
        let mut overrides = self.overrides.clone();
        if let Some(kind) = kind {
            overrides.push(format!("experiment.kind=\"{kind}\""));
        }
        if let Some(out) = &self.output {
            let s = out.to_str().context("output path is not valid UTF-8")?;
            overrides.push(format!("io.output_dir={}", toml::Value::String(s.into())));
        }
        config::resolve(self.preset.as_deref(), text.as_deref(), &overrides)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, kind, resume) = match &cli.command {
        Command::Simulate { common, resume } => (common, Some("simulate"), *resume),
        Command::SweepTemporal(c) => (c, Some("temporal_sweep"), false),
        Command::SweepSpatial(c) => (c, Some("spatial_sweep"), false),
        Command::Energy { common, resume } => (common, Some("energy"), *resume),
        Command::ValidateConfig(c) => (c, None, false),
    };
    let cfg = match common.resolve(kind) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if kind.is_none() {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }

    let out = PathBuf::from(&cfg.io.output_dir);
    let outcome = run::execute(&cfg, &out, resume);
    if let Err(e) = run::write_manifest(&out, &cfg, &outcome) {
        eprintln!("error: cannot write {}: {e:#}", out.join(run::MANIFEST).display());
        return ExitCode::FAILURE;
    }
    match outcome {
        Ok(_) => {
            eprintln!("wrote {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            if let Some(p) = &e.snapshot {
                eprintln!("last good state: {}", p.display());
            }
            ExitCode::FAILURE
        }
    }
}
