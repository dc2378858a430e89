//! `holgen`: run embeddings, diagnostics and topology checks from a JSON config.

mod commands;
mod config;
mod output;

use clap::{Parser, ValueEnum};
use commands::Ctx;
use config::Objects;
use output::{Out, Provenance, REPORT_SCHEMA};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Wrap a core error raised while building the named object.
    pub fn object(name: &str, e: holgen::Error) -> Self {
        let msg = format!("object `{name}`: {e}");
        if e.is_numeric() {
            CliError::Numeric(msg)
        } else {
            CliError::Config(msg)
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<holgen::Error> for CliError {
    fn from(e: holgen::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Embed,
    Product,
    Derive,
    Norm,
    Laurent,
    Nulltest,
    Pointvalue,
    Associate,
    Sharp,
    Psi,
    Chain,
    Hull,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    Standard,
    Extended,
}

#[derive(Parser, Debug)]
#[command(name = "holgen", version, about)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every sampled grid (overrides `seed` in the config)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Sampling budget (overrides `grid.budget`)
    #[arg(long)]
    budget: Option<usize>,
}

fn run(cli: &Cli) -> Result<Option<String>, CliError> {
    let loaded = config::load(&cli.config)?;
    let mut cfg = loaded.config;
    if let Some(b) = cli.budget {
        cfg.grid.budget = b;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(p) = cli.precision {
        cfg.precision = match p {
            PrecisionArg::Standard => holgen::Precision::Standard,
            PrecisionArg::Extended => holgen::Precision::Extended,
        };
    }
    cfg.validate()?;
    let name = format!("{:?}", cli.command).to_lowercase();
    let prov = Provenance {
        schema: REPORT_SCHEMA,
        command: name.clone(),
        config: loaded.name,
        config_sha256: output::sha256_hex(&loaded.raw),
        seed: cfg.seed,
        precision: cfg.precision,
        grid: cfg.grid.clone(),
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    let out_dir = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("holgen-out"));
    let mut out = Out::new(&out_dir)?;
    let mut ctx = Ctx {
        cfg: &cfg,
        objs: Objects::new(&cfg, &loaded.dir),
        seed: cfg.seed,
        budget: cfg.grid.budget,
        precision: cfg.precision,
    };
    let verdict = match cli.command {
        Command::Embed => commands::embed(&mut ctx, &mut out, &prov),
        Command::Product => commands::product(&mut ctx, &mut out, &prov),
        Command::Derive => commands::derive(&mut ctx, &mut out, &prov),
        Command::Norm => commands::norm(&mut ctx, &mut out, &prov),
        Command::Laurent => commands::laurent_cmd(&mut ctx, &mut out, &prov),
        Command::Nulltest => commands::nulltest(&mut ctx, &mut out, &prov),
        Command::Pointvalue => commands::pointvalue_cmd(&mut ctx, &mut out, &prov),
        Command::Associate => commands::associate_cmd(&mut ctx, &mut out, &prov),
        Command::Sharp => commands::sharp(&mut ctx, &mut out, &prov),
        Command::Psi => commands::psi(&mut ctx, &mut out, &prov),
        Command::Chain => commands::chain(&mut ctx, &mut out, &prov),
        Command::Hull => commands::hull_cmd(&mut ctx, &mut out, &prov),
    }?;
    let files = out.finish(&name)?;
    println!("{name}: wrote {} to {}", files.join(", "), out_dir.display());
    Ok(verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(reason)) => {
            eprintln!("verdict negative: {reason}");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("holgen: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
