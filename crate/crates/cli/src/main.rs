mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{builder::PossibleValuesParser, Parser, Subcommand, ValueEnum};
use lcsc::verify::Suite;

/// Train, evaluate and inspect linear-compressing skip-connection
/// super-resolution networks.
#[derive(Parser, Debug)]
#[command(name = "lcsc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network from a run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// `section.key=value`, applied in order after the file is read.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print epoch records as JSON lines instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// PSNR/SSIM of a checkpoint and of bicubic upscaling over a folder of images.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to `$LCSC_DATA_ROOT/val`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Score against the original image or against its bicubic reconstruction.
        #[arg(long, value_enum, default_value_t = Reference::Hr)]
        against: Reference,
        /// Border pixels ignored by the metrics; the scale factor by default.
        #[arg(long)]
        shave: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Super-resolve one image.
    Sr {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail unless the checkpoint upscales by this factor.
        #[arg(long)]
        scale: Option<usize>,
    },
    /// Parameter and multiply-accumulate totals of a configuration or checkpoint.
    Count {
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Output resolution for multiply-accumulates, `WIDTHxHEIGHT`.
        #[arg(long, default_value = "1280x720", value_parser = parse_size)]
        hr: (usize, usize),
        #[arg(long)]
        no_bias: bool,
        #[arg(long)]
        json: bool,
    },
    /// Run verification suites.
    Verify {
        #[arg(value_parser = suite_names())]
        suite: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Reference {
    Hr,
    Bicubic,
}

fn suite_names() -> PossibleValuesParser {
    let mut names: Vec<&'static str> = Suite::ALL.iter().map(|s| s.name()).collect();
    names.push("all");
    PossibleValuesParser::new(names)
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WIDTHxHEIGHT")?;
    let w: usize = w.parse().map_err(|_| format!("bad width '{w}'"))?;
    let h: usize = h.parse().map_err(|_| format!("bad height '{h}'"))?;
    if w == 0 || h == 0 {
        return Err("sizes must be positive".into());
    }
    Ok((w, h))
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    Verification(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<lcsc::Error> for CliError {
    fn from(e: lcsc::Error) -> Self {
        if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            overrides,
            seed,
            out,
            json,
        } => commands::train(&config, &overrides, seed, out, json),
        Command::Eval {
            checkpoint,
            data,
            against,
            shave,
            json,
        } => commands::eval(&checkpoint, data, against, shave, json),
        Command::Sr {
            checkpoint,
            input,
            out,
            scale,
        } => commands::sr(&checkpoint, &input, &out, scale),
        Command::Count {
            config,
            checkpoint,
            overrides,
            hr,
            no_bias,
            json,
        } => commands::count(config.as_deref(), checkpoint.as_deref(), &overrides, hr, !no_bias, json),
        Command::Verify { suite, json } => commands::verify(&suite, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
