use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use expedition::report::summary_line;
use expedition::{emit_report, load_config, run_experiment, ExpeditionError, Format, Mode, RunOptions};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Iterate,
    Maximize,
    Fit,
    Sweep,
    Emerge,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Iterate => Mode::Iterate,
            ModeArg::Maximize => Mode::Maximize,
            ModeArg::Fit => Mode::Fit,
            ModeArg::Sweep => Mode::Sweep,
            ModeArg::Emerge => Mode::Emerge,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Seeded experiments on self-referential relational networks.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// Experiment to run; must agree with `mode` in the config file.
    mode: ModeArg,
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate sweep points sequentially.
    #[arg(long)]
    serial: bool,
}

fn run(cli: Cli) -> Result<(), ExpeditionError> {
    let mut config = load_config(&cli.config)?;
    let mode = Mode::from(cli.mode);
    if config.mode != mode {
        return Err(ExpeditionError::Input {
            stage: "config",
            message: format!("command line asks for `{mode}` but the config says `mode = {}`", config.mode),
        });
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let report = run_experiment(&config, RunOptions { serial: cli.serial })?;
    let format = match cli.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let dir = cli.out.unwrap_or_else(|| config.out.clone());
    let written = emit_report(&report, format, &dir)?;
    println!("{}", summary_line(&report));
    for path in written {
        println!("wrote {}", path.display());
    }
    eprintln!("finished in {:.3?}", report.duration);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
