//! Command-line front end.

use crate::analyze::{self, AnalysisKind, AnalyzeOptions};
use crate::config::ScenarioConfig;
use crate::error::{exit, HarnessResult};
use crate::output::Summary;
use crate::presets;
use crate::scenario::{run_scenario, RunOptions};
use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "PROSCAN_OUTPUT_ROOT";
const DEFAULT_OUTPUT_ROOT: &str = "proscan-output";

#[derive(Debug, Parser)]
#[command(name = "proscan", version, about = "Digital twin of a press-and-roll near-field positioning device")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a scenario described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Run a bundled preset.
    Reproduce {
        preset: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
    },
    /// Re-run one analysis on saved or external data.
    Analyze {
        #[arg(value_enum)]
        kind: AnalysisKind,
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Report directory (defaults to `<output root>/analyze-<kind>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monitor wavelength for fringe counting (nm).
        #[arg(long, default_value_t = 532.0)]
        wavelength: f64,
        /// Minimum fringe prominence for fsr-gap and fringe-count.
        #[arg(long, default_value_t = proscan_core::interferometry::DEFAULT_MIN_PROMINENCE)]
        min_prominence: f64,
    },
    /// Print the bundled preset names.
    ListPresets,
}

fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

/// Output directory precedence: `--out`, then the config's `output_dir`, then
/// `<root>/<name>`.
fn resolve_out(flag: Option<PathBuf>, config: Option<&Path>, name: &str) -> PathBuf {
    flag.or_else(|| config.map(Path::to_path_buf)).unwrap_or_else(|| output_root().join(name))
}

fn print_summary(out: &mut impl Write, dir: &Path, summary: &Summary) {
    let _ = writeln!(out, "output: {}", dir.display());
    for (k, v) in summary {
        let _ = writeln!(out, "  {k}: {v}");
    }
}

fn run_config(config: ScenarioConfig, out: PathBuf, plots: bool) -> HarnessResult<()> {
    let outcome = run_scenario(&config, &RunOptions { out_dir: out, plots })?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    print_summary(&mut std::io::stdout().lock(), &outcome.dir, &outcome.summary);
    Ok(())
}

pub fn execute(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Cmd::Run { config, seed, out, no_plots } => {
            let mut config = ScenarioConfig::load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let out = resolve_out(out, config.output_dir.as_deref(), config.scenario_kind.name());
            run_config(config, out, !no_plots)
        }
        Cmd::Reproduce { preset, out, no_plots } => {
            let config = presets::load(&preset)?;
            let out = resolve_out(out, None, &preset);
            run_config(config, out, !no_plots)
        }
        Cmd::Analyze { kind, files, out, wavelength, min_prominence } => {
            let out = resolve_out(out, None, &format!("analyze-{}", kind.name()));
            let opts = AnalyzeOptions { out_dir: out.clone(), wavelength, min_prominence };
            let summary = analyze::run(kind, &files, &opts)?;
            print_summary(&mut std::io::stdout().lock(), &out, &summary);
            Ok(())
        }
        Cmd::ListPresets => {
            let mut stdout = std::io::stdout().lock();
            for name in presets::names() {
                let _ = writeln!(stdout, "{name}");
            }
            Ok(())
        }
    }
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

