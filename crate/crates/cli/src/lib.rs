//! Command-line runner for the averaging and imitation experiments.

pub mod bundle;
pub mod check;
pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod presets;
pub mod report;
pub mod tables;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use experiments::Outcome;

use error::{EXIT_ASSERTION, EXIT_PASS};

/// A written bundle and the outcome it was built from.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub outcome: Outcome,
}

/// Runs one experiment and writes its bundle under `root`.
pub fn run(config: &ExperimentConfig, root: &Path) -> CliResult<RunOutput> {
    let outcome = experiments::execute(config)?;
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    files.insert("config.toml".into(), config.to_toml()?.into_bytes());
    for (name, t) in &outcome.tables {
        files.insert(name.clone(), t.to_csv()?);
    }
    for (name, svg) in &outcome.plots {
        files.insert(name.clone(), svg.clone().into_bytes());
    }
    let summary = json!({
        "kind": config.experiment.kind(),
        "seed": config.seed,
        "passed": outcome.passed(),
        "checks": outcome.checks,
        "results": outcome.results,
    });
    let mut text = serde_json::to_vec_pretty(&summary)?;
    text.push(b'\n');
    files.insert("summary.json".into(), text);
    let dir = bundle::write_bundle(root, &config.bundle_dir(), &files)?;
    Ok(RunOutput { dir, outcome })
}

/// A config file path, or the name of a shipped preset.
pub fn load_config(arg: &str) -> CliResult<ExperimentConfig> {
    let p = Path::new(arg);
    if !p.exists() {
        if let Some(text) = presets::preset(arg) {
            return ExperimentConfig::parse(text);
        }
    }
    ExperimentConfig::load(p)
}

#[derive(Debug, Parser)]
#[command(name = "gva", about = "Iterate-averaging experiments: run, plot, report, verify")]
struct Cli {
    /// Directory that receives result bundles (default: $GVA_OUTPUT_ROOT or ./gva-out).
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment from a TOML config file or a preset name.
    Run {
        config: String,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a bundle CSV as SVG.
    Plot {
        csv: PathBuf,
        #[arg(long)]
        spec: String,
        /// Output path (default: the CSV path with an .svg extension).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Seed-median comparison table over bundles of one experiment kind.
    Report {
        #[arg(required = true)]
        bundles: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run a verification suite (dt-ema, cliff, ou, driftless, amplification, all).
    Verify {
        suite: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a preset config, or list presets when no name is given.
    Preset { name: Option<String> },
}

fn run_and_print(mut config: ExperimentConfig, seed: Option<u64>, root: &Path) -> CliResult<bool> {
    if let Some(s) = seed {
        config.seed = s;
        config.validate()?;
    }
    let out = run(&config, root)?;
    for c in &out.outcome.checks {
        println!("{c}");
    }
    println!("bundle: {}", out.dir.display());
    Ok(out.outcome.passed())
}

fn dispatch(cli: Cli) -> CliResult<i32> {
    let root = cli.output_root.unwrap_or_else(bundle::output_root);
    let code = |ok: bool| if ok { EXIT_PASS } else { EXIT_ASSERTION };
    match cli.command {
        Command::Run { config, seed } => Ok(code(run_and_print(load_config(&config)?, seed, &root)?)),
        Command::Verify { suite, seed } => {
            let names: Vec<&str> = if suite == "all" {
                presets::SUITES.iter().map(|s| s.1).collect()
            } else {
                vec![presets::suite_preset(&suite).ok_or_else(|| CliError::Config(format!("unknown suite {suite:?}")))?]
            };
            let mut ok = true;
            for n in names {
                let text = presets::preset(n).expect("suite presets are shipped");
                ok &= run_and_print(ExperimentConfig::parse(text)?, seed, &root)?;
            }
            Ok(code(ok))
        }
        Command::Plot { csv, spec, out } => {
            let spec = plot::PlotSpec::parse(&spec)?;
            let svg = plot::render_table(&tables::Table::read(&csv)?, spec)?;
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            std::fs::write(&out, svg).map_err(|e| CliError::io(&out, e))?;
            println!("{}", out.display());
            Ok(EXIT_PASS)
        }
        Command::Report { bundles, csv } => {
            let rows = report::aggregate(&bundles)?;
            print!("{}", report::render_text(&rows));
            if let Some(p) = csv {
                std::fs::write(&p, report::to_table(&rows).to_csv()?).map_err(|e| CliError::io(&p, e))?;
            }
            Ok(EXIT_PASS)
        }
        Command::Preset { name: None } => {
            for (n, _) in presets::PRESETS {
                println!("{n}");
            }
            Ok(EXIT_PASS)
        }
        Command::Preset { name: Some(n) } => {
            let text = presets::preset(&n).ok_or_else(|| CliError::Config(format!("unknown preset {n:?}")))?;
            print!("{text}");
            Ok(EXIT_PASS)
        }
    }
}

/// Parses `args` (including the program name) and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    match dispatch(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
