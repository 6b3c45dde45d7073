use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatsrc::angles::{DenominatorRule, Fraction};
use heatsrc_cli::run::{cmd_gaps, cmd_invert, cmd_rerun, cmd_synth, parse_fraction, run_experiment, tag};
use heatsrc_cli::{CliResult, ExperimentConfig, Overrides, Preset};

#[derive(Parser)]
#[command(name = "heatsrc", version, about = "Separable heat-source identification from boundary flux data")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config (or a manifest.json from an earlier run).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset supplying the defaults; overrides the config's own.
    #[arg(long)]
    preset: Option<Preset>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize flux datasets from the configured truth.
    Synth(ConfigArgs),
    /// Reconstruct (p, q) from a dataset with the alternating scheme.
    Invert {
        /// Dataset CSV; its sidecar JSON must sit next to it.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Fit a star-shaped support (and q) to a dataset.
    ShapeFit {
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        args: ConfigArgs,
    },
    /// Zero-free angular gaps between rational multiples of π.
    Gaps {
        /// Denominators are < B_MAX.
        b_max: u64,
        #[arg(long, value_enum, default_value = "all")]
        rule: RuleArg,
        /// Query point a/b in (0, 1), in units of π.
        #[arg(long, default_value = "1/4", value_parser = parse_fraction)]
        query: Fraction,
        /// CSV destination (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize and reconstruct in one go for a preset.
    Experiment {
        preset: Preset,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Repeat the run recorded in a manifest.
    Rerun {
        /// manifest.json or the directory holding it.
        manifest: PathBuf,
        /// Output directory for the repeated run.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RuleArg {
    All,
    Primes,
}

fn resolve(config: Option<&PathBuf>, preset: Option<Preset>, overrides: &Overrides) -> CliResult<ExperimentConfig> {
    let mut cfg = match config {
        Some(path) => ExperimentConfig::load(path, preset)?,
        None => ExperimentConfig::preset(preset.unwrap_or(Preset::E1)),
    };
    overrides.apply(&mut cfg)?;
    Ok(cfg)
}

fn report(outcome: &heatsrc_cli::run::RunOutcome) {
    for r in &outcome.runs {
        let errors: Vec<String> = r.errors.iter().map(|(n, v)| format!("{n} = {v:.3e}")).collect();
        eprintln!("{}: {}", tag(r.delta), errors.join(", "));
    }
    eprintln!("artifacts in {}", outcome.dir.display());
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => {
            let cfg = resolve(a.config.as_ref(), a.preset, &a.overrides)?;
            let dir = cmd_synth(&cfg)?;
            eprintln!("artifacts in {}", dir.display());
        }
        Command::Invert { data, args: a } => {
            let cfg = resolve(a.config.as_ref(), a.preset, &a.overrides)?;
            report(&cmd_invert(&cfg, &data, false)?);
        }
        Command::ShapeFit { data, args: a } => {
            let cfg = resolve(a.config.as_ref(), a.preset.or(Some(Preset::E2)), &a.overrides)?;
            report(&cmd_invert(&cfg, &data, true)?);
        }
        Command::Gaps { b_max, rule, query, out } => {
            let rule = match rule {
                RuleArg::All => DenominatorRule::All,
                RuleArg::Primes => DenominatorRule::Primes,
            };
            let rep = cmd_gaps(b_max, rule, query, out.as_deref())?;
            if let Some(g) = rep.gap_below() {
                eprintln!("nearest below {}: {} (gap {:.5}π = {:.3}°)", rep.query, g.left, g.length_pi(), g.length_deg());
            }
            if let Some(g) = rep.gap_above() {
                eprintln!("nearest above {}: {} (gap {:.5}π = {:.3}°)", rep.query, g.right, g.length_pi(), g.length_deg());
            }
        }
        Command::Experiment { preset, config, overrides } => {
            let cfg = resolve(config.as_ref(), Some(preset), &overrides)?;
            report(&run_experiment(&cfg)?);
        }
        Command::Rerun { manifest, out } => cmd_rerun(&manifest, &out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    // TV solves routinely stop at max_inner; the run summary reports that
    let filter = format!("{level},heatsrc::solvers::tv=error");
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
