use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use phyaug_cli::commands::{self, SourceDistribution};
use phyaug_cli::config::{ClassifierKind, ExperimentConfig, OUT_DIR_ENV};

/// Physics-directed augmentation for TDoA seismic source localization.
#[derive(Parser)]
#[command(name = "phyaug", version)]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Configuration shared by all subcommands. Flags win over the file.
#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration value, as `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output directory for generated files.
    #[arg(long, env = OUT_DIR_ENV, global = true)]
    out_dir: Option<PathBuf>,
    /// Noise level ξ (fraction of the mean travel time).
    #[arg(long, global = true)]
    xi: Option<f64>,
    /// Grid side; the field gets `grid × grid` cells.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Seeds per sweep point.
    #[arg(long, global = true)]
    seeds: Option<usize>,
    /// First seed.
    #[arg(long, global = true)]
    base_seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = Vec::new();
        for kv in &self.set {
            let (k, v) = kv.split_once('=').with_context(|| format!("--set {kv:?}: expected KEY=VALUE"))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                overrides.push((key.to_string(), v));
            }
        };
        flag("common.xi", self.xi.map(|v| format!("{v:?}")));
        flag("common.grid_w1", self.grid.map(|v| v.to_string()));
        flag("common.grid_w2", self.grid.map(|v| v.to_string()));
        flag("common.seeds", self.seeds.map(|v| v.to_string()));
        flag("common.base_seed", self.base_seed.map(|v| v.to_string()));
        let mut cfg = ExperimentConfig::load(self.config.as_deref(), &overrides)?;
        if let Some(dir) = &self.out_dir {
            cfg.common.out_dir = Some(dir.clone());
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic ground-truth slowness model.
    GenField {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate events and their arrival times.
    Simulate {
        /// Slowness model to propagate through (default: generated truth).
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        events: usize,
        #[arg(long, value_enum, default_value_t = SourceDistribution::Gaussian)]
        distribution: SourceDistribution,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the labeled TDoA dataset here.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Estimate the slowness model from measured events.
    Tomo {
        #[arg(long)]
        events: PathBuf,
        /// Slowness file giving the grid geometry (default: configuration).
        #[arg(long)]
        field: Option<PathBuf>,
        /// Ground-truth model; prints the relative error.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a classifier on a dataset CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "svm")]
        classifier: ClassifierKind,
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesize fingerprints from a slowness estimate.
    Augment {
        #[arg(long)]
        slowness: PathBuf,
        #[arg(long)]
        count: usize,
        /// Add measurement noise at ξ to the synthetic times.
        #[arg(long)]
        inject_noise: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-wise accuracy of a trained model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Localize events by differential evolution against a slowness model.
    DeLocalize {
        #[arg(long)]
        slowness: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy against the number of real samples.
    Fig9,
    /// Real-data ratio with and without augmentation per accuracy level.
    Ratio {
        /// Reuse an existing accuracy_vs_L.csv.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Accuracy and data ratio across noise levels.
    NoiseSweep,
    /// Inference time and error of DE and the classifiers across grid sizes.
    DeBench,
    /// Polynomial-transform workflow demo; prints one CSV row.
    DemoPolynomial {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Render an output CSV as an SVG line chart.
    Plot {
        input: PathBuf,
        /// accuracy, ratio, noise, noise-curves, de-time or de-error.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn or_default(path: &Option<PathBuf>, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    path.clone().unwrap_or_else(|| cfg.out_dir().join(name))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = cli.config.load()?;
    match &cli.command {
        Command::GenField { out } => report(&[commands::gen_field(&cfg, &or_default(out, &cfg, "field.txt"))?]),
        Command::Simulate { field, events, distribution, seed, out, dataset } => report(&commands::simulate(
            &cfg,
            field.as_deref(),
            *events,
            *distribution,
            *seed,
            &or_default(out, &cfg, "events.csv"),
            dataset.as_deref(),
        )?),
        Command::Tomo { events, field, truth, out } => {
            let out = or_default(out, &cfg, "slowness_hat.txt");
            let err = commands::tomo(&cfg, events, field.as_deref(), truth.as_deref(), &out)?;
            report(&[out]);
            if let Some(e) = err {
                println!("relative_error {e}");
            }
        }
        Command::Train { data, classifier, field, seed, out } => {
            let out = or_default(out, &cfg, &format!("{}.model", classifier.as_str()));
            commands::train(&cfg, data, field.as_deref(), *classifier, *seed, &out)?;
            report(&[out]);
        }
        Command::Augment { slowness, count, inject_noise, seed, out } => {
            let out = or_default(out, &cfg, "augmented.csv");
            commands::augment(&cfg, slowness, *count, *inject_noise, *seed, &out)?;
            report(&[out]);
        }
        Command::Evaluate { model, data, field } => {
            println!("accuracy {}", commands::evaluate_model(&cfg, model, data, field.as_deref())?);
        }
        Command::DeLocalize { slowness, events, seed, out } => {
            let out = or_default(out, &cfg, "de_localize.csv");
            let err = commands::de_localize_events(&cfg, slowness, events, *seed, &out)?;
            report(&[out]);
            println!("mean_error_km {err}");
        }
        Command::Fig9 => report(&[commands::cmd_fig9(&cfg)?]),
        Command::Ratio { input } => {
            if input.is_some() {
                cfg.ratio.input = input.clone();
            }
            report(&commands::cmd_ratio(&cfg)?);
        }
        Command::NoiseSweep => report(&commands::cmd_noise_sweep(&cfg)?),
        Command::DeBench => report(&[commands::cmd_de_bench(&cfg)?]),
        Command::DemoPolynomial { seed } => commands::demo_polynomial(*seed, std::io::stdout().lock())?,
        Command::Plot { input, preset, out } => {
            let out = out.clone().unwrap_or_else(|| svg_path(input));
            commands::plot(input, preset.as_deref(), &out)?;
            report(&[out]);
        }
    }
    Ok(())
}

fn svg_path(input: &Path) -> PathBuf {
    input.with_extension("svg")
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
