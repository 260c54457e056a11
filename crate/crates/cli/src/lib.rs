//! Experiment runner behind the `netlqg` binary.
//!
//! Sweeps write a CSV table (stdout, or `--out` plus a manifest next to it).
//! [`run`] returns [`Outcome::AllDiverged`] when every grid point of a sweep
//! lost all of its trials; the binary maps that to exit status 2 and any
//! error to 1.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use netlqg::bounds::{awgn_capacity, BoundContext};
use netlqg::channel::{lloyd_max, LloydMaxOptions};
use netlqg::presets::Preset;
use netlqg::riccati;
use netlqg::sim::{self, Sweep, SweepRecord};
use netlqg::{validate, ExperimentConfig, ValidatedConfig};

mod output;

pub use output::{
    format_sig9, manifest_path, parse_csv, render_csv, write_csv, RunManifest, CSV_HEADER,
};

#[derive(Debug, Parser)]
#[command(
    name = "netlqg",
    version,
    about = "Cost/information tradeoffs for scalar LQG control over noisy and rate-limited links"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lower bound on the per-stage cost over a grid of rates (bits) or SNRs.
    Bound {
        #[command(flatten)]
        run: RunArgs,
        /// Treat the grid as SNR values and add the Riccati cost column.
        #[arg(long)]
        snr: bool,
    },
    /// Simulate an AWGN link over a grid of SNRs (default preset fig2).
    AwgnSweep(RunArgs),
    /// Simulate a uniform quantizer over a grid of steps (default preset fig3).
    RateSweep(RunArgs),
    /// Quantized link with a random plant gain (default preset fig5). The
    /// grid holds steps, or level counts for a Lloyd-Max channel.
    UncertainASweep(RunArgs),
    /// Train a Lloyd-Max codebook on a sample file and print it as CSV.
    QuantizerDesign {
        /// Numbers separated by whitespace or commas.
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        levels: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a reference configuration as JSON.
    Preset {
        name: Preset,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Experiment config JSON, or a manifest from an earlier run.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Start from a reference configuration instead of --config.
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long, env = "NETLQG_SEED")]
    pub seed: Option<u64>,
    /// CSV destination; the manifest goes to <out>.manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    AllDiverged,
}

/// A resolved experiment: validated config plus the grid to sweep.
#[derive(Debug, Clone)]
pub struct Plan {
    pub config: ValidatedConfig,
    pub grid: Vec<f64>,
}

/// Reads `--config` as either an [`ExperimentConfig`] or a [`RunManifest`].
/// A manifest also supplies its grid.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Option<Vec<f64>>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("config_echo").is_some() {
        let m: RunManifest = serde_json::from_value(value)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        Ok((m.config_echo, Some(m.grid)))
    } else {
        let cfg = serde_json::from_value(value)
            .with_context(|| format!("reading config {}", path.display()))?;
        Ok((cfg, None))
    }
}

impl RunArgs {
    pub fn plan(&self, fallback: ExperimentConfig, default_grid: Vec<f64>) -> Result<Plan> {
        let (mut cfg, saved_grid) = match (&self.config, self.preset) {
            (Some(path), _) => load_config(path)?,
            (None, Some(p)) => (p.config(), Some(p.grid())),
            (None, None) => (fallback, None),
        };
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        let grid = self.grid.clone().or(saved_grid).unwrap_or(default_grid);
        if grid.is_empty() {
            bail!("empty grid");
        }
        Ok(Plan {
            config: validate(cfg)?,
            grid,
        })
    }
}

const RATE_GRID: [f64; 6] = [1.1, 1.25, 1.5, 2.0, 3.0, 4.0];
const SNR_GRID: [f64; 7] = [3.5, 4.0, 5.0, 8.0, 16.0, 64.0, 1024.0];

fn bound_records(plan: &Plan, snr: bool) -> Result<Vec<SweepRecord>> {
    let cfg = &plan.config;
    let params = cfg.design_params();
    let ctx = BoundContext::new(&params, &cfg.disturbance)?;
    plan.grid
        .iter()
        .map(|&g| {
            let (info_bits, bound_cost, computed_cost) = if snr {
                if g.is_nan() || g <= 0.0 {
                    bail!("SNR must be positive, got {g}");
                }
                let computed = riccati::computed_cost_per_stage(&params, g).ok();
                (
                    awgn_capacity(g),
                    ctx.cost_lower_bound_vs_snr(g).ok(),
                    computed,
                )
            } else {
                (g, ctx.cost_lower_bound_at_rate(g).ok(), None)
            };
            Ok(SweepRecord {
                control_var: g,
                info_bits,
                sim_cost_mean: None,
                sim_cost_stderr: None,
                computed_cost,
                bound_cost,
                diverged_fraction: 0.0,
            })
        })
        .collect()
}

fn emit(records: &[SweepRecord], manifest: &RunManifest, out: Option<&Path>) -> Result<()> {
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    match out {
        Some(path) => write_csv(records, manifest, path),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(render_csv(records)?.as_bytes())?;
            Ok(())
        }
    }
}

fn run_sweep(
    name: &str,
    args: &RunArgs,
    preset: Preset,
    sweep: fn(&ValidatedConfig, &[f64]) -> Result<Sweep, sim::SimError>,
) -> Result<Outcome> {
    let plan = args.plan(preset.config(), preset.grid())?;
    let result = sweep(&plan.config, &plan.grid)?;
    let manifest = RunManifest::new(
        plan.config.into_inner(),
        name,
        &plan.grid,
        result.warnings.clone(),
    );
    emit(&result.records, &manifest, args.out.as_deref())?;
    Ok(if result.all_diverged() {
        Outcome::AllDiverged
    } else {
        Outcome::Done
    })
}

/// Parses whitespace- or comma-separated numbers.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("bad sample {t:?}"))
        })
        .collect()
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Bound { run, snr } => {
            let default = if snr {
                SNR_GRID.to_vec()
            } else {
                RATE_GRID.to_vec()
            };
            let plan = run.plan(ExperimentConfig::default(), default)?;
            let records = bound_records(&plan, snr)?;
            let name = if snr { "bound --snr" } else { "bound" };
            let manifest = RunManifest::new(plan.config.into_inner(), name, &plan.grid, Vec::new());
            emit(&records, &manifest, run.out.as_deref())?;
            Ok(Outcome::Done)
        }
        Command::AwgnSweep(args) => run_sweep("awgn-sweep", &args, Preset::Fig2, sim::snr_sweep),
        Command::RateSweep(args) => run_sweep("rate-sweep", &args, Preset::Fig3, sim::rate_sweep),
        Command::UncertainASweep(args) => run_sweep(
            "uncertain-a-sweep",
            &args,
            Preset::Fig5,
            sim::uncertain_a_sweep,
        ),
        Command::QuantizerDesign {
            samples,
            levels,
            out,
        } => {
            let text = fs::read_to_string(&samples)
                .with_context(|| format!("reading {}", samples.display()))?;
            let xs = parse_samples(&text)?;
            let res = lloyd_max(&xs, levels, &LloydMaxOptions::default())?;
            if !res.converged {
                eprintln!(
                    "warning: Lloyd-Max stopped after {} iterations",
                    res.iterations
                );
            }
            eprintln!("mse: {}", format_sig9(res.mse()));
            write_text(&res.codebook.to_csv(), out.as_deref())?;
            Ok(Outcome::Done)
        }
        Command::Preset { name, out } => {
            let cfg = validate(name.config())?.into_inner();
            write_text(
                &(serde_json::to_string_pretty(&cfg)? + "\n"),
                out.as_deref(),
            )?;
            Ok(Outcome::Done)
        }
    }
}
