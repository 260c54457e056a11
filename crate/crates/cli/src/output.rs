//! CSV tradeoff tables and their run manifests.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use netlqg::sim::SweepRecord;
use netlqg::ExperimentConfig;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 7] = [
    "control_var",
    "info_bits",
    "sim_cost_mean",
    "sim_cost_stderr",
    "computed_cost",
    "bound_cost",
    "diverged_fraction",
];

/// Written next to every CSV; feeding it back through `--config`
/// reproduces the CSV body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub config_echo: ExperimentConfig,
    pub artifact_version: String,
    pub master_seed: u64,
    pub timestamp: String,
    pub warnings: Vec<String>,
    /// Subcommand that produced the table.
    pub command: String,
    pub grid: Vec<f64>,
}

impl RunManifest {
    pub fn new(
        config: ExperimentConfig,
        command: &str,
        grid: &[f64],
        warnings: Vec<String>,
    ) -> Self {
        Self {
            master_seed: config.master_seed,
            config_echo: config,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            warnings,
            command: command.to_string(),
            grid: grid.to_vec(),
        }
    }
}

/// `<path>.manifest.json`
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = OsString::from(path.as_os_str());
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Formats like C's `%.9g`: 9 significant digits, trailing zeros dropped,
/// exponent form outside `1e-4 <= |x| < 1e9`.
pub fn format_sig9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig9).unwrap_or_default()
}

pub fn render_csv(records: &[SweepRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            format_sig9(r.control_var),
            format_sig9(r.info_bits),
            opt(r.sim_cost_mean),
            opt(r.sim_cost_stderr),
            opt(r.computed_cost),
            opt(r.bound_cost),
            format_sig9(r.diverged_fraction),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Writes the table to `path` and the manifest to `<path>.manifest.json`.
pub fn write_csv(records: &[SweepRecord], manifest: &RunManifest, path: &Path) -> Result<()> {
    ensure!(!records.is_empty(), "no records to write");
    fs::write(path, render_csv(records)?).with_context(|| format!("writing {}", path.display()))?;
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(manifest)?;
    fs::write(&mpath, json + "\n").with_context(|| format!("writing {}", mpath.display()))?;
    Ok(())
}

fn parse_field(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    Ok(Some(
        s.parse().with_context(|| format!("bad number {s:?}"))?,
    ))
}

/// Reads a table written by [`render_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<SweepRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        bail!("unexpected header {header:?}");
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let f: Vec<Option<f64>> = row.iter().map(parse_field).collect::<Result<_>>()?;
        let required = |i: usize| f[i].with_context(|| format!("{} is empty", CSV_HEADER[i]));
        out.push(SweepRecord {
            control_var: required(0)?,
            info_bits: required(1)?,
            sim_cost_mean: f[2],
            sim_cost_stderr: f[3],
            computed_cost: f[4],
            bound_cost: f[5],
            diverged_fraction: required(6)?,
        });
    }
    Ok(out)
}
