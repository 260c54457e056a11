//! Closed-loop Monte Carlo engine.
//!
//! Each episode simulates `x' = a_t x + B u + w` with the observer sending
//! `y = C x + v` over the configured link. The controller runs a scalar
//! Kalman filter on what it receives and applies `u = -L x_hat`, with `L`
//! the steady-state LQR gain.
//!
//! Link models, as seen by the receiver's filter:
//!
//! - Perfect: `y` arrives unchanged; measurement noise `V`.
//! - AWGN: the encoder knows the decoder's prediction (it sees the applied
//!   control) and sends the innovation `y - C x_pred`, scaled to the power
//!   budget. The decoder adds the prediction back, so it receives `y + z`
//!   with `z ~ N(0, (C^2 P + V) / snr)`, `P` the steady-state prediction
//!   variance. Measurement noise `V + (C^2 P + V) / snr`. When no steady
//!   state exists (`snr <= A^2 - 1`) the required signal power is
//!   unbounded and the link carries no information.
//! - Uniform quantizer: `y` is quantized with step `d`; the filter models the
//!   error as white with variance `d^2 / 12`.
//! - Lloyd-Max: the codebook has bounded range, and saturating on `y` lets
//!   an unstable plant escape, so the encoder quantizes the innovation
//!   `y - C x_pred` instead (it knows the prediction, as for AWGN). The
//!   codebook is trained on pilot innovations; the filter uses its training
//!   MSE as the error variance. Even on the innovation a bounded codebook
//!   lets rare overloads compound, so the link extends the outer levels
//!   with a lattice at the outermost spacing ([`extended_quantize`]). Those
//!   cells are rarely hit and show up in the measured entropy.
//!
//! Trial `i` draws from ChaCha8 stream `i` of `master_seed`, so every result
//! is a pure function of the configuration and independent of how trials
//! are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::{awgn_capacity, BoundContext, BoundError};
use crate::channel::{
    awgn_transmit, lloyd_max, uniform_quantize, BinHistogram, ChannelError, Codebook,
    LloydMaxOptions,
};
use crate::model::{
    validate, ChannelKind, ChannelSpec, ExperimentConfig, ModelError, QuantizerSpec, SystemParams,
    ValidatedConfig,
};
use crate::riccati::{self, RiccatiError, SolverOptions};

/// Stream index reserved for Lloyd-Max pilot runs (trial streams count up
/// from zero).
const PILOT_STREAM: u64 = u64::MAX;
/// Pilot runs used to train a Lloyd-Max codebook: one over a perfect link,
/// then retraining on the signal seen with the previous codebook in place.
const PILOT_PASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    InvalidConfig(#[from] ModelError),
    #[error("wrong channel for this sweep: {0}")]
    WrongChannel(String),
    #[error("all {trials} trials diverged")]
    AllTrialsDiverged { trials: usize },
    #[error("invalid grid value {value}: {reason}")]
    InvalidGrid { value: f64, reason: String },
    #[error("Lloyd-Max pilot run diverged before collecting {needed} samples")]
    PilotDiverged { needed: usize },
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// Time-averaged stage cost after burn-in; infinite when diverged.
    pub avg_cost: f64,
    /// Plug-in entropy (bits) of the quantizer output, quantized links only.
    pub entropy_bits: Option<f64>,
    pub diverged: bool,
    pub final_state_mag: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Link {
    Perfect,
    /// `signal_power` is `None` when the design has no steady state.
    Awgn {
        snr: f64,
        signal_power: Option<f64>,
    },
    Uniform {
        step: f64,
    },
    Codebook {
        codebook: Codebook,
        mse: f64,
    },
}

/// Everything about an experiment that does not depend on the trial:
/// gains, link model and (for Lloyd-Max) the trained codebook.
#[derive(Debug, Clone)]
pub struct Design {
    cfg: ValidatedConfig,
    params: SystemParams,
    gain: f64,
    link: Link,
    warnings: Vec<String>,
}

impl Design {
    pub fn new(cfg: &ValidatedConfig) -> Result<Self, SimError> {
        let params = cfg.design_params();
        let opts = solver_options(cfg);
        let control = riccati::control_steady_state_with(&params, &opts).require_converged()?;
        let mut warnings = Vec::new();

        let link = match (cfg.channel.kind, cfg.channel.snr, cfg.channel.quantizer) {
            (ChannelKind::Perfect, _, _) => Link::Perfect,
            (ChannelKind::Awgn, Some(snr), _) => {
                let signal_power = match riccati::awgn_filter_steady_state_with(&params, snr, &opts)
                {
                    Ok(f) => {
                        if !f.converged {
                            warnings.push(format!(
                                "snr {snr}: AWGN filter recursion stalled after {} iterations; using last iterate",
                                f.iterations
                            ));
                        }
                        Some(params.c * params.c * f.p + params.measurement_noise())
                    }
                    Err(_) => {
                        warnings.push(format!(
                            "snr {snr}: AWGN filter recursion diverges; the link carries no information"
                        ));
                        None
                    }
                };
                Link::Awgn { snr, signal_power }
            }
            (ChannelKind::Quantized, _, Some(QuantizerSpec::Uniform { step })) => {
                Link::Uniform { step }
            }
            (ChannelKind::Quantized, _, Some(QuantizerSpec::LloydMax { levels })) => {
                return Self::train_lloyd_max(cfg, params, control.l, levels, warnings);
            }
            _ => unreachable!("validated channel spec"),
        };

        Ok(Self {
            cfg: cfg.clone(),
            params,
            gain: control.l,
            link,
            warnings,
        })
    }

    fn train_lloyd_max(
        cfg: &ValidatedConfig,
        params: SystemParams,
        gain: f64,
        levels: usize,
        mut warnings: Vec<String>,
    ) -> Result<Self, SimError> {
        let mut design = Self {
            cfg: cfg.clone(),
            params,
            gain,
            link: Link::Perfect,
            warnings: Vec::new(),
        };
        let mut recovered = 0;
        for pass in 0..PILOT_PASSES {
            let mut samples = Vec::with_capacity(cfg.horizon - cfg.burn_in);
            let mut rng = trial_rng(cfg.master_seed, PILOT_STREAM);
            let pilot = design.simulate(&mut rng, Some(&mut samples));
            if pilot.diverged {
                if pass == 0 {
                    return Err(SimError::PilotDiverged { needed: levels });
                }
                // Samples from an escaping run would stretch the outer
                // cells; keep the codebook from the previous pass.
                warnings.push(format!(
                    "Lloyd-Max ({levels} levels): pilot pass {pass} diverged; kept the codebook from pass {}",
                    pass - 1
                ));
                break;
            }
            let trained = lloyd_max(&samples, levels, &LloydMaxOptions::default())?;
            recovered += trained.empty_cells_recovered;
            let mse = trained.mse();
            design.link = Link::Codebook {
                codebook: trained.codebook,
                mse,
            };
        }
        if recovered > 0 {
            warnings.push(format!(
                "Lloyd-Max ({levels} levels): training re-seeded {recovered} empty cell(s)"
            ));
        }
        design.warnings = warnings;
        Ok(design)
    }

    pub fn config(&self) -> &ValidatedConfig {
        &self.cfg
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Trained codebook, Lloyd-Max links only.
    pub fn codebook(&self) -> Option<&Codebook> {
        match &self.link {
            Link::Codebook { codebook, .. } => Some(codebook),
            _ => None,
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn run_episode(&self, trial_index: u64) -> EpisodeResult {
        let mut rng = trial_rng(self.cfg.master_seed, trial_index);
        self.simulate(&mut rng, None)
    }

    fn simulate(&self, rng: &mut ChaCha8Rng, mut capture: Option<&mut Vec<f64>>) -> EpisodeResult {
        let cfg = &*self.cfg;
        let p = &self.params;
        let a_nominal = p.a;
        let v = p.measurement_noise();
        let v_std = v.sqrt();
        // `w = 0` switches the disturbance off; otherwise its variance is
        // `stddev^2` by validation.
        let w_scale = if p.w > 0.0 { 1.0 } else { 0.0 };
        let threshold = cfg.divergence_threshold;
        let quantized = matches!(self.link, Link::Uniform { .. } | Link::Codebook { .. });

        let z0: f64 = StandardNormal.sample(rng);
        let mut x = p.w.sqrt() * z0;
        let mut x_pred = 0.0;
        let mut p_pred = p.w;

        let mut cost_sum = 0.0;
        let mut cost_n = 0usize;
        let mut warm = BinHistogram::new();
        let mut main = BinHistogram::new();
        let mut diverged = false;

        for t in 0..cfg.horizon {
            if !x.is_finite() || x.abs() >= threshold {
                diverged = true;
                break;
            }
            let y = if v > 0.0 {
                let z: f64 = StandardNormal.sample(rng);
                p.c * x + v_std * z
            } else {
                p.c * x
            };
            if t >= cfg.burn_in {
                if let Some(buf) = capture.as_deref_mut() {
                    buf.push(y - p.c * x_pred);
                }
            }
            let hist = if t >= cfg.burn_in {
                &mut main
            } else {
                &mut warm
            };

            let (received, noise_var) = match &self.link {
                Link::Perfect => (y, v),
                Link::Awgn {
                    snr,
                    signal_power: Some(power),
                } => (awgn_transmit(y, *power, *snr, rng), v + power / snr),
                Link::Awgn {
                    signal_power: None, ..
                } => (0.0, f64::INFINITY),
                Link::Uniform { step } => {
                    let (index, level) = uniform_quantize(y, *step);
                    hist.record(index);
                    (level, v + step * step / 12.0)
                }
                Link::Codebook { codebook, mse } => {
                    let (index, level) = extended_quantize(codebook, y - p.c * x_pred);
                    hist.record(index);
                    (p.c * x_pred + level, v + mse)
                }
            };

            let innovation_var = p.c * p.c * p_pred + noise_var;
            let k = if noise_var.is_finite() && innovation_var > 0.0 {
                p.c * p_pred / innovation_var
            } else {
                0.0
            };
            let x_hat = if k == 0.0 {
                x_pred
            } else {
                x_pred + k * (received - p.c * x_pred)
            };
            let sigma = (1.0 - k * p.c) * p_pred;
            let u = -self.gain * x_hat;

            if t >= cfg.burn_in {
                cost_sum += p.q * x * x + p.r * u * u;
                cost_n += 1;
            }

            let a_t = if cfg.uncertain_a.is_random() {
                cfg.uncertain_a.sample(rng)
            } else {
                a_nominal
            };
            let w = w_scale * cfg.disturbance.sample(rng);
            x = a_t * x + p.b * u + w;
            x_pred = a_nominal * x_hat + p.b * u;
            p_pred = a_nominal * a_nominal * sigma + p.w;
        }
        if !x.is_finite() || x.abs() >= threshold {
            diverged = true;
        }

        let entropy_bits = quantized.then(|| {
            if main.is_empty() {
                warm.entropy_bits()
            } else {
                main.entropy_bits()
            }
        });
        let avg_cost = if diverged {
            f64::INFINITY
        } else {
            cost_sum / cost_n as f64
        };
        EpisodeResult {
            avg_cost,
            entropy_bits,
            diverged,
            final_state_mag: if x.is_nan() { f64::INFINITY } else { x.abs() },
        }
    }

    /// Runs every trial (in parallel) and aggregates in trial order.
    pub fn episodes(&self) -> Vec<EpisodeResult> {
        (0..self.cfg.trials as u64)
            .into_par_iter()
            .map(|i| self.run_episode(i))
            .collect()
    }

    pub fn monte_carlo(&self) -> Result<MonteCarloSummary, SimError> {
        let agg = Aggregate::from_episodes(&self.episodes());
        match (agg.mean, agg.stderr) {
            (Some(mean), Some(stderr)) => Ok(MonteCarloSummary {
                mean,
                stderr,
                diverged_fraction: agg.diverged_fraction,
                entropy_bits: agg.entropy_bits,
                trials: agg.trials,
            }),
            _ => Err(SimError::AllTrialsDiverged { trials: agg.trials }),
        }
    }
}

fn solver_options(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        divergence_threshold: cfg.divergence_threshold,
        ..SolverOptions::default()
    }
}

/// Quantizes with `codebook`, continuing past its outer levels on a lattice
/// with the outermost level spacing. Inside the codebook's range this is
/// [`Codebook::quantize`]; indices below zero or above `len - 1` are the
/// overload cells.
pub fn extended_quantize(codebook: &Codebook, x: f64) -> (i64, f64) {
    let levels = codebook.levels();
    let k = levels.len();
    let (lo, hi) = (levels[0], levels[k - 1]);
    let (gap_lo, gap_hi) = (levels[1] - lo, hi - levels[k - 2]);
    if x > hi + 0.5 * gap_hi {
        let n = ((x - hi) / gap_hi).round();
        return ((k - 1) as i64 + n as i64, hi + n * gap_hi);
    }
    if x < lo - 0.5 * gap_lo {
        let n = ((lo - x) / gap_lo).round();
        return (-(n as i64), lo - n * gap_lo);
    }
    let (i, level) = codebook.quantize(x);
    (i as i64, level)
}

/// Random stream for one trial: ChaCha8 seeded from `master_seed`, stream
/// `trial_index`.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// Simulates one trial. Builds the [`Design`] first; prefer
/// [`Design::run_episode`] when running many trials.
pub fn run_episode(cfg: &ValidatedConfig, trial_index: u64) -> Result<EpisodeResult, SimError> {
    Ok(Design::new(cfg)?.run_episode(trial_index))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    /// Mean of `avg_cost` over non-diverged trials.
    pub mean: f64,
    /// Standard error of that mean; zero for a single trial.
    pub stderr: f64,
    pub diverged_fraction: f64,
    pub entropy_bits: Option<f64>,
    pub trials: usize,
}

pub fn monte_carlo(cfg: &ValidatedConfig) -> Result<MonteCarloSummary, SimError> {
    Design::new(cfg)?.monte_carlo()
}

struct Aggregate {
    mean: Option<f64>,
    stderr: Option<f64>,
    diverged_fraction: f64,
    entropy_bits: Option<f64>,
    trials: usize,
}

impl Aggregate {
    fn from_episodes(episodes: &[EpisodeResult]) -> Self {
        let ok: Vec<&EpisodeResult> = episodes.iter().filter(|e| !e.diverged).collect();
        let n = ok.len();
        let (mean, stderr) = if n == 0 {
            (None, None)
        } else {
            let mean = ok.iter().map(|e| e.avg_cost).sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let ss: f64 = ok.iter().map(|e| (e.avg_cost - mean).powi(2)).sum();
                (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
            } else {
                0.0
            };
            (Some(mean), Some(stderr))
        };
        // Entropy over converged trials when there are any.
        let pool: Vec<f64> = if n > 0 {
            ok.iter().filter_map(|e| e.entropy_bits).collect()
        } else {
            episodes.iter().filter_map(|e| e.entropy_bits).collect()
        };
        let entropy_bits = (!pool.is_empty()).then(|| pool.iter().sum::<f64>() / pool.len() as f64);
        Self {
            mean,
            stderr,
            diverged_fraction: (episodes.len() - n) as f64 / episodes.len() as f64,
            entropy_bits,
            trials: episodes.len(),
        }
    }
}

/// One point of a cost-versus-information tradeoff curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    /// The swept quantity: SNR, quantizer step, or Lloyd-Max level count.
    pub control_var: f64,
    /// AWGN capacity, or measured quantizer output entropy (bits).
    pub info_bits: f64,
    pub sim_cost_mean: Option<f64>,
    pub sim_cost_stderr: Option<f64>,
    /// Steady-state cost from the Riccati recursions (AWGN only).
    pub computed_cost: Option<f64>,
    /// Rate-distortion cost bound at `info_bits`; absent below the
    /// stabilization rate.
    pub bound_cost: Option<f64>,
    pub diverged_fraction: f64,
}

impl SweepRecord {
    pub fn fully_diverged(&self) -> bool {
        self.sim_cost_mean.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub records: Vec<SweepRecord>,
    pub warnings: Vec<String>,
}

impl Sweep {
    pub fn all_diverged(&self) -> bool {
        self.records.iter().all(SweepRecord::fully_diverged)
    }
}

fn push_unique(warnings: &mut Vec<String>, new: &[String]) {
    for w in new {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
}

fn point_config(cfg: &ExperimentConfig, channel: ChannelSpec) -> Result<ValidatedConfig, SimError> {
    Ok(validate(cfg.with_channel(channel))?)
}

/// Sweeps an AWGN link over `snrs`, comparing simulation, the Riccati cost
/// and the capacity-based bound.
pub fn snr_sweep(cfg: &ValidatedConfig, snrs: &[f64]) -> Result<Sweep, SimError> {
    if cfg.channel.kind != ChannelKind::Awgn {
        return Err(SimError::WrongChannel(format!(
            "snr sweep needs an awgn channel, got {:?}",
            cfg.channel.kind
        )));
    }
    let params = cfg.design_params();
    let ctx = BoundContext::new(&params, &cfg.disturbance)?;
    let opts = solver_options(cfg);
    let mut sweep = Sweep {
        records: Vec::with_capacity(snrs.len()),
        warnings: Vec::new(),
    };
    for &snr in snrs {
        let point = point_config(cfg, ChannelSpec::awgn(snr))?;
        let design = Design::new(&point)?;
        push_unique(&mut sweep.warnings, design.warnings());
        let agg = Aggregate::from_episodes(&design.episodes());
        sweep.records.push(SweepRecord {
            control_var: snr,
            info_bits: awgn_capacity(snr),
            sim_cost_mean: agg.mean,
            sim_cost_stderr: agg.stderr,
            computed_cost: riccati::computed_cost_per_stage_with(&params, snr, &opts).ok(),
            bound_cost: ctx.cost_lower_bound_vs_snr(snr).ok(),
            diverged_fraction: agg.diverged_fraction,
        });
    }
    Ok(sweep)
}

fn quantized_sweep(
    cfg: &ValidatedConfig,
    grid: &[f64],
    channel_at: impl Fn(f64) -> Result<ChannelSpec, SimError>,
) -> Result<Sweep, SimError> {
    let ctx = BoundContext::new(&cfg.design_params(), &cfg.disturbance)?;
    let mut sweep = Sweep {
        records: Vec::with_capacity(grid.len()),
        warnings: Vec::new(),
    };
    for &g in grid {
        let point = point_config(cfg, channel_at(g)?)?;
        let design = Design::new(&point)?;
        push_unique(&mut sweep.warnings, design.warnings());
        let agg = Aggregate::from_episodes(&design.episodes());
        let info_bits = agg.entropy_bits.unwrap_or(0.0);
        sweep.records.push(SweepRecord {
            control_var: g,
            info_bits,
            sim_cost_mean: agg.mean,
            sim_cost_stderr: agg.stderr,
            computed_cost: None,
            bound_cost: ctx.cost_lower_bound_at_rate(info_bits).ok(),
            diverged_fraction: agg.diverged_fraction,
        });
    }
    Ok(sweep)
}

/// Sweeps the uniform quantizer step; information is the measured output
/// entropy.
pub fn rate_sweep(cfg: &ValidatedConfig, steps: &[f64]) -> Result<Sweep, SimError> {
    match cfg.channel.quantizer {
        Some(QuantizerSpec::Uniform { .. }) if cfg.channel.kind == ChannelKind::Quantized => {}
        _ => {
            return Err(SimError::WrongChannel(
                "rate sweep needs a uniform quantizer channel".into(),
            ))
        }
    }
    quantized_sweep(cfg, steps, |step| Ok(ChannelSpec::uniform(step)))
}

/// Like [`rate_sweep`] with a random plant gain. The grid holds quantizer
/// steps for a uniform quantizer or level counts for Lloyd-Max. The bound
/// column is the fixed-gain bound at the mean gain, for reference only.
pub fn uncertain_a_sweep(cfg: &ValidatedConfig, grid: &[f64]) -> Result<Sweep, SimError> {
    if !cfg.uncertain_a.enabled {
        return Err(SimError::WrongChannel(
            "uncertain-A sweep needs uncertain_a.enabled".into(),
        ));
    }
    let mut sweep = match cfg.channel.quantizer {
        Some(QuantizerSpec::Uniform { .. }) => {
            quantized_sweep(cfg, grid, |step| Ok(ChannelSpec::uniform(step)))?
        }
        Some(QuantizerSpec::LloydMax { .. }) => quantized_sweep(cfg, grid, |k| {
            if k.fract() != 0.0 || k < 2.0 {
                return Err(SimError::InvalidGrid {
                    value: k,
                    reason: "Lloyd-Max level count must be an integer >= 2".into(),
                });
            }
            Ok(ChannelSpec::lloyd_max(k as usize))
        })?,
        None => {
            return Err(SimError::WrongChannel(
                "uncertain-A sweep needs a quantized channel".into(),
            ))
        }
    };
    sweep.warnings.insert(
        0,
        format!(
            "bound_cost is the fixed-A reference bound at mean A = {}; no bound is computed for random A",
            cfg.uncertain_a.mean
        ),
    );
    Ok(sweep)
}
