//! Plant, disturbance, link and experiment configuration.
//!
//! Every experiment is described by an [`ExperimentConfig`], which
//! serializes to JSON with the field names used here. Configurations are
//! checked once by [`validate`], which reports every violated invariant by
//! field path, and the resulting [`ValidatedConfig`] is what the rest of the
//! crate accepts.
//!
//! Differential entropies are in nats; they are converted to bits only
//! where values leave the crate.

use std::f64::consts::{E, PI};
use std::fmt;
use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whether the observer sees the state exactly or through noisy output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observed {
    Fully,
    Partially,
}

/// Scalar plant `x' = a x + b u + w`, output `y = c x + v`, stage cost
/// `q x^2 + r u^2`. `w` and `v` are the disturbance and measurement
/// noise variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub q: f64,
    pub r: f64,
    pub w: f64,
    pub v: f64,
    pub observed: Observed,
}

impl SystemParams {
    /// `A = 2`, `B = C = Q = R = W = 1`, fully observed.
    pub fn fully_observed(a: f64) -> Self {
        Self {
            a,
            b: 1.0,
            c: 1.0,
            q: 1.0,
            r: 1.0,
            w: 1.0,
            v: 0.0,
            observed: Observed::Fully,
        }
    }

    /// Same defaults as [`SystemParams::fully_observed`] with `y = x + v`.
    pub fn partially_observed(a: f64, v: f64) -> Self {
        Self {
            v,
            observed: Observed::Partially,
            ..Self::fully_observed(a)
        }
    }

    /// Measurement noise variance seen by the estimator; zero when the
    /// state is fully observed.
    pub fn measurement_noise(&self) -> f64 {
        match self.observed {
            Observed::Fully => 0.0,
            Observed::Partially => self.v,
        }
    }
}

impl Default for SystemParams {
    fn default() -> Self {
        Self::fully_observed(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
    /// Not used in any of the reference experiments; kept because it has
    /// the smallest entropy power of the three at a given variance.
    Uniform,
}

/// Zero-mean disturbance distribution parameterized by its standard
/// deviation, whatever the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub stddev: f64,
}

impl NoiseSpec {
    pub fn gaussian(stddev: f64) -> Self {
        Self {
            family: NoiseFamily::Gaussian,
            stddev,
        }
    }

    pub fn laplace(stddev: f64) -> Self {
        Self {
            family: NoiseFamily::Laplace,
            stddev,
        }
    }

    pub fn uniform(stddev: f64) -> Self {
        Self {
            family: NoiseFamily::Uniform,
            stddev,
        }
    }

    pub fn variance(&self) -> f64 {
        self.stddev * self.stddev
    }

    /// Laplace scale `b` with variance `2 b^2 = stddev^2`.
    fn laplace_scale(&self) -> f64 {
        self.stddev / 2f64.sqrt()
    }

    /// Half-width of the uniform support, `stddev * sqrt(3)`.
    fn uniform_half_width(&self) -> f64 {
        self.stddev * 3f64.sqrt()
    }

    /// Draws one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.stddev * z
            }
            NoiseFamily::Laplace => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                let mag = -(1.0 - 2.0 * u.abs()).ln();
                self.laplace_scale() * mag.copysign(u)
            }
            NoiseFamily::Uniform => {
                let h = self.uniform_half_width();
                rng.random_range(-h..=h)
            }
        }
    }

    /// Closed-form differential entropy in nats.
    pub fn differential_entropy(&self) -> f64 {
        match self.family {
            NoiseFamily::Gaussian => 0.5 * (2.0 * PI * E * self.variance()).ln(),
            NoiseFamily::Laplace => 1.0 + (2.0 * self.laplace_scale()).ln(),
            NoiseFamily::Uniform => (2.0 * self.uniform_half_width()).ln(),
        }
    }
}

/// Free-function form of [`NoiseSpec::sample`].
pub fn sample_noise<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> f64 {
    spec.sample(rng)
}

/// Free-function form of [`NoiseSpec::differential_entropy`] (nats).
pub fn differential_entropy(spec: &NoiseSpec) -> f64 {
    spec.differential_entropy()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Perfect,
    Awgn,
    Quantized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuantizerSpec {
    /// Mid-tread uniform quantizer with unbounded range.
    Uniform { step: f64 },
    /// Lloyd-Max codebook with a fixed number of levels, trained on pilot
    /// samples of the transmitted signal.
    LloydMax { levels: usize },
}

/// Observer-to-controller link. Only the fields belonging to `kind` may be
/// set; [`validate`] enforces this.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantizer: Option<QuantizerSpec>,
}

impl ChannelSpec {
    pub fn perfect() -> Self {
        Self {
            kind: ChannelKind::Perfect,
            snr: None,
            quantizer: None,
        }
    }

    /// `snr` is a linear power ratio, not dB.
    pub fn awgn(snr: f64) -> Self {
        Self {
            kind: ChannelKind::Awgn,
            snr: Some(snr),
            quantizer: None,
        }
    }

    pub fn uniform(step: f64) -> Self {
        Self {
            kind: ChannelKind::Quantized,
            snr: None,
            quantizer: Some(QuantizerSpec::Uniform { step }),
        }
    }

    pub fn lloyd_max(levels: usize) -> Self {
        Self {
            kind: ChannelKind::Quantized,
            snr: None,
            quantizer: Some(QuantizerSpec::LloydMax { levels }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertainFamily {
    Gaussian,
    Uniform,
}

/// Random plant gain: when enabled, the plant draws `a_t` i.i.d. each step
/// while the controller is designed for `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainA {
    pub enabled: bool,
    pub family: UncertainFamily,
    pub mean: f64,
    /// Standard deviation (Gaussian) or half-width (Uniform).
    pub spread: f64,
}

impl UncertainA {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            family: UncertainFamily::Gaussian,
            mean: 0.0,
            spread: 0.0,
        }
    }

    pub fn gaussian(mean: f64, spread: f64) -> Self {
        Self {
            enabled: true,
            family: UncertainFamily::Gaussian,
            mean,
            spread,
        }
    }

    /// True when the plant gain actually has to be sampled; a zero spread
    /// consumes no randomness.
    pub fn is_random(&self) -> bool {
        self.enabled && self.spread > 0.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            UncertainFamily::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.mean + self.spread * z
            }
            UncertainFamily::Uniform => {
                rng.random_range(self.mean - self.spread..=self.mean + self.spread)
            }
        }
    }
}

impl Default for UncertainA {
    fn default() -> Self {
        Self::disabled()
    }
}

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e12;

fn default_divergence_threshold() -> f64 {
    DEFAULT_DIVERGENCE_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: SystemParams,
    pub disturbance: NoiseSpec,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub uncertain_a: UncertainA,
    pub horizon: usize,
    pub burn_in: usize,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default = "default_divergence_threshold")]
    pub divergence_threshold: f64,
}

impl ExperimentConfig {
    /// Plant gain the controller and filter are designed for.
    pub fn nominal_a(&self) -> f64 {
        if self.uncertain_a.enabled {
            self.uncertain_a.mean
        } else {
            self.params.a
        }
    }

    /// Parameters with `a` replaced by [`ExperimentConfig::nominal_a`].
    pub fn design_params(&self) -> SystemParams {
        SystemParams {
            a: self.nominal_a(),
            ..self.params
        }
    }

    pub fn with_channel(&self, channel: ChannelSpec) -> Self {
        Self {
            channel,
            ..self.clone()
        }
    }
}

impl Default for ExperimentConfig {
    /// The fixed-A Gaussian preset over a perfect link.
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            disturbance: NoiseSpec::gaussian(1.0),
            channel: ChannelSpec::perfect(),
            uncertain_a: UncertainA::disabled(),
            horizon: 100_000,
            burn_in: 10_000,
            trials: 20,
            master_seed: 0,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

/// One failed invariant, addressed by its JSON field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid config: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),
}

impl ModelError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ModelError::InvalidConfig(v) => v,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// An [`ExperimentConfig`] that passed [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(ExperimentConfig);

impl ValidatedConfig {
    pub fn into_inner(self) -> ExperimentConfig {
        self.0
    }
}

impl Deref for ValidatedConfig {
    type Target = ExperimentConfig;

    fn deref(&self) -> &ExperimentConfig {
        &self.0
    }
}

impl TryFrom<ExperimentConfig> for ValidatedConfig {
    type Error = ModelError;

    fn try_from(cfg: ExperimentConfig) -> Result<Self, ModelError> {
        validate(cfg)
    }
}

#[derive(Default)]
struct Checker(Vec<Violation>);

impl Checker {
    fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.0.push(Violation {
                path: path.to_string(),
                message: message.into(),
            });
        }
    }

    fn finite(&mut self, value: f64, path: &str) -> bool {
        self.check(value.is_finite(), path, "must be finite");
        value.is_finite()
    }
}

/// Checks every invariant of `cfg` and its nested types.
pub fn validate(cfg: ExperimentConfig) -> Result<ValidatedConfig, ModelError> {
    let mut c = Checker::default();
    let p = &cfg.params;

    for (value, path) in [
        (p.a, "params.a"),
        (p.b, "params.b"),
        (p.c, "params.c"),
        (p.q, "params.q"),
        (p.r, "params.r"),
        (p.w, "params.w"),
        (p.v, "params.v"),
    ] {
        c.finite(value, path);
    }
    // NaN is reported once, by the finiteness check above.
    c.check(
        p.r > 0.0 || p.r.is_nan(),
        "params.r",
        "control weight must be > 0",
    );
    c.check(
        p.q >= 0.0 || p.q.is_nan(),
        "params.q",
        "state weight must be >= 0",
    );
    c.check(
        p.w >= 0.0 || p.w.is_nan(),
        "params.w",
        "disturbance variance must be >= 0",
    );
    c.check(
        p.v >= 0.0 || p.v.is_nan(),
        "params.v",
        "measurement noise variance must be >= 0",
    );
    if p.observed == Observed::Fully {
        c.check(p.v == 0.0, "params.v", "fully observed requires v = 0");
        c.check(p.c == 1.0, "params.c", "fully observed requires c = 1");
    }
    c.check(
        !(p.q > 0.0 && p.b == 0.0),
        "params.b",
        "b must be nonzero when q > 0",
    );

    let d = &cfg.disturbance;
    if c.finite(d.stddev, "disturbance.stddev") {
        c.check(d.stddev > 0.0, "disturbance.stddev", "must be > 0");
        // w = 0 switches the disturbance off; otherwise both must agree.
        c.check(
            p.w == 0.0 || (p.w - d.variance()).abs() <= 1e-9 * p.w.max(d.variance()),
            "disturbance.stddev",
            "stddev^2 must equal params.w (or params.w = 0)",
        );
    }

    let ch = &cfg.channel;
    match ch.kind {
        ChannelKind::Perfect => {
            c.check(ch.snr.is_none(), "channel.snr", "only allowed for awgn");
            c.check(
                ch.quantizer.is_none(),
                "channel.quantizer",
                "only allowed for quantized",
            );
        }
        ChannelKind::Awgn => {
            match ch.snr {
                Some(snr) => c.check(
                    snr.is_finite() && snr > 0.0,
                    "channel.snr",
                    "must be finite and > 0",
                ),
                None => c.check(false, "channel.snr", "required for awgn"),
            }
            c.check(
                ch.quantizer.is_none(),
                "channel.quantizer",
                "only allowed for quantized",
            );
        }
        ChannelKind::Quantized => {
            c.check(ch.snr.is_none(), "channel.snr", "only allowed for awgn");
            match ch.quantizer {
                Some(QuantizerSpec::Uniform { step }) => c.check(
                    step.is_finite() && step > 0.0,
                    "channel.quantizer.step",
                    "must be finite and > 0",
                ),
                Some(QuantizerSpec::LloydMax { levels }) => {
                    c.check(levels >= 2, "channel.quantizer.levels", "must be >= 2")
                }
                None => c.check(false, "channel.quantizer", "required for quantized"),
            }
        }
    }

    let ua = &cfg.uncertain_a;
    c.finite(ua.mean, "uncertain_a.mean");
    if c.finite(ua.spread, "uncertain_a.spread") {
        c.check(ua.spread >= 0.0, "uncertain_a.spread", "must be >= 0");
    }

    c.check(cfg.horizon >= 10, "horizon", "must be >= 10");
    c.check(cfg.burn_in < cfg.horizon, "burn_in", "must be < horizon");
    c.check(cfg.trials >= 1, "trials", "must be >= 1");
    c.check(
        cfg.divergence_threshold.is_finite() && cfg.divergence_threshold > 0.0,
        "divergence_threshold",
        "must be finite and > 0",
    );

    if c.0.is_empty() {
        Ok(ValidatedConfig(cfg))
    } else {
        Err(ModelError::InvalidConfig(c.0))
    }
}
