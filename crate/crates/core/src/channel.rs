//! Observer-to-controller link realizations.
//!
//! - [`uniform_quantize`]: mid-tread, unbounded-range lattice quantizer.
//! - [`Codebook`] and [`lloyd_max`]: fixed-level-count quantizer trained on
//!   samples by alternating nearest-neighbor and centroid conditions.
//! - [`BinHistogram`] and [`empirical_entropy`]: plug-in entropy of the
//!   quantizer output, in bits.
//! - [`awgn_transmit`]: additive Gaussian noise at a given SNR.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("cannot design {levels} levels from {distinct} distinct sample values")]
    DegenerateSamples { distinct: usize, levels: usize },
    #[error("need at least {levels} samples, got {samples}")]
    TooFewSamples { samples: usize, levels: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
}

/// Quantizes `x` to the nearest multiple of `step`, ties away from zero.
/// Returns the lattice index and the reconstruction `index * step`.
pub fn uniform_quantize(x: f64, step: f64) -> (i64, f64) {
    let index = (x / step).round() as i64;
    (index, index as f64 * step)
}

/// Counts of quantizer output indices. Empty bins are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BinHistogram {
    counts: BTreeMap<i64, u64>,
    total: u64,
}

impl BinHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, bin: i64) {
        *self.counts.entry(bin).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Plug-in entropy in bits; see [`empirical_entropy`].
    pub fn entropy_bits(&self) -> f64 {
        empirical_entropy(self)
    }
}

impl FromIterator<i64> for BinHistogram {
    fn from_iter<I: IntoIterator<Item = i64>>(iter: I) -> Self {
        let mut h = Self::new();
        for bin in iter {
            h.record(bin);
        }
        h
    }
}

/// `sum_i (c_i / n) log2(n / c_i)`. Zero for an empty histogram.
pub fn empirical_entropy(hist: &BinHistogram) -> f64 {
    if hist.total == 0 {
        return 0.0;
    }
    let n = hist.total as f64;
    hist.counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Scalar quantizer: ascending reconstruction levels and the decision
/// thresholds between them. Cell `i` is `(thresholds[i-1], thresholds[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    levels: Vec<f64>,
    thresholds: Vec<f64>,
}

impl Codebook {
    pub fn new(levels: Vec<f64>, thresholds: Vec<f64>) -> Result<Self, ChannelError> {
        if levels.is_empty() {
            return Err(ChannelError::InvalidCodebook("no levels".into()));
        }
        if thresholds.len() + 1 != levels.len() {
            return Err(ChannelError::InvalidCodebook(format!(
                "{} levels need {} thresholds, got {}",
                levels.len(),
                levels.len() - 1,
                thresholds.len()
            )));
        }
        if levels.iter().chain(&thresholds).any(|v| !v.is_finite()) {
            return Err(ChannelError::InvalidCodebook("non-finite value".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ChannelError::InvalidCodebook(
                "levels not strictly ascending".into(),
            ));
        }
        for (i, t) in thresholds.iter().enumerate() {
            if !(levels[i] < *t && *t < levels[i + 1]) {
                return Err(ChannelError::InvalidCodebook(format!(
                    "threshold {i} = {t} not between its levels"
                )));
            }
        }
        Ok(Self { levels, thresholds })
    }

    /// Nearest-neighbor codebook: thresholds at the level midpoints.
    pub fn from_levels(levels: Vec<f64>) -> Result<Self, ChannelError> {
        let thresholds = midpoints(&levels);
        Self::new(levels, thresholds)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn cell(&self, x: f64) -> usize {
        self.thresholds.partition_point(|&t| t < x)
    }

    pub fn quantize(&self, x: f64) -> (usize, f64) {
        let i = self.cell(x);
        (i, self.levels[i])
    }

    /// Mean squared quantization error over `samples`.
    pub fn mse(&self, samples: &[f64]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = samples
            .iter()
            .map(|&x| {
                let e = x - self.quantize(x).1;
                e * e
            })
            .sum();
        sum / samples.len() as f64
    }

    /// Two columns `level,upper_threshold`; the last row has no threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,upper_threshold\n");
        for (i, level) in self.levels.iter().enumerate() {
            match self.thresholds.get(i) {
                Some(t) => writeln!(out, "{level:?},{t:?}"),
                None => writeln!(out, "{level:?},"),
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, ChannelError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "level,upper_threshold" => {}
            other => {
                return Err(ChannelError::InvalidCodebook(format!(
                    "bad header {other:?}"
                )))
            }
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| ChannelError::InvalidCodebook(format!("{s:?}: {e}")))
        };
        let mut levels = Vec::new();
        let mut thresholds = Vec::new();
        for line in lines {
            let (level, threshold) = line
                .split_once(',')
                .ok_or_else(|| ChannelError::InvalidCodebook(format!("bad row {line:?}")))?;
            levels.push(parse(level)?);
            if !threshold.trim().is_empty() {
                thresholds.push(parse(threshold)?);
            }
        }
        Self::new(levels, thresholds)
    }
}

fn midpoints(levels: &[f64]) -> Vec<f64> {
    levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydMaxOptions {
    /// Stop once no level moves by more than this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LloydMaxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydMaxResult {
    pub codebook: Codebook,
    /// Empirical MSE of each nearest-neighbor partition visited, starting
    /// with the initial uniform grid. Non-increasing up to prefix-sum
    /// rounding (relative 1e-12).
    pub mse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of times an empty cell was re-seeded by splitting the most
    /// populous one.
    pub empty_cells_recovered: usize,
}

impl LloydMaxResult {
    pub fn mse(&self) -> f64 {
        *self.mse_history.last().expect("history is never empty")
    }
}

/// Sorted samples with prefix sums, so cell statistics are O(log n).
struct SortedSamples {
    xs: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl SortedSamples {
    fn new(samples: &[f64]) -> Self {
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        let mut sum = Vec::with_capacity(xs.len() + 1);
        let mut sum_sq = Vec::with_capacity(xs.len() + 1);
        let (mut s, mut s2) = (0.0, 0.0);
        sum.push(0.0);
        sum_sq.push(0.0);
        for &x in &xs {
            s += x;
            s2 += x * x;
            sum.push(s);
            sum_sq.push(s2);
        }
        Self { xs, sum, sum_sq }
    }

    fn distinct(&self) -> usize {
        if self.xs.is_empty() {
            return 0;
        }
        1 + self.xs.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Index ranges `[b_i, b_{i+1})` of the cells cut by `thresholds`.
    fn bounds(&self, thresholds: &[f64]) -> Vec<usize> {
        let mut b = Vec::with_capacity(thresholds.len() + 2);
        b.push(0);
        b.extend(
            thresholds
                .iter()
                .map(|&t| self.xs.partition_point(|&x| x <= t)),
        );
        b.push(self.xs.len());
        b
    }

    fn mean(&self, lo: usize, hi: usize) -> f64 {
        (self.sum[hi] - self.sum[lo]) / (hi - lo) as f64
    }

    /// Squared error of `[lo, hi)` around `level`.
    fn sq_err(&self, lo: usize, hi: usize, level: f64) -> f64 {
        let n = (hi - lo) as f64;
        let s = self.sum[hi] - self.sum[lo];
        let s2 = self.sum_sq[hi] - self.sum_sq[lo];
        (s2 - 2.0 * level * s + n * level * level).max(0.0)
    }

    fn partition_mse(&self, levels: &[f64], bounds: &[usize]) -> f64 {
        let total: f64 = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.sq_err(bounds[i], bounds[i + 1], l))
            .sum();
        total / self.xs.len() as f64
    }
}

/// Designs a `levels`-point quantizer minimizing empirical MSE on `samples`.
///
/// Starts from the uniform grid of `levels` equal cells over the sample
/// range (cell midpoints as levels), so the result never does worse than
/// that grid.
pub fn lloyd_max(
    samples: &[f64],
    levels: usize,
    opts: &LloydMaxOptions,
) -> Result<LloydMaxResult, ChannelError> {
    if samples.len() < levels || levels == 0 {
        return Err(ChannelError::TooFewSamples {
            samples: samples.len(),
            levels,
        });
    }
    let data = SortedSamples::new(samples);
    let distinct = data.distinct();
    if distinct < levels.max(2) {
        return Err(ChannelError::DegenerateSamples { distinct, levels });
    }

    let lo = data.xs[0];
    let hi = *data.xs.last().expect("non-empty");
    let width = (hi - lo) / levels as f64;
    let mut current: Vec<f64> = (0..levels).map(|i| lo + (i as f64 + 0.5) * width).collect();

    let mut bounds = data.bounds(&midpoints(&current));
    let mut history = vec![data.partition_mse(&current, &bounds)];
    let mut recovered = 0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;
        let mut next = Vec::with_capacity(levels);
        let mut empty = 0;
        for i in 0..levels {
            let (a, b) = (bounds[i], bounds[i + 1]);
            if a < b {
                next.push(data.mean(a, b));
            } else {
                empty += 1;
            }
        }
        // Split the most populous cell into the means of its halves.
        // Splitting only ever lowers the error of that cell.
        for _ in 0..empty {
            recovered += 1;
            let cells = data.bounds(&midpoints(&next));
            let (widest, _) = (0..next.len())
                .map(|i| (i, cells[i + 1] - cells[i]))
                .max_by_key(|&(i, n)| (n, std::cmp::Reverse(i)))
                .expect("at least one cell");
            let (a, b) = (cells[widest], cells[widest + 1]);
            let mid = a + (b - a) / 2;
            let (left, right) = (data.mean(a, mid), data.mean(mid, b));
            if left < right {
                next[widest] = left;
                next.insert(widest + 1, right);
            } else {
                // all values in the cell coincide; nudge to keep levels distinct
                let gap = (hi - lo) * 1e-9;
                next.insert(widest + 1, next[widest] + gap);
            }
        }
        next.sort_by(f64::total_cmp);
        next.dedup();

        let shift = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let new_bounds = data.bounds(&midpoints(&next));
        let mse = data.partition_mse(&next, &new_bounds);
        history.push(mse);
        current = next;
        bounds = new_bounds;
        if empty == 0 && shift < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(LloydMaxResult {
        codebook: Codebook::from_levels(current)?,
        mse_history: history,
        iterations,
        converged,
        empty_cells_recovered: recovered,
    })
}

/// Returns `x + z` with `z ~ N(0, signal_power / snr)`.
pub fn awgn_transmit<R: Rng + ?Sized>(x: f64, signal_power: f64, snr: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    x + (signal_power / snr).sqrt() * z
}
