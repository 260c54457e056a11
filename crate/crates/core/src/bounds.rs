//! Information-theoretic cost bounds for the scalar plant.
//!
//! For a disturbance with entropy power `N(w)` the rate needed to hold the
//! per-stage LQG cost at `b` satisfies
//!
//! ```text
//! R(b) >= log2|A| + 1/2 log2(1 + N(w) |M| / (b - b_min))
//! ```
//!
//! where `M = S^2 B^2 / (R + B^2 S)` comes from the control Riccati
//! equation written as `S = Q + A^2 (S - M)`. Rates are in bits per sample.

use std::f64::consts::{E, LN_2, PI};

use thiserror::Error;

use crate::model::{NoiseSpec, SystemParams};
use crate::riccati::{self, RiccatiError, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum BoundError {
    #[error("cost {cost} is not achievable at any finite rate (b_min = {b_min})")]
    CostNotAchievable { cost: f64, b_min: f64 },
    #[error("rate {rate} bits does not exceed the stabilization threshold log2|A| = {threshold}")]
    RateBelowStabilization { rate: f64, threshold: f64 },
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
}

/// Entropy power `exp(2 h) / (2 pi e)` of a scalar disturbance.
pub fn entropy_power(spec: &NoiseSpec) -> f64 {
    (2.0 * spec.differential_entropy()).exp() / (2.0 * PI * E)
}

/// Solves `S = Q + A^2 (S - M)`, `M = S^2 B^2 / (R + B^2 S)` by fixed-point
/// iteration from `S = Q`. Returns `(S, M)`.
pub fn solve_mare(params: &SystemParams) -> Result<(f64, f64), RiccatiError> {
    solve_mare_with(params, &SolverOptions::default())
}

fn mare_m(params: &SystemParams, s: f64) -> f64 {
    let b2 = params.b * params.b;
    s * s * b2 / (params.r + b2 * s)
}

pub fn solve_mare_with(
    params: &SystemParams,
    opts: &SolverOptions,
) -> Result<(f64, f64), RiccatiError> {
    let a2 = params.a * params.a;
    let mut s = params.q;
    for k in 1..=opts.max_iter {
        let next = params.q + a2 * (s - mare_m(params, s));
        if !next.is_finite() || next.abs() > opts.divergence_threshold {
            return Err(RiccatiError::Diverged {
                iterations: k,
                last: next,
            });
        }
        let done = (next - s).abs() < opts.tol * s.abs().max(1.0);
        s = next;
        if done {
            return Ok((s, mare_m(params, s)));
        }
    }
    Err(RiccatiError::NotConverged {
        iterations: opts.max_iter,
        last: s,
    })
}

/// AWGN capacity `1/2 log2(1 + snr)` in bits per channel use.
pub fn awgn_capacity(snr: f64) -> f64 {
    0.5 * snr.ln_1p() / LN_2
}

/// Everything the scalar bound needs, computed once per plant and
/// disturbance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundContext {
    pub params: SystemParams,
    /// Entropy power of the disturbance.
    pub n_w: f64,
    pub m: f64,
    pub s: f64,
    pub b_min: f64,
}

impl BoundContext {
    /// `b_min` uses the observability mode of `params`.
    pub fn new(params: &SystemParams, disturbance: &NoiseSpec) -> Result<Self, BoundError> {
        let (s, m) = solve_mare(params)?;
        Ok(Self {
            params: *params,
            n_w: entropy_power(disturbance),
            m,
            s,
            b_min: riccati::b_min(params)?,
        })
    }

    /// `log2|A|`, the data-rate threshold.
    pub fn stabilization_rate(&self) -> f64 {
        self.params.a.abs().log2()
    }

    fn excess_scale(&self) -> f64 {
        self.n_w * self.m.abs()
    }

    /// Minimum rate (bits) to achieve per-stage cost `b`.
    pub fn rate_lower_bound(&self, b: f64) -> Result<f64, BoundError> {
        if b.is_nan() || b <= self.b_min {
            return Err(BoundError::CostNotAchievable {
                cost: b,
                b_min: self.b_min,
            });
        }
        let ratio = self.excess_scale() / (b - self.b_min);
        Ok(self.stabilization_rate() + 0.5 * ratio.ln_1p() / LN_2)
    }

    /// Smallest per-stage cost reachable at rate `r` bits; the inverse of
    /// [`BoundContext::rate_lower_bound`].
    pub fn cost_lower_bound_at_rate(&self, r: f64) -> Result<f64, BoundError> {
        let threshold = self.stabilization_rate();
        if r.is_nan() || r <= threshold {
            return Err(BoundError::RateBelowStabilization { rate: r, threshold });
        }
        // 2^{2(r - log2|A|)} - 1, accurate near the asymptote
        let den = (2.0 * (r - threshold) * LN_2).exp_m1();
        Ok(self.b_min + self.excess_scale() / den)
    }

    /// Cost bound when the link is an AWGN channel at `snr`.
    pub fn cost_lower_bound_vs_snr(&self, snr: f64) -> Result<f64, BoundError> {
        self.cost_lower_bound_at_rate(awgn_capacity(snr))
    }
}

pub fn rate_lower_bound(b: f64, ctx: &BoundContext) -> Result<f64, BoundError> {
    ctx.rate_lower_bound(b)
}

pub fn cost_lower_bound_at_rate(r: f64, ctx: &BoundContext) -> Result<f64, BoundError> {
    ctx.cost_lower_bound_at_rate(r)
}

pub fn cost_lower_bound_vs_snr(snr: f64, ctx: &BoundContext) -> Result<f64, BoundError> {
    ctx.cost_lower_bound_vs_snr(snr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> BoundContext {
        BoundContext::new(&SystemParams::default(), &NoiseSpec::gaussian(1.0)).unwrap()
    }

    #[test]
    fn entropy_power_values() {
        assert!((entropy_power(&NoiseSpec::gaussian(1.0)) - 1.0).abs() < 1e-12);
        assert!((entropy_power(&NoiseSpec::laplace(1.0)) - E / PI).abs() < 1e-12);
        assert!((entropy_power(&NoiseSpec::laplace(1.0)) - 0.865_256_0).abs() < 1e-6);
        let uniform = entropy_power(&NoiseSpec::uniform(1.0));
        assert!((uniform - 6.0 / (PI * E)).abs() < 1e-12);
        assert!((uniform - 0.702_598_0).abs() < 1e-6);
    }

    #[test]
    fn entropy_power_below_variance() {
        for sigma in [0.5, 1.0, 3.0] {
            for spec in [NoiseSpec::laplace(sigma), NoiseSpec::uniform(sigma)] {
                assert!(entropy_power(&spec) < spec.variance());
            }
            let g = NoiseSpec::gaussian(sigma);
            assert!((entropy_power(&g) - g.variance()).abs() < 1e-12 * g.variance());
        }
    }

    #[test]
    fn mare_examples() {
        let (s, m) = solve_mare(&SystemParams::default()).unwrap();
        assert!((s - 4.236_068_0).abs() < 1e-6);
        // M = S - (S - Q) / A^2
        assert!((m - (s - (s - 1.0) / 4.0)).abs() < 1e-9);
        assert!((m - 3.427_051_0).abs() < 1e-6);

        let p = SystemParams {
            a: 0.0,
            b: 2.0,
            ..SystemParams::default()
        };
        let (s, m) = solve_mare(&p).unwrap();
        assert_eq!(s, 1.0);
        assert!((m - 4.0 / 5.0).abs() < 1e-12);

        let p = SystemParams { q: 0.0, ..p };
        assert_eq!(solve_mare(&p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn mare_matches_control_riccati() {
        for a in [0.3, 1.0, 2.0, 4.0] {
            for b in [0.5, 1.0, 3.0] {
                let p = SystemParams {
                    a,
                    b,
                    ..SystemParams::default()
                };
                let (s, m) = solve_mare(&p).unwrap();
                let ctrl = riccati::control_steady_state(&p);
                assert!((s - ctrl.s).abs() < 1e-9 * s.max(1.0));
                assert!((s - (p.q + a * a * (s - m))).abs() < 1e-9 * s.max(1.0));
                assert!((m - s * s * b * b / (p.r + b * b * s)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rate_bound_examples() {
        let c = ctx();
        let huge = c.rate_lower_bound(1e15 * c.b_min).unwrap();
        assert!((huge - 1.0).abs() < 1e-6);
        let b = c.b_min + c.n_w * c.m;
        assert!((b - 7.6631).abs() < 1e-4);
        assert!((c.rate_lower_bound(b).unwrap() - 1.5).abs() < 1e-12);
        assert!(matches!(
            c.rate_lower_bound(c.b_min),
            Err(BoundError::CostNotAchievable { .. })
        ));
    }

    #[test]
    fn cost_bound_examples() {
        let c = ctx();
        let b = c.cost_lower_bound_at_rate(1.5).unwrap();
        assert!((b - (c.b_min + c.n_w * c.m)).abs() < 1e-12);
        assert!((c.cost_lower_bound_at_rate(60.0).unwrap() - c.b_min).abs() < 1e-9);
        assert!(matches!(
            c.cost_lower_bound_at_rate(1.0),
            Err(BoundError::RateBelowStabilization { .. })
        ));
    }

    #[test]
    fn capacity_values() {
        assert_eq!(awgn_capacity(3.0), 1.0);
        assert!((awgn_capacity(1.0) - 0.5).abs() < 1e-15);
        assert!((awgn_capacity(15.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn snr_bound_examples() {
        let c = ctx();
        assert!(matches!(
            c.cost_lower_bound_vs_snr(3.0),
            Err(BoundError::RateBelowStabilization { .. })
        ));
        let b = c.cost_lower_bound_vs_snr(15.0).unwrap();
        assert!((b - (c.b_min + c.n_w * c.m / 3.0)).abs() < 1e-12);
        assert!((b - 5.3784).abs() < 1e-4);
        assert!((c.cost_lower_bound_vs_snr(1e9).unwrap() - c.b_min).abs() < 1e-6);
    }

    #[test]
    fn round_trip_rates() {
        let c = ctx();
        for r in [1.01, 1.5, 2.0, 5.0, 10.0] {
            let b = c.cost_lower_bound_at_rate(r).unwrap();
            assert!((c.rate_lower_bound(b).unwrap() - r).abs() < 1e-9, "r={r}");
        }
    }

    #[test]
    fn gaussian_curve_dominates() {
        let p = SystemParams::default();
        let g = BoundContext::new(&p, &NoiseSpec::gaussian(1.0)).unwrap();
        for other in [NoiseSpec::laplace(1.0), NoiseSpec::uniform(1.0)] {
            let o = BoundContext::new(&p, &other).unwrap();
            for r in [1.01, 1.2, 2.0, 4.0] {
                assert!(
                    g.cost_lower_bound_at_rate(r).unwrap()
                        >= o.cost_lower_bound_at_rate(r).unwrap()
                );
            }
        }
    }
}
