//! Scalar Riccati recursions and their steady states.
//!
//! The controller side is the usual LQR cost-to-go recursion. The filter
//! side covers both the classical Kalman prediction Riccati and the variant
//! for an observer-to-controller AWGN link, where the innovation is sent at
//! a fixed signal-to-noise ratio:
//!
//! ```text
//! P' = A^2 P (1 - (C^2 P / (C^2 P + V)) (snr / (snr + 1))) + W
//! ```
//!
//! With `C = V = 1` this is the usual unit-measurement-noise form; with
//! `V = 0` it reduces to `P' = A^2 P / (snr + 1) + W`. The classical filter
//! is the `snr -> inf` limit. All costs are per stage (time averaged).

use thiserror::Error;

use crate::model::{SystemParams, DEFAULT_DIVERGENCE_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop when `|x_{k+1} - x_k| < tol * max(1, |x_k|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Iterates above this are declared divergent.
    pub divergence_threshold: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 1_000_000,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RiccatiError {
    #[error(
        "Riccati iteration did not converge after {iterations} iterations (last iterate {last})"
    )]
    NotConverged { iterations: usize, last: f64 },
    #[error("Riccati iteration diverged after {iterations} iterations (last iterate {last})")]
    Diverged { iterations: usize, last: f64 },
}

/// Steady-state LQR solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSolution {
    /// Cost-to-go coefficient.
    pub s: f64,
    /// Feedback gain, `u = -l * x_hat`.
    pub l: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ControlSolution {
    pub fn require_converged(self) -> Result<Self, RiccatiError> {
        if self.converged {
            Ok(self)
        } else {
            Err(RiccatiError::NotConverged {
                iterations: self.iterations,
                last: self.s,
            })
        }
    }
}

/// Steady-state filter solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSolution {
    /// One-step prediction error variance.
    pub p: f64,
    /// Filtered error variance after the measurement update; equals
    /// `(p - w) / a^2` whenever `a != 0`.
    pub sigma: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FilterSolution {
    pub fn require_converged(self) -> Result<Self, RiccatiError> {
        if self.converged {
            Ok(self)
        } else {
            Err(RiccatiError::NotConverged {
                iterations: self.iterations,
                last: self.p,
            })
        }
    }
}

enum FixedPoint {
    Converged { x: f64, iterations: usize },
    Stalled { x: f64, iterations: usize },
    Diverged { x: f64, iterations: usize },
}

fn iterate(x0: f64, opts: &SolverOptions, map: impl Fn(f64) -> f64) -> FixedPoint {
    let mut x = x0;
    let mut last_step = 0.0;
    for k in 1..=opts.max_iter {
        let next = map(x);
        if !next.is_finite() || next.abs() > opts.divergence_threshold {
            return FixedPoint::Diverged {
                x: next,
                iterations: k,
            };
        }
        last_step = next - x;
        let done = last_step.abs() < opts.tol * x.abs().max(1.0);
        x = next;
        if done {
            return FixedPoint::Converged { x, iterations: k };
        }
    }
    // These maps are monotone, so still climbing at the cap means the
    // iterate is unbounded and merely slow to cross the threshold.
    if last_step > 0.0 {
        FixedPoint::Diverged {
            x,
            iterations: opts.max_iter,
        }
    } else {
        FixedPoint::Stalled {
            x,
            iterations: opts.max_iter,
        }
    }
}

/// LQR gain for a given cost-to-go coefficient.
pub(crate) fn control_gain(params: &SystemParams, s: f64) -> f64 {
    let den = params.r + params.b * params.b * s;
    params.a * params.b * s / den
}

/// One backward step `S(t) = Q + A^2 R S(t+1) / (R + B^2 S(t+1))`.
pub(crate) fn control_step(params: &SystemParams, s_next: f64) -> f64 {
    let den = params.r + params.b * params.b * s_next;
    params.q + params.a * params.a * params.r * s_next / den
}

/// Fraction of the prediction variance removed by one measurement update
/// over a link passing `link_factor` (`snr / (snr + 1)`, 1 for a perfect link).
fn update_factor(params: &SystemParams, p: f64, link_factor: f64) -> f64 {
    let c2p = params.c * params.c * p;
    let den = c2p + params.measurement_noise();
    let g = if den > 0.0 { c2p / den } else { 0.0 };
    1.0 - g * link_factor
}

fn link_factor(snr: f64) -> f64 {
    if snr.is_infinite() {
        1.0
    } else {
        snr / (snr + 1.0)
    }
}

/// One forward step of the AWGN-link filter recursion.
pub(crate) fn awgn_filter_step(params: &SystemParams, snr: f64, p: f64) -> f64 {
    let a2 = params.a * params.a;
    a2 * p * update_factor(params, p, link_factor(snr)) + params.w
}

/// Iterates the LQR recursion from `S = Q` to its fixed point.
pub fn control_steady_state(params: &SystemParams) -> ControlSolution {
    control_steady_state_with(params, &SolverOptions::default())
}

pub fn control_steady_state_with(params: &SystemParams, opts: &SolverOptions) -> ControlSolution {
    let (s, converged, iterations) = match iterate(params.q, opts, |s| control_step(params, s)) {
        FixedPoint::Converged { x, iterations } => (x, true, iterations),
        FixedPoint::Stalled { x, iterations } | FixedPoint::Diverged { x, iterations } => {
            (x, false, iterations)
        }
    };
    ControlSolution {
        s,
        l: control_gain(params, s),
        converged,
        iterations,
    }
}

fn filter_steady_state(
    params: &SystemParams,
    snr: f64,
    opts: &SolverOptions,
) -> Result<FilterSolution, RiccatiError> {
    let factor = link_factor(snr);
    let step = |p: f64| awgn_filter_step(params, snr, p);
    let (p, converged, iterations) = match iterate(params.w, opts, step) {
        FixedPoint::Converged { x, iterations } => (x, true, iterations),
        FixedPoint::Stalled { x, iterations } => (x, false, iterations),
        FixedPoint::Diverged { x, iterations } => {
            return Err(RiccatiError::Diverged {
                iterations,
                last: x,
            })
        }
    };
    Ok(FilterSolution {
        p,
        sigma: p * update_factor(params, p, factor),
        converged,
        iterations,
    })
}

/// Steady state of the filter recursion for an AWGN link at `snr`
/// (linear). Diverges exactly when `snr <= a^2 - 1`.
pub fn awgn_filter_steady_state(
    params: &SystemParams,
    snr: f64,
) -> Result<FilterSolution, RiccatiError> {
    filter_steady_state(params, snr, &SolverOptions::default())
}

pub fn awgn_filter_steady_state_with(
    params: &SystemParams,
    snr: f64,
    opts: &SolverOptions,
) -> Result<FilterSolution, RiccatiError> {
    filter_steady_state(params, snr, opts)
}

/// Steady state of the classical Kalman prediction Riccati
/// `P = A^2 P V / (C^2 P + V) + W`. Fully observed gives `P = W`, `sigma = 0`.
pub fn classical_filter_steady_state(
    params: &SystemParams,
) -> Result<FilterSolution, RiccatiError> {
    filter_steady_state(params, f64::INFINITY, &SolverOptions::default())
}

pub fn classical_filter_steady_state_with(
    params: &SystemParams,
    opts: &SolverOptions,
) -> Result<FilterSolution, RiccatiError> {
    filter_steady_state(params, f64::INFINITY, opts)
}

/// Per-stage cost `Q sigma + S (A^2 sigma + W - sigma)` for a given
/// filtered error variance.
pub fn stage_cost(params: &SystemParams, control: &ControlSolution, sigma: f64) -> f64 {
    let a2 = params.a * params.a;
    params.q * sigma + control.s * (a2 * sigma + params.w - sigma)
}

/// Steady-state per-stage LQG cost achieved over an AWGN link at `snr`.
pub fn computed_cost_per_stage(params: &SystemParams, snr: f64) -> Result<f64, RiccatiError> {
    computed_cost_per_stage_with(params, snr, &SolverOptions::default())
}

pub fn computed_cost_per_stage_with(
    params: &SystemParams,
    snr: f64,
    opts: &SolverOptions,
) -> Result<f64, RiccatiError> {
    let filter = filter_steady_state(params, snr, opts)?.require_converged()?;
    let control = control_steady_state_with(params, opts).require_converged()?;
    Ok(stage_cost(params, &control, filter.sigma))
}

/// Classical (no communication constraint) minimum per-stage cost, using the
/// measurement noise of the configured observability mode.
pub fn b_min(params: &SystemParams) -> Result<f64, RiccatiError> {
    b_min_with(params, &SolverOptions::default())
}

pub fn b_min_with(params: &SystemParams, opts: &SolverOptions) -> Result<f64, RiccatiError> {
    let filter = filter_steady_state(params, f64::INFINITY, opts)?.require_converged()?;
    let control = control_steady_state_with(params, opts).require_converged()?;
    Ok(stage_cost(params, &control, filter.sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Positive root of `x^2 + b x + c = 0`.
    fn positive_root(b: f64, c: f64) -> f64 {
        (-b + (b * b - 4.0 * c).sqrt()) / 2.0
    }

    fn partial() -> SystemParams {
        SystemParams::partially_observed(2.0, 1.0)
    }

    #[test]
    fn control_matches_quadratic() {
        // S^2 - 4S - 1 = 0
        let s_star = positive_root(-4.0, -1.0);
        let sol = control_steady_state(&SystemParams::default());
        assert!(sol.converged);
        assert!((sol.s - s_star).abs() < 1e-9);
        assert!((sol.s - 4.236_068_0).abs() < 1e-6);
        assert!((sol.l - 1.618_034_0).abs() < 1e-6);
    }

    #[test]
    fn control_degenerate_cases() {
        let p = SystemParams {
            q: 0.0,
            ..SystemParams::default()
        };
        let sol = control_steady_state(&p);
        assert_eq!((sol.s, sol.l), (0.0, 0.0));
        assert!(sol.converged);

        let p = SystemParams {
            a: 0.0,
            ..SystemParams::default()
        };
        let sol = control_steady_state(&p);
        assert_eq!((sol.s, sol.l), (1.0, 0.0));
    }

    #[test]
    fn control_is_stabilizing() {
        for a in [0.5, 1.0, 2.0, 5.0, -3.0] {
            for b in [0.5, 1.0, 2.0] {
                let p = SystemParams {
                    a,
                    b,
                    ..SystemParams::default()
                };
                let sol = control_steady_state(&p);
                assert!(sol.converged);
                assert!(sol.s >= p.q);
                assert!((a - b * sol.l).abs() < 1.0, "a={a} b={b}");
                assert!((control_step(&p, sol.s) - sol.s).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn awgn_high_snr_matches_quadratic() {
        // P^2 - 4P - 1 = 0
        let sol = awgn_filter_steady_state(&partial(), 1e9).unwrap();
        assert!(sol.converged);
        assert!((sol.p - 4.236_068_0).abs() < 1e-6);
        assert!((sol.sigma - (sol.p - 1.0) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn awgn_threshold_snr() {
        // Brute-force oracle: the raw map climbs monotonically at snr = 3.
        let p = partial();
        let mut x = p.w;
        for _ in 0..10_000 {
            let next = 4.0 * x * (1.0 - (x / (x + 1.0)) * 0.75) + 1.0;
            assert!(next > x);
            x = next;
        }
        assert!(x > 3.9e4);

        for params in [partial(), SystemParams::default()] {
            assert!(matches!(
                awgn_filter_steady_state(&params, 3.0),
                Err(RiccatiError::Diverged { .. })
            ));
            assert!(awgn_filter_steady_state(&params, 3.01).unwrap().converged);
        }
        for a in [1.5, 2.0, 3.0] {
            let params = SystemParams::partially_observed(a, 1.0);
            let edge = a * a - 1.0;
            assert!(awgn_filter_steady_state(&params, edge).is_err(), "a={a}");
            assert!(
                awgn_filter_steady_state(&params, edge + 0.01)
                    .unwrap()
                    .converged,
                "a={a}"
            );
        }
    }

    #[test]
    fn no_disturbance_is_fixed_at_zero() {
        let mut p = partial();
        p.w = 0.0;
        let sol = awgn_filter_steady_state(&p, 10.0).unwrap();
        assert_eq!(sol.p, 0.0);
        assert_eq!(sol.sigma, 0.0);
    }

    #[test]
    fn classical_filter_cases() {
        let full = classical_filter_steady_state(&SystemParams::default()).unwrap();
        assert_eq!((full.p, full.sigma), (1.0, 0.0));

        let sol = classical_filter_steady_state(&partial()).unwrap();
        assert!((sol.p - 4.236_068_0).abs() < 1e-6);
        assert!((sol.sigma - 0.809_017_0).abs() < 1e-6);

        // P = 0.25 P / (P + 1) + 1  =>  P^2 - 0.25 P - 1 = 0
        let slow = SystemParams::partially_observed(0.5, 1.0);
        let sol = classical_filter_steady_state(&slow).unwrap();
        let oracle = positive_root(-0.25, -1.0);
        assert!((sol.p - oracle).abs() < 1e-9);
        assert!((sol.p - 1.132_782_2).abs() < 1e-6);
    }

    #[test]
    fn sigma_defined_at_zero_a() {
        let mut p = partial();
        p.a = 0.0;
        let sol = classical_filter_steady_state(&p).unwrap();
        assert_eq!(sol.p, 1.0);
        assert!((sol.sigma - 0.5).abs() < 1e-12);
    }

    #[test]
    fn computed_cost_examples() {
        let full = computed_cost_per_stage(&SystemParams::default(), 1e9).unwrap();
        assert!((full - 4.236_068_0).abs() < 1e-6);

        let part = computed_cost_per_stage(&partial(), 1e9).unwrap();
        // S W + L^2 (R + S) sigma with the closed-form values
        let s = 2.0 + 5f64.sqrt();
        let l = 2.0 * s / (s + 1.0);
        let sigma = (s - 1.0) / 4.0;
        let oracle = s + l * l * (1.0 + s) * sigma;
        assert!((part - oracle).abs() < 1e-6);
        assert!((part - 15.326_237_9).abs() < 1e-6);

        assert!(matches!(
            computed_cost_per_stage(&SystemParams::default(), 3.0),
            Err(RiccatiError::Diverged { .. })
        ));
    }

    #[test]
    fn cost_monotone_in_snr() {
        for params in [SystemParams::default(), partial()] {
            let costs: Vec<f64> = [4.0, 5.0, 8.0, 16.0, 64.0, 1024.0]
                .iter()
                .map(|&snr| computed_cost_per_stage(&params, snr).unwrap())
                .collect();
            assert!(costs.windows(2).all(|w| w[1] <= w[0]), "{costs:?}");
        }
    }

    #[test]
    fn b_min_examples() {
        assert!((b_min(&SystemParams::default()).unwrap() - 4.236_068_0).abs() < 1e-6);
        assert!((b_min(&partial()).unwrap() - 15.326_237_9).abs() < 1e-6);
        let mut p = SystemParams::fully_observed(0.5);
        p.q = 0.0;
        assert_eq!(b_min(&p).unwrap(), 0.0);
    }

    #[test]
    fn high_snr_limit_is_b_min() {
        for params in [SystemParams::default(), partial()] {
            let hi = computed_cost_per_stage(&params, 1e9).unwrap();
            let lo = b_min(&params).unwrap();
            assert!(((hi - lo) / lo).abs() < 1e-6);
        }
    }

    #[test]
    fn unobservable_unstable_plant_diverges() {
        let mut p = partial();
        p.c = 0.0;
        assert!(matches!(b_min(&p), Err(RiccatiError::Diverged { .. })));
    }
}
