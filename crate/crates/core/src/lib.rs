//! Scalar LQG control with an information-limited observer-to-controller
//! link.
//!
//! The crate computes, for a scalar linear plant driven by Gaussian,
//! Laplace or uniform disturbances:
//!
//! - steady-state LQR and Kalman solutions, including the filter recursion
//!   for an AWGN link ([`riccati`]);
//! - the rate-distortion lower bound on the per-stage cost as a function of
//!   rate, and the AWGN capacity that feeds it ([`bounds`]);
//! - link realizations: uniform and Lloyd-Max quantizers, empirical output
//!   entropy, AWGN transmission ([`channel`]);
//! - seeded, parallel Monte Carlo of the closed loop with SNR and quantizer
//!   sweeps ([`sim`]).
//!
//! ```
//! use netlqg::bounds::BoundContext;
//! use netlqg::model::{NoiseSpec, SystemParams};
//!
//! let params = SystemParams::fully_observed(2.0);
//! let ctx = BoundContext::new(&params, &NoiseSpec::laplace(1.0)).unwrap();
//! // One extra bit above log2|A| buys most of the way to b_min.
//! let b = ctx.cost_lower_bound_at_rate(2.0).unwrap();
//! assert!(b > ctx.b_min && b < ctx.b_min + 1.0);
//! ```

pub mod bounds;
pub mod channel;
pub mod model;
pub mod presets;
pub mod riccati;
pub mod sim;

pub use model::{validate, ExperimentConfig, ValidatedConfig};
