//! Downlink C-RAN resource allocation under rate-splitting multiple access
//! (RSMA).
//!
//! A cloud processor serves `K` single-antenna users through `B` base
//! stations (`L` antennas each) over capacity-limited fronthaul links. Each
//! user's data is split into a private stream and a common stream that a set
//! of users decodes successively for interference mitigation. The library
//! jointly designs precoding vectors and rate allocations to minimize a
//! weighted sum of the per-user rate-gap MSE and the total transmit power,
//!
//! ```text
//! psi = alpha * (1/K) * sum_k |r_k - r_k_des|^2  +  (1 - alpha) * sum_k ||w_k||^2
//! ```
//!
//! subject to per-BS fronthaul, per-BS transmit power, and per-stream
//! achievable-rate constraints. The non-convex SINR constraints are handled
//! with the quadratic transform from fractional programming: closed-form
//! auxiliary updates alternate with convex conic subproblems (second-order
//! plus exponential cones) until the objective settles.
//!
//! Module map:
//! - [`netmodel`]: scenario configuration, topology placement, channel draws.
//! - [`structure`]: serving clusters, common-message decode sets and orders.
//! - [`metrics`]: SINRs, achievable rates, fronthaul/power usage, objective
//!   and energy-efficiency evaluation, feasibility checks.
//! - [`conic`]: the per-iteration convex subproblem as an explicit conic
//!   program and its interior-point solution.
//! - [`qt_algo`]: the outer iterative algorithm.
//! - [`baselines`]: treating-interference-as-noise (TIN) and single-common-
//!   message (SCM) reference schemes.
//! - [`harness`]: experiment sweeps, brute-force oracles, CSV emission.

pub mod baselines;
pub mod conic;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod netmodel;
pub mod qt_algo;
pub mod report;
pub mod structure;
pub mod units;

pub use error::{BuildError, ConfigError, DomainError, RunError};

/// Complex scalar used for channels, precoders, and auxiliaries.
pub type Cx = num_complex::Complex64;
