//! Conditional inferential privacy for timestamped 1-D location traces.
//!
//! A trace `X = [x_1, .., x_d]` with timestamps `t_i` is released through the
//! additive Gaussian mechanism `Z = X + g`, `g ~ N(0, sigma_z2 I)`. The adversary
//! is assumed to know a zero-mean Gaussian-process conditional prior over the
//! trace (RBF kernel, length scale at most `l_max`). For a secret subsequence
//! `S` the Rényi loss of the release separates into a term for the released
//! secret points and a term for how the secret values shift the distribution
//! of the remaining points `U`:
//!
//! ```text
//! L = (lambda/2) [ ds^T Sigma_eff ds + |ds|^2 / sigma_z2 ]
//! Sigma_eff = A^T (Sigma_{u|s} + sigma_z2 I)^-1 A,   A = Sigma_us Sigma_ss^-1
//! ```
//!
//! and its worst case over the ball `|ds|_2^2 <= |S| r^2` is
//! `(lambda/2) (1 + sigma_z2 alpha*) / sigma_z2 * |S| r^2` with `alpha*` the top
//! eigenvalue of `Sigma_eff`.
//!
//! Modules:
//! - [`trace_io`]: trace data model and CSV/JSON files.
//! - [`kernel`]: covariance construction for the prior class.
//! - [`gp`]: conditioning, effective covariance and its spectrum.
//! - [`privacy`]: exact, decomposed and worst-case losses.
//! - [`calibrate`]: noise calibration, prior-class sweeps and subsequence audits.
//! - [`mechanism`]: the seeded Gaussian mechanism.
//! - [`verify`]: Monte Carlo oracles for the closed forms.

pub mod calibrate;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod mechanism;
pub mod privacy;
pub mod trace_io;
pub mod verify;

pub use error::{CipError, Result};

/// Version tag written into every JSON document the crate emits.
pub const SCHEMA_VERSION: u32 = 1;
