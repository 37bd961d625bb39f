//! Small-noise large-deviations laboratory for stochastic delay differential
//! equations with super-linearly growing coefficients.
//!
//! The crate revolves around the delay dynamics
//!
//! ```text
//! dX(t) = b(t, X(t), X(t - tau)) dt + sqrt(eps) sigma(t, X(t), X(t - tau)) dW(t),
//! X = phi on [-tau, 0],
//! ```
//!
//! whose rare-event probabilities decay exponentially as the noise intensity
//! `eps` vanishes, with a decay exponent given by a control-theoretic
//! variational problem. Everything needed to state, compute, and empirically
//! verify that picture at desk scale is here:
//!
//! - [`model`]: coefficient pairs `(b, sigma)` with declared structural
//!   constants (monotonicity, polynomial growth, coercivity), builtins, and
//!   a TOML model-file format with a tiny expression language ([`expr`]);
//! - [`check`]: sampled verification of the declared conditions, including
//!   the largest diffusion weight `eta` for which the one-sided monotonicity
//!   inequality empirically holds and the `eta > 2q - 1` gate;
//! - [`skeleton`]: the deterministic controlled equation solved by
//!   method-of-steps RK4 or by the truncated-diffusion fixed-point
//!   construction, plus the sup-norm a priori bound;
//! - [`sdde`]: plain and tamed Euler integrators for the noisy equation and
//!   its Girsanov-controlled variant with exact discrete reweighting, and
//!   the uniform-moment sweep;
//! - [`rate`]: the variational rate of a path (least-norm control recovery
//!   via pseudo-inverse) and its minimization over endpoint events by
//!   penalized quasi-Newton optimal control;
//! - [`mc`]: plain and importance-sampled probability estimates with
//!   effective-sample-size diagnostics, and the noise sweep extrapolating
//!   the decay rate for comparison with the variational value;
//! - [`cli`]: the `sdde-ldp` binary over all of the above.
//!
//! Reproducibility is a design constraint throughout: Monte Carlo samples
//! own counter-based RNG streams keyed by sample index ([`rng`]), estimates
//! are reduced sequentially with compensated summation ([`stats`]), and a
//! fixed seed determines every output bit-for-bit regardless of thread
//! count.

// input guards are written `!(x > 0.0)` on purpose: the negation rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod cli;
pub mod control;
pub mod error;
pub mod event;
pub mod expr;
pub mod grid;
pub mod lbfgs;
pub mod mc;
pub mod model;
pub mod path;
pub mod rate;
pub mod rng;
pub mod sdde;
pub mod skeleton;
pub mod stats;

pub use control::Control;
pub use error::{Error, Result};
pub use event::{EventSpec, HalfspaceSide};
pub use grid::TimeGrid;
pub use model::{CoefficientModel, Declared};
pub use path::{InitialSegment, Origin, Trajectory};
pub use rng::{derive_stream, RngStream};
pub use sdde::Scheme;
