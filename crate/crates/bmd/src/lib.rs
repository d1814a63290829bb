//! Birth/mass-death Markov chain toolkit.
//!
//! The chain lives on the non-negative integers. From state `i` it jumps up
//! to `i + 1` at rate `lambda`, and for every `k = 1..=i` it jumps down to
//! `i - k` at rate `mu`, so the total rate out of `i` is
//! `lambda + i * mu = mu * (theta + i)` with `theta = lambda / mu`. A
//! downward jump erases a uniformly chosen block of top levels; the jump
//! magnitudes of the stationary chain carry enough information to recover
//! `theta`, which is what makes the model useful for predicting how many
//! not-yet-observed levels are still alive.
//!
//! Module map:
//!
//! * [`specfun`]: rising factorials, Kummer's function, the magnitude-mean
//!   link `L` with two derivatives (series and asymptotic regimes), and the
//!   small special-function kit the rest of the crate needs.
//! * [`chain`]: exact transition tails and rows, equilibrium law and
//!   moments, mean return times.
//! * [`sim`]: exact-event simulation, negative-jump records, first-jump
//!   densities.
//! * [`bounds`]: computable rates of convergence to equilibrium
//!   (Kolmogorov, moment, Gini distances).
//! * [`predict`]: posterior weights and tail laws for the unseen part of
//!   the population given a record of observed extinctions.
//! * [`infer`]: moment estimation of `theta` from jump magnitudes,
//!   consistency bounds, Bayesian robustness bounds.
//! * [`quad`]: adaptive Gauss-Kronrod quadrature used by validation code.

pub mod bounds;
pub mod chain;
mod error;
pub mod infer;
pub mod predict;
pub mod quad;
pub mod sim;
pub mod specfun;

pub use error::{Error, Result};
