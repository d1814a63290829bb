//! Computable rates of convergence to equilibrium.
//!
//! For a start law `tau` and the equilibrium law, three distances between
//! the time-`t` law and equilibrium are evaluated exactly (by summing the
//! transition tails) and bounded in closed form. Every bound has the shape
//! `constant(tau) * factor(t)` with the same time factor
//!
//! ```text
//! factor(t) = exp{ -mu t - theta (e^{-mu t} + mu t - 1) }
//! ```
//!
//! so the exact distance and its bound can be compared on a grid to watch
//! the inequality hold and to see how much is given away. The moment
//! distance weights states by the polynomial `h_m`, whose coefficients are
//! Poisson moments of `theta` (Touchard polynomials); its `tau`-dependent
//! constant is the weighted Kantorovich-Rubinstein-style functional
//! computed by [`kr_functional`].

use std::fmt;

use crate::chain::{equilibrium, tail_r, ChainParams, StateDistribution};
use crate::error::{require, Error, Result};
use crate::specfun::stirling2;

/// Which distance a [`BoundReport`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    /// Sup distance between distribution functions.
    Kolmogorov,
    /// Difference of `m`-th moments.
    Moment(usize),
    /// L1 distance between distribution functions.
    Gini,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundKind::Kolmogorov => write!(f, "kolmogorov"),
            BoundKind::Moment(m) => write!(f, "moment{m}"),
            BoundKind::Gini => write!(f, "gini"),
        }
    }
}

/// Exact distance at time `t` together with its closed-form bound.
///
/// The `exact` side of the moment distance includes a conservative
/// truncation remainder, so `holds()` checking `exact <= bound + 1e-10`
/// is an honest test of the inequality.
#[derive(Debug, Clone, Copy)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub t: f64,
    pub exact: f64,
    pub bound: f64,
}

impl BoundReport {
    pub fn holds(&self) -> bool {
        self.exact <= self.bound + 1e-10
    }

    /// `exact / bound`; zero when both vanish.
    pub fn ratio(&self) -> f64 {
        if self.bound == 0.0 {
            if self.exact == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.exact / self.bound
        }
    }
}

/// The common time factor of all three bounds. Equals one at `t = 0` and
/// decays strictly to zero.
pub fn equilibrium_factor(params: &ChainParams, t: f64) -> f64 {
    let mt = params.mu() * t;
    (-mt - params.theta() * ((-mt).exp_m1() + mt)).exp()
}

fn validate_t(t: f64) -> Result<()> {
    require(t >= 0.0 && t.is_finite(), "t", t, "must be non-negative and finite")
}

/// Kolmogorov (sup) distance between the time-`t` law started from `tau`
/// and equilibrium, with its bound `sup_n |Delta(n)| * factor(t)`.
pub fn kolmogorov_bound(
    params: &ChainParams,
    tau: &StateDistribution,
    t: f64,
) -> Result<BoundReport> {
    validate_t(t)?;
    let eq = equilibrium(params);
    let mut sup_exact: f64 = 0.0;
    let mut sup_delta: f64 = 0.0;
    let mut n = 1usize;
    loop {
        let i_n = eq.tail(n);
        let tau_n = tau.tail_from(n);
        let r_n = tail_r(params, tau, n, t)?;
        sup_exact = sup_exact.max((r_n - i_n).abs());
        sup_delta = sup_delta.max((tau_n - i_n).abs());
        if i_n < 1e-16 && tau_n < 1e-16 && n > tau.max_state() {
            break;
        }
        n += 1;
        if n > 100_000 {
            return Err(Error::NonConvergence { what: "Kolmogorov distance scan", terms: n });
        }
    }
    Ok(BoundReport {
        kind: BoundKind::Kolmogorov,
        t,
        exact: sup_exact,
        bound: sup_delta * equilibrium_factor(params, t),
    })
}

/// Gini (L1) distance between distribution functions, with its bound
/// `factor(t) * sum_j |Delta(j+1)|`.
pub fn gini_bound(params: &ChainParams, tau: &StateDistribution, t: f64) -> Result<BoundReport> {
    validate_t(t)?;
    let eq = equilibrium(params);
    let mut exact = 0.0;
    let mut j = 0usize;
    loop {
        let i_j = eq.tail(j + 1);
        let tau_j = tau.tail_from(j + 1);
        let r_j = tail_r(params, tau, j + 1, t)?;
        exact += (r_j - i_j).abs();
        if i_j < 1e-15 && tau_j < 1e-15 && j > tau.max_state() {
            // everything past here is dominated by two geometric tails
            exact += 2.0 * (r_j + i_j);
            break;
        }
        j += 1;
        if j > 100_000 {
            return Err(Error::NonConvergence { what: "Gini distance scan", terms: j });
        }
    }
    let g0 = kr_functional(params, tau, 1)?;
    Ok(BoundReport {
        kind: BoundKind::Gini,
        t,
        exact,
        bound: g0 * equilibrium_factor(params, t),
    })
}

/// Difference of `m`-th moments between the time-`t` law and equilibrium,
/// written as a tail sum; its bound is `m * K_{h_m}(tau) * factor(t)`.
///
/// The exact side adds a conservative remainder for the truncated tail, so
/// the reported value is an upper bound on the true difference that is
/// accurate to roughly `1e-13`.
pub fn moment_bound(
    params: &ChainParams,
    tau: &StateDistribution,
    t: f64,
    m: usize,
) -> Result<BoundReport> {
    validate_t(t)?;
    require(m >= 1, "m", m as f64, "moment order must be at least one")?;
    let eq = equilibrium(params);
    let theta = params.theta();
    let mut signed = 0.0;
    let remainder;
    let mut k = 0usize;
    loop {
        let kf = k as f64;
        let weight = (kf + 1.0).powi(m as i32) - kf.powi(m as i32);
        let i_k = eq.tail(k + 1);
        let r_k = tail_r(params, tau, k + 1, t)?;
        signed += weight * (r_k - i_k);
        let probe = weight * (r_k + i_k);
        if probe < 1e-15 * (1.0 + signed.abs())
            && kf > 2.0 * theta
            && kf > m as f64
            && k > tau.max_state()
        {
            // past 2 theta the tails at least halve per step while the
            // weights grow by under 50 percent, so four last terms cover it
            remainder = 4.0 * probe;
            break;
        }
        k += 1;
        if k > 100_000 {
            return Err(Error::NonConvergence { what: "moment distance scan", terms: k });
        }
    }
    let kh = kr_functional(params, tau, m)?;
    Ok(BoundReport {
        kind: BoundKind::Moment(m),
        t,
        exact: signed.abs() + remainder,
        bound: m as f64 * kh * equilibrium_factor(params, t),
    })
}

/// Weight polynomial of the `m`-th moment bound:
/// `h_m(x) = sum_{i=0}^{m-1} C(m-1, i) x^{m-1-i} M_i(theta)` where `M_i`
/// is the `i`-th moment of a Poisson(`theta`) variable, so
/// `h_m(x) = E[(x + Poisson(theta))^{m-1}]`. `h_1 = 1`, `h_2 = x + theta`.
pub fn h_weight(params: &ChainParams, m: usize, x: f64) -> Result<f64> {
    require(m >= 1, "m", m as f64, "moment order must be at least one")?;
    require(x >= 0.0 && x.is_finite(), "x", x, "must be non-negative and finite")?;
    let moments = poisson_moments(params.theta(), m - 1)?;
    let mut binom = 1.0;
    let mut sum = 0.0;
    for (i, mi) in moments.iter().enumerate() {
        if i > 0 {
            binom *= (m - i) as f64 / i as f64;
        }
        sum += binom * x.powi((m - 1 - i) as i32) * mi;
    }
    Ok(sum)
}

/// Raw Poisson(theta) moments `M_0..=M_n` via Stirling numbers:
/// `M_i = sum_k S(i, k) theta^k`.
fn poisson_moments(theta: f64, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut mi = 0.0;
        let mut tp = 1.0;
        for k in 0..=i {
            if k > 0 {
                tp *= theta;
            }
            mi += stirling2(i, k)? as f64 * tp;
        }
        out.push(mi);
    }
    Ok(out)
}

/// Weighted discrepancy functional between `tau` and equilibrium:
///
/// ```text
/// K_{h_m}(tau) = sum_j |T(j) - Pi(j)| * int_j^{j+1} h_m(x) dx
/// ```
///
/// with `T`, `Pi` the distribution functions of `tau` and equilibrium. The
/// piecewise integrals are evaluated exactly (the integrand is a
/// polynomial); the sum is truncated once both distribution functions are
/// within `1e-14` of one.
pub fn kr_functional(params: &ChainParams, tau: &StateDistribution, m: usize) -> Result<f64> {
    require(m >= 1, "m", m as f64, "moment order must be at least one")?;
    let eq = equilibrium(params);
    let moments = poisson_moments(params.theta(), m - 1)?;
    // int_j^{j+1} x^p dx = ((j+1)^{p+1} - j^{p+1}) / (p+1)
    let segment = |j: f64| -> f64 {
        let mut binom = 1.0;
        let mut sum = 0.0;
        for (i, mi) in moments.iter().enumerate() {
            if i > 0 {
                binom *= (m - i) as f64 / i as f64;
            }
            let p = (m - 1 - i) as i32;
            let integral = ((j + 1.0).powi(p + 1) - j.powi(p + 1)) / (p + 1) as f64;
            sum += binom * integral * mi;
        }
        sum
    };
    let mut total = 0.0;
    let mut j = 0usize;
    loop {
        let i_j = eq.tail(j + 1);
        let tau_j = tau.tail_from(j + 1);
        total += (tau_j - i_j).abs() * segment(j as f64);
        if i_j < 1e-14 && tau_j < 1e-14 && j > tau.max_state() {
            return Ok(total);
        }
        j += 1;
        if j > 100_000 {
            return Err(Error::NonConvergence { what: "weighted discrepancy sum", terms: j });
        }
    }
}
