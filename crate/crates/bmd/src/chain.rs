//! The birth/mass-death chain itself: rates, exact transition laws,
//! equilibrium quantities.
//!
//! Transition tail probabilities are the workhorse. For a start
//! distribution `nu` the tail `R_t(nu, n) = P(X(t) >= n)` is evaluated in a
//! centered form: the equilibrium tail plus an exponentially damped
//! correction,
//!
//! ```text
//! R_t(nu, n) = W I(n) + sum_{rho=0}^{n} c_rho(n, t) [nu([n-rho, inf)) - W I(n-rho)]
//! ```
//!
//! where `W` is the total mass of `nu`, `I(n) = theta^n / (theta+1)_n` is
//! the equilibrium tail, and
//! `c_rho = e^{-(theta + n - rho) mu t} (theta (1 - e^{-mu t}))^rho / rho!`.
//! Every coefficient is non-negative and their sum is at most one, so the
//! correction never amplifies; the coefficients are assembled in log space
//! so large `n` and `t` underflow gracefully instead of overflowing, and the
//! correction is accumulated with compensated summation. When the
//! correction cancels below what double precision can represent while its
//! absolute mass is still substantial, the routine reports precision loss
//! rather than returning noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

/// Chain parameters: up-jump rate `lambda`, per-block death rate `mu`.
///
/// The ratio `theta = lambda / mu` determines every distributional
/// quantity; `mu` alone sets the time scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    lambda: f64,
    mu: f64,
}

impl ChainParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        require(lambda > 0.0 && lambda.is_finite(), "lambda", lambda, "must be positive and finite")?;
        require(mu > 0.0 && mu.is_finite(), "mu", mu, "must be positive and finite")?;
        Ok(ChainParams { lambda, mu })
    }

    pub fn from_theta(theta: f64, mu: f64) -> Result<Self> {
        require(theta > 0.0 && theta.is_finite(), "theta", theta, "must be positive and finite")?;
        require(mu > 0.0 && mu.is_finite(), "mu", mu, "must be positive and finite")?;
        Ok(ChainParams { lambda: theta * mu, mu })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn theta(&self) -> f64 {
        self.lambda / self.mu
    }

    /// Total rate out of state `i`: `lambda + i mu`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.lambda + i as f64 * self.mu
    }
}

/// Generator entry `q(i, j)`: `lambda` up one, `mu` to each lower state,
/// minus the exit rate on the diagonal.
pub fn rate(params: &ChainParams, i: usize, j: usize) -> f64 {
    if j == i + 1 {
        params.lambda()
    } else if j == i {
        -params.exit_rate(i)
    } else if j < i {
        params.mu()
    } else {
        0.0
    }
}

/// Embedded jump-chain probability `pi(i, j) = q(i, j) / c(i)` for `j != i`.
///
/// From state 0 the only move is up, with probability one.
pub fn jump_prob(params: &ChainParams, i: usize, j: usize) -> f64 {
    let c = params.exit_rate(i);
    if j == i + 1 {
        params.lambda() / c
    } else if j < i {
        params.mu() / c
    } else {
        0.0
    }
}

/// A finitely supported distribution on the states, with an explicit lump
/// of unassigned tail mass left over from truncation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDistribution {
    weights: Vec<f64>,
    tail_mass: f64,
}

impl StateDistribution {
    /// Point mass at `x`.
    pub fn delta(x: usize) -> Self {
        let mut weights = vec![0.0; x + 1];
        weights[x] = 1.0;
        StateDistribution { weights, tail_mass: 0.0 }
    }

    /// Distribution from explicit weights summing to one.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        Self::with_tail(weights, 0.0)
    }

    /// Distribution from weights plus a tail lump; the total must be one
    /// to within `1e-12`.
    pub fn with_tail(weights: Vec<f64>, tail_mass: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput { what: "state weights" });
        }
        let mut sum = tail_mass;
        for &w in &weights {
            require(w >= 0.0 && w.is_finite(), "weight", w, "must be non-negative and finite")?;
            sum += w;
        }
        require(tail_mass >= 0.0, "tail_mass", tail_mass, "must be non-negative")?;
        require(
            (sum - 1.0).abs() <= 1e-12,
            "total mass",
            sum,
            "weights plus tail must sum to one within 1e-12",
        )?;
        Ok(StateDistribution { weights, tail_mass })
    }

    /// Geometric distribution with the given ratio, truncated at `n_max`
    /// and renormalized (no tail lump).
    pub fn truncated_geometric(ratio: f64, n_max: usize) -> Result<Self> {
        require(ratio > 0.0 && ratio < 1.0, "ratio", ratio, "must lie strictly in (0, 1)")?;
        let mut weights = Vec::with_capacity(n_max + 1);
        let mut w = 1.0;
        let mut sum = 0.0;
        for _ in 0..=n_max {
            weights.push(w);
            sum += w;
            w *= ratio;
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(StateDistribution { weights, tail_mass: 0.0 })
    }

    /// The equilibrium law truncated where its tail drops below `tol`;
    /// the remaining mass is kept as the tail lump, so the total is exact.
    pub fn equilibrium_truncated(params: &ChainParams, tol: f64) -> Result<Self> {
        require(tol > 0.0 && tol < 1.0, "tol", tol, "must lie strictly in (0, 1)")?;
        let eq = equilibrium(params);
        let mut weights = Vec::new();
        let mut n = 0usize;
        loop {
            weights.push(eq.pmf(n));
            if eq.tail(n + 1) < tol {
                break;
            }
            n += 1;
            if n > 1_000_000 {
                return Err(Error::NonConvergence { what: "equilibrium truncation", terms: n });
            }
        }
        let sum: f64 = weights.iter().sum();
        Ok(StateDistribution { weights, tail_mass: (1.0 - sum).max(0.0) })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn max_state(&self) -> usize {
        self.weights.len() - 1
    }

    /// Mass at and above `k`. Truncation bookkeeping mass counts as
    /// sitting at one past the last explicit state, matching [`Self::sample`].
    pub fn tail_from(&self, k: usize) -> f64 {
        if k > self.weights.len() {
            return 0.0;
        }
        if k == self.weights.len() {
            return self.tail_mass;
        }
        self.weights[k..].iter().sum::<f64>() + self.tail_mass
    }

    /// Draw a state by inverting the CDF; tail mass resolves to one past
    /// the truncation point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return s;
            }
        }
        self.weights.len()
    }
}

/// Equilibrium tail table `I(k) = theta^k / (theta+1)_k` for `k = 0..=n`.
fn equilibrium_tail_table(theta: f64, n: usize) -> Vec<f64> {
    let mut tab = Vec::with_capacity(n + 1);
    let mut v = 1.0;
    tab.push(v);
    for k in 1..=n {
        v *= theta / (theta + k as f64);
        tab.push(v);
    }
    tab
}

/// Centered tail evaluation; returns the tail value and the absolute mass
/// of the correction series (the conditioning diagnostic).
pub(crate) fn tail_r_core(
    params: &ChainParams,
    weights: &[f64],
    tail_mass: f64,
    n: usize,
    t: f64,
) -> Result<(f64, f64)> {
    let len = weights.len();
    // nu_tail[k] = nu([k, inf)) for k = 0..=len; the bookkeeping lump sits
    // at index len, so tails above it vanish
    let mut nu_tail = vec![tail_mass; len + 1];
    for k in (0..len).rev() {
        nu_tail[k] = nu_tail[k + 1] + weights[k];
    }
    let w_total = nu_tail[0];
    let nu_at = |k: usize| if k <= len { nu_tail[k] } else { 0.0 };
    if n == 0 {
        return Ok((w_total, 0.0));
    }
    if t == 0.0 {
        return Ok((nu_at(n), 0.0));
    }
    let theta = params.theta();
    let mt = params.mu() * t;
    let i_tab = equilibrium_tail_table(theta, n);
    // w = theta (1 - e^{-mu t}), the Poisson-like intensity of the damped part
    let w = theta * (-(-mt).exp_m1());
    let ln_w = w.ln();
    let mut corr = 0.0;
    let mut comp = 0.0;
    let mut abs_sum = 0.0;
    let mut ln_fact = 0.0;
    for rho in 0..=n {
        if rho > 0 {
            ln_fact += (rho as f64).ln();
        }
        let ln_c = -theta * mt - ((n - rho) as f64) * mt + rho as f64 * ln_w - ln_fact;
        if ln_c < -745.0 {
            continue;
        }
        let c = ln_c.exp();
        let k = n - rho;
        let delta = nu_at(k) - w_total * i_tab[k];
        let term = c * delta;
        abs_sum += term.abs();
        let y = term - comp;
        let s = corr + y;
        comp = (s - corr) - y;
        corr = s;
    }
    if abs_sum >= 1e-10 && corr.abs() <= 1e-13 * abs_sum {
        return Err(Error::PrecisionLoss {
            what: "transition tail",
            detail: format!(
                "correction series cancels below double precision at n={n}, t={t}; \
                 the tail is numerically equal to its equilibrium value {:.17e}",
                w_total * i_tab[n]
            ),
        });
    }
    let val = (w_total * i_tab[n] + corr).clamp(0.0, w_total);
    Ok((val, abs_sum))
}

/// Tail of the time-`t` law started from `initial`:
/// `P(X(t) >= n | X(0) ~ initial)`.
pub fn tail_r(params: &ChainParams, initial: &StateDistribution, n: usize, t: f64) -> Result<f64> {
    require(t >= 0.0 && t.is_finite(), "t", t, "must be non-negative and finite")?;
    tail_r_core(params, &initial.weights, initial.tail_mass, n, t).map(|(v, _)| v)
}

/// Point transition probability `p_t(x, y)` as a difference of adjacent
/// tails, clamped at zero against roundoff.
pub fn transition(params: &ChainParams, x: usize, y: usize, t: f64) -> Result<f64> {
    require(t >= 0.0 && t.is_finite(), "t", t, "must be non-negative and finite")?;
    let init = StateDistribution::delta(x);
    let hi = tail_r_core(params, &init.weights, 0.0, y, t)?.0;
    let lo = tail_r_core(params, &init.weights, 0.0, y + 1, t)?.0;
    Ok((hi - lo).max(0.0))
}

/// One row of the transition kernel from `x`, together with the mass left
/// beyond the last computed state.
///
/// With `max_y = None` the row is extended until the remaining tail falls
/// below `1e-12`.
pub fn transition_row(
    params: &ChainParams,
    x: usize,
    t: f64,
    max_y: Option<usize>,
) -> Result<(Vec<f64>, f64)> {
    require(t >= 0.0 && t.is_finite(), "t", t, "must be non-negative and finite")?;
    let init = StateDistribution::delta(x);
    let mut tails = vec![tail_r_core(params, &init.weights, 0.0, 0, t)?.0];
    let mut n = 0usize;
    loop {
        let next = tail_r_core(params, &init.weights, 0.0, n + 1, t)?.0;
        tails.push(next);
        n += 1;
        match max_y {
            Some(m) => {
                if n > m {
                    break;
                }
            }
            None => {
                if next < 1e-12 {
                    break;
                }
                if n > 100_000 {
                    return Err(Error::NonConvergence { what: "transition row", terms: n });
                }
            }
        }
    }
    let remainder = *tails.last().unwrap();
    let row = tails.windows(2).map(|p| (p[0] - p[1]).max(0.0)).collect();
    Ok((row, remainder))
}

/// The equilibrium law of the chain.
///
/// Tails have the closed form `I(n) = theta^n / (theta+1)_n`, the pmf is
/// `theta^n (n+1) / (theta+1)_{n+1}`, and the law depends on the rates only
/// through `theta`.
#[derive(Debug, Clone, Copy)]
pub struct EquilibriumLaw {
    theta: f64,
}

/// Equilibrium law for the given parameters.
pub fn equilibrium(params: &ChainParams) -> EquilibriumLaw {
    EquilibriumLaw { theta: params.theta() }
}

impl EquilibriumLaw {
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `P(X >= n)` under equilibrium.
    pub fn tail(&self, n: usize) -> f64 {
        let mut v = 1.0;
        for k in 1..=n {
            v *= self.theta / (self.theta + k as f64);
        }
        v
    }

    /// `P(X = n)` under equilibrium.
    pub fn pmf(&self, n: usize) -> f64 {
        self.tail(n) * (n as f64 + 1.0) / (self.theta + n as f64 + 1.0)
    }

    /// Distribution function at a real argument.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        1.0 - self.tail(x.floor() as usize + 1)
    }
}

/// Moment `E[X^rho]` of the equilibrium law for real `rho > 0`, via the
/// telescoped tail sum `sum_{n >= 1} I(n) (n^rho - (n-1)^rho)`.
pub fn equilibrium_moment(params: &ChainParams, rho: f64) -> Result<f64> {
    require(rho > 0.0 && rho.is_finite(), "rho", rho, "must be positive and finite")?;
    let theta = params.theta();
    let mut i_n = 1.0;
    let mut acc = 0.0;
    for n in 1..=1_000_000usize {
        let nf = n as f64;
        i_n *= theta / (theta + nf);
        let term = i_n * (nf.powf(rho) - (nf - 1.0).powf(rho));
        acc += term;
        if nf > theta && term < acc * 1e-16 {
            return Ok(acc);
        }
    }
    Err(Error::NonConvergence { what: "equilibrium moment", terms: 1_000_000 })
}

/// Mean return time to a state for the stationary chain, by two routes.
///
/// `direct` evaluates the closed form
/// `(theta+1)_x / (mu (theta+x) (1+x) theta^x)`; `renewal` uses the renewal
/// identity: one over the exit rate times the equilibrium mass,
/// `1 / (c(x) pi(x))`. The two routes disagree by the state-dependent
/// factor `(theta+x+1)`; empirical return times reproduce the renewal
/// route (see the acceptance suite), so prefer it where the distinction
/// matters.
#[derive(Debug, Clone, Copy)]
pub struct ReturnTimeMean {
    pub direct: f64,
    pub renewal: f64,
}

impl ReturnTimeMean {
    /// Ratio `renewal / direct`, equal to `theta + x + 1`.
    pub fn discrepancy_factor(&self) -> f64 {
        self.renewal / self.direct
    }
}

/// Both evaluations of the mean return time to state `x`.
pub fn return_time_mean(params: &ChainParams, x: usize) -> Result<ReturnTimeMean> {
    let theta = params.theta();
    let mut poch = 1.0; // (theta+1)_x
    for i in 0..x {
        poch *= theta + 1.0 + i as f64;
    }
    let direct = poch
        / (params.mu() * (theta + x as f64) * (1.0 + x as f64) * theta.powi(x as i32));
    let pi_x = equilibrium(params).pmf(x);
    let renewal = 1.0 / (params.exit_rate(x) * pi_x);
    Ok(ReturnTimeMean { direct, renewal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(theta: f64, mu: f64) -> ChainParams {
        ChainParams::from_theta(theta, mu).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(ChainParams::new(1.0, 1.0).is_ok());
        assert!(ChainParams::new(0.0, 1.0).is_err());
        assert!(ChainParams::new(1.0, -1.0).is_err());
        assert!(ChainParams::from_theta(f64::NAN, 1.0).is_err());
        let p = ChainParams::new(3.0, 1.5).unwrap();
        assert_relative_eq!(p.theta(), 2.0);
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        let p = params(2.3, 0.7);
        for i in 0..20usize {
            let mut row = rate(&p, i, i);
            for j in 0..=(i + 1) {
                if j != i {
                    row += rate(&p, i, j);
                }
            }
            assert!(row.abs() < 1e-12, "row {i} sums to {row}");
        }
    }

    #[test]
    fn jump_chain_rows_sum_to_one() {
        let p = params(0.8, 2.0);
        assert_eq!(jump_prob(&p, 0, 1), 1.0);
        for i in 1..20usize {
            let mut row = jump_prob(&p, i, i + 1);
            for j in 0..i {
                row += jump_prob(&p, i, j);
            }
            assert_relative_eq!(row, 1.0, max_relative = 1e-14);
        }
        // up-probability is theta / (theta + i)
        let theta: f64 = 0.4;
        let q = params(theta, 1.3);
        for i in 0..10usize {
            assert_relative_eq!(
                jump_prob(&q, i, i + 1),
                theta / (theta + i as f64),
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn state_distribution_construction() {
        let d = StateDistribution::delta(3);
        assert_eq!(d.weights(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.tail_from(0), 1.0);
        assert_eq!(d.tail_from(4), 0.0);

        assert!(StateDistribution::from_weights(vec![0.5, 0.4]).is_err());
        assert!(StateDistribution::from_weights(vec![0.5, 0.5]).is_ok());
        assert!(StateDistribution::with_tail(vec![0.5, 0.4], 0.1).is_ok());
        assert!(StateDistribution::from_weights(vec![]).is_err());
        assert!(StateDistribution::from_weights(vec![1.5, -0.5]).is_err());

        let g = StateDistribution::truncated_geometric(0.5, 40).unwrap();
        assert_relative_eq!(g.weights()[0], 0.5, max_relative = 1e-11);
        assert_relative_eq!(g.tail_from(0), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn equilibrium_truncation_bookkeeping() {
        let p = params(2.0, 1.0);
        let d = StateDistribution::equilibrium_truncated(&p, 1e-12).unwrap();
        assert!((d.tail_from(0) - 1.0).abs() < 1e-15);
        let eq = equilibrium(&p);
        for n in 0..=d.max_state() {
            assert_relative_eq!(d.weights()[n], eq.pmf(n), max_relative = 1e-13);
        }
        assert!(d.tail_mass() < 1e-12);
    }

    #[test]
    fn tail_at_time_zero_is_indicator() {
        let p = params(1.0, 1.0);
        let d = StateDistribution::delta(4);
        for n in 0..8 {
            let r = tail_r(&p, &d, n, 0.0).unwrap();
            assert_eq!(r, if n <= 4 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn tail_reaches_equilibrium() {
        let p = params(1.0, 1.0);
        let d = StateDistribution::delta(3);
        let eq = equilibrium(&p);
        for n in 0..10 {
            let r = tail_r(&p, &d, n, 50.0).unwrap();
            assert_relative_eq!(r, eq.tail(n), max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn tails_are_monotone_in_n() {
        let p = params(2.0, 1.0);
        let d = StateDistribution::delta(3);
        for &t in &[0.1, 0.5, 2.0] {
            let mut prev = tail_r(&p, &d, 0, t).unwrap();
            assert_eq!(prev, 1.0);
            for n in 1..25 {
                let r = tail_r(&p, &d, n, t).unwrap();
                assert!(r <= prev + 1e-15, "tail increased at n={n}, t={t}");
                prev = r;
            }
        }
    }

    #[test]
    fn equilibrium_known_weights() {
        // theta = 1: pmf = (n+1) / (n+2)!
        let eq = equilibrium(&params(1.0, 1.0));
        let expect = [0.5, 1.0 / 3.0, 0.125, 1.0 / 30.0, 1.0 / 144.0];
        for (n, &e) in expect.iter().enumerate() {
            assert_relative_eq!(eq.pmf(n), e, max_relative = 1e-14);
        }
        assert_relative_eq!(eq.pmf(0), 0.5);
        assert_relative_eq!(eq.cdf(2.7), 0.5 + 1.0 / 3.0 + 0.125, max_relative = 1e-14);
        assert_eq!(eq.cdf(-0.3), 0.0);
        // telescoping: pmf sums to one
        let total: f64 = (0..200).map(|n| eq.pmf(n)).sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn equilibrium_moments_match_references() {
        // 60-digit references
        assert_relative_eq!(
            equilibrium_moment(&params(0.5, 1.0), 1.0).unwrap(),
            0.410686134642448,
            max_relative = 1e-12
        );
        let p2 = params(2.0, 1.0);
        assert_relative_eq!(equilibrium_moment(&p2, 1.0).unwrap(), 1.1945280494653251, max_relative = 1e-12);
        assert_relative_eq!(equilibrium_moment(&p2, 2.0).unwrap(), 2.8054719505346749, max_relative = 1e-12);
        assert_relative_eq!(equilibrium_moment(&p2, 3.0).unwrap(), 8.3616963462572758, max_relative = 1e-12);
        let p10 = params(10.0, 1.0);
        assert_relative_eq!(equilibrium_moment(&p10, 1.0).unwrap(), 3.3327482276194613, max_relative = 1e-12);
        assert_relative_eq!(equilibrium_moment(&p10, 2.0).unwrap(), 16.667251772380539, max_relative = 1e-12);
        // non-integer exponents are allowed
        let m = equilibrium_moment(&p2, 1.5).unwrap();
        assert!(m > 1.1945280494653251 && m < 2.8054719505346749);
    }

    #[test]
    fn mean_matches_link_function() {
        // mean = theta * D(theta) = l(theta) - 1; at theta = 1 this is e - 2
        let m = equilibrium_moment(&params(1.0, 1.0), 1.0).unwrap();
        assert_relative_eq!(m, std::f64::consts::E - 2.0, max_relative = 1e-13);
        let e = crate::specfun::eval_l(1.0).unwrap();
        assert_relative_eq!(m, 1.0 / e.value, max_relative = 1e-12);
    }

    #[test]
    fn return_time_routes() {
        let p = params(1.0, 1.0);
        let rt = return_time_mean(&p, 1).unwrap();
        // direct: (theta+1)_1 / (mu (theta+1)(2) theta) = 2/(2*2) = 1/2
        assert_relative_eq!(rt.direct, 0.5, max_relative = 1e-14);
        // renewal: 1 / (c(1) pi(1)) = 1 / (2 * 1/3) = 3/2
        assert_relative_eq!(rt.renewal, 1.5, max_relative = 1e-14);
        assert_relative_eq!(rt.discrepancy_factor(), 3.0, max_relative = 1e-14);
        // at x = 0 the routes are 1/lambda and (theta+1)/lambda
        let rt0 = return_time_mean(&p, 0).unwrap();
        assert_relative_eq!(rt0.direct, 1.0, max_relative = 1e-14);
        assert_relative_eq!(rt0.renewal, 2.0, max_relative = 1e-14);
    }

    #[test]
    fn sampling_respects_weights() {
        use rand::SeedableRng;
        let d = StateDistribution::from_weights(vec![0.25, 0.25, 0.5]).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 3];
        for _ in 0..40_000 {
            counts[d.sample(&mut rng)] += 1;
        }
        assert!((counts[0] as f64 / 40_000.0 - 0.25).abs() < 0.01);
        assert!((counts[2] as f64 / 40_000.0 - 0.5).abs() < 0.01);
    }
}
