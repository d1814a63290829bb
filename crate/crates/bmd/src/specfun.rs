//! Special-function kernel.
//!
//! Everything downstream (transition tails, equilibrium moments, bound
//! factors, the magnitude link) reduces to a handful of classical objects
//! evaluated carefully: rising factorials, Kummer's confluent function with
//! unit numerator parameter, truncated exponentials, Stirling numbers of the
//! second kind, the regularized lower incomplete gamma, and the link
//! function `L` that maps the rate ratio `theta` to the mean magnitude of a
//! stationary downward jump.
//!
//! `L` is the one function here that needs real care. It is evaluated from
//! a positive-term series for moderate `theta` and from a six-term
//! `sqrt(theta)` expansion for large `theta`; both regimes return first and
//! second derivatives along with the value and an error estimate, and the
//! two regimes agree near the switchover point to well below the error
//! budget either side reports.

use std::f64::consts::PI;

use crate::error::{require, Error, Result};

/// Largest order of the asymptotic expansion coefficients available.
pub const MAX_ASYM_ORDER: usize = 5;

/// Regime switchover for [`eval_l`]: series below, asymptotic at and above.
pub const ASYM_SWITCHOVER: f64 = 40.0;

/// Relative error budget the series regime must stay within.
pub const SERIES_REL_TOL: f64 = 1e-12;

/// Relative error budget the asymptotic regime must stay within
/// (worst case is at the switchover point).
pub const ASYM_REL_TOL: f64 = 5e-6;

const KUMMER_MAX_TERMS: usize = 100_000;

/// Natural log of the gamma function for positive argument.
///
/// Lanczos approximation with g = 7 and the nine-term coefficient set of
/// Godfrey; relative accuracy is a few ulps over the positive axis.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > 0.0);
    if x < 0.5 {
        // reflection keeps the shifted argument comfortably positive
        let s = PI / (PI * x).sin();
        return s.ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let mut a = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
}

/// Rising factorial `(a)_n = a (a+1) ... (a+n-1)`, with `(a)_0 = 1`.
///
/// Computed as a direct product for small `n` and in log space above
/// `n = 30` when `a` is positive (negative bases fall back to the direct
/// product, which may overflow).
pub fn pochhammer(a: f64, n: usize) -> Result<f64> {
    require(a.is_finite(), "a", a, "must be finite")?;
    if n == 0 {
        return Ok(1.0);
    }
    if n <= 30 || a <= 0.0 {
        let mut p = 1.0;
        for i in 0..n {
            p *= a + i as f64;
        }
        Ok(p)
    } else {
        Ok(ln_pochhammer(a, n)?.exp())
    }
}

/// Natural log of the rising factorial for positive base.
///
/// Small orders are summed term by term; large orders go through
/// [`ln_gamma`] differences.
pub fn ln_pochhammer(a: f64, n: usize) -> Result<f64> {
    require(a > 0.0 && a.is_finite(), "a", a, "must be positive and finite")?;
    if n <= 256 {
        let mut s = 0.0;
        for i in 0..n {
            s += (a + i as f64).ln();
        }
        Ok(s)
    } else {
        Ok(ln_gamma(a + n as f64) - ln_gamma(a))
    }
}

/// Kummer's function with unit numerator parameter,
/// `Phi(1, b; z) = sum_{n >= 0} z^n / (b)_n`.
pub fn kummer_1b(b: f64, z: f64) -> Result<f64> {
    require(b > 0.0 && b.is_finite(), "b", b, "must be positive and finite")?;
    require(z.is_finite(), "z", z, "must be finite")?;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0u8;
    for n in 0..KUMMER_MAX_TERMS {
        term *= z / (b + n as f64);
        sum += term;
        if term.abs() <= sum.abs() * 1e-16 {
            small += 1;
            // two consecutive small terms, so an alternating tail is also done
            if small >= 2 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        what: "Kummer series Phi(1, b; z)",
        terms: KUMMER_MAX_TERMS,
    })
}

/// General Kummer series, only exercised with small integer `a` by the
/// moment formulas in `infer`.
pub(crate) fn kummer(a: f64, b: f64, z: f64) -> Result<f64> {
    require(b > 0.0 && b.is_finite(), "b", b, "must be positive and finite")?;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0u8;
    for n in 0..KUMMER_MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) * z / ((b + nf) * (nf + 1.0));
        sum += term;
        if term.abs() <= sum.abs() * 1e-16 {
            small += 1;
            if small >= 2 {
                return Ok(sum);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence {
        what: "Kummer series Phi(a, b; z)",
        terms: KUMMER_MAX_TERMS,
    })
}

/// Truncated exponential `sum_{k=0}^{nu} x^k / k!`.
pub fn trunc_exp(nu: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=nu {
        term *= x / k as f64;
        sum += term;
    }
    sum
}

/// Stirling number of the second kind `S(n, k)`: the number of ways to
/// partition an `n`-set into `k` non-empty blocks.
pub fn stirling2(n: usize, k: usize) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    if n == 0 {
        return Ok(1); // k == 0 here
    }
    if k == 0 {
        return Ok(0);
    }
    // row-by-row recurrence S(n, k) = k S(n-1, k) + S(n-1, k-1)
    let mut row = vec![0u128; k + 1];
    row[0] = 1; // S(0, 0)
    for m in 1..=n {
        let hi = k.min(m);
        for j in (1..=hi).rev() {
            let kept = (j as u128)
                .checked_mul(row[j])
                .ok_or(Error::Overflow { what: "stirling2" })?;
            row[j] = kept
                .checked_add(row[j - 1])
                .ok_or(Error::Overflow { what: "stirling2" })?;
        }
        row[0] = 0; // S(m, 0) = 0 for m >= 1
    }
    Ok(row[k])
}

/// Regularized lower incomplete gamma `P(a, x) = gamma(a, x) / Gamma(a)`.
///
/// Power series for `x < a + 1`, Lentz continued fraction for the upper
/// tail otherwise; the prefactor is assembled in log space so extreme
/// arguments saturate to 0 or 1 instead of overflowing.
pub fn reg_lower_gamma(a: f64, x: f64) -> Result<f64> {
    require(a > 0.0 && a.is_finite(), "a", a, "must be positive and finite")?;
    require(x >= 0.0 && x.is_finite(), "x", x, "must be non-negative and finite")?;
    if x == 0.0 {
        return Ok(0.0);
    }
    let lg = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..=10_000 {
            term *= x / (a + n as f64);
            sum += term;
            if term < sum * 1e-16 {
                return Ok((lg.exp() * sum).min(1.0));
            }
        }
        Err(Error::NonConvergence {
            what: "incomplete gamma series",
            terms: 10_000,
        })
    } else {
        // modified Lentz on the continued fraction for Q(a, x)
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 3e-16 {
                let q = lg.exp() * h;
                return Ok((1.0 - q).clamp(0.0, 1.0));
            }
        }
        Err(Error::NonConvergence {
            what: "incomplete gamma continued fraction",
            terms: 10_000,
        })
    }
}

/// Which evaluation route produced a [`LinkEval`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Positive-term series in `theta`, used below [`ASYM_SWITCHOVER`].
    Series,
    /// Six-term `sqrt(theta)` expansion, used at and above the switchover.
    Asymptotic,
}

/// Value and first two derivatives of the link function `L` at one point.
#[derive(Debug, Clone, Copy)]
pub struct LinkEval {
    pub theta: f64,
    /// `L(theta)`: mean magnitude of a stationary downward jump.
    pub value: f64,
    /// `L'(theta)`.
    pub d1: f64,
    /// `L''(theta)`.
    pub d2: f64,
    pub regime: Regime,
    /// Conservative relative-error estimate for `value`.
    pub est_rel_err: f64,
}

/// `D(theta) = sum_{n >= 0} theta^n / (theta+1)_{n+1}` with two
/// derivatives, by direct summation. `L = 1/D`.
fn d_series(theta: f64) -> Result<(f64, f64, f64, usize)> {
    // u_n = theta^n / (theta+1)_{n+1}; the log-derivative bookkeeping
    // needs the partial sums s1 = sum 1/(theta+j), s2 = sum 1/(theta+j)^2
    // over j = 1..=n+1
    let mut u = 1.0 / (theta + 1.0);
    let mut s1 = 1.0 / (theta + 1.0);
    let mut s2 = s1 * s1;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for n in 0..100_000 {
        let nf = n as f64;
        let g = nf / theta - s1;
        d0 += u;
        d1 += u * g;
        d2 += u * (g * g - nf / (theta * theta) + s2);
        if u < d0 * 1e-17 {
            return Ok((d0, d1, d2, n + 1));
        }
        let den = theta + nf + 2.0;
        u *= theta / den;
        s1 += 1.0 / den;
        s2 += 1.0 / (den * den);
    }
    Err(Error::NonConvergence {
        what: "link function series",
        terms: 100_000,
    })
}

/// Alternating-series route to `D(theta)`, kept as an independent check on
/// the direct summation. Subject to cancellation of order `e^theta`, so
/// only trustworthy for moderate `theta`.
#[cfg(test)]
fn d_alternating(theta: f64) -> f64 {
    // pow carries (-theta)^k / k!
    let mut pow = 1.0;
    let mut sum = 0.0;
    for k in 0..10_000 {
        let kf = k as f64;
        let term = pow / (theta + kf + 1.0);
        sum += term;
        if kf > theta && term.abs() < 1e-18 * sum.abs().max(1e-30) {
            break;
        }
        pow *= -theta / (kf + 1.0);
    }
    theta.exp() * sum
}

/// Evaluate the link function `L(theta)`, its first two derivatives, and
/// an error estimate, choosing the regime by [`ASYM_SWITCHOVER`].
///
/// `L(0) = 1`, `L'(0) = 1/2`, `L''(0) = -1/3` are honored exactly; `L` is a
/// strictly increasing bijection from `[0, inf)` onto `[1, inf)`.
pub fn eval_l(theta: f64) -> Result<LinkEval> {
    require(theta >= 0.0 && theta.is_finite(), "theta", theta, "must be non-negative and finite")?;
    if theta < ASYM_SWITCHOVER {
        eval_l_series(theta)
    } else {
        eval_l_asym(theta)
    }
}

/// Series-regime evaluation of `L`, valid for any finite `theta >= 0` but
/// increasingly expensive as `theta` grows. Exposed so the two regimes can
/// be compared directly.
pub fn eval_l_series(theta: f64) -> Result<LinkEval> {
    require(theta >= 0.0 && theta.is_finite(), "theta", theta, "must be non-negative and finite")?;
    if theta < 1e-12 {
        // second-order expansion at the origin; error is O(theta^2) here
        return Ok(LinkEval {
            theta,
            value: 1.0 + 0.5 * theta,
            d1: 0.5 - theta / 3.0,
            d2: -1.0 / 3.0,
            regime: Regime::Series,
            est_rel_err: 2.3e-16,
        });
    }
    let (d0, d1, d2, terms) = d_series(theta)?;
    let value = 1.0 / d0;
    let l1 = -d1 / (d0 * d0);
    let l2 = (2.0 * d1 * d1 - d0 * d2) / (d0 * d0 * d0);
    Ok(LinkEval {
        theta,
        value,
        d1: l1,
        d2: l2,
        regime: Regime::Series,
        est_rel_err: 1e-16 + terms as f64 * 2.3e-16,
    })
}

/// Asymptotic-regime evaluation of `L` from the six-term `sqrt(theta)`
/// expansion, differentiated term by term. Exposed so the two regimes can
/// be compared directly; accuracy degrades below the switchover.
pub fn eval_l_asym(theta: f64) -> Result<LinkEval> {
    require(theta > 0.0 && theta.is_finite(), "theta", theta, "must be positive and finite")?;
    let co = asym_coeffs(MAX_ASYM_ORDER)?;
    let mut value = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut last = 0.0;
    for (s, &k) in co.k.iter().enumerate() {
        let e = (1.0 - s as f64) / 2.0;
        last = k * theta.powf(e);
        value += last;
        d1 += k * e * theta.powf(e - 1.0);
        d2 += k * e * (e - 1.0) * theta.powf(e - 2.0);
    }
    Ok(LinkEval {
        theta,
        value,
        d1,
        d2,
        regime: Regime::Asymptotic,
        est_rel_err: (last / value).abs(),
    })
}

/// Value of the asymptotic ladder for `L` truncated after the order
/// `order` term, for comparing expansion depths against the series route.
pub fn eval_l_asym_partial(theta: f64, order: usize) -> Result<f64> {
    require(theta > 0.0 && theta.is_finite(), "theta", theta, "must be positive and finite")?;
    let co = asym_coeffs(order)?;
    let root = theta.sqrt();
    let mut value = 0.0;
    for (s, &k) in co.k.iter().enumerate() {
        value += k * root.powi(1 - s as i32);
    }
    Ok(value)
}

/// Coefficient tables for the large-`theta` expansions.
///
/// Index conventions: `f[s]` and `k[s]` are the order-`s` coefficients for
/// `s = 0..=max_order`; `alpha[n]` holds the variance-expansion coefficient
/// for `n = 1..=max_order` with `alpha[0]` an unused placeholder; `b[n]`
/// holds the squared-derivative coefficient for `n = 2..=max_order` with
/// `b[0]` and `b[1]` unused placeholders.
#[derive(Debug, Clone)]
pub struct AsymCoeffs {
    pub f: Vec<f64>,
    pub k: Vec<f64>,
    pub alpha: Vec<f64>,
    pub b: Vec<f64>,
    pub max_order: usize,
}

/// Build the asymptotic coefficient tables up to `max_order <= 5`.
///
/// The `f` coefficients are closed forms; the `k` coefficients come from
/// the reciprocal recurrence `k_s = -(1/f_0) sum_{i=1}^{s} f_i k_{s-i}`
/// with `k_0 = 1/f_0`; `alpha_n = k_{n-1} - sum_{j=0}^{n} k_j k_{n-j}`;
/// `b_n = sum_{j=1}^{n-1} l_j l_{n-j}` with `l_j = (1 - j/2) k_{j-1}`.
pub fn asym_coeffs(max_order: usize) -> Result<AsymCoeffs> {
    if max_order > MAX_ASYM_ORDER {
        return Err(Error::InvalidParameter {
            name: "max_order",
            value: max_order as f64,
            requirement: "coefficients are only available through order 5",
        });
    }
    let spi2 = (PI / 2.0).sqrt();
    let f_full = [
        spi2,
        -2.0 / 3.0,
        spi2 / 12.0,
        4.0 / 135.0,
        spi2 / 288.0,
        -8.0 / 2835.0,
    ];
    let f: Vec<f64> = f_full[..=max_order].to_vec();

    let mut k = vec![0.0; max_order + 1];
    k[0] = 1.0 / f[0];
    for s in 1..=max_order {
        let mut acc = 0.0;
        for i in 1..=s {
            acc += f[i] * k[s - i];
        }
        k[s] = -acc / f[0];
    }

    let mut alpha = vec![0.0; max_order + 1];
    for n in 1..=max_order {
        let mut acc = 0.0;
        for j in 0..=n {
            acc += k[j] * k[n - j];
        }
        alpha[n] = k[n - 1] - acc;
    }

    let l_of = |j: usize| (1.0 - j as f64 / 2.0) * k[j - 1];
    let mut b = vec![0.0; max_order + 1];
    for n in 2..=max_order {
        let mut acc = 0.0;
        for j in 1..=(n - 1) {
            acc += l_of(j) * l_of(n - j);
        }
        b[n] = acc;
    }

    Ok(AsymCoeffs {
        f,
        k,
        alpha,
        b,
        max_order,
    })
}
