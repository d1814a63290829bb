//! Statistical helpers shared by the integration suites: distribution
//! functions for goodness-of-fit testing built on the crate's own
//! incomplete gamma.

#![allow(dead_code)]

/// Upper-tail p-value of a chi-square statistic with `df` degrees of
/// freedom.
pub fn chi_square_p(stat: f64, df: usize) -> f64 {
    1.0 - bmd::specfun::reg_lower_gamma(df as f64 / 2.0, stat / 2.0).unwrap()
}

/// Two-sided asymptotic p-value of a Kolmogorov-Smirnov statistic `d`
/// from `n` observations.
pub fn ks_p(d: f64, n: usize) -> f64 {
    let lambda = (n as f64).sqrt() * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = 2.0 * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        if k % 2 == 1 {
            p += term;
        } else {
            p -= term;
        }
        if term < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Kolmogorov-Smirnov statistic of a sample against a continuous cdf.
pub fn ks_stat(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d
}

/// Standard normal cdf via the Abramowitz-Stegun 7.1.26 rational
/// approximation of erf (absolute error below 1.5e-7).
pub fn normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z.abs());
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    let signed = if z < 0.0 { -erf } else { erf };
    0.5 * (1.0 + signed)
}

/// Chi-square statistic from observed counts and expected probabilities
/// (any residual probability is pooled into a final cell).
pub fn chi_square_stat(counts: &[usize], probs: &[f64], n: usize) -> f64 {
    assert_eq!(counts.len(), probs.len());
    let mut stat = 0.0;
    for (&c, &p) in counts.iter().zip(probs) {
        let expect = p * n as f64;
        let diff = c as f64 - expect;
        stat += diff * diff / expect;
    }
    stat
}

/// Sample mean and standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
