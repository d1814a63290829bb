//! Prediction of the unseen part of the population from a record of
//! observed extinctions.
//!
//! The observation model: the chain starts from a known (or truncated)
//! law, and at recorded times `t_1 < ... < t_n` downward jumps with
//! magnitudes `d_1, ..., d_n` are observed. Conditioning on that record
//! leaves a posterior over the state just before the last drop, and every
//! prediction (how many levels are still alive, how big the next drop will
//! be) is a functional of that posterior.
//!
//! Computationally everything rides on one fact: the transition tail is
//! linear in the start measure, so conditioning level by level only ever
//! needs tails of finitely supported measures. Each level update is
//!
//! ```text
//! w_k(x) = R_{dt_k}(w_{k-1}, x + d_k) - R_{dt_k}(w_{k-1}, x + d_k + 1)
//! ```
//!
//! renormalized to unit mass with the log of the normalization constant
//! accumulated separately, so records of any length stay in range. Support
//! truncation is adaptive and the discarded mass is tracked and reported as
//! `truncation_error` on every result.

use crate::chain::{tail_r_core, ChainParams, StateDistribution};
use crate::error::{Error, Result};
use crate::sim::NegJumpRecord;

/// A prediction request: chain parameters, start law, observed record,
/// and the tail offset `xi` used by [`tail_unseen`].
#[derive(Debug, Clone)]
pub struct PredictionQuery {
    pub params: ChainParams,
    pub initial: StateDistribution,
    pub record: NegJumpRecord,
    pub xi: usize,
}

/// A scalar prediction together with the truncation mass the propagation
/// discarded while computing it.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub value: f64,
    pub truncation_error: f64,
}

/// Record probability (the normalizer of the posterior), reported in logs
/// because long records underflow the linear scale. `value` is the
/// exponential of `log_value` and may be zero when that underflows.
#[derive(Debug, Clone, Copy)]
pub struct NormalizerValue {
    pub value: f64,
    pub log_value: f64,
    pub truncation_error: f64,
}

/// Posterior weights over the state just after the second-to-last recorded
/// drop (over the start law itself for a one-drop record), conditioned on
/// the full record. The weights sum to `1 - tail()`, where the tail
/// collects the truncation loss accumulated during propagation.
#[derive(Debug, Clone)]
pub struct WeightVector {
    weights: Vec<f64>,
    tail: f64,
}

impl WeightVector {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Normalized state vector with log-scale and truncation bookkeeping.
struct LevelState {
    w: Vec<f64>,
    log_scale: f64,
    lost: f64,
}

fn vec_tail(params: &ChainParams, w: &[f64], n: usize, t: f64) -> Result<f64> {
    tail_r_core(params, w, 0.0, n, t).map(|(v, _)| v)
}

/// One conditioning step: evolve `dt`, observe a drop of magnitude `d`.
/// Returns the normalized post-drop vector, the log of its mass, and the
/// relative mass dropped by support truncation.
fn conditional_level(
    params: &ChainParams,
    w: &[f64],
    dt: f64,
    d: usize,
) -> Result<(Vec<f64>, f64, f64)> {
    let mass = vec_tail(params, w, d, dt)?;
    if mass <= 0.0 {
        return Err(Error::Underflow { what: "record probability" });
    }
    let mut tails = vec![mass];
    loop {
        let m = d + tails.len();
        let r = vec_tail(params, w, m, dt)?;
        tails.push(r);
        if r < mass * 1e-13 {
            break;
        }
        if tails.len() > 100_000 {
            return Err(Error::NonConvergence { what: "posterior support", terms: tails.len() });
        }
    }
    let leftover = tails.last().unwrap() / mass;
    let new_w: Vec<f64> = tails
        .windows(2)
        .map(|p| ((p[0] - p[1]) / mass).max(0.0))
        .collect();
    Ok((new_w, mass.ln(), leftover))
}

/// Propagate through the first `levels` conditioning steps of the record.
fn propagate(
    params: &ChainParams,
    initial: &StateDistribution,
    record: &NegJumpRecord,
    levels: usize,
) -> Result<LevelState> {
    let mut state = LevelState {
        w: initial.weights().to_vec(),
        log_scale: 0.0,
        // an initial tail lump cannot be propagated exactly; it is small
        // by construction and goes straight into the truncation budget
        lost: initial.tail_mass(),
    };
    let mut t_prev = 0.0;
    for k in 0..levels {
        let dt = record.times()[k] - t_prev;
        let (w, log_mass, leftover) = conditional_level(params, &state.w, dt, record.magnitudes()[k])?;
        state.w = w;
        state.log_scale += log_mass;
        state.lost += leftover;
        t_prev = record.times()[k];
    }
    Ok(state)
}

fn last_dt(record: &NegJumpRecord) -> f64 {
    let n = record.len();
    if n == 1 {
        record.times()[0]
    } else {
        record.times()[n - 1] - record.times()[n - 2]
    }
}

/// Probability of the full record (all `n` drops with their magnitudes at
/// their times), with the log-scale value alongside.
pub fn normalizer(query: &PredictionQuery) -> Result<NormalizerValue> {
    let n = query.record.len();
    let state = propagate(&query.params, &query.initial, &query.record, n - 1)?;
    let d_rel = vec_tail(
        &query.params,
        &state.w,
        query.record.magnitudes()[n - 1],
        last_dt(&query.record),
    )?;
    if d_rel <= 0.0 {
        return Err(Error::Underflow { what: "record probability" });
    }
    let log_value = state.log_scale + d_rel.ln();
    Ok(NormalizerValue {
        value: log_value.exp(),
        log_value,
        truncation_error: state.lost,
    })
}

/// One magnitude-marginal step: evolve `dt`, observe a drop of unspecified
/// magnitude. The mass of the result is `E[X(dt)]` under the incoming
/// vector, since each state `x` receives the full tail above `x`.
fn marginal_level(params: &ChainParams, w: &[f64], dt: f64) -> Result<(Vec<f64>, f64, f64)> {
    let theta = params.theta();
    let mut new_w = Vec::new();
    let mut mass = 0.0;
    let mut x = 0usize;
    let last;
    loop {
        let r = vec_tail(params, w, x + 1, dt)?;
        new_w.push(r);
        mass += r;
        if r < 1e-15 * mass && x as f64 > 2.0 * theta && x > w.len() {
            last = r;
            break;
        }
        x += 1;
        if x > 100_000 {
            return Err(Error::NonConvergence { what: "marginal support", terms: x });
        }
    }
    if mass <= 0.0 {
        return Err(Error::Underflow { what: "record probability" });
    }
    // tails at least halve per step out here, so two last terms cover it
    let leftover = 2.0 * last / mass;
    for v in &mut new_w {
        *v /= mass;
    }
    Ok((new_w, mass.ln(), leftover))
}

/// Probability of observing `n` drops at the recorded times regardless of
/// their magnitudes (the denominator of the magnitude law).
pub fn magnitude_normalizer(
    params: &ChainParams,
    initial: &StateDistribution,
    times: &[f64],
) -> Result<NormalizerValue> {
    if times.is_empty() {
        return Err(Error::EmptyInput { what: "jump times" });
    }
    let mut w = initial.weights().to_vec();
    let mut log_scale = 0.0;
    let mut lost = initial.tail_mass();
    let mut t_prev = 0.0;
    for &t in times {
        let (nw, log_mass, leftover) = marginal_level(params, &w, t - t_prev)?;
        w = nw;
        log_scale += log_mass;
        lost += leftover;
        t_prev = t;
    }
    Ok(NormalizerValue {
        value: log_scale.exp(),
        log_value: log_scale,
        truncation_error: lost,
    })
}

/// Posterior over the state just after drop `n - 1`, given the whole
/// record. The first `n - 1` drops enter with their exact magnitudes; the
/// final drop enters as the tail event that the state just before it was
/// at least `d_n`, so each surviving state `x` is reweighted by
/// `R_{dt_n}(delta_x, d_n)`.
pub fn weights(query: &PredictionQuery) -> Result<WeightVector> {
    let n = query.record.len();
    let state = propagate(&query.params, &query.initial, &query.record, n - 1)?;
    let dt = last_dt(&query.record);
    let d_n = query.record.magnitudes()[n - 1];
    let mut w = Vec::with_capacity(state.w.len());
    let mut point = Vec::new();
    for (x, &wx) in state.w.iter().enumerate() {
        if wx == 0.0 {
            w.push(0.0);
            continue;
        }
        point.clear();
        point.resize(x + 1, 0.0);
        point[x] = 1.0;
        let (r, _) = tail_r_core(&query.params, &point, 0.0, d_n, dt)?;
        w.push(wx * r);
    }
    let tail = state.lost.min(1.0);
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Underflow { what: "posterior weights" });
    }
    let scale = (1.0 - tail) / sum;
    Ok(WeightVector {
        weights: w.into_iter().map(|v| v * scale).collect(),
        tail,
    })
}

/// Probability that at least `xi` of the levels alive just before the last
/// recorded drop survive it unobserved, i.e. the chance the population
/// still hides `xi` or more unseen levels. Equals one at `xi = 0`.
pub fn tail_unseen(query: &PredictionQuery) -> Result<Prediction> {
    let n = query.record.len();
    let state = propagate(&query.params, &query.initial, &query.record, n - 1)?;
    let dt = last_dt(&query.record);
    let d_n = query.record.magnitudes()[n - 1];
    let den = vec_tail(&query.params, &state.w, d_n, dt)?;
    if den <= 0.0 {
        return Err(Error::Underflow { what: "record probability" });
    }
    let num = vec_tail(&query.params, &state.w, d_n + query.xi, dt)?;
    Ok(Prediction {
        value: num / den,
        truncation_error: state.lost + 1e-14,
    })
}

/// Expected number of unseen levels surviving the last recorded drop:
/// the sum of [`tail_unseen`] over `xi >= 1`.
pub fn expected_unseen(query: &PredictionQuery) -> Result<Prediction> {
    let n = query.record.len();
    let state = propagate(&query.params, &query.initial, &query.record, n - 1)?;
    let dt = last_dt(&query.record);
    let d_n = query.record.magnitudes()[n - 1];
    let den = vec_tail(&query.params, &state.w, d_n, dt)?;
    if den <= 0.0 {
        return Err(Error::Underflow { what: "record probability" });
    }
    let mut acc = 0.0;
    let mut last = 0.0;
    for xi in 1..=100_000usize {
        last = vec_tail(&query.params, &state.w, d_n + xi, dt)? / den;
        acc += last;
        if last < 1e-15 * acc.max(1e-30) {
            break;
        }
    }
    Ok(Prediction {
        value: acc,
        truncation_error: state.lost + 2.0 * last,
    })
}

/// Probability of the observed magnitudes given that drops happened at the
/// recorded times (states marginalized out on both sides).
pub fn magnitude_law(query: &PredictionQuery) -> Result<Prediction> {
    let num = normalizer(query)?;
    let den = magnitude_normalizer(&query.params, &query.initial, query.record.times())?;
    Ok(Prediction {
        value: (num.log_value - den.log_value).exp(),
        truncation_error: num.truncation_error + den.truncation_error,
    })
}

/// Probability of the observed post-drop states given the magnitudes and
/// times. The record must carry post states. Returns zero (not an error)
/// when some transition in the record is impossible at double precision.
pub fn state_law(query: &PredictionQuery) -> Result<Prediction> {
    let posts = query.record.post_states().ok_or(Error::EmptyInput {
        what: "post states (required for the state law)",
    })?;
    let times = query.record.times();
    let mags = query.record.magnitudes();
    // joint density of the full record, assembled in logs
    let mut log_joint = 0.0;
    let w0 = query.initial.weights();
    let first_hi = vec_tail(&query.params, w0, posts[0] + mags[0], times[0])?;
    let first_lo = vec_tail(&query.params, w0, posts[0] + mags[0] + 1, times[0])?;
    let first = (first_hi - first_lo).max(0.0);
    if first == 0.0 {
        return Ok(Prediction { value: 0.0, truncation_error: query.initial.tail_mass() });
    }
    log_joint += first.ln();
    for k in 1..query.record.len() {
        let p = crate::chain::transition(
            &query.params,
            posts[k - 1],
            posts[k] + mags[k],
            times[k] - times[k - 1],
        )?;
        if p == 0.0 {
            return Ok(Prediction { value: 0.0, truncation_error: query.initial.tail_mass() });
        }
        log_joint += p.ln();
    }
    let den = normalizer(query)?;
    Ok(Prediction {
        value: (log_joint - den.log_value).exp(),
        truncation_error: den.truncation_error,
    })
}
