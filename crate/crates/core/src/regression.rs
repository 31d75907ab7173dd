//! Binary logistic model of route switching, `P(switch) = 1 / (1 + exp(-(theta0 + theta1 * dt)))`,
//! fitted by Newton-Raphson maximum likelihood with Wald inference.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::network::Od;
use crate::scalar::Scalar;
use crate::sim::DayLog;

/// Convergence threshold on `max |gradient|`. Raised to `1000 * eps * n` when that is
/// larger, which only happens in single precision: the gradient is a sum of `n` terms.
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchObservation<T> {
    /// Travel time of the last-chosen route minus that of the alternative.
    pub delta_t: T,
    pub switched: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Separation {
    Complete,
    QuasiComplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub theta0: T,
    pub theta1: T,
    pub std_errors: [T; 2],
    pub p_values: [T; 2],
    pub log_likelihood: T,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_max_abs: T,
    /// Set when the outcome is (quasi-)perfectly separated by `delta_t`; the MLE then
    /// does not exist and the estimates are the last Newton iterate.
    pub separation: Option<Separation>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),
    #[error("all observations have the same outcome (switched = {0})")]
    SingleClass(bool),
    #[error("delta_t has no variation; slope is not identifiable")]
    DegenerateDesign,
    #[error("non-finite delta_t in observations")]
    NonFinite,
}

pub fn logistic_predict<T: Scalar>(theta0: T, theta1: T, delta_t: T) -> T {
    let z = theta0 + theta1 * delta_t;
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    if z > T::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn log_likelihood<T: Scalar>(observations: &[SwitchObservation<T>], theta: [T; 2]) -> T {
    observations
        .iter()
        .map(|o| {
            let z = theta[0] + theta[1] * o.delta_t;
            let y = if o.switched { z } else { T::zero() };
            y - softplus(z)
        })
        .sum()
}

/// Score vector of the log-likelihood.
pub fn gradient<T: Scalar>(observations: &[SwitchObservation<T>], theta: [T; 2]) -> [T; 2] {
    let mut g = [T::zero(); 2];
    for o in observations {
        let p = logistic_predict(theta[0], theta[1], o.delta_t);
        let r = if o.switched { T::one() - p } else { -p };
        g[0] += r;
        g[1] += r * o.delta_t;
    }
    g
}

/// Observed (= expected, for the canonical link) information matrix.
fn information<T: Scalar>(observations: &[SwitchObservation<T>], theta: [T; 2]) -> [[T; 2]; 2] {
    let mut m = [[T::zero(); 2]; 2];
    for o in observations {
        let p = logistic_predict(theta[0], theta[1], o.delta_t);
        let w = p * (T::one() - p);
        m[0][0] += w;
        m[0][1] += w * o.delta_t;
        m[1][1] += w * o.delta_t * o.delta_t;
    }
    m[1][0] = m[0][1];
    m
}

fn invert2<T: Scalar>(m: [[T; 2]; 2]) -> Option<[[T; 2]; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(det.abs() > T::epsilon() * (m[0][0] * m[1][1]).abs()) || !det.is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn detect_separation<T: Scalar>(observations: &[SwitchObservation<T>]) -> Option<Separation> {
    let (mut max0, mut min0) = (T::neg_infinity(), T::infinity());
    let (mut max1, mut min1) = (T::neg_infinity(), T::infinity());
    for o in observations {
        if o.switched {
            max1 = max1.max(o.delta_t);
            min1 = min1.min(o.delta_t);
        } else {
            max0 = max0.max(o.delta_t);
            min0 = min0.min(o.delta_t);
        }
    }
    if max0 < min1 || max1 < min0 {
        Some(Separation::Complete)
    } else if max0 == min1 || max1 == min0 {
        Some(Separation::QuasiComplete)
    } else {
        None
    }
}

/// Two-sided Wald p-value for `estimate / std_error`.
fn wald_p<T: Scalar>(estimate: T, std_error: T) -> T {
    if !std_error.is_finite() || std_error <= T::zero() {
        return T::one();
    }
    let z = (estimate / std_error).abs().as_f64();
    T::lit(erfc(z / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

/// Maximum-likelihood fit of the switching model.
///
/// Newton-Raphson with step halving (the log-likelihood never decreases between accepted
/// iterates, up to rounding in its evaluation); converged when `max |gradient|` is below
/// [`GRADIENT_TOLERANCE`], at most 100 iterations.
pub fn fit_switching<T: Scalar>(observations: &[SwitchObservation<T>]) -> Result<FitResult<T>, RegressionError> {
    let n = observations.len();
    if n < 2 {
        return Err(RegressionError::TooFewObservations(n));
    }
    if observations.iter().any(|o| !o.delta_t.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    let switches = observations.iter().filter(|o| o.switched).count();
    if switches == 0 || switches == n {
        return Err(RegressionError::SingleClass(switches == n));
    }
    let first = observations[0].delta_t;
    if observations.iter().all(|o| o.delta_t == first) {
        return Err(RegressionError::DegenerateDesign);
    }
    let separation = detect_separation(observations);

    let rate = T::from_usize(switches).unwrap() / T::from_usize(n).unwrap();
    let mut theta = [(rate / (T::one() - rate)).ln(), T::zero()];
    let mut ll = log_likelihood(observations, theta);
    let tol = T::lit(GRADIENT_TOLERANCE).max(T::lit(1000.0) * T::epsilon() * T::from_usize(n).unwrap());
    let mut iterations = 0;
    let mut grad = gradient(observations, theta);
    let max_abs = |g: [T; 2]| g[0].abs().max(g[1].abs());

    while max_abs(grad) >= tol && iterations < MAX_ITERATIONS {
        iterations += 1;
        let Some(inv) = invert2(information(observations, theta)) else {
            break;
        };
        let step = [
            inv[0][0] * grad[0] + inv[0][1] * grad[1],
            inv[1][0] * grad[0] + inv[1][1] * grad[1],
        ];
        let mut scale = T::one();
        let mut accepted = false;
        for _ in 0..50 {
            let trial = [theta[0] + scale * step[0], theta[1] + scale * step[1]];
            let trial_ll = log_likelihood(observations, trial);
            // near the optimum the gain is below the rounding error of the sum
            let slack = T::lit(64.0) * T::epsilon() * (T::one() + ll.abs());
            if trial_ll >= ll - slack {
                theta = trial;
                ll = trial_ll;
                accepted = true;
                break;
            }
            scale /= T::lit(2.0);
        }
        if !accepted {
            break;
        }
        grad = gradient(observations, theta);
    }

    let gradient_max_abs = max_abs(grad);
    let converged = gradient_max_abs < tol && separation.is_none();
    let std_errors = match invert2(information(observations, theta)) {
        Some(cov) => [cov[0][0].max(T::zero()).sqrt(), cov[1][1].max(T::zero()).sqrt()],
        None => [T::infinity(), T::infinity()],
    };
    Ok(FitResult {
        theta0: theta[0],
        theta1: theta[1],
        std_errors,
        p_values: [wald_p(theta[0], std_errors[0]), wald_p(theta[1], std_errors[1])],
        log_likelihood: ll,
        converged,
        iterations,
        gradient_max_abs,
        separation,
    })
}

/// Switching observations for travelers of `od` on route `from` (0-based) against the
/// alternative `to`: one per agent and day that has a successor day.
///
/// Logs of several runs may be passed one after another; day successions are only
/// formed between consecutive days of the same run (day number increasing by one).
pub fn extract_observations(logs: &[DayLog], od: Od, from: usize, to: usize) -> Vec<SwitchObservation<f64>> {
    let mut out = Vec::new();
    for pair in logs.windows(2) {
        let (today, tomorrow) = (&pair[0], &pair[1]);
        if tomorrow.day != today.day + 1 {
            continue;
        }
        let Some(times) = today.od_times(od) else {
            continue;
        };
        let (Some(ti), Some(tj)) = (times.get(from), times.get(to)) else {
            continue;
        };
        for rec in today.records.iter().filter(|r| r.od == od && r.choice == from) {
            if let Some(next) = tomorrow.record(rec.agent) {
                out.push(SwitchObservation {
                    delta_t: ti - tj,
                    switched: next.choice != from,
                });
            }
        }
    }
    out
}
