//! Non-LLM route choice rules.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::AgentState;
use crate::scalar::Scalar;

/// Index of the smallest value, lowest index on ties.
pub fn argmin_index<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Perfectly rational choice: keep `yesterday` unless another route has strictly lower
/// EWMATT, in which case take the cheapest (lowest index on ties).
pub fn prc_choose_from<T: Scalar>(ewmatt: &[T], yesterday: usize) -> usize {
    let best = argmin_index(ewmatt);
    if ewmatt[best] < ewmatt[yesterday] {
        best
    } else {
        yesterday
    }
}

/// PRC decision for an agent; without a previous day it takes the cheapest route.
pub fn prc_choose(state: &AgentState) -> usize {
    let costs = state.effective_ewmatt();
    match &state.yesterday {
        Some(y) => prc_choose_from(&costs, y.chosen),
        None => argmin_index(&costs),
    }
}

/// Logit probabilities `exp(-alpha e_r) / sum_s exp(-alpha e_s)`, shifted by the largest
/// exponent for stability.
pub fn mnl_probabilities<T: Scalar>(ewmatt: &[T], alpha: T) -> Vec<T> {
    let exps: Vec<T> = ewmatt.iter().map(|e| -alpha * *e).collect();
    let max = exps.iter().copied().fold(T::neg_infinity(), T::max);
    let weights: Vec<T> = exps.iter().map(|x| (*x - max).exp()).collect();
    let total: T = weights.iter().copied().sum();
    weights.into_iter().map(|w| w / total).collect()
}

pub fn sample_index<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(probabilities)
        .expect("probabilities are finite, non-negative and not all zero")
        .sample(rng)
}

pub fn mnl_choose<R: Rng + ?Sized>(state: &AgentState, alpha: f64, rng: &mut R) -> usize {
    sample_index(&mnl_probabilities(&state.effective_ewmatt(), alpha), rng)
}

pub fn uniform_choose<R: Rng + ?Sized>(route_count: usize, rng: &mut R) -> usize {
    rng.random_range(0..route_count)
}
