//! Per-route experience memory.

use serde::{Deserialize, Serialize};

use super::AgentError;
use crate::scalar::Scalar;

/// Exponentially weighted moving average travel time update.
///
/// The first observation initializes the average directly.
pub fn ewmatt_update<T: Scalar>(prev: Option<T>, observed: T, omega: T) -> Result<T, AgentError> {
    if !(omega > T::zero() && omega <= T::one()) {
        return Err(AgentError::InvalidOmega(omega.as_f64()));
    }
    if !(observed >= T::zero()) {
        return Err(AgentError::NegativeObservation(observed.as_f64()));
    }
    Ok(match prev {
        None => observed,
        Some(prev) => omega * observed + (T::one() - omega) * prev,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RouteMemory {
    pub chosen_count: u32,
    pub ewmatt: Option<f64>,
    pub last_observed_time: Option<f64>,
}

impl RouteMemory {
    pub fn observe(&mut self, time: f64, omega: f64) -> Result<(), AgentError> {
        self.ewmatt = Some(ewmatt_update(self.ewmatt, time, omega)?);
        self.last_observed_time = Some(time);
        Ok(())
    }
}
