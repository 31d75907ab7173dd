//! Scripted deciders with the same interface as the model-backed one.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{prc_choose, AgentState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum MockPolicy {
    /// Cheapest EWMATT; stays on yesterday's route when it is tied for cheapest.
    #[default]
    Argmin,
    /// Argmin, except with probability `epsilon` a uniformly drawn non-argmin route.
    EpsilonGreedy {
        epsilon: f64,
    },
    /// Call `t` (day `t + 1`) takes route `t mod n`.
    Cyclic,
    Fixed {
        route: usize,
    },
}

impl MockPolicy {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            MockPolicy::EpsilonGreedy { epsilon } if !(0.0..=1.0).contains(epsilon) => {
                Err(format!("epsilon must lie in [0, 1], got {epsilon}"))
            }
            _ => Ok(()),
        }
    }
}

/// Route chosen by `policy` on `day` (counted from 1).
pub fn mock_choose<R: Rng + ?Sized>(state: &AgentState, policy: &MockPolicy, day: u32, rng: &mut R) -> usize {
    let n = state.route_count();
    match *policy {
        MockPolicy::Argmin => prc_choose(state),
        MockPolicy::EpsilonGreedy { epsilon } => {
            let best = prc_choose(state);
            if n > 1 && rng.random_bool(epsilon) {
                let other = rng.random_range(0..n - 1);
                if other >= best {
                    other + 1
                } else {
                    other
                }
            } else {
                best
            }
        }
        MockPolicy::Cyclic => (day.saturating_sub(1) as usize) % n,
        MockPolicy::Fixed { route } => route.min(n - 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::sample_profile;
    use crate::network::Od;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(ewmatt: &[f64]) -> AgentState {
        let mut s = AgentState::new(0, Od::new(1, 2), sample_profile(0), 1, ewmatt.to_vec(), 0);
        for (m, e) in s.memories.iter_mut().zip(ewmatt) {
            m.ewmatt = Some(*e);
        }
        s
    }

    #[test]
    fn argmin_example() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(mock_choose(&state(&[20.0, 30.0]), &MockPolicy::Argmin, 2, &mut rng), 0);
        assert_eq!(mock_choose(&state(&[30.0, 20.0]), &MockPolicy::Argmin, 2, &mut rng), 1);
    }

    #[test]
    fn cyclic_convention() {
        let s = state(&[1.0; 5]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // call 7 is day 8
        assert_eq!(mock_choose(&s, &MockPolicy::Cyclic, 8, &mut rng), 2);
        assert_eq!(mock_choose(&s, &MockPolicy::Cyclic, 1, &mut rng), 0);
        assert_eq!(mock_choose(&s, &MockPolicy::Cyclic, 6, &mut rng), 0);
    }

    #[test]
    fn epsilon_zero_is_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut costs_rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let costs: Vec<f64> = (0..4).map(|_| costs_rng.random_range(0.0..100.0)).collect();
            let s = state(&costs);
            assert_eq!(
                mock_choose(&s, &MockPolicy::EpsilonGreedy { epsilon: 0.0 }, 3, &mut rng),
                mock_choose(&s, &MockPolicy::Argmin, 3, &mut rng)
            );
        }
    }

    #[test]
    fn epsilon_greedy_exploration_rate() {
        let s = state(&[20.0, 30.0, 25.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let policy = MockPolicy::EpsilonGreedy { epsilon: 0.1 };
        let explored = (0..1000).filter(|_| mock_choose(&s, &policy, 5, &mut rng) != 0).count();
        let frac = explored as f64 / 1000.0;
        assert!((frac - 0.1).abs() <= 0.02, "exploration fraction {frac}");
    }

    #[test]
    fn policy_toml_shape() {
        #[derive(Deserialize)]
        struct W {
            p: MockPolicy,
        }
        let w: W = toml::from_str("p = { policy = \"epsilon-greedy\", epsilon = 0.1 }").unwrap();
        assert_eq!(w.p, MockPolicy::EpsilonGreedy { epsilon: 0.1 });
        assert!(MockPolicy::EpsilonGreedy { epsilon: 1.5 }.validate().is_err());
    }
}
