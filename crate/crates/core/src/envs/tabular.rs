//! Finite MDPs with state-based rewards, used as exact oracles.

use rand::Rng;

use super::EnvError;

const ROW_TOL: f64 = 1e-12;
const POLICY_TOL: f64 = 1e-9;

/// `(S, A, P, r, γ)` plus an initial distribution `p0`.
///
/// `transitions[(s * n_actions + a) * n_states + s']` is `P(s' | s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self, EnvError> {
        if n_states == 0 || n_actions == 0 {
            return Err(EnvError::InvalidMdp("empty state or action set".into()));
        }
        if transitions.len() != n_states * n_actions * n_states {
            return Err(EnvError::InvalidMdp(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states || initial.len() != n_states {
            return Err(EnvError::InvalidMdp(
                "reward and initial distribution must have one entry per state".into(),
            ));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(EnvError::InvalidMdp(format!(
                "discount {gamma} not in (0, 1)"
            )));
        }
        for (row_idx, row) in transitions.chunks(n_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > ROW_TOL {
                return Err(EnvError::InvalidMdp(format!(
                    "P(.|s={}, a={}) sums to {sum}",
                    row_idx / n_actions,
                    row_idx % n_actions
                )));
            }
        }
        let p0: f64 = initial.iter().sum();
        if initial.iter().any(|&p| !(p >= 0.0)) || (p0 - 1.0).abs() > ROW_TOL {
            return Err(EnvError::InvalidMdp(format!("p0 sums to {p0}")));
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            reward,
            gamma,
            initial,
        })
    }

    /// `width × height` grid with actions up/right/down/left. With probability
    /// `slip` the executed move is drawn uniformly from the four directions;
    /// moves into a wall stay put. Uniform initial distribution, zero reward.
    pub fn grid(width: usize, height: usize, slip: f64, gamma: f64) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&slip) {
            return Err(EnvError::InvalidMdp(format!("slip {slip} not in [0, 1]")));
        }
        let n = width * height;
        let moves: [(isize, isize); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
        let mut p = vec![0.0; n * 4 * n];
        for s in 0..n {
            let (x, y) = ((s % width) as isize, (s / width) as isize);
            let dest = |m: usize| {
                let (nx, ny) = (x + moves[m].0, y + moves[m].1);
                if nx < 0 || ny < 0 || nx >= width as isize || ny >= height as isize {
                    s
                } else {
                    ny as usize * width + nx as usize
                }
            };
            for a in 0..4 {
                let row = &mut p[(s * 4 + a) * n..(s * 4 + a + 1) * n];
                row[dest(a)] += 1.0 - slip;
                for m in 0..4 {
                    row[dest(m)] += slip / 4.0;
                }
            }
        }
        Self::new(n, 4, p, vec![0.0; n], gamma, vec![1.0 / n as f64; n])
    }

    /// 5×5 grid, 0.1 slip, γ = 0.99.
    pub fn default_grid() -> Self {
        Self::grid(5, 5, 0.1, 0.99).expect("default grid is valid")
    }

    pub fn with_reward(mut self, reward: Vec<f64>) -> Result<Self, EnvError> {
        if reward.len() != self.n_states {
            return Err(EnvError::InvalidMdp(format!(
                "reward has {} entries for {} states",
                reward.len(),
                self.n_states
            )));
        }
        self.reward = reward;
        Ok(self)
    }

    pub fn with_initial(self, initial: Vec<f64>) -> Result<Self, EnvError> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions,
            self.reward,
            self.gamma,
            initial,
        )
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// `P(. | s, a)`.
    #[inline]
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let off = (s * self.n_actions + a) * self.n_states;
        &self.transitions[off..off + self.n_states]
    }
}

/// Stochastic policy `π(a | s)`, one probability row per state.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, EnvError> {
        if probs.len() != n_states * n_actions {
            return Err(EnvError::InvalidPolicy {
                state: 0,
                detail: format!(
                    "{} probabilities for {n_states} states x {n_actions} actions",
                    probs.len()
                ),
            });
        }
        for (s, row) in probs.chunks(n_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > POLICY_TOL {
                return Err(EnvError::InvalidPolicy {
                    state: s,
                    detail: format!("row sums to {sum}"),
                });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self, EnvError> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(EnvError::InvalidPolicy {
                    state: s,
                    detail: format!("action {a} out of range"),
                });
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::new(actions.len(), n_actions, probs)
    }

    /// The same action distribution in every state.
    pub fn state_independent(n_states: usize, row: &[f64]) -> Result<Self, EnvError> {
        let probs = (0..n_states).flat_map(|_| row.iter().copied()).collect();
        Self::new(n_states, row.len(), probs)
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<(), EnvError> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(EnvError::InvalidPolicy {
                state: 0,
                detail: format!(
                    "policy is {}x{}, MDP is {}x{}",
                    self.n_states,
                    self.n_actions,
                    mdp.n_states(),
                    mdp.n_actions()
                ),
            });
        }
        Ok(())
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the cumulative sum: take the last non-zero entry.
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Samples `(a, s')` from `π(. | s)` and `P(. | s, a)`.
pub fn tabular_step<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    state: usize,
    rng: &mut R,
) -> (usize, usize) {
    let a = sample_categorical(policy.row(state), rng);
    let next = sample_categorical(mdp.next_dist(state, a), rng);
    (a, next)
}

/// States `s_0 .. s_{horizon-1}` of one trajectory with `s_0 ~ p0`.
pub fn tabular_rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<usize>, EnvError> {
    policy.check_compatible(mdp)?;
    let mut states = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(states);
    }
    let mut s = sample_categorical(mdp.initial(), rng);
    states.push(s);
    for _ in 1..horizon {
        s = tabular_step(mdp, policy, s, rng).1;
        states.push(s);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Deterministic chain 0 -> 1 -> 2 -> 3 (absorbing) under action 0; action 1 stays.
    fn chain() -> TabularMdp {
        let n = 4;
        let mut p = vec![0.0; n * 2 * n];
        for s in 0..n {
            p[(s * 2) * n + (s + 1).min(n - 1)] = 1.0;
            p[(s * 2 + 1) * n + s] = 1.0;
        }
        TabularMdp::new(n, 2, p, vec![0.0; n], 0.9, vec![1.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn deterministic_chain_rollout_is_unique() {
        let mdp = chain();
        let pi = TabularPolicy::deterministic(2, &[0, 0, 0, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(
                tabular_rollout(&mdp, &pi, 7, &mut rng).unwrap(),
                vec![0, 1, 2, 3, 3, 3, 3]
            );
        }
    }

    #[test]
    fn non_stochastic_policy_is_rejected() {
        let err = TabularPolicy::new(2, 2, vec![0.5, 0.5, 0.7, 0.2]).unwrap_err();
        assert!(matches!(err, EnvError::InvalidPolicy { state: 1, .. }));
    }

    #[test]
    fn invalid_transition_row_is_rejected() {
        let err = TabularMdp::new(1, 1, vec![0.9], vec![0.0], 0.9, vec![1.0]).unwrap_err();
        assert!(matches!(err, EnvError::InvalidMdp(_)));
    }

    #[test]
    fn grid_rows_are_stochastic_and_walls_hold() {
        let g = TabularMdp::default_grid();
        assert_eq!(g.n_states(), 25);
        assert_eq!(g.n_actions(), 4);
        // Corner 0 moving up or left stays with prob 1 - slip + 2 * slip/4.
        assert!((g.next_dist(0, 0)[0] - (0.9 + 0.05)).abs() < 1e-15);
        assert!((g.next_dist(0, 1)[1] - (0.9 + 0.025)).abs() < 1e-15);
    }
}
