//! Tabular softmax target policies.
//!
//! The actor is parameterized by one logit per state-action pair:
//! `π(a|s) ∝ exp(θ[s,a])`. Parameters are read and updated through a flat
//! layout with index `s · n_actions + a`, which is also the layout every
//! gradient in this crate uses.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Softmax policy with one logit per state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSoftmaxPolicy<F> {
    /// `theta[s][a]` is the logit of action `a` in state `s`.
    theta: Vec<Vec<F>>,
}

impl<F: Real> TabularSoftmaxPolicy<F> {
    /// Wraps a logit table.
    ///
    /// # Panics
    ///
    /// Panics if the table is empty or ragged, or contains non-finite logits.
    pub fn new(theta: Vec<Vec<F>>) -> Self {
        assert!(!theta.is_empty(), "policy needs at least one state");
        let n_actions = theta[0].len();
        assert!(n_actions > 0, "policy needs at least one action");
        for row in &theta {
            assert_eq!(row.len(), n_actions, "policy table must be rectangular");
            assert!(row.iter().all(|x| x.is_finite()), "logits must be finite");
        }
        TabularSoftmaxPolicy { theta }
    }

    /// The uniform policy: all logits zero.
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        TabularSoftmaxPolicy::new(vec![vec![F::zero(); n_actions]; n_states])
    }

    pub fn n_states(&self) -> usize {
        self.theta.len()
    }

    pub fn n_actions(&self) -> usize {
        self.theta[0].len()
    }

    /// Number of parameters, `n_states · n_actions`.
    pub fn param_count(&self) -> usize {
        self.n_states() * self.n_actions()
    }

    /// Flat parameter index of `(s, a)`.
    pub fn flat_index(&self, state: usize, action: usize) -> usize {
        state * self.n_actions() + action
    }

    pub fn theta(&self) -> &[Vec<F>] {
        &self.theta
    }

    /// Parameters in flat layout.
    pub fn theta_flat(&self) -> Vec<F> {
        self.theta.iter().flatten().copied().collect()
    }

    /// Action distribution at `state`, computed with max-subtracted
    /// exponentials so extreme logits cannot overflow.
    pub fn action_probs(&self, state: usize) -> Vec<F> {
        let row = &self.theta[state];
        let m = row.iter().fold(F::neg_infinity(), |m, &x| m.max(x));
        let exps: Vec<F> = row.iter().map(|&x| (x - m).exp()).collect();
        let total: F = exps.iter().copied().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Full probability table `π(a|s)`.
    pub fn prob_table(&self) -> Vec<Vec<F>> {
        (0..self.n_states()).map(|s| self.action_probs(s)).collect()
    }

    /// Gradient of `π(a|s)` with respect to every parameter, in flat layout.
    ///
    /// Only the block of state `s` is nonzero:
    /// `∂π(a|s)/∂θ[s,b] = π(a|s)(1{a=b} − π(b|s))`.
    pub fn prob_gradient(&self, state: usize, action: usize) -> Vec<F> {
        let probs = self.action_probs(state);
        let mut grad = vec![F::zero(); self.param_count()];
        let base = state * self.n_actions();
        for b in 0..self.n_actions() {
            let indicator = if b == action { F::one() } else { F::zero() };
            grad[base + b] = probs[action] * (indicator - probs[b]);
        }
        grad
    }

    /// New policy with `delta` (flat layout) added to the parameters.
    ///
    /// # Panics
    ///
    /// Panics if `delta.len()` differs from [`Self::param_count`] or
    /// introduces non-finite logits.
    pub fn with_step(&self, delta: &[F]) -> Self {
        assert_eq!(delta.len(), self.param_count(), "parameter step: wrong length");
        let n_actions = self.n_actions();
        let theta = self
            .theta
            .iter()
            .enumerate()
            .map(|(s, row)| {
                row.iter()
                    .enumerate()
                    .map(|(a, &x)| x + delta[s * n_actions + a])
                    .collect()
            })
            .collect();
        TabularSoftmaxPolicy::new(theta)
    }
}
