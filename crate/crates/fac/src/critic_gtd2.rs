//! Gradient-TD critic (GTD2) over state features.
//!
//! Estimates a state-value approximation `V̂(s) = ψ(s)ᵀξ` from off-policy
//! data by descending the projected Bellman error with an auxiliary
//! least-squares iterate ν. One transition `(s, r, s')` whose action was
//! drawn from the *target* policy updates, in order,
//!
//! ```text
//! δ  = r + γ ψ'ᵀξ − ψᵀξ
//! ν ← ν + α (δ − ψᵀν) ψ
//! ξ ← ξ + α (ψ − γψ') (ψᵀν)
//! ```
//!
//! where the second line's `ψᵀν` uses the ν just written — the two iterates
//! share one time scale here and the ordering is part of the method. The
//! expected dynamics vanish exactly at `ξ = A⁻¹z`, `ν = 0` (see the oracle
//! layer), and unlike uncorrected semi-gradient TD the iteration is stable
//! under off-policy state weighting.

use crate::scalar::{axpy, dot, Real};

/// The coupled GTD2 iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct Gtd2State<F> {
    pub xi: Vec<F>,
    pub nu: Vec<F>,
}

impl<F: Real> Gtd2State<F> {
    /// Starts ξ from `init` and ν from zero.
    pub fn new(init: &[F]) -> Self {
        Gtd2State { xi: init.to_vec(), nu: vec![F::zero(); init.len()] }
    }

    /// Current value estimate `ψᵀξ`.
    pub fn value(&self, psi: &[F]) -> F {
        dot(psi, &self.xi)
    }

    /// One update from a transition with state feature `psi`, next-state
    /// feature `psi_next`, and the given discount and step size.
    pub fn step(&mut self, gamma: F, psi: &[F], psi_next: &[F], reward: F, alpha: F) {
        let delta = reward + gamma * dot(psi_next, &self.xi) - dot(psi, &self.xi);
        let correction = delta - dot(psi, &self.nu);
        axpy(&mut self.nu, alpha * correction, psi);
        // The projection coefficient reads the ν written just above.
        let psi_nu = dot(psi, &self.nu);
        for i in 0..self.xi.len() {
            self.xi[i] = self.xi[i] + alpha * psi_nu * (psi[i] - gamma * psi_next[i]);
        }
    }
}
