//! Target-based linear functional critic.
//!
//! The critic keeps two weight vectors: a regression iterate ξ and a slow
//! tracking target w. One transition `(s, a, r, s')` with behavior features
//! `φ = φ(s,a;θ)` and target-averaged next-state features `ψ' = ψ(s';θ)`
//! updates them as
//!
//! ```text
//! ξ ← Γ_{B₁}[ (1 − αλ) ξ + α (r + γ ψ'ᵀw − φᵀξ) φ ]
//! w ← Γ_{B₂}[ w + β (Γ_{B₂}(ξ) − w) ]
//! ```
//!
//! so ξ performs ridge regression toward the frozen-target Bellman image of
//! w while w slowly chases ξ. The truncation Γ is a Euclidean ball
//! projection by default (points inside the ball are untouched); an optional
//! sphere mode rescales onto the boundary instead.
//!
//! Boundedness of the iterates for any step sizes needs the regularization
//! to dominate both the discount coupling and the radius ratio; the analysis
//! uses `λ ≥ max(4 γ² C², 4 C / B₁)` with `C` a uniform feature-norm bound,
//! exposed here as [`min_lambda`].

use serde::{Deserialize, Serialize};

use crate::scalar::{dot, norm2, Real};

/// How vectors are pulled back to their trust region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Project onto the ball: rescale only when the norm exceeds the radius.
    Ball,
    /// Rescale onto the sphere of that radius whenever the vector is nonzero.
    Sphere,
}

/// Pulls `v` back to the radius-`r` region in place.
pub fn truncate<F: Real>(v: &mut [F], radius: F, mode: Truncation) {
    let n = norm2(v);
    let rescale = match mode {
        Truncation::Ball => n > radius,
        Truncation::Sphere => n > F::zero(),
    };
    if rescale {
        let scale = radius / n;
        for x in v {
            *x = *x * scale;
        }
    }
}

/// Smallest regularization the boundedness argument supports:
/// `max(4 γ² C², 4 C / B₁)`.
pub fn min_lambda<F: Real>(gamma: F, feature_bound: F, b1: F) -> F {
    let four = F::of(4.0);
    (four * gamma * gamma * feature_bound * feature_bound)
        .max(four * feature_bound / b1)
}

/// One uncorrected semi-gradient TD(0) update:
/// `ξ ← ξ + α (r + γ ψ'ᵀξ − φᵀξ) φ`.
///
/// This is the coupled update in the degenerate regime λ = 0, β = 1,
/// unbounded radii: the target collapses onto the regression iterate and no
/// regularization or truncation restrains it. It is kept as the ablation
/// baseline — on the star counterexample it diverges where the regularized
/// critic stays bounded.
pub fn vanilla_td_step<F: Real>(
    xi: &mut [F],
    gamma: F,
    phi: &[F],
    psi_next: &[F],
    reward: F,
    alpha: F,
) {
    let delta = reward + gamma * dot(psi_next, xi) - dot(phi, xi);
    for i in 0..xi.len() {
        xi[i] = xi[i] + alpha * delta * phi[i];
    }
}

/// Configuration of one target-based critic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetCriticConfig<F> {
    /// Ridge regularization λ.
    pub lambda: F,
    /// Trust-region radius for ξ.
    pub b1: F,
    /// Trust-region radius for w.
    pub b2: F,
    #[serde(default = "default_truncation")]
    pub truncation: Truncation,
    /// When `true` (the analyzed form), the tracking update consumes the ξ
    /// just produced; `false` replays the previous iterate (an ablation).
    #[serde(default = "default_true")]
    pub w_uses_updated_xi: bool,
}

fn default_truncation() -> Truncation {
    Truncation::Ball
}

fn default_true() -> bool {
    true
}

/// The critic's mutable state.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCriticState<F> {
    pub xi: Vec<F>,
    pub w: Vec<F>,
}

impl<F: Real> TargetCriticState<F> {
    /// Starts both vectors from `init`, each projected into its own region.
    pub fn new(init: &[F], cfg: &TargetCriticConfig<F>) -> Self {
        let mut xi = init.to_vec();
        truncate(&mut xi, cfg.b1, cfg.truncation);
        let mut w = init.to_vec();
        truncate(&mut w, cfg.b2, cfg.truncation);
        TargetCriticState { xi, w }
    }

    /// Current value estimate `φᵀξ`.
    pub fn value(&self, phi: &[F]) -> F {
        dot(phi, &self.xi)
    }

    /// One coupled update from a single transition.
    ///
    /// `phi` is the feature of the taken `(s, a)`, `psi_next` the averaged
    /// feature of `s'`, `gamma` the discount, and `alpha`/`beta` the current
    /// regression/tracking step sizes.
    pub fn step(
        &mut self,
        cfg: &TargetCriticConfig<F>,
        gamma: F,
        phi: &[F],
        psi_next: &[F],
        reward: F,
        alpha: F,
        beta: F,
    ) {
        let xi_old = self.xi.clone();
        let target_error = reward + gamma * dot(psi_next, &self.w) - dot(phi, &xi_old);
        let shrink = F::one() - alpha * cfg.lambda;
        for i in 0..self.xi.len() {
            self.xi[i] = shrink * xi_old[i] + alpha * target_error * phi[i];
        }
        truncate(&mut self.xi, cfg.b1, cfg.truncation);

        let source = if cfg.w_uses_updated_xi { &self.xi } else { &xi_old };
        let mut pulled = source.clone();
        truncate(&mut pulled, cfg.b2, cfg.truncation);
        for i in 0..self.w.len() {
            self.w[i] = self.w[i] + beta * (pulled[i] - self.w[i]);
        }
        truncate(&mut self.w, cfg.b2, cfg.truncation);
    }
}
