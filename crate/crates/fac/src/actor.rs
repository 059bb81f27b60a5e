//! Actor updates driven by the critic's value estimate.
//!
//! The actor ascends the surrogate gradient
//!
//! ```text
//! G(θ, ξ) = Σ_s d_μ(s) Σ_a [ Q̂(s,a) ∇π(a|s) + π(a|s) (∇_θ φ(s,a;θ))ᵀ ξ ]
//! ```
//!
//! with `Q̂ = φᵀξ` — the exact policy gradient with the critic substituted
//! for the true action values, including the functional correction through
//! the feature map's own θ-dependence. Two estimators are provided: the
//! closed-form expectation from the oracle layer, and a single-transition
//! importance-weighted estimate that is unbiased when the state is drawn
//! from `d_μ` and the action from μ.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureEval, Features};
use crate::mdp::{BehaviorPolicy, FiniteMdp, Transition};
use crate::oracles::{approx_gradient_exact, OracleError};
use crate::policy::TabularSoftmaxPolicy;
use crate::scalar::{dot, Real};

/// Errors from building an actor update direction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActorError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("gradient estimate has non-finite components")]
    NonFiniteGradient,
    #[error("behavior probability of the sampled action is zero")]
    UnsupportedAction,
}

/// Which gradient estimate drives the actor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientEstimator {
    /// Closed-form expectation over the model.
    Exact,
    /// Importance-weighted single-transition estimate.
    Sampled,
}

fn ensure_finite<F: Real>(g: Vec<F>) -> Result<Vec<F>, ActorError> {
    if g.iter().all(|x| x.is_finite()) {
        Ok(g)
    } else {
        Err(ActorError::NonFiniteGradient)
    }
}

/// The surrogate gradient `G(θ, ξ)` in closed form.
///
/// # Errors
///
/// Oracle errors, or [`ActorError::NonFiniteGradient`].
pub fn surrogate_gradient_exact<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    xi: &[F],
) -> Result<Vec<F>, ActorError> {
    ensure_finite(approx_gradient_exact(mdp, mu, policy, features, xi)?)
}

/// Single-transition estimate of `G(θ, ξ)` from a behavior transition.
///
/// Writing the action sum as an expectation over μ gives the unbiased
/// estimator `(1/μ(a|s)) [Q̂(s,a) ∇π(a|s) + π(a|s) (∇φ(s,a))ᵀξ]`. The ratio
/// is formed against μ only, so a target policy that underflows to zero
/// probability stays harmless.
///
/// # Errors
///
/// [`ActorError::UnsupportedAction`] if μ gives the sampled action zero
/// probability, or [`ActorError::NonFiniteGradient`].
pub fn surrogate_gradient_sampled<F: Real>(
    transition: &Transition<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    eval: &FeatureEval<'_, F>,
    xi: &[F],
) -> Result<Vec<F>, ActorError> {
    let (s, a) = (transition.state, transition.action);
    let mu_sa = mu.prob(s, a);
    if !(mu_sa > F::zero()) {
        return Err(ActorError::UnsupportedAction);
    }
    let inv_mu = F::one() / mu_sa;
    let probs = policy.action_probs(s);
    let q_hat = dot(&eval.phi(s, a), xi);
    let mut g = vec![F::zero(); policy.param_count()];
    for b in 0..probs.len() {
        let indicator = if a == b { F::one() } else { F::zero() };
        let dpi = probs[a] * (indicator - probs[b]);
        g[policy.flat_index(s, b)] = inv_mu * q_hat * dpi;
    }
    let jac = eval.phi_jacobian(s, a);
    let weight = inv_mu * probs[a];
    for k in 0..g.len() {
        let pull: F = (0..xi.len()).map(|i| xi[i] * jac[(i, k)]).sum();
        g[k] = g[k] + weight * pull;
    }
    ensure_finite(g)
}

/// One actor step: `θ ← θ + η G` (ascent) or `θ ← θ − η G` (descent
/// ablation).
pub fn actor_step<F: Real>(
    policy: &TabularSoftmaxPolicy<F>,
    gradient: &[F],
    eta: F,
    ascent: bool,
) -> TabularSoftmaxPolicy<F> {
    let sign = if ascent { eta } else { -eta };
    let delta: Vec<F> = gradient.iter().map(|&g| sign * g).collect();
    policy.with_step(&delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSpec, OracleQSpec, TabularSpec};
    use crate::mdp::{SamplingMode, TransitionSampler};
    use crate::oracles::{exact_gradient_chain, objective};
    use crate::rng::stream;
    use crate::scalar::norm2;

    fn mdp() -> FiniteMdp<f64> {
        FiniteMdp::new(
            vec![
                vec![vec![0.7, 0.3], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.9, 0.1]],
            ],
            vec![vec![1.0, -0.5], vec![0.25, 2.0]],
            0.9,
        )
        .unwrap()
    }

    fn pi() -> TabularSoftmaxPolicy<f64> {
        TabularSoftmaxPolicy::new(vec![vec![0.3, -0.4], vec![0.8, 0.1]])
    }

    #[test]
    fn exact_oracle_critic_recovers_the_true_gradient() {
        let mdp = mdp();
        let mu = BehaviorPolicy::uniform(&mdp).unwrap();
        let features = FeatureSpec::OracleQ(OracleQSpec {}).build(&mdp).unwrap();
        let g = surrogate_gradient_exact(&mdp, &mu, &pi(), &features, &[1.0]).unwrap();
        let truth = exact_gradient_chain(&mdp, &mu, &pi()).unwrap();
        let diff = norm2(&g.iter().zip(&truth).map(|(a, b)| a - b).collect::<Vec<_>>());
        assert!(diff < 1e-10);
    }

    #[test]
    fn sampled_estimator_is_unbiased() {
        let mdp = mdp();
        let mu =
            BehaviorPolicy::new(&mdp, vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let features = FeatureSpec::Tabular(TabularSpec {}).build(&mdp).unwrap();
        let pi = pi();
        let eval = features.eval(&pi);
        let xi = vec![0.5, -0.25, 1.0, 2.0];
        let exact =
            surrogate_gradient_exact(&mdp, &mu, &pi, &features, &xi).unwrap();

        let mut sampler = TransitionSampler::new(
            mdp.clone(),
            mu.clone(),
            SamplingMode::IidStationary,
            stream(7, "actor-test"),
            0,
        )
        .unwrap();
        let n = 40_000;
        let mut mean = vec![0.0; exact.len()];
        for _ in 0..n {
            let tr = sampler.sample();
            let g = surrogate_gradient_sampled(&tr, &mu, &pi, &eval, &xi).unwrap();
            for (m, gi) in mean.iter_mut().zip(&g) {
                *m += gi / n as f64;
            }
        }
        let diff = norm2(
            &mean.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>(),
        );
        assert!(diff < 0.02, "sampled mean is {diff} from the expectation");
    }

    #[test]
    fn sampled_estimator_rejects_unsupported_actions() {
        let mdp = mdp();
        let mu =
            BehaviorPolicy::new(&mdp, vec![vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
        let features = FeatureSpec::Tabular(TabularSpec {}).build(&mdp).unwrap();
        let pi = pi();
        let eval = features.eval(&pi);
        // Claim an action μ could never have produced.
        let tr = Transition { state: 0, action: 1, reward: 0.0, next_state: 0 };
        assert_eq!(
            surrogate_gradient_sampled(&tr, &mu, &pi, &eval, &[0.0; 4]),
            Err(ActorError::UnsupportedAction)
        );
    }

    #[test]
    fn non_finite_critic_weights_are_caught() {
        let mdp = mdp();
        let mu = BehaviorPolicy::uniform(&mdp).unwrap();
        let features = FeatureSpec::Tabular(TabularSpec {}).build(&mdp).unwrap();
        assert_eq!(
            surrogate_gradient_exact(
                &mdp,
                &mu,
                &pi(),
                &features,
                &[f64::NAN, 0.0, 0.0, 0.0]
            ),
            Err(ActorError::NonFiniteGradient)
        );
    }

    #[test]
    fn ascent_step_raises_the_objective_and_descent_lowers_it() {
        let mdp = mdp();
        let mu = BehaviorPolicy::uniform(&mdp).unwrap();
        let features = FeatureSpec::OracleQ(OracleQSpec {}).build(&mdp).unwrap();
        let pi = pi();
        let g = surrogate_gradient_exact(&mdp, &mu, &pi, &features, &[1.0]).unwrap();
        let j0 = objective(&mdp, &mu, &pi).unwrap();
        let up = objective(&mdp, &mu, &actor_step(&pi, &g, 1e-3, true)).unwrap();
        let down = objective(&mdp, &mu, &actor_step(&pi, &g, 1e-3, false)).unwrap();
        assert!(up > j0);
        assert!(down < j0);
    }
}
