//! Exact solution oracles for finite MDPs.
//!
//! Everything here is computed by direct linear algebra on the tabular model,
//! so learning algorithms can be compared against ground truth to solver
//! precision. The quantities:
//!
//! * Values under a target policy π: `V = (I − γP_π)⁻¹ r_π` and
//!   `Q(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) V(s')`.
//! * The off-policy objective `J(θ) = Σ_s d_μ(s) V_θ(s)` and its exact
//!   gradient, computed two independently coded ways:
//!   - chain rule: `∇J = Σ_s d_μ(s) Σ_a [∇π(a|s) Q(s,a) + π(a|s) ∇Q(s,a)]`,
//!     with `∇Q` from per-parameter resolvent solves;
//!   - reweighting: `∇J = Σ_s m(s) Σ_a ∇π(a|s) Q(s,a)` with the emphasis
//!     vector `mᵀ = d_μᵀ (I − γP_π)⁻¹`, which never forms `∇Q`.
//! * Critic reference points: the λ-regularized TD fixed point
//!   `(E[φφᵀ] + λI − γE[φ ψ'ᵀ]) w = E[r φ]`, the squared-Bellman-residual
//!   minimizer `(E[(φ−γψ')(φ−γψ')ᵀ] + λI) w = E[r (φ−γψ')]`, and the
//!   state-feature TD fixed point `A w = z` with
//!   `A = E_{d_μ}[ψ (ψ − γψ')ᵀ]`, `z = E_{d_μ}[r_π ψ]` (next states under π).
//! * The gradient bias induced by replacing Q with the critic's fixed point,
//!   and measured problem constants (feature bounds, covariance floors,
//!   smoothness and fixed-point sensitivity estimates) for checking the
//!   standing assumptions of the convergence analysis.
//!
//! Expectations written `E[·]` are over `s ~ d_μ`, `a ~ μ(·|s)`,
//! `s' ~ P(·|s,a)` unless a policy subscript says otherwise.

use serde::Serialize;

use crate::features::{FeatureEval, Features};
use crate::linalg::{min_singular_value, solve, symmetric_eigenvalues, LuFactor, Mat, SingularSystem};
use crate::mdp::{policy_transition_matrix, stationary_distribution, BehaviorPolicy, FiniteMdp, MdpError};
use crate::policy::TabularSoftmaxPolicy;
use crate::scalar::{axpy, dot, norm2, Real};

/// Errors from oracle computations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle linear solve failed: {0}")]
    Singular(#[from] SingularSystem),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// `r_π(s) = Σ_a π(a|s) r(s,a)`.
fn policy_reward<F: Real>(mdp: &FiniteMdp<F>, probs: &[Vec<F>]) -> Vec<F> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| probs[s][a] * mdp.reward[s][a])
                .sum()
        })
        .collect()
}

/// `I − γ P_π` for the given action-probability table.
fn resolvent_matrix<F: Real>(mdp: &FiniteMdp<F>, probs: &[Vec<F>]) -> Mat<F> {
    let p_pi = policy_transition_matrix(mdp, probs);
    Mat::from_fn(mdp.n_states, mdp.n_states, |i, j| {
        let id = if i == j { F::one() } else { F::zero() };
        id - mdp.discount * p_pi[(i, j)]
    })
}

/// State values `V_θ` of the target policy, by direct solve.
///
/// # Errors
///
/// [`OracleError::Singular`] if the resolvent solve fails (cannot happen for
/// a valid MDP with γ < 1).
pub fn state_values<F: Real>(
    mdp: &FiniteMdp<F>,
    policy: &TabularSoftmaxPolicy<F>,
) -> Result<Vec<F>, OracleError> {
    let probs = policy.prob_table();
    let lu = LuFactor::new(&resolvent_matrix(mdp, &probs))?;
    Ok(lu.solve(&policy_reward(mdp, &probs)))
}

/// Action values `Q_θ(s,a) = r(s,a) + γ Σ_{s'} P(s'|s,a) V_θ(s')`.
///
/// # Errors
///
/// Propagates [`state_values`] errors.
pub fn q_values<F: Real>(
    mdp: &FiniteMdp<F>,
    policy: &TabularSoftmaxPolicy<F>,
) -> Result<Vec<Vec<F>>, OracleError> {
    let v = state_values(mdp, policy)?;
    Ok(q_from_values(mdp, &v))
}

fn q_from_values<F: Real>(mdp: &FiniteMdp<F>, v: &[F]) -> Vec<Vec<F>> {
    (0..mdp.n_states)
        .map(|s| {
            (0..mdp.n_actions)
                .map(|a| {
                    let future: F = (0..mdp.n_states)
                        .map(|s2| mdp.transition[s][a][s2] * v[s2])
                        .sum();
                    mdp.reward[s][a] + mdp.discount * future
                })
                .collect()
        })
        .collect()
}

/// Off-policy objective `J(θ) = Σ_s d_μ(s) V_θ(s)`.
///
/// # Errors
///
/// [`MdpError::NotErgodic`] via the stationary distribution, or solve errors.
pub fn objective<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
) -> Result<F, OracleError> {
    let d = stationary_distribution(mdp, mu)?;
    let v = state_values(mdp, policy)?;
    Ok(dot(&d, &v))
}

/// Exact gradient tensor `∇_θ Q_θ(s,a)`, indexed `[s][a][parameter]`.
///
/// For each parameter θ\[s₀,b\], the value-gradient solves
/// `(I − γP_π) ∂V = e_{s₀} · Σ_a ∂π(a|s₀) Q(s₀,a)` (one factorization, p
/// right-hand sides), and then `∂Q(s,a) = γ Σ_{s'} P(s'|s,a) ∂V(s')`.
///
/// # Errors
///
/// Propagates resolvent solve errors.
pub fn grad_q_values<F: Real>(
    mdp: &FiniteMdp<F>,
    policy: &TabularSoftmaxPolicy<F>,
) -> Result<Vec<Vec<Vec<F>>>, OracleError> {
    let n_states = mdp.n_states;
    let n_actions = mdp.n_actions;
    let p = policy.param_count();
    let probs = policy.prob_table();
    let lu = LuFactor::new(&resolvent_matrix(mdp, &probs))?;
    let v = lu.solve(&policy_reward(mdp, &probs));
    let q = q_from_values(mdp, &v);

    let mut grad_q = vec![vec![vec![F::zero(); p]; n_actions]; n_states];
    for s0 in 0..n_states {
        for b in 0..n_actions {
            let k = policy.flat_index(s0, b);
            // ∂(r_π + γP_π V)(s) vanishes except at s = s₀, where it equals
            // Σ_a ∂π(a|s₀)/∂θ[s₀,b] · Q(s₀,a).
            let mut rhs = vec![F::zero(); n_states];
            for a in 0..n_actions {
                let indicator = if a == b { F::one() } else { F::zero() };
                let dpi = probs[s0][a] * (indicator - probs[s0][b]);
                rhs[s0] = rhs[s0] + dpi * q[s0][a];
            }
            let dv = lu.solve(&rhs);
            for s in 0..n_states {
                for a in 0..n_actions {
                    let future: F = (0..n_states)
                        .map(|s2| mdp.transition[s][a][s2] * dv[s2])
                        .sum();
                    grad_q[s][a][k] = mdp.discount * future;
                }
            }
        }
    }
    Ok(grad_q)
}

/// Exact `∇J(θ)` by the chain rule:
/// `Σ_s d_μ(s) Σ_a [∇π(a|s) Q(s,a) + π(a|s) ∇Q(s,a)]`.
///
/// # Errors
///
/// Ergodicity or solve errors from the constituent oracles.
pub fn exact_gradient_chain<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
) -> Result<Vec<F>, OracleError> {
    let d = stationary_distribution(mdp, mu)?;
    let q = q_values(mdp, policy)?;
    let grad_q = grad_q_values(mdp, policy)?;
    let probs = policy.prob_table();
    let mut g = vec![F::zero(); policy.param_count()];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            // ∇π(a|s) Q(s,a): nonzero only in the block of state s.
            for b in 0..mdp.n_actions {
                let indicator = if a == b { F::one() } else { F::zero() };
                let dpi = probs[s][a] * (indicator - probs[s][b]);
                let k = policy.flat_index(s, b);
                g[k] = g[k] + d[s] * dpi * q[s][a];
            }
            axpy(&mut g, d[s] * probs[s][a], &grad_q[s][a]);
        }
    }
    Ok(g)
}

/// Emphasis vector `mᵀ = d_μᵀ (I − γP_π)⁻¹`, i.e. the solution of
/// `(I − γP_π)ᵀ m = d_μ`. Its mass satisfies `Σ_s m(s) = 1/(1−γ)`.
///
/// # Errors
///
/// Ergodicity or solve errors.
pub fn emphasis_weights<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
) -> Result<Vec<F>, OracleError> {
    let d = stationary_distribution(mdp, mu)?;
    let probs = policy.prob_table();
    let mt = resolvent_matrix(mdp, &probs).transpose();
    Ok(solve(&mt, &d)?)
}

/// Exact `∇J(θ)` by emphatic reweighting:
/// `Σ_s m(s) Σ_a ∇π(a|s) Q(s,a)`, with no `∇Q` term.
///
/// # Errors
///
/// Ergodicity or solve errors.
pub fn exact_gradient_emphatic<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
) -> Result<Vec<F>, OracleError> {
    let m = emphasis_weights(mdp, mu, policy)?;
    let q = q_values(mdp, policy)?;
    let probs = policy.prob_table();
    let mut g = vec![F::zero(); policy.param_count()];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            for b in 0..mdp.n_actions {
                let indicator = if a == b { F::one() } else { F::zero() };
                let dpi = probs[s][a] * (indicator - probs[s][b]);
                let k = policy.flat_index(s, b);
                g[k] = g[k] + m[s] * dpi * q[s][a];
            }
        }
    }
    Ok(g)
}

/// Exact policy-gradient surrogate with the critic's value estimate
/// `Q̂(s,a) = φ(s,a;θ)ᵀξ` in place of the true Q:
/// `Σ_s d_μ(s) Σ_a [Q̂(s,a) ∇π(a|s) + π(a|s) (∇_θ φ(s,a;θ))ᵀ ξ]`.
///
/// # Errors
///
/// Ergodicity or solve errors; [`OracleError::DimensionMismatch`] if `xi`
/// does not match the feature dimension.
pub fn approx_gradient_exact<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    xi: &[F],
) -> Result<Vec<F>, OracleError> {
    approx_gradient(mdp, mu, policy, features, xi, true)
}

/// On-policy approximation of the surrogate gradient: the `Q̂ ∇π` term only,
/// dropping the feature-gradient correction.
///
/// # Errors
///
/// As for [`approx_gradient_exact`].
pub fn approx_gradient_onpolicy<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    xi: &[F],
) -> Result<Vec<F>, OracleError> {
    approx_gradient(mdp, mu, policy, features, xi, false)
}

fn approx_gradient<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    xi: &[F],
    include_feature_grad: bool,
) -> Result<Vec<F>, OracleError> {
    let eval = features.eval(policy);
    if xi.len() != eval.dim() {
        return Err(OracleError::DimensionMismatch(format!(
            "critic vector has length {}, features have dimension {}",
            xi.len(),
            eval.dim()
        )));
    }
    let d = stationary_distribution(mdp, mu)?;
    let probs = policy.prob_table();
    let p = policy.param_count();
    let mut g = vec![F::zero(); p];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let q_hat = dot(&eval.phi(s, a), xi);
            for b in 0..mdp.n_actions {
                let indicator = if a == b { F::one() } else { F::zero() };
                let dpi = probs[s][a] * (indicator - probs[s][b]);
                let k = policy.flat_index(s, b);
                g[k] = g[k] + d[s] * dpi * q_hat;
            }
            if include_feature_grad {
                let jac = eval.phi_jacobian(s, a);
                let weight = d[s] * probs[s][a];
                for k in 0..p {
                    let pull: F = (0..xi.len()).map(|i| xi[i] * jac[(i, k)]).sum();
                    g[k] = g[k] + weight * pull;
                }
            }
        }
    }
    Ok(g)
}

/// Shared expectation terms over `s ~ d_μ`, `a ~ μ`, `s' ~ P`.
struct CriticMoments<F> {
    /// `E[φ φᵀ]`.
    feat_cov: Mat<F>,
    /// `γ E[φ ψ(s')ᵀ]`.
    cross: Mat<F>,
    /// `E[r φ]`.
    reward_feat: Vec<F>,
}

fn critic_moments<F: Real>(
    mdp: &FiniteMdp<F>,
    d: &[F],
    mu: &BehaviorPolicy<F>,
    eval: &FeatureEval<'_, F>,
) -> CriticMoments<F> {
    let dim = eval.dim();
    let psi: Vec<Vec<F>> = (0..mdp.n_states).map(|s| eval.psi(s)).collect();
    let mut feat_cov = Mat::zeros(dim, dim);
    let mut cross = Mat::zeros(dim, dim);
    let mut reward_feat = vec![F::zero(); dim];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let weight = d[s] * mu.prob(s, a);
            if weight == F::zero() {
                continue;
            }
            let phi = eval.phi(s, a);
            for i in 0..dim {
                for j in 0..dim {
                    feat_cov[(i, j)] = feat_cov[(i, j)] + weight * phi[i] * phi[j];
                }
            }
            axpy(&mut reward_feat, weight * mdp.reward[s][a], &phi);
            for s2 in 0..mdp.n_states {
                let w2 = weight * mdp.discount * mdp.transition[s][a][s2];
                if w2 == F::zero() {
                    continue;
                }
                for i in 0..dim {
                    for j in 0..dim {
                        cross[(i, j)] = cross[(i, j)] + w2 * phi[i] * psi[s2][j];
                    }
                }
            }
        }
    }
    CriticMoments { feat_cov, cross, reward_feat }
}

/// λ-regularized TD fixed point in the state-action features:
/// `w*_λ = (E[φφᵀ] + λI − γE[φ ψ'ᵀ])⁻¹ E[r φ]`.
///
/// # Errors
///
/// Ergodicity errors, or [`OracleError::Singular`] when the regularized
/// system is still singular (possible for rank-deficient features at λ = 0).
pub fn lambda_fixed_point<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    lambda: F,
) -> Result<Vec<F>, OracleError> {
    let d = stationary_distribution(mdp, mu)?;
    let eval = features.eval(policy);
    let m = critic_moments(mdp, &d, mu, &eval);
    let dim = eval.dim();
    let system = Mat::from_fn(dim, dim, |i, j| {
        let reg = if i == j { lambda } else { F::zero() };
        m.feat_cov[(i, j)] + reg - m.cross[(i, j)]
    });
    Ok(solve(&system, &m.reward_feat)?)
}

/// Minimizer of the λ-regularized mean squared Bellman residual
/// `E[(r + γψ'ᵀw − φᵀw)²] + λ‖w‖²`, where the next state sits inside the
/// square:
/// `w = (E[(φ−γψ')(φ−γψ')ᵀ] + λI)⁻¹ E[r (φ−γψ')]`.
///
/// This generally differs from [`lambda_fixed_point`] on stochastic MDPs
/// because the expectation over `s'` is taken inside the square.
///
/// # Errors
///
/// As for [`lambda_fixed_point`].
pub fn msbr_minimizer<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    lambda: F,
) -> Result<Vec<F>, OracleError> {
    let d = stationary_distribution(mdp, mu)?;
    let eval = features.eval(policy);
    let dim = eval.dim();
    let psi: Vec<Vec<F>> = (0..mdp.n_states).map(|s| eval.psi(s)).collect();
    let mut gram = Mat::zeros(dim, dim);
    let mut rhs = vec![F::zero(); dim];
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let weight = d[s] * mu.prob(s, a);
            if weight == F::zero() {
                continue;
            }
            let phi = eval.phi(s, a);
            for s2 in 0..mdp.n_states {
                let w2 = weight * mdp.transition[s][a][s2];
                if w2 == F::zero() {
                    continue;
                }
                let u: Vec<F> = (0..dim)
                    .map(|i| phi[i] - mdp.discount * psi[s2][i])
                    .collect();
                for i in 0..dim {
                    for j in 0..dim {
                        gram[(i, j)] = gram[(i, j)] + w2 * u[i] * u[j];
                    }
                }
                axpy(&mut rhs, w2 * mdp.reward[s][a], &u);
            }
        }
    }
    for i in 0..dim {
        gram[(i, i)] = gram[(i, i)] + lambda;
    }
    Ok(solve(&gram, &rhs)?)
}

/// TD fixed point for the state-feature critic: `ξ* = A⁻¹ z` with
/// `A = Σ_s d_μ(s) ψ(s) (ψ(s) − γ Σ_a π(a|s) Σ_{s'} P(s'|s,a) ψ(s'))ᵀ` and
/// `z = Σ_s d_μ(s) r_π(s) ψ(s)`. States come from the behavior distribution;
/// actions and next states follow the target policy.
///
/// # Errors
///
/// Ergodicity errors or a singular `A`.
pub fn gtd2_fixed_point<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
) -> Result<Vec<F>, OracleError> {
    let d = stationary_distribution(mdp, mu)?;
    let eval = features.eval(policy);
    let dim = eval.dim();
    let probs = policy.prob_table();
    let psi: Vec<Vec<F>> = (0..mdp.n_states).map(|s| eval.psi(s)).collect();
    let r_pi = policy_reward(mdp, &probs);
    let mut a_mat = Mat::zeros(dim, dim);
    let mut z = vec![F::zero(); dim];
    for s in 0..mdp.n_states {
        // ψ̄'(s) = Σ_a π(a|s) Σ_{s'} P(s'|s,a) ψ(s').
        let mut psi_next = vec![F::zero(); dim];
        for a in 0..mdp.n_actions {
            for s2 in 0..mdp.n_states {
                axpy(&mut psi_next, probs[s][a] * mdp.transition[s][a][s2], &psi[s2]);
            }
        }
        for i in 0..dim {
            for j in 0..dim {
                a_mat[(i, j)] = a_mat[(i, j)]
                    + d[s] * psi[s][i] * (psi[s][j] - mdp.discount * psi_next[j]);
            }
        }
        axpy(&mut z, d[s] * r_pi[s], &psi[s]);
    }
    Ok(solve(&a_mat, &z)?)
}

/// Expected update directions of the two-timescale state-feature critic at
/// `(ξ, ν)`, under `s ~ d_μ`, `a ~ π(·|s)`, `s' ~ P(·|s,a)`:
///
/// * auxiliary direction `E[(δ − ψᵀν) ψ]` with `δ = r + γψ'ᵀξ − ψᵀξ`;
/// * main direction `E[(ψ − γψ') (ψᵀν)]`.
///
/// Both vanish at `ξ = A⁻¹z`, `ν = 0`. Assembled by explicit enumeration of
/// `(s, a, s')`, independently of the matrix path in [`gtd2_fixed_point`].
///
/// # Errors
///
/// Ergodicity errors, or a dimension mismatch against the features.
pub fn gtd2_expected_updates<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    xi: &[F],
    nu: &[F],
) -> Result<(Vec<F>, Vec<F>), OracleError> {
    let d = stationary_distribution(mdp, mu)?;
    let eval = features.eval(policy);
    let dim = eval.dim();
    if xi.len() != dim || nu.len() != dim {
        return Err(OracleError::DimensionMismatch(
            "critic vectors must match the feature dimension".into(),
        ));
    }
    let probs = policy.prob_table();
    let psi: Vec<Vec<F>> = (0..mdp.n_states).map(|s| eval.psi(s)).collect();
    let mut nu_dir = vec![F::zero(); dim];
    let mut xi_dir = vec![F::zero(); dim];
    for s in 0..mdp.n_states {
        let psi_s = &psi[s];
        let psi_nu = dot(psi_s, nu);
        for a in 0..mdp.n_actions {
            for s2 in 0..mdp.n_states {
                let weight = d[s] * probs[s][a] * mdp.transition[s][a][s2];
                if weight == F::zero() {
                    continue;
                }
                let delta =
                    mdp.reward[s][a] + mdp.discount * dot(&psi[s2], xi) - dot(psi_s, xi);
                axpy(&mut nu_dir, weight * (delta - psi_nu), psi_s);
                for i in 0..dim {
                    xi_dir[i] = xi_dir[i]
                        + weight * (psi_s[i] - mdp.discount * psi[s2][i]) * psi_nu;
                }
            }
        }
    }
    Ok((nu_dir, xi_dir))
}

/// Gradient bias induced by the λ-regularized critic:
/// `b(θ) = ∇J(θ) − Σ_s d_μ(s) Σ_a [φᵀw*_λ ∇π + π (∇φ)ᵀ w*_λ]`.
///
/// # Errors
///
/// Errors from the constituent oracles.
pub fn bias_term<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    policy: &TabularSoftmaxPolicy<F>,
    features: &Features<F>,
    lambda: F,
) -> Result<Vec<F>, OracleError> {
    let grad = exact_gradient_chain(mdp, mu, policy)?;
    let w_star = lambda_fixed_point(mdp, mu, policy, features, lambda)?;
    let surrogate = approx_gradient_exact(mdp, mu, policy, features, &w_star)?;
    Ok(grad
        .iter()
        .zip(&surrogate)
        .map(|(&g, &s)| g - s)
        .collect())
}

/// Largest observed sensitivity of the λ-regularized fixed point to the
/// policy parameters: `max_{i≠j} ‖w*_λ(θ_i) − w*_λ(θ_j)‖ / ‖θ_i − θ_j‖`
/// over the given policy sample.
///
/// # Errors
///
/// Errors from [`lambda_fixed_point`]; requires at least two policies.
pub fn estimate_delta_lambda<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    features: &Features<F>,
    policies: &[TabularSoftmaxPolicy<F>],
    lambda: F,
) -> Result<F, OracleError> {
    if policies.len() < 2 {
        return Err(OracleError::DimensionMismatch(
            "sensitivity estimate needs at least two policies".into(),
        ));
    }
    let fixed: Vec<Vec<F>> = policies
        .iter()
        .map(|pi| lambda_fixed_point(mdp, mu, pi, features, lambda))
        .collect::<Result<_, _>>()?;
    let mut best = F::zero();
    for i in 0..policies.len() {
        for j in (i + 1)..policies.len() {
            let dw: F = norm2(
                &fixed[i]
                    .iter()
                    .zip(&fixed[j])
                    .map(|(&a, &b)| a - b)
                    .collect::<Vec<_>>(),
            );
            let dth: F = norm2(
                &policies[i]
                    .theta_flat()
                    .iter()
                    .zip(&policies[j].theta_flat())
                    .map(|(&a, &b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if dth > F::zero() {
                best = best.max(dw / dth);
            }
        }
    }
    Ok(best)
}

/// Best uniform approximation error of the true Q by the features over a
/// policy sample: least-squares fit of one `ξ` across all `(θ, s, a)`
/// triples, reported as the largest absolute residual.
///
/// # Errors
///
/// Errors from the value oracle; the Gram solve retries with a tiny ridge if
/// the feature sample is rank-deficient.
pub fn feature_capacity<F: Real>(
    mdp: &FiniteMdp<F>,
    features: &Features<F>,
    policies: &[TabularSoftmaxPolicy<F>],
) -> Result<F, OracleError> {
    let dim = features.dim();
    let mut gram = Mat::zeros(dim, dim);
    let mut rhs = vec![F::zero(); dim];
    let mut rows: Vec<(Vec<F>, F)> = Vec::new();
    for pi in policies {
        let q = q_values(mdp, pi)?;
        let eval = features.eval(pi);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let phi = eval.phi(s, a);
                for i in 0..dim {
                    for j in 0..dim {
                        gram[(i, j)] = gram[(i, j)] + phi[i] * phi[j];
                    }
                }
                axpy(&mut rhs, q[s][a], &phi);
                rows.push((phi, q[s][a]));
            }
        }
    }
    let xi = match solve(&gram, &rhs) {
        Ok(xi) => xi,
        Err(_) => {
            let ridge = gram.frobenius_norm().max(F::one()) * F::of(1e-12);
            let mut g2 = gram;
            for i in 0..dim {
                g2[(i, i)] = g2[(i, i)] + ridge;
            }
            solve(&g2, &rhs)?
        }
    };
    Ok(rows
        .iter()
        .fold(F::zero(), |m, (phi, q)| m.max((*q - dot(phi, &xi)).abs())))
}

/// Measured problem constants for an ergodic instance.
#[derive(Debug, Clone, Serialize)]
pub struct MeasuredConstants<F> {
    /// Largest observed `‖φ(s,a;θ)‖₂` over the policy sample.
    pub feature_norm_max: F,
    /// The feature family's uniform (θ-independent) norm bound.
    pub feature_norm_bound: F,
    /// Smallest eigenvalue of `E[φφᵀ]` over the policy sample.
    pub min_feature_cov_eig: F,
    /// Largest finite-difference ratio `‖quantity(θ) − quantity(θ')‖ / ‖θ − θ'‖`
    /// over sample pairs, maximized over π, φ, and ∇φ.
    pub smoothness_ratio_max: F,
    /// Sensitivity of the λ-regularized fixed point to θ.
    pub delta_lambda: F,
    /// Smallest of `σ_min(E[ψψᵀ])` and `σ_min(A(θ))` over the sample.
    pub gtd2_min_singular: F,
    /// Best uniform Q-approximation error of the features over the sample.
    pub capacity_error: F,
    /// Regularization used for the sensitivity estimate.
    pub lambda: F,
}

/// Outcome of checking the standing assumptions on a concrete instance.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport<F> {
    /// Whether the behavior state-action chain is ergodic. When `false`, the
    /// remaining constants are undefined and omitted.
    pub ergodic: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<MeasuredConstants<F>>,
}

/// Measures the problem constants the convergence analysis depends on, over
/// an explicit sample of policies.
///
/// # Errors
///
/// Oracle errors while measuring (a non-ergodic chain is not an error; it
/// yields a report with `ergodic = false`).
pub fn check_assumptions<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
    features: &Features<F>,
    policies: &[TabularSoftmaxPolicy<F>],
    lambda: F,
) -> Result<AssumptionReport<F>, OracleError> {
    if !mu.is_ergodic() {
        return Ok(AssumptionReport { ergodic: false, constants: None });
    }
    if policies.len() < 2 {
        return Err(OracleError::DimensionMismatch(
            "assumption checks need at least two sample policies".into(),
        ));
    }
    let d = stationary_distribution(mdp, mu)?;
    let dim = features.dim();

    let mut feature_norm_max = F::zero();
    let mut min_cov_eig = F::infinity();
    let mut gtd2_min_singular = F::infinity();
    for pi in policies {
        let eval = features.eval(pi);
        let mut cov = Mat::zeros(dim, dim);
        let mut psi_cov = Mat::zeros(dim, dim);
        let psi: Vec<Vec<F>> = (0..mdp.n_states).map(|s| eval.psi(s)).collect();
        let probs = pi.prob_table();
        let mut a_mat = Mat::zeros(dim, dim);
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let phi = eval.phi(s, a);
                feature_norm_max = feature_norm_max.max(norm2(&phi));
                let weight = d[s] * mu.prob(s, a);
                for i in 0..dim {
                    for j in 0..dim {
                        cov[(i, j)] = cov[(i, j)] + weight * phi[i] * phi[j];
                    }
                }
            }
            let mut psi_next = vec![F::zero(); dim];
            for a in 0..mdp.n_actions {
                for s2 in 0..mdp.n_states {
                    axpy(&mut psi_next, probs[s][a] * mdp.transition[s][a][s2], &psi[s2]);
                }
            }
            for i in 0..dim {
                for j in 0..dim {
                    psi_cov[(i, j)] = psi_cov[(i, j)] + d[s] * psi[s][i] * psi[s][j];
                    a_mat[(i, j)] = a_mat[(i, j)]
                        + d[s] * psi[s][i] * (psi[s][j] - mdp.discount * psi_next[j]);
                }
            }
        }
        min_cov_eig = min_cov_eig.min(symmetric_eigenvalues(&cov)[0]);
        gtd2_min_singular = gtd2_min_singular
            .min(min_singular_value(&psi_cov))
            .min(min_singular_value(&a_mat));
    }

    let mut smoothness = F::zero();
    for i in 0..policies.len() {
        for j in (i + 1)..policies.len() {
            let dth = norm2(
                &policies[i]
                    .theta_flat()
                    .iter()
                    .zip(&policies[j].theta_flat())
                    .map(|(&a, &b)| a - b)
                    .collect::<Vec<_>>(),
            );
            if dth == F::zero() {
                continue;
            }
            let (ei, ej) = (features.eval(&policies[i]), features.eval(&policies[j]));
            for s in 0..mdp.n_states {
                let (pi_i, pi_j) = (policies[i].action_probs(s), policies[j].action_probs(s));
                let dpi = norm2(
                    &pi_i.iter().zip(&pi_j).map(|(&a, &b)| a - b).collect::<Vec<_>>(),
                );
                smoothness = smoothness.max(dpi / dth);
                for a in 0..mdp.n_actions {
                    let (phi_i, phi_j) = (ei.phi(s, a), ej.phi(s, a));
                    let dphi = norm2(
                        &phi_i.iter().zip(&phi_j).map(|(&x, &y)| x - y).collect::<Vec<_>>(),
                    );
                    smoothness = smoothness.max(dphi / dth);
                    let (ji, jj) = (ei.phi_jacobian(s, a), ej.phi_jacobian(s, a));
                    let mut djac = F::zero();
                    for r in 0..ji.rows() {
                        for c in 0..ji.cols() {
                            let e = ji[(r, c)] - jj[(r, c)];
                            djac = djac + e * e;
                        }
                    }
                    smoothness = smoothness.max(djac.sqrt() / dth);
                }
            }
        }
    }

    let delta_lambda = estimate_delta_lambda(mdp, mu, features, policies, lambda)?;
    let capacity_error = feature_capacity(mdp, features, policies)?;

    Ok(AssumptionReport {
        ergodic: true,
        constants: Some(MeasuredConstants {
            feature_norm_max,
            feature_norm_bound: features.norm_bound(),
            min_feature_cov_eig: min_cov_eig,
            smoothness_ratio_max: smoothness,
            delta_lambda,
            gtd2_min_singular,
            capacity_error,
            lambda,
        }),
    })
}
