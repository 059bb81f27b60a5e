//! Feature families for the functional critic.
//!
//! A feature map assigns every state-action pair a vector
//! `φ(s, a; θ) ∈ R^d` that may depend on the actor parameters θ. The critic
//! represents `Q̂(s,a) = φ(s,a;θ)ᵀξ`; the induced state feature is the
//! policy average `ψ(s;θ) = Σ_a π(a|s) φ(s,a;θ)`.
//!
//! Families:
//!
//! * [`Tabular`](Features::Tabular) — one-hot over `(s, a)`; θ-independent.
//! * [`TabularState`](Features::TabularState) — one-hot over `s` alone, the
//!   natural family for state-value critics; θ-independent.
//! * [`OracleQ`](Features::OracleQ) — the scalar feature `φ(s,a;θ) = Q_θ(s,a)`
//!   computed exactly from the model, so `ξ = 1` reproduces the true Q. Its
//!   θ-dependence (and Jacobian) comes from the value oracles.
//! * [`PolicyAugmented`](Features::PolicyAugmented) — a frozen random linear
//!   map applied to the concatenation of the `(s,a)` one-hot and the full
//!   action-probability table, giving a cheap θ-dependent family.
//! * [`FixedTable`](Features::FixedTable) — arbitrary θ-independent vectors
//!   supplied as an explicit table (used by the star counterexample, whose
//!   features are not one-hot).
//!
//! Per-policy evaluation goes through [`Features::eval`], which caches the
//! solves an evaluation needs (exact Q values, Jacobians, the shared linear
//! terms of the policy-augmented family) for that policy only; the family
//! itself holds no mutable state.

use std::cell::OnceCell;

use serde::{Deserialize, Serialize};

use crate::linalg::Mat;
use crate::mdp::FiniteMdp;
use crate::oracles;
use crate::policy::TabularSoftmaxPolicy;
use crate::rng::stream;
use crate::scalar::{axpy, norm2, Real};

/// Errors from building a feature family.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeatureError {
    #[error("feature dimension must be positive")]
    BadDim,
    #[error("fixed feature table must match the MDP shape with finite entries")]
    BadTable,
}

/// Serializable description of a feature family, as it appears in run
/// configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FeatureSpec {
    Tabular(TabularSpec),
    TabularState(TabularStateSpec),
    OracleQ(OracleQSpec),
    PolicyAugmented(PolicyAugmentedSpec),
    FixedTable(FixedTableSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSpec {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularStateSpec {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleQSpec {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyAugmentedSpec {
    /// Output dimension `d`.
    pub dim: usize,
    /// Seed for the frozen random weights.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedTableSpec {
    /// `table[s][a]` is the feature vector of `(s, a)`.
    pub table: Vec<Vec<Vec<f64>>>,
}

impl FeatureSpec {
    /// Instantiates the family against a concrete MDP.
    ///
    /// # Errors
    ///
    /// [`FeatureError`] if the description is inconsistent with the MDP.
    pub fn build<F: Real>(&self, mdp: &FiniteMdp<F>) -> Result<Features<F>, FeatureError> {
        Features::build(self, mdp)
    }
}

/// An instantiated feature family. See the module docs for the catalogue.
#[derive(Debug, Clone)]
pub enum Features<F> {
    Tabular {
        n_states: usize,
        n_actions: usize,
    },
    TabularState {
        n_states: usize,
        n_actions: usize,
    },
    OracleQ {
        mdp: FiniteMdp<F>,
    },
    PolicyAugmented {
        /// Frozen map of shape `d × 2·n_states·n_actions`; the first block
        /// acts on the `(s,a)` one-hot, the second on the flattened
        /// action-probability table.
        weights: Mat<F>,
        n_states: usize,
        n_actions: usize,
    },
    FixedTable {
        table: Vec<Vec<Vec<F>>>,
    },
}

impl<F: Real> Features<F> {
    /// Instantiates a [`FeatureSpec`] against a concrete MDP.
    ///
    /// # Errors
    ///
    /// [`FeatureError`] if the description is inconsistent with the MDP.
    pub fn build(spec: &FeatureSpec, mdp: &FiniteMdp<F>) -> Result<Self, FeatureError> {
        let (s, a) = (mdp.n_states, mdp.n_actions);
        match spec {
            FeatureSpec::Tabular(_) => Ok(Features::Tabular { n_states: s, n_actions: a }),
            FeatureSpec::TabularState(_) => {
                Ok(Features::TabularState { n_states: s, n_actions: a })
            }
            FeatureSpec::OracleQ(_) => Ok(Features::OracleQ { mdp: mdp.clone() }),
            FeatureSpec::PolicyAugmented(p) => {
                if p.dim == 0 {
                    return Err(FeatureError::BadDim);
                }
                // Entries uniform on [−1/√d, 1/√d], frozen by the seed.
                let mut rng = stream(p.seed, "features");
                let scale = 1.0 / (p.dim as f64).sqrt();
                let weights = Mat::from_fn(p.dim, 2 * s * a, |_, _| {
                    crate::rng::uniform::<F>(&mut rng, -scale, scale)
                });
                Ok(Features::PolicyAugmented { weights, n_states: s, n_actions: a })
            }
            FeatureSpec::FixedTable(t) => {
                let ok = t.table.len() == s
                    && t.table.iter().all(|row| {
                        row.len() == a
                            && !row.is_empty()
                            && row.iter().all(|v| {
                                v.len() == row[0].len()
                                    && !v.is_empty()
                                    && v.iter().all(|x| x.is_finite())
                            })
                    })
                    && t.table
                        .iter()
                        .flatten()
                        .all(|v| v.len() == t.table[0][0].len());
                if !ok {
                    return Err(FeatureError::BadTable);
                }
                let table = t
                    .table
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|v| v.iter().map(|&x| F::of(x)).collect())
                            .collect()
                    })
                    .collect();
                Ok(Features::FixedTable { table })
            }
        }
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        match self {
            Features::Tabular { n_states, n_actions } => n_states * n_actions,
            Features::TabularState { n_states, .. } => *n_states,
            Features::OracleQ { .. } => 1,
            Features::PolicyAugmented { weights, .. } => weights.rows(),
            Features::FixedTable { table } => table[0][0].len(),
        }
    }

    /// A θ-independent upper bound on `‖φ(s,a;θ)‖₂`.
    ///
    /// Exact for the tabular and fixed-table families; `r_max/(1−γ)` for the
    /// oracle family (the largest possible |Q|); an operator-norm bound for
    /// the policy-augmented family.
    pub fn norm_bound(&self) -> F {
        match self {
            Features::Tabular { .. } | Features::TabularState { .. } => F::one(),
            Features::OracleQ { mdp } => mdp.r_max() / (F::one() - mdp.discount),
            Features::PolicyAugmented { weights, n_states, .. } => {
                // ‖W x‖ ≤ ‖W‖_F ‖x‖ and ‖x‖² ≤ 1 + n_states.
                weights.frobenius_norm() * (F::one() + F::of(*n_states as f64)).sqrt()
            }
            Features::FixedTable { table } => table
                .iter()
                .flatten()
                .fold(F::zero(), |m, v| m.max(norm2(v))),
        }
    }

    /// Prepares an evaluation of this family at one policy. The returned
    /// handle caches per-policy solves; it holds no state across policies.
    ///
    /// # Panics
    ///
    /// Panics if the policy shape disagrees with the family's MDP shape.
    pub fn eval<'a>(&'a self, policy: &'a TabularSoftmaxPolicy<F>) -> FeatureEval<'a, F> {
        let (s, a) = match self {
            Features::Tabular { n_states, n_actions }
            | Features::TabularState { n_states, n_actions }
            | Features::PolicyAugmented { n_states, n_actions, .. } => (*n_states, *n_actions),
            Features::OracleQ { mdp } => (mdp.n_states, mdp.n_actions),
            Features::FixedTable { table } => (table.len(), table[0].len()),
        };
        assert_eq!(policy.n_states(), s, "policy/state count mismatch");
        assert_eq!(policy.n_actions(), a, "policy/action count mismatch");
        FeatureEval {
            features: self,
            policy,
            probs: policy.prob_table(),
            q: OnceCell::new(),
            grad_q: OnceCell::new(),
            mixed: OnceCell::new(),
            mixed_jac: OnceCell::new(),
        }
    }
}

/// Evaluation of a feature family at a fixed policy, with per-policy caches.
pub struct FeatureEval<'a, F> {
    features: &'a Features<F>,
    policy: &'a TabularSoftmaxPolicy<F>,
    probs: Vec<Vec<F>>,
    /// Exact Q table (oracle family only).
    q: OnceCell<Vec<Vec<F>>>,
    /// Exact ∇Q tensor (oracle family only).
    grad_q: OnceCell<Vec<Vec<Vec<F>>>>,
    /// Policy-block contribution `W_Π · vec(Π_θ)` (policy-augmented only).
    mixed: OnceCell<Vec<F>>,
    /// Shared Jacobian `W_Π · ∂vec(Π_θ)/∂θ` (policy-augmented only).
    mixed_jac: OnceCell<Mat<F>>,
}

impl<'a, F: Real> FeatureEval<'a, F> {
    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// Action probabilities `π(a|s)` of the evaluation policy.
    pub fn probs(&self, state: usize) -> &[F] {
        &self.probs[state]
    }

    fn oracle_q(&self, mdp: &FiniteMdp<F>) -> &Vec<Vec<F>> {
        self.q.get_or_init(|| {
            oracles::q_values(mdp, self.policy)
                .expect("value solve cannot fail for a validated MDP with γ < 1")
        })
    }

    fn oracle_grad_q(&self, mdp: &FiniteMdp<F>) -> &Vec<Vec<Vec<F>>> {
        self.grad_q.get_or_init(|| {
            oracles::grad_q_values(mdp, self.policy)
                .expect("value-gradient solve cannot fail for a validated MDP with γ < 1")
        })
    }

    /// `φ(s, a; θ)`.
    pub fn phi(&self, state: usize, action: usize) -> Vec<F> {
        match self.features {
            Features::Tabular { n_states, n_actions } => {
                let mut v = vec![F::zero(); n_states * n_actions];
                v[state * n_actions + action] = F::one();
                v
            }
            Features::TabularState { n_states, .. } => {
                let mut v = vec![F::zero(); *n_states];
                v[state] = F::one();
                v
            }
            Features::OracleQ { mdp } => vec![self.oracle_q(mdp)[state][action]],
            Features::PolicyAugmented { weights, n_states, n_actions } => {
                let mixed = self.mixed.get_or_init(|| {
                    let mut acc = vec![F::zero(); weights.rows()];
                    let offset = n_states * n_actions;
                    for s in 0..*n_states {
                        for a in 0..*n_actions {
                            let col = offset + s * n_actions + a;
                            for i in 0..weights.rows() {
                                acc[i] = acc[i] + weights[(i, col)] * self.probs[s][a];
                            }
                        }
                    }
                    acc
                });
                let col = state * n_actions + action;
                (0..weights.rows())
                    .map(|i| weights[(i, col)] + mixed[i])
                    .collect()
            }
            Features::FixedTable { table } => table[state][action].clone(),
        }
    }

    /// Jacobian `∂φ(s,a;θ)/∂θ` of shape `d × p` (flat parameter layout).
    pub fn phi_jacobian(&self, state: usize, action: usize) -> Mat<F> {
        let p = self.policy.param_count();
        match self.features {
            Features::Tabular { .. }
            | Features::TabularState { .. }
            | Features::FixedTable { .. } => Mat::zeros(self.dim(), p),
            Features::OracleQ { mdp } => {
                let row = &self.oracle_grad_q(mdp)[state][action];
                Mat::from_fn(1, p, |_, k| row[k])
            }
            Features::PolicyAugmented { weights, n_states, n_actions } => self
                .mixed_jac
                .get_or_init(|| {
                    // ∂φ/∂θ = W_Π · ∂vec(Π)/∂θ is shared by every (s, a).
                    let offset = n_states * n_actions;
                    let mut jac = Mat::zeros(weights.rows(), p);
                    for s in 0..*n_states {
                        for a2 in 0..*n_actions {
                            let col = offset + s * n_actions + a2;
                            for b in 0..*n_actions {
                                let indicator =
                                    if a2 == b { F::one() } else { F::zero() };
                                let dpi =
                                    self.probs[s][a2] * (indicator - self.probs[s][b]);
                                let k = s * n_actions + b;
                                for i in 0..weights.rows() {
                                    jac[(i, k)] =
                                        jac[(i, k)] + weights[(i, col)] * dpi;
                                }
                            }
                        }
                    }
                    jac
                })
                .clone(),
        }
    }

    /// State feature `ψ(s; θ) = Σ_a π(a|s) φ(s, a; θ)`.
    pub fn psi(&self, state: usize) -> Vec<F> {
        let mut acc = vec![F::zero(); self.dim()];
        for (a, &p) in self.probs[state].iter().enumerate() {
            axpy(&mut acc, p, &self.phi(state, a));
        }
        acc
    }

    /// Jacobian `∂ψ(s;θ)/∂θ = Σ_a [φ(s,a) ∇π(a|s)ᵀ + π(a|s) ∂φ(s,a)/∂θ]`,
    /// of shape `d × p`.
    pub fn psi_jacobian(&self, state: usize) -> Mat<F> {
        let p = self.policy.param_count();
        let mut jac = Mat::zeros(self.dim(), p);
        for a in 0..self.probs[state].len() {
            let phi = self.phi(state, a);
            let dpi = self.policy.prob_gradient(state, a);
            for i in 0..self.dim() {
                for k in 0..p {
                    jac[(i, k)] = jac[(i, k)] + phi[i] * dpi[k];
                }
            }
            let phi_jac = self.phi_jacobian(state, a);
            let weight = self.probs[state][a];
            for i in 0..self.dim() {
                for k in 0..p {
                    jac[(i, k)] = jac[(i, k)] + weight * phi_jac[(i, k)];
                }
            }
        }
        jac
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::FiniteMdp;

    fn one_state_mdp() -> FiniteMdp<f64> {
        FiniteMdp::new(vec![vec![vec![1.0]]], vec![vec![1.0]], 0.9).unwrap()
    }

    fn two_by_two_mdp() -> FiniteMdp<f64> {
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

    #[test]
    fn tabular_features_are_one_hot_pairs() {
        let mdp = two_by_two_mdp();
        let features = FeatureSpec::Tabular(TabularSpec {}).build(&mdp).unwrap();
        let pi = TabularSoftmaxPolicy::zeros(2, 2);
        let eval = features.eval(&pi);
        assert_eq!(eval.phi(1, 0), vec![0.0, 0.0, 1.0, 0.0]);
        let jac = eval.phi_jacobian(1, 0);
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(jac[(i, k)], 0.0);
            }
        }
        assert_eq!(features.norm_bound(), 1.0);
    }

    #[test]
    fn tabular_state_features_ignore_the_action() {
        let mdp = two_by_two_mdp();
        let features = FeatureSpec::TabularState(TabularStateSpec {})
            .build(&mdp)
            .unwrap();
        let pi = TabularSoftmaxPolicy::new(vec![vec![0.4, -0.4], vec![1.0, 0.0]]);
        let eval = features.eval(&pi);
        assert_eq!(eval.phi(1, 0), eval.phi(1, 1));
        assert_eq!(eval.phi(0, 1), vec![1.0, 0.0]);
        // ψ(s) = Σ_a π(a|s) e_s = e_s for any policy.
        assert_eq!(eval.psi(1), vec![0.0, 1.0]);
    }

    #[test]
    fn oracle_feature_is_exact_q() {
        // Single absorbing state, r = 1, γ = 0.9: Q = 1/(1−γ) = 10.
        let mdp = one_state_mdp();
        let features = FeatureSpec::OracleQ(OracleQSpec {}).build(&mdp).unwrap();
        let pi = TabularSoftmaxPolicy::zeros(1, 1);
        let eval = features.eval(&pi);
        assert!((eval.phi(0, 0)[0] - 10.0).abs() < 1e-12);
        assert_eq!(features.dim(), 1);
        assert!((features.norm_bound() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn psi_averages_phi_under_the_policy() {
        let mdp = two_by_two_mdp();
        let features = FeatureSpec::Tabular(TabularSpec {}).build(&mdp).unwrap();
        let pi = TabularSoftmaxPolicy::new(vec![vec![3.0f64.ln(), 0.0], vec![0.0, 0.0]]);
        let eval = features.eval(&pi);
        let psi = eval.psi(0);
        assert!((psi[0] - 0.75).abs() < 1e-12);
        assert!((psi[1] - 0.25).abs() < 1e-12);
        assert_eq!(&psi[2..], &[0.0, 0.0]);
    }

    fn finite_difference_phi_jacobian(
        features: &Features<f64>,
        pi: &TabularSoftmaxPolicy<f64>,
        s: usize,
        a: usize,
    ) -> Mat<f64> {
        let p = pi.param_count();
        let d = features.dim();
        let h = 1e-6;
        Mat::from_fn(d, p, |i, k| {
            let mut e = vec![0.0; p];
            e[k] = h;
            let plus = features.eval(&pi.with_step(&e)).phi(s, a)[i];
            e[k] = -h;
            let minus = features.eval(&pi.with_step(&e)).phi(s, a)[i];
            (plus - minus) / (2.0 * h)
        })
    }

    #[test]
    fn oracle_jacobian_matches_finite_differences() {
        let mdp = two_by_two_mdp();
        let features = FeatureSpec::OracleQ(OracleQSpec {}).build(&mdp).unwrap();
        let pi = TabularSoftmaxPolicy::new(vec![vec![0.2, -0.3], vec![0.7, 0.1]]);
        let eval = features.eval(&pi);
        for s in 0..2 {
            for a in 0..2 {
                let jac = eval.phi_jacobian(s, a);
                let fd = finite_difference_phi_jacobian(&features, &pi, s, a);
                for k in 0..pi.param_count() {
                    assert!(
                        (jac[(0, k)] - fd[(0, k)]).abs() < 1e-6,
                        "({s},{a}) wrt {k}: {} vs {}",
                        jac[(0, k)],
                        fd[(0, k)]
                    );
                }
            }
        }
    }

    #[test]
    fn policy_augmented_jacobian_matches_finite_differences() {
        let mdp = two_by_two_mdp();
        let features =
            FeatureSpec::PolicyAugmented(PolicyAugmentedSpec { dim: 3, seed: 5 })
                .build(&mdp)
                .unwrap();
        let pi = TabularSoftmaxPolicy::new(vec![vec![0.2, -0.3], vec![0.7, 0.1]]);
        let eval = features.eval(&pi);
        for s in 0..2 {
            for a in 0..2 {
                let jac = eval.phi_jacobian(s, a);
                let fd = finite_difference_phi_jacobian(&features, &pi, s, a);
                for i in 0..3 {
                    for k in 0..pi.param_count() {
                        assert!(
                            (jac[(i, k)] - fd[(i, k)]).abs() < 1e-7,
                            "({s},{a}) entry ({i},{k})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn psi_jacobian_matches_finite_differences() {
        let mdp = two_by_two_mdp();
        for spec in [
            FeatureSpec::OracleQ(OracleQSpec {}),
            FeatureSpec::Tabular(TabularSpec {}),
            FeatureSpec::PolicyAugmented(PolicyAugmentedSpec { dim: 4, seed: 9 }),
        ] {
            let features = spec.build(&mdp).unwrap();
            let pi = TabularSoftmaxPolicy::new(vec![vec![0.4, -0.2], vec![-0.5, 0.3]]);
            let eval = features.eval(&pi);
            let h = 1e-6;
            for s in 0..2 {
                let jac = eval.psi_jacobian(s);
                for k in 0..pi.param_count() {
                    let mut e = vec![0.0; pi.param_count()];
                    e[k] = h;
                    let plus = features.eval(&pi.with_step(&e)).psi(s);
                    e[k] = -h;
                    let minus = features.eval(&pi.with_step(&e)).psi(s);
                    for i in 0..features.dim() {
                        let fd = (plus[i] - minus[i]) / (2.0 * h);
                        assert!(
                            (jac[(i, k)] - fd).abs() < 1e-6,
                            "{spec:?} ψ({s}) entry ({i},{k}): {} vs {fd}",
                            jac[(i, k)]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn policy_augmented_is_frozen_per_seed_and_bounded() {
        let mdp = two_by_two_mdp();
        let spec = FeatureSpec::PolicyAugmented(PolicyAugmentedSpec { dim: 6, seed: 11 });
        let f1 = spec.build(&mdp).unwrap();
        let f2 = spec.build(&mdp).unwrap();
        let pi = TabularSoftmaxPolicy::new(vec![vec![1.0, 0.0], vec![-2.0, 0.4]]);
        let (e1, e2) = (f1.eval(&pi), f2.eval(&pi));
        let bound = f1.norm_bound();
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(e1.phi(s, a), e2.phi(s, a), "same seed must freeze weights");
                assert!(norm2(&e1.phi(s, a)) <= bound);
            }
        }
        let f3 = FeatureSpec::PolicyAugmented(PolicyAugmentedSpec { dim: 6, seed: 12 })
            .build(&mdp)
            .unwrap();
        assert_ne!(f3.eval(&pi).phi(0, 0), e1.phi(0, 0), "new seed, new weights");
    }

    #[test]
    fn fixed_table_round_trips_and_validates() {
        let mdp = two_by_two_mdp();
        let spec = FeatureSpec::FixedTable(FixedTableSpec {
            table: vec![
                vec![vec![1.0, 2.0], vec![0.0, 1.0]],
                vec![vec![-1.0, 0.5], vec![3.0, 0.0]],
            ],
        });
        let features = spec.build(&mdp).unwrap();
        let pi = TabularSoftmaxPolicy::zeros(2, 2);
        assert_eq!(features.eval(&pi).phi(1, 1), vec![3.0, 0.0]);
        assert!((features.norm_bound() - 3.0).abs() < 1e-12);

        let bad = FeatureSpec::FixedTable(FixedTableSpec {
            table: vec![vec![vec![1.0]]],
        });
        assert!(matches!(
            bad.build::<f64>(&mdp),
            Err(FeatureError::BadTable)
        ));
    }

    #[test]
    fn feature_spec_serialization_is_strict() {
        let spec = FeatureSpec::PolicyAugmented(PolicyAugmentedSpec { dim: 8, seed: 3 });
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"family":"policy_augmented","dim":8,"seed":3}"#);
        let back: FeatureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
        assert!(serde_json::from_str::<FeatureSpec>(r#"{"family":"nope"}"#).is_err());
        assert!(
            serde_json::from_str::<FeatureSpec>(r#"{"family":"tabular","junk":1}"#).is_err(),
            "unknown keys must be rejected"
        );
    }
}
