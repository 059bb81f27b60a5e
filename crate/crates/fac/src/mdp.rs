//! Finite Markov decision processes, behavior policies, and transition
//! sampling.
//!
//! An MDP here is a complete tabular model: transition tensor
//! `P(s' | s, a)`, reward table `r(s, a)`, and discount `γ ∈ [0, 1)`. All
//! downstream quantities (values, gradients, fixed points) are computed from
//! this model by exact linear algebra, while learning algorithms consume
//! sampled transitions drawn under an explicitly seeded behavior policy.
//!
//! Ergodicity of the behavior chain — irreducibility plus aperiodicity of the
//! state-action chain induced by `μ` — is checked exactly on the transition
//! graph, not estimated, and gates every use of the stationary distribution.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{solve, Mat, SingularSystem};
use crate::rng::categorical;
use crate::scalar::Real;

/// Entry-wise tolerance for "this row is a probability distribution".
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Step tolerance at which stationary-distribution power iteration stops.
pub const POWER_ITERATION_TOL: f64 = 1e-12;

/// Iteration cap for stationary-distribution power iteration.
pub const POWER_ITERATION_MAX: usize = 1_000_000;

/// Residual `‖dᵀP_μ − dᵀ‖₁` accepted for a stationary distribution.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Validation and sampling errors for MDPs and behavior policies.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MdpError {
    #[error("transition row (state {state}, action {action}) is not a probability distribution")]
    RowNotStochastic { state: usize, action: usize },
    #[error("reward at (state {state}, action {action}) is not finite")]
    NonFiniteReward { state: usize, action: usize },
    #[error("discount must lie in [0, 1)")]
    BadDiscount,
    #[error("behavior policy row for state {state} is not a probability distribution")]
    BadPolicyRow { state: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("behavior state-action chain is not ergodic")]
    NotErgodic,
    #[error("stationary distribution solve failed: {0}")]
    Singular(#[from] SingularSystem),
}

/// A finite MDP given by explicit tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteMdp<F> {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a][s']` = P(s' | s, a).
    pub transition: Vec<Vec<Vec<F>>>,
    /// `reward[s][a]` = r(s, a).
    pub reward: Vec<Vec<F>>,
    /// Discount factor γ ∈ [0, 1).
    pub discount: F,
}

impl<F: Real> FiniteMdp<F> {
    /// Builds and validates an MDP.
    ///
    /// # Errors
    ///
    /// Any [`MdpError`] reported by [`FiniteMdp::validate`].
    pub fn new(
        transition: Vec<Vec<Vec<F>>>,
        reward: Vec<Vec<F>>,
        discount: F,
    ) -> Result<Self, MdpError> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let mdp = FiniteMdp { n_states, n_actions, transition, reward, discount };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Checks shapes, row-stochasticity (within [`ROW_SUM_TOL`]), reward
    /// finiteness, and the discount range.
    ///
    /// # Errors
    ///
    /// The first violation found, as an [`MdpError`].
    pub fn validate(&self) -> Result<(), MdpError> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(MdpError::DimensionMismatch(
                "MDP must have at least one state and one action".into(),
            ));
        }
        if self.transition.len() != self.n_states || self.reward.len() != self.n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "expected {} state rows",
                self.n_states
            )));
        }
        for (s, (row_t, row_r)) in self.transition.iter().zip(&self.reward).enumerate() {
            if row_t.len() != self.n_actions || row_r.len() != self.n_actions {
                return Err(MdpError::DimensionMismatch(format!(
                    "state {s}: expected {} action rows",
                    self.n_actions
                )));
            }
            for (a, probs) in row_t.iter().enumerate() {
                if probs.len() != self.n_states {
                    return Err(MdpError::DimensionMismatch(format!(
                        "transition row ({s}, {a}): expected {} entries",
                        self.n_states
                    )));
                }
                if !row_is_distribution(probs) {
                    return Err(MdpError::RowNotStochastic { state: s, action: a });
                }
            }
            for (a, &r) in row_r.iter().enumerate() {
                if !r.is_finite() {
                    return Err(MdpError::NonFiniteReward { state: s, action: a });
                }
            }
        }
        if !(self.discount >= F::zero() && self.discount < F::one()) {
            return Err(MdpError::BadDiscount);
        }
        Ok(())
    }

    /// Largest reward magnitude, `max_{s,a} |r(s,a)|`.
    pub fn r_max(&self) -> F {
        self.reward
            .iter()
            .flatten()
            .fold(F::zero(), |m, &r| m.max(r.abs()))
    }
}

fn row_is_distribution<F: Real>(probs: &[F]) -> bool {
    let mut sum = F::zero();
    for &p in probs {
        if !(p.is_finite() && p >= F::zero()) {
            return false;
        }
        sum = sum + p;
    }
    (sum - F::one()).abs() <= F::of(ROW_SUM_TOL)
}

/// A fixed, state-conditioned action distribution used to generate data.
///
/// The ergodicity flag is evaluated against a concrete MDP at construction
/// and refers to the state-action chain induced by this policy on that MDP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorPolicy<F> {
    /// `probs[s][a]` = μ(a | s).
    probs: Vec<Vec<F>>,
    /// Whether the induced state-action chain on the construction MDP is
    /// irreducible and aperiodic.
    #[serde(skip)]
    ergodic: bool,
}

impl<F: Real> BehaviorPolicy<F> {
    /// Builds a behavior policy and records whether its chain on `mdp` is
    /// ergodic.
    ///
    /// # Errors
    ///
    /// [`MdpError::DimensionMismatch`] on shape mismatch, or
    /// [`MdpError::BadPolicyRow`] if a row is not a distribution.
    pub fn new(mdp: &FiniteMdp<F>, probs: Vec<Vec<F>>) -> Result<Self, MdpError> {
        if probs.len() != mdp.n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "behavior policy: expected {} state rows, got {}",
                mdp.n_states,
                probs.len()
            )));
        }
        for (s, row) in probs.iter().enumerate() {
            if row.len() != mdp.n_actions {
                return Err(MdpError::DimensionMismatch(format!(
                    "behavior policy row {s}: expected {} actions",
                    mdp.n_actions
                )));
            }
            if !row_is_distribution(row) {
                return Err(MdpError::BadPolicyRow { state: s });
            }
        }
        let ergodic = is_ergodic(mdp, &probs);
        Ok(BehaviorPolicy { probs, ergodic })
    }

    /// Uniform behavior policy over actions.
    ///
    /// # Errors
    ///
    /// Propagates [`BehaviorPolicy::new`] errors (shape errors cannot occur).
    pub fn uniform(mdp: &FiniteMdp<F>) -> Result<Self, MdpError> {
        let p = F::one() / F::of(mdp.n_actions as f64);
        let probs = vec![vec![p; mdp.n_actions]; mdp.n_states];
        BehaviorPolicy::new(mdp, probs)
    }

    /// Full probability table, `probs[s][a] = μ(a|s)`.
    pub fn probs(&self) -> &[Vec<F>] {
        &self.probs
    }

    /// μ(a | s).
    pub fn prob(&self, state: usize, action: usize) -> F {
        self.probs[state][action]
    }

    /// Whether the induced state-action chain was ergodic at construction.
    pub fn is_ergodic(&self) -> bool {
        self.ergodic
    }
}

/// Exact ergodicity check for the state-action chain induced by `probs`.
///
/// Nodes are pairs `(s, a)` with `μ(a|s) > 0`; there is an edge
/// `(s, a) → (s', a')` when `P(s'|s,a) > 0` and `μ(a'|s') > 0`. The chain is
/// ergodic iff this graph is strongly connected and the gcd of its cycle
/// lengths is 1. Both properties are decided exactly from the sparsity
/// pattern — no sampling, no tolerance.
pub fn is_ergodic<F: Real>(mdp: &FiniteMdp<F>, probs: &[Vec<F>]) -> bool {
    // Compact node ids for supported (s, a) pairs.
    let mut node_id = vec![vec![usize::MAX; mdp.n_actions]; mdp.n_states];
    let mut nodes = Vec::new();
    for (s, row) in probs.iter().enumerate() {
        for (a, &p) in row.iter().enumerate() {
            if p > F::zero() {
                node_id[s][a] = nodes.len();
                nodes.push((s, a));
            }
        }
    }
    let n = nodes.len();
    if n == 0 {
        return false;
    }
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for (u, &(s, a)) in nodes.iter().enumerate() {
        for (s2, &p) in mdp.transition[s][a].iter().enumerate() {
            if p <= F::zero() {
                continue;
            }
            for a2 in 0..mdp.n_actions {
                let v = node_id[s2][a2];
                if v != usize::MAX {
                    fwd[u].push(v);
                    rev[v].push(u);
                }
            }
        }
    }

    let reachable = |adj: &[Vec<usize>]| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    if !reachable(&fwd).iter().all(|&b| b) || !reachable(&rev).iter().all(|&b| b) {
        return false;
    }

    // Period: breadth-first levels from node 0; the chain's period is the gcd
    // of (level(u) + 1 − level(v)) over all edges u → v.
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([0usize]);
    level[0] = 0;
    while let Some(u) = queue.pop_front() {
        for &v in &fwd[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period: u64 = 0;
    for (u, adj) in fwd.iter().enumerate() {
        for &v in adj {
            let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
            period = gcd(period, diff);
        }
    }
    period == 1
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// State-to-state transition matrix under a state-conditioned action
/// distribution: `P_pol[s][s'] = Σ_a pol(a|s) P(s'|s,a)`.
///
/// # Panics
///
/// Panics if `probs` has the wrong shape.
pub fn policy_transition_matrix<F: Real>(mdp: &FiniteMdp<F>, probs: &[Vec<F>]) -> Mat<F> {
    assert_eq!(probs.len(), mdp.n_states, "policy table: wrong state count");
    Mat::from_fn(mdp.n_states, mdp.n_states, |s, s2| {
        (0..mdp.n_actions)
            .map(|a| probs[s][a] * mdp.transition[s][a][s2])
            .sum()
    })
}

/// Stationary state distribution `d_μ` of the behavior chain.
///
/// Power iteration from the uniform distribution (tolerance
/// [`POWER_ITERATION_TOL`], at most [`POWER_ITERATION_MAX`] steps), falling
/// back to a direct null-space solve if the iteration stalls. The result
/// satisfies `‖d_μᵀ P_μ − d_μᵀ‖₁ ≤` [`STATIONARY_RESIDUAL_TOL`].
///
/// # Errors
///
/// [`MdpError::NotErgodic`] if the behavior chain is not ergodic, or a solve
/// failure from the fallback path.
pub fn stationary_distribution<F: Real>(
    mdp: &FiniteMdp<F>,
    mu: &BehaviorPolicy<F>,
) -> Result<Vec<F>, MdpError> {
    if !mu.is_ergodic() {
        return Err(MdpError::NotErgodic);
    }
    let p_mu = policy_transition_matrix(mdp, mu.probs());
    let pt = p_mu.transpose();
    let n = mdp.n_states;
    let mut d = vec![F::one() / F::of(n as f64); n];
    let mut converged = false;
    for _ in 0..POWER_ITERATION_MAX {
        let next = pt.matvec(&d);
        let diff: F = next
            .iter()
            .zip(&d)
            .map(|(&a, &b)| (a - b).abs())
            .sum();
        d = next;
        if diff <= F::of(POWER_ITERATION_TOL) {
            converged = true;
            break;
        }
    }
    let residual = |d: &[F]| -> F {
        pt.matvec(d)
            .iter()
            .zip(d)
            .map(|(&a, &b)| (a - b).abs())
            .sum()
    };
    if !converged || residual(&d) > F::of(STATIONARY_RESIDUAL_TOL) {
        // Direct solve of (P_μᵀ − I) d = 0 with the last row replaced by the
        // normalization Σ d = 1.
        let mut a = Mat::from_fn(n, n, |i, j| {
            pt[(i, j)] - if i == j { F::one() } else { F::zero() }
        });
        for j in 0..n {
            a[(n - 1, j)] = F::one();
        }
        let mut rhs = vec![F::zero(); n];
        rhs[n - 1] = F::one();
        d = solve(&a, &rhs)?;
        for x in &mut d {
            *x = x.max(F::zero());
        }
        let total: F = d.iter().copied().sum();
        for x in &mut d {
            *x = *x / total;
        }
    }
    Ok(d)
}

/// One sampled interaction `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<F> {
    pub state: usize,
    pub action: usize,
    pub reward: F,
    pub next_state: usize,
}

/// How the current state of each sampled transition is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Draw `s ~ d_μ` independently each step (requires an ergodic chain).
    IidStationary,
    /// Follow one trajectory of the behavior chain.
    Trajectory,
}

/// Stateful transition generator: owns the model, the behavior policy, the
/// mode, and one deterministic random stream.
#[derive(Debug, Clone)]
pub struct TransitionSampler<F> {
    mdp: FiniteMdp<F>,
    mu: BehaviorPolicy<F>,
    mode: SamplingMode,
    rng: ChaCha12Rng,
    state: usize,
    stationary: Option<Vec<F>>,
}

impl<F: Real> TransitionSampler<F> {
    /// Creates a sampler starting at `initial_state`.
    ///
    /// # Errors
    ///
    /// [`MdpError::NotErgodic`] if `IidStationary` mode is requested for a
    /// non-ergodic chain, or [`MdpError::DimensionMismatch`] for an invalid
    /// initial state.
    pub fn new(
        mdp: FiniteMdp<F>,
        mu: BehaviorPolicy<F>,
        mode: SamplingMode,
        rng: ChaCha12Rng,
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        if initial_state >= mdp.n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "initial state {initial_state} out of range"
            )));
        }
        let stationary = match mode {
            SamplingMode::IidStationary => Some(stationary_distribution(&mdp, &mu)?),
            SamplingMode::Trajectory => None,
        };
        Ok(TransitionSampler { mdp, mu, mode, rng, state: initial_state, stationary })
    }

    /// Draws the next behavior transition and advances the internal state.
    pub fn sample(&mut self) -> Transition<F> {
        let s = match self.mode {
            SamplingMode::IidStationary => categorical(
                &mut self.rng,
                self.stationary.as_ref().expect("stationary cached for iid mode"),
            ),
            SamplingMode::Trajectory => self.state,
        };
        let a = categorical(&mut self.rng, &self.mu.probs()[s]);
        let s2 = categorical(&mut self.rng, &self.mdp.transition[s][a]);
        self.state = s2;
        Transition { state: s, action: a, reward: self.mdp.reward[s][a], next_state: s2 }
    }

    /// Draws an action from `action_probs` at `state`, then a model
    /// transition, without advancing the sampler's own chain. Used when an
    /// update rule needs actions from a policy other than μ.
    pub fn probe(&mut self, state: usize, action_probs: &[F]) -> Transition<F> {
        let a = categorical(&mut self.rng, action_probs);
        let s2 = categorical(&mut self.rng, &self.mdp.transition[state][a]);
        Transition { state, action: a, reward: self.mdp.reward[state][a], next_state: s2 }
    }

    /// Current state of the trajectory chain.
    pub fn state(&self) -> usize {
        self.state
    }

    pub fn mdp(&self) -> &FiniteMdp<F> {
        &self.mdp
    }

    pub fn behavior(&self) -> &BehaviorPolicy<F> {
        &self.mu
    }
}
