//! Benchmark environments.
//!
//! Three families, each bundled with a default behavior policy, feature
//! family, actor initialization, and critic initialization:
//!
//! * **Two-state switch** — the smallest nontrivial off-policy problem:
//!   action 0 stays, action 1 switches, reward 1 in state 1, γ = 1/2.
//!   Everything about it is hand-checkable.
//! * **Star counterexample** — the classic 7-state divergence example for
//!   off-policy semi-gradient TD: six outer states and a hub, a dashed
//!   action jumping uniformly to the outer ring and a solid action into the
//!   hub, zero rewards, γ = 0.99. The value features over-parameterize the
//!   states (8 weights for 7 states, crossed with the two actions to give a
//!   16-dimensional state-action family), the behavior picks the dashed
//!   action with probability 6/7 while the target always plays solid, and
//!   the traditional inflated initialization puts the weights far from the
//!   (zero) true values. Uncorrected TD diverges here; the regularized
//!   target-based critic must not.
//! * **Garnet** — randomly generated MDPs parameterized by state/action
//!   counts and a branching factor: each `(s, a)` reaches `branching`
//!   uniformly chosen distinct states with Dirichlet(1) probabilities, and
//!   rewards are uniform on `[0, reward_scale]`. Generation is
//!   deterministic per seed and retries until the uniform-behavior chain is
//!   ergodic.
//!
//! A fourth selector, `from_file`, loads an arbitrary finite MDP from a JSON
//! file and pairs it with the uniform behavior policy, tabular features, and
//! zero initializations.

use serde::{Deserialize, Serialize};

use crate::features::{FeatureSpec, FixedTableSpec, TabularSpec};
use crate::mdp::{BehaviorPolicy, FiniteMdp, MdpError};
use crate::rng::{stream, uniform};
use crate::scalar::Real;

/// A fully specified benchmark instance.
#[derive(Debug, Clone)]
pub struct Bench<F> {
    pub mdp: FiniteMdp<F>,
    pub behavior: BehaviorPolicy<F>,
    /// Default feature family for this environment.
    pub features: FeatureSpec,
    /// Default actor initialization (the divergence example pins its target
    /// policy here; the others start uniform).
    pub theta0: Vec<Vec<F>>,
    /// Default critic initialization, sized to the default features.
    pub critic_init: Vec<F>,
}

/// Errors from building a benchmark instance.
#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("could not read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not parse {path}: {msg}")]
    Parse { path: String, msg: String },
}

/// Serializable environment selector, as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    TwoStateSwitch(TwoStateSwitchSpec),
    #[serde(rename = "baird")]
    BairdStar(BairdStarSpec),
    Garnet(GarnetSpec),
    FromFile(FromFileSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStateSwitchSpec {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BairdStarSpec {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FromFileSpec {
    /// Path to a JSON file holding a finite MDP.
    pub path: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarnetSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// Number of distinct successor states of each `(s, a)`.
    pub branching: usize,
    #[serde(default = "default_reward_scale")]
    pub reward_scale: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    pub seed: u64,
}

fn default_reward_scale() -> f64 {
    1.0
}

fn default_discount() -> f64 {
    0.9
}

impl EnvSpec {
    /// Builds the concrete instance.
    ///
    /// # Errors
    ///
    /// [`EnvError::Mdp`] for inconsistent garnet parameters or when no
    /// ergodic garnet is found; [`EnvError::Io`] / [`EnvError::Parse`] when
    /// a file-backed MDP cannot be loaded.
    pub fn build<F: Real>(&self) -> Result<Bench<F>, EnvError> {
        match self {
            EnvSpec::TwoStateSwitch(_) => Ok(two_state_switch()?),
            EnvSpec::BairdStar(_) => Ok(baird_star()?),
            EnvSpec::Garnet(g) => Ok(garnet(g)?),
            EnvSpec::FromFile(f) => from_file(&f.path),
        }
    }
}

/// Loads a finite MDP from a JSON file and wraps it with the uniform
/// behavior policy, tabular features, and zero initializations.
pub fn from_file<F: Real>(path: &str) -> Result<Bench<F>, EnvError> {
    let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io {
        path: path.to_string(),
        source,
    })?;
    let mdp: FiniteMdp<F> =
        serde_json::from_str(&text).map_err(|e| EnvError::Parse {
            path: path.to_string(),
            msg: e.to_string(),
        })?;
    mdp.validate()?;
    let behavior = BehaviorPolicy::uniform(&mdp)?;
    Ok(Bench {
        critic_init: vec![F::zero(); mdp.n_states * mdp.n_actions],
        theta0: vec![vec![F::zero(); mdp.n_actions]; mdp.n_states],
        features: FeatureSpec::Tabular(TabularSpec {}),
        behavior,
        mdp,
    })
}

/// The two-state switch MDP. See the module docs.
pub fn two_state_switch<F: Real>() -> Result<Bench<F>, MdpError> {
    let one = 1.0;
    let mdp = FiniteMdp::new(
        vec![
            vec![vec![F::of(one), F::zero()], vec![F::zero(), F::of(one)]],
            vec![vec![F::zero(), F::of(one)], vec![F::of(one), F::zero()]],
        ],
        vec![
            vec![F::zero(), F::zero()],
            vec![F::of(one), F::of(one)],
        ],
        F::of(0.5),
    )?;
    let behavior = BehaviorPolicy::uniform(&mdp)?;
    Ok(Bench {
        critic_init: vec![F::zero(); 4],
        theta0: vec![vec![F::zero(); 2]; 2],
        features: FeatureSpec::Tabular(TabularSpec {}),
        behavior,
        mdp,
    })
}

/// Number of outer states in the star counterexample.
const STAR_OUTER: usize = 6;

/// The star divergence counterexample. See the module docs.
pub fn baird_star<F: Real>() -> Result<Bench<F>, MdpError> {
    let n_states = STAR_OUTER + 1;
    let hub = STAR_OUTER;
    let outer_prob = 1.0 / STAR_OUTER as f64;
    let mut transition = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let dashed: Vec<F> = (0..n_states)
            .map(|j| if j < STAR_OUTER { F::of(outer_prob) } else { F::zero() })
            .collect();
        let solid: Vec<F> = (0..n_states)
            .map(|j| if j == hub { F::one() } else { F::zero() })
            .collect();
        transition.push(vec![dashed, solid]);
    }
    let reward = vec![vec![F::zero(); 2]; n_states];
    let mdp = FiniteMdp::new(transition, reward, F::of(0.99))?;

    let behavior = BehaviorPolicy::new(
        &mdp,
        vec![vec![F::of(6.0 / 7.0), F::of(1.0 / 7.0)]; n_states],
    )?;

    // Value features: outer state i reads 2·w[i] + w[7]; the hub reads
    // w[6] + 2·w[7]. Crossing with the action one-hot gives one 8-weight
    // block per action.
    let state_feature = |s: usize| -> Vec<f64> {
        let mut x = vec![0.0; n_states + 1];
        if s < STAR_OUTER {
            x[s] = 2.0;
            x[n_states] = 1.0;
        } else {
            x[hub] = 1.0;
            x[n_states] = 2.0;
        }
        x
    };
    let block = n_states + 1;
    let mut table = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let x = state_feature(s);
        let mut dashed = vec![0.0; 2 * block];
        dashed[..block].copy_from_slice(&x);
        let mut solid = vec![0.0; 2 * block];
        solid[block..].copy_from_slice(&x);
        table.push(vec![dashed, solid]);
    }

    // The traditional inflated start: every weight at one except the hub's
    // dedicated weight at ten, scaled far away from the zero fixed point.
    let mut init = vec![1.0; 2 * block];
    init[block + hub] = 10.0;
    let critic_init = init.iter().map(|&x| F::of(1000.0 * x)).collect();

    // The target policy always plays solid; pinning it through saturated
    // logits keeps the actor parameterization uniform across environments.
    let theta0 = vec![vec![F::zero(), F::of(25.0)]; n_states];

    Ok(Bench {
        critic_init,
        theta0,
        features: FeatureSpec::FixedTable(FixedTableSpec { table }),
        behavior,
        mdp,
    })
}

/// A randomly generated garnet instance. See the module docs.
pub fn garnet<F: Real>(spec: &GarnetSpec) -> Result<Bench<F>, MdpError> {
    let (s_n, a_n, b_n) = (spec.n_states, spec.n_actions, spec.branching);
    if s_n == 0 || a_n == 0 || b_n == 0 || b_n > s_n {
        return Err(MdpError::DimensionMismatch(format!(
            "garnet needs 1 ≤ branching ≤ n_states, got branching {b_n} for {s_n} states"
        )));
    }
    if !(spec.reward_scale.is_finite() && spec.reward_scale >= 0.0) {
        return Err(MdpError::DimensionMismatch(
            "garnet reward scale must be a finite nonnegative number".into(),
        ));
    }
    let mut rng = stream(spec.seed, "garnet");
    for _attempt in 0..100 {
        let mut transition = Vec::with_capacity(s_n);
        let mut reward = Vec::with_capacity(s_n);
        for _s in 0..s_n {
            let mut t_row = Vec::with_capacity(a_n);
            let mut r_row = Vec::with_capacity(a_n);
            for _a in 0..a_n {
                // Partial Fisher-Yates picks `branching` distinct successors.
                let mut pool: Vec<usize> = (0..s_n).collect();
                for i in 0..b_n {
                    let j = i + (uniform::<f64>(&mut rng, 0.0, (s_n - i) as f64)
                        as usize)
                        .min(s_n - i - 1);
                    pool.swap(i, j);
                }
                // Dirichlet(1) weights via normalized exponentials.
                let mut probs = vec![0.0_f64; s_n];
                let mut total = 0.0;
                for &next in &pool[..b_n] {
                    let e = -(1.0 - uniform::<f64>(&mut rng, 0.0, 1.0)).ln();
                    probs[next] = e;
                    total += e;
                }
                t_row.push(
                    probs.iter().map(|&p| F::of(p / total)).collect::<Vec<F>>(),
                );
                r_row.push(F::of(uniform::<f64>(
                    &mut rng,
                    0.0,
                    spec.reward_scale,
                )));
            }
            transition.push(t_row);
            reward.push(r_row);
        }
        let mdp = FiniteMdp::new(transition, reward, F::of(spec.discount))?;
        let behavior = BehaviorPolicy::uniform(&mdp)?;
        if behavior.is_ergodic() {
            return Ok(Bench {
                critic_init: vec![F::zero(); s_n * a_n],
                theta0: vec![vec![F::zero(); a_n]; s_n],
                features: FeatureSpec::Tabular(TabularSpec {}),
                behavior,
                mdp,
            });
        }
    }
    Err(MdpError::NotErgodic)
}
