//! The meta-loop: a complete stochastic run wiring sampler, critic, and
//! actor together under one configuration.
//!
//! Each environment step draws one behavior transition, applies one or more
//! critic updates with the current step sizes, and (unless the actor is
//! frozen) takes one surrogate-gradient actor step. Instrumentation rows are
//! sampled on a fixed cadence; every row prices the current iterates against
//! the exact oracles — objective, true gradient, critic fixed point, and
//! surrogate bias — so runs document their own quality.
//!
//! Three critics are available. The `target` critic is the regularized
//! tracking pair and supports actor updates; the `gtd2` critic is the
//! gradient-corrected evaluation method and only runs with a frozen actor,
//! because the surrogate actor update is defined through the target pair.
//! GTD2 evaluates the target policy from behavior-drawn states by probing
//! the model with target-policy actions, which keeps its updates exactly
//! on-distribution without importance ratios. The `vanilla_td_ablation`
//! critic is uncorrected semi-gradient TD(0) — no ridge, no target, no
//! truncation — kept solely as the deadly-triad baseline that the
//! regularized critic is measured against.
//!
//! A run never fails just because it blows up: when any iterate norm passes
//! [`DIVERGENCE_THRESHOLD`] the driver writes one final row, marks the step
//! in [`RunLog::diverged_at`], and returns the log. Divergence is a result,
//! not an error.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actor::{
    actor_step, surrogate_gradient_exact, surrogate_gradient_sampled, ActorError,
    GradientEstimator,
};
use crate::critic_gtd2::Gtd2State;
use crate::critic_target::{
    min_lambda, vanilla_td_step, TargetCriticConfig, TargetCriticState, Truncation,
};
use crate::envs::{EnvError, EnvSpec};
use crate::features::{FeatureError, FeatureSpec, Features};
use crate::mdp::{
    BehaviorPolicy, FiniteMdp, MdpError, SamplingMode, TransitionSampler,
};
use crate::oracles::{
    bias_term, exact_gradient_chain, gtd2_fixed_point, lambda_fixed_point,
    objective, OracleError,
};
use crate::policy::TabularSoftmaxPolicy;
use crate::rng::stream;
use crate::runlog::{RunLog, RunRecord};
use crate::scalar::norm2;
use crate::schedule::{ScheduleError, StepSchedule};

/// A run stops (successfully, with a marker) once any iterate norm passes
/// this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

/// Sentinel written into columns that do not apply to the configuration.
const NOT_APPLICABLE: f64 = -1.0;

/// Which critic the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// Regularized target-tracking pair; supports actor updates.
    Target,
    /// Gradient-corrected evaluation critic; frozen actor only.
    Gtd2,
    /// Uncorrected semi-gradient TD(0): the deadly-triad ablation. No ridge
    /// weight, tracking target, or truncation applies.
    #[serde(alias = "vanilla-td-ablation")]
    VanillaTdAblation,
}

/// Complete description of one run. Deserializes strictly: unknown keys are
/// configuration bugs, not extensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    /// Feature family; defaults to the environment's own.
    #[serde(default)]
    pub features: Option<FeatureSpec>,
    #[serde(default = "default_critic")]
    pub critic: CriticKind,
    /// Ridge weight for the target critic; defaults to the stability
    /// threshold computed from the discount, feature bound, and `b1`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Trust-region radius for ξ (target critic only).
    #[serde(default = "default_b1")]
    pub b1: f64,
    /// Trust-region radius for w (target critic only). Must stay strictly
    /// between the feature bound and `b1`.
    #[serde(default = "default_b2")]
    pub b2: f64,
    pub schedule: StepSchedule<f64>,
    pub total_steps: u64,
    #[serde(default = "default_gradient")]
    pub gradient: GradientEstimator,
    /// Transitions averaged per sampled actor gradient. The critic always
    /// consumes exactly one transition per step regardless.
    #[serde(default = "default_batch_size")]
    pub batch_size: u64,
    /// Behavior policy override, `probs[s][a]`; defaults to the
    /// environment's own.
    #[serde(default)]
    pub behavior: Option<Vec<Vec<f64>>>,
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// `false` flips the actor to descent (an ablation).
    #[serde(default = "default_true")]
    pub ascent: bool,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingMode,
    /// Critic-only evaluation of the initial policy.
    #[serde(default)]
    pub frozen_actor: bool,
    /// When `true`, a ridge weight below the stability threshold is
    /// rejected; switch off to reproduce divergence.
    #[serde(default = "default_true")]
    pub enforce_min_lambda: bool,
    /// When `true`, step-size schedules must satisfy the standard decay and
    /// timescale-separation conditions; switch off for constant-step
    /// ablations.
    #[serde(default = "default_true")]
    pub enforce_schedule: bool,
    #[serde(default = "default_truncation")]
    pub truncation: Truncation,
    #[serde(default = "default_true")]
    pub w_uses_updated_xi: bool,
    /// Critic updates per environment step, all replaying the same
    /// transition with the same step sizes.
    #[serde(default = "default_steps_per_iter")]
    pub critic_steps_per_iter: u64,
    /// Actor initialization; defaults to the environment's own.
    #[serde(default)]
    pub theta0: Option<Vec<Vec<f64>>>,
    /// Critic initialization; defaults to the environment's own when the
    /// dimensions agree, otherwise zeros.
    #[serde(default)]
    pub critic_init: Option<Vec<f64>>,
}

fn default_critic() -> CriticKind {
    CriticKind::Target
}

fn default_b1() -> f64 {
    1e30
}

fn default_b2() -> f64 {
    1e15
}

fn default_batch_size() -> u64 {
    1
}

fn default_gradient() -> GradientEstimator {
    GradientEstimator::Exact
}

fn default_log_every() -> u64 {
    100
}

fn default_true() -> bool {
    true
}

fn default_sampling() -> SamplingMode {
    SamplingMode::IidStationary
}

fn default_truncation() -> Truncation {
    Truncation::Ball
}

fn default_steps_per_iter() -> u64 {
    1
}

/// Anything that can stop a run before it starts (or an oracle failure
/// mid-run). Divergence is not an error; see the module docs.
#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("feature construction failed: {0}")]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error("ridge weight {given} is below the stability threshold {required}")]
    LambdaTooSmall { given: f64, required: f64 },
    #[error(
        "radii must satisfy b1 > b2 > feature bound; got b1 = {b1}, b2 = {b2}, bound = {c}"
    )]
    RadiiOutOfOrder { b1: f64, b2: f64, c: f64 },
    #[error("unsupported configuration: {0}")]
    UnsupportedCombination(String),
    #[error("bad initialization: {0}")]
    BadInit(String),
}

/// Row quantities that depend only on the current policy, cached between
/// actor steps.
struct PolicyRow {
    j: f64,
    grad_norm: f64,
    bias_norm: f64,
    /// Critic fixed point at the current policy; `None` when the reference
    /// system is singular.
    reference: Option<Vec<f64>>,
}

fn policy_row(
    mdp: &FiniteMdp<f64>,
    mu: &BehaviorPolicy<f64>,
    policy: &TabularSoftmaxPolicy<f64>,
    features: &Features<f64>,
    critic: CriticKind,
    lambda: f64,
) -> Result<PolicyRow, DriverError> {
    let j = objective(mdp, mu, policy)?;
    let grad_norm = norm2(&exact_gradient_chain(mdp, mu, policy)?);
    // The ablation critic is priced against the unregularized (λ = 0) fixed
    // point; its caller passes lambda = 0.
    let reference = match critic {
        CriticKind::Target | CriticKind::VanillaTdAblation => {
            lambda_fixed_point(mdp, mu, policy, features, lambda)
        }
        CriticKind::Gtd2 => gtd2_fixed_point(mdp, mu, policy, features),
    };
    let reference = match reference {
        Ok(r) => Some(r),
        Err(OracleError::Singular(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let bias_norm = match critic {
        // The bias is defined through the same λ-fixed point; without one it
        // carries the same sentinel as the critic error.
        CriticKind::Target | CriticKind::VanillaTdAblation
            if reference.is_some() =>
        {
            norm2(&bias_term(mdp, mu, policy, features, lambda)?)
        }
        _ => NOT_APPLICABLE,
    };
    Ok(PolicyRow {
        j,
        grad_norm,
        bias_norm,
        reference,
    })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// A configuration resolved against its environment: everything needed to
/// run, or to interrogate the exact oracles about the instance.
pub struct Prepared {
    pub mdp: FiniteMdp<f64>,
    pub mu: BehaviorPolicy<f64>,
    pub features: Features<f64>,
    pub policy: TabularSoftmaxPolicy<f64>,
    pub critic_init: Vec<f64>,
    /// Effective ridge weight (configured, or the threshold by default).
    pub lambda: f64,
    /// Stability threshold for the instance.
    pub required_lambda: f64,
}

/// Resolves a configuration: builds the environment and features, fills in
/// defaulted initializations, and computes the effective ridge weight.
///
/// # Errors
///
/// [`DriverError`] for inconsistent dimensions or invalid parameters.
pub fn prepare(config: &RunConfig) -> Result<Prepared, DriverError> {
    if !(config.b1.is_finite() && config.b1 > 0.0)
        || !(config.b2.is_finite() && config.b2 > 0.0)
    {
        return Err(DriverError::BadInit(
            "trust-region radii must be positive and finite".into(),
        ));
    }

    let bench = config.env.build::<f64>()?;
    let mdp = bench.mdp;
    let mu = match config.behavior.clone() {
        Some(rows) => BehaviorPolicy::new(&mdp, rows)?,
        None => bench.behavior,
    };
    let feature_spec = config.features.clone().unwrap_or(bench.features);
    let features = feature_spec.build(&mdp)?;
    let dim = features.dim();

    let theta0 = config.theta0.clone().unwrap_or(bench.theta0);
    if theta0.len() != mdp.n_states
        || theta0.iter().any(|row| row.len() != mdp.n_actions)
    {
        return Err(DriverError::BadInit(format!(
            "theta0 must be {} × {}",
            mdp.n_states, mdp.n_actions
        )));
    }
    let policy = TabularSoftmaxPolicy::new(theta0);

    let critic_init = match config.critic_init.clone() {
        Some(init) => {
            if init.len() != dim {
                return Err(DriverError::BadInit(format!(
                    "critic_init has dimension {}, features have {}",
                    init.len(),
                    dim
                )));
            }
            init
        }
        None if bench.critic_init.len() == dim => bench.critic_init,
        None => vec![0.0; dim],
    };

    let required_lambda =
        min_lambda(mdp.discount, features.norm_bound(), config.b1);
    let lambda = config.lambda.unwrap_or(required_lambda);
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(DriverError::BadInit(
            "ridge weight must be finite and nonnegative".into(),
        ));
    }
    Ok(Prepared {
        mdp,
        mu,
        features,
        policy,
        critic_init,
        lambda,
        required_lambda,
    })
}

/// Executes one run to completion (or divergence).
///
/// # Errors
///
/// [`DriverError`] for invalid configurations or oracle failures; a run that
/// merely diverges still returns `Ok` with the marker set.
pub fn run(config: &RunConfig) -> Result<RunLog, DriverError> {
    if config.log_every == 0 {
        return Err(DriverError::BadInit("log_every must be positive".into()));
    }
    if config.critic_steps_per_iter == 0 {
        return Err(DriverError::BadInit(
            "critic_steps_per_iter must be positive".into(),
        ));
    }
    if config.batch_size == 0 {
        return Err(DriverError::BadInit("batch_size must be positive".into()));
    }
    if config.enforce_schedule {
        config.schedule.validate()?;
    }
    if config.critic == CriticKind::Gtd2 && !config.frozen_actor {
        return Err(DriverError::UnsupportedCombination(
            "the gradient-corrected critic is evaluation-only; set frozen_actor"
                .into(),
        ));
    }

    let Prepared {
        mdp,
        mu,
        features,
        mut policy,
        critic_init,
        lambda,
        required_lambda,
    } = prepare(config)?;
    if config.critic == CriticKind::Target && config.enforce_min_lambda {
        if lambda < required_lambda {
            return Err(DriverError::LambdaTooSmall {
                given: lambda,
                required: required_lambda,
            });
        }
        let c = features.norm_bound();
        if !(config.b1 > config.b2 && config.b2 > c) {
            return Err(DriverError::RadiiOutOfOrder {
                b1: config.b1,
                b2: config.b2,
                c,
            });
        }
    }
    // The ablation ignores the ridge machinery entirely; its oracles are
    // priced at λ = 0.
    let row_lambda = match config.critic {
        CriticKind::VanillaTdAblation => 0.0,
        _ => lambda,
    };

    let target_cfg = TargetCriticConfig {
        lambda,
        b1: config.b1,
        b2: config.b2,
        truncation: config.truncation,
        w_uses_updated_xi: config.w_uses_updated_xi,
    };
    let mut target_state = TargetCriticState::new(&critic_init, &target_cfg);
    let mut gtd2_state = Gtd2State::new(&critic_init);
    let mut vanilla_xi = critic_init.clone();

    let mut sampler = TransitionSampler::new(
        mdp.clone(),
        mu.clone(),
        config.sampling,
        stream(config.seed, "transitions"),
        0,
    )?;

    let start = Instant::now();
    let mut log = RunLog::default();
    let mut cached: Option<PolicyRow> = None;
    let gamma = mdp.discount;

    let mut t: u64 = 0;
    loop {
        let at_end = t == config.total_steps;
        if at_end || t % config.log_every == 0 {
            if cached.is_none() {
                cached = Some(policy_row(
                    &mdp,
                    &mu,
                    &policy,
                    &features,
                    config.critic,
                    row_lambda,
                )?);
            }
            let row = cached.as_ref().expect("cached row was just filled");
            let record = make_record(
                t,
                row,
                config.critic,
                &target_state,
                &gtd2_state,
                &vanilla_xi,
                &mdp,
                &mu,
                &policy,
                &features,
                &start,
            )?;
            log.records.push(record);
        }
        if at_end {
            return Ok(log);
        }

        let alpha = config.schedule.alpha(t);
        let mut next_policy = None;
        {
            let eval = features.eval(&policy);
            // The transition the critic consumed, reused as the first member
            // of a sampled gradient batch.
            let critic_tr = match config.critic {
                CriticKind::Target => {
                    let beta = config.schedule.beta(t);
                    let tr = sampler.sample();
                    let phi = eval.phi(tr.state, tr.action);
                    let psi_next = eval.psi(tr.next_state);
                    for _ in 0..config.critic_steps_per_iter {
                        target_state.step(
                            &target_cfg,
                            gamma,
                            &phi,
                            &psi_next,
                            tr.reward,
                            alpha,
                            beta,
                        );
                    }
                    Some(tr)
                }
                CriticKind::VanillaTdAblation => {
                    let tr = sampler.sample();
                    let phi = eval.phi(tr.state, tr.action);
                    let psi_next = eval.psi(tr.next_state);
                    for _ in 0..config.critic_steps_per_iter {
                        vanilla_td_step(
                            &mut vanilla_xi,
                            gamma,
                            &phi,
                            &psi_next,
                            tr.reward,
                            alpha,
                        );
                    }
                    Some(tr)
                }
                CriticKind::Gtd2 => {
                    let here = sampler.sample().state;
                    let probs = eval.probs(here).to_vec();
                    let tr = sampler.probe(here, &probs);
                    let psi = eval.psi(tr.state);
                    let psi_next = eval.psi(tr.next_state);
                    for _ in 0..config.critic_steps_per_iter {
                        gtd2_state.step(gamma, &psi, &psi_next, tr.reward, alpha);
                    }
                    None
                }
            };
            if !config.frozen_actor && config.critic != CriticKind::Gtd2 {
                let xi: &[f64] = match config.critic {
                    CriticKind::Target => &target_state.xi,
                    _ => &vanilla_xi,
                };
                let g = match config.gradient {
                    GradientEstimator::Exact => surrogate_gradient_exact(
                        &mdp, &mu, &policy, &features, xi,
                    )?,
                    GradientEstimator::Sampled => {
                        let first = critic_tr
                            .as_ref()
                            .expect("actor-capable critics keep their transition");
                        let mut acc =
                            surrogate_gradient_sampled(first, &mu, &policy, &eval, xi)?;
                        for _ in 1..config.batch_size {
                            let extra = sampler.sample();
                            let gi = surrogate_gradient_sampled(
                                &extra, &mu, &policy, &eval, xi,
                            )?;
                            for (a, b) in acc.iter_mut().zip(&gi) {
                                *a += b;
                            }
                        }
                        let inv = 1.0 / config.batch_size as f64;
                        for a in acc.iter_mut() {
                            *a *= inv;
                        }
                        acc
                    }
                };
                let eta = config.schedule.eta(t);
                next_policy = Some(actor_step(&policy, &g, eta, config.ascent));
            }
        }
        if let Some(p) = next_policy {
            policy = p;
            cached = None;
        }
        t += 1;

        let (xi_norm, aux_norm) =
            iterate_norms(config.critic, &target_state, &gtd2_state, &vanilla_xi);
        let theta_norm = norm2(&policy.theta_flat());
        let worst = xi_norm.max(aux_norm).max(theta_norm);
        if !worst.is_finite() || worst > DIVERGENCE_THRESHOLD {
            if cached.is_none() {
                cached = Some(policy_row(
                    &mdp,
                    &mu,
                    &policy,
                    &features,
                    config.critic,
                    row_lambda,
                )?);
            }
            let row = cached.as_ref().expect("cached row was just filled");
            let record = make_record(
                t,
                row,
                config.critic,
                &target_state,
                &gtd2_state,
                &vanilla_xi,
                &mdp,
                &mu,
                &policy,
                &features,
                &start,
            )?;
            // The log keeps the finiteness invariant even here: the step that
            // blew past the threshold is recorded only if it can be priced
            // with finite numbers; the marker carries the divergence either
            // way.
            if record.is_finite() {
                log.records.push(record);
            }
            log.diverged_at = Some(t);
            return Ok(log);
        }
    }
}

/// `(‖ξ‖, auxiliary norm)`: the auxiliary iterate is w for the target pair,
/// ν for the gradient-corrected critic, and absent (sentinel) for the
/// ablation.
fn iterate_norms(
    critic: CriticKind,
    target: &TargetCriticState<f64>,
    gtd2: &Gtd2State<f64>,
    vanilla: &[f64],
) -> (f64, f64) {
    match critic {
        CriticKind::Target => (norm2(&target.xi), norm2(&target.w)),
        CriticKind::Gtd2 => (norm2(&gtd2.xi), norm2(&gtd2.nu)),
        CriticKind::VanillaTdAblation => (norm2(vanilla), NOT_APPLICABLE),
    }
}

#[allow(clippy::too_many_arguments)]
fn make_record(
    t: u64,
    row: &PolicyRow,
    critic: CriticKind,
    target: &TargetCriticState<f64>,
    gtd2: &Gtd2State<f64>,
    vanilla: &[f64],
    mdp: &FiniteMdp<f64>,
    mu: &BehaviorPolicy<f64>,
    policy: &TabularSoftmaxPolicy<f64>,
    features: &Features<f64>,
    start: &Instant,
) -> Result<RunRecord, DriverError> {
    let (xi_norm, w_norm) = iterate_norms(critic, target, gtd2, vanilla);
    let xi: &[f64] = match critic {
        CriticKind::Target => &target.xi,
        CriticKind::Gtd2 => &gtd2.xi,
        CriticKind::VanillaTdAblation => vanilla,
    };
    let g_norm = match critic {
        CriticKind::Target | CriticKind::VanillaTdAblation => {
            norm2(&surrogate_gradient_exact(mdp, mu, policy, features, xi)?)
        }
        CriticKind::Gtd2 => NOT_APPLICABLE,
    };
    let critic_err = row
        .reference
        .as_deref()
        .map_or(NOT_APPLICABLE, |r| distance(xi, r));
    Ok(RunRecord {
        t,
        j: row.j,
        grad_norm: row.grad_norm,
        g_norm,
        critic_err,
        bias_norm: row.bias_norm,
        xi_norm,
        w_norm,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Runs the same configuration across consecutive seeds.
///
/// Seeds are `base_seed + i` (falling back to the configured seed as base).
/// Individual divergences are recorded in their logs; only genuine errors
/// abort.
///
/// # Errors
///
/// The first [`DriverError`] from any run.
pub fn sweep(
    config: &RunConfig,
    n_seeds: u64,
    base_seed: Option<u64>,
) -> Result<Vec<RunLog>, DriverError> {
    let base = base_seed.unwrap_or(config.seed);
    (0..n_seeds)
        .map(|i| {
            let mut c = config.clone();
            c.seed = base + i;
            run(&c)
        })
        .collect()
}
