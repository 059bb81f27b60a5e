//! Functional actor-critic on exactly solvable finite MDPs.
//!
//! The crate separates three layers:
//!
//! * **Model layer** — [`mdp`], [`policy`], [`features`]: finite MDPs with
//!   explicit transition tensors, tabular softmax actors, and feature
//!   families whose vectors may depend on the actor parameters.
//! * **Oracle layer** — [`oracles`]: everything the model makes exactly
//!   computable (values, gradients, emphatic weightings, critic fixed
//!   points, bias terms, assumption measurements). These are the reference
//!   quantities the stochastic algorithms are judged against.
//! * **Algorithm layer** — [`critic_target`], [`critic_gtd2`], [`actor`],
//!   [`schedule`], [`driver`]: the incremental two-timescale learners and
//!   the loop that couples them, with run logging and the benchmark
//!   environments in [`envs`], [`runlog`], and [`plot`].
//!
//! Numeric code is generic over the scalar type through [`scalar::Real`]
//! (implemented for `f32` and `f64`); the aliases below fix the `f64`
//! instantiations that the CLI and most callers use.

pub mod actor;
pub mod cli;
pub mod critic_gtd2;
pub mod critic_target;
pub mod driver;
pub mod envs;
pub mod features;
pub mod linalg;
pub mod mdp;
pub mod oracles;
pub mod plot;
pub mod policy;
pub mod rng;
pub mod runlog;
pub mod scalar;
pub mod schedule;

pub use scalar::Real;

/// Dense matrix over `f64`.
pub type Mat64 = linalg::Mat<f64>;
/// Finite MDP over `f64`.
pub type Mdp64 = mdp::FiniteMdp<f64>;
/// Behavior policy over `f64`.
pub type Behavior64 = mdp::BehaviorPolicy<f64>;
/// Tabular softmax actor over `f64`.
pub type Policy64 = policy::TabularSoftmaxPolicy<f64>;
/// Feature family over `f64`.
pub type Features64 = features::Features<f64>;
