//! Step-size schedules for the two-timescale learners.
//!
//! Every step size follows a power law `c / (o + t)^p` with `t` counted from
//! zero. [`StepSchedule::validate`] enforces the conditions the convergence
//! analysis needs:
//!
//! * each exponent lies in the Robbins–Monro range `(1/2, 1]`, so steps are
//!   square-summable but not summable;
//! * the tracking step β decays strictly faster than the regression step α
//!   (`p_β > p_α`), separating the two critic timescales;
//! * the actor step η is no faster than β — either its own power law with
//!   `p_η ≥ p_β`, or the coupled form `η_t = κ β_t`.
//!
//! Runs may opt out of validation (for deliberately broken ablations such as
//! constant-step off-policy TD), in which case these functions only evaluate.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Errors from [`StepSchedule::validate`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("{name} coefficient must be positive and finite")]
    BadCoefficient { name: &'static str },
    #[error("{name} offset must be at least one")]
    BadOffset { name: &'static str },
    #[error("{name} exponent {got} is outside the Robbins–Monro range (1/2, 1]")]
    NotRobbinsMonro { name: &'static str, got: f64 },
    #[error("tracking step must decay strictly faster than the regression step (got p_β = {beta} ≤ p_α = {alpha})")]
    NotTwoTimescale { alpha: f64, beta: f64 },
    #[error("actor step must not decay slower than the tracking step (got p_η = {eta} < p_β = {beta})")]
    ActorTooFast { eta: f64, beta: f64 },
    #[error("coupling ratio κ must be nonnegative and finite")]
    BadKappa,
}

/// `c / (o + t)^p`, evaluated at integer times starting from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "F: Real"))]
pub struct PowerLaw<F> {
    pub coeff: F,
    pub exponent: F,
    #[serde(default = "unit_offset")]
    pub offset: F,
}

fn unit_offset<F: Real>() -> F {
    F::one()
}

impl<F: Real> PowerLaw<F> {
    /// A constant step of size `coeff` (exponent zero). Rejected by
    /// validation; only usable in unvalidated ablations.
    pub fn constant(coeff: F) -> Self {
        PowerLaw { coeff, exponent: F::zero(), offset: F::one() }
    }

    /// Step size at time `t`.
    pub fn at(&self, t: u64) -> F {
        self.coeff / (self.offset + F::of(t as f64)).powf(self.exponent)
    }

    fn check(&self, name: &'static str) -> Result<(), ScheduleError> {
        if !(self.coeff > F::zero() && self.coeff.is_finite()) {
            return Err(ScheduleError::BadCoefficient { name });
        }
        if !(self.offset >= F::one() && self.offset.is_finite()) {
            return Err(ScheduleError::BadOffset { name });
        }
        let p = self.exponent.to64();
        if !(p > 0.5 && p <= 1.0) {
            return Err(ScheduleError::NotRobbinsMonro { name, got: p });
        }
        Ok(())
    }
}

/// How the actor step η is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", bound(deserialize = "F: Real"))]
pub enum EtaRule<F> {
    /// Its own power law.
    PowerLaw(PowerLaw<F>),
    /// Locked to the tracking step: `η_t = κ β_t`.
    RatioCoupled(RatioCoupled<F>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioCoupled<F> {
    pub kappa: F,
}

/// The full step-size triple (ξ-regression α, w-tracking β, actor η).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "F: Real"))]
pub struct StepSchedule<F> {
    pub alpha: PowerLaw<F>,
    pub beta: PowerLaw<F>,
    pub eta: EtaRule<F>,
}

impl<F: Real> StepSchedule<F> {
    /// Checks the Robbins–Monro and timescale-separation conditions.
    ///
    /// # Errors
    ///
    /// The first violated [`ScheduleError`] condition.
    pub fn validate(&self) -> Result<(), ScheduleError> {
        self.alpha.check("alpha")?;
        self.beta.check("beta")?;
        if self.beta.exponent.to64() <= self.alpha.exponent.to64() {
            return Err(ScheduleError::NotTwoTimescale {
                alpha: self.alpha.exponent.to64(),
                beta: self.beta.exponent.to64(),
            });
        }
        match &self.eta {
            EtaRule::PowerLaw(p) => {
                p.check("eta")?;
                if p.exponent.to64() < self.beta.exponent.to64() {
                    return Err(ScheduleError::ActorTooFast {
                        eta: p.exponent.to64(),
                        beta: self.beta.exponent.to64(),
                    });
                }
            }
            EtaRule::RatioCoupled(r) => {
                // κ = 0 is the frozen-actor limit and is allowed.
                if !(r.kappa >= F::zero() && r.kappa.is_finite()) {
                    return Err(ScheduleError::BadKappa);
                }
            }
        }
        Ok(())
    }

    pub fn alpha(&self, t: u64) -> F {
        self.alpha.at(t)
    }

    pub fn beta(&self, t: u64) -> F {
        self.beta.at(t)
    }

    pub fn eta(&self, t: u64) -> F {
        match &self.eta {
            EtaRule::PowerLaw(p) => p.at(t),
            EtaRule::RatioCoupled(r) => r.kappa * self.beta.at(t),
        }
    }
}
