//! Common driver interface for the time steppers.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ifrk::{ButcherTableau, IfrkWorkspace, PredictorOptions};
use crate::sav::{discrete_energy, ProblemParams, SavState};
use crate::savif::SavIfWorkspace;
use crate::scalar::Real;
use crate::spectral::Field;

/// A one-step map on [`SavState`] owning whatever per-trajectory memory the
/// scheme needs. One stepper serves one trajectory.
pub trait Stepper<T: Real> {
    fn step(&mut self, state: &SavState<T>, params: &ProblemParams<T>) -> Result<SavState<T>>;

    fn tau(&self) -> T;

    /// Smallest `|4 − τ b2|` seen (SAV-IF only).
    fn min_denominator(&self) -> Option<T> {
        None
    }

    /// Predictor sweeps used by the most recent step (SAV-IFRK only).
    fn predictor_iterations(&self) -> Option<usize> {
        None
    }

    /// Extra time level carried between steps, needed for bitwise restarts.
    fn history(&self) -> Option<&Field<T>> {
        None
    }

    fn restore_history(&mut self, _history: Option<Field<T>>) {}
}

/// Per-step record passed to [`integrate`] callbacks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics<T> {
    pub n: usize,
    pub t: T,
    pub energy: T,
    pub r: T,
    pub linf_u: T,
    pub predictor_iterations: Option<usize>,
}

impl<T: Real> StepDiagnostics<T> {
    pub fn of(n: usize, state: &SavState<T>, params: &ProblemParams<T>, iters: Option<usize>) -> Result<Self> {
        Ok(Self {
            n,
            t: state.t,
            energy: discrete_energy(state, params)?,
            r: state.r,
            linf_u: state.u.clone().into_physical().linf(),
            predictor_iterations: iters,
        })
    }
}

/// Takes `steps` steps from `state`, reporting diagnostics after each one
/// (and once for the initial state with `n = first_index`).
pub fn integrate<T: Real, S: Stepper<T> + ?Sized>(
    stepper: &mut S,
    params: &ProblemParams<T>,
    mut state: SavState<T>,
    first_index: usize,
    steps: usize,
    mut on_step: impl FnMut(&StepDiagnostics<T>, &SavState<T>) -> Result<()>,
) -> Result<SavState<T>> {
    on_step(&StepDiagnostics::of(first_index, &state, params, None)?, &state)?;
    for k in 1..=steps {
        let n = first_index + k;
        state = stepper.step(&state, params).map_err(|e| Error::AtStep {
            step: n,
            source: Box::new(e),
        })?;
        on_step(
            &StepDiagnostics::of(n, &state, params, stepper.predictor_iterations())?,
            &state,
        )?;
    }
    Ok(state)
}

pub(crate) fn check_finite<T: Real>(f: &Field<T>, stage: &'static str) -> Result<()> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { stage })
    }
}

/// Built-in time integrators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Second-order SAV-IF.
    SavIf,
    /// Two-stage Gauss SAV-IFRK, order 4.
    IfGrk4,
    /// Three-stage Gauss SAV-IFRK, order 6.
    IfGrk6,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::SavIf, Scheme::IfGrk4, Scheme::IfGrk6];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SavIf => "savif",
            Scheme::IfGrk4 => "ifgrk4",
            Scheme::IfGrk6 => "ifgrk6",
        }
    }

    pub fn order(self) -> usize {
        match self {
            Scheme::SavIf => 2,
            Scheme::IfGrk4 => 4,
            Scheme::IfGrk6 => 6,
        }
    }

    pub fn build<T: Real>(
        self,
        params: &ProblemParams<T>,
        tau: T,
        predictor: PredictorOptions<T>,
    ) -> Result<Box<dyn Stepper<T>>> {
        Ok(match self {
            Scheme::SavIf => Box::new(SavIfWorkspace::new(params, tau)?),
            Scheme::IfGrk4 => Box::new(IfrkWorkspace::new(params, tau, ButcherTableau::gauss(2)?, predictor)?),
            Scheme::IfGrk6 => Box::new(IfrkWorkspace::new(params, tau, ButcherTableau::gauss(3)?, predictor)?),
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "savif" | "sav-if" => Ok(Scheme::SavIf),
            "ifgrk4" | "sav-ifgrk4" => Ok(Scheme::IfGrk4),
            "ifgrk6" | "sav-ifgrk6" => Ok(Scheme::IfGrk6),
            other => Err(Error::InvalidParameter {
                name: "scheme",
                reason: format!("unknown scheme `{other}` (expected savif, ifgrk4 or ifgrk6)"),
            }),
        }
    }
}
