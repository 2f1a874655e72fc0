//! Second-order linearly implicit SAV-IF scheme.
//!
//! One step advances `(u, v, r)` by
//!
//! ```text
//! u⁺ = e11(τ)u + e12(τ)v − τβ r½ e12(τ/2) f̃
//! v⁺ = e21(τ)u + e22(τ)v − τβ r½ e22(τ/2) f̃
//! r⁺ − r = τ Re(f̃, 𝒜(u, u⁺, v, v⁺))
//! ```
//!
//! with `f̃ = f_N((3uⁿ − uⁿ⁻¹)/2)` and `r½ = (r + r⁺)/2`. Because `u⁺` and
//! `v⁺` are affine in `r½`, the step reduces to one scalar division; no
//! linear system is solved.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::expop::{Block, ExpElement, ExpTable};
use crate::sav::{f_n, ProblemParams, SavState};
use crate::scalar::Real;
use crate::spectral::{inner_spectral, Field, Repr};
use crate::stepper::{check_finite, Stepper};

/// Denominators of the `r½` update below this magnitude are rejected.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

/// The eight exponential blocks one SAV-IF step needs.
#[derive(Clone, Debug)]
pub struct SavIfElements<T: Real> {
    pub e11: Arc<ExpElement<T>>,
    pub e12: Arc<ExpElement<T>>,
    pub e21: Arc<ExpElement<T>>,
    pub e22: Arc<ExpElement<T>>,
    pub e12_half: Arc<ExpElement<T>>,
    pub e22_half: Arc<ExpElement<T>>,
    pub e21_half: Arc<ExpElement<T>>,
    pub e21_back_half: Arc<ExpElement<T>>,
    pub e22_back_half: Arc<ExpElement<T>>,
}

impl<T: Real> SavIfElements<T> {
    pub fn from_table(table: &ExpTable<T>, tau: T) -> Self {
        let half = tau / T::lit(2.0);
        Self {
            e11: table.get(Block::E11, tau),
            e12: table.get(Block::E12, tau),
            e21: table.get(Block::E21, tau),
            e22: table.get(Block::E22, tau),
            e12_half: table.get(Block::E12, half),
            e22_half: table.get(Block::E22, half),
            e21_half: table.get(Block::E21, half),
            e21_back_half: table.get(Block::E21, -half),
            e22_back_half: table.get(Block::E22, -half),
        }
    }
}

/// Per-trajectory state of the SAV-IF stepper.
#[derive(Clone, Debug)]
pub struct SavIfWorkspace<T: Real> {
    tau: T,
    alpha: T,
    elems: SavIfElements<T>,
    u_prev: Option<Field<T>>,
    used_extrapolation: bool,
    min_denominator: Option<T>,
}

impl<T: Real> SavIfWorkspace<T> {
    pub fn new(params: &ProblemParams<T>, tau: T) -> Result<Self> {
        let table = ExpTable::new(params.grid(), params.alpha())?;
        Self::with_table(&table, tau)
    }

    pub fn with_table(table: &ExpTable<T>, tau: T) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be finite and positive, got {tau}"),
            });
        }
        Ok(Self {
            tau,
            alpha: table.alpha(),
            elems: SavIfElements::from_table(table, tau),
            u_prev: None,
            used_extrapolation: false,
            min_denominator: None,
        })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn elements(&self) -> &SavIfElements<T> {
        &self.elems
    }

    /// `uⁿ⁻¹` once at least one step was taken.
    pub fn previous_u(&self) -> Option<&Field<T>> {
        self.u_prev.as_ref()
    }

    pub fn set_previous_u(&mut self, u_prev: Option<Field<T>>) {
        self.u_prev = u_prev;
    }

    /// True until the first step has been taken; that step linearizes about
    /// `u⁰` instead of extrapolating.
    pub fn first_step_pending(&self) -> bool {
        self.u_prev.is_none()
    }

    /// Whether the most recent step used the two-level extrapolation.
    pub fn used_extrapolation(&self) -> bool {
        self.used_extrapolation
    }

    /// Smallest `|4 − τ b2|` seen so far.
    pub fn min_denominator(&self) -> Option<T> {
        self.min_denominator
    }
}

/// `(3uⁿ − uⁿ⁻¹) / 2`.
pub fn extrapolate<T: Real>(u_n: &Field<T>, u_nm1: &Field<T>) -> Result<Field<T>> {
    let mut out = u_n.scaled(Complex::new(T::lit(1.5), T::zero()));
    out.axpy(Complex::new(T::lit(-0.5), T::zero()), u_nm1)?;
    Ok(out)
}

/// `𝒜 = ½(e21(τ/2)uⁿ + e21(−τ/2)uⁿ⁺¹ + e22(τ/2)vⁿ + e22(−τ/2)vⁿ⁺¹)`.
/// All inputs share one grid and representation; so does the output.
pub fn operator_a<T: Real>(
    u_n: &Field<T>,
    u_np1: &Field<T>,
    v_n: &Field<T>,
    v_np1: &Field<T>,
    elems: &SavIfElements<T>,
) -> Result<Field<T>> {
    for f in [u_np1, v_n, v_np1] {
        u_n.check_compatible(f)?;
    }
    let repr = u_n.repr();
    let s = |f: &Field<T>| f.clone().into_spectral();
    let mut out = twice_a(&s(u_n), &s(u_np1), &s(v_n), &s(v_np1), elems);
    out.scale(Complex::new(T::lit(0.5), T::zero()));
    Ok(out.into_repr(repr))
}

/// `2𝒜` on spectral inputs.
fn twice_a<T: Real>(
    u_n: &Field<T>,
    u_np1: &Field<T>,
    v_n: &Field<T>,
    v_np1: &Field<T>,
    elems: &SavIfElements<T>,
) -> Field<T> {
    let one = Complex::new(T::one(), T::zero());
    let mut out = Field::zeros(u_n.grid(), Repr::Spectral);
    elems.e21_half.apply_add(one, u_n, &mut out);
    elems.e21_back_half.apply_add(one, u_np1, &mut out);
    elems.e22_half.apply_add(one, v_n, &mut out);
    elems.e22_back_half.apply_add(one, v_np1, &mut out);
    out
}

/// Advances `state` by one step of size `ws.tau()`.
pub fn step<T: Real>(
    state: &SavState<T>,
    params: &ProblemParams<T>,
    ws: &mut SavIfWorkspace<T>,
) -> Result<SavState<T>> {
    let grid = params.grid();
    if !grid.same_as(state.u.grid()) || !grid.same_as(ws.elems.e11.grid()) {
        return Err(Error::GridMismatch);
    }
    if ws.alpha != params.alpha() {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: "workspace was built for a different alpha".into(),
        });
    }
    let tau = ws.tau;
    let beta = params.beta();
    let one = Complex::new(T::one(), T::zero());
    let el = &ws.elems;

    let u_phys = state.u.clone().into_physical();
    let f_hat = if params.is_nonlinear() {
        let u_tilde = match &ws.u_prev {
            Some(prev) => extrapolate(&u_phys, prev)?,
            None => u_phys.clone(),
        };
        f_n(&u_tilde, params.c0())?.into_spectral()
    } else {
        Field::zeros(grid, Repr::Spectral)
    };
    let u_hat = state.u.clone().into_spectral();
    let v_hat = state.v.clone().into_spectral();

    // Linear flow, plus the midpoint-quadrature source contribution.
    let mut u1 = Field::zeros(grid, Repr::Spectral);
    el.e11.apply_add(one, &u_hat, &mut u1);
    el.e12.apply_add(one, &v_hat, &mut u1);
    let mut v1 = Field::zeros(grid, Repr::Spectral);
    el.e21.apply_add(one, &u_hat, &mut v1);
    el.e22.apply_add(one, &v_hat, &mut v1);
    if let Some(src) = params.source() {
        let s_hat = src.sample(grid, state.t + tau / T::lit(2.0)).into_spectral();
        let w = Complex::new(tau, T::zero());
        el.e12_half.apply_add(w, &s_hat, &mut u1);
        el.e22_half.apply_add(w, &s_hat, &mut v1);
    }

    // Response per unit r½.
    let w = Complex::new(-tau * beta, T::zero());
    let mut u2 = Field::zeros(grid, Repr::Spectral);
    el.e12_half.apply_add(w, &f_hat, &mut u2);
    let mut v2 = Field::zeros(grid, Repr::Spectral);
    el.e22_half.apply_add(w, &f_hat, &mut v2);

    // b1 and b2 pair f̃ with 2𝒜, which makes r½ = (4r + τb1)/(4 − τb2)
    // exactly the midpoint r-equation.
    let zero = Field::zeros(grid, Repr::Spectral);
    let b1 = inner_spectral(&f_hat, &twice_a(&u_hat, &u1, &v_hat, &v1, el))?.re;
    let b2 = inner_spectral(&f_hat, &twice_a(&zero, &u2, &zero, &v2, el))?.re;
    let four = T::lit(4.0);
    let denom = four - tau * b2;
    ws.min_denominator = Some(match ws.min_denominator {
        Some(m) => m.min(denom.abs()),
        None => denom.abs(),
    });
    if !(denom.abs() >= T::lit(DEGENERACY_THRESHOLD)) {
        return Err(Error::SolveDegenerate {
            denominator: denom.abs().to_f64().unwrap_or(f64::NAN),
        });
    }
    let r_half = (four * state.r + tau * b1) / denom;

    u1.axpy(Complex::new(r_half, T::zero()), &u2)?;
    v1.axpy(Complex::new(r_half, T::zero()), &v2)?;
    let r_next = T::lit(2.0) * r_half - state.r;
    let u_next = u1.into_physical();
    let v_next = v1.into_physical();
    check_finite(&u_next, "SAV-IF update")?;
    check_finite(&v_next, "SAV-IF update")?;
    if !r_next.is_finite() {
        return Err(Error::NonFinite { stage: "SAV-IF update" });
    }

    ws.used_extrapolation = ws.u_prev.is_some();
    ws.u_prev = Some(u_phys);
    Ok(SavState {
        u: u_next,
        v: v_next,
        r: r_next,
        t: state.t + tau,
    })
}

impl<T: Real> Stepper<T> for SavIfWorkspace<T> {
    fn step(&mut self, state: &SavState<T>, params: &ProblemParams<T>) -> Result<SavState<T>> {
        step(state, params, self)
    }

    fn tau(&self) -> T {
        self.tau
    }

    fn min_denominator(&self) -> Option<T> {
        self.min_denominator
    }

    fn history(&self) -> Option<&Field<T>> {
        self.u_prev.as_ref()
    }

    fn restore_history(&mut self, history: Option<Field<T>>) {
        self.u_prev = history;
    }
}
