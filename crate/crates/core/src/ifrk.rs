//! High-order linear energy-preserving SAV-IFRK steppers.
//!
//! An s-stage tableau is applied to the integrating-factor form of the
//! system. The nonlinearity is frozen at predicted stage values `ũ_i`
//! (obtained by fixed-point sweeps), so the only unknowns left are the s
//! stage values of the auxiliary scalar, found from a small dense linear
//! system. The discrete energy is conserved exactly whenever the tableau
//! satisfies `b_i a_ij + b_j a_ji = b_i b_j`.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::expop::{Block, ExpElement, ExpTable};
use crate::sav::{f_n, g_fn, ProblemParams, SavState};
use crate::scalar::Real;
use crate::spectral::{inner_spectral, Field, Repr};
use crate::stepper::{check_finite, Stepper};

/// Predictor iterates larger than this in `l∞` are treated as divergent.
const PREDICTOR_BLOWUP: f64 = 1e100;

/// Coefficients of an s-stage Runge–Kutta method.
#[derive(Clone, Debug, PartialEq)]
pub struct ButcherTableau<T> {
    pub a: Vec<Vec<T>>,
    pub b: Vec<T>,
    pub c: Vec<T>,
    pub order: usize,
}

impl<T: Real> ButcherTableau<T> {
    pub fn new(a: Vec<Vec<T>>, b: Vec<T>, c: Vec<T>, order: usize) -> Result<Self> {
        let s = b.len();
        if s == 0 || c.len() != s || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::InvalidTableau(format!(
                "inconsistent shapes: {} rows, b has {s}, c has {}",
                a.len(),
                c.len()
            )));
        }
        if a.iter().flatten().chain(&b).chain(&c).any(|x| !x.is_finite()) {
            return Err(Error::InvalidTableau("non-finite coefficient".into()));
        }
        Ok(Self { a, b, c, order })
    }

    /// Gauss collocation with `s` stages (order `2s`); `s` is 2 or 3.
    pub fn gauss(s: usize) -> Result<Self> {
        let l = T::lit;
        match s {
            2 => {
                let r = l(3.0).sqrt() / l(6.0);
                let q = l(0.25);
                Self::new(
                    vec![vec![q, q - r], vec![q + r, q]],
                    vec![l(0.5), l(0.5)],
                    vec![l(0.5) - r, l(0.5) + r],
                    4,
                )
            }
            3 => {
                let r = l(15.0).sqrt();
                let (a5, a2) = (l(5.0) / l(36.0), l(2.0) / l(9.0));
                Self::new(
                    vec![
                        vec![a5, a2 - r / l(15.0), a5 - r / l(30.0)],
                        vec![a5 + r / l(24.0), a2, a5 - r / l(24.0)],
                        vec![a5 + r / l(30.0), a2 + r / l(15.0), a5],
                    ],
                    vec![l(5.0) / l(18.0), l(4.0) / l(9.0), l(5.0) / l(18.0)],
                    vec![l(0.5) - r / l(10.0), l(0.5), l(0.5) + r / l(10.0)],
                    6,
                )
            }
            other => Err(Error::UnsupportedStages(other)),
        }
    }

    /// Forward Euler, which violates the conservation condition.
    pub fn explicit_euler() -> Self {
        Self {
            a: vec![vec![T::zero()]],
            b: vec![T::one()],
            c: vec![T::zero()],
            order: 1,
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// `max_ij |b_i a_ij + b_j a_ji − b_i b_j|`.
    pub fn conservation_residual(&self) -> T {
        let s = self.stages();
        let mut worst = T::zero();
        for i in 0..s {
            for j in 0..s {
                let res = self.b[i] * self.a[i][j] + self.b[j] * self.a[j][i] - self.b[i] * self.b[j];
                worst = worst.max(res.abs());
            }
        }
        worst
    }

    /// `max(|Σ b − 1|, max_i |c_i − Σ_j a_ij|)`.
    pub fn consistency_residual(&self) -> T {
        let sum_b = self.b.iter().fold(T::zero(), |acc, &x| acc + x);
        let mut worst = (sum_b - T::one()).abs();
        for (row, &ci) in self.a.iter().zip(&self.c) {
            let sum = row.iter().fold(T::zero(), |acc, &x| acc + x);
            worst = worst.max((ci - sum).abs());
        }
        worst
    }
}

/// Max residual of `b_i a_ij + b_j a_ji = b_i b_j`.
pub fn check_conservation_condition<T: Real>(tableau: &ButcherTableau<T>) -> T {
    tableau.conservation_residual()
}

/// Stage-predictor settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictorOptions<T> {
    /// Stop once the largest stage update is below this in `l∞`.
    pub tol: T,
    /// Sweep cap; `None` means `order + 2`.
    pub max_iter: Option<usize>,
    /// Omit `β` in front of `g` in the predictor sweep.
    pub strict: bool,
}

impl<T: Real> Default for PredictorOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-13),
            max_iter: None,
            strict: false,
        }
    }
}

#[derive(Clone, Debug)]
struct BlockSet<T: Real> {
    e11: Arc<ExpElement<T>>,
    e12: Arc<ExpElement<T>>,
    e21: Arc<ExpElement<T>>,
    e22: Arc<ExpElement<T>>,
}

impl<T: Real> BlockSet<T> {
    fn at(table: &ExpTable<T>, t: T) -> Self {
        Self {
            e11: table.get(Block::E11, t),
            e12: table.get(Block::E12, t),
            e21: table.get(Block::E21, t),
            e22: table.get(Block::E22, t),
        }
    }
}

/// Per-trajectory state of a SAV-IFRK stepper.
#[derive(Clone, Debug)]
pub struct IfrkWorkspace<T: Real> {
    tau: T,
    alpha: T,
    tableau: ButcherTableau<T>,
    /// Blocks at `c_i τ`.
    at_c: Vec<BlockSet<T>>,
    /// Blocks at `(c_i − c_j) τ`, indexed `[i][j]`.
    at_diff: Vec<Vec<BlockSet<T>>>,
    /// Blocks at `(1 − c_i) τ`.
    at_rest: Vec<BlockSet<T>>,
    at_tau: BlockSet<T>,
    tol: T,
    max_iter: usize,
    strict_predictor: bool,
    last_iterations: Option<usize>,
}

impl<T: Real> IfrkWorkspace<T> {
    pub fn new(
        params: &ProblemParams<T>,
        tau: T,
        tableau: ButcherTableau<T>,
        opts: PredictorOptions<T>,
    ) -> Result<Self> {
        let table = ExpTable::new(params.grid(), params.alpha())?;
        Self::with_table(&table, tau, tableau, opts)
    }

    pub fn with_table(
        table: &ExpTable<T>,
        tau: T,
        tableau: ButcherTableau<T>,
        opts: PredictorOptions<T>,
    ) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be finite and positive, got {tau}"),
            });
        }
        if !(opts.tol > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("predictor tolerance must be positive, got {}", opts.tol),
            });
        }
        let max_iter = opts.max_iter.unwrap_or(tableau.order + 2);
        if max_iter == 0 {
            return Err(Error::InvalidParameter {
                name: "max_iter",
                reason: "predictor needs at least one sweep".into(),
            });
        }
        let c = &tableau.c;
        let at_c = c.iter().map(|&ci| BlockSet::at(table, ci * tau)).collect();
        let at_diff = c
            .iter()
            .map(|&ci| c.iter().map(|&cj| BlockSet::at(table, (ci - cj) * tau)).collect())
            .collect();
        let at_rest = c.iter().map(|&ci| BlockSet::at(table, (T::one() - ci) * tau)).collect();
        Ok(Self {
            tau,
            alpha: table.alpha(),
            at_c,
            at_diff,
            at_rest,
            at_tau: BlockSet::at(table, tau),
            tableau,
            tol: opts.tol,
            max_iter,
            strict_predictor: opts.strict,
            last_iterations: None,
        })
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn tableau(&self) -> &ButcherTableau<T> {
        &self.tableau
    }

    pub fn max_iter(&self) -> usize {
        self.max_iter
    }

    pub fn last_iterations(&self) -> Option<usize> {
        self.last_iterations
    }
}

/// Spectral quantities shared by every phase of one step.
struct StepFrame<T: Real> {
    u_hat: Field<T>,
    v_hat: Field<T>,
    /// Linear-flow part of the stage values, including the source.
    base_u: Vec<Field<T>>,
    base_v: Vec<Field<T>>,
    /// Source at `t_n + c_i τ` (spectral), when present.
    src_hat: Option<Vec<Field<T>>>,
}

fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

fn frame<T: Real>(state: &SavState<T>, params: &ProblemParams<T>, ws: &IfrkWorkspace<T>) -> Result<StepFrame<T>> {
    let grid = params.grid();
    if !grid.same_as(state.u.grid()) || !grid.same_as(ws.at_tau.e11.grid()) {
        return Err(Error::GridMismatch);
    }
    if ws.alpha != params.alpha() {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: "workspace was built for a different alpha".into(),
        });
    }
    let tau = ws.tau;
    let tab = &ws.tableau;
    let s = tab.stages();
    let one = re(T::one());
    let u_hat = state.u.clone().into_spectral();
    let v_hat = state.v.clone().into_spectral();
    let src_hat = params.source().map(|src| {
        tab.c
            .iter()
            .map(|&ci| src.sample(grid, state.t + ci * tau).into_spectral())
            .collect::<Vec<_>>()
    });
    let mut base_u = Vec::with_capacity(s);
    let mut base_v = Vec::with_capacity(s);
    for i in 0..s {
        let bl = &ws.at_c[i];
        let mut bu = Field::zeros(grid, Repr::Spectral);
        bl.e11.apply_add(one, &u_hat, &mut bu);
        bl.e12.apply_add(one, &v_hat, &mut bu);
        let mut bv = Field::zeros(grid, Repr::Spectral);
        bl.e21.apply_add(one, &u_hat, &mut bv);
        bl.e22.apply_add(one, &v_hat, &mut bv);
        if let Some(src) = &src_hat {
            for (j, sj) in src.iter().enumerate() {
                let w = re(tau * tab.a[i][j]);
                ws.at_diff[i][j].e12.apply_add(w, sj, &mut bu);
                ws.at_diff[i][j].e22.apply_add(w, sj, &mut bv);
            }
        }
        base_u.push(bu);
        base_v.push(bv);
    }
    Ok(StepFrame {
        u_hat,
        v_hat,
        base_u,
        base_v,
        src_hat,
    })
}

fn predict_in_frame<T: Real>(
    state: &SavState<T>,
    params: &ProblemParams<T>,
    ws: &mut IfrkWorkspace<T>,
    fr: &StepFrame<T>,
) -> Result<Vec<Field<T>>> {
    let tau = ws.tau;
    let s = ws.tableau.stages();
    let grid = params.grid();
    let coupling = if ws.strict_predictor { T::one() } else { params.beta() };
    let mut stages = vec![state.u.clone().into_physical(); s];
    let mut sweeps = 0;
    for _ in 0..ws.max_iter {
        sweeps += 1;
        let g_hat = stages
            .iter()
            .map(|u| -> Result<Field<T>> {
                if params.is_nonlinear() {
                    Ok(g_fn(u)?.into_spectral())
                } else {
                    Ok(Field::zeros(grid, Repr::Spectral))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut change = T::zero();
        let mut next = Vec::with_capacity(s);
        for i in 0..s {
            let mut ui = fr.base_u[i].clone();
            for (j, gj) in g_hat.iter().enumerate() {
                ws.at_diff[i][j]
                    .e12
                    .apply_add(re(-tau * coupling * ws.tableau.a[i][j]), gj, &mut ui);
            }
            let ui = ui.into_physical();
            let linf = ui.linf();
            if !linf.is_finite() || linf > T::lit(PREDICTOR_BLOWUP) {
                return Err(Error::NonFinite {
                    stage: "stage predictor",
                });
            }
            change = change.max(ui.sub(&stages[i])?.linf());
            next.push(ui);
        }
        stages = next;
        if change < ws.tol {
            break;
        }
    }
    ws.last_iterations = Some(sweeps);
    Ok(stages)
}

/// Fixed-point prediction of `u(t_n + c_i τ)` for every stage.
pub fn predict_stages<T: Real>(
    state: &SavState<T>,
    params: &ProblemParams<T>,
    ws: &mut IfrkWorkspace<T>,
) -> Result<Vec<Field<T>>> {
    let fr = frame(state, params, ws)?;
    predict_in_frame(state, params, ws, &fr)
}

fn spectral_stages<T: Real>(f_tilde: &[Field<T>], s: usize) -> Result<Vec<Field<T>>> {
    if f_tilde.len() != s {
        return Err(Error::InvalidParameter {
            name: "f_tilde",
            reason: format!("expected {s} stage fields, got {}", f_tilde.len()),
        });
    }
    Ok(f_tilde.iter().map(|f| f.clone().into_spectral()).collect())
}

fn solve_r_in_frame<T: Real>(
    state: &SavState<T>,
    params: &ProblemParams<T>,
    ws: &IfrkWorkspace<T>,
    fr: &StepFrame<T>,
    f_hat: &[Field<T>],
) -> Result<Vec<T>> {
    let tau = ws.tau;
    let beta = params.beta();
    let a = &ws.tableau.a;
    let s = ws.tableau.stages();

    // pair[j][k] = Re(f̃_j, e22((c_j − c_k)τ) f̃_k); lin[j] = Re(f̃_j, v_lin_j).
    let mut pair = vec![vec![T::zero(); s]; s];
    for j in 0..s {
        for k in 0..s {
            let ef = ws.at_diff[j][k].e22.apply(&f_hat[k])?;
            pair[j][k] = inner_spectral(&f_hat[j], &ef)?.re;
        }
    }
    let lin = (0..s)
        .map(|j| Ok(inner_spectral(&f_hat[j], &fr.base_v[j])?.re))
        .collect::<Result<Vec<T>>>()?;

    let mut m = vec![vec![T::zero(); s]; s];
    let mut rhs = vec![state.r; s];
    for i in 0..s {
        for k in 0..s {
            let coupling = (0..s).fold(T::zero(), |acc, j| acc + a[i][j] * a[j][k] * pair[j][k]);
            m[i][k] = tau * tau * beta * coupling + if i == k { T::one() } else { T::zero() };
        }
        rhs[i] += tau * (0..s).fold(T::zero(), |acc, j| acc + a[i][j] * lin[j]);
    }
    solve_dense(m, rhs)
}

/// Stage values `r_i` given the frozen nonlinearity `f_tilde[i] = f_N(ũ_i)`.
pub fn solve_stage_r<T: Real>(
    state: &SavState<T>,
    f_tilde: &[Field<T>],
    params: &ProblemParams<T>,
    ws: &IfrkWorkspace<T>,
) -> Result<Vec<T>> {
    let fr = frame(state, params, ws)?;
    let f_hat = spectral_stages(f_tilde, ws.tableau.stages())?;
    solve_r_in_frame(state, params, ws, &fr, &f_hat)
}

/// Stage fields `(u_i, v_i)` (spectral) for given `r_i`.
fn stage_fields_in_frame<T: Real>(
    params: &ProblemParams<T>,
    ws: &IfrkWorkspace<T>,
    fr: &StepFrame<T>,
    f_hat: &[Field<T>],
    r_stages: &[T],
) -> (Vec<Field<T>>, Vec<Field<T>>) {
    let tau = ws.tau;
    let beta = params.beta();
    let s = ws.tableau.stages();
    let mut us = Vec::with_capacity(s);
    let mut vs = Vec::with_capacity(s);
    for i in 0..s {
        let mut ui = fr.base_u[i].clone();
        let mut vi = fr.base_v[i].clone();
        for k in 0..s {
            let w = re(-tau * beta * ws.tableau.a[i][k] * r_stages[k]);
            ws.at_diff[i][k].e12.apply_add(w, &f_hat[k], &mut ui);
            ws.at_diff[i][k].e22.apply_add(w, &f_hat[k], &mut vi);
        }
        us.push(ui);
        vs.push(vi);
    }
    (us, vs)
}

/// Stage fields `(u_i, v_i)` in physical representation.
pub fn stage_fields<T: Real>(
    state: &SavState<T>,
    f_tilde: &[Field<T>],
    r_stages: &[T],
    params: &ProblemParams<T>,
    ws: &IfrkWorkspace<T>,
) -> Result<(Vec<Field<T>>, Vec<Field<T>>)> {
    let fr = frame(state, params, ws)?;
    let f_hat = spectral_stages(f_tilde, ws.tableau.stages())?;
    if r_stages.len() != f_hat.len() {
        return Err(Error::InvalidParameter {
            name: "r_stages",
            reason: format!("expected {} values, got {}", f_hat.len(), r_stages.len()),
        });
    }
    let (us, vs) = stage_fields_in_frame(params, ws, &fr, &f_hat, r_stages);
    Ok((
        us.into_iter().map(Field::into_physical).collect(),
        vs.into_iter().map(Field::into_physical).collect(),
    ))
}

/// One SAV-IFRK step.
pub fn step_ifrk<T: Real>(
    state: &SavState<T>,
    params: &ProblemParams<T>,
    ws: &mut IfrkWorkspace<T>,
) -> Result<SavState<T>> {
    let fr = frame(state, params, ws)?;
    let grid = params.grid();
    let tau = ws.tau;
    let beta = params.beta();
    let s = ws.tableau.stages();

    let f_hat: Vec<Field<T>> = if params.is_nonlinear() {
        let predicted = predict_in_frame(state, params, ws, &fr)?;
        predicted
            .iter()
            .map(|u| Ok(f_n(u, params.c0())?.into_spectral()))
            .collect::<Result<_>>()?
    } else {
        ws.last_iterations = Some(0);
        vec![Field::zeros(grid, Repr::Spectral); s]
    };
    let r_stages = solve_r_in_frame(state, params, ws, &fr, &f_hat)?;
    let (_, v_stages) = stage_fields_in_frame(params, ws, &fr, &f_hat, &r_stages);

    let one = re(T::one());
    let mut u_next = Field::zeros(grid, Repr::Spectral);
    ws.at_tau.e11.apply_add(one, &fr.u_hat, &mut u_next);
    ws.at_tau.e12.apply_add(one, &fr.v_hat, &mut u_next);
    let mut v_next = Field::zeros(grid, Repr::Spectral);
    ws.at_tau.e21.apply_add(one, &fr.u_hat, &mut v_next);
    ws.at_tau.e22.apply_add(one, &fr.v_hat, &mut v_next);
    let mut r_next = state.r;
    for i in 0..s {
        let bi = ws.tableau.b[i];
        let rest = &ws.at_rest[i];
        let w = re(-tau * beta * bi * r_stages[i]);
        rest.e12.apply_add(w, &f_hat[i], &mut u_next);
        rest.e22.apply_add(w, &f_hat[i], &mut v_next);
        if let Some(src) = &fr.src_hat {
            rest.e12.apply_add(re(tau * bi), &src[i], &mut u_next);
            rest.e22.apply_add(re(tau * bi), &src[i], &mut v_next);
        }
        r_next += tau * bi * inner_spectral(&f_hat[i], &v_stages[i])?.re;
    }
    let u_next = u_next.into_physical();
    let v_next = v_next.into_physical();
    check_finite(&u_next, "SAV-IFRK update")?;
    check_finite(&v_next, "SAV-IFRK update")?;
    if !r_next.is_finite() {
        return Err(Error::NonFinite {
            stage: "SAV-IFRK update",
        });
    }
    Ok(SavState {
        u: u_next,
        v: v_next,
        r: r_next,
        t: state.t + tau,
    })
}

/// Gaussian elimination with partial pivoting.
pub(crate) fn solve_dense<T: Real>(mut m: Vec<Vec<T>>, mut rhs: Vec<T>) -> Result<Vec<T>> {
    let n = rhs.len();
    let scale = m.iter().flatten().fold(T::zero(), |acc, x| acc.max(x.abs()));
    let floor = T::lit(1e-12) * scale;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| {
                m[x][col]
                    .abs()
                    .partial_cmp(&m[y][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("non-empty range");
        let pivot = m[piv][col];
        if !(pivot.abs() >= floor) || scale == T::zero() {
            return Err(Error::SingularStageSystem {
                pivot: pivot.abs().to_f64().unwrap_or(f64::NAN),
                scale: scale.to_f64().unwrap_or(f64::NAN),
            });
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for row in (col + 1)..n {
            let factor = m[row][col] / m[col][col];
            if factor == T::zero() {
                continue;
            }
            for k in col..n {
                let sub = factor * m[col][k];
                m[row][k] -= sub;
            }
            let sub = factor * rhs[col];
            rhs[row] -= sub;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let tail = ((row + 1)..n).fold(T::zero(), |acc, k| acc + m[row][k] * x[k]);
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}

impl<T: Real> Stepper<T> for IfrkWorkspace<T> {
    fn step(&mut self, state: &SavState<T>, params: &ProblemParams<T>) -> Result<SavState<T>> {
        step_ifrk(state, params, self)
    }

    fn tau(&self) -> T {
        self.tau
    }

    fn predictor_iterations(&self) -> Option<usize> {
        self.last_iterations
    }
}
