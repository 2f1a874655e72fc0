//! Scalar-auxiliary-variable state and the nonlinear functionals built on
//! `G(u) = |u|^4 / 2`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::expop::check_alpha;
use crate::scalar::Real;
use crate::spectral::{inner_l2, semi_h1_sq, Field, Grid2D, Repr};

/// Forcing term `S(x, y, t)` added to the velocity equation.
pub trait Source<T: Real>: Send + Sync {
    /// Physical-space samples of `S(., ., t)` on the interior nodes.
    fn sample(&self, grid: &Arc<Grid2D<T>>, t: T) -> Field<T>;
}

/// Equation parameters `α`, `β`, `C0` on a fixed grid.
#[derive(Clone)]
pub struct ProblemParams<T: Real> {
    alpha: T,
    beta: T,
    c0: T,
    grid: Arc<Grid2D<T>>,
    source: Option<Arc<dyn Source<T>>>,
    nonlinear: bool,
}

impl<T: Real> fmt::Debug for ProblemParams<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemParams")
            .field("alpha", &self.alpha)
            .field("beta", &self.beta)
            .field("c0", &self.c0)
            .field("grid", &self.grid)
            .field("source", &self.source.is_some())
            .field("nonlinear", &self.nonlinear)
            .finish()
    }
}

impl<T: Real> ProblemParams<T> {
    pub fn new(grid: &Arc<Grid2D<T>>, alpha: T, beta: T, c0: T) -> Result<Self> {
        check_alpha(alpha)?;
        if beta == T::zero() || !beta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be finite and nonzero, got {beta}"),
            });
        }
        if !(c0 > T::zero()) || !c0.is_finite() {
            return Err(Error::InvalidParameter {
                name: "c0",
                reason: format!("must be finite and positive, got {c0}"),
            });
        }
        Ok(Self {
            alpha,
            beta,
            c0,
            grid: Arc::clone(grid),
            source: None,
            nonlinear: true,
        })
    }

    pub fn with_source(mut self, source: Arc<dyn Source<T>>) -> Self {
        self.source = Some(source);
        self
    }

    /// Drops the `β r f_N(u)` coupling so the steppers integrate the linear
    /// flow only. Meant for diagnostics.
    pub fn linear_only(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn c0(&self) -> T {
        self.c0
    }

    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        &self.grid
    }

    pub fn source(&self) -> Option<&Arc<dyn Source<T>>> {
        self.source.as_ref()
    }

    pub fn is_nonlinear(&self) -> bool {
        self.nonlinear
    }
}

/// Solution `u`, velocity `v`, auxiliary scalar `r` at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SavState<T: Real> {
    pub u: Field<T>,
    pub v: Field<T>,
    pub r: T,
    pub t: T,
}

/// Pointwise `|u|^2 u`.
pub fn g_fn<T: Real>(u: &Field<T>) -> Result<Field<T>> {
    u.expect_repr(Repr::Physical)?;
    Ok(u.map(|z| z.scale(z.norm_sqr())))
}

/// `H_N(u) = (|u|^4 / 2, 1)_l2 + C0`.
pub fn h_n<T: Real>(u: &Field<T>, c0: T) -> Result<T> {
    u.expect_repr(Repr::Physical)?;
    let quartic = u.data().iter().fold(T::zero(), |acc, z| {
        let m = z.norm_sqr();
        acc + m * m
    });
    Ok(T::lit(0.5) * quartic * u.grid().cell_area() + c0)
}

/// `f_N(u) = g(u) / sqrt(H_N(u))`.
pub fn f_n<T: Real>(u: &Field<T>, c0: T) -> Result<Field<T>> {
    let inv = h_n(u, c0)?.sqrt().recip();
    Ok(u.map(|z| z.scale(z.norm_sqr() * inv)))
}

/// `sqrt(H_N(u0))`, the consistent initial auxiliary variable.
pub fn r_init<T: Real>(u0: &Field<T>, c0: T) -> Result<T> {
    Ok(h_n(u0, c0)?.sqrt())
}

/// `|u|²_{N,1} + ‖v‖²_l2 + β r² - β C0`.
pub fn discrete_energy<T: Real>(state: &SavState<T>, params: &ProblemParams<T>) -> Result<T> {
    let v = state.v.clone().into_physical();
    let v_sq = inner_l2(&v, &v)?.re;
    Ok(semi_h1_sq(&state.u) + v_sq + params.beta() * (state.r * state.r - params.c0()))
}

/// Samples the initial data at the grid nodes; `r = sqrt(H_N(u0))`, `t = 0`.
pub fn init_state<T: Real>(
    params: &ProblemParams<T>,
    u0: impl Fn(T, T) -> Complex<T>,
    u1: impl Fn(T, T) -> Complex<T>,
) -> Result<SavState<T>> {
    let grid = params.grid();
    let u = Field::sample(grid, u0);
    let v = Field::sample(grid, u1);
    if !u.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite { stage: "initial data" });
    }
    let r = r_init(&u, params.c0())?;
    Ok(SavState { u, v, r, t: T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::norms;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    type C = Complex<f64>;

    fn unit_square(n: usize) -> Arc<Grid2D<f64>> {
        Grid2D::new(0.0, 0.0, 1.0, 1.0, n).unwrap()
    }

    fn random_field(g: &Arc<Grid2D<f64>>, seed: u64) -> Field<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::sample(g, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn g_pointwise_values() {
        let g = unit_square(8);
        assert_eq!(g_fn(&Field::zeros(&g, Repr::Physical)).unwrap().linf(), 0.0);
        let u = Field::sample(&g, |_, _| C::new(1.0, 1.0));
        assert!(g_fn(&u).unwrap().data().iter().all(|z| *z == C::new(2.0, 2.0)));
        let u = Field::sample(&g, |_, _| C::new(2.0, 0.0));
        assert!(g_fn(&u).unwrap().data().iter().all(|z| *z == C::new(8.0, 0.0)));
        assert!(g_fn(&Field::zeros(&g, Repr::Spectral)).is_err());
    }

    #[test]
    fn h_values() {
        let g = unit_square(4);
        assert_eq!(h_n(&Field::zeros(&g, Repr::Physical), 0.7).unwrap(), 0.7);
        let one = Field::sample(&g, |_, _| C::new(1.0, 0.0));
        assert_relative_eq!(h_n(&one, 0.7).unwrap(), 0.5 * 9.0 / 16.0 + 0.7, max_relative = 1e-15);
    }

    #[test]
    fn h_matches_compensated_sum() {
        let g = Grid2D::new(-1.0, -1.0, 2.0, 2.0, 32).unwrap();
        let u = random_field(&g, 4);
        // Kahan-compensated accumulation of |u|^4 as an independent route.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for z in u.data() {
            let term = 0.5 * z.norm_sqr().powi(2) - comp;
            let next = sum + term;
            comp = (next - sum) - term;
            sum = next;
        }
        let oracle = sum * g.h1() * g.h2() + 1.0;
        assert_relative_eq!(h_n(&u, 1.0).unwrap(), oracle, max_relative = 1e-14);
    }

    #[test]
    fn f_values() {
        let g = unit_square(4);
        assert_eq!(f_n(&Field::zeros(&g, Repr::Physical), 1.0).unwrap().linf(), 0.0);
        let one = Field::sample(&g, |_, _| C::new(1.0, 0.0));
        let c0 = 1.0 - 0.5 * 9.0 / 16.0;
        let f = f_n(&one, c0).unwrap();
        let gu = g_fn(&one).unwrap();
        assert!(f.sub(&gu).unwrap().linf() <= 1e-15);
    }

    #[test]
    fn f_scaling() {
        let g = unit_square(8);
        let u = random_field(&g, 1);
        let c = C::new(0.6, -1.3);
        let cu = u.scaled(c);
        let lhs = f_n(&cu, 2.0).unwrap();
        let rhs = g_fn(&u)
            .unwrap()
            .scaled(c * c.norm_sqr() / h_n(&cu, 2.0).unwrap().sqrt());
        assert!(lhs.sub(&rhs).unwrap().linf() <= 1e-14 * rhs.linf());
    }

    #[test]
    fn r_init_identity() {
        let g = unit_square(16);
        assert_eq!(r_init(&Field::zeros(&g, Repr::Physical), 4.0).unwrap(), 2.0);
        assert_eq!(r_init(&Field::zeros(&g, Repr::Physical), 1.0).unwrap(), 1.0);
        let u = random_field(&g, 2);
        let r = r_init(&u, 1.5).unwrap();
        let quartic = u.map(|z| C::new(0.5 * z.norm_sqr().powi(2), 0.0));
        let one = Field::sample(&g, |_, _| C::new(1.0, 0.0));
        let g_int = inner_l2(&quartic, &one).unwrap().re;
        assert_relative_eq!(r * r - 1.5, g_int, max_relative = 1e-12);
    }

    #[test]
    fn energy_values() {
        let g = Grid2D::new(0.0, 0.0, PI, PI, 16).unwrap();
        let p = ProblemParams::new(&g, 1.0, 1.0, 3.0).unwrap();
        let zero = SavState {
            u: Field::zeros(&g, Repr::Physical),
            v: Field::zeros(&g, Repr::Physical),
            r: 3f64.sqrt(),
            t: 0.0,
        };
        assert!(discrete_energy(&zero, &p).unwrap().abs() <= 1e-15);

        let u = Field::sample(&g, |x, y| C::new(x.sin() * y.sin(), 0.0));
        let state = SavState {
            u: u.clone(),
            ..zero.clone()
        };
        let e = discrete_energy(&state, &p).unwrap();
        assert_relative_eq!(e, norms(&u).semi_h1.powi(2), max_relative = 1e-12);
        assert_relative_eq!(e, 2.0 * PI * PI / 4.0, max_relative = 1e-12);

        let round = SavState {
            u: u.clone().into_spectral().into_physical(),
            ..state.clone()
        };
        assert_relative_eq!(discrete_energy(&round, &p).unwrap(), e, max_relative = 1e-12);
    }

    #[test]
    fn energy_invariant_under_conjugation() {
        let g = unit_square(16);
        let p = ProblemParams::new(&g, 1.0, -1.0, 1.0).unwrap();
        let state = SavState {
            u: random_field(&g, 5),
            v: random_field(&g, 6),
            r: 1.7,
            t: 0.0,
        };
        let conj = SavState {
            u: state.u.conj(),
            v: state.v.conj(),
            ..state.clone()
        };
        assert_relative_eq!(
            discrete_energy(&state, &p).unwrap(),
            discrete_energy(&conj, &p).unwrap(),
            max_relative = 1e-13
        );
    }

    #[test]
    fn params_validation() {
        let g = unit_square(8);
        assert!(ProblemParams::new(&g, 0.0, 1.0, 1.0).is_err());
        assert!(ProblemParams::new(&g, 1.0, 0.0, 1.0).is_err());
        assert!(ProblemParams::new(&g, 1.0, 1.0, 0.0).is_err());
        assert!(ProblemParams::new(&g, 1.0, 1.0, -1.0).is_err());
        assert!(ProblemParams::new(&g, -1.0, -1.0, 1e-3).is_ok());
    }

    #[test]
    fn init_state_samples_and_rejects_nan() {
        let g = unit_square(8);
        let p = ProblemParams::new(&g, 1.0, 1.0, 2.0).unwrap();
        let s = init_state(&p, |_, _| C::new(0.0, 0.0), |_, _| C::new(0.0, 0.0)).unwrap();
        assert_eq!(s.u.linf(), 0.0);
        assert_eq!(s.r, 2f64.sqrt());
        assert_eq!(s.t, 0.0);
        assert!(init_state(&p, |_, _| C::new(f64::NAN, 0.0), |_, _| C::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn bounds_on_h_and_f() {
        let g = unit_square(16);
        for seed in 0..5 {
            let u = random_field(&g, seed).scaled(C::new(3.0, 0.0));
            let c0 = 0.5;
            assert!(h_n(&u, c0).unwrap() >= c0);
            let fl2 = norms(&f_n(&u, c0).unwrap()).l2;
            let gl2 = norms(&g_fn(&u).unwrap()).l2;
            assert!(fl2 <= gl2 / c0.sqrt());
        }
    }
}
