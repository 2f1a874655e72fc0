//! Manufactured solutions, initial-condition catalog, error metrics and
//! the convergence / energy runs built on them.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::ifrk::PredictorOptions;
use crate::sav::{discrete_energy, h_n, init_state, r_init, ProblemParams, SavState, Source};
use crate::scalar::Real;
use crate::spectral::{inner_l2, laplacian, semi_h1_sq, Field, Grid2D};
use crate::stepper::{integrate, Scheme};

/// Errors at or below this are treated as round-off and left out of slope fits.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

/// Rectangle `(x_lower, x_lower + x_extent) × (y_lower, y_lower + y_extent)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain<T> {
    pub x_lower: T,
    pub y_lower: T,
    pub x_extent: T,
    pub y_extent: T,
}

impl<T: Real> Domain<T> {
    /// The square `(−half, half)²`.
    pub fn centered_square(half: T) -> Self {
        let two = T::lit(2.0);
        Self {
            x_lower: -half,
            y_lower: -half,
            x_extent: two * half,
            y_extent: two * half,
        }
    }

    pub fn grid(&self, n: usize) -> Result<Arc<Grid2D<T>>> {
        Grid2D::new(self.x_lower, self.y_lower, self.x_extent, self.y_extent, n)
    }
}

/// `(−8, 8)²`, the manufactured-solution domain.
pub fn example1_domain<T: Real>() -> Domain<T> {
    Domain::centered_square(T::lit(8.0))
}

/// `(−32, 32)²`, the energy-test domain.
pub fn example2_domain<T: Real>() -> Domain<T> {
    Domain::centered_square(T::lit(32.0))
}

/// `u0 = (1 + i)(x + y) exp(−10 (1 − x − y)²)`.
pub fn example2_u0<T: Real>(x: T, y: T) -> Complex<T> {
    let s = x + y;
    let d = T::one() - s;
    let amp = s * (T::lit(-10.0) * d * d).exp();
    Complex::new(amp, amp)
}

/// `u1 = 0`.
pub fn example2_u1<T: Real>(_x: T, _y: T) -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// `u(x, y, t) = sech(x² + y²) e^{iωt}` with `ω = −√2 π`, together with the
/// forcing that makes it an exact solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedSolution<T> {
    pub alpha: T,
    pub beta: T,
    pub omega: T,
    derivative_terms: bool,
}

fn sech<T: Real>(z: T) -> T {
    // 2 / (e^z + e^−z) without overflow for large z.
    let e = (-z.abs()).exp();
    T::lit(2.0) * e / (T::one() + e * e)
}

impl<T: Real> ManufacturedSolution<T> {
    pub fn new(alpha: T, beta: T) -> Self {
        Self {
            alpha,
            beta,
            omega: -T::lit(2.0).sqrt() * T::PI(),
            derivative_terms: true,
        }
    }

    /// Drops `u_tt`, `iα u_t` and `−Δu` from the source, leaving `β|u|²u`.
    pub fn nonlinear_term_only(mut self) -> Self {
        self.derivative_terms = false;
        self
    }

    pub fn phi(&self, x: T, y: T) -> T {
        sech(x * x + y * y)
    }

    /// `Δφ = 4R sech''(R) + 4 sech'(R)` with `R = x² + y²`.
    pub fn laplacian_phi(&self, x: T, y: T) -> T {
        let r = x * x + y * y;
        let s = sech(r);
        let th = r.tanh();
        let d1 = -s * th;
        let d2 = s * th * th - s * s * s;
        T::lit(4.0) * (r * d2 + d1)
    }

    fn phase(&self, t: T) -> Complex<T> {
        Complex::new(T::zero(), self.omega * t).exp()
    }

    pub fn u(&self, x: T, y: T, t: T) -> Complex<T> {
        self.phase(t).scale(self.phi(x, y))
    }

    /// `u_t = iω u`.
    pub fn u_t(&self, x: T, y: T, t: T) -> Complex<T> {
        self.u(x, y, t) * Complex::new(T::zero(), self.omega)
    }

    /// `u_tt = −ω² u`.
    pub fn u_tt(&self, x: T, y: T, t: T) -> Complex<T> {
        self.u(x, y, t).scale(-self.omega * self.omega)
    }

    pub fn laplacian_u(&self, x: T, y: T, t: T) -> Complex<T> {
        self.phase(t).scale(self.laplacian_phi(x, y))
    }

    /// `S = u_tt + iα u_t − Δu + β|u|²u`.
    pub fn source_at(&self, x: T, y: T, t: T) -> Complex<T> {
        let p = self.phi(x, y);
        let cubic = self.phase(t).scale(self.beta * p * p * p);
        if !self.derivative_terms {
            return cubic;
        }
        let i_alpha = Complex::new(T::zero(), self.alpha);
        self.u_tt(x, y, t) + i_alpha * self.u_t(x, y, t) - self.laplacian_u(x, y, t) + cubic
    }

    pub fn u0(&self, x: T, y: T) -> Complex<T> {
        self.u(x, y, T::zero())
    }

    pub fn u1(&self, x: T, y: T) -> Complex<T> {
        self.u_t(x, y, T::zero())
    }

    /// Sampled `(U, U_t, √H_N(U))` at time `t`.
    pub fn exact_state(&self, grid: &Arc<Grid2D<T>>, t: T, c0: T) -> Result<SavState<T>> {
        let u = Field::sample(grid, |x, y| self.u(x, y, t));
        let v = Field::sample(grid, |x, y| self.u_t(x, y, t));
        let r = r_init(&u, c0)?;
        Ok(SavState { u, v, r, t })
    }

    /// Source for which the sampled exact solution solves the semi-discrete
    /// system exactly: `Δ` is replaced by the spectral Laplacian on `grid`.
    pub fn grid_source(&self, grid: &Arc<Grid2D<T>>) -> GridSource<T> {
        let phi = Field::sample(grid, |x, y| Complex::new(self.phi(x, y), T::zero()));
        let lap = laplacian(&phi);
        let lin = -self.omega * self.omega - self.alpha * self.omega;
        let mut profile = phi.map(|z| {
            let p = z.re;
            Complex::new(lin * p + self.beta * p * p * p, T::zero())
        });
        profile
            .axpy(Complex::new(-T::one(), T::zero()), &lap)
            .expect("fields share the grid");
        GridSource {
            omega: self.omega,
            profile,
        }
    }
}

impl<T: Real> Source<T> for ManufacturedSolution<T> {
    fn sample(&self, grid: &Arc<Grid2D<T>>, t: T) -> Field<T> {
        Field::sample(grid, |x, y| self.source_at(x, y, t))
    }
}

/// Time-harmonic forcing `e^{iωt} P(x, y)` with a fixed nodal profile.
#[derive(Clone, Debug)]
pub struct GridSource<T: Real> {
    omega: T,
    profile: Field<T>,
}

impl<T: Real> Source<T> for GridSource<T> {
    fn sample(&self, grid: &Arc<Grid2D<T>>, t: T) -> Field<T> {
        assert!(
            grid.same_as(self.profile.grid()),
            "grid source sampled on a foreign grid"
        );
        self.profile.scaled(Complex::new(T::zero(), self.omega * t).exp())
    }
}

/// Which forcing a manufactured run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceKind {
    /// Closed-form `S` sampled at the nodes.
    Continuous,
    /// Closed form with the spectral Laplacian; removes the spatial error.
    GridConsistent,
}

/// Error of a numerical state against sampled exact data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorMetrics<T> {
    /// `(|U − u|²_{N,1} + ‖U − u‖²)^{1/2}`.
    pub h1_err: T,
    /// `|U − u|_{N,1}` alone.
    pub semi_h1_err: T,
    pub l2_err_v: T,
    /// `|√H_N(U) − r|`.
    pub r_err: T,
}

pub fn h1_error<T: Real>(state: &SavState<T>, exact: &SavState<T>, c0: T) -> Result<ErrorMetrics<T>> {
    let du = exact.u.clone().into_physical().sub(&state.u.clone().into_physical())?;
    let dv = exact.v.clone().into_physical().sub(&state.v.clone().into_physical())?;
    let semi = semi_h1_sq(&du);
    let l2 = inner_l2(&du, &du)?.re;
    let r_exact = h_n(&exact.u.clone().into_physical(), c0)?.sqrt();
    Ok(ErrorMetrics {
        h1_err: (semi + l2).sqrt(),
        semi_h1_err: semi.sqrt(),
        l2_err_v: inner_l2(&dv, &dv)?.re.sqrt(),
        r_err: (r_exact - state.r).abs(),
    })
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    /// `τ` for temporal sweeps, `N` for spatial ones.
    pub param: f64,
    pub h1_err: f64,
    pub l2_err_v: f64,
    pub r_err: f64,
    /// `max_n |E^n − E^0| / |E^0|`.
    pub energy_drift: f64,
    pub seconds: f64,
    pub min_denominator: Option<f64>,
}

impl SweepRow {
    pub fn at_floor(&self) -> bool {
        self.h1_err <= ROUNDOFF_FLOOR
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub scheme: Scheme,
    /// Sorted by `param`.
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    fn new(scheme: Scheme, mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(|a, b| a.param.total_cmp(&b.param));
        Self { scheme, rows }
    }

    /// Least-squares slope of `log h1_err` against `log param` over the rows
    /// above the round-off floor; `None` with fewer than three such rows.
    pub fn slope(&self) -> Option<f64> {
        fit_slope(self.rows.iter().filter(|r| !r.at_floor()).map(|r| (r.param, r.h1_err)))
    }

    /// `err(param_i) / err(param_{i+1})` for consecutive rows.
    pub fn reduction_factors(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[0].h1_err / w[1].h1_err).collect()
    }

    pub fn min_denominator(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.min_denominator).reduce(f64::min)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "param,h1_err,l2_err_v,r_err,energy_drift,seconds")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.param, r.h1_err, r.l2_err_v, r.r_err, r.energy_drift, r.seconds
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(points: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.into_iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some(sxy / sxx)
}

/// Parameters of a manufactured-solution run other than `N` and `τ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManufacturedSetup<T> {
    pub alpha: T,
    pub beta: T,
    pub c0: T,
    pub domain: Domain<T>,
    pub source: SourceKind,
    pub predictor: PredictorOptions<T>,
}

impl<T: Real> ManufacturedSetup<T> {
    /// Manufactured problem on `(−8, 8)²` with `α = 1`, `C0 = 1`.
    pub fn example1(beta: T) -> Self {
        Self {
            alpha: T::one(),
            beta,
            c0: T::one(),
            domain: example1_domain(),
            source: SourceKind::Continuous,
            predictor: PredictorOptions::default(),
        }
    }

    pub fn with_source(mut self, source: SourceKind) -> Self {
        self.source = source;
        self
    }

    pub fn solution(&self) -> ManufacturedSolution<T> {
        ManufacturedSolution::new(self.alpha, self.beta)
    }

    pub fn params(&self, n: usize) -> Result<ProblemParams<T>> {
        let grid = self.domain.grid(n)?;
        let sol = self.solution();
        let src: Arc<dyn Source<T>> = match self.source {
            SourceKind::Continuous => Arc::new(sol),
            SourceKind::GridConsistent => Arc::new(sol.grid_source(&grid)),
        };
        Ok(ProblemParams::new(&grid, self.alpha, self.beta, self.c0)?.with_source(src))
    }
}

/// Number of steps of size `tau` that land on `t_final`.
pub fn step_count<T: Real>(tau: T, t_final: T) -> Result<usize> {
    if !(tau > T::zero()) || !(t_final >= tau) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("need 0 < tau <= T, got tau = {tau}, T = {t_final}"),
        });
    }
    let steps = (t_final / tau).round();
    if ((steps * tau - t_final) / t_final).abs() > T::lit(1e-9) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("T = {t_final} is not a whole number of steps of {tau}"),
        });
    }
    Ok(steps.to_usize().expect("step count fits usize"))
}

/// Runs the manufactured problem to `t_final` and measures the final error.
pub fn manufactured_run<T: Real>(
    scheme: Scheme,
    setup: &ManufacturedSetup<T>,
    n: usize,
    tau: T,
    t_final: T,
) -> Result<(SweepRow, SavState<T>)> {
    let steps = step_count(tau, t_final)?;
    let params = setup.params(n)?;
    let sol = setup.solution();
    let state0 = init_state(&params, |x, y| sol.u0(x, y), |x, y| sol.u1(x, y))?;
    let mut stepper = scheme.build(&params, tau, setup.predictor)?;
    let e0 = discrete_energy(&state0, &params)?;
    let mut drift = T::zero();
    let start = Instant::now();
    let last = integrate(stepper.as_mut(), &params, state0, 0, steps, |d, _| {
        drift = drift.max(((d.energy - e0) / e0).abs());
        Ok(())
    })?;
    let seconds = start.elapsed().as_secs_f64();
    // Tie the exact solution to the nominal end time, not the accumulated t.
    let exact = sol.exact_state(params.grid(), tau * T::of_usize(steps), setup.c0)?;
    let err = h1_error(&last, &exact, setup.c0)?;
    Ok((
        SweepRow {
            param: 0.0,
            h1_err: err.h1_err.as_f64(),
            l2_err_v: err.l2_err_v.as_f64(),
            r_err: err.r_err.as_f64(),
            energy_drift: drift.as_f64(),
            seconds,
            min_denominator: stepper.min_denominator().map(Real::as_f64),
        },
        last,
    ))
}

/// Error against `τ` at fixed `N`.
pub fn run_temporal_sweep<T: Real>(
    scheme: Scheme,
    setup: &ManufacturedSetup<T>,
    n: usize,
    taus: &[T],
    t_final: T,
) -> Result<SweepResult> {
    nonempty(taus.len(), "tau list")?;
    let rows = taus
        .iter()
        .map(|&tau| {
            let (row, _) = manufactured_run(scheme, setup, n, tau, t_final)?;
            Ok(SweepRow {
                param: tau.as_f64(),
                ..row
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::new(scheme, rows))
}

/// Error against `N` at fixed `τ`.
pub fn run_spatial_sweep<T: Real>(
    scheme: Scheme,
    setup: &ManufacturedSetup<T>,
    tau: T,
    ns: &[usize],
    t_final: T,
) -> Result<SweepResult> {
    nonempty(ns.len(), "N list")?;
    let rows = ns
        .iter()
        .map(|&n| {
            let (row, _) = manufactured_run(scheme, setup, n, tau, t_final)?;
            Ok(SweepRow { param: n as f64, ..row })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::new(scheme, rows))
}

fn nonempty(len: usize, what: &'static str) -> Result<()> {
    if len == 0 {
        Err(Error::InvalidParameter {
            name: "sweep",
            reason: format!("{what} is empty"),
        })
    } else {
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRow<T> {
    pub n: usize,
    pub t: T,
    pub energy: T,
    pub re: T,
}

/// `RE^n = |(E^n − E^0)/E^0|` along one trajectory.
#[derive(Clone, Debug)]
pub struct EnergySeries<T: Real> {
    pub scheme: Scheme,
    pub rows: Vec<EnergyRow<T>>,
    pub min_denominator: Option<T>,
    pub final_state: SavState<T>,
}

impl<T: Real> EnergySeries<T> {
    pub fn max_re(&self) -> T {
        self.rows.iter().fold(T::zero(), |m, r| m.max(r.re))
    }

    pub fn initial_energy(&self) -> T {
        self.rows[0].energy
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,t,E,RE")?;
        for r in &self.rows {
            writeln!(out, "{},{:.16e},{:.16e},{:.16e}", r.n, r.t, r.energy, r.re)?;
        }
        Ok(())
    }
}

/// Tracks `RE^n` for `steps` steps of size `tau` from `state0`.
pub fn run_energy_experiment<T: Real>(
    scheme: Scheme,
    params: &ProblemParams<T>,
    state0: SavState<T>,
    tau: T,
    steps: usize,
    predictor: PredictorOptions<T>,
) -> Result<EnergySeries<T>> {
    let mut stepper = scheme.build(params, tau, predictor)?;
    let e0 = discrete_energy(&state0, params)?;
    let mut rows = Vec::with_capacity(steps + 1);
    let final_state = integrate(stepper.as_mut(), params, state0, 0, steps, |d, _| {
        rows.push(EnergyRow {
            n: d.n,
            t: d.t,
            energy: d.energy,
            re: ((d.energy - e0) / e0).abs(),
        });
        Ok(())
    })?;
    Ok(EnergySeries {
        scheme,
        rows,
        min_denominator: stepper.min_denominator(),
        final_state,
    })
}

/// Example 2 parameters (`α = β = 1`, `(−32, 32)²`, no source) on an `N` grid.
pub fn example2_params<T: Real>(n: usize, c0: T) -> Result<ProblemParams<T>> {
    let grid = example2_domain().grid(n)?;
    ProblemParams::new(&grid, T::one(), T::one(), c0)
}

pub fn example2_state<T: Real>(params: &ProblemParams<T>) -> Result<SavState<T>> {
    init_state(params, example2_u0, example2_u1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Repr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    type C = Complex<f64>;

    // Sixth-order central differences.
    fn d1(f: impl Fn(f64) -> C, x: f64, h: f64) -> C {
        let w = [(1.0, 3.0 / 4.0), (2.0, -3.0 / 20.0), (3.0, 1.0 / 60.0)];
        w.iter()
            .fold(C::new(0.0, 0.0), |acc, &(k, c)| acc + (f(x + k * h) - f(x - k * h)) * c)
            / h
    }

    fn d2(f: impl Fn(f64) -> C, x: f64, h: f64) -> C {
        let w = [(1.0, 3.0 / 2.0), (2.0, -3.0 / 20.0), (3.0, 1.0 / 90.0)];
        let centre = f(x) * (-49.0 / 18.0);
        w.iter()
            .fold(centre, |acc, &(k, c)| acc + (f(x + k * h) + f(x - k * h)) * c)
            / (h * h)
    }

    #[test]
    fn closed_form_values_at_origin() {
        let m = ManufacturedSolution::new(1.0, 1.0);
        let w = -(2.0f64).sqrt() * PI;
        assert_eq!(m.omega, w);
        assert_eq!(m.u(0.0, 0.0, 0.0), C::new(1.0, 0.0));
        assert_eq!(m.u_t(0.0, 0.0, 0.0), C::new(0.0, w));
        assert_eq!(m.u_tt(0.0, 0.0, 0.0), C::new(-w * w, 0.0));
        assert_eq!(m.u1(0.5, 0.0), C::new(0.0, w * m.phi(0.5, 0.0)));
    }

    #[test]
    fn nonlinear_term_isolation() {
        let m = ManufacturedSolution::new(1.0, 1.0).nonlinear_term_only();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let (x, y, t) = (
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.0..1.0),
            );
            let u = m.u(x, y, t);
            let want = u * u.norm_sqr();
            assert!((m.source_at(x, y, t) - want).norm() <= 1e-15);
        }
    }

    #[test]
    fn source_matches_finite_difference_oracle() {
        for (alpha, beta) in [(1.0, 1.0), (0.7, -1.0)] {
            let m = ManufacturedSolution::new(alpha, beta);
            let mut rng = ChaCha8Rng::seed_from_u64(12);
            for _ in 0..20 {
                let (x, y, t) = (
                    rng.gen_range(-2.5..2.5),
                    rng.gen_range(-2.5..2.5),
                    rng.gen_range(0.0..1.0),
                );
                let u = m.u(x, y, t);
                let ut = d1(|s| m.u(x, y, s), t, 1e-2);
                let utt = d2(|s| m.u(x, y, s), t, 1e-2);
                let lap = d2(|s| m.u(s, y, t), x, 2e-3) + d2(|s| m.u(x, s, t), y, 2e-3);
                let s = utt + C::new(0.0, alpha) * ut - lap + u * (beta * u.norm_sqr());
                let got = m.source_at(x, y, t);
                assert!((got - s).norm() <= 1e-8, "({x}, {y}, {t}): {got} vs {s}");
            }
        }
    }

    #[test]
    fn closed_form_laplacian_matches_spectral_laplacian() {
        let m = ManufacturedSolution::new(1.0, 1.0);
        let g = example1_domain::<f64>().grid(256).unwrap();
        let phi = Field::sample(&g, |x, y| C::new(m.phi(x, y), 0.0));
        let want = Field::sample(&g, |x, y| C::new(m.laplacian_phi(x, y), 0.0));
        assert!(laplacian(&phi).sub(&want).unwrap().linf() <= 1e-8);
    }

    #[test]
    fn grid_source_makes_sampled_solution_exact() {
        // With S_N the sampled U satisfies U_tt + iα U_t − Δ_N U + β|U|²U = S_N.
        let m = ManufacturedSolution::new(0.8, -1.0);
        let g = example1_domain::<f64>().grid(16).unwrap();
        let src = m.grid_source(&g);
        let t = 0.3;
        let u = Field::sample(&g, |x, y| m.u(x, y, t));
        let mut lhs = Field::sample(&g, |x, y| m.u_tt(x, y, t) + C::new(0.0, 0.8) * m.u_t(x, y, t));
        lhs.axpy(C::new(-1.0, 0.0), &laplacian(&u)).unwrap();
        lhs.axpy(C::new(-1.0, 0.0), &crate::sav::g_fn(&u).unwrap()).unwrap();
        assert!(lhs.sub(&src.sample(&g, t)).unwrap().linf() <= 1e-12);
    }

    #[test]
    fn sech_is_safe_for_large_arguments() {
        assert_eq!(sech(0.0f64), 1.0);
        assert!((sech(1.0f64) - 1.0 / 1.0f64.cosh()).abs() <= 4.0 * f64::EPSILON);
        assert!(sech(128.0f64) > 0.0 && sech(128.0f64) < 1e-55);
        assert_eq!(sech(2000.0f64), 0.0);
    }

    #[test]
    fn errors_vanish_on_exact_data() {
        let m = ManufacturedSolution::new(1.0, 1.0);
        let g = example1_domain::<f64>().grid(16).unwrap();
        let exact = m.exact_state(&g, 0.25, 1.0).unwrap();
        let e = h1_error(&exact, &exact, 1.0).unwrap();
        assert!(e.h1_err <= 1e-14 && e.l2_err_v <= 1e-14 && e.r_err <= 1e-14);
    }

    #[test]
    fn single_mode_perturbation() {
        let m = ManufacturedSolution::new(1.0, 1.0);
        let g = Grid2D::new(-8.0, -8.0, 16.0, 16.0, 16).unwrap();
        let exact = m.exact_state(&g, 0.0, 1.0).unwrap();
        let eps = 1e-3;
        let mut pert = exact.clone();
        pert.u
            .axpy(
                C::new(1.0, 0.0),
                &Field::mode(&g, 1, 1, C::new(eps, 0.0)).into_physical(),
            )
            .unwrap();
        let e = h1_error(&pert, &exact, 1.0).unwrap();
        let want = eps * (g.lambda2(1, 1) + 1.0).sqrt() * (16.0 * 16.0f64).sqrt() / 2.0;
        assert!((e.h1_err - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn errors_invariant_under_global_phase() {
        let m = ManufacturedSolution::new(1.0, 1.0);
        let g = example1_domain::<f64>().grid(16).unwrap();
        let exact = m.exact_state(&g, 0.0, 1.0).unwrap();
        let other = m.exact_state(&g, 0.01, 1.0).unwrap();
        let rot = C::from_polar(1.0, 0.9);
        let spin = |s: &SavState<f64>| SavState {
            u: s.u.scaled(rot),
            v: s.v.scaled(rot),
            ..s.clone()
        };
        let a = h1_error(&other, &exact, 1.0).unwrap();
        let b = h1_error(&spin(&other), &spin(&exact), 1.0).unwrap();
        assert!((a.h1_err - b.h1_err).abs() <= 1e-14 * a.h1_err.max(1.0));
        assert!((a.l2_err_v - b.l2_err_v).abs() <= 1e-14 * a.l2_err_v.max(1.0));
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|k| (0.1 / 2f64.powi(k), 3.0 * (0.1 / 2f64.powi(k)).powi(4)))
            .collect();
        assert!((fit_slope(pts.clone()).unwrap() - 4.0).abs() <= 1e-12);
        assert_eq!(fit_slope(pts[..2].to_vec()), None);
    }

    #[test]
    fn slope_ignores_floor_rows() {
        let row = |param: f64, h1_err: f64| SweepRow {
            param,
            h1_err,
            l2_err_v: 0.0,
            r_err: 0.0,
            energy_drift: 0.0,
            seconds: 0.0,
            min_denominator: None,
        };
        let res = SweepResult::new(
            Scheme::SavIf,
            vec![row(0.4, 1.6e-5), row(0.1, 1e-6), row(0.2, 4e-6), row(0.05, 1e-13)],
        );
        assert_eq!(res.rows[0].param, 0.05);
        assert!((res.slope().unwrap() - 2.0).abs() <= 1e-12);
        let mut csv = Vec::new();
        res.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("param,h1_err,l2_err_v,r_err,energy_drift,seconds\n"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.1, 1.0).unwrap(), 10);
        assert_eq!(step_count(0.1 / 16.0, 1.0).unwrap(), 160);
        assert!(step_count(0.3, 1.0).is_err());
        assert!(step_count(2.0, 1.0).is_err());
    }

    #[test]
    fn example2_data() {
        let p = example2_params::<f64>(16, 1.0).unwrap();
        let s = example2_state(&p).unwrap();
        assert_eq!(s.v.linf(), 0.0);
        assert_eq!(s.u.repr(), Repr::Physical);
        assert_eq!(example2_u0(0.5, 0.5), C::new(1.0, 1.0));
        assert_eq!(example2_u0(0.0, 0.0), C::new(0.0, 0.0));
    }

    #[test]
    fn under_resolved_run_is_finite() {
        let setup = ManufacturedSetup::example1(1.0);
        let (row, _) = manufactured_run(Scheme::SavIf, &setup, 8, 0.01, 0.05).unwrap();
        assert!(row.h1_err.is_finite() && row.h1_err > 1e-3);
    }

    #[test]
    fn temporal_sweep_is_deterministic() {
        let setup = ManufacturedSetup::example1(1.0).with_source(SourceKind::GridConsistent);
        let a = run_temporal_sweep(Scheme::SavIf, &setup, 16, &[0.1, 0.05], 0.2).unwrap();
        let b = run_temporal_sweep(Scheme::SavIf, &setup, 16, &[0.1, 0.05], 0.2).unwrap();
        let strip = |r: &SweepResult| {
            r.rows
                .iter()
                .map(|x| (x.h1_err, x.l2_err_v, x.r_err))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn energy_series_layout() {
        let p = example2_params::<f64>(16, 1.0).unwrap();
        let s0 = example2_state(&p).unwrap();
        let series = run_energy_experiment(Scheme::SavIf, &p, s0, 0.05, 4, PredictorOptions::default()).unwrap();
        assert_eq!(series.rows.len(), 5);
        assert_eq!(series.rows[0].re, 0.0);
        assert!(series.rows.windows(2).all(|w| w[1].n == w[0].n + 1));
        let mut csv = Vec::new();
        series.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("n,t,E,RE\n"));
    }
}
