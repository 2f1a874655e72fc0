//! Block elements of `exp(t A_N)` for the first-order system
//! `u' = v, v' = Δ_N u - iα v`.
//!
//! In the sine basis every block is diagonal. For a mode with Laplacian
//! eigenvalue magnitude `λ²` the 2x2 matrix `[[0, 1], [-λ², -iα]]` has the
//! eigenvalues `iω⁺` and `iω⁻` with `ω± = -(α ± √(α² + 4λ²)) / 2`, and the
//! four blocks follow in closed form.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{Field, Grid2D, Repr};

/// Which block of `exp(t A_N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    E11,
    E12,
    E21,
    E22,
}

impl Block {
    pub const ALL: [Block; 4] = [Block::E11, Block::E12, Block::E21, Block::E22];
}

/// `[[e11, e12], [e21, e22]](t)` for a single mode.
pub fn mode_matrix<T: Real>(alpha: T, lambda2: T, t: T) -> [[Complex<T>; 2]; 2] {
    let two = T::lit(2.0);
    let s = (alpha * alpha + T::lit(4.0) * lambda2).sqrt();
    // ω⁺ω⁻ = -λ², so the root with cancellation is recovered from the other one.
    let (w_plus, w_minus) = if alpha >= T::zero() {
        let wp = -(alpha + s) / two;
        (wp, -lambda2 / wp)
    } else {
        let wm = (s - alpha) / two;
        (-lambda2 / wm, wm)
    };
    let omega = -s;
    let i = Complex::<T>::i();
    let ep = (i * (w_plus * t)).exp();
    let em = (i * (w_minus * t)).exp();
    let e11 = (ep.scale(-w_minus) + em.scale(w_plus)).unscale(omega);
    let e12 = (ep - em) / (i * omega);
    let e21 = e12.scale(-lambda2);
    let e22 = (ep.scale(w_plus) - em.scale(w_minus)).unscale(omega);
    [[e11, e12], [e21, e22]]
}

/// One block of `exp(t A_N)` tabulated per mode.
#[derive(Clone)]
pub struct ExpElement<T: Real> {
    block: Block,
    t: T,
    alpha: T,
    grid: Arc<Grid2D<T>>,
    eig: Vec<Complex<T>>,
}

impl<T: Real> fmt::Debug for ExpElement<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpElement")
            .field("block", &self.block)
            .field("t", &self.t)
            .field("alpha", &self.alpha)
            .finish()
    }
}

pub(crate) fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha == T::zero() || !alpha.is_finite() {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: format!("must be finite and nonzero, got {alpha}"),
        });
    }
    Ok(())
}

impl<T: Real> ExpElement<T> {
    pub fn build(grid: &Arc<Grid2D<T>>, alpha: T, block: Block, t: T) -> Result<Self> {
        check_alpha(alpha)?;
        let (r, c) = match block {
            Block::E11 => (0, 0),
            Block::E12 => (0, 1),
            Block::E21 => (1, 0),
            Block::E22 => (1, 1),
        };
        let eig = grid
            .lambda2_table()
            .iter()
            .map(|&l2| mode_matrix(alpha, l2, t)[r][c])
            .collect();
        Ok(Self {
            block,
            t,
            alpha,
            grid: Arc::clone(grid),
            eig,
        })
    }

    pub fn block(&self) -> Block {
        self.block
    }

    pub fn t(&self) -> T {
        self.t
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        &self.grid
    }

    /// Per-mode eigenvalues in grid storage order.
    pub fn eigenvalues(&self) -> &[Complex<T>] {
        &self.eig
    }

    /// Applies the block; the output keeps the input's representation.
    pub fn apply(&self, f: &Field<T>) -> Result<Field<T>> {
        if !self.grid.same_as(f.grid()) {
            return Err(Error::GridMismatch);
        }
        let repr = f.repr();
        let mut s = f.clone().into_spectral();
        self.mul_in_place(&mut s);
        Ok(s.into_repr(repr))
    }

    /// `out += a * E f` for spectral `f` and `out`.
    pub(crate) fn apply_add(&self, a: Complex<T>, f: &Field<T>, out: &mut Field<T>) {
        debug_assert_eq!(f.repr(), Repr::Spectral);
        debug_assert_eq!(out.repr(), Repr::Spectral);
        for ((o, &x), &e) in out.data_mut().iter_mut().zip(f.data()).zip(&self.eig) {
            *o = *o + a * e * x;
        }
    }

    pub(crate) fn mul_in_place(&self, f: &mut Field<T>) {
        debug_assert_eq!(f.repr(), Repr::Spectral);
        for (z, &e) in f.data_mut().iter_mut().zip(&self.eig) {
            *z = *z * e;
        }
    }
}

/// Exact bit pattern of a time value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct TimeKey(u64, i16, i8);

impl TimeKey {
    fn of<T: Real>(t: T) -> Self {
        let (m, e, s) = t.integer_decode();
        TimeKey(m, e, s)
    }
}

/// Cache of [`ExpElement`]s for one `(grid, α)`, keyed by block and the
/// exact binary value of `t`.
pub struct ExpTable<T: Real> {
    grid: Arc<Grid2D<T>>,
    alpha: T,
    entries: RwLock<HashMap<(Block, TimeKey), Arc<ExpElement<T>>>>,
}

impl<T: Real> fmt::Debug for ExpTable<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpTable")
            .field("grid", &self.grid)
            .field("alpha", &self.alpha)
            .field("entries", &self.len())
            .finish()
    }
}

impl<T: Real> ExpTable<T> {
    pub fn new(grid: &Arc<Grid2D<T>>, alpha: T) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            grid: Arc::clone(grid),
            alpha,
            entries: RwLock::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        &self.grid
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("exp table lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the cached element, building it on first use.
    pub fn get(&self, block: Block, t: T) -> Arc<ExpElement<T>> {
        let key = (block, TimeKey::of(t));
        if let Some(e) = self.entries.read().expect("exp table lock poisoned").get(&key) {
            return Arc::clone(e);
        }
        let built =
            Arc::new(ExpElement::build(&self.grid, self.alpha, block, t).expect("alpha validated at construction"));
        let mut w = self.entries.write().expect("exp table lock poisoned");
        Arc::clone(w.entry(key).or_insert(built))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{laplacian, norms, semi_h1_sq};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type C = Complex<f64>;
    type M2 = [[C; 2]; 2];

    fn matmul(a: &M2, b: &M2) -> M2 {
        let mut out = [[C::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    }

    /// exp(t [[0,1],[-λ²,-iα]]) by scaling and squaring a Taylor series.
    fn dense_expm(alpha: f64, lambda2: f64, t: f64) -> M2 {
        let a: M2 = [
            [C::new(0.0, 0.0), C::new(t, 0.0)],
            [C::new(-lambda2 * t, 0.0), C::new(0.0, -alpha * t)],
        ];
        let norm = a.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        let squarings = if norm > 0.5 {
            (norm / 0.5).log2().ceil() as u32
        } else {
            0
        };
        let scale = 0.5f64.powi(squarings as i32);
        let a: M2 = a.map(|row| row.map(|z| z * scale));
        let mut term: M2 = [
            [C::new(1.0, 0.0), C::new(0.0, 0.0)],
            [C::new(0.0, 0.0), C::new(1.0, 0.0)],
        ];
        let mut sum = term;
        for k in 1..40 {
            term = matmul(&term, &a).map(|row| row.map(|z| z / k as f64));
            for i in 0..2 {
                for j in 0..2 {
                    sum[i][j] += term[i][j];
                }
            }
        }
        for _ in 0..squarings {
            sum = matmul(&sum, &sum);
        }
        sum
    }

    fn max_dev(a: &M2, b: &M2) -> f64 {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_time_is_identity() {
        let g = Grid2D::new(0.0, 0.0, 2.0, 3.0, 8).unwrap();
        for (block, want) in [
            (Block::E11, 1.0),
            (Block::E12, 0.0),
            (Block::E21, 0.0),
            (Block::E22, 1.0),
        ] {
            let e = ExpElement::build(&g, 1.3, block, 0.0).unwrap();
            assert!(e.eigenvalues().iter().all(|z| (z - C::new(want, 0.0)).norm() <= 1e-15));
        }
    }

    #[test]
    fn omega_values_for_unit_parameters() {
        // λ² = 1, α = 1: ω⁺ = -(1+√5)/2, ω⁻ = -(1-√5)/2, ω = -√5. The
        // derivative of e12 at t = 0 is 1 and e11 + e22 = e^{iω⁺t} + e^{iω⁻t}.
        let t = 0.37;
        let m = mode_matrix(1.0, 1.0, t);
        let wp = -(1.0 + 5f64.sqrt()) / 2.0;
        let wm = -(1.0 - 5f64.sqrt()) / 2.0;
        let trace = C::new(0.0, wp * t).exp() + C::new(0.0, wm * t).exp();
        assert!((m[0][0] + m[1][1] - trace).norm() <= 1e-15);
        let e12 = (C::new(0.0, wp * t).exp() - C::new(0.0, wm * t).exp()) / C::new(0.0, -5f64.sqrt());
        assert!((m[0][1] - e12).norm() <= 1e-15);
    }

    #[test]
    fn matches_dense_exponential_at_reference_point() {
        let m = mode_matrix(1.0, 1.0, 0.3);
        assert!(max_dev(&m, &dense_expm(1.0, 1.0, 0.3)) <= 1e-13);
    }

    #[test]
    fn matches_dense_exponential_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let alpha = rng.gen_range(0.1..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let l2 = rng.gen_range(0.0..200.0);
            let t = rng.gen_range(-1.0..1.0);
            assert!(max_dev(&mode_matrix(alpha, l2, t), &dense_expm(alpha, l2, t)) <= 1e-12);
        }
    }

    #[test]
    fn group_property_and_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let alpha = rng.gen_range(-2.0..2.0);
            let l2 = rng.gen_range(0.01..1e4);
            let (t, s) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let prod = matmul(&mode_matrix(alpha, l2, t), &mode_matrix(alpha, l2, s));
            assert!(max_dev(&prod, &mode_matrix(alpha, l2, t + s)) <= 1e-12);

            let fwd = mode_matrix(alpha, l2, t);
            let back = mode_matrix(alpha, l2, -t);
            assert!((back[0][0].conj() - fwd[0][0]).norm() <= 1e-13);
            assert!((back[0][1].conj() + fwd[0][1]).norm() <= 1e-13);
            assert!((back[1][0].conj() + fwd[1][0]).norm() <= 1e-13 * l2.max(1.0));
            assert!((back[1][1].conj() - fwd[1][1]).norm() <= 1e-13);
        }
    }

    #[test]
    fn spectral_radius_bounds() {
        let g = Grid2D::new(-8.0, -8.0, 16.0, 16.0, 64).unwrap();
        for t in [0.01, 0.3, 1.7, -2.5] {
            let e11 = ExpElement::build(&g, 1.0, Block::E11, t).unwrap();
            let e12 = ExpElement::build(&g, 1.0, Block::E12, t).unwrap();
            let e22 = ExpElement::build(&g, 1.0, Block::E22, t).unwrap();
            assert!(e11.eigenvalues().iter().all(|z| z.norm() <= 1.0 + 1e-14));
            assert!(e22.eigenvalues().iter().all(|z| z.norm() <= 1.0 + 1e-14));
            assert!(e12
                .eigenvalues()
                .iter()
                .zip(g.lambda2_table())
                .all(|(z, l2): (&C, &f64)| l2.sqrt() * z.norm() <= 1.0 + 1e-14));
        }
    }

    #[test]
    fn e21_is_laplacian_of_e12() {
        let g = Grid2D::new(-1.0, -1.0, 2.0, 2.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Field::sample(&g, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let e12 = ExpElement::build(&g, 0.7, Block::E12, 0.4).unwrap();
        let e21 = ExpElement::build(&g, 0.7, Block::E21, 0.4).unwrap();
        let lhs = e21.apply(&f).unwrap();
        let rhs = laplacian(&e12.apply(&f).unwrap());
        assert!(lhs.sub(&rhs).unwrap().linf() <= 1e-12 * lhs.linf().max(1.0));
        assert_eq!(lhs.repr(), Repr::Physical);

        let e11 = ExpElement::build(&g, 0.7, Block::E11, 0.0).unwrap();
        assert!(e11.apply(&f).unwrap().sub(&f).unwrap().linf() <= 1e-14);
    }

    #[test]
    fn single_mode_is_scaled_by_its_eigenvalue() {
        let g = Grid2D::new(0.0, 0.0, 1.0, 1.0, 8).unwrap();
        let e = ExpElement::build(&g, 2.0, Block::E22, 0.25).unwrap();
        let out = e.apply(&Field::mode(&g, 3, 2, C::new(1.0, 0.0))).unwrap();
        let idx = g.index(3, 2);
        for (i, z) in out.data().iter().enumerate() {
            let want = if i == idx {
                e.eigenvalues()[idx]
            } else {
                C::new(0.0, 0.0)
            };
            assert_eq!(*z, want);
        }
    }

    #[test]
    fn quadratic_invariant_of_linear_flow() {
        let g = Grid2D::new(-2.0, -3.0, 4.0, 5.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = Field::sample(&g, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let v = Field::sample(&g, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let table = ExpTable::new(&g, -1.4).unwrap();
        let tau = 0.23;
        let mut nu = table.get(Block::E11, tau).apply(&u).unwrap();
        nu.axpy(C::new(1.0, 0.0), &table.get(Block::E12, tau).apply(&v).unwrap())
            .unwrap();
        let mut nv = table.get(Block::E21, tau).apply(&u).unwrap();
        nv.axpy(C::new(1.0, 0.0), &table.get(Block::E22, tau).apply(&v).unwrap())
            .unwrap();
        let before = semi_h1_sq(&u) + norms(&v).l2.powi(2);
        let after = semi_h1_sq(&nu) + norms(&nv).l2.powi(2);
        assert!(((after - before) / before).abs() <= 1e-11);
    }

    #[test]
    fn cache_is_keyed_by_exact_time() {
        let g = Grid2D::new(0.0, 0.0, 1.0, 1.0, 8).unwrap();
        let table = ExpTable::new(&g, 1.0).unwrap();
        let a = table.get(Block::E12, 0.1);
        let b = table.get(Block::E12, 0.1);
        assert!(Arc::ptr_eq(&a, &b));
        let c = table.get(Block::E12, -0.1);
        assert!(!Arc::ptr_eq(&a, &c));
        assert_eq!(table.len(), 2);
        let tau = 0.1;
        let half = table.get(Block::E12, tau / 2.0);
        let third = table.get(Block::E12, tau / 3.0);
        assert!(!Arc::ptr_eq(&half, &third));
        assert_eq!(half.t(), 0.05);
        assert_eq!(table.len(), 4);
    }

    #[test]
    fn alpha_zero_is_rejected() {
        let g = Grid2D::new(0.0, 0.0, 1.0, 1.0, 8).unwrap();
        assert!(ExpElement::build(&g, 0.0, Block::E11, 0.1).is_err());
        assert!(ExpTable::new(&g, 0.0).is_err());
    }
}
