//! Sine pseudo-spectral discretization on a rectangle with homogeneous
//! Dirichlet data.
//!
//! A [`Field`] stores the `(N-1)^2` interior values of a complex grid
//! function; boundary values are implicitly zero. In physical
//! representation entry `(j, k)` is the value at
//! `(x_L + j h1, y_L + k h2)`; in spectral representation entry `(p, q)` is
//! the coefficient of `sin(mu_p (x - x_L)) sin(nu_q (y - y_L))`. Both use
//! 1-based indices `1..=N-1` in the accessors and row-major storage with the
//! first index (x-direction) outermost.
//!
//! The 2D discrete sine transform is computed as two passes of a DST-I, each
//! evaluated through a complex FFT of length `2N` on the odd extension.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Representation tag of a [`Field`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Repr {
    Physical,
    Spectral,
}

/// Uniform tensor grid on `(x_L, x_L + X) x (y_L, y_L + Y)` with `N`
/// intervals per axis.
pub struct Grid2D<T: Real> {
    x_lower: T,
    y_lower: T,
    x_extent: T,
    y_extent: T,
    n: usize,
    h1: T,
    h2: T,
    mu: Vec<T>,
    nu: Vec<T>,
    lambda2: Vec<T>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Real> fmt::Debug for Grid2D<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid2D")
            .field("x_lower", &self.x_lower)
            .field("y_lower", &self.y_lower)
            .field("x_extent", &self.x_extent)
            .field("y_extent", &self.y_extent)
            .field("n", &self.n)
            .finish()
    }
}

impl<T: Real> Grid2D<T> {
    /// Builds the grid and tabulates the sine frequencies and Laplacian
    /// eigenvalues. `n` must be even and at least 4.
    pub fn new(x_lower: T, y_lower: T, x_extent: T, y_extent: T, n: usize) -> Result<Arc<Self>> {
        if n < 4 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N must be even and >= 4, got {n}")));
        }
        if !(x_extent > T::zero()) || !(y_extent > T::zero()) {
            return Err(Error::InvalidGrid(format!(
                "extents must be positive, got X = {x_extent}, Y = {y_extent}"
            )));
        }
        if !x_lower.is_finite() || !y_lower.is_finite() || !x_extent.is_finite() || !y_extent.is_finite() {
            return Err(Error::InvalidGrid("domain corner and extents must be finite".into()));
        }
        let m = n - 1;
        let pi = T::PI();
        let mu: Vec<T> = (1..=m).map(|p| T::of_usize(p) * pi / x_extent).collect();
        let nu: Vec<T> = (1..=m).map(|q| T::of_usize(q) * pi / y_extent).collect();
        let mut lambda2 = Vec::with_capacity(m * m);
        for &mp in &mu {
            for &nq in &nu {
                lambda2.push(mp * mp + nq * nq);
            }
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * n);
        Ok(Arc::new(Self {
            x_lower,
            y_lower,
            x_extent,
            y_extent,
            n,
            h1: x_extent / T::of_usize(n),
            h2: y_extent / T::of_usize(n),
            mu,
            nu,
            lambda2,
            fft,
        }))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Interior points per axis, `N - 1`.
    pub fn interior(&self) -> usize {
        self.n - 1
    }

    /// Number of stored values per field, `(N - 1)^2`.
    pub fn len(&self) -> usize {
        self.interior() * self.interior()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x_lower(&self) -> T {
        self.x_lower
    }

    pub fn y_lower(&self) -> T {
        self.y_lower
    }

    pub fn x_extent(&self) -> T {
        self.x_extent
    }

    pub fn y_extent(&self) -> T {
        self.y_extent
    }

    pub fn h1(&self) -> T {
        self.h1
    }

    pub fn h2(&self) -> T {
        self.h2
    }

    /// `mu()[p - 1] = p pi / X`.
    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    /// `nu()[q - 1] = q pi / Y`.
    pub fn nu(&self) -> &[T] {
        &self.nu
    }

    /// `mu_p^2 + nu_q^2` for 1-based mode numbers.
    pub fn lambda2(&self, p: usize, q: usize) -> T {
        self.lambda2[self.index(p, q)]
    }

    /// All eigenvalue magnitudes in storage order.
    pub fn lambda2_table(&self) -> &[T] {
        &self.lambda2
    }

    /// Physical coordinates of node `(j, k)`, 1-based.
    pub fn node(&self, j: usize, k: usize) -> (T, T) {
        (
            self.x_lower + T::of_usize(j) * self.h1,
            self.y_lower + T::of_usize(k) * self.h2,
        )
    }

    /// Storage offset of 1-based `(j, k)` or `(p, q)`.
    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        debug_assert!((1..self.n).contains(&j) && (1..self.n).contains(&k));
        (j - 1) * self.interior() + (k - 1)
    }

    /// Quadrature weight `h1 h2` of the discrete inner product.
    pub fn cell_area(&self) -> T {
        self.h1 * self.h2
    }

    /// Parseval factor `XY / 4` relating `l2` and coefficient sums.
    pub fn parseval_weight(&self) -> T {
        self.x_extent * self.y_extent / T::lit(4.0)
    }

    /// Two grids are interchangeable when they describe the same nodes.
    pub fn same_as(&self, other: &Self) -> bool {
        std::ptr::eq(self, other)
            || (self.n == other.n
                && self.x_lower == other.x_lower
                && self.y_lower == other.y_lower
                && self.x_extent == other.x_extent
                && self.y_extent == other.y_extent)
    }

    /// Unnormalized 2D DST-I in place: `out_pq = sum_jk in_jk sin(pi j p / N) sin(pi k q / N)`.
    fn dst2_raw(&self, data: &mut [Complex<T>]) {
        let m = self.interior();
        dst_rows(data, m, self.fft.as_ref());
        transpose_square(data, m);
        dst_rows(data, m, self.fft.as_ref());
        transpose_square(data, m);
    }
}

/// DST-I along each contiguous row of length `m`, via a length `2(m+1)` FFT
/// of the odd extension `[0, x, 0, -rev(x)]`.
fn dst_rows<T: Real>(data: &mut [Complex<T>], m: usize, fft: &dyn Fft<T>) {
    let len = 2 * (m + 1);
    let mut buf = vec![Complex::<T>::zero(); len * m];
    for (row, ext) in data.chunks_exact(m).zip(buf.chunks_exact_mut(len)) {
        for (j, &x) in row.iter().enumerate() {
            ext[j + 1] = x;
            ext[len - 1 - j] = -x;
        }
    }
    fft.process(&mut buf);
    // FFT of the odd extension is -2i times the sine sum.
    let half_i = Complex::new(T::zero(), T::lit(0.5));
    for (row, ext) in data.chunks_exact_mut(m).zip(buf.chunks_exact(len)) {
        for (p, out) in row.iter_mut().enumerate() {
            *out = ext[p + 1] * half_i;
        }
    }
}

fn transpose_square<T: Copy>(data: &mut [T], m: usize) {
    for i in 0..m {
        for j in (i + 1)..m {
            data.swap(i * m + j, j * m + i);
        }
    }
}

/// Complex grid function on the interior nodes of a [`Grid2D`].
#[derive(Clone)]
pub struct Field<T: Real> {
    grid: Arc<Grid2D<T>>,
    repr: Repr,
    data: Vec<Complex<T>>,
}

impl<T: Real> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("n", &self.grid.n())
            .field("repr", &self.repr)
            .field("linf", &self.linf())
            .finish()
    }
}

impl<T: Real> PartialEq for Field<T> {
    fn eq(&self, other: &Self) -> bool {
        self.repr == other.repr && self.grid.same_as(&other.grid) && self.data == other.data
    }
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Arc<Grid2D<T>>, repr: Repr) -> Self {
        Self {
            grid: Arc::clone(grid),
            repr,
            data: vec![Complex::zero(); grid.len()],
        }
    }

    pub fn from_data(grid: &Arc<Grid2D<T>>, repr: Repr, data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field data has {} entries, grid expects {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: Arc::clone(grid),
            repr,
            data,
        })
    }

    /// Samples `f(x, y)` at the interior nodes.
    pub fn sample(grid: &Arc<Grid2D<T>>, mut f: impl FnMut(T, T) -> Complex<T>) -> Self {
        let m = grid.interior();
        let mut data = Vec::with_capacity(grid.len());
        for j in 1..=m {
            for k in 1..=m {
                let (x, y) = grid.node(j, k);
                data.push(f(x, y));
            }
        }
        Self {
            grid: Arc::clone(grid),
            repr: Repr::Physical,
            data,
        }
    }

    /// Spectral field holding the single mode `(p, q)`.
    pub fn mode(grid: &Arc<Grid2D<T>>, p: usize, q: usize, coeff: Complex<T>) -> Self {
        let mut f = Self::zeros(grid, Repr::Spectral);
        let idx = grid.index(p, q);
        f.data[idx] = coeff;
        f
    }

    pub fn grid(&self) -> &Arc<Grid2D<T>> {
        &self.grid
    }

    pub fn repr(&self) -> Repr {
        self.repr
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    /// Value at 1-based `(j, k)` (or mode `(p, q)` in spectral repr).
    pub fn get(&self, j: usize, k: usize) -> Complex<T> {
        self.data[self.grid.index(j, k)]
    }

    pub fn expect_repr(&self, expected: Repr) -> Result<()> {
        if self.repr == expected {
            Ok(())
        } else {
            Err(Error::ReprMismatch {
                expected,
                found: self.repr,
            })
        }
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::GridMismatch);
        }
        other.expect_repr(self.repr)
    }

    /// Converts to spectral representation (no-op when already spectral).
    pub fn into_spectral(self) -> Self {
        match self.repr {
            Repr::Spectral => self,
            Repr::Physical => transform(self, Repr::Spectral),
        }
    }

    /// Converts to physical representation (no-op when already physical).
    pub fn into_physical(self) -> Self {
        match self.repr {
            Repr::Physical => self,
            Repr::Spectral => transform(self, Repr::Physical),
        }
    }

    pub fn into_repr(self, repr: Repr) -> Self {
        match repr {
            Repr::Physical => self.into_physical(),
            Repr::Spectral => self.into_spectral(),
        }
    }

    pub fn scale(&mut self, c: Complex<T>) {
        for z in &mut self.data {
            *z = *z * c;
        }
    }

    pub fn scaled(&self, c: Complex<T>) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: Complex<T>, x: &Self) -> Result<()> {
        self.check_compatible(x)?;
        for (y, &xv) in self.data.iter_mut().zip(&x.data) {
            *y = *y + a * xv;
        }
        Ok(())
    }

    /// `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(Complex::new(-T::one(), T::zero()), other)?;
        Ok(out)
    }

    pub fn map(&self, mut f: impl FnMut(Complex<T>) -> Complex<T>) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            repr: self.repr,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Largest modulus among the stored values.
    pub fn linf(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Writes `j,k,Re,Im` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "j,k,re,im")?;
        let m = self.grid.interior();
        for j in 1..=m {
            for k in 1..=m {
                let z = self.get(j, k);
                writeln!(out, "{j},{k},{:.16e},{:.16e}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

fn transform<T: Real>(mut f: Field<T>, to: Repr) -> Field<T> {
    f.grid.clone().dst2_raw(&mut f.data);
    if to == Repr::Spectral {
        let n = T::of_usize(f.grid.n());
        let norm = T::lit(4.0) / (n * n);
        for z in &mut f.data {
            *z = z.scale(norm);
        }
    }
    f.repr = to;
    f
}

/// `u_hat_pq = 4/N^2 sum_jk u_jk sin(mu_p (x_j - x_L)) sin(nu_q (y_k - y_L))`.
pub fn dst_forward<T: Real>(f: &Field<T>) -> Result<Field<T>> {
    f.expect_repr(Repr::Physical)?;
    Ok(transform(f.clone(), Repr::Spectral))
}

/// `u_jk = sum_pq u_hat_pq sin(mu_p (x_j - x_L)) sin(nu_q (y_k - y_L))`.
pub fn dst_inverse<T: Real>(f: &Field<T>) -> Result<Field<T>> {
    f.expect_repr(Repr::Spectral)?;
    Ok(transform(f.clone(), Repr::Physical))
}

/// Multiplies each spectral coefficient by `-lambda2`.
pub(crate) fn laplacian_spectral_in_place<T: Real>(f: &mut Field<T>) {
    debug_assert_eq!(f.repr, Repr::Spectral);
    let grid = Arc::clone(&f.grid);
    for (z, &l2) in f.data.iter_mut().zip(grid.lambda2_table()) {
        *z = z.scale(-l2);
    }
}

/// Spectral Laplacian. The output has the same representation as the input.
pub fn laplacian<T: Real>(f: &Field<T>) -> Field<T> {
    let repr = f.repr;
    let mut s = f.clone().into_spectral();
    laplacian_spectral_in_place(&mut s);
    s.into_repr(repr)
}

/// `(f, g)_l2 = h1 h2 sum f_jk conj(g_jk)` for physical fields.
pub fn inner_l2<T: Real>(f: &Field<T>, g: &Field<T>) -> Result<Complex<T>> {
    f.expect_repr(Repr::Physical)?;
    f.check_compatible(g)?;
    let sum = f
        .data
        .iter()
        .zip(&g.data)
        .fold(Complex::zero(), |acc: Complex<T>, (a, b)| acc + a * b.conj());
    Ok(sum.scale(f.grid.cell_area()))
}

/// The same inner product evaluated from spectral coefficients,
/// `XY/4 sum f_hat conj(g_hat)`.
pub fn inner_spectral<T: Real>(f: &Field<T>, g: &Field<T>) -> Result<Complex<T>> {
    f.expect_repr(Repr::Spectral)?;
    f.check_compatible(g)?;
    let sum = f
        .data
        .iter()
        .zip(&g.data)
        .fold(Complex::zero(), |acc: Complex<T>, (a, b)| acc + a * b.conj());
    Ok(sum.scale(f.grid.parseval_weight()))
}

/// Squared discrete semi-H1 norm, `XY/4 sum lambda2 |u_hat|^2`. Accepts either repr.
pub fn semi_h1_sq<T: Real>(f: &Field<T>) -> T {
    weighted_coeff_sum(f, |l2| l2)
}

/// Squared discrete semi-H2 norm, `XY/4 sum lambda2^2 |u_hat|^2`. Accepts either repr.
pub fn semi_h2_sq<T: Real>(f: &Field<T>) -> T {
    weighted_coeff_sum(f, |l2| l2 * l2)
}

fn weighted_coeff_sum<T: Real>(f: &Field<T>, w: impl Fn(T) -> T) -> T {
    let owned;
    let s = match f.repr {
        Repr::Spectral => f,
        Repr::Physical => {
            owned = f.clone().into_spectral();
            &owned
        }
    };
    let sum = s
        .data
        .iter()
        .zip(s.grid.lambda2_table())
        .fold(T::zero(), |acc, (z, &l2)| acc + w(l2) * z.norm_sqr());
    sum * s.grid.parseval_weight()
}

/// The discrete norms of a grid function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms<T> {
    pub l2: T,
    pub linf: T,
    pub semi_h1: T,
    pub semi_h2: T,
}

/// `l2`, `linf`, and the spectral seminorms of a field. Physical values are
/// used for `l2` and `linf` (transformed first when `f` is spectral).
pub fn norms<T: Real>(f: &Field<T>) -> Norms<T> {
    let phys = f.clone().into_physical();
    let l2_sq = phys.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()) * phys.grid.cell_area();
    Norms {
        l2: l2_sq.sqrt(),
        linf: phys.linf(),
        semi_h1: semi_h1_sq(f).sqrt(),
        semi_h2: semi_h2_sq(f).sqrt(),
    }
}

/// `(h1 h2 sum |f_jk|^p)^(1/p)`; `p < 1` is rejected.
pub fn lp_norm<T: Real>(f: &Field<T>, p: T) -> Result<T> {
    if !(p >= T::one()) {
        return Err(Error::InvalidParameter {
            name: "p",
            reason: format!("lp norm needs p >= 1, got {p}"),
        });
    }
    let phys = f.clone().into_physical();
    let sum = phys.data.iter().fold(T::zero(), |acc, z| acc + z.norm().powf(p));
    Ok((sum * phys.grid.cell_area()).powf(p.recip()))
}
