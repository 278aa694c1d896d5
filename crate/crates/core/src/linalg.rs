//! Dense complex linear algebra for the small (N <= 8) matrices used throughout
//! the receiver: Hermitian handling, Cholesky factorization and the partitioned
//! inverse of a signal/noise block covariance.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used when validating Hermitian inputs.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Cholesky pivots below `PIVOT_FLOOR * trace / N` are rejected.
pub const PIVOT_FLOOR: f64 = 1e-12;
/// Diagonal loading, relative to `trace / N`, applied by [`cholesky_with_jitter`].
pub const JITTER: f64 = 1e-10;

/// Row-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidParameter("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    /// Real-valued convenience constructor, mostly for tests and fixtures.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// Single-column matrix from a vector.
    pub fn column(v: &[Complex64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn col(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let src = rhs.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mat_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * factor).collect() }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Largest `|x_ij - conj(x_ji)|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        self.is_square() && self.hermitian_asymmetry() <= rel_tol * self.max_abs().max(f64::MIN_POSITIVE)
    }

    /// Extracts the rows and columns listed, preserving their order.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Self {
        let mut out = Self::zeros(row_idx.len(), col_idx.len());
        for (oi, &i) in row_idx.iter().enumerate() {
            for (oj, &j) in col_idx.iter().enumerate() {
                out[(oi, oj)] = self[(i, j)];
            }
        }
        out
    }

    /// Contiguous block starting at `(r0, c0)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        let rows: Vec<usize> = (r0..r0 + nr).collect();
        let cols: Vec<usize> = (c0..c0 + nc).collect();
        self.submatrix(&rows, &cols)
    }

    /// Assembles the Hermitian-partitioned matrix `[[a, b], [b^H, c]]`.
    pub fn assemble_hermitian_blocks(a: &Self, b: &Self, c: &Self) -> Result<Self> {
        let (ns, nn) = (a.rows, c.rows);
        if !a.is_square() || !c.is_square() || b.rows != ns || b.cols != nn {
            return Err(Error::DimensionMismatch(format!(
                "blocks {}x{}, {}x{}, {}x{}",
                a.rows, a.cols, b.rows, b.cols, c.rows, c.cols
            )));
        }
        let n = ns + nn;
        let mut out = Self::zeros(n, n);
        for i in 0..ns {
            for j in 0..ns {
                out[(i, j)] = a[(i, j)];
            }
            for j in 0..nn {
                out[(i, ns + j)] = b[(i, j)];
                out[(ns + j, i)] = b[(i, j)].conj();
            }
        }
        for i in 0..nn {
            for j in 0..nn {
                out[(ns + i, ns + j)] = c[(i, j)];
            }
        }
        Ok(out)
    }

    fn check_same_shape(&self, rhs: &Self) {
        assert!(
            self.rows == rhs.rows && self.cols == rhs.cols,
            "shape mismatch: {}x{} vs {}x{}",
            self.rows,
            self.cols,
            rhs.rows,
            rhs.cols
        );
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.check_same_shape(rhs);
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.check_same_shape(rhs);
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect();
        ComplexMatrix { rows: self.rows, cols: self.cols, data }
    }
}

/// Panics on inner-dimension mismatch; use [`ComplexMatrix::matmul`] for a checked product.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product dimension mismatch")
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Conjugated inner product `a^H b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Quadratic form `x^H M y`.
pub fn quadratic_form(x: &[Complex64], m: &ComplexMatrix, y: &[Complex64]) -> Complex64 {
    let my = m.mat_vec(y).expect("quadratic form dimension mismatch");
    inner(x, &my)
}

/// Returns `(x + x^H) / 2`; the result is exactly Hermitian and the map is idempotent.
pub fn hermitian_symmetrize(x: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !x.is_square() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", x.rows, x.cols)));
    }
    let n = x.rows;
    let mut out = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = Complex64::new(x[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let z = (x[(i, j)] + x[(j, i)].conj()) * 0.5;
            out[(i, j)] = z;
            out[(j, i)] = z.conj();
        }
    }
    Ok(out)
}

fn validate_hermitian(sigma: &ComplexMatrix) -> Result<()> {
    if !sigma.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} covariance is not square",
            sigma.rows, sigma.cols
        )));
    }
    if !sigma.is_finite() {
        return Err(Error::InvalidParameter("covariance has non-finite entries".into()));
    }
    if !sigma.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::NotHermitian { asymmetry: sigma.hermitian_asymmetry() });
    }
    Ok(())
}

/// Lower-triangular `L` with `L L^H = sigma`.
///
/// Fails with [`Error::NotPositiveDefinite`] when a pivot drops to
/// `PIVOT_FLOOR * trace / N` or below; no regularization is applied.
pub fn cholesky_factor(sigma: &ComplexMatrix) -> Result<ComplexMatrix> {
    validate_hermitian(sigma)?;
    let n = sigma.rows;
    if n == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    let mean_diag = sigma.trace().re / n as f64;
    let floor = PIVOT_FLOOR * mean_diag;
    if !(mean_diag > 0.0) {
        return Err(Error::NotPositiveDefinite { index: 0, pivot: mean_diag, floor: 0.0 });
    }
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = sigma[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > floor) {
            return Err(Error::NotPositiveDefinite { index: j, pivot, floor });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut acc = sigma[(i, j)];
            for k in 0..j {
                acc -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = acc / ljj;
        }
    }
    Ok(l)
}

/// Cholesky after loading the diagonal with `JITTER * trace / N`.
pub fn cholesky_with_jitter(sigma: &ComplexMatrix) -> Result<ComplexMatrix> {
    cholesky_factor(&add_jitter(sigma))
}

/// Returns `sigma + JITTER * (trace / N) * I`.
pub fn add_jitter(sigma: &ComplexMatrix) -> ComplexMatrix {
    let n = sigma.rows.max(1);
    let eps = JITTER * sigma.trace().re.abs() / n as f64;
    let mut out = sigma.clone();
    for i in 0..sigma.rows.min(sigma.cols) {
        out[(i, i)] += Complex64::new(eps, 0.0);
    }
    out
}

/// Inverse of a lower-triangular matrix by forward substitution.
fn lower_triangular_inverse(l: &ComplexMatrix) -> ComplexMatrix {
    let n = l.rows;
    let mut inv = ComplexMatrix::zeros(n, n);
    for col in 0..n {
        for i in col..n {
            let mut acc = if i == col { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
            for k in col..i {
                acc -= l[(i, k)] * inv[(k, col)];
            }
            inv[(i, col)] = acc / l[(i, i)];
        }
    }
    inv
}

/// Inverse of a Hermitian positive definite matrix via its Cholesky factor.
pub fn hpd_inverse(sigma: &ComplexMatrix) -> Result<ComplexMatrix> {
    let l = cholesky_factor(sigma)?;
    inverse_from_cholesky(&l)
}

pub fn inverse_from_cholesky(l: &ComplexMatrix) -> Result<ComplexMatrix> {
    let linv = lower_triangular_inverse(l);
    hermitian_symmetrize(&(&linv.adjoint() * &linv))
}

/// `ln |sigma|` for Hermitian positive definite `sigma`.
pub fn hpd_log_det(sigma: &ComplexMatrix) -> Result<f64> {
    let l = cholesky_factor(sigma)?;
    Ok(log_det_from_cholesky(&l))
}

pub fn log_det_from_cholesky(l: &ComplexMatrix) -> f64 {
    (0..l.rows).map(|i| 2.0 * l[(i, i)].re.ln()).sum()
}

/// Blocks of `sigma^{-1} = [[a, b], [b^H, c]]` for a signal/noise partition.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInverse {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
    pub c: ComplexMatrix,
}

impl BlockInverse {
    pub fn n_s(&self) -> usize {
        self.a.rows
    }

    pub fn n_n(&self) -> usize {
        self.c.rows
    }

    pub fn assemble(&self) -> ComplexMatrix {
        ComplexMatrix::assemble_hermitian_blocks(&self.a, &self.b, &self.c)
            .expect("block inverse blocks are consistent by construction")
    }
}

/// Partitioned inverse through the Schur complement of the noise block:
///
/// `A = (S_ss - S_sn S_nn^-1 S_sn^H)^-1`, `B = -A S_sn S_nn^-1`,
/// `C = S_nn^-1 + S_nn^-1 S_sn^H A S_sn S_nn^-1`.
///
/// With `n_n = 0` this is `A = S_ss^-1` and `B`, `C` are empty.
pub fn block_inverse(sigma: &ComplexMatrix, n_s: usize, n_n: usize) -> Result<BlockInverse> {
    validate_hermitian(sigma)?;
    if sigma.rows != n_s + n_n || n_s == 0 {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} covariance partitioned as ({n_s}, {n_n})",
            sigma.rows, sigma.cols
        )));
    }
    let s_ss = sigma.block(0, 0, n_s, n_s);
    if n_n == 0 {
        return Ok(BlockInverse {
            a: hpd_inverse(&s_ss)?,
            b: ComplexMatrix::zeros(n_s, 0),
            c: ComplexMatrix::zeros(0, 0),
        });
    }
    let s_sn = sigma.block(0, n_s, n_s, n_n);
    let s_nn = sigma.block(n_s, n_s, n_n, n_n);
    let s_nn_inv = hpd_inverse(&s_nn)?;
    // K = S_sn S_nn^-1
    let k = &s_sn * &s_nn_inv;
    let schur = hermitian_symmetrize(&(&s_ss - &(&k * &s_sn.adjoint())))?;
    let a = hpd_inverse(&schur)?;
    let b = (&a * &k).scale_real(-1.0);
    let c = hermitian_symmetrize(&(&s_nn_inv + &(&(&k.adjoint() * &a) * &k)))?;
    Ok(BlockInverse { a, b, c })
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian PSD matrix, by power iteration.
pub fn dominant_eigenpair(m: &ComplexMatrix) -> Result<(f64, Vec<Complex64>)> {
    validate_hermitian(m)?;
    let n = m.rows;
    if n == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    // Start from the column with the largest diagonal so the iterate is never orthogonal
    // to the dominant direction for rank-one inputs.
    let start = (0..n)
        .max_by(|&i, &j| m[(i, i)].re.total_cmp(&m[(j, j)].re))
        .unwrap_or(0);
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| m[(i, start)] + if i == start { Complex64::new(1e-3, 0.0) } else { Complex64::new(1e-6 * (i + 1) as f64, 0.0) })
        .collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..2000 {
        let mut w = m.mat_vec(&v)?;
        let next = inner(&v, &w).re;
        let norm = vec_norm(&w);
        if norm == 0.0 {
            return Ok((0.0, v));
        }
        w.iter_mut().for_each(|z| *z /= norm);
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        v = w;
        let settled = (next - lambda).abs() <= 1e-15 * next.abs() && delta < 1e-12;
        lambda = next;
        if settled {
            break;
        }
    }
    Ok((lambda, v))
}

/// Smallest eigenvalue of a Hermitian PSD matrix, by power iteration on `lambda_max I - m`.
pub fn smallest_eigenvalue(m: &ComplexMatrix) -> Result<f64> {
    let (lmax, _) = dominant_eigenpair(m)?;
    let mut shifted = m.scale_real(-1.0);
    for i in 0..m.rows {
        shifted[(i, i)] += Complex64::new(lmax, 0.0);
    }
    let (mu, _) = dominant_eigenpair(&shifted)?;
    Ok(lmax - mu)
}

pub fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt()
}

fn normalize(v: &mut [Complex64]) {
    let n = vec_norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
}
