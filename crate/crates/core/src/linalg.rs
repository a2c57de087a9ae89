//! Dense square matrices and symmetric eigendecomposition.
//!
//! The eigensolver is the classic Householder tridiagonalization followed by
//! the implicit QL algorithm with Wilkinson shifts (EISPACK `tred2`/`tql2`).

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Absolute asymmetry tolerance, scaled by `max(1, max|a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-8;

const MAX_QL_ITERATIONS: usize = 64;

/// Row-major square matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// `data` is row-major and must hold `n * n` values.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let dst = &mut out.data[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(other.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_diagonal(&mut self, value: f64) {
        for i in 0..self.n {
            self[(i, i)] += value;
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// First `(row, col)` where `|a_ij - a_ji|` exceeds `tol * max(1, max|a|)`.
    pub fn asymmetry(&self, tol: f64) -> Option<(usize, usize)> {
        let limit = tol * self.max_abs().max(1.0);
        for i in 0..self.n {
            for j in i + 1..self.n {
                let (a, b) = (self[(i, j)], self[(j, i)]);
                if !((a - b).abs() <= limit) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrize(&mut self) {
        for i in 0..self.n {
            for j in i + 1..self.n {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

/// `A = Q diag(values) Qᵀ`, eigenvalues ascending, eigenvectors in the
/// columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// Decomposes a symmetric matrix. Only the lower triangle is read.
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.dim();
        if n == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: Matrix::zeros(0),
            });
        }
        if let Some(index) = a.as_slice().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut v = a.clone();
        for i in 0..n {
            for j in i + 1..n {
                v[(i, j)] = v[(j, i)];
            }
        }
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        tred2(&mut v, &mut d, &mut e);
        tql2(&mut v, &mut d, &mut e)?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
        let values = order.iter().map(|&i| d[i]).collect();
        let mut vectors = Matrix::zeros(n);
        for (new_col, &old_col) in order.iter().enumerate() {
            for r in 0..n {
                vectors[(r, new_col)] = v[(r, old_col)];
            }
        }
        Ok(Self { values, vectors })
    }

    /// `Q diag(f(λ)) Qᵀ`, symmetric by construction.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let q = &self.vectors;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = 0.0;
                for (k, &w) in mapped.iter().enumerate() {
                    s += q[(i, k)] * w * q[(j, k)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Negative eigenvalues (round-off on PSD input) are clamped to zero.
pub fn matrix_sqrt_psd(a: &Matrix) -> Result<Matrix> {
    if let Some((row, col)) = a.asymmetry(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric { row, col });
    }
    let mut sym = a.clone();
    sym.symmetrize();
    let eig = SymmetricEigen::new(&sym)?;
    Ok(eig.reconstruct_with(|l| libm::sqrt(l.max(0.0))))
}

fn tred2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = libm::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    // accumulate transformations
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tql2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::NoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = libm::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[l + 2..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = libm::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * h;
                        v[(k, i)] = c * v[(k, i)] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let b = Matrix::from_row_major(n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        b.matmul(&b.transpose()).unwrap()
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        let diff = a.sub(b).unwrap().frobenius_norm();
        assert!(diff <= tol, "difference {diff} > {tol}");
    }

    #[test]
    fn sqrt_of_identity() {
        let i = Matrix::identity(4);
        assert_close(&matrix_sqrt_psd(&i).unwrap(), &i, 1e-14);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = matrix_sqrt_psd(&Matrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert_close(&s, &Matrix::from_diagonal(&[2.0, 3.0]), 1e-14);
    }

    #[test]
    fn sqrt_reconstructs_random_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_psd(6, &mut rng);
        let s = matrix_sqrt_psd(&a).unwrap();
        let ss = s.matmul(&s).unwrap();
        assert_close(&ss, &a, 1e-6 * (1.0 + a.frobenius_norm()));
        assert!(s.asymmetry(0.0).is_none());
    }

    #[test]
    fn sqrt_rejects_asymmetric() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert_eq!(
            matrix_sqrt_psd(&a),
            Err(Error::NotSymmetric { row: 0, col: 1 })
        );
    }

    #[test]
    fn sqrt_clamps_negative_eigenvalues() {
        // eigenvalues 3 and -1
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let s = matrix_sqrt_psd(&a).unwrap();
        let eig = SymmetricEigen::new(&s).unwrap();
        assert!(eig.min_value().abs() < 1e-12);
        assert!((eig.max_value() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn eigen_decomposition_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [1, 2, 3, 10, 33] {
            let a = random_psd(n, &mut rng);
            let eig = SymmetricEigen::new(&a).unwrap();
            let q = &eig.vectors;
            assert_close(
                &q.transpose().matmul(q).unwrap(),
                &Matrix::identity(n),
                1e-10,
            );
            assert_close(&eig.reconstruct_with(|l| l), &a, 1e-10 * (1.0 + a.frobenius_norm()));
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn eigen_of_zero_and_rank_deficient() {
        let z = Matrix::zeros(5);
        let eig = SymmetricEigen::new(&z).unwrap();
        assert!(eig.values.iter().all(|&l| l == 0.0));

        let u = [1.0, 2.0, 3.0];
        let mut outer = Matrix::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                outer[(i, j)] = u[i] * u[j];
            }
        }
        let eig = SymmetricEigen::new(&outer).unwrap();
        assert!((eig.max_value() - 14.0).abs() < 1e-12);
        assert!(eig.min_value().abs() < 1e-12);
    }

    #[test]
    fn eigen_rejects_nan() {
        let mut a = Matrix::identity(2);
        a[(1, 0)] = f64::NAN;
        assert!(matches!(SymmetricEigen::new(&a), Err(Error::NonFinite { .. })));
    }
}
