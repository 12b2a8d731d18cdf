//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;

use crate::{CMatrix, CVector};

/// Scalar field of a finite-alphabet least-squares problem.
///
/// The solvers in [`crate::detect`] run on either real or circularly-symmetric
/// complex data; the only place the two differ is the normalization of the
/// Gaussian density used by expectation propagation.
pub trait Field: ComplexField<RealField = f64> + Copy {
    /// Exponent scale of the Gaussian density: `1/2` for real, `1` for complex.
    const GAUSS_SCALE: f64;

    fn from_complex(c: Complex64) -> Self;
    fn to_complex(self) -> Complex64;
}

impl Field for f64 {
    const GAUSS_SCALE: f64 = 0.5;

    fn from_complex(c: Complex64) -> Self {
        c.re
    }

    fn to_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Field for Complex64 {
    const GAUSS_SCALE: f64 = 1.0;

    fn from_complex(c: Complex64) -> Self {
        c
    }

    fn to_complex(self) -> Complex64 {
        self
    }
}

/// Squared Frobenius norm.
pub fn frob_sq<T: Field>(m: &DMatrix<T>) -> f64 {
    m.iter().map(|x| x.modulus_squared()).sum()
}

/// Squared Euclidean norm of `c - g z`.
pub fn residual_sq<T: Field>(c: &DVector<T>, g: &DMatrix<T>, z: &[T]) -> f64 {
    let mut total = 0.0;
    for i in 0..g.nrows() {
        let mut acc = c[i];
        for (j, zj) in z.iter().enumerate() {
            acc -= g[(i, j)] * *zj;
        }
        total += acc.modulus_squared();
    }
    total
}

/// Stacks `[Re(v); Im(v)]`.
pub fn realify_vector(v: &CVector) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Block embedding `[[Re, -Im], [Im, Re]]`.
pub fn realify_matrix(m: &CMatrix) -> DMatrix<f64> {
    let (r, c) = m.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// Inverse of [`realify_vector`].
pub fn complexify_vector(v: &[f64]) -> Vec<Complex64> {
    let n = v.len() / 2;
    (0..n).map(|i| Complex64::new(v[i], v[i + n])).collect()
}

/// Squared pivot ratio below which a Cholesky factor is treated as singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-12;

/// Upper-triangular `R` with positive real diagonal such that `Rᴴ R = a`.
/// Returns `None` when `a` is not numerically positive definite.
pub fn cholesky_upper<T: Field>(a: DMatrix<T>) -> Option<DMatrix<T>> {
    let chol = nalgebra::Cholesky::new(a)?;
    let mut r = chol.l().adjoint();
    for i in 0..r.nrows() {
        r[(i, i)] = T::from_real(r[(i, i)].real());
    }
    let diag: Vec<f64> = r.diagonal().iter().map(|d| d.real()).collect();
    let top = diag.iter().cloned().fold(0.0, f64::max);
    // a pivot this small relative to the largest one means the matrix is
    // numerically singular even though the factorization went through
    if diag.iter().all(|&d| d.is_finite() && d > 0.0 && d * d >= SINGULAR_PIVOT_RATIO * top * top) {
        Some(r)
    } else {
        None
    }
}

/// Diagonal loading suggested when a Gram matrix fails to factor.
pub fn default_ridge<T: Field>(gram: &DMatrix<T>) -> f64 {
    let m = gram.nrows().max(1) as f64;
    let tr: f64 = gram.diagonal().iter().map(|d| d.real()).sum();
    let ridge = 1e-10 * tr / m;
    if ridge > 0.0 && ridge.is_finite() {
        ridge
    } else {
        1e-10
    }
}

/// Least-squares solution `X = argmin ‖b - a X‖_F` via the normal equations,
/// with diagonal loading when `aᴴa` is singular.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let gram = a.adjoint() * a;
    let rhs = a.adjoint() * b;
    let ridge = default_ridge(&gram);
    let mut load = 0.0;
    for _ in 0..12 {
        let mut g = gram.clone();
        for i in 0..g.nrows() {
            g[(i, i)] += Complex64::new(load, 0.0);
        }
        if let Some(chol) = nalgebra::Cholesky::new(g) {
            return chol.solve(&rhs);
        }
        load = if load == 0.0 { ridge } else { load * 100.0 };
    }
    CMatrix::zeros(a.ncols(), b.ncols())
}

/// Solves `rᴴ y = v` for upper-triangular `r` (forward substitution).
pub fn solve_upper_adjoint<T: Field>(r: &DMatrix<T>, v: &[T]) -> Vec<T> {
    let m = r.nrows();
    let mut y = vec![T::zero(); m];
    for i in 0..m {
        let mut acc = v[i];
        for k in 0..i {
            acc -= r[(k, i)].conjugate() * y[k];
        }
        y[i] = acc / r[(i, i)].conjugate();
    }
    y
}

/// Solves `r x = d` for upper-triangular `r` (back substitution).
pub fn solve_upper<T: Field>(r: &DMatrix<T>, d: &[T]) -> Vec<T> {
    let m = r.nrows();
    let mut x = vec![T::zero(); m];
    for i in (0..m).rev() {
        let mut acc = d[i];
        for k in i + 1..m {
            acc -= r[(i, k)] * x[k];
        }
        x[i] = acc / r[(i, i)];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realify_roundtrip() {
        let v = CVector::from_vec(vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 3.0)]);
        let r = realify_vector(&v);
        assert_eq!(r.as_slice(), &[1.0, 0.5, -2.0, 3.0]);
        assert_eq!(complexify_vector(r.as_slice()), v.as_slice());
    }

    #[test]
    fn realify_matrix_matches_product() {
        let m = CMatrix::from_fn(3, 2, |i, j| Complex64::new(i as f64 - 1.0, j as f64 * 0.5 + 0.25));
        let v = CVector::from_vec(vec![Complex64::new(0.3, -0.7), Complex64::new(-1.1, 0.2)]);
        let direct = realify_vector(&(&m * &v));
        let embedded = realify_matrix(&m) * realify_vector(&v);
        assert!((direct - embedded).norm() < 1e-14);
    }

    #[test]
    fn cholesky_upper_reconstructs() {
        let a = CMatrix::from_fn(4, 3, |i, j| Complex64::new(((3 * i + 7 * j) % 5) as f64 - 2.0, (i * i * j) as f64 * 0.5 - 1.0));
        let gram = a.adjoint() * &a;
        let r = cholesky_upper(gram.clone()).unwrap();
        assert!((r.adjoint() * &r - gram).norm() < 1e-10);
        for i in 0..3 {
            assert!(r[(i, i)].im == 0.0 && r[(i, i)].re > 0.0);
            for j in 0..i {
                assert_eq!(r[(i, j)], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn cholesky_upper_rejects_singular() {
        let a = CMatrix::from_fn(4, 2, |i, _| Complex64::new(i as f64 + 1.0, 0.5));
        assert!(cholesky_upper(a.adjoint() * &a).is_none());
    }

    #[test]
    fn triangular_solves() {
        let r = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, -1.0, 0.0, 3.0, 0.5, 0.0, 0.0, 1.5]);
        let x = [1.0, -2.0, 0.5];
        let d: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[(i, j)] * x[j]).sum()).collect();
        let back = solve_upper(&r, &d);
        for i in 0..3 {
            assert!((back[i] - x[i]).abs() < 1e-14);
        }
        let v: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[(j, i)] * x[j]).sum()).collect();
        let fwd = solve_upper_adjoint(&r, &v);
        for i in 0..3 {
            assert!((fwd[i] - x[i]).abs() < 1e-14);
        }
    }
}
