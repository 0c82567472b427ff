//! Small dense linear algebra for K x K covariance blocks.
//!
//! Complex Hermitian matrices are handled through their real representation
//! `[[A, -B], [B, A]]` for `A + iB`, so one real Cholesky routine serves both
//! pyramid modes.

use ndarray::{s, Array2};
use num_complex::Complex;

use crate::error::{CwmiError, Result};
use crate::scalar::Scalar;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
///
/// Only the lower triangle of `a` is read.
pub fn cholesky<T: Scalar>(a: &Array2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d = d - l[[j, k]] * l[[j, k]];
        }
        if !(d > T::zero()) || !d.is_finite() {
            return Err(CwmiError::NotPositiveDefinite { minor: j + 1 });
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v = v - l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = v / d;
        }
    }
    Ok(l)
}

fn add_diagonal<T: Scalar>(a: &Array2<T>, eps: T) -> Array2<T> {
    let mut out = a.clone();
    for i in 0..out.nrows() {
        out[[i, i]] = out[[i, i]] + eps;
    }
    out
}

/// `log det(a + eps I)` for a real symmetric positive (semi)definite matrix.
pub fn logdet_spd<T: Scalar>(a: &Array2<T>, eps: T) -> Result<T> {
    let l = cholesky(&add_diagonal(a, eps))?;
    Ok(l.diag().iter().map(|d| d.ln()).sum::<T>() * T::lit(2.0))
}

/// Real representation `[[A, -B], [B, A]]` of `A + iB`.
pub fn real_representation<T: Scalar>(c: &Array2<Complex<T>>) -> Array2<T> {
    let (r, k) = c.dim();
    let mut out = Array2::<T>::zeros((2 * r, 2 * k));
    for ((i, j), v) in c.indexed_iter() {
        out[[i, j]] = v.re;
        out[[i + r, j + k]] = v.re;
        out[[i + r, j]] = v.im;
        out[[i, j + k]] = -v.im;
    }
    out
}

/// Largest entry of `|c - c^H|`.
pub fn hermitian_defect<T: Scalar>(c: &Array2<Complex<T>>) -> T {
    let mut worst = T::zero();
    for ((i, j), v) in c.indexed_iter() {
        worst = worst.max((*v - c[[j, i]].conj()).norm());
    }
    worst
}

/// `log det(c + eps I)` for a Hermitian positive (semi)definite matrix.
///
/// The real representation has determinant `|det c|^2`, so its log-determinant
/// is halved. Fails with [`CwmiError::NotHermitian`] when `c` is asymmetric
/// beyond `1e-8` (relative to its largest entry, floored at 1).
pub fn logdet_hpd<T: Scalar>(c: &Array2<Complex<T>>, eps: T) -> Result<T> {
    let scale = c.iter().fold(T::one(), |m, v| m.max(v.norm()));
    let defect = hermitian_defect(c);
    if defect > T::lit(1e-8) * scale {
        return Err(CwmiError::NotHermitian {
            asymmetry: defect.to_f64_lossy(),
        });
    }
    let real = real_representation(c);
    Ok(logdet_spd(&real, eps)? / T::lit(2.0))
}

/// Inverse of a symmetric positive definite matrix through its Cholesky factor.
pub fn spd_inverse<T: Scalar>(a: &Array2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    let l = cholesky(a)?;
    // L^{-1} by forward substitution, then A^{-1} = L^{-T} L^{-1}.
    let mut linv = Array2::<T>::zeros((n, n));
    for col in 0..n {
        for i in col..n {
            let mut v = if i == col { T::one() } else { T::zero() };
            for k in col..i {
                v = v - l[[i, k]] * linv[[k, col]];
            }
            linv[[i, col]] = v / l[[i, i]];
        }
    }
    let mut inv = linv.t().dot(&linv);
    symmetrize(&mut inv);
    Ok(inv)
}

/// Inverse of a Hermitian positive definite matrix via its real representation.
pub fn hpd_inverse<T: Scalar>(c: &Array2<Complex<T>>) -> Result<Array2<Complex<T>>> {
    let k = c.nrows();
    let inv = spd_inverse(&real_representation(c))?;
    let top = inv.slice(s![..k, ..k]);
    let bottom = inv.slice(s![k.., ..k]);
    let mut out = Array2::from_shape_fn((k, k), |(i, j)| Complex::new(top[[i, j]], bottom[[i, j]]));
    hermitize(&mut out);
    Ok(out)
}

pub fn symmetrize<T: Scalar>(a: &mut Array2<T>) {
    let n = a.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (a[[i, j]] + a[[j, i]]) * half;
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
}

/// Replaces `c` by its Hermitian part `(c + c^H) / 2`.
pub fn hermitize<T: Scalar>(c: &mut Array2<Complex<T>>) {
    let n = c.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        c[[i, i]] = Complex::new(c[[i, i]].re, T::zero());
        for j in (i + 1)..n {
            let v = (c[[i, j]] + c[[j, i]].conj()).scale(half);
            c[[i, j]] = v;
            c[[j, i]] = v.conj();
        }
    }
}

/// Conjugate transpose.
pub fn adjoint<T: Scalar>(c: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    c.t().mapv(|v| v.conj())
}

pub fn complex_identity<T: Scalar>(n: usize) -> Array2<Complex<T>> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            Complex::new(T::one(), T::zero())
        } else {
            Complex::new(T::zero(), T::zero())
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identity_logdet_is_zero() {
        let i = Array2::<f64>::eye(4);
        assert_eq!(logdet_spd(&i, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_logdet() {
        let d = Array2::<f64>::eye(4) * 2.0;
        assert!((logdet_spd(&d, 0.0).unwrap() - 4.0 * 2f64.ln()).abs() < 1e-14);
        let c = d.mapv(|v| Complex::new(v, 0.0));
        assert!((logdet_hpd(&c, 0.0).unwrap() - 2.772588722239781).abs() < 1e-12);
    }

    #[test]
    fn failing_minor_is_named() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 1.0, 2.0], [0.0, 2.0, 1.0]];
        match cholesky(&a) {
            Err(CwmiError::NotPositiveDefinite { minor }) => assert_eq!(minor, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let c = array![
            [Complex::new(1.0, 0.0), Complex::new(0.5, 0.1)],
            [Complex::new(0.5, 0.1), Complex::new(1.0, 0.0)]
        ];
        assert!(matches!(logdet_hpd(&c, 0.0), Err(CwmiError::NotHermitian { .. })));
    }

    #[test]
    fn hermitian_inverse() {
        let c = array![
            [Complex::new(2.0, 0.0), Complex::new(0.5, -0.3)],
            [Complex::new(0.5, 0.3), Complex::new(1.5, 0.0)]
        ];
        let inv = hpd_inverse(&c).unwrap();
        let prod = c.dot(&inv);
        for ((i, j), v) in prod.indexed_iter() {
            let target = if i == j { 1.0 } else { 0.0 };
            assert!((v - Complex::new(target, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn spd_inverse_round_trip() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let inv = spd_inverse(&a).unwrap();
        let prod = a.dot(&inv);
        for ((i, j), v) in prod.indexed_iter() {
            let target: f64 = if i == j { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-14);
        }
    }
}
