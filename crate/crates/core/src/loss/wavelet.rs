//! Per-subband distances used by the wavelet-domain ablation variants.
//!
//! Each function returns the mean over the pixels of one orientation plane
//! and the gradient of that mean with respect to the prediction
//! coefficients (`d/dRe + i d/dIm`).

use ndarray::{Array2, ArrayView2, Zip};
use num_complex::Complex;

use crate::scalar::Scalar;

/// Smoothing inside `sqrt(|z|^2 + s^2) - s`, which stands in for `|z|` so the
/// L1 and magnitude terms stay differentiable at zero.
pub const SMOOTH_ABS: f64 = 1e-9;

/// Data range of labels and probabilities, used by the SSIM stabilizers.
pub const SSIM_RANGE: f64 = 1.0;

fn smooth_abs<T: Scalar>(z: Complex<T>) -> (T, Complex<T>) {
    let s = T::lit(SMOOTH_ABS);
    let r = (z.norm_sqr() + s * s).sqrt();
    (r - s, z.unscale(r))
}

pub fn l1<T: Scalar>(y: ArrayView2<Complex<T>>, p: ArrayView2<Complex<T>>) -> (T, Array2<Complex<T>>) {
    let inv_m = T::one() / T::from_usize_lossy(p.len());
    let mut grad = Array2::from_elem(p.raw_dim(), Complex::new(T::zero(), T::zero()));
    let mut acc = T::zero();
    Zip::from(&mut grad).and(y).and(p).for_each(|g, &a, &b| {
        let (v, d) = smooth_abs(b - a);
        acc = acc + v;
        *g = d.scale(inv_m);
    });
    (acc * inv_m, grad)
}

pub fn l2<T: Scalar>(y: ArrayView2<Complex<T>>, p: ArrayView2<Complex<T>>) -> (T, Array2<Complex<T>>) {
    let inv_m = T::one() / T::from_usize_lossy(p.len());
    let two = T::lit(2.0);
    let mut grad = Array2::from_elem(p.raw_dim(), Complex::new(T::zero(), T::zero()));
    let mut acc = T::zero();
    Zip::from(&mut grad).and(y).and(p).for_each(|g, &a, &b| {
        let d = b - a;
        acc = acc + d.norm_sqr();
        *g = d.scale(two * inv_m);
    });
    (acc * inv_m, grad)
}

/// `1 - SSIM` between coefficient magnitudes, with one global window.
pub fn ssim<T: Scalar>(y: ArrayView2<Complex<T>>, p: ArrayView2<Complex<T>>) -> (T, Array2<Complex<T>>) {
    let m = T::from_usize_lossy(p.len());
    let two = T::lit(2.0);
    let c1 = T::lit((0.01 * SSIM_RANGE).powi(2));
    let c2 = T::lit((0.03 * SSIM_RANGE).powi(2));

    let a: Array2<T> = y.mapv(|z| smooth_abs(z).0);
    let (b, db): (Vec<T>, Vec<Complex<T>>) = p.iter().map(|&z| smooth_abs(z)).unzip();
    let b = Array2::from_shape_vec(p.raw_dim(), b).expect("shape");

    let mu_a = a.sum() / m;
    let mu_b = b.sum() / m;
    let var_a = a.mapv(|v| (v - mu_a) * (v - mu_a)).sum() / m;
    let var_b = b.mapv(|v| (v - mu_b) * (v - mu_b)).sum() / m;
    let cov = Zip::from(&a).and(&b).fold(T::zero(), |acc, &u, &v| acc + (u - mu_a) * (v - mu_b)) / m;

    let n1 = two * mu_a * mu_b + c1;
    let n2 = two * cov + c2;
    let d1 = mu_a * mu_a + mu_b * mu_b + c1;
    let d2 = var_a + var_b + c2;
    let s = n1 * n2 / (d1 * d2);

    let mut grad = Array2::from_elem(p.raw_dim(), Complex::new(T::zero(), T::zero()));
    Zip::from(&mut grad)
        .and(&a)
        .and(&b)
        .and(&Array2::from_shape_vec(p.raw_dim(), db).expect("shape"))
        .for_each(|g, &ai, &bi, &dbi| {
            let ds_db = s * two / m * (mu_a / n1 + (ai - mu_a) / n2 - mu_b / d1 - (bi - mu_b) / d2);
            *g = dbi.scale(-ds_db);
        });
    (T::one() - s, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(seed: u64) -> Array2<Complex<f64>> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((6, 5), |_| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn identical_planes_cost_nothing() {
        let y = plane(1);
        assert_eq!(l1(y.view(), y.view()).0, 0.0);
        assert_eq!(l2(y.view(), y.view()).0, 0.0);
        assert!(ssim(y.view(), y.view()).0.abs() < 1e-15);
    }

    #[test]
    fn gradients_match_central_differences() {
        let (y, p) = (plane(2), plane(3));
        type Term = fn(ArrayView2<Complex<f64>>, ArrayView2<Complex<f64>>) -> (f64, Array2<Complex<f64>>);
        let terms: [Term; 3] = [l1, l2, ssim];
        for f in terms {
            let (_, g) = f(y.view(), p.view());
            for idx in [(0, 0), (2, 3), (5, 4)] {
                for dir in [Complex::new(1.0, 0.0), Complex::new(0.0, 1.0)] {
                    let h = 1e-6;
                    let mut a = p.clone();
                    a[idx] += dir * h;
                    let mut b = p.clone();
                    b[idx] -= dir * h;
                    let n = (f(y.view(), a.view()).0 - f(y.view(), b.view()).0) / (2.0 * h);
                    let an = if dir.re == 1.0 { g[idx].re } else { g[idx].im };
                    assert!((n - an).abs() <= 1e-7 * an.abs().max(1e-3), "{n} vs {an}");
                }
            }
        }
    }
}
