use ndarray::{Array2, Zip};

use crate::error::{check_shape, CwmiError, Result};
use crate::scalar::Scalar;

pub fn check_unit_interval<T: Scalar>(name: &str, values: &Array2<T>) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
        return Err(CwmiError::OutOfRange(format!("{name} value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Mean binary cross-entropy with probabilities clipped to `[clip, 1 - clip]`.
///
/// Returns the value and its gradient with respect to `pred`; the gradient is
/// zero wherever clipping is active.
pub fn cross_entropy<T: Scalar>(label: &Array2<T>, pred: &Array2<T>, clip: T) -> Result<(T, Array2<T>)> {
    check_shape(label.shape(), pred.shape())?;
    check_unit_interval("label", label)?;
    check_unit_interval("prediction", pred)?;
    let inv_m = T::one() / T::from_usize_lossy(pred.len());
    let (lo, hi) = (clip, T::one() - clip);
    let mut grad = Array2::<T>::zeros(pred.raw_dim());
    let mut total = T::zero();
    Zip::from(&mut grad).and(label).and(pred).for_each(|g, &y, &p| {
        let q = p.max(lo).min(hi);
        total = total - (y * q.ln() + (T::one() - y) * (T::one() - q).ln());
        if p >= lo && p <= hi {
            *g = (-(y / q) + (T::one() - y) / (T::one() - q)) * inv_m;
        }
    });
    Ok((total * inv_m, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_prediction_costs_only_the_clip() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let (v, g) = cross_entropy(&y, &y, 1e-7).unwrap();
        assert!(v <= 1.1e-7);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uniform_prediction_costs_ln2() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let p = Array2::from_elem((2, 2), 0.5);
        let (v, _) = cross_entropy(&y, &p, 1e-7).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hand_computed_case() {
        let y = array![[1.0, 0.0], [0.0, 1.0]];
        let p = array![[0.9, 0.2], [0.3, 0.8]];
        let (v, g) = cross_entropy(&y, &p, 1e-7).unwrap();
        let expected = -(0.9f64.ln() + 0.8f64.ln() + 0.7f64.ln() + 0.8f64.ln()) / 4.0;
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.227081).abs() < 1e-6);
        assert!((g[[0, 0]] + 1.0 / (0.9 * 4.0)).abs() < 1e-15);
        assert!((g[[0, 1]] - 1.0 / (0.8 * 4.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let y = array![[1.0, 0.0]];
        assert!(cross_entropy(&y, &array![[1.2, 0.0]], 1e-7).is_err());
        assert!(cross_entropy(&y, &array![[0.5], [0.5]], 1e-7).is_err());
    }
}
