//! A 5x5 convolution with bias and sigmoid, trained through the loss.

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{check_shape, CwmiError, Result};
use crate::loss::CwmiLoss;
use crate::scalar::Scalar;

pub const KERNEL: usize = 5;
const HALF: isize = (KERNEL / 2) as isize;

pub(crate) fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

/// Convolution weights (cross-correlation, zero padding) and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel<T: Scalar> {
    pub weights: Array2<T>,
    pub bias: T,
}

impl<T: Scalar> Default for LinearModel<T> {
    fn default() -> Self {
        Self {
            weights: Array2::zeros((KERNEL, KERNEL)),
            bias: T::zero(),
        }
    }
}

impl<T: Scalar> LinearModel<T> {
    /// Weights followed by the bias.
    pub fn to_params(&self) -> Array1<T> {
        self.weights.iter().copied().chain(std::iter::once(self.bias)).collect()
    }

    pub fn from_params(params: &Array1<T>) -> Result<Self> {
        check_shape(&[KERNEL * KERNEL + 1], params.shape())?;
        Ok(Self {
            weights: Array2::from_shape_fn((KERNEL, KERNEL), |(a, b)| params[a * KERNEL + b]),
            bias: params[KERNEL * KERNEL],
        })
    }

    pub fn logits(&self, input: &Array2<T>) -> Array2<T> {
        let (h, w) = input.dim();
        Array2::from_shape_fn((h, w), |(i, j)| {
            let mut acc = self.bias;
            for ((a, b), &k) in self.weights.indexed_iter() {
                let r = i as isize + a as isize - HALF;
                let c = j as isize + b as isize - HALF;
                if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                    acc = acc + k * input[[r as usize, c as usize]];
                }
            }
            acc
        })
    }

    pub fn predict(&self, input: &Array2<T>) -> Array2<T> {
        self.logits(input).mapv(sigmoid)
    }

    /// Mean loss over `pairs` and its gradient with respect to
    /// `to_params()`.
    pub fn loss_and_gradient(&self, pairs: &[(Array2<T>, Array2<T>)], loss: &CwmiLoss<T>) -> Result<(T, Array1<T>)> {
        if pairs.is_empty() {
            return Err(CwmiError::InvalidConfig("no training pairs".into()));
        }
        let scale = T::one() / T::from_usize_lossy(pairs.len());
        let mut total = T::zero();
        let mut grad = Array1::<T>::zeros(KERNEL * KERNEL + 1);
        for (input, label) in pairs {
            let p = self.predict(input);
            let out = loss.evaluate(label, &p, true)?;
            total = total + out.total * scale;
            let g = out.gradient.expect("gradient requested");
            let dz = ndarray::Zip::from(&g).and(&p).map_collect(|&g, &p| g * p * (T::one() - p));
            let (h, w) = input.dim();
            for a in 0..KERNEL {
                for b in 0..KERNEL {
                    let mut acc = T::zero();
                    for i in 0..h {
                        let r = i as isize + a as isize - HALF;
                        if r < 0 || r as usize >= h {
                            continue;
                        }
                        for j in 0..w {
                            let c = j as isize + b as isize - HALF;
                            if c >= 0 && (c as usize) < w {
                                acc = acc + dz[[i, j]] * input[[r as usize, c as usize]];
                            }
                        }
                    }
                    grad[a * KERNEL + b] = grad[a * KERNEL + b] + acc * scale;
                }
            }
            grad[KERNEL * KERNEL] = grad[KERNEL * KERNEL] + dz.sum() * scale;
        }
        Ok((total, grad))
    }
}

/// Hex SHA-256 of the values widened to f64, little-endian.
pub fn digest<'a, T: Scalar + 'a>(values: impl IntoIterator<Item = &'a T>) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_f64_lossy().to_le_bytes());
    }
    hex::encode(hasher.finalize())
}
