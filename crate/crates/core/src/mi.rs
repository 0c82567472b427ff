//! Gaussian lower bound on the mutual information between two subband stacks.
//!
//! At each level the `K` oriented coefficients of a pixel form one
//! `K`-dimensional sample. With population covariances `S_y`, `S_p` and
//! cross-covariance `C = Cov(Y, P)`, the conditional covariance of the label
//! given the prediction is the Schur complement
//!
//! ```text
//! M = S_y - C (S_p + d I)^-1 C^H
//! ```
//!
//! and the bound is `I_l = -1/2 log det(M + e I)`. Real subbands use the same
//! expressions with `^H` reduced to a transpose.
//!
//! Two regularizers are kept apart: `d` (`inverse`) keeps `S_p` invertible when
//! the prediction carries no signal, `e` (`logdet`) bounds the log-determinant
//! when the prediction explains the label exactly.

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, CwmiError, Result};
use crate::linalg::{adjoint, hermitize, hpd_inverse, logdet_hpd, logdet_spd, spd_inverse};
use crate::pyramid::{PyramidMode, SubbandStack};
use crate::scalar::Scalar;

/// Diagonal regularizers of the estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiRegularization<T> {
    /// Added to the Schur complement before the log-determinant.
    pub logdet: T,
    /// Added to the prediction covariance before inversion.
    pub inverse: T,
}

impl<T: Scalar> Default for MiRegularization<T> {
    fn default() -> Self {
        Self {
            logdet: T::lit(1e-5),
            inverse: T::lit(1e-5),
        }
    }
}

impl<T: Scalar> MiRegularization<T> {
    pub fn uniform(epsilon: T) -> Self {
        Self {
            logdet: epsilon,
            inverse: epsilon,
        }
    }
}

/// First and second moments of a label/prediction subband pair.
#[derive(Clone, Debug)]
pub struct SubbandStatistics<T: Scalar> {
    pub mode: PyramidMode,
    pub mean_label: Array1<Complex<T>>,
    pub mean_pred: Array1<Complex<T>>,
    pub sigma_label: Array2<Complex<T>>,
    pub sigma_pred: Array2<Complex<T>>,
    /// `E[(y - mean_y)(p - mean_p)^H]`.
    pub cross: Array2<Complex<T>>,
    pub sample_count: usize,
}

impl<T: Scalar> SubbandStatistics<T> {
    pub fn dims(&self) -> usize {
        self.sigma_label.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct MiResult<T: Scalar> {
    /// Lower-bound estimate `I_l`; the loss uses `-value`.
    pub value: T,
    /// Schur complement before the log-determinant regularizer is added.
    pub schur: Array2<Complex<T>>,
}

/// Columns per block in the sample loops; keeps the block of every row in cache.
const SAMPLE_BLOCK: usize = 512;

/// `a b^H / count` for `K x M` row-major sample matrices.
fn covariance<T: Scalar>(a: &Array2<Complex<T>>, b: &Array2<Complex<T>>, count: usize) -> Array2<Complex<T>> {
    let (k, m) = a.dim();
    let (xa, xb) = (a.as_slice().expect("standard layout"), b.as_slice().expect("standard layout"));
    let zero = Complex::new(T::zero(), T::zero());
    let mut out = Array2::from_elem((k, k), zero);
    for start in (0..m).step_by(SAMPLE_BLOCK) {
        let end = (start + SAMPLE_BLOCK).min(m);
        for i in 0..k {
            let ra = &xa[i * m + start..i * m + end];
            for j in 0..k {
                let rb = &xb[j * m + start..j * m + end];
                out[[i, j]] = ra.iter().zip(rb).fold(out[[i, j]], |s, (u, v)| s + u * v.conj());
            }
        }
    }
    let inv = T::one() / T::from_usize_lossy(count);
    out.mapv_inplace(|v| v.scale(inv));
    out
}

/// `ca x + cb y` for `K x K` coefficients and `K x M` row-major samples.
fn mix<T: Scalar>(
    ca: &Array2<Complex<T>>,
    x: &Array2<Complex<T>>,
    cb: &Array2<Complex<T>>,
    y: &Array2<Complex<T>>,
) -> Array2<Complex<T>> {
    let (k, m) = x.dim();
    let (sx, sy) = (x.as_slice().expect("standard layout"), y.as_slice().expect("standard layout"));
    let mut out = Array2::from_elem((k, m), Complex::new(T::zero(), T::zero()));
    let so = out.as_slice_mut().expect("fresh array");
    for start in (0..m).step_by(SAMPLE_BLOCK) {
        let end = (start + SAMPLE_BLOCK).min(m);
        for i in 0..k {
            let row = &mut so[i * m + start..i * m + end];
            for j in 0..k {
                let (a, b) = (ca[[i, j]], cb[[i, j]]);
                let (rx, ry) = (&sx[j * m + start..j * m + end], &sy[j * m + start..j * m + end]);
                for ((o, u), v) in row.iter_mut().zip(rx).zip(ry) {
                    *o = *o + a * u + b * v;
                }
            }
        }
    }
    out
}

fn strip_imaginary<T: Scalar>(m: &mut Array2<Complex<T>>) {
    m.mapv_inplace(|v| Complex::new(v.re, T::zero()));
}

fn check_pair<T: Scalar>(label: &SubbandStack<T>, pred: &SubbandStack<T>) -> Result<()> {
    check_shape(label.data.shape(), pred.data.shape())?;
    let (k, m) = (label.orientations(), label.sample_count());
    if m < k {
        return Err(CwmiError::DegenerateStatistics { samples: m, dims: k });
    }
    Ok(())
}

struct Centered<T: Scalar> {
    label: Array2<Complex<T>>,
    pred: Array2<Complex<T>>,
    stats: SubbandStatistics<T>,
}

fn centered_pair<T: Scalar>(label: &SubbandStack<T>, pred: &SubbandStack<T>, mode: PyramidMode) -> Result<Centered<T>> {
    check_pair(label, pred)?;
    let m = label.sample_count();
    let (yc, mean_label) = centered(label);
    let (pc, mean_pred) = centered(pred);
    let mut sigma_label = covariance(&yc, &yc, m);
    let mut sigma_pred = covariance(&pc, &pc, m);
    let mut cross = covariance(&yc, &pc, m);
    hermitize(&mut sigma_label);
    hermitize(&mut sigma_pred);
    if mode == PyramidMode::Real {
        strip_imaginary(&mut sigma_label);
        strip_imaginary(&mut sigma_pred);
        strip_imaginary(&mut cross);
    }
    Ok(Centered {
        label: yc,
        pred: pc,
        stats: SubbandStatistics {
            mode,
            mean_label,
            mean_pred,
            sigma_label,
            sigma_pred,
            cross,
            sample_count: m,
        },
    })
}

/// Mean-centered samples as a `K x M` matrix, plus the means.
fn centered<T: Scalar>(stack: &SubbandStack<T>) -> (Array2<Complex<T>>, Array1<Complex<T>>) {
    let k = stack.orientations();
    let m = stack.sample_count();
    let mut flat = stack
        .data
        .to_shape((k, m))
        .expect("contiguous subband stack")
        .to_owned();
    let inv = T::one() / T::from_usize_lossy(m);
    let mean: Array1<Complex<T>> = flat
        .axis_iter(Axis(0))
        .map(|row| row.iter().fold(Complex::new(T::zero(), T::zero()), |a, b| a + b).scale(inv))
        .collect();
    for (mut row, mu) in flat.axis_iter_mut(Axis(0)).zip(mean.iter()) {
        row.mapv_inplace(|v| v - *mu);
    }
    (flat, mean)
}

/// Means and population covariances of a label/prediction subband pair.
///
/// In complex mode every covariance conjugates its second argument.
pub fn accumulate_stats<T: Scalar>(
    label: &SubbandStack<T>,
    pred: &SubbandStack<T>,
    mode: PyramidMode,
) -> Result<SubbandStatistics<T>> {
    Ok(centered_pair(label, pred, mode)?.stats)
}

fn add_identity<T: Scalar>(m: &Array2<Complex<T>>, eps: T) -> Array2<Complex<T>> {
    let mut out = m.clone();
    for i in 0..out.nrows() {
        out[[i, i]] = out[[i, i]] + Complex::new(eps, T::zero());
    }
    out
}

fn hermitian_inverse<T: Scalar>(m: &Array2<Complex<T>>, mode: PyramidMode) -> Result<Array2<Complex<T>>> {
    match mode {
        PyramidMode::Real => Ok(spd_inverse(&m.mapv(|v| v.re))?.mapv(|v| Complex::new(v, T::zero()))),
        PyramidMode::Complex => hpd_inverse(m),
    }
}

/// `log det(m + eps I)` for the Hermitian (or real symmetric) matrix `m`.
pub fn logdet_regularized<T: Scalar>(m: &Array2<Complex<T>>, eps: T, mode: PyramidMode) -> Result<T> {
    match mode {
        PyramidMode::Real => logdet_spd(&m.mapv(|v| v.re), eps),
        PyramidMode::Complex => logdet_hpd(m, eps),
    }
}

/// Intermediate quantities shared by the value and its gradient.
struct Forward<T: Scalar> {
    schur: Array2<Complex<T>>,
    value: T,
    pred_inverse: Array2<Complex<T>>,
}

fn forward<T: Scalar>(stats: &SubbandStatistics<T>, reg: &MiRegularization<T>) -> Result<Forward<T>> {
    let k = stats.dims();
    if stats.sample_count < k {
        return Err(CwmiError::DegenerateStatistics {
            samples: stats.sample_count,
            dims: k,
        });
    }
    let pred_inverse = hermitian_inverse(&add_identity(&stats.sigma_pred, reg.inverse), stats.mode)?;
    let explained = stats.cross.dot(&pred_inverse).dot(&adjoint(&stats.cross));
    let mut schur = &stats.sigma_label - &explained;
    hermitize(&mut schur);
    let value = -T::lit(0.5) * logdet_regularized(&schur, reg.logdet, stats.mode)?;
    Ok(Forward {
        schur,
        value,
        pred_inverse,
    })
}

/// Evaluates `I_l` from accumulated statistics.
pub fn mi_lower_bound<T: Scalar>(stats: &SubbandStatistics<T>, reg: &MiRegularization<T>) -> Result<MiResult<T>> {
    let f = forward(stats, reg)?;
    Ok(MiResult {
        value: f.value,
        schur: f.schur,
    })
}

/// `I_l` together with the gradient of the loss term `-I_l` with respect to
/// the prediction subbands.
///
/// The cotangent holds `d/dRe + i d/dIm` per coefficient; in real mode its
/// imaginary parts are zero.
pub fn mi_gradient<T: Scalar>(
    label: &SubbandStack<T>,
    pred: &SubbandStack<T>,
    reg: &MiRegularization<T>,
    mode: PyramidMode,
) -> Result<(MiResult<T>, SubbandStack<T>)> {
    let Centered {
        label: yc,
        pred: pc,
        stats,
    } = centered_pair(label, pred, mode)?;
    let f = forward(&stats, reg)?;

    // d(1/2 logdet S) = tr(G dM) with G = S^-1 / 2.
    let half = T::lit(0.5);
    let s_inv = hermitian_inverse(&add_identity(&f.schur, reg.logdet), mode)?;
    let g = s_inv.mapv(|v| v.scale(half));

    // dM = -dC A C^H - C A dC^H + C A dS_p A C^H with A = (S_p + d I)^-1.
    let c_a = stats.cross.dot(&f.pred_inverse);
    let grad_cross = g.dot(&c_a).mapv(|v| v.scale(-T::lit(2.0)));
    let mut grad_sigma_pred = adjoint(&c_a).dot(&g).dot(&c_a);
    hermitize(&mut grad_sigma_pred);

    // C = Yc Pc^H / M and S_p = Pc Pc^H / M; centering passes the gradient
    // through unchanged because every centered row sums to zero.
    let inv_m = T::one() / T::from_usize_lossy(stats.sample_count);
    let mut cot = mix(
        &adjoint(&grad_cross).mapv(|v| v.scale(inv_m)),
        &yc,
        &grad_sigma_pred.mapv(|v| v.scale(T::lit(2.0) * inv_m)),
        &pc,
    );
    if mode == PyramidMode::Real {
        strip_imaginary(&mut cot);
    }

    let shape = pred.data.raw_dim();
    let data = cot.into_shape_with_order(shape).expect("cotangent reshapes to subband stack");
    Ok((
        MiResult {
            value: f.value,
            schur: f.schur,
        },
        SubbandStack {
            level: pred.level,
            data,
        },
    ))
}
