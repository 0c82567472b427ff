//! The composite wavelet mutual-information objective and its ablations.
//!
//! For a label `Y` and prediction `P` the loss is
//!
//! ```text
//! (1 - lambda) * sum_n -I_l(Y_n, P_n) + lambda * CE(Y, P)
//! ```
//!
//! where `Y_n`, `P_n` are the oriented subbands at level `n` and both
//! residues are left out. The wavelet variants swap `-I_l` for an L1, L2 or
//! SSIM distance averaged over all subbands.

mod ce;
mod gradcheck;
pub mod wavelet;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, CwmiError, Result};
use crate::mi::{accumulate_stats, mi_gradient, mi_lower_bound, MiRegularization};
use crate::pyramid::{Decomposition, PyramidConfig, PyramidMode, SteerablePyramid, SubbandStack};
use crate::scalar::Scalar;

pub use ce::cross_entropy;
pub use gradcheck::{finite_difference_check, FdProbe, FdReport, Stencil};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    /// Mutual information on complex subbands.
    Cwmi,
    /// Mutual information on real subbands.
    CwmiReal,
    WaveletL1,
    WaveletL2,
    WaveletSsim,
    /// Cross-entropy alone; `lambda` is ignored.
    CeOnly,
}

impl LossVariant {
    pub const ALL: [LossVariant; 6] = [
        LossVariant::Cwmi,
        LossVariant::CwmiReal,
        LossVariant::WaveletL1,
        LossVariant::WaveletL2,
        LossVariant::WaveletSsim,
        LossVariant::CeOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Cwmi => "cwmi",
            LossVariant::CwmiReal => "cwmi_real",
            LossVariant::WaveletL1 => "wavelet_l1",
            LossVariant::WaveletL2 => "wavelet_l2",
            LossVariant::WaveletSsim => "wavelet_ssim",
            LossVariant::CeOnly => "ce_only",
        }
    }

    /// Pyramid mode the variant decomposes with, if any.
    pub fn pyramid_mode(self) -> Option<PyramidMode> {
        match self {
            LossVariant::CwmiReal => Some(PyramidMode::Real),
            LossVariant::CeOnly => None,
            _ => Some(PyramidMode::Complex),
        }
    }

    pub fn is_mutual_information(self) -> bool {
        matches!(self, LossVariant::Cwmi | LossVariant::CwmiReal)
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = CwmiError;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| CwmiError::InvalidConfig(format!("unknown loss variant '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig<T> {
    pub levels: usize,
    pub orientations: usize,
    /// Weight of the cross-entropy term.
    pub lambda: T,
    /// Added to the conditional covariance before the log-determinant.
    pub epsilon: T,
    /// Added to the prediction covariance before inversion.
    pub inverse_epsilon: T,
    pub variant: LossVariant,
    pub probability_clip: T,
}

impl<T: Scalar> Default for LossConfig<T> {
    fn default() -> Self {
        Self {
            levels: 4,
            orientations: 4,
            lambda: T::lit(0.1),
            epsilon: T::lit(1e-5),
            inverse_epsilon: T::lit(1e-5),
            variant: LossVariant::Cwmi,
            probability_clip: T::lit(1e-7),
        }
    }
}

impl<T: Scalar> LossConfig<T> {
    pub fn with_variant(variant: LossVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CwmiError::InvalidConfig(msg));
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return bad(format!("lambda {} outside [0, 1]", self.lambda));
        }
        if !(self.epsilon > T::zero()) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        if !(self.inverse_epsilon >= T::zero()) {
            return bad(format!("inverse epsilon {} must be non-negative", self.inverse_epsilon));
        }
        if !(self.probability_clip > T::zero() && self.probability_clip < T::lit(0.5)) {
            return bad(format!("probability clip {} outside (0, 0.5)", self.probability_clip));
        }
        if self.variant != LossVariant::CeOnly {
            self.pyramid_config()?;
        }
        Ok(())
    }

    pub fn regularization(&self) -> MiRegularization<T> {
        MiRegularization {
            logdet: self.epsilon,
            inverse: self.inverse_epsilon,
        }
    }

    pub fn pyramid_config(&self) -> Result<PyramidConfig> {
        let mode = self.variant.pyramid_mode().unwrap_or(PyramidMode::Complex);
        PyramidConfig::new(self.levels, self.orientations, mode)
    }

    /// Weight on the summed per-level terms.
    fn structural_weight(&self) -> T {
        match self.variant {
            LossVariant::CeOnly => T::zero(),
            _ => T::one() - self.lambda,
        }
    }

    fn ce_weight(&self) -> T {
        match self.variant {
            LossVariant::CeOnly => T::one(),
            _ => self.lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput<T> {
    pub total: T,
    pub ce_term: T,
    /// One entry per level: `-I_l` for the MI variants, the level's share of
    /// the averaged subband distance for the wavelet variants, empty for
    /// `ce_only`.
    pub per_level: Vec<T>,
    /// `d total / d pred`, present when requested.
    pub gradient: Option<Array2<T>>,
}

/// Loss evaluator for a fixed image size with the pyramid filters built once.
#[derive(Clone, Debug)]
pub struct CwmiLoss<T: Scalar> {
    config: LossConfig<T>,
    height: usize,
    width: usize,
    pyramid: Option<SteerablePyramid<T>>,
}

impl<T: Scalar> CwmiLoss<T> {
    pub fn new(height: usize, width: usize, config: LossConfig<T>) -> Result<Self> {
        config.validate()?;
        let pyramid = match config.variant {
            LossVariant::CeOnly => None,
            _ => Some(SteerablePyramid::new(height, width, &config.pyramid_config()?)?),
        };
        Ok(Self {
            config,
            height,
            width,
            pyramid,
        })
    }

    pub fn config(&self) -> &LossConfig<T> {
        &self.config
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn evaluate(&self, label: &Array2<T>, pred: &Array2<T>, want_gradient: bool) -> Result<LossOutput<T>> {
        let shape = [self.height, self.width];
        check_shape(&shape, label.shape())?;
        check_shape(&shape, pred.shape())?;
        let cfg = &self.config;
        let (ce_term, ce_grad) = cross_entropy(label, pred, cfg.probability_clip)?;

        let Some(pyramid) = &self.pyramid else {
            return Ok(LossOutput {
                total: ce_term,
                ce_term,
                per_level: Vec::new(),
                gradient: want_gradient.then_some(ce_grad),
            });
        };

        let dl = pyramid.decompose(label)?;
        let dp = pyramid.decompose(pred)?;
        let mut per_level = Vec::with_capacity(dl.bands.len());
        let mut cotangent = want_gradient.then(|| Decomposition::zeros(self.height, self.width, pyramid.config()));

        for (n, (yb, pb)) in dl.bands.iter().zip(&dp.bands).enumerate() {
            let (term, cot) = self.level_term(yb, pb, want_gradient)?;
            per_level.push(term);
            if let (Some(c), Some(g)) = (cotangent.as_mut(), cot) {
                c.bands[n] = g;
            }
        }

        let w = cfg.structural_weight();
        let total = w * per_level.iter().copied().sum::<T>() + cfg.ce_weight() * ce_term;
        let gradient = match cotangent {
            Some(c) => {
                let mut g = pyramid.apply_adjoint(&c)?;
                g.zip_mut_with(&ce_grad, |a, &b| *a = w * *a + cfg.ce_weight() * b);
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(CwmiError::NonFiniteGradient);
                }
                Some(g)
            }
            None => None,
        };
        Ok(LossOutput {
            total,
            ce_term,
            per_level,
            gradient,
        })
    }

    fn level_term(
        &self,
        label: &SubbandStack<T>,
        pred: &SubbandStack<T>,
        want_gradient: bool,
    ) -> Result<(T, Option<SubbandStack<T>>)> {
        let cfg = &self.config;
        let mode = cfg.variant.pyramid_mode().unwrap_or(PyramidMode::Complex);
        if cfg.variant.is_mutual_information() {
            let reg = cfg.regularization();
            return if want_gradient {
                let (res, cot) = mi_gradient(label, pred, &reg, mode)?;
                Ok((-res.value, Some(cot)))
            } else {
                let res = mi_lower_bound(&accumulate_stats(label, pred, mode)?, &reg)?;
                Ok((-res.value, None))
            };
        }

        type Term<T> = fn(ArrayView2<Complex<T>>, ArrayView2<Complex<T>>) -> (T, Array2<Complex<T>>);
        let term: Term<T> = match cfg.variant {
            LossVariant::WaveletL1 => wavelet::l1::<T>,
            LossVariant::WaveletL2 => wavelet::l2::<T>,
            _ => wavelet::ssim::<T>,
        };
        let subbands = T::from_usize_lossy(cfg.levels * cfg.orientations);
        let mut acc = T::zero();
        let mut cot = want_gradient.then(|| {
            let (_, h, w) = pred.data.dim();
            SubbandStack::zeros(pred.level, pred.orientations(), h, w)
        });
        for k in 0..pred.orientations() {
            let (v, g) = term(label.data.index_axis(Axis(0), k), pred.data.index_axis(Axis(0), k));
            acc = acc + v;
            if let Some(c) = cot.as_mut() {
                c.data
                    .index_axis_mut(Axis(0), k)
                    .zip_mut_with(&g, |a, &b| *a = b.unscale(subbands));
            }
        }
        Ok((acc / subbands, cot))
    }
}

/// One-shot evaluation of any variant.
pub fn cwmi<T: Scalar>(
    label: &Array2<T>,
    pred: &Array2<T>,
    config: &LossConfig<T>,
    want_gradient: bool,
) -> Result<LossOutput<T>> {
    let (h, w) = label.dim();
    CwmiLoss::new(h, w, *config)?.evaluate(label, pred, want_gradient)
}

/// Evaluates a wavelet-distance variant; rejects the MI and CE-only variants.
pub fn wavelet_variant<T: Scalar>(label: &Array2<T>, pred: &Array2<T>, config: &LossConfig<T>) -> Result<LossOutput<T>> {
    match config.variant {
        LossVariant::WaveletL1 | LossVariant::WaveletL2 | LossVariant::WaveletSsim => cwmi(label, pred, config, true),
        v => Err(CwmiError::InvalidConfig(format!("{v} is not a wavelet distance variant"))),
    }
}
