//! Desk-scale training loops that exercise the loss end to end.
//!
//! Two parameterizations are provided: a free per-pixel logit field, which
//! isolates the loss's gradient field, and a single 5x5 convolution shared
//! across pixels.

mod adam;
mod linear;
mod synthetic;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{CwmiError, Result};
use crate::loss::{CwmiLoss, LossConfig, LossVariant};
use crate::metrics::{evaluate_masks, foreground_dice, pixel_accuracy, BinaryMask, MetricsReport};
use crate::scalar::Scalar;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use linear::{digest, LinearModel, KERNEL};
pub use synthetic::{blur, generate, SyntheticKind, SyntheticSpec, THIN_FOREGROUND_LIMIT};

use linear::sigmoid;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Optimizer steps per scheduler step.
    pub steps_per_epoch: usize,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::with_learning_rate(0.05),
            steps_per_epoch: 50,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.steps_per_epoch == 0 {
            return Err(CwmiError::InvalidConfig("steps per epoch must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CwmiError::InvalidConfig(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Optimizer steps completed when the evaluation ran.
    pub step: usize,
    pub metrics: MetricsReport,
    pub dice: f64,
    pub pixel_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Loss before each optimizer step.
    pub losses: Vec<f64>,
    pub evaluations: Vec<Evaluation>,
    /// SHA-256 of the final parameters.
    pub digest: String,
}

impl TrainHistory {
    pub fn final_evaluation(&self) -> Option<&Evaluation> {
        self.evaluations.last()
    }

    /// Trailing moving average with window `window`.
    pub fn moving_average(&self, window: usize) -> Vec<f64> {
        if window == 0 || self.losses.len() < window {
            return Vec::new();
        }
        self.losses.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
    }

    /// Minimum loss inside each consecutive block of `window` steps.
    pub fn window_minima(&self, window: usize) -> Vec<f64> {
        self.losses
            .chunks(window.max(1))
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }
}

fn evaluation<T: Scalar>(step: usize, label: &BinaryMask, prob: &Array2<T>, threshold: f64) -> Result<Evaluation> {
    let pred = BinaryMask::threshold(prob, threshold)?;
    Ok(Evaluation {
        step,
        metrics: evaluate_masks(label, &pred)?,
        dice: foreground_dice(label, &pred)?,
        pixel_accuracy: pixel_accuracy(label, &pred)?,
    })
}

fn due(step: usize, steps: usize, eval_every: usize) -> bool {
    step == steps || (eval_every > 0 && step % eval_every == 0)
}

/// Optimizes a free logit per pixel against `label`, starting from zero
/// logits. Evaluates every `eval_every` steps and after the last one.
pub fn optimize_logits<T: Scalar>(
    label: &BinaryMask,
    loss_config: &LossConfig<T>,
    train: &TrainConfig,
    steps: usize,
    eval_every: usize,
) -> Result<(TrainHistory, Array2<T>)> {
    train.validate()?;
    let (h, w) = label.dim();
    let loss = CwmiLoss::new(h, w, *loss_config)?;
    let target = label.to_values::<T>();
    let mut logits = Array2::<T>::zeros((h, w));
    let mut state = OptimState::new(logits.raw_dim());
    let mut history = TrainHistory {
        losses: Vec::with_capacity(steps),
        evaluations: Vec::new(),
        digest: String::new(),
    };
    for step in 1..=steps {
        let prob = logits.mapv(sigmoid);
        let out = loss.evaluate(&target, &prob, true)?;
        history.losses.push(out.total.to_f64_lossy());
        let mut grad = out.gradient.expect("gradient requested");
        grad.zip_mut_with(&prob, |g, &p| *g = *g * p * (T::one() - p));
        adam_step(&mut logits, &grad, &mut state, &train.adam)?;
        if step % train.steps_per_epoch == 0 {
            state.scheduler_step();
        }
        if due(step, steps, eval_every) {
            history.evaluations.push(evaluation(step, label, &logits.mapv(sigmoid), train.threshold)?);
        }
    }
    history.digest = digest(logits.iter());
    Ok((history, logits))
}

/// Trains a [`LinearModel`] on the samples of `train_specs` (full batch per
/// step) and evaluates on `heldout`.
pub fn train_linear_model<T: Scalar>(
    train_specs: &[SyntheticSpec],
    heldout: &SyntheticSpec,
    loss_config: &LossConfig<T>,
    train: &TrainConfig,
    steps: usize,
    eval_every: usize,
) -> Result<(TrainHistory, LinearModel<T>)> {
    train.validate()?;
    if train_specs.len() < 2 {
        return Err(CwmiError::InvalidConfig("at least two training pairs are required".into()));
    }
    let levels = loss_config.levels;
    let pairs = train_specs
        .iter()
        .map(|s| generate::<T>(s, levels).map(|(x, y)| (x, y.to_values::<T>())))
        .collect::<Result<Vec<_>>>()?;
    let (test_input, test_label) = generate::<T>(heldout, levels)?;
    let (h, w) = pairs[0].0.dim();
    if pairs.iter().any(|(x, _)| x.dim() != (h, w)) || test_input.dim() != (h, w) {
        return Err(CwmiError::InvalidConfig("all samples must share one size".into()));
    }
    let loss = CwmiLoss::new(h, w, *loss_config)?;

    let mut params: Array1<T> = LinearModel::<T>::default().to_params();
    let mut state = OptimState::new(params.raw_dim());
    let mut history = TrainHistory {
        losses: Vec::with_capacity(steps),
        evaluations: Vec::new(),
        digest: String::new(),
    };
    for step in 1..=steps {
        let model = LinearModel::from_params(&params)?;
        let (value, grad) = model.loss_and_gradient(&pairs, &loss)?;
        history.losses.push(value.to_f64_lossy());
        adam_step(&mut params, &grad, &mut state, &train.adam)?;
        if step % train.steps_per_epoch == 0 {
            state.scheduler_step();
        }
        if due(step, steps, eval_every) {
            let model = LinearModel::from_params(&params)?;
            history.evaluations.push(evaluation(step, &test_label, &model.predict(&test_input), train.threshold)?);
        }
    }
    history.digest = digest(params.iter());
    Ok((history, LinearModel::from_params(&params)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    /// Number of finite samples summarized.
    pub count: usize,
}

impl MeanStd {
    /// Population statistics of the finite entries.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
            };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            count: v.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: LossVariant,
    pub levels: usize,
    pub orientations: usize,
    pub miou: MeanStd,
    pub mdice: MeanStd,
    pub dice: MeanStd,
    pub vi: MeanStd,
    pub ari: MeanStd,
    /// Over runs where the distance is defined.
    pub hd: MeanStd,
}

/// Runs [`optimize_logits`] for every (variant, N, K) cell on every label
/// and summarizes the final metrics.
#[allow(clippy::too_many_arguments)]
pub fn ablation_table<T: Scalar>(
    labels: &[BinaryMask],
    variants: &[LossVariant],
    levels: &[usize],
    orientations: &[usize],
    base: &LossConfig<T>,
    train: &TrainConfig,
    steps: usize,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for &variant in variants {
        for &n in levels {
            for &k in orientations {
                let cfg = LossConfig {
                    levels: n,
                    orientations: k,
                    variant,
                    ..*base
                };
                let mut finals = Vec::with_capacity(labels.len());
                for label in labels {
                    let (history, _) = optimize_logits(label, &cfg, train, steps, 0)?;
                    finals.push(
                        history
                            .final_evaluation()
                            .cloned()
                            .ok_or_else(|| CwmiError::InvalidConfig("ablation needs at least one step".into()))?,
                    );
                }
                let col = |f: fn(&Evaluation) -> f64| MeanStd::of(finals.iter().map(f));
                rows.push(AblationRow {
                    variant,
                    levels: n,
                    orientations: k,
                    miou: col(|e| e.metrics.miou),
                    mdice: col(|e| e.metrics.mdice),
                    dice: col(|e| e.dice),
                    vi: col(|e| e.metrics.vi),
                    ari: col(|e| e.metrics.ari),
                    hd: col(|e| e.metrics.hd.unwrap_or(f64::NAN)),
                });
            }
        }
    }
    Ok(rows)
}
