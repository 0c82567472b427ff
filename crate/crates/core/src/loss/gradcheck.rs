use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{CwmiError, Result};
use crate::scalar::Scalar;

use super::{CwmiLoss, LossConfig};

/// Difference formula used for the numerical derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`
    Central,
    /// `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h`
    #[default]
    FourthOrder,
}

impl Stencil {
    fn reach(self) -> f64 {
        match self {
            Stencil::Central => 1.0,
            Stencil::FourthOrder => 2.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FdProbe {
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
    /// The stencil would cross a probability clip boundary.
    pub skipped: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub mean_relative_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub probes: Vec<FdProbe>,
}

impl FdReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_relative_error <= tolerance
    }
}

/// Compares the analytic gradient with numerical derivatives at
/// `probe_count` distinct pixels drawn with `seed`.
///
/// The relative error is `|a - n| / max(|a|, |n|, 1e-3 * max|grad|)`, so
/// entries far below the gradient's scale are judged on absolute accuracy.
pub fn finite_difference_check<T: Scalar>(
    label: &Array2<T>,
    pred: &Array2<T>,
    config: &LossConfig<T>,
    h: f64,
    probe_count: usize,
    stencil: Stencil,
    seed: u64,
) -> Result<FdReport> {
    if !(1e-8..=1e-4).contains(&h) {
        return Err(CwmiError::InvalidConfig(format!("step {h} outside [1e-8, 1e-4]")));
    }
    let (rows, cols) = pred.dim();
    let loss = CwmiLoss::new(rows, cols, *config)?;
    let grad = loss.evaluate(label, pred, true)?.gradient.expect("gradient requested");
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.to_f64_lossy().abs()));
    let floor = 1e-3 * scale;
    let clip = config.probability_clip.to_f64_lossy();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, pred.len(), probe_count.min(pred.len()));
    let mut probes = Vec::with_capacity(picks.len());
    let mut work = pred.clone();
    for flat in picks.iter() {
        let (row, col) = (flat / cols, flat % cols);
        let p0 = pred[[row, col]];
        let p = p0.to_f64_lossy();
        let analytic = grad[[row, col]].to_f64_lossy();
        let reach = stencil.reach() * h;
        if p - reach < clip || p + reach > 1.0 - clip {
            probes.push(FdProbe {
                row,
                col,
                analytic,
                numeric: f64::NAN,
                relative_error: 0.0,
                skipped: true,
            });
            continue;
        }
        let mut at = |offset: f64| -> Result<f64> {
            work[[row, col]] = p0 + T::lit(offset);
            let v = loss.evaluate(label, &work, false)?.total.to_f64_lossy();
            work[[row, col]] = p0;
            Ok(v)
        };
        let numeric = match stencil {
            Stencil::Central => (at(h)? - at(-h)?) / (2.0 * h),
            Stencil::FourthOrder => (at(-2.0 * h)? - 8.0 * at(-h)? + 8.0 * at(h)? - at(2.0 * h)?) / (12.0 * h),
        };
        let denom = analytic.abs().max(numeric.abs()).max(floor);
        let relative_error = if denom > 0.0 { (analytic - numeric).abs() / denom } else { 0.0 };
        probes.push(FdProbe {
            row,
            col,
            analytic,
            numeric,
            relative_error,
            skipped: false,
        });
    }

    let checked: Vec<f64> = probes.iter().filter(|p| !p.skipped).map(|p| p.relative_error).collect();
    Ok(FdReport {
        max_relative_error: checked.iter().copied().fold(0.0, f64::max),
        mean_relative_error: if checked.is_empty() { 0.0 } else { checked.iter().sum::<f64>() / checked.len() as f64 },
        checked: checked.len(),
        skipped: probes.len() - checked.len(),
        probes,
    })
}
