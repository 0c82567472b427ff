//! Wall-clock timing of one decomposition plus one loss evaluation.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::harness::{generate, SyntheticKind, SyntheticSpec};
use crate::loss::{CwmiLoss, LossConfig};
use crate::pyramid::SteerablePyramid;
use crate::scalar::Scalar;

#[derive(Clone, Debug, Serialize)]
pub struct BenchTiming {
    pub size: usize,
    /// Median over repeats, in seconds.
    pub median_seconds: f64,
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRatio {
    pub from: usize,
    pub to: usize,
    /// Time ratio between consecutive sizes.
    pub ratio: f64,
    /// Pixel-count ratio, for reference.
    pub pixel_ratio: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Times `decompose(pred)` followed by a loss evaluation with gradient on a
/// synthetic cells label of side `size`. Filters and FFT plans are built once
/// before timing; one untimed warm-up run precedes the `repeats` timed runs.
pub fn time_decompose_and_loss<T: Scalar>(size: usize, repeats: usize, config: &LossConfig<T>, seed: u64) -> Result<BenchTiming> {
    let (_, label) = generate::<T>(&SyntheticSpec::new(SyntheticKind::Cells, size, 0.0, seed), config.levels)?;
    let label = label.to_values::<T>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred: Array2<T> = Array2::from_shape_fn((size, size), |_| T::lit(0.05 + 0.9 * rng.random::<f64>()));
    let loss = CwmiLoss::new(size, size, *config)?;
    let pyramid = SteerablePyramid::<T>::new(size, size, &config.pyramid_config()?)?;

    let run = || -> Result<f64> {
        let start = Instant::now();
        let d = pyramid.decompose(&pred)?;
        let out = loss.evaluate(&label, &pred, true)?;
        std::hint::black_box((d, out));
        Ok(start.elapsed().as_secs_f64())
    };
    run()?;
    let samples = (0..repeats.max(1)).map(|_| run()).collect::<Result<Vec<_>>>()?;
    Ok(BenchTiming {
        size,
        median_seconds: median(&samples),
        samples,
    })
}

pub fn ratios(timings: &[BenchTiming]) -> Vec<BenchRatio> {
    timings
        .windows(2)
        .map(|w| BenchRatio {
            from: w[0].size,
            to: w[1].size,
            ratio: w[1].median_seconds / w[0].median_seconds,
            pixel_ratio: (w[1].size * w[1].size) as f64 / (w[0].size * w[0].size) as f64,
        })
        .collect()
}
