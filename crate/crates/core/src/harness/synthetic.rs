//! Seeded synthetic segmentation problems in three structural regimes.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CwmiError, Result};
use crate::metrics::BinaryMask;
use crate::scalar::Scalar;

/// Largest foreground fraction drawn for the thin-structure kinds.
pub const THIN_FOREGROUND_LIMIT: f64 = 0.12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticKind {
    /// Tiled regions separated by 2 px boundaries; foreground is the interiors.
    Cells,
    /// Smooth random curves of width 1 to 3 px.
    Vessels,
    /// Straight and gently curved 3 px lines crossing the image.
    Roads,
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Cells => "cells",
            SyntheticKind::Vessels => "vessels",
            SyntheticKind::Roads => "roads",
        })
    }
}

impl FromStr for SyntheticKind {
    type Err = CwmiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cells" => Ok(SyntheticKind::Cells),
            "vessels" => Ok(SyntheticKind::Vessels),
            "roads" => Ok(SyntheticKind::Roads),
            _ => Err(CwmiError::InvalidConfig(format!("unknown synthetic kind '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, size: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            kind,
            size,
            noise_sigma,
            seed,
        }
    }

    /// Checks the size against a pyramid depth.
    pub fn validate(&self, levels: usize) -> Result<()> {
        let block = 1usize << levels;
        if self.size == 0 || self.size % block != 0 {
            return Err(CwmiError::NotDivisible {
                height: self.size,
                width: self.size,
                levels,
            });
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(CwmiError::InvalidConfig(format!("noise sigma {} must be non-negative", self.noise_sigma)));
        }
        Ok(())
    }
}

/// Renders the label and a noisy blurred input image.
///
/// `levels` is the pyramid depth the sample must support.
pub fn generate<T: Scalar>(spec: &SyntheticSpec, levels: usize) -> Result<(Array2<T>, BinaryMask)> {
    spec.validate(levels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.size;
    let mask = match spec.kind {
        SyntheticKind::Cells => cells(n, &mut rng),
        SyntheticKind::Vessels => vessels(n, &mut rng),
        SyntheticKind::Roads => roads(n, &mut rng),
    };
    let label = BinaryMask::new(mask.mapv(u8::from))?;
    let mut input = blur(&label.to_values::<f64>());
    if spec.noise_sigma > 0.0 {
        for v in input.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += spec.noise_sigma * z;
        }
    }
    Ok((input.mapv(T::lit), label))
}

/// 3x3 binomial blur with edge replication.
pub fn blur(image: &Array2<f64>) -> Array2<f64> {
    let (h, w) = image.dim();
    let k = [1.0, 2.0, 1.0];
    Array2::from_shape_fn((h, w), |(i, j)| {
        let mut acc = 0.0;
        for (di, ki) in k.iter().enumerate() {
            for (dj, kj) in k.iter().enumerate() {
                let r = (i + di).saturating_sub(1).min(h - 1);
                let c = (j + dj).saturating_sub(1).min(w - 1);
                acc += ki * kj * image[[r, c]];
            }
        }
        acc / 16.0
    })
}

fn cells(n: usize, rng: &mut ChaCha8Rng) -> Array2<bool> {
    let count = (n * n / 256).max(4);
    let seeds: Vec<(f64, f64)> = (0..count)
        .map(|_| (rng.random::<f64>() * n as f64, rng.random::<f64>() * n as f64))
        .collect();
    let owner = Array2::from_shape_fn((n, n), |(i, j)| {
        let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
        (0..count)
            .min_by(|&a, &b| {
                let da = (seeds[a].0 - y).powi(2) + (seeds[a].1 - x).powi(2);
                let db = (seeds[b].0 - y).powi(2) + (seeds[b].1 - x).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or(0)
    });
    // A pixel is boundary when a 4-neighbour belongs to another region; both
    // sides of each edge are marked, giving 2 px walls.
    Array2::from_shape_fn((n, n), |(i, j)| {
        let o = owner[[i, j]];
        let neighbours = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        neighbours
            .iter()
            .filter(|&&(r, c)| r < n && c < n)
            .all(|&(r, c)| owner[[r, c]] == o)
    })
}

fn stamp(mask: &mut Array2<bool>, y: f64, x: f64, radius: f64) {
    let (h, w) = mask.dim();
    let r = radius.ceil() as isize;
    let (ci, cj) = (y.floor() as isize, x.floor() as isize);
    for i in ci - r..=ci + r {
        for j in cj - r..=cj + r {
            if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
                continue;
            }
            let (dy, dx) = (i as f64 + 0.5 - y, j as f64 + 0.5 - x);
            if dy * dy + dx * dx <= radius * radius {
                mask[[i as usize, j as usize]] = true;
            }
        }
    }
}

fn fraction(mask: &Array2<bool>) -> f64 {
    mask.iter().filter(|&&v| v).count() as f64 / mask.len() as f64
}

/// Draws a stroke into a copy of `mask` and keeps it unless the foreground
/// would exceed the thin-structure limit.
fn add_stroke(mask: &mut Array2<bool>, points: &[(f64, f64)], radius: f64) -> bool {
    let mut trial = mask.clone();
    for &(y, x) in points {
        stamp(&mut trial, y, x, radius);
    }
    if fraction(&trial) > THIN_FOREGROUND_LIMIT {
        return false;
    }
    *mask = trial;
    true
}

fn edge_point(n: f64, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
    let t = rng.random::<f64>() * n;
    let inward = rng.random::<f64>() - 0.5;
    match rng.random_range(0..4) {
        0 => (0.0, t, std::f64::consts::FRAC_PI_2 + inward),
        1 => (n, t, -std::f64::consts::FRAC_PI_2 + inward),
        2 => (t, 0.0, inward),
        _ => (t, n, std::f64::consts::PI + inward),
    }
}

fn vessels(n: usize, rng: &mut ChaCha8Rng) -> Array2<bool> {
    let size = n as f64;
    let mut mask = Array2::from_elem((n, n), false);
    let curves = 3 + n / 32;
    for _ in 0..curves {
        let (mut y, mut x, mut heading) = edge_point(size, rng);
        let radius = 0.5 + rng.random::<f64>();
        let mut turn = 0.0;
        let mut points = Vec::new();
        for _ in 0..4 * n {
            points.push((y, x));
            turn = 0.9 * turn + 0.05 * (rng.random::<f64>() - 0.5);
            heading += turn;
            y += heading.sin() * 0.5;
            x += heading.cos() * 0.5;
            if !(-1.0..=size + 1.0).contains(&y) || !(-1.0..=size + 1.0).contains(&x) {
                break;
            }
        }
        if !add_stroke(&mut mask, &points, radius) {
            break;
        }
    }
    mask
}

fn roads(n: usize, rng: &mut ChaCha8Rng) -> Array2<bool> {
    let size = n as f64;
    let mut mask = Array2::from_elem((n, n), false);
    let lines = 2 + n / 32;
    for _ in 0..lines {
        let (y0, x0, _) = edge_point(size, rng);
        let (y1, x1, _) = edge_point(size, rng);
        let bend = if rng.random::<bool>() { 0.25 * size * (rng.random::<f64>() - 0.5) } else { 0.0 };
        let (my, mx) = ((y0 + y1) / 2.0 + bend, (x0 + x1) / 2.0 - bend);
        let samples = 4 * n;
        let points: Vec<(f64, f64)> = (0..=samples)
            .map(|s| {
                let t = s as f64 / samples as f64;
                let u = 1.0 - t;
                (u * u * y0 + 2.0 * u * t * my + t * t * y1, u * u * x0 + 2.0 * u * t * mx + t * t * x1)
            })
            .collect();
        if !add_stroke(&mut mask, &points, 1.5) {
            break;
        }
    }
    mask
}
