//! Segmentation quality metrics on binary masks and instance labelings.
//!
//! Entropies use the natural log. Distances are in pixels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, CwmiError, Result};
use crate::scalar::Scalar;

/// Foreground/background mask with values in `{0, 1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    data: Array2<u8>,
}

impl BinaryMask {
    pub fn new(data: Array2<u8>) -> Result<Self> {
        if let Some(v) = data.iter().find(|&&v| v > 1) {
            return Err(CwmiError::OutOfRange(format!("mask value {v} is not binary")));
        }
        Ok(Self { data })
    }

    pub fn from_fn(dim: (usize, usize), mut f: impl FnMut(usize, usize) -> bool) -> Self {
        Self {
            data: Array2::from_shape_fn(dim, |(i, j)| f(i, j) as u8),
        }
    }

    /// Accepts a real-valued map whose entries are exactly 0 or 1.
    pub fn from_values<T: Scalar>(values: &Array2<T>) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v != T::zero() && v != T::one()) {
            return Err(CwmiError::OutOfRange(format!("mask value {v} is not binary")));
        }
        Ok(Self {
            data: values.mapv(|v| (v == T::one()) as u8),
        })
    }

    /// Foreground where `prob > threshold`.
    pub fn threshold<T: Scalar>(prob: &Array2<T>, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(CwmiError::OutOfRange(format!("threshold {threshold} outside (0, 1)")));
        }
        if prob.iter().any(|v| !v.is_finite()) {
            return Err(CwmiError::NonFinite);
        }
        Ok(Self {
            data: prob.mapv(|p| (p.to_f64_lossy() > threshold) as u8),
        })
    }

    pub fn data(&self) -> &Array2<u8> {
        &self.data
    }

    pub fn dim(&self) -> (usize, usize) {
        self.data.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[[i, j]] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn to_values<T: Scalar>(&self) -> Array2<T> {
        self.data.mapv(|v| if v == 1 { T::one() } else { T::zero() })
    }

    pub fn transposed(&self) -> Self {
        Self {
            data: self.data.t().to_owned(),
        }
    }

    /// Foreground pixels with at least one 4-neighbour in the background;
    /// pixels outside the image count as background.
    pub fn boundary(&self) -> Vec<(usize, usize)> {
        let (h, w) = self.dim();
        let mut out = Vec::new();
        for i in 0..h {
            for j in 0..w {
                if !self.get(i, j) {
                    continue;
                }
                let edge = i == 0
                    || j == 0
                    || i + 1 == h
                    || j + 1 == w
                    || !self.get(i - 1, j)
                    || !self.get(i + 1, j)
                    || !self.get(i, j - 1)
                    || !self.get(i, j + 1);
                if edge {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Per-pixel cluster ids. Connected-component labelings use 0 for the
/// background, which still counts as a cluster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceLabeling {
    labels: Array2<u32>,
}

impl InstanceLabeling {
    pub fn new(labels: Array2<u32>) -> Self {
        Self { labels }
    }

    pub fn labels(&self) -> &Array2<u32> {
        &self.labels
    }

    pub fn dim(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// Number of distinct ids present.
    pub fn cluster_count(&self) -> usize {
        let mut ids: Vec<u32> = self.labels.iter().copied().collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    /// Largest id; for a component labeling, the number of foreground components.
    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[default]
    Four,
    Eight,
}

impl FromStr for Connectivity {
    type Err = CwmiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" => Ok(Connectivity::Four),
            "8" => Ok(Connectivity::Eight),
            _ => Err(CwmiError::InvalidConfig(format!("connectivity must be 4 or 8, got '{s}'"))),
        }
    }
}

impl fmt::Display for Connectivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Connectivity::Four => "4",
            Connectivity::Eight => "8",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub miou: f64,
    pub mdice: f64,
    pub vi: f64,
    pub ari: f64,
    /// `None` when either mask has no foreground.
    pub hd: Option<f64>,
}

fn overlap(a: u64, b: u64, both: u64) -> (f64, f64) {
    if a + b == 0 {
        return (1.0, 1.0);
    }
    let union = a + b - both;
    (both as f64 / union as f64, 2.0 * both as f64 / (a + b) as f64)
}

/// Class-averaged IoU and Dice over foreground and background.
///
/// A class absent from both masks scores 1.
pub fn iou_dice(label: &BinaryMask, pred: &BinaryMask) -> Result<(f64, f64)> {
    check_shape(label.data.shape(), pred.data.shape())?;
    let mut counts = [[0u64; 2]; 2];
    Zip::from(&label.data).and(&pred.data).for_each(|&y, &p| counts[y as usize][p as usize] += 1);
    let fg = overlap(counts[1][0] + counts[1][1], counts[0][1] + counts[1][1], counts[1][1]);
    let bg = overlap(counts[0][0] + counts[0][1], counts[0][0] + counts[1][0], counts[0][0]);
    Ok(((fg.0 + bg.0) / 2.0, (fg.1 + bg.1) / 2.0))
}

/// Dice of the foreground class alone; 1 when both masks are empty.
pub fn foreground_dice(label: &BinaryMask, pred: &BinaryMask) -> Result<f64> {
    check_shape(label.data.shape(), pred.data.shape())?;
    let (mut a, mut b, mut both) = (0u64, 0u64, 0u64);
    Zip::from(&label.data).and(&pred.data).for_each(|&y, &p| {
        a += y as u64;
        b += p as u64;
        both += (y & p) as u64;
    });
    Ok(overlap(a, b, both).1)
}

/// Fraction of pixels on which the masks agree.
pub fn pixel_accuracy(label: &BinaryMask, pred: &BinaryMask) -> Result<f64> {
    check_shape(label.data.shape(), pred.data.shape())?;
    let agree = Zip::from(&label.data).and(&pred.data).fold(0usize, |n, &y, &p| n + (y == p) as usize);
    Ok(agree as f64 / label.data.len().max(1) as f64)
}

/// Labels foreground components 1, 2, ... in raster order of their first
/// pixel; background stays 0.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> InstanceLabeling {
    let (h, w) = mask.dim();
    let mut labels = Array2::<u32>::zeros((h, w));
    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    };
    let mut next = 0u32;
    let mut stack = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if !mask.get(i, j) || labels[[i, j]] != 0 {
                continue;
            }
            next += 1;
            labels[[i, j]] = next;
            stack.push((i, j));
            while let Some((r, c)) = stack.pop() {
                for &(dr, dc) in offsets {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if mask.get(nr, nc) && labels[[nr, nc]] == 0 {
                        labels[[nr, nc]] = next;
                        stack.push((nr, nc));
                    }
                }
            }
        }
    }
    InstanceLabeling { labels }
}

struct Contingency {
    joint: BTreeMap<(u32, u32), u64>,
    rows: BTreeMap<u32, u64>,
    cols: BTreeMap<u32, u64>,
    total: u64,
}

fn contingency(a: &InstanceLabeling, b: &InstanceLabeling) -> Result<Contingency> {
    check_shape(a.labels.shape(), b.labels.shape())?;
    let mut t = Contingency {
        joint: BTreeMap::new(),
        rows: BTreeMap::new(),
        cols: BTreeMap::new(),
        total: a.labels.len() as u64,
    };
    Zip::from(&a.labels).and(&b.labels).for_each(|&x, &y| {
        *t.joint.entry((x, y)).or_default() += 1;
        *t.rows.entry(x).or_default() += 1;
        *t.cols.entry(y).or_default() += 1;
    });
    Ok(t)
}

fn entropy(counts: impl Iterator<Item = u64>, total: f64) -> f64 {
    counts
        .map(|c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// `H(a) + H(b) - 2 I(a; b)`, computed as `2 H(a, b) - H(a) - H(b)`.
pub fn variation_of_information(a: &InstanceLabeling, b: &InstanceLabeling) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.total == 0 {
        return Ok(0.0);
    }
    let n = t.total as f64;
    let joint = entropy(t.joint.values().copied(), n);
    let ha = entropy(t.rows.values().copied(), n);
    let hb = entropy(t.cols.values().copied(), n);
    Ok((2.0 * joint - ha - hb).max(0.0))
}

fn pairs(n: u64) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand index under the permutation model. When the expected and
/// maximal index coincide (e.g. both labelings are a single cluster) the
/// labelings agree perfectly and the result is 1.
pub fn adjusted_rand_index(a: &InstanceLabeling, b: &InstanceLabeling) -> Result<f64> {
    let t = contingency(a, b)?;
    let index: f64 = t.joint.values().map(|&c| pairs(c)).sum();
    let sa: f64 = t.rows.values().map(|&c| pairs(c)).sum();
    let sb: f64 = t.cols.values().map(|&c| pairs(c)).sum();
    let all = pairs(t.total);
    if all == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / all;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Exact squared Euclidean distance transform of a 1D sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        if f[q].is_infinite() {
            continue;
        }
        if f[v[0]].is_infinite() {
            v[0] = q;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if f[v[0]].is_infinite() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Squared distance from every pixel to the nearest listed site.
fn squared_distance_map(dim: (usize, usize), sites: &[(usize, usize)]) -> Array2<f64> {
    let (h, w) = dim;
    let mut g = Array2::from_elem((h, w), f64::INFINITY);
    for &s in sites {
        g[s] = 0.0;
    }
    let n = h.max(w);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for j in 0..w {
        for i in 0..h {
            f[i] = g[[i, j]];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v[..h], &mut z[..=h]);
        for i in 0..h {
            g[[i, j]] = out[i];
        }
    }
    for i in 0..h {
        for j in 0..w {
            f[j] = g[[i, j]];
        }
        edt_1d(&f[..w], &mut out[..w], &mut v[..w], &mut z[..=w]);
        for j in 0..w {
            g[[i, j]] = out[j];
        }
    }
    g
}

fn directed(from: &[(usize, usize)], to_map: &Array2<f64>) -> f64 {
    from.iter().map(|&p| to_map[p]).fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance between the boundary pixel sets of two masks.
pub fn hausdorff_distance(label: &BinaryMask, pred: &BinaryMask) -> Result<f64> {
    check_shape(label.data.shape(), pred.data.shape())?;
    let a = label.boundary();
    let b = pred.boundary();
    if a.is_empty() || b.is_empty() {
        return Err(CwmiError::EmptyForeground);
    }
    let da = squared_distance_map(label.dim(), &a);
    let db = squared_distance_map(pred.dim(), &b);
    Ok(directed(&a, &db).max(directed(&b, &da)).sqrt())
}

/// Thresholds `pred_prob` and computes all metrics; VI and ARI compare the
/// 4-connected component labelings.
pub fn evaluate<T: Scalar>(label: &BinaryMask, pred_prob: &Array2<T>, threshold: f64) -> Result<MetricsReport> {
    let pred = BinaryMask::threshold(pred_prob, threshold)?;
    evaluate_masks(label, &pred)
}

pub fn evaluate_masks(label: &BinaryMask, pred: &BinaryMask) -> Result<MetricsReport> {
    let (miou, mdice) = iou_dice(label, pred)?;
    let la = connected_components(label, Connectivity::Four);
    let lb = connected_components(pred, Connectivity::Four);
    let hd = match hausdorff_distance(label, pred) {
        Ok(d) => Some(d),
        Err(CwmiError::EmptyForeground) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        miou,
        mdice,
        vi: variation_of_information(&la, &lb)?,
        ari: adjusted_rand_index(&la, &lb)?,
        hd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_map_matches_brute_force() {
        let sites = [(0, 0), (4, 7), (9, 2)];
        let g = squared_distance_map((10, 12), &sites);
        for ((i, j), &d) in g.indexed_iter() {
            let brute = sites
                .iter()
                .map(|&(a, b)| (i as f64 - a as f64).powi(2) + (j as f64 - b as f64).powi(2))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(d, brute);
        }
    }

    #[test]
    fn thresholding_is_strict() {
        let m = BinaryMask::threshold(&ndarray::array![[0.5, 0.51]], 0.5).unwrap();
        assert!(!m.get(0, 0) && m.get(0, 1));
    }
}
