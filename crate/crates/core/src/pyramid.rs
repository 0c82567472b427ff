//! Frequency-domain real and complex steerable pyramids.
//!
//! The decomposition of an `H x W` image with `N` levels and `K` orientations
//! produces a real high-frequency residue at full size, `N` stacks of `K`
//! oriented subbands (level `n` at `H / 2^(n-1)`), and a real low-frequency
//! residue at the size of the last band level.
//!
//! All filtering happens on the DFT grid. Downsampling crops the central
//! quarter of a low-passed spectrum, which is exact because the low-pass
//! vanishes beyond half the band. Spectra are rescaled by 1/2 at each crop so
//! that the real pyramid is a tight frame: its adjoint is its inverse.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{check_shape, CwmiError, Result};
use crate::fft::{signed_frequency, Fft2d};
use crate::scalar::Scalar;

/// Real (steerable) or complex (analytic) subbands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PyramidMode {
    Real,
    Complex,
}

impl std::str::FromStr for PyramidMode {
    type Err = CwmiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Self::Real),
            "complex" => Ok(Self::Complex),
            other => Err(CwmiError::InvalidConfig(format!("unknown pyramid mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PyramidConfig {
    pub levels: usize,
    pub orientations: usize,
    pub mode: PyramidMode,
}

impl PyramidConfig {
    pub fn new(levels: usize, orientations: usize, mode: PyramidMode) -> Result<Self> {
        let config = Self {
            levels,
            orientations,
            mode,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(CwmiError::InvalidPyramid("at least one level is required"));
        }
        if self.orientations == 0 {
            return Err(CwmiError::InvalidPyramid("at least one orientation is required"));
        }
        Ok(())
    }

    /// Checks that an `height x width` image can be decomposed.
    pub fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        let factor = 1usize
            .checked_shl(self.levels as u32)
            .ok_or(CwmiError::InvalidPyramid("too many levels"))?;
        if height == 0 || width == 0 || height % factor != 0 || width % factor != 0 {
            return Err(CwmiError::NotDivisible {
                height,
                width,
                levels: self.levels,
            });
        }
        Ok(())
    }

    /// Spatial size of band level `n` (1-based).
    pub fn level_dims(&self, height: usize, width: usize, n: usize) -> (usize, usize) {
        (height >> (n - 1), width >> (n - 1))
    }
}

/// Radial high-pass: 0 below `pi/4`, 1 above `pi/2`, raised-cosine in between
/// on a log2 frequency axis.
pub fn radial_high_pass(r: f64) -> f64 {
    if r <= FRAC_PI_4 {
        0.0
    } else if r >= FRAC_PI_2 {
        1.0
    } else {
        (FRAC_PI_2 * (2.0 * r / PI).log2()).cos()
    }
}

/// Radial low-pass complementary to [`radial_high_pass`]: `H^2 + L^2 = 1`.
pub fn radial_low_pass(r: f64) -> f64 {
    if r <= FRAC_PI_4 {
        1.0
    } else if r >= FRAC_PI_2 {
        0.0
    } else {
        (FRAC_PI_2 * (4.0 * r / PI).log2()).cos()
    }
}

/// Angular gain `2^(K-1) (K-1)! / sqrt(K (2(K-1))!)`, shared by all orientations.
pub fn orientation_gain(orientations: usize) -> f64 {
    let k = orientations as f64;
    // Work in log space; factorials overflow quickly for large K.
    let ln_fact = |n: usize| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
    let m = orientations - 1;
    ((k - 1.0) * 2f64.ln() + ln_fact(m) - 0.5 * (k.ln() + ln_fact(2 * m))).exp()
}

/// Center angle of orientation `index` (0-based): `pi (index + 1) / K`.
pub fn orientation_center(index: usize, orientations: usize) -> f64 {
    PI * (index + 1) as f64 / orientations as f64
}

fn wrap_angle(mut d: f64) -> f64 {
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Real angular mask `alpha |cos(theta - theta_k)|^(K-1)`.
pub fn angular_real(theta: f64, index: usize, orientations: usize) -> f64 {
    let c = (theta - orientation_center(index, orientations)).cos().abs();
    orientation_gain(orientations) * c.powi(orientations as i32 - 1)
}

/// Complex (half-plane) angular mask: `2 alpha cos(d)^(K-1)` for `|d| < pi/2`,
/// zero otherwise, where `d` is the wrapped offset from the orientation center.
///
/// On the dividing line itself the mask takes the real-mask value, which is
/// zero unless `K = 1`. That keeps the Hermitian part of the complex mask equal
/// to the real mask everywhere.
pub fn angular_complex(theta: f64, index: usize, orientations: usize) -> f64 {
    let d = wrap_angle(theta - orientation_center(index, orientations)).abs();
    let alpha = orientation_gain(orientations);
    if (d - FRAC_PI_2).abs() <= 1e-12 {
        if orientations == 1 {
            alpha
        } else {
            0.0
        }
    } else if d < FRAC_PI_2 {
        2.0 * alpha * d.cos().powi(orientations as i32 - 1)
    } else {
        0.0
    }
}

/// Masks for one band level, sampled on that level's DFT grid (unshifted
/// layout). All masks are real-valued.
#[derive(Clone, Debug)]
pub struct LevelFilters<T: Scalar> {
    pub height: usize,
    pub width: usize,
    pub high_pass: Array2<T>,
    pub low_pass: Array2<T>,
    /// One angular mask per orientation, zero at DC.
    pub angular: Vec<Array2<T>>,
    /// Products `high_pass * angular[k]`.
    pub band_pass: Vec<Array2<T>>,
}

#[derive(Clone, Debug)]
pub struct FilterBank<T: Scalar> {
    pub config: PyramidConfig,
    /// High-pass for the full-resolution residue (transition `pi/2 .. pi`).
    pub residual_high: Array2<T>,
    /// Low-pass feeding the first band level.
    pub residual_low: Array2<T>,
    pub levels: Vec<LevelFilters<T>>,
}

/// Polar coordinates `(r, theta)` of every bin of an `h x w` DFT grid.
fn polar_grid(h: usize, w: usize) -> Array2<(f64, f64)> {
    Array2::from_shape_fn((h, w), |(i, j)| {
        let wy = 2.0 * PI * signed_frequency(i, h) as f64 / h as f64;
        let wx = 2.0 * PI * signed_frequency(j, w) as f64 / w as f64;
        (wy.hypot(wx), wy.atan2(wx))
    })
}

/// Samples every mask of the pyramid for an `height x width` image.
pub fn build_filters<T: Scalar>(height: usize, width: usize, config: &PyramidConfig) -> Result<FilterBank<T>> {
    config.check_dims(height, width)?;
    let k = config.orientations;
    let polar = polar_grid(height, width);
    let residual_high = polar.mapv(|(r, _)| T::lit(radial_high_pass(r / 2.0)));
    let residual_low = polar.mapv(|(r, _)| T::lit(radial_low_pass(r / 2.0)));

    let levels = (1..=config.levels)
        .map(|n| {
            let (h, w) = config.level_dims(height, width, n);
            let polar = polar_grid(h, w);
            let high_pass = polar.mapv(|(r, _)| T::lit(radial_high_pass(r)));
            let low_pass = polar.mapv(|(r, _)| T::lit(radial_low_pass(r)));
            let angular: Vec<Array2<T>> = (0..k)
                .map(|idx| {
                    polar.mapv(|(r, theta)| {
                        if r == 0.0 {
                            return T::zero();
                        }
                        T::lit(match config.mode {
                            PyramidMode::Real => angular_real(theta, idx, k),
                            PyramidMode::Complex => angular_complex(theta, idx, k),
                        })
                    })
                })
                .collect();
            let band_pass = angular.iter().map(|g| g * &high_pass).collect();
            LevelFilters {
                height: h,
                width: w,
                high_pass,
                low_pass,
                angular,
                band_pass,
            }
        })
        .collect();

    Ok(FilterBank {
        config: *config,
        residual_high,
        residual_low,
        levels,
    })
}

/// Oriented subbands of one level, shape `K x H_n x W_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandStack<T: Scalar> {
    /// 1-based level index.
    pub level: usize,
    pub data: Array3<Complex<T>>,
}

impl<T: Scalar> SubbandStack<T> {
    pub fn zeros(level: usize, orientations: usize, height: usize, width: usize) -> Self {
        Self {
            level,
            data: Array3::from_elem((orientations, height, width), Complex::new(T::zero(), T::zero())),
        }
    }

    pub fn orientations(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    /// Number of pixels per orientation.
    pub fn sample_count(&self) -> usize {
        self.data.len() / self.orientations().max(1)
    }

    pub fn magnitudes(&self) -> Array3<T> {
        self.data.mapv(|c| c.norm())
    }
}

/// Output of [`decompose`]: residues plus `N` oriented band levels.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition<T: Scalar> {
    pub high_residue: Array2<T>,
    pub bands: Vec<SubbandStack<T>>,
    pub low_residue: Array2<T>,
}

impl<T: Scalar> Decomposition<T> {
    /// All-zero decomposition with the shapes an `height x width` image produces.
    pub fn zeros(height: usize, width: usize, config: &PyramidConfig) -> Self {
        let bands = (1..=config.levels)
            .map(|n| {
                let (h, w) = config.level_dims(height, width, n);
                SubbandStack::zeros(n, config.orientations, h, w)
            })
            .collect();
        let (lh, lw) = config.level_dims(height, width, config.levels);
        Self {
            high_residue: Array2::zeros((height, width)),
            bands,
            low_residue: Array2::zeros((lh, lw)),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.high_residue.dim()
    }

    /// Real inner product `Re sum conj(a) b` over residues and every subband.
    pub fn inner(&self, other: &Self) -> T {
        let mut acc = (&self.high_residue * &other.high_residue).sum();
        acc = acc + (&self.low_residue * &other.low_residue).sum();
        for (a, b) in self.bands.iter().zip(&other.bands) {
            acc = acc
                + a.data
                    .iter()
                    .zip(b.data.iter())
                    .map(|(x, y)| x.re * y.re + x.im * y.im)
                    .sum::<T>();
        }
        acc
    }

    pub fn norm(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn scaled(&self, scale: T) -> Self {
        Self {
            high_residue: self.high_residue.mapv(|v| v * scale),
            bands: self
                .bands
                .iter()
                .map(|b| SubbandStack {
                    level: b.level,
                    data: b.data.mapv(|v| v.scale(scale)),
                })
                .collect(),
            low_residue: self.low_residue.mapv(|v| v * scale),
        }
    }

    /// `self + scale * other`, elementwise.
    pub fn scaled_add(&self, scale: T, other: &Self) -> Self {
        Self {
            high_residue: &self.high_residue + &other.high_residue.mapv(|v| v * scale),
            bands: self
                .bands
                .iter()
                .zip(&other.bands)
                .map(|(a, b)| SubbandStack {
                    level: a.level,
                    data: &a.data + &b.data.mapv(|v| v.scale(scale)),
                })
                .collect(),
            low_residue: &self.low_residue + &other.low_residue.mapv(|v| v * scale),
        }
    }

    /// Copy with every subband replaced by its real part.
    pub fn real_part(&self) -> Self {
        Self {
            high_residue: self.high_residue.clone(),
            bands: self
                .bands
                .iter()
                .map(|b| SubbandStack {
                    level: b.level,
                    data: b.data.mapv(|c| Complex::new(c.re, T::zero())),
                })
                .collect(),
            low_residue: self.low_residue.clone(),
        }
    }

    fn check_against(&self, height: usize, width: usize, config: &PyramidConfig) -> Result<()> {
        check_shape(&[height, width], self.high_residue.shape())?;
        if self.bands.len() != config.levels {
            return Err(CwmiError::ShapeMismatch {
                expected: vec![config.levels],
                found: vec![self.bands.len()],
            });
        }
        for (n, band) in self.bands.iter().enumerate() {
            let (h, w) = config.level_dims(height, width, n + 1);
            check_shape(&[config.orientations, h, w], band.data.shape())?;
        }
        let (lh, lw) = config.level_dims(height, width, config.levels);
        check_shape(&[lh, lw], self.low_residue.shape())
    }
}

/// Keeps the central quarter of an unshifted spectrum, scaled by 1/2.
fn crop_spectrum<T: Scalar>(z: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let (h, w) = z.dim();
    let (nh, nw) = (h / 2, w / 2);
    let half = T::lit(0.5);
    Array2::from_shape_fn((nh, nw), |(i, j)| {
        let fi = signed_frequency(i, nh).rem_euclid(h as isize) as usize;
        let fj = signed_frequency(j, nw).rem_euclid(w as isize) as usize;
        z[[fi, fj]].scale(half)
    })
}

/// Adjoint of [`crop_spectrum`]: embeds into a zero spectrum twice the size.
fn pad_spectrum<T: Scalar>(z: &Array2<Complex<T>>) -> Array2<Complex<T>> {
    let (nh, nw) = z.dim();
    let (h, w) = (nh * 2, nw * 2);
    let half = T::lit(0.5);
    let mut out = Array2::from_elem((h, w), Complex::new(T::zero(), T::zero()));
    for ((i, j), v) in z.indexed_iter() {
        let fi = signed_frequency(i, nh).rem_euclid(h as isize) as usize;
        let fj = signed_frequency(j, nw).rem_euclid(w as isize) as usize;
        out[[fi, fj]] = v.scale(half);
    }
    out
}

fn apply_mask<T: Scalar>(z: &Array2<Complex<T>>, mask: &Array2<T>) -> Array2<Complex<T>> {
    let mut out = z.clone();
    out.zip_mut_with(mask, |c, &m| *c = c.scale(m));
    out
}

/// A pyramid bound to one image size: filters plus FFT plans per level.
///
/// Building the filters dominates the cost of a single decomposition, so
/// callers that decompose many images of the same size should keep one of
/// these around.
#[derive(Clone, Debug)]
pub struct SteerablePyramid<T: Scalar> {
    height: usize,
    width: usize,
    filters: FilterBank<T>,
    plans: Vec<Fft2d<T>>,
}

impl<T: Scalar> SteerablePyramid<T> {
    pub fn new(height: usize, width: usize, config: &PyramidConfig) -> Result<Self> {
        let filters = build_filters(height, width, config)?;
        let plans = filters.levels.iter().map(|l| Fft2d::new(l.height, l.width)).collect();
        Ok(Self {
            height,
            width,
            filters,
            plans,
        })
    }

    pub fn config(&self) -> &PyramidConfig {
        &self.filters.config
    }

    pub fn filters(&self) -> &FilterBank<T> {
        &self.filters
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn inverse_to_grid(&self, level: usize, mut spectrum: Array2<Complex<T>>) -> Array2<Complex<T>> {
        let plan = &self.plans[level];
        plan.inverse(&mut spectrum);
        let scale = T::one() / T::from_usize_lossy(spectrum.len());
        spectrum.mapv_inplace(|c| c.scale(scale));
        spectrum
    }

    pub fn decompose(&self, image: &Array2<T>) -> Result<Decomposition<T>> {
        check_shape(&[self.height, self.width], image.shape())?;
        if image.iter().any(|v| !v.is_finite()) {
            return Err(CwmiError::NonFinite);
        }
        let config = self.filters.config;
        let spectrum = self.plans[0].forward_real(image);

        let high = self.inverse_to_grid(0, apply_mask(&spectrum, &self.filters.residual_high));
        let high_residue = high.mapv(|c| c.re);

        let mut z = apply_mask(&spectrum, &self.filters.residual_low);
        let mut bands = Vec::with_capacity(config.levels);
        for (n, level) in self.filters.levels.iter().enumerate() {
            let mut data = Array3::from_elem(
                (config.orientations, level.height, level.width),
                Complex::new(T::zero(), T::zero()),
            );
            let scale = T::one() / T::from_usize_lossy(level.height * level.width);
            for (k, mask) in level.band_pass.iter().enumerate() {
                let mut sub = Zip::from(&z).and(mask).map_collect(|c, &m| c.scale(m * scale));
                self.plans[n].inverse(&mut sub);
                let mut out = data.index_axis_mut(Axis(0), k);
                match config.mode {
                    PyramidMode::Real => out.zip_mut_with(&sub, |o, c| *o = Complex::new(c.re, T::zero())),
                    PyramidMode::Complex => out.assign(&sub),
                }
            }
            bands.push(SubbandStack { level: n + 1, data });
            z = apply_mask(&z, &level.low_pass);
            if n + 1 < config.levels {
                z = crop_spectrum(&z);
            }
        }
        let low_residue = self.inverse_to_grid(config.levels - 1, z).mapv(|c| c.re);

        Ok(Decomposition {
            high_residue,
            bands,
            low_residue,
        })
    }

    /// Real-linear adjoint of [`Self::decompose`] under `Re <a, b>`.
    pub fn apply_adjoint(&self, cotangent: &Decomposition<T>) -> Result<Array2<T>> {
        let config = self.filters.config;
        cotangent.check_against(self.height, self.width, &config)?;

        let last = config.levels - 1;
        let mut acc: Option<Array2<Complex<T>>> = None;
        for n in (0..config.levels).rev() {
            let level = &self.filters.levels[n];
            let plan = &self.plans[n];
            let inv_count = T::one() / T::from_usize_lossy(level.height * level.width);

            let mut zbar = match acc.take() {
                Some(next) => apply_mask(&pad_spectrum(&next), &level.low_pass),
                None => {
                    let mut low = cotangent.low_residue.mapv(|v| Complex::new(v * inv_count, T::zero()));
                    plan.forward(&mut low);
                    debug_assert_eq!(n, last);
                    apply_mask(&low, &level.low_pass)
                }
            };
            let band = &cotangent.bands[n].data;
            for (k, mask) in level.band_pass.iter().enumerate() {
                let mut g = band.index_axis(Axis(0), k).mapv(|c| c.scale(inv_count));
                plan.forward(&mut g);
                g.zip_mut_with(mask, |c, &m| *c = c.scale(m));
                zbar.zip_mut_with(&g, |a, b| *a = *a + *b);
            }
            acc = Some(zbar);
        }

        let plan = &self.plans[0];
        let inv_count = T::one() / T::from_usize_lossy(self.height * self.width);
        let mut xbar = apply_mask(&acc.expect("at least one level"), &self.filters.residual_low);
        let mut high = cotangent.high_residue.mapv(|v| Complex::new(v * inv_count, T::zero()));
        plan.forward(&mut high);
        high.zip_mut_with(&self.filters.residual_high, |c, &m| *c = c.scale(m));
        xbar.zip_mut_with(&high, |a, b| *a = *a + *b);
        plan.inverse(&mut xbar);
        Ok(xbar.mapv(|c| c.re))
    }

    /// Inverts the decomposition using the real parts of its subbands.
    pub fn reconstruct(&self, decomposition: &Decomposition<T>) -> Result<Array2<T>> {
        match self.filters.config.mode {
            PyramidMode::Real => self.apply_adjoint(decomposition),
            PyramidMode::Complex => self.apply_adjoint(&decomposition.real_part()),
        }
    }
}

pub fn decompose<T: Scalar>(image: &Array2<T>, config: &PyramidConfig) -> Result<Decomposition<T>> {
    let (h, w) = image.dim();
    SteerablePyramid::new(h, w, config)?.decompose(image)
}

pub fn reconstruct<T: Scalar>(decomposition: &Decomposition<T>, config: &PyramidConfig) -> Result<Array2<T>> {
    let (h, w) = decomposition.dims();
    SteerablePyramid::new(h, w, config)?.reconstruct(decomposition)
}

pub fn apply_adjoint<T: Scalar>(cotangent: &Decomposition<T>, config: &PyramidConfig) -> Result<Array2<T>> {
    let (h, w) = cotangent.dims();
    SteerablePyramid::new(h, w, config)?.apply_adjoint(cotangent)
}
