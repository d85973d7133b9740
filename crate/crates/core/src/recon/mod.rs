//! Transient reconstruction and its derived products.
//!
//! [`reconstruct`] fits every pixel with shifted copies of the correlation
//! kernel by OMP. The fitted shift of the strongest atom is the pixel's peak
//! time on the measurement's phase axis, which for source 0 equals the path
//! travel time. Depth, wavefront frames, hue maps and spectra are built from
//! the fit or from the raw samples.

mod image;
mod omp;
mod spectral;
mod study;

pub use image::{
    band_sheet_count, depth_from_peaks, distinct_hue_levels, effective_fps, hue_colorize,
    median_filter_rows, wavefront_frames, DepthMap, HueImage, WavefrontFrames,
    DEFAULT_AMPLITUDE_THRESHOLD, DEFAULT_BAND_TOLERANCE, HUE_RANGE_DEG,
};
pub use omp::{
    best_atom, omp_fit, Dictionary, KernelBasis, OmpResult, PeriodicLagTables, PeriodicShiftBasis,
    SampledBasis, Selection, ShiftBasis,
};
pub use spectral::{
    default_epsilon, dtft_at, dtft_of_axis, dtft_spectrum, spectral_deconvolve,
    unaliased_bandwidth, Spectrum,
};
pub use study::{peak_estimation_error_study, StepError, StudyConfig};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::CorrelationKernel;
use crate::error::{invalid, Result};
use crate::sensor::{uniform_spacing, Measurement};

/// Relative tolerance for treating a phase axis as uniform.
pub const UNIFORM_AXIS_TOLERANCE: f64 = 1e-6;

/// Candidate shifts for each pixel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SearchRegion {
    /// Every axis sample is a candidate shift and the whole axis is fitted.
    Full,
    /// Shifts within `margin` of the pixel's largest sample, fitted on
    /// samples within `half_width` of it.
    AroundPeak { margin: f64, half_width: f64 },
}

impl Default for SearchRegion {
    fn default() -> Self {
        SearchRegion::AroundPeak {
            margin: 5e-9,
            half_width: 25e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    pub sparsity: usize,
    pub search: SearchRegion,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            sparsity: 1,
            search: SearchRegion::default(),
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sparsity == 0 {
            return Err(invalid("sparsity must be at least 1"));
        }
        if let SearchRegion::AroundPeak { margin, half_width } = self.search {
            if !(margin >= 0.0 && margin.is_finite()) {
                return Err(invalid("search margin must be nonnegative"));
            }
            if !(half_width >= margin && half_width.is_finite()) {
                return Err(invalid("fit half width must be at least the search margin"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PixelFit {
    /// Shift of the strongest component, seconds.
    pub peak_time: f64,
    pub amplitude: f64,
    pub residual_norm: f64,
    pub valid: bool,
    /// All `(shift, coefficient)` pairs in pick order.
    pub components: Vec<(f64, f64)>,
}

impl PixelFit {
    fn invalid() -> Self {
        Self {
            peak_time: 0.0,
            amplitude: 0.0,
            residual_norm: 0.0,
            valid: false,
            components: Vec::new(),
        }
    }

    fn from_result(r: &OmpResult, shift_of: impl Fn(&Selection) -> f64) -> Self {
        if r.no_signal || r.selections.is_empty() {
            return Self::invalid();
        }
        let components: Vec<(f64, f64)> =
            r.selections.iter().map(|s| (shift_of(s), s.coefficient)).collect();
        let &(peak_time, amplitude) = components
            .iter()
            .fold(None::<&(f64, f64)>, |best, c| match best {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            })
            .expect("nonempty");
        Self {
            peak_time,
            amplitude,
            residual_norm: r.residual_norm,
            valid: amplitude > 0.0,
            components,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientImage {
    rows: usize,
    cols: usize,
    pixels: Vec<PixelFit>,
}

impl TransientImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<PixelFit>) -> Result<Self> {
        if pixels.len() != rows * cols || pixels.is_empty() {
            return Err(crate::Error::Dimension {
                expected: rows * cols,
                found: pixels.len(),
            });
        }
        Ok(Self { rows, cols, pixels })
    }

    /// Image from peak times alone; `None` marks invalid pixels.
    pub fn from_peaks(rows: usize, cols: usize, peaks: &[Option<(f64, f64)>]) -> Result<Self> {
        let pixels = peaks
            .iter()
            .map(|p| match *p {
                Some((t, a)) => PixelFit {
                    peak_time: t,
                    amplitude: a,
                    residual_norm: 0.0,
                    valid: a > 0.0,
                    components: vec![(t, a)],
                },
                None => PixelFit::invalid(),
            })
            .collect();
        Self::new(rows, cols, pixels)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[PixelFit] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> &PixelFit {
        &self.pixels[row * self.cols + col]
    }

    /// `(min, max)` peak time over valid pixels.
    pub fn peak_range(&self) -> Option<(f64, f64)> {
        self.pixels
            .iter()
            .filter(|p| p.valid)
            .fold(None, |acc, p| match acc {
                None => Some((p.peak_time, p.peak_time)),
                Some((lo, hi)) => Some((lo.min(p.peak_time), hi.max(p.peak_time))),
            })
    }
}

/// Kernel taken from one pixel's own sweep: its samples on a uniform axis,
/// centred on their largest value and held constant beyond the ends.
pub fn measured_kernel(measurement: &Measurement, pixel: usize) -> Result<CorrelationKernel> {
    if pixel >= measurement.num_pixels() {
        return Err(invalid(format!("calibration pixel {pixel} out of range")));
    }
    let spacing = measurement
        .uniform_spacing(UNIFORM_AXIS_TOLERANCE)
        .ok_or_else(|| invalid("measured kernel needs a uniform phase axis"))?;
    let samples = measurement.pixel(pixel).to_vec();
    let origin = argmax_abs(&samples);
    if samples[origin] == 0.0 {
        return Err(invalid("calibration pixel is dark"));
    }
    CorrelationKernel::new(samples, spacing, origin, false)
}

/// Longest repeat searched for when an axis is not uniform.
pub const MAX_AXIS_PERIOD: usize = 64;

/// Smallest `p ≤ max_period` with `x_{i+p} − x_i` constant to within
/// `rel_tol` of the mean spacing, requiring at least two repeats.
pub fn detect_period(axis: &[f64], rel_tol: f64, max_period: usize) -> Option<usize> {
    let n = axis.len();
    if n < 2 {
        return None;
    }
    let mean = (axis[n - 1] - axis[0]) / (n - 1) as f64;
    if !(mean > 0.0) {
        return None;
    }
    (1..=max_period.min(n / 2)).find(|&p| {
        let span = axis[p] - axis[0];
        axis.windows(p + 1).all(|w| ((w[p] - w[0]) - span).abs() <= rel_tol * mean)
    })
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}

fn samples_within(len: usize, spacing: f64, distance: f64) -> usize {
    ((distance / spacing).ceil() as usize).min(len.saturating_sub(1))
}

/// Per-pixel OMP fit with shifted copies of `kernel`.
///
/// Candidate shifts are phase-axis positions. On a uniform axis (within
/// [`UNIFORM_AXIS_TOLERANCE`]) atoms are taken from one lag table, treating
/// the axis as exactly uniform; otherwise the kernel is evaluated at each
/// sample.
pub fn reconstruct(
    measurement: &Measurement,
    kernel: &CorrelationKernel,
    config: &ReconConfig,
) -> Result<TransientImage> {
    config.validate()?;
    let axis = measurement.phases();
    let n = axis.len();
    if config.sparsity > n {
        return Err(invalid(format!(
            "sparsity {} exceeds the {n} phase samples",
            config.sparsity
        )));
    }
    let (margin, half) = match config.search {
        SearchRegion::Full => (n - 1, n - 1),
        SearchRegion::AroundPeak { margin, half_width } => match uniform_spacing(axis, UNIFORM_AXIS_TOLERANCE) {
            Some(dx) => (samples_within(n, dx, margin), samples_within(n, dx, half_width)),
            None => {
                // Irregular axis: count samples by the mean spacing.
                let dx = (axis[n - 1] - axis[0]) / (n.max(2) - 1) as f64;
                let dx = if dx > 0.0 { dx } else { 1.0 };
                (samples_within(n, dx, margin), samples_within(n, dx, half_width))
            }
        },
    };
    let full = matches!(config.search, SearchRegion::Full);

    let pixels: Vec<PixelFit> = match uniform_spacing(axis, UNIFORM_AXIS_TOLERANCE) {
        Some(dx) if n > 1 => {
            let reach = if full { n - 1 } else { 2 * half };
            let lag = ShiftBasis::lag_table(kernel, dx, reach);
            let interior = if full {
                None
            } else {
                Some(ShiftBasis::new(
                    lag.clone(),
                    reach,
                    2 * half + 1,
                    (half - margin..=half + margin).collect(),
                    dx,
                )?)
            };
            (0..measurement.num_pixels())
                .into_par_iter()
                .map(|p| {
                    let b = measurement.pixel(p);
                    if b.iter().all(|&v| v == 0.0) {
                        return Ok(PixelFit::invalid());
                    }
                    let (start, end, c_lo, c_hi) = if full {
                        (0, n, 0, n - 1)
                    } else {
                        let c = argmax_abs(b);
                        let start = c.saturating_sub(half);
                        let end = (c + half + 1).min(n);
                        (start, end, c.saturating_sub(margin), (c + margin).min(n - 1))
                    };
                    let window = &b[start..end];
                    let fit = match &interior {
                        Some(basis) if end - start == 2 * half + 1 => {
                            omp_fit(window, basis, config.sparsity.min(basis.num_atoms()))?
                        }
                        _ => {
                            let centers: Vec<usize> = (c_lo - start..=c_hi - start).collect();
                            let basis = ShiftBasis::new(lag.clone(), reach, end - start, centers, dx)?;
                            omp_fit(window, &basis, config.sparsity.min(basis.num_atoms()))?
                        }
                    };
                    Ok(PixelFit::from_result(&fit, |sel| axis[c_lo + sel.index]))
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ if !full && n > 1 && detect_period(axis, UNIFORM_AXIS_TOLERANCE, MAX_AXIS_PERIOD).is_some() => {
            let period = detect_period(axis, UNIFORM_AXIS_TOLERANCE, MAX_AXIS_PERIOD).unwrap_or(1);
            let tables = PeriodicLagTables::new(kernel, axis, period, 2 * half)?;
            (0..measurement.num_pixels())
                .into_par_iter()
                .map(|p| {
                    let b = measurement.pixel(p);
                    if b.iter().all(|&v| v == 0.0) {
                        return Ok(PixelFit::invalid());
                    }
                    let c = argmax_abs(b);
                    let start = c.saturating_sub(half);
                    let end = (c + half + 1).min(n);
                    let (c_lo, c_hi) = (c.saturating_sub(margin), (c + margin).min(n - 1));
                    let centers: Vec<usize> = (c_lo - start..=c_hi - start).collect();
                    let basis = PeriodicShiftBasis::new(&tables, start, end - start, centers)?;
                    let fit = omp_fit(&b[start..end], &basis, config.sparsity.min(basis.num_atoms()))?;
                    Ok(PixelFit::from_result(&fit, |sel| axis[c_lo + sel.index]))
                })
                .collect::<Result<Vec<_>>>()?
        }
        _ => (0..measurement.num_pixels())
            .into_par_iter()
            .map(|p| {
                let b = measurement.pixel(p);
                if b.iter().all(|&v| v == 0.0) {
                    return Ok(PixelFit::invalid());
                }
                let (start, end, c_lo, c_hi) = if full {
                    (0, n, 0, n - 1)
                } else {
                    let c = argmax_abs(b);
                    (
                        c.saturating_sub(half),
                        (c + half + 1).min(n),
                        c.saturating_sub(margin),
                        (c + margin).min(n - 1),
                    )
                };
                let shifts = axis[c_lo..=c_hi].to_vec();
                let basis = KernelBasis::new(kernel.clone(), shifts)?.sample(&axis[start..end])?;
                let fit = omp_fit(&b[start..end], &basis, config.sparsity.min(basis.num_atoms()))?;
                Ok(PixelFit::from_result(&fit, |s| s.shift))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    TransientImage::new(measurement.rows(), measurement.cols(), pixels)
}
