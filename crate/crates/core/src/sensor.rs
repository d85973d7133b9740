//! PMD correlation measurement.
//!
//! A pixel observes `b(φ) = Σ_p a_p · h(φ + μ − τ_p)` where `h` is the
//! code correlation kernel, `φ` the PLL phase, `μ` the insertion delay of the
//! active light source and `τ_p` the travel time of path `p`. The exposure
//! integral over whole code periods is folded into `h`, so values carry the
//! kernel's units (seconds) unless exposure normalization divides by the code
//! period.
//!
//! Noise is additive Gaussian relative to each pixel's peak magnitude. Shot
//! noise is not modelled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::{continuous_kernel, CorrelationKernel, ModulationCode};
use crate::error::{invalid, Error, Result};
use crate::scene::{PixelResponse, SceneResponse};

pub const DEFAULT_MODULATION_FREQUENCY: f64 = 50e6;
pub const DEFAULT_PLL_STEP: f64 = 96e-12;
pub const DEFAULT_NUM_PLL_STEPS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    /// Hz; the chip duration of the codes must be its reciprocal.
    pub modulation_frequency: f64,
    /// Smallest PLL phase increment, seconds.
    pub pll_step: f64,
    pub num_pll_steps: usize,
    /// Phase of the first PLL step, seconds. Sweeps sample
    /// `phase_origin + j·pll_step`.
    pub phase_origin: f64,
    /// Divide measurements by the code period.
    pub exposure_normalization: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            modulation_frequency: DEFAULT_MODULATION_FREQUENCY,
            pll_step: DEFAULT_PLL_STEP,
            num_pll_steps: DEFAULT_NUM_PLL_STEPS,
            phase_origin: 0.0,
            exposure_normalization: false,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_frequency > 0.0 && self.modulation_frequency.is_finite()) {
            return Err(invalid("modulation_frequency must be positive"));
        }
        if !(self.pll_step > 0.0 && self.pll_step.is_finite()) {
            return Err(invalid("pll_step must be positive"));
        }
        if self.num_pll_steps == 0 {
            return Err(invalid("num_pll_steps must be at least 1"));
        }
        if !self.phase_origin.is_finite() {
            return Err(invalid("phase_origin must be finite"));
        }
        Ok(())
    }

    pub fn chip_duration(&self) -> f64 {
        1.0 / self.modulation_frequency
    }

    pub fn phase(&self, j: usize) -> f64 {
        self.phase_origin + j as f64 * self.pll_step
    }

    pub fn phase_axis(&self) -> Vec<f64> {
        (0..self.num_pll_steps).map(|j| self.phase(j)).collect()
    }

    /// Moves `phase_origin` to the PLL step nearest to centring the sweep
    /// window on `center`. The origin stays a whole multiple of `pll_step`.
    pub fn centered_on(mut self, center: f64) -> Self {
        let half = self.num_pll_steps as f64 / 2.0;
        self.phase_origin = ((center / self.pll_step) - half).round() * self.pll_step;
        self
    }
}

/// Per-pixel samples on a shared, strictly increasing phase axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    rows: usize,
    cols: usize,
    phases: Vec<f64>,
    /// Pixel-major: `values[pixel * phases.len() + j]`.
    values: Vec<f64>,
}

impl Measurement {
    pub fn new(rows: usize, cols: usize, phases: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("measurement grid {rows}x{cols} is empty")));
        }
        if phases.is_empty() {
            return Err(invalid("measurement has no phase samples"));
        }
        if phases.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("phase axis must be strictly increasing"));
        }
        if values.len() != rows * cols * phases.len() {
            return Err(Error::Dimension {
                expected: rows * cols * phases.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            rows,
            cols,
            phases,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn num_samples(&self) -> usize {
        self.phases.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        let n = self.phases.len();
        &self.values[index * n..(index + 1) * n]
    }

    pub fn pixel_at(&self, row: usize, col: usize) -> &[f64] {
        self.pixel(row * self.cols + col)
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.phases.len())
    }

    /// Every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Spacing of a uniform axis, or `None` when the axis is irregular
    /// beyond `rel_tol` of the mean spacing.
    pub fn uniform_spacing(&self, rel_tol: f64) -> Option<f64> {
        uniform_spacing(&self.phases, rel_tol)
    }

    pub fn same_layout(&self, other: &Measurement) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.phases == other.phases
    }
}

pub(crate) fn uniform_spacing(axis: &[f64], rel_tol: f64) -> Option<f64> {
    if axis.len() < 2 {
        return None;
    }
    let mean = (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64;
    axis.windows(2)
        .all(|w| ((w[1] - w[0]) - mean).abs() <= rel_tol * mean)
        .then_some(mean)
}

/// Correlation sensor for one pair of sensor (`f`) and illumination (`g`)
/// codes.
#[derive(Debug, Clone)]
pub struct CorrelationSensor {
    kernel: CorrelationKernel,
    code_period: f64,
}

impl CorrelationSensor {
    pub fn new(f: &ModulationCode, g: &ModulationCode) -> Result<Self> {
        let kernel = continuous_kernel(f, g, 1)?;
        Ok(Self {
            code_period: f.period(),
            kernel,
        })
    }

    pub fn kernel(&self) -> &CorrelationKernel {
        &self.kernel
    }

    pub fn chip_duration(&self) -> f64 {
        self.kernel.sample_spacing()
    }

    pub fn code_period(&self) -> f64 {
        self.code_period
    }

    /// `Σ_p a_p · h(offset − τ_p)` for one pixel, where `offset = φ + μ`.
    /// Dark pixels give 0.
    pub fn pixel_value(&self, pixel: &PixelResponse, offset: f64) -> f64 {
        pixel
            .paths
            .iter()
            .map(|p| p.amplitude * self.kernel.eval_scattered(offset - p.delay, pixel.scattering))
            .sum()
    }

    /// One frame at PLL phase `phase` with the active source inserting
    /// `insertion_delay`.
    pub fn measure(&self, response: &SceneResponse, phase: f64, insertion_delay: f64) -> Vec<f64> {
        let offset = phase + insertion_delay;
        response
            .pixels()
            .par_iter()
            .map(|p| self.pixel_value(p, offset))
            .collect()
    }

    /// Samples every pixel at `phase + insertion_delay` for each phase of an
    /// arbitrary strictly increasing axis.
    pub fn sample(
        &self,
        response: &SceneResponse,
        phases: &[f64],
        insertion_delay: f64,
    ) -> Result<Measurement> {
        let n = phases.len();
        let mut values = vec![0.0; response.num_pixels() * n];
        values
            .par_chunks_mut(n.max(1))
            .zip(response.pixels().par_iter())
            .for_each(|(out, pixel)| {
                for (v, &phase) in out.iter_mut().zip(phases) {
                    *v = self.pixel_value(pixel, phase + insertion_delay);
                }
            });
        Measurement::new(response.rows(), response.cols(), phases.to_vec(), values)
    }

    /// PLL sweep `φ_j = phase_origin + j·pll_step`, `j = 0..num_pll_steps`.
    pub fn sweep_pll(
        &self,
        response: &SceneResponse,
        config: &SensorConfig,
        insertion_delay: f64,
    ) -> Result<Measurement> {
        config.validate()?;
        let tc = self.chip_duration();
        if ((config.chip_duration() - tc) / tc).abs() > 1e-9 {
            return Err(invalid(format!(
                "modulation frequency {} Hz implies chip duration {} s, codes use {} s",
                config.modulation_frequency,
                config.chip_duration(),
                tc
            )));
        }
        if !insertion_delay.is_finite() {
            return Err(invalid("insertion delay must be finite"));
        }
        let m = self.sample(response, &config.phase_axis(), insertion_delay)?;
        Ok(if config.exposure_normalization {
            m.scaled(1.0 / self.code_period)
        } else {
            m
        })
    }
}

/// Adds zero-mean Gaussian noise with standard deviation
/// `sigma_relative × max|b|` per pixel.
///
/// Each pixel draws from its own ChaCha stream (`seed`, stream = pixel
/// index), so the result does not depend on evaluation order.
pub fn add_noise(measurement: &Measurement, sigma_relative: f64, seed: u64) -> Result<Measurement> {
    if !(sigma_relative >= 0.0 && sigma_relative.is_finite()) {
        return Err(invalid(format!("noise sigma {sigma_relative} must be nonnegative")));
    }
    let mut out = measurement.clone();
    if sigma_relative == 0.0 {
        return Ok(out);
    }
    let n = measurement.num_samples();
    out.values
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(pixel, samples)| {
            let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak == 0.0 {
                return;
            }
            let sigma = sigma_relative * peak;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(pixel as u64);
            for v in samples.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
        });
    Ok(out)
}

/// Derives an independent seed for sub-stream `index` of `seed`
/// (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::default_code;
    use crate::scene::{build_planar_scene, ScenePath};
    use crate::SPEED_OF_LIGHT;

    fn sensor() -> CorrelationSensor {
        let code = default_code();
        CorrelationSensor::new(&code, &code).unwrap()
    }

    fn single_path(delay: f64, amplitude: f64) -> SceneResponse {
        let mut s = SceneResponse::new(1, 1).unwrap();
        s.set_paths(0, 0, vec![ScenePath::new(delay, amplitude).unwrap()]);
        s
    }

    #[test]
    fn zero_lag_gives_kernel_peak() {
        let s = sensor();
        let tau = 3.3e-9;
        let v = s.measure(&single_path(tau, 1.0), tau, 0.0);
        assert_eq!(v[0], 31.0 * s.chip_duration());
    }

    #[test]
    fn two_paths_superpose() {
        let s = sensor();
        let (t1, t2, a1, a2) = (3.1e-9, 4.7e-9, 0.7, 1.9);
        let mut both = SceneResponse::new(1, 1).unwrap();
        both.set_paths(
            0,
            0,
            vec![ScenePath::new(t1, a1).unwrap(), ScenePath::new(t2, a2).unwrap()],
        );
        for phase in [0.0, 2e-9, 3.9e-9, 1e-8] {
            let sum = s.measure(&both, phase, 0.0)[0];
            let one = s.measure(&single_path(t1, 1.0), phase, 0.0)[0];
            let two = s.measure(&single_path(t2, 1.0), phase, 0.0)[0];
            assert!((sum - (a1 * one + a2 * two)).abs() <= 1e-15 * sum.abs().max(1e-9));
        }
    }

    #[test]
    fn dark_pixel_is_zero() {
        let s = sensor();
        let r = SceneResponse::new(2, 2).unwrap();
        assert!(s.measure(&r, 1e-9, 0.0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pll_axis_spacing_and_light_distance() {
        let config = SensorConfig::default();
        let axis = config.phase_axis();
        assert_eq!(axis.len(), 2000);
        assert!((axis[1] - axis[0] - 96e-12).abs() < 1e-24);
        let metres = config.pll_step * SPEED_OF_LIGHT;
        assert!((metres - 0.02878).abs() < 1e-4);
    }

    #[test]
    fn single_step_sweep_samples_phase_zero() {
        let s = sensor();
        let config = SensorConfig {
            num_pll_steps: 1,
            ..SensorConfig::default()
        };
        let r = single_path(2e-9, 1.0);
        let m = s.sweep_pll(&r, &config, 0.0).unwrap();
        assert_eq!(m.phases(), &[0.0]);
        assert_eq!(m.pixel(0)[0], s.measure(&r, 0.0, 0.0)[0]);
    }

    #[test]
    fn steps_for_one_code_period() {
        let config = SensorConfig::default();
        let period = 31.0 * config.chip_duration();
        let steps = (period / config.pll_step).ceil() as usize;
        assert_eq!(steps, 6459);
        // The default 2000-step window spans far more than the 40 ns
        // correlation peak.
        assert!(config.num_pll_steps as f64 * config.pll_step > 2.0 * config.chip_duration());
    }

    #[test]
    fn mismatched_frequency_rejected() {
        let s = sensor();
        let config = SensorConfig {
            modulation_frequency: 40e6,
            ..SensorConfig::default()
        };
        assert!(s.sweep_pll(&single_path(1e-9, 1.0), &config, 0.0).is_err());
    }

    #[test]
    fn exposure_normalization_divides_by_period() {
        let s = sensor();
        let r = single_path(1e-9, 1.0);
        let raw = s.sweep_pll(&r, &SensorConfig::default(), 0.0).unwrap();
        let config = SensorConfig {
            exposure_normalization: true,
            ..SensorConfig::default()
        };
        let norm = s.sweep_pll(&r, &config, 0.0).unwrap();
        for (a, b) in raw.values().iter().zip(norm.values()) {
            assert!((a / s.code_period() - b).abs() < 1e-15);
        }
    }

    #[test]
    fn noise_zero_sigma_is_identity_and_seeded() {
        let s = sensor();
        let r = build_planar_scene(4, 4, 0.5, 0.3).unwrap();
        let m = s.sweep_pll(&r, &SensorConfig::default(), 0.0).unwrap();
        assert_eq!(add_noise(&m, 0.0, 7).unwrap(), m);
        let a = add_noise(&m, 0.05, 7).unwrap();
        let b = add_noise(&m, 0.05, 7).unwrap();
        let c = add_noise(&m, 0.05, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(add_noise(&m, -0.1, 7).is_err());
    }

    #[test]
    fn noise_standard_deviation_matches_target() {
        let s = sensor();
        let r = build_planar_scene(4, 4, 0.5, 0.3).unwrap();
        let m = s.sweep_pll(&r, &SensorConfig::default(), 0.0).unwrap();
        let noisy = add_noise(&m, 0.05, 11).unwrap();
        for p in 0..m.num_pixels() {
            let clean = m.pixel(p);
            let peak = clean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let diffs: Vec<f64> = noisy.pixel(p).iter().zip(clean).map(|(a, b)| a - b).collect();
            let n = diffs.len() as f64;
            let mean = diffs.iter().sum::<f64>() / n;
            let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let target = 0.05 * peak;
            assert!((var.sqrt() - target).abs() < 0.05 * target, "pixel {p}");
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..16).map(|i| derive_seed(1, i)).collect();
        let mut b = a.clone();
        b.sort();
        b.dedup();
        assert_eq!(a.len(), b.len());
    }
}
