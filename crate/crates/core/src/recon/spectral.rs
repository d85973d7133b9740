//! Discrete-time Fourier view of sampled correlation profiles.
//!
//! `X(f) = Σ_n x_n · exp(−i2π f n Δ)` for samples `x_n` spaced `Δ` apart. It
//! is periodic in `f` with period `1/Δ`, so a profile sampled `Δ` apart
//! carries no information beyond a band of width `1/Δ`.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::sensor::uniform_spacing;

use super::UNIFORM_AXIS_TOLERANCE;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `f_k = k / (K·Δ)` for `k = 0..K`, spanning one period `[0, 1/Δ)`.
    pub frequencies: Vec<f64>,
    pub values: Vec<Complex64>,
    pub sample_spacing: f64,
}

/// Width of the band a spacing of `Δ` resolves without aliasing.
pub fn unaliased_bandwidth(sample_spacing: f64) -> f64 {
    1.0 / sample_spacing
}

/// DTFT on `K = oversample × len` equally spaced frequencies over one period,
/// by zero-padded FFT.
pub fn dtft_spectrum(samples: &[f64], sample_spacing: f64, oversample: usize) -> Result<Spectrum> {
    if samples.len() < 2 {
        return Err(invalid("spectrum needs at least two samples"));
    }
    if !(sample_spacing > 0.0 && sample_spacing.is_finite()) {
        return Err(invalid("sample spacing must be positive"));
    }
    if oversample == 0 {
        return Err(invalid("oversample must be at least 1"));
    }
    let k = samples.len() * oversample;
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    buf.resize(k, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(k).process(&mut buf);
    let frequencies = (0..k)
        .map(|i| i as f64 / (k as f64 * sample_spacing))
        .collect();
    Ok(Spectrum {
        frequencies,
        values: buf,
        sample_spacing,
    })
}

/// [`dtft_spectrum`] for samples on `axis`, which must be uniform.
pub fn dtft_of_axis(axis: &[f64], samples: &[f64], oversample: usize) -> Result<Spectrum> {
    if axis.len() != samples.len() {
        return Err(Error::Dimension {
            expected: axis.len(),
            found: samples.len(),
        });
    }
    let spacing = uniform_spacing(axis, UNIFORM_AXIS_TOLERANCE)
        .ok_or_else(|| invalid("spectrum needs a uniform sample axis"))?;
    dtft_spectrum(samples, spacing, oversample)
}

/// `a·b` modulo 1, keeping the rounding error of the product.
fn frac_product(a: f64, b: f64) -> f64 {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p.rem_euclid(1.0) + e).rem_euclid(1.0)
}

/// Direct DTFT at one frequency. The per-sample phase `f·n·Δ` is reduced
/// modulo 1 before the exponential.
pub fn dtft_at(samples: &[f64], sample_spacing: f64, frequency: f64) -> Complex64 {
    let u = frac_product(frequency, sample_spacing);
    samples
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let phase = frac_product(u, n as f64);
            x * Complex64::from_polar(1.0, -std::f64::consts::TAU * phase)
        })
        .sum()
}

/// `1e-6 × max|H|²`.
pub fn default_epsilon(h: &[Complex64]) -> f64 {
    1e-6 * h.iter().fold(0.0f64, |m, v| m.max(v.norm_sqr()))
}

/// Regularised division `B·conj(H) / (|H|² + ε)`.
pub fn spectral_deconvolve(b: &[Complex64], h: &[Complex64], epsilon: f64) -> Result<Vec<Complex64>> {
    if b.len() != h.len() {
        return Err(Error::Dimension {
            expected: h.len(),
            found: b.len(),
        });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon {epsilon} must be positive")));
    }
    Ok(b
        .iter()
        .zip(h)
        .map(|(b, h)| b * h.conj() / (h.norm_sqr() + epsilon))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_is_flat() {
        let mut x = vec![0.0; 64];
        x[0] = 2.0;
        let s = dtft_spectrum(&x, 1e-11, 2).unwrap();
        assert!(s.values.iter().all(|v| (v.norm() - 2.0).abs() < 1e-12));
    }

    #[test]
    fn fft_matches_direct_evaluation() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7 % 11) as f64).sin()).collect();
        let s = dtft_spectrum(&x, 2e-12, 3).unwrap();
        for k in [0, 1, 17, 149] {
            let d = dtft_at(&x, 2e-12, s.frequencies[k]);
            assert!((d - s.values[k]).norm() < 1e-9 * (1.0 + d.norm()));
        }
    }

    #[test]
    fn periodic_in_frequency() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).cos()).collect();
        let dx = 9.6e-12;
        for f in [1e9, 3.7e10, 8e10] {
            let a = dtft_at(&x, dx, f);
            let b = dtft_at(&x, dx, f + 1.0 / dx);
            assert!((a - b).norm() <= 1e-9 * a.norm());
        }
    }

    #[test]
    fn bandwidth_scales_with_density() {
        assert!((unaliased_bandwidth(9.6e-12) / unaliased_bandwidth(96e-12) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn deconvolve_self_is_one() {
        let h: Vec<Complex64> = (1..20).map(|i| Complex64::new(i as f64, -(i as f64) * 0.5)).collect();
        let a = spectral_deconvolve(&h, &h, 1e-12).unwrap();
        assert!(a.iter().all(|v| (v - 1.0).norm() < 1e-9));
        assert!(spectral_deconvolve(&h, &h, 0.0).is_err());
        assert!(spectral_deconvolve(&h[1..], &h, 1.0).is_err());
    }

    #[test]
    fn irregular_axis_rejected() {
        let axis = [0.0, 1.0, 2.5];
        assert!(dtft_of_axis(&axis, &[1.0, 2.0, 3.0], 1).is_err());
    }
}
