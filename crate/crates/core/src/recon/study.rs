//! Peak-position error as a function of the sampling step.
//!
//! A finely sampled ground-truth profile is shifted by a random whole number
//! of native samples, optionally corrupted by noise, and sub-sampled at each
//! step. The same sub-sampling of the unshifted profile provides the atoms of
//! a 1-sparse OMP fit, so the recovered shift is always a multiple of the
//! step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::sensor::derive_seed;

use super::omp::{omp_fit, ShiftBasis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    /// Spacing of the ground-truth profile, seconds.
    pub native_spacing: f64,
    /// Sampling steps, seconds; each a whole multiple of `native_spacing`.
    pub steps: Vec<f64>,
    pub trials: usize,
    /// Noise standard deviation relative to the profile's peak magnitude.
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepError {
    pub step: f64,
    pub mean_abs_error: f64,
    pub max_abs_error: f64,
}

fn step_ratio(step: f64, native: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid(format!("sampling step {step} must be positive")));
    }
    let q = (step / native).round();
    if q < 1.0 || ((q * native - step) / step).abs() > 1e-6 {
        return Err(invalid(format!(
            "sampling step {step} is not a multiple of the native spacing {native}"
        )));
    }
    Ok(q as usize)
}

/// Mean and maximum absolute peak-position error per step.
///
/// True shifts are drawn uniformly from the middle half of the profile, one
/// per trial, and shared by all steps. Noise for trial `t` and step `s` comes
/// from a ChaCha stream keyed by the seed, `t` and `s`.
pub fn peak_estimation_error_study(profile: &[f64], config: &StudyConfig) -> Result<Vec<StepError>> {
    let native = config.native_spacing;
    if !(native > 0.0 && native.is_finite()) {
        return Err(invalid("native spacing must be positive"));
    }
    if profile.len() < 4 {
        return Err(invalid("ground-truth profile needs at least four samples"));
    }
    if config.trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(invalid("noise sigma must be nonnegative"));
    }
    if config.steps.is_empty() {
        return Err(invalid("at least one sampling step required"));
    }
    let len = profile.len();
    let span = (len - 1) as f64 * native;
    let ratios = config
        .steps
        .iter()
        .map(|&s| {
            if s > span {
                Err(invalid(format!("sampling step {s} exceeds the profile span {span}")))
            } else {
                step_ratio(s, native)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let origin = (0..len)
        .max_by(|&a, &b| profile[a].abs().total_cmp(&profile[b].abs()).then(b.cmp(&a)))
        .expect("nonempty");
    let peak = profile[origin].abs();
    if peak == 0.0 {
        return Err(invalid("ground-truth profile is identically zero"));
    }
    let sigma = config.noise_sigma * peak;
    let at = |i: i64| profile[i.clamp(0, len as i64 - 1) as usize];
    let (u_lo, u_hi) = (len / 4, 3 * len / 4);

    struct Prepared {
        q: usize,
        samples: usize,
        basis: ShiftBasis,
        first_center: usize,
    }
    let prepared = ratios
        .iter()
        .map(|&q| {
            let samples = (len - 1) / q + 1;
            let zero = samples - 1;
            let lag: Vec<f64> = (0..2 * samples - 1)
                .map(|i| at((i as i64 - zero as i64) * q as i64 + origin as i64))
                .collect();
            let k_lo = u_lo.saturating_sub(q) / q;
            let k_hi = ((u_hi + q) / q).min(samples - 1);
            let centers: Vec<usize> = (k_lo..=k_hi.max(k_lo)).collect();
            let basis = ShiftBasis::new(lag, zero, samples, centers, q as f64 * native)?;
            Ok(Prepared {
                q,
                samples,
                basis,
                first_center: k_lo,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_trial: Vec<Vec<f64>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = derive_seed(config.seed, trial as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            let u = rng.random_range(u_lo..=u_hi);
            prepared
                .iter()
                .enumerate()
                .map(|(s, p)| {
                    let mut noise = ChaCha8Rng::seed_from_u64(trial_seed);
                    noise.set_stream(s as u64 + 1);
                    let y: Vec<f64> = (0..p.samples)
                        .map(|j| {
                            let clean = at((j * p.q) as i64 - u as i64 + origin as i64);
                            if sigma > 0.0 {
                                let z: f64 = noise.sample(StandardNormal);
                                clean + sigma * z
                            } else {
                                clean
                            }
                        })
                        .collect();
                    let fit = omp_fit(&y, &p.basis, 1)?;
                    let est = match fit.selections.first() {
                        Some(sel) => ((p.first_center + sel.index) * p.q) as f64,
                        None => (len / 2) as f64,
                    };
                    Ok((est - u as f64).abs() * native)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(config
        .steps
        .iter()
        .enumerate()
        .map(|(s, &step)| {
            let errs = per_trial.iter().map(|t| t[s]);
            StepError {
                step,
                mean_abs_error: errs.clone().sum::<f64>() / config.trials as f64,
                max_abs_error: errs.fold(0.0, f64::max),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(len: usize, centre: usize, width: usize) -> Vec<f64> {
        (0..len)
            .map(|i| {
                let d = (i as f64 - centre as f64).abs();
                (1.0 - d / width as f64).max(0.0) - 0.05
            })
            .collect()
    }

    fn config(steps: Vec<f64>, trials: usize, sigma: f64) -> StudyConfig {
        StudyConfig {
            native_spacing: 1e-12,
            steps,
            trials,
            noise_sigma: sigma,
            seed: 3,
        }
    }

    #[test]
    fn native_step_noiseless_is_exact() {
        let p = triangle(2000, 1000, 300);
        let r = peak_estimation_error_study(&p, &config(vec![1e-12], 20, 0.0)).unwrap();
        assert_eq!(r[0].mean_abs_error, 0.0);
    }

    #[test]
    fn error_bounded_by_half_step_noiseless() {
        let p = triangle(2000, 1000, 300);
        let r = peak_estimation_error_study(&p, &config(vec![10e-12, 40e-12], 50, 0.0)).unwrap();
        for e in r {
            assert!(e.max_abs_error <= e.step / 2.0 + 1e-18, "{e:?}");
        }
    }

    #[test]
    fn invalid_inputs() {
        let p = triangle(100, 50, 20);
        assert!(peak_estimation_error_study(&p, &config(vec![1e-9], 1, 0.0)).is_err());
        assert!(peak_estimation_error_study(&p, &config(vec![1.5e-12], 1, 0.0)).is_err());
        assert!(peak_estimation_error_study(&p, &config(vec![1e-12], 0, 0.0)).is_err());
        assert!(peak_estimation_error_study(&p, &config(vec![-1e-12], 1, 0.0)).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let p = triangle(1000, 500, 100);
        let c = config(vec![5e-12, 20e-12], 10, 0.05);
        assert_eq!(
            peak_estimation_error_study(&p, &c).unwrap(),
            peak_estimation_error_study(&p, &c).unwrap()
        );
    }
}
