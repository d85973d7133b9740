use proptest::prelude::*;

use phasesweep::analysis::{max_systematic_error, phase_insertion_shift, remainder_bound};
use phasesweep::codes::{circular_cross_correlation, continuous_kernel, default_code, generate_msequence};
use phasesweep::io::{read_measurement_binary, write_measurement_binary};
use phasesweep::recon::{
    dtft_at, hue_colorize, median_filter_rows, omp_fit, reconstruct, KernelBasis, ReconConfig,
    SearchRegion, TransientImage, HUE_RANGE_DEG,
};
use phasesweep::scene::{build_planar_scene, ScenePath, SceneResponse};
use phasesweep::sensor::{add_noise, CorrelationSensor, Measurement, SensorConfig};
use phasesweep::sweep::{
    acquire_sweep, compute_equalization, delay_discrepancy, interleave, AcquisitionMode,
    ArrayGeometry, EqualizationWeights,
};
use phasesweep::SPEED_OF_LIGHT;

fn sensor() -> CorrelationSensor {
    let code = default_code();
    CorrelationSensor::new(&code, &code).unwrap()
}

fn single_path(delay: f64, amplitude: f64) -> SceneResponse {
    let mut scene = SceneResponse::new(1, 1).unwrap();
    scene.set_paths(0, 0, vec![ScenePath::new(delay, amplitude).unwrap()]);
    scene
}

const SCALE: f64 = 31.0 * 20e-9;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn msequence_is_balanced_and_two_level(m in 2u32..=10, seed in 1u32..1024) {
        let seed = seed % ((1 << m) - 1) + 1;
        let code = generate_msequence(m, seed).unwrap();
        let ones = code.chips().iter().filter(|&&c| c == 1).count();
        prop_assert_eq!(ones, 1 << (m - 1));
        let ac = circular_cross_correlation(&code, &code).unwrap();
        prop_assert!(ac[1..].iter().all(|&v| v == -1.0));
    }

    #[test]
    fn kernel_is_periodic(x in -1e-6f64..1e-6, k in -3i32..=3) {
        let code = default_code();
        let h = continuous_kernel(&code, &code, 1).unwrap();
        let y = x + k as f64 * code.period();
        prop_assert!((h.eval(x) - h.eval(y)).abs() <= 1e-9 * SCALE);
    }

    #[test]
    fn delay_shift_moves_the_measurement(tau in 1e-9f64..50e-9, shift in -0.9e-9f64..40e-9, phase in 0.0f64..100e-9) {
        let s = sensor();
        let a = s.measure(&single_path(tau, 1.0), phase, 0.0)[0];
        let b = s.measure(&single_path(tau + shift, 1.0), phase + shift, 0.0)[0];
        prop_assert!((a - b).abs() <= 1e-6 * SCALE);
    }

    #[test]
    fn phase_and_insertion_are_interchangeable(tau in 1e-9f64..50e-9, phase in 0.0f64..100e-9, mu in 0.0f64..1e-9) {
        let s = sensor();
        let scene = single_path(tau, 0.8);
        let a = s.measure(&scene, phase, mu)[0];
        let b = s.measure(&scene, phase + mu, 0.0)[0];
        prop_assert!((a - b).abs() <= 1e-9 * SCALE);
    }

    #[test]
    fn measurement_is_linear_in_amplitude(tau in 1e-9f64..50e-9, a in 0.0f64..5.0, phase in 0.0f64..100e-9) {
        let s = sensor();
        let one = s.measure(&single_path(tau, 1.0), phase, 0.0)[0];
        let scaled = s.measure(&single_path(tau, a), phase, 0.0)[0];
        prop_assert!((scaled - a * one).abs() <= 1e-12 * SCALE * (1.0 + a));
    }

    #[test]
    fn remainder_bound_holds(d in 0.1f64..5.0, dd in 0.0f64..0.03, theta_deg in 0.0f64..=25.0) {
        let theta = theta_deg.to_radians();
        let s = phase_insertion_shift(d, dd, theta).unwrap();
        let bound = remainder_bound(d, dd, theta).unwrap();
        prop_assert!((s.exact - s.approx).abs() <= bound * (1.0 + 1e-12) + 1e-18);
    }

    #[test]
    fn omp_residual_never_grows(seed in any::<u64>(), k in 1usize..5) {
        let code = default_code();
        let kernel = continuous_kernel(&code, &code, 1).unwrap();
        let axis: Vec<f64> = (0..60).map(|i| i as f64 * 1e-9).collect();
        let shifts: Vec<f64> = axis.iter().step_by(3).copied().collect();
        let basis = KernelBasis::new(kernel, shifts).unwrap().sample(&axis).unwrap();
        let mut state = seed;
        let b: Vec<f64> = (0..60).map(|_| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }).collect();
        let fit = omp_fit(&b, &basis, k).unwrap();
        let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut prev = b_norm;
        for r in &fit.residual_history {
            prop_assert!(*r <= prev * (1.0 + 1e-9));
            prev = *r;
        }
    }

    #[test]
    fn equalization_follows_source_scaling(c in 0.2f64..5.0, n in 1usize..4) {
        let code = default_code();
        let scene = single_path(10.08e-9, 1.0);
        let config = SensorConfig { num_pll_steps: 301, phase_origin: 0.0, ..SensorConfig::default() };
        let geometry = ArrayGeometry { num_sources: 4, ..ArrayGeometry::default() };
        let ds = acquire_sweep(&scene, &geometry, &config, &code, &code, AcquisitionMode::UniformDelay).unwrap();
        let w = compute_equalization(&ds).unwrap();
        let mut gains = vec![1.0; 4];
        gains[n] = c;
        let w2 = compute_equalization(&ds.with_source_gains(&gains).unwrap()).unwrap();
        prop_assert!((w2.weights()[n] * c - w.weights()[n]).abs() <= 1e-9 * w.weights()[n]);
    }

    #[test]
    fn interleave_keeps_every_sample_in_order(n in 1usize..8, steps in 2usize..40) {
        let code = default_code();
        let scene = single_path(5e-9, 1.0);
        let config = SensorConfig { num_pll_steps: steps, ..SensorConfig::default() };
        let geometry = ArrayGeometry { num_sources: n, ..ArrayGeometry::default() };
        let ds = acquire_sweep(&scene, &geometry, &config, &code, &code, AcquisitionMode::UniformDelay).unwrap();
        let merged = interleave(&ds, &EqualizationWeights::unit(n)).unwrap();
        let axis = merged.measurement.phases();
        prop_assert!(axis.windows(2).all(|w| w[1] > w[0]));
        let total: usize = merged.provenance.iter().map(|p| p.len()).sum();
        prop_assert_eq!(total, n * steps);
    }

    #[test]
    fn discrepancy_respects_bound(half in 1usize..=10, theta_deg in 1.0f64..=25.0) {
        let n = 2 * half;
        let theta = theta_deg.to_radians();
        let scene = build_planar_scene(6, 6, 0.5, theta).unwrap();
        let geometry = ArrayGeometry { num_sources: n, half_angle: theta, ..ArrayGeometry::default() };
        let bound = max_systematic_error(n, geometry.spacing, theta).unwrap() / SPEED_OF_LIGHT;
        for d in delay_discrepancy(&scene, &geometry).unwrap() {
            prop_assert!(d <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn dtft_is_periodic_in_frequency(f in -5e9f64..5e9, len in 4usize..64) {
        let samples: Vec<f64> = (0..len).map(|i| ((i * 13) % 7) as f64).collect();
        let dx = 96e-12;
        let a = dtft_at(&samples, dx, f);
        let b = dtft_at(&samples, dx, f + 1.0 / dx);
        let scale = samples.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((a - b).norm() <= 1e-9 * scale);
    }

    #[test]
    fn median_filter_keeps_constant_rows(rows in 1usize..5, cols in 1usize..20, v in -1.0f64..1.0, half in 0usize..4) {
        let taps = 2 * half + 1;
        let values = vec![v; rows * cols];
        let valid = vec![true; rows * cols];
        let out = median_filter_rows(rows, cols, &values, &valid, taps).unwrap();
        prop_assert!(out.iter().all(|&x| (x - v).abs() < 1e-15));
    }

    #[test]
    fn hue_stays_in_range(peaks in proptest::collection::vec(proptest::option::of((0.0f64..1e-6, 0.01f64..1.0)), 1..40)) {
        let t = TransientImage::from_peaks(1, peaks.len(), &peaks).unwrap();
        let hue = hue_colorize(&t);
        for h in hue.hue.iter().flatten() {
            prop_assert!((0.0..=HUE_RANGE_DEG).contains(h));
        }
    }

    #[test]
    fn binary_measurement_round_trips(rows in 1usize..4, cols in 1usize..4, p in 1usize..20, seed in any::<u64>()) {
        let phases: Vec<f64> = (0..p).map(|i| i as f64 * 1e-10).collect();
        let m = Measurement::new(rows, cols, phases, vec![1.0; rows * cols * p]).unwrap();
        let m = add_noise(&m, 0.3, seed).unwrap();
        let mut buf = Vec::new();
        write_measurement_binary(&mut buf, &m).unwrap();
        prop_assert_eq!(read_measurement_binary(&mut buf.as_slice()).unwrap(), m);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn noiseless_on_grid_peak_is_recovered(k in 100usize..300) {
        let code = default_code();
        let kernel = continuous_kernel(&code, &code, 1).unwrap();
        let config = SensorConfig { num_pll_steps: 400, ..SensorConfig::default() };
        let tau = config.phase(k);
        let m = sensor().sweep_pll(&single_path(tau, 1.0), &config, 0.0).unwrap();
        let recon = ReconConfig { sparsity: 1, search: SearchRegion::default() };
        let t = reconstruct(&m, &kernel, &recon).unwrap();
        let fit = &t.pixels()[0];
        prop_assert!(fit.valid);
        prop_assert!((fit.peak_time - tau).abs() < 1e-15);
    }
}
