//! Experiment drivers behind the CLI subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use phasesweep::analysis::{
    error_budget, max_magnification, sweep_sources, sweep_theta, ErrorBudget, Magnification,
};
use phasesweep::codes::{continuous_kernel, CorrelationKernel};
use phasesweep::io;
use phasesweep::recon::{
    band_sheet_count, depth_from_peaks, distinct_hue_levels, effective_fps, hue_colorize,
    measured_kernel, peak_estimation_error_study, reconstruct, wavefront_frames, DepthMap,
    StepError, StudyConfig, TransientImage, WavefrontFrames,
};
use phasesweep::scene::{
    build_planar_scene, build_terraced_scene, coupled_mirror_preset, grape_cluster_preset,
    terrace_sheet_of_column, ScenePath, SceneResponse,
};
use phasesweep::sensor::{add_noise, derive_seed, CorrelationSensor, Measurement, SensorConfig};
use phasesweep::sweep::{
    acquire_sweep, compute_equalization_with, insertion_delays, interleave, AcquisitionMode,
    ArrayGeometry, EqualizationWeights, SweepDataset,
};
use phasesweep::SPEED_OF_LIGHT;

use crate::config::{ExperimentConfig, KernelChoice, ScenePreset};
use crate::output::OutputDir;
use crate::{io_err, CliError};

pub const DATASET_FILE: &str = "dataset.json";

/// Report plus the checksums of every file the run wrote.
#[derive(Debug, Clone)]
pub struct Run<R> {
    pub report: R,
    pub checksums: BTreeMap<String, String>,
}

pub fn build_scene(config: &ExperimentConfig, preset: ScenePreset) -> Result<SceneResponse, CliError> {
    Ok(match preset {
        ScenePreset::Terraced => build_terraced_scene(
            config.num_sheets,
            config.sheet_thickness_mm * 1e-3,
            config.standoff_m,
            config.rows,
            config.cols,
        )?,
        ScenePreset::Planar => build_planar_scene(
            config.rows,
            config.cols,
            config.standoff_m,
            config.half_angle_deg.to_radians(),
        )?,
        ScenePreset::Mirror => coupled_mirror_preset(config.rows, config.cols)?,
        ScenePreset::Grapes => {
            grape_cluster_preset(config.rows, config.cols, config.scattering_ps * 1e-12)?
        }
    })
}

/// Sensor settings, with the sweep centred on the scene's delays unless the
/// config fixes the origin.
pub fn sensor_config(config: &ExperimentConfig, scene: &SceneResponse) -> SensorConfig {
    let sensor = config.sensor();
    match (config.phase_origin_ps, scene.delay_range()) {
        (None, Some((lo, hi))) => sensor.centered_on(0.5 * (lo + hi)),
        _ => sensor,
    }
}

/// Multi-source acquisition with independent noise per source.
pub fn acquire(config: &ExperimentConfig, scene: &SceneResponse) -> Result<SweepDataset, CliError> {
    let code = config.code()?;
    let sensor = sensor_config(config, scene);
    let dataset = acquire_sweep(
        scene,
        &config.geometry(),
        &sensor,
        &code,
        &code,
        config.acquisition_mode,
    )?;
    if config.noise_sigma == 0.0 {
        return Ok(dataset);
    }
    Ok(dataset.map_measurements(|n, m| add_noise(m, config.noise_sigma, derive_seed(config.seed, n as u64)))?)
}

pub fn reconstruction_kernel(
    config: &ExperimentConfig,
    measurement: &Measurement,
) -> Result<CorrelationKernel, CliError> {
    Ok(match config.kernel {
        KernelChoice::Analytic => {
            let code = config.code()?;
            continuous_kernel(&code, &code, 1)?
        }
        KernelChoice::Measured => measured_kernel(measurement, config.calibration_pixel)?,
    })
}

/// One reconstruction branch: PLL only (1×) or interleaved (N×).
#[derive(Debug, Clone)]
pub struct Branch {
    pub measurement: Measurement,
    pub transient: TransientImage,
    pub frame_period: f64,
}

fn mean_spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        1.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

pub fn make_branch(config: &ExperimentConfig, measurement: Measurement) -> Result<Branch, CliError> {
    let kernel = reconstruction_kernel(config, &measurement)?;
    let transient = reconstruct(&measurement, &kernel, &config.recon())?;
    Ok(Branch {
        frame_period: mean_spacing(measurement.phases()),
        measurement,
        transient,
    })
}

/// 1× branch from source 0, N× branch from the equalized interleave.
pub fn branches(
    config: &ExperimentConfig,
    dataset: &SweepDataset,
) -> Result<(Branch, Branch, EqualizationWeights, usize), CliError> {
    let weights = compute_equalization_with(dataset, config.equalization)?;
    let merged = interleave(dataset, &weights)?;
    let single = make_branch(config, dataset.measurement(0).clone())?;
    let multi = make_branch(config, merged.measurement)?;
    Ok((single, multi, weights, merged.collisions))
}

fn strongest_delay(scene: &SceneResponse) -> Vec<Option<f64>> {
    scene
        .pixels()
        .iter()
        .map(|p| {
            p.paths
                .iter()
                .fold(None::<&ScenePath>, |best, q| match best {
                    Some(b) if b.amplitude >= q.amplitude => Some(b),
                    _ => Some(q),
                })
                .map(|q| q.delay)
        })
        .collect()
}

/// Mean `|depth − c·τ/2|` over pixels valid in both.
pub fn mean_abs_depth_error(depth: &DepthMap, scene: &SceneResponse) -> Option<f64> {
    let truth = strongest_delay(scene);
    let (sum, n) = depth
        .depth
        .iter()
        .zip(&depth.valid)
        .zip(&truth)
        .filter_map(|((&d, &v), t)| match (v, t) {
            (true, Some(t)) => Some((d - SPEED_OF_LIGHT * t / 2.0).abs()),
            _ => None,
        })
        .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn write_frames(out: &mut OutputDir, dir: &str, frames: &WavefrontFrames) -> Result<(), CliError> {
    for i in 0..frames.len() {
        out.write_with(&format!("{dir}/frame_{i:04}.pgm"), |w| io::write_frame_pgm(w, frames, i))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchSummary {
    pub frame_period_s: f64,
    pub num_frames: usize,
    pub first_frame_time_s: f64,
    pub hue_levels: usize,
    pub valid_pixels: usize,
}

/// Frames, hue map, transient and depth for one branch.
fn emit_branch(
    out: &mut OutputDir,
    config: &ExperimentConfig,
    tag: &str,
    branch: &Branch,
) -> Result<(BranchSummary, WavefrontFrames, DepthMap), CliError> {
    let frames = wavefront_frames(
        &branch.transient,
        branch.frame_period,
        config.band_tolerance,
        config.amplitude_threshold,
    )?;
    write_frames(out, &format!("frames_{tag}"), &frames)?;
    let hue = hue_colorize(&branch.transient);
    out.write_with(&format!("hue_{tag}.ppm"), |w| io::write_hue_ppm(w, &hue))?;
    out.write_with(&format!("transient_{tag}.csv"), |w| {
        io::write_transient_csv(w, &branch.transient, Some(&format!("per-pixel OMP peak fit, {tag} branch")))
    })?;
    let depth = depth_from_peaks(&branch.transient, config.median_taps)?;
    out.write_with(&format!("depth_{tag}.csv"), |w| {
        io::write_depth_csv(
            w,
            &depth,
            Some(&format!("depth map, {tag} branch, {}-tap row median", config.median_taps)),
        )
    })?;
    out.write_with(&format!("depth_{tag}.pgm"), |w| io::write_depth_pgm(w, &depth))?;
    let summary = BranchSummary {
        frame_period_s: branch.frame_period,
        num_frames: frames.len(),
        first_frame_time_s: if frames.is_empty() { 0.0 } else { frames.frame_time(0) },
        hue_levels: distinct_hue_levels(&hue, config.hue_resolution_deg),
        valid_pixels: branch.transient.pixels().iter().filter(|p| p.valid).count(),
    };
    Ok((summary, frames, depth))
}

fn weights_csv(
    out: &mut OutputDir,
    weights: &EqualizationWeights,
    geometry: &ArrayGeometry,
) -> Result<(), CliError> {
    let mu = insertion_delays(geometry);
    out.write_with("weights.csv", |w| {
        io::write_weights_csv(w, weights, &mu, Some("per-source equalization weights"))
    })
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub index: usize,
    pub insertion_delay_s: f64,
    pub axial_offset_m: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub geometry: ArrayGeometry,
    pub mode: AcquisitionMode,
    pub sources: Vec<SourceEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub num_sources: usize,
    pub rows: usize,
    pub cols: usize,
    pub num_pll_steps: usize,
    pub phase_origin_s: f64,
}

/// Scene, codes and one binary measurement per source, plus `dataset.json`.
pub fn run_simulate(config: &ExperimentConfig) -> Result<Run<SimulateReport>, CliError> {
    config.validate()?;
    let scene = build_scene(config, config.scene)?;
    let code = config.code()?;
    let dataset = acquire(config, &scene)?;
    let mut out = OutputDir::create(&config.out_dir)?;
    out.write_with("code.csv", |w| io::write_code_csv(w, &code, Some("illumination and sensor code")))?;
    let kernel = continuous_kernel(&code, &code, 1)?;
    out.write_with("kernel.csv", |w| io::write_kernel_csv(w, &kernel, Some("code correlation kernel")))?;
    out.write_with("scene.csv", |w| io::write_scene_csv(w, &scene, Some("per-pixel light paths")))?;
    let geometry = *dataset.geometry();
    let mu = insertion_delays(&geometry);
    let mut sources = Vec::new();
    for (n, m) in dataset.measurements().iter().enumerate() {
        let file = format!("source_{n:02}.bin");
        out.write_with(&file, |w| io::write_measurement_binary(w, m))?;
        if config.write_measurement_csv {
            out.write_with(&format!("source_{n:02}.csv"), |w| {
                io::write_measurement_csv(w, m, Some(&format!("PLL sweep of source {n}")))
            })?;
        }
        sources.push(SourceEntry {
            index: n,
            insertion_delay_s: mu[n],
            axial_offset_m: geometry.axial_offset(n),
            file,
        });
    }
    out.write_json(
        DATASET_FILE,
        &DatasetIndex {
            geometry,
            mode: dataset.mode(),
            sources,
        },
    )?;
    let report = SimulateReport {
        num_sources: dataset.num_sources(),
        rows: scene.rows(),
        cols: scene.cols(),
        num_pll_steps: dataset.phases().len(),
        phase_origin_s: dataset.phases()[0],
    };
    let checksums = out.finish("simulate", config, &report)?;
    Ok(Run { report, checksums })
}

pub fn load_dataset(dir: &Path) -> Result<SweepDataset, CliError> {
    let index_path = dir.join(DATASET_FILE);
    let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let index: DatasetIndex = serde_json::from_str(&text)?;
    let mut measurements = Vec::with_capacity(index.sources.len());
    for (n, s) in index.sources.iter().enumerate() {
        if s.index != n {
            return Err(CliError::Dataset(format!("source entries out of order at {n}")));
        }
        let path = dir.join(&s.file);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        measurements.push(io::read_measurement_binary(&mut bytes.as_slice())?);
    }
    Ok(SweepDataset::new(measurements, index.geometry, index.mode)?)
}

// --------------------------------------------------------------- calibrate

#[derive(Debug, Clone, Serialize)]
pub struct CalibrateReport {
    pub weights: Vec<f64>,
    pub merged_samples: usize,
    pub collisions: usize,
    pub uniform_spacing_s: Option<f64>,
}

/// Equalization weights and the interleaved measurement of a dataset
/// written by [`run_simulate`].
pub fn run_calibrate(config: &ExperimentConfig, input: &Path) -> Result<Run<CalibrateReport>, CliError> {
    config.validate()?;
    let dataset = load_dataset(input)?;
    let weights = compute_equalization_with(&dataset, config.equalization)?;
    let merged = interleave(&dataset, &weights)?;
    let mut out = OutputDir::create(&config.out_dir)?;
    weights_csv(&mut out, &weights, dataset.geometry())?;
    out.write_with("interleaved.bin", |w| io::write_measurement_binary(w, &merged.measurement))?;
    let report = CalibrateReport {
        weights: weights.weights().to_vec(),
        merged_samples: merged.measurement.num_samples(),
        collisions: merged.collisions,
        uniform_spacing_s: merged.measurement.uniform_spacing(1e-6),
    };
    let checksums = out.finish("calibrate", config, &report)?;
    Ok(Run { report, checksums })
}

// ------------------------------------------------------------- reconstruct

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructReport {
    pub branch: BranchSummary,
    pub peak_range_s: Option<(f64, f64)>,
}

/// Transient, depth, frames and hue map of one binary measurement.
pub fn run_reconstruct(config: &ExperimentConfig, input: &Path) -> Result<Run<ReconstructReport>, CliError> {
    config.validate()?;
    let bytes = fs::read(input).map_err(io_err(input))?;
    let measurement = io::read_measurement_binary(&mut bytes.as_slice())?;
    let branch = make_branch(config, measurement)?;
    let mut out = OutputDir::create(&config.out_dir)?;
    let (summary, _, _) = emit_branch(&mut out, config, "input", &branch)?;
    let report = ReconstructReport {
        branch: summary,
        peak_range_s: branch.transient.peak_range(),
    };
    let checksums = out.finish("reconstruct", config, &report)?;
    Ok(Run { report, checksums })
}

// ----------------------------------------------------------- analyze-error

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub budget: ErrorBudget,
    pub magnification: Option<Magnification>,
}

/// Error budgets over `θ ∈ [0, half_angle]` and `N = 1..=analysis_max_sources`.
pub fn run_analyze_error(config: &ExperimentConfig) -> Result<Run<AnalysisReport>, CliError> {
    config.validate()?;
    let theta = config.half_angle_deg.to_radians();
    let d = config.standoff_m;
    let dd = config.source_spacing();
    let n = config.num_sources;
    let by_theta = sweep_theta(n, d, dd, theta, config.analysis_theta_steps)?;
    let by_sources = sweep_sources(config.analysis_max_sources, d, dd, theta)?;
    let mut out = OutputDir::create(&config.out_dir)?;
    out.write_with("error_vs_theta.csv", |w| {
        io::write_error_budget_csv(w, &by_theta, Some("systematic error budget versus pixel angle"))
    })?;
    out.write_with("error_vs_sources.csv", |w| {
        io::write_error_budget_csv(w, &by_sources, Some("systematic error budget versus array size"))
    })?;
    let magnification = match max_magnification(theta) {
        Ok(m) => Some(m),
        Err(phasesweep::Error::Unbounded(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let report = AnalysisReport {
        budget: error_budget(n, d, dd, theta)?,
        magnification,
    };
    let checksums = out.finish("analyze-error", config, &report)?;
    Ok(Run { report, checksums })
}

// ---------------------------------------------------------- study-sampling

#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub noise_sigma: f64,
    pub trials: usize,
    pub steps: Vec<StepError>,
}

/// Ground-truth profile of a single path, swept at the native step across
/// `study_window_ns` centred on the peak.
pub fn study_profile(config: &ExperimentConfig) -> Result<Vec<f64>, CliError> {
    let code = config.code()?;
    let tau = 10e-9;
    let mut scene = SceneResponse::new(1, 1)?;
    scene.set_paths(0, 0, vec![ScenePath::new(tau, 1.0)?]);
    scene.set_scattering(0, 0, config.study_scattering_ps * 1e-12)?;
    let native = config.study_native_step_ps * 1e-12;
    let steps = (config.study_window_ns * 1e-9 / native).round() as usize + 1;
    let sensor = SensorConfig {
        pll_step: native,
        num_pll_steps: steps,
        phase_origin: tau - (steps / 2) as f64 * native,
        ..config.sensor()
    };
    let m = CorrelationSensor::new(&code, &code)?.sweep_pll(&scene, &sensor, 0.0)?;
    Ok(m.pixel(0).to_vec())
}

pub fn run_sampling_study(config: &ExperimentConfig) -> Result<Run<StudyReport>, CliError> {
    config.validate()?;
    let profile = study_profile(config)?;
    let study = StudyConfig {
        native_spacing: config.study_native_step_ps * 1e-12,
        steps: config.study_steps_ps.iter().map(|s| s * 1e-12).collect(),
        trials: config.study_trials,
        noise_sigma: config.noise_sigma,
        seed: config.seed,
    };
    let steps = peak_estimation_error_study(&profile, &study)?;
    let mut out = OutputDir::create(&config.out_dir)?;
    out.write_with("sampling_study.csv", |w| {
        io::write_study_csv(
            w,
            &steps,
            Some(&format!(
                "peak-position error versus sampling step; noise_sigma={}, trials={}",
                config.noise_sigma, config.study_trials
            )),
        )
    })?;
    let report = StudyReport {
        noise_sigma: config.noise_sigma,
        trials: config.study_trials,
        steps,
    };
    let checksums = out.finish("study-sampling", config, &report)?;
    Ok(Run { report, checksums })
}

// ---------------------------------------------------------------- quantify

#[derive(Debug, Clone, Serialize)]
pub struct QuantifyBranch {
    pub summary: BranchSummary,
    pub band_sheets: usize,
    pub effective_fps: Option<f64>,
    pub mean_abs_depth_error_m: Option<f64>,
    /// Mean depth of each sheet minus that of the next nearer sheet.
    pub sheet_depth_steps_m: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantifyReport {
    pub noise_sigma: f64,
    pub single: QuantifyBranch,
    pub multi: QuantifyBranch,
    /// 1× over N× mean absolute depth error.
    pub depth_error_ratio: Option<f64>,
    pub weights: Vec<f64>,
    pub collisions: usize,
}

fn sheet_depth_steps(depth: &DepthMap, labels: &[Option<usize>], sheets: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; sheets];
    let mut count = vec![0usize; sheets];
    for ((&d, &v), s) in depth.depth.iter().zip(&depth.valid).zip(labels) {
        if let (true, Some(s)) = (v, s) {
            sum[*s] += d;
            count[*s] += 1;
        }
    }
    let mean: Vec<Option<f64>> = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    mean.windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        })
        .collect()
}

/// Terraced target reconstructed from the PLL sweep alone and from the
/// interleaved multi-source sweep.
pub fn run_quantification(config: &ExperimentConfig) -> Result<Run<QuantifyReport>, CliError> {
    config.validate()?;
    let scene = build_scene(config, ScenePreset::Terraced)?;
    let dataset = acquire(config, &scene)?;
    let (single, multi, weights, collisions) = branches(config, &dataset)?;
    let labels: Vec<Option<usize>> = (0..scene.num_pixels())
        .map(|i| Some(terrace_sheet_of_column(i % scene.cols(), scene.cols(), config.num_sheets)))
        .collect();
    let thickness = config.sheet_thickness_mm * 1e-3;

    let mut out = OutputDir::create(&config.out_dir)?;
    weights_csv(&mut out, &weights, dataset.geometry())?;
    let mut summarise = |tag: &str, branch: &Branch| -> Result<QuantifyBranch, CliError> {
        let (summary, frames, depth) = emit_branch(&mut out, config, tag, branch)?;
        let band = band_sheet_count(&frames, &labels, config.num_sheets, config.sheet_occupancy)?;
        Ok(QuantifyBranch {
            summary,
            band_sheets: band,
            effective_fps: (band > 0).then(|| effective_fps(band, thickness)).transpose()?,
            mean_abs_depth_error_m: mean_abs_depth_error(&depth, &scene),
            sheet_depth_steps_m: sheet_depth_steps(&depth, &labels, config.num_sheets),
        })
    };
    let single = summarise("1x", &single)?;
    let multi = summarise(&format!("{}x", config.num_sources), &multi)?;
    let depth_error_ratio = match (single.mean_abs_depth_error_m, multi.mean_abs_depth_error_m) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let report = QuantifyReport {
        noise_sigma: config.noise_sigma,
        single,
        multi,
        depth_error_ratio,
        weights: weights.weights().to_vec(),
        collisions,
    };
    out.write_json("metrics.json", &report)?;
    let checksums = out.finish("quantify", config, &report)?;
    Ok(Run { report, checksums })
}

// ---------------------------------------------------- scene-mirror/scatter

#[derive(Debug, Clone, Serialize)]
pub struct SceneReport {
    pub single: BranchSummary,
    pub multi: BranchSummary,
    /// Pixels lit by the N× frames after the last direct-path arrival.
    pub late_pixels: usize,
    pub late_frames: usize,
}

fn run_preset(
    config: &ExperimentConfig,
    preset: ScenePreset,
    name: &str,
) -> Result<Run<SceneReport>, CliError> {
    config.validate()?;
    let scene = build_scene(config, preset)?;
    let dataset = acquire(config, &scene)?;
    let (single, multi, weights, _) = branches(config, &dataset)?;
    let mut out = OutputDir::create(&config.out_dir)?;
    weights_csv(&mut out, &weights, dataset.geometry())?;
    out.write_with("scene.csv", |w| io::write_scene_csv(w, &scene, Some("per-pixel light paths")))?;
    let (single_summary, _, _) = emit_branch(&mut out, config, "1x", &single)?;
    let (multi_summary, frames, _) =
        emit_branch(&mut out, config, &format!("{}x", config.num_sources), &multi)?;

    let last_direct = scene
        .pixels()
        .iter()
        .flat_map(|p| &p.paths)
        .filter(|q| q.geometry.is_none_or(|g| g.mirror.is_none()))
        .map(|q| q.delay)
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = last_direct + config.band_tolerance * frames.frame_period;
    let mut late = vec![false; scene.num_pixels()];
    let mut late_frames = 0;
    for (i, f) in frames.frames.iter().enumerate() {
        if frames.frame_time(i) > cutoff && f.iter().any(|&x| x) {
            late_frames += 1;
            for (l, &on) in late.iter_mut().zip(f) {
                *l |= on;
            }
        }
    }
    let report = SceneReport {
        single: single_summary,
        multi: multi_summary,
        late_pixels: late.iter().filter(|&&x| x).count(),
        late_frames,
    };
    let checksums = out.finish(name, config, &report)?;
    Ok(Run { report, checksums })
}

/// Sphere and backdrop with a mirror behind the light.
pub fn run_mirror_scene(config: &ExperimentConfig) -> Result<Run<SceneReport>, CliError> {
    run_preset(config, ScenePreset::Mirror, "scene-mirror")
}

/// Grape cluster with subsurface scattering `scattering_ps`.
pub fn run_scattering_scene(config: &ExperimentConfig) -> Result<Run<SceneReport>, CliError> {
    run_preset(config, ScenePreset::Grapes, "scene-scatter")
}
