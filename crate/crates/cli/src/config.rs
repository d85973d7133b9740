//! Flat TOML experiment configuration.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected so that typos do not silently fall back to defaults. Times
//! are given in the unit named by the key suffix.
//!
//! ```toml
//! scene = "terraced"          # terraced | planar | mirror | grapes
//! rows = 64
//! cols = 64
//! num_sources = 10
//! source_spacing_mm = 2.8
//! noise_sigma = 0.05
//! seed = 7
//! ```

use serde::{Deserialize, Serialize};

use phasesweep::codes::{generate_msequence, ModulationCode, MAX_REGISTER_LENGTH, MIN_REGISTER_LENGTH};
use phasesweep::recon::{ReconConfig, SearchRegion};
use phasesweep::sensor::SensorConfig;
use phasesweep::sweep::{AcquisitionMode, ArrayGeometry, EqualizationMode};
use phasesweep::SPEED_OF_LIGHT;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenePreset {
    Terraced,
    Planar,
    Mirror,
    Grapes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelChoice {
    Analytic,
    Measured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // Scene.
    pub scene: ScenePreset,
    pub rows: usize,
    pub cols: usize,
    pub num_sheets: usize,
    pub sheet_thickness_mm: f64,
    /// Distance to the scene (farthest terrace sheet, planar target) and the
    /// `d` of the error analysis, metres.
    pub standoff_m: f64,
    /// Worst-case pixel angle, degrees.
    pub half_angle_deg: f64,
    /// Subsurface scattering time constant of the grape preset.
    pub scattering_ps: f64,

    // Codes and sensor.
    pub register_length: u32,
    pub seed_state: u32,
    pub modulation_frequency_hz: f64,
    pub pll_step_ps: f64,
    pub num_pll_steps: usize,
    /// First PLL phase. Absent: centre the sweep on the scene's delays.
    pub phase_origin_ps: Option<f64>,
    pub exposure_normalization: bool,

    // Light-source array.
    pub num_sources: usize,
    pub source_spacing_mm: f64,
    /// Override the spacing with `c·pll_step/num_sources`, which makes the
    /// merged phase axis exactly uniform.
    pub matched_spacing: bool,
    pub acquisition_mode: AcquisitionMode,
    pub equalization: EqualizationMode,

    // Noise.
    pub noise_sigma: f64,
    pub seed: u64,

    // Reconstruction.
    pub kernel: KernelChoice,
    pub calibration_pixel: usize,
    pub sparsity: usize,
    pub search_margin_ns: f64,
    pub fit_half_width_ns: f64,
    pub median_taps: usize,
    pub band_tolerance: f64,
    pub amplitude_threshold: f64,
    pub sheet_occupancy: f64,
    pub hue_resolution_deg: f64,

    // Sampling study.
    pub study_steps_ps: Vec<f64>,
    pub study_native_step_ps: f64,
    pub study_window_ns: f64,
    pub study_trials: usize,
    /// Scattering applied to the study's ground-truth profile.
    pub study_scattering_ps: f64,

    // Error analysis tables.
    pub analysis_theta_steps: usize,
    pub analysis_max_sources: usize,

    /// Also write per-source measurements as CSV (large).
    pub write_measurement_csv: bool,

    pub out_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene: ScenePreset::Terraced,
            rows: 64,
            cols: 64,
            num_sheets: 10,
            sheet_thickness_mm: 3.0,
            standoff_m: 0.5,
            half_angle_deg: 25.0,
            scattering_ps: 200.0,
            register_length: 5,
            seed_state: 1,
            modulation_frequency_hz: 50e6,
            pll_step_ps: 96.0,
            num_pll_steps: 2000,
            phase_origin_ps: None,
            exposure_normalization: false,
            num_sources: 10,
            source_spacing_mm: 2.8,
            matched_spacing: false,
            acquisition_mode: AcquisitionMode::UniformDelay,
            equalization: EqualizationMode::Joint,
            noise_sigma: 0.0,
            seed: 0,
            kernel: KernelChoice::Analytic,
            calibration_pixel: 0,
            sparsity: 1,
            search_margin_ns: 4.0,
            fit_half_width_ns: 24.0,
            median_taps: 5,
            band_tolerance: 1.0,
            amplitude_threshold: 0.1,
            sheet_occupancy: 0.5,
            hue_resolution_deg: 0.1,
            study_steps_ps: vec![9.6, 19.2, 48.0, 96.0],
            study_native_step_ps: 0.96,
            study_window_ns: 60.0,
            study_trials: 100,
            study_scattering_ps: 0.0,
            analysis_theta_steps: 25,
            analysis_max_sources: 30,
            write_measurement_csv: false,
            out_dir: "out".into(),
        }
    }
}

fn field(name: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: name.into(),
        message: message.into(),
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be a positive number, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<(), CliError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field(name, format!("must be a nonnegative number, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Field-level checks against every module's preconditions.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.rows == 0 {
            return Err(field("rows", "must be at least 1"));
        }
        if self.cols == 0 {
            return Err(field("cols", "must be at least 1"));
        }
        if self.num_sheets == 0 {
            return Err(field("num_sheets", "must be at least 1"));
        }
        if self.scene == ScenePreset::Terraced && self.cols < self.num_sheets {
            return Err(field("cols", "terraced scene needs one column per sheet"));
        }
        positive("sheet_thickness_mm", self.sheet_thickness_mm)?;
        positive("standoff_m", self.standoff_m)?;
        if self.scene == ScenePreset::Terraced
            && self.standoff_m <= (self.num_sheets - 1) as f64 * self.sheet_thickness_mm * 1e-3
        {
            return Err(field("standoff_m", "front terrace sheet would be behind the camera"));
        }
        if !(self.half_angle_deg >= 0.0 && self.half_angle_deg < 90.0) {
            return Err(field("half_angle_deg", "must lie in [0, 90)"));
        }
        nonnegative("scattering_ps", self.scattering_ps)?;
        if !(MIN_REGISTER_LENGTH..=MAX_REGISTER_LENGTH).contains(&self.register_length) {
            return Err(field(
                "register_length",
                format!("must lie in {MIN_REGISTER_LENGTH}..={MAX_REGISTER_LENGTH}"),
            ));
        }
        if self.seed_state == 0 || u64::from(self.seed_state) >= 1u64 << self.register_length {
            return Err(field("seed_state", "must be nonzero and fit the register"));
        }
        positive("modulation_frequency_hz", self.modulation_frequency_hz)?;
        positive("pll_step_ps", self.pll_step_ps)?;
        if self.num_pll_steps == 0 {
            return Err(field("num_pll_steps", "must be at least 1"));
        }
        if let Some(o) = self.phase_origin_ps {
            if !o.is_finite() {
                return Err(field("phase_origin_ps", "must be finite"));
            }
        }
        if self.num_sources == 0 {
            return Err(field("num_sources", "must be at least 1"));
        }
        positive("source_spacing_mm", self.source_spacing_mm)?;
        nonnegative("noise_sigma", self.noise_sigma)?;
        if self.calibration_pixel >= self.rows * self.cols {
            return Err(field("calibration_pixel", "outside the pixel grid"));
        }
        if self.sparsity == 0 {
            return Err(field("sparsity", "must be at least 1"));
        }
        nonnegative("search_margin_ns", self.search_margin_ns)?;
        if !(self.fit_half_width_ns >= self.search_margin_ns && self.fit_half_width_ns.is_finite()) {
            return Err(field("fit_half_width_ns", "must be at least search_margin_ns"));
        }
        if self.median_taps == 0 || self.median_taps.is_multiple_of(2) {
            return Err(field("median_taps", "must be odd and positive"));
        }
        nonnegative("band_tolerance", self.band_tolerance)?;
        if !(0.0..=1.0).contains(&self.amplitude_threshold) {
            return Err(field("amplitude_threshold", "must lie in [0, 1]"));
        }
        if !(self.sheet_occupancy > 0.0 && self.sheet_occupancy <= 1.0) {
            return Err(field("sheet_occupancy", "must lie in (0, 1]"));
        }
        positive("hue_resolution_deg", self.hue_resolution_deg)?;
        if self.study_steps_ps.is_empty() {
            return Err(field("study_steps_ps", "needs at least one step"));
        }
        for &s in &self.study_steps_ps {
            positive("study_steps_ps", s)?;
            let q = (s / self.study_native_step_ps).round();
            if q < 1.0 || ((q * self.study_native_step_ps - s) / s).abs() > 1e-6 {
                return Err(field(
                    "study_steps_ps",
                    format!("{s} ps is not a multiple of study_native_step_ps"),
                ));
            }
            if s * 1e-3 > self.study_window_ns {
                return Err(field("study_steps_ps", format!("{s} ps exceeds study_window_ns")));
            }
        }
        positive("study_native_step_ps", self.study_native_step_ps)?;
        positive("study_window_ns", self.study_window_ns)?;
        nonnegative("study_scattering_ps", self.study_scattering_ps)?;
        if self.study_trials == 0 {
            return Err(field("study_trials", "must be at least 1"));
        }
        if self.analysis_theta_steps == 0 {
            return Err(field("analysis_theta_steps", "must be at least 1"));
        }
        if self.analysis_max_sources == 0 {
            return Err(field("analysis_max_sources", "must be at least 1"));
        }
        Ok(())
    }

    pub fn code(&self) -> Result<ModulationCode, CliError> {
        Ok(generate_msequence(self.register_length, self.seed_state)?
            .with_chip_duration(1.0 / self.modulation_frequency_hz)?)
    }

    pub fn sensor(&self) -> SensorConfig {
        SensorConfig {
            modulation_frequency: self.modulation_frequency_hz,
            pll_step: self.pll_step_ps * 1e-12,
            num_pll_steps: self.num_pll_steps,
            phase_origin: self.phase_origin_ps.unwrap_or(0.0) * 1e-12,
            exposure_normalization: self.exposure_normalization,
        }
    }

    pub fn source_spacing(&self) -> f64 {
        if self.matched_spacing {
            SPEED_OF_LIGHT * self.pll_step_ps * 1e-12 / self.num_sources as f64
        } else {
            self.source_spacing_mm * 1e-3
        }
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry {
            num_sources: self.num_sources,
            spacing: self.source_spacing(),
            standoff: self.standoff_m,
            half_angle: self.half_angle_deg.to_radians(),
        }
    }

    pub fn recon(&self) -> ReconConfig {
        ReconConfig {
            sparsity: self.sparsity,
            search: SearchRegion::AroundPeak {
                margin: self.search_margin_ns * 1e-9,
                half_width: self.fit_half_width_ns * 1e-9,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn empty_file_is_default() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(
            ExperimentConfig::from_toml("pll_stepp_ps = 3.0"),
            Err(CliError::Parse(_))
        ));
    }

    #[test]
    fn field_errors_name_the_field() {
        match ExperimentConfig::from_toml("median_taps = 4") {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "median_taps"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::from_toml("study_steps_ps = [10.0]") {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "study_steps_ps"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn matched_spacing_gives_pll_fraction() {
        let c = ExperimentConfig {
            matched_spacing: true,
            ..ExperimentConfig::default()
        };
        let mu = c.source_spacing() / SPEED_OF_LIGHT;
        assert!((mu - 9.6e-12).abs() < 1e-24);
    }
}
