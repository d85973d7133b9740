//! Spatial phase-sweep acquisition, equalization and interleaving.
//!
//! Source `n` of the array sits `n·Δd` further along the optical axis than
//! source 0, which inserts `μ_n = n·Δd/c` on top of the PLL phase. Each source
//! yields one PLL sweep `b_n(φ_j)`; after per-source gain correction the
//! sweeps are merged onto the union axis `{φ_j + μ_n}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codes::ModulationCode;
use crate::error::{invalid, Error, Result};
use crate::scene::{path_delay, SceneResponse};
use crate::sensor::{CorrelationSensor, Measurement, SensorConfig};
use crate::{Vec3, SPEED_OF_LIGHT};

pub const DEFAULT_NUM_SOURCES: usize = 10;
pub const DEFAULT_SOURCE_SPACING: f64 = 2.8e-3;
pub const DEFAULT_STANDOFF: f64 = 0.5;
pub const DEFAULT_HALF_ANGLE_DEG: f64 = 25.0;

/// Relative distance (in units of the smallest axis spacing) below which two
/// merged phase positions are treated as the same sample.
pub const COLLISION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub num_sources: usize,
    /// Δd, metres.
    pub spacing: f64,
    /// Distance from the array to the scene, metres.
    pub standoff: f64,
    /// Worst-case pixel angle to the array axis, radians.
    pub half_angle: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            num_sources: DEFAULT_NUM_SOURCES,
            spacing: DEFAULT_SOURCE_SPACING,
            standoff: DEFAULT_STANDOFF,
            half_angle: DEFAULT_HALF_ANGLE_DEG.to_radians(),
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.num_sources == 0 {
            return Err(invalid("num_sources must be at least 1"));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(invalid("source spacing must be positive"));
        }
        if !(self.standoff > 0.0 && self.standoff.is_finite()) {
            return Err(invalid("standoff must be positive"));
        }
        if !(self.half_angle >= 0.0 && self.half_angle < std::f64::consts::FRAC_PI_2) {
            return Err(invalid("half_angle must lie in [0, π/2)"));
        }
        Ok(())
    }

    /// Spacing whose insertion delay divides `pll_step` into `num_sources`
    /// equal parts, so the merged axis is uniform.
    pub fn matched_spacing(num_sources: usize, pll_step: f64) -> f64 {
        SPEED_OF_LIGHT * pll_step / num_sources as f64
    }

    /// Index of the source at the scene's reference light position. The
    /// array is centred on it.
    pub fn reference_index(&self) -> usize {
        self.num_sources / 2
    }

    /// Axial offset of source `n` from the reference position, metres.
    /// Positive values are closer to the scene.
    pub fn axial_offset(&self, n: usize) -> f64 {
        (n as f64 - self.reference_index() as f64) * self.spacing
    }
}

/// `μ_n = n·Δd/c` for `n = 0..N`.
pub fn insertion_delays(geometry: &ArrayGeometry) -> Vec<f64> {
    (0..geometry.num_sources)
        .map(|n| n as f64 * geometry.spacing / SPEED_OF_LIGHT)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionMode {
    /// Every path of source `n` is delayed by exactly `μ_n`.
    UniformDelay,
    /// Path delays are recomputed from each source's true position.
    MovingSource,
}

/// Optical axis of the array: from the reference light towards the scene.
pub const ARRAY_AXIS: Vec3 = Vec3::new(0.0, 0.0, 1.0);

fn source_position(response: &SceneResponse, geometry: &ArrayGeometry, n: usize) -> Vec3 {
    response.light() + ARRAY_AXIS * geometry.axial_offset(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepDataset {
    measurements: Vec<Measurement>,
    geometry: ArrayGeometry,
    mode: AcquisitionMode,
}

impl SweepDataset {
    pub fn new(
        measurements: Vec<Measurement>,
        geometry: ArrayGeometry,
        mode: AcquisitionMode,
    ) -> Result<Self> {
        geometry.validate()?;
        if measurements.len() != geometry.num_sources {
            return Err(Error::Dimension {
                expected: geometry.num_sources,
                found: measurements.len(),
            });
        }
        let first = &measurements[0];
        if measurements.iter().any(|m| !m.same_layout(first)) {
            return Err(invalid("source measurements must share phase axis and grid"));
        }
        Ok(Self {
            measurements,
            geometry,
            mode,
        })
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn measurement(&self, n: usize) -> &Measurement {
        &self.measurements[n]
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn mode(&self) -> AcquisitionMode {
        self.mode
    }

    pub fn num_sources(&self) -> usize {
        self.measurements.len()
    }

    pub fn phases(&self) -> &[f64] {
        self.measurements[0].phases()
    }

    pub fn insertion_delays(&self) -> Vec<f64> {
        insertion_delays(&self.geometry)
    }

    /// Multiplies source `n` by `gains[n]`, modelling unequal source power.
    pub fn with_source_gains(&self, gains: &[f64]) -> Result<Self> {
        if gains.len() != self.num_sources() {
            return Err(Error::Dimension {
                expected: self.num_sources(),
                found: gains.len(),
            });
        }
        if gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(invalid("source gains must be positive"));
        }
        let measurements = self
            .measurements
            .iter()
            .zip(gains)
            .map(|(m, &g)| m.scaled(g))
            .collect();
        Ok(Self {
            measurements,
            ..self.clone()
        })
    }

    /// Replaces every source measurement through `f(n, measurement)`.
    pub fn map_measurements<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(usize, &Measurement) -> Result<Measurement>,
    {
        let measurements = self
            .measurements
            .iter()
            .enumerate()
            .map(|(n, m)| f(n, m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(measurements, self.geometry, self.mode)
    }
}

/// One PLL sweep per source.
///
/// In [`AcquisitionMode::UniformDelay`] source `n` is measured with insertion
/// delay `μ_n`. In [`AcquisitionMode::MovingSource`] the scene is re-solved
/// with the light at its true position and every source uses the reference
/// source's insertion delay, so the geometry alone supplies the shift.
pub fn acquire_sweep(
    response: &SceneResponse,
    geometry: &ArrayGeometry,
    config: &SensorConfig,
    f: &ModulationCode,
    g: &ModulationCode,
    mode: AcquisitionMode,
) -> Result<SweepDataset> {
    geometry.validate()?;
    config.validate()?;
    let sensor = CorrelationSensor::new(f, g)?;
    let mu = insertion_delays(geometry);
    let measurements = (0..geometry.num_sources)
        .map(|n| match mode {
            AcquisitionMode::UniformDelay => sensor.sweep_pll(response, config, mu[n]),
            AcquisitionMode::MovingSource => {
                let moved = response.with_light_at(source_position(response, geometry, n))?;
                sensor.sweep_pll(&moved, config, mu[geometry.reference_index()])
            }
        })
        .collect::<Result<Vec<_>>>()?;
    SweepDataset::new(measurements, *geometry, mode)
}

/// Per-pixel worst-case difference, in seconds, between the delay the uniform
/// model assigns to source `n` and the delay its true position produces,
/// maximised over sources and paths. Dark pixels report 0.
pub fn delay_discrepancy(response: &SceneResponse, geometry: &ArrayGeometry) -> Result<Vec<f64>> {
    geometry.validate()?;
    let mu = insertion_delays(geometry);
    let m = geometry.reference_index();
    let sensor = response.sensor();
    let reference = response.light();
    let sources: Vec<Vec3> = (0..geometry.num_sources)
        .map(|n| source_position(response, geometry, n))
        .collect();
    response
        .pixels()
        .par_iter()
        .map(|pixel| {
            let mut worst = 0.0f64;
            for path in &pixel.paths {
                let g = path.geometry.ok_or_else(|| {
                    Error::InvalidGeometry("delay discrepancy needs per-path geometry".into())
                })?;
                let delay_from = |light: &Vec3| {
                    let source = g.mirror.map_or(*light, |mirror| mirror.reflect(light));
                    path_delay(&source, &g.point, &sensor)
                };
                let tau_ref = delay_from(&reference);
                for (n, source) in sources.iter().enumerate() {
                    let uniform = tau_ref - (mu[n] - mu[m]);
                    let exact = delay_from(source);
                    worst = worst.max((uniform - exact).abs());
                }
            }
            Ok(worst)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EqualizationMode {
    /// One weight per source from all pixels.
    #[default]
    Joint,
    /// One weight per source and pixel. Pixels without usable signal get 1.
    PerPixel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualizationWeights {
    weights: Vec<f64>,
    /// `per_pixel[pixel * N + n]`, only in per-pixel mode.
    per_pixel: Option<Vec<f64>>,
}

impl EqualizationWeights {
    /// Global weights. `weights[0]` must be 1.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("at least one weight required"));
        }
        if weights[0] != 1.0 {
            return Err(invalid("weight of source 0 must be 1"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(invalid("weights must be finite and positive"));
        }
        Ok(Self {
            weights,
            per_pixel: None,
        })
    }

    pub fn unit(num_sources: usize) -> Self {
        Self {
            weights: vec![1.0; num_sources.max(1)],
            per_pixel: None,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn num_sources(&self) -> usize {
        self.weights.len()
    }

    pub fn is_per_pixel(&self) -> bool {
        self.per_pixel.is_some()
    }

    pub fn weight(&self, n: usize, pixel: usize) -> f64 {
        match &self.per_pixel {
            Some(w) => w[pixel * self.weights.len() + n],
            None => self.weights[n],
        }
    }
}

/// Numerator and denominator of `w_n` for one pixel.
fn pixel_terms(b0: &[f64], bn: &[f64], phases: &[f64], mu: f64) -> (f64, f64) {
    let last = phases[phases.len() - 1];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut k = 0;
    for (j, &phi) in phases.iter().enumerate() {
        let x = phi + mu;
        if x > last {
            break;
        }
        while k + 1 < phases.len() - 1 && phases[k + 1] <= x {
            k += 1;
        }
        let b_hat = if phases.len() == 1 {
            b0[0]
        } else {
            let t = (x - phases[k]) / (phases[k + 1] - phases[k]);
            b0[k] + t * (b0[k + 1] - b0[k])
        };
        num += b_hat * bn[j];
        den += bn[j] * bn[j];
    }
    (num, den)
}

/// Joint least-squares equalization weights.
pub fn compute_equalization(dataset: &SweepDataset) -> Result<EqualizationWeights> {
    compute_equalization_with(dataset, EqualizationMode::Joint)
}

/// `w_n = Σ b̂_n·b_n / Σ b_n²`, with `b̂_n` the source-0 sweep linearly
/// interpolated at `φ + μ_n`. Phases whose `φ + μ_n` falls beyond the
/// source-0 axis are skipped.
pub fn compute_equalization_with(
    dataset: &SweepDataset,
    mode: EqualizationMode,
) -> Result<EqualizationWeights> {
    let n_src = dataset.num_sources();
    let phases = dataset.phases();
    let mu = dataset.insertion_delays();
    for (n, m) in dataset.measurements().iter().enumerate() {
        if m.values().iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateData { source_index: n });
        }
    }
    let b0 = dataset.measurement(0);
    let num_pixels = b0.num_pixels();
    // terms[pixel][n] = (num, den)
    let terms: Vec<Vec<(f64, f64)>> = (0..num_pixels)
        .into_par_iter()
        .map(|p| {
            (0..n_src)
                .map(|n| pixel_terms(b0.pixel(p), dataset.measurement(n).pixel(p), phases, mu[n]))
                .collect()
        })
        .collect();

    let mut weights = vec![1.0; n_src];
    for (n, w) in weights.iter_mut().enumerate().skip(1) {
        let (num, den) = terms
            .iter()
            .fold((0.0, 0.0), |(a, b), t| (a + t[n].0, b + t[n].1));
        if den == 0.0 || !(num / den).is_finite() || num / den <= 0.0 {
            return Err(Error::DegenerateData { source_index: n });
        }
        *w = num / den;
    }

    let per_pixel = match mode {
        EqualizationMode::Joint => None,
        EqualizationMode::PerPixel => Some(
            terms
                .iter()
                .flat_map(|t| {
                    t.iter().enumerate().map(|(n, &(num, den))| {
                        let w = num / den;
                        if n == 0 || den == 0.0 || !w.is_finite() || w <= 0.0 {
                            1.0
                        } else {
                            w
                        }
                    })
                })
                .collect(),
        ),
    };
    Ok(EqualizationWeights { weights, per_pixel })
}

/// Merged measurement plus the `(source, step)` origin of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Interleaved {
    pub measurement: Measurement,
    /// One entry per merged sample; more than one pair marks a collision.
    pub provenance: Vec<Vec<(usize, usize)>>,
    pub collisions: usize,
}

impl Interleaved {
    pub fn has_collisions(&self) -> bool {
        self.collisions > 0
    }
}

/// Merges all sources onto the sorted union axis `{φ_j + μ_n}` with values
/// `w_n·b_n(φ_j)`. Positions closer than [`COLLISION_TOLERANCE`] times the
/// smallest spacing are averaged into one sample and counted as a collision.
pub fn interleave(dataset: &SweepDataset, weights: &EqualizationWeights) -> Result<Interleaved> {
    let n_src = dataset.num_sources();
    if weights.num_sources() != n_src {
        return Err(Error::Dimension {
            expected: n_src,
            found: weights.num_sources(),
        });
    }
    let phases = dataset.phases();
    let mu = dataset.insertion_delays();

    let mut order: Vec<(f64, usize, usize)> = (0..n_src)
        .flat_map(|n| phases.iter().enumerate().map(move |(j, &phi)| (phi, n, j)))
        .map(|(phi, n, j)| (phi + mu[n], n, j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let spacing = phases
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain(mu.windows(2).map(|w| w[1] - w[0]))
        .filter(|d| *d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let tol = if spacing.is_finite() {
        COLLISION_TOLERANCE * spacing
    } else {
        0.0
    };

    let mut groups: Vec<Vec<(f64, usize, usize)>> = Vec::new();
    for item in order {
        match groups.last_mut() {
            Some(g) if item.0 - g[0].0 <= tol => g.push(item),
            _ => groups.push(vec![item]),
        }
    }
    let collisions = groups.iter().filter(|g| g.len() > 1).count();
    let axis: Vec<f64> = groups
        .iter()
        .map(|g| g.iter().map(|s| s.0).sum::<f64>() / g.len() as f64)
        .collect();
    let provenance: Vec<Vec<(usize, usize)>> = groups
        .iter()
        .map(|g| g.iter().map(|s| (s.1, s.2)).collect())
        .collect();

    let m0 = dataset.measurement(0);
    let len = axis.len();
    let mut values = vec![0.0; m0.num_pixels() * len];
    values
        .par_chunks_mut(len)
        .enumerate()
        .for_each(|(p, out)| {
            for (v, origins) in out.iter_mut().zip(&provenance) {
                let sum: f64 = origins
                    .iter()
                    .map(|&(n, j)| weights.weight(n, p) * dataset.measurement(n).pixel(p)[j])
                    .sum();
                *v = sum / origins.len() as f64;
            }
        });
    let measurement = Measurement::new(m0.rows(), m0.cols(), axis, values)?;
    Ok(Interleaved {
        measurement,
        provenance,
        collisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::default_code;
    use crate::scene::{build_planar_scene, ScenePath};

    fn single_path_scene(delay: f64) -> SceneResponse {
        let mut s = SceneResponse::new(1, 1).unwrap();
        s.set_paths(0, 0, vec![ScenePath::new(delay, 1.0).unwrap()]);
        s
    }

    fn small_config() -> SensorConfig {
        SensorConfig {
            num_pll_steps: 400,
            phase_origin: -19.2e-9 + 3.36e-9,
            ..SensorConfig::default()
        }
    }

    #[test]
    fn insertion_delay_values() {
        let g = ArrayGeometry {
            spacing: 3e-3,
            ..ArrayGeometry::default()
        };
        let mu = insertion_delays(&g);
        assert_eq!(mu[0], 0.0);
        assert!((mu[1] - 1.0007e-11).abs() < 1e-15);
        let mu = insertion_delays(&ArrayGeometry::default());
        assert!((mu[1] - 9.34e-12).abs() < 1e-14);
    }

    #[test]
    fn geometry_validation() {
        let bad = [
            ArrayGeometry { num_sources: 0, ..ArrayGeometry::default() },
            ArrayGeometry { spacing: 0.0, ..ArrayGeometry::default() },
            ArrayGeometry { standoff: -1.0, ..ArrayGeometry::default() },
            ArrayGeometry { half_angle: std::f64::consts::FRAC_PI_2, ..ArrayGeometry::default() },
        ];
        for g in bad {
            assert!(g.validate().is_err());
        }
    }

    #[test]
    fn single_source_equals_plain_sweep() {
        let code = default_code();
        let scene = build_planar_scene(3, 3, 0.5, 0.2).unwrap();
        let config = small_config();
        let g = ArrayGeometry { num_sources: 1, ..ArrayGeometry::default() };
        let ds = acquire_sweep(&scene, &g, &config, &code, &code, AcquisitionMode::UniformDelay)
            .unwrap();
        let direct = CorrelationSensor::new(&code, &code)
            .unwrap()
            .sweep_pll(&scene, &config, 0.0)
            .unwrap();
        assert_eq!(ds.measurement(0), &direct);
        let merged = interleave(&ds, &EqualizationWeights::unit(1)).unwrap();
        assert_eq!(merged.measurement, direct);
    }

    #[test]
    fn source_k_matches_shifted_source_zero() {
        let code = default_code();
        let scene = single_path_scene(3.36e-9);
        let config = small_config();
        let g = ArrayGeometry::default();
        let ds = acquire_sweep(&scene, &g, &config, &code, &code, AcquisitionMode::UniformDelay)
            .unwrap();
        let sensor = CorrelationSensor::new(&code, &code).unwrap();
        let mu = insertion_delays(&g);
        for (k, &mu_k) in mu.iter().enumerate() {
            for (j, &phi) in config.phase_axis().iter().enumerate().step_by(37) {
                let direct = sensor.measure(&scene, phi + mu_k, 0.0)[0];
                assert_eq!(ds.measurement(k).pixel(0)[j], direct);
            }
        }
    }

    #[test]
    fn weights_self_consistent_and_halved() {
        let code = default_code();
        let scene = single_path_scene(3.36e-9);
        let g = ArrayGeometry { spacing: ArrayGeometry::matched_spacing(10, 96e-12), ..ArrayGeometry::default() };
        let ds = acquire_sweep(&scene, &g, &small_config(), &code, &code, AcquisitionMode::UniformDelay)
            .unwrap();
        let w = compute_equalization(&ds).unwrap();
        assert_eq!(w.weights()[0], 1.0);
        for &wn in w.weights() {
            assert!((wn - 1.0).abs() < 1e-6, "{wn}");
        }
        let mut gains = vec![1.0; 10];
        gains[3] = 0.5;
        let w = compute_equalization(&ds.with_source_gains(&gains).unwrap()).unwrap();
        assert!((w.weights()[3] - 2.0).abs() < 2e-6);
    }

    #[test]
    fn zero_source_is_degenerate() {
        let code = default_code();
        let scene = single_path_scene(3.36e-9);
        let ds = acquire_sweep(
            &scene,
            &ArrayGeometry::default(),
            &small_config(),
            &code,
            &code,
            AcquisitionMode::UniformDelay,
        )
        .unwrap();
        let zeroed = ds
            .map_measurements(|n, m| Ok(if n == 4 { m.scaled(0.0) } else { m.clone() }))
            .unwrap();
        match compute_equalization(&zeroed) {
            Err(Error::DegenerateData { source_index }) => assert_eq!(source_index, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn matched_spacing_gives_uniform_axis() {
        let code = default_code();
        let scene = single_path_scene(3.36e-9);
        let config = small_config();
        let g = ArrayGeometry { spacing: ArrayGeometry::matched_spacing(10, config.pll_step), ..ArrayGeometry::default() };
        let ds = acquire_sweep(&scene, &g, &config, &code, &code, AcquisitionMode::UniformDelay)
            .unwrap();
        let merged = interleave(&ds, &EqualizationWeights::unit(10)).unwrap();
        assert!(!merged.has_collisions());
        assert_eq!(merged.measurement.num_samples(), 10 * config.num_pll_steps);
        let spacing = merged.measurement.uniform_spacing(1e-6).unwrap();
        assert!((spacing - 9.6e-12).abs() < 1e-20);
        for (i, origin) in merged.provenance.iter().enumerate() {
            assert_eq!(origin, &vec![(i % 10, i / 10)]);
        }
    }

    #[test]
    fn collisions_are_averaged_and_flagged() {
        let code = default_code();
        let scene = single_path_scene(3.36e-9);
        let config = small_config();
        // Δd/c equal to one PLL step: source 1 lands on source 0's next phase.
        let g = ArrayGeometry {
            num_sources: 2,
            spacing: SPEED_OF_LIGHT * config.pll_step,
            ..ArrayGeometry::default()
        };
        let ds = acquire_sweep(&scene, &g, &config, &code, &code, AcquisitionMode::UniformDelay)
            .unwrap();
        let merged = interleave(&ds, &EqualizationWeights::unit(2)).unwrap();
        assert!(merged.has_collisions());
        assert_eq!(merged.collisions, config.num_pll_steps - 1);
        assert_eq!(merged.measurement.num_samples(), config.num_pll_steps + 1);
        assert_eq!(merged.provenance[1], vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn weight_count_mismatch_rejected() {
        let code = default_code();
        let scene = single_path_scene(3.36e-9);
        let ds = acquire_sweep(
            &scene,
            &ArrayGeometry::default(),
            &small_config(),
            &code,
            &code,
            AcquisitionMode::UniformDelay,
        )
        .unwrap();
        assert!(interleave(&ds, &EqualizationWeights::unit(3)).is_err());
    }

    #[test]
    fn moving_source_needs_geometry() {
        let code = default_code();
        let scene = single_path_scene(3.36e-9);
        let r = acquire_sweep(
            &scene,
            &ArrayGeometry::default(),
            &small_config(),
            &code,
            &code,
            AcquisitionMode::MovingSource,
        );
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn on_axis_pixel_has_no_discrepancy() {
        let scene = build_planar_scene(1, 1, 0.5, 0.0).unwrap();
        let d = delay_discrepancy(&scene, &ArrayGeometry::default()).unwrap();
        assert!(d[0] < 1e-18, "{}", d[0]);
    }
}
