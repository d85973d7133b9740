//! Per-pixel scene impulse responses.
//!
//! Each pixel holds a sparse list of light paths (total travel time and
//! amplitude). Paths built from explicit geometry keep the surface point they
//! visit, so the sweep module can recompute exact delays when the light
//! source moves. The sensor and the reference light source sit at the origin
//! looking down `+z` unless a preset says otherwise.


use crate::error::{invalid, Error, Result};
use crate::{Vec3, SPEED_OF_LIGHT};

/// Default pixel grid edge length.
pub const DEFAULT_GRID: usize = 64;

/// Total travel time light → point → sensor.
pub fn path_delay(light: &Vec3, point: &Vec3, sensor: &Vec3) -> f64 {
    ((light - point).norm() + (point - sensor).norm()) / SPEED_OF_LIGHT
}

/// Planar mirror given by a point on the plane and its normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorPlane {
    pub point: Vec3,
    pub normal: Vec3,
}

impl MirrorPlane {
    pub fn new(point: Vec3, normal: Vec3) -> Result<Self> {
        let len = normal.norm();
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidGeometry("mirror normal must be nonzero".into()));
        }
        Ok(Self {
            point,
            normal: normal / len,
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        (p - self.point).dot(&self.normal)
    }

    pub fn reflect(&self, p: &Vec3) -> Vec3 {
        p - 2.0 * self.signed_distance(p) * self.normal
    }
}

/// Where a path touches the scene. `mirror` is set for paths whose source
/// leg bounces off a mirror first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    pub point: Vec3,
    pub mirror: Option<MirrorPlane>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePath {
    /// Total travel time source → point → sensor, seconds.
    pub delay: f64,
    pub amplitude: f64,
    pub geometry: Option<PathGeometry>,
}

impl ScenePath {
    pub fn new(delay: f64, amplitude: f64) -> Result<Self> {
        if !(delay > 0.0 && delay.is_finite()) {
            return Err(invalid(format!("path delay {delay} must be positive")));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(invalid(format!("path amplitude {amplitude} must be nonnegative")));
        }
        Ok(Self {
            delay,
            amplitude,
            geometry: None,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PixelResponse {
    /// Sorted by delay.
    pub paths: Vec<ScenePath>,
    /// Subsurface scattering time constant, seconds. Zero means none.
    pub scattering: f64,
}

/// Sensor, reference light and one surface point per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry3D {
    pub sensor: Vec3,
    pub light: Vec3,
    pub points: Vec<Vec3>,
}

impl Geometry3D {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|c| c.is_finite());
        if !finite(&self.sensor) || !finite(&self.light) || !self.points.iter().all(finite) {
            return Err(Error::InvalidGeometry("non-finite coordinate".into()));
        }
        if self.points.iter().any(|p| (p - self.light).norm() == 0.0) {
            return Err(Error::InvalidGeometry(
                "light source coincides with a surface point".into(),
            ));
        }
        Ok(())
    }
}

/// Per-pixel sparse impulse response over a `rows × cols` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneResponse {
    rows: usize,
    cols: usize,
    pixels: Vec<PixelResponse>,
    sensor: Vec3,
    light: Vec3,
    falloff: bool,
}

impl SceneResponse {
    /// Empty (all dark) response.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGeometry(format!("grid {rows}x{cols} is empty")));
        }
        Ok(Self {
            rows,
            cols,
            pixels: vec![PixelResponse::default(); rows * cols],
            sensor: Vec3::zeros(),
            light: Vec3::zeros(),
            falloff: false,
        })
    }

    /// One direct path per pixel through `geometry.points`, amplitude 1.
    pub fn from_geometry(rows: usize, cols: usize, geometry: &Geometry3D) -> Result<Self> {
        geometry.validate()?;
        let mut response = Self::new(rows, cols)?;
        if geometry.points.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                found: geometry.points.len(),
            });
        }
        response.sensor = geometry.sensor;
        response.light = geometry.light;
        for (pixel, point) in response.pixels.iter_mut().zip(&geometry.points) {
            pixel.paths.push(ScenePath {
                delay: path_delay(&geometry.light, point, &geometry.sensor),
                amplitude: 1.0,
                geometry: Some(PathGeometry {
                    point: *point,
                    mirror: None,
                }),
            });
        }
        Ok(response)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_pixels(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixels(&self) -> &[PixelResponse] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> &PixelResponse {
        &self.pixels[row * self.cols + col]
    }

    pub fn sensor(&self) -> Vec3 {
        self.sensor
    }

    pub fn light(&self) -> Vec3 {
        self.light
    }

    /// Whether amplitudes follow `1/r²` of the source leg when the source moves.
    pub fn falloff(&self) -> bool {
        self.falloff
    }

    /// Enables `1/r²` falloff of the source leg, normalised so a path whose
    /// source leg is `reference_distance` long keeps its amplitude.
    pub fn with_inverse_square_falloff(mut self, reference_distance: f64) -> Result<Self> {
        if !(reference_distance > 0.0) {
            return Err(invalid("falloff reference distance must be positive"));
        }
        let light = self.light;
        for path in self.pixels.iter_mut().flat_map(|p| p.paths.iter_mut()) {
            if let Some(g) = &path.geometry {
                let r = source_leg(&light, g).norm();
                path.amplitude *= (reference_distance / r).powi(2);
            }
        }
        self.falloff = true;
        Ok(self)
    }

    /// Replaces the paths of one pixel (re-sorted, zero amplitudes pruned).
    pub fn set_paths(&mut self, row: usize, col: usize, paths: Vec<ScenePath>) {
        let pixel = &mut self.pixels[row * self.cols + col];
        pixel.paths = paths;
        normalize_paths(&mut pixel.paths);
    }

    pub fn set_scattering(&mut self, row: usize, col: usize, time_constant: f64) -> Result<()> {
        check_time_constant(time_constant)?;
        self.pixels[row * self.cols + col].scattering = time_constant;
        Ok(())
    }

    /// Every path delay shifted by `delta` seconds.
    pub fn shifted(&self, delta: f64) -> Self {
        let mut out = self.clone();
        for path in out.pixels.iter_mut().flat_map(|p| p.paths.iter_mut()) {
            path.delay += delta;
        }
        out
    }

    /// Earliest and latest path delay over all pixels.
    pub fn delay_range(&self) -> Option<(f64, f64)> {
        self.pixels
            .iter()
            .flat_map(|p| p.paths.iter())
            .map(|p| p.delay)
            .fold(None, |acc, d| match acc {
                None => Some((d, d)),
                Some((lo, hi)) => Some((lo.min(d), hi.max(d))),
            })
    }

    /// Recomputes geometric paths for a light source at `light`.
    ///
    /// Mirror paths use the reflection of the moved source. Paths without
    /// geometry cannot be recomputed and yield an error.
    pub fn with_light_at(&self, light: Vec3) -> Result<Self> {
        let mut out = self.clone();
        for path in out.pixels.iter_mut().flat_map(|p| p.paths.iter_mut()) {
            let g = path.geometry.ok_or_else(|| {
                Error::InvalidGeometry("exact source motion needs per-path geometry".into())
            })?;
            let old_leg = source_leg(&self.light, &g).norm();
            let new_leg = source_leg(&light, &g).norm();
            let source = g.mirror.map_or(light, |m| m.reflect(&light));
            path.delay = path_delay(&source, &g.point, &self.sensor);
            if self.falloff {
                path.amplitude *= (old_leg / new_leg).powi(2);
            }
        }
        out.light = light;
        for pixel in &mut out.pixels {
            normalize_paths(&mut pixel.paths);
        }
        Ok(out)
    }
}

fn source_leg(light: &Vec3, g: &PathGeometry) -> Vec3 {
    let source = g.mirror.map_or(*light, |m| m.reflect(light));
    g.point - source
}

fn normalize_paths(paths: &mut Vec<ScenePath>) {
    paths.retain(|p| p.amplitude > 0.0);
    paths.sort_by(|a, b| a.delay.total_cmp(&b.delay));
}

fn check_time_constant(time_constant: f64) -> Result<()> {
    if !(time_constant >= 0.0 && time_constant.is_finite()) {
        return Err(invalid(format!(
            "scattering time constant {time_constant} must be nonnegative"
        )));
    }
    Ok(())
}

/// Column band of a terraced target: sheet index for `col`.
pub fn terrace_sheet_of_column(col: usize, cols: usize, num_sheets: usize) -> usize {
    col * num_sheets / cols
}

/// A stack of `num_sheets` sheets seen head-on, forming a staircase.
///
/// Columns are split into `num_sheets` contiguous vertical bands. Band `k`
/// sits at one-way distance `standoff − k·sheet_thickness` on the optical
/// axis, so adjacent bands differ by `2·sheet_thickness/c` in round trip.
pub fn build_terraced_scene(
    num_sheets: usize,
    sheet_thickness: f64,
    standoff: f64,
    rows: usize,
    cols: usize,
) -> Result<SceneResponse> {
    if num_sheets == 0 {
        return Err(invalid("terraced scene needs at least one sheet"));
    }
    if !(sheet_thickness > 0.0) || !(standoff > 0.0) {
        return Err(invalid("sheet thickness and standoff must be positive"));
    }
    if cols < num_sheets || rows == 0 {
        return Err(Error::InvalidGeometry(format!(
            "{rows}x{cols} grid cannot give each of {num_sheets} sheets a column"
        )));
    }
    let nearest = standoff - (num_sheets - 1) as f64 * sheet_thickness;
    if !(nearest > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "front sheet at {nearest} m is not in front of the camera"
        )));
    }
    let points = (0..rows * cols)
        .map(|i| {
            let k = terrace_sheet_of_column(i % cols, cols, num_sheets);
            Vec3::new(0.0, 0.0, standoff - k as f64 * sheet_thickness)
        })
        .collect();
    let geometry = Geometry3D {
        sensor: Vec3::zeros(),
        light: Vec3::zeros(),
        points,
    };
    SceneResponse::from_geometry(rows, cols, &geometry)
}

/// Viewing direction of pixel `(row, col)` for a pinhole at the origin
/// looking down `+z`, with the grid's outer corner at `half_angle` off axis.
pub fn pixel_direction(row: usize, col: usize, rows: usize, cols: usize, half_angle: f64) -> Vec3 {
    let half_extent = half_angle.tan() / std::f64::consts::SQRT_2;
    let u = ((col as f64 + 0.5) / cols as f64 * 2.0 - 1.0) * half_extent;
    let v = ((row as f64 + 0.5) / rows as f64 * 2.0 - 1.0) * half_extent;
    Vec3::new(u, v, 1.0).normalize()
}

/// Plane `z = standoff` seen through a pinhole whose corner rays are
/// `half_angle` off axis. Every pixel center lies strictly inside that cone.
pub fn build_planar_scene(
    rows: usize,
    cols: usize,
    standoff: f64,
    half_angle: f64,
) -> Result<SceneResponse> {
    if !(standoff > 0.0) {
        return Err(invalid("standoff must be positive"));
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&half_angle) {
        return Err(invalid(format!("half angle {half_angle} outside [0, π/2)")));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidGeometry(format!("grid {rows}x{cols} is empty")));
    }
    let points = (0..rows * cols)
        .map(|i| {
            let dir = pixel_direction(i / cols, i % cols, rows, cols, half_angle);
            dir * (standoff / dir.z)
        })
        .collect();
    let geometry = Geometry3D {
        sensor: Vec3::zeros(),
        light: Vec3::zeros(),
        points,
    };
    SceneResponse::from_geometry(rows, cols, &geometry)
}

/// Appends, for every geometric direct path, a path from the light source
/// mirrored across `mirror`, with amplitude scaled by `reflectance`.
pub fn add_mirror_virtual_source(
    response: &SceneResponse,
    mirror: &MirrorPlane,
    reflectance: f64,
) -> Result<SceneResponse> {
    if !(0.0..=1.0).contains(&reflectance) {
        return Err(invalid(format!("reflectance {reflectance} outside [0, 1]")));
    }
    if mirror.signed_distance(&response.light).abs() < 1e-12 {
        return Err(Error::InvalidGeometry(
            "mirror plane passes through the light source".into(),
        ));
    }
    let virtual_light = mirror.reflect(&response.light);
    let mut out = response.clone();
    for pixel in &mut out.pixels {
        let added: Vec<ScenePath> = pixel
            .paths
            .iter()
            .filter_map(|p| {
                let g = p.geometry?;
                if g.mirror.is_some() {
                    return None;
                }
                Some(ScenePath {
                    delay: path_delay(&virtual_light, &g.point, &response.sensor),
                    amplitude: p.amplitude * reflectance,
                    geometry: Some(PathGeometry {
                        point: g.point,
                        mirror: Some(*mirror),
                    }),
                })
            })
            .collect();
        pixel.paths.extend(added);
        normalize_paths(&mut pixel.paths);
    }
    Ok(out)
}

/// Marks every pixel as subsurface-scattering with `time_constant`.
///
/// The sensor convolves each path's delta with `exp(−t/τ)/τ`; zero keeps
/// pure deltas.
pub fn apply_scattering(response: &SceneResponse, time_constant: f64) -> Result<SceneResponse> {
    check_time_constant(time_constant)?;
    let mut out = response.clone();
    for pixel in &mut out.pixels {
        pixel.scattering = time_constant;
    }
    Ok(out)
}

/// Ray–sphere intersection distance along a unit direction from the origin.
fn hit_sphere(dir: &Vec3, center: &Vec3, radius: f64) -> Option<f64> {
    let b = dir.dot(center);
    let disc = b * b - (center.norm_squared() - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let t = b - disc.sqrt();
    (t > 0.0).then_some(t)
}

/// Qualitative coupled-mirror scene.
///
/// A rounded object (sphere) in front of a backdrop, with a mirror behind
/// the light source. Pixels outside `0.75` of the image radius see the
/// backdrop only through the mirror (their direct leg is baffled), so the
/// latest arrivals come from the virtual source. Dimensions are desk-scale
/// guesses.
pub fn coupled_mirror_preset(rows: usize, cols: usize) -> Result<SceneResponse> {
    let half_angle = 20f64.to_radians();
    let center = Vec3::new(0.0, 0.0, 0.55);
    let radius = 0.08;
    let backdrop = 0.7;
    let mut points = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let dir = pixel_direction(r, c, rows, cols, half_angle);
            let t = hit_sphere(&dir, &center, radius).unwrap_or(backdrop / dir.z);
            points.push(dir * t);
        }
    }
    let geometry = Geometry3D {
        sensor: Vec3::zeros(),
        light: Vec3::zeros(),
        points,
    };
    let direct = SceneResponse::from_geometry(rows, cols, &geometry)?;
    let mirror = MirrorPlane::new(Vec3::new(0.0, 0.0, -0.15), Vec3::z())?;
    let mut scene = add_mirror_virtual_source(&direct, &mirror, 0.8)?;
    for r in 0..rows {
        for c in 0..cols {
            let u = (c as f64 + 0.5) / cols as f64 * 2.0 - 1.0;
            let v = (r as f64 + 0.5) / rows as f64 * 2.0 - 1.0;
            if u.hypot(v) > 0.75 {
                let paths = scene
                    .pixel(r, c)
                    .paths
                    .iter()
                    .filter(|p| p.geometry.is_some_and(|g| g.mirror.is_some()))
                    .cloned()
                    .collect();
                scene.set_paths(r, c, paths);
            }
        }
    }
    Ok(scene)
}

/// Qualitative grape-cluster scene: small spheres lit from the side, with
/// subsurface scattering `time_constant` on the spheres.
pub fn grape_cluster_preset(rows: usize, cols: usize, time_constant: f64) -> Result<SceneResponse> {
    check_time_constant(time_constant)?;
    let half_angle = 12f64.to_radians();
    let backdrop = 0.62;
    let radius = 0.012;
    let mut grapes = Vec::new();
    for i in -3i32..=3 {
        for j in -3i32..=3 {
            let x = (i as f64 + 0.5 * (j.rem_euclid(2)) as f64) * 2.1 * radius;
            let y = j as f64 * 1.85 * radius;
            if x.hypot(y) < 0.07 {
                grapes.push(Vec3::new(x, y, 0.55));
            }
        }
    }
    let mut points = Vec::with_capacity(rows * cols);
    let mut on_grape = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let dir = pixel_direction(r, c, rows, cols, half_angle);
            let hit = grapes
                .iter()
                .filter_map(|g| hit_sphere(&dir, g, radius))
                .fold(None, |best: Option<f64>, t| Some(best.map_or(t, |b| b.min(t))));
            on_grape.push(hit.is_some());
            points.push(dir * hit.unwrap_or(backdrop / dir.z));
        }
    }
    let geometry = Geometry3D {
        sensor: Vec3::zeros(),
        light: Vec3::new(0.2, 0.0, 0.0),
        points,
    };
    let mut scene = SceneResponse::from_geometry(rows, cols, &geometry)?;
    for (i, &grape) in on_grape.iter().enumerate() {
        if grape {
            scene.set_scattering(i / cols, i % cols, time_constant)?;
        }
    }
    Ok(scene)
}
