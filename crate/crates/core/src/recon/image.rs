//! Depth maps, wavefront frames and hue maps derived from peak times.

use crate::error::{invalid, Error, Result};
use crate::recon::TransientImage;
use crate::SPEED_OF_LIGHT;

pub const DEFAULT_BAND_TOLERANCE: f64 = 0.5;
/// Components weaker than this fraction of the pixel's strongest one are not
/// drawn into frames.
pub const DEFAULT_AMPLITUDE_THRESHOLD: f64 = 0.1;
pub const HUE_RANGE_DEG: f64 = 270.0;

/// Slack on the inclusive band edge so that peaks exactly one tolerance away
/// from a frame centre are not lost to rounding.
const BAND_EDGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub rows: usize,
    pub cols: usize,
    /// Metres; meaningless where `valid` is false.
    pub depth: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DepthMap {
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.cols + col;
        self.valid[i].then_some(self.depth[i])
    }
}

/// Median of each row window of `taps` samples centred on a pixel, ignoring
/// invalid pixels and clipping at the row ends. An even number of valid
/// neighbours averages the two middle values. Invalid pixels stay invalid.
pub fn median_filter_rows(
    rows: usize,
    cols: usize,
    values: &[f64],
    valid: &[bool],
    taps: usize,
) -> Result<Vec<f64>> {
    if taps == 0 || taps.is_multiple_of(2) {
        return Err(invalid(format!("median taps {taps} must be odd and positive")));
    }
    if values.len() != rows * cols || valid.len() != rows * cols {
        return Err(Error::Dimension {
            expected: rows * cols,
            found: values.len().min(valid.len()),
        });
    }
    let half = taps / 2;
    let mut out = values.to_vec();
    let mut window = Vec::with_capacity(taps);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if !valid[i] {
                continue;
            }
            window.clear();
            let lo = c.saturating_sub(half);
            let hi = (c + half).min(cols - 1);
            window.extend(
                (lo..=hi)
                    .map(|k| r * cols + k)
                    .filter(|&k| valid[k])
                    .map(|k| values[k]),
            );
            window.sort_by(f64::total_cmp);
            let m = window.len();
            out[i] = if m % 2 == 1 {
                window[m / 2]
            } else {
                0.5 * (window[m / 2 - 1] + window[m / 2])
            };
        }
    }
    Ok(out)
}

/// `depth = c·t/2`, then a row-wise median of `median_taps` samples.
pub fn depth_from_peaks(transient: &TransientImage, median_taps: usize) -> Result<DepthMap> {
    let valid: Vec<bool> = transient.pixels().iter().map(|p| p.valid).collect();
    let raw: Vec<f64> = transient
        .pixels()
        .iter()
        .map(|p| if p.valid { SPEED_OF_LIGHT * p.peak_time / 2.0 } else { 0.0 })
        .collect();
    let depth = median_filter_rows(transient.rows(), transient.cols(), &raw, &valid, median_taps)?;
    Ok(DepthMap {
        rows: transient.rows(),
        cols: transient.cols(),
        depth,
        valid,
    })
}

/// Binary frames `k = first_index ..` covering every lit pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefrontFrames {
    pub rows: usize,
    pub cols: usize,
    pub frame_period: f64,
    /// Frame `i` of `frames` is centred at `(first_index + i)·frame_period`.
    pub first_index: i64,
    pub frames: Vec<Vec<bool>>,
}

impl WavefrontFrames {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        (self.first_index + i as i64) as f64 * self.frame_period
    }

    /// Number of frames in which each pixel is lit.
    pub fn lit_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.rows * self.cols];
        for f in &self.frames {
            for (c, &lit) in counts.iter_mut().zip(f) {
                *c += lit as usize;
            }
        }
        counts
    }
}

/// Frame `k` lights pixels with a component satisfying
/// `|t − k·frame_period| ≤ band_tolerance·frame_period`. Components below
/// `amplitude_threshold` of the pixel's strongest component are ignored.
/// Only the range of occupied frames is returned.
pub fn wavefront_frames(
    transient: &TransientImage,
    frame_period: f64,
    band_tolerance: f64,
    amplitude_threshold: f64,
) -> Result<WavefrontFrames> {
    if !(frame_period > 0.0 && frame_period.is_finite()) {
        return Err(invalid("frame_period must be positive"));
    }
    if !(band_tolerance >= 0.0 && band_tolerance.is_finite()) {
        return Err(invalid("band_tolerance must be nonnegative"));
    }
    if !(0.0..=1.0).contains(&amplitude_threshold) {
        return Err(invalid("amplitude_threshold must lie in [0, 1]"));
    }
    let reach = band_tolerance * (1.0 + BAND_EDGE_SLACK);
    let mut marks: Vec<(usize, i64, i64)> = Vec::new();
    for (i, p) in transient.pixels().iter().enumerate() {
        if !p.valid {
            continue;
        }
        let strongest = p.components.iter().fold(0.0f64, |m, c| m.max(c.1));
        for &(t, a) in &p.components {
            if a <= 0.0 || a < amplitude_threshold * strongest {
                continue;
            }
            let u = t / frame_period;
            let lo = (u - reach).ceil() as i64;
            let hi = (u + reach).floor() as i64;
            if lo <= hi {
                marks.push((i, lo, hi));
            }
        }
    }
    let n = transient.rows() * transient.cols();
    let Some(first) = marks.iter().map(|m| m.1).min() else {
        return Ok(WavefrontFrames {
            rows: transient.rows(),
            cols: transient.cols(),
            frame_period,
            first_index: 0,
            frames: Vec::new(),
        });
    };
    let last = marks.iter().map(|m| m.2).max().expect("nonempty");
    let mut frames = vec![vec![false; n]; (last - first + 1) as usize];
    for (i, lo, hi) in marks {
        for k in lo..=hi {
            frames[(k - first) as usize][i] = true;
        }
    }
    Ok(WavefrontFrames {
        rows: transient.rows(),
        cols: transient.cols(),
        frame_period,
        first_index: first,
        frames,
    })
}

/// Widest band over all frames, counted in sheets: a sheet is occupied in a
/// frame when at least `occupancy` of its labelled pixels are lit.
pub fn band_sheet_count(
    frames: &WavefrontFrames,
    sheet_of_pixel: &[Option<usize>],
    num_sheets: usize,
    occupancy: f64,
) -> Result<usize> {
    if sheet_of_pixel.len() != frames.rows * frames.cols {
        return Err(Error::Dimension {
            expected: frames.rows * frames.cols,
            found: sheet_of_pixel.len(),
        });
    }
    if !(occupancy > 0.0 && occupancy <= 1.0) {
        return Err(invalid("occupancy must lie in (0, 1]"));
    }
    let mut totals = vec![0usize; num_sheets];
    for s in sheet_of_pixel.iter().flatten() {
        if *s >= num_sheets {
            return Err(invalid(format!("sheet label {s} out of range")));
        }
        totals[*s] += 1;
    }
    let mut widest = 0;
    let mut lit = vec![0usize; num_sheets];
    for f in &frames.frames {
        lit.iter_mut().for_each(|v| *v = 0);
        for (on, s) in f.iter().zip(sheet_of_pixel) {
            if let (true, Some(s)) = (*on, s) {
                lit[*s] += 1;
            }
        }
        let occupied = lit
            .iter()
            .zip(&totals)
            .filter(|(&l, &t)| t > 0 && l as f64 >= occupancy * t as f64)
            .count();
        widest = widest.max(occupied);
    }
    Ok(widest)
}

/// Frame rate implied by a wavefront band `band_sheet_count` sheets wide:
/// `3.0e8 / (thickness · n · 2)`.
pub fn effective_fps(band_sheet_count: usize, sheet_thickness: f64) -> Result<f64> {
    if band_sheet_count == 0 {
        return Err(invalid("band sheet count must be at least 1"));
    }
    if !(sheet_thickness > 0.0 && sheet_thickness.is_finite()) {
        return Err(invalid("sheet thickness must be positive"));
    }
    Ok(3.0e8 / (sheet_thickness * band_sheet_count as f64 * 2.0))
}

/// RGB image with the hue angle of every valid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct HueImage {
    pub rows: usize,
    pub cols: usize,
    /// Degrees in `[0, 270]`; `None` for invalid pixels.
    pub hue: Vec<Option<f64>>,
    pub rgb: Vec<[u8; 3]>,
}

/// Peak time mapped linearly onto hue `0°..=270°` (earliest red, latest
/// violet), full saturation, value proportional to amplitude over the
/// image's largest amplitude. Invalid pixels are black.
pub fn hue_colorize(transient: &TransientImage) -> HueImage {
    let n = transient.rows() * transient.cols();
    let mut hue = vec![None; n];
    let mut rgb = vec![[0u8; 3]; n];
    if let Some((lo, hi)) = transient.peak_range() {
        let max_amp = transient
            .pixels()
            .iter()
            .filter(|p| p.valid)
            .fold(0.0f64, |m, p| m.max(p.amplitude));
        for (i, p) in transient.pixels().iter().enumerate() {
            if !p.valid {
                continue;
            }
            let h = if hi > lo {
                HUE_RANGE_DEG * (p.peak_time - lo) / (hi - lo)
            } else {
                0.0
            };
            let v = if max_amp > 0.0 { p.amplitude / max_amp } else { 0.0 };
            hue[i] = Some(h);
            rgb[i] = hsv_to_rgb(h, 1.0, v);
        }
    }
    HueImage {
        rows: transient.rows(),
        cols: transient.cols(),
        hue,
        rgb,
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

/// Number of distinct hues after rounding to `resolution_deg`.
pub fn distinct_hue_levels(image: &HueImage, resolution_deg: f64) -> usize {
    let mut levels: Vec<i64> = image
        .hue
        .iter()
        .flatten()
        .map(|h| (h / resolution_deg).round() as i64)
        .collect();
    levels.sort_unstable();
    levels.dedup();
    levels.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(rows: usize, cols: usize, peaks: &[Option<(f64, f64)>]) -> TransientImage {
        TransientImage::from_peaks(rows, cols, peaks).unwrap()
    }

    #[test]
    fn depth_of_three_metre_round_trip() {
        let t = image(1, 1, &[Some((3.0 / SPEED_OF_LIGHT, 1.0))]);
        let d = depth_from_peaks(&t, 1).unwrap();
        assert!((d.depth[0] - 1.5).abs() < 1e-12);
        let t = image(1, 1, &[Some((1.0007e-8, 1.0))]);
        let d = depth_from_peaks(&t, 1).unwrap();
        assert!((d.depth[0] - 1.5).abs() < 1e-3);
    }

    #[test]
    fn median_identity_on_uniform_field() {
        let peaks = vec![Some((4e-9, 1.0)); 12];
        let d = depth_from_peaks(&image(3, 4, &peaks), 5).unwrap();
        assert!(d.depth.iter().all(|&x| x == d.depth[0]));
    }

    #[test]
    fn median_rejects_outlier_and_skips_invalid() {
        let values = [1.0, 1.0, 9.0, 1.0, 1.0, 5.0];
        let valid = [true, true, true, true, true, false];
        let out = median_filter_rows(1, 6, &values, &valid, 5).unwrap();
        assert_eq!(&out[..5], &[1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(out[5], 5.0);
        assert!(median_filter_rows(1, 6, &values, &valid, 4).is_err());
        // Two valid neighbours average.
        let out = median_filter_rows(1, 2, &[1.0, 3.0], &[true, true], 3).unwrap();
        assert_eq!(out, vec![2.0, 2.0]);
    }

    #[test]
    fn plane_lights_one_frame_per_pixel() {
        let p = 10e-12;
        let peaks = vec![Some((53.2 * p, 1.0)); 6];
        let f = wavefront_frames(&image(2, 3, &peaks), p, 0.5, 0.1).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.first_index, 53);
        assert!(f.lit_counts().iter().all(|&c| c == 1));
    }

    #[test]
    fn weak_components_not_drawn() {
        let mut t = image(1, 1, &[Some((1e-9, 1.0))]);
        let mut px = t.pixels()[0].clone();
        px.components.push((2e-9, 0.05));
        t = TransientImage::new(1, 1, vec![px]).unwrap();
        let f = wavefront_frames(&t, 1e-10, 0.5, 0.1).unwrap();
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn band_count_by_sheet() {
        // Two sheets of two columns each; sheet 1 half lit in frame 0.
        let peaks = [
            Some((0.0, 1.0)),
            Some((0.0, 1.0)),
            Some((0.0, 1.0)),
            Some((5e-10, 1.0)),
        ];
        let f = wavefront_frames(&image(1, 4, &peaks), 1e-10, 0.5, 0.1).unwrap();
        let labels = [Some(0), Some(0), Some(1), Some(1)];
        assert_eq!(band_sheet_count(&f, &labels, 2, 0.5).unwrap(), 2);
        assert_eq!(band_sheet_count(&f, &labels, 2, 0.75).unwrap(), 1);
    }

    #[test]
    fn fps_values() {
        assert!((effective_fps(2, 0.003).unwrap() - 25e9).abs() < 1.0);
        assert!((effective_fps(3, 0.003).unwrap() - 16.666_666_666_7e9).abs() < 1e3);
        assert!((effective_fps(10, 0.003).unwrap() - 5e9).abs() < 1.0);
        assert!(effective_fps(0, 0.003).is_err());
    }

    #[test]
    fn hue_endpoints_and_uniform() {
        let t = image(1, 3, &[Some((1e-9, 1.0)), Some((2e-9, 0.5)), None]);
        let h = hue_colorize(&t);
        assert_eq!(h.hue[0], Some(0.0));
        assert_eq!(h.hue[1], Some(270.0));
        assert_eq!(h.hue[2], None);
        assert_eq!(h.rgb[0], [255, 0, 0]);
        assert_eq!(h.rgb[2], [0, 0, 0]);
        let t = image(1, 2, &[Some((1e-9, 1.0)), Some((1e-9, 1.0))]);
        assert_eq!(distinct_hue_levels(&hue_colorize(&t), 1.0), 1);
    }
}
