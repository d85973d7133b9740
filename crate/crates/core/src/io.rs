//! CSV, binary and Netpbm serialisation.
//!
//! CSV files start with an optional `# description` line followed by a
//! header row. Floats use Rust's shortest round-trip formatting, so output is
//! byte-stable for identical inputs.
//!
//! # Binary measurement layout
//!
//! All integers and floats are little-endian.
//!
//! | offset | type        | content                         |
//! |--------|-------------|---------------------------------|
//! | 0      | `[u8; 8]`   | magic `PSWMEAS1`                |
//! | 8      | `u32`       | rows                            |
//! | 12     | `u32`       | cols                            |
//! | 16     | `u64`       | number of phases `P`            |
//! | 24     | `f64 × P`   | phase axis, seconds             |
//! | ...    | `f64 × R·C·P` | values, row-major pixels, each pixel's `P` samples contiguous |
//!
//! # Netpbm
//!
//! Frames and depth maps are binary PGM (`P5`), hue maps binary PPM (`P6`),
//! both with maximum value 255. Frames map lit to 255 and unlit to 0. Depth
//! maps scale the valid range linearly onto 1..=255 (nearest first) and
//! write invalid pixels as 0.

use std::io::{Read, Write};

use crate::analysis::ErrorBudget;
use crate::codes::{CorrelationKernel, ModulationCode};
use crate::error::{Error, Result};
use crate::recon::{DepthMap, HueImage, StepError, TransientImage, WavefrontFrames};
use crate::scene::SceneResponse;
use crate::sensor::Measurement;
use crate::sweep::EqualizationWeights;

pub const MEASUREMENT_MAGIC: &[u8; 8] = b"PSWMEAS1";

fn comment<W: Write>(w: &mut W, description: Option<&str>) -> Result<()> {
    if let Some(d) = description {
        for line in d.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

pub fn write_code_csv<W: Write>(w: &mut W, code: &ModulationCode, description: Option<&str>) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "chip,start_s,level")?;
    for (i, c) in code.chips().iter().enumerate() {
        writeln!(w, "{i},{},{c}", i as f64 * code.chip_duration())?;
    }
    Ok(())
}

/// One period (or the full span) of the kernel at its sample lags.
pub fn write_kernel_csv<W: Write>(
    w: &mut W,
    kernel: &CorrelationKernel,
    description: Option<&str>,
) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "lag_s,value")?;
    for (i, v) in kernel.samples().iter().enumerate() {
        writeln!(w, "{},{v}", kernel.lag(i))?;
    }
    Ok(())
}

pub fn write_scene_csv<W: Write>(w: &mut W, scene: &SceneResponse, description: Option<&str>) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "pixel_row,pixel_col,path,delay_s,amplitude,scattering_s")?;
    for r in 0..scene.rows() {
        for c in 0..scene.cols() {
            let p = scene.pixel(r, c);
            for (k, path) in p.paths.iter().enumerate() {
                writeln!(w, "{r},{c},{k},{},{},{}", path.delay, path.amplitude, p.scattering)?;
            }
        }
    }
    Ok(())
}

pub fn write_measurement_csv<W: Write>(
    w: &mut W,
    m: &Measurement,
    description: Option<&str>,
) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "pixel_row,pixel_col,phase_s,value")?;
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            for (phi, v) in m.phases().iter().zip(m.pixel_at(r, c)) {
                writeln!(w, "{r},{c},{phi},{v}")?;
            }
        }
    }
    Ok(())
}

pub fn write_measurement_binary<W: Write>(w: &mut W, m: &Measurement) -> Result<()> {
    let rows = u32::try_from(m.rows()).map_err(|_| Error::Format("too many rows".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| Error::Format("too many columns".into()))?;
    w.write_all(MEASUREMENT_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    w.write_all(&(m.num_samples() as u64).to_le_bytes())?;
    for v in m.phases().iter().chain(m.values()) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_measurement_binary<R: Read>(r: &mut R) -> Result<Measurement> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MEASUREMENT_MAGIC {
        return Err(Error::Format("not a measurement file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let rows = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let cols = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let phases = usize::try_from(u64::from_le_bytes(b8))
        .map_err(|_| Error::Format("phase count overflows".into()))?;
    let count = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(phases))
        .and_then(|n| n.checked_add(phases))
        .ok_or_else(|| Error::Format("measurement size overflows".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            bytes.len()
        )));
    }
    let mut floats = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let axis: Vec<f64> = floats.by_ref().take(phases).collect();
    let values: Vec<f64> = floats.collect();
    Measurement::new(rows, cols, axis, values).map_err(|e| Error::Format(e.to_string()))
}

/// Parses the CSV written by [`write_measurement_csv`]. Rows must be grouped
/// by pixel in row-major order with a shared phase axis.
pub fn read_measurement_csv<R: Read>(r: &mut R) -> Result<Measurement> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "pixel_row,pixel_col,phase_s,value" => {}
        _ => return Err(Error::Format("missing measurement header".into())),
    }
    let mut records: Vec<(usize, usize, f64, f64)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Format(format!("malformed measurement row {}", i + 1));
        if f.len() != 4 {
            return Err(bad());
        }
        records.push((
            f[0].trim().parse().map_err(|_| bad())?,
            f[1].trim().parse().map_err(|_| bad())?,
            f[2].trim().parse().map_err(|_| bad())?,
            f[3].trim().parse().map_err(|_| bad())?,
        ));
    }
    let first = records.first().ok_or_else(|| Error::Format("no measurement rows".into()))?;
    let (r0, c0) = (first.0, first.1);
    let axis: Vec<f64> = records
        .iter()
        .take_while(|x| x.0 == r0 && x.1 == c0)
        .map(|x| x.2)
        .collect();
    let rows = records.iter().map(|x| x.0).max().unwrap_or(0) + 1;
    let cols = records.iter().map(|x| x.1).max().unwrap_or(0) + 1;
    if records.len() != rows * cols * axis.len() {
        return Err(Error::Format("measurement rows do not form a full grid".into()));
    }
    for (i, rec) in records.iter().enumerate() {
        let p = i / axis.len();
        if rec.0 != p / cols || rec.1 != p % cols || rec.2 != axis[i % axis.len()] {
            return Err(Error::Format(format!("measurement row {} out of order", i + 1)));
        }
    }
    let values = records.iter().map(|x| x.3).collect();
    Measurement::new(rows, cols, axis, values).map_err(|e| Error::Format(e.to_string()))
}

pub fn write_weights_csv<W: Write>(
    w: &mut W,
    weights: &EqualizationWeights,
    insertion_delays: &[f64],
    description: Option<&str>,
) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "source,insertion_delay_s,weight")?;
    for (n, wn) in weights.weights().iter().enumerate() {
        let mu = insertion_delays.get(n).copied().unwrap_or(f64::NAN);
        writeln!(w, "{n},{mu},{wn}")?;
    }
    Ok(())
}

pub fn write_transient_csv<W: Write>(
    w: &mut W,
    t: &TransientImage,
    description: Option<&str>,
) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "pixel_row,pixel_col,valid,peak_time_s,amplitude,residual_norm")?;
    for r in 0..t.rows() {
        for c in 0..t.cols() {
            let p = t.pixel(r, c);
            writeln!(
                w,
                "{r},{c},{},{},{},{}",
                p.valid as u8, p.peak_time, p.amplitude, p.residual_norm
            )?;
        }
    }
    Ok(())
}

pub fn write_depth_csv<W: Write>(w: &mut W, d: &DepthMap, description: Option<&str>) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "pixel_row,pixel_col,valid,depth_m")?;
    for r in 0..d.rows {
        for c in 0..d.cols {
            let i = r * d.cols + c;
            writeln!(w, "{r},{c},{},{}", d.valid[i] as u8, d.depth[i])?;
        }
    }
    Ok(())
}

pub fn write_error_budget_csv<W: Write>(
    w: &mut W,
    rows: &[ErrorBudget],
    description: Option<&str>,
) -> Result<()> {
    comment(w, description)?;
    writeln!(
        w,
        "num_sources,standoff_m,delta_d_m,theta_rad,theta_deg,exact_shift_m,approx_shift_m,\
         remainder_bound_m,max_systematic_error_m,n_max"
    )?;
    for b in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            b.num_sources,
            b.standoff,
            b.delta_d,
            b.theta,
            b.theta.to_degrees(),
            b.exact_shift,
            b.approx_shift,
            b.remainder_bound,
            b.max_systematic_error,
            b.n_max
        )?;
    }
    Ok(())
}

pub fn write_study_csv<W: Write>(w: &mut W, rows: &[StepError], description: Option<&str>) -> Result<()> {
    comment(w, description)?;
    writeln!(w, "step_ps,mean_abs_error_ps")?;
    for r in rows {
        writeln!(w, "{},{}", r.step * 1e12, r.mean_abs_error * 1e12)?;
    }
    Ok(())
}

pub fn write_pgm<W: Write>(w: &mut W, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Dimension {
            expected: width * height,
            found: pixels.len(),
        });
    }
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    Ok(())
}

pub fn write_ppm<W: Write>(w: &mut W, width: usize, height: usize, pixels: &[[u8; 3]]) -> Result<()> {
    if pixels.len() != width * height {
        return Err(Error::Dimension {
            expected: width * height,
            found: pixels.len(),
        });
    }
    write!(w, "P6\n{width} {height}\n255\n")?;
    for p in pixels {
        w.write_all(p)?;
    }
    Ok(())
}

pub fn frame_to_gray(frame: &[bool]) -> Vec<u8> {
    frame.iter().map(|&on| if on { 255 } else { 0 }).collect()
}

pub fn write_frame_pgm<W: Write>(w: &mut W, frames: &WavefrontFrames, index: usize) -> Result<()> {
    write_pgm(w, frames.cols, frames.rows, &frame_to_gray(&frames.frames[index]))
}

pub fn depth_to_gray(d: &DepthMap) -> Vec<u8> {
    let (lo, hi) = d
        .depth
        .iter()
        .zip(&d.valid)
        .filter(|(_, &v)| v)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&x, _)| (lo.min(x), hi.max(x)));
    d.depth
        .iter()
        .zip(&d.valid)
        .map(|(&x, &v)| {
            if !v {
                0
            } else if hi > lo {
                (1.0 + 254.0 * (x - lo) / (hi - lo)).round() as u8
            } else {
                255
            }
        })
        .collect()
}

pub fn write_depth_pgm<W: Write>(w: &mut W, d: &DepthMap) -> Result<()> {
    write_pgm(w, d.cols, d.rows, &depth_to_gray(d))
}

pub fn write_hue_ppm<W: Write>(w: &mut W, image: &HueImage) -> Result<()> {
    write_ppm(w, image.cols, image.rows, &image.rgb)
}
