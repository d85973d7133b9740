//! Maximal-length codes and their correlation kernels.
//!
//! Chips are stored as ±1 levels; `+1` means the emitter is on. The feedback
//! taps for each register length are fixed (see [`feedback_taps`]) so that the
//! default code, and every kernel derived from it, is reproducible.
//!
//! | register length | taps            | period |
//! |-----------------|-----------------|--------|
//! | 2               | 2, 1            | 3      |
//! | 3               | 3, 2            | 7      |
//! | 4               | 4, 3            | 15     |
//! | 5               | 5, 3            | 31     |
//! | 6               | 6, 5            | 63     |
//! | 7               | 7, 6            | 127    |
//! | 8               | 8, 6, 5, 4      | 255    |
//! | 9               | 9, 5            | 511    |
//! | 10              | 10, 7           | 1023   |
//! | 11              | 11, 9           | 2047   |
//! | 12              | 12, 11, 10, 4   | 4095   |
//! | 13              | 13, 12, 11, 8   | 8191   |
//! | 14              | 14, 13, 12, 2   | 16383  |
//! | 15              | 15, 14          | 32767  |
//! | 16              | 16, 15, 13, 4   | 65535  |

use crate::error::{invalid, Error, Result};

/// Chip duration at the default 50 MHz modulation frequency.
pub const DEFAULT_CHIP_DURATION: f64 = 20e-9;

/// Default register length: a 31-chip code.
pub const DEFAULT_REGISTER_LENGTH: u32 = 5;

/// Default LFSR seed state.
pub const DEFAULT_SEED_STATE: u32 = 1;

pub const MIN_REGISTER_LENGTH: u32 = 2;
pub const MAX_REGISTER_LENGTH: u32 = 16;

const FEEDBACK_TAPS: [&[u32]; 15] = [
    &[2, 1],
    &[3, 2],
    &[4, 3],
    &[5, 3],
    &[6, 5],
    &[7, 6],
    &[8, 6, 5, 4],
    &[9, 5],
    &[10, 7],
    &[11, 9],
    &[12, 11, 10, 4],
    &[13, 12, 11, 8],
    &[14, 13, 12, 2],
    &[15, 14],
    &[16, 15, 13, 4],
];

/// Primitive-polynomial taps used for `register_length`.
pub fn feedback_taps(register_length: u32) -> Result<&'static [u32]> {
    if !(MIN_REGISTER_LENGTH..=MAX_REGISTER_LENGTH).contains(&register_length) {
        return Err(Error::UnsupportedParameter(format!(
            "register length {register_length} outside {MIN_REGISTER_LENGTH}..={MAX_REGISTER_LENGTH}"
        )));
    }
    Ok(FEEDBACK_TAPS[(register_length - MIN_REGISTER_LENGTH) as usize])
}

/// Fibonacci linear feedback shift register.
#[derive(Debug, Clone)]
pub struct Lfsr {
    state: u32,
    tap_mask: u32,
    register_length: u32,
}

impl Lfsr {
    pub fn new(register_length: u32, seed_state: u32) -> Result<Self> {
        let taps = feedback_taps(register_length)?;
        if seed_state == 0 {
            return Err(Error::InvalidSeed);
        }
        if seed_state >> register_length != 0 {
            return Err(invalid(format!(
                "seed state {seed_state:#x} does not fit in {register_length} bits"
            )));
        }
        let tap_mask = taps
            .iter()
            .fold(0u32, |mask, &t| mask | 1 << (register_length - t));
        Ok(Self {
            state: seed_state,
            tap_mask,
            register_length,
        })
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    /// Emits the current output bit and advances the register.
    pub fn step(&mut self) -> u8 {
        let out = (self.state & 1) as u8;
        let feedback = (self.state & self.tap_mask).count_ones() & 1;
        self.state = (self.state >> 1) | (feedback << (self.register_length - 1));
        out
    }
}

/// Binary ±1 chip sequence with a chip duration in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationCode {
    chips: Vec<i8>,
    chip_duration: f64,
}

impl ModulationCode {
    pub fn new(chips: Vec<i8>, chip_duration: f64) -> Result<Self> {
        if chips.is_empty() {
            return Err(invalid("code has no chips"));
        }
        if let Some(bad) = chips.iter().find(|&&c| c != 1 && c != -1) {
            return Err(invalid(format!("chip level {bad} is not ±1")));
        }
        if !(chip_duration > 0.0 && chip_duration.is_finite()) {
            return Err(invalid(format!("chip duration {chip_duration} must be positive")));
        }
        Ok(Self {
            chips,
            chip_duration,
        })
    }

    pub fn chips(&self) -> &[i8] {
        &self.chips
    }

    pub fn chip_duration(&self) -> f64 {
        self.chip_duration
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Code period in seconds.
    pub fn period(&self) -> f64 {
        self.chip_duration * self.chips.len() as f64
    }

    pub fn with_chip_duration(self, chip_duration: f64) -> Result<Self> {
        Self::new(self.chips, chip_duration)
    }

    /// Level of the rectangular-chip waveform at time `t` (periodic).
    pub fn level_at(&self, t: f64) -> i8 {
        let idx = (t / self.chip_duration).floor() as i64;
        self.chips[idx.rem_euclid(self.chips.len() as i64) as usize]
    }
}

/// One period of the maximal-length sequence for `register_length`, with
/// the default chip duration.
pub fn generate_msequence(register_length: u32, seed_state: u32) -> Result<ModulationCode> {
    let mut lfsr = Lfsr::new(register_length, seed_state)?;
    let period = (1usize << register_length) - 1;
    let chips = (0..period)
        .map(|_| if lfsr.step() == 1 { 1 } else { -1 })
        .collect();
    ModulationCode::new(chips, DEFAULT_CHIP_DURATION)
}

/// The 31-chip default code.
pub fn default_code() -> ModulationCode {
    generate_msequence(DEFAULT_REGISTER_LENGTH, DEFAULT_SEED_STATE)
        .expect("default register length and seed are valid")
}

/// `out[k] = Σ_t a[t]·b[(t+k) mod L]`, computed in integer arithmetic.
pub fn circular_cross_correlation(a: &ModulationCode, b: &ModulationCode) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    Ok((0..n)
        .map(|k| {
            let sum: i64 = a
                .chips
                .iter()
                .enumerate()
                .map(|(t, &x)| x as i64 * b.chips[(t + k) % n] as i64)
                .sum();
            sum as f64
        })
        .collect())
}

/// A sampled correlation profile `h(x)`.
///
/// `samples[origin_index]` holds `h(0)`. A periodic kernel wraps around its
/// sample count; a non-periodic one is held constant beyond its ends.
/// [`CorrelationKernel::eval`] interpolates linearly between samples, which is
/// exact for kernels produced by [`continuous_kernel`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationKernel {
    samples: Vec<f64>,
    sample_spacing: f64,
    origin_index: usize,
    periodic: bool,
}

impl CorrelationKernel {
    pub fn new(
        samples: Vec<f64>,
        sample_spacing: f64,
        origin_index: usize,
        periodic: bool,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("kernel has no samples"));
        }
        if !(sample_spacing > 0.0 && sample_spacing.is_finite()) {
            return Err(invalid(format!("kernel spacing {sample_spacing} must be positive")));
        }
        if origin_index >= samples.len() {
            return Err(invalid(format!(
                "origin index {origin_index} out of range for {} samples",
                samples.len()
            )));
        }
        Ok(Self {
            samples,
            sample_spacing,
            origin_index,
            periodic,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_spacing(&self) -> f64 {
        self.sample_spacing
    }

    pub fn origin_index(&self) -> usize {
        self.origin_index
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Length of one period (periodic kernels) or of the sampled support.
    pub fn span(&self) -> f64 {
        self.sample_spacing * self.samples.len() as f64
    }

    /// Lag of sample `i` in seconds.
    pub fn lag(&self, i: usize) -> f64 {
        (i as f64 - self.origin_index as f64) * self.sample_spacing
    }

    pub fn peak_value(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Evaluates `h(x)` by linear interpolation.
    pub fn eval(&self, x: f64) -> f64 {
        let pos = x / self.sample_spacing + self.origin_index as f64;
        let base = pos.floor();
        let frac = pos - base;
        let n = self.samples.len() as i64;
        let i = base as i64;
        if self.periodic {
            let i0 = i.rem_euclid(n) as usize;
            let i1 = (i0 + 1) % n as usize;
            let (a, b) = (self.samples[i0], self.samples[i1]);
            if frac == 0.0 {
                a
            } else {
                a + frac * (b - a)
            }
        } else if i < 0 {
            self.samples[0]
        } else if i >= n - 1 {
            self.samples[(n - 1) as usize]
        } else {
            let (a, b) = (self.samples[i as usize], self.samples[i as usize + 1]);
            if frac == 0.0 {
                a
            } else {
                a + frac * (b - a)
            }
        }
    }

    /// `h` convolved with the unit-area causal exponential
    /// `exp(−t/τ)/τ`, i.e. `∫₀^∞ h(x−t)·exp(−t/τ)/τ dt`.
    ///
    /// Evaluated segment by segment in closed form, so the result is exact
    /// for the piecewise-linear kernel. `time_constant == 0` returns
    /// [`CorrelationKernel::eval`].
    pub fn eval_scattered(&self, x: f64, time_constant: f64) -> f64 {
        if time_constant <= 0.0 {
            return self.eval(x);
        }
        let dt = self.sample_spacing;
        let tc = time_constant;
        // h(x − t) is linear in t between consecutive knots of the kernel.
        let pos = x / dt + self.origin_index as f64;
        let first = pos - pos.floor();
        let period = if self.periodic { self.span() } else { f64::INFINITY };
        let mut t0 = 0.0;
        let mut t1 = if first > 0.0 { first * dt } else { dt };
        let mut acc = 0.0;
        loop {
            t1 = t1.min(period);
            let h0 = self.eval(x - t0);
            let h1 = self.eval(x - t1);
            let slope = (h1 - h0) / (t1 - t0);
            // ∫ (h0 + slope·(t−t0)) e^{−t/τ}/τ dt over [t0, t1]
            let e0 = (-t0 / tc).exp();
            let e1 = (-t1 / tc).exp();
            acc += (h0 + slope * tc) * e0 - (h1 + slope * tc) * e1;
            if e1 < 1e-18 {
                return acc;
            }
            if t1 >= period {
                // Later periods repeat this one with geometric weights.
                return acc / (1.0 - e1);
            }
            if !self.periodic && x - t1 <= self.lag(0) {
                // Constant tail beyond the first sample.
                return acc + self.samples[0] * e1;
            }
            t0 = t1;
            t1 += dt;
        }
    }
}

/// Continuous-time correlation `h(x) = ∫ f(t)·g(t+x) dt` of two
/// rectangular-chip waveforms over one code period, sampled every
/// `chip_duration / upsample`.
///
/// At integer-chip lags `h` equals `chip_duration` times the discrete
/// circular correlation; between them it is linear.
pub fn continuous_kernel(
    f: &ModulationCode,
    g: &ModulationCode,
    upsample: usize,
) -> Result<CorrelationKernel> {
    if upsample == 0 {
        return Err(invalid("upsample must be at least 1"));
    }
    let corr = circular_cross_correlation(f, g)?;
    if f.chip_duration != g.chip_duration {
        return Err(invalid(format!(
            "chip durations differ: {} vs {}",
            f.chip_duration, g.chip_duration
        )));
    }
    let tc = f.chip_duration;
    let n = corr.len();
    let samples = (0..n * upsample)
        .map(|i| {
            let k = i / upsample;
            let r = i % upsample;
            let a = corr[k];
            if r == 0 {
                tc * a
            } else {
                let b = corr[(k + 1) % n];
                let frac = r as f64 / upsample as f64;
                tc * ((1.0 - frac) * a + frac * b)
            }
        })
        .collect();
    CorrelationKernel::new(samples, tc / upsample as f64, 0, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_correlation(a: &[i8], b: &[i8], k: usize) -> i64 {
        let n = a.len();
        (0..n).map(|t| a[t] as i64 * b[(t + k) % n] as i64).sum()
    }

    #[test]
    fn register_length_five_gives_31_chips() {
        let code = generate_msequence(5, 1).unwrap();
        assert_eq!(code.len(), 31);
        assert_eq!(code.chip_duration(), DEFAULT_CHIP_DURATION);
    }

    #[test]
    fn register_length_three_is_balanced() {
        for seed in 1..8 {
            let code = generate_msequence(3, seed).unwrap();
            assert_eq!(code.len(), 7);
            let ones = code.chips().iter().filter(|&&c| c == 1).count();
            assert_eq!(ones, 4, "seed {seed}");
        }
    }

    #[test]
    fn register_length_three_hand_enumeration() {
        // taps (3,2): feedback = s0 ^ s1, state shifts right.
        // 001 -> out 1, fb 1 -> 100
        // 100 -> out 0, fb 0 -> 010
        // 010 -> out 0, fb 1 -> 101
        // 101 -> out 1, fb 1 -> 110
        // 110 -> out 0, fb 1 -> 111
        // 111 -> out 1, fb 0 -> 011
        // 011 -> out 1, fb 0 -> 001
        let code = generate_msequence(3, 1).unwrap();
        assert_eq!(code.chips(), &[1, -1, -1, 1, -1, 1, 1]);
    }

    #[test]
    fn zero_seed_rejected() {
        assert!(matches!(generate_msequence(5, 0), Err(Error::InvalidSeed)));
    }

    #[test]
    fn unsupported_register_lengths_rejected() {
        for m in [0, 1, 17, 32] {
            assert!(matches!(
                generate_msequence(m, 1),
                Err(Error::UnsupportedParameter(_))
            ));
        }
    }

    #[test]
    fn oversized_seed_rejected() {
        assert!(matches!(generate_msequence(3, 8), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn every_nonzero_state_visited_once_per_period() {
        for m in MIN_REGISTER_LENGTH..=MAX_REGISTER_LENGTH {
            let mut lfsr = Lfsr::new(m, 1).unwrap();
            let period = (1usize << m) - 1;
            let mut seen = vec![false; 1 << m];
            for _ in 0..period {
                let s = lfsr.state() as usize;
                assert!(s != 0 && !seen[s], "m={m}: state {s} repeated");
                seen[s] = true;
                lfsr.step();
            }
            assert_eq!(lfsr.state(), 1, "m={m}: period is not 2^m - 1");
        }
    }

    #[test]
    fn two_level_autocorrelation() {
        for m in 2..=10 {
            let code = generate_msequence(m, 1).unwrap();
            let l = code.len();
            let ac = circular_cross_correlation(&code, &code).unwrap();
            for (k, &v) in ac.iter().enumerate() {
                let expected = if k == 0 { l as f64 } else { -1.0 };
                assert_eq!(v, expected, "m={m} lag {k}");
                assert_eq!(v as i64, brute_correlation(code.chips(), code.chips(), k));
            }
        }
    }

    #[test]
    fn shifted_copy_peaks_at_shift() {
        let a = generate_msequence(5, 1).unwrap();
        for s in [0usize, 1, 7, 30] {
            let chips: Vec<i8> = (0..31).map(|t| a.chips()[(t + 31 - s) % 31]).collect();
            let b = ModulationCode::new(chips, a.chip_duration()).unwrap();
            let c = circular_cross_correlation(&a, &b).unwrap();
            let argmax = (0..31).max_by(|&i, &j| c[i].total_cmp(&c[j])).unwrap();
            assert_eq!(argmax, s);
        }
    }

    #[test]
    fn constant_sequences_correlate_to_length() {
        let a = ModulationCode::new(vec![1; 9], 1.0).unwrap();
        let c = circular_cross_correlation(&a, &a).unwrap();
        assert!(c.iter().all(|&v| v == 9.0));
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        let a = generate_msequence(3, 1).unwrap();
        let b = generate_msequence(4, 1).unwrap();
        assert!(matches!(
            circular_cross_correlation(&a, &b),
            Err(Error::Dimension { expected: 7, found: 15 })
        ));
        assert!(continuous_kernel(&a, &b, 4).is_err());
    }

    #[test]
    fn kernel_upsample_one_matches_discrete() {
        let code = default_code();
        let k = continuous_kernel(&code, &code, 1).unwrap();
        let c = circular_cross_correlation(&code, &code).unwrap();
        for (s, v) in k.samples().iter().zip(&c) {
            assert_eq!(*s, v * code.chip_duration());
        }
    }

    #[test]
    fn kernel_is_triangular_around_peak() {
        let code = default_code();
        let tc = code.chip_duration();
        let k = continuous_kernel(&code, &code, 10).unwrap();
        assert_eq!(k.eval(0.0), 31.0 * tc);
        assert!((k.eval(tc) + tc).abs() < 1e-9 * tc);
        assert!((k.eval(-tc) + tc).abs() < 1e-9 * tc);
        for i in 0..=20 {
            let x = tc * i as f64 / 20.0;
            let expected = 31.0 * tc - 32.0 * x;
            assert!((k.eval(x) - expected).abs() < 1e-12 * tc * 31.0);
            assert!((k.eval(-x) - expected).abs() < 1e-12 * tc * 31.0);
        }
    }

    #[test]
    fn nonperiodic_kernel_clamps() {
        let k = CorrelationKernel::new(vec![1.0, 3.0, 2.0], 1.0, 1, false).unwrap();
        assert_eq!(k.eval(0.0), 3.0);
        assert_eq!(k.eval(-0.5), 2.0);
        assert_eq!(k.eval(-5.0), 1.0);
        assert_eq!(k.eval(5.0), 2.0);
    }

    #[test]
    fn scattered_kernel_zero_constant_is_identity() {
        let code = default_code();
        let k = continuous_kernel(&code, &code, 1).unwrap();
        for x in [-3e-8, 0.0, 1.234e-9, 5e-7] {
            assert_eq!(k.eval_scattered(x, 0.0), k.eval(x));
        }
    }
}
