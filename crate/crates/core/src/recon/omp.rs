//! Orthogonal matching pursuit over shifted-kernel dictionaries.

use nalgebra::{DMatrix, DVector};

use crate::codes::CorrelationKernel;
use crate::error::{invalid, Error, Result};

/// A finite set of atoms sampled on a common axis.
pub trait Dictionary: Sync {
    fn num_atoms(&self) -> usize;
    fn num_samples(&self) -> usize;
    /// Shift of atom `k`, seconds.
    fn shift(&self, k: usize) -> f64;
    fn norm(&self, k: usize) -> f64;
    /// `⟨atom_k, v⟩`, summed in sample order.
    fn dot(&self, k: usize, v: &[f64]) -> f64;
    fn atom(&self, k: usize) -> Vec<f64>;
}

/// Analytic or measured kernel with a strictly increasing list of shifts.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBasis {
    kernel: CorrelationKernel,
    shifts: Vec<f64>,
}

impl KernelBasis {
    pub fn new(kernel: CorrelationKernel, shifts: Vec<f64>) -> Result<Self> {
        if shifts.is_empty() {
            return Err(invalid("kernel basis needs at least one shift"));
        }
        if shifts.iter().any(|s| !s.is_finite()) || shifts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("basis shifts must be finite and strictly increasing"));
        }
        Ok(Self { kernel, shifts })
    }

    pub fn kernel(&self) -> &CorrelationKernel {
        &self.kernel
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    /// Atom `k` at `x` is `h(x − shift_k)`.
    pub fn sample(&self, axis: &[f64]) -> Result<SampledBasis> {
        let atoms = self
            .shifts
            .iter()
            .map(|&s| axis.iter().map(|&x| self.kernel.eval(x - s)).collect())
            .collect();
        SampledBasis::new(self.shifts.clone(), atoms)
    }
}

/// Explicitly stored atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBasis {
    shifts: Vec<f64>,
    atoms: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl SampledBasis {
    pub fn new(shifts: Vec<f64>, atoms: Vec<Vec<f64>>) -> Result<Self> {
        if shifts.len() != atoms.len() {
            return Err(Error::Dimension {
                expected: shifts.len(),
                found: atoms.len(),
            });
        }
        if atoms.is_empty() {
            return Err(invalid("basis has no atoms"));
        }
        let len = atoms[0].len();
        if let Some(bad) = atoms.iter().find(|a| a.len() != len) {
            return Err(Error::Dimension {
                expected: len,
                found: bad.len(),
            });
        }
        if shifts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("basis shifts must be strictly increasing"));
        }
        let norms = atoms.iter().map(|a| l2(a)).collect();
        Ok(Self {
            shifts,
            atoms,
            norms,
        })
    }

    pub fn shifts(&self) -> &[f64] {
        &self.shifts
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }
}

impl Dictionary for SampledBasis {
    fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    fn num_samples(&self) -> usize {
        self.atoms[0].len()
    }

    fn shift(&self, k: usize) -> f64 {
        self.shifts[k]
    }

    fn norm(&self, k: usize) -> f64 {
        self.norms[k]
    }

    fn dot(&self, k: usize, v: &[f64]) -> f64 {
        dot(&self.atoms[k], v)
    }

    fn atom(&self, k: usize) -> Vec<f64> {
        self.atoms[k].clone()
    }
}

/// Shift-invariant atoms on a uniform axis, backed by one lag table:
/// sample `i` of atom `k` is `lag[zero + i − center_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftBasis {
    lag: Vec<f64>,
    zero: usize,
    num_samples: usize,
    centers: Vec<usize>,
    spacing: f64,
    norms: Vec<f64>,
}

impl ShiftBasis {
    /// `centers` are sample indices of each atom's zero lag; `spacing` only
    /// converts them to shifts.
    pub fn new(
        lag: Vec<f64>,
        zero: usize,
        num_samples: usize,
        centers: Vec<usize>,
        spacing: f64,
    ) -> Result<Self> {
        if centers.is_empty() || num_samples == 0 {
            return Err(invalid("shift basis needs atoms and samples"));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("atom centres must be strictly increasing"));
        }
        let first = centers[0];
        let last = centers[centers.len() - 1];
        if first > zero || zero + num_samples - 1 - first >= lag.len() || last > zero {
            return Err(invalid("lag table too short for the requested atoms"));
        }
        let mut basis = Self {
            lag,
            zero,
            num_samples,
            centers,
            spacing,
            norms: Vec::new(),
        };
        basis.norms = (0..basis.centers.len()).map(|k| l2(basis.slice(k))).collect();
        Ok(basis)
    }

    /// Lag table `h(l·spacing)` for `l = −reach..=reach`.
    pub fn lag_table(kernel: &CorrelationKernel, spacing: f64, reach: usize) -> Vec<f64> {
        (0..=2 * reach)
            .map(|i| kernel.eval((i as f64 - reach as f64) * spacing))
            .collect()
    }

    fn slice(&self, k: usize) -> &[f64] {
        let start = self.zero - self.centers[k];
        &self.lag[start..start + self.num_samples]
    }

    pub fn centers(&self) -> &[usize] {
        &self.centers
    }
}

impl Dictionary for ShiftBasis {
    fn num_atoms(&self) -> usize {
        self.centers.len()
    }

    fn num_samples(&self) -> usize {
        self.num_samples
    }

    fn shift(&self, k: usize) -> f64 {
        self.centers[k] as f64 * self.spacing
    }

    fn norm(&self, k: usize) -> f64 {
        self.norms[k]
    }

    fn dot(&self, k: usize, v: &[f64]) -> f64 {
        dot(self.slice(k), v)
    }

    fn atom(&self, k: usize) -> Vec<f64> {
        self.slice(k).to_vec()
    }
}

/// Lag tables for an axis that repeats every `period` samples with time
/// period `span`, as an interleaved multi-source sweep does. Table `r` holds
/// `h(x_{r+d} − x_r)` for `d = −reach..=reach`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicLagTables {
    origin: f64,
    offsets: Vec<f64>,
    span: f64,
    reach: usize,
    lags: Vec<Vec<f64>>,
    /// Running sums of squares of each table, one leading zero.
    energy: Vec<Vec<f64>>,
}

impl PeriodicLagTables {
    /// `axis` must satisfy `x_{i+period} − x_i = span` up to rounding; the
    /// first `period` samples fix the pattern.
    pub fn new(kernel: &CorrelationKernel, axis: &[f64], period: usize, reach: usize) -> Result<Self> {
        if period == 0 || axis.len() <= period {
            return Err(invalid("axis shorter than one repeat"));
        }
        let origin = axis[0];
        let offsets: Vec<f64> = axis[..period].iter().map(|x| x - origin).collect();
        let span = (axis[axis.len() - 1] - axis[(axis.len() - 1) % period]) / ((axis.len() - 1) / period) as f64;
        let mut tables = Self {
            origin,
            offsets,
            span,
            reach,
            lags: Vec::with_capacity(period),
            energy: Vec::with_capacity(period),
        };
        for r in 0..period {
            let lag: Vec<f64> = (0..=2 * reach)
                .map(|i| {
                    let d = i as i64 - reach as i64;
                    kernel.eval(tables.position(r as i64 + d) - tables.position(r as i64))
                })
                .collect();
            let mut energy = Vec::with_capacity(lag.len() + 1);
            energy.push(0.0);
            let mut acc = 0.0;
            for v in &lag {
                acc += v * v;
                energy.push(acc);
            }
            tables.lags.push(lag);
            tables.energy.push(energy);
        }
        Ok(tables)
    }

    /// Model position of sample `i`, relative to the first sample.
    fn position(&self, i: i64) -> f64 {
        let p = self.offsets.len() as i64;
        i.div_euclid(p) as f64 * self.span + self.offsets[i.rem_euclid(p) as usize]
    }

    pub fn period(&self) -> usize {
        self.offsets.len()
    }

    pub fn reach(&self) -> usize {
        self.reach
    }
}

/// Window of a periodic axis starting at absolute sample `start`; atom `k`
/// is centred on window sample `centers[k]`.
#[derive(Debug, Clone)]
pub struct PeriodicShiftBasis<'a> {
    tables: &'a PeriodicLagTables,
    start: usize,
    num_samples: usize,
    centers: Vec<usize>,
}

impl<'a> PeriodicShiftBasis<'a> {
    pub fn new(
        tables: &'a PeriodicLagTables,
        start: usize,
        num_samples: usize,
        centers: Vec<usize>,
    ) -> Result<Self> {
        if centers.is_empty() || num_samples == 0 {
            return Err(invalid("shift basis needs atoms and samples"));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("atom centres must be strictly increasing"));
        }
        let last = centers[centers.len() - 1];
        if last > tables.reach || num_samples - 1 - centers[0] > tables.reach {
            return Err(invalid("lag table too short for the requested atoms"));
        }
        Ok(Self {
            tables,
            start,
            num_samples,
            centers,
        })
    }

    fn table(&self, k: usize) -> usize {
        (self.start + self.centers[k]) % self.tables.period()
    }

    fn first(&self, k: usize) -> usize {
        self.tables.reach - self.centers[k]
    }

    fn slice(&self, k: usize) -> &[f64] {
        let first = self.first(k);
        &self.tables.lags[self.table(k)][first..first + self.num_samples]
    }
}

impl Dictionary for PeriodicShiftBasis<'_> {
    fn num_atoms(&self) -> usize {
        self.centers.len()
    }

    fn num_samples(&self) -> usize {
        self.num_samples
    }

    fn shift(&self, k: usize) -> f64 {
        self.tables.origin + self.tables.position((self.start + self.centers[k]) as i64)
    }

    fn norm(&self, k: usize) -> f64 {
        let e = &self.tables.energy[self.table(k)];
        let first = self.first(k);
        (e[first + self.num_samples] - e[first]).max(0.0).sqrt()
    }

    fn dot(&self, k: usize, v: &[f64]) -> f64 {
        dot(self.slice(k), v)
    }

    fn atom(&self, k: usize) -> Vec<f64> {
        self.slice(k).to_vec()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub shift: f64,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// In pick order, with coefficients from the final least-squares refit.
    pub selections: Vec<Selection>,
    pub residual_norm: f64,
    /// Residual norm after each pick.
    pub residual_history: Vec<f64>,
    /// The measurement was identically zero.
    pub no_signal: bool,
}

/// Index of the atom maximising `|⟨r, a_k⟩| / ‖a_k‖`, skipping `exclude`
/// and zero-norm atoms. Ties go to the lowest index (smallest shift).
pub fn best_atom<D: Dictionary + ?Sized>(
    dict: &D,
    residual: &[f64],
    exclude: &[usize],
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for k in 0..dict.num_atoms() {
        let norm = dict.norm(k);
        if norm == 0.0 || exclude.contains(&k) {
            continue;
        }
        let score = dict.dot(k, residual).abs() / norm;
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    best
}

/// Greedy sparse fit of `samples` with at most `sparsity` atoms.
pub fn omp_fit<D: Dictionary + ?Sized>(
    samples: &[f64],
    dict: &D,
    sparsity: usize,
) -> Result<OmpResult> {
    if sparsity == 0 {
        return Err(invalid("sparsity must be at least 1"));
    }
    if sparsity > dict.num_atoms() {
        return Err(invalid(format!(
            "sparsity {sparsity} exceeds the {} available atoms",
            dict.num_atoms()
        )));
    }
    if samples.len() != dict.num_samples() {
        return Err(Error::Dimension {
            expected: dict.num_samples(),
            found: samples.len(),
        });
    }
    if samples.iter().all(|&v| v == 0.0) {
        return Ok(OmpResult {
            selections: Vec::new(),
            residual_norm: 0.0,
            residual_history: Vec::new(),
            no_signal: true,
        });
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(sparsity);
    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(sparsity);
    let mut coefficients: Vec<f64> = Vec::new();
    let mut residual = samples.to_vec();
    let mut history = Vec::with_capacity(sparsity);

    for _ in 0..sparsity {
        let Some((k, score)) = best_atom(dict, &residual, &chosen) else {
            break;
        };
        if score == 0.0 {
            break;
        }
        chosen.push(k);
        atoms.push(dict.atom(k));
        coefficients = least_squares(&atoms, samples)?;
        residual = samples.to_vec();
        for (a, &c) in atoms.iter().zip(&coefficients) {
            for (r, &v) in residual.iter_mut().zip(a) {
                *r -= c * v;
            }
        }
        history.push(l2(&residual));
    }

    let selections = chosen
        .iter()
        .zip(&coefficients)
        .map(|(&index, &coefficient)| Selection {
            index,
            shift: dict.shift(index),
            coefficient,
        })
        .collect();
    Ok(OmpResult {
        selections,
        residual_norm: history.last().copied().unwrap_or_else(|| l2(samples)),
        residual_history: history,
        no_signal: false,
    })
}

/// Least-squares coefficients of `y` on the given columns.
fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    if columns.len() == 1 {
        let a = &columns[0];
        return Ok(vec![dot(a, y) / dot(a, a)]);
    }
    let rows = y.len();
    let a = DMatrix::from_fn(rows, columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let qr = a.qr();
    let qtb = qr.q().transpose() * b;
    let x = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| invalid("selected atoms are linearly dependent"))?;
    Ok(x.iter().copied().collect())
}
