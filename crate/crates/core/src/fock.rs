//! Truncated multimode Fock spaces and the states that live on them.
//!
//! Basis states are ordered lexicographically with the last mode running
//! fastest. Every constructor tracks the probability it discards, so norms
//! and traces are always `1 - tail`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

#[allow(unused_imports)]
use num_traits::Float;
use crate::linalg::{max_abs, HermitianEigen, NEGATIVE_EIGENVALUE_TOL};
use crate::{Error, Result, C64};

/// Largest tail a coherent-state truncation may discard.
pub const COHERENT_TAIL_LIMIT: f64 = 1e-6;
/// Largest trace defect accepted for a truncated thermal state.
pub const THERMAL_DEFECT_LIMIT: f64 = 1e-9;
/// Largest tail accepted for a truncated two-mode squeezed vacuum.
pub const TMSV_TAIL_LIMIT: f64 = 1e-12;
/// Tail targeted by the automatic cutoff selectors.
pub const AUTO_CUTOFF_TAIL: f64 = 1e-12;

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;

/// Per-mode photon-number cutoffs (inclusive) of a multimode Fock space.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FockTruncation {
    cutoffs: Vec<usize>,
}

impl FockTruncation {
    pub fn new(cutoffs: Vec<usize>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::InvalidArgument("a truncation needs at least one mode"));
        }
        Ok(Self { cutoffs })
    }

    pub fn single(cutoff: usize) -> Self {
        Self {
            cutoffs: vec![cutoff],
        }
    }

    pub fn uniform(modes: usize, cutoff: usize) -> Result<Self> {
        Self::new(vec![cutoff; modes])
    }

    pub fn mode_count(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn cutoff(&self, mode: usize) -> usize {
        self.cutoffs[mode]
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.iter().map(|c| c + 1).product()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.cutoffs.len()];
        for m in (0..self.cutoffs.len().saturating_sub(1)).rev() {
            strides[m] = strides[m + 1] * (self.cutoffs[m + 1] + 1);
        }
        strides
    }

    /// Flat index of the basis state `|n_1, ..., n_M>`.
    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.cutoffs.len() {
            return Err(Error::DimensionMismatch {
                expected: self.cutoffs.len(),
                found: occupations.len(),
            });
        }
        let mut idx = 0;
        for (mode, (&n, &c)) in occupations.iter().zip(&self.cutoffs).enumerate() {
            if n > c {
                return Err(Error::IndexOutOfTruncation {
                    mode,
                    occupation: n,
                    cutoff: c,
                });
            }
            idx = idx * (c + 1) + n;
        }
        Ok(idx)
    }

    /// Occupation vector of a flat index.
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.cutoffs.len()];
        for m in (0..self.cutoffs.len()).rev() {
            let base = self.cutoffs[m] + 1;
            occ[m] = index % base;
            index /= base;
        }
        occ
    }

    /// Occupation of a single mode at a flat index.
    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        let stride: usize = self.cutoffs[mode + 1..].iter().map(|c| c + 1).product();
        (index / stride) % (self.cutoffs[mode] + 1)
    }

    /// Same truncation with one mode's cutoff replaced.
    pub fn with_cutoff(&self, mode: usize, cutoff: usize) -> Self {
        let mut cutoffs = self.cutoffs.clone();
        cutoffs[mode] = cutoff;
        Self { cutoffs }
    }

    /// Truncation of the listed modes, in the listed order.
    pub fn sub(&self, modes: &[usize]) -> Result<Self> {
        let mut cutoffs = Vec::with_capacity(modes.len());
        for &m in modes {
            if m >= self.cutoffs.len() {
                return Err(Error::InvalidArgument("mode index out of range"));
            }
            cutoffs.push(self.cutoffs[m]);
        }
        Self::new(cutoffs)
    }

    /// Truncation of the tensor product `self ⊗ other`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut cutoffs = self.cutoffs.clone();
        cutoffs.extend_from_slice(&other.cutoffs);
        Self { cutoffs }
    }

    /// Splits every flat index into (index over `rest`, index over `modes`),
    /// where `rest` are the modes not in `modes`, in ascending order.
    pub(crate) fn split_indices(&self, modes: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let rest: Vec<usize> = (0..self.mode_count()).filter(|m| !modes.contains(m)).collect();
        let strides = self.strides();
        let dim = self.dim();
        let mut rest_idx = vec![0; dim];
        let mut sub_idx = vec![0; dim];
        for i in 0..dim {
            let mut r = 0;
            for &m in &rest {
                r = r * (self.cutoffs[m] + 1) + (i / strides[m]) % (self.cutoffs[m] + 1);
            }
            let mut s = 0;
            for &m in modes {
                s = s * (self.cutoffs[m] + 1) + (i / strides[m]) % (self.cutoffs[m] + 1);
            }
            rest_idx[i] = r;
            sub_idx[i] = s;
        }
        (rest_idx, sub_idx)
    }
}

/// A pure state on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    truncation: FockTruncation,
    amplitudes: DVector<C64>,
    tail_mass: f64,
}

impl StateVector {
    /// Requires `|amplitudes|² + tail_mass = 1` within 1e-12.
    pub fn new(truncation: FockTruncation, amplitudes: DVector<C64>, tail_mass: f64) -> Result<Self> {
        if amplitudes.len() != truncation.dim() {
            return Err(Error::DimensionMismatch {
                expected: truncation.dim(),
                found: amplitudes.len(),
            });
        }
        let total = amplitudes.norm_squared() + tail_mass;
        if !(tail_mass >= 0.0) || (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidArgument("state norm plus tail must equal one"));
        }
        Ok(Self {
            truncation,
            amplitudes,
            tail_mass,
        })
    }

    /// Rescales `amplitudes` to unit norm; the tail is zero.
    pub fn normalized(truncation: FockTruncation, amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) {
            return Err(Error::InvalidArgument("cannot normalise a zero vector"));
        }
        Self::new(truncation, amplitudes.unscale(norm), 0.0)
    }

    pub fn truncation(&self) -> &FockTruncation {
        &self.truncation
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// `self ⊗ other`, modes of `self` first.
    pub fn tensor(&self, other: &StateVector) -> StateVector {
        let amplitudes = self.amplitudes.kronecker(&other.amplitudes);
        let kept = (1.0 - self.tail_mass) * (1.0 - other.tail_mass);
        StateVector {
            truncation: self.truncation.concat(&other.truncation),
            amplitudes,
            tail_mass: 1.0 - kept,
        }
    }

    pub fn to_density(&self) -> DensityOperator {
        let matrix = &self.amplitudes * self.amplitudes.adjoint();
        DensityOperator {
            truncation: self.truncation.clone(),
            matrix,
            trace_defect: self.tail_mass,
        }
    }
}

/// A density operator on a truncated Fock space, with the trace it is
/// missing relative to the untruncated state.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    truncation: FockTruncation,
    matrix: DMatrix<C64>,
    trace_defect: f64,
}

impl DensityOperator {
    /// Checks shape, Hermiticity (1e-12) and `trace + defect = 1` (1e-10).
    /// Positivity is checked separately by [`Self::check_invariants`].
    pub fn new(truncation: FockTruncation, matrix: DMatrix<C64>, trace_defect: f64) -> Result<Self> {
        let dim = truncation.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        let skew = max_abs(&(&matrix - matrix.adjoint()));
        if skew > HERMITIAN_TOL {
            return Err(Error::HermiticityViolation { correction: skew });
        }
        let rho = Self {
            truncation,
            matrix,
            trace_defect,
        };
        if (rho.trace() + trace_defect - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidArgument("trace plus defect must equal one"));
        }
        Ok(rho)
    }

    pub(crate) fn from_parts(truncation: FockTruncation, matrix: DMatrix<C64>, trace_defect: f64) -> Self {
        Self {
            truncation,
            matrix,
            trace_defect,
        }
    }

    /// The normalised state `A A† / Tr(A A†)` for any nonzero square `A`;
    /// handy for sampling mixed states.
    pub fn from_factor(truncation: FockTruncation, factor: &DMatrix<C64>) -> Result<Self> {
        if factor.nrows() != truncation.dim() {
            return Err(Error::DimensionMismatch {
                expected: truncation.dim(),
                found: factor.nrows(),
            });
        }
        let m = factor * factor.adjoint();
        let tr: f64 = m.diagonal().iter().map(|z| z.re).sum();
        if !(tr > 0.0) {
            return Err(Error::InvalidArgument("factor must be nonzero"));
        }
        let (m, _) = crate::linalg::hermitian_part(&m.unscale(tr));
        Ok(Self::from_parts(truncation, m, 0.0))
    }

    /// Full invariant check including positivity (eigenvalues ≥ -1e-10).
    pub fn check_invariants(&self) -> Result<()> {
        let copy = Self::new(self.truncation.clone(), self.matrix.clone(), self.trace_defect)?;
        let eig = HermitianEigen::new(&copy.matrix)?;
        let min = eig.min_value();
        if min < -NEGATIVE_EIGENVALUE_TOL {
            return Err(Error::NegativeEigenvalue { value: min });
        }
        Ok(())
    }

    pub fn truncation(&self) -> &FockTruncation {
        &self.truncation
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn trace_defect(&self) -> f64 {
        self.trace_defect
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `self ⊗ other`, modes of `self` first.
    pub fn tensor(&self, other: &DensityOperator) -> DensityOperator {
        let kept = (1.0 - self.trace_defect) * (1.0 - other.trace_defect);
        DensityOperator {
            truncation: self.truncation.concat(&other.truncation),
            matrix: self.matrix.kronecker(&other.matrix),
            trace_defect: 1.0 - kept,
        }
    }
}

/// Smallest cutoff whose geometric (thermal) tail `(m/(m+1))^(n+1)` is below `tol`.
pub fn geometric_cutoff(mean: f64, tol: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let ratio = mean / (mean + 1.0);
    let mut n = 0usize;
    let mut tail = ratio;
    while tail >= tol {
        tail *= ratio;
        n += 1;
    }
    n
}

/// Smallest cutoff whose Poisson tail beyond it is below `tol`.
pub fn poisson_cutoff(mean: f64, tol: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let mut term = (-mean).exp();
    let mut cum = term;
    let mut n = 0usize;
    while 1.0 - cum >= tol && n < 100_000 {
        n += 1;
        term *= mean / n as f64;
        cum += term;
        // Past the mode, the remaining tail is bounded by a geometric series.
        if n as f64 > mean && term * (n as f64 + 1.0) / (n as f64 + 1.0 - mean) < tol {
            break;
        }
    }
    n
}

/// `|n_1, ..., n_M>`.
pub fn number_state(occupations: &[usize], truncation: &FockTruncation) -> Result<StateVector> {
    let idx = truncation.index_of(occupations)?;
    let mut amplitudes = DVector::zeros(truncation.dim());
    amplitudes[idx] = C64::new(1.0, 0.0);
    Ok(StateVector {
        truncation: truncation.clone(),
        amplitudes,
        tail_mass: 0.0,
    })
}

/// Single-mode coherent state `|α>` truncated at `cutoff`.
pub fn coherent_state(alpha: C64, cutoff: usize) -> Result<StateVector> {
    let mut amplitudes = DVector::zeros(cutoff + 1);
    let mut c = C64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..=cutoff {
        amplitudes[n] = c;
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    let tail = (1.0 - amplitudes.norm_squared()).max(0.0);
    if tail > COHERENT_TAIL_LIMIT {
        return Err(Error::TruncationTooSevere {
            tail,
            allowed: COHERENT_TAIL_LIMIT,
        });
    }
    Ok(StateVector {
        truncation: FockTruncation::single(cutoff),
        amplitudes,
        tail_mass: tail,
    })
}

/// Photon-number distribution of a thermal state, truncated at `cutoff`.
pub fn thermal_probabilities(mean: f64, cutoff: usize) -> Vec<f64> {
    let ratio = mean / (mean + 1.0);
    let mut p = 1.0 / (mean + 1.0);
    (0..=cutoff)
        .map(|_| {
            let out = p;
            p *= ratio;
            out
        })
        .collect()
}

fn check_brightness(what: &'static str, value: f64) -> Result<()> {
    if !(value >= 0.0) || !value.is_finite() {
        return Err(Error::Domain { what, value });
    }
    Ok(())
}

/// Single-mode thermal state of mean photon number `mean`.
pub fn thermal_state(mean: f64, cutoff: usize) -> Result<DensityOperator> {
    check_brightness("thermal brightness", mean)?;
    let defect = (mean / (mean + 1.0)).powi(cutoff as i32 + 1);
    if defect > THERMAL_DEFECT_LIMIT {
        return Err(Error::TruncationTooSevere {
            tail: defect,
            allowed: THERMAL_DEFECT_LIMIT,
        });
    }
    let diag = DVector::from_iterator(
        cutoff + 1,
        thermal_probabilities(mean, cutoff).into_iter().map(|p| C64::new(p, 0.0)),
    );
    Ok(DensityOperator {
        truncation: FockTruncation::single(cutoff),
        matrix: DMatrix::from_diagonal(&diag),
        trace_defect: defect,
    })
}

/// Two-mode squeezed vacuum `Σ c_n |n>_A |n>_S` with signal brightness
/// `mean`; mode 0 is the ancilla, mode 1 the signal, both cut at `cutoff`.
pub fn tmsv_state(mean: f64, cutoff: usize) -> Result<StateVector> {
    check_brightness("signal brightness", mean)?;
    let tail = (mean / (mean + 1.0)).powi(cutoff as i32 + 1);
    if tail > TMSV_TAIL_LIMIT {
        return Err(Error::TruncationTooSevere {
            tail,
            allowed: TMSV_TAIL_LIMIT,
        });
    }
    let truncation = FockTruncation::uniform(2, cutoff)?;
    let mut amplitudes = DVector::zeros(truncation.dim());
    for (n, p) in thermal_probabilities(mean, cutoff).into_iter().enumerate() {
        amplitudes[n * (cutoff + 1) + n] = C64::new(p.sqrt(), 0.0);
    }
    Ok(StateVector {
        truncation,
        amplitudes,
        tail_mass: tail,
    })
}

/// The diagonal unitary `exp(-i Σ_m φ_m N_m)` on a truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShift {
    truncation: FockTruncation,
    phases: Vec<f64>,
    diagonal: Vec<C64>,
}

impl PhaseShift {
    pub fn diagonal(&self) -> &[C64] {
        &self.diagonal
    }

    pub fn truncation(&self) -> &FockTruncation {
        &self.truncation
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.diagonal))
    }

    /// `U |ψ>`.
    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.truncation != self.truncation {
            return Err(Error::TruncationMismatch);
        }
        let amplitudes = DVector::from_iterator(
            self.diagonal.len(),
            psi.amplitudes.iter().zip(&self.diagonal).map(|(a, d)| a * d),
        );
        Ok(StateVector {
            truncation: psi.truncation.clone(),
            amplitudes,
            tail_mass: psi.tail_mass,
        })
    }

    /// `U ρ U†` applied to a raw matrix on this truncation. Entries between
    /// basis states with equal total phase are left bit-for-bit unchanged.
    pub fn conjugate_matrix(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
            let delta = self.phases[i] - self.phases[j];
            if delta == 0.0 {
                m[(i, j)]
            } else {
                m[(i, j)] * C64::new(0.0, -delta).exp()
            }
        })
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, rho: &DensityOperator) -> Result<DensityOperator> {
        if rho.truncation != self.truncation {
            return Err(Error::TruncationMismatch);
        }
        Ok(DensityOperator {
            truncation: rho.truncation.clone(),
            matrix: self.conjugate_matrix(&rho.matrix),
            trace_defect: rho.trace_defect,
        })
    }
}

/// Multimode phase-shift unitary with one phase per mode.
pub fn phase_shift_unitary(phases: &[f64], truncation: &FockTruncation) -> Result<PhaseShift> {
    if phases.len() != truncation.mode_count() {
        return Err(Error::DimensionMismatch {
            expected: truncation.mode_count(),
            found: phases.len(),
        });
    }
    let total: Vec<f64> = (0..truncation.dim())
        .map(|i| {
            truncation
                .occupations(i)
                .iter()
                .zip(phases)
                .map(|(&n, &phi)| n as f64 * phi)
                .sum()
        })
        .collect();
    let diagonal = total.iter().map(|&p| C64::new(0.0, -p).exp()).collect();
    Ok(PhaseShift {
        truncation: truncation.clone(),
        phases: total,
        diagonal,
    })
}

/// Reduced state on `keep_modes` (ascending, nonempty, no repeats).
pub fn partial_trace(rho: &DensityOperator, keep_modes: &[usize]) -> Result<DensityOperator> {
    let trunc = &rho.truncation;
    if keep_modes.is_empty() {
        return Err(Error::InvalidArgument("partial trace must keep at least one mode"));
    }
    if keep_modes.windows(2).any(|w| w[0] >= w[1]) || *keep_modes.last().unwrap() >= trunc.mode_count() {
        return Err(Error::InvalidArgument("kept modes must be ascending and in range"));
    }
    let kept = trunc.sub(keep_modes)?;
    let (traced_idx, kept_idx) = trunc.split_indices(keep_modes);
    let traced_dim = trunc.dim() / kept.dim();
    let mut groups: Vec<Vec<(usize, usize)>> = vec![Vec::new(); traced_dim];
    for i in 0..trunc.dim() {
        groups[traced_idx[i]].push((i, kept_idx[i]));
    }
    let mut out = DMatrix::zeros(kept.dim(), kept.dim());
    for group in &groups {
        for &(j, kj) in group {
            for &(i, ki) in group {
                out[(ki, kj)] += rho.matrix[(i, j)];
            }
        }
    }
    Ok(DensityOperator {
        truncation: kept,
        matrix: out,
        trace_defect: rho.trace_defect,
    })
}

/// `Tr ρ N_mode` over the retained subspace.
pub fn mean_photon_number(rho: &DensityOperator, mode: usize) -> Result<f64> {
    if mode >= rho.truncation.mode_count() {
        return Err(Error::InvalidArgument("mode index out of range"));
    }
    Ok((0..rho.dim())
        .map(|i| rho.matrix[(i, i)].re * rho.truncation.occupation(i, mode) as f64)
        .sum())
}

/// `Tr ρ a_mode`.
pub fn mean_amplitude(rho: &DensityOperator, mode: usize) -> Result<C64> {
    let trunc = &rho.truncation;
    if mode >= trunc.mode_count() {
        return Err(Error::InvalidArgument("mode index out of range"));
    }
    let stride: usize = trunc.cutoffs[mode + 1..].iter().map(|c| c + 1).product();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..rho.dim() {
        let n = trunc.occupation(i, mode);
        if n > 0 {
            acc += rho.matrix[(i, i - stride)] * (n as f64).sqrt();
        }
    }
    Ok(acc)
}
