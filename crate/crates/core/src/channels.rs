//! Kraus realisations of phase-covariant channels and the
//! attenuator-amplifier cascade descriptors of the sensing scenarios.
//!
//! Kraus operators are stored as sparse triplets. The attenuator and
//! amplifier operators have a single entry per column, which keeps channel
//! application proportional to the number of nonzero input entries.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

#[allow(unused_imports)]
use num_traits::Float;
use crate::fock::{phase_shift_unitary, DensityOperator, FockTruncation};
use crate::linalg::{binomial, hermitian_part, trace_norm_hermitian, HermitianEigen};
use crate::{Error, Result, C64};

/// Default completeness target for amplifier truncation.
pub const DEFAULT_AMPLIFIER_TAIL: f64 = 1e-10;
/// Largest anti-Hermitian correction accepted after channel application.
pub const HERMITICITY_CORRECTION_LIMIT: f64 = 1e-10;
/// Largest trace drop accepted in one channel application.
pub const TRACE_LOSS_LIMIT: f64 = 1e-9;
/// Relative step of the finite-difference cascade derivative fallback.
pub const CASCADE_FD_STEP: f64 = 1e-6;

const MAX_PHOTON_ADDITION: usize = 20_000;

/// Phases used by [`check_phase_covariance`]; mode `m` of a multimode
/// channel is rotated by the grid shifted `m` places.
pub const PHASE_GRID: [f64; 6] = [0.37, 1.21, 2.0, PI, 4.42, 5.93];

#[inline]
fn is_zero(z: C64) -> bool {
    z.re == 0.0 && z.im == 0.0
}

/// A sparse complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausOperator {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl KrausOperator {
    /// Builds an operator from `(row, col, value)` triplets. Duplicates are
    /// summed and exact zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, entries: Vec<(usize, usize, C64)>) -> Result<Self> {
        let mut merged: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for (r, c, v) in entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidArgument("Kraus entry outside the operator shape"));
            }
            *merged.entry((c, r)).or_insert(C64::new(0.0, 0.0)) += v;
        }
        let entries = merged
            .into_iter()
            .filter(|(_, v)| !is_zero(*v))
            .map(|((c, r), v)| (r, c, v))
            .collect();
        Ok(Self { rows, cols, entries })
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if !is_zero(m[(i, j)]) {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            rows: dim,
            cols: dim,
            entries: (0..dim).map(|i| (i, i, C64::new(1.0, 0.0))).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    fn by_column(&self) -> Vec<Vec<(usize, C64)>> {
        let mut cols = vec![Vec::new(); self.cols];
        for &(r, c, v) in &self.entries {
            cols[c].push((r, v));
        }
        cols
    }

    fn by_row(&self) -> Vec<Vec<(usize, C64)>> {
        let mut rows = vec![Vec::new(); self.rows];
        for &(r, c, v) in &self.entries {
            rows[r].push((c, v));
        }
        rows
    }

    /// `second · first`.
    fn product(second: &Self, first: &Self) -> Self {
        let second_cols = second.by_column();
        let mut acc: BTreeMap<(usize, usize), C64> = BTreeMap::new();
        for &(mid, c, v) in &first.entries {
            for &(r, w) in &second_cols[mid] {
                *acc.entry((c, r)).or_insert(C64::new(0.0, 0.0)) += w * v;
            }
        }
        Self {
            rows: second.rows,
            cols: first.cols,
            entries: acc
                .into_iter()
                .filter(|(_, v)| !is_zero(*v))
                .map(|((c, r), v)| (r, c, v))
                .collect(),
        }
    }
}

/// A channel `ρ ↦ Σ K ρ K†` between two truncations.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    operators: Vec<KrausOperator>,
    input: FockTruncation,
    output: FockTruncation,
    completeness_defect: f64,
}

impl KrausChannel {
    /// Validates operator shapes and measures `‖I − Σ K†K‖` (operator norm).
    pub fn new(operators: Vec<KrausOperator>, input: FockTruncation, output: FockTruncation) -> Result<Self> {
        for op in &operators {
            if op.cols != input.dim() {
                return Err(Error::DimensionMismatch {
                    expected: input.dim(),
                    found: op.cols,
                });
            }
            if op.rows != output.dim() {
                return Err(Error::DimensionMismatch {
                    expected: output.dim(),
                    found: op.rows,
                });
            }
        }
        let completeness_defect = completeness_defect(&operators, input.dim())?;
        Ok(Self {
            operators,
            input,
            output,
            completeness_defect,
        })
    }

    pub fn identity(truncation: FockTruncation) -> Self {
        Self {
            operators: vec![KrausOperator::identity(truncation.dim())],
            output: truncation.clone(),
            input: truncation,
            completeness_defect: 0.0,
        }
    }

    pub fn operators(&self) -> &[KrausOperator] {
        &self.operators
    }

    pub fn input(&self) -> &FockTruncation {
        &self.input
    }

    pub fn output(&self) -> &FockTruncation {
        &self.output
    }

    pub fn completeness_defect(&self) -> f64 {
        self.completeness_defect
    }
}

fn completeness_defect(ops: &[KrausOperator], dim: usize) -> Result<f64> {
    let mut gram = DMatrix::<C64>::identity(dim, dim);
    for op in ops {
        for row in op.by_row() {
            for &(c1, v1) in &row {
                for &(c2, v2) in &row {
                    gram[(c1, c2)] -= v1.conj() * v2;
                }
            }
        }
    }
    let eig = HermitianEigen::new(&hermitian_part(&gram).0)?;
    Ok(eig.values().iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

fn check_unit_interval(what: &'static str, value: f64) -> Result<()> {
    if !(value > 0.0 && value <= 1.0) {
        return Err(Error::Domain { what, value });
    }
    Ok(())
}

fn check_gain(value: f64) -> Result<()> {
    if !(value >= 1.0) || !value.is_finite() {
        return Err(Error::Domain { what: "gain", value });
    }
    Ok(())
}

/// Quantum-limited attenuator of transmittance `eta` on a single mode cut
/// at `cutoff`: `A_l = Σ_n √C(n,l) η^{(n−l)/2} (1−η)^{l/2} |n−l⟩⟨n|`.
pub fn attenuator_kraus(eta: f64, cutoff: usize) -> Result<KrausChannel> {
    check_unit_interval("transmittance", eta)?;
    let trunc = FockTruncation::single(cutoff);
    let dim = cutoff + 1;
    let mut ops = Vec::new();
    for l in 0..=cutoff {
        let entries: Vec<_> = (l..=cutoff)
            .map(|n| {
                let w = binomial(n, l) * eta.powi((n - l) as i32) * (1.0 - eta).powi(l as i32);
                (n - l, n, C64::new(w.sqrt(), 0.0))
            })
            .filter(|e| e.2.re != 0.0)
            .collect();
        if !entries.is_empty() {
            ops.push(KrausOperator {
                rows: dim,
                cols: dim,
                entries,
            });
        }
    }
    KrausChannel::new(ops, trunc.clone(), trunc)
}

/// Probabilities `w_{k,a} = C(k+a, a) t^a s^{k+1}` of adding `a` photons to
/// `|k⟩`, for `a = 0..=a_max`, with `t = (G−1)/G` and `s = 1/G`.
pub fn amplifier_addition_weights(gain: f64, k: usize, a_max: usize) -> Vec<f64> {
    let t = (gain - 1.0) / gain;
    let mut w = (1.0 / gain).powi(k as i32 + 1);
    let mut out = Vec::with_capacity(a_max + 1);
    for a in 0..=a_max {
        out.push(w);
        w *= t * (k + a + 1) as f64 / (a + 1) as f64;
    }
    out
}

/// Smallest photon-addition order whose completeness defect, averaged over
/// the input photon-number weights `input_weights[k]`, is below `tail_tol`.
pub fn amplifier_order(gain: f64, input_weights: &[f64], tail_tol: f64) -> Result<usize> {
    check_gain(gain)?;
    if !(tail_tol > 0.0) {
        return Err(Error::Domain {
            what: "tail tolerance",
            value: tail_tol,
        });
    }
    let t = (gain - 1.0) / gain;
    let mut w: Vec<f64> = (0..input_weights.len())
        .map(|k| (1.0 / gain).powi(k as i32 + 1))
        .collect();
    let mut cum = w.clone();
    for a in 0..MAX_PHOTON_ADDITION {
        let defect: f64 = input_weights
            .iter()
            .zip(&cum)
            .map(|(p, c)| p * (1.0 - c).max(0.0))
            .sum();
        if defect < tail_tol {
            return Ok(a);
        }
        for k in 0..w.len() {
            w[k] *= t * (k + a + 1) as f64 / (a + 1) as f64;
            cum[k] += w[k];
        }
    }
    Err(Error::TruncationTooSevere {
        tail: 1.0,
        allowed: tail_tol,
    })
}

/// Quantum-limited amplifier with gain `G = cosh²τ` on inputs cut at
/// `cutoff`. The number of Kraus operators is chosen so that the
/// completeness defect on every input level stays below `tail_tol`.
pub fn amplifier_kraus(gain: f64, cutoff: usize, tail_tol: f64) -> Result<KrausChannel> {
    let mut worst = vec![0.0; cutoff + 1];
    worst[cutoff] = 1.0;
    let a_max = amplifier_order(gain, &worst, tail_tol)?;
    amplifier_kraus_with_order(gain, cutoff, a_max)
}

/// Amplifier Kraus operators `K_0..K_{a_max}`; the output cutoff is
/// `cutoff + a_max`.
pub fn amplifier_kraus_with_order(gain: f64, cutoff: usize, a_max: usize) -> Result<KrausChannel> {
    check_gain(gain)?;
    let input = FockTruncation::single(cutoff);
    let output = FockTruncation::single(cutoff + a_max);
    let weights: Vec<Vec<f64>> = (0..=cutoff)
        .map(|k| amplifier_addition_weights(gain, k, a_max))
        .collect();
    let mut ops = Vec::with_capacity(a_max + 1);
    for a in 0..=a_max {
        let entries: Vec<_> = (0..=cutoff)
            .map(|k| (k + a, k, C64::new(weights[k][a].sqrt(), 0.0)))
            .filter(|e| e.2.re != 0.0)
            .collect();
        if !entries.is_empty() {
            ops.push(KrausOperator {
                rows: output.dim(),
                cols: input.dim(),
                entries,
            });
        }
    }
    KrausChannel::new(ops, input, output)
}

/// Displacement `D(α)` mapping a cutoff-`cutoff` mode into a
/// cutoff-`output_cutoff` mode. Not phase-covariant; useful as a negative
/// control.
pub fn displacement_kraus(alpha: C64, cutoff: usize, output_cutoff: usize) -> Result<KrausChannel> {
    let x = alpha.norm_sqr();
    let damp = (-x / 2.0).exp();
    let mut m = DMatrix::zeros(output_cutoff + 1, cutoff + 1);
    for n in 0..=cutoff {
        for r in 0..=output_cutoff {
            let (lo, hi) = (n.min(r), n.max(r));
            let ratio: f64 = (lo + 1..=hi).map(|k| 1.0 / (k as f64).sqrt()).product();
            let lag = laguerre(lo, (hi - lo) as f64, x);
            let power = if r >= n {
                alpha.powu((r - n) as u32)
            } else {
                (-alpha.conj()).powu((n - r) as u32)
            };
            m[(r, n)] = power * (ratio * damp * lag);
        }
    }
    KrausChannel::new(
        vec![KrausOperator::from_dense(&m)],
        FockTruncation::single(cutoff),
        FockTruncation::single(output_cutoff),
    )
}

/// Generalised Laguerre polynomial `L_n^{(a)}(x)`.
fn laguerre(n: usize, a: f64, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 + a - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `second ∘ first`: every product `B_j A_i`.
pub fn compose(first: &KrausChannel, second: &KrausChannel) -> Result<KrausChannel> {
    if first.output != second.input {
        return Err(Error::DimensionMismatch {
            expected: second.input.dim(),
            found: first.output.dim(),
        });
    }
    let mut ops = Vec::with_capacity(first.operators.len() * second.operators.len());
    for b in &second.operators {
        for a in &first.operators {
            let p = KrausOperator::product(b, a);
            if !p.entries.is_empty() {
                ops.push(p);
            }
        }
    }
    KrausChannel::new(ops, first.input.clone(), second.output.clone())
}

/// Applies `channel` to the whole of `rho`.
pub fn apply(channel: &KrausChannel, rho: &DensityOperator) -> Result<DensityOperator> {
    if rho.truncation() != &channel.input {
        return Err(Error::TruncationMismatch);
    }
    let modes: Vec<usize> = (0..channel.input.mode_count()).collect();
    apply_on(channel, rho, &modes)
}

/// Applies `channel` to the listed modes of `rho`, leaving the rest alone.
/// A single-mode channel is applied independently to each listed mode.
pub fn apply_to_modes(channel: &KrausChannel, rho: &DensityOperator, modes: &[usize]) -> Result<DensityOperator> {
    if channel.input.mode_count() == 1 && modes.len() > 1 {
        let mut out = rho.clone();
        for &m in modes {
            out = apply_on(channel, &out, &[m])?;
        }
        return Ok(out);
    }
    apply_on(channel, rho, modes)
}

fn apply_on(channel: &KrausChannel, rho: &DensityOperator, modes: &[usize]) -> Result<DensityOperator> {
    let trunc = rho.truncation();
    for (i, m) in modes.iter().enumerate() {
        if modes[..i].contains(m) {
            return Err(Error::InvalidArgument("modes must be distinct"));
        }
    }
    if trunc.sub(modes)? != channel.input || channel.output.mode_count() != modes.len() {
        return Err(Error::TruncationMismatch);
    }
    let mut out_cutoffs = trunc.cutoffs().to_vec();
    for (k, &m) in modes.iter().enumerate() {
        out_cutoffs[m] = channel.output.cutoff(k);
    }
    let out_trunc = FockTruncation::new(out_cutoffs)?;

    // Output flat indices split additively into a part from the untouched
    // modes and a part from the channel modes.
    let strides: Vec<usize> = (0..out_trunc.mode_count())
        .map(|m| out_trunc.cutoffs()[m + 1..].iter().map(|c| c + 1).product())
        .collect();
    let rest: Vec<usize> = (0..trunc.mode_count()).filter(|m| !modes.contains(m)).collect();
    let rest_dim: usize = rest.iter().map(|&m| trunc.cutoff(m) + 1).product();
    let rest_part: Vec<usize> = (0..rest_dim)
        .map(|mut r| {
            let mut off = 0;
            for &m in rest.iter().rev() {
                let base = trunc.cutoff(m) + 1;
                off += (r % base) * strides[m];
                r /= base;
            }
            off
        })
        .collect();
    let sub_part: Vec<usize> = (0..channel.output.dim())
        .map(|s| {
            let occ = channel.output.occupations(s);
            modes.iter().zip(&occ).map(|(&m, &n)| n * strides[m]).sum()
        })
        .collect();
    let (rest_idx, sub_idx) = trunc.split_indices(modes);

    let columns: Vec<Vec<Vec<(usize, C64)>>> = channel.operators.iter().map(|op| op.by_column()).collect();
    let m = rho.matrix();
    let dim = m.nrows();
    let mut out = DMatrix::<C64>::zeros(out_trunc.dim(), out_trunc.dim());
    for j in 0..dim {
        let (r2, s2) = (rest_part[rest_idx[j]], sub_idx[j]);
        for i in 0..dim {
            let v = m[(i, j)];
            if is_zero(v) {
                continue;
            }
            let (r1, s1) = (rest_part[rest_idx[i]], sub_idx[i]);
            for cols in &columns {
                for &(row2, k2) in &cols[s2] {
                    let right = v * k2.conj();
                    let col = r2 + sub_part[row2];
                    for &(row1, k1) in &cols[s1] {
                        out[(r1 + sub_part[row1], col)] += k1 * right;
                    }
                }
            }
        }
    }

    let (out, correction) = hermitian_part(&out);
    if correction > HERMITICITY_CORRECTION_LIMIT {
        return Err(Error::HermiticityViolation { correction });
    }
    let out_trace: f64 = out.diagonal().iter().map(|z| z.re).sum();
    let loss = rho.trace() - out_trace;
    if loss > TRACE_LOSS_LIMIT {
        return Err(Error::TraceLossExceeded { loss });
    }
    Ok(DensityOperator::from_parts(out_trunc, out, rho.trace_defect() + loss))
}

/// Largest trace-norm deviation `‖C(UρU†) − U C(ρ) U†‖₁` over the samples
/// and the phases of [`PHASE_GRID`].
pub fn check_phase_covariance(channel: &KrausChannel, samples: &[DensityOperator]) -> Result<f64> {
    let modes = channel.input.mode_count();
    let mut worst = 0.0f64;
    for rho in samples {
        let direct = apply(channel, rho)?;
        for g in 0..PHASE_GRID.len() {
            let phases: Vec<f64> = (0..modes).map(|m| PHASE_GRID[(g + m) % PHASE_GRID.len()]).collect();
            let u_in = phase_shift_unitary(&phases, &channel.input)?;
            let u_out = phase_shift_unitary(&phases, &channel.output)?;
            let lhs = apply(channel, &u_in.conjugate(rho)?)?;
            let rhs = u_out.conjugate_matrix(direct.matrix());
            let dev = trace_norm_hermitian(&hermitian_part(&(lhs.matrix() - rhs)).0)?;
            worst = worst.max(dev);
        }
    }
    Ok(worst)
}

/// The attenuator-amplifier descriptor `(η(θ), G(θ))` of a channel family
/// with its gradients at `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeParams {
    theta: Vec<f64>,
    eta: f64,
    gain: f64,
    d_eta: Vec<f64>,
    d_gain: Vec<f64>,
}

impl CascadeParams {
    pub fn new(theta: Vec<f64>, eta: f64, gain: f64, d_eta: Vec<f64>, d_gain: Vec<f64>) -> Result<Self> {
        check_unit_interval("transmittance", eta)?;
        check_gain(gain)?;
        let k = theta.len();
        if k == 0 || k > 2 {
            return Err(Error::InvalidArgument("cascade families have one or two parameters"));
        }
        for v in [&d_eta, &d_gain] {
            if v.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: v.len(),
                });
            }
        }
        Ok(Self {
            theta,
            eta,
            gain,
            d_eta,
            d_gain,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn d_eta(&self) -> &[f64] {
        &self.d_eta
    }

    pub fn d_gain(&self) -> &[f64] {
        &self.d_gain
    }

    pub fn parameter_count(&self) -> usize {
        self.theta.len()
    }

    /// Kraus form of amplifier ∘ attenuator on a single mode.
    pub fn channel(&self, cutoff: usize, tail_tol: f64) -> Result<KrausChannel> {
        let att = attenuator_kraus(self.eta, cutoff)?;
        let amp = amplifier_kraus(self.gain, cutoff, tail_tol)?;
        compose(&att, &amp)
    }
}

/// The sensing scenarios with closed-form cascades.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioId {
    /// Thermal loss whose environment brightness scales as `N_B/(1−κ)`,
    /// so the vacuum output carries no information on `κ`.
    NpsLoss { nb: f64 },
    /// Thermal loss with fixed environment brightness `N_B`.
    PsLoss { nb: f64 },
    /// Additive Gaussian noise of variance `γ`.
    AddNoise,
}

impl ScenarioId {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NpsLoss { .. } => "nps",
            Self::PsLoss { .. } => "ps",
            Self::AddNoise => "add-noise",
        }
    }

    /// Name of the scalar parameter.
    pub fn parameter_name(&self) -> &'static str {
        match self {
            Self::AddNoise => "gamma",
            _ => "kappa",
        }
    }

    pub fn background(&self) -> Option<f64> {
        match *self {
            Self::NpsLoss { nb } | Self::PsLoss { nb } => Some(nb),
            Self::AddNoise => None,
        }
    }

    /// Rejects parameter values outside the open domain of the scenario.
    pub fn check(&self, theta: f64) -> Result<()> {
        match *self {
            Self::NpsLoss { nb } | Self::PsLoss { nb } => {
                if !(nb >= 0.0) || !nb.is_finite() {
                    return Err(Error::Domain {
                        what: "background brightness",
                        value: nb,
                    });
                }
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::Domain {
                        what: "kappa",
                        value: theta,
                    });
                }
            }
            Self::AddNoise => {
                if !(theta > 0.0) || !theta.is_finite() {
                    return Err(Error::Domain {
                        what: "gamma",
                        value: theta,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Closed-form cascade of a scenario in its scalar parameter.
pub fn scenario_cascade(scenario: ScenarioId, theta: f64) -> Result<CascadeParams> {
    scenario.check(theta)?;
    match scenario {
        ScenarioId::AddNoise => {
            let g = theta + 1.0;
            CascadeParams::new(vec![theta], 1.0 / g, g, vec![-1.0 / (g * g)], vec![1.0])
        }
        _ => {
            let joint = joint_loss_cascade(scenario, theta)?;
            CascadeParams::new(
                vec![theta],
                joint.eta,
                joint.gain,
                vec![joint.d_eta[0]],
                vec![joint.d_gain[0]],
            )
        }
    }
}

/// Closed-form cascade of a thermal-loss scenario in `θ = (κ, N_B)`.
pub fn joint_loss_cascade(scenario: ScenarioId, kappa: f64) -> Result<CascadeParams> {
    scenario.check(kappa)?;
    match scenario {
        ScenarioId::NpsLoss { nb } => {
            let g = nb + 1.0;
            CascadeParams::new(
                vec![kappa, nb],
                kappa / g,
                g,
                vec![1.0 / g, -kappa / (g * g)],
                vec![0.0, 1.0],
            )
        }
        ScenarioId::PsLoss { nb } => {
            let g = (1.0 - kappa) * nb + 1.0;
            CascadeParams::new(
                vec![kappa, nb],
                kappa / g,
                g,
                vec![(nb + 1.0) / (g * g), -kappa * (1.0 - kappa) / (g * g)],
                vec![-nb, 1.0 - kappa],
            )
        }
        ScenarioId::AddNoise => Err(Error::InvalidArgument("additive noise has no loss parameter")),
    }
}

/// Cascade of a user-supplied family `θ ↦ (η, G)` with gradients from
/// central differences of relative step [`CASCADE_FD_STEP`].
pub fn cascade_by_differences(theta: &[f64], family: impl Fn(&[f64]) -> Result<(f64, f64)>) -> Result<CascadeParams> {
    let (eta, gain) = family(theta)?;
    let mut d_eta = Vec::with_capacity(theta.len());
    let mut d_gain = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = CASCADE_FD_STEP * theta[i].abs().max(1.0);
        let mut plus = theta.to_vec();
        let mut minus = theta.to_vec();
        plus[i] += h;
        minus[i] -= h;
        let (ep, gp) = family(&plus)?;
        let (em, gm) = family(&minus)?;
        d_eta.push((ep - em) / (2.0 * h));
        d_gain.push((gp - gm) / (2.0 * h));
    }
    CascadeParams::new(theta.to_vec(), eta, gain, d_eta, d_gain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, mean_amplitude, mean_photon_number, number_state, thermal_state};
    use crate::linalg::max_abs;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(rho: &DensityOperator) -> Vec<f64> {
        rho.matrix().diagonal().iter().map(|z| z.re).collect()
    }

    fn random_states(trunc: &FockTruncation, count: usize, seed: u64) -> Vec<DensityOperator> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = trunc.dim();
        (0..count)
            .map(|_| {
                let a = DMatrix::from_fn(d, d, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
                DensityOperator::from_factor(trunc.clone(), &a).unwrap()
            })
            .collect()
    }

    #[test]
    fn attenuator_examples() {
        let id = attenuator_kraus(1.0, 4).unwrap();
        assert_eq!(id.operators().len(), 1);
        assert_eq!(id.operators()[0], KrausOperator::identity(5));

        let one = number_state(&[1], &FockTruncation::single(1)).unwrap().to_density();
        let out = apply(&attenuator_kraus(0.3, 1).unwrap(), &one).unwrap();
        let d = diag(&out);
        assert!((d[0] - 0.7).abs() < 1e-15 && (d[1] - 0.3).abs() < 1e-15);
        assert!((mean_photon_number(&out, 0).unwrap() - 0.3).abs() < 1e-15);

        let two = number_state(&[2], &FockTruncation::single(2)).unwrap().to_density();
        let out = apply(&attenuator_kraus(0.5, 2).unwrap(), &two).unwrap();
        let d = diag(&out);
        for (x, y) in d.iter().zip([0.25, 0.5, 0.25]) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(matches!(attenuator_kraus(0.0, 2), Err(Error::Domain { .. })));
        assert!(matches!(attenuator_kraus(1.2, 2), Err(Error::Domain { .. })));
    }

    #[test]
    fn amplifier_examples() {
        let id = amplifier_kraus(1.0, 5, 1e-10).unwrap();
        assert_eq!(id.operators().len(), 1);
        assert_eq!(id.output().cutoff(0), 5);
        assert_eq!(id.operators()[0], KrausOperator::identity(6));

        let amp = amplifier_kraus(2.0, 0, 1e-12).unwrap();
        assert!(amp.completeness_defect() < 1e-12);
        let vac = number_state(&[0], &FockTruncation::single(0)).unwrap().to_density();
        let out = apply(&amp, &vac).unwrap();
        for (a, p) in diag(&out).iter().enumerate() {
            assert!((p - 0.5f64.powi(a as i32 + 1)).abs() < 1e-15);
        }
        assert!((mean_photon_number(&out, 0).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(amplifier_kraus(0.9, 2, 1e-10), Err(Error::Domain { .. })));
    }

    #[test]
    fn amplifier_defect_bounded_on_all_levels() {
        let amp = amplifier_kraus(1.7, 12, 1e-10).unwrap();
        assert!(amp.completeness_defect() < 1e-10);
        let fewer = amplifier_kraus_with_order(1.7, 12, amp.output().cutoff(0) - 12 - 1).unwrap();
        assert!(fewer.completeness_defect() >= 1e-10);
    }

    #[test]
    fn composition() {
        let c = amplifier_kraus(1.3, 3, 1e-10).unwrap();
        let id = KrausChannel::identity(FockTruncation::single(3));
        let composed = compose(&id, &c).unwrap();
        assert_eq!(composed.operators(), c.operators());
        assert!(compose(&c, &id).is_err());
    }

    #[test]
    fn cascade_moments() {
        let alpha = C64::new(0.8, -0.3);
        let cutoff = 25;
        let casc = compose(&attenuator_kraus(1.0 / 3.0, cutoff).unwrap(), &amplifier_kraus(1.5, cutoff, 1e-13).unwrap()).unwrap();
        let coh = coherent_state(alpha, cutoff).unwrap().to_density();
        let out = apply(&casc, &coh).unwrap();
        let a = mean_amplitude(&out, 0).unwrap();
        assert!((a - alpha * 0.5f64.sqrt()).norm() < 1e-9);

        let vac = number_state(&[0], &FockTruncation::single(cutoff)).unwrap().to_density();
        let out = apply(&casc, &vac).unwrap();
        assert!((mean_photon_number(&out, 0).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn scenario_examples() {
        let ps = scenario_cascade(ScenarioId::PsLoss { nb: 1.0 }, 0.5).unwrap();
        assert!((ps.eta() - 1.0 / 3.0).abs() < 1e-15);
        assert!((ps.gain() - 1.5).abs() < 1e-15);
        assert!((ps.d_eta()[0] - 8.0 / 9.0).abs() < 1e-15);
        assert!((ps.d_gain()[0] + 1.0).abs() < 1e-15);

        for kappa in [0.1, 0.4, 0.9] {
            let nps = scenario_cascade(ScenarioId::NpsLoss { nb: 1.0 }, kappa).unwrap();
            assert_eq!(nps.gain(), 2.0);
            assert_eq!(nps.d_gain()[0], 0.0);
        }

        let an = scenario_cascade(ScenarioId::AddNoise, 1.0).unwrap();
        assert_eq!((an.eta(), an.gain()), (0.5, 2.0));

        assert!(scenario_cascade(ScenarioId::PsLoss { nb: 1.0 }, 0.0).is_err());
        assert!(scenario_cascade(ScenarioId::PsLoss { nb: 1.0 }, 1.0).is_err());
        assert!(scenario_cascade(ScenarioId::AddNoise, 0.0).is_err());
        assert!(joint_loss_cascade(ScenarioId::AddNoise, 0.5).is_err());
    }

    #[test]
    fn finite_difference_fallback_matches_closed_form() {
        for (kappa, nb) in [(0.5, 1.0), (0.2, 0.3), (0.8, 4.0)] {
            let exact = joint_loss_cascade(ScenarioId::PsLoss { nb }, kappa).unwrap();
            let fd = cascade_by_differences(&[kappa, nb], |t| {
                let g = (1.0 - t[0]) * t[1] + 1.0;
                Ok((t[0] / g, g))
            })
            .unwrap();
            for i in 0..2 {
                assert!((fd.d_eta()[i] - exact.d_eta()[i]).abs() < 1e-8);
                assert!((fd.d_gain()[i] - exact.d_gain()[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn attenuated_coherent_state_stays_coherent() {
        let cutoff = 20;
        let out = apply(&attenuator_kraus(0.5, cutoff).unwrap(), &coherent_state(C64::new(1.0, 0.0), cutoff).unwrap().to_density()).unwrap();
        let target = coherent_state(C64::new(0.5f64.sqrt(), 0.0), cutoff).unwrap();
        let psi = target.amplitudes();
        let overlap = (psi.adjoint() * out.matrix() * psi)[(0, 0)].re;
        assert!((overlap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ps_cascade_mean_photon() {
        let (kappa, nb, alpha) = (0.6, 0.2, C64::new(0.7, 0.4));
        let cutoff = 22;
        let ch = scenario_cascade(ScenarioId::PsLoss { nb }, kappa).unwrap().channel(cutoff, 1e-13).unwrap();
        let out = apply(&ch, &coherent_state(alpha, cutoff).unwrap().to_density()).unwrap();
        let expect = kappa * alpha.norm_sqr() + (1.0 - kappa) * nb;
        assert!((mean_photon_number(&out, 0).unwrap() - expect).abs() < 1e-9);
        let a = mean_amplitude(&out, 0).unwrap();
        assert!((a - alpha * kappa.sqrt()).norm() < 1e-9);
    }

    #[test]
    fn nps_vacuum_has_no_signature() {
        let nb = 1.0;
        for kappa in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let ch = scenario_cascade(ScenarioId::NpsLoss { nb }, kappa).unwrap().channel(0, 1e-13).unwrap();
            let vac = thermal_state(0.0, 0).unwrap();
            let out = apply(&ch, &vac).unwrap();
            assert!((mean_photon_number(&out, 0).unwrap() - nb).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_covariance_of_scenarios_and_negative_control() {
        let trunc = FockTruncation::single(4);
        let samples = random_states(&trunc, 10, 7);
        let att = attenuator_kraus(0.7, 4).unwrap();
        assert!(check_phase_covariance(&att, &samples).unwrap() < 1e-10);
        for (s, t) in [(ScenarioId::PsLoss { nb: 0.5 }, 0.4), (ScenarioId::NpsLoss { nb: 0.5 }, 0.4), (ScenarioId::AddNoise, 0.6)] {
            let ch = scenario_cascade(s, t).unwrap().channel(4, 1e-12).unwrap();
            assert!(check_phase_covariance(&ch, &samples).unwrap() < 1e-9);
        }
        let disp = displacement_kraus(C64::new(0.8, 0.0), 4, 40).unwrap();
        assert!(disp.completeness_defect() < 1e-9);
        assert!(check_phase_covariance(&disp, &samples).unwrap() > 0.1);
    }

    #[test]
    fn displacement_of_vacuum_is_coherent() {
        let alpha = C64::new(0.6, 0.5);
        let d = displacement_kraus(alpha, 3, 30).unwrap().operators()[0].to_dense();
        let coh = coherent_state(alpha, 30).unwrap();
        for n in 0..=30 {
            assert!((d[(n, 0)] - coh.amplitudes()[n]).norm() < 1e-14);
        }
        let dd = &d.adjoint() * &d;
        assert!(max_abs(&(dd - DMatrix::identity(4, 4))) < 1e-12);
    }

    #[test]
    fn multimode_application_matches_kronecker() {
        let trunc = FockTruncation::new(vec![2, 3]).unwrap();
        let rho = &random_states(&trunc, 1, 3)[0];
        let amp = amplifier_kraus(1.4, 3, 1e-12).unwrap();
        let out = apply_to_modes(&amp, rho, &[1]).unwrap();
        let mut expect = DMatrix::zeros(out.dim(), out.dim());
        for op in amp.operators() {
            let k = DMatrix::<C64>::identity(3, 3).kronecker(&op.to_dense());
            expect += &k * rho.matrix() * k.adjoint();
        }
        assert!(max_abs(&(out.matrix() - expect)) < 1e-14);
        assert_eq!(out.truncation().cutoffs(), &[2, 3 + amp.output().cutoff(0) - 3]);
    }

    proptest! {
        #[test]
        fn attenuator_is_complete(eta in 0.001f64..1.0, cutoff in 0usize..30) {
            let ch = attenuator_kraus(eta, cutoff).unwrap();
            prop_assert!(ch.completeness_defect() < 1e-9);
        }

        #[test]
        fn cascade_preserves_trace(eta in 0.05f64..1.0, gain in 1.0f64..2.5, n in 0usize..6) {
            let att = attenuator_kraus(eta, 6).unwrap();
            let amp = amplifier_kraus(gain, 6, 1e-11).unwrap();
            let ch = compose(&att, &amp).unwrap();
            let rho = number_state(&[n], &FockTruncation::single(6)).unwrap().to_density();
            let out = apply(&ch, &rho).unwrap();
            prop_assert!((out.trace() - 1.0).abs() < 1e-10);
            prop_assert!((out.trace() + out.trace_defect() - 1.0).abs() < 1e-14);
        }
    }
}
