//! Number-diagonal-signal (NDS) probes, phase-randomised augmentation, the
//! loss-pattern statistics of an attenuated NDS probe, and the closed-form
//! fidelity between amplifier outputs.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

#[allow(unused_imports)]
use num_traits::Float;
use crate::fock::{DensityOperator, FockTruncation, StateVector};
use crate::linalg::{binomial, trace_norm_hermitian};
use crate::{Error, Result, C64};

/// Multimode photon-number distribution keyed by occupation vectors.
pub type PhotonDist = BTreeMap<Vec<usize>, f64>;

const NORMALIZATION_TOL: f64 = 1e-12;
/// Mass discarded when truncating infinite-support distributions.
pub const SUPPORT_TAIL: f64 = 1e-14;

/// A signal photon-number distribution with its mode count and mean total
/// photon number.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    dist: PhotonDist,
    modes: usize,
    mean: f64,
}

impl ProbeSpec {
    /// Validates a distribution: one common mode count, nonnegative
    /// weights summing to one within 1e-12. Zero-weight entries are dropped.
    pub fn new(dist: PhotonDist) -> Result<Self> {
        let modes = match dist.keys().next() {
            Some(k) if !k.is_empty() => k.len(),
            _ => return Err(Error::InvalidDistribution("empty distribution")),
        };
        if dist.keys().any(|k| k.len() != modes) {
            return Err(Error::InvalidDistribution("occupation vectors differ in length"));
        }
        if dist.values().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidDistribution("negative or undefined probability"));
        }
        let total: f64 = dist.values().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution("probabilities do not sum to one"));
        }
        let dist: PhotonDist = dist.into_iter().filter(|(_, p)| *p > 0.0).collect();
        let mean = dist.iter().map(|(n, p)| p * n.iter().sum::<usize>() as f64).sum();
        Ok(Self { dist, modes, mean })
    }

    /// Single-mode distribution `p[n]`.
    pub fn single_mode(p: &[f64]) -> Result<Self> {
        Self::new(p.iter().enumerate().map(|(n, &w)| (vec![n], w)).collect())
    }

    /// `modes` independent copies of the single-mode distribution `p`.
    pub fn iid(p: &[f64], modes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::InvalidArgument("at least one mode"));
        }
        let mut dist: PhotonDist = BTreeMap::new();
        dist.insert(Vec::new(), 1.0);
        for _ in 0..modes {
            let mut next = BTreeMap::new();
            for (n, w) in &dist {
                for (k, &q) in p.iter().enumerate() {
                    let mut v = n.clone();
                    v.push(k);
                    next.insert(v, w * q);
                }
            }
            dist = next;
        }
        Self::new(dist)
    }

    /// Geometric (thermal) photon statistics of brightness `ns` on each of
    /// `modes` modes, truncated once the per-mode tail falls below
    /// [`SUPPORT_TAIL`] and renormalised.
    pub fn geometric(ns: f64, modes: usize) -> Result<Self> {
        if !(ns >= 0.0) || !ns.is_finite() {
            return Err(Error::Domain { what: "signal brightness", value: ns });
        }
        let cutoff = crate::fock::geometric_cutoff(ns, SUPPORT_TAIL);
        let mut p = crate::fock::thermal_probabilities(ns, cutoff);
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        Self::iid(&p, modes)
    }

    /// The number state `|n⟩`.
    pub fn number(occupations: &[usize]) -> Result<Self> {
        let mut dist = BTreeMap::new();
        dist.insert(occupations.to_vec(), 1.0);
        Self::new(dist)
    }

    pub fn dist(&self) -> &PhotonDist {
        &self.dist
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Mean total photon number `N = Σ_n |n| p_n`.
    pub fn mean_photons(&self) -> f64 {
        self.mean
    }

    /// Support points in ascending lexicographic order.
    pub fn support(&self) -> Vec<Vec<usize>> {
        self.dist.keys().cloned().collect()
    }

    /// Largest occupation of each mode over the support.
    pub fn cutoffs(&self) -> Vec<usize> {
        let mut c = vec![0; self.modes];
        for n in self.dist.keys() {
            for (m, &x) in n.iter().enumerate() {
                c[m] = c[m].max(x);
            }
        }
        c
    }
}

/// `Σ_j √w_j |a_j⟩_A |n_j⟩_S` for terms `(a_j, n_j, w_j)`. The ancilla is
/// a single register of dimension `ancilla_dim` (mode 0 of the result);
/// signal modes follow with the given cutoffs.
pub fn entangled_state(terms: &[(usize, Vec<usize>, f64)], ancilla_dim: usize, signal_cutoffs: &[usize]) -> Result<StateVector> {
    if ancilla_dim == 0 {
        return Err(Error::InvalidArgument("ancilla dimension must be positive"));
    }
    let mut cutoffs = vec![ancilla_dim - 1];
    cutoffs.extend_from_slice(signal_cutoffs);
    let trunc = FockTruncation::new(cutoffs)?;
    let mut amps = DVector::zeros(trunc.dim());
    for (a, n, w) in terms {
        let mut occ = vec![*a];
        occ.extend_from_slice(n);
        amps[trunc.index_of(&occ)?] += C64::new(w.sqrt(), 0.0);
    }
    StateVector::new(trunc, amps, 0.0)
}

/// An NDS probe `Σ_n √p_n |χ_n⟩_A |n⟩_S` with orthonormal ancilla states,
/// one per support point of its [`ProbeSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct NdsProbe {
    state: StateVector,
    spec: ProbeSpec,
}

impl NdsProbe {
    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn spec(&self) -> &ProbeSpec {
        &self.spec
    }

    /// Signal mode indices within [`Self::state`].
    pub fn signal_modes(&self) -> Vec<usize> {
        (1..=self.spec.modes).collect()
    }
}

/// Builds the NDS probe of `spec`; `|χ_n⟩` is the ancilla basis state
/// whose index is the position of `n` in [`ProbeSpec::support`].
pub fn nds_probe(spec: &ProbeSpec) -> Result<NdsProbe> {
    let terms: Vec<_> = spec
        .dist
        .iter()
        .enumerate()
        .map(|(j, (n, &p))| (j, n.clone(), p))
        .collect();
    let state = entangled_state(&terms, terms.len(), &spec.cutoffs())?;
    Ok(NdsProbe {
        state,
        spec: spec.clone(),
    })
}

/// Phase-randomised probe `(N0+1)^{-M/2} Σ_r |r⟩_R ⊗ (I ⊗ U(r)) |ψ⟩` with
/// `U(r) = exp[−i2π r·N/(N0+1)]` over the listed signal modes. The `M`
/// registers of `R` are prepended as modes with cutoff `N0`.
pub fn augment_probe(psi: &StateVector, signal_modes: &[usize], n0: usize) -> Result<StateVector> {
    let trunc = psi.truncation();
    if signal_modes.is_empty() || signal_modes.iter().any(|&m| m >= trunc.mode_count()) {
        return Err(Error::InvalidArgument("signal modes out of range"));
    }
    let amps = psi.amplitudes();
    for (i, a) in amps.iter().enumerate() {
        if a.norm_sqr() > 0.0 && signal_modes.iter().any(|&m| trunc.occupation(i, m) > n0) {
            return Err(Error::SupportExceedsN0 { n0 });
        }
    }
    let modes = signal_modes.len();
    let reg = FockTruncation::uniform(modes, n0)?;
    let out_trunc = reg.concat(trunc);
    let reg_dim = reg.dim();
    let scale = 1.0 / (reg_dim as f64).sqrt();
    let totals: Vec<Vec<usize>> = (0..trunc.dim())
        .map(|i| signal_modes.iter().map(|&m| trunc.occupation(i, m)).collect())
        .collect();
    let mut out = DVector::zeros(out_trunc.dim());
    for r_idx in 0..reg_dim {
        let r = reg.occupations(r_idx);
        for (i, a) in amps.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let dot: usize = r.iter().zip(&totals[i]).map(|(x, n)| x * n).sum();
            let phase = -2.0 * PI * ((dot % (n0 + 1)) as f64) / (n0 + 1) as f64;
            out[r_idx * trunc.dim() + i] = a * C64::new(0.0, phase).exp() * scale;
        }
    }
    StateVector::new(out_trunc, out, psi.tail_mass())
}

/// Trace norm of the part of `rho` off the number-basis diagonal.
pub fn offdiagonal_trace_norm(rho: &DensityOperator) -> Result<f64> {
    let mut off = rho.matrix().clone();
    for i in 0..off.nrows() {
        off[(i, i)] = C64::new(0.0, 0.0);
    }
    trace_norm_hermitian(&off)
}

fn check_transmittance(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain { what: "transmittance", value: eta });
    }
    Ok(())
}

/// `Π_m C(n_m, l_m) η^{n_m−l_m} (1−η)^{l_m}`.
fn thinning_weight(n: &[usize], l: &[usize], eta: f64) -> f64 {
    n.iter()
        .zip(l)
        .map(|(&n, &l)| binomial(n, l) * eta.powi((n - l) as i32) * (1.0 - eta).powi(l as i32))
        .product()
}

/// All vectors `l` with `0 ≤ l ≤ n` componentwise, in lexicographic order.
fn below(n: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &nm in n {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0..=nm).map(move |x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

fn minus(n: &[usize], l: &[usize]) -> Vec<usize> {
    n.iter().zip(l).map(|(a, b)| a - b).collect()
}

/// Distribution of the loss pattern `l` (photons lost per mode) after
/// `L_η^{⊗M}`: `p_l(η) = Σ_{n≥l} p_n Π_m C(n_m,l_m) η^{n_m−l_m}(1−η)^{l_m}`.
pub fn loss_pattern_dist(spec: &ProbeSpec, eta: f64) -> Result<PhotonDist> {
    check_transmittance(eta)?;
    let mut out = BTreeMap::new();
    for (n, &p) in &spec.dist {
        for l in below(n) {
            let w = p * thinning_weight(n, &l, eta);
            *out.entry(l).or_insert(0.0) += w;
        }
    }
    Ok(out)
}

/// Distribution of the residual pattern `k` given loss pattern `l`:
/// `p_{k|l}(η) ∝ p_{k+l} Π_m C(k_m+l_m, l_m) η^{k_m} (1−η)^{l_m}`.
pub fn conditional_residual_dist(spec: &ProbeSpec, eta: f64, l: &[usize]) -> Result<PhotonDist> {
    check_transmittance(eta)?;
    if l.len() != spec.modes {
        return Err(Error::DimensionMismatch { expected: spec.modes, found: l.len() });
    }
    let mut out = BTreeMap::new();
    let mut total = 0.0;
    for (n, &p) in &spec.dist {
        if n.iter().zip(l).any(|(a, b)| a < b) {
            continue;
        }
        let w = p * thinning_weight(n, l, eta);
        total += w;
        out.insert(minus(n, l), w);
    }
    if !(total > 0.0) {
        return Err(Error::ZeroProbabilityCondition);
    }
    out.values_mut().for_each(|w| *w /= total);
    Ok(out)
}

/// Joint distribution of `(l, k)` as an aligned vector: outcomes are the
/// pairs `(n, l)` with `n` in the support and `l ≤ n`, in lexicographic
/// order, with `k = n − l`.
pub fn joint_loss_residual_probabilities(spec: &ProbeSpec, eta: f64) -> Result<Vec<f64>> {
    check_transmittance(eta)?;
    let mut out = Vec::new();
    for (n, &p) in &spec.dist {
        for l in below(n) {
            out.push(p * thinning_weight(n, &l, eta));
        }
    }
    Ok(out)
}

/// Bhattacharyya coefficient `Σ √(p q)` of two normalised distributions.
pub fn bhattacharyya(p: &PhotonDist, q: &PhotonDist) -> Result<f64> {
    for d in [p, q] {
        if (d.values().sum::<f64>() - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDistribution("probabilities do not sum to one"));
        }
    }
    Ok(p.iter()
        .filter_map(|(n, a)| q.get(n).map(|b| (a * b).sqrt()))
        .sum())
}

/// `ν = (√(GG′) − √((G−1)(G′−1)))⁻¹`, i.e. `sech(τ′ − τ)` for `G = cosh²τ`.
pub fn nu_coefficient(g: f64, g_prime: f64) -> Result<f64> {
    for v in [g, g_prime] {
        if !(v >= 1.0) || !v.is_finite() {
            return Err(Error::Domain { what: "gain", value: v });
        }
    }
    let nu = 1.0 / ((g * g_prime).sqrt() - ((g - 1.0) * (g_prime - 1.0)).sqrt());
    Ok(nu.min(1.0))
}

/// Fidelity between the amplifier outputs of two NDS states sharing an
/// ancilla basis: `Σ_n √(r_n s_n) ν^{|n|+M}`.
pub fn amp_output_fidelity(r: &PhotonDist, s: &PhotonDist, g: f64, g_prime: f64, modes: usize) -> Result<f64> {
    let nu = nu_coefficient(g, g_prime)?;
    let mut total = 0.0;
    for (n, a) in r {
        if n.len() != modes {
            return Err(Error::DimensionMismatch { expected: modes, found: n.len() });
        }
        if let Some(b) = s.get(n) {
            total += (a * b).sqrt() * nu.powi((n.iter().sum::<usize>() + modes) as i32);
        }
    }
    Ok(total)
}

/// Fidelity between the conditional output states for loss pattern `l`
/// at `(η, G)` and `(η′, G′)`.
pub fn conditional_output_fidelity(spec: &ProbeSpec, l: &[usize], eta: f64, eta_prime: f64, g: f64, g_prime: f64) -> Result<f64> {
    let p = conditional_residual_dist(spec, eta, l)?;
    let q = conditional_residual_dist(spec, eta_prime, l)?;
    amp_output_fidelity(&p, &q, g, g_prime, spec.modes)
}

/// The conditional NDS state `Σ_k √p_{k|l}(η) |χ_{k+l}⟩ |k⟩` with the
/// ancilla labelled as in [`nds_probe`]; signal cutoffs follow the spec.
pub fn conditional_state(spec: &ProbeSpec, eta: f64, l: &[usize]) -> Result<StateVector> {
    let cond = conditional_residual_dist(spec, eta, l)?;
    let support = spec.support();
    let terms: Vec<_> = cond
        .iter()
        .map(|(k, &w)| {
            let n: Vec<usize> = k.iter().zip(l).map(|(a, b)| a + b).collect();
            let j = support.binary_search(&n).expect("k + l lies in the support");
            (j, k.clone(), w)
        })
        .collect();
    entangled_state(&terms, support.len(), &spec.cutoffs())
}

/// Reduced signal state `Σ_n p_n |n⟩⟨n|` of an NDS probe.
pub fn diagonal_signal_state(spec: &ProbeSpec) -> Result<DensityOperator> {
    let trunc = FockTruncation::new(spec.cutoffs())?;
    let mut m = DMatrix::zeros(trunc.dim(), trunc.dim());
    for (n, &p) in &spec.dist {
        let i = trunc.index_of(n)?;
        m[(i, i)] = C64::new(p, 0.0);
    }
    DensityOperator::new(trunc, m, 0.0)
}
