//! Brute-force quantum and classical Fisher information.
//!
//! Two independent routes to the QFIM of a truncated-Fock family: the
//! symmetric logarithmic derivative of a finite-difference `∂ρ`, and the
//! second derivative of the Uhlmann fidelity. The classical analogue uses
//! the Bhattacharyya coefficient.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

#[allow(unused_imports)]
use num_traits::Float;
use crate::fock::DensityOperator;
use crate::linalg::{coupled_components, submatrix, symmetric_min_eigenvalue, BlockPairs, HermitianEigen};
use crate::{Error, Result, C64};

/// Default support threshold of the SLD, relative to the largest eigenvalue.
pub const DEFAULT_EIG_TOL: f64 = 1e-12;
/// Largest Frobenius weight of `∂ρ` tolerated outside the retained support.
pub const DEGENERATE_SUPPORT_LIMIT: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-8;

/// A parametrised family of states `θ ↦ ρ_θ` with at most two parameters.
pub trait StateFamily {
    fn parameter_count(&self) -> usize;
    fn state(&self, theta: &[f64]) -> Result<DensityOperator>;
}

/// A [`StateFamily`] backed by a closure.
pub struct FnFamily<F> {
    k: usize,
    f: F,
}

impl<F> FnFamily<F>
where
    F: Fn(&[f64]) -> Result<DensityOperator>,
{
    pub fn new(parameter_count: usize, f: F) -> Self {
        Self { k: parameter_count, f }
    }
}

impl<F> StateFamily for FnFamily<F>
where
    F: Fn(&[f64]) -> Result<DensityOperator>,
{
    fn parameter_count(&self) -> usize {
        self.k
    }

    fn state(&self, theta: &[f64]) -> Result<DensityOperator> {
        (self.f)(theta)
    }
}

/// A parametrised family of probability vectors over a fixed outcome
/// ordering.
pub trait DistributionFamily {
    fn parameter_count(&self) -> usize;
    fn distribution(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

/// A [`DistributionFamily`] backed by a closure.
pub struct FnDistribution<F> {
    k: usize,
    f: F,
}

impl<F> FnDistribution<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    pub fn new(parameter_count: usize, f: F) -> Self {
        Self { k: parameter_count, f }
    }
}

impl<F> DistributionFamily for FnDistribution<F>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    fn parameter_count(&self) -> usize {
        self.k
    }

    fn distribution(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (self.f)(theta)
    }
}

/// Finite-difference settings: step `h_i = relative_step · max(|θ_i|, 1)`,
/// one Richardson extrapolation, and a step-halving acceptance threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdConfig {
    pub relative_step: f64,
    pub convergence_tol: f64,
    pub eig_tol: f64,
}

impl FdConfig {
    /// Settings for the SLD route.
    pub const SLD: Self = Self {
        relative_step: 1e-4,
        convergence_tol: 1e-5,
        eig_tol: DEFAULT_EIG_TOL,
    };

    /// Settings for second differences of fidelities and Bhattacharyya
    /// coefficients, which lose two orders of the step to roundoff.
    pub const OVERLAP: Self = Self {
        relative_step: 1e-3,
        convergence_tol: 1e-5,
        eig_tol: DEFAULT_EIG_TOL,
    };

    fn step(&self, theta: f64) -> f64 {
        self.relative_step * theta.abs().max(1.0)
    }
}

impl Default for FdConfig {
    fn default() -> Self {
        Self::SLD
    }
}

/// A symmetric positive-semidefinite Fisher information matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QfiMatrix {
    entries: DMatrix<f64>,
}

impl QfiMatrix {
    /// Accepts `entries` if symmetric within 1e-9 and with eigenvalues
    /// ≥ −1e-8, both relative to `max(1, max |entry|)`. The stored matrix is
    /// exactly symmetrised.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let scale = entries.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let asym = (&entries - entries.transpose()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::HermiticityViolation { correction: asym });
        }
        let entries = (&entries + entries.transpose()) * 0.5;
        let min = symmetric_min_eigenvalue(&entries)?;
        if min < -PSD_TOL * scale {
            return Err(Error::NegativeEigenvalue { value: min });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// The single entry of a one-parameter QFI.
    pub fn scalar(&self) -> f64 {
        self.entries[(0, 0)]
    }
}

/// `A ≥ B` up to `tol`: the smallest eigenvalue of `A − B` is at least `−tol`.
pub fn psd_order(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let d = a - b;
    let d = (&d + d.transpose()) * 0.5;
    Ok(symmetric_min_eigenvalue(&d)? >= -tol)
}

/// SLD in the eigenbasis of `eig`, plus the Frobenius weight of `drho`
/// that falls outside the retained support.
fn sld_in_eigenbasis(eig: &HermitianEigen, drho: &DMatrix<C64>, eig_tol: f64) -> Result<BlockPairs> {
    let mut l = eig.to_eigenbasis(drho);
    let threshold = eig_tol * eig.max_value();
    let values = eig.values();
    let blocks = eig.blocks();
    let mut dropped = 0.0;
    for (&(p, q), m) in l.iter_mut() {
        let (op, oq) = (blocks[p].offset, blocks[q].offset);
        for b in 0..m.ncols() {
            for a in 0..m.nrows() {
                let sum = values[op + a] + values[oq + b];
                if sum > threshold {
                    m[(a, b)] *= 2.0 / sum;
                } else {
                    dropped += m[(a, b)].norm_sqr();
                    m[(a, b)] = C64::new(0.0, 0.0);
                }
            }
        }
    }
    let weight = dropped.sqrt();
    if weight > DEGENERATE_SUPPORT_LIMIT {
        return Err(Error::DegenerateSupport { weight });
    }
    Ok(l)
}

fn psd_eigen(rho: &DMatrix<C64>) -> Result<HermitianEigen> {
    let mut eig = HermitianEigen::new(rho)?;
    eig.clip_psd()?;
    Ok(eig)
}

/// Symmetric logarithmic derivative `L` with `∂ρ = (ρL + Lρ)/2` on the
/// support of `rho` (eigenvalue pairs with `λ_j + λ_k > eig_tol · λ_max`).
pub fn sld(rho: &DMatrix<C64>, drho: &DMatrix<C64>, eig_tol: f64) -> Result<DMatrix<C64>> {
    if rho.shape() != drho.shape() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            found: drho.nrows(),
        });
    }
    let eig = psd_eigen(rho)?;
    let l = sld_in_eigenbasis(&eig, drho, eig_tol)?;
    Ok(eig.from_eigenbasis(&l))
}

/// `Σ_ab λ_a Re(L^i_ab conj(L^j_ab))` for SLDs expressed in the eigenbasis.
fn sld_qfim(eig: &HermitianEigen, slds: &[BlockPairs]) -> DMatrix<f64> {
    let k = slds.len();
    let values = eig.values();
    let blocks = eig.blocks();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let mut acc = 0.0;
            for (&(p, q), li) in slds[i].iter() {
                let Some(lj) = slds[j].get(p, q) else { continue };
                let off = blocks[p].offset;
                for b in 0..li.ncols() {
                    for a in 0..li.nrows() {
                        acc += values[off + a] * (li[(a, b)] * lj[(a, b)].conj()).re;
                    }
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

fn check_theta(family_k: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != family_k {
        return Err(Error::DimensionMismatch {
            expected: family_k,
            found: theta.len(),
        });
    }
    if family_k == 0 || family_k > 2 {
        return Err(Error::InvalidArgument("families have one or two parameters"));
    }
    Ok(())
}

fn shifted(theta: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut t = theta.to_vec();
    for &(i, d) in moves {
        t[i] += d;
    }
    t
}

fn central_difference<S: StateFamily + ?Sized>(
    family: &S,
    base: &DensityOperator,
    theta: &[f64],
    i: usize,
    h: f64,
) -> Result<DMatrix<C64>> {
    let plus = family.state(&shifted(theta, &[(i, h)]))?;
    let minus = family.state(&shifted(theta, &[(i, -h)]))?;
    if plus.truncation() != base.truncation() || minus.truncation() != base.truncation() {
        return Err(Error::TruncationMismatch);
    }
    Ok((plus.matrix() - minus.matrix()).unscale(2.0 * h))
}

fn relative_change(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (a - b).iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale
}

/// QFIM `Tr ρ (L_i L_j + L_j L_i)/2` from central differences with one
/// Richardson step, accepted if halving the step changes no entry by more
/// than `cfg.convergence_tol` relative.
pub fn qfim_sld<S: StateFamily + ?Sized>(family: &S, theta: &[f64], cfg: &FdConfig) -> Result<QfiMatrix> {
    let k = family.parameter_count();
    check_theta(k, theta)?;
    let base = family.state(theta)?;
    let eig = psd_eigen(base.matrix())?;

    let mut levels: Vec<Vec<DMatrix<C64>>> = vec![Vec::new(); 3];
    for i in 0..k {
        let h = cfg.step(theta[i]);
        for (lvl, scale) in [1.0, 0.5, 0.25].into_iter().enumerate() {
            levels[lvl].push(central_difference(family, &base, theta, i, h * scale)?);
        }
    }
    let richardson = |coarse: &[DMatrix<C64>], fine: &[DMatrix<C64>]| -> Vec<DMatrix<C64>> {
        coarse
            .iter()
            .zip(fine)
            .map(|(c, f)| (f * C64::new(4.0, 0.0) - c).unscale(3.0))
            .collect()
    };
    let qfim_of = |derivs: &[DMatrix<C64>]| -> Result<DMatrix<f64>> {
        let slds = derivs
            .iter()
            .map(|d| sld_in_eigenbasis(&eig, d, cfg.eig_tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(sld_qfim(&eig, &slds))
    };
    let coarse = qfim_of(&richardson(&levels[0], &levels[1]))?;
    let fine = qfim_of(&richardson(&levels[1], &levels[2]))?;
    let change = relative_change(&coarse, &fine);
    if change > cfg.convergence_tol {
        return Err(Error::NonConvergent { change });
    }
    QfiMatrix::new(fine)
}

/// Uhlmann fidelity `Tr √(√ρ σ √ρ)` without clamping.
///
/// Computed block-wise over the joint nonzero pattern as the sum of
/// singular values of `√ρ √σ`, which stays accurate when either state has
/// many eigenvalues near zero.
pub fn uhlmann_fidelity_raw(rho: &DMatrix<C64>, sigma: &DMatrix<C64>) -> Result<f64> {
    if rho.shape() != sigma.shape() {
        return Err(Error::DimensionMismatch {
            expected: rho.nrows(),
            found: sigma.nrows(),
        });
    }
    let mut total = 0.0;
    for comp in coupled_components(rho.nrows(), &[rho, sigma]) {
        let r = submatrix(rho, &comp, &comp);
        let s = submatrix(sigma, &comp, &comp);
        let sqrt_r = psd_eigen(&r)?.map_values(|v| v.sqrt());
        let sqrt_s = psd_eigen(&s)?.map_values(|v| v.sqrt());
        let product = sqrt_r * sqrt_s;
        let svd = product.try_svd(false, false, f64::EPSILON, 0).ok_or(Error::EigenNonConvergence)?;
        total += svd.singular_values.iter().sum::<f64>();
    }
    Ok(total)
}

/// Uhlmann fidelity (root form) clamped to `[0, 1]`.
pub fn uhlmann_fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.truncation() != sigma.truncation() {
        return Err(Error::TruncationMismatch);
    }
    Ok(uhlmann_fidelity_raw(rho.matrix(), sigma.matrix())?.clamp(0.0, 1.0))
}

/// `−4 ∂'_i ∂'_j overlap(θ')` at `θ' = θ` by second differences with one
/// Richardson step and a step-halving check.
fn overlap_information(
    k: usize,
    theta: &[f64],
    cfg: &FdConfig,
    overlap: &dyn Fn(&[f64]) -> Result<f64>,
) -> Result<DMatrix<f64>> {
    check_theta(k, theta)?;
    let center = overlap(theta)?;
    let hessian = |scale: f64| -> Result<DMatrix<f64>> {
        let h: Vec<f64> = theta.iter().map(|&t| cfg.step(t) * scale).collect();
        let mut out = DMatrix::zeros(k, k);
        for i in 0..k {
            let plus = overlap(&shifted(theta, &[(i, h[i])]))?;
            let minus = overlap(&shifted(theta, &[(i, -h[i])]))?;
            out[(i, i)] = (plus - 2.0 * center + minus) / (h[i] * h[i]);
            for j in 0..i {
                let pp = overlap(&shifted(theta, &[(i, h[i]), (j, h[j])]))?;
                let pm = overlap(&shifted(theta, &[(i, h[i]), (j, -h[j])]))?;
                let mp = overlap(&shifted(theta, &[(i, -h[i]), (j, h[j])]))?;
                let mm = overlap(&shifted(theta, &[(i, -h[i]), (j, -h[j])]))?;
                let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out * -4.0)
    };
    let s1 = hessian(1.0)?;
    let s2 = hessian(0.5)?;
    let s4 = hessian(0.25)?;
    let coarse = (&s2 * 4.0 - &s1) / 3.0;
    let fine = (&s4 * 4.0 - &s2) / 3.0;
    let change = relative_change(&coarse, &fine);
    if change > cfg.convergence_tol {
        return Err(Error::NonConvergent { change });
    }
    Ok(fine)
}

/// QFIM as `−4 ∂'_i ∂'_j F(ρ_θ, ρ_θ')` at `θ' = θ`.
pub fn qfi_from_fidelity<S: StateFamily + ?Sized>(family: &S, theta: &[f64], cfg: &FdConfig) -> Result<QfiMatrix> {
    let base = family.state(theta)?;
    let overlap = |t: &[f64]| -> Result<f64> {
        let other = family.state(t)?;
        if other.truncation() != base.truncation() {
            return Err(Error::TruncationMismatch);
        }
        uhlmann_fidelity_raw(base.matrix(), other.matrix())
    };
    QfiMatrix::new(overlap_information(family.parameter_count(), theta, cfg, &overlap)?)
}

/// Bhattacharyya coefficient `Σ √(p_i q_i)` of two aligned probability
/// vectors.
pub fn bhattacharyya_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum())
}

const NORMALIZATION_TOL: f64 = 1e-10;

fn checked_distribution<D: DistributionFamily + ?Sized>(family: &D, theta: &[f64]) -> Result<Vec<f64>> {
    let p = family.distribution(theta)?;
    if p.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidDistribution("negative or undefined probability"));
    }
    if (p.iter().sum::<f64>() - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidDistribution("probabilities do not sum to one"));
    }
    Ok(p)
}

/// Classical Fisher information matrix as `−4 ∂'_i ∂'_j Σ √(p_θ p_θ')`.
pub fn classical_fim<D: DistributionFamily + ?Sized>(family: &D, theta: &[f64], cfg: &FdConfig) -> Result<QfiMatrix> {
    let base = checked_distribution(family, theta)?;
    let overlap = |t: &[f64]| -> Result<f64> {
        let other = checked_distribution(family, t)?;
        bhattacharyya_slices(&base, &other)
    };
    QfiMatrix::new(overlap_information(family.parameter_count(), theta, cfg, &overlap)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{partial_trace, phase_shift_unitary, thermal_state, FockTruncation, StateVector};
    use crate::linalg::max_abs;
    use crate::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag_family() -> FnFamily<impl Fn(&[f64]) -> Result<DensityOperator>> {
        FnFamily::new(1, |t: &[f64]| {
            let m = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(t[0], 0.0), C64::new(1.0 - t[0], 0.0)]));
            DensityOperator::new(FockTruncation::single(1), m, 0.0)
        })
    }

    #[test]
    fn sld_of_classical_diagonal() {
        let rho = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(0.25, 0.0), C64::new(0.75, 0.0)]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(-1.0, 0.0)]));
        let l = sld(&rho, &d, DEFAULT_EIG_TOL).unwrap();
        assert!((l[(0, 0)].re - 4.0).abs() < 1e-14);
        assert!((l[(1, 1)].re + 4.0 / 3.0).abs() < 1e-14);
        let zero = sld(&rho, &DMatrix::zeros(2, 2), DEFAULT_EIG_TOL).unwrap();
        assert_eq!(max_abs(&zero), 0.0);
    }

    fn pure_family() -> FnFamily<impl Fn(&[f64]) -> Result<DensityOperator>> {
        FnFamily::new(1, |t: &[f64]| {
            let a = DVector::from_vec(vec![
                C64::new(t[0].cos(), 0.0),
                C64::new(0.0, t[0].sin() * 0.6),
                C64::new(t[0].sin() * 0.8, 0.0),
            ]);
            Ok(StateVector::new(FockTruncation::single(2), a, 0.0)?.to_density())
        })
    }

    #[test]
    fn sld_reconstructs_pure_state_derivative() {
        let fam = pure_family();
        let theta = 0.4;
        let rho = fam.state(&[theta]).unwrap();
        let h = 1e-5;
        let d = (fam.state(&[theta + h]).unwrap().matrix() - fam.state(&[theta - h]).unwrap().matrix()).unscale(2.0 * h);
        let l = sld(rho.matrix(), &d, DEFAULT_EIG_TOL).unwrap();
        let residual = &d - (rho.matrix() * &l + &l * rho.matrix()).unscale(2.0);
        assert!(residual.norm() < 1e-8);
        // |ψ'|² − |⟨ψ|ψ'⟩|² = 1 for this path.
        let k = qfim_sld(&fam, &[theta], &FdConfig::SLD).unwrap();
        assert!((k.scalar() - 4.0).abs() < 1e-8);
    }

    #[test]
    fn degenerate_support_is_reported() {
        let rho = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]));
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1e-3, 0.0)]));
        assert!(matches!(sld(&rho, &d, DEFAULT_EIG_TOL), Err(Error::DegenerateSupport { .. })));
    }

    #[test]
    fn qfim_examples() {
        let k = qfim_sld(&diag_family(), &[0.25], &FdConfig::SLD).unwrap();
        assert!((k.scalar() - 16.0 / 3.0).abs() < 1e-9);
        let constant = FnFamily::new(1, |_: &[f64]| thermal_state(0.5, 40));
        assert_eq!(qfim_sld(&constant, &[0.3], &FdConfig::SLD).unwrap().scalar(), 0.0);

        let f = qfi_from_fidelity(&diag_family(), &[0.25], &FdConfig::OVERLAP).unwrap();
        assert!((f.scalar() - 16.0 / 3.0).abs() < 1e-5);
        assert!(qfi_from_fidelity(&constant, &[0.3], &FdConfig::OVERLAP).unwrap().scalar().abs() < 1e-6);
    }

    #[test]
    fn fidelity_examples() {
        let th = thermal_state(1.0, 60).unwrap();
        assert!((uhlmann_fidelity(&th, &th).unwrap() - 1.0).abs() < 1e-10);
        let c = 80;
        let a = thermal_state(1.0, c).unwrap();
        let b = thermal_state(2.0, c).unwrap();
        let expect = 1.0 / (6.0f64.sqrt() - 2.0f64.sqrt());
        let f = uhlmann_fidelity(&a, &b).unwrap();
        assert!((f - expect).abs() < 1e-9, "{f} vs {expect}");
        let t = FockTruncation::single(1);
        let zero = crate::fock::number_state(&[0], &t).unwrap().to_density();
        let one = crate::fock::number_state(&[1], &t).unwrap().to_density();
        assert_eq!(uhlmann_fidelity(&zero, &one).unwrap(), 0.0);
    }

    #[test]
    fn classical_fim_examples() {
        let bern = FnDistribution::new(1, |t: &[f64]| Ok(vec![t[0], 1.0 - t[0]]));
        let k = classical_fim(&bern, &[0.25], &FdConfig::OVERLAP).unwrap();
        assert!((k.scalar() - 16.0 / 3.0).abs() < 1e-6);

        // Geometric photon-count distribution with mean γ.
        let geo = FnDistribution::new(1, |t: &[f64]| {
            let g = t[0];
            let mut p: Vec<f64> = (0..400).map(|n| (g / (g + 1.0)).powi(n) / (g + 1.0)).collect();
            let rest = 1.0 - p.iter().sum::<f64>();
            p.push(rest.max(0.0));
            Ok(p)
        });
        let k = classical_fim(&geo, &[1.0], &FdConfig::OVERLAP).unwrap();
        assert!((k.scalar() - 0.5).abs() < 1e-6);

        let flat = FnDistribution::new(1, |_: &[f64]| Ok(vec![0.2, 0.8]));
        assert!(classical_fim(&flat, &[0.5], &FdConfig::OVERLAP).unwrap().scalar().abs() < 1e-9);
        let bad = FnDistribution::new(1, |_: &[f64]| Ok(vec![0.2, 0.7]));
        assert!(matches!(classical_fim(&bad, &[0.5], &FdConfig::OVERLAP), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn psd_order_examples() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        assert!(psd_order(&a, &a, 0.0).unwrap());
        assert!(!psd_order(&a, &b, 1e-9).unwrap());
    }

    fn random_factor(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<C64> {
        DMatrix::from_fn(d, d, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    /// Two-mode family: a phase rotation of mode 0 applied to a θ-weighted
    /// mixture of two random states.
    fn two_mode_family(seed: u64) -> FnFamily<impl Fn(&[f64]) -> Result<DensityOperator>> {
        let trunc = FockTruncation::new(vec![2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DensityOperator::from_factor(trunc.clone(), &random_factor(&mut rng, 9)).unwrap();
        let b = DensityOperator::from_factor(trunc.clone(), &random_factor(&mut rng, 9)).unwrap();
        FnFamily::new(2, move |t: &[f64]| {
            let w = 0.5 + 0.3 * t[1].sin();
            let mix = a.matrix() * C64::new(w, 0.0) + b.matrix() * C64::new(1.0 - w, 0.0);
            let u = phase_shift_unitary(&[t[0], 0.3 * t[0]], &trunc)?;
            u.conjugate(&DensityOperator::new(trunc.clone(), mix, 0.0)?)
        })
    }

    #[test]
    fn sld_and_fidelity_routes_agree_on_mixed_two_parameter_family() {
        let fam = two_mode_family(11);
        let theta = [0.7, 0.2];
        let a = qfim_sld(&fam, &theta, &FdConfig::SLD).unwrap();
        let b = qfi_from_fidelity(&fam, &theta, &FdConfig::OVERLAP).unwrap();
        assert!(relative_change(b.entries(), a.entries()) < 1e-4);
    }

    #[test]
    fn partial_trace_never_increases_information() {
        for seed in 0..5 {
            let fam = two_mode_family(seed);
            let reduced = FnFamily::new(2, |t: &[f64]| partial_trace(&fam.state(t)?, &[1]));
            let theta = [0.4, -0.3];
            let full = qfim_sld(&fam, &theta, &FdConfig::SLD).unwrap();
            let part = qfim_sld(&reduced, &theta, &FdConfig::SLD).unwrap();
            for i in 0..2 {
                assert!(part.get(i, i) <= full.get(i, i) + 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn fidelity_is_symmetric_and_bounded(seed in 0u64..1000) {
            let trunc = FockTruncation::single(3);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = DensityOperator::from_factor(trunc.clone(), &random_factor(&mut rng, 4)).unwrap();
            let b = DensityOperator::from_factor(trunc, &random_factor(&mut rng, 4)).unwrap();
            let f1 = uhlmann_fidelity(&a, &b).unwrap();
            let f2 = uhlmann_fidelity(&b, &a).unwrap();
            prop_assert!((f1 - f2).abs() < 1e-10);
            prop_assert!((0.0..=1.0).contains(&f1));
        }

        #[test]
        fn classical_qfi_of_bernoulli(theta in 0.05f64..0.95) {
            let k = qfim_sld(&diag_family(), &[theta], &FdConfig::SLD).unwrap();
            let expect = 1.0 / (theta * (1.0 - theta));
            prop_assert!((k.scalar() - expect).abs() < 1e-7 * expect);
        }
    }
}
