//! Brute-force state families: probes sent through attenuator-amplifier
//! cascades on truncated Fock spaces, for QFIM comparisons against the
//! closed forms.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use crate::channels::{
    amplifier_kraus_with_order, amplifier_order, apply_to_modes, attenuator_kraus, compose, joint_loss_cascade,
    scenario_cascade, ScenarioId,
};
use crate::fock::{
    coherent_state, geometric_cutoff, number_state, poisson_cutoff, tmsv_state, DensityOperator, FockTruncation,
    StateVector, AUTO_CUTOFF_TAIL,
};
use crate::linalg::binomial;
use crate::nds::{augment_probe, entangled_state, NdsProbe, PhotonDist};
use crate::qfi::{qfim_sld, uhlmann_fidelity, FdConfig, QfiMatrix, StateFamily};
use crate::{Error, Result, C64};

/// Input-weighted amplifier truncation used by the oracle families.
pub const ORACLE_AMPLIFIER_TAIL: f64 = 1e-13;

/// Largest output dimension a [`CascadeFamily`] will build; output states
/// are dense, so this caps memory at a few hundred megabytes per state.
pub const MAX_ORACLE_DIM: usize = 4096;

/// A pure probe with its signal modes; the other modes are idle ancillas.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    state: StateVector,
    signal_modes: Vec<usize>,
}

impl Probe {
    pub fn new(state: StateVector, signal_modes: Vec<usize>) -> Result<Self> {
        let n = state.truncation().mode_count();
        if signal_modes.is_empty() || signal_modes.iter().any(|&m| m >= n) {
            return Err(Error::InvalidArgument("signal modes out of range"));
        }
        for (i, m) in signal_modes.iter().enumerate() {
            if signal_modes[..i].contains(m) {
                return Err(Error::InvalidArgument("signal modes must be distinct"));
            }
        }
        Ok(Self { state, signal_modes })
    }

    /// `modes` copies of the two-mode squeezed vacuum of per-mode
    /// brightness `ns`, cutoff chosen from the thermal tail.
    pub fn tmsv(ns: f64, modes: usize) -> Result<Self> {
        Self::tmsv_with_cutoff(ns, modes, geometric_cutoff(ns, AUTO_CUTOFF_TAIL))
    }

    pub fn tmsv_with_cutoff(ns: f64, modes: usize, cutoff: usize) -> Result<Self> {
        let one = tmsv_state(ns, cutoff)?;
        Ok(Self {
            state: power(&one, modes)?,
            signal_modes: (0..modes).map(|m| 2 * m + 1).collect(),
        })
    }

    /// `|α⟩^{⊗modes}` with the cutoff chosen from the Poisson tail.
    pub fn coherent(alpha: C64, modes: usize) -> Result<Self> {
        let cutoff = poisson_cutoff(alpha.norm_sqr(), AUTO_CUTOFF_TAIL);
        Self::coherent_with_cutoff(alpha, modes, cutoff)
    }

    pub fn coherent_with_cutoff(alpha: C64, modes: usize, cutoff: usize) -> Result<Self> {
        let one = coherent_state(alpha, cutoff)?;
        Ok(Self {
            state: power(&one, modes)?,
            signal_modes: (0..modes).collect(),
        })
    }

    pub fn vacuum(modes: usize) -> Result<Self> {
        Self::fock(&vec![0; modes])
    }

    /// The number state `|n_1, ..., n_M⟩`.
    pub fn fock(occupations: &[usize]) -> Result<Self> {
        if occupations.is_empty() {
            return Err(Error::InvalidArgument("at least one mode"));
        }
        let trunc = FockTruncation::new(occupations.to_vec())?;
        Ok(Self {
            state: number_state(occupations, &trunc)?,
            signal_modes: (0..occupations.len()).collect(),
        })
    }

    pub fn nds(probe: &NdsProbe) -> Self {
        Self {
            state: probe.state().clone(),
            signal_modes: probe.signal_modes(),
        }
    }

    /// The phase-randomised version with registers of cutoff `n0`
    /// prepended; signal modes shift accordingly.
    pub fn augmented(&self, n0: usize) -> Result<Self> {
        let state = augment_probe(&self.state, &self.signal_modes, n0)?;
        let shift = self.signal_modes.len();
        Ok(Self {
            state,
            signal_modes: self.signal_modes.iter().map(|m| m + shift).collect(),
        })
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn signal_modes(&self) -> &[usize] {
        &self.signal_modes
    }

    /// Mean total photon number over the signal modes.
    pub fn mean_photons(&self) -> f64 {
        let trunc = self.state.truncation();
        self.state
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let n: usize = self.signal_modes.iter().map(|&m| trunc.occupation(i, m)).sum();
                a.norm_sqr() * n as f64
            })
            .sum()
    }
}

fn power(one: &StateVector, modes: usize) -> Result<StateVector> {
    if modes == 0 {
        return Err(Error::InvalidArgument("at least one mode"));
    }
    let mut out = one.clone();
    for _ in 1..modes {
        out = out.tensor(one);
    }
    Ok(out)
}

/// Photon-number distribution of `mode` after a pure-loss channel of
/// transmittance `eta`.
fn attenuated_marginal(rho: &DensityOperator, mode: usize, eta: f64) -> Vec<f64> {
    let trunc = rho.truncation();
    let c = trunc.cutoff(mode);
    let mut p = vec![0.0; c + 1];
    for i in 0..rho.dim() {
        p[trunc.occupation(i, mode)] += rho.matrix()[(i, i)].re;
    }
    let mut out = vec![0.0; c + 1];
    for (n, &pn) in p.iter().enumerate() {
        for (j, o) in out.iter_mut().enumerate().take(n + 1) {
            *o += pn * binomial(n, j) * eta.powi(j as i32) * (1.0 - eta).powi((n - j) as i32);
        }
    }
    out
}

/// Amplifier order for each listed mode, weighted by the mode's photon
/// statistics after attenuation.
pub fn weighted_orders(rho: &DensityOperator, modes: &[usize], eta: f64, gain: f64, tail_tol: f64) -> Result<Vec<usize>> {
    modes
        .iter()
        .map(|&m| amplifier_order(gain, &attenuated_marginal(rho, m, eta), tail_tol))
        .collect()
}

/// Applies the cascade `A_G ∘ L_η` to each listed mode, with a fixed
/// amplifier order per mode.
pub fn apply_cascade(rho: &DensityOperator, modes: &[usize], eta: f64, gain: f64, orders: &[usize]) -> Result<DensityOperator> {
    if orders.len() != modes.len() {
        return Err(Error::DimensionMismatch {
            expected: modes.len(),
            found: orders.len(),
        });
    }
    let mut out = rho.clone();
    for (&m, &a_max) in modes.iter().zip(orders) {
        let c = out.truncation().cutoff(m);
        let channel = compose(&attenuator_kraus(eta, c)?, &amplifier_kraus_with_order(gain, c, a_max)?)?;
        out = apply_to_modes(&channel, &out, &[m])?;
    }
    Ok(out)
}

type CascadeMap = Box<dyn Fn(&[f64]) -> Result<(f64, f64)>>;

/// `θ ↦ (A_{G(θ)} ∘ L_{η(θ)})^{⊗M} ⊗ id` applied to a probe. The amplifier
/// order is fixed at construction, so every finite-difference stencil point
/// lives on the same truncation.
pub struct CascadeFamily {
    rho: DensityOperator,
    signal_modes: Vec<usize>,
    parameter_count: usize,
    map: CascadeMap,
    orders: Vec<usize>,
}

impl CascadeFamily {
    /// `map` returns `(η, G)` at `θ`; amplifier orders are set at `base`.
    pub fn new(probe: &Probe, parameter_count: usize, map: CascadeMap, base: &[f64], tail_tol: f64) -> Result<Self> {
        if base.len() != parameter_count {
            return Err(Error::DimensionMismatch {
                expected: parameter_count,
                found: base.len(),
            });
        }
        let rho = probe.state.to_density();
        let (eta, gain) = map(base)?;
        let orders = weighted_orders(&rho, &probe.signal_modes, eta, gain, tail_tol)?;
        let trunc = rho.truncation();
        let mut dim = trunc.dim();
        for (&m, &a) in probe.signal_modes.iter().zip(&orders) {
            let c = trunc.cutoff(m);
            dim = dim / (c + 1) * (c + a + 1);
        }
        if dim > MAX_ORACLE_DIM {
            return Err(Error::InvalidArgument("oracle output dimension too large; lower the cutoff or brightness"));
        }
        Ok(Self {
            rho,
            signal_modes: probe.signal_modes.clone(),
            parameter_count,
            map,
            orders,
        })
    }

    /// One-parameter family of a scenario in its scalar parameter.
    pub fn scenario(probe: &Probe, scenario: ScenarioId, theta: f64) -> Result<Self> {
        let map: CascadeMap = Box::new(move |t: &[f64]| {
            let c = scenario_cascade(scenario, t[0])?;
            Ok((c.eta(), c.gain()))
        });
        Self::new(probe, 1, map, &[theta], ORACLE_AMPLIFIER_TAIL)
    }

    /// Two-parameter thermal-loss family in `θ = (κ, N_B)`.
    pub fn joint_loss(probe: &Probe, scenario: ScenarioId, kappa: f64) -> Result<Self> {
        let nb = match scenario {
            ScenarioId::NpsLoss { nb } | ScenarioId::PsLoss { nb } => nb,
            ScenarioId::AddNoise => return Err(Error::InvalidArgument("additive noise has no loss parameter")),
        };
        let map: CascadeMap = Box::new(move |t: &[f64]| {
            let s = match scenario {
                ScenarioId::NpsLoss { .. } => ScenarioId::NpsLoss { nb: t[1] },
                _ => ScenarioId::PsLoss { nb: t[1] },
            };
            let c = joint_loss_cascade(s, t[0])?;
            Ok((c.eta(), c.gain()))
        });
        Self::new(probe, 2, map, &[kappa, nb], ORACLE_AMPLIFIER_TAIL)
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }
}

impl StateFamily for CascadeFamily {
    fn parameter_count(&self) -> usize {
        self.parameter_count
    }

    fn state(&self, theta: &[f64]) -> Result<DensityOperator> {
        let (eta, gain) = (self.map)(theta)?;
        apply_cascade(&self.rho, &self.signal_modes, eta, gain, &self.orders)
    }
}

/// SLD-route QFIM of a cascade family at `θ`.
pub fn oracle_qfim(family: &CascadeFamily, theta: &[f64]) -> Result<QfiMatrix> {
    qfim_sld(family, theta, &FdConfig::SLD)
}

/// Oracle QFI of `probe` through a scenario channel in its scalar parameter.
pub fn oracle_scenario_qfi(probe: &Probe, scenario: ScenarioId, theta: f64) -> Result<f64> {
    let family = CascadeFamily::scenario(probe, scenario, theta)?;
    Ok(oracle_qfim(&family, &[theta])?.scalar())
}

/// Uhlmann fidelity between `A_G^{⊗M}` and `A_{G′}^{⊗M}` applied to the NDS
/// states `Σ_n √r_n |χ_n⟩|n⟩` and `Σ_n √s_n |χ_n⟩|n⟩` that share one
/// ancilla basis, computed on Kraus-simulated outputs.
pub fn amplified_nds_fidelity(r: &PhotonDist, s: &PhotonDist, g: f64, g_prime: f64, tail_tol: f64) -> Result<f64> {
    let mut labels: Vec<&Vec<usize>> = r.keys().chain(s.keys()).collect();
    labels.sort();
    labels.dedup();
    let modes = labels.first().map(|n| n.len()).ok_or(Error::InvalidDistribution("empty distribution"))?;
    let mut cutoffs = vec![0; modes];
    for n in &labels {
        if n.len() != modes {
            return Err(Error::InvalidDistribution("occupation vectors differ in length"));
        }
        for (c, &x) in cutoffs.iter_mut().zip(n.iter()) {
            *c = (*c).max(x);
        }
    }
    let build = |d: &PhotonDist| -> Result<DensityOperator> {
        let terms: Vec<_> = d
            .iter()
            .map(|(n, &w)| (labels.binary_search(&n).expect("label present"), n.clone(), w))
            .collect();
        Ok(entangled_state(&terms, labels.len(), &cutoffs)?.to_density())
    };
    let rho = build(r)?;
    let sigma = build(s)?;
    let signal: Vec<usize> = (1..=modes).collect();
    let mut orders = Vec::with_capacity(modes);
    for &m in &signal {
        let a = weighted_orders(&rho, &[m], 1.0, g, tail_tol)?[0];
        let b = weighted_orders(&sigma, &[m], 1.0, g_prime, tail_tol)?[0];
        orders.push(a.max(b));
    }
    let out_r = apply_cascade(&rho, &signal, 1.0, g, &orders)?;
    let out_s = apply_cascade(&sigma, &signal, 1.0, g_prime, &orders)?;
    uhlmann_fidelity(&out_r, &out_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{closed_form, qfim_upper_bound, ResourceBudget};
    use crate::nds::{amp_output_fidelity, conditional_output_fidelity, conditional_state, nds_probe, ProbeSpec};
    use crate::qfi::psd_order;
    use alloc::collections::BTreeMap;

    #[test]
    fn probe_constructors() {
        let p = Probe::tmsv(0.3, 1).unwrap();
        assert!((p.mean_photons() - 0.3).abs() < 1e-10);
        assert_eq!(p.signal_modes(), &[1]);
        let p = Probe::tmsv_with_cutoff(0.1, 2, 12).unwrap();
        assert_eq!(p.signal_modes(), &[1, 3]);
        assert!((p.mean_photons() - 0.2).abs() < 1e-10);
        let p = Probe::coherent(C64::new(1.0, 0.5), 1).unwrap();
        assert!((p.mean_photons() - 1.25).abs() < 1e-10);
        assert_eq!(Probe::fock(&[2, 1]).unwrap().mean_photons(), 3.0);
        assert_eq!(Probe::vacuum(2).unwrap().mean_photons(), 0.0);
        assert!(Probe::new(Probe::vacuum(1).unwrap().state().clone(), vec![1]).is_err());
        let aug = Probe::fock(&[2]).unwrap().augmented(2).unwrap();
        assert_eq!(aug.signal_modes(), &[1]);
        assert!((aug.mean_photons() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn oversized_family_rejected() {
        let probe = Probe::tmsv(1.0, 1).unwrap();
        let r = CascadeFamily::scenario(&probe, ScenarioId::NpsLoss { nb: 5.0 }, 0.9);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn vacuum_through_additive_noise() {
        let gamma = 0.8;
        let q = oracle_scenario_qfi(&Probe::vacuum(1).unwrap(), ScenarioId::AddNoise, gamma).unwrap();
        let expect = 1.0 / (gamma * (gamma + 1.0));
        assert!((q - expect).abs() < 1e-6 * expect, "{q} vs {expect}");
    }

    #[test]
    fn number_state_through_pure_loss() {
        let kappa = 0.4;
        let q = oracle_scenario_qfi(&Probe::fock(&[3]).unwrap(), ScenarioId::PsLoss { nb: 0.0 }, kappa).unwrap();
        let expect = 3.0 / (kappa * (1.0 - kappa));
        assert!((q - expect).abs() < 1e-6 * expect, "{q} vs {expect}");
    }

    #[test]
    fn tmsv_matches_closed_form_small() {
        let (ns, kappa, nb) = (0.2, 0.5, 0.3);
        let scenario = ScenarioId::PsLoss { nb };
        let q = oracle_scenario_qfi(&Probe::tmsv(ns, 1).unwrap(), scenario, kappa).unwrap();
        let expect = closed_form(scenario, kappa, &ResourceBudget::new(ns, 1.0).unwrap()).unwrap().tmsv;
        assert!((q - expect).abs() < 1e-6 * expect, "{q} vs {expect}");
    }

    #[test]
    fn joint_family_dominated_by_bound() {
        let scenario = ScenarioId::PsLoss { nb: 0.3 };
        let kappa = 0.5;
        let probe = Probe::coherent_with_cutoff(C64::new(0.4, 0.0), 1, 10).unwrap();
        let family = CascadeFamily::joint_loss(&probe, scenario, kappa).unwrap();
        let q = oracle_qfim(&family, &[kappa, 0.3]).unwrap();
        let cascade = joint_loss_cascade(scenario, kappa).unwrap();
        let bound = qfim_upper_bound(&cascade, &ResourceBudget::new(probe.mean_photons(), 1.0).unwrap()).unwrap();
        assert!(psd_order(bound.entries(), q.entries(), 1e-6).unwrap());
    }

    #[test]
    fn thermal_anchor() {
        let mut vac = BTreeMap::new();
        vac.insert(vec![0usize], 1.0);
        let f = amplified_nds_fidelity(&vac, &vac, 2.0, 3.0, 1e-14).unwrap();
        let expect = 1.0 / (6.0f64.sqrt() - 2.0f64.sqrt());
        assert!((f - expect).abs() < 1e-8, "{f} vs {expect}");
    }

    #[test]
    fn geometric_fidelity_matches_formula() {
        let spec = ProbeSpec::geometric(0.3, 1).unwrap();
        let brute = amplified_nds_fidelity(spec.dist(), spec.dist(), 1.2, 1.5, 1e-14).unwrap();
        let formula = amp_output_fidelity(spec.dist(), spec.dist(), 1.2, 1.5, 1).unwrap();
        assert!((brute - formula).abs() < 1e-8, "{brute} vs {formula}");
    }

    #[test]
    fn conditional_states_match_formula() {
        let spec = ProbeSpec::new(
            [(vec![0, 1], 0.3), (vec![1, 1], 0.2), (vec![2, 0], 0.4), (vec![2, 2], 0.1)]
                .into_iter()
                .collect(),
        )
        .unwrap();
        let (eta, eta_p, g, g_p) = (0.6, 0.45, 1.15, 1.3);
        for l in [vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]] {
            let a = conditional_state(&spec, eta, &l).unwrap().to_density();
            let b = conditional_state(&spec, eta_p, &l).unwrap().to_density();
            let modes = [1, 2];
            let mut orders = Vec::new();
            for &m in &modes {
                let x = weighted_orders(&a, &[m], 1.0, g, 1e-14).unwrap()[0];
                let y = weighted_orders(&b, &[m], 1.0, g_p, 1e-14).unwrap()[0];
                orders.push(x.max(y));
            }
            let a = apply_cascade(&a, &modes, 1.0, g, &orders).unwrap();
            let b = apply_cascade(&b, &modes, 1.0, g_p, &orders).unwrap();
            let brute = uhlmann_fidelity(&a, &b).unwrap();
            let formula = conditional_output_fidelity(&spec, &l, eta, eta_p, g, g_p).unwrap();
            assert!((brute - formula).abs() < 1e-8, "{l:?}: {brute} vs {formula}");
        }
    }

    #[test]
    fn nds_probe_family_runs() {
        let spec = ProbeSpec::new([(vec![0], 0.5), (vec![2], 0.5)].into_iter().collect()).unwrap();
        let probe = Probe::nds(&nds_probe(&spec).unwrap());
        let q = oracle_scenario_qfi(&probe, ScenarioId::PsLoss { nb: 0.0 }, 0.5).unwrap();
        assert!((q - 1.0 / 0.25).abs() < 1e-6 * 4.0);
    }
}
