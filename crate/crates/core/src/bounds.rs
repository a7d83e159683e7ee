//! The universal QFIM upper bound for cascade families, its per-photon and
//! per-mode split, the quantum Cramér-Rao bound, and closed-form scenario
//! QFIs for thermal-loss and additive-noise sensing.

use nalgebra::DMatrix;

use crate::channels::{scenario_cascade, CascadeParams, ScenarioId};
use crate::linalg::symmetric_min_eigenvalue;
use crate::qfi::QfiMatrix;
use crate::{Error, Result};

/// Smallest eigenvalue a QFIM must exceed to be inverted.
pub const INVERTIBILITY_TOL: f64 = 1e-12;

/// Total signal photon number `N` spread over `M` modes. `M` is real so
/// that closed forms can be swept continuously.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResourceBudget {
    n: f64,
    m: f64,
}

impl ResourceBudget {
    pub fn new(n: f64, m: f64) -> Result<Self> {
        if !(n >= 0.0) || !n.is_finite() {
            return Err(Error::Domain { what: "photon number", value: n });
        }
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Domain { what: "mode count", value: m });
        }
        Ok(Self { n, m })
    }

    /// Budget with per-mode brightness `ns` over `m` modes.
    pub fn per_mode(ns: f64, m: f64) -> Result<Self> {
        Self::new(ns * m, m)
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    /// Per-mode brightness `N/M`.
    pub fn ns(&self) -> f64 {
        self.n / self.m
    }
}

/// The two rank-one building blocks `∂η ∂ηᵀ/(η(1−η))` and
/// `∂G ∂Gᵀ/(G(G−1))`, with the singular cases resolved.
fn rank_one_terms(c: &CascadeParams) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = c.parameter_count();
    let de = DMatrix::from_column_slice(k, 1, c.d_eta());
    let dg = DMatrix::from_column_slice(k, 1, c.d_gain());
    let eta_term = if c.d_eta().iter().all(|&d| d == 0.0) {
        DMatrix::zeros(k, k)
    } else if c.eta() >= 1.0 {
        return Err(Error::SingularBound("transmittance varies at η = 1"));
    } else {
        &de * de.transpose() / (c.eta() * (1.0 - c.eta()))
    };
    let gain_term = if c.d_gain().iter().all(|&d| d == 0.0) {
        DMatrix::zeros(k, k)
    } else if c.gain() <= 1.0 {
        return Err(Error::SingularBound("gain varies at G = 1"));
    } else {
        &dg * dg.transpose() / (c.gain() * (c.gain() - 1.0))
    };
    Ok((eta_term, gain_term))
}

/// `K̃_ij = N ∂_iη ∂_jη/(η(1−η)) + (ηN + M) ∂_iG ∂_jG/(G(G−1))`.
pub fn qfim_upper_bound(cascade: &CascadeParams, budget: &ResourceBudget) -> Result<QfiMatrix> {
    let (eta_term, gain_term) = rank_one_terms(cascade)?;
    let bound = eta_term * budget.n + gain_term * (cascade.eta() * budget.n + budget.m);
    QfiMatrix::new(bound)
}

/// The per-photon and per-mode matrices with `K̃ = N·K_pp + M·K_pm`.
pub fn pp_pm_split(cascade: &CascadeParams) -> Result<(QfiMatrix, QfiMatrix)> {
    let (eta_term, gain_term) = rank_one_terms(cascade)?;
    let pp = eta_term + &gain_term * cascade.eta();
    Ok((QfiMatrix::new(pp)?, QfiMatrix::new(gain_term)?))
}

/// Quantum Cramér-Rao bound `K⁻¹`.
pub fn qcrb(k: &QfiMatrix) -> Result<DMatrix<f64>> {
    let min_eigenvalue = symmetric_min_eigenvalue(k.entries())?;
    if min_eigenvalue <= INVERTIBILITY_TOL {
        return Err(Error::SingularInformation { min_eigenvalue });
    }
    let inv = k
        .entries()
        .clone()
        .try_inverse()
        .ok_or(Error::SingularInformation { min_eigenvalue })?;
    Ok((&inv + inv.transpose()) * 0.5)
}

/// Bound, TMSV and classical-probe QFIs of one scenario at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioQfis {
    pub bound: f64,
    pub tmsv: f64,
    pub classical: f64,
    /// True when `classical` is an upper bound on classical probes rather
    /// than an achieved value.
    pub classical_is_upper_bound: bool,
}

impl ScenarioQfis {
    pub const BOUND_LABEL: &'static str = "bound";
    pub const TMSV_LABEL: &'static str = "tmsv";

    pub fn classical_label(&self) -> &'static str {
        if self.classical_is_upper_bound {
            "classical_ub"
        } else {
            "classical"
        }
    }

    /// `min(bound − tmsv, bound − classical)`; nonnegative when the bound
    /// dominates both.
    pub fn dominance_slack(&self) -> f64 {
        (self.bound - self.tmsv).min(self.bound - self.classical)
    }

    /// Every value divided by `m`.
    pub fn per_mode(&self, m: f64) -> Self {
        Self {
            bound: self.bound / m,
            tmsv: self.tmsv / m,
            classical: self.classical / m,
            ..*self
        }
    }
}

fn check_loss(kappa: f64, nb: f64) -> Result<()> {
    ScenarioId::PsLoss { nb }.check(kappa)
}

/// No-passive-signature thermal loss.
pub fn closed_form_nps(kappa: f64, nb: f64, budget: &ResourceBudget) -> Result<ScenarioQfis> {
    check_loss(kappa, nb)?;
    let (n, ns) = (budget.n(), budget.ns());
    let a = nb + 1.0 - kappa;
    let bound = n / (kappa * a);
    let tmsv = n * (nb + 1.0 + ns * a) / (kappa * a * (nb + 1.0 + ns * (2.0 * nb + 1.0 - kappa)));
    let classical = n / (kappa * (2.0 * nb + 1.0));
    Ok(ScenarioQfis {
        bound,
        tmsv,
        classical,
        classical_is_upper_bound: true,
    })
}

/// Passive-signature thermal loss; the classical entry is the coherent-state QFI.
pub fn closed_form_ps(kappa: f64, nb: f64, budget: &ResourceBudget) -> Result<ScenarioQfis> {
    check_loss(kappa, nb)?;
    let (n, m, ns) = (budget.n(), budget.m(), budget.ns());
    let g = (1.0 - kappa) * nb + 1.0;
    let bound = n * ((1.0 + kappa * kappa) * nb + 1.0) / (kappa * (1.0 - kappa) * g * g) + m * nb / ((1.0 - kappa) * g);
    let d = (1.0 - kappa) * (ns + nb + 2.0 * ns * nb) + 1.0;
    let tmsv = n * ((1.0 - kappa) * ns + 2.0 * kappa * nb + 1.0) / (kappa * (1.0 - kappa) * d) + m * nb / ((1.0 - kappa) * d);
    let classical = n / (kappa * (2.0 * (1.0 - kappa) * nb + 1.0)) + m * nb / ((1.0 - kappa) * g);
    Ok(ScenarioQfis {
        bound,
        tmsv,
        classical,
        classical_is_upper_bound: false,
    })
}

/// Additive Gaussian noise of level `γ`; the classical entry is the
/// photon-counting QFI of a vacuum probe.
pub fn closed_form_addnoise(gamma: f64, budget: &ResourceBudget) -> Result<ScenarioQfis> {
    ScenarioId::AddNoise.check(gamma)?;
    let (n, m, ns) = (budget.n(), budget.m(), budget.ns());
    Ok(ScenarioQfis {
        bound: 2.0 * n / (gamma * (gamma + 1.0) * (gamma + 1.0)) + m / (gamma * (gamma + 1.0)),
        tmsv: (2.0 * n + m) / (gamma * ((2.0 * ns + 1.0) * gamma + 1.0)),
        classical: m / (gamma * (gamma + 1.0)),
        classical_is_upper_bound: false,
    })
}

/// Closed forms of any scenario in its scalar parameter.
pub fn closed_form(scenario: ScenarioId, theta: f64, budget: &ResourceBudget) -> Result<ScenarioQfis> {
    match scenario {
        ScenarioId::NpsLoss { nb } => closed_form_nps(theta, nb, budget),
        ScenarioId::PsLoss { nb } => closed_form_ps(theta, nb, budget),
        ScenarioId::AddNoise => closed_form_addnoise(theta, budget),
    }
}

/// Scalar bound of a scenario, evaluated through its cascade.
pub fn scenario_bound(scenario: ScenarioId, theta: f64, budget: &ResourceBudget) -> Result<f64> {
    Ok(qfim_upper_bound(&scenario_cascade(scenario, theta)?, budget)?.scalar())
}
