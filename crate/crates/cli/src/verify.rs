//! Seeded property suites run by `verify`.

use pcsense_core::bounds::{closed_form, pp_pm_split, qcrb, qfim_upper_bound, scenario_bound, ResourceBudget};
use pcsense_core::channels::{
    amplifier_kraus, attenuator_kraus, cascade_by_differences, check_phase_covariance, displacement_kraus,
    joint_loss_cascade, scenario_cascade, CascadeParams, KrausChannel, ScenarioId,
};
use pcsense_core::fock::{
    coherent_state, mean_amplitude, mean_photon_number, partial_trace, poisson_cutoff, DensityOperator,
    FockTruncation, StateVector, AUTO_CUTOFF_TAIL,
};
use pcsense_core::linalg::symmetric_min_eigenvalue;
use pcsense_core::nds::{
    amp_output_fidelity, conditional_output_fidelity, conditional_state, joint_loss_residual_probabilities,
    offdiagonal_trace_norm, PhotonDist, ProbeSpec,
};
use pcsense_core::oracle::{
    amplified_nds_fidelity, apply_cascade, oracle_qfim, oracle_scenario_qfi, weighted_orders, CascadeFamily, Probe,
};
use pcsense_core::qfi::{classical_fim, qfi_from_fidelity, uhlmann_fidelity, FdConfig, FnDistribution};
use pcsense_core::{DMatrix, DVector, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::CliResult;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Covariance,
    Cascade,
    Oracle,
    Bounds,
    /// Amplifier output fidelity against brute force.
    #[value(name = "appendix")]
    Fidelity,
    /// NDS probes and phase-randomised augmentation.
    #[value(name = "theorem1")]
    Augmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Passes when the value is at most the tolerance.
    AtMost,
    /// Passes when the value is at least the threshold (negative controls).
    AtLeast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub direction: Direction,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol,
            direction: Direction::AtMost,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol: threshold,
            direction: Direction::AtLeast,
        }
    }

    pub fn passed(&self) -> bool {
        match self.direction {
            Direction::AtMost => self.value <= self.tol,
            Direction::AtLeast => self.value >= self.tol,
        }
    }
}

/// Runs a suite; `tol` replaces every deviation tolerance (negative
/// controls keep their thresholds).
pub fn run_suite(suite: Suite, tol: Option<f64>, seed: u64) -> CliResult<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = match suite {
        Suite::Covariance => covariance(&mut rng)?,
        Suite::Cascade => cascade()?,
        Suite::Oracle => oracle()?,
        Suite::Bounds => bounds()?,
        Suite::Fidelity => fidelity_checks(&mut rng)?,
        Suite::Augmentation => augmentation_checks(&mut rng)?,
    };
    if let Some(t) = tol {
        for c in checks.iter_mut().filter(|c| c.direction == Direction::AtMost) {
            c.tol = t;
        }
    }
    Ok(checks)
}

pub fn report(suite: Suite, seed: u64, checks: &[Check]) -> Table {
    let mut t = Table::new(["check", "max_deviation", "tolerance", "status"]);
    t.echo("command", "verify");
    t.echo("suite", format!("{suite:?}").to_lowercase());
    t.echo("seed", seed);
    for c in checks {
        let tol = match c.direction {
            Direction::AtMost => format!("{:e}", c.tol),
            Direction::AtLeast => format!(">={:e}", c.tol),
        };
        let status = if c.passed() { "PASS" } else { "FAIL" };
        t.push(vec![c.name.clone(), format!("{:.3e}", c.value), tol, status.into()]);
    }
    t
}

fn random_complex(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_density(trunc: &FockTruncation, rng: &mut ChaCha8Rng) -> CliResult<DensityOperator> {
    let d = trunc.dim();
    let a = DMatrix::from_fn(d, d, |_, _| random_complex(rng));
    Ok(DensityOperator::from_factor(trunc.clone(), &a)?)
}

pub fn random_pure(trunc: &FockTruncation, rng: &mut ChaCha8Rng) -> CliResult<StateVector> {
    let v = DVector::from_fn(trunc.dim(), |_, _| random_complex(rng));
    Ok(StateVector::normalized(trunc.clone(), v)?)
}

fn random_dist(support: &[Vec<usize>], rng: &mut ChaCha8Rng) -> PhotonDist {
    let w: Vec<f64> = support.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    support.iter().cloned().zip(w.into_iter().map(|x| x / total)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

const LOSS_SAMPLES: [(ScenarioId, f64); 3] = [
    (ScenarioId::NpsLoss { nb: 1.0 }, 0.3),
    (ScenarioId::PsLoss { nb: 1.0 }, 0.6),
    (ScenarioId::AddNoise, 0.5),
];

fn covariance(rng: &mut ChaCha8Rng) -> CliResult<Vec<Check>> {
    let trunc = FockTruncation::single(3);
    let samples = (0..10).map(|_| random_density(&trunc, rng)).collect::<CliResult<Vec<_>>>()?;
    let mut channels: Vec<(String, KrausChannel)> = Vec::new();
    for (s, theta) in LOSS_SAMPLES {
        channels.push((s.name().into(), scenario_cascade(s, theta)?.channel(3, 1e-12)?));
    }
    channels.push(("attenuator".into(), attenuator_kraus(0.7, 3)?));
    channels.push(("amplifier".into(), amplifier_kraus(1.5, 3, 1e-12)?));
    let mut out = Vec::new();
    for (name, ch) in &channels {
        out.push(Check::at_most(format!("covariance_{name}"), check_phase_covariance(ch, &samples)?, 1e-9));
    }
    let disp = displacement_kraus(C64::new(0.8, 0.0), 3, 40)?;
    out.push(Check::at_least("displacement_control", check_phase_covariance(&disp, &samples)?, 0.1));
    Ok(out)
}

fn eta_gain(s: ScenarioId) -> impl Fn(&[f64]) -> pcsense_core::Result<(f64, f64)> {
    move |t: &[f64]| scenario_cascade(s, t[0]).map(|c| (c.eta(), c.gain()))
}

fn cascade() -> CliResult<Vec<Check>> {
    let alpha = C64::new(0.7, 0.3);
    let cutoff = poisson_cutoff(alpha.norm_sqr(), AUTO_CUTOFF_TAIL);
    let rho = coherent_state(alpha, cutoff)?.to_density();
    let mut out = Vec::new();
    for (s, theta) in LOSS_SAMPLES {
        let c = scenario_cascade(s, theta)?;
        let orders = weighted_orders(&rho, &[0], c.eta(), c.gain(), 1e-14)?;
        let sigma = apply_cascade(&rho, &[0], c.eta(), c.gain(), &orders)?;
        let n = alpha.norm_sqr();
        let (photons, amplitude) = match s {
            ScenarioId::NpsLoss { nb } => (theta * n + nb, alpha * theta.sqrt()),
            ScenarioId::PsLoss { nb } => (theta * n + (1.0 - theta) * nb, alpha * theta.sqrt()),
            ScenarioId::AddNoise => (n + theta, alpha),
        };
        let name = s.name();
        out.push(Check::at_most(
            format!("moment_photons_{name}"),
            (mean_photon_number(&sigma, 0)? - photons).abs(),
            1e-9,
        ));
        out.push(Check::at_most(
            format!("moment_amplitude_{name}"),
            (mean_amplitude(&sigma, 0)? - amplitude).norm(),
            1e-9,
        ));
        let fd = cascade_by_differences(&[theta], eta_gain(s))?;
        let dev = rel(fd.d_eta()[0], c.d_eta()[0]).max((fd.d_gain()[0] - c.d_gain()[0]).abs());
        out.push(Check::at_most(format!("gradient_fd_{name}"), dev, 1e-6));
        out.push(Check::at_most(
            format!("trace_preservation_{name}"),
            c.channel(12, 1e-12)?.completeness_defect(),
            1e-10,
        ));
        if s != ScenarioId::AddNoise {
            let joint = joint_loss_cascade(s, theta)?;
            let dev = (joint.d_eta()[0] - c.d_eta()[0]).abs() + (joint.d_gain()[0] - c.d_gain()[0]).abs();
            out.push(Check::at_most(format!("joint_marginal_{name}"), dev, 1e-15));
        }
    }
    Ok(out)
}

fn oracle() -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let one = |n: f64| ResourceBudget::new(n, 1.0);

    let ps = ScenarioId::PsLoss { nb: 0.2 };
    let q = oracle_scenario_qfi(&Probe::tmsv(0.3, 1)?, ps, 0.6)?;
    out.push(Check::at_most("tmsv_ps", rel(q, closed_form(ps, 0.6, &one(0.3)?)?.tmsv), 1e-6));

    let q = oracle_scenario_qfi(&Probe::vacuum(1)?, ScenarioId::AddNoise, 0.8)?;
    out.push(Check::at_most("vacuum_add_noise", rel(q, 1.0 / (0.8 * 1.8)), 1e-6));

    let q = oracle_scenario_qfi(&Probe::fock(&[2])?, ScenarioId::PsLoss { nb: 0.0 }, 0.5)?;
    out.push(Check::at_most("fock_pure_loss", rel(q, 8.0), 1e-6));

    let ps = ScenarioId::PsLoss { nb: 0.5 };
    let coherent = Probe::coherent(C64::new(0.5f64.sqrt(), 0.0), 1)?;
    let q = oracle_scenario_qfi(&coherent, ps, 0.5)?;
    out.push(Check::at_most("coherent_ps", rel(q, closed_form(ps, 0.5, &one(0.5)?)?.classical), 1e-6));

    let fam = CascadeFamily::scenario(&Probe::fock(&[1])?, ScenarioId::AddNoise, 0.5)?;
    let sld = oracle_qfim(&fam, &[0.5])?.scalar();
    let fid = qfi_from_fidelity(&fam, &[0.5], &FdConfig::OVERLAP)?.scalar();
    out.push(Check::at_most("sld_vs_fidelity", rel(fid, sld), 1e-5));

    let cohj = Probe::coherent_with_cutoff(C64::new(0.4, 0.0), 1, 10)?;
    let fam = CascadeFamily::joint_loss(&cohj, ScenarioId::PsLoss { nb: 0.3 }, 0.5)?;
    let q = oracle_qfim(&fam, &[0.5, 0.3])?;
    let b = qfim_upper_bound(&joint_loss_cascade(ScenarioId::PsLoss { nb: 0.3 }, 0.5)?, &one(cohj.mean_photons())?)?;
    let min = symmetric_min_eigenvalue(&(b.entries() - q.entries()))?;
    out.push(Check::at_most("joint_dominance", (-min).max(0.0), 1e-6));
    Ok(out)
}

pub const BOUND_GRID_NB: [f64; 3] = [0.05, 1.0, 5.0];
pub const BOUND_GRID_BUDGETS: [(f64, f64); 3] = [(1.0, 1.0), (10.0, 5.0), (5.0, 10.0)];

fn bound_grid() -> Vec<(ScenarioId, f64)> {
    let mut pts = Vec::new();
    for &nb in &BOUND_GRID_NB {
        for i in 1..=10 {
            let k = i as f64 / 11.0;
            pts.push((ScenarioId::NpsLoss { nb }, k));
            pts.push((ScenarioId::PsLoss { nb }, k));
        }
    }
    for i in 1..=10 {
        pts.push((ScenarioId::AddNoise, 0.3 * i as f64));
    }
    pts
}

fn bounds() -> CliResult<Vec<Check>> {
    let mut cf = 0.0f64;
    let mut split = 0.0f64;
    let mut dom = 0.0f64;
    let mut fd = 0.0f64;
    for (s, theta) in bound_grid() {
        let cascade = scenario_cascade(s, theta)?;
        let (kpp, kpm) = pp_pm_split(&cascade)?;
        let fd_cascade: CascadeParams = cascade_by_differences(&[theta], eta_gain(s))?;
        for (n, m) in BOUND_GRID_BUDGETS {
            let budget = ResourceBudget::new(n, m)?;
            let q = closed_form(s, theta, &budget)?;
            let b = scenario_bound(s, theta, &budget)?;
            cf = cf.max(rel(b, q.bound));
            split = split.max(rel(n * kpp.scalar() + m * kpm.scalar(), q.bound));
            dom = dom.max(-q.dominance_slack());
            fd = fd.max(rel(qfim_upper_bound(&fd_cascade, &budget)?.scalar(), q.bound));
        }
    }
    let mut out = vec![
        Check::at_most("closed_form_vs_cascade", cf, 1e-12),
        Check::at_most("split_consistency", split, 1e-12),
        Check::at_most("dominance_violation", dom.max(0.0), 1e-9),
        Check::at_most("bound_from_fd_cascade", fd, 1e-6),
    ];
    let ps = ScenarioId::PsLoss { nb: 1.0 };
    let budget = ResourceBudget::new(10.0, 5.0)?;
    let k = qfim_upper_bound(&joint_loss_cascade(ps, 0.5)?, &budget)?;
    let expect = DMatrix::from_row_slice(2, 2, &[140.0 / 3.0, -10.0, -10.0, 10.0 / 3.0]);
    out.push(Check::at_most("joint_spot_value", (k.entries() - &expect).amax(), 1e-9));
    out.push(Check::at_most(
        "joint_scalar_consistency",
        (k.get(0, 0) - scenario_bound(ps, 0.5, &budget)?).abs(),
        1e-12,
    ));
    let inv = qcrb(&k)?;
    out.push(Check::at_most(
        "qcrb_inverse",
        (k.entries() * inv - DMatrix::identity(2, 2)).amax(),
        1e-10,
    ));
    Ok(out)
}

fn fidelity_checks(rng: &mut ChaCha8Rng) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let vac: PhotonDist = [(vec![0usize], 1.0)].into_iter().collect();
    let anchor = 1.0 / (6f64.sqrt() - 2f64.sqrt());
    out.push(Check::at_most(
        "anchor_formula",
        (amp_output_fidelity(&vac, &vac, 2.0, 3.0, 1)? - anchor).abs(),
        1e-12,
    ));
    out.push(Check::at_most(
        "anchor_bruteforce",
        (amplified_nds_fidelity(&vac, &vac, 2.0, 3.0, 1e-14)? - anchor).abs(),
        1e-8,
    ));

    let single: Vec<Vec<usize>> = (0..4).map(|n| vec![n]).collect();
    let double: Vec<Vec<usize>> = vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]];
    let mut worst = 0.0f64;
    for i in 0..20 {
        let (support, modes, gmax) = if i < 12 { (&single, 1, 1.6) } else { (&double, 2, 1.3) };
        let r = random_dist(support, rng);
        let s = random_dist(support, rng);
        let g = rng.gen_range(1.0..gmax);
        let gp = rng.gen_range(1.0..gmax);
        let formula = amp_output_fidelity(&r, &s, g, gp, modes)?;
        let brute = amplified_nds_fidelity(&r, &s, g, gp, 1e-13)?;
        worst = worst.max((formula - brute).abs());
    }
    out.push(Check::at_most("amplifier_fidelity_random", worst, 1e-8));

    let spec = ProbeSpec::new(random_dist(&[vec![0, 1], vec![1, 1], vec![2, 0], vec![2, 2]], rng))?;
    let (eta, eta_p, g, g_p) = (0.6, 0.45, 1.15, 1.3);
    let mut worst = 0.0f64;
    for l in [vec![0, 0], vec![1, 0], vec![0, 1], vec![1, 1]] {
        let a = conditional_state(&spec, eta, &l)?.to_density();
        let b = conditional_state(&spec, eta_p, &l)?.to_density();
        let modes = [1, 2];
        let mut orders = Vec::new();
        for &m in &modes {
            let x = weighted_orders(&a, &[m], 1.0, g, 1e-14)?[0];
            let y = weighted_orders(&b, &[m], 1.0, g_p, 1e-14)?[0];
            orders.push(x.max(y));
        }
        let fa = apply_cascade(&a, &modes, 1.0, g, &orders)?;
        let fb = apply_cascade(&b, &modes, 1.0, g_p, &orders)?;
        let brute = uhlmann_fidelity(&fa, &fb)?;
        worst = worst.max((brute - conditional_output_fidelity(&spec, &l, eta, eta_p, g, g_p)?).abs());
    }
    out.push(Check::at_most("conditional_fidelity", worst, 1e-8));

    let specs = [
        ProbeSpec::geometric(0.5, 1)?,
        ProbeSpec::number(&[3])?,
        ProbeSpec::geometric(0.2, 2)?,
        ProbeSpec::new(random_dist(&[vec![0, 2], vec![1, 1], vec![3, 0]], rng))?,
        ProbeSpec::single_mode(&[0.1, 0.2, 0.3, 0.4])?,
    ];
    let mut worst = 0.0f64;
    for (i, spec) in specs.iter().enumerate() {
        let eta = 0.2 + 0.15 * i as f64;
        let fam = FnDistribution::new(1, |t: &[f64]| joint_loss_residual_probabilities(spec, t[0]));
        let j = classical_fim(&fam, &[eta], &FdConfig::OVERLAP)?.scalar();
        worst = worst.max(rel(j, spec.mean_photons() / (eta * (1.0 - eta))));
    }
    out.push(Check::at_most("joint_loss_residual_fim", worst, 1e-6));
    Ok(out)
}

fn augmentation_checks(rng: &mut ChaCha8Rng) -> CliResult<Vec<Check>> {
    let trunc = FockTruncation::new(vec![1, 3])?;
    let families = [(ScenarioId::PsLoss { nb: 0.3 }, 0.5), (ScenarioId::AddNoise, 0.6)];
    let mut gain = [0.0f64; 2];
    let mut diag = 0.0f64;
    for _ in 0..10 {
        let probe = Probe::new(random_pure(&trunc, rng)?, vec![1])?;
        let aug = probe.augmented(3)?;
        let reduced = partial_trace(&aug.state().to_density(), aug.signal_modes())?;
        diag = diag.max(offdiagonal_trace_norm(&reduced)?);
        for (k, &(s, theta)) in families.iter().enumerate() {
            let q0 = oracle_scenario_qfi(&probe, s, theta)?;
            let q1 = oracle_scenario_qfi(&aug, s, theta)?;
            gain[k] = gain[k].max(q0 - q1);
        }
    }
    Ok(vec![
        Check::at_most("augmented_qfi_ps", gain[0].max(0.0), 1e-8),
        Check::at_most("augmented_qfi_add_noise", gain[1].max(0.0), 1e-8),
        Check::at_most("augmented_diagonality", diag, 1e-12),
    ])
}
