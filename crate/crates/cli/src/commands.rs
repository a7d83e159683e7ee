//! The `curve`, `figures` and `oracle-qfi` subcommands.

use std::path::{Path, PathBuf};

use pcsense_core::bounds::{closed_form, qfim_upper_bound, ResourceBudget, ScenarioQfis};
use pcsense_core::channels::{joint_loss_cascade, scenario_cascade, ScenarioId};
use pcsense_core::oracle::{oracle_qfim, CascadeFamily, Probe};
use pcsense_core::C64;

use crate::config::{CliError, CliResult, Grid, RunConfig};
use crate::table::{fmt_num, Table};

/// Allowed negative dominance slack on emitted rows.
pub const DOMINANCE_SLACK: f64 = 1e-9;

fn echo_scenario(t: &mut Table, scenario: ScenarioId) {
    t.echo("scenario", scenario.name());
    t.echo("parameter", scenario.parameter_name());
    if let Some(nb) = scenario.background() {
        t.echo("nb", fmt_num(nb));
    }
}

/// Per-mode bound, TMSV and classical-probe QFI over a parameter list.
/// Rows that break dominance abort with a verification error.
pub fn curve_table(scenario: ScenarioId, thetas: &[f64], budget: &ResourceBudget) -> CliResult<Table> {
    let mut t = Table::new(["theta", "bound_per_mode", "tmsv_per_mode", "classical_per_mode"]);
    echo_scenario(&mut t, scenario);
    t.echo("n", fmt_num(budget.n()));
    t.echo("m", fmt_num(budget.m()));
    t.echo("ns", fmt_num(budget.ns()));
    let mut classical_kind = "achieved";
    for &theta in thetas {
        let q = closed_form(scenario, theta, budget)?;
        if q.classical_is_upper_bound {
            classical_kind = "upper_bound";
        }
        check_dominance(theta, &q)?;
        let p = q.per_mode(budget.m());
        t.push(vec![fmt_num(theta), fmt_num(p.bound), fmt_num(p.tmsv), fmt_num(p.classical)]);
    }
    t.echo("classical", classical_kind);
    Ok(t)
}

fn check_dominance(theta: f64, q: &ScenarioQfis) -> CliResult<()> {
    let slack = q.dominance_slack();
    if slack < -DOMINANCE_SLACK {
        return Err(CliError::Verification(format!(
            "dominance broken at theta={theta}: slack {slack:e}"
        )));
    }
    Ok(())
}

pub fn cmd_curve(cfg: &RunConfig) -> CliResult<Table> {
    let mut t = curve_table(cfg.scenario, &cfg.thetas, &cfg.budget)?;
    t.echo("command", cfg.subcommand);
    Ok(t)
}

/// One panel of a figure preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub name: String,
    pub scenario: ScenarioId,
    pub budget: ResourceBudget,
}

pub const DEFAULT_FIGURE_GRID: Grid = Grid {
    start: 0.01,
    stop: 0.99,
    count: 99,
};

/// Panels of figures 3 to 5, all passive-signature loss in `κ`.
pub fn figure_panels(fig: u8) -> CliResult<Vec<Panel>> {
    let panel = |name: String, nb: f64, n: f64, m: f64| -> CliResult<Panel> {
        Ok(Panel {
            name,
            scenario: ScenarioId::PsLoss { nb },
            budget: ResourceBudget::new(n, m)?,
        })
    };
    match fig {
        3 => [0.05, 1.0, 5.0]
            .iter()
            .map(|&nb| panel(format!("fig3_nb{}", fmt_num(nb)), nb, 10.0, 5.0))
            .collect(),
        4 => [2.0, 5.0, 10.0]
            .iter()
            .map(|&n| panel(format!("fig4_n{}", fmt_num(n)), 1.0, n, 5.0))
            .collect(),
        5 => [1.0, 5.0, 10.0]
            .iter()
            .map(|&m| panel(format!("fig5_m{}", fmt_num(m)), 0.5, 5.0, m))
            .collect(),
        _ => Err(CliError::Usage(format!("unknown figure {fig}; expected 3, 4 or 5"))),
    }
}

/// Writes one CSV per panel into `dir` and returns the written paths.
pub fn cmd_figures(fig: u8, grid: Grid, dir: &Path) -> CliResult<Vec<PathBuf>> {
    let panels = figure_panels(fig)?;
    let thetas = grid.points();
    for &k in &thetas {
        ScenarioId::PsLoss { nb: 0.0 }
            .check(k)
            .map_err(|_| CliError::Usage(format!("kappa = {k} is outside (0, 1)")))?;
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for p in panels {
        let mut t = curve_table(p.scenario, &thetas, &p.budget)?;
        t.echo("command", "figures");
        t.echo("fig", fig);
        t.echo("panel", &p.name);
        t.echo("grid", grid);
        let path = dir.join(format!("{}.csv", p.name));
        t.write_to(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}

/// Probe choices of `oracle-qfi`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeKind {
    Tmsv,
    Coherent,
    Vacuum,
    Fock(Vec<usize>),
}

impl std::str::FromStr for ProbeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "tmsv" => Ok(Self::Tmsv),
            "coherent" => Ok(Self::Coherent),
            "vacuum" => Ok(Self::Vacuum),
            _ => {
                let list = s
                    .strip_prefix("fock:")
                    .ok_or_else(|| format!("unknown probe `{s}`; expected tmsv, coherent, vacuum or fock:<n-list>"))?;
                let n: Result<Vec<usize>, _> = list.split(',').map(|x| x.trim().parse::<usize>()).collect();
                let n = n.map_err(|e| format!("fock occupations `{list}`: {e}"))?;
                Ok(Self::Fock(n))
            }
        }
    }
}

impl ProbeKind {
    fn label(&self) -> String {
        match self {
            Self::Tmsv => "tmsv".into(),
            Self::Coherent => "coherent".into(),
            Self::Vacuum => "vacuum".into(),
            Self::Fock(n) => {
                let s: Vec<String> = n.iter().map(|x| x.to_string()).collect();
                format!("fock:{}", s.join(","))
            }
        }
    }
}

/// Largest mode count accepted for oracle runs.
pub const MAX_ORACLE_MODES: usize = 2;

pub struct OracleRequest {
    pub probe: ProbeKind,
    pub scenario: ScenarioId,
    pub theta: f64,
    pub modes: usize,
    pub ns: f64,
    pub cutoff: Option<usize>,
    pub joint: bool,
}

fn build_probe(req: &OracleRequest) -> CliResult<Probe> {
    let m = req.modes;
    let probe = match &req.probe {
        ProbeKind::Tmsv => match req.cutoff {
            Some(c) => Probe::tmsv_with_cutoff(req.ns, m, c)?,
            None => Probe::tmsv(req.ns, m)?,
        },
        ProbeKind::Coherent => {
            let alpha = C64::new(req.ns.sqrt(), 0.0);
            match req.cutoff {
                Some(c) => Probe::coherent_with_cutoff(alpha, m, c)?,
                None => Probe::coherent(alpha, m)?,
            }
        }
        ProbeKind::Vacuum => Probe::vacuum(m)?,
        ProbeKind::Fock(n) => {
            if n.len() != m {
                return Err(CliError::Usage(format!("fock probe lists {} modes but --m is {m}", n.len())));
            }
            Probe::fock(n)?
        }
    };
    Ok(probe)
}

/// Closed-form QFI matching the probe, where one exists.
fn matching_closed_form(req: &OracleRequest, budget: &ResourceBudget) -> CliResult<Option<f64>> {
    let q = closed_form(req.scenario, req.theta, budget)?;
    Ok(match (&req.probe, req.scenario) {
        (ProbeKind::Tmsv, _) => Some(q.tmsv),
        (ProbeKind::Vacuum, ScenarioId::NpsLoss { .. }) => Some(0.0),
        (ProbeKind::Vacuum | ProbeKind::Coherent, ScenarioId::PsLoss { .. } | ScenarioId::AddNoise) => Some(q.classical),
        _ => None,
    })
}

fn gap(reference: f64, value: f64) -> String {
    if reference == 0.0 {
        fmt_num(value - reference)
    } else {
        fmt_num((reference - value) / reference.abs())
    }
}

pub fn cmd_oracle_qfi(req: &OracleRequest) -> CliResult<Table> {
    if req.modes == 0 || req.modes > MAX_ORACLE_MODES {
        return Err(CliError::Usage(format!("oracle runs need 1 <= M <= {MAX_ORACLE_MODES}")));
    }
    req.scenario.check(req.theta)?;
    let probe = build_probe(req)?;
    let n = probe.mean_photons();
    let budget = ResourceBudget::new(n, req.modes as f64)?;
    let (family, theta, cascade) = if req.joint {
        let nb = req
            .scenario
            .background()
            .ok_or_else(|| CliError::Usage("--joint needs a loss scenario".into()))?;
        (
            CascadeFamily::joint_loss(&probe, req.scenario, req.theta)?,
            vec![req.theta, nb],
            joint_loss_cascade(req.scenario, req.theta)?,
        )
    } else {
        (
            CascadeFamily::scenario(&probe, req.scenario, req.theta)?,
            vec![req.theta],
            scenario_cascade(req.scenario, req.theta)?,
        )
    };
    let q = oracle_qfim(&family, &theta)?;
    let bound = qfim_upper_bound(&cascade, &budget)?;
    let closed = matching_closed_form(req, &budget)?;

    let mut t = Table::new(["entry", "oracle", "closed_form", "bound", "gap_closed_form", "gap_bound"]);
    t.echo("command", "oracle-qfi");
    t.echo("probe", req.probe.label());
    echo_scenario(&mut t, req.scenario);
    t.echo("theta", fmt_num(req.theta));
    t.echo("m", req.modes);
    t.echo("n", fmt_num(n));
    t.echo("joint", req.joint);
    let cutoffs: Vec<String> = probe.state().truncation().cutoffs().iter().map(|c| c.to_string()).collect();
    t.echo("probe_cutoffs", cutoffs.join(" "));
    let orders: Vec<String> = family.orders().iter().map(|c| c.to_string()).collect();
    t.echo("amplifier_orders", orders.join(" "));
    let names = if req.joint { vec!["kappa", "nb"] } else { vec![req.scenario.parameter_name()] };
    for i in 0..q.dim() {
        for j in i..q.dim() {
            let o = q.get(i, j);
            let b = bound.get(i, j);
            let c = if i == 0 && j == 0 { closed } else { None };
            t.push(vec![
                format!("{}_{}", names[i], names[j]),
                fmt_num(o),
                c.map(fmt_num).unwrap_or_default(),
                fmt_num(b),
                c.map(|c| gap(c, o)).unwrap_or_default(),
                gap(b, o),
            ]);
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_examples() {
        let ps = ScenarioId::PsLoss { nb: 1.0 };
        let budget = ResourceBudget::new(10.0, 5.0).unwrap();
        let thetas = "0.05:0.95:19".parse::<Grid>().unwrap().points();
        let t = curve_table(ps, &thetas, &budget).unwrap();
        assert_eq!(t.rows().len(), 19);
        for r in t.rows() {
            let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
            assert!(v[1] >= v[2] && v[1] >= v[3]);
        }

        let nps = ScenarioId::NpsLoss { nb: 1.0 };
        let t = curve_table(nps, &[0.5], &budget).unwrap();
        let b: f64 = t.rows()[0][1].parse().unwrap();
        assert!((b - 40.0 / 3.0 / 5.0).abs() < 1e-10);

        let budget = ResourceBudget::new(3.0, 2.0).unwrap();
        let t = curve_table(ScenarioId::AddNoise, &[1.0], &budget).unwrap();
        assert_eq!(t.rows()[0][1], "1.25");
        assert_eq!(t.rows()[0][3], "0.5");
    }

    #[test]
    fn figure_presets() {
        let p = figure_panels(3).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[1].name, "fig3_nb1");
        assert_eq!(p[1].budget.m(), 5.0);
        assert_eq!(figure_panels(5).unwrap()[2].budget.m(), 10.0);
        assert!(figure_panels(6).is_err());
    }

    #[test]
    fn probe_parsing() {
        assert_eq!("fock:1,2".parse::<ProbeKind>().unwrap(), ProbeKind::Fock(vec![1, 2]));
        assert_eq!("tmsv".parse::<ProbeKind>().unwrap(), ProbeKind::Tmsv);
        assert!("squeezed".parse::<ProbeKind>().is_err());
        assert!("fock:a".parse::<ProbeKind>().is_err());
    }

    #[test]
    fn oracle_vacuum_additive_noise() {
        let req = OracleRequest {
            probe: ProbeKind::Vacuum,
            scenario: ScenarioId::AddNoise,
            theta: 0.8,
            modes: 1,
            ns: 0.0,
            cutoff: None,
            joint: false,
        };
        let t = cmd_oracle_qfi(&req).unwrap();
        let gap: f64 = t.rows()[0][4].parse().unwrap();
        assert!(gap.abs() < 1e-6);
        let req = OracleRequest { modes: 3, ..req };
        assert_eq!(cmd_oracle_qfi(&req).unwrap_err().exit_code(), 2);
    }
}
