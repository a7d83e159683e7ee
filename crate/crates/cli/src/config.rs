//! Argument resolution, parameter grids and exit codes.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use pcsense_core::bounds::ResourceBudget;
use pcsense_core::channels::ScenarioId;
use pcsense_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(Error),
    Verification(String),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Verification(_) => EXIT_VERIFICATION,
            Self::Io(_) => EXIT_IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "invalid arguments: {m}"),
            Self::Numerical(e) => write!(f, "numerical failure: {e}"),
            Self::Verification(m) => write!(f, "verification failed: {m}"),
            Self::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidDistribution(_)
            | Error::DimensionMismatch { .. }
            | Error::IndexOutOfTruncation { .. }
            | Error::TruncationMismatch
            | Error::SupportExceedsN0 { .. }
            | Error::ZeroProbabilityCondition => Self::Usage(e.to_string()),
            _ => Self::Numerical(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// `start:stop:count`, evaluated at `count` equally spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let last = self.count - 1;
        (0..self.count)
            .map(|i| {
                if i == last {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / last as f64
                }
            })
            .collect()
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid `{s}` is not start:stop:count"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("grid bound `{p}`: {e}"));
        let start = num(parts[0])?;
        let stop = num(parts[1])?;
        let count: usize = parts[2].trim().parse().map_err(|e| format!("grid count `{}`: {e}", parts[2]))?;
        if count < 2 {
            return Err("grid count must be at least 2".into());
        }
        if !(start.is_finite() && stop.is_finite()) || start >= stop {
            return Err("grid needs finite start < stop".into());
        }
        Ok(Self { start, stop, count })
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.stop, self.count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ScenarioKind {
    Nps,
    Ps,
    AddNoise,
}

impl ScenarioKind {
    pub fn resolve(self, nb: Option<f64>) -> CliResult<ScenarioId> {
        match (self, nb) {
            (Self::AddNoise, None) => Ok(ScenarioId::AddNoise),
            (Self::AddNoise, Some(_)) => Err(CliError::Usage("--nb does not apply to add-noise".into())),
            (_, None) => Err(CliError::Usage("--nb is required for loss scenarios".into())),
            (_, Some(nb)) if !(nb >= 0.0) || !nb.is_finite() => Err(CliError::Usage(format!("--nb {nb} must be finite and nonnegative"))),
            (Self::Nps, Some(nb)) => Ok(ScenarioId::NpsLoss { nb }),
            (Self::Ps, Some(nb)) => Ok(ScenarioId::PsLoss { nb }),
        }
    }
}

/// Parameter values given as `--kappa`, `--gamma` or `--grid`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParamArgs {
    pub kappa: Option<f64>,
    pub gamma: Option<f64>,
    pub grid: Option<Grid>,
}

impl ParamArgs {
    pub fn resolve(&self, scenario: ScenarioId) -> CliResult<Vec<f64>> {
        let wrong = match scenario {
            ScenarioId::AddNoise => self.kappa.is_some(),
            _ => self.gamma.is_some(),
        };
        if wrong {
            return Err(CliError::Usage(format!(
                "scenario {} takes --{}",
                scenario.name(),
                scenario.parameter_name()
            )));
        }
        let given = [self.kappa.is_some(), self.gamma.is_some(), self.grid.is_some()];
        let points = match (self.kappa.or(self.gamma), self.grid) {
            _ if given.iter().filter(|&&g| g).count() != 1 => {
                return Err(CliError::Usage(format!(
                    "give exactly one of --{} or --grid",
                    scenario.parameter_name()
                )))
            }
            (Some(v), None) => vec![v],
            (None, Some(g)) => g.points(),
            _ => unreachable!("exactly one source"),
        };
        for &t in &points {
            scenario
                .check(t)
                .map_err(|_| CliError::Usage(format!("{} = {t} is outside the scenario domain", scenario.parameter_name())))?;
        }
        Ok(points)
    }
}

/// Budget from `--m` with `--n` or `--ns`; both must agree when given.
pub fn resolve_budget(n: Option<f64>, m: f64, ns: Option<f64>) -> CliResult<ResourceBudget> {
    let n = match (n, ns) {
        (Some(n), None) => n,
        (None, Some(ns)) => ns * m,
        (Some(n), Some(ns)) => {
            if (n - ns * m).abs() > 1e-12 * n.abs().max(1.0) {
                return Err(CliError::Usage(format!("--n {n} disagrees with --ns {ns} times --m {m}")));
            }
            n
        }
        (None, None) => return Err(CliError::Usage("give --n or --ns".into())),
    };
    ResourceBudget::new(n, m).map_err(CliError::from)
}

/// A fully resolved request.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: &'static str,
    pub scenario: ScenarioId,
    pub thetas: Vec<f64>,
    pub budget: ResourceBudget,
    pub cutoff: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g: Grid = "0.05:0.95:19".parse().unwrap();
        let p = g.points();
        assert_eq!(p.len(), 19);
        assert_eq!(p[0], 0.05);
        assert_eq!(p[18], 0.95);
        assert!((p[9] - 0.5).abs() < 1e-15);
        assert!("0.1:0.2:1".parse::<Grid>().is_err());
        assert!("0.3:0.2:4".parse::<Grid>().is_err());
        assert!("0.1:0.2".parse::<Grid>().is_err());
        assert!("a:0.2:3".parse::<Grid>().is_err());
    }

    #[test]
    fn parameter_resolution() {
        let ps = ScenarioId::PsLoss { nb: 1.0 };
        let p = ParamArgs { kappa: Some(0.5), ..Default::default() };
        assert_eq!(p.resolve(ps).unwrap(), vec![0.5]);
        let p = ParamArgs { gamma: Some(0.5), ..Default::default() };
        assert!(p.resolve(ps).is_err());
        let p = ParamArgs { grid: Some("0:1:3".parse().unwrap()), ..Default::default() };
        assert_eq!(p.resolve(ps).unwrap_err().exit_code(), EXIT_USAGE);
        let p = ParamArgs { kappa: Some(0.5), grid: Some("0.1:0.9:3".parse().unwrap()), ..Default::default() };
        assert!(p.resolve(ps).is_err());
        assert!(ParamArgs::default().resolve(ScenarioId::AddNoise).is_err());
    }

    #[test]
    fn budget_resolution() {
        assert_eq!(resolve_budget(Some(10.0), 5.0, None).unwrap().ns(), 2.0);
        assert_eq!(resolve_budget(None, 5.0, Some(2.0)).unwrap().n(), 10.0);
        assert!(resolve_budget(Some(10.0), 5.0, Some(3.0)).is_err());
        assert!(resolve_budget(None, 5.0, None).is_err());
        assert!(resolve_budget(Some(1.0), 0.0, None).is_err());
    }

    #[test]
    fn error_classes() {
        assert_eq!(CliError::from(Error::NonConvergent { change: 1.0 }).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::from(Error::Domain { what: "x", value: 0.0 }).exit_code(), EXIT_USAGE);
    }
}
