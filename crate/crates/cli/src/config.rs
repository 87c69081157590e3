//! Flags, the TOML config file, and their merge into a [`RunConfig`].
//!
//! Flags win over the file. The file holds either a `preset` name or an
//! inline `[spec]` built from the named coefficient functions.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perpetua::bounds::DChoice;
use perpetua::model::{
    CoefficientBranch, CoefficientFn, DensityFacts, ErrorBudget, Interval, KnownLaw, MomentProvider, WeightedBranch,
};
use perpetua::oracle::McConfig;
use perpetua::{presets, DiscretisationSchedule, PerpetuitySpec, UMode};
use serde::Deserialize;

use crate::error::{io_error, CliError};

pub const DEFAULT_OUT: &str = "perpetua-out";
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

#[derive(Parser, Debug)]
#[command(name = "perpetua", version, about = "Lattice approximation of perpetuities with certified error bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the iteration; write pmf, density and certificate artifacts.
    Approximate(ApproximateArgs),
    /// Compute the certificate for a schedule and step count without iterating.
    Certify(CertifyArgs),
    /// Time the iteration over a ladder of step counts and check the operation-count model.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ProblemArgs {
    /// quickselect, interval-splitting, ax1-uniform or ax1-uniform(q)
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Polynomial schedule s(n) = n^R
    #[arg(long, value_name = "R", conflicts_with = "exp")]
    pub poly: Option<u32>,
    /// Exponential schedule s(n) = ceil(GAMMA^n)
    #[arg(long, value_name = "GAMMA")]
    pub exp: Option<f64>,
    /// Discretise U at cell midpoints
    #[arg(long)]
    pub symmetric: bool,
    #[arg(long, value_name = "N")]
    pub steps: Option<u32>,
    /// Averaging half-width for the density, in lattice cells
    #[arg(long, value_name = "D|auto")]
    pub density_d: Option<DArg>,
    /// Override the established bound on the sup-norm of the limit density
    #[arg(long, value_name = "B")]
    pub density_sup: Option<f64>,
    /// Which discretisation errors enter the certificate
    #[arg(long, value_enum)]
    pub budget: Option<BudgetArg>,
    #[arg(long, value_name = "K")]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ApproximateArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Compare against a Monte-Carlo sample of size S
    #[arg(long, value_name = "S", num_args = 0..=1, default_missing_value = "1000000")]
    pub mc_check: Option<usize>,
    /// Also write the pmf every M steps
    #[arg(long, value_name = "M")]
    pub snapshot_every: Option<u32>,
    /// No per-step progress on stderr
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Run the sup-norm bootstrap from the a-priori bound with this observed density maximum
    #[arg(long, value_name = "M")]
    pub observed_max: Option<f64>,
    /// Also write certificate.json here
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    pub ladder: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DArg {
    Auto,
    Fixed(u64),
}

impl FromStr for DArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(DArg::Auto);
        }
        match s.parse::<u64>() {
            Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got {s:?}")),
            Ok(d) => Ok(DArg::Fixed(d)),
        }
    }
}

impl From<DArg> for DChoice {
    fn from(d: DArg) -> Self {
        match d {
            DArg::Auto => DChoice::Auto,
            DArg::Fixed(d) => DChoice::Fixed(d),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetArg {
    Full,
    RoundingOnly,
}

impl From<BudgetArg> for ErrorBudget {
    fn from(b: BudgetArg) -> Self {
        match b {
            BudgetArg::Full => ErrorBudget::Full,
            BudgetArg::RoundingOnly => ErrorBudget::RoundingOnly,
        }
    }
}

/// The TOML document accepted by `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub spec: Option<InlineSpec>,
    pub steps: Option<u32>,
    pub schedule: Option<ScheduleConfig>,
    pub density: Option<DensityConfig>,
    pub budget: Option<BudgetArg>,
    pub threads: Option<usize>,
    pub snapshot_every: Option<u32>,
    pub output: Option<OutputConfig>,
    pub mc_check: Option<McCheckConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub poly: Option<u32>,
    pub exp: Option<f64>,
    #[serde(default)]
    pub symmetric: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    /// `"auto"` or a positive integer
    pub d: Option<toml::Value>,
    pub sup: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McCheckConfig {
    pub samples: usize,
    pub seed: Option<u64>,
}

/// A user-defined perpetuity; validated through [`PerpetuitySpec::new`].
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineSpec {
    pub name: String,
    pub branches: Vec<InlineBranch>,
    pub support: Option<Interval>,
    pub mean: f64,
    pub moments: MomentProvider,
    pub density: Option<DensityFacts>,
    pub law: Option<KnownLaw>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineBranch {
    pub weight: f64,
    pub phi: CoefficientFn,
    pub psi: CoefficientFn,
}

impl InlineSpec {
    pub fn build(self) -> Result<PerpetuitySpec, CliError> {
        let branches = self
            .branches
            .into_iter()
            .map(|b| Ok(WeightedBranch { weight: b.weight, branch: CoefficientBranch::new(b.phi, b.psi)? }))
            .collect::<Result<Vec<_>, perpetua::Error>>()?;
        if let Some(iv) = self.support {
            Interval::new(iv.lo, iv.hi)?;
        }
        let mut spec = PerpetuitySpec::new(self.name, branches, self.support, self.mean, self.moments)?;
        if let Some(facts) = self.density {
            if !(facts.sup > 0.0 && facts.a_priori_sup >= facts.sup) {
                return Err(CliError::Config("density facts need 0 < sup <= a_priori_sup".into()));
            }
            spec = spec.with_density(facts);
        }
        if let Some(law) = self.law {
            spec = spec.with_law(law);
        }
        Ok(spec)
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Everything a command needs, after merging flags over the file.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: PerpetuitySpec,
    pub sched: DiscretisationSchedule,
    /// `None` only for `bench`, which takes a ladder instead.
    pub steps: Option<u32>,
    pub d_choice: DChoice,
    pub density_sup: Option<f64>,
    pub threads: Option<usize>,
    pub snapshot_every: Option<u32>,
    pub out_dir: PathBuf,
    pub mc_check: Option<McConfig>,
}

impl RunConfig {
    pub fn steps(&self) -> Result<u32, CliError> {
        match self.steps {
            Some(n) if n >= 1 => Ok(n),
            Some(_) => Err(CliError::Config("--steps must be at least 1".into())),
            None => Err(CliError::Config("no step count: pass --steps N or set `steps` in the config".into())),
        }
    }
}

fn d_from_toml(v: &toml::Value) -> Result<DArg, CliError> {
    match v {
        toml::Value::String(s) => s.parse().map_err(CliError::Config),
        toml::Value::Integer(i) if *i > 0 => Ok(DArg::Fixed(*i as u64)),
        other => Err(CliError::Config(format!("density.d must be \"auto\" or a positive integer, got {other}"))),
    }
}

/// Merges flags over the optional config file.
pub fn resolve(
    problem: &ProblemArgs,
    out: Option<&Path>,
    mc_samples: Option<usize>,
    snapshot_every: Option<u32>,
) -> Result<RunConfig, CliError> {
    let file = match &problem.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut spec = match (&problem.preset, file.preset, file.spec) {
        (Some(name), _, _) => presets::by_name(name)?,
        (None, Some(_), Some(_)) => {
            return Err(CliError::Config("config sets both `preset` and `[spec]`".into()));
        }
        (None, Some(name), None) => presets::by_name(&name)?,
        (None, None, Some(inline)) => inline.build()?,
        (None, None, None) => {
            return Err(CliError::Config("no problem given: pass --preset or --config".into()));
        }
    };
    if let Some(b) = problem.budget.or(file.budget) {
        spec = spec.with_budget(b.into());
    }

    let file_sched = file.schedule.unwrap_or_default();
    let kind = match (problem.poly, problem.exp) {
        (Some(r), _) => DiscretisationSchedule::polynomial(r),
        (None, Some(g)) => DiscretisationSchedule::exponential(g),
        (None, None) => match (file_sched.poly, file_sched.exp) {
            (Some(_), Some(_)) => return Err(CliError::Config("schedule sets both `poly` and `exp`".into())),
            (Some(r), None) => DiscretisationSchedule::polynomial(r),
            (None, Some(g)) => DiscretisationSchedule::exponential(g),
            (None, None) => return Err(CliError::Config("no schedule: pass --poly R or --exp GAMMA".into())),
        },
    };
    let mode = if problem.symmetric || file_sched.symmetric { UMode::Symmetric } else { UMode::Floor };
    let sched = kind.with_u_mode(mode);
    sched.validate()?;

    let file_density = file.density.unwrap_or_default();
    let d_arg = match (problem.density_d, &file_density.d) {
        (Some(d), _) => d,
        (None, Some(v)) => d_from_toml(v)?,
        (None, None) => DArg::Auto,
    };
    let density_sup = problem.density_sup.or(file_density.sup);
    if density_sup.is_some_and(|b| !(b > 0.0 && b.is_finite())) {
        return Err(CliError::Config("density sup must be positive".into()));
    }
    if problem.threads == Some(0) || file.threads == Some(0) {
        return Err(CliError::Config("thread count must be positive".into()));
    }
    let snapshot_every = snapshot_every.or(file.snapshot_every);
    if snapshot_every == Some(0) {
        return Err(CliError::Config("--snapshot-every must be positive".into()));
    }

    let mc_check = match (mc_samples, &file.mc_check) {
        (Some(0), _) => return Err(CliError::Config("--mc-check needs at least one sample".into())),
        (Some(samples), cfg) => Some(mc_config(samples, cfg.as_ref().and_then(|c| c.seed))),
        (None, Some(cfg)) => Some(mc_config(cfg.samples, cfg.seed)),
        (None, None) => None,
    };

    Ok(RunConfig {
        spec,
        sched,
        steps: problem.steps.or(file.steps),
        d_choice: d_arg.into(),
        density_sup,
        threads: problem.threads.or(file.threads),
        snapshot_every,
        out_dir: out
            .map(Path::to_path_buf)
            .or(file.output.map(|o| o.dir))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
        mc_check,
    })
}

/// `PERPETUA_SEED` beats the config seed, which beats the built-in default.
fn mc_config(samples: usize, file_seed: Option<u64>) -> McConfig {
    let from_env = McConfig::from_env(samples);
    match (std::env::var_os(perpetua::oracle::SEED_ENV), file_seed) {
        (None, Some(seed)) => McConfig::new(samples, seed),
        _ => from_env,
    }
}
