//! Experiment config: TOML schema, validation and model construction.

use std::path::{Path, PathBuf};

use pdmp_core::characteristics::{CharacteristicsSpec, RateSpec, Regime, SemiflowSpec};
use pdmp_core::kernels::JumpKernel;
use serde::Deserialize;

use crate::error::{model_err, CliError};
use crate::table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Simulate,
    Evolve,
    Classify,
    Audit,
    Oracle,
}

impl Action {
    pub fn as_str(&self) -> &'static str {
        match self {
            Action::Simulate => "simulate",
            Action::Evolve => "evolve",
            Action::Classify => "classify",
            Action::Audit => "audit",
            Action::Oracle => "oracle",
        }
    }

    fn stochastic(&self) -> bool {
        matches!(self, Action::Simulate | Action::Classify)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub action: Option<Action>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub model: ModelConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub evolve: EvolveConfig,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeName {
    Pure,
    Growth,
    Decay,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub regime: RegimeName,
    /// Velocity `g`; required unless the regime is `pure`.
    pub flow: Option<FlowConfig>,
    pub rate: RateConfig,
    pub kernel: KernelConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowConfig {
    /// `g(x) = x^(1 - beta)`.
    Power { beta: f64 },
    /// Two-column CSV `x,g`.
    Table { file: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateConfig {
    /// `phi(x) = a x^alpha`.
    Power { a: f64, alpha: f64 },
    /// Two-column CSV `x,phi`.
    Table { file: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    /// Homogeneous profile `h(z) = (nu + 2) z^nu`.
    Power { nu: f64 },
    /// Two-column CSV `z,h` on (0, 1).
    Table { file: PathBuf },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Uniform in the measure `x dx` on `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// `u(x)` proportional to `e^(-x / scale)`.
    Exponential { scale: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub x0: f64,
    pub paths: usize,
    pub n_max: usize,
    pub t_max: f64,
    /// Times at which the state of every path is reported.
    pub times: Vec<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { x0: 1.0, paths: 10, n_max: 1000, t_max: f64::INFINITY, times: Vec::new() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub times: Vec<f64>,
    pub initial: InitialConfig,
    pub grid: GridConfig,
    pub max_terms: usize,
    pub time_steps: usize,
    pub tail_tol: f64,
    /// Monte Carlo cross-check paths; 0 disables it.
    pub paths: usize,
    pub n_max: usize,
    /// Relative tolerance against the oracle column.
    pub tolerance: f64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        EvolveConfig {
            times: vec![0.25, 0.5, 1.0, 2.0],
            initial: InitialConfig::Uniform { lo: 1.0, hi: 2.0 },
            grid: GridConfig { x_min: 1e-8, x_max: 1e4, cells: 512 },
            max_terms: 1000,
            time_steps: 64,
            tail_tol: 1e-8,
            paths: 0,
            n_max: 10_000,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub lambdas: Vec<f64>,
    pub probes: Vec<f64>,
    pub paths: usize,
    pub n_max: usize,
    /// Grid for the deterministic dual iteration (pure-jump models only).
    pub dual_grid: GridConfig,
    pub dual_iterations: usize,
    pub dual: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            lambdas: vec![1.0, 0.1, 0.01],
            probes: (0..7).map(|k| 10f64.powi(k - 7)).collect(),
            paths: 1000,
            n_max: 2000,
            dual_grid: GridConfig { x_min: 1e-9, x_max: 1e3, cells: 384 },
            dual_iterations: 2000,
            dual: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Parent sizes at which the kernel is checked.
    pub sizes: Vec<f64>,
    pub tolerance: f64,
    pub quantiles: Vec<f64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            sizes: vec![1e-6, 1e-3, 1.0, 1e3, 1e6],
            tolerance: 1e-10,
            quantiles: vec![0.01, 0.1, 0.5, 0.9, 0.99],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub times: Vec<f64>,
    pub sizes: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub initial: InitialConfig,
    pub grid: GridConfig,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            times: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            sizes: vec![0.5, 1.0, 2.0],
            lambdas: vec![0.1, 1.0, 10.0],
            initial: InitialConfig::Uniform { lo: 1.0, hi: 2.0 },
            grid: GridConfig { x_min: 1e-8, x_max: 1e4, cells: 512 },
        }
    }
}

/// Config after command-line overrides, with table paths resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: Config,
    pub action: Action,
    pub seed: u64,
    /// Whether the action consumes randomness.
    pub seeded: bool,
    pub workers: usize,
    pub output: PathBuf,
    pub base_dir: PathBuf,
}

pub struct Overrides {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
}

pub fn parse(text: &str) -> Result<Config, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn bad(field: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {why}"))
}

fn check_grid(field: &str, g: &GridConfig) -> Result<(), CliError> {
    if !(g.x_min > 0.0 && g.x_max > g.x_min && g.x_max.is_finite()) {
        return Err(bad(field, format!("need 0 < x_min < x_max < inf, got [{}, {}]", g.x_min, g.x_max)));
    }
    if g.cells < 2 {
        return Err(bad(&format!("{field}.cells"), "need at least 2 cells"));
    }
    Ok(())
}

fn check_initial(field: &str, u: &InitialConfig) -> Result<(), CliError> {
    match *u {
        InitialConfig::Uniform { lo, hi } if !(lo > 0.0 && hi > lo && hi.is_finite()) => {
            Err(bad(field, format!("need 0 < lo < hi, got [{lo}, {hi}]")))
        }
        InitialConfig::Exponential { scale } if !(scale > 0.0 && scale.is_finite()) => {
            Err(bad(&format!("{field}.scale"), "must be positive"))
        }
        _ => Ok(()),
    }
}

fn check_times(field: &str, ts: &[f64]) -> Result<(), CliError> {
    if ts.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(bad(field, "times must be finite and non-negative"));
    }
    Ok(())
}

fn check_positive(field: &str, xs: &[f64]) -> Result<(), CliError> {
    if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(bad(field, "need a non-empty list of positive finite values"));
    }
    Ok(())
}

pub fn resolve(config: Config, action: Action, config_path: &Path, ov: Overrides) -> Result<Resolved, CliError> {
    if let Some(a) = config.action {
        if a != action {
            return Err(bad("action", format!("config declares '{}' but the subcommand is '{}'", a.as_str(), action.as_str())));
        }
    }
    let seeded = action.stochastic() || (action == Action::Evolve && config.evolve.paths > 0);
    let seed = match ov.seed.or(config.seed) {
        Some(s) => s,
        None if seeded => return Err(bad("seed", format!("required for '{}'", action.as_str()))),
        None => 0,
    };
    let workers = ov.workers.or(config.workers).unwrap_or(1);
    if workers == 0 {
        return Err(bad("workers", "must be at least 1"));
    }
    let base_dir = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let output = match (ov.out, &config.output) {
        (Some(o), _) => o,
        (None, Some(o)) if o.is_relative() => base_dir.join(o),
        (None, Some(o)) => o.clone(),
        (None, None) => return Err(bad("output", "missing; set it or pass --out")),
    };
    let r = Resolved { config, action, seed, seeded, workers, output, base_dir };
    r.validate()?;
    Ok(r)
}

impl Resolved {
    pub fn table_path(&self, file: &Path) -> PathBuf {
        if file.is_absolute() {
            file.to_path_buf()
        } else {
            self.base_dir.join(file)
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let m = &self.config.model;
        match (m.regime, &m.flow) {
            (RegimeName::Pure, Some(_)) => return Err(bad("model.flow", "must be omitted for the pure regime")),
            (RegimeName::Growth | RegimeName::Decay, None) => return Err(bad("model.flow", "required for growth and decay")),
            _ => {}
        }
        let files = [
            ("model.flow.file", m.flow.as_ref().and_then(|f| if let FlowConfig::Table { file } = f { Some(file) } else { None })),
            ("model.rate.file", if let RateConfig::Table { file } = &m.rate { Some(file) } else { None }),
            ("model.kernel.file", if let KernelConfig::Table { file } = &m.kernel { Some(file) } else { None }),
        ];
        for (field, file) in files {
            if let Some(f) = file {
                let p = self.table_path(f);
                if !p.is_file() {
                    return Err(bad(field, format!("table file {} does not exist", p.display())));
                }
            }
        }
        match self.action {
            Action::Simulate => {
                let s = &self.config.simulate;
                if !(s.x0 > 0.0 && s.x0.is_finite()) {
                    return Err(bad("simulate.x0", "must be positive and finite"));
                }
                if s.paths == 0 || s.n_max == 0 {
                    return Err(bad("simulate", "paths and n_max must be positive"));
                }
                if !(s.t_max > 0.0) {
                    return Err(bad("simulate.t_max", "must be positive"));
                }
                check_times("simulate.times", &s.times)?;
            }
            Action::Evolve => {
                let e = &self.config.evolve;
                check_times("evolve.times", &e.times)?;
                check_grid("evolve.grid", &e.grid)?;
                check_initial("evolve.initial", &e.initial)?;
                if e.max_terms == 0 || e.time_steps == 0 {
                    return Err(bad("evolve", "max_terms and time_steps must be positive"));
                }
                if !(e.tail_tol >= 0.0) || !(e.tolerance > 0.0) {
                    return Err(bad("evolve", "tail_tol must be >= 0 and tolerance > 0"));
                }
                if e.paths > 0 && e.paths < pdmp_core::simulate::MIN_PATHS {
                    return Err(bad("evolve.paths", format!("use 0 or at least {}", pdmp_core::simulate::MIN_PATHS)));
                }
            }
            Action::Classify => {
                let c = &self.config.classify;
                check_positive("classify.lambdas", &c.lambdas)?;
                check_positive("classify.probes", &c.probes)?;
                if c.paths < 2 || c.n_max == 0 || c.dual_iterations == 0 {
                    return Err(bad("classify", "need paths >= 2, n_max >= 1 and dual_iterations >= 1"));
                }
                check_grid("classify.dual_grid", &c.dual_grid)?;
            }
            Action::Audit => {
                let a = &self.config.audit;
                check_positive("audit.sizes", &a.sizes)?;
                if a.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
                    return Err(bad("audit.quantiles", "must lie in (0, 1)"));
                }
                if !(a.tolerance > 0.0) {
                    return Err(bad("audit.tolerance", "must be positive"));
                }
            }
            Action::Oracle => {
                let o = &self.config.oracle;
                check_times("oracle.times", &o.times)?;
                check_positive("oracle.sizes", &o.sizes)?;
                check_positive("oracle.lambdas", &o.lambdas)?;
                check_grid("oracle.grid", &o.grid)?;
                check_initial("oracle.initial", &o.initial)?;
            }
        }
        Ok(())
    }

    pub fn build_spec(&self) -> Result<CharacteristicsSpec, CliError> {
        let m = &self.config.model;
        let regime = match m.regime {
            RegimeName::Pure => Regime::PureJump,
            RegimeName::Growth => Regime::Growth,
            RegimeName::Decay => Regime::Decay,
        };
        let semiflow = match &m.flow {
            None => SemiflowSpec::pure_jump(),
            Some(FlowConfig::Power { beta }) => {
                if !beta.is_finite() {
                    return Err(bad("model.flow.beta", "must be finite"));
                }
                SemiflowSpec::power(regime, *beta)
            }
            Some(FlowConfig::Table { file }) => {
                let g = table::positive_fn(&self.table_path(file), "model.flow.file")?;
                match regime {
                    Regime::Growth => SemiflowSpec::growth(g),
                    _ => SemiflowSpec::decay(g),
                }
            }
        };
        let rate = match &m.rate {
            RateConfig::Power { a, alpha } => {
                if !(a.is_finite() && alpha.is_finite()) {
                    return Err(bad("model.rate", "a and alpha must be finite"));
                }
                RateSpec::power(*a, *alpha)
            }
            RateConfig::Table { file } => RateSpec::new(table::positive_fn(&self.table_path(file), "model.rate.file")?),
        };
        let kernel = match &m.kernel {
            KernelConfig::Power { nu } => JumpKernel::homogeneous_power(*nu).map_err(model_err("model.kernel.nu"))?,
            KernelConfig::Table { file } => {
                let h = table::profile_fn(&self.table_path(file), "model.kernel.file")?;
                JumpKernel::homogeneous(h).map_err(model_err("model.kernel.file"))?
            }
        };
        CharacteristicsSpec::new(semiflow, rate, kernel).map_err(model_err("model"))
    }

    /// `(regime, alpha, beta, a)` when every model part is a power law.
    pub fn power_family(&self) -> Option<(Regime, f64, f64, f64)> {
        let m = &self.config.model;
        let (a, alpha) = match m.rate {
            RateConfig::Power { a, alpha } => (a, alpha),
            _ => return None,
        };
        match (&m.regime, &m.flow) {
            (RegimeName::Pure, None) => Some((Regime::PureJump, alpha, 0.0, a)),
            (RegimeName::Growth, Some(FlowConfig::Power { beta })) => Some((Regime::Growth, alpha, *beta, a)),
            (RegimeName::Decay, Some(FlowConfig::Power { beta })) => Some((Regime::Decay, alpha, *beta, a)),
            _ => None,
        }
    }

    pub fn kernel_nu(&self) -> Option<f64> {
        match self.config.model.kernel {
            KernelConfig::Power { nu } => Some(nu),
            _ => None,
        }
    }
}
