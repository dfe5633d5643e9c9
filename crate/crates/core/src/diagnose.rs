//! Explosion diagnostics: Monte Carlo and grid estimates of
//! `f_lambda(x) = E_x e^{-lambda t_inf}`, the stochastic / strongly stable
//! classifier, the closed-form table for power families, the embedded-chain
//! kernel and the Lyapunov drift check.

use std::path::Path;

use crate::characteristics::{CharacteristicsSpec, Regime};
use crate::density::{DensityEngine, GridDensity};
use crate::error::{Error, Result};
use crate::kernels::JumpKernel;
use crate::oracles::mu0;
use crate::quad::{self, neumaier, GL4};
use crate::rng::{ChainDraws, PathRng};
use crate::simulate::{par_paths, run_path, sample_initial, McConfig, LAPLACE_CUTOFF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Stochastic,
    StronglyStable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stochastic => "stochastic",
            Verdict::StronglyStable => "strongly_stable",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Two verdicts contradict only if both are definite and differ.
    pub fn compatible(self, other: Verdict) -> bool {
        self == other || self == Verdict::Inconclusive || other == Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MonteCarloLaplace,
    DualIteration,
    ClosedFormTable,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::MonteCarloLaplace => "monte_carlo_laplace",
            Method::DualIteration => "dual_iteration",
            Method::ClosedFormTable => "closed_form_table",
        }
    }
}

/// One `(lambda, x)` cell of the evidence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evidence {
    pub lambda: f64,
    pub x: f64,
    pub f_hat: f64,
    pub std_error: f64,
    pub n_iter: usize,
    /// `f_hat` at `n_iter - 1` jumps minus `f_hat` at `n_iter`.
    pub decrement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub method: Method,
    pub evidence: Vec<Evidence>,
    pub note: String,
}

impl Classification {
    pub fn write_evidence_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(["lambda", "x", "f_hat", "se", "n_iter", "decrement"]).map_err(csv_err)?;
        for e in &self.evidence {
            w.write_record([
                e.lambda.to_string(),
                e.x.to_string(),
                format!("{:e}", e.f_hat),
                format!("{:e}", e.std_error),
                e.n_iter.to_string(),
                format!("{:e}", e.decrement),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn stream(probe: usize, path: u64) -> u64 {
    ((probe as u64) << 32) | path
}

/// Monte Carlo `E_x e^{-lambda t_n}` with `n = n_iter`, one row per probe.
pub fn f_lambda_dual(
    spec: &CharacteristicsSpec,
    lambda: f64,
    probes: &[f64],
    n_iter: usize,
    n_paths: usize,
    cfg: McConfig,
) -> Result<Vec<Evidence>> {
    Ok(laplace_table(spec, &[lambda], probes, n_iter, n_paths, cfg)?.remove(0))
}

/// Same paths for every `lambda` (common random numbers); rows per lambda, then probe.
fn laplace_table(
    spec: &CharacteristicsSpec,
    lambdas: &[f64],
    probes: &[f64],
    n_iter: usize,
    n_paths: usize,
    cfg: McConfig,
) -> Result<Vec<Vec<Evidence>>> {
    if n_iter == 0 || n_paths < 2 {
        return Err(Error::InvalidArgument(format!("n_iter = {n_iter}, paths = {n_paths}")));
    }
    let lam_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lam_min > 0.0) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let t_max = LAPLACE_CUTOFF / lam_min;
    let np = probes.len();
    let out = par_paths(np * n_paths, cfg.workers, |k| {
        let (p, i) = (k as usize / n_paths, k % n_paths as u64);
        let mut rng = PathRng::new(cfg.seed, stream(p, i));
        run_path(spec, probes[p], &mut rng, n_iter, t_max, n_iter - 1)
    })?;
    let n = n_paths as f64;
    let mut table = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut rows = Vec::with_capacity(np);
        for (p, &x) in probes.iter().enumerate() {
            let paths = &out[p * n_paths..(p + 1) * n_paths];
            let vals: Vec<f64> = paths.iter().map(|o| (-lambda * o.end_time).exp()).collect();
            let mean = neumaier(vals.iter().copied()) / n;
            let var = neumaier(vals.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
            let prev = neumaier(paths.iter().map(|o| (-lambda * o.checkpoint_time).exp())) / n;
            rows.push(Evidence { lambda, x, f_hat: mean, std_error: (var / n).sqrt(), n_iter, decrement: prev - mean });
        }
        table.push(rows);
    }
    Ok(table)
}

/// Monte Carlo `\int E_x(e^{-lambda t_n}) u(x) x dx` with starting points drawn from `u`.
pub fn f_lambda_mass(
    spec: &CharacteristicsSpec,
    lambda: f64,
    u: &GridDensity,
    n_iter: usize,
    n_paths: usize,
    cfg: McConfig,
) -> Result<(f64, f64)> {
    if !(lambda > 0.0) || n_iter == 0 || n_paths < 2 {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}, n_iter = {n_iter}, paths = {n_paths}")));
    }
    if !u.is_nonnegative() || u.sub_grid_mass() + u.super_grid_mass() > 0.0 {
        return Err(Error::NotADensity { mass: u.total_mass() });
    }
    let mut cdf = Vec::with_capacity(u.masses().len());
    let mut acc = 0.0;
    for m in u.masses() {
        acc += m;
        cdf.push(acc);
    }
    let n = n_paths as f64;
    let vals = par_paths(n_paths, cfg.workers, |i| {
        let mut rng = PathRng::new(cfg.seed, i);
        let x = sample_initial(u, &cdf, (i as f64 + rng.uniform()) / n);
        let o = run_path(spec, x, &mut rng, n_iter, LAPLACE_CUTOFF / lambda, n_iter - 1)?;
        Ok((-lambda * o.end_time).exp())
    })?;
    let mean = neumaier(vals.iter().copied()) / n;
    let var = neumaier(vals.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    Ok((acc * mean, acc * (var / n).sqrt()))
}

/// Grid dual iterates `(B R(lambda, A))^{*n} 1` at the cell nodes (pure-jump regime).
pub fn f_lambda_grid(engine: &DensityEngine, lambda: f64, n_iter: usize) -> Result<Vec<f64>> {
    engine.dual_iteration(lambda, n_iter)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOptions {
    /// Decreasing toward 0; the verdict is read at the smallest value.
    pub lambdas: Vec<f64>,
    pub probes: Vec<f64>,
    pub n_paths: usize,
    pub n_max: usize,
    pub eps_stochastic: f64,
    pub eps_strongly_stable: f64,
    /// Half-width of the confidence interval in standard errors.
    pub ci_width: f64,
    pub mc: McConfig,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            lambdas: vec![1.0, 0.1, 0.01],
            probes: (0..7).map(|k| 10f64.powi(k - 7)).collect(),
            n_paths: 1000,
            n_max: 2000,
            eps_stochastic: 0.02,
            eps_strongly_stable: 0.05,
            ci_width: 3.0,
            mc: McConfig::default(),
        }
    }
}

const POLICY_NOTE: &str = "verdict read at the smallest tested lambda over finitely many probes";

fn verdict_from(rows: &[Evidence], opts: &ClassifyOptions) -> Verdict {
    let upper = rows.iter().map(|e| e.f_hat + opts.ci_width * e.std_error).fold(f64::NEG_INFINITY, f64::max);
    let lower = rows.iter().map(|e| e.f_hat - opts.ci_width * e.std_error).fold(f64::INFINITY, f64::min);
    if upper < opts.eps_stochastic {
        Verdict::Stochastic
    } else if lower > 1.0 - opts.eps_strongly_stable {
        Verdict::StronglyStable
    } else {
        Verdict::Inconclusive
    }
}

/// Monte Carlo classifier over the `(lambda, x)` probe grid.
pub fn classify(spec: &CharacteristicsSpec, opts: &ClassifyOptions) -> Result<Classification> {
    if opts.lambdas.is_empty() || opts.probes.is_empty() {
        return Err(Error::InvalidArgument("empty lambda or probe grid".into()));
    }
    let table = laplace_table(spec, &opts.lambdas, &opts.probes, opts.n_max, opts.n_paths, opts.mc)?;
    let (idx, _) = opts
        .lambdas
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i, l) } else { acc });
    let verdict = verdict_from(&table[idx], opts);
    Ok(Classification {
        verdict,
        method: Method::MonteCarloLaplace,
        evidence: table.into_iter().flatten().collect(),
        note: POLICY_NOTE.into(),
    })
}

/// Classifier from the grid dual iteration, reading node values at the probes.
pub fn classify_dual(engine: &DensityEngine, opts: &ClassifyOptions, n_iter: usize) -> Result<Classification> {
    let grid = engine.grid();
    let mut evidence = Vec::new();
    let lam_min = opts.lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let mut at_min = Vec::new();
    for &lambda in &opts.lambdas {
        let f = f_lambda_grid(engine, lambda, n_iter)?;
        for &x in &opts.probes {
            let i = grid
                .locate(x)
                .ok_or_else(|| Error::InvalidArgument(format!("probe {x} lies outside the grid")))?;
            let e = Evidence { lambda, x, f_hat: f[i], std_error: 0.0, n_iter, decrement: f64::NAN };
            if lambda == lam_min {
                at_min.push(e);
            }
            evidence.push(e);
        }
    }
    Ok(Classification {
        verdict: verdict_from(&at_min, opts),
        method: Method::DualIteration,
        evidence,
        note: POLICY_NOTE.into(),
    })
}

/// Closed-form verdict for `g = x^{1-beta}`, `phi = a x^alpha` and a homogeneous kernel.
///
/// In the pure-jump regime `beta` is ignored: the chain explodes exactly when
/// `phi` is unbounded at 0.
pub fn classify_power_family(regime: Regime, alpha: f64, beta: f64, a: f64, kernel: &JumpKernel) -> Result<Classification> {
    if !(a > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("a = {a}, alpha = {alpha}, beta = {beta}")));
    }
    let out = |why: &str| Err(Error::OutOfRegime(format!("alpha = {alpha}, beta = {beta}: {why}")));
    let verdict = match regime {
        Regime::PureJump => {
            if alpha >= 0.0 {
                Verdict::Stochastic
            } else {
                Verdict::StronglyStable
            }
        }
        Regime::Growth => {
            if beta < 0.0 || alpha + beta < 0.0 {
                return out("growth needs beta >= 0 and alpha + beta >= 0");
            }
            if alpha + beta > 0.0 || beta == 0.0 {
                Verdict::Stochastic
            } else if mu0(kernel)? >= -1.0 / a {
                Verdict::Stochastic
            } else {
                Verdict::StronglyStable
            }
        }
        Regime::Decay => {
            if beta > 0.0 || alpha + beta > 0.0 {
                return out("decay needs beta <= 0 and alpha + beta <= 0");
            }
            if alpha >= 0.0 {
                Verdict::Stochastic
            } else {
                Verdict::StronglyStable
            }
        }
    };
    Ok(Classification { verdict, method: Method::ClosedFormTable, evidence: Vec::new(), note: String::new() })
}

/// One line of a decision-table report.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRow {
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub nu: f64,
    pub verdict: Verdict,
    pub source: Method,
}

pub fn write_decision_csv(rows: &[DecisionRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["alpha", "beta", "a", "nu", "verdict", "source"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.beta.to_string(),
            r.a.to_string(),
            r.nu.to_string(),
            r.verdict.as_str().to_string(),
            r.source.as_str().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Transition kernel of the post-jump chain in the growth regime, with
/// density `k(x, y)` with respect to `x dx`.
///
/// Integrals over the pre-jump point `z` use `s = Q(z) - Q(y)`, which turns
/// the law of `z` into the unit exponential.
#[derive(Debug, Clone)]
pub struct EmbeddedKernel {
    spec: CharacteristicsSpec,
}

const S_CHUNK: f64 = 4.0;
const S_MAX: f64 = 745.0;

impl EmbeddedKernel {
    pub fn new(spec: &CharacteristicsSpec) -> Result<Self> {
        if spec.regime() != Regime::Growth {
            return Err(Error::NotEnabled("embedded kernel is built for the growth regime".into()));
        }
        if !spec.kernel().is_fragmentation() {
            return Err(Error::NotEnabled("embedded kernel needs a fragmentation kernel".into()));
        }
        spec.kernel().density(0.5, 1.0)?;
        let q = &spec.maps().expect("growth regime has maps").q;
        if q.limit_upper().is_finite() {
            return Err(Error::NonConvergent(format!("Q(inf) = {} is finite", q.limit_upper())));
        }
        Ok(EmbeddedKernel { spec: spec.clone() })
    }

    pub fn spec(&self) -> &CharacteristicsSpec {
        &self.spec
    }

    /// Pre-jump point after cumulative rate `s` from `y`.
    pub fn pre_jump(&self, y: f64, s: f64) -> f64 {
        let q = &self.spec.maps().unwrap().q;
        q.inverse(q.forward(y) + s)
    }

    fn s_of(&self, y: f64, z: f64) -> f64 {
        let q = &self.spec.maps().unwrap().q;
        q.forward(z) - q.forward(y)
    }

    /// `\int_{s0}^inf e^{-s} f(s) ds` in chunks until the tail is negligible.
    fn s_integral(&self, s0: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
        let mut parts = Vec::new();
        let mut total = 0.0f64;
        let mut k = 0usize;
        loop {
            let (a, b) = (k as f64 * S_CHUNK, (k + 1) as f64 * S_CHUNK);
            let r = quad::adaptive(|t| (-t).exp() * f(s0 + t), a, b, 1e-15 * total.abs().max(1e-300), 1e-11);
            if !r.value.is_finite() {
                return Err(Error::NonConvergent(format!("pre-jump integral is not finite near s = {}", s0 + a)));
            }
            parts.push(r.value);
            total = neumaier(parts.iter().copied());
            k += 1;
            if (k >= 4 && r.value.abs() <= 1e-16 * total.abs()) || b >= S_MAX {
                break;
            }
        }
        Ok((-s0).exp() * total)
    }

    /// `k(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::InvalidArgument(format!("k({x}, {y})")));
        }
        let s0 = self.s_of(y, x.max(y)).max(0.0);
        let kern = self.spec.kernel();
        self.s_integral(s0, |s| {
            let z = self.pre_jump(y, s);
            if !z.is_finite() {
                return f64::NAN;
            }
            if z <= x {
                return 0.0;
            }
            kern.transition_density(x, z).unwrap_or(f64::NAN)
        })
    }

    /// `P(xi_1 <= r | xi_0 = y)`.
    pub fn cdf(&self, r: f64, y: f64) -> Result<f64> {
        let kern = self.spec.kernel();
        self.s_integral(0.0, |s| {
            let z = self.pre_jump(y, s);
            kern.cdf(z, r).unwrap_or(f64::NAN)
        })
    }

    /// `KV(y) = \int V(x) k(x, y) x dx`.
    pub fn expectation(&self, v: &dyn Fn(f64) -> f64, y: f64) -> Result<f64> {
        let kern = self.spec.kernel();
        self.s_integral(0.0, |s| {
            let z = self.pre_jump(y, s);
            if !z.is_finite() {
                return f64::NAN;
            }
            // \int_0^1 V(r z) b(r z, z) r z dr
            quad::integrate_from_zero(
                |r| {
                    let b = kern.density(r * z, z).unwrap_or(f64::NAN);
                    v(r * z) * b * r * z
                },
                1.0,
                1e-300,
                1e-11,
            )
            .value
        })
    }

    /// `\int k(x, y) x dx` by direct quadrature in `x`.
    pub fn normalization(&self, y: f64) -> Result<f64> {
        let f = |x: f64| self.density(x, y).unwrap_or(f64::NAN) * x;
        let lo = quad::integrate_from_zero(f, y, 1e-300, 1e-10);
        let hi = quad::integrate_to_infinity(f, y, 1e-300, 1e-10);
        if !(lo.value + hi.value).is_finite() {
            return Err(Error::NonConvergent(format!("normalization at y = {y}")));
        }
        Ok(lo.value + hi.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    /// Least-squares slope of `KV` against `V` over the probes.
    pub c_hat: f64,
    /// Smallest `d` with `KV <= c_hat V + d` on the probes.
    pub d_hat: f64,
    /// `(r, \int inf_{0<y<r} k(x, y) x dx)` per probe radius.
    pub lower_bounds: Vec<(f64, f64)>,
    /// `(y, V(y), KV(y))` per probe.
    pub values: Vec<(f64, f64, f64)>,
    pub pass: bool,
}

pub const LYAPUNOV_C_MAX: f64 = 0.99;
pub const LOWER_BOUND_MIN: f64 = 1e-6;
const LOWER_BOUND_RADII: [f64; 3] = [0.1, 1.0, 10.0];

/// Drift check `KV <= c V + d` with `c < 1`, plus the lower-bound condition.
pub fn lyapunov_check(kern: &EmbeddedKernel, v: &dyn Fn(f64) -> f64, probes: &[f64]) -> Result<LyapunovReport> {
    let checks: Vec<f64> = [1.0, 1e3, 1e6, 1e9, 1e12].iter().map(|&x| v(x)).collect();
    let rising = checks.windows(2).all(|w| w[1] > w[0]) && checks.iter().all(|c| c.is_finite() && *c >= 0.0);
    if !rising || checks[4] < 2.0 * checks[0].max(1.0) {
        return Err(Error::InvalidArgument("V must be nonnegative and grow without bound".into()));
    }
    if probes.len() < 2 {
        return Err(Error::InvalidArgument("need at least two probes".into()));
    }
    let mut values = Vec::with_capacity(probes.len());
    let mut finite = true;
    for &y in probes {
        let kv = kern.expectation(v, y).unwrap_or(f64::INFINITY);
        finite &= kv.is_finite();
        values.push((y, v(y), kv));
    }
    let (c_hat, d_hat) = if finite {
        let n = values.len() as f64;
        let mv = values.iter().map(|t| t.1).sum::<f64>() / n;
        let mk = values.iter().map(|t| t.2).sum::<f64>() / n;
        let sxy: f64 = values.iter().map(|t| (t.1 - mv) * (t.2 - mk)).sum();
        let sxx: f64 = values.iter().map(|t| (t.1 - mv) * (t.1 - mv)).sum();
        let c = sxy / sxx;
        let d = values.iter().map(|t| t.2 - c * t.1).fold(0.0, f64::max);
        (c, d)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let mut lower_bounds = Vec::new();
    for r in LOWER_BOUND_RADII {
        lower_bounds.push((r, lower_bound(kern, r)));
    }
    let pass = c_hat.is_finite()
        && c_hat <= LYAPUNOV_C_MAX
        && d_hat.is_finite()
        && lower_bounds.iter().all(|&(_, b)| b > LOWER_BOUND_MIN);
    Ok(LyapunovReport { c_hat, d_hat, lower_bounds, values, pass })
}

/// `\int inf_{0<y<r} k(x, y) x dx`, with the infimum over a log grid of `y`.
fn lower_bound(kern: &EmbeddedKernel, r: f64) -> f64 {
    let ys: Vec<f64> = (0..24).map(|k| r * 10f64.powf(-12.0 + 12.0 * k as f64 / 24.0)).collect();
    let (lo, hi) = ((r * 1e-8).ln(), (r * 1e4).ln());
    let panels = 48;
    let h = (hi - lo) / panels as f64;
    let mut parts = Vec::new();
    for p in 0..panels {
        for (u, w) in GL4.points(lo + p as f64 * h, lo + (p + 1) as f64 * h) {
            let x = u.exp();
            let m = ys.iter().map(|&y| kern.density(x, y).unwrap_or(f64::NAN)).fold(f64::INFINITY, f64::min);
            parts.push(w * m * x * x);
        }
    }
    let v = neumaier(parts);
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests;
