//! Exact simulation of the embedded jump chain and Monte Carlo estimators of
//! explosion probabilities and surviving mass.

use std::io::Write;

use rayon::prelude::*;

use crate::characteristics::{CharacteristicsSpec, Regime};
use crate::density::GridDensity;
use crate::error::{Error, Result};
use crate::quad::neumaier;
use crate::rng::{ChainDraws, PathRng, EXP1_MAX};

/// States are clamped into `[STATE_FLOOR, STATE_CEILING]` after every jump.
pub const STATE_FLOOR: f64 = f64::MIN_POSITIVE;
pub const STATE_CEILING: f64 = f64::MAX;

/// Beyond `LAPLACE_CUTOFF / lambda` the weight `e^{-lambda t}` is exactly 0 in f64.
pub const LAPLACE_CUTOFF: f64 = 746.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathStatus {
    AliveAtHorizon,
    ExhaustedJumpBudget,
    DomainExitAtZero,
}

impl PathStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathStatus::AliveAtHorizon => "alive_at_horizon",
            PathStatus::ExhaustedJumpBudget => "exhausted_jump_budget",
            PathStatus::DomainExitAtZero => "domain_exit_at_zero",
        }
    }
}

/// Jump times `t_0 = 0 < t_1 < ...` and post-jump states `xi_0, xi_1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path_id: u64,
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub status: PathStatus,
    pub horizon: f64,
    /// Time at which the flow reached 0, for `DomainExitAtZero`.
    pub exit_time: Option<f64>,
}

impl Trajectory {
    pub fn jumps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Rows `(path, n, t_n, xi_n)`.
    pub fn write_csv<W: Write>(&self, w: &mut csv::Writer<W>) -> csv::Result<()> {
        for (n, (t, x)) in self.times.iter().zip(&self.positions).enumerate() {
            w.write_record([self.path_id.to_string(), n.to_string(), t.to_string(), x.to_string()])?;
        }
        Ok(())
    }
}

/// Outcome of one jump attempt from `x`.
enum Step {
    Jump { dt: f64, pre: f64 },
    Exit { dt: f64 },
    Never,
}

#[inline]
fn step(spec: &CharacteristicsSpec, x: f64, eps: f64) -> Result<Step> {
    match spec.jump_target(x, eps) {
        Ok((dt, pre)) => Ok(Step::Jump { dt, pre }),
        Err(Error::DomainExit { hit_time }) => Ok(Step::Exit { dt: hit_time }),
        Err(Error::InfiniteHolding) => Ok(Step::Never),
        Err(e) => Err(e),
    }
}

#[inline]
fn clamp_state(x: f64) -> f64 {
    x.clamp(STATE_FLOOR, STATE_CEILING)
}

fn check_start(x0: f64) -> Result<()> {
    if x0 > 0.0 && x0.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("initial state {x0}")))
    }
}

/// Simulates at most `n_max` jumps, stopping once the next jump would fall after `t_max`.
///
/// Each step draws `eps ~ Exp(1)` then `theta ~ U(0, 1)`.
pub fn simulate_chain<R: ChainDraws>(
    spec: &CharacteristicsSpec,
    x0: f64,
    rng: &mut R,
    n_max: usize,
    t_max: f64,
    path_id: u64,
) -> Result<Trajectory> {
    check_start(x0)?;
    let mut times = vec![0.0];
    let mut positions = vec![x0];
    let (mut t, mut x) = (0.0f64, x0);
    let mut status = PathStatus::ExhaustedJumpBudget;
    let mut exit_time = None;
    for _ in 0..n_max {
        let eps = rng.exp1();
        let theta = rng.uniform();
        match step(spec, x, eps)? {
            Step::Never => {
                status = PathStatus::AliveAtHorizon;
                break;
            }
            Step::Exit { dt } => {
                if t + dt > t_max {
                    status = PathStatus::AliveAtHorizon;
                } else {
                    status = PathStatus::DomainExitAtZero;
                    exit_time = Some(t + dt);
                }
                break;
            }
            Step::Jump { dt, pre } => {
                let tn = t + dt;
                if tn > t_max {
                    status = PathStatus::AliveAtHorizon;
                    break;
                }
                x = clamp_state(spec.kernel().sample(theta, pre)?);
                t = tn;
                times.push(t);
                positions.push(x);
            }
        }
    }
    Ok(Trajectory { path_id, times, positions, status, horizon: t_max, exit_time })
}

/// State of the process at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateAt {
    State(f64),
    /// Removed: after explosion (as bracketed by the jump budget) or after exit at 0.
    Cemetery,
}

/// Position at time `t`: `pi_{t - t_n} xi_n` for `t_n <= t < t_{n+1}`.
pub fn state_at(spec: &CharacteristicsSpec, traj: &Trajectory, t: f64) -> Result<StateAt> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time {t}")));
    }
    if traj.status == PathStatus::AliveAtHorizon && t > traj.horizon {
        return Err(Error::HorizonExceeded { t, horizon: traj.horizon });
    }
    let n = traj.times.partition_point(|&s| s <= t) - 1;
    let last = traj.times.len() - 1;
    if n == last {
        match traj.status {
            PathStatus::ExhaustedJumpBudget => return Ok(StateAt::Cemetery),
            PathStatus::DomainExitAtZero if t >= traj.exit_time.unwrap_or(f64::INFINITY) => return Ok(StateAt::Cemetery),
            _ => {}
        }
    }
    match spec.flow(t - traj.times[n], traj.positions[n]) {
        Ok(y) => Ok(StateAt::State(y)),
        Err(Error::DomainExit { .. }) | Err(Error::FlowBlowUp { .. }) => Ok(StateAt::Cemetery),
        Err(e) => Err(e),
    }
}

/// Summary of a path needed by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    /// `t_N` after the full budget, the exit time, or `+inf` if the path outlived `t_max`.
    pub end_time: f64,
    /// Same quantity with the budget cut at `checkpoint` jumps.
    pub checkpoint_time: f64,
    pub status: PathStatus,
    pub jumps: usize,
}

/// Lean version of [`simulate_chain`] that keeps only the summary.
///
/// A pure-jump fragmentation path sitting at [`STATE_FLOOR`] whose largest
/// possible holding time no longer changes `t` is frozen: every remaining jump
/// returns to the floor and leaves `t` unchanged, so the loop stops early with
/// the same `t_N` the full loop would produce.
pub fn run_path<R: ChainDraws>(
    spec: &CharacteristicsSpec,
    x0: f64,
    rng: &mut R,
    n_max: usize,
    t_max: f64,
    checkpoint: usize,
) -> Result<PathOutcome> {
    check_start(x0)?;
    let can_freeze = spec.regime() == Regime::PureJump && spec.kernel().is_fragmentation();
    let floor_dt = EXP1_MAX / spec.phi(STATE_FLOOR);
    let (mut t, mut x) = (0.0f64, x0);
    let mut checkpoint_time = if checkpoint == 0 { 0.0 } else { f64::INFINITY };
    for n in 1..=n_max {
        if can_freeze && x == STATE_FLOOR && t + floor_dt == t {
            if n <= checkpoint {
                checkpoint_time = t;
            }
            return Ok(PathOutcome { end_time: t, checkpoint_time, status: PathStatus::ExhaustedJumpBudget, jumps: n_max });
        }
        let eps = rng.exp1();
        let theta = rng.uniform();
        match step(spec, x, eps)? {
            Step::Never => {
                return Ok(PathOutcome { end_time: f64::INFINITY, checkpoint_time, status: PathStatus::AliveAtHorizon, jumps: n - 1 });
            }
            Step::Exit { dt } => {
                let te = t + dt;
                if te > t_max {
                    return Ok(PathOutcome { end_time: f64::INFINITY, checkpoint_time, status: PathStatus::AliveAtHorizon, jumps: n - 1 });
                }
                if n <= checkpoint {
                    checkpoint_time = te;
                }
                return Ok(PathOutcome { end_time: te, checkpoint_time, status: PathStatus::DomainExitAtZero, jumps: n - 1 });
            }
            Step::Jump { dt, pre } => {
                let tn = t + dt;
                if tn > t_max {
                    return Ok(PathOutcome { end_time: f64::INFINITY, checkpoint_time, status: PathStatus::AliveAtHorizon, jumps: n - 1 });
                }
                x = clamp_state(spec.kernel().sample(theta, pre)?);
                t = tn;
                if n == checkpoint {
                    checkpoint_time = t;
                }
            }
        }
    }
    Ok(PathOutcome { end_time: t, checkpoint_time, status: PathStatus::ExhaustedJumpBudget, jumps: n_max })
}

/// Seed and worker count for Monte Carlo runs. Results do not depend on `workers`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub seed: u64,
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { seed: 42, workers: 1 }
    }
}

/// Maps `f` over path indices, in index order.
pub fn par_paths<T: Send>(n: usize, workers: usize, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    if workers <= 1 {
        return (0..n as u64).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| (0..n as u64).into_par_iter().map(f).collect())
}

/// Monte Carlo estimate with budget diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Same estimator with the jump budget halved; `value - half_budget_value`
    /// measures sensitivity to the budget.
    pub half_budget_value: f64,
    pub exhausted_fraction: f64,
    pub exit_fraction: f64,
}

impl Estimate {
    fn from_samples(samples: &[(f64, f64)], outcomes: &[PathStatus], binary: bool) -> Estimate {
        let n = samples.len() as f64;
        let value = neumaier(samples.iter().map(|s| s.0)) / n;
        let half = neumaier(samples.iter().map(|s| s.1)) / n;
        let var = if binary {
            value * (1.0 - value)
        } else {
            neumaier(samples.iter().map(|s| (s.0 - value) * (s.0 - value))) / (n - 1.0)
        };
        let count = |st: PathStatus| outcomes.iter().filter(|&&s| s == st).count() as f64 / n;
        Estimate {
            value,
            std_error: (var.max(0.0) / n).sqrt(),
            n_paths: samples.len(),
            half_budget_value: half,
            exhausted_fraction: count(PathStatus::ExhaustedJumpBudget),
            exit_fraction: count(PathStatus::DomainExitAtZero),
        }
    }
}

pub const MIN_PATHS: usize = 100;

fn check_budget(n_paths: usize, n_max: usize) -> Result<()> {
    if n_paths < MIN_PATHS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_PATHS} paths, got {n_paths}")));
    }
    if n_max < 2 {
        return Err(Error::InvalidArgument("jump budget must be at least 2".into()));
    }
    Ok(())
}

/// `P_x(t_N <= t)`: probability that the budget of `n_max` jumps (or an exit
/// at 0) is used up by time `t`, a lower bound for `P_x(t_inf <= t)`.
pub fn estimate_explosion_cdf(
    spec: &CharacteristicsSpec,
    x0: f64,
    t: f64,
    n_paths: usize,
    n_max: usize,
    cfg: McConfig,
) -> Result<Estimate> {
    check_budget(n_paths, n_max)?;
    let out = par_paths(n_paths, cfg.workers, |i| {
        let mut rng = PathRng::new(cfg.seed, i);
        run_path(spec, x0, &mut rng, n_max, t, n_max / 2)
    })?;
    let samples: Vec<(f64, f64)> =
        out.iter().map(|o| ((o.end_time <= t) as u8 as f64, (o.checkpoint_time <= t) as u8 as f64)).collect();
    let status: Vec<PathStatus> = out.iter().map(|o| o.status).collect();
    Ok(Estimate::from_samples(&samples, &status, true))
}

/// `E_x e^{-lambda t_N}`, an upper bound for `E_x e^{-lambda t_inf}`.
pub fn estimate_laplace_explosion(
    spec: &CharacteristicsSpec,
    x0: f64,
    lambda: f64,
    n_paths: usize,
    n_max: usize,
    cfg: McConfig,
) -> Result<Estimate> {
    check_budget(n_paths, n_max)?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
    }
    let t_max = LAPLACE_CUTOFF / lambda;
    let out = par_paths(n_paths, cfg.workers, |i| {
        let mut rng = PathRng::new(cfg.seed, i);
        run_path(spec, x0, &mut rng, n_max, t_max, n_max / 2)
    })?;
    let samples: Vec<(f64, f64)> =
        out.iter().map(|o| ((-lambda * o.end_time).exp(), (-lambda * o.checkpoint_time).exp())).collect();
    let status: Vec<PathStatus> = out.iter().map(|o| o.status).collect();
    Ok(Estimate::from_samples(&samples, &status, false))
}

/// Draws a starting point from a grid density, using stratum `(i + v) / n`.
pub fn sample_initial(u0: &GridDensity, cdf: &[f64], stratum: f64) -> f64 {
    let total = *cdf.last().unwrap();
    let target = stratum * total;
    let k = cdf.partition_point(|&c| c < target).min(cdf.len() - 1);
    let before = if k == 0 { 0.0 } else { cdf[k - 1] };
    let m = u0.masses()[k];
    let w = if m > 0.0 { ((target - before) / m).clamp(0.0, 1.0) } else { 0.5 };
    let e = u0.grid().edges();
    // piecewise constant u: x^2 is uniform inside the cell
    let (a, b) = (e[k], e[k + 1]);
    (a * a + w * (b - a) * (b + a)).sqrt().clamp(a, b)
}

const DENSITY_TOL: f64 = 1e-6;

/// `\int P_x(t_N > t) u0(x) x dx`: mass still in `(0, inf)` at time `t`.
pub fn estimate_survival_mass(
    spec: &CharacteristicsSpec,
    u0: &GridDensity,
    t: f64,
    n_paths: usize,
    n_max: usize,
    cfg: McConfig,
) -> Result<Estimate> {
    check_budget(n_paths, n_max)?;
    let mass = u0.total_mass();
    if !u0.is_nonnegative() || (mass - 1.0).abs() > DENSITY_TOL || u0.sub_grid_mass() + u0.super_grid_mass() > DENSITY_TOL {
        return Err(Error::NotADensity { mass });
    }
    let mut cdf = Vec::with_capacity(u0.masses().len());
    let mut acc = 0.0;
    for m in u0.masses() {
        acc += m;
        cdf.push(acc);
    }
    let n = n_paths as f64;
    let out = par_paths(n_paths, cfg.workers, |i| {
        let mut rng = PathRng::new(cfg.seed, i);
        let x0 = sample_initial(u0, &cdf, (i as f64 + rng.uniform()) / n);
        run_path(spec, x0, &mut rng, n_max, t, n_max / 2)
    })?;
    let samples: Vec<(f64, f64)> =
        out.iter().map(|o| ((o.end_time > t) as u8 as f64, (o.checkpoint_time > t) as u8 as f64)).collect();
    let status: Vec<PathStatus> = out.iter().map(|o| o.status).collect();
    Ok(Estimate::from_samples(&samples, &status, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::{RateSpec, SemiflowSpec};
    use crate::func::ScalarFn;
    use crate::kernels::JumpKernel;
    use crate::rng::FixedDraws;

    fn pure(alpha: f64) -> CharacteristicsSpec {
        CharacteristicsSpec::new(SemiflowSpec::pure_jump(), RateSpec::power(1.0, alpha), JumpKernel::homogeneous_power(0.0).unwrap())
            .unwrap()
    }

    #[test]
    fn first_step_by_hand() {
        let spec = pure(-1.0);
        let mut d = FixedDraws::new(vec![2f64.ln()], vec![0.25]);
        let tr = simulate_chain(&spec, 1.0, &mut d, 1, f64::INFINITY, 0).unwrap();
        assert!((tr.times[1] - 2f64.ln()).abs() < 1e-15);
        assert_eq!(tr.positions[1], 0.5);
    }

    #[test]
    fn constant_rate_growth_holding() {
        let spec = CharacteristicsSpec::new(
            SemiflowSpec::growth(ScalarFn::power(1.0, 1.0)),
            RateSpec::constant(2.0),
            JumpKernel::homogeneous_power(0.0).unwrap(),
        )
        .unwrap();
        let mut d = FixedDraws::new(vec![1.0], vec![0.5]);
        let tr = simulate_chain(&spec, 1.0, &mut d, 1, f64::INFINITY, 0).unwrap();
        assert!((tr.times[1] - 0.5).abs() < 1e-15);
        // pre-jump position e^{0.5}, then the uniform split at sqrt(0.5)
        assert!((tr.positions[1] - 0.5f64.exp() * 0.5f64.sqrt()).abs() < 1e-14);
        match state_at(&spec, &tr, 0.25).unwrap() {
            StateAt::State(y) => assert!((y - 0.25f64.exp()).abs() < 1e-14),
            s => panic!("{s:?}"),
        }
        assert!(matches!(state_at(&spec, &tr, 0.75).unwrap(), StateAt::Cemetery));
    }

    #[test]
    fn horizon_and_exit() {
        let spec = pure(0.0);
        let mut rng = PathRng::new(1, 0);
        let tr = simulate_chain(&spec, 1.0, &mut rng, 10_000, 5.0, 0).unwrap();
        assert_eq!(tr.status, PathStatus::AliveAtHorizon);
        assert!(tr.last_time() <= 5.0);
        assert!(matches!(state_at(&spec, &tr, 6.0), Err(Error::HorizonExceeded { .. })));
        // unit-speed decay with a tiny rate leaves through 0
        let spec = CharacteristicsSpec::new(
            SemiflowSpec::decay(ScalarFn::constant(1.0)),
            RateSpec::constant(1e-9),
            JumpKernel::homogeneous_power(0.0).unwrap(),
        )
        .unwrap();
        let tr = simulate_chain(&spec, 2.0, &mut rng, 10, 100.0, 0).unwrap();
        assert_eq!(tr.status, PathStatus::DomainExitAtZero);
        assert!((tr.exit_time.unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(state_at(&spec, &tr, 3.0).unwrap(), StateAt::Cemetery));
    }

    #[test]
    fn lean_runner_matches_full_chain() {
        for alpha in [-1.0, -0.5, 0.0] {
            let spec = pure(alpha);
            for path in 0..50 {
                let mut a = PathRng::new(9, path);
                let mut b = PathRng::new(9, path);
                let tr = simulate_chain(&spec, 1.0, &mut a, 3000, 1e6, path).unwrap();
                let o = run_path(&spec, 1.0, &mut b, 3000, 1e6, 1500).unwrap();
                assert_eq!(o.status, tr.status);
                if tr.status == PathStatus::ExhaustedJumpBudget {
                    assert_eq!(o.end_time, tr.last_time(), "alpha={alpha} path={path}");
                    assert_eq!(o.checkpoint_time, tr.times[1500]);
                }
            }
        }
    }

    #[test]
    fn estimators_are_worker_independent() {
        let spec = pure(-1.0);
        let a = estimate_explosion_cdf(&spec, 1.0, 1.0, 400, 500, McConfig { seed: 3, workers: 1 }).unwrap();
        let b = estimate_explosion_cdf(&spec, 1.0, 1.0, 400, 500, McConfig { seed: 3, workers: 3 }).unwrap();
        assert_eq!(a, b);
        let z = estimate_explosion_cdf(&spec, 1.0, 0.0, 200, 500, McConfig::default()).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(matches!(estimate_explosion_cdf(&spec, 1.0, 1.0, 10, 500, McConfig::default()), Err(Error::InvalidArgument(_))));
    }
}
