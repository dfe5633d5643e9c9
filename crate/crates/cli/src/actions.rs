//! One runner per subcommand. Each writes its CSV files into the output
//! directory and reports their names.

use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use pdmp_core::characteristics::{CharacteristicsSpec, DivergenceStatus, Regime};
use pdmp_core::density::{DensityEngine, GridDensity, LogGrid, SeriesOptions};
use pdmp_core::diagnose::{
    classify, classify_dual, classify_power_family, write_decision_csv, Classification, ClassifyOptions, DecisionRow,
};
use pdmp_core::oracles::TauOracle;
use pdmp_core::rng::PathRng;
use pdmp_core::simulate::{estimate_survival_mass, par_paths, simulate_chain, state_at, McConfig, StateAt};
use pdmp_core::Error;

use crate::config::{GridConfig, InitialConfig, Resolved};
use crate::error::{model_err, CliError};

#[derive(Debug, Default)]
pub struct Report {
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    /// Set when a numerical procedure stopped short of its tolerance; outputs are still written.
    pub non_converged: Option<String>,
}

struct Out<'a> {
    dir: &'a Path,
    report: Report,
}

impl Out<'_> {
    fn csv(&mut self, name: &str, header: &[&str]) -> Result<csv::Writer<File>, CliError> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        w.write_record(header)?;
        self.report.files.push(name.to_string());
        Ok(w)
    }

    fn core_file(&mut self, name: &str, f: impl FnOnce(&Path) -> pdmp_core::Result<()>) -> Result<(), CliError> {
        f(&self.dir.join(name)).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.report.files.push(name.to_string());
        Ok(())
    }
}

/// Shortest round-trip form; exponent notation for very small or large magnitudes.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), num)
}

fn mc(r: &Resolved) -> McConfig {
    McConfig { seed: r.seed, workers: r.workers }
}

pub fn run(r: &Resolved) -> Result<Report, CliError> {
    let spec = r.build_spec()?;
    std::fs::create_dir_all(&r.output).map_err(crate::error::io_err(r.output.display()))?;
    let mut out = Out { dir: &r.output, report: Report::default() };
    use crate::config::Action::*;
    match r.action {
        Simulate => simulate(r, &spec, &mut out)?,
        Evolve => evolve(r, &spec, &mut out)?,
        Classify => run_classify(r, &spec, &mut out)?,
        Audit => audit(r, &spec, &mut out)?,
        Oracle => oracle(r, &spec, &mut out)?,
    }
    Ok(out.report)
}

fn simulate(r: &Resolved, spec: &CharacteristicsSpec, out: &mut Out) -> Result<(), CliError> {
    let s = &r.config.simulate;
    let trajs = par_paths(s.paths, r.workers, |i| {
        simulate_chain(spec, s.x0, &mut PathRng::new(r.seed, i), s.n_max, s.t_max, i)
    })
    .map_err(model_err("simulate"))?;
    let mut w = out.csv("trajectories.csv", &["path", "n", "t", "x"])?;
    for t in &trajs {
        t.write_csv(&mut w)?;
    }
    w.flush().map_err(crate::error::io_err("trajectories.csv"))?;
    let mut w = out.csv("paths.csv", &["path", "status", "jumps", "last_time", "exit_time"])?;
    for t in &trajs {
        w.write_record([t.path_id.to_string(), t.status.as_str().into(), t.jumps().to_string(), num(t.last_time()), opt(t.exit_time)])?;
    }
    w.flush().map_err(crate::error::io_err("paths.csv"))?;
    if !s.times.is_empty() {
        let mut w = out.csv("states.csv", &["path", "t", "state"])?;
        for tr in &trajs {
            for &t in &s.times {
                let v = match state_at(spec, tr, t) {
                    Ok(StateAt::State(x)) => num(x),
                    Ok(StateAt::Cemetery) => "cemetery".into(),
                    Err(Error::HorizonExceeded { .. }) => "beyond_horizon".into(),
                    Err(e) => return Err(model_err("simulate.times")(e)),
                };
                w.write_record([tr.path_id.to_string(), num(t), v])?;
            }
        }
        w.flush().map_err(crate::error::io_err("states.csv"))?;
    }
    Ok(())
}

fn grid(field: &str, g: &GridConfig) -> Result<Arc<LogGrid>, CliError> {
    LogGrid::new(g.x_min, g.x_max, g.cells).map_err(model_err(field))
}

fn initial(field: &str, grid: &Arc<LogGrid>, u: &InitialConfig) -> Result<GridDensity, CliError> {
    let u = match *u {
        InitialConfig::Uniform { lo, hi } => GridDensity::uniform(grid.clone(), lo, hi).map_err(model_err(field))?,
        InitialConfig::Exponential { scale } => GridDensity::from_fn(grid.clone(), move |x| (-x / scale).exp()),
    };
    let m = u.total_mass();
    if !(m > 0.0) {
        return Err(CliError::Model(format!("{field}: no mass on the grid")));
    }
    Ok(u.scaled(1.0 / m))
}

/// Oracle for the surviving mass when the model is pure power fragmentation.
fn mass_oracle(spec: &CharacteristicsSpec) -> Option<(TauOracle, bool)> {
    let o = TauOracle::from_spec(spec).ok()?;
    let s = (o.nu + 2.0) / o.gamma;
    Some((o, (s - s.round()).abs() < 1e-12))
}

fn evolve(r: &Resolved, spec: &CharacteristicsSpec, out: &mut Out) -> Result<(), CliError> {
    let e = &r.config.evolve;
    let g = grid("evolve.grid", &e.grid)?;
    let u = initial("evolve.initial", &g, &e.initial)?;
    let engine = DensityEngine::new(spec, g).map_err(model_err("model.kernel"))?;
    let oracle = mass_oracle(spec);
    let opts = SeriesOptions { max_terms: e.max_terms, time_steps: e.time_steps, tail_tol: e.tail_tol };
    let mut mass = out.csv(
        "mass.csv",
        &[
            "t", "grid_mass", "sub_grid_mass", "super_grid_mass", "total_mass", "terms", "converged", "mc_mass", "mc_se",
            "oracle_mass", "rel_error", "tolerance", "pass",
        ],
    )?;
    let mut dens = out.csv("densities.csv", &["t", "node", "cell_mass"])?;
    let mut traces = out.csv("traces.csv", &["t", "n", "term_norm", "residual", "tail_norm"])?;
    let mut stalled = Vec::new();
    for &t in &e.times {
        let (p, trace) = engine.dyson_phillips(t, &u, opts).map_err(model_err("evolve"))?;
        if !trace.converged {
            stalled.push(num(t));
        }
        let (mc_mass, mc_se) = if e.paths > 0 {
            let est = estimate_survival_mass(spec, &u, t, e.paths, e.n_max, mc(r)).map_err(model_err("evolve.paths"))?;
            (Some(est.value), Some(est.std_error))
        } else {
            (None, None)
        };
        let exact = match &oracle {
            Some((o, true)) => Some(o.exact_mass(t, &u).map_err(model_err("evolve oracle"))?),
            Some((o, false)) => Some(o.ssest_bound(t, &u).map_err(model_err("evolve oracle"))?),
            None => None,
        };
        let rel = exact.map(|x| (p.mass() - x).abs() / x.abs().max(f64::MIN_POSITIVE));
        let pass = rel.map_or(String::new(), |v| (v <= e.tolerance).to_string());
        if rel.is_some_and(|v| v > e.tolerance) {
            out.report.warnings.push(format!("t = {t}: grid mass differs from the oracle by {:.3e} (relative)", rel.unwrap()));
        }
        mass.write_record([
            num(t),
            num(p.mass()),
            num(p.sub_grid_mass()),
            num(p.super_grid_mass()),
            num(p.total_mass()),
            trace.terms().to_string(),
            trace.converged.to_string(),
            opt(mc_mass),
            opt(mc_se),
            opt(exact),
            opt(rel),
            num(e.tolerance),
            pass,
        ])?;
        dens.write_record([num(t), "0".into(), num(p.sub_grid_mass())])?;
        for (x, m) in p.grid().nodes().iter().zip(p.masses()) {
            dens.write_record([num(t), num(*x), num(*m)])?;
        }
        dens.write_record([num(t), "inf".into(), num(p.super_grid_mass())])?;
        for (n, a) in trace.term_norms.iter().enumerate() {
            traces.write_record([num(t), n.to_string(), num(*a), opt(trace.residuals.get(n).copied()), opt(trace.tail_norms.get(n).copied())])?;
        }
    }
    for (w, name) in [(&mut mass, "mass.csv"), (&mut dens, "densities.csv"), (&mut traces, "traces.csv")] {
        w.flush().map_err(crate::error::io_err(name))?;
    }
    if !stalled.is_empty() {
        out.report.non_converged =
            Some(format!("series tail above {} after {} terms at t = {}", e.tail_tol, e.max_terms, stalled.join(", ")));
    }
    Ok(())
}

fn run_classify(r: &Resolved, spec: &CharacteristicsSpec, out: &mut Out) -> Result<(), CliError> {
    let c = &r.config.classify;
    let opts = ClassifyOptions {
        lambdas: c.lambdas.clone(),
        probes: c.probes.clone(),
        n_paths: c.paths,
        n_max: c.n_max,
        mc: mc(r),
        ..ClassifyOptions::default()
    };
    let mut out_of_regime = None;
    let monte_carlo = classify(spec, &opts).map_err(model_err("classify"))?;
    out.core_file("evidence_mc.csv", |p| monte_carlo.write_evidence_csv(p))?;
    let mut results: Vec<Classification> = vec![monte_carlo];
    if c.dual && spec.regime() == Regime::PureJump {
        let engine = DensityEngine::new(spec, grid("classify.dual_grid", &c.dual_grid)?).map_err(model_err("model.kernel"))?;
        let dual = classify_dual(&engine, &opts, c.dual_iterations).map_err(model_err("classify dual iteration"))?;
        out.core_file("evidence_dual.csv", |p| dual.write_evidence_csv(p))?;
        results.push(dual);
    }
    let mut closed = None;
    if let Some((regime, alpha, beta, a)) = r.power_family() {
        match classify_power_family(regime, alpha, beta, a, spec.kernel()) {
            Ok(cl) => closed = Some(cl),
            Err(Error::OutOfRegime(m)) | Err(Error::NotEnabled(m)) => {
                out_of_regime = Some(m);
            }
            Err(e) => return Err(model_err("classify closed form")(e)),
        }
    }
    if let Some(cl) = &closed {
        for other in &results {
            if !cl.verdict.compatible(other.verdict) {
                out.report.warnings.push(format!(
                    "{} verdict '{}' contradicts the closed form '{}'",
                    other.method.as_str(),
                    other.verdict.as_str(),
                    cl.verdict.as_str()
                ));
            }
        }
    }
    results.extend(closed);
    let mut w = out.csv("verdicts.csv", &["method", "verdict", "note"])?;
    for cl in &results {
        w.write_record([cl.method.as_str(), cl.verdict.as_str(), &cl.note])?;
    }
    if let Some(m) = &out_of_regime {
        w.write_record(["closed_form_table", "out_of_regime", m])?;
    }
    w.flush().map_err(crate::error::io_err("verdicts.csv"))?;
    if let (Some((_, alpha, beta, a)), Some(nu)) = (r.power_family(), r.kernel_nu()) {
        let decision: Vec<DecisionRow> = results
            .iter()
            .map(|cl| DecisionRow { alpha, beta, a, nu, verdict: cl.verdict, source: cl.method })
            .collect();
        out.core_file("decision.csv", |p| write_decision_csv(&decision, p))?;
    }
    Ok(())
}

fn audit(r: &Resolved, spec: &CharacteristicsSpec, out: &mut Out) -> Result<(), CliError> {
    let a = &r.config.audit;
    let kernel = spec.kernel();
    let mut failures = 0;
    let mut w = out.csv("audit.csv", &["y", "residual", "tolerance", "pass"])?;
    for &y in &a.sizes {
        let res = kernel.mass_condition_residual(y).map_err(model_err("audit.sizes"))?;
        let pass = res <= a.tolerance;
        failures += (!pass) as usize;
        w.write_record([num(y), num(res), num(a.tolerance), pass.to_string()])?;
    }
    w.flush().map_err(crate::error::io_err("audit.csv"))?;
    let mut w = out.csv("sampling.csv", &["y", "q", "sample", "cdf_at_sample", "error", "pass"])?;
    for &y in &a.sizes {
        for &q in &a.quantiles {
            let x = kernel.sample(q, y).map_err(model_err("audit.quantiles"))?;
            let c = kernel.cdf(y, x).map_err(model_err("audit.quantiles"))?;
            let err = (c - q).abs();
            let pass = err <= SAMPLING_TOL && x > 0.0 && x <= y;
            failures += (!pass) as usize;
            w.write_record([num(y), num(q), num(x), num(c), num(err), pass.to_string()])?;
        }
    }
    w.flush().map_err(crate::error::io_err("sampling.csv"))?;
    if spec.maps().is_some() {
        let mut w = out.csv("characteristics.csv", &["quantity", "value"])?;
        w.write_record(["consistency_residual".to_string(), num(spec.consistency_residual())])?;
        let div = match spec.divergence() {
            DivergenceStatus::NotApplicable => "not_applicable".to_string(),
            DivergenceStatus::Verified => "verified".to_string(),
            DivergenceStatus::DeclaredUnverified(m) => format!("declared_unverified: {m}"),
        };
        w.write_record(["divergence".to_string(), div])?;
        w.flush().map_err(crate::error::io_err("characteristics.csv"))?;
    }
    if failures > 0 {
        out.report.warnings.push(format!("{failures} audit rows failed"));
    }
    Ok(())
}

const SAMPLING_TOL: f64 = 1e-7;

fn oracle(r: &Resolved, spec: &CharacteristicsSpec, out: &mut Out) -> Result<(), CliError> {
    let o = &r.config.oracle;
    let (tau, integer) = mass_oracle(spec).ok_or_else(|| {
        CliError::Model("model: the oracle needs pure jumps, a rate a x^alpha with alpha < 0 and a power kernel".into())
    })?;
    let mut w = out.csv("survival.csv", &["x", "t", "survival"])?;
    for &x in &o.sizes {
        for &t in &o.times {
            w.write_record([num(x), num(t), num(tau.survival(x, t))])?;
        }
    }
    w.flush().map_err(crate::error::io_err("survival.csv"))?;
    let mut w = out.csv("laplace.csv", &["x", "lambda", "laplace"])?;
    for &x in &o.sizes {
        for &l in &o.lambdas {
            w.write_record([num(x), num(l), num(tau.laplace_explosion(x, l))])?;
        }
    }
    w.flush().map_err(crate::error::io_err("laplace.csv"))?;
    let mut w = out.csv("tau.csv", &["q", "tail", "cdf"])?;
    for k in 0..=80 {
        let q = k as f64 * 0.25;
        w.write_record([num(q), num(tau.tau_tail(q)), num(tau.tau_cdf(q))])?;
    }
    w.flush().map_err(crate::error::io_err("tau.csv"))?;
    let g = grid("oracle.grid", &o.grid)?;
    let u = initial("oracle.initial", &g, &o.initial)?;
    let mut w = out.csv("mass.csv", &["t", "exact_mass", "incomplete_gamma_mass"])?;
    for &t in &o.times {
        let exact = if integer { Some(tau.exact_mass(t, &u).map_err(model_err("oracle"))?) } else { None };
        let gamma = tau.ssest_bound(t, &u).map_err(model_err("oracle"))?;
        w.write_record([num(t), opt(exact), num(gamma)])?;
    }
    w.flush().map_err(crate::error::io_err("mass.csv"))?;
    Ok(())
}
