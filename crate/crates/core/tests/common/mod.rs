//! Shared fixtures and property checks for the integration suites.
#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use pdmp_core::characteristics::{CharacteristicsSpec, RateSpec, Regime, SemiflowSpec};
use pdmp_core::density::{DensityEngine, GridDensity, LogGrid, SeriesOptions};
use pdmp_core::kernels::JumpKernel;
use pdmp_core::{Error, ScalarFn};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn pure(a: f64, alpha: f64, nu: f64) -> CharacteristicsSpec {
    CharacteristicsSpec::new(SemiflowSpec::pure_jump(), RateSpec::power(a, alpha), JumpKernel::homogeneous_power(nu).unwrap())
        .unwrap()
}

pub fn power(regime: Regime, beta: f64, a: f64, alpha: f64, nu: f64) -> CharacteristicsSpec {
    CharacteristicsSpec::new(SemiflowSpec::power(regime, beta), RateSpec::power(a, alpha), JumpKernel::homogeneous_power(nu).unwrap())
        .unwrap()
}

/// Models used by the structural properties: closed-form and tabulated maps
/// in every regime.
pub fn models() -> &'static [CharacteristicsSpec] {
    static M: OnceLock<Vec<CharacteristicsSpec>> = OnceLock::new();
    M.get_or_init(|| {
        let tab_rate = RateSpec::new(ScalarFn::new(|x: f64| 1.0 + x.sqrt()));
        let tab_g = ScalarFn::new(|x: f64| x * (1.0 + 1.0 / (1.0 + x)));
        vec![
            pure(1.0, -1.0, 0.0),
            pure(2.0, 0.5, 1.0),
            power(Regime::Growth, 0.0, 1.0, 1.0, 0.0),
            power(Regime::Growth, 0.5, 1.0, 0.5, -0.5),
            power(Regime::Growth, 1.0, 1.0, -1.0, -1.5),
            power(Regime::Decay, -1.0, 1.0, 1.0, 0.0),
            power(Regime::Decay, 0.0, 1.0, -1.0, 2.0),
            power(Regime::Decay, -1.0, 0.5, -1.0, 0.0),
            CharacteristicsSpec::new(SemiflowSpec::growth(tab_g.clone()), tab_rate.clone(), JumpKernel::homogeneous_power(0.0).unwrap())
                .unwrap(),
            CharacteristicsSpec::new(SemiflowSpec::decay(tab_g), tab_rate, JumpKernel::homogeneous_power(1.0).unwrap()).unwrap(),
        ]
    })
}

/// Fragmentation kernels of every family.
pub fn kernels() -> &'static [JumpKernel] {
    static K: OnceLock<Vec<JumpKernel>> = OnceLock::new();
    K.get_or_init(|| {
        vec![
            JumpKernel::homogeneous_power(0.0).unwrap(),
            JumpKernel::homogeneous_power(-1.5).unwrap(),
            JumpKernel::homogeneous_power(3.0).unwrap(),
            // h(z) = 12 z (1 - z), normalised against z dz
            JumpKernel::homogeneous(ScalarFn::new(|z: f64| 12.0 * z * (1.0 - z))).unwrap(),
            JumpKernel::separable(ScalarFn::power(1.0, 0.5)).unwrap(),
            JumpKernel::separable(ScalarFn::new(|x: f64| (-x).exp())).unwrap(),
            // b(x, y) = 2 / y, written without the homogeneous structure
            JumpKernel::general(|x: f64, y: f64| if x < y { 2.0 / y } else { 0.0 }),
        ]
    })
}

const ENGINE_CELLS: usize = 40;

pub fn engines() -> &'static [DensityEngine] {
    static E: OnceLock<Vec<DensityEngine>> = OnceLock::new();
    E.get_or_init(|| {
        let grid = LogGrid::new(1e-3, 1e3, ENGINE_CELLS).unwrap();
        models().iter().map(|m| DensityEngine::new(m, grid.clone()).unwrap()).collect()
    })
}

pub fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-300
}

pub fn mass_normalization(k: usize, y: f64) -> Result<(), TestCaseError> {
    let kern = &kernels()[k];
    let r = kern.mass_condition_residual(y).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(r < 1e-10, "kernel {k}, y = {y}: residual {r}");
    Ok(())
}

/// `P(kappa(U, y) <= kappa(q, y)) = q` for the quantile sampler.
pub fn sampling_cdf(k: usize, y: f64, q: f64) -> Result<(), TestCaseError> {
    let kern = &kernels()[k];
    let x = kern.sample(q, y).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!(x > 0.0 && x <= y, "sample {x} outside (0, {y}]");
    let c = kern.cdf(y, x).map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert!((c - q).abs() < 1e-7, "kernel {k}, y = {y}: cdf(sample({q})) = {c}");
    Ok(())
}

/// `pi_{t+s} x = pi_t pi_s x`, with exits and blow-ups reported consistently.
pub fn semigroup_law(m: usize, x: f64, t: f64, s: f64) -> Result<(), TestCaseError> {
    let spec = &models()[m];
    let whole = spec.flow(t + s, x);
    match spec.flow(s, x) {
        Ok(y) => match (whole, spec.flow(t, y)) {
            (Ok(a), Ok(b)) => prop_assert!(close(a, b, 1e-8), "model {m}: {a} vs {b}"),
            (Err(_), Err(_)) => {}
            (w, p) => {
                // a boundary hit within rounding of t + s may go either way
                let near = |r: &Result<f64, Error>| match r {
                    Err(Error::DomainExit { hit_time }) | Err(Error::FlowBlowUp { hit_time }) => {
                        (hit_time - t).abs() < 1e-9 * (1.0 + t) || (hit_time - (t + s)).abs() < 1e-9 * (1.0 + t + s)
                    }
                    Ok(v) => *v < 1e-250 || *v > 1e250,
                    _ => false,
                };
                prop_assert!(near(&w) || near(&p), "model {m}: {w:?} vs {p:?}");
            }
        },
        Err(_) => prop_assert!(whole.is_err(), "model {m}: composite flow exists past a boundary"),
    }
    Ok(())
}

/// `phi_x(t) >= q` exactly when `t >= phi_x^{-1}(q)`, away from rounding at the boundary.
pub fn galois(m: usize, x: f64, q: f64, t: f64) -> Result<(), TestCaseError> {
    let spec = &models()[m];
    let cum = spec.cumulative_rate(x, t);
    match spec.inverse_cumulative_rate(x, q) {
        Ok(tau) => {
            if t > tau * (1.0 + 1e-9) + 1e-300 {
                prop_assert!(cum >= q * (1.0 - 1e-9), "model {m}: t = {t} > {tau} but phi_x(t) = {cum} < {q}");
            } else if t < tau * (1.0 - 1e-9) {
                prop_assert!(cum <= q * (1.0 + 1e-9), "model {m}: t = {t} < {tau} but phi_x(t) = {cum} >= {q}");
            }
        }
        // rate never accumulates to q: no finite time reaches it
        Err(Error::InfiniteHolding) | Err(Error::DomainExit { .. }) => prop_assert!(cum <= q * (1.0 + 1e-9)),
        Err(e) => return Err(TestCaseError::fail(e.to_string())),
    }
    Ok(())
}

pub fn density_from(masses: &[f64], grid: &Arc<LogGrid>) -> GridDensity {
    let mut m = vec![0.0; grid.cells()];
    for (i, v) in masses.iter().enumerate() {
        m[(i * 7) % grid.cells()] += v;
    }
    GridDensity::from_masses(grid.clone(), m, 0.0, 0.0).unwrap()
}

/// Nonnegativity, mass non-increase, and `P(t) >= S(t)` on the grid.
pub fn substochastic(m: usize, masses: &[f64], t: f64, lambda: f64) -> Result<(), TestCaseError> {
    let eng = &engines()[m];
    let u = density_from(masses, eng.grid());
    let total = u.total_mass();
    let tol = 1e-9 * total;
    let s = eng.apply_s(t, &u).unwrap();
    prop_assert!(s.is_nonnegative());
    prop_assert!(s.total_mass() <= total + tol, "model {m}: |S(t)u| = {} > {total}", s.total_mass());
    let r = eng.resolvent(lambda, &u).unwrap();
    prop_assert!(r.is_nonnegative());
    prop_assert!(lambda * r.total_mass() <= total + tol, "model {m}: lambda |Ru| = {}", lambda * r.total_mass());
    let opts = SeriesOptions { max_terms: 12, time_steps: 6, tail_tol: 1e-8 };
    let (p, _) = eng.dyson_phillips(t, &u, opts).unwrap();
    prop_assert!(p.is_nonnegative());
    prop_assert!(p.total_mass() <= total * (1.0 + 1e-6), "model {m}: |P(t)u| = {} > {total}", p.total_mass());
    for (i, (a, b)) in p.masses().iter().zip(s.masses()).enumerate() {
        prop_assert!(*a >= *b - 1e-14 * total, "model {m}, cell {i}: {a} < {b}");
    }
    Ok(())
}

pub fn n_models() -> usize {
    models().len()
}

pub fn n_kernels() -> usize {
    kernels().len()
}
