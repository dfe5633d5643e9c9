use super::*;
use crate::characteristics::{RateSpec, SemiflowSpec};
use crate::oracles::TauOracle;

fn pure(a: f64, alpha: f64) -> CharacteristicsSpec {
    CharacteristicsSpec::new(SemiflowSpec::pure_jump(), RateSpec::power(a, alpha), JumpKernel::homogeneous_power(0.0).unwrap())
        .unwrap()
}

fn growth(beta: f64, a: f64, alpha: f64, nu: f64) -> CharacteristicsSpec {
    CharacteristicsSpec::new(
        SemiflowSpec::power(Regime::Growth, beta),
        RateSpec::power(a, alpha),
        JumpKernel::homogeneous_power(nu).unwrap(),
    )
    .unwrap()
}

#[test]
fn first_jump_laplace() {
    let rows = f_lambda_dual(&pure(1.0, 0.0), 1.0, &[0.3, 3.0], 1, 4000, McConfig::default()).unwrap();
    for e in rows {
        assert!((e.f_hat - 0.5).abs() < 3.0 * e.std_error, "{e:?}");
    }
}

#[test]
fn bounded_rate_iterates_vanish() {
    let rows = f_lambda_dual(&pure(1.0, 0.0), 1.0, &[1.0], 200, 500, McConfig::default()).unwrap();
    assert!(rows[0].f_hat < 1e-20);
    assert!(rows[0].decrement >= 0.0);
}

#[test]
fn fragmentation_matches_gamma_laplace() {
    let spec = pure(1.0, -1.0);
    let rows = f_lambda_dual(&spec, 1.0, &[1.0], 200, 4000, McConfig::default()).unwrap();
    let want = TauOracle::new(0.0, 1.0, 1.0).unwrap().laplace_explosion(1.0, 1.0);
    assert!((rows[0].f_hat - want).abs() < 3.0 * rows[0].std_error, "{} vs {want}", rows[0].f_hat);
}

#[test]
fn worker_count_does_not_change_estimates() {
    let spec = pure(1.0, -1.0);
    let one = f_lambda_dual(&spec, 0.5, &[1.0, 2.0], 50, 300, McConfig { seed: 9, workers: 1 }).unwrap();
    let four = f_lambda_dual(&spec, 0.5, &[1.0, 2.0], 50, 300, McConfig { seed: 9, workers: 4 }).unwrap();
    assert_eq!(one, four);
}

#[test]
fn decision_table_examples() {
    let h2 = JumpKernel::homogeneous_power(0.0).unwrap();
    let v = |r, al, be, a, k: &JumpKernel| classify_power_family(r, al, be, a, k).unwrap().verdict;
    assert_eq!(v(Regime::Growth, 1.0, 0.0, 1.0, &h2), Verdict::Stochastic);
    assert_eq!(v(Regime::Growth, -1.0, 1.0, 1.0, &h2), Verdict::Stochastic);
    assert_eq!(v(Regime::Growth, -1.0, 1.0, 0.25, &h2), Verdict::Stochastic);
    assert_eq!(v(Regime::Growth, -1.0, 1.0, 0.4, &h2), Verdict::Stochastic);
    let steep = JumpKernel::homogeneous_power(-1.5).unwrap();
    assert_eq!(v(Regime::Growth, -1.0, 1.0, 1.0, &steep), Verdict::StronglyStable);
    assert_eq!(v(Regime::Growth, 0.0, 0.0, 1.0, &h2), Verdict::Stochastic);
    assert_eq!(v(Regime::Decay, 1.0, -1.0, 1.0, &h2), Verdict::Stochastic);
    assert_eq!(v(Regime::Decay, 0.0, -1.0, 1.0, &h2), Verdict::Stochastic);
    assert_eq!(v(Regime::Decay, -1.0, 0.0, 1.0, &h2), Verdict::StronglyStable);
    assert_eq!(v(Regime::PureJump, -1.0, 0.0, 1.0, &h2), Verdict::StronglyStable);
    assert!(matches!(classify_power_family(Regime::Growth, -2.0, 1.0, 1.0, &h2), Err(Error::OutOfRegime(_))));
    assert!(matches!(classify_power_family(Regime::Decay, 2.0, -1.0, 1.0, &h2), Err(Error::OutOfRegime(_))));
    assert!(matches!(classify_power_family(Regime::Growth, 0.0, -0.5, 1.0, &h2), Err(Error::OutOfRegime(_))));
}

#[test]
fn verdict_compatibility() {
    assert!(Verdict::Inconclusive.compatible(Verdict::Stochastic));
    assert!(!Verdict::StronglyStable.compatible(Verdict::Stochastic));
}

fn small_opts() -> ClassifyOptions {
    ClassifyOptions { n_paths: 300, n_max: 2000, ..Default::default() }
}

#[test]
fn classifier_on_pure_jump() {
    let ss = classify(&pure(1.0, -1.0), &small_opts()).unwrap();
    assert_eq!(ss.verdict, Verdict::StronglyStable);
    assert_eq!(ss.evidence.len(), 21);
    let st = classify(&pure(1.0, 0.0), &small_opts()).unwrap();
    assert_eq!(st.verdict, Verdict::Stochastic);
}

#[test]
fn classifier_on_growth() {
    assert_eq!(classify(&growth(0.0, 1.0, 1.0, 0.0), &small_opts()).unwrap().verdict, Verdict::Stochastic);
    assert_eq!(classify(&growth(0.0, 1.0, 0.0, 0.0), &small_opts()).unwrap().verdict, Verdict::Stochastic);
}

#[test]
fn grid_dual_classifier_agrees() {
    let grid = crate::density::LogGrid::new(1e-9, 1e3, 384).unwrap();
    for (alpha, want) in [(-1.0, Verdict::StronglyStable), (0.0, Verdict::Stochastic)] {
        let engine = DensityEngine::new(&pure(1.0, alpha), grid.clone()).unwrap();
        let c = classify_dual(&engine, &small_opts(), 2000).unwrap();
        assert_eq!(c.verdict, want, "alpha = {alpha}");
    }
}

#[test]
fn embedded_kernel_normalization_and_structure() {
    for spec in [growth(0.0, 1.0, 0.0, 0.0), growth(0.0, 1.0, 1.0, 0.0)] {
        let k = EmbeddedKernel::new(&spec).unwrap();
        for y in [0.5, 2.0, 10.0] {
            let n = k.normalization(y).unwrap();
            assert!((n - 1.0).abs() < 1e-6, "y = {y}: {n}");
            assert!((k.cdf(1e300, y).unwrap() - 1.0).abs() < 1e-12);
        }
        let q = &spec.maps().unwrap().q;
        let x = 3.0;
        let r0 = k.density(x, 0.5).unwrap() / q.forward(0.5).exp();
        for y in [1.0, 2.0, 2.9] {
            let r = k.density(x, y).unwrap() / q.forward(y).exp();
            assert!((r - r0).abs() < 1e-9 * r0, "{r} vs {r0}");
        }
    }
    assert!(EmbeddedKernel::new(&pure(1.0, 0.0)).is_err());
}

#[test]
fn lyapunov_admissible_point() {
    let k = EmbeddedKernel::new(&growth(0.0, 1.0, 1.0, 0.0)).unwrap();
    let probes = [0.5, 1.0, 2.0, 5.0, 10.0, 100.0];
    let rep = lyapunov_check(&k, &|x| x, &probes).unwrap();
    assert!((rep.c_hat - 2.0 / 3.0).abs() < 1e-6, "{rep:?}");
    // KV(y) = 2/3 (y + 1) here
    for &(y, _, kv) in &rep.values {
        assert!((kv - 2.0 / 3.0 * (y + 1.0)).abs() < 1e-8 * kv);
    }
    assert!(rep.pass, "{rep:?}");
    assert!(matches!(lyapunov_check(&k, &|_| 0.0, &probes), Err(Error::InvalidArgument(_))));
}

#[test]
fn lyapunov_borderline_fails() {
    let k = EmbeddedKernel::new(&growth(0.0, 1.0, 0.0, 0.0)).unwrap();
    let rep = lyapunov_check(&k, &|x| x, &[0.5, 1.0, 2.0, 5.0]).unwrap();
    assert!(!rep.pass);
}

#[test]
fn csv_outputs() {
    let c = Classification {
        verdict: Verdict::Stochastic,
        method: Method::MonteCarloLaplace,
        evidence: vec![Evidence { lambda: 1.0, x: 0.5, f_hat: 0.0, std_error: 0.0, n_iter: 10, decrement: 0.0 }],
        note: String::new(),
    };
    let dir = std::env::temp_dir();
    let p = dir.join(format!("evidence-{}.csv", std::process::id()));
    c.write_evidence_csv(&p).unwrap();
    assert!(std::fs::read_to_string(&p).unwrap().starts_with("lambda,x,f_hat,se,n_iter"));
    let rows = [DecisionRow { alpha: 1.0, beta: 0.0, a: 1.0, nu: 0.0, verdict: Verdict::Stochastic, source: Method::ClosedFormTable }];
    let p2 = dir.join(format!("table-{}.csv", std::process::id()));
    write_decision_csv(&rows, &p2).unwrap();
    let text = std::fs::read_to_string(&p2).unwrap();
    assert!(text.contains("1,0,1,0,stochastic,closed_form_table"));
    std::fs::remove_file(p).ok();
    std::fs::remove_file(p2).ok();
}
