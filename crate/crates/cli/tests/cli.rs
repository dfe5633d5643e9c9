use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pdmp"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(action: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg(action).arg("--config").arg(config).arg("--out").arg(out).args(extra).output().unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("config.toml");
    fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

fn column(rows: &[Vec<String>], name: &str) -> Vec<String> {
    let k = rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows[1..].iter().map(|r| r[k].clone()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const PURE: &str = r#"
output = "unused"
seed = 3
[model]
regime = "pure"
[model.rate]
family = "power"
a = 1.0
alpha = -1.0
[model.kernel]
family = "power"
nu = 0.0
"#;

#[test]
fn audit_rows_pass_for_uniform_fragmentation() {
    let tmp = TempDir::new().unwrap();
    let o = run("audit", &configs().join("audit.toml"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let audit = read_csv(&tmp.path().join("audit.csv"));
    assert_eq!(audit.len(), 6);
    assert!(column(&audit, "pass").iter().all(|p| p == "true"));
    assert!(column(&read_csv(&tmp.path().join("sampling.csv")), "pass").iter().all(|p| p == "true"));
}

#[test]
fn classify_growth_is_stochastic_by_both_methods() {
    let tmp = TempDir::new().unwrap();
    let o = run("classify", &configs().join("classify.toml"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("verdicts.csv"));
    let methods = column(&rows, "method");
    assert_eq!(methods, ["monte_carlo_laplace", "closed_form_table"]);
    assert!(column(&rows, "verdict").iter().all(|v| v == "stochastic"));
    let decision = read_csv(&tmp.path().join("decision.csv"));
    assert_eq!(decision.len(), 3);
}

#[test]
fn classify_pure_jump_runs_the_dual_iteration() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        &format!("{PURE}\n[classify]\npaths = 200\nn_max = 500\ndual_grid = {{ x_min = 1e-9, x_max = 1e3, cells = 192 }}\ndual_iterations = 500\n"),
    );
    let out = tmp.path().join("o");
    let o = run("classify", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("verdicts.csv"));
    assert_eq!(column(&rows, "method"), ["monte_carlo_laplace", "dual_iteration", "closed_form_table"]);
    assert_eq!(column(&rows, "verdict")[2], "strongly_stable");
    assert!(column(&rows, "verdict").iter().all(|v| v == "strongly_stable" || v == "inconclusive"));
    assert!(out.join("evidence_dual.csv").is_file());
}

#[test]
fn evolve_matches_oracle_column() {
    let tmp = TempDir::new().unwrap();
    let o = run("evolve", &configs().join("evolve.toml"), tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&tmp.path().join("mass.csv"));
    assert_eq!(column(&rows, "t"), ["0.25", "0.5", "1", "2"]);
    assert!(column(&rows, "pass").iter().all(|p| p == "true"));
    assert!(column(&rows, "converged").iter().all(|p| p == "true"));
    for (g, x) in column(&rows, "grid_mass").iter().zip(column(&rows, "oracle_mass")) {
        let (g, x): (f64, f64) = (g.parse().unwrap(), x.parse().unwrap());
        assert!((g - x).abs() < 0.01 * x);
    }
    let traces = read_csv(&tmp.path().join("traces.csv"));
    assert!(traces.len() > 4);
}

#[test]
fn evolve_with_monte_carlo_column() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        &format!("{PURE}\n[evolve]\ntimes = [1.0]\npaths = 4000\ngrid = {{ x_min = 1e-6, x_max = 1e3, cells = 256 }}\n"),
    );
    let out = tmp.path().join("o");
    let o = run("evolve", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_csv(&out.join("mass.csv"));
    let mc: f64 = column(&rows, "mc_mass")[0].parse().unwrap();
    let se: f64 = column(&rows, "mc_se")[0].parse().unwrap();
    let exact: f64 = column(&rows, "oracle_mass")[0].parse().unwrap();
    assert!((mc - exact).abs() < 4.0 * se + 1e-3, "{mc} vs {exact} (se {se})");
}

#[test]
fn simulate_and_oracle_examples_run() {
    let tmp = TempDir::new().unwrap();
    let o = run("simulate", &configs().join("simulate.toml"), &tmp.path().join("s"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let paths = read_csv(&tmp.path().join("s/paths.csv"));
    assert_eq!(paths.len(), 6);
    let states = read_csv(&tmp.path().join("s/states.csv"));
    assert_eq!(states.len(), 1 + 5 * 3);
    let o = run("oracle", &configs().join("oracle.toml"), &tmp.path().join("o"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mass = read_csv(&tmp.path().join("o/mass.csv"));
    for (a, b) in column(&mass, "exact_mass").iter().zip(column(&mass, "incomplete_gamma_mass")) {
        let (a, b): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
        assert!((a - b).abs() < 1e-12);
    }
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("simulate.toml");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run("simulate", &cfg, &a, &[]).status.success());
    assert!(run("simulate", &cfg, &b, &[]).status.success());
    assert!(run("simulate", &cfg, &c, &["--workers", "5"]).status.success());
    for f in ["trajectories.csv", "paths.csv", "states.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f} with other worker count");
    }
    let (mut ma, mut mb) = (manifest(&a), manifest(&b));
    ma.as_object_mut().unwrap().remove("timestamp");
    mb.as_object_mut().unwrap().remove("timestamp");
    assert_eq!(ma, mb);
}

#[test]
fn manifest_records_checksums() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("oracle.toml");
    assert!(run("oracle", &cfg, tmp.path(), &[]).status.success());
    let m = manifest(tmp.path());
    assert_eq!(m["tool"], "pdmp");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["status"], "ok");
    assert!(m.get("seed").is_none());
    let hash = |b: &[u8]| {
        use sha2::Digest;
        hex::encode(sha2::Sha256::digest(b))
    };
    assert_eq!(m["config_sha256"], hash(&fs::read(&cfg).unwrap()));
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 4);
    for e in outputs {
        let bytes = fs::read(tmp.path().join(e["file"].as_str().unwrap())).unwrap();
        assert_eq!(e["sha256"], hash(&bytes));
        assert_eq!(e["bytes"], bytes.len());
    }
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = configs().join("simulate.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("simulate", &cfg, &a, &["--seed", "42"]).status.success());
    assert!(run("simulate", &cfg, &b, &["--seed", "43"]).status.success());
    assert_ne!(fs::read(a.join("trajectories.csv")).unwrap(), fs::read(b.join("trajectories.csv")).unwrap());
    assert_eq!(manifest(&b)["seed"], 43);
}

fn expect_failure(action: &str, text: &str, code: i32, needle: &str) {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, text);
    let o = run(action, &cfg, &tmp.path().join("o"), &[]);
    assert_eq!(o.status.code(), Some(code), "{}", stderr(&o));
    assert!(stderr(&o).contains(needle), "stderr lacks '{needle}': {}", stderr(&o));
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    expect_failure("audit", &format!("{PURE}\n[audit]\nsizez = [1.0]\n"), 2, "sizez");
    expect_failure("audit", &PURE.replace("nu = 0.0", "nu = 0.0\nmu = 1.0"), 2, "mu");
    expect_failure("simulate", &PURE.replace("seed = 3", ""), 2, "seed");
    expect_failure("audit", &format!("action = \"oracle\"\n{PURE}"), 2, "action");
    expect_failure("evolve", &format!("{PURE}\n[evolve]\ngrid = {{ x_min = 1e-3, x_max = 1e3, cells = 1 }}\n"), 2, "evolve.grid.cells");
    expect_failure("audit", &PURE.replace("family = \"power\"\na = 1.0\nalpha = -1.0", "family = \"table\"\nfile = \"missing.csv\""), 2, "model.rate.file");
    expect_failure("audit", &PURE.replace("regime = \"pure\"", "regime = \"growth\""), 2, "model.flow");
    expect_failure("audit", "this is = not toml [", 2, "config error");
    let o = bin().args(["audit", "--config", "/nonexistent/config.toml"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn model_errors_exit_3() {
    expect_failure("audit", &PURE.replace("nu = 0.0", "nu = -3.0"), 3, "model.kernel.nu");
    let growth = PURE.replace("regime = \"pure\"", "regime = \"growth\"\n[model.flow]\nfamily = \"power\"\nbeta = 0.0");
    expect_failure("oracle", &growth, 3, "oracle needs pure jumps");
    expect_failure("audit", &PURE.replace("a = 1.0", "a = 0.0"), 3, "model");
}

#[test]
fn non_convergence_exits_4_with_outputs() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, &format!("{PURE}\n[evolve]\ntimes = [4.0]\nmax_terms = 3\n"));
    let out = tmp.path().join("o");
    let o = run("evolve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-convergence"));
    let m = manifest(&out);
    assert!(m["status"].as_str().unwrap().starts_with("non_converged"));
    assert_eq!(column(&read_csv(&out.join("mass.csv")), "converged"), ["false"]);
}

#[test]
fn tabulated_model_parts() {
    let tmp = TempDir::new().unwrap();
    let xs: Vec<f64> = (0..=80).map(|k| 10f64.powf(-8.0 + 0.2 * k as f64)).collect();
    let mut g = String::from("x,g\n");
    let mut phi = String::from("x,phi\n");
    for x in &xs {
        g += &format!("{x},{}\n", x * (1.0 + 1.0 / (1.0 + x)));
        phi += &format!("{x},{}\n", 1.0 + x.sqrt());
    }
    fs::write(tmp.path().join("g.csv"), g).unwrap();
    fs::write(tmp.path().join("phi.csv"), phi).unwrap();
    // h(z) = 2 sampled on a coarse grid: exact under linear interpolation
    fs::write(tmp.path().join("h.csv"), "z,h\n0,2\n0.5,2\n1,2\n").unwrap();
    let text = r#"
seed = 11
output = "o"
[model]
regime = "growth"
[model.flow]
family = "table"
file = "g.csv"
[model.rate]
family = "table"
file = "phi.csv"
[model.kernel]
family = "table"
file = "h.csv"
[simulate]
paths = 20
n_max = 50
"#;
    let cfg = write_config(&tmp, text);
    let o = bin().arg("audit").arg("--config").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let audit = read_csv(&tmp.path().join("o/audit.csv"));
    assert!(column(&audit, "pass").iter().all(|p| p == "true"));
    assert!(tmp.path().join("o/characteristics.csv").is_file());
    let o = bin().arg("simulate").arg("--config").arg(&cfg).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    // an unnormalized profile is a model error
    fs::write(tmp.path().join("h.csv"), "z,h\n0,1\n1,1\n").unwrap();
    let o = bin().arg("audit").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("model.kernel.file"));
}
