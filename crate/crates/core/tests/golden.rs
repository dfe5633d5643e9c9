//! Frozen trajectory for seed 42, path 0: `phi = 1/x`, `h = 2`, `x0 = 1`.

mod common;

use std::path::PathBuf;

use pdmp_core::rng::PathRng;
use pdmp_core::simulate::simulate_chain;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const JUMPS: usize = 10;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_v1.csv")
}

/// Hand-written chain: holding time `eps x`, post-jump size `sqrt(theta) x`.
fn reference() -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    rng.set_stream(0);
    let mut unif = || ((rng.next_u64() >> 11) as f64 + 0.5) / 9007199254740992.0;
    let (mut t, mut x) = (0.0f64, 1.0f64);
    let mut out = vec![(t, x)];
    for _ in 0..JUMPS {
        let eps = -unif().ln();
        let theta = unif();
        t += eps * x;
        x *= theta.sqrt();
        out.push((t, x));
    }
    out
}

fn simulated() -> pdmp_core::simulate::Trajectory {
    let spec = common::pure(1.0, -1.0, 0.0);
    simulate_chain(&spec, 1.0, &mut PathRng::new(42, 0), JUMPS, f64::INFINITY, 0).unwrap()
}

#[test]
fn matches_reference_loop() {
    let traj = simulated();
    let want = reference();
    assert_eq!(traj.jumps(), JUMPS);
    for (n, ((t, x), (rt, rx))) in traj.times.iter().zip(&traj.positions).zip(&want).enumerate() {
        assert!((t - rt).abs() <= 1e-14 * rt.max(1.0), "t_{n}: {t} vs {rt}");
        assert!((x - rx).abs() <= 1e-14 * rx, "xi_{n}: {x} vs {rx}");
    }
}

#[test]
fn matches_frozen_csv() {
    let text = std::fs::read_to_string(golden_path()).expect("golden file present");
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let traj = simulated();
    let mut rows = 0;
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.unwrap();
        let t: f64 = rec[2].parse().unwrap();
        let x: f64 = rec[3].parse().unwrap();
        assert_eq!(rec[1].parse::<usize>().unwrap(), n);
        assert!((t - traj.times[n]).abs() <= 1e-14 * t.max(1.0));
        assert!((x - traj.positions[n]).abs() <= 1e-14 * x);
        rows += 1;
    }
    assert_eq!(rows, JUMPS + 1);
}

/// Rewrites the frozen file; run with `--ignored` after an intended change.
#[test]
#[ignore]
fn regenerate_golden() {
    let mut w = csv::Writer::from_path(golden_path()).unwrap();
    w.write_record(["path", "n", "t", "x"]).unwrap();
    simulated().write_csv(&mut w).unwrap();
    w.flush().unwrap();
}
