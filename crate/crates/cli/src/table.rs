//! Two-column CSV tables turned into interpolated functions.

use std::path::Path;

use pdmp_core::ScalarFn;

use crate::error::CliError;

/// Accepted drift of a tabulated profile's mass integral before rescaling.
const PROFILE_MASS_TOL: f64 = 1e-2;

fn read(path: &Path, field: &str) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let bad = |why: String| CliError::Config(format!("{field}: {}: {why}", path.display()));
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| bad(e.to_string()))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() < 2 {
            return Err(bad(format!("row {} has fewer than two columns", line + 1)));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: '{s}': {e}", line + 1)));
        xs.push(parse(&rec[0])?);
        ys.push(parse(&rec[1])?);
    }
    if xs.len() < 2 {
        return Err(bad("need at least two rows".into()));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(bad("first column must be strictly increasing".into()));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(bad("values must be finite".into()));
    }
    Ok((xs, ys))
}

/// Piecewise linear in `(ln x, ln y)` with power-law extrapolation from the end segments.
pub fn positive_fn(path: &Path, field: &str) -> Result<ScalarFn, CliError> {
    let (xs, ys) = read(path, field)?;
    if xs[0] <= 0.0 || ys.iter().any(|y| *y <= 0.0) {
        return Err(CliError::Config(format!("{field}: {}: abscissae and values must be positive", path.display())));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    Ok(ScalarFn::new(move |x: f64| {
        let v = x.ln();
        let n = lx.len();
        let k = lx.partition_point(|&a| a <= v).clamp(1, n - 1);
        let s = (ly[k] - ly[k - 1]) / (lx[k] - lx[k - 1]);
        (ly[k - 1] + s * (v - lx[k - 1])).exp()
    }))
}

/// Homogeneous profile on (0, 1): piecewise linear, constant beyond the end
/// rows, rescaled so that `\int_0^1 h(z) z dz = 1`.
pub fn profile_fn(path: &Path, field: &str) -> Result<ScalarFn, CliError> {
    let (zs, hs) = read(path, field)?;
    let bad = |why: String| CliError::Model(format!("{field}: {}: {why}", path.display()));
    if zs[0] < 0.0 || *zs.last().unwrap() > 1.0 {
        return Err(bad("abscissae must lie in [0, 1]".into()));
    }
    if hs.iter().any(|h| *h < 0.0) {
        return Err(bad("profile must be non-negative".into()));
    }
    // exact \int h z dz for the interpolant
    let n = zs.len();
    let mut mass = hs[0] * zs[0] * zs[0] / 2.0 + hs[n - 1] * (1.0 - zs[n - 1] * zs[n - 1]) / 2.0;
    for k in 1..n {
        let (a, b, ha, hb) = (zs[k - 1], zs[k], hs[k - 1], hs[k]);
        let s = (hb - ha) / (b - a);
        let c = ha - s * a;
        mass += c * (b * b - a * a) / 2.0 + s * (b * b * b - a * a * a) / 3.0;
    }
    if (mass - 1.0).abs() > PROFILE_MASS_TOL {
        return Err(bad(format!("integral of h(z) z over (0, 1) is {mass}, expected 1")));
    }
    let hs: Vec<f64> = hs.iter().map(|h| h / mass).collect();
    Ok(ScalarFn::new(move |z: f64| {
        if z <= zs[0] {
            return hs[0];
        }
        if z >= zs[n - 1] {
            return hs[n - 1];
        }
        let k = zs.partition_point(|&a| a <= z).clamp(1, n - 1);
        let w = (z - zs[k - 1]) / (zs[k] - zs[k - 1]);
        hs[k - 1] + w * (hs[k] - hs[k - 1])
    }))
}
