//! Dyson-Phillips expansion of the minimal semigroup and the resolvent series.

use std::path::Path;

use crate::characteristics::Regime;
use crate::density::grid::GridDensity;
use crate::density::ops::DensityEngine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SeriesOptions {
    pub max_terms: usize,
    /// Time steps on `[0, t]` for the Duhamel integrals.
    pub time_steps: usize,
    /// Stop once the mass fed into the next term drops below `tail_tol * |u|`.
    pub tail_tol: f64,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { max_terms: 200, time_steps: 64, tail_tol: 1e-8 }
    }
}

/// Per-term record of a series evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorTrace {
    /// `|S_n(t) u|` for the Dyson-Phillips sum, `|(BR)^n u|` for the resolvent series.
    pub term_norms: Vec<f64>,
    /// Mass balance defect after each term.
    pub residuals: Vec<f64>,
    /// Mass fed into the next term: the Duhamel inflow, or `|(BR)^{n+1} u|`.
    pub tail_norms: Vec<f64>,
    pub converged: bool,
    pub budget_exceeded: bool,
}

impl OperatorTrace {
    pub fn terms(&self) -> usize {
        self.term_norms.len()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(io_err)?;
        w.write_record(["n", "term_norm", "residual", "tail_norm"]).map_err(io_err)?;
        for (n, a) in self.term_norms.iter().enumerate() {
            let r = self.residuals.get(n).map_or(String::new(), |v| fmt(*v));
            let t = self.tail_norms.get(n).map_or(String::new(), |v| fmt(*v));
            w.write_record([n.to_string(), fmt(*a), r, t]).map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// `(e^{-z}, (1 - e^{-z}) / z)` for `z = phi dt`.
fn decay_factors(phi: f64, dt: f64) -> (f64, f64) {
    let z = phi * dt;
    if z < 1e-8 {
        (1.0 - z, 1.0 - 0.5 * z)
    } else {
        ((-z).exp(), -(-z).exp_m1() / z)
    }
}

impl DensityEngine {
    /// Minimal semigroup `S_P(t) u` as the sum of Dyson-Phillips terms.
    ///
    /// Each term is stepped on `time_steps` equal steps. The mass a term loses
    /// to jumps during a step feeds the next term at a constant rate over the
    /// same step, so the sum of all terms plus the pending inflow equals `|u|`
    /// up to rounding. Bucket mass is frozen: mass leaving the grid is kept but
    /// no longer evolves.
    pub fn dyson_phillips(&self, t: f64, u: &GridDensity, opts: SeriesOptions) -> Result<(GridDensity, OperatorTrace)> {
        self.check(u)?;
        if !(t >= 0.0 && t.is_finite()) || opts.time_steps == 0 {
            return Err(Error::InvalidArgument(format!("t = {t}, steps = {}", opts.time_steps)));
        }
        let total_in = u.total_mass();
        let steps = opts.time_steps;
        let dt = t / steps as f64;
        let cells = self.grid().cells();
        let pure = self.spec().regime() == Regime::PureJump;
        let step_map = if pure || t == 0.0 { None } else { Some(self.free_map(dt)?) };
        let factors: Vec<(f64, f64)> = self.cell_rates().iter().map(|&p| decay_factors(p, dt)).collect();

        // zeroth term: exact S(k dt) u, with the per-step loss to jumps
        let mut states = vec![u.clone()];
        for k in 1..=steps {
            states.push(self.apply_s(k as f64 * dt, u)?);
        }
        let mut lost: Vec<Vec<f64>> = Vec::with_capacity(steps);
        for k in 0..steps {
            let (a, b) = (&states[k], &states[k + 1]);
            let drop = (a.total_mass() - b.total_mass()).max(0.0);
            let row: Vec<f64> = match &step_map {
                None => a.masses().iter().zip(b.masses()).map(|(x, y)| (x - y).max(0.0)).collect(),
                Some(map) => {
                    let w: Vec<f64> = (0..cells).map(|j| (1.0 - map.retained(j)).max(0.0) * a.masses()[j]).collect();
                    let sum: f64 = w.iter().sum();
                    if sum > 0.0 {
                        w.iter().map(|v| v * drop / sum).collect()
                    } else {
                        vec![0.0; cells]
                    }
                }
            };
            lost.push(row);
        }

        let mut acc = states[steps].clone();
        let mut trace = OperatorTrace::default();
        let mut sum_norms = acc.total_mass();
        trace.term_norms.push(sum_norms);

        for n in 0..=opts.max_terms {
            let inflow: f64 = lost.iter().flatten().sum();
            trace.tail_norms.push(inflow);
            trace.residuals.push(total_in - sum_norms - inflow);
            if inflow < opts.tail_tol * total_in.max(f64::MIN_POSITIVE) {
                trace.converged = true;
                return Ok((acc, trace));
            }
            if n == opts.max_terms {
                break;
            }
            // source rates of the next term, constant on each step
            let sources: Vec<GridDensity> = lost.iter().map(|l| self.scatter(l).scaled(1.0 / dt)).collect();
            let mut cur = GridDensity::zeros(self.grid().clone());
            let mut next_lost = Vec::with_capacity(steps);
            for f in &sources {
                let mut out = GridDensity::zeros(self.grid().clone());
                let mut loss = vec![0.0; cells];
                match &step_map {
                    None => {
                        let (c, fm) = (cur.masses(), f.masses());
                        let o = out.masses_mut();
                        for i in 0..cells {
                            let (e, w) = factors[i];
                            o[i] = e * c[i] + dt * w * fm[i];
                            loss[i] = (c[i] + dt * fm[i] - o[i]).max(0.0);
                        }
                    }
                    Some(map) => {
                        let mut mid = cur.clone();
                        mid.add_scaled(0.5 * dt, f);
                        let moved = map.apply(&GridDensity::from_masses(self.grid().clone(), mid.masses().to_vec(), 0.0, 0.0)?);
                        for (j, l) in loss.iter_mut().enumerate() {
                            *l = (1.0 - map.retained(j)).max(0.0) * mid.masses()[j];
                        }
                        out = moved;
                        out.add_scaled(0.5 * dt, &GridDensity::from_masses(self.grid().clone(), f.masses().to_vec(), 0.0, 0.0)?);
                    }
                }
                out.set_buckets(
                    cur.sub_grid_mass() + dt * f.sub_grid_mass() + out.sub_grid_mass(),
                    cur.super_grid_mass() + dt * f.super_grid_mass() + out.super_grid_mass(),
                );
                next_lost.push(loss);
                cur = out;
            }
            acc.add_scaled(1.0, &cur);
            sum_norms += cur.total_mass();
            trace.term_norms.push(cur.total_mass());
            lost = next_lost;
        }
        trace.budget_exceeded = true;
        Ok((acc, trace))
    }

    /// `sum_{n <= max_terms} R(lambda, A) (B R(lambda, A))^n u`.
    ///
    /// The residual after term `n` is `lambda |acc| + |(BR)^{n+1} u| - |u|`,
    /// which vanishes for an exactly conservative discretisation.
    pub fn resolvent_series(
        &self,
        lambda: f64,
        u: &GridDensity,
        max_terms: usize,
        tail_tol: f64,
    ) -> Result<(GridDensity, OperatorTrace)> {
        self.check(u)?;
        let total_in = u.total_mass();
        let mut acc = GridDensity::zeros(self.grid().clone());
        let mut v = u.clone();
        let mut trace = OperatorTrace::default();
        trace.term_norms.push(total_in);
        for n in 0..=max_terms {
            let r = self.resolvent(lambda, &v)?;
            acc.add_scaled(1.0, &r);
            v = self.apply_b(&r)?;
            let tail = v.total_mass();
            if n < max_terms {
                trace.term_norms.push(tail);
            }
            trace.tail_norms.push(tail);
            trace.residuals.push(lambda * acc.total_mass() + tail - total_in);
            if tail < tail_tol * total_in.max(f64::MIN_POSITIVE) {
                trace.converged = true;
                return Ok((acc, trace));
            }
        }
        trace.budget_exceeded = true;
        Ok((acc, trace))
    }
}
