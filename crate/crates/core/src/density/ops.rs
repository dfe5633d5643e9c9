//! Grid versions of the free semigroup `S(t)`, the jump operator `B`, and the
//! resolvent `R(lambda, A)` of the free generator.
//!
//! Cell masses are moved conservatively. Mass that leaves the grid is kept in
//! the two buckets. In the resolvent and in [`DensityEngine::apply_b`] the
//! buckets act as ghost cells with rates `phi(x_min)` and `phi(x_max)`; the
//! free semigroup leaves them untouched.

use std::sync::Arc;

use crate::characteristics::{CharacteristicsSpec, Regime};
use crate::density::grid::{GridDensity, LogGrid};
use crate::error::{Error, Result};
use crate::quad::{self, GL8};

/// Where a source cell's mass goes under `B`: fractions per destination cell.
#[derive(Debug, Clone)]
struct TransferRow {
    start: usize,
    frac: Vec<f64>,
    sub: f64,
    sup: f64,
}

/// Sparse cell-to-cell map used for the transport semigroup.
#[derive(Debug, Clone)]
pub(crate) struct CellMap {
    rows: Vec<Vec<(usize, f64)>>,
    sub: Vec<f64>,
    sup: Vec<f64>,
}

impl CellMap {
    /// Mass of cell `j` that survives the step, wherever it ends up.
    pub(crate) fn retained(&self, j: usize) -> f64 {
        self.rows[j].iter().map(|r| r.1).sum::<f64>() + self.sub[j] + self.sup[j]
    }

    /// Applies the map; buckets of `u` are carried over unchanged.
    pub(crate) fn apply(&self, u: &GridDensity) -> GridDensity {
        let mut out = GridDensity::zeros(u.grid().clone());
        let (mut sub, mut sup) = (u.sub_grid_mass(), u.super_grid_mass());
        {
            let o = out.masses_mut();
            for (j, &m) in u.masses().iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                for &(i, w) in &self.rows[j] {
                    o[i] += w * m;
                }
                sub += self.sub[j] * m;
                sup += self.sup[j] * m;
            }
        }
        out.set_buckets(sub, sup);
        out
    }
}

pub struct DensityEngine {
    spec: CharacteristicsSpec,
    grid: Arc<LogGrid>,
    phi_bar: Vec<f64>,
    phi_sub: f64,
    phi_sup: f64,
    transfer: Vec<TransferRow>,
}

const STIFF_STEP: f64 = 2.0;
const MAX_PIECES: usize = 4096;

impl DensityEngine {
    pub fn new(spec: &CharacteristicsSpec, grid: Arc<LogGrid>) -> Result<Self> {
        let n = grid.cells();
        let phi_bar: Vec<f64> = (0..n).map(|i| grid.cell_integral(i, |x| spec.phi(x)) / grid.weights()[i]).collect();
        if phi_bar.iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("rate is not finite on the grid".into()));
        }
        let kernel = spec.kernel();
        let e = grid.edges();
        let mut transfer = Vec::with_capacity(n);
        for (j, &y) in grid.nodes().iter().enumerate() {
            let top = if kernel.is_fragmentation() { j + 1 } else { n };
            let mut c = Vec::with_capacity(top + 1);
            for &edge in &e[..=top] {
                c.push(kernel.cdf(y, edge)?);
            }
            if kernel.is_fragmentation() {
                c[top] = 1.0;
            }
            let frac = c.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
            transfer.push(TransferRow { start: 0, frac, sub: c[0], sup: (1.0 - c[top]).max(0.0) });
        }
        Ok(DensityEngine {
            spec: spec.clone(),
            grid: grid.clone(),
            phi_bar,
            phi_sub: spec.phi(grid.x_min()),
            phi_sup: spec.phi(grid.x_max()),
            transfer,
        })
    }

    pub fn grid(&self) -> &Arc<LogGrid> {
        &self.grid
    }

    pub fn spec(&self) -> &CharacteristicsSpec {
        &self.spec
    }

    /// Cell averages of `phi` with respect to `x dx`.
    pub fn cell_rates(&self) -> &[f64] {
        &self.phi_bar
    }

    /// Rates given to the sub- and super-grid ghost cells.
    pub fn ghost_rates(&self) -> (f64, f64) {
        (self.phi_sub, self.phi_sup)
    }

    pub(crate) fn check(&self, u: &GridDensity) -> Result<()> {
        if Arc::ptr_eq(u.grid(), &self.grid) || **u.grid() == *self.grid {
            Ok(())
        } else {
            Err(Error::InvalidArgument("density lives on a different grid".into()))
        }
    }

    /// Free semigroup `S(t) u`.
    pub fn apply_s(&self, t: f64, u: &GridDensity) -> Result<GridDensity> {
        self.check(u)?;
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time {t}")));
        }
        if t == 0.0 {
            return Ok(u.clone());
        }
        Ok(self.free_map(t)?.apply(u))
    }

    /// Cell map of `S(t)` acting on piecewise-constant densities.
    pub(crate) fn free_map(&self, t: f64) -> Result<CellMap> {
        let g = &self.grid;
        let n = g.cells();
        let e = g.edges();
        if self.spec.regime() == Regime::PureJump {
            let rows = (0..n)
                .map(|i| {
                    let w = g.cell_integral(i, |x| (-self.spec.phi(x) * t).exp()) / g.weights()[i];
                    vec![(i, w)]
                })
                .collect();
            return Ok(CellMap { rows, sub: vec![0.0; n], sup: vec![0.0; n] });
        }
        // preimages of the destination edges
        let pre: Vec<(f64, usize)> =
            e.iter().enumerate().filter_map(|(i, &x)| self.spec.backward_flow(t, x).map(|p| (p, i))).collect();
        let exit_point = self.spec.maps().and_then(|m| {
            let g0 = m.g.limit_lower();
            (self.spec.regime() == Regime::Decay && g0.is_finite()).then(|| m.g.inverse(g0 - t))
        });
        let mut rows = Vec::with_capacity(n);
        let mut subs = vec![0.0; n];
        let mut sups = vec![0.0; n];
        for j in 0..n {
            let (a, b) = (e[j], e[j + 1]);
            let mut cuts = vec![a];
            let lo = pre.partition_point(|p| p.0 <= a);
            let hi = pre.partition_point(|p| p.0 < b);
            cuts.extend(pre[lo..hi].iter().map(|p| p.0));
            if let Some(x) = exit_point {
                if x > a && x < b {
                    cuts.push(x);
                    cuts.sort_by(f64::total_cmp);
                }
            }
            cuts.push(b);
            let mut row: Vec<(usize, f64)> = Vec::new();
            for w in cuts.windows(2) {
                let (l, r) = (w[0], w[1]);
                if !(r > l) {
                    continue;
                }
                let mass: f64 = GL8
                    .points(l.ln(), r.ln())
                    .map(|(v, wt)| {
                        let y = v.exp();
                        wt * (-self.spec.cumulative_rate(y, t)).exp() * y * y
                    })
                    .sum::<f64>()
                    / g.weights()[j];
                if mass == 0.0 {
                    continue;
                }
                match self.spec.flow(t, (l * r).sqrt()) {
                    Ok(y) => match g.locate(y) {
                        Some(i) => match row.last_mut() {
                            Some(last) if last.0 == i => last.1 += mass,
                            _ => row.push((i, mass)),
                        },
                        None if y < g.x_min() => subs[j] += mass,
                        None => sups[j] += mass,
                    },
                    Err(Error::DomainExit { .. }) => subs[j] += mass,
                    Err(Error::FlowBlowUp { .. }) => sups[j] += mass,
                    Err(err) => return Err(err),
                }
            }
            rows.push(row);
        }
        Ok(CellMap { rows, sub: subs, sup: sups })
    }

    /// Jump operator `B u`, with ghost cells for the buckets.
    pub fn apply_b(&self, u: &GridDensity) -> Result<GridDensity> {
        self.check(u)?;
        let mut out = self.apply_b_grid(u);
        let (s, p) = (out.sub_grid_mass(), out.super_grid_mass());
        out.set_buckets(s + self.phi_sub * u.sub_grid_mass(), p + self.phi_sup * u.super_grid_mass());
        Ok(out)
    }

    /// `B` restricted to grid-resident mass; jumps leaving the grid go to the buckets.
    pub(crate) fn apply_b_grid(&self, u: &GridDensity) -> GridDensity {
        let flux: Vec<f64> = u.masses().iter().zip(&self.phi_bar).map(|(m, p)| m * p).collect();
        self.scatter(&flux)
    }

    /// Sends `jumping[j]`, mass jumping from cell `j`, to its post-jump cells.
    pub(crate) fn scatter(&self, jumping: &[f64]) -> GridDensity {
        let mut out = GridDensity::zeros(self.grid.clone());
        let (mut sub, mut sup) = (0.0, 0.0);
        {
            let o = out.masses_mut();
            for (j, &flux) in jumping.iter().enumerate() {
                if flux == 0.0 {
                    continue;
                }
                let row = &self.transfer[j];
                for (k, f) in row.frac.iter().enumerate() {
                    o[row.start + k] += f * flux;
                }
                sub += row.sub * flux;
                sup += row.sup * flux;
            }
        }
        out.set_buckets(sub, sup);
        out
    }

    /// `R(lambda, A) u`.
    pub fn resolvent(&self, lambda: f64, u: &GridDensity) -> Result<GridDensity> {
        self.check(u)?;
        if !(lambda > 0.0) {
            return Err(Error::InvalidArgument(format!("lambda = {lambda}")));
        }
        let mut out = match self.spec.regime() {
            Regime::PureJump => {
                let m = u.masses().iter().zip(&self.phi_bar).map(|(m, p)| m / (lambda + p)).collect();
                GridDensity::from_masses(self.grid.clone(), m, 0.0, 0.0)?
            }
            Regime::Growth => self.transport_resolvent(lambda, u, true)?,
            Regime::Decay => self.transport_resolvent(lambda, u, false)?,
        };
        let (s, p) = (out.sub_grid_mass(), out.super_grid_mass());
        out.set_buckets(
            s + u.sub_grid_mass() / (lambda + self.phi_sub),
            p + u.super_grid_mass() / (lambda + self.phi_sup),
        );
        Ok(out)
    }

    /// Solves `(x g w)' = -+(lambda + phi)/g (x g w) +- x u` cell by cell.
    ///
    /// With `E = lambda G + Q`, `J(z) = \int e^{-(E(z) - E(y))} u(y) y dy` over
    /// the upstream side and the cell mass is `\int J(z) / g(z) dz`.
    fn transport_resolvent(&self, lambda: f64, u: &GridDensity, growth: bool) -> Result<GridDensity> {
        let maps = self.spec.maps().expect("transport regime has maps");
        let g_fn = self.spec.semiflow().velocity().expect("transport regime has velocity").clone();
        let energy = |z: f64| lambda * maps.g.forward(z) + maps.q.forward(z);
        let grid = &self.grid;
        let n = grid.cells();
        let e = grid.edges();
        let mut mass = vec![0.0; n];
        let mut j_flux = 0.0f64;
        let order: Vec<usize> = if growth { (0..n).collect() } else { (0..n).rev().collect() };
        for i in order {
            let c = u.masses()[i] / grid.weights()[i];
            let (a, b) = (e[i], e[i + 1]);
            let (ea, eb) = (energy(a), energy(b));
            let pieces = (((eb - ea).abs() / STIFF_STEP).ceil() as usize).clamp(1, MAX_PIECES);
            let ln_a = a.ln();
            let step = (b.ln() - ln_a) / pieces as f64;
            let mut acc = 0.0;
            for k in 0..pieces {
                // upstream end s0, downstream end s1
                let (l, r) = ((ln_a + k as f64 * step).exp(), (ln_a + (k + 1) as f64 * step).exp());
                let (s0, s1) = if growth { (l, r) } else { (r, l) };
                let e0 = energy(s0);
                // mass of the incoming flux and of the local source over [l, r]
                let mut m_in = 0.0;
                let mut m_src = 0.0;
                for (v, w) in GL8.points(l.ln(), r.ln()) {
                    let z = v.exp();
                    let ez = energy(z);
                    let jac = w * z / g_fn.eval(z);
                    m_in += jac * (-(ez - e0)).exp();
                    if c != 0.0 {
                        // \int_{s0}^{z} e^{-(E(z) - E(y))} y dy
                        let inner: f64 = GL8
                            .points(s0.ln(), z.ln())
                            .map(|(vy, wy)| {
                                let y = vy.exp();
                                wy * (-(ez - energy(y))).exp() * y * y
                            })
                            .sum();
                        m_src += jac * inner.abs();
                    }
                }
                acc += j_flux * m_in + c * m_src;
                let e1 = energy(s1);
                let src_out: f64 = if c != 0.0 {
                    GL8.points(s0.ln(), s1.ln())
                        .map(|(vy, wy)| {
                            let y = vy.exp();
                            wy * (-(e1 - energy(y))).exp() * y * y
                        })
                        .sum::<f64>()
                        .abs()
                } else {
                    0.0
                };
                j_flux = (-(e1 - e0)).exp() * j_flux + c * src_out;
            }
            mass[i] = acc;
        }
        // leakage past the downstream end of the grid
        let mut out = GridDensity::from_masses(grid.clone(), mass, 0.0, 0.0)?;
        if j_flux > 0.0 {
            let edge = if growth { grid.x_max() } else { grid.x_min() };
            let e_edge = energy(edge);
            let f = |z: f64| {
                let w = (-(energy(z) - e_edge)).exp();
                if w == 0.0 {
                    0.0
                } else {
                    w / g_fn.eval(z)
                }
            };
            let q = if growth {
                quad::integrate_to_infinity(f, edge, 1e-300, 1e-10)
            } else {
                quad::integrate_from_zero(f, edge, 1e-300, 1e-10)
            };
            let leak = j_flux * q.value;
            if growth {
                out.set_buckets(0.0, leak);
            } else {
                out.set_buckets(leak, 0.0);
            }
        }
        Ok(out)
    }

    /// Grid dual iteration `f_{n+1} = (B R(lambda, A))^* f_n` from `f_0 = 1`,
    /// giving node values of `E_x e^{-lambda t_n}`; pure-jump regime only.
    pub fn dual_iteration(&self, lambda: f64, n_iter: usize) -> Result<Vec<f64>> {
        if self.spec.regime() != Regime::PureJump {
            return Err(Error::NotEnabled("dual iteration needs a diagonal resolvent".into()));
        }
        let n = self.grid.cells();
        let mut f = vec![1.0; n];
        let mut f_sub = 1.0;
        let mut f_sup = 1.0;
        let keep: Vec<f64> = self.phi_bar.iter().map(|p| p / (lambda + p)).collect();
        let keep_sub = self.phi_sub / (lambda + self.phi_sub);
        let keep_sup = self.phi_sup / (lambda + self.phi_sup);
        for _ in 0..n_iter {
            let next: Vec<f64> = (0..n)
                .map(|j| {
                    let row = &self.transfer[j];
                    let inner: f64 = row.frac.iter().enumerate().map(|(k, w)| w * f[row.start + k]).sum();
                    keep[j] * (inner + row.sub * f_sub + row.sup * f_sup)
                })
                .collect();
            f = next;
            f_sub *= keep_sub;
            f_sup *= keep_sup;
        }
        Ok(f)
    }
}
