//! Logarithmic cell grid and cell-mass densities.
//!
//! A density is stored as the masses `\int_{cell} u(x) x dx` of the cells,
//! plus two buckets holding the mass below and above the grid.

use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quad::{self, GL8};

#[derive(Debug, Clone, PartialEq)]
pub struct LogGrid {
    edges: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    ln_lo: f64,
    dln: f64,
}

impl LogGrid {
    pub fn new(x_min: f64, x_max: f64, cells: usize) -> Result<Arc<LogGrid>> {
        if !(x_min > 0.0 && x_max > x_min && x_max.is_finite()) || cells == 0 {
            return Err(Error::InvalidArgument(format!("grid [{x_min}, {x_max}] with {cells} cells")));
        }
        let ln_lo = x_min.ln();
        let dln = (x_max.ln() - ln_lo) / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|i| (ln_lo + i as f64 * dln).exp()).collect();
        edges[0] = x_min;
        edges[cells] = x_max;
        let nodes = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let weights = edges.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (w[1] + w[0])).collect();
        Ok(Arc::new(LogGrid { edges, nodes, weights, ln_lo, dln }))
    }

    pub fn cells(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// `\int_{cell} x dx`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn x_min(&self) -> f64 {
        self.edges[0]
    }

    pub fn x_max(&self) -> f64 {
        self.edges[self.cells()]
    }

    /// Cell containing `x` (left-closed), `None` off the grid.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min() && x < self.x_max()) {
            return None;
        }
        let mut k = (((x.ln() - self.ln_lo) / self.dln) as usize).min(self.cells() - 1);
        while k > 0 && x < self.edges[k] {
            k -= 1;
        }
        while k + 1 < self.cells() && x >= self.edges[k + 1] {
            k += 1;
        }
        Some(k)
    }

    /// `\int_{cell i} f(x) x dx` by 8-point Gauss-Legendre in `ln x`.
    pub fn cell_integral(&self, i: usize, f: impl Fn(f64) -> f64) -> f64 {
        let (a, b) = (self.edges[i].ln(), self.edges[i + 1].ln());
        GL8.points(a, b)
            .map(|(u, w)| {
                let x = u.exp();
                w * f(x) * x * x
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Arc<LogGrid>,
    mass: Vec<f64>,
    sub: f64,
    sup: f64,
}

impl GridDensity {
    pub fn zeros(grid: Arc<LogGrid>) -> Self {
        let n = grid.cells();
        GridDensity { grid, mass: vec![0.0; n], sub: 0.0, sup: 0.0 }
    }

    pub fn from_masses(grid: Arc<LogGrid>, mass: Vec<f64>, sub: f64, sup: f64) -> Result<Self> {
        if mass.len() != grid.cells() {
            return Err(Error::InvalidArgument(format!("{} masses for {} cells", mass.len(), grid.cells())));
        }
        Ok(GridDensity { grid, mass, sub, sup })
    }

    /// Cell masses of a pointwise density `u` (with respect to `x dx`).
    pub fn from_fn(grid: Arc<LogGrid>, u: impl Fn(f64) -> f64) -> Self {
        let mass = (0..grid.cells()).map(|i| grid.cell_integral(i, &u)).collect();
        GridDensity { grid, mass, sub: 0.0, sup: 0.0 }
    }

    /// Normalized density, constant on `[a, b]` with respect to `x dx`.
    pub fn uniform(grid: Arc<LogGrid>, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::InvalidArgument(format!("uniform on [{a}, {b}]")));
        }
        let c = 2.0 / ((b - a) * (b + a));
        let piece = |lo: f64, hi: f64| {
            let (l, h) = (lo.max(a), hi.min(b));
            if h > l {
                0.5 * (h - l) * (h + l) * c
            } else {
                0.0
            }
        };
        let e = grid.edges();
        let mass = e.windows(2).map(|w| piece(w[0], w[1])).collect();
        let sub = piece(0.0, grid.x_min());
        let sup = piece(grid.x_max(), f64::INFINITY);
        Ok(GridDensity { grid, mass, sub, sup })
    }

    pub fn grid(&self) -> &Arc<LogGrid> {
        &self.grid
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn masses_mut(&mut self) -> &mut [f64] {
        &mut self.mass
    }

    pub fn sub_grid_mass(&self) -> f64 {
        self.sub
    }

    pub fn super_grid_mass(&self) -> f64 {
        self.sup
    }

    pub fn set_buckets(&mut self, sub: f64, sup: f64) {
        self.sub = sub;
        self.sup = sup;
    }

    /// Grid-resident mass.
    pub fn mass(&self) -> f64 {
        quad::neumaier(self.mass.iter().copied())
    }

    /// Grid mass plus both out-of-grid buckets.
    pub fn total_mass(&self) -> f64 {
        quad::neumaier(self.mass.iter().copied().chain([self.sub, self.sup]))
    }

    /// Pointwise value at the node of cell `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.mass[i] / self.grid.weights()[i]
    }

    pub fn is_nonnegative(&self) -> bool {
        self.mass.iter().chain([&self.sub, &self.sup]).all(|&m| m >= 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        GridDensity {
            grid: self.grid.clone(),
            mass: self.mass.iter().map(|m| m * c).collect(),
            sub: self.sub * c,
            sup: self.sup * c,
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &GridDensity) {
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += c * b;
        }
        self.sub += c * other.sub;
        self.sup += c * other.sup;
    }

    /// Sum of absolute differences over cells and buckets.
    pub fn l1_distance(&self, other: &GridDensity) -> f64 {
        self.mass.iter().zip(&other.mass).map(|(a, b)| (a - b).abs()).sum::<f64>()
            + (self.sub - other.sub).abs()
            + (self.sup - other.sup).abs()
    }

    /// Rows `(node, cell_mass)`; the buckets are written with nodes `0` and `inf`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["node", "cell_mass"]).map_err(io)?;
        w.write_record(["0".to_string(), self.sub.to_string()]).map_err(io)?;
        for (x, m) in self.grid.nodes().iter().zip(&self.mass) {
            w.write_record([x.to_string(), m.to_string()]).map_err(io)?;
        }
        w.write_record(["inf".to_string(), self.sup.to_string()]).map_err(io)?;
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        let mut r = csv::Reader::from_path(path).map_err(io)?;
        let (mut nodes, mut mass) = (Vec::new(), Vec::new());
        let (mut sub, mut sup) = (0.0, 0.0);
        for rec in r.records() {
            let rec = rec.map_err(io)?;
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::InvalidArgument(format!("{s}: {e}")));
            let (x, m) = (parse(&rec[0])?, parse(&rec[1])?);
            if x == 0.0 {
                sub += m;
            } else if x.is_infinite() {
                sup += m;
            } else {
                nodes.push(x);
                mass.push(m);
            }
        }
        if nodes.len() < 2 {
            return Err(Error::InvalidArgument("density file needs at least two cells".into()));
        }
        let ratio = nodes[1] / nodes[0];
        let n = nodes.len();
        let grid = LogGrid::new(nodes[0] / ratio.sqrt(), nodes[n - 1] * ratio.sqrt(), n)?;
        for (a, b) in grid.nodes().iter().zip(&nodes) {
            if ((a - b) / b).abs() > 1e-9 {
                return Err(Error::InvalidArgument("nodes are not log-spaced".into()));
            }
        }
        GridDensity::from_masses(grid, mass, sub, sup)
    }
}
