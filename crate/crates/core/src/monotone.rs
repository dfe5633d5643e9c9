//! Monotone maps on an interval of the half-line with generalized inverses.
//!
//! A map is either a closed form (forward and inverse closures) or a table of
//! a running integral `\int f` on a logarithmic grid, interpolated by monotone
//! cubic Hermite splines and extended beyond the table by a power-law tail.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::func::pow;
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Construction {
    ClosedForm,
    Tabulated,
}

/// Lower limit of a running integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    Zero,
    Infinity,
    At(f64),
    /// 0 when the integral converges there, else 1.
    ZeroOrOne,
    /// +inf when the integral converges there, else 1.
    InfinityOrOne,
}

type Closure = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Repr {
    Closed { forward: Closure, inverse: Closure },
    Table(Arc<Table>),
}

#[derive(Clone)]
pub struct MonotoneMap {
    direction: Direction,
    domain: (f64, f64),
    lim_lo: f64,
    lim_hi: f64,
    repr: Repr,
    /// `(k, p)` with `F'(x) = k x^(p - 1)` for power integrals.
    power: Option<(f64, f64)>,
}

impl fmt::Debug for MonotoneMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneMap")
            .field("direction", &self.direction)
            .field("construction", &self.construction())
            .field("domain", &self.domain)
            .field("limits", &(self.lim_lo, self.lim_hi))
            .finish()
    }
}

impl MonotoneMap {
    /// Closed-form map. `inverse` only needs to be valid strictly inside the range.
    pub fn closed_form(
        direction: Direction,
        domain: (f64, f64),
        limits: (f64, f64),
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        MonotoneMap {
            direction,
            domain,
            lim_lo: limits.0,
            lim_hi: limits.1,
            repr: Repr::Closed { forward: Arc::new(forward), inverse: Arc::new(inverse) },
            power: None,
        }
    }

    /// Running integral of `coef * z^(exponent - 1)` on (0, inf).
    ///
    /// Increasing maps integrate from the left, decreasing maps from the right;
    /// the anchor is the finite end if the integral converges there, else 1.
    pub fn power_integral(coef: f64, exponent: f64, direction: Direction) -> Self {
        let mut map = Self::power_integral_closure(coef, exponent, direction);
        if coef != 0.0 {
            let k = match direction {
                Direction::Increasing => coef,
                Direction::Decreasing => -coef,
            };
            map.power = Some((k, exponent));
        }
        map
    }

    fn power_integral_closure(coef: f64, exponent: f64, direction: Direction) -> Self {
        let dom = (0.0, f64::INFINITY);
        let (c, p) = (coef, exponent);
        let inf = f64::INFINITY;
        if c == 0.0 {
            return Self::closed_form(direction, dom, (0.0, 0.0), |_| 0.0, |_| f64::NAN);
        }
        match direction {
            Direction::Increasing => {
                if p > 0.0 {
                    Self::closed_form(direction, dom, (0.0, inf), move |x| c * pow(x, p) / p, move |v| pow(p * v / c, 1.0 / p))
                } else if p == 0.0 {
                    Self::closed_form(direction, dom, (-inf, inf), move |x| c * x.ln(), move |v| (v / c).exp())
                } else {
                    Self::closed_form(
                        direction,
                        dom,
                        (-inf, -c / p),
                        move |x| c * (pow(x, p) - 1.0) / p,
                        move |v| pow(1.0 + p * v / c, 1.0 / p),
                    )
                }
            }
            Direction::Decreasing => {
                if p < 0.0 {
                    Self::closed_form(direction, dom, (inf, 0.0), move |x| -c * pow(x, p) / p, move |v| pow(-p * v / c, 1.0 / p))
                } else if p == 0.0 {
                    Self::closed_form(direction, dom, (inf, -inf), move |x| -c * x.ln(), move |v| (-v / c).exp())
                } else {
                    Self::closed_form(
                        direction,
                        dom,
                        (c / p, -inf),
                        move |x| c * (1.0 - pow(x, p)) / p,
                        move |v| pow(1.0 - p * v / c, 1.0 / p),
                    )
                }
            }
        }
    }

    /// Tabulates `\int_anchor^x f` (increasing) or `\int_x^anchor f` (decreasing).
    pub fn tabulate(
        f: &dyn Fn(f64) -> f64,
        direction: Direction,
        anchor: Anchor,
        grid: &TableGrid,
    ) -> Result<(Self, TableInfo)> {
        let (table, info) = Table::build(f, anchor, grid)?;
        let s = match direction {
            Direction::Increasing => 1.0,
            Direction::Decreasing => -1.0,
        };
        let (lo, hi) = (table.limit_lo(), table.limit_hi());
        let map = MonotoneMap {
            direction,
            domain: grid.domain(),
            lim_lo: s * lo,
            lim_hi: s * hi,
            repr: Repr::Table(Arc::new(table)),
            power: None,
        };
        Ok((map, info))
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn construction(&self) -> Construction {
        match self.repr {
            Repr::Closed { .. } => Construction::ClosedForm,
            Repr::Table(_) => Construction::Tabulated,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Limit of the map at the left end of the domain.
    pub fn limit_lower(&self) -> f64 {
        self.lim_lo
    }

    /// Limit of the map at the right end of the domain.
    pub fn limit_upper(&self) -> f64 {
        self.lim_hi
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        if x <= self.domain.0 {
            return self.lim_lo;
        }
        if x >= self.domain.1 {
            return self.lim_hi;
        }
        match &self.repr {
            Repr::Closed { forward, .. } => forward(x),
            Repr::Table(t) => match self.direction {
                Direction::Increasing => t.eval(x),
                Direction::Decreasing => -t.eval(x),
            },
        }
    }

    /// `(k, p)` with `F'(x) = k x^(p - 1)`, for power integrals.
    pub fn power_params(&self) -> Option<(f64, f64)> {
        self.power
    }

    /// `ln(y / x)` where `F(y) = F(x) + dv`, for power integrals.
    ///
    /// Computed from `x` and `dv` alone so a large `|F(x)|` cannot swallow the
    /// increment. `-inf`/`+inf` when the shifted value leaves the range
    /// through 0 or infinity; `None` for maps that are not power integrals.
    pub fn log_shift(&self, x: f64, dv: f64) -> Option<f64> {
        let (k, p) = self.power?;
        if dv == 0.0 {
            return Some(0.0);
        }
        let a = dv / k;
        if p == 0.0 {
            return Some(a);
        }
        // (y/x)^p = 1 + p a x^-p
        let b = p * a;
        let l = b.abs().ln() - p * x.ln();
        let rp = if b > 0.0 {
            if l > 700.0 { l } else { l.exp().ln_1p() }
        } else if l >= 0.0 {
            f64::NEG_INFINITY
        } else {
            (-l.exp()).ln_1p()
        };
        Some(rp / p)
    }

    /// `F(x e^r) - F(x)` for power integrals without cancellation; `None` otherwise.
    pub fn log_diff(&self, x: f64, r: f64) -> Option<f64> {
        let (k, p) = self.power?;
        if r == 0.0 {
            return Some(0.0);
        }
        if p == 0.0 {
            return Some(k * r);
        }
        let e = (p * r).exp_m1() / p;
        let mag = (p * x.ln() + e.abs().ln()).exp() * k.abs();
        Some(if (k > 0.0) == (e > 0.0) { mag } else { -mag })
    }

    /// Generalized inverse.
    ///
    /// Increasing maps: `inf{x : F(x) >= v}`, `+inf` when `v` exceeds the range.
    /// Decreasing maps: `sup{x : F(x) >= v}`, with the value 0 both when `v`
    /// lies above the range and when `v <= F(sup domain)` for a finite limit.
    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        match self.direction {
            Direction::Increasing => {
                if v <= self.lim_lo {
                    return self.domain.0;
                }
                if v > self.lim_hi {
                    return f64::INFINITY;
                }
                if v == self.lim_hi {
                    return self.domain.1;
                }
            }
            Direction::Decreasing => {
                if v >= self.lim_lo || v <= self.lim_hi {
                    return self.domain.0;
                }
            }
        }
        let x = match &self.repr {
            Repr::Closed { inverse, .. } => inverse(v),
            Repr::Table(t) => match self.direction {
                Direction::Increasing => t.inverse(v),
                Direction::Decreasing => t.inverse(-v),
            },
        };
        x.clamp(self.domain.0, self.domain.1)
    }
}

/// Logarithmic tabulation grid. The table spans `[x_lo, x_hi]`; outside it the
/// map is extended to the domain ends by power-law tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableGrid {
    pub x_lo: f64,
    pub x_hi: f64,
    pub nodes: usize,
    /// `true` when the domain ends at `x_hi` (no upper tail).
    pub closed_at_hi: bool,
    pub rel_tol: f64,
}

impl TableGrid {
    pub fn half_line(x_lo: f64, x_hi: f64, nodes: usize) -> Self {
        TableGrid { x_lo, x_hi, nodes, closed_at_hi: false, rel_tol: 1e-10 }
    }

    /// Grid for maps on `(0, 1]`.
    pub fn unit(x_lo: f64, nodes: usize) -> Self {
        TableGrid { x_lo, x_hi: 1.0, nodes, closed_at_hi: true, rel_tol: 1e-10 }
    }

    pub fn domain(&self) -> (f64, f64) {
        (0.0, if self.closed_at_hi { self.x_hi } else { f64::INFINITY })
    }
}

impl Default for TableGrid {
    fn default() -> Self {
        TableGrid::half_line(1e-25, 1e25, 16385)
    }
}

/// What the tabulation learned about the integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableInfo {
    pub converges_at_zero: bool,
    pub converges_at_infinity: bool,
    /// Local power-law exponents of `x f(x)` at the two table ends.
    pub exponent_lo: f64,
    pub exponent_hi: f64,
    /// Accumulated quadrature error estimate.
    pub quad_error: f64,
    /// Value of the running integral at the table ends, measured from the anchor.
    pub value_lo: f64,
    pub value_hi: f64,
}

/// Power-law tail beyond a table end, in the increasing orientation.
///
/// Divergent: `F(u) = F_end + D (e^{p du} - 1) / p`.
/// Convergent: `F(u) = L + (D / p) e^{p du}` with `L` the limit, which keeps
/// relative precision far from the table.
#[derive(Debug, Clone, Copy)]
struct Tail {
    value: f64,
    slope: f64,
    rate: f64,
    limit: Option<f64>,
}

impl Tail {
    #[inline]
    fn eval(&self, du: f64) -> f64 {
        if self.slope == 0.0 {
            return self.value;
        }
        if let Some(l) = self.limit {
            return l + self.slope / self.rate * (self.rate * du).exp();
        }
        if self.rate == 0.0 {
            self.value + self.slope * du
        } else {
            self.value + self.slope * (self.rate * du).exp_m1() / self.rate
        }
    }

    #[inline]
    fn solve(&self, v: f64) -> f64 {
        if let Some(l) = self.limit {
            return ((v - l) * self.rate / self.slope).ln() / self.rate;
        }
        if self.rate == 0.0 {
            (v - self.value) / self.slope
        } else {
            (self.rate * (v - self.value) / self.slope).ln_1p() / self.rate
        }
    }
}

const RATE_EPS: f64 = 1e-6;
const TAIL_STENCIL: usize = 8;

struct Table {
    u0: f64,
    du: f64,
    /// Node values, stored as logarithms when `log` is set.
    val: Vec<f64>,
    log: bool,
    slope: Vec<f64>,
    lo: Option<Tail>,
    hi: Option<Tail>,
}

impl Table {
    fn build(f: &dyn Fn(f64) -> f64, anchor: Anchor, grid: &TableGrid) -> Result<(Table, TableInfo)> {
        let n = grid.nodes.max(TAIL_STENCIL + 2);
        let u0 = grid.x_lo.ln();
        let u1 = grid.x_hi.ln();
        let du = (u1 - u0) / (n - 1) as f64;
        let mut slope = Vec::with_capacity(n);
        for k in 0..n {
            let x = (u0 + k as f64 * du).exp();
            let d = x * f(x);
            if !d.is_finite() {
                return Err(Error::NonIntegrableRate { at: x });
            }
            if d < 0.0 {
                return Err(Error::Domain(format!("integrand negative at x = {x}")));
            }
            slope.push(d);
        }
        let mut cell = vec![0.0; n - 1];
        let mut quad_error = 0.0;
        for k in 1..n {
            let a = u0 + (k - 1) as f64 * du;
            let b = a + du;
            let scale = 0.5 * (slope[k - 1] + slope[k]) * du;
            let q = quad::adaptive(
                |u| {
                    let x = u.exp();
                    x * f(x)
                },
                a,
                b,
                grid.rel_tol * scale.max(f64::MIN_POSITIVE),
                grid.rel_tol,
            );
            if !q.value.is_finite() || !q.converged {
                return Err(Error::NonIntegrableRate { at: (0.5 * (a + b)).exp() });
            }
            quad_error += q.error;
            cell[k - 1] = q.value.max(0.0);
        }
        let exponent = |i: usize, j: usize| -> f64 {
            let (a, b) = (slope[i], slope[j]);
            if a > 0.0 && b > 0.0 {
                (b / a).ln() / ((j as f64 - i as f64) * du)
            } else {
                0.0
            }
        };
        let p_lo = exponent(0, TAIL_STENCIL);
        let p_hi = exponent(n - 1 - TAIL_STENCIL, n - 1);
        let lo_flat = slope[0] == 0.0;
        let hi_flat = slope[n - 1] == 0.0;
        let converges_at_zero = lo_flat || p_lo > RATE_EPS;
        let converges_at_infinity = grid.closed_at_hi || hi_flat || p_hi < -RATE_EPS;
        // mass of the tails beyond the table ends
        let tail_lo = if lo_flat { 0.0 } else { slope[0] / p_lo };
        let tail_hi = if grid.closed_at_hi || hi_flat { 0.0 } else { -slope[n - 1] / p_hi };
        // running sums taken outward from the anchor node
        let anchor = match anchor {
            Anchor::ZeroOrOne if converges_at_zero => Anchor::Zero,
            Anchor::InfinityOrOne if converges_at_infinity => Anchor::Infinity,
            Anchor::ZeroOrOne | Anchor::InfinityOrOne => Anchor::At(1.0),
            a => a,
        };
        let mut val = vec![0.0; n];
        match anchor {
            Anchor::Zero => {
                if !converges_at_zero {
                    return Err(Error::NonIntegrableRate { at: 0.0 });
                }
                val[0] = tail_lo;
                for k in 1..n {
                    val[k] = val[k - 1] + cell[k - 1];
                }
            }
            Anchor::Infinity => {
                if !converges_at_infinity {
                    return Err(Error::NonIntegrableRate { at: f64::INFINITY });
                }
                val[n - 1] = -tail_hi;
                for k in (0..n - 1).rev() {
                    val[k] = val[k + 1] - cell[k];
                }
            }
            Anchor::At(x) => {
                let u = x.ln();
                if !(u >= u0 && u <= u1) {
                    return Err(Error::InvalidArgument(format!("anchor {x} outside the table")));
                }
                let j = (((u - u0) / du).round() as usize).min(n - 1);
                let q = quad::adaptive(
                    |s| {
                        let x = s.exp();
                        x * f(x)
                    },
                    u,
                    u0 + j as f64 * du,
                    1e-300,
                    grid.rel_tol,
                );
                val[j] = q.value;
                for k in j + 1..n {
                    val[k] = val[k - 1] + cell[k - 1];
                }
                for k in (0..j).rev() {
                    val[k] = val[k + 1] - cell[k];
                }
            }
            Anchor::ZeroOrOne | Anchor::InfinityOrOne => unreachable!(),
        }
        // positive tables are interpolated in ln T, which is close to linear for power-like T
        let log = val.iter().all(|&v| v > 0.0);
        let (nodes, mut slope_lim) = if log {
            (val.iter().map(|v| v.ln()).collect::<Vec<_>>(), slope.iter().zip(&val).map(|(d, v)| d / v).collect::<Vec<_>>())
        } else {
            (val.clone(), slope.clone())
        };
        fritsch_carlson(&nodes, &mut slope_lim, du);
        let lo = Some(Tail {
            value: val[0],
            slope: slope[0],
            rate: if p_lo.abs() > RATE_EPS { p_lo } else { 0.0 },
            limit: (converges_at_zero && !lo_flat).then(|| val[0] - tail_lo),
        });
        let hi = if grid.closed_at_hi {
            None
        } else {
            Some(Tail {
                value: val[n - 1],
                slope: slope[n - 1],
                rate: if p_hi.abs() > RATE_EPS { p_hi } else { 0.0 },
                limit: (converges_at_infinity && !hi_flat).then(|| val[n - 1] + tail_hi),
            })
        };
        let info = TableInfo {
            converges_at_zero,
            converges_at_infinity,
            exponent_lo: p_lo,
            exponent_hi: p_hi,
            quad_error,
            value_lo: val[0],
            value_hi: val[n - 1],
        };
        Ok((Table { u0, du, val: nodes, log, slope: slope_lim, lo, hi }, info))
    }

    fn n(&self) -> usize {
        self.val.len()
    }

    fn u_end(&self) -> f64 {
        self.u0 + (self.n() - 1) as f64 * self.du
    }

    fn limit_lo(&self) -> f64 {
        let t = self.lo.unwrap();
        if t.slope == 0.0 {
            t.value
        } else {
            t.limit.unwrap_or(f64::NEG_INFINITY)
        }
    }

    fn node(&self, k: usize) -> f64 {
        if self.log {
            self.val[k].exp()
        } else {
            self.val[k]
        }
    }

    fn limit_hi(&self) -> f64 {
        match self.hi {
            None => self.node(self.n() - 1),
            Some(t) if t.slope == 0.0 => t.value,
            Some(t) => t.limit.unwrap_or(f64::INFINITY),
        }
    }

    #[inline]
    fn eval(&self, x: f64) -> f64 {
        let u = x.ln();
        let s = (u - self.u0) / self.du;
        if s < 0.0 {
            return self.lo.unwrap().eval(u - self.u0);
        }
        let n = self.n();
        if s >= (n - 1) as f64 {
            return match self.hi {
                Some(t) => t.eval(u - self.u_end()),
                None => self.node(n - 1),
            };
        }
        let k = s as usize;
        let h = self.hermite(k, s - k as f64);
        if self.log {
            h.exp()
        } else {
            h
        }
    }

    #[inline]
    fn hermite(&self, k: usize, s: f64) -> f64 {
        let (v0, v1) = (self.val[k], self.val[k + 1]);
        let (m0, m1) = (self.slope[k] * self.du, self.slope[k + 1] * self.du);
        let t = 1.0 - s;
        let h00 = (1.0 + 2.0 * s) * t * t;
        let h10 = s * t * t;
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        h00 * v0 + h10 * m0 + h01 * v1 + h11 * m1
    }

    #[inline]
    fn hermite_ds(&self, k: usize, s: f64) -> f64 {
        let (v0, v1) = (self.val[k], self.val[k + 1]);
        let (m0, m1) = (self.slope[k] * self.du, self.slope[k + 1] * self.du);
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d11 = 3.0 * s * s - 2.0 * s;
        d00 * (v0 - v1) + d10 * m0 + d11 * m1
    }

    /// `inf{x : T(x) >= v}` for the increasing table.
    fn inverse(&self, v: f64) -> f64 {
        let n = self.n();
        let first = self.node(0);
        if v <= first {
            let t = self.lo.unwrap();
            if v == first {
                return self.u0.exp();
            }
            if t.slope == 0.0 {
                return 0.0;
            }
            return (self.u0 + t.solve(v)).exp();
        }
        if v > self.node(n - 1) {
            return match self.hi {
                Some(t) if t.slope > 0.0 => (self.u_end() + t.solve(v)).exp(),
                _ => f64::INFINITY,
            };
        }
        let v = if self.log { v.ln() } else { v };
        let i = self.val.partition_point(|&w| w < v).clamp(1, n - 1);
        let k = i - 1;
        let (v0, v1) = (self.val[k], self.val[k + 1]);
        // safeguarded Newton on the Hermite cubic in [0, 1]
        let (mut a, mut b) = (0.0f64, 1.0f64);
        let mut s = if v1 > v0 { ((v - v0) / (v1 - v0)).clamp(0.0, 1.0) } else { 1.0 };
        for _ in 0..80 {
            let r = self.hermite(k, s) - v;
            if r < 0.0 {
                a = s;
            } else {
                b = s;
            }
            if r == 0.0 || b - a < 1e-15 {
                break;
            }
            let d = self.hermite_ds(k, s);
            let next = if d > 0.0 { s - r / d } else { f64::NAN };
            s = if next > a && next < b { next } else { 0.5 * (a + b) };
            if (next - s).abs() < 1e-16 && r.abs() <= 1e-15 * v.abs() {
                break;
            }
        }
        (self.u0 + (k as f64 + b.min(s.max(a))) * self.du).exp()
    }
}

/// Limits node slopes so the Hermite interpolant stays monotone.
fn fritsch_carlson(val: &[f64], slope: &mut [f64], du: f64) {
    for k in 0..val.len() - 1 {
        let delta = (val[k + 1] - val[k]) / du;
        if delta <= 0.0 {
            slope[k] = 0.0;
            slope[k + 1] = 0.0;
            continue;
        }
        let a = slope[k] / delta;
        let b = slope[k + 1] / delta;
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            slope[k] = tau * a * delta;
            slope[k + 1] = tau * b * delta;
        }
    }
}
