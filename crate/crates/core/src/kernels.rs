//! Jump kernels: where the process lands when it jumps.
//!
//! Fragmentation kernels are given by a density `b(x, y)` with respect to
//! `x dx`, supported on `x < y` and satisfying `\int_0^y b(x, y) x dx = y`.
//! Sampling uses the quantile transform `kappa(q, y) = H_y^{-1}(q) y`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::func::{pow, ScalarFn};
use crate::monotone::{Anchor, Direction, MonotoneMap, TableGrid};
use crate::quad;

pub type BivariateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Smallest and largest admissible uniform draw; keeps quantiles finite.
pub const Q_MIN: f64 = 1.1102230246251565e-16;
pub const Q_MAX: f64 = 1.0 - 1.1102230246251565e-16;

const QUAD_TOL: f64 = 1e-12;
const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Homogeneous,
    Separable,
    GeneralFragmentation,
    Custom,
}

#[derive(Clone)]
enum Repr {
    Homogeneous { h: ScalarFn, h_map: MonotoneMap },
    Separable { beta: ScalarFn, lambda: MonotoneMap },
    General { b: BivariateFn, cache: Arc<FragmentCache> },
    Custom { kappa: BivariateFn, density: Option<BivariateFn> },
}

#[derive(Clone)]
pub struct JumpKernel(Repr);

impl fmt::Debug for JumpKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Homogeneous { h, .. } => write!(f, "Homogeneous(h = {h:?})"),
            Repr::Separable { beta, .. } => write!(f, "Separable(beta = {beta:?})"),
            Repr::General { .. } => write!(f, "GeneralFragmentation"),
            Repr::Custom { .. } => write!(f, "Custom"),
        }
    }
}

fn unit_grid() -> TableGrid {
    TableGrid::unit(1e-20, 8193)
}

impl JumpKernel {
    /// Homogeneous kernel with profile `h(z) = (nu + 2) z^nu`, so `H(r) = r^(nu + 2)`.
    pub fn homogeneous_power(nu: f64) -> Result<Self> {
        if !(nu > -2.0) || !nu.is_finite() {
            return Err(Error::InvalidArgument(format!("power profile needs nu > -2, got {nu}")));
        }
        let k = nu + 2.0;
        let h_map = MonotoneMap::closed_form(
            Direction::Increasing,
            (0.0, 1.0),
            (0.0, 1.0),
            move |r| pow(r, k),
            move |q| pow(q, 1.0 / k),
        );
        Ok(JumpKernel(Repr::Homogeneous { h: ScalarFn::power(k, nu), h_map }))
    }

    /// Homogeneous kernel `b(x, y) = h(x / y) / y` for a profile on `(0, 1)`
    /// with `\int_0^1 h(z) z dz = 1`.
    pub fn homogeneous(h: ScalarFn) -> Result<Self> {
        if let Some(p) = h.as_power() {
            if (p.coef - (p.exponent + 2.0)).abs() <= 1e-14 * p.coef.abs() {
                return Self::homogeneous_power(p.exponent);
            }
        }
        let hh = h.clone();
        let (h_map, _) = MonotoneMap::tabulate(&move |z| hh.eval(z) * z, Direction::Increasing, Anchor::Zero, &unit_grid())?;
        let total = h_map.forward(1.0);
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidArgument(format!("profile is not normalized: integral of h(z) z is {total}")));
        }
        Ok(JumpKernel(Repr::Homogeneous { h, h_map }))
    }

    /// Separable kernel `b(x, y) = beta(x) y / Lambda(y)` with `Lambda(y) = \int_0^y beta(z) z dz`.
    pub fn separable(beta: ScalarFn) -> Result<Self> {
        let lambda = if let Some(p) = beta.as_power() {
            if !(p.exponent > -2.0) || !(p.coef > 0.0) {
                return Err(Error::InvalidArgument("separable power weight needs c > 0 and mu > -2".into()));
            }
            MonotoneMap::power_integral(p.coef, p.exponent + 2.0, Direction::Increasing)
        } else {
            let bb = beta.clone();
            MonotoneMap::tabulate(&move |z| bb.eval(z) * z, Direction::Increasing, Anchor::Zero, &TableGrid::default())?.0
        };
        Ok(JumpKernel(Repr::Separable { beta, lambda }))
    }

    /// General fragmentation density with a cache of quantile tables on a
    /// log-spaced grid of source points (default 256 slots on [1e-4, 1e4]).
    pub fn general(b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::general_with_cache(b, 1e-4, 1e4, 256)
    }

    pub fn general_with_cache(b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, x_lo: f64, x_hi: f64, slots: usize) -> Self {
        let cache = FragmentCache::new(x_lo, x_hi, slots.max(2));
        JumpKernel(Repr::General { b: Arc::new(b), cache: Arc::new(cache) })
    }

    /// Arbitrary jump map `kappa(q, x)`, optionally with a transition density
    /// `p(z, x)` with respect to `z dz`.
    pub fn custom(kappa: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        JumpKernel(Repr::Custom { kappa: Arc::new(kappa), density: None })
    }

    pub fn custom_with_density(
        kappa: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        density: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        JumpKernel(Repr::Custom { kappa: Arc::new(kappa), density: Some(Arc::new(density)) })
    }

    pub fn family(&self) -> KernelFamily {
        match self.0 {
            Repr::Homogeneous { .. } => KernelFamily::Homogeneous,
            Repr::Separable { .. } => KernelFamily::Separable,
            Repr::General { .. } => KernelFamily::GeneralFragmentation,
            Repr::Custom { .. } => KernelFamily::Custom,
        }
    }

    /// Jumps never increase the state.
    pub fn is_fragmentation(&self) -> bool {
        !matches!(self.0, Repr::Custom { .. })
    }

    /// Profile `h` of a homogeneous kernel.
    pub fn profile(&self) -> Option<&ScalarFn> {
        match &self.0 {
            Repr::Homogeneous { h, .. } => Some(h),
            _ => None,
        }
    }

    /// `nu` when the profile is `(nu + 2) z^nu`.
    pub fn power_exponent(&self) -> Option<f64> {
        match &self.0 {
            Repr::Homogeneous { h, .. } => h.as_power().map(|p| p.exponent),
            _ => None,
        }
    }

    /// `H(r) = \int_0^r h(z) z dz` of a homogeneous kernel.
    pub fn profile_cdf(&self) -> Option<&MonotoneMap> {
        match &self.0 {
            Repr::Homogeneous { h_map, .. } => Some(h_map),
            _ => None,
        }
    }

    /// Post-jump position `kappa(q, x)`.
    #[inline]
    pub fn sample(&self, q: f64, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::KernelDomain(format!("jump from x = {x}")));
        }
        let q = q.clamp(Q_MIN, Q_MAX);
        match &self.0 {
            Repr::Homogeneous { h_map, .. } => Ok(h_map.inverse(q) * x),
            Repr::Separable { lambda, .. } => Ok(lambda.inverse(q * lambda.forward(x)).min(x)),
            Repr::General { b, cache } => Ok(cache.quantile(b, x, q)?.min(1.0) * x),
            Repr::Custom { kappa, .. } => {
                let y = kappa(q, x);
                if !(y > 0.0) || !y.is_finite() {
                    return Err(Error::KernelDomain(format!("custom jump from {x} returned {y}")));
                }
                Ok(y)
            }
        }
    }

    /// Fragmentation density `b(x, y)` with respect to `x dx`.
    pub fn density(&self, x: f64, y: f64) -> Result<f64> {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::KernelDomain(format!("density at ({x}, {y})")));
        }
        match &self.0 {
            Repr::Homogeneous { h, .. } => Ok(if x < y { h.eval(x / y) / y } else { 0.0 }),
            Repr::Separable { beta, lambda } => Ok(if x < y { beta.eval(x) * y / lambda.forward(y) } else { 0.0 }),
            Repr::General { b, .. } => Ok(if x < y { b(x, y) } else { 0.0 }),
            Repr::Custom { density: Some(p), .. } => Ok(p(x, y) * y),
            Repr::Custom { density: None, .. } => Err(Error::NoDensity),
        }
    }

    /// Transition density `p(x, y) = b(x, y) / y` of landing at `x` from `y`.
    pub fn transition_density(&self, x: f64, y: f64) -> Result<f64> {
        Ok(self.density(x, y)? / y)
    }

    /// Probability of landing in `(0, r]` when jumping from `x`.
    pub fn cdf(&self, x: f64, r: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::KernelDomain(format!("jump from x = {x}")));
        }
        if r <= 0.0 {
            return Ok(0.0);
        }
        let v = match &self.0 {
            Repr::Homogeneous { h_map, .. } => {
                if r >= x {
                    1.0
                } else {
                    h_map.forward(r / x)
                }
            }
            Repr::Separable { lambda, .. } => {
                if r >= x {
                    1.0
                } else {
                    lambda.forward(r) / lambda.forward(x)
                }
            }
            Repr::General { b, cache } => {
                if r >= x {
                    1.0
                } else {
                    cache.cdf(b, x, r / x)?
                }
            }
            Repr::Custom { density: Some(p), .. } => {
                let q = quad::integrate_from_zero(|z| p(z, x) * z, r, 1e-14, QUAD_TOL);
                if !q.converged {
                    return Err(Error::NonConvergent(format!("kernel cdf at ({x}, {r})")));
                }
                q.value
            }
            Repr::Custom { density: None, .. } => return Err(Error::NoDensity),
        };
        Ok(v.clamp(0.0, 1.0))
    }

    /// Relative defect `|\int_0^y b(x, y) x dx - y| / y` of the mass condition.
    pub fn mass_condition_residual(&self, y: f64) -> Result<f64> {
        if !self.is_fragmentation() {
            return Err(Error::InvalidArgument("mass condition applies to fragmentation kernels".into()));
        }
        let mut failed = None;
        let q = quad::integrate_from_zero(
            |x| match self.density(x, y) {
                Ok(b) => b * x,
                Err(e) => {
                    failed = Some(e);
                    0.0
                }
            },
            y,
            1e-14 * y,
            QUAD_TOL,
        );
        if let Some(e) = failed {
            return Err(e);
        }
        Ok((q.value - y).abs() / y)
    }
}

/// Quantile tables of `H_x` on a log grid of source points.
struct FragmentCache {
    ln_lo: f64,
    step: f64,
    slots: Vec<OnceLock<Option<MonotoneMap>>>,
}

const SLOT_MATCH: f64 = 1e-12;
const EDGE: f64 = 1.0 - 1e-13;

impl FragmentCache {
    fn new(x_lo: f64, x_hi: f64, n: usize) -> Self {
        let ln_lo = x_lo.ln();
        let step = (x_hi.ln() - ln_lo) / (n - 1) as f64;
        FragmentCache { ln_lo, step, slots: (0..n).map(|_| OnceLock::new()).collect() }
    }

    fn slot(&self, x: f64) -> Option<usize> {
        let s = (x.ln() - self.ln_lo) / self.step;
        let k = s.round();
        if k >= 0.0 && (k as usize) < self.slots.len() && (s - k).abs() * self.step < SLOT_MATCH {
            Some(k as usize)
        } else {
            None
        }
    }

    fn table(&self, b: &BivariateFn, x: f64) -> Option<&MonotoneMap> {
        let k = self.slot(x)?;
        self.slots[k]
            .get_or_init(|| {
                let bb = b.clone();
                // left limit at z = 1, where the support cutoff of b sits
                let f = move |z: f64| {
                    let z = z.min(EDGE);
                    bb(x * z, x) * x * z
                };
                MonotoneMap::tabulate(&f, Direction::Increasing, Anchor::Zero, &TableGrid::unit(1e-16, 2049)).ok().map(|t| t.0)
            })
            .as_ref()
    }

    fn cdf(&self, b: &BivariateFn, x: f64, r: f64) -> Result<f64> {
        if let Some(t) = self.table(b, x) {
            return Ok(t.forward(r));
        }
        h_direct(b, x, 0.0, r)
    }

    fn quantile(&self, b: &BivariateFn, x: f64, q: f64) -> Result<f64> {
        if let Some(t) = self.table(b, x) {
            return Ok(t.inverse(q));
        }
        // safeguarded Newton on r -> H_x(r) with incremental quadrature
        let dens = |r: f64| b(x * r, x) * x * r;
        let total = h_direct(b, x, 0.0, 1.0)?;
        if q >= total {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let (mut h_lo, mut h_hi) = (0.0, total);
        let mut r = 0.5;
        let mut h_r = h_direct(b, x, 0.0, r)?;
        for _ in 0..200 {
            if h_r < q {
                lo = r;
                h_lo = h_r;
            } else {
                hi = r;
                h_hi = h_r;
            }
            if hi - lo <= 1e-13 * hi {
                break;
            }
            let d = dens(r);
            let mut next = if d > 0.0 { r + (q - h_r) / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                // bisect in log scale when the bracket spans decades
                next = if lo > 0.0 && hi / lo > 4.0 { (lo * hi).sqrt() } else if lo == 0.0 { hi * 0.25 } else { 0.5 * (lo + hi) };
            }
            let (base, h_base) = if (next - lo).abs() < (hi - next).abs() { (lo, h_lo) } else { (hi, h_hi) };
            h_r = if base == 0.0 { h_direct(b, x, 0.0, next)? } else { h_base + h_direct(b, x, base, next)? };
            r = next;
        }
        Ok(r)
    }
}

/// `\int_a^c b(x z, x) x z dz` by adaptive quadrature (signed when c < a).
fn h_direct(b: &BivariateFn, x: f64, a: f64, c: f64) -> Result<f64> {
    let f = |z: f64| b(x * z, x) * x * z;
    let q = if a == 0.0 {
        quad::integrate_from_zero(f, c, 1e-15, QUAD_TOL)
    } else {
        quad::adaptive(f, a, c, 1e-15, QUAD_TOL)
    };
    if !q.value.is_finite() {
        return Err(Error::NonConvergent(format!("fragment distribution at x = {x}")));
    }
    Ok(q.value)
}
