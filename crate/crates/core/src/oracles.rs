//! Closed-form references for the power-law pure-fragmentation family and
//! samplers for the series whose sum is the explosion time.
//!
//! With `phi(x) = a x^{-gamma}` and `h(z) = (nu + 2) z^nu`, the scaled
//! explosion time `tau = a t_inf / x^gamma` of a path started at `x` is
//! Gamma-distributed with shape `1 + (nu + 2) / gamma`.

use crate::characteristics::{CharacteristicsSpec, Regime};
use crate::density::GridDensity;
use crate::error::{Error, Result};
use crate::kernels::JumpKernel;
use crate::quad::{self, neumaier};
use crate::rng::ChainDraws;
use crate::special::{gamma_p, gamma_q};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauOracle {
    pub nu: f64,
    pub gamma: f64,
    pub a: f64,
}

const INTEGER_TOL: f64 = 1e-12;

impl TauOracle {
    pub fn new(nu: f64, gamma: f64, a: f64) -> Result<Self> {
        if !(nu > -2.0 && gamma > 0.0 && a > 0.0) {
            return Err(Error::InvalidArgument(format!("nu = {nu}, gamma = {gamma}, a = {a}")));
        }
        Ok(TauOracle { nu, gamma, a })
    }

    /// Reads `(nu, gamma, a)` off a pure-jump spec with power rate and profile.
    pub fn from_spec(spec: &CharacteristicsSpec) -> Result<Self> {
        let nu = spec.kernel().power_exponent();
        match (spec.regime(), spec.rate().power_params(), nu) {
            (Regime::PureJump, Some((a, alpha)), Some(nu)) if alpha < 0.0 => Self::new(nu, -alpha, a),
            _ => Err(Error::NotEnabled("needs pure jumps, rate a x^-gamma and a power profile".into())),
        }
    }

    pub fn shape(&self) -> f64 {
        1.0 + (self.nu + 2.0) / self.gamma
    }

    /// `P(tau > q)`.
    pub fn tau_tail(&self, q: f64) -> f64 {
        gamma_q(self.shape(), q)
    }

    pub fn tau_cdf(&self, q: f64) -> f64 {
        gamma_p(self.shape(), q)
    }

    /// `E e^{-s tau}`.
    pub fn tau_laplace(&self, s: f64) -> f64 {
        (1.0 + s).powf(-self.shape())
    }

    /// `P_x(t_inf > t)`.
    pub fn survival(&self, x: f64, t: f64) -> f64 {
        self.tau_tail(self.a * t * x.powf(-self.gamma))
    }

    /// `E_x e^{-lambda t_inf}`.
    pub fn laplace_explosion(&self, x: f64, lambda: f64) -> f64 {
        self.tau_laplace(lambda * x.powf(self.gamma) / self.a)
    }

    fn integer_order(&self) -> Option<u32> {
        let s = (self.nu + 2.0) / self.gamma;
        let r = s.round();
        ((s - r).abs() <= INTEGER_TOL && r >= 0.0).then_some(r as u32)
    }

    /// Surviving mass at time `t` as a finite Poisson sum; needs `(nu + 2) / gamma` integral.
    pub fn exact_mass(&self, t: f64, u: &GridDensity) -> Result<f64> {
        let s = self
            .integer_order()
            .ok_or_else(|| Error::NotEnabled(format!("(nu + 2) / gamma = {} is not an integer", (self.nu + 2.0) / self.gamma)))?;
        let f = move |q: f64| {
            let mut term = 1.0;
            let mut sum = 1.0;
            for k in 1..=s {
                term *= q / k as f64;
                sum += term;
            }
            (-q).exp() * sum
        };
        self.integrate_survival(t, u, f)
    }

    /// Same surviving mass through the incomplete gamma function; any shape.
    pub fn ssest_bound(&self, t: f64, u: &GridDensity) -> Result<f64> {
        let shape = self.shape();
        self.integrate_survival(t, u, move |q| gamma_q(shape, q))
    }

    fn integrate_survival(&self, t: f64, u: &GridDensity, tail: impl Fn(f64) -> f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::InvalidArgument(format!("time {t}")));
        }
        let grid = u.grid();
        let e = grid.edges();
        let mut parts = Vec::with_capacity(grid.cells());
        for (i, &m) in u.masses().iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            let c = m / grid.weights()[i];
            let q = quad::adaptive(
                |v| {
                    let x = v.exp();
                    tail(self.a * t * x.powf(-self.gamma)) * x * x
                },
                e[i].ln(),
                e[i + 1].ln(),
                1e-17,
                1e-13,
            );
            if !q.converged {
                return Err(Error::NonConvergent(format!("survival integral on cell {i}")));
            }
            parts.push(c * q.value);
        }
        Ok(neumaier(parts))
    }
}

/// `mu0 = \int_0^1 ln z h(z) z dz = -\int_0^1 H(z) / z dz` for a homogeneous kernel.
pub fn mu0(kernel: &JumpKernel) -> Result<f64> {
    if let Some(nu) = kernel.power_exponent() {
        return Ok(-1.0 / (nu + 2.0));
    }
    let h = kernel.profile_cdf().ok_or_else(|| Error::NotEnabled("mean log-ratio needs a homogeneous kernel".into()))?;
    let q = quad::integrate_from_zero(|z| h.forward(z) / z, 1.0, 1e-14, 1e-12);
    if !q.converged {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(-q.value)
}

/// Series models for the scaled explosion time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauModel {
    /// `tau = sum_k eps_k prod_{l<k} R_l^gamma`.
    PureFragmentation { nu: f64, gamma: f64 },
    /// `tau = sum_k (e^{beta eps_k / a} - 1) prod_{l<k} R_l^beta e^{beta eps_l / a}`,
    /// for growth `g = x^{1-beta}`, `phi = a x^{-beta}`; then `t_inf = x^beta tau / beta`.
    Growth { nu: f64, beta: f64, a: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauSample {
    pub value: f64,
    pub terms: usize,
    /// The running product had not decayed after the term budget.
    pub divergent: bool,
}

const SERIES_TOL: f64 = 1e-17;

/// Sums the series with draws `eps_k` then `theta_k` per term, up to `k_max` terms.
pub fn sample_tau<R: ChainDraws>(model: &TauModel, rng: &mut R, k_max: usize) -> TauSample {
    let (nu, expo) = match *model {
        TauModel::PureFragmentation { nu, gamma } => (nu, gamma),
        TauModel::Growth { nu, beta, .. } => (nu, beta),
    };
    let root = 1.0 / (nu + 2.0);
    let mut prod = 1.0f64;
    let mut sum = 0.0f64;
    for k in 1..=k_max {
        let eps = rng.exp1();
        let theta = rng.uniform();
        let ratio = theta.powf(root).powf(expo);
        match *model {
            TauModel::PureFragmentation { .. } => {
                sum += eps * prod;
                prod *= ratio;
            }
            TauModel::Growth { beta, a, .. } => {
                let grow = (beta * eps / a).exp();
                sum += (grow - 1.0) * prod;
                prod *= ratio * grow;
            }
        }
        if !prod.is_finite() || !sum.is_finite() {
            return TauSample { value: f64::INFINITY, terms: k, divergent: true };
        }
        if prod <= SERIES_TOL * sum || prod == 0.0 {
            return TauSample { value: sum, terms: k, divergent: false };
        }
    }
    TauSample { value: sum, terms: k_max, divergent: true }
}
