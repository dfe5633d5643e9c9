//! Positive scalar functions on the half-line, with a fast path for powers.

use std::fmt;
use std::sync::Arc;

type DynFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `c * x^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Power {
    pub coef: f64,
    pub exponent: f64,
}

impl Power {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coef * pow(x, self.exponent)
    }
}

/// `x^p` with shortcuts for the exponents that show up in practice.
#[inline]
pub fn pow(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == 1.0 {
        x
    } else if p == -1.0 {
        1.0 / x
    } else if p == 2.0 {
        x * x
    } else if p == 0.5 {
        x.sqrt()
    } else if p == -0.5 {
        1.0 / x.sqrt()
    } else if p == -2.0 {
        1.0 / (x * x)
    } else if p == 3.0 {
        x * x * x
    } else if p.fract() == 0.0 && p.abs() <= 16.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

#[derive(Clone)]
enum Repr {
    Power(Power),
    Dyn(DynFn),
}

#[derive(Clone)]
pub struct ScalarFn(Repr);

impl ScalarFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn(Repr::Dyn(Arc::new(f)))
    }

    pub fn power(coef: f64, exponent: f64) -> Self {
        ScalarFn(Repr::Power(Power { coef, exponent }))
    }

    pub fn constant(c: f64) -> Self {
        Self::power(c, 0.0)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match &self.0 {
            Repr::Power(p) => p.eval(x),
            Repr::Dyn(f) => f(x),
        }
    }

    pub fn as_power(&self) -> Option<Power> {
        match &self.0 {
            Repr::Power(p) => Some(*p),
            Repr::Dyn(_) => None,
        }
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Power(p) => write!(f, "{}*x^{}", p.coef, p.exponent),
            Repr::Dyn(_) => write!(f, "<fn>"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pow_shortcuts_agree_with_powf() {
        for &p in &[0.0, 1.0, -1.0, 2.0, 0.5, -0.5, -2.0, 3.0, 4.0, -3.0, 0.3, -1.7] {
            for &x in &[1e-3, 0.7, 1.0, 3.2, 1e4] {
                let a = pow(x, p);
                let b = f64::powf(x, p);
                assert!(((a - b) / b).abs() < 1e-14, "p={p} x={x}");
            }
        }
    }

    #[test]
    fn scalar_fn_variants() {
        let f = ScalarFn::power(2.0, -1.0);
        assert_eq!(f.eval(4.0), 0.5);
        assert!(f.as_power().is_some());
        let g = ScalarFn::new(|x| x + 1.0);
        assert_eq!(g.eval(1.0), 2.0);
        assert!(g.as_power().is_none());
    }
}
