//! One-dimensional quadrature: adaptive Gauss-Kronrod, fixed Gauss-Legendre,
//! tails on a logarithmic axis, and compensated summation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::LazyLock;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, Copy)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// Single 15-point Kronrod panel; returns (estimate, error estimate).
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    let val = k * h;
    let err = ((k - g) * h).abs();
    (val, err)
}

struct Seg {
    a: f64,
    b: f64,
    val: f64,
    err: f64,
}

impl PartialEq for Seg {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Seg {}
impl PartialOrd for Seg {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Seg {
    fn cmp(&self, o: &Self) -> Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss-Kronrod on a finite interval.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    if a == b {
        return Quad { value: 0.0, error: 0.0, converged: true };
    }
    let (v, e) = gk15(&mut f, a, b);
    if !v.is_finite() {
        return Quad { value: v, error: f64::INFINITY, converged: false };
    }
    let mut heap = BinaryHeap::new();
    heap.push(Seg { a, b, val: v, err: e });
    let mut total = v;
    let mut total_err = e;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SEGMENTS {
            return Quad { value: total, error: total_err, converged: false };
        }
        let s = heap.pop().unwrap();
        let m = 0.5 * (s.a + s.b);
        if m <= s.a || m >= s.b {
            // interval can no longer be split in floating point
            heap.push(s);
            return Quad { value: total, error: total_err, converged: false };
        }
        let (v1, e1) = gk15(&mut f, s.a, m);
        let (v2, e2) = gk15(&mut f, m, s.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Quad { value: f64::NAN, error: f64::INFINITY, converged: false };
        }
        total += v1 + v2 - s.val;
        total_err += e1 + e2 - s.err;
        heap.push(Seg { a: s.a, b: m, val: v1, err: e1 });
        heap.push(Seg { a: m, b: s.b, val: v2, err: e2 });
        if heap.len() % 64 == 0 {
            // refresh the running sums to keep cancellation from drifting
            total = neumaier(heap.iter().map(|s| s.val));
            total_err = heap.iter().map(|s| s.err).sum();
        }
    }
    total = neumaier(heap.iter().map(|s| s.val));
    Quad { value: total, error: total_err, converged: true }
}

/// `\int_a^b f(x) dx` computed in `u = ln x`.
pub fn integrate_log<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    assert!(a > 0.0 && b > 0.0);
    adaptive(
        |u| {
            let x = u.exp();
            f(x) * x
        },
        a.ln(),
        b.ln(),
        abs_tol,
        rel_tol,
    )
}

const TAIL_PANEL: f64 = 2.0;

fn tail<F: FnMut(f64) -> f64>(mut f: F, start: f64, dir: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    let mut u = start;
    let mut total = 0.0;
    let mut err = 0.0;
    let mut quiet = 0;
    let limit = if dir > 0.0 { 709.0 } else { -744.0 };
    loop {
        let next = u + dir * TAIL_PANEL;
        if (dir > 0.0 && next > limit) || (dir < 0.0 && next < limit) {
            return Quad { value: total, error: err, converged: total == 0.0 };
        }
        let (lo, hi) = if dir > 0.0 { (u, next) } else { (next, u) };
        let q = adaptive(
            |s| {
                let x = s.exp();
                f(x) * x
            },
            lo,
            hi,
            abs_tol * 0.1,
            rel_tol,
        );
        if !q.value.is_finite() {
            return Quad { value: q.value, error: f64::INFINITY, converged: false };
        }
        total += q.value;
        err += q.error;
        // panels before any mass is seen do not count as quiet
        if total != 0.0 && q.value.abs() <= 1e-17 * total.abs() + abs_tol * 1e-3 {
            quiet += 1;
            if quiet >= 3 {
                return Quad { value: total, error: err, converged: q.converged };
            }
        } else {
            quiet = 0;
        }
        u = next;
    }
}

/// `\int_a^\infty f(x) dx` by panels of fixed width in `ln x`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(f: F, a: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    tail(f, a.ln(), 1.0, abs_tol, rel_tol)
}

/// `\int_0^b f(x) dx` by panels of fixed width in `ln x`.
pub fn integrate_from_zero<F: FnMut(f64) -> f64>(f: F, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    tail(f, b.ln(), -1.0, abs_tol, rel_tol)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// Nodes mapped onto [a, b] with matching weights.
    #[inline]
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, h * w))
    }
}

pub static GL8: LazyLock<Rule> = LazyLock::new(|| {
    let (nodes, weights) = gauss_legendre(8);
    Rule { nodes, weights }
});

pub static GL4: LazyLock<Rule> = LazyLock::new(|| {
    let (nodes, weights) = gauss_legendre(4);
    Rule { nodes, weights }
});

/// Neumaier-compensated sum; deterministic for a fixed iteration order.
pub fn neumaier<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in it {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}
