//! Deterministic part of the process: semiflow, jump rate, and the maps
//! `G` (flow clock) and `Q` (cumulative rate along the flow).
//!
//! Growth: `G = \int_{x0}^x 1/g`, `Q = \int_{x1}^x phi/g`, both increasing.
//! Decay: `G = \int_x^{x0} 1/g`, `Q = \int_x^{x1} phi/g`, both decreasing.
//! In both cases `pi_t x = G^{-1}(G(x) + t)` and the holding time for a
//! cumulative rate `q` is `G(Q^{-1}(Q(x) + q)) - G(x)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::func::ScalarFn;
use crate::kernels::JumpKernel;
use crate::monotone::{Anchor, Construction, Direction, MonotoneMap, TableGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    PureJump,
    Growth,
    Decay,
}

impl Regime {
    fn direction(self) -> Direction {
        match self {
            Regime::Decay => Direction::Decreasing,
            _ => Direction::Increasing,
        }
    }
}

/// Semiflow `x' = g(x)` (growth) or `x' = -g(x)` (decay), or no motion.
#[derive(Clone, Debug)]
pub struct SemiflowSpec {
    regime: Regime,
    velocity: Option<ScalarFn>,
    closed_form: Option<MonotoneMap>,
}

impl SemiflowSpec {
    pub fn pure_jump() -> Self {
        SemiflowSpec { regime: Regime::PureJump, velocity: None, closed_form: None }
    }

    pub fn growth(g: ScalarFn) -> Self {
        SemiflowSpec { regime: Regime::Growth, velocity: Some(g), closed_form: None }
    }

    pub fn decay(g: ScalarFn) -> Self {
        SemiflowSpec { regime: Regime::Decay, velocity: Some(g), closed_form: None }
    }

    /// `g(x) = x^(1 - beta)`.
    pub fn power(regime: Regime, beta: f64) -> Self {
        match regime {
            Regime::PureJump => Self::pure_jump(),
            Regime::Growth => Self::growth(ScalarFn::power(1.0, 1.0 - beta)),
            Regime::Decay => Self::decay(ScalarFn::power(1.0, 1.0 - beta)),
        }
    }

    /// Supplies `G` directly instead of integrating `1/g`.
    pub fn with_closed_form(mut self, g_map: MonotoneMap) -> Self {
        self.closed_form = Some(g_map);
        self
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn velocity(&self) -> Option<&ScalarFn> {
        self.velocity.as_ref()
    }
}

#[derive(Clone, Debug)]
pub struct RateSpec {
    phi: ScalarFn,
}

impl RateSpec {
    pub fn new(phi: ScalarFn) -> Self {
        RateSpec { phi }
    }

    /// `phi(x) = a x^alpha`.
    pub fn power(a: f64, alpha: f64) -> Self {
        RateSpec { phi: ScalarFn::power(a, alpha) }
    }

    pub fn constant(a: f64) -> Self {
        Self::power(a, 0.0)
    }

    pub fn phi(&self) -> &ScalarFn {
        &self.phi
    }

    /// `(a, alpha)` when the rate is a power.
    pub fn power_params(&self) -> Option<(f64, f64)> {
        self.phi.as_power().map(|p| (p.coef, p.exponent))
    }
}

/// Whether the non-explosion conditions on `G` and `Q` could be confirmed.
#[derive(Debug, Clone, PartialEq)]
pub enum DivergenceStatus {
    NotApplicable,
    Verified,
    DeclaredUnverified(String),
}

#[derive(Clone, Debug)]
pub struct GqMaps {
    pub g: MonotoneMap,
    pub q: MonotoneMap,
}

const DIVERGENCE_THRESHOLD: f64 = 1e6;

fn sample_points() -> impl Iterator<Item = f64> {
    (-48..=48).map(|k| 10f64.powf(k as f64 * 0.25))
}

fn check_positive(name: &str, f: &ScalarFn, strict: bool) -> Result<()> {
    for x in sample_points() {
        let v = f.eval(x);
        if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
            return Err(Error::Domain(format!("{name}({x}) = {v}")));
        }
    }
    Ok(())
}

/// Tabulates `G` and `Q` (or takes `G` from the semiflow's closed form).
pub fn build_gq(semiflow: &SemiflowSpec, rate: &RateSpec, grid: &TableGrid) -> Result<GqMaps> {
    let g = semiflow
        .velocity
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("pure-jump semiflow has no G, Q".into()))?;
    check_positive("g", g, true)?;
    check_positive("phi", &rate.phi, false)?;
    let dir = semiflow.regime.direction();
    let anchor = match dir {
        Direction::Increasing => Anchor::ZeroOrOne,
        Direction::Decreasing => Anchor::InfinityOrOne,
    };
    let g_map = match &semiflow.closed_form {
        Some(m) => m.clone(),
        None => {
            let gg = g.clone();
            MonotoneMap::tabulate(&move |x| 1.0 / gg.eval(x), dir, anchor, grid)?.0
        }
    };
    let (gg, phi) = (g.clone(), rate.phi.clone());
    let q_map = MonotoneMap::tabulate(&move |x| phi.eval(x) / gg.eval(x), dir, anchor, grid)?.0;
    Ok(GqMaps { g: g_map, q: q_map })
}

/// Closed-form `G`, `Q` when both `g` and `phi` are powers.
pub fn closed_form_gq(semiflow: &SemiflowSpec, rate: &RateSpec) -> Option<GqMaps> {
    let g = semiflow.velocity.as_ref()?.as_power()?;
    let phi = rate.phi.as_power()?;
    if !(g.coef > 0.0) || phi.coef < 0.0 {
        return None;
    }
    let dir = semiflow.regime.direction();
    let beta = 1.0 - g.exponent;
    let g_map = match &semiflow.closed_form {
        Some(m) => m.clone(),
        None => MonotoneMap::power_integral(1.0 / g.coef, beta, dir),
    };
    let q_map = MonotoneMap::power_integral(phi.coef / g.coef, phi.exponent + beta, dir);
    Some(GqMaps { g: g_map, q: q_map })
}

/// Local characteristics `(pi, phi, kernel)` with the derived maps.
#[derive(Clone, Debug)]
pub struct CharacteristicsSpec {
    semiflow: SemiflowSpec,
    rate: RateSpec,
    kernel: JumpKernel,
    maps: Option<GqMaps>,
    divergence: DivergenceStatus,
}

impl CharacteristicsSpec {
    pub fn new(semiflow: SemiflowSpec, rate: RateSpec, kernel: JumpKernel) -> Result<Self> {
        Self::with_grid(semiflow, rate, kernel, &TableGrid::default())
    }

    pub fn with_grid(semiflow: SemiflowSpec, rate: RateSpec, kernel: JumpKernel, grid: &TableGrid) -> Result<Self> {
        if semiflow.regime == Regime::PureJump {
            check_positive("phi", &rate.phi, true)?;
            return Ok(CharacteristicsSpec { semiflow, rate, kernel, maps: None, divergence: DivergenceStatus::NotApplicable });
        }
        let maps = match closed_form_gq(&semiflow, &rate) {
            Some(m) => {
                check_positive("phi", &rate.phi, false)?;
                m
            }
            None => build_gq(&semiflow, &rate, grid)?,
        };
        Self::with_maps(semiflow, rate, kernel, maps)
    }

    /// Uses caller-supplied `G`, `Q`.
    pub fn with_maps(semiflow: SemiflowSpec, rate: RateSpec, kernel: JumpKernel, maps: GqMaps) -> Result<Self> {
        if semiflow.regime == Regime::PureJump {
            return Err(Error::InvalidArgument("pure-jump regime takes no G, Q".into()));
        }
        let divergence = divergence_status(semiflow.regime, &maps);
        Ok(CharacteristicsSpec { semiflow, rate, kernel, maps: Some(maps), divergence })
    }

    pub fn regime(&self) -> Regime {
        self.semiflow.regime
    }

    pub fn semiflow(&self) -> &SemiflowSpec {
        &self.semiflow
    }

    pub fn rate(&self) -> &RateSpec {
        &self.rate
    }

    pub fn kernel(&self) -> &JumpKernel {
        &self.kernel
    }

    pub fn maps(&self) -> Option<&GqMaps> {
        self.maps.as_ref()
    }

    pub fn divergence(&self) -> &DivergenceStatus {
        &self.divergence
    }

    #[inline]
    pub fn phi(&self, x: f64) -> f64 {
        self.rate.phi.eval(x)
    }

    /// Signed velocity of the flow at `x`.
    pub fn velocity(&self, x: f64) -> f64 {
        match (&self.semiflow.regime, &self.semiflow.velocity) {
            (Regime::Growth, Some(g)) => g.eval(x),
            (Regime::Decay, Some(g)) => -g.eval(x),
            _ => 0.0,
        }
    }

    /// Time for the decay flow started at `x` to reach 0, if finite.
    pub fn exit_time(&self, x: f64) -> Option<f64> {
        let m = self.maps.as_ref()?;
        if self.regime() != Regime::Decay {
            return None;
        }
        let g0 = m.g.limit_lower();
        g0.is_finite().then(|| g0 - m.g.forward(x))
    }

    /// `pi_t x`.
    pub fn flow(&self, t: f64, x: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::InvalidArgument(format!("negative time {t}")));
        }
        let m = match &self.maps {
            None => return Ok(x),
            Some(m) => m,
        };
        if t == 0.0 {
            return Ok(x);
        }
        let gx = m.g.forward(x);
        let v = gx + t;
        match self.regime() {
            Regime::Growth => {
                let lim = m.g.limit_upper();
                if v >= lim {
                    return Err(Error::FlowBlowUp { hit_time: lim - gx });
                }
            }
            _ => {
                let lim = m.g.limit_lower();
                if v >= lim {
                    return Err(Error::DomainExit { hit_time: lim - gx });
                }
            }
        }
        Ok(m.g.inverse(v))
    }

    /// `pi_{-t} x`, when the backward orbit exists for time `t`.
    pub fn backward_flow(&self, t: f64, x: f64) -> Option<f64> {
        let m = match &self.maps {
            None => return Some(x),
            Some(m) => m,
        };
        if t == 0.0 {
            return Some(x);
        }
        let v = m.g.forward(x) - t;
        let lim = match self.regime() {
            Regime::Growth => m.g.limit_lower(),
            _ => m.g.limit_upper(),
        };
        if v <= lim {
            return None;
        }
        let y = m.g.inverse(v);
        (y > 0.0 && y.is_finite()).then_some(y)
    }

    /// `phi_x(t) = \int_0^t phi(pi_s x) ds`, counting only the time spent in `(0, inf)`.
    pub fn cumulative_rate(&self, x: f64, t: f64) -> f64 {
        let m = match &self.maps {
            None => return self.phi(x) * t,
            Some(m) => m,
        };
        let qx = m.q.forward(x);
        match self.flow(t, x) {
            Ok(y) => m.q.forward(y) - qx,
            Err(Error::DomainExit { .. }) => m.q.limit_lower() - qx,
            Err(_) => m.q.limit_upper() - qx,
        }
    }

    /// Holding time and pre-jump position for cumulative rate `q`.
    #[inline]
    pub fn jump_target(&self, x: f64, q: f64) -> Result<(f64, f64)> {
        if !(q >= 0.0) {
            return Err(Error::InvalidArgument(format!("cumulative rate {q}")));
        }
        if q == 0.0 {
            return Ok((0.0, x));
        }
        let m = match &self.maps {
            None => {
                let dt = q / self.phi(x);
                if !dt.is_finite() {
                    return Err(Error::InfiniteHolding);
                }
                return Ok((dt, x));
            }
            Some(m) => m,
        };
        if let (Some(r), Some(_)) = (m.q.log_shift(x, q), m.g.power_params()) {
            return self.power_jump_target(m, x, r);
        }
        let target = m.q.forward(x) + q;
        match self.regime() {
            Regime::Growth => {
                if target > m.q.limit_upper() {
                    return Err(Error::InfiniteHolding);
                }
                let y = m.q.inverse(target).max(x);
                if !y.is_finite() {
                    return Err(Error::InfiniteHolding);
                }
                let dt = (m.g.forward(y) - m.g.forward(x)).max(0.0);
                if !dt.is_finite() {
                    return Err(Error::InfiniteHolding);
                }
                Ok((dt, y))
            }
            _ => {
                if target >= m.q.limit_lower() {
                    let g0 = m.g.limit_lower();
                    if g0.is_finite() {
                        return Err(Error::DomainExit { hit_time: g0 - m.g.forward(x) });
                    }
                    return Err(Error::InfiniteHolding);
                }
                let y = m.q.inverse(target).min(x);
                if !(y > 0.0) {
                    let g0 = m.g.limit_lower();
                    if g0.is_finite() {
                        return Err(Error::DomainExit { hit_time: g0 - m.g.forward(x) });
                    }
                    return Err(Error::InfiniteHolding);
                }
                let dt = (m.g.forward(y) - m.g.forward(x)).max(0.0);
                if !dt.is_finite() {
                    return Err(Error::InfiniteHolding);
                }
                Ok((dt, y))
            }
        }
    }

    fn power_jump_target(&self, m: &GqMaps, x: f64, r: f64) -> Result<(f64, f64)> {
        let r = match self.regime() {
            Regime::Growth => r.max(0.0),
            _ => r.min(0.0),
        };
        let y = x * r.exp();
        if r == f64::INFINITY || y == f64::INFINITY {
            return Err(Error::InfiniteHolding);
        }
        if r == f64::NEG_INFINITY || y == 0.0 {
            let g0 = m.g.limit_lower();
            if g0.is_finite() {
                let hit = m.g.log_diff(x, f64::NEG_INFINITY).filter(|h| h.is_finite()).unwrap_or(g0 - m.g.forward(x));
                return Err(Error::DomainExit { hit_time: hit });
            }
            return Err(Error::InfiniteHolding);
        }
        let dt = m.g.log_diff(x, r).unwrap_or(f64::NAN).max(0.0);
        if !dt.is_finite() {
            return Err(Error::InfiniteHolding);
        }
        Ok((dt, y))
    }

    /// `phi_x^{-1}(q)`: holding time needed to accumulate rate `q`.
    pub fn inverse_cumulative_rate(&self, x: f64, q: f64) -> Result<f64> {
        self.jump_target(x, q).map(|r| r.0)
    }

    /// `pi_{phi_x^{-1}(q)} x = Q^{-1}(Q(x) + q)`.
    pub fn post_flow_position(&self, x: f64, q: f64) -> Result<f64> {
        self.jump_target(x, q).map(|r| r.1)
    }

    /// Largest relative defect of `G' g = +-1` and `Q' g = +-phi` over sample points.
    pub fn consistency_residual(&self) -> f64 {
        let (m, g) = match (&self.maps, &self.semiflow.velocity) {
            (Some(m), Some(g)) => (m, g),
            _ => return 0.0,
        };
        let sign = match self.regime() {
            Regime::Decay => -1.0,
            _ => 1.0,
        };
        let h = 1e-4f64;
        let mut worst = 0.0f64;
        for k in -24..=24 {
            let x = 10f64.powf(k as f64 * 0.25);
            let (a, b) = (x * (-h).exp(), x * h.exp());
            let dg = (m.g.forward(b) - m.g.forward(a)) / (b - a);
            let dq = (m.q.forward(b) - m.q.forward(a)) / (b - a);
            worst = worst.max((sign * dg * g.eval(x) - 1.0).abs());
            let phi = self.phi(x);
            worst = worst.max((sign * dq * g.eval(x) - phi).abs() / phi.max(1e-300));
        }
        worst
    }
}

fn divergence_status(regime: Regime, maps: &GqMaps) -> DivergenceStatus {
    // growth needs G, Q unbounded above; decay needs them unbounded toward 0
    let (g_lim, q_lim, g_far, q_far) = match regime {
        Regime::Growth => (maps.g.limit_upper(), maps.q.limit_upper(), maps.g.forward(1e300), maps.q.forward(1e300)),
        _ => (maps.g.limit_lower(), maps.q.limit_lower(), maps.g.forward(1e-300), maps.q.forward(1e-300)),
    };
    let tabulated = maps.g.construction() == Construction::Tabulated || maps.q.construction() == Construction::Tabulated;
    let mut notes = Vec::new();
    if g_lim.is_finite() && !(tabulated && g_far.abs() > DIVERGENCE_THRESHOLD) {
        notes.push(format!("flow clock G bounded ({g_lim})"));
    }
    if q_lim.is_finite() && !(tabulated && q_far.abs() > DIVERGENCE_THRESHOLD) {
        notes.push(format!("cumulative rate Q bounded ({q_lim})"));
    }
    if notes.is_empty() {
        DivergenceStatus::Verified
    } else {
        DivergenceStatus::DeclaredUnverified(notes.join("; "))
    }
}

/// Writes `(x, value)` rows of a map on `n` log-spaced points.
pub fn write_map_csv(map: &MonotoneMap, path: &Path, x_lo: f64, x_hi: f64, n: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    w.write_record(["x", "value"]).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n = n.max(2);
    for k in 0..n {
        let x = (x_lo.ln() + (x_hi / x_lo).ln() * k as f64 / (n - 1) as f64).exp();
        w.write_record([x.to_string(), map.forward(x).to_string()]).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frag() -> JumpKernel {
        JumpKernel::homogeneous_power(0.0).unwrap()
    }

    fn spec(semi: SemiflowSpec, rate: RateSpec) -> CharacteristicsSpec {
        CharacteristicsSpec::new(semi, rate, frag()).unwrap()
    }

    #[test]
    fn flows() {
        let pj = spec(SemiflowSpec::pure_jump(), RateSpec::power(1.0, -1.0));
        assert_eq!(pj.flow(5.0, 3.0).unwrap(), 3.0);
        let gr = spec(SemiflowSpec::growth(ScalarFn::power(1.0, 1.0)), RateSpec::constant(1.0));
        assert!((gr.flow(1.0, 1.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        let de = spec(SemiflowSpec::decay(ScalarFn::constant(1.0)), RateSpec::constant(1.0));
        assert!((de.flow(0.5, 2.0).unwrap() - 1.5).abs() < 1e-15);
        match de.flow(3.0, 2.0) {
            Err(Error::DomainExit { hit_time }) => assert!((hit_time - 2.0).abs() < 1e-15),
            r => panic!("{r:?}"),
        }
        assert_eq!(de.exit_time(2.0), Some(2.0));
    }

    #[test]
    fn tabulated_g_is_log() {
        let semi = SemiflowSpec::growth(ScalarFn::new(|x| x));
        let m = build_gq(&semi, &RateSpec::constant(1.0), &TableGrid::default()).unwrap();
        assert!((m.g.forward(2.0) - 2f64.ln()).abs() < 1e-10);
        assert_eq!(m.g.construction(), Construction::Tabulated);
    }

    #[test]
    fn holding_times() {
        let pj = spec(SemiflowSpec::pure_jump(), RateSpec::power(1.0, -1.0));
        assert!((pj.inverse_cumulative_rate(2.0, 3.0).unwrap() - 6.0).abs() < 1e-15);
        let gr = spec(SemiflowSpec::growth(ScalarFn::power(1.0, 1.0)), RateSpec::constant(4.0));
        assert!((gr.inverse_cumulative_rate(1.0, 2.0).unwrap() - 0.5).abs() < 1e-14);
        // decay g = x^{1-b}, phi = a x^{-b}
        let (b, a) = (1.0, 2.0);
        let de = spec(SemiflowSpec::power(Regime::Decay, b), RateSpec::power(a, -b));
        let exact = (1.0 / b) * (1.0 - (-b * 1.0 / a).exp());
        assert!((de.inverse_cumulative_rate(1.0, 1.0).unwrap() - exact).abs() < 1e-14);
        for s in [pj, gr, de] {
            assert_eq!(s.inverse_cumulative_rate(1.7, 0.0).unwrap(), 0.0);
            assert_eq!(s.post_flow_position(1.7, 0.0).unwrap(), 1.7);
        }
    }

    #[test]
    fn post_flow_positions() {
        // constant rate a with g = x^{1-b}: Q = a x^b / b
        let gr = spec(SemiflowSpec::power(Regime::Growth, 1.0), RateSpec::constant(1.0));
        assert!((gr.post_flow_position(1.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        // rate a x^{-b}: Q = a ln x
        let gr = spec(SemiflowSpec::power(Regime::Growth, 1.0), RateSpec::power(1.0, -1.0));
        assert!((gr.post_flow_position(1.0, 1.0).unwrap() - std::f64::consts::E).abs() < 1e-14);
        let de = spec(SemiflowSpec::decay(ScalarFn::power(1.0, 1.0)), RateSpec::power(1.0, -1.0));
        assert!((de.post_flow_position(1.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn tabulated_matches_closed_form() {
        let grid = TableGrid::default();
        for (regime, beta, a, alpha) in [
            (Regime::Growth, 0.0, 1.0, 1.0),
            (Regime::Growth, 0.5, 2.0, 0.5),
            (Regime::Growth, 1.0, 1.0, -1.0),
            (Regime::Decay, 0.0, 1.0, -1.0),
            (Regime::Decay, -1.0, 1.0, 0.5),
        ] {
            let semi = SemiflowSpec::power(regime, beta);
            let rate = RateSpec::power(a, alpha);
            let exact = closed_form_gq(&semi, &rate).unwrap();
            let b2 = beta;
            let g_dyn = match regime {
                Regime::Growth => SemiflowSpec::growth(ScalarFn::new(move |x| x.powf(1.0 - b2))),
                _ => SemiflowSpec::decay(ScalarFn::new(move |x| x.powf(1.0 - b2))),
            };
            let tab = build_gq(&g_dyn, &RateSpec::new(ScalarFn::new(move |x| a * x.powf(alpha))), &grid).unwrap();
            for &x in &[1e-3, 0.5, 1.0, 2.0, 4.0, 300.0] {
                let (e, t) = (exact.q.forward(x), tab.q.forward(x));
                assert!((e - t).abs() < 1e-9 * (1.0 + e.abs()), "{regime:?} b={beta} x={x} {e} {t}");
                let (e, t) = (exact.g.forward(x), tab.g.forward(x));
                assert!((e - t).abs() < 1e-9 * (1.0 + e.abs()), "G {regime:?} b={beta} x={x} {e} {t}");
            }
        }
    }

    #[test]
    fn decay_q_anchored_at_infinity() {
        let semi = SemiflowSpec::decay(ScalarFn::new(|x| x));
        let m = build_gq(&semi, &RateSpec::new(ScalarFn::new(|x| 3.0 / x)), &TableGrid::default()).unwrap();
        for &x in &[0.01, 0.5, 1.0, 7.0, 1e4] {
            assert!((m.q.forward(x) - 3.0 / x).abs() < 1e-9 * (3.0 / x), "x={x}");
        }
    }

    #[test]
    fn consistency_and_divergence_flags() {
        let s = spec(SemiflowSpec::power(Regime::Growth, 0.5), RateSpec::power(1.0, 0.5));
        assert!(s.consistency_residual() < 1e-6);
        assert_eq!(s.divergence(), &DivergenceStatus::Verified);
        // g = x^2 grows to infinity in finite time
        let s = spec(SemiflowSpec::power(Regime::Growth, -1.0), RateSpec::constant(1.0));
        assert!(matches!(s.divergence(), DivergenceStatus::DeclaredUnverified(_)));
        let t = CharacteristicsSpec::new(
            SemiflowSpec::growth(ScalarFn::new(|x| x * x)),
            RateSpec::new(ScalarFn::new(|_| 1.0)),
            frag(),
        )
        .unwrap();
        assert!(matches!(t.divergence(), DivergenceStatus::DeclaredUnverified(_)));
        assert!(matches!(t.flow(10.0, 1.0), Err(Error::FlowBlowUp { .. })));
    }

    #[test]
    fn domain_errors() {
        let r = CharacteristicsSpec::new(SemiflowSpec::growth(ScalarFn::new(|x| x - 1.0)), RateSpec::constant(1.0), frag());
        assert!(matches!(r, Err(Error::Domain(_))));
        let r = CharacteristicsSpec::new(SemiflowSpec::pure_jump(), RateSpec::constant(0.0), frag());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn deep_states_keep_holding_times() {
        // g = x^2 decay, phi = 1: near 0 the flow is frozen and the holding time is q
        let s = spec(SemiflowSpec::power(Regime::Decay, -1.0), RateSpec::constant(1.0));
        for x in [1e-10, 1e-100, 1e-300] {
            let (dt, y) = s.jump_target(x, 0.7).unwrap();
            assert!((dt - 0.7).abs() < 1e-9, "{x}: {dt}");
            assert!(y <= x && y / x > 1.0 - 1e-9);
        }
        // g = x^2 decay, phi = 1/x: holding time ~ q x
        let s = spec(SemiflowSpec::power(Regime::Decay, -1.0), RateSpec::power(1.0, -1.0));
        for x in [1e-10, 1e-100] {
            let (dt, _) = s.jump_target(x, 2.0).unwrap();
            assert!((dt / (2.0 * x) - 1.0).abs() < 1e-6, "{x}: {dt}");
        }
        // growth from a tiny state with g = x, phi = 1: y = x e^q
        let s = spec(SemiflowSpec::power(Regime::Growth, 0.0), RateSpec::constant(1.0));
        let (dt, y) = s.jump_target(1e-250, 1.5).unwrap();
        assert!((dt - 1.5).abs() < 1e-12 && (y / 1e-250 / 1.5f64.exp() - 1.0).abs() < 1e-12);
    }
}
