//! The flow `∂ₜu = -Ψ(u)`, its exponent `Φ`, the absorption functions
//! `aₜ = u(t, 0+)` and `v(t) = u(t, ∞)`, the drift `dₜ` and the scaling
//! function `f(t)`.
//!
//! The reference route inverts elapsed-time integrals: for a mechanism that
//! is negative on `(0, ∞)` the flow started at `λ` reaches `λ + δ` after
//! `∫_0^δ dw / -Ψ(λ + w)` time units, so `u(t, λ)` is the `δ` solving that
//! integral equation. Every integral is taken over the increment `w` rather
//! than over `u`, which keeps differences such as `u(t, λ) - aₜ` accurate to
//! full relative precision even when both terms are huge. The ODE route
//! integrates the flow in coordinates where it is smooth and serves as an
//! independent check.

use ode_solvers::{Dop853, OutputType, System, Vector1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{classify, BranchingMechanism, Classification};
use crate::quad::{integrate, integrate_to_infinity, QuadOptions};
use crate::roots::{expand_down, expand_up, solve_increasing, RootOptions, MAX_DOUBLINGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Ode,
    PhiInversion,
    CrossCheck,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ode" => Ok(Backend::Ode),
            "phi_inversion" | "phi" => Ok(Backend::PhiInversion),
            "cross_check" => Ok(Backend::CrossCheck),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: u32,
    pub backend: Backend,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 100_000,
            backend: Backend::PhiInversion,
        }
    }
}

impl FlowConfig {
    pub fn with_backend(backend: Backend) -> Self {
        FlowConfig {
            backend,
            ..FlowConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v < 1e-2) {
                return Err(Error::Config(format!("{name} must lie in (0, 1e-2), got {v}")));
            }
        }
        if self.max_steps < 1000 {
            return Err(Error::Config(format!("max_steps must be at least 1000, got {}", self.max_steps)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub value: f64,
    pub achieved_error_estimate: f64,
    pub backend_used: Backend,
    pub agreement_gap: Option<f64>,
}

/// Where the flow started at `λ` lives relative to the largest root `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Region {
    /// `q = ∞`: `Ψ < 0` on `(0, ∞)` and `u` increases without bound.
    Growth,
    /// `u` relaxes monotonically towards a finite `q` from above or below.
    Toward { q: f64, above: bool },
    /// `λ = q`: a fixed point.
    Rest,
}

/// A mechanism together with its classification and the data needed to
/// integrate its flow.
#[derive(Debug, Clone)]
pub struct Flow {
    mech: BranchingMechanism,
    class: Classification,
    /// `(α₀, |C|)` with `-Ψ(u) ~ |C| u^{1-α₀}` at `0+`, for explosive mechanisms.
    singular: Option<(f64, f64)>,
    quad: QuadOptions,
}

/// Find `d >= 0` with `span(0, d) = target` for a clock `span` that is
/// increasing in `d` with derivative `rate`. Returns `(d, |last correction|)`.
fn solve_clock<S, R>(span: S, rate: R, target: f64, guess: f64) -> Result<(f64, f64)>
where
    S: Fn(f64, f64) -> Result<f64>,
    R: Fn(f64) -> f64,
{
    if target == 0.0 {
        return Ok((0.0, 0.0));
    }
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::numeric(format!("elapsed time must be positive and finite, got {target}")));
    }
    let signed = |a: f64, b: f64| -> Result<f64> {
        if b >= a {
            span(a, b)
        } else {
            Ok(-span(b, a)?)
        }
    };
    let mut hi = if guess.is_finite() && guess > 0.0 { guess } else { 1.0 };
    let mut t_hi = span(0.0, hi)?;
    let (mut lo, mut t_lo) = (0.0, 0.0);
    let mut n = 0;
    while t_hi < target {
        n += 1;
        if n > MAX_DOUBLINGS || !(2.0 * hi).is_finite() {
            return Err(Error::numeric(format!(
                "clock bracket expansion failed: elapsed {t_hi:e} < {target:e} at d = {hi:e}"
            )));
        }
        lo = hi;
        t_lo = t_hi;
        hi *= 2.0;
        t_hi = t_lo + span(lo, hi)?;
    }
    if lo == 0.0 {
        // the guess overshot; shrink it so the bracket is tight
        loop {
            n += 1;
            if n > 2 * MAX_DOUBLINGS {
                return Err(Error::numeric("clock bracket contraction failed"));
            }
            let mid = 0.5 * hi;
            if mid == 0.0 {
                break;
            }
            let t_mid = span(0.0, mid)?;
            if t_mid >= target {
                hi = mid;
                t_hi = t_mid;
            } else {
                lo = mid;
                t_lo = t_mid;
                break;
            }
        }
    }
    let (mut x_ref, mut t_ref) = (lo, t_lo);
    let mut x = lo + (hi - lo) * ((target - t_lo) / (t_hi - t_lo));
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    let mut last_step = f64::INFINITY;
    for iter in 0..200 {
        let tx = t_ref + signed(x_ref, x)?;
        let f = tx - target;
        if f == 0.0 {
            return Ok((x, 0.0));
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        x_ref = x;
        t_ref = tx;
        let r = rate(x);
        let mut next = x - f / r;
        if !(next > lo && next < hi) {
            next = if lo > 0.0 && hi > 4.0 * lo {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
        }
        let step = (next - x).abs();
        let scale = next.abs();
        if step <= 2.0 * f64::EPSILON * scale || hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok((next, step));
        }
        // once Newton has settled, quadrature noise stops further progress
        if iter > 2 && step <= 1e-12 * scale && step >= 0.5 * last_step {
            return Ok((next, step));
        }
        last_step = step;
        x = next;
    }
    Err(Error::numeric(format!(
        "Newton inversion of the flow clock did not converge (bracket [{lo:e}, {hi:e}])"
    )))
}

impl Flow {
    pub fn new(mech: &BranchingMechanism) -> Result<Self> {
        let class = classify(mech)?;
        let singular = if class.almost_sure_explosion {
            let alpha0 = mech.zero_regularity()?;
            let lead = mech.asymptote_at_zero()?.coef.abs();
            Some((alpha0, lead))
        } else {
            None
        };
        Ok(Flow {
            mech: mech.clone(),
            class,
            singular,
            quad: QuadOptions::with_rel_tol(1e-13),
        })
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mech
    }

    pub fn classification(&self) -> &Classification {
        &self.class
    }

    fn require_explosive(&self, op: &str) -> Result<(f64, f64)> {
        self.singular.ok_or_else(|| {
            Error::contract(format!(
                "{op} needs an almost surely explosive mechanism (q = ∞ and finite explosion time)"
            ))
        })
    }

    fn require_extinction(&self, op: &str) -> Result<()> {
        if self.class.extinction_time_finite {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "{op} needs a mechanism with almost surely finite extinction time (Grey's condition)"
            )))
        }
    }

    fn psi(&self, u: f64) -> f64 {
        self.mech.psi_unchecked(u)
    }

    fn region(&self, lambda: f64) -> Region {
        let q = self.class.q;
        if q.is_infinite() {
            Region::Growth
        } else if lambda == q {
            Region::Rest
        } else {
            Region::Toward { q, above: lambda > q }
        }
    }

    // ---- growth region: increments of ∫ dw / -Ψ(base + w) ----

    /// `∫_0^{cut} du / -Ψ(u)` via `u = s^{1/α₀}`.
    fn singular_span(&self, cut: f64) -> Result<f64> {
        let (alpha0, lead) = self.require_explosive("integration from u = 0")?;
        let limit = 1.0 / (alpha0 * lead);
        let inv = 1.0 / alpha0;
        let r = integrate(
            |s: f64| {
                let u = s.powf(inv);
                let v = (u / s) / (alpha0 * -self.psi(u));
                if u > 0.0 && v.is_finite() {
                    v
                } else {
                    limit
                }
            },
            0.0,
            cut.powf(alpha0),
            &self.quad,
        )?;
        Ok(r.value)
    }

    /// `∫_{w0}^{w1} dw / -Ψ(base + w)` for `0 <= w0 <= w1`.
    fn growth_span(&self, base: f64, w0: f64, w1: f64) -> Result<f64> {
        if w1 <= w0 {
            return Ok(0.0);
        }
        let u0 = base + w0;
        if u0 == 0.0 {
            let cut = w1.min(1.0);
            let mut total = self.singular_span(cut)?;
            if w1 > cut {
                total += self.growth_span(0.0, cut, w1)?;
            }
            return Ok(total);
        }
        let value = if w1 - w0 <= u0 {
            integrate(|w: f64| 1.0 / -self.psi(base + w), w0, w1, &self.quad)?.value
        } else {
            integrate(
                |y: f64| {
                    let u = y.exp();
                    u / -self.psi(u)
                },
                u0.ln(),
                (base + w1).ln(),
                &self.quad,
            )?
            .value
        };
        if !value.is_finite() {
            return Err(Error::numeric(format!("elapsed-time integral diverged on [{u0:e}, {:e}]", base + w1)));
        }
        Ok(value)
    }

    /// `δ` with `∫_0^δ dw / -Ψ(base + w) = tau`; requires the growth region.
    fn growth_excess(&self, base: f64, tau: f64) -> Result<(f64, f64)> {
        let guess = if base > 0.0 {
            tau * -self.psi(base)
        } else {
            let (alpha0, lead) = self.require_explosive("flow from u = 0")?;
            (alpha0 * lead * tau).powf(1.0 / alpha0)
        };
        solve_clock(
            |d0, d1| self.growth_span(base, d0, d1),
            |d| 1.0 / -self.psi(base + d),
            tau,
            guess,
        )
    }

    // ---- regions with a finite root q: chart y = ln|u - q| ----

    fn chart_u(q: f64, above: bool, y: f64) -> f64 {
        if above {
            q + y.exp()
        } else {
            q - y.exp()
        }
    }

    fn chart_density(&self, q: f64, above: bool, y: f64) -> f64 {
        let u = Self::chart_u(q, above, y);
        y.exp() / self.psi(u).abs()
    }

    /// Time to move from `|u - q| = e^{y1}` to `e^{y0}`, `y0 <= y1`.
    fn chart_span(&self, q: f64, above: bool, y0: f64, y1: f64) -> Result<f64> {
        if y1 <= y0 {
            return Ok(0.0);
        }
        let v = integrate(|y: f64| self.chart_density(q, above, y), y0, y1, &self.quad)?.value;
        if !v.is_finite() {
            return Err(Error::numeric(format!("elapsed-time integral diverged near q = {q}")));
        }
        Ok(v)
    }

    /// Flow towards a finite root: returns `u(t, λ)` and an error estimate.
    fn toward(&self, q: f64, above: bool, lambda: f64, t: f64) -> Result<(f64, f64)> {
        let gap = (lambda - q).abs();
        let y0 = gap.ln();
        // the linearised guess overshoots badly for fast relaxation
        let guess = (t * self.psi(lambda).abs() / gap).min(1.0);
        let (d, step) = solve_clock(
            |d0, d1| self.chart_span(q, above, y0 - d1, y0 - d0),
            |d| self.chart_density(q, above, y0 - d),
            t,
            guess,
        )?;
        let y = y0 - d;
        let gap_t = y.exp();
        if gap_t == 0.0 {
            return Err(Error::numeric(format!("flow reached q = {q} to machine precision at t = {t}")));
        }
        let u = Self::chart_u(q, above, y);
        Ok((u, gap_t * step + self.quad.rel_tol * u.abs()))
    }

    /// `∫_y^∞ e^s / Ψ(q + e^s) ds = Φ(q + e^y)` in the extinction case.
    fn tail_clock(&self, y: f64) -> Result<f64> {
        let q = self.class.q;
        let v = integrate_to_infinity(
            |x: f64| {
                let s = y + x;
                let e = s.exp();
                if !e.is_finite() {
                    return 0.0;
                }
                e / self.psi(q + e)
            },
            0.0,
            &self.quad,
        )?
        .value;
        if !v.is_finite() {
            return Err(Error::numeric("extinction integral did not converge"));
        }
        Ok(v)
    }

    // ---- public operations ----

    /// `Φ(λ) = ∫_0^λ du / -Ψ(u)` for an almost surely explosive mechanism.
    pub fn phi_explosive(&self, lambda: f64) -> Result<f64> {
        self.require_explosive("phi_explosive")?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("Φ needs finite λ >= 0, got {lambda}")));
        }
        if lambda == 0.0 {
            return Ok(0.0);
        }
        match self.mech {
            BranchingMechanism::StableMinus { k, alpha } => Ok(lambda.powf(alpha) / (alpha * k)),
            BranchingMechanism::LinearStableMinus { c, k, alpha } => {
                Ok((c * lambda.powf(alpha) / k).ln_1p() / (alpha * c))
            }
            _ => self.growth_span(0.0, 0.0, lambda),
        }
    }

    /// `∫_{base}^{base + w} du / -Ψ(u)`, evaluated over the increment.
    pub fn elapsed(&self, base: f64, w: f64) -> Result<f64> {
        if self.region(base) != Region::Growth {
            return Err(Error::contract("elapsed-time increments need q = ∞"));
        }
        if !(base >= 0.0 && w >= 0.0 && (base + w).is_finite()) {
            return Err(Error::domain(format!("bad increment [{base}, {base} + {w}]")));
        }
        self.growth_span(base, 0.0, w)
    }

    /// `δ >= 0` with `∫_{base}^{base + δ} du / -Ψ(u) = tau`. With
    /// `base = aₛ` and `tau = Φ(λ)` this is `u(s, λ) - aₛ`.
    pub fn excess(&self, base: f64, tau: f64) -> Result<f64> {
        if self.region(base) != Region::Growth {
            return Err(Error::contract("excess needs q = ∞"));
        }
        if !(base >= 0.0 && base.is_finite()) {
            return Err(Error::domain(format!("excess needs finite base >= 0, got {base}")));
        }
        if !(tau >= 0.0) {
            return Err(Error::domain(format!("excess needs tau >= 0, got {tau}")));
        }
        Ok(self.growth_excess(base, tau)?.0)
    }

    /// `aₜ = u(t, 0+)`, the unique solution of `Φ(aₜ) = t`.
    pub fn a(&self, t: f64) -> Result<f64> {
        self.require_explosive("a_of_t")?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("a_t needs finite t >= 0, got {t}")));
        }
        Ok(self.growth_excess(0.0, t)?.0)
    }

    /// `Φ(λ) = ∫_λ^∞ du / Ψ(u)` in the extinction case, `λ > q`.
    pub fn phi_extinction(&self, lambda: f64) -> Result<f64> {
        self.require_extinction("phi_extinction")?;
        let q = self.class.q;
        if !(lambda > q) {
            return Err(Error::domain(format!("Φ needs λ > q = {q}, got {lambda}")));
        }
        if lambda.is_infinite() {
            return Ok(0.0);
        }
        if let BranchingMechanism::StablePlus { c, alpha } = self.mech {
            return Ok(lambda.powf(-alpha) / (c * alpha));
        }
        self.tail_clock((lambda - q).ln())
    }

    /// `v(t) = u(t, ∞)`: solves `Φ(v(t)) = t` in the extinction case.
    pub fn v(&self, t: f64) -> Result<f64> {
        self.require_extinction("v_of_t")?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("v(t) needs finite t > 0, got {t}")));
        }
        let q = self.class.q;
        let at_inf = self.mech.asymptote_at_infinity()?;
        let p = at_inf.power.max(1.0 + 1e-3);
        let mut guess = (at_inf.coef * (p - 1.0) * t).powf(-1.0 / (p - 1.0));
        if !(guess.is_finite() && guess > 0.0) {
            guess = 1.0;
        }
        let y_g = guess.ln();
        let t_g = self.tail_clock(y_g)?;
        let y = if t_g <= t {
            let (d, _) = solve_clock(
                |d0, d1| self.chart_span(q, true, y_g - d1, y_g - d0),
                |d| self.chart_density(q, true, y_g - d),
                t - t_g,
                1.0,
            )?;
            y_g - d
        } else {
            let (d, _) = solve_clock(
                |d0, d1| self.chart_span(q, true, y_g + d0, y_g + d1),
                |d| self.chart_density(q, true, y_g + d),
                t_g - t,
                1.0,
            )?;
            y_g + d
        };
        Ok(q + y.exp())
    }

    fn check_flow_args(&self, t: f64, lambda: f64) -> Result<()> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("u(t, λ) needs finite t >= 0, got {t}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("u(t, λ) needs finite λ >= 0, got {lambda}")));
        }
        if lambda == 0.0 && self.singular.is_none() {
            return Err(Error::domain(
                "λ = 0 is only meaningful for almost surely explosive mechanisms",
            ));
        }
        Ok(())
    }

    /// `u(t, λ)` by inversion of elapsed-time integrals.
    fn u_inversion(&self, t: f64, lambda: f64) -> Result<(f64, f64)> {
        match self.region(lambda) {
            Region::Rest => Ok((lambda, 0.0)),
            Region::Growth => {
                let (d, step) = self.growth_excess(lambda, t)?;
                let u = lambda + d;
                Ok((u, step + 4.0 * f64::EPSILON * u + self.quad.rel_tol * d))
            }
            Region::Toward { q, above } => self.toward(q, above, lambda, t),
        }
    }

    fn u_ode_once(&self, t: f64, lambda: f64, rtol: f64, atol: f64, max_steps: u32) -> Result<f64> {
        let (mode, y0) = match (self.singular, self.region(lambda)) {
            (_, Region::Rest) => return Ok(lambda),
            (Some((alpha0, lead)), _) => (Chart::Power { alpha0, lead }, lambda.powf(alpha0)),
            (None, Region::Growth) => (Chart::Log, lambda.ln()),
            (None, Region::Toward { q, above }) => (Chart::Gap { q, above }, (lambda - q).abs().ln()),
        };
        let rhs = OdeRhs { flow: self, chart: mode };
        let mut solver = Dop853::from_param(
            rhs,
            0.0,
            t,
            t,
            Vector1::new(y0),
            rtol,
            atol,
            0.9,
            0.0,
            0.333,
            6.0,
            t,
            0.0,
            max_steps,
            1000,
            OutputType::Sparse,
        );
        solver
            .integrate()
            .map_err(|e| Error::numeric(format!("ODE backend failed for t = {t}, λ = {lambda}: {e}")))?;
        let y = solver
            .y_out()
            .last()
            .map(|v| v[0])
            .ok_or_else(|| Error::numeric("ODE backend produced no output"))?;
        let u = mode.to_u(y);
        if !u.is_finite() {
            return Err(Error::numeric(format!("ODE backend diverged for t = {t}, λ = {lambda}")));
        }
        Ok(u)
    }

    /// `u(t, λ)` by adaptive Dormand–Prince integration in smoothing
    /// coordinates.
    fn u_ode(&self, t: f64, lambda: f64, cfg: &FlowConfig) -> Result<(f64, f64)> {
        let rtol = cfg.rel_tol * 1e-2;
        let atol = cfg.abs_tol * 1e-2;
        let fine = self.u_ode_once(t, lambda, rtol, atol, cfg.max_steps)?;
        let coarse = self.u_ode_once(t, lambda, rtol * 10.0, atol * 10.0, cfg.max_steps)?;
        Ok((fine, (fine - coarse).abs()))
    }

    /// `u(t, λ)` with the configured backend.
    pub fn u(&self, t: f64, lambda: f64, cfg: &FlowConfig) -> Result<FlowResult> {
        cfg.validate()?;
        self.check_flow_args(t, lambda)?;
        if t == 0.0 {
            return Ok(FlowResult {
                value: lambda,
                achieved_error_estimate: 0.0,
                backend_used: cfg.backend,
                agreement_gap: (cfg.backend == Backend::CrossCheck).then_some(0.0),
            });
        }
        match cfg.backend {
            Backend::PhiInversion => {
                let (value, err) = self.u_inversion(t, lambda)?;
                Ok(FlowResult {
                    value,
                    achieved_error_estimate: err,
                    backend_used: Backend::PhiInversion,
                    agreement_gap: None,
                })
            }
            Backend::Ode => {
                let (value, err) = self.u_ode(t, lambda, cfg)?;
                Ok(FlowResult {
                    value,
                    achieved_error_estimate: err,
                    backend_used: Backend::Ode,
                    agreement_gap: None,
                })
            }
            Backend::CrossCheck => {
                let (value, err) = self.u_inversion(t, lambda)?;
                let (ode, _) = self.u_ode(t, lambda, cfg)?;
                let gap = (ode - value).abs() / value.abs().max(cfg.abs_tol);
                if gap > 10.0 * cfg.rel_tol {
                    return Err(Error::numeric(format!(
                        "backends disagree at t = {t}, λ = {lambda}: inversion {value:e}, ode {ode:e} (relative gap {gap:e})"
                    )));
                }
                Ok(FlowResult {
                    value,
                    achieved_error_estimate: err,
                    backend_used: Backend::CrossCheck,
                    agreement_gap: Some(gap),
                })
            }
        }
    }

    /// `dₜ = e^{-Dt}` for finite variation, `0` for `t > 0` otherwise.
    pub fn drift(&self, t: f64) -> Result<f64> {
        drift_from(&self.class, t)
    }

    /// The exact root `f` of `Ψ(1/f) f = Ψ(aₜ)`.
    pub fn scaling_f(&self, t: f64) -> Result<f64> {
        self.require_explosive("scaling_f")?;
        if self.class.psi_infinity != f64::NEG_INFINITY {
            return Err(Error::contract("scaling_f needs Ψ(+∞) = -∞"));
        }
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("scaling_f needs finite t > 0, got {t}")));
        }
        let a = self.a(t)?;
        let target = self.psi(a);
        let d = self.class.d.unwrap_or(0.0);
        if !(target < d) {
            return Err(Error::domain(format!(
                "Ψ(a_t) = {target:e} is not below D = {d}; no f solves the scaling equation at t = {t}"
            )));
        }
        // Ψ(u)/u increases from -∞ to D
        let h = |u: f64| Ok(self.psi(u) / u - target);
        let (lo, hi) = if self.psi(1.0) - target < 0.0 {
            expand_up(h, 1.0, 2.0, f64::MAX)?
        } else {
            expand_down(h, 0.5, 1.0)?
        };
        let u = solve_increasing(h, lo, hi, &RootOptions::default())?;
        Ok(1.0 / u)
    }
}

fn drift_from(class: &Classification, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("d_t needs finite t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(match class.d {
        Some(d) if class.finite_variation => (-d * t).exp(),
        _ => 0.0,
    })
}

#[derive(Debug, Clone, Copy)]
enum Chart {
    /// `w = u^{α₀}`
    Power { alpha0: f64, lead: f64 },
    /// `y = ln u`
    Log,
    /// `y = ln|u - q|`
    Gap { q: f64, above: bool },
}

impl Chart {
    fn to_u(self, y: f64) -> f64 {
        match self {
            Chart::Power { alpha0, .. } => y.max(0.0).powf(1.0 / alpha0),
            Chart::Log => y.exp(),
            Chart::Gap { q, above } => Flow::chart_u(q, above, y),
        }
    }
}

struct OdeRhs<'a> {
    flow: &'a Flow,
    chart: Chart,
}

impl System<f64, Vector1<f64>> for OdeRhs<'_> {
    fn system(&self, _t: f64, y: &Vector1<f64>, dy: &mut Vector1<f64>) {
        let y = y[0];
        let u = self.chart.to_u(y);
        dy[0] = match self.chart {
            Chart::Power { alpha0, lead } => {
                let v = alpha0 * -self.flow.psi(u) * u.powf(alpha0 - 1.0);
                if u > 0.0 && v.is_finite() {
                    v
                } else {
                    alpha0 * lead
                }
            }
            Chart::Log => -self.flow.psi(u) / u,
            Chart::Gap { above, .. } => {
                let s = if above { -1.0 } else { 1.0 };
                s * self.flow.psi(u) / y.exp()
            }
        };
    }
}

/// `Φ(λ) = ∫_λ^0 du / Ψ(u)` for an almost surely explosive mechanism.
pub fn phi_explosive(mech: &BranchingMechanism, lambda: f64) -> Result<f64> {
    Flow::new(mech)?.phi_explosive(lambda)
}

/// `Φ(λ) = ∫_λ^∞ du / Ψ(u)` under Grey's condition.
pub fn phi_extinction(mech: &BranchingMechanism, lambda: f64) -> Result<f64> {
    Flow::new(mech)?.phi_extinction(lambda)
}

pub fn u_flow(mech: &BranchingMechanism, t: f64, lambda: f64, cfg: &FlowConfig) -> Result<FlowResult> {
    Flow::new(mech)?.u(t, lambda, cfg)
}

pub fn a_of_t(mech: &BranchingMechanism, t: f64) -> Result<f64> {
    Flow::new(mech)?.a(t)
}

pub fn v_of_t(mech: &BranchingMechanism, t: f64) -> Result<f64> {
    Flow::new(mech)?.v(t)
}

pub fn drift_dt(mech: &BranchingMechanism, t: f64) -> Result<f64> {
    drift_from(&classify(mech)?, t)
}

pub fn scaling_f(mech: &BranchingMechanism, t: f64) -> Result<f64> {
    Flow::new(mech)?.scaling_f(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
    }

    const FELLER: BranchingMechanism = BranchingMechanism::StablePlus { c: 1.0, alpha: 1.0 };
    const STABLE_MINUS: BranchingMechanism = BranchingMechanism::StableMinus { k: 1.0, alpha: 0.5 };

    #[test]
    fn feller_flow_both_backends() {
        for backend in [Backend::PhiInversion, Backend::Ode, Backend::CrossCheck] {
            let r = u_flow(&FELLER, 1.0, 1.0, &FlowConfig::with_backend(backend)).unwrap();
            assert!(close(r.value, 0.5, 1e-10), "{backend:?}: {}", r.value);
        }
    }

    #[test]
    fn stable_minus_flow_and_absorption() {
        for backend in [Backend::PhiInversion, Backend::Ode] {
            let r = u_flow(&STABLE_MINUS, 1.0, 1.0, &FlowConfig::with_backend(backend)).unwrap();
            assert!(close(r.value, 2.25, 1e-10), "{backend:?}: {}", r.value);
            let a = u_flow(&STABLE_MINUS, 1.0, 0.0, &FlowConfig::with_backend(backend)).unwrap();
            assert!(close(a.value, 0.25, 1e-10), "{backend:?}: {}", a.value);
        }
        assert!(close(a_of_t(&STABLE_MINUS, 1.0).unwrap(), 0.25, 1e-12));
    }

    #[test]
    fn initial_condition_is_exact() {
        let r = u_flow(&STABLE_MINUS, 0.0, 3.0, &FlowConfig::default()).unwrap();
        assert_eq!(r.value, 3.0);
    }

    #[test]
    fn extinction_quantities() {
        assert!(close(phi_extinction(&FELLER, 2.0).unwrap(), 0.5, 1e-15));
        assert!(close(v_of_t(&FELLER, 2.0).unwrap(), 0.5, 1e-11));
        let half = BranchingMechanism::StablePlus { c: 1.0, alpha: 0.5 };
        assert!(close(v_of_t(&half, 1.0).unwrap(), 4.0, 1e-11));
    }

    #[test]
    fn contracts_are_enforced() {
        assert!(matches!(phi_explosive(&FELLER, 1.0), Err(Error::Contract(_))));
        assert!(matches!(a_of_t(&FELLER, 1.0), Err(Error::Contract(_))));
        assert!(matches!(v_of_t(&STABLE_MINUS, 1.0), Err(Error::Contract(_))));
        assert!(matches!(phi_extinction(&FELLER, 0.0), Err(Error::Domain(_))));
        assert!(matches!(u_flow(&FELLER, 1.0, 0.0, &FlowConfig::default()), Err(Error::Domain(_))));
        assert!(matches!(
            u_flow(&FELLER, 1.0, f64::INFINITY, &FlowConfig::default()),
            Err(Error::Domain(_))
        ));
        let bad = FlowConfig {
            max_steps: 10,
            ..FlowConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn drift_values() {
        let lsm = BranchingMechanism::LinearStableMinus {
            c: 1.0,
            k: 1.0,
            alpha: 0.5,
        };
        assert!(close(drift_dt(&lsm, 2.0).unwrap(), 2f64.exp(), 1e-15));
        assert_eq!(drift_dt(&FELLER, 1.0).unwrap(), 0.0);
        assert_eq!(drift_dt(&FELLER, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn scaling_f_stable_minus() {
        assert!(close(scaling_f(&STABLE_MINUS, 1.0).unwrap(), 0.25, 1e-10));
    }

    #[test]
    fn finite_root_flow_relaxes_to_q() {
        // Ψ(u) = -u + u²/2, q = 2: logistic flow u' = u - u²/2
        let m = BranchingMechanism::General {
            gamma: -1.0,
            sigma2: 1.0,
            nu: vec![],
        };
        let exact = |t: f64, l: f64| 2.0 * l / (l + (2.0 - l) * (-t).exp());
        for backend in [Backend::PhiInversion, Backend::Ode] {
            let cfg = FlowConfig::with_backend(backend);
            for (t, l) in [(1.0, 0.5), (2.0, 5.0), (0.3, 1.9)] {
                let r = u_flow(&m, t, l, &cfg).unwrap();
                assert!(close(r.value, exact(t, l), 1e-9), "{backend:?} t={t} λ={l}: {}", r.value);
            }
        }
    }
}
