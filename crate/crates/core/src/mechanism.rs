//! Branching mechanisms `Ψ`, their derivatives, leading asymptotics and the
//! extinction / explosion classification derived from them.
//!
//! Every mechanism is one of a handful of parametric families plus a
//! `General` Lévy–Khintchine form built from [`NuComponent`]s. Each family
//! knows the leading term of `Ψ` at `0+` and at `+∞` symbolically; the
//! integrability tests behind [`classify`] are decided from those exponents
//! and never from numerical quadrature.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quad::{power_weighted, QuadOptions};
use crate::roots::{expand_down, expand_up, solve_increasing, RootOptions};
use crate::special::upper_gamma;

/// A branching mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum BranchingMechanism {
    /// `Ψ(u) = c u^{1+α}`, `α ∈ (0, 1]`.
    StablePlus { c: f64, alpha: f64 },
    /// `Ψ(u) = -k u^{1-α}`, `α ∈ (0, 1)`.
    StableMinus { k: f64, alpha: f64 },
    /// `Ψ(u) = -c u - k u^{1-α}`, `α ∈ (0, 1)`.
    LinearStableMinus { c: f64, k: f64, alpha: f64 },
    /// Pure-jump mechanism with Pareto Lévy measure of total mass `rho`
    /// supported on `(h0, ∞)`: `ν(dh) = ρ α h0^α h^{-α-1} dh`.
    TruncatedPareto { rho: f64, alpha: f64, h0: f64 },
    /// `Ψ(u) = D u`.
    LinearDrift {
        #[serde(alias = "D")]
        d: f64,
    },
    /// `Ψ(u) = γu + σ²u²/2 + ∫(e^{-uh} - 1 + uh 1_{h<1}) ν(dh)`.
    General {
        gamma: f64,
        sigma2: f64,
        nu: Vec<NuComponent>,
    },
}

/// One additive piece of a Lévy measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NuComponent {
    /// Point mass `mass · δ_h`.
    FiniteAtom { h: f64, mass: f64 },
    /// Density `scale · h^{-1-exponent}` on `(cutoff, ∞)`.
    ParetoTail {
        scale: f64,
        exponent: f64,
        cutoff: f64,
    },
    /// Density `scale · h^{-1-index}` on `(lower, upper)`, `index ∈ (0, 1)`;
    /// missing cutoffs mean `0` and `∞`.
    StableDensity {
        scale: f64,
        index: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<f64>,
    },
}

/// Leading behaviour `coef · u^power · (ln(1/u))^log_power` near `0+`, or
/// `coef · u^power · (ln u)^log_power` near `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asymptote {
    pub coef: f64,
    pub power: f64,
    pub log_power: f64,
}

impl Asymptote {
    pub fn pure(coef: f64, power: f64) -> Self {
        Asymptote {
            coef,
            power,
            log_power: 0.0,
        }
    }

    /// `∫_{0+} du / |Ψ(u)| < ∞` for this leading term.
    pub fn reciprocal_integrable_at_zero(&self) -> bool {
        self.coef != 0.0 && (self.power < 1.0 || (self.power == 1.0 && self.log_power > 1.0))
    }

    /// `∫^{∞} du / |Ψ(u)| < ∞` for this leading term.
    pub fn reciprocal_integrable_at_infinity(&self) -> bool {
        self.coef != 0.0 && (self.power > 1.0 || (self.power == 1.0 && self.log_power > 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

/// Analytic classification of a mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub criticality: Criticality,
    /// Largest root of `Ψ`, possibly `+∞`.
    #[serde(with = "ext_real")]
    pub q: f64,
    pub finite_variation: bool,
    /// Limit of `Ψ(u)/u`, present for finite-variation mechanisms.
    pub d: Option<f64>,
    #[serde(with = "ext_real")]
    pub psi_infinity: f64,
    pub extinction_time_finite: bool,
    pub explosion_time_finite: bool,
    pub almost_sure_explosion: bool,
    #[serde(with = "ext_real")]
    pub psi_prime_zero: f64,
    #[serde(with = "ext_real")]
    pub psi_second_zero: f64,
}

/// Serialises `±∞` as the strings `"inf"` / `"-inf"`.
pub mod ext_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad extended real {other:?}"))),
            },
        }
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions::with_rel_tol(1e-12)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be a positive finite number, got {v}")))
    }
}

fn in_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Power-law band `scale · h^{-1-beta}` on `(lo, hi)`.
#[derive(Debug, Clone, Copy)]
struct Band {
    scale: f64,
    beta: f64,
    lo: f64,
    hi: f64,
}

impl Band {
    fn mass(&self) -> f64 {
        if self.lo == 0.0 {
            return f64::INFINITY;
        }
        let upper = if self.hi.is_finite() { self.hi.powf(-self.beta) } else { 0.0 };
        self.scale * (self.lo.powf(-self.beta) - upper) / self.beta
    }

    /// `∫ h^m · scale h^{-1-β} dh` over `(a, b) ∩ (lo, hi)`.
    fn moment(&self, m: f64, a: f64, b: f64) -> f64 {
        let a = a.max(self.lo);
        let b = b.min(self.hi);
        if !(b > a) {
            return 0.0;
        }
        let e = m - self.beta;
        if e == 0.0 {
            if a == 0.0 || b.is_infinite() {
                return f64::INFINITY;
            }
            return self.scale * (b / a).ln();
        }
        let pow_b = if b.is_infinite() {
            if e > 0.0 {
                return f64::INFINITY;
            }
            0.0
        } else {
            b.powf(e)
        };
        let pow_a = if a == 0.0 {
            if e < 0.0 {
                return f64::INFINITY;
            }
            0.0
        } else {
            a.powf(e)
        };
        self.scale * (pow_b - pow_a) / e
    }

    /// `∫(e^{-uh} - 1) ν(dh)`.
    fn fv_integral(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        let (a, b) = (u * self.lo, u * self.hi);
        let opts = quad_opts();
        let mut k = 0.0;
        if a < 1.0 {
            // (e^{-z}-1)/z · z^{-β}: regular once the power is peeled off
            let upper = b.min(1.0);
            k += power_weighted(|z| if z == 0.0 { -1.0 } else { (-z).exp_m1() / z }, -self.beta, a, upper, &opts)
                .unwrap_or(f64::NAN);
        }
        if b > 1.0 {
            let lower = a.max(1.0);
            let exp_part = power_weighted(|z| (-z).exp(), -1.0 - self.beta, lower, b, &opts).unwrap_or(f64::NAN);
            let upper_pow = if b.is_finite() { b.powf(-self.beta) } else { 0.0 };
            let plain = (lower.powf(-self.beta) - upper_pow) / self.beta;
            k += exp_part - plain;
        }
        self.scale * u.powf(self.beta) * k
    }

    /// `∫ h^n e^{-uh} ν(dh)` for `n ∈ {1, 2}`.
    fn exp_moment(&self, n: f64, u: f64) -> f64 {
        if u == 0.0 {
            return self.moment(n, 0.0, f64::INFINITY);
        }
        let p = n - 1.0 - self.beta;
        let v = power_weighted(|z| (-z).exp(), p, u * self.lo, u * self.hi, &quad_opts()).unwrap_or(f64::NAN);
        self.scale * u.powf(self.beta - n) * v
    }
}

impl NuComponent {
    fn validate(&self) -> Result<()> {
        match *self {
            NuComponent::FiniteAtom { h, mass } => {
                positive("atom h", h)?;
                positive("atom mass", mass)
            }
            NuComponent::ParetoTail { scale, exponent, cutoff } => {
                positive("pareto scale", scale)?;
                positive("pareto exponent", exponent)?;
                positive("pareto cutoff", cutoff)
            }
            NuComponent::StableDensity { scale, index, lower, upper } => {
                positive("stable scale", scale)?;
                in_open_unit("stable index", index)?;
                if let Some(l) = lower {
                    positive("stable lower cutoff", l)?;
                }
                if let Some(u) = upper {
                    positive("stable upper cutoff", u)?;
                }
                if let (Some(l), Some(u)) = (lower, upper) {
                    if !(u > l) {
                        return Err(Error::Config(format!("stable cutoffs must satisfy lower < upper, got ({l}, {u})")));
                    }
                }
                Ok(())
            }
        }
    }

    fn band(&self) -> Option<Band> {
        match *self {
            NuComponent::FiniteAtom { .. } => None,
            NuComponent::ParetoTail { scale, exponent, cutoff } => Some(Band {
                scale,
                beta: exponent,
                lo: cutoff,
                hi: f64::INFINITY,
            }),
            NuComponent::StableDensity { scale, index, lower, upper } => Some(Band {
                scale,
                beta: index,
                lo: lower.unwrap_or(0.0),
                hi: upper.unwrap_or(f64::INFINITY),
            }),
        }
    }

    /// `ν(0, ∞)`.
    pub fn total_mass(&self) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { mass, .. }, _) => *mass,
            (_, Some(b)) => b.mass(),
            _ => unreachable!(),
        }
    }

    /// `∫_{(0,1)} h ν(dh)`.
    pub fn mean_below_one(&self) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { h, mass }, _) => {
                if *h < 1.0 {
                    h * mass
                } else {
                    0.0
                }
            }
            (_, Some(b)) => b.moment(1.0, 0.0, 1.0),
            _ => unreachable!(),
        }
    }

    /// `∫_{[1,∞)} h ν(dh)`.
    pub fn mean_above_one(&self) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { h, mass }, _) => {
                if *h >= 1.0 {
                    h * mass
                } else {
                    0.0
                }
            }
            (_, Some(b)) => b.moment(1.0, 1.0, f64::INFINITY),
            _ => unreachable!(),
        }
    }

    /// `∫ h² ν(dh)`.
    pub fn second_moment(&self) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { h, mass }, _) => h * h * mass,
            (_, Some(b)) => b.moment(2.0, 0.0, f64::INFINITY),
            _ => unreachable!(),
        }
    }

    /// `∫(e^{-uh} - 1 + uh 1_{h<1}) ν(dh)`.
    pub fn compensated_integral(&self, u: f64) -> f64 {
        self.fv_integral(u) + u * self.mean_below_one()
    }

    /// `∫(e^{-uh} - 1) ν(dh)`.
    pub fn fv_integral(&self, u: f64) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { h, mass }, _) => mass * (-u * h).exp_m1(),
            (_, Some(b)) => b.fv_integral(u),
            _ => unreachable!(),
        }
    }

    /// First derivative of [`Self::fv_integral`].
    pub fn fv_derivative(&self, u: f64) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { h, mass }, _) => -mass * h * (-u * h).exp(),
            (_, Some(b)) => -b.exp_moment(1.0, u),
            _ => unreachable!(),
        }
    }

    /// Second derivative of [`Self::fv_integral`].
    pub fn fv_second_derivative(&self, u: f64) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { h, mass }, _) => mass * h * h * (-u * h).exp(),
            (_, Some(b)) => b.exp_moment(2.0, u),
            _ => unreachable!(),
        }
    }

    /// `(scale, β)` of a density that is `~ scale h^{-1-β}` near `0+`.
    fn small_jump_index(&self) -> Option<(f64, f64)> {
        match self.band() {
            Some(b) if b.lo == 0.0 => Some((b.scale, b.beta)),
            _ => None,
        }
    }

    /// `(scale, β)` of a density that is `~ scale h^{-1-β}` near `∞`.
    fn tail_index(&self) -> Option<(f64, f64)> {
        match self.band() {
            Some(b) if b.hi.is_infinite() => Some((b.scale, b.beta)),
            _ => None,
        }
    }

    /// `∫_0^ε h ν(dh)`.
    pub fn mean_below(&self, eps: f64) -> f64 {
        match (self, self.band()) {
            (NuComponent::FiniteAtom { h, mass }, _) => {
                if *h < eps {
                    h * mass
                } else {
                    0.0
                }
            }
            (_, Some(b)) => b.moment(1.0, 0.0, eps),
            _ => unreachable!(),
        }
    }

    /// The same component restricted to `(ε, ∞)`, or `None` if nothing is left.
    pub fn restricted_above(&self, eps: f64) -> Option<NuComponent> {
        match *self {
            NuComponent::FiniteAtom { h, .. } => (h > eps).then(|| self.clone()),
            NuComponent::ParetoTail { scale, exponent, cutoff } => Some(NuComponent::ParetoTail {
                scale,
                exponent,
                cutoff: cutoff.max(eps),
            }),
            NuComponent::StableDensity { scale, index, lower, upper } => {
                let lo = lower.unwrap_or(0.0).max(eps);
                if let Some(u) = upper {
                    if u <= lo {
                        return None;
                    }
                }
                Some(NuComponent::StableDensity {
                    scale,
                    index,
                    lower: Some(lo),
                    upper,
                })
            }
        }
    }
}

/// `∫_0^∞ (e^{-uh} - 1) h^{-1-β} dh = -Γ(1-β)/β · u^β` for `β ∈ (0,1)`.
fn stable_fv_constant(beta: f64) -> f64 {
    gamma(1.0 - beta) / beta
}

impl BranchingMechanism {
    /// Check parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match *self {
            BranchingMechanism::StablePlus { c, alpha } => {
                positive("c", c)?;
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Config(format!("stable_plus alpha must lie in (0, 1], got {alpha}")));
                }
                Ok(())
            }
            BranchingMechanism::StableMinus { k, alpha } => {
                positive("k", k)?;
                in_open_unit("alpha", alpha)
            }
            BranchingMechanism::LinearStableMinus { c, k, alpha } => {
                positive("c", c)?;
                positive("k", k)?;
                in_open_unit("alpha", alpha)
            }
            BranchingMechanism::TruncatedPareto { rho, alpha, h0 } => {
                positive("rho", rho)?;
                positive("h0", h0)?;
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::Config(format!("truncated_pareto alpha must lie in (0, 1], got {alpha}")));
                }
                Ok(())
            }
            BranchingMechanism::LinearDrift { d } => {
                if d.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("drift must be finite, got {d}")))
                }
            }
            BranchingMechanism::General { gamma, sigma2, ref nu } => {
                if !gamma.is_finite() {
                    return Err(Error::Config(format!("gamma must be finite, got {gamma}")));
                }
                if !(sigma2 >= 0.0 && sigma2.is_finite()) {
                    return Err(Error::Config(format!("sigma2 must be non-negative, got {sigma2}")));
                }
                nu.iter().try_for_each(NuComponent::validate)
            }
        }
    }

    /// Parse a JSON mechanism description and validate it.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: BranchingMechanism =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse mechanism: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("mechanism serialises")
    }

    fn check_u(u: f64) -> Result<()> {
        if u >= 0.0 && u.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("Ψ is defined for finite u >= 0, got {u}")))
        }
    }

    /// `Ψ(u)` without argument checks.
    pub(crate) fn psi_unchecked(&self, u: f64) -> f64 {
        if u == 0.0 {
            return 0.0;
        }
        match *self {
            BranchingMechanism::StablePlus { c, alpha } => c * u.powf(1.0 + alpha),
            BranchingMechanism::StableMinus { k, alpha } => -k * u.powf(1.0 - alpha),
            BranchingMechanism::LinearStableMinus { c, k, alpha } => -c * u - k * u.powf(1.0 - alpha),
            BranchingMechanism::TruncatedPareto { rho, alpha, h0 } => {
                let w = u * h0;
                rho * ((-w).exp_m1() - w.powf(alpha) * upper_gamma(1.0 - alpha, w))
            }
            BranchingMechanism::LinearDrift { d } => d * u,
            BranchingMechanism::General { gamma, sigma2, ref nu } => {
                gamma * u + 0.5 * sigma2 * u * u + nu.iter().map(|c| c.compensated_integral(u)).sum::<f64>()
            }
        }
    }

    /// `Ψ(u)` for `u >= 0`.
    pub fn psi(&self, u: f64) -> Result<f64> {
        Self::check_u(u)?;
        Ok(self.psi_unchecked(u))
    }

    pub(crate) fn psi_prime_unchecked(&self, u: f64) -> f64 {
        match *self {
            BranchingMechanism::StablePlus { c, alpha } => c * (1.0 + alpha) * u.powf(alpha),
            BranchingMechanism::StableMinus { k, alpha } => -k * (1.0 - alpha) * u.powf(-alpha),
            BranchingMechanism::LinearStableMinus { c, k, alpha } => -c - k * (1.0 - alpha) * u.powf(-alpha),
            BranchingMechanism::TruncatedPareto { rho, alpha, h0 } => {
                let w = u * h0;
                -rho * alpha * h0 * w.powf(alpha - 1.0) * upper_gamma(1.0 - alpha, w)
            }
            BranchingMechanism::LinearDrift { d } => d,
            BranchingMechanism::General { gamma, sigma2, ref nu } => {
                gamma
                    + sigma2 * u
                    + nu.iter().map(|c| c.fv_derivative(u) + c.mean_below_one()).sum::<f64>()
            }
        }
    }

    pub(crate) fn psi_second_unchecked(&self, u: f64) -> f64 {
        match *self {
            BranchingMechanism::StablePlus { c, alpha } => c * (1.0 + alpha) * alpha * u.powf(alpha - 1.0),
            BranchingMechanism::StableMinus { k, alpha } | BranchingMechanism::LinearStableMinus { k, alpha, .. } => {
                k * alpha * (1.0 - alpha) * u.powf(-alpha - 1.0)
            }
            BranchingMechanism::TruncatedPareto { rho, alpha, h0 } => {
                let w = u * h0;
                rho * alpha * h0 * h0 * w.powf(alpha - 2.0) * upper_gamma(2.0 - alpha, w)
            }
            BranchingMechanism::LinearDrift { .. } => 0.0,
            BranchingMechanism::General { sigma2, ref nu, .. } => {
                sigma2 + nu.iter().map(|c| c.fv_second_derivative(u)).sum::<f64>()
            }
        }
    }

    /// `(Ψ'(u), Ψ''(u))` for `u > 0`.
    pub fn psi_derivatives(&self, u: f64) -> Result<(f64, f64)> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(Error::domain(format!("derivatives need finite u > 0, got {u}")));
        }
        Ok((self.psi_prime_unchecked(u), self.psi_second_unchecked(u)))
    }

    /// `Ψ'(0+)` as an extended real.
    pub fn psi_prime_zero(&self) -> f64 {
        match *self {
            BranchingMechanism::StablePlus { .. } => 0.0,
            BranchingMechanism::StableMinus { .. }
            | BranchingMechanism::LinearStableMinus { .. }
            | BranchingMechanism::TruncatedPareto { .. } => f64::NEG_INFINITY,
            BranchingMechanism::LinearDrift { d } => d,
            BranchingMechanism::General { gamma, ref nu, .. } => {
                gamma - nu.iter().map(NuComponent::mean_above_one).sum::<f64>()
            }
        }
    }

    /// `Ψ''(0+)` as an extended real.
    pub fn psi_second_zero(&self) -> f64 {
        match *self {
            BranchingMechanism::StablePlus { c, alpha } => {
                if alpha == 1.0 {
                    2.0 * c
                } else {
                    f64::INFINITY
                }
            }
            BranchingMechanism::StableMinus { .. }
            | BranchingMechanism::LinearStableMinus { .. }
            | BranchingMechanism::TruncatedPareto { .. } => f64::INFINITY,
            BranchingMechanism::LinearDrift { .. } => 0.0,
            BranchingMechanism::General { sigma2, ref nu, .. } => {
                sigma2 + nu.iter().map(NuComponent::second_moment).sum::<f64>()
            }
        }
    }

    /// `(finite_variation, D)`.
    pub fn finite_variation(&self) -> (bool, Option<f64>) {
        match *self {
            BranchingMechanism::StablePlus { .. } => (false, None),
            BranchingMechanism::StableMinus { .. } | BranchingMechanism::TruncatedPareto { .. } => (true, Some(0.0)),
            BranchingMechanism::LinearStableMinus { c, .. } => (true, Some(-c)),
            BranchingMechanism::LinearDrift { d } => (true, Some(d)),
            BranchingMechanism::General { gamma, sigma2, ref nu } => {
                let small: f64 = nu.iter().map(NuComponent::mean_below_one).sum();
                if sigma2 == 0.0 && small.is_finite() {
                    (true, Some(gamma + small))
                } else {
                    (false, None)
                }
            }
        }
    }

    /// `ν(0, ∞)`; zero for mechanisms without jumps.
    pub fn levy_total_mass(&self) -> f64 {
        match *self {
            BranchingMechanism::StablePlus { alpha, .. } => {
                if alpha == 1.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            BranchingMechanism::StableMinus { .. } | BranchingMechanism::LinearStableMinus { .. } => f64::INFINITY,
            BranchingMechanism::TruncatedPareto { rho, .. } => rho,
            BranchingMechanism::LinearDrift { .. } => 0.0,
            BranchingMechanism::General { ref nu, .. } => nu.iter().map(NuComponent::total_mass).sum(),
        }
    }

    /// `Ψ(+∞)` as an extended real.
    pub fn psi_infinity(&self) -> f64 {
        match self.finite_variation() {
            (false, _) => f64::INFINITY,
            (true, Some(d)) => {
                if d > 0.0 {
                    f64::INFINITY
                } else if d < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    -self.levy_total_mass()
                }
            }
            (true, None) => unreachable!(),
        }
    }

    /// Leading term of `Ψ` at `0+`.
    pub fn asymptote_at_zero(&self) -> Result<Asymptote> {
        Ok(match *self {
            BranchingMechanism::StablePlus { c, alpha } => Asymptote::pure(c, 1.0 + alpha),
            BranchingMechanism::StableMinus { k, alpha } | BranchingMechanism::LinearStableMinus { k, alpha, .. } => {
                Asymptote::pure(-k, 1.0 - alpha)
            }
            BranchingMechanism::TruncatedPareto { rho, alpha, h0 } => {
                if alpha < 1.0 {
                    Asymptote::pure(-rho * gamma(1.0 - alpha) * h0.powf(alpha), alpha)
                } else {
                    Asymptote {
                        coef: -rho * h0,
                        power: 1.0,
                        log_power: 1.0,
                    }
                }
            }
            BranchingMechanism::LinearDrift { d } => Asymptote::pure(d, 1.0),
            BranchingMechanism::General { sigma2, ref nu, .. } => {
                let slope = self.psi_prime_zero();
                if slope.is_infinite() {
                    // heavy tails with β <= 1 dominate
                    let tails: Vec<(f64, f64)> = nu.iter().filter_map(NuComponent::tail_index).filter(|t| t.1 <= 1.0).collect();
                    let beta = tails.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
                    let scale: f64 = tails.iter().filter(|t| t.1 == beta).map(|t| t.0).sum();
                    if beta < 1.0 {
                        Asymptote::pure(-scale * stable_fv_constant(beta), beta)
                    } else {
                        Asymptote {
                            coef: -scale,
                            power: 1.0,
                            log_power: 1.0,
                        }
                    }
                } else if slope != 0.0 {
                    Asymptote::pure(slope, 1.0)
                } else {
                    let curvature = self.psi_second_zero();
                    if curvature.is_finite() {
                        if curvature == 0.0 {
                            return Err(Error::Unsupported(
                                "Ψ vanishes identically near 0; no leading exponent".into(),
                            ));
                        }
                        Asymptote::pure(0.5 * curvature, 2.0)
                    } else {
                        let tails: Vec<(f64, f64)> = nu
                            .iter()
                            .filter_map(NuComponent::tail_index)
                            .filter(|t| t.1 > 1.0 && t.1 <= 2.0)
                            .collect();
                        let beta = tails.iter().map(|t| t.1).fold(f64::INFINITY, f64::min);
                        let scale: f64 = tails.iter().filter(|t| t.1 == beta).map(|t| t.0).sum();
                        if beta < 2.0 {
                            Asymptote::pure(scale * gamma(-beta), beta)
                        } else if beta == 2.0 && sigma2 == 0.0 {
                            Asymptote {
                                coef: 0.5 * scale,
                                power: 2.0,
                                log_power: 1.0,
                            }
                        } else {
                            return Err(Error::Unsupported(
                                "critical mechanism with undeclared second-order tail behaviour".into(),
                            ));
                        }
                    }
                }
            }
        })
    }

    /// Leading term of `Ψ` at `+∞`.
    pub fn asymptote_at_infinity(&self) -> Result<Asymptote> {
        Ok(match *self {
            BranchingMechanism::StablePlus { c, alpha } => Asymptote::pure(c, 1.0 + alpha),
            BranchingMechanism::StableMinus { k, alpha } => Asymptote::pure(-k, 1.0 - alpha),
            BranchingMechanism::LinearStableMinus { c, .. } => Asymptote::pure(-c, 1.0),
            BranchingMechanism::TruncatedPareto { rho, .. } => Asymptote::pure(-rho, 0.0),
            BranchingMechanism::LinearDrift { d } => Asymptote::pure(d, 1.0),
            BranchingMechanism::General { sigma2, ref nu, .. } => {
                if sigma2 > 0.0 {
                    return Ok(Asymptote::pure(0.5 * sigma2, 2.0));
                }
                let d = self.finite_variation().1.expect("σ = 0 mechanisms built from components are finite variation");
                if d != 0.0 {
                    return Ok(Asymptote::pure(d, 1.0));
                }
                let small: Vec<(f64, f64)> = nu.iter().filter_map(NuComponent::small_jump_index).collect();
                if small.is_empty() {
                    let mass = self.levy_total_mass();
                    if mass == 0.0 {
                        return Err(Error::Unsupported("Ψ vanishes identically; no leading exponent".into()));
                    }
                    Asymptote::pure(-mass, 0.0)
                } else {
                    let beta = small.iter().map(|t| t.1).fold(0.0, f64::max);
                    let scale: f64 = small.iter().filter(|t| t.1 == beta).map(|t| t.0).sum();
                    Asymptote::pure(-scale * stable_fv_constant(beta), beta)
                }
            }
        })
    }

    /// `(D, ν)` with `Ψ(u) = Du + ∫(e^{-uh} - 1) ν(dh)`.
    pub fn finite_variation_form(&self) -> Result<(f64, Vec<NuComponent>)> {
        self.validate()?;
        let stable = |k: f64, alpha: f64| {
            let beta = 1.0 - alpha;
            NuComponent::StableDensity {
                scale: k * beta / gamma(alpha),
                index: beta,
                lower: None,
                upper: None,
            }
        };
        Ok(match *self {
            BranchingMechanism::StablePlus { .. } => {
                return Err(Error::contract("stable_plus has infinite variation"));
            }
            BranchingMechanism::StableMinus { k, alpha } => (0.0, vec![stable(k, alpha)]),
            BranchingMechanism::LinearStableMinus { c, k, alpha } => (-c, vec![stable(k, alpha)]),
            BranchingMechanism::TruncatedPareto { rho, alpha, h0 } => (
                0.0,
                vec![NuComponent::ParetoTail {
                    scale: rho * alpha * h0.powf(alpha),
                    exponent: alpha,
                    cutoff: h0,
                }],
            ),
            BranchingMechanism::LinearDrift { d } => (d, vec![]),
            BranchingMechanism::General { ref nu, .. } => match self.finite_variation() {
                (true, Some(d)) => (d, nu.clone()),
                _ => return Err(Error::contract("mechanism has infinite variation")),
            },
        })
    }

    /// The finite-variation mechanism with drift `D` and `ν` restricted to
    /// `(ε, ∞)`, written in `General` form.
    pub fn truncated(&self, eps: f64) -> Result<BranchingMechanism> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::domain(format!("truncation level must be positive, got {eps}")));
        }
        let (d, nu) = self.finite_variation_form()?;
        let kept: Vec<NuComponent> = nu.iter().filter_map(|c| c.restricted_above(eps)).collect();
        let small: f64 = kept.iter().map(NuComponent::mean_below_one).sum();
        Ok(BranchingMechanism::General {
            gamma: d - small,
            sigma2: 0.0,
            nu: kept,
        })
    }

    /// `∫_0^ε h ν(dh)`, the drift lost by truncating `ν` at `ε`.
    pub fn small_jump_drift(&self, eps: f64) -> Result<f64> {
        let (_, nu) = self.finite_variation_form()?;
        Ok(nu.iter().map(|c| c.mean_below(eps)).sum())
    }

    /// The exponent `α₀ ∈ (0, 1)` with `-Ψ(u) ≍ u^{1-α₀}` at `0+`, for
    /// mechanisms whose explosion-time integral converges algebraically.
    pub fn zero_regularity(&self) -> Result<f64> {
        let a = self.asymptote_at_zero()?;
        if a.coef < 0.0 && a.power < 1.0 && a.log_power == 0.0 {
            Ok(1.0 - a.power)
        } else {
            Err(Error::contract(format!(
                "no algebraic singularity of 1/Ψ at 0 (leading term {:?})",
                a
            )))
        }
    }
}

/// Classify `mech`: criticality, `q`, finite variation and the
/// extinction / explosion criteria.
pub fn classify(mech: &BranchingMechanism) -> Result<Classification> {
    mech.validate()?;
    let psi_prime_zero = mech.psi_prime_zero();
    let psi_second_zero = mech.psi_second_zero();
    let at_zero = mech.asymptote_at_zero()?;
    let at_inf = mech.asymptote_at_infinity()?;
    let criticality = if psi_prime_zero > 0.0 {
        Criticality::Subcritical
    } else if psi_prime_zero == 0.0 {
        Criticality::Critical
    } else {
        Criticality::Supercritical
    };
    let q = largest_root(mech, criticality, &at_inf)?;
    let (finite_variation, d) = mech.finite_variation();
    let psi_infinity = mech.psi_infinity();
    let extinction_time_finite = q.is_finite() && at_inf.coef > 0.0 && at_inf.reciprocal_integrable_at_infinity();
    let explosion_time_finite =
        criticality == Criticality::Supercritical && at_zero.coef < 0.0 && at_zero.reciprocal_integrable_at_zero();
    let almost_sure_explosion = q.is_infinite() && explosion_time_finite;
    Ok(Classification {
        criticality,
        q,
        finite_variation,
        d,
        psi_infinity,
        extinction_time_finite,
        explosion_time_finite,
        almost_sure_explosion,
        psi_prime_zero,
        psi_second_zero,
    })
}

const Q_INFINITY_PROBE: f64 = 1e12;

fn largest_root(mech: &BranchingMechanism, criticality: Criticality, at_inf: &Asymptote) -> Result<f64> {
    match criticality {
        Criticality::Subcritical => return Ok(0.0),
        Criticality::Critical => {
            // Ψ ≡ 0 (zero drift) is the only critical mechanism with q > 0
            return Ok(if at_inf.coef == 0.0 { f64::INFINITY } else { 0.0 });
        }
        Criticality::Supercritical => {}
    }
    if at_inf.coef <= 0.0 {
        if mech.psi_unchecked(Q_INFINITY_PROBE) < 0.0 {
            return Ok(f64::INFINITY);
        }
        return Err(Error::numeric(format!(
            "asymptotics say Ψ <= 0 at infinity but Ψ({Q_INFINITY_PROBE:e}) >= 0"
        )));
    }
    let f = |u: f64| Ok(mech.psi_unchecked(u));
    let (lo, hi) = if mech.psi_unchecked(1.0) < 0.0 {
        expand_up(f, 1.0, 2.0, f64::MAX)?
    } else {
        expand_down(|u| f(u), 0.5, 1.0)?
    };
    let opts = RootOptions {
        rel_tol: 1e-12,
        ..RootOptions::default()
    };
    solve_increasing(|u| Ok(mech.psi_unchecked(u)), lo, hi, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feller() -> BranchingMechanism {
        BranchingMechanism::StablePlus { c: 1.0, alpha: 1.0 }
    }

    fn stable_minus() -> BranchingMechanism {
        BranchingMechanism::StableMinus { k: 1.0, alpha: 0.5 }
    }

    fn pareto() -> BranchingMechanism {
        BranchingMechanism::TruncatedPareto {
            rho: 1.0,
            alpha: 0.5,
            h0: 1.0,
        }
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(feller().psi(2.0).unwrap(), 4.0);
        assert!((stable_minus().psi(4.0).unwrap() + 2.0).abs() < 1e-15);
        assert_eq!(feller().psi(0.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        assert!(matches!(feller().psi(-1.0), Err(Error::Domain(_))));
        assert!(matches!(feller().psi_derivatives(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn derivative_limits() {
        assert_eq!(feller().psi_second_zero(), 2.0);
        assert_eq!(stable_minus().psi_prime_zero(), f64::NEG_INFINITY);
        let lsm = BranchingMechanism::LinearStableMinus {
            c: 2.0,
            k: 1.0,
            alpha: 0.5,
        };
        let (d1, _) = lsm.psi_derivatives(1.0).unwrap();
        assert!((d1 + 2.5).abs() < 1e-15);
    }

    #[test]
    fn classification_examples() {
        let c = classify(&feller()).unwrap();
        assert_eq!(c.criticality, Criticality::Critical);
        assert_eq!(c.q, 0.0);
        assert!(c.extinction_time_finite);
        assert!(!c.almost_sure_explosion);

        let c = classify(&stable_minus()).unwrap();
        assert_eq!(c.criticality, Criticality::Supercritical);
        assert_eq!(c.q, f64::INFINITY);
        assert!(c.finite_variation);
        assert_eq!(c.d, Some(0.0));
        assert_eq!(c.psi_infinity, f64::NEG_INFINITY);
        assert!(c.explosion_time_finite);
        assert!(c.almost_sure_explosion);

        let c = classify(&pareto()).unwrap();
        assert!(c.almost_sure_explosion);
        assert_eq!(c.psi_infinity, -1.0);
    }

    #[test]
    fn pareto_with_unit_index_is_not_explosive() {
        // Ψ ~ -ρ h0 u ln(1/u): ∫_0 du/(u ln(1/u)) diverges
        let m = BranchingMechanism::TruncatedPareto {
            rho: 1.0,
            alpha: 1.0,
            h0: 1.0,
        };
        let c = classify(&m).unwrap();
        assert!(!c.explosion_time_finite);
        assert_eq!(c.q, f64::INFINITY);
    }

    #[test]
    fn finite_root_is_found() {
        // Ψ(u) = -u + u²/2: q = 2
        let m = BranchingMechanism::General {
            gamma: -1.0,
            sigma2: 1.0,
            nu: vec![],
        };
        let c = classify(&m).unwrap();
        assert_eq!(c.criticality, Criticality::Supercritical);
        assert!((c.q - 2.0).abs() < 1e-11, "{}", c.q);
        assert!(c.extinction_time_finite);
        assert!(!c.almost_sure_explosion);
    }

    #[test]
    fn general_with_stable_density_matches_stable_minus() {
        // ν(dh) = k(1-α)/Γ(α) h^{-2+α} dh reproduces Ψ(u) = -k u^{1-α}
        let (k, alpha) = (1.0, 0.5);
        let beta: f64 = 1.0 - alpha;
        let scale = k * beta / gamma(1.0 - beta);
        let general = BranchingMechanism::General {
            gamma: -scale * 1.0 / (1.0 - beta),
            sigma2: 0.0,
            nu: vec![NuComponent::StableDensity {
                scale,
                index: beta,
                lower: None,
                upper: None,
            }],
        };
        let (fv, d) = general.finite_variation();
        assert!(fv);
        assert!(d.unwrap().abs() < 1e-15);
        for u in [1e-6, 0.01, 1.0, 37.0, 1e5] {
            let g = general.psi(u).unwrap();
            let s = stable_minus().psi(u).unwrap();
            assert!((g - s).abs() <= 1e-10 * s.abs(), "u={u}: {g} vs {s}");
        }
        let c = classify(&general).unwrap();
        assert!(c.almost_sure_explosion);
        assert_eq!(c.psi_infinity, f64::NEG_INFINITY);
    }

    #[test]
    fn unsupported_when_no_leading_term() {
        let m = BranchingMechanism::General {
            gamma: 0.0,
            sigma2: 0.0,
            nu: vec![],
        };
        assert!(matches!(classify(&m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"family":"stable_minus","k":1.0,"alpha":0.5}"#;
        let m = BranchingMechanism::from_json(text).unwrap();
        assert_eq!(m, stable_minus());
        assert_eq!(BranchingMechanism::from_json(&m.to_json()).unwrap(), m);
        assert!(BranchingMechanism::from_json(r#"{"family":"stable_minus","k":1.0,"alpha":1.5}"#).is_err());
        assert!(BranchingMechanism::from_json(r#"{"family":"nope"}"#).is_err());
    }

    #[test]
    fn classification_serialises_infinities() {
        let c = classify(&stable_minus()).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains(r#""q":"inf""#), "{text}");
        let back: Classification = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn finite_variation_forms_reproduce_psi() {
        let lsm = BranchingMechanism::LinearStableMinus {
            c: 0.7,
            k: 1.3,
            alpha: 0.4,
        };
        for m in [stable_minus(), pareto(), lsm] {
            let (d, nu) = m.finite_variation_form().unwrap();
            for u in [1e-3, 0.5, 4.0, 100.0] {
                let direct = m.psi(u).unwrap();
                let rebuilt = d * u + nu.iter().map(|c| c.fv_integral(u)).sum::<f64>();
                assert!((direct - rebuilt).abs() <= 1e-10 * direct.abs(), "{m:?} u={u}");
            }
        }
        assert!(matches!(feller().finite_variation_form(), Err(Error::Contract(_))));
    }

    #[test]
    fn truncation_keeps_drift_and_loses_small_jumps() {
        let t = stable_minus().truncated(1e-4).unwrap();
        assert_eq!(t.finite_variation().1, Some(0.0));
        assert!(t.levy_total_mass().is_finite());
        let lost = stable_minus().small_jump_drift(1e-4).unwrap();
        // scale ε^α / α with scale = 1/(2Γ(1/2))
        let exact = 0.5 / gamma(0.5) * 1e-2 / 0.5;
        assert!((lost - exact).abs() < 1e-15);
        for u in [0.1, 1.0, 10.0] {
            let gap = t.psi(u).unwrap() - stable_minus().psi(u).unwrap();
            assert!(gap > 0.0 && gap <= u * lost * (1.0 + 1e-9));
        }
    }
}
