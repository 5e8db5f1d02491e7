//! Laplace transforms of quasi-stationary distributions, conditional laws
//! and the limit theorems they converge to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Flow, FlowConfig};
use crate::mechanism::{BranchingMechanism, Criticality};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Explosive,
    Extinction,
}

/// A QSD `μ_β` of a mechanism, identified by its rate of decay.
#[derive(Debug, Clone)]
pub struct QsdSpec {
    flow: Flow,
    beta: f64,
    regime: Regime,
}

impl QsdSpec {
    pub fn new(mech: &BranchingMechanism, beta: f64, regime: Regime) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::contract(format!("the rate of decay must be a positive real, got {beta}")));
        }
        let flow = Flow::new(mech)?;
        let class = flow.classification();
        match regime {
            Regime::Explosive => {
                if !class.almost_sure_explosion {
                    return Err(Error::contract("explosive QSDs need an almost surely explosive mechanism"));
                }
            }
            Regime::Extinction => {
                if !class.extinction_time_finite {
                    return Err(Error::contract("extinction QSDs need Grey's condition"));
                }
                if !(beta <= class.psi_prime_zero) {
                    return Err(Error::contract(format!(
                        "no QSD with rate of decay {beta} above Ψ'(0+) = {}",
                        class.psi_prime_zero
                    )));
                }
            }
        }
        Ok(QsdSpec { flow, beta, regime })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// `∫ μ_β(dr) e^{-λr}`.
    pub fn laplace(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return Err(Error::domain(format!("Laplace argument must be >= 0, got {lambda}")));
        }
        match self.regime {
            Regime::Explosive => Ok((-self.beta * self.flow.phi_explosive(lambda)?).exp()),
            Regime::Extinction => {
                if lambda == 0.0 {
                    return Ok(1.0);
                }
                Ok(-(-self.beta * self.flow.phi_extinction(lambda)?).exp_m1())
            }
        }
    }
}

pub fn qsd_laplace(mech: &BranchingMechanism, beta: f64, regime: Regime, lambda: f64) -> Result<f64> {
    QsdSpec::new(mech, beta, regime)?.laplace(lambda)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
    }
}

/// `E_x[e^{-λZ_t} | T > t] = exp(-x (u(t, λ) - aₜ))`.
pub fn conditional_laplace_explosive(flow: &Flow, x: f64, t: f64, lambda: f64) -> Result<f64> {
    positive("x", x)?;
    positive("t", t)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("λ must be finite and >= 0, got {lambda}")));
    }
    let a = flow.a(t)?;
    let phi = flow.phi_explosive(lambda)?;
    Ok((-x * flow.excess(a, phi)?).exp())
}

/// Limit of the conditional transform, `exp(-x ν(0,∞) Φ(λ))`, for `Ψ(+∞) ∈ (-∞, 0)`.
pub fn limit_thm1i(flow: &Flow, x: f64, lambda: f64) -> Result<f64> {
    let class = flow.classification();
    if !class.almost_sure_explosion {
        return Err(Error::contract("limit_thm1i needs an almost surely explosive mechanism"));
    }
    let psi_inf = class.psi_infinity;
    if !(psi_inf.is_finite() && psi_inf < 0.0) {
        return Err(Error::contract(
            "Ψ(+∞) = -∞: the limiting conditional distribution is trivial",
        ));
    }
    positive("x", x)?;
    Ok((x * psi_inf * flow.phi_explosive(lambda)?).exp())
}

/// `exp(-x λ^α / α)`.
pub fn limit_thm3(x: f64, alpha: f64, lambda: f64) -> Result<f64> {
    positive("x", x)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("α must lie in (0, 1), got {alpha}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("λ must be >= 0, got {lambda}")));
    }
    Ok((-x * lambda.powf(alpha) / alpha).exp())
}

/// `1 - (1 + λ^{-α})^{-1/α}`.
pub fn limit_prop4(alpha: f64, lambda: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("α must lie in (0, 1], got {alpha}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("λ must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    if lambda.is_infinite() {
        return Ok(0.0);
    }
    // 1 - (1+y)^{-1/α} with y = λ^{-α}, without cancellation for small y
    let y = lambda.powf(-alpha);
    Ok(-(-y.ln_1p() / alpha).exp_m1())
}

/// `exp(-2z / Ψ''(0+))`, the limit of `P_x(Z_t / t >= z | T > t)`.
pub fn yaglom_critical(mech: &BranchingMechanism, z: f64) -> Result<f64> {
    let class = crate::mechanism::classify(mech)?;
    if class.criticality != Criticality::Critical {
        return Err(Error::contract("the Yaglom limit needs a critical mechanism"));
    }
    let curvature = class.psi_second_zero;
    if !curvature.is_finite() {
        return Err(Error::contract("the Yaglom limit needs Ψ''(0+) < ∞"));
    }
    if !(z >= 0.0) {
        return Err(Error::domain(format!("z must be >= 0, got {z}")));
    }
    Ok((-2.0 * z / curvature).exp())
}

/// `exp(-x Σ λᵢ e^{-D tᵢ})`, the finite-dimensional Laplace transform of the
/// Q-process.
pub fn qprocess_fdd_laplace(flow: &Flow, x: f64, times: &[f64], lambdas: &[f64]) -> Result<f64> {
    let class = flow.classification();
    if !class.finite_variation {
        return Err(Error::contract("the Q-process law needs a finite-variation mechanism"));
    }
    if !class.almost_sure_explosion {
        return Err(Error::contract("the Q-process law needs an almost surely explosive mechanism"));
    }
    if times.len() != lambdas.len() {
        return Err(Error::domain(format!(
            "{} times but {} Laplace arguments",
            times.len(),
            lambdas.len()
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::domain("times must be nondecreasing"));
    }
    positive("x", x)?;
    let mut sum = 0.0;
    for (&t, &l) in times.iter().zip(lambdas) {
        if !(l >= 0.0) {
            return Err(Error::domain(format!("λ must be >= 0, got {l}")));
        }
        sum += l * flow.drift(t)?;
    }
    Ok((-x * sum).exp())
}

/// `E_x[e^{-λZ_t} | T > t + s] = exp(-x [u(t, λ + aₛ) - a_{t+s}])`.
pub fn qprocess_prelimit(flow: &Flow, x: f64, t: f64, s: f64, lambda: f64) -> Result<f64> {
    if !flow.classification().almost_sure_explosion {
        return Err(Error::contract("qprocess_prelimit needs an almost surely explosive mechanism"));
    }
    positive("x", x)?;
    for (name, v) in [("t", t), ("s", s), ("λ", lambda)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    if t == 0.0 {
        return Ok((-x * lambda).exp());
    }
    // u(t, λ + aₛ) - a_{t+s} is the excess over a_{t+s} of the elapsed time
    // spent between aₛ and aₛ + λ
    let a_s = flow.a(s)?;
    let tau = flow.elapsed(a_s, lambda)?;
    let a_ts = flow.a(t + s)?;
    Ok((-x * flow.excess(a_ts, tau)?).exp())
}

/// Which limit theorem a [`LimitQuery`] compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhichLimit {
    Thm1i,
    Thm1ii,
    Thm3,
    Prop4,
    YaglomCritical,
    Qprocess,
}

impl std::str::FromStr for WhichLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "thm1i" => WhichLimit::Thm1i,
            "thm1ii" => WhichLimit::Thm1ii,
            "thm3" => WhichLimit::Thm3,
            "prop4" => WhichLimit::Prop4,
            "yaglom" | "yaglom_critical" => WhichLimit::YaglomCritical,
            "qprocess" => WhichLimit::Qprocess,
            other => return Err(Error::Config(format!("unknown limit {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitQuery {
    pub x: f64,
    pub t: f64,
    pub lambdas: Vec<f64>,
    pub which: WhichLimit,
    /// Extra conditioning horizon for the Q-process prelimit.
    #[serde(default)]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub lambda: f64,
    pub transform: f64,
    pub limit: f64,
    pub gap: f64,
}

/// Leading index `α` of a regularly varying mechanism.
fn regular_variation_index(flow: &Flow, which: WhichLimit) -> Result<f64> {
    match (which, flow.mechanism()) {
        (WhichLimit::Thm3, BranchingMechanism::StableMinus { alpha, .. })
        | (WhichLimit::Thm3, BranchingMechanism::LinearStableMinus { alpha, .. })
        | (WhichLimit::Prop4, BranchingMechanism::StablePlus { alpha, .. }) => Ok(*alpha),
        _ => Err(Error::contract(format!(
            "{which:?} needs a mechanism with a declared regular-variation index"
        ))),
    }
}

/// Exact pre-limit conditional transform at `t` next to its limit, one row
/// per `λ`.
pub fn evaluate_limit(flow: &Flow, q: &LimitQuery) -> Result<Vec<LimitRow>> {
    if q.lambdas.is_empty() {
        return Err(Error::domain("λ grid must be nonempty"));
    }
    if q.lambdas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("λ grid must be strictly increasing"));
    }
    positive("x", q.x)?;
    positive("t", q.t)?;
    let (x, t) = (q.x, q.t);
    let rows: Result<Vec<(f64, f64, f64)>> = match q.which {
        WhichLimit::Thm1i => q
            .lambdas
            .iter()
            .map(|&l| Ok((l, conditional_laplace_explosive(flow, x, t, l)?, limit_thm1i(flow, x, l)?)))
            .collect(),
        WhichLimit::Thm1ii => {
            if flow.classification().psi_infinity != f64::NEG_INFINITY {
                return Err(Error::contract("thm1ii needs Ψ(+∞) = -∞"));
            }
            q.lambdas
                .iter()
                .map(|&l| Ok((l, conditional_laplace_explosive(flow, x, t, l)?, 0.0)))
                .collect()
        }
        WhichLimit::Thm3 => {
            let alpha = regular_variation_index(flow, q.which)?;
            let f = flow.scaling_f(t)?;
            q.lambdas
                .iter()
                .map(|&l| Ok((l, conditional_laplace_explosive(flow, x, t, l / f)?, limit_thm3(x, alpha, l)?)))
                .collect()
        }
        WhichLimit::Prop4 => {
            let alpha = regular_variation_index(flow, q.which)?;
            let v = flow.v(t)?;
            q.lambdas
                .iter()
                .map(|&l| {
                    let pre = critical_conditional_laplace(flow, x, t, v, l * v)?;
                    Ok((l, pre, limit_prop4(alpha, l)?))
                })
                .collect()
        }
        WhichLimit::YaglomCritical => {
            let curvature = flow.classification().psi_second_zero;
            yaglom_critical(flow.mechanism(), 0.0)?;
            let v = flow.v(t)?;
            q.lambdas
                .iter()
                .map(|&l| {
                    let pre = critical_conditional_laplace(flow, x, t, v, l / t)?;
                    Ok((l, pre, 1.0 / (1.0 + 0.5 * curvature * l)))
                })
                .collect()
        }
        WhichLimit::Qprocess => {
            let s = q.s.ok_or_else(|| Error::Config("the qprocess limit needs s".into()))?;
            q.lambdas
                .iter()
                .map(|&l| Ok((l, qprocess_prelimit(flow, x, t, s, l)?, qprocess_fdd_laplace(flow, x, &[t], &[l])?)))
                .collect()
        }
    };
    Ok(rows?
        .into_iter()
        .map(|(lambda, transform, limit)| LimitRow {
            lambda,
            transform,
            limit,
            gap: (transform - limit).abs(),
        })
        .collect())
}

/// `E_x[e^{-μZ_t} | T > t] = (e^{-x u(t,μ)} - e^{-x v(t)}) / (1 - e^{-x v(t)})`
/// in the extinction case.
pub fn critical_conditional_laplace(flow: &Flow, x: f64, t: f64, v: f64, mu: f64) -> Result<f64> {
    let u = flow.u(t, mu, &FlowConfig::default())?.value;
    let survive = -(-x * v).exp_m1();
    Ok(((-x * u).exp_m1() - (-x * v).exp_m1()) / survive)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SM: BranchingMechanism = BranchingMechanism::StableMinus { k: 1.0, alpha: 0.5 };

    #[test]
    fn stable_minus_qsd_transform() {
        for (beta, l) in [(1.0, 1.0), (2.0, 0.3), (0.5, 9.0)] {
            let v = qsd_laplace(&SM, beta, Regime::Explosive, l).unwrap();
            assert!((v - (-beta * l.sqrt() / 0.5).exp()).abs() < 1e-15);
        }
        assert_eq!(qsd_laplace(&SM, 1.0, Regime::Explosive, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn subcritical_extinction_qsd() {
        let m = BranchingMechanism::General {
            gamma: 1.0,
            sigma2: 2.0,
            nu: vec![],
        };
        for l in [0.1, 1.0, 7.0] {
            let v = qsd_laplace(&m, 1.0, Regime::Extinction, l).unwrap();
            assert!((v - 1.0 / (1.0 + l)).abs() < 1e-12, "{l}: {v}");
        }
        assert!(matches!(
            QsdSpec::new(&m, 1.5, Regime::Extinction),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn rejects_non_positive_beta() {
        assert!(matches!(QsdSpec::new(&SM, -1.0, Regime::Explosive), Err(Error::Contract(_))));
        assert!(matches!(QsdSpec::new(&SM, 0.0, Regime::Explosive), Err(Error::Contract(_))));
    }

    #[test]
    fn conditional_laplace_stable_minus() {
        let flow = Flow::new(&SM).unwrap();
        let v = conditional_laplace_explosive(&flow, 1.0, 1.0, 1.0).unwrap();
        assert!((v - (-2f64).exp()).abs() < 1e-13, "{v}");
        assert_eq!(conditional_laplace_explosive(&flow, 1.0, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn plug_in_limits() {
        assert!((limit_thm3(1.0, 0.5, 1.0).unwrap() - (-2f64).exp()).abs() < 1e-16);
        assert!((limit_thm3(2.0, 0.5, 4.0).unwrap() - (-8f64).exp()).abs() < 1e-18);
        assert_eq!(limit_thm3(1.0, 0.5, 0.0).unwrap(), 1.0);
        assert!((limit_prop4(1.0, 1.0).unwrap() - 0.5).abs() < 1e-16);
        assert_eq!(limit_prop4(0.5, f64::INFINITY).unwrap(), 0.0);
        let feller = BranchingMechanism::StablePlus { c: 1.0, alpha: 1.0 };
        assert!((yaglom_critical(&feller, 1.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
        assert_eq!(yaglom_critical(&feller, 0.0).unwrap(), 1.0);
        let feller2 = BranchingMechanism::StablePlus { c: 2.0, alpha: 1.0 };
        assert!((yaglom_critical(&feller2, 2.0).unwrap() - (-1f64).exp()).abs() < 1e-16);
        let half = BranchingMechanism::StablePlus { c: 1.0, alpha: 0.5 };
        assert!(matches!(yaglom_critical(&half, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn qprocess_transforms() {
        let flow = Flow::new(&SM).unwrap();
        let v = qprocess_fdd_laplace(&flow, 1.0, &[0.5, 3.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-2f64).exp()).abs() < 1e-16);
        assert_eq!(qprocess_fdd_laplace(&flow, 1.0, &[], &[]).unwrap(), 1.0);
        let lsm = Flow::new(&BranchingMechanism::LinearStableMinus {
            c: 1.0,
            k: 1.0,
            alpha: 0.5,
        })
        .unwrap();
        let v = qprocess_fdd_laplace(&lsm, 1.0, &[1.0], &[1.0]).unwrap();
        assert!((v - (-(1f64.exp())).exp()).abs() < 1e-15);
        let pre = qprocess_prelimit(&flow, 1.0, 1.0, 100.0, 1.0).unwrap();
        assert!((pre - (-1f64).exp()).abs() < 2e-2, "{pre}");
        assert_eq!(qprocess_prelimit(&flow, 1.0, 1.0, 0.0, 0.0).unwrap(), 1.0);
        assert!((qprocess_prelimit(&flow, 1.0, 0.0, 5.0, 0.7).unwrap() - (-0.7f64).exp()).abs() < 1e-16);
    }

    #[test]
    fn thm1i_requires_finite_psi_infinity() {
        let flow = Flow::new(&SM).unwrap();
        assert!(matches!(limit_thm1i(&flow, 1.0, 1.0), Err(Error::Contract(_))));
    }
}
