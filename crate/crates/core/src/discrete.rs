//! Continuous-time Galton–Watson processes: the generating-function flow
//! `F(t, r)`, the exponent `Φ`, explosion, and the quantized QSD spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{integrate, QuadOptions};
use crate::roots::{solve_increasing_newton, RootOptions};

/// Offspring law of a DSBP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Offspring {
    /// `pmf[k] = ξ(k)`.
    Finite { pmf: Vec<f64> },
    /// `φ(x) = 1 - (1 - x)^α`.
    Sibuya { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteBranching {
    /// Rate of the exponential lifetimes.
    pub c: f64,
    pub offspring: Offspring,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsbpClass {
    pub explosive_as: bool,
    pub beta0: f64,
}

/// A quasi-stationary law of the DSBP with rate of decay `n β₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteQsd {
    pub n: u32,
    /// `pmf[k - 1] = μ({k})` for `k = 1..=K`.
    pub pmf: Vec<f64>,
    /// Mass beyond `K`.
    pub truncation_residual: f64,
}

impl DiscreteQsd {
    pub fn probability(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.pmf.get(k - 1).copied().unwrap_or(0.0)
        }
    }

    /// `Σ_{k ≤ K} μ(k) r^k`.
    pub fn pgf(&self, r: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, p| (acc + p) * r)
    }
}

pub const DEFAULT_TRUNCATION: usize = 256;

/// Truncation used internally to pin the free constant of the recursion.
const NORMALIZATION_ORDER: usize = 160;
const NORMALIZATION_POINT: f64 = 0.5;

impl DiscreteBranching {
    pub fn sibuya(c: f64, alpha: f64) -> Self {
        DiscreteBranching {
            c,
            offspring: Offspring::Sibuya { alpha },
        }
    }

    pub fn finite(c: f64, pmf: Vec<f64>) -> Self {
        DiscreteBranching {
            c,
            offspring: Offspring::Finite { pmf },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: DiscreteBranching =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad DSBP description: {e}")))?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::domain(format!("lifetime rate c must be positive, got {}", self.c)));
        }
        match &self.offspring {
            Offspring::Finite { pmf } => {
                if pmf.is_empty() {
                    return Err(Error::domain("offspring pmf is empty"));
                }
                if pmf.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(Error::domain("offspring pmf has a negative or non-finite entry"));
                }
                let total: f64 = pmf.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::domain(format!("offspring pmf sums to {total}, not 1")));
                }
            }
            Offspring::Sibuya { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::domain(format!("Sibuya index must lie in (0, 1), got {alpha}")));
                }
            }
        }
        Ok(())
    }

    /// `ξ(k)`.
    pub fn xi(&self, k: usize) -> f64 {
        match &self.offspring {
            Offspring::Finite { pmf } => pmf.get(k).copied().unwrap_or(0.0),
            Offspring::Sibuya { alpha } => {
                if k == 0 {
                    return 0.0;
                }
                let mut p = *alpha;
                for j in 2..=k {
                    p *= (j as f64 - 1.0 - alpha) / j as f64;
                }
                p
            }
        }
    }

    /// `ξ(0), …, ξ(K)`.
    pub fn coefficients(&self, order: usize) -> Vec<f64> {
        match &self.offspring {
            Offspring::Finite { pmf } => (0..=order).map(|k| pmf.get(k).copied().unwrap_or(0.0)).collect(),
            Offspring::Sibuya { alpha } => {
                let mut out = vec![0.0; order + 1];
                if order >= 1 {
                    out[1] = *alpha;
                }
                for j in 2..=order {
                    out[j] = out[j - 1] * (j as f64 - 1.0 - alpha) / j as f64;
                }
                out
            }
        }
    }

    /// Offspring generating function `φ(x)`.
    pub fn phi(&self, x: f64) -> f64 {
        match &self.offspring {
            Offspring::Finite { pmf } => pmf.iter().rev().fold(0.0, |acc, p| acc * x + p),
            Offspring::Sibuya { alpha } => -(alpha * (-x).ln_1p()).exp_m1(),
        }
    }

    /// `x - φ(x)`, accurate for `x` near 0.
    fn defect(&self, x: f64) -> f64 {
        match &self.offspring {
            Offspring::Finite { .. } => x - self.phi(x),
            Offspring::Sibuya { alpha } => x + (alpha * (-x).ln_1p()).exp_m1(),
        }
    }

    /// `x - φ(x)` at `x = 1 - y`, accurate for `y` near 0.
    fn defect_at_gap(&self, y: f64) -> f64 {
        match &self.offspring {
            Offspring::Finite { .. } => (1.0 - y) - self.phi(1.0 - y),
            Offspring::Sibuya { alpha } => y.powf(*alpha) - y,
        }
    }

    /// Exponent `a` with `x - φ(x) ≍ (1 - x)^a` at `1⁻`.
    fn regularity_at_one(&self) -> f64 {
        match &self.offspring {
            Offspring::Finite { .. } => 1.0,
            Offspring::Sibuya { alpha } => *alpha,
        }
    }
}

pub fn dsbp_classify(d: &DiscreteBranching) -> Result<DsbpClass> {
    d.validate()?;
    let beta0 = d.c * (1.0 - d.xi(1));
    // finite support has φ'(1) < ∞, so x - φ(x) vanishes linearly at 1
    // and the explosion integral diverges; for Sibuya it vanishes like
    // (1 - x)^α
    let explosive_as = match &d.offspring {
        Offspring::Finite { .. } => false,
        Offspring::Sibuya { .. } => d.xi(0) == 0.0,
    };
    Ok(DsbpClass { explosive_as, beta0 })
}

/// Precomputed `Φ` machinery for an explosive DSBP.
#[derive(Debug, Clone)]
pub struct DsbpFlow {
    d: DiscreteBranching,
    beta0: f64,
    /// `Φ(1/2)`.
    phi_half: f64,
    quad: QuadOptions,
}

impl DsbpFlow {
    pub fn new(d: &DiscreteBranching) -> Result<Self> {
        let class = dsbp_classify(d)?;
        if !class.explosive_as {
            return Err(Error::contract(
                "the DSBP does not explode almost surely (φ(x) - x is not integrable at 1⁻)",
            ));
        }
        let mut flow = DsbpFlow {
            d: d.clone(),
            beta0: class.beta0,
            phi_half: 0.0,
            quad: QuadOptions::with_rel_tol(1e-14),
        };
        flow.phi_half = flow.upper_part(NORMALIZATION_POINT)?;
        Ok(flow)
    }

    pub fn branching(&self) -> &DiscreteBranching {
        &self.d
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    /// `∫_{1-y}^{1} dx / (c(x - φ(x)))` for `y ≤ 1/2`, via `s = y^{1-a}`.
    fn upper_part(&self, y: f64) -> Result<f64> {
        if y == 0.0 {
            return Ok(0.0);
        }
        let q = 1.0 - self.d.regularity_at_one();
        let c = self.d.c;
        let r = integrate(
            |s: f64| {
                if s <= 0.0 {
                    // limit of (dy/ds) / defect at s = 0
                    return 1.0 / (q * c);
                }
                let gap = s.powf(1.0 / q);
                let jac = gap / (q * s);
                jac / (c * self.d.defect_at_gap(gap))
            },
            0.0,
            y.powf(q),
            &self.quad,
        )?;
        Ok(r.value)
    }

    /// `∫_{e^z}^{1/2} dx / (c(x - φ(x)))`, via `x = e^w`.
    fn lower_part(&self, z: f64) -> Result<f64> {
        let top = NORMALIZATION_POINT.ln();
        if z >= top {
            return Ok(0.0);
        }
        let c = self.d.c;
        let r = integrate(
            |w: f64| {
                let x = w.exp();
                x / (c * self.d.defect(x))
            },
            z,
            top,
            &self.quad,
        )?;
        Ok(r.value)
    }

    /// `Φ(r) = ∫_1^r dx / (c(φ(x) - x))` on `(0, 1]`.
    pub fn phi(&self, r: f64) -> Result<f64> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::domain(format!("Φ is defined on (0, 1], got {r}")));
        }
        if r >= NORMALIZATION_POINT {
            self.upper_part(1.0 - r)
        } else {
            Ok(self.phi_half + self.lower_part(r.ln())?)
        }
    }

    /// `F(t, r)`, the generating function of `Z_t` under `P_1`. `r = 1`
    /// stands for the left limit `F(t, 1⁻)`.
    pub fn f(&self, t: f64, r: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::domain(format!("t must be finite and >= 0, got {t}")));
        }
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::domain(format!("r must lie in (0, 1], got {r}")));
        }
        if t == 0.0 {
            return Ok(r);
        }
        let target = self.phi(r)? + t;
        let opts = RootOptions::default();
        let c = self.d.c;
        if target <= self.phi_half {
            // solve in the gap y = 1 - F; Φ(1 - y) ≈ y^{1-a} / (c(1-a))
            let q = 1.0 - self.d.regularity_at_one();
            let guess = (target * c * q).powf(1.0 / q).min(0.25);
            let y = solve_increasing_newton(
                |y| {
                    let v = self.upper_part(y)? - target;
                    Ok((v, 1.0 / (c * self.d.defect_at_gap(y))))
                },
                0.0,
                NORMALIZATION_POINT,
                guess,
                &opts,
            )?;
            Ok(1.0 - y)
        } else {
            // solve in z = ln F; Φ(e^z) ≈ Φ(1/2) + (ln(1/2) - z) / β₀
            let top = NORMALIZATION_POINT.ln();
            let excess = target - self.phi_half;
            let mut lo = top - excess * self.beta0 - 1.0;
            while self.lower_part(lo)? < excess {
                lo = top - 2.0 * (top - lo);
                if lo < -700.0 {
                    return Err(Error::numeric(format!("F(t, r) underflows at t = {t}")));
                }
            }
            let guess = top - excess * self.beta0;
            let z = solve_increasing_newton(
                |z| {
                    let x = z.exp();
                    Ok((excess - self.lower_part(z)?, x / (c * self.d.defect(x))))
                },
                lo,
                top,
                guess,
                &opts,
            )?;
            Ok(z.exp())
        }
    }

    /// `E_n[r^{Z_t} | τ > t] = (F(t, r) / F(t, 1⁻))^n`.
    pub fn conditional_pgf(&self, n: u32, t: f64, r: f64) -> Result<f64> {
        let ratio = self.f(t, r)? / self.f(t, 1.0)?;
        Ok(ratio.powi(n as i32))
    }

    /// Laplace transform of the QSD in `r`-form: `e^{-n β₀ Φ(r)}`.
    pub fn qsd_pgf(&self, n: u32, r: f64) -> Result<f64> {
        Ok((-(n as f64) * self.beta0 * self.phi(r)?).exp())
    }
}

pub fn dsbp_phi(d: &DiscreteBranching, r: f64) -> Result<f64> {
    DsbpFlow::new(d)?.phi(r)
}

#[allow(non_snake_case)]
pub fn dsbp_F(d: &DiscreteBranching, t: f64, r: f64) -> Result<f64> {
    DsbpFlow::new(d)?.f(t, r)
}

/// Power-series coefficients `g_0..g_K` of a solution of
/// `c(φ(r) - r) g'(r) = -β g(r)`, with the free coefficient at the pivot
/// `m = β/β₀` set to 1. Without a pivot the only solution is zero and
/// [`Error::NoQsd`] is returned.
pub fn coefficient_recursion(d: &DiscreteBranching, beta: f64, order: usize) -> Result<Vec<f64>> {
    let class = dsbp_classify(d)?;
    if d.xi(0) != 0.0 {
        return Err(Error::contract("the QSD recursion needs ξ(0) = 0"));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("rate of decay must be positive, got {beta}")));
    }
    let beta0 = class.beta0;
    let ratio = beta / beta0;
    let phi = d.coefficients(order);
    let mut g = vec![0.0; order + 1];
    let mut pivot = None;
    for m in 1..=order {
        let mut rhs = 0.0;
        for j in 2..=m {
            rhs -= d.c * phi[j] * (m - j + 1) as f64 * g[m - j + 1];
        }
        let denom = beta - m as f64 * beta0;
        if denom.abs() <= 1e-9 * beta {
            if rhs != 0.0 {
                return Err(Error::numeric(format!("inconsistent recursion at m = {m}")));
            }
            g[m] = 1.0;
            pivot = Some(m);
        } else {
            g[m] = rhs / denom;
        }
    }
    if pivot.is_none() {
        return Err(Error::NoQsd { beta, beta0, ratio });
    }
    Ok(g)
}

fn series_power(base: &[f64], n: u32) -> Vec<f64> {
    let mut out = vec![0.0; base.len()];
    out[0] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; base.len()];
        for (i, a) in out.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in base.iter().enumerate().take(base.len() - i) {
                next[i + j] += a * b;
            }
        }
        out = next;
    }
    out
}

/// The QSD with rate of decay `n β₀`, truncated to `{1, …, K}`.
pub fn dsbp_qsd_pmf(d: &DiscreteBranching, n: u32, order: usize) -> Result<DiscreteQsd> {
    if n == 0 {
        return Err(Error::domain("n must be a positive integer"));
    }
    if order < n as usize {
        return Err(Error::domain(format!("truncation K = {order} is below n = {n}")));
    }
    let flow = DsbpFlow::new(d)?;
    let inner = order.max(NORMALIZATION_ORDER);
    let mut base = coefficient_recursion(d, flow.beta0, inner)?;
    // the pivot constant: match e^{-β₀ Φ(1/2)}, where the series has
    // converged to machine precision
    let r0 = NORMALIZATION_POINT;
    let truncated = base.iter().rev().fold(0.0, |acc, g| acc * r0 + g);
    let scale = (-flow.beta0 * flow.phi_half).exp() / truncated;
    for g in base.iter_mut() {
        *g *= scale;
    }
    let g = if n == 1 { base } else { series_power(&base, n) };
    let pmf: Vec<f64> = g[1..=order].to_vec();
    let mass: f64 = pmf.iter().sum();
    Ok(DiscreteQsd {
        n,
        pmf,
        truncation_residual: 1.0 - mass,
    })
}

/// The QSD for an arbitrary rate of decay; fails with [`Error::NoQsd`]
/// unless `β/β₀` is a positive integer.
pub fn dsbp_qsd_pmf_for_rate(d: &DiscreteBranching, beta: f64, order: usize) -> Result<DiscreteQsd> {
    let beta0 = dsbp_classify(d)?.beta0;
    coefficient_recursion(d, beta, order.max(1))?;
    let n = (beta / beta0).round() as u32;
    dsbp_qsd_pmf(d, n, order)
}

/// `P_{n0}(Z_t = k)` for `k = 0..=K`, by uniformization of the population
/// chain truncated at `K`. Exact below `K` because populations never
/// decrease when `ξ(0) = 0`; the last entry collects everything `≥ K`.
pub fn dsbp_transition_pmf(d: &DiscreteBranching, n0: u32, t: f64, order: usize) -> Result<Vec<f64>> {
    d.validate()?;
    if d.xi(0) != 0.0 {
        return Err(Error::contract("transition probabilities need ξ(0) = 0"));
    }
    if n0 == 0 || n0 as usize > order {
        return Err(Error::domain(format!("n0 = {n0} must lie in 1..=K")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("t must be finite and >= 0, got {t}")));
    }
    let xi = d.coefficients(order);
    let beta0 = d.c * (1.0 - xi[1]);
    let mut p = vec![0.0; order + 1];
    p[n0 as usize] = 1.0;
    if t == 0.0 || beta0 == 0.0 {
        return Ok(p);
    }
    let rate = beta0 * order as f64;
    let lt = rate * t;
    // P = I + Q / Λ with all mass pushed past K parked at K
    let step = |p: &[f64]| -> Vec<f64> {
        let mut next = vec![0.0; order + 1];
        next[order] = p[order];
        for k in 1..order {
            if p[k] == 0.0 {
                continue;
            }
            let out = k as f64 * beta0 / rate;
            next[k] += p[k] * (1.0 - out);
            let per = p[k] * k as f64 * d.c / rate;
            let mut placed = 0.0;
            for (m, x) in xi.iter().enumerate().skip(2) {
                let target = k - 1 + m;
                if target >= order {
                    break;
                }
                next[target] += per * x;
                placed += per * x;
            }
            next[order] += p[k] * out - placed;
        }
        next
    };
    let n_max = (lt + 12.0 * lt.sqrt() + 60.0).ceil() as usize;
    let mut acc = vec![0.0; order + 1];
    let mut current = p;
    for j in 0..=n_max {
        let log_w = -lt + j as f64 * lt.ln() - statrs::function::gamma::ln_gamma(j as f64 + 1.0);
        let w = log_w.exp();
        for (a, c) in acc.iter_mut().zip(&current) {
            *a += w * c;
        }
        current = step(&current);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sibuya_half() -> DiscreteBranching {
        DiscreteBranching::sibuya(1.0, 0.5)
    }

    #[test]
    fn classification() {
        let c = dsbp_classify(&sibuya_half()).unwrap();
        assert!(c.explosive_as);
        assert!((c.beta0 - 0.5).abs() < 1e-16);
        let c = dsbp_classify(&DiscreteBranching::sibuya(2.0, 0.9)).unwrap();
        assert!((c.beta0 - 0.2).abs() < 1e-15);
        let yule = DiscreteBranching::finite(1.0, vec![0.0, 0.0, 1.0]);
        assert!(!dsbp_classify(&yule).unwrap().explosive_as);
    }

    #[test]
    fn phi_closed_form() {
        let flow = DsbpFlow::new(&sibuya_half()).unwrap();
        assert!((flow.phi(0.75).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-13);
        assert_eq!(flow.phi(1.0).unwrap(), 0.0);
        assert!(matches!(flow.phi(0.0), Err(Error::Domain(_))));
        assert!(matches!(flow.phi(1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn survival_closed_form() {
        let flow = DsbpFlow::new(&sibuya_half()).unwrap();
        for t in [0.1, 1.0, 5.0, 30.0] {
            let f = flow.f(t, 1.0).unwrap();
            let q = (-t / 2.0f64).exp();
            let exact = q * (2.0 - q);
            assert!(((f - exact) / exact).abs() < 1e-10, "{t}: {f} vs {exact}");
        }
        assert_eq!(flow.f(0.0, 0.3).unwrap(), 0.3);
    }

    #[test]
    fn sibuya_qsd_coefficients() {
        let q = dsbp_qsd_pmf(&sibuya_half(), 1, DEFAULT_TRUNCATION).unwrap();
        for (k, exact) in [(1, 0.5), (2, 0.125), (3, 0.0625), (4, 5.0 / 128.0)] {
            assert!((q.probability(k) - exact).abs() < 1e-13, "{k}: {}", q.probability(k));
        }
        assert!((q.pmf.iter().sum::<f64>() + q.truncation_residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fractional_rate_has_no_qsd() {
        let err = dsbp_qsd_pmf_for_rate(&sibuya_half(), 0.75, 64).unwrap_err();
        assert!(matches!(err, Error::NoQsd { ratio, .. } if (ratio - 1.5).abs() < 1e-12));
    }

    #[test]
    fn non_explosive_rejected() {
        let d = DiscreteBranching::finite(1.0, vec![0.0, 0.0, 0.5, 0.5]);
        assert!(matches!(dsbp_qsd_pmf(&d, 1, 32), Err(Error::Contract(_))));
    }

    #[test]
    fn transition_pmf_matches_survival() {
        let d = sibuya_half();
        let flow = DsbpFlow::new(&d).unwrap();
        let p = dsbp_transition_pmf(&d, 1, 1.0, 400).unwrap();
        // P(Z_1 = 1) = e^{-β₀}
        assert!((p[1] - (-0.5f64).exp()).abs() < 1e-12, "{}", p[1] - (-0.5f64).exp());
        let head: f64 = p[..400].iter().sum();
        assert!(head < flow.f(1.0, 1.0).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let d = DiscreteBranching::from_json(r#"{"c": 1, "offspring": {"kind": "sibuya", "alpha": 0.5}}"#).unwrap();
        assert_eq!(d, sibuya_half());
        assert!(DiscreteBranching::from_json(r#"{"c": 1, "offspring": {"kind": "finite", "pmf": [0.5, 0.4]}}"#).is_err());
    }
}
