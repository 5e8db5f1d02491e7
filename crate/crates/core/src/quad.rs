//! Adaptive Gauss–Kronrod quadrature and the endpoint substitutions used
//! throughout the crate.
//!
//! The workhorse is a globally adaptive 21-point Gauss–Kronrod rule
//! (QUADPACK `qk21` nodes, QAG-style bisection of the interval with the
//! largest error estimate). Singular or unbounded integrals are never handed
//! to it raw: [`power_weighted`] maps `z^p g(z)` onto smooth integrands with
//! a power substitution near zero and a logarithmic one away from it.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-13,
            max_intervals: 4000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOptions {
            rel_tol,
            ..QuadOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
    pub converged: bool,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..5 {
        let jtw = 2 * j + 1;
        let x = half * XGK[jtw];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtw] = f1;
        fv2[jtw] = f2;
        res_g += WG[j] * (f1 + f2);
        res_k += WGK[jtw] * (f1 + f2);
        res_abs += WGK[jtw] * (f1.abs() + f2.abs());
    }
    for j in 0..5 {
        let jtwm1 = 2 * j;
        let x = half * XGK[jtwm1];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[jtwm1] = f1;
        fv2[jtwm1] = f2;
        res_k += WGK[jtwm1] * (f1 + f2);
        res_abs += WGK[jtwm1] * (f1.abs() + f2.abs());
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (value, err)
}

/// Globally adaptive Gauss–Kronrod integration of `f` over the finite
/// interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            intervals: 0,
            converged: true,
        });
    }
    let (value, error) = kronrod21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    let mut intervals = 1;
    let mut converged = false;
    loop {
        if !total.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if total_err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            converged = true;
            break;
        }
        if intervals >= opts.max_intervals {
            break;
        }
        let worst = match heap.pop() {
            Some(s) => s,
            None => break,
        };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod21(&f, worst.a, mid);
        let (v2, e2) = kronrod21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        intervals += 1;
    }
    // re-sum to shed the drift of the running updates
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error,
        intervals,
        converged: converged || error <= opts.abs_tol.max(opts.rel_tol * value.abs()),
    })
}

/// Integrate over `[a, ∞)` by the map `x = a + s/(1-s)`, `s ∈ [0, 1)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, opts: &QuadOptions) -> Result<QuadResult> {
    integrate(
        |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let one_minus = 1.0 - s;
            let x = a + s / one_minus;
            let v = f(x) / (one_minus * one_minus);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        opts,
    )
}

/// `∫_a^b z^p g(z) dz` for a smooth bounded `g`.
///
/// `a = 0` requires `p > -1`; `b = ∞` requires the product to decay
/// (either `p < -1` or `g` decaying). Near zero the substitution
/// `z = s^{1/(p+1)}` removes the algebraic endpoint behaviour; elsewhere
/// `z = e^y` turns wide ranges into moderate ones.
pub fn power_weighted<G: Fn(f64) -> f64>(g: G, p: f64, a: f64, b: f64, opts: &QuadOptions) -> Result<f64> {
    if !(a >= 0.0) || !(b >= a) {
        return Err(Error::domain(format!("power_weighted: bad range [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let split = 1.0;
    if a < split {
        let hi = b.min(split);
        if a == 0.0 {
            if !(p > -1.0) {
                return Err(Error::domain(format!(
                    "power_weighted: z^{p} is not integrable at 0"
                )));
            }
            let q = p + 1.0;
            let upper = hi.powf(q);
            let r = integrate(|s: f64| g(s.powf(1.0 / q)) / q, 0.0, upper, opts)?;
            total += r.value;
        } else {
            let r = integrate(
                |y: f64| {
                    let z = y.exp();
                    z.powf(p + 1.0) * g(z)
                },
                a.ln(),
                hi.ln(),
                opts,
            )?;
            total += r.value;
        }
    }
    if b > split {
        let lo = a.max(split);
        let integrand = |y: f64| {
            let z = y.exp();
            if !z.is_finite() {
                return 0.0;
            }
            let v = z.powf(p + 1.0) * g(z);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        if b.is_finite() {
            total += integrate(integrand, lo.ln(), b.ln(), opts)?.value;
        } else {
            total += integrate_to_infinity(integrand, lo.ln(), opts)?.value;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-14);
        assert!(r.converged);
    }

    #[test]
    fn gaussian_tail_to_infinity() {
        let r = integrate_to_infinity(|x| (-x).exp(), 0.0, &QuadOptions::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn power_weighted_handles_zero_singularity() {
        // ∫_0^1 z^{-1/2} dz = 2
        let v = power_weighted(|_| 1.0, -0.5, 0.0, 1.0, &QuadOptions::default()).unwrap();
        assert!((v - 2.0).abs() < 1e-13);
        // ∫_0^∞ z^{-1/2} e^{-z} dz = sqrt(pi)
        let v = power_weighted(|z| (-z).exp(), -0.5, 0.0, f64::INFINITY, &QuadOptions::default())
            .unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12, "{v}");
        // ∫_2^∞ z^{-3} dz = 1/8
        let v = power_weighted(|_| 1.0, -3.0, 2.0, f64::INFINITY, &QuadOptions::default()).unwrap();
        assert!((v - 0.125).abs() < 1e-13, "{v}");
    }

    #[test]
    fn rejects_non_integrable_power() {
        assert!(power_weighted(|_| 1.0, -1.0, 0.0, 1.0, &QuadOptions::default()).is_err());
    }
}
