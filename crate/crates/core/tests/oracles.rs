//! Library results against independent closed forms and brute-force
//! integrations written here from scratch.

use qsdlab::discrete::{dsbp_qsd_pmf, dsbp_transition_pmf, DiscreteBranching, DsbpFlow};
use qsdlab::flow::{Backend, Flow, FlowConfig};
use qsdlab::montecarlo::{simulate_feller, EstimateWithCI, SimConfig};
use qsdlab::qsd::{conditional_laplace_explosive, limit_thm1i};
use qsdlab::BranchingMechanism;

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `Ψ(u) = -ρ ∫_0^1 (1 - e^{-u h(s)}) ds` with `h(s) = h0 s^{-1/α}` the
/// tail quantile of the Pareto jump law.
fn pareto_psi(rho: f64, alpha: f64, h0: f64, u: f64) -> f64 {
    let integrand = |s: f64| {
        if s == 0.0 {
            1.0
        } else {
            -(-u * h0 * s.powf(-1.0 / alpha)).exp_m1()
        }
    };
    -rho * simpson(integrand, 0.0, 1.0, 20_000)
}

#[test]
fn truncated_pareto_psi_matches_tail_quantile_integral() {
    let mech = BranchingMechanism::TruncatedPareto {
        rho: 1.3,
        alpha: 0.5,
        h0: 0.7,
    };
    for u in [1e-3, 0.1, 1.0, 5.0, 40.0] {
        let got = mech.psi(u).unwrap();
        let want = pareto_psi(1.3, 0.5, 0.7, u);
        assert!((got - want).abs() <= 1e-6 * want.abs(), "u = {u}: {got} vs {want}");
    }
}

#[test]
fn truncated_pareto_phi_matches_brute_force() {
    let mech = BranchingMechanism::TruncatedPareto {
        rho: 1.0,
        alpha: 0.5,
        h0: 1.0,
    };
    let flow = Flow::new(&mech).unwrap();
    // Φ(λ) = ∫_0^λ du / (-Ψ(u)); u = s² removes the u^{-1/2} singularity
    for lambda in [0.2f64, 1.0, 3.0] {
        let integrand = |s: f64| {
            if s == 0.0 {
                // -Ψ(u) ~ ρ Γ(1/2) (h0 u)^{1/2}
                2.0 / std::f64::consts::PI.sqrt()
            } else {
                2.0 * s / -mech.psi(s * s).unwrap()
            }
        };
        let want = simpson(integrand, 0.0, lambda.sqrt(), 4000);
        let got = flow.phi_explosive(lambda).unwrap();
        assert!((got - want).abs() <= 1e-8 * want, "λ = {lambda}: {got} vs {want}");
    }
}

/// With `α = 1/2`, `w = √u` solves `w' = (c w + k)/2`.
fn lsm_half_flow(c: f64, k: f64, t: f64, lambda: f64) -> f64 {
    let r = k / c;
    ((lambda.sqrt() + r) * (0.5 * c * t).exp() - r).powi(2)
}

#[test]
fn linear_stable_minus_flow_closed_form() {
    for (c, k) in [(0.01, 1.0), (0.7, 0.3)] {
        let flow = Flow::new(&BranchingMechanism::LinearStableMinus { c, k, alpha: 0.5 }).unwrap();
        for backend in [Backend::PhiInversion, Backend::Ode] {
            let cfg = FlowConfig::with_backend(backend);
            for t in [0.05, 0.5, 2.0, 8.0] {
                for lambda in [1e-3, 0.5, 4.0, 100.0] {
                    let got = flow.u(t, lambda, &cfg).unwrap().value;
                    let want = lsm_half_flow(c, k, t, lambda);
                    assert!((got - want).abs() <= 1e-8 * want, "{backend:?} t={t} λ={lambda}: {got} vs {want}");
                }
            }
            let a = flow.a(3.0).unwrap();
            let want = lsm_half_flow(c, k, 3.0, 0.0);
            assert!((a - want).abs() <= 1e-9 * want);
        }
    }
}

#[test]
fn thm1i_limit_and_survival_from_brute_force_phi() {
    let mech = BranchingMechanism::TruncatedPareto {
        rho: 1.0,
        alpha: 0.5,
        h0: 1.0,
    };
    let flow = Flow::new(&mech).unwrap();
    // limit e^{-x ν(0,∞) Φ(λ)}, here ν(0,∞) = ρ = 1
    for lambda in [0.5f64, 2.0] {
        let phi = simpson(
            |s: f64| {
                if s == 0.0 {
                    2.0 / std::f64::consts::PI.sqrt()
                } else {
                    2.0 * s / -mech.psi(s * s).unwrap()
                }
            },
            0.0,
            lambda.sqrt(),
            4000,
        );
        let want = (-1.5 * phi).exp();
        let got = limit_thm1i(&flow, 1.5, lambda).unwrap();
        assert!((got - want).abs() < 1e-8);
    }
    // the conditional transform is exp(-x(u(t,λ) - a_t)) by definition
    let cfg = FlowConfig::default();
    let (t, lambda) = (2.0, 0.8);
    let direct = (-(flow.u(t, lambda, &cfg).unwrap().value - flow.a(t).unwrap())).exp();
    let got = conditional_laplace_explosive(&flow, 1.0, t, lambda).unwrap();
    assert!((got - direct).abs() < 1e-9);
}

/// `F(t, r)` for Sibuya(1/2) offspring at rate 1: `w = √(1 - F)` solves
/// `w' = (1 - w)/2`.
fn sibuya_half_pgf(t: f64, r: f64) -> f64 {
    let s = 1.0 - (1.0 - r).sqrt();
    1.0 - (1.0 - s * (-0.5 * t).exp()).powi(2)
}

#[test]
fn sibuya_generating_function_closed_form() {
    let d = DiscreteBranching::sibuya(1.0, 0.5);
    let flow = DsbpFlow::new(&d).unwrap();
    for t in [0.01, 0.3, 1.0, 4.0, 12.0] {
        for r in [1e-6, 0.1, 0.5, 0.9, 0.999, 1.0] {
            let got = flow.f(t, r).unwrap();
            let want = sibuya_half_pgf(t, r);
            assert!((got - want).abs() <= 1e-11, "t={t} r={r}: {got} vs {want}");
        }
    }
    assert!(flow.f(1.0, 0.0).is_err());
}

#[test]
fn second_qsd_is_the_squared_sibuya_law() {
    // (1 - √(1-r))² = 2 - r - 2√(1-r): μ₂(k) = -2 binom(1/2, k) (-1)^k for k >= 2
    let d = DiscreteBranching::sibuya(1.0, 0.5);
    let q = dsbp_qsd_pmf(&d, 2, 64).unwrap();
    assert_eq!(q.probability(1), 0.0);
    let mut binom = 1.0; // binom(1/2, k) (-1)^k
    for k in 1..=40usize {
        binom *= -(0.5 - (k as f64 - 1.0)) / k as f64;
        if k >= 2 {
            let want = -2.0 * binom;
            assert!((q.probability(k) - want).abs() <= 1e-12 * want.max(1e-300), "k = {k}");
        }
    }
}

#[test]
fn transition_pmf_generates_the_closed_form_pgf() {
    let d = DiscreteBranching::sibuya(1.0, 0.5);
    for t in [0.5, 3.0] {
        let p = dsbp_transition_pmf(&d, 1, t, 2048).unwrap();
        for r in [0.2f64, 0.6] {
            let pgf: f64 = p.iter().enumerate().map(|(k, pk)| pk * r.powi(k as i32)).sum();
            assert!((pgf - sibuya_half_pgf(t, r)).abs() < 1e-10, "t={t} r={r}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // the last bin holds the finite tail {K <= Z_t < ∞} plus the explosion mass
        let k = p.len() - 1;
        let tail = sibuya_half_pgf(t, 1.0) - p[1..k].iter().sum::<f64>();
        assert!(tail >= -1e-12 && tail <= p[k] + 1e-12, "t={t}: tail {tail}, last bin {}", p[k]);
    }
}

#[test]
fn feller_sampler_moments() {
    // Ψ(u) = c u²: E Z_t = x, Var Z_t = 2 c x t
    let (c, x, t) = (0.5, 2.0, 1.5);
    let z = simulate_feller(c, x, t, &SimConfig::new(11, 400_000, t)).unwrap();
    let mean = EstimateWithCI::mean_of(z.iter().copied()).unwrap();
    assert!(mean.z_score(x) < 4.0, "{mean:?}");
    let var = EstimateWithCI::mean_of(z.iter().map(|v| (v - x).powi(2))).unwrap();
    assert!(var.z_score(2.0 * c * x * t) < 4.0, "{var:?}");
}
