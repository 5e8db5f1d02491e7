use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use super::{run_paths, SimConfig};
use crate::error::{Error, Result};

fn transition<R: Rng + ?Sized>(c: f64, x: f64, t: f64, rng: &mut R) -> f64 {
    let mean = x / (c * t);
    if mean == 0.0 {
        return 0.0;
    }
    let j: f64 = Poisson::new(mean).expect("positive Poisson mean").sample(rng);
    if j == 0.0 {
        0.0
    } else {
        Gamma::new(j, c * t).expect("positive Gamma parameters").sample(rng)
    }
}

/// Exact draws of `Z_t` for `Ψ(u) = cu²` started at `x`: a Poisson(x/(ct))
/// number of Exp(ct) clusters.
pub fn simulate_feller(c: f64, x: f64, t: f64, cfg: &SimConfig) -> Result<Vec<f64>> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("c must be positive, got {c}")));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("x must be finite and >= 0, got {x}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain(format!("t must be positive, got {t}")));
    }
    if cfg.n_paths == 0 {
        return Err(Error::Config("n_paths must be at least 1".into()));
    }
    run_paths(cfg, |_, rng| transition(c, x, t, rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_start_stays_at_zero() {
        let z = simulate_feller(1.0, 0.0, 1.0, &SimConfig::new(1, 100, 1.0)).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reproducible() {
        let cfg = SimConfig::new(11, 1000, 1.0);
        let a = simulate_feller(1.0, 1.0, 1.0, &cfg).unwrap();
        let b = simulate_feller(1.0, 1.0, 1.0, &cfg.clone().with_threads(2)).unwrap();
        assert_eq!(a, b);
    }
}
