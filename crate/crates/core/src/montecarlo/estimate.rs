use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A Monte Carlo mean with its CLT standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub estimate: f64,
    pub std_error: f64,
    pub n_effective: usize,
}

impl EstimateWithCI {
    /// Sample mean and `s / √n` of `values`.
    pub fn mean_of<I: IntoIterator<Item = f64>>(values: I) -> Result<Self> {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for v in values {
            if !v.is_finite() {
                return Err(Error::contract("estimator received a non-finite value"));
            }
            n += 1;
            let delta = v - mean;
            mean += delta / n as f64;
            m2 += delta * (v - mean);
        }
        if n == 0 {
            return Err(Error::contract("estimator needs at least one sample"));
        }
        let var = if n > 1 { (m2 / (n - 1) as f64).max(0.0) } else { 0.0 };
        Ok(EstimateWithCI {
            estimate: mean,
            std_error: (var / n as f64).sqrt(),
            n_effective: n,
        })
    }

    /// `k / n` with the binomial standard error.
    pub fn proportion(k: usize, n: usize) -> Self {
        let p = k as f64 / n as f64;
        EstimateWithCI {
            estimate: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n_effective: n,
        }
    }

    /// `estimate ± z · se`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.estimate - z * self.std_error, self.estimate + z * self.std_error)
    }

    /// `|estimate - target|` measured in standard errors; a zero standard
    /// error gives 0 on exact agreement and `∞` otherwise.
    pub fn z_score(&self, target: f64) -> f64 {
        let gap = (self.estimate - target).abs();
        if self.std_error > 0.0 {
            gap / self.std_error
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn check_samples(samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::contract("empty sample"));
    }
    if samples.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
        return Err(Error::contract(
            "samples must be finite and non-negative (condition out exploded paths first)",
        ));
    }
    Ok(())
}

/// Mean of `e^{-λZ}`.
pub fn empirical_laplace(samples: &[f64], lambda: f64) -> Result<EstimateWithCI> {
    check_samples(samples)?;
    if !(lambda >= 0.0) {
        return Err(Error::domain(format!("λ must be >= 0, got {lambda}")));
    }
    EstimateWithCI::mean_of(samples.iter().map(|z| (-lambda * z).exp()))
}

/// Mean of `r^Z`.
pub fn empirical_pgf(samples: &[f64], r: f64) -> Result<EstimateWithCI> {
    check_samples(samples)?;
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::domain(format!("r must lie in [0, 1], got {r}")));
    }
    EstimateWithCI::mean_of(samples.iter().map(|z| r.powf(*z)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_samples() {
        let e = empirical_laplace(&[0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!((e.estimate, e.std_error), (1.0, 0.0));
        assert!(empirical_laplace(&[0.0, f64::INFINITY], 1.0).is_err());
        assert!(empirical_laplace(&[], 1.0).is_err());
    }

    #[test]
    fn mean_and_error() {
        let e = EstimateWithCI::mean_of([1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.estimate, 2.5);
        assert!((e.std_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        let p = EstimateWithCI::proportion(25, 100);
        assert!((p.std_error - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-16);
        assert_eq!(p.z_score(0.25), 0.0);
    }

    #[test]
    fn pgf_of_constants() {
        let e = empirical_pgf(&[2.0, 2.0], 0.5).unwrap();
        assert_eq!(e.estimate, 0.25);
    }
}
