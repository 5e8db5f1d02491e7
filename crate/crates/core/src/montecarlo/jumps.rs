use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanism::NuComponent;

#[derive(Debug, Clone, Copy)]
enum Piece {
    Atom(f64),
    /// Density `∝ h^{-1-β}` on `(lo, hi)`, stored as `lo^{-β}` and `hi^{-β}`.
    Power { beta: f64, lo_pow: f64, hi_pow: f64 },
}

/// Draws jump sizes from `ν / ν(0, ∞)` for a finite Lévy measure.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    pieces: Vec<Piece>,
    /// Cumulative masses, last entry is `ν(0, ∞)`.
    cumulative: Vec<f64>,
}

impl JumpSampler {
    pub fn new(nu: &[NuComponent]) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for c in nu {
            let mass = c.total_mass();
            if !mass.is_finite() {
                return Err(Error::contract("jump sampling needs a finite Lévy measure"));
            }
            if mass == 0.0 {
                continue;
            }
            let piece = match *c {
                NuComponent::FiniteAtom { h, .. } => Piece::Atom(h),
                NuComponent::ParetoTail { exponent, cutoff, .. } => Piece::Power {
                    beta: exponent,
                    lo_pow: cutoff.powf(-exponent),
                    hi_pow: 0.0,
                },
                NuComponent::StableDensity { index, lower, upper, .. } => Piece::Power {
                    beta: index,
                    lo_pow: lower.unwrap_or(0.0).powf(-index),
                    hi_pow: upper.map_or(0.0, |u| u.powf(-index)),
                },
            };
            total += mass;
            pieces.push(piece);
            cumulative.push(total);
        }
        Ok(JumpSampler { pieces, cumulative })
    }

    pub fn total_rate(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = self.total_rate();
        let piece = if self.pieces.len() == 1 {
            self.pieces[0]
        } else {
            let target = rng.random::<f64>() * total;
            let i = self.cumulative.partition_point(|&c| c <= target).min(self.pieces.len() - 1);
            self.pieces[i]
        };
        match piece {
            Piece::Atom(h) => h,
            Piece::Power { beta, lo_pow, hi_pow } => {
                // invert the tail h^{-β} between the band ends
                let u = 1.0 - rng.random::<f64>();
                let x = hi_pow + u * (lo_pow - hi_pow);
                x.powf(-1.0 / beta)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pareto_tail_probabilities() {
        let s = JumpSampler::new(&[NuComponent::ParetoTail {
            scale: 0.5,
            exponent: 0.5,
            cutoff: 1.0,
        }])
        .unwrap();
        assert!((s.total_rate() - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let above = (0..n).filter(|_| s.sample(&mut rng) > 4.0).count();
        let p = above as f64 / n as f64;
        // P(H > 4) = 4^{-1/2}
        assert!((p - 0.5).abs() < 4.0 * (0.25f64 / n as f64).sqrt(), "{p}");
    }

    #[test]
    fn banded_samples_stay_in_band() {
        let s = JumpSampler::new(&[
            NuComponent::StableDensity {
                scale: 1.0,
                index: 0.5,
                lower: Some(0.01),
                upper: Some(2.0),
            },
            NuComponent::FiniteAtom { h: 7.0, mass: 0.1 },
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let h = s.sample(&mut rng);
            assert!((0.01..=2.0).contains(&h) || h == 7.0, "{h}");
        }
    }

    #[test]
    fn infinite_mass_is_rejected() {
        let r = JumpSampler::new(&[NuComponent::StableDensity {
            scale: 1.0,
            index: 0.5,
            lower: None,
            upper: None,
        }]);
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
