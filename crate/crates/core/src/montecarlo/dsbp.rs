use rand::Rng;
use rand_distr::Exp1;
use statrs::function::gamma::ln_gamma;

use super::{check_times, config_hash, run_paths, HashInput, PathFlag, PathRecord, SimConfig, TrajectoryEnsemble};
use crate::discrete::{DiscreteBranching, Offspring};
use crate::error::{Error, Result};

const SIBUYA_TABLE: usize = 1 << 14;

/// Offspring draws conditioned on `ξ ≠ 1`.
///
/// Sibuya draws invert the survival function `S(k) = Π_{j≤k}(1 - α/j)`:
/// a table below `2^14`, and beyond it a search on `ln S(k)` written with
/// log-gamma functions. Draws past `2^63` saturate, which only matters
/// above any explosion threshold in use.
#[derive(Debug, Clone)]
pub enum OffspringSampler {
    Finite { values: Vec<u64>, cumulative: Vec<f64> },
    Sibuya { alpha: f64, survival: Vec<f64>, ln_gamma_tail: f64 },
}

impl OffspringSampler {
    pub fn new(d: &DiscreteBranching) -> Result<Self> {
        d.validate()?;
        Ok(match &d.offspring {
            Offspring::Finite { pmf } => {
                let mut values = Vec::new();
                let mut cumulative = Vec::new();
                let mut total = 0.0;
                for (k, p) in pmf.iter().enumerate() {
                    if k == 1 || *p == 0.0 {
                        continue;
                    }
                    total += p;
                    values.push(k as u64);
                    cumulative.push(total);
                }
                for c in cumulative.iter_mut() {
                    *c /= total.max(f64::MIN_POSITIVE);
                }
                OffspringSampler::Finite { values, cumulative }
            }
            Offspring::Sibuya { alpha } => {
                let mut survival = vec![1.0; SIBUYA_TABLE + 1];
                for k in 1..=SIBUYA_TABLE {
                    survival[k] = survival[k - 1] * (1.0 - alpha / k as f64);
                }
                OffspringSampler::Sibuya {
                    alpha: *alpha,
                    survival,
                    ln_gamma_tail: ln_gamma(1.0 - alpha),
                }
            }
        })
    }

    /// `ln S(k)` for the Sibuya law.
    fn ln_survival(alpha: f64, ln_gamma_tail: f64, k: f64) -> f64 {
        ln_gamma(k + 1.0 - alpha) - ln_gamma_tail - ln_gamma(k + 1.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            OffspringSampler::Finite { values, cumulative } => {
                if values.is_empty() {
                    return 1;
                }
                let u = rng.random::<f64>();
                let i = cumulative.partition_point(|&c| c <= u).min(values.len() - 1);
                values[i]
            }
            OffspringSampler::Sibuya {
                alpha,
                survival,
                ln_gamma_tail,
            } => {
                // X = min{k : S(k) < V} with V uniform on (0, S(1)]
                let v = (1.0 - rng.random::<f64>()) * survival[1];
                if v > survival[SIBUYA_TABLE] {
                    return survival.partition_point(|&s| s >= v) as u64;
                }
                let ln_v = v.ln();
                let mut lo = SIBUYA_TABLE as f64;
                let mut hi = 2.0 * lo;
                let cap = 2f64.powi(63);
                while Self::ln_survival(*alpha, *ln_gamma_tail, hi) >= ln_v {
                    lo = hi;
                    hi *= 2.0;
                    if hi >= cap {
                        return u64::MAX;
                    }
                }
                // S(lo) >= V > S(hi)
                while hi - lo > 1.0 {
                    let mid = (0.5 * (lo + hi)).floor();
                    if Self::ln_survival(*alpha, *ln_gamma_tail, mid) >= ln_v {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi as u64
            }
        }
    }
}

/// Population-level Gillespie sampler for a DSBP. Events that replace an
/// individual by exactly one child change nothing and are thinned out.
#[derive(Debug, Clone)]
pub struct DsbpSimulator {
    /// `c (1 - ξ(1))`.
    rate: f64,
    offspring: OffspringSampler,
}

impl DsbpSimulator {
    pub fn new(d: &DiscreteBranching) -> Result<Self> {
        Ok(DsbpSimulator {
            rate: d.c * (1.0 - d.xi(1)),
            offspring: OffspringSampler::new(d)?,
        })
    }

    pub fn path<R: Rng + ?Sized>(&self, n0: u64, times: &[f64], threshold: f64, max_events: u64, rng: &mut R) -> PathRecord {
        let end = *times.last().unwrap();
        let mut states = Vec::with_capacity(times.len());
        let mut n = n0;
        let mut s = 0.0;
        let mut events = 0u64;
        let finish = |mut states: Vec<f64>, fill: f64, flag, explosion_time, events| {
            states.resize(times.len(), fill);
            PathRecord {
                states,
                flag,
                explosion_time,
                events,
            }
        };
        loop {
            if events >= max_events {
                return finish(states, f64::NAN, PathFlag::Inconclusive, None, events);
            }
            let gap = if self.rate == 0.0 {
                f64::INFINITY
            } else {
                let e: f64 = rng.sample(Exp1);
                e / (self.rate * n as f64)
            };
            let t_next = s + gap;
            while states.len() < times.len() && times[states.len()] < t_next {
                states.push(n as f64);
            }
            if t_next > end {
                return finish(states, f64::NAN, PathFlag::Alive, None, events);
            }
            let children = self.offspring.sample(rng);
            n = (n - 1).saturating_add(children);
            s = t_next;
            events += 1;
            if n == 0 {
                return finish(states, 0.0, PathFlag::Extinct, None, events);
            }
            if n as f64 > threshold {
                return finish(states, f64::INFINITY, PathFlag::Exploded, Some(s), events);
            }
        }
    }
}

/// Simulate `n_paths` DSBP paths from `n0` individuals, sampled at `times`.
pub fn simulate_dsbp(d: &DiscreteBranching, n0: u64, times: &[f64], cfg: &SimConfig) -> Result<TrajectoryEnsemble> {
    cfg.validate()?;
    check_times(times, cfg.horizon)?;
    if n0 == 0 {
        return Err(Error::domain("the initial population must be positive"));
    }
    let sim = DsbpSimulator::new(d)?;
    let paths = run_paths(cfg, |_, rng| sim.path(n0, times, cfg.explosion_threshold, cfg.max_events, rng))?;
    Ok(TrajectoryEnsemble {
        times: times.to_vec(),
        initial_state: n0 as f64,
        paths,
        seed: cfg.seed,
        config_hash: config_hash(&HashInput {
            kind: "dsbp",
            model: d,
            initial_state: n0 as f64,
            times,
            config: cfg,
        }),
    })
}
