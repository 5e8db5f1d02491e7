use rand::Rng;
use rand_distr::Exp1;

use super::jumps::JumpSampler;
use super::{check_times, config_hash, run_paths, HashInput, PathFlag, PathRecord, SimConfig, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::mechanism::BranchingMechanism;

/// Event-driven sampler for a finite-variation CSBP: between jumps the
/// state follows `z e^{-Ds}`, jumps of law `ν/ν(0,∞)` arrive at rate
/// `Z ν(0,∞)`.
#[derive(Debug, Clone)]
pub struct CsbpSimulator {
    mech: BranchingMechanism,
    simulated: BranchingMechanism,
    drift: f64,
    jumps: JumpSampler,
    cutoff: Option<f64>,
    drift_defect: f64,
}

impl CsbpSimulator {
    /// Truncates `ν` at `eps` when it has infinite mass.
    pub fn new(mech: &BranchingMechanism, eps: f64) -> Result<Self> {
        let (drift, nu) = mech.finite_variation_form()?;
        let infinite = nu.iter().any(|c| !c.total_mass().is_finite());
        let (simulated, cutoff, drift_defect, nu) = if infinite {
            let t = mech.truncated(eps)?;
            let nu = match &t {
                BranchingMechanism::General { nu, .. } => nu.clone(),
                _ => unreachable!(),
            };
            (t, Some(eps), mech.small_jump_drift(eps)?, nu)
        } else {
            (mech.clone(), None, 0.0, nu)
        };
        Ok(CsbpSimulator {
            mech: mech.clone(),
            simulated,
            drift,
            jumps: JumpSampler::new(&nu)?,
            cutoff,
            drift_defect,
        })
    }

    pub fn mechanism(&self) -> &BranchingMechanism {
        &self.mech
    }

    /// The mechanism whose law the paths follow exactly: `mech` itself, or
    /// its truncation when `ν` has infinite mass.
    pub fn simulated_mechanism(&self) -> &BranchingMechanism {
        &self.simulated
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    /// `∫_0^ε h ν(dh)`, zero without truncation.
    pub fn drift_defect(&self) -> f64 {
        self.drift_defect
    }

    pub fn jump_rate(&self) -> f64 {
        self.jumps.total_rate()
    }

    pub fn path<R: Rng + ?Sized>(&self, x: f64, times: &[f64], threshold: f64, max_events: u64, rng: &mut R) -> PathRecord {
        let d = self.drift;
        let rate = self.jumps.total_rate();
        let end = *times.last().unwrap();
        let mut states = Vec::with_capacity(times.len());
        let mut z = x;
        let mut s = 0.0;
        let mut events = 0u64;
        let flow = |z: f64, dt: f64| if d == 0.0 { z } else { z * (-d * dt).exp() };
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
            let gap = if rate == 0.0 {
                f64::INFINITY
            } else {
                let e: f64 = rng.sample(Exp1);
                let load = e / (rate * z);
                if d == 0.0 {
                    load
                } else {
                    // ∫_0^τ z e^{-Dr} dr · rate = e
                    let arg = -d * load;
                    if arg <= -1.0 {
                        f64::INFINITY
                    } else {
                        -arg.ln_1p() / d
                    }
                }
            };
            let t_next = s + gap;
            let t_cross = if d < 0.0 && z <= threshold {
                s + (threshold / z).ln() / -d
            } else {
                f64::INFINITY
            };
            let stop = t_next.min(t_cross);
            while states.len() < times.len() && times[states.len()] < stop {
                states.push(flow(z, times[states.len()] - s));
            }
            if t_cross <= t_next && t_cross <= end {
                return finish(states, f64::INFINITY, PathFlag::Exploded, Some(t_cross), events);
            }
            if t_next > end {
                return finish(states, f64::NAN, PathFlag::Alive, None, events);
            }
            z = flow(z, gap) + self.jumps.sample(rng);
            s = t_next;
            events += 1;
            if z > threshold {
                return finish(states, f64::INFINITY, PathFlag::Exploded, Some(s), events);
            }
        }
    }
}

/// Simulate `n_paths` CSBP paths from `x`, sampled at `times`.
pub fn simulate_csbp(mech: &BranchingMechanism, x: f64, times: &[f64], cfg: &SimConfig) -> Result<TrajectoryEnsemble> {
    cfg.validate()?;
    check_times(times, cfg.horizon)?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("initial state must be positive, got {x}")));
    }
    let sim = CsbpSimulator::new(mech, cfg.small_jump_cutoff)?;
    let paths = run_paths(cfg, |_, rng| sim.path(x, times, cfg.explosion_threshold, cfg.max_events, rng))?;
    Ok(TrajectoryEnsemble {
        times: times.to_vec(),
        initial_state: x,
        paths,
        seed: cfg.seed,
        config_hash: config_hash(&HashInput {
            kind: "csbp",
            model: mech,
            initial_state: x,
            times,
            config: cfg,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_drift_is_deterministic() {
        let mech = BranchingMechanism::LinearDrift { d: -1.0 };
        let cfg = SimConfig::new(1, 4, 3.0);
        let ens = simulate_csbp(&mech, 1.0, &[1.0, 2.0, 3.0], &cfg).unwrap();
        for p in &ens.paths {
            assert_eq!(p.flag, PathFlag::Alive);
            for (z, t) in p.states.iter().zip([1.0f64, 2.0, 3.0]) {
                assert!((z - t.exp()).abs() < 1e-14 * t.exp());
            }
        }
    }

    #[test]
    fn drift_crossing_counts_as_explosion() {
        let mech = BranchingMechanism::LinearDrift { d: -1.0 };
        let cfg = SimConfig::new(1, 1, 40.0).with_threshold(1e6);
        let ens = simulate_csbp(&mech, 1.0, &[10.0, 40.0], &cfg).unwrap();
        let p = &ens.paths[0];
        assert_eq!(p.flag, PathFlag::Exploded);
        assert!((p.explosion_time.unwrap() - 1e6f64.ln()).abs() < 1e-12);
        assert_eq!(p.states[1], f64::INFINITY);
    }

    #[test]
    fn event_budget_marks_inconclusive() {
        let mech = BranchingMechanism::TruncatedPareto {
            rho: 1.0,
            alpha: 0.5,
            h0: 1.0,
        };
        let cfg = SimConfig::new(1, 20, 5.0).with_max_events(2);
        let ens = simulate_csbp(&mech, 1.0, &[5.0], &cfg).unwrap();
        assert!(ens.count(PathFlag::Inconclusive) > 0);
        assert!(ens.paths.iter().filter(|p| p.flag == PathFlag::Inconclusive).all(|p| p.states[0].is_nan()));
    }

    #[test]
    fn infinite_activity_is_truncated() {
        let mech = BranchingMechanism::StableMinus { k: 1.0, alpha: 0.5 };
        let sim = CsbpSimulator::new(&mech, 1e-4).unwrap();
        assert_eq!(sim.cutoff(), Some(1e-4));
        assert!(sim.drift_defect() > 0.0);
        assert!(sim.jump_rate().is_finite());
        let feller = BranchingMechanism::StablePlus { c: 1.0, alpha: 1.0 };
        assert!(matches!(CsbpSimulator::new(&feller, 1e-4), Err(Error::Contract(_))));
    }
}
