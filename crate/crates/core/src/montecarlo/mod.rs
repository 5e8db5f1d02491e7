//! Path simulation, conditioning by rejection and the estimators used to
//! check the limit theorems.
//!
//! Every path draws from its own ChaCha8 stream, keyed by the master seed
//! and selected by the path index, so results do not depend on how rayon
//! schedules the work.

mod csbp;
mod dsbp;
mod estimate;
mod feller;
mod jumps;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use csbp::{simulate_csbp, CsbpSimulator};
pub use dsbp::{simulate_dsbp, DsbpSimulator, OffspringSampler};
pub use estimate::{empirical_laplace, empirical_pgf, EstimateWithCI};
pub use feller::simulate_feller;
pub use jumps::JumpSampler;

pub const MIN_EXPLOSION_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_paths: usize,
    /// Explosion is declared once the state exceeds this level.
    #[serde(default = "default_threshold")]
    pub explosion_threshold: f64,
    pub horizon: f64,
    /// Jumps below this size are dropped for infinite-activity `ν`.
    #[serde(default = "default_cutoff")]
    pub small_jump_cutoff: f64,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    /// Worker threads; 0 uses the global rayon pool.
    #[serde(default, skip_serializing)]
    pub threads: usize,
}

fn default_threshold() -> f64 {
    1e12
}

fn default_cutoff() -> f64 {
    1e-4
}

fn default_max_events() -> u64 {
    50_000_000
}

impl SimConfig {
    pub fn new(seed: u64, n_paths: usize, horizon: f64) -> Self {
        SimConfig {
            seed,
            n_paths,
            explosion_threshold: default_threshold(),
            horizon,
            small_jump_cutoff: default_cutoff(),
            max_events: default_max_events(),
            threads: 0,
        }
    }

    pub fn with_threshold(mut self, m: f64) -> Self {
        self.explosion_threshold = m;
        self
    }

    pub fn with_cutoff(mut self, eps: f64) -> Self {
        self.small_jump_cutoff = eps;
        self
    }

    pub fn with_max_events(mut self, n: u64) -> Self {
        self.max_events = n;
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if !(self.explosion_threshold >= MIN_EXPLOSION_THRESHOLD) {
            return Err(Error::Config(format!(
                "explosion threshold must be >= {MIN_EXPLOSION_THRESHOLD:e}, got {}",
                self.explosion_threshold
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.small_jump_cutoff > 0.0 && self.small_jump_cutoff.is_finite()) {
            return Err(Error::Config(format!(
                "small-jump cutoff must be positive, got {}",
                self.small_jump_cutoff
            )));
        }
        if self.max_events == 0 {
            return Err(Error::Config("max_events must be at least 1".into()));
        }
        Ok(())
    }

    /// The generator of path `index`.
    pub fn path_rng(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }
}

/// State of a path at the end of its simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathFlag {
    Alive,
    Extinct,
    Exploded,
    /// The event budget ran out first.
    Inconclusive,
}

impl PathFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathFlag::Alive => "alive",
            PathFlag::Extinct => "extinct",
            PathFlag::Exploded => "exploded",
            PathFlag::Inconclusive => "inconclusive",
        }
    }
}

/// Outcome of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    /// State at each requested time: `+∞` after explosion, NaN once the
    /// path became inconclusive.
    pub states: Vec<f64>,
    pub flag: PathFlag,
    pub explosion_time: Option<f64>,
    pub events: u64,
}

/// Paths sampled at a common list of times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub times: Vec<f64>,
    pub initial_state: f64,
    pub paths: Vec<PathRecord>,
    pub seed: u64,
    pub config_hash: String,
}

impl TrajectoryEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    fn time_index(&self, t: f64) -> Result<Option<usize>> {
        if t == 0.0 {
            return Ok(None);
        }
        self.times
            .iter()
            .position(|&s| s == t)
            .map(Some)
            .ok_or_else(|| Error::domain(format!("time {t} was not sampled")))
    }

    /// States at `t` (which must be one of the sampled times, or 0).
    pub fn states_at(&self, t: f64) -> Result<Vec<f64>> {
        Ok(match self.time_index(t)? {
            None => vec![self.initial_state; self.paths.len()],
            Some(i) => self.paths.iter().map(|p| p.states[i]).collect(),
        })
    }

    pub fn count(&self, flag: PathFlag) -> usize {
        self.paths.iter().filter(|p| p.flag == flag).count()
    }

    pub fn total_events(&self) -> u64 {
        self.paths.iter().map(|p| p.events).sum()
    }

    /// Mean explosion time over the paths that exploded.
    pub fn mean_explosion_time(&self) -> Option<f64> {
        let times: Vec<f64> = self.paths.iter().filter_map(|p| p.explosion_time).collect();
        if times.is_empty() {
            None
        } else {
            Some(times.iter().sum::<f64>() / times.len() as f64)
        }
    }
}

/// States at an observation time of the paths that survived a
/// conditioning time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedSample {
    pub observe_at: f64,
    pub survive_past: f64,
    pub states: Vec<f64>,
    pub accepted: usize,
    /// Includes the inconclusive paths.
    pub rejected: usize,
    pub inconclusive: usize,
    pub acceptance_rate: EstimateWithCI,
}

fn alive(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// Keep the paths with `T > t`.
pub fn conditional_ensemble(ens: &TrajectoryEnsemble, t: f64) -> Result<ConditionedSample> {
    condition_on_survival(ens, t, t)
}

/// States at `observe_at` of the paths with `T > survive_past`.
pub fn condition_on_survival(ens: &TrajectoryEnsemble, observe_at: f64, survive_past: f64) -> Result<ConditionedSample> {
    if survive_past < observe_at {
        return Err(Error::domain("the conditioning time must not precede the observation time"));
    }
    let observed = ens.states_at(observe_at)?;
    let survival = ens.states_at(survive_past)?;
    let mut states = Vec::new();
    let mut inconclusive = 0;
    for (z, s) in observed.iter().zip(&survival) {
        if s.is_nan() {
            inconclusive += 1;
        } else if alive(*s) {
            states.push(*z);
        }
    }
    let n = ens.paths.len();
    let accepted = states.len();
    if accepted == 0 {
        return Err(Error::StatisticalPower(format!(
            "no path out of {n} survived past t = {survive_past}"
        )));
    }
    Ok(ConditionedSample {
        observe_at,
        survive_past,
        states,
        accepted,
        rejected: n - accepted,
        inconclusive,
        acceptance_rate: EstimateWithCI::proportion(accepted, n),
    })
}

/// SHA-256 of the canonical JSON of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    // serde_json writes struct fields in declaration order and maps in key
    // order, which makes the text canonical for our types
    let text = serde_json::to_string(value).expect("configuration serialises");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Run `f` on every path index, in parallel, collecting in index order.
pub(crate) fn run_paths<T, F>(cfg: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng) -> T + Sync,
{
    let work = || {
        (0..cfg.n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = cfg.path_rng(i);
                f(i, &mut rng)
            })
            .collect::<Vec<T>>()
    };
    if cfg.threads == 0 {
        Ok(work())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        Ok(pool.install(work))
    }
}

pub(crate) fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    if times.is_empty() {
        return Err(Error::domain("at least one sampling time is needed"));
    }
    if times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::domain("sampling times must be positive and finite"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("sampling times must be strictly increasing"));
    }
    if *times.last().unwrap() > horizon {
        return Err(Error::domain(format!(
            "sampling time {} lies beyond the horizon {horizon}",
            times.last().unwrap()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
pub(crate) struct HashInput<'a, M: Serialize> {
    pub kind: &'a str,
    pub model: &'a M,
    pub initial_state: f64,
    pub times: &'a [f64],
    pub config: &'a SimConfig,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_scheduling() {
        let cfg = SimConfig::new(9, 64, 1.0);
        let serial: Vec<f64> = (0..64).map(|i| cfg.path_rng(i).random::<f64>()).collect();
        let parallel = run_paths(&cfg.clone().with_threads(3), |_, rng| rng.random::<f64>()).unwrap();
        assert_eq!(serial, parallel);
        assert_ne!(serial[0], serial[1]);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(1, 10, 1.0).validate().is_ok());
        assert!(SimConfig::new(1, 0, 1.0).validate().is_err());
        assert!(SimConfig::new(1, 10, 1.0).with_threshold(1e5).validate().is_err());
        assert!(SimConfig::new(1, 10, 1.0).with_cutoff(0.0).validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = SimConfig::new(1, 10, 1.0);
        assert_eq!(config_hash(&a), config_hash(&a.clone().with_threads(4)));
        assert_ne!(config_hash(&a), config_hash(&SimConfig::new(2, 10, 1.0)));
    }
}
