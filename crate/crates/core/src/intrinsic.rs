//! Intrinsic reward terms.
//!
//! The episodic term is the buffer growth `delta_m` from
//! [`expand`](crate::reachability::expand); the lifelong term is either a
//! visit-count bonus or a k-nearest-neighbour distance in a random embedding.
//! [`RewardKind`] picks how the two are combined.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::Observation;
use crate::hashing::HashCode;

/// Visit counts over the whole training run.
#[derive(Debug, Clone, Default)]
pub struct LifelongCount {
    counts: HashMap<HashCode, u64>,
}

impl LifelongCount {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self, code: HashCode) -> u64 {
        self.counts.get(&code).copied().unwrap_or(0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// Records a visit and returns `1 / sqrt(N)`, where `N` includes this visit.
    pub fn count_bonus(&mut self, code: HashCode) -> f64 {
        let n = self.counts.entry(code).or_insert(0);
        *n += 1;
        1.0 / (*n as f64).sqrt()
    }
}

pub fn count_bonus(counts: &mut LifelongCount, code: HashCode) -> f64 {
    counts.count_bonus(code)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Re3Params {
    pub k_nn: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for Re3Params {
    fn default() -> Self {
        Re3Params {
            k_nn: 3,
            dim: 16,
            seed: 0,
        }
    }
}

/// Fixed random linear encoder plus an append-only bank of embeddings.
#[derive(Debug, Clone)]
pub struct Re3Memory {
    input_dim: usize,
    dim: usize,
    k_nn: usize,
    // row-major, dim x input_dim
    encoder: Vec<f64>,
    // flat, one embedding of length `dim` after another
    bank: Vec<f64>,
}

impl Re3Memory {
    pub fn new(input_dim: usize, params: Re3Params) -> Result<Self> {
        if params.k_nn == 0 || params.dim == 0 || input_dim == 0 {
            return Err(Error::InvalidConfig(
                "RE3 needs k_nn, dim and input_dim >= 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let encoder = (0..params.dim * input_dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Ok(Re3Memory {
            input_dim,
            dim: params.dim,
            k_nn: params.k_nn,
            encoder,
            bank: Vec::new(),
        })
    }

    pub fn for_observations(params: Re3Params) -> Result<Self> {
        Self::new(crate::gridworld::OBS_BYTES, params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k_nn(&self) -> usize {
        self.k_nn
    }

    pub fn bank_len(&self) -> usize {
        self.bank.len() / self.dim
    }

    pub fn bank_entry(&self, i: usize) -> &[f64] {
        &self.bank[i * self.dim..(i + 1) * self.dim]
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                actual: x.len(),
            });
        }
        Ok(self
            .encoder
            .chunks_exact(self.input_dim)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect())
    }

    /// Euclidean distance from `y` to its `k_nn`-th nearest bank entry, or
    /// `None` while the bank holds fewer than `k_nn` entries.
    pub fn knn_distance(&self, y: &[f64]) -> Option<f64> {
        assert_eq!(y.len(), self.dim, "embedding width");
        let n = self.bank_len();
        if n < self.k_nn {
            return None;
        }
        let mut sq: Vec<f64> = self
            .bank
            .chunks_exact(self.dim)
            .map(|b| b.iter().zip(y).map(|(a, c)| (a - c) * (a - c)).sum())
            .collect();
        let (_, kth, _) = sq.select_nth_unstable_by(self.k_nn - 1, f64::total_cmp);
        Some(kth.sqrt())
    }

    /// `log(d + 1)` for the k-NN distance `d`, or 0 with too small a bank.
    pub fn bonus(&self, y: &[f64]) -> f64 {
        self.knn_distance(y).map_or(0.0, |d| d.ln_1p())
    }

    pub fn push(&mut self, y: &[f64]) {
        assert_eq!(y.len(), self.dim, "embedding width");
        self.bank.extend_from_slice(y);
    }

    /// Scores `obs` against the bank, then adds it.
    pub fn re3_bonus(&mut self, obs: &Observation) -> f64 {
        let y = self
            .encode(&obs.to_f64_vec())
            .expect("observation width matches encoder");
        let r = self.bonus(&y);
        self.push(&y);
        r
    }
}

/// How the episodic and lifelong terms combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// No intrinsic reward.
    Extrinsic,
    /// `delta_m * lifelong`.
    Gobi,
    /// `delta_m` alone.
    EpisodicOnly,
    /// `1{delta_m > 0} * lifelong`.
    Indicator,
    /// `lifelong` alone.
    LifelongOnly,
}

impl RewardKind {
    /// Whether the episodic buffer has to be maintained for this kind.
    pub fn uses_episodic(self) -> bool {
        matches!(
            self,
            RewardKind::Gobi | RewardKind::EpisodicOnly | RewardKind::Indicator
        )
    }

    pub fn uses_lifelong(self) -> bool {
        matches!(
            self,
            RewardKind::Gobi | RewardKind::Indicator | RewardKind::LifelongOnly
        )
    }
}

impl std::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "extrinsic" | "none" => RewardKind::Extrinsic,
            "gobi" => RewardKind::Gobi,
            "episodic_only" => RewardKind::EpisodicOnly,
            "indicator" => RewardKind::Indicator,
            "lifelong_only" => RewardKind::LifelongOnly,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown reward kind {other:?}"
                )))
            }
        })
    }
}

pub fn gobi_reward(delta_m: u64, lifelong: f64) -> f64 {
    delta_m as f64 * lifelong
}

/// Combines an episodic growth and an already computed lifelong bonus.
pub fn intrinsic_reward(kind: RewardKind, delta_m: u64, lifelong: f64) -> f64 {
    match kind {
        RewardKind::Extrinsic => 0.0,
        RewardKind::Gobi => gobi_reward(delta_m, lifelong),
        RewardKind::EpisodicOnly => delta_m as f64,
        RewardKind::Indicator => {
            if delta_m > 0 {
                lifelong
            } else {
                0.0
            }
        }
        RewardKind::LifelongOnly => lifelong,
    }
}

/// Count-based variant: records the visit to `obs_hash`, then combines.
pub fn ablation_reward(
    kind: RewardKind,
    delta_m: u64,
    obs_hash: HashCode,
    counts: &mut LifelongCount,
) -> f64 {
    let lifelong = counts.count_bonus(obs_hash);
    intrinsic_reward(kind, delta_m, lifelong)
}

/// `lambda0 * (1 - rho)^((e - 1) * horizon)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecaySchedule {
    pub lambda0: f64,
    pub rho: f64,
    pub horizon: u64,
}

impl DecaySchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda0 must be finite and >= 0, got {}",
                self.lambda0
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!(
                "rho must be in [0, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Coefficient for 1-based episode `e`.
    pub fn lambda(&self, episode: u64) -> f64 {
        assert!(episode >= 1, "episodes are numbered from 1");
        let exponent = ((episode - 1) * self.horizon) as f64;
        self.lambda0 * (exponent * (-self.rho).ln_1p()).exp()
    }
}

pub fn decayed_lambda(schedule: &DecaySchedule, episode: u64) -> f64 {
    schedule.lambda(episode)
}
