//! Episodic reachability buffer and its per-step expansion.
//!
//! Each step inserts the hash of the current observation, then the hashes of
//! observations a forward model predicts to be reachable within `k` steps.
//! The growth of the buffer is the episodic part of the intrinsic reward.

use std::collections::{HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::ForwardModel;
use crate::error::{Error, Result};
use crate::gridworld::Simulator;
use crate::hashing::HashCode;

/// Default bound on distinct states visited by exhaustive searches.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

/// Set of hash codes seen or predicted in the current episode.
#[derive(Debug, Clone, Default)]
pub struct EpisodicBuffer {
    codes: HashSet<HashCode>,
    insertions: u64,
}

impl EpisodicBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.codes.clear();
        self.insertions = 0;
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn contains(&self, code: HashCode) -> bool {
        self.codes.contains(&code)
    }

    /// Total insert attempts since the last reset, duplicates included.
    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn insert(&mut self, code: HashCode) -> bool {
        self.insertions += 1;
        self.codes.insert(code)
    }

    pub fn codes(&self) -> &HashSet<HashCode> {
        &self.codes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// One prediction per action from the current state; `k` must be 1.
    EnumerateAll,
    /// `n` independent rollouts of `k` uniformly drawn actions each.
    SampleRandom,
    /// Every action sequence of length `<= k`, deduplicated by model context.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionConfig {
    pub k: usize,
    pub n: usize,
    pub action_mode: ActionMode,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        ExpansionConfig {
            k: 1,
            n: 7,
            action_mode: ActionMode::EnumerateAll,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be >= 1".into()));
        }
        if self.action_mode == ActionMode::EnumerateAll && self.k > 1 {
            return Err(Error::UnsupportedExpansion(format!(
                "EnumerateAll only supports k = 1 (got k = {}); use SampleRandom",
                self.k
            )));
        }
        Ok(())
    }

    /// Largest possible buffer growth from one `expand` call, if bounded by
    /// the config alone.
    pub fn max_delta(&self, n_actions: usize) -> Option<u64> {
        match self.action_mode {
            ActionMode::EnumerateAll => Some(1 + n_actions as u64),
            ActionMode::SampleRandom => Some(1 + (self.k * self.n) as u64),
            ActionMode::Exhaustive => None,
        }
    }
}

/// Inserts the current observation and the predicted reachable observations,
/// returning how much the buffer grew.
///
/// The real next observation is not inserted here; it arrives as
/// `current_obs` on the following call.
pub fn expand<M, R>(
    buffer: &mut EpisodicBuffer,
    current_obs: HashCode,
    context: &M::Context,
    model: &M,
    config: &ExpansionConfig,
    rng: &mut R,
) -> Result<u64>
where
    M: ForwardModel,
    R: Rng + ?Sized,
{
    config.validate()?;
    let before = buffer.len();
    buffer.insert(current_obs);
    let actions = model.actions();

    match config.action_mode {
        ActionMode::EnumerateAll => {
            for &a in actions {
                if let Some(p) = model.predict_next(context, a) {
                    buffer.insert(p.observation);
                }
            }
        }
        ActionMode::SampleRandom => {
            for _ in 0..config.n {
                let mut ctx = context.clone();
                for _ in 0..config.k {
                    let a = actions[rng.random_range(0..actions.len())];
                    let Some(p) = model.predict_next(&ctx, a) else {
                        break;
                    };
                    buffer.insert(p.observation);
                    match p.next {
                        Some(next) => ctx = next,
                        None => break,
                    }
                }
            }
        }
        ActionMode::Exhaustive => {
            let mut seen: HashSet<M::Context> = HashSet::new();
            seen.insert(context.clone());
            let mut frontier = vec![context.clone()];
            for _ in 0..config.k {
                let mut next_frontier = Vec::new();
                for ctx in &frontier {
                    for &a in actions {
                        let Some(p) = model.predict_next(ctx, a) else {
                            continue;
                        };
                        buffer.insert(p.observation);
                        if let Some(next) = p.next {
                            if seen.insert(next.clone()) {
                                next_frontier.push(next);
                            }
                        }
                    }
                }
                if seen.len() > DEFAULT_STATE_CAP {
                    return Err(Error::StateCapExceeded {
                        cap: DEFAULT_STATE_CAP,
                    });
                }
                frontier = next_frontier;
            }
        }
    }
    Ok((buffer.len() - before) as u64)
}

/// Observation hashes of every true state reachable within `k` steps,
/// including the start state, by breadth-first search over the simulator.
pub fn bfs_reachable<S: Simulator>(
    start: &S,
    k: usize,
    state_cap: usize,
) -> Result<HashSet<HashCode>> {
    let mut codes = HashSet::new();
    codes.insert(start.observation_code());
    let mut visited: HashSet<S> = HashSet::new();
    visited.insert(start.clone());
    let mut queue = VecDeque::from([(start.clone(), 0usize)]);

    while let Some((state, depth)) = queue.pop_front() {
        if depth == k || state.is_terminal() {
            continue;
        }
        for &a in state.action_set() {
            let mut next = state.clone();
            next.advance(a);
            codes.insert(next.observation_code());
            if !visited.contains(&next) {
                if visited.len() >= state_cap {
                    return Err(Error::StateCapExceeded { cap: state_cap });
                }
                visited.insert(next.clone());
                queue.push_back((next, depth + 1));
            }
        }
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{OracleDynamics, OutputMode, TabularDynamics};
    use crate::gridworld::{Action, EnvSpec, GridEnv, PositionWorld};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn open3() -> PositionWorld {
        PositionWorld::from_ascii("...\n.A.\n...").unwrap()
    }

    fn code(w: &PositionWorld) -> HashCode {
        w.observation_code()
    }

    #[test]
    fn bfs_depth_zero_is_current_observation() {
        let w = open3();
        assert_eq!(
            bfs_reachable(&w, 0, 100).unwrap(),
            HashSet::from([code(&w)])
        );
    }

    #[test]
    fn bfs_depth_one_is_von_neumann_neighbourhood() {
        assert_eq!(bfs_reachable(&open3(), 1, 100).unwrap().len(), 5);
    }

    #[test]
    fn bfs_respects_cap() {
        let w = PositionWorld::from_ascii(".........\n....A....\n.........").unwrap();
        assert!(matches!(
            bfs_reachable(&w, 10, 3),
            Err(Error::StateCapExceeded { cap: 3 })
        ));
    }

    #[test]
    fn grid_one_step_bound() {
        let spec = EnvSpec::KeyCorridor {
            room_size: 4,
            rows: 3,
        };
        for seed in 0..20 {
            let env = spec.generate(seed).unwrap();
            assert!(bfs_reachable(&env, 1, 1000).unwrap().len() <= 8);
        }
    }

    #[test]
    fn enumerate_all_rejects_multi_step() {
        let w = open3();
        let cfg = ExpansionConfig {
            k: 2,
            n: 1,
            action_mode: ActionMode::EnumerateAll,
        };
        let mut buf = EpisodicBuffer::new();
        let err = expand(
            &mut buf,
            code(&w),
            &w,
            &OracleDynamics::new(&w),
            &cfg,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(err, Err(Error::UnsupportedExpansion(_))));
    }

    #[test]
    fn repeated_expansion_from_same_state_adds_nothing() {
        let w = open3();
        let oracle = OracleDynamics::new(&w);
        let cfg = ExpansionConfig {
            k: 1,
            n: 1,
            action_mode: ActionMode::EnumerateAll,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = EpisodicBuffer::new();
        assert_eq!(
            expand(&mut buf, code(&w), &w, &oracle, &cfg, &mut rng).unwrap(),
            5
        );
        assert_eq!(
            expand(&mut buf, code(&w), &w, &oracle, &cfg, &mut rng).unwrap(),
            0
        );
    }

    #[test]
    fn reset_clears_previous_episode() {
        let w = open3();
        let oracle = OracleDynamics::new(&w);
        let cfg = ExpansionConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut buf = EpisodicBuffer::new();
        expand(&mut buf, code(&w), &w, &oracle, &cfg, &mut rng).unwrap();
        buf.reset();
        assert_eq!(buf.len(), 0);
        assert!(!buf.contains(code(&w)));
        assert!(expand(&mut buf, code(&w), &w, &oracle, &cfg, &mut rng).unwrap() >= 1);
    }

    #[test]
    fn sample_random_delta_is_bounded() {
        let env = EnvSpec::MultiRoom {
            n_rooms: 2,
            max_room_size: 5,
        }
        .generate(3)
        .unwrap();
        let oracle = OracleDynamics::for_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (k, n) in [(1, 3), (2, 5), (3, 2)] {
            let cfg = ExpansionConfig {
                k,
                n,
                action_mode: ActionMode::SampleRandom,
            };
            let mut buf = EpisodicBuffer::new();
            let d = expand(
                &mut buf,
                env.observe().code(),
                &env,
                &oracle,
                &cfg,
                &mut rng,
            )
            .unwrap();
            assert!(d >= 1 && d <= cfg.max_delta(7).unwrap());
        }
    }

    #[test]
    fn model_without_predictions_gives_first_visit_novelty() {
        let env = EnvSpec::MultiRoom {
            n_rooms: 2,
            max_room_size: 5,
        }
        .generate(3)
        .unwrap();
        let model = TabularDynamics::new(OutputMode::Pano);
        let cfg = ExpansionConfig {
            k: 2,
            n: 4,
            action_mode: ActionMode::SampleRandom,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut buf = EpisodicBuffer::new();
        let mut e: GridEnv = env.clone();
        for i in 0..40 {
            let obs = e.observe().code();
            let was_new = !buf.contains(obs);
            let d = expand(&mut buf, obs, &e.panorama().code(), &model, &cfg, &mut rng).unwrap();
            assert_eq!(d, u64::from(was_new));
            e.step(Action::ALL[i % 3]).unwrap();
        }
    }

    #[test]
    fn exhaustive_oracle_matches_bfs_on_open_grid() {
        let w = PositionWorld::from_ascii(".......\n.......\n...A...\n.......\n.......").unwrap();
        let oracle = OracleDynamics::new(&w);
        for k in 1..=3 {
            let cfg = ExpansionConfig {
                k,
                n: 1,
                action_mode: ActionMode::Exhaustive,
            };
            let mut buf = EpisodicBuffer::new();
            expand(
                &mut buf,
                code(&w),
                &w,
                &oracle,
                &cfg,
                &mut ChaCha8Rng::seed_from_u64(0),
            )
            .unwrap();
            assert_eq!(buf.codes(), &bfs_reachable(&w, k, 1000).unwrap());
        }
    }
}
