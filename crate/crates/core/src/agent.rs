//! Tabular Q-learning over observation hashes, driven by extrinsic plus
//! decayed intrinsic reward.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    collect_random_transitions, train_tabular, OracleDynamics, OutputMode, TabularDynamics,
    TransitionRecord,
};
use crate::error::{Error, Result};
use crate::gridworld::{
    keycorridor_max_steps, multiroom_max_steps, Action, EnvSpec, GridEnv, Panorama, NUM_ACTIONS,
};
use crate::hashing::HashCode;
use crate::intrinsic::{
    intrinsic_reward, DecaySchedule, LifelongCount, Re3Memory, Re3Params, RewardKind,
};
use crate::reachability::{expand, EpisodicBuffer, ExpansionConfig};

/// Q-values per observation hash; unseen entries read as zero.
#[derive(Debug, Clone)]
pub struct QTable {
    q: HashMap<HashCode, [f64; NUM_ACTIONS]>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(alpha: f64, gamma: f64) -> Self {
        QTable {
            q: HashMap::new(),
            alpha,
            gamma,
        }
    }

    pub fn values(&self, state: HashCode) -> [f64; NUM_ACTIONS] {
        self.q.get(&state).copied().unwrap_or([0.0; NUM_ACTIONS])
    }

    pub fn get(&self, state: HashCode, action: Action) -> f64 {
        self.values(state)[action.index()]
    }

    pub fn set(&mut self, state: HashCode, action: Action, value: f64) {
        self.q.entry(state).or_insert([0.0; NUM_ACTIONS])[action.index()] = value;
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Highest-valued action; ties go to the lowest action index.
    pub fn greedy(&self, state: HashCode) -> Action {
        let v = self.values(state);
        let mut best = 0;
        for i in 1..NUM_ACTIONS {
            if v[i] > v[best] {
                best = i;
            }
        }
        Action::ALL[best]
    }

    pub fn max_value(&self, state: HashCode) -> f64 {
        self.values(state)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// With probability `epsilon` a uniform action, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    state: HashCode,
    epsilon: f64,
    rng: &mut R,
) -> Action {
    if rng.random::<f64>() < epsilon {
        Action::ALL[rng.random_range(0..NUM_ACTIONS)]
    } else {
        q.greedy(state)
    }
}

/// One-step Q-learning; no bootstrap from terminal transitions.
pub fn q_update(
    q: &mut QTable,
    state: HashCode,
    action: Action,
    reward: f64,
    next: HashCode,
    done: bool,
) {
    let target = if done {
        reward
    } else {
        reward + q.gamma * q.max_value(next)
    };
    let old = q.get(state, action);
    q.set(state, action, old + q.alpha * (target - old));
}

/// Linear anneal from `start` to `end` over the first `fraction` of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            fraction: 0.2,
        }
    }
}

impl EpsilonSchedule {
    /// Epsilon for 0-based `episode` out of `total`.
    pub fn value(&self, episode: usize, total: usize) -> f64 {
        let span = self.fraction * total as f64;
        if span <= 0.0 {
            return self.end;
        }
        let t = episode as f64 / span;
        if t >= 1.0 {
            return self.end;
        }
        self.start + (self.end - self.start) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsBackend {
    Oracle,
    TabularPretrained,
    TabularOnline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifelongKind {
    Count,
    Re3(Re3Params),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub env: EnvSpec,
    pub reward: RewardKind,
    pub lifelong: LifelongKind,
    pub dynamics: DynamicsBackend,
    pub dynamics_output: OutputMode,
    pub expansion: ExpansionConfig,
    pub lambda0: f64,
    pub rho: f64,
    /// Decay horizon `T`; defaults to the environment's step budget.
    pub horizon: Option<u64>,
    pub pretrain_steps: usize,
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub seed: u64,
    /// Replay one layout every episode instead of regenerating it.
    pub fixed_layout: bool,
    /// Keep per-step records; when false only episode summaries are kept.
    pub record_steps: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvSpec::MultiRoom {
                n_rooms: 2,
                max_room_size: 5,
            },
            reward: RewardKind::Gobi,
            lifelong: LifelongKind::Count,
            dynamics: DynamicsBackend::Oracle,
            dynamics_output: OutputMode::Pano,
            expansion: ExpansionConfig::default(),
            lambda0: 0.01,
            rho: 0.0,
            horizon: None,
            pretrain_steps: 0,
            episodes: 100,
            alpha: 0.1,
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
            seed: 0,
            fixed_layout: false,
            record_steps: true,
        }
    }
}

pub fn default_max_steps(env: &EnvSpec) -> u32 {
    match *env {
        EnvSpec::MultiRoom {
            n_rooms,
            max_room_size,
        } => multiroom_max_steps(n_rooms, max_room_size),
        EnvSpec::KeyCorridor { room_size, .. } => keycorridor_max_steps(room_size),
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.reward.uses_episodic() {
            self.expansion.validate()?;
        }
        self.schedule().validate()?;
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be in [0, 1), got {}",
                self.gamma
            )));
        }
        let e = self.epsilon;
        if !(0.0..=1.0).contains(&e.start)
            || !(0.0..=1.0).contains(&e.end)
            || !(0.0..=1.0).contains(&e.fraction)
        {
            return Err(Error::InvalidConfig(
                "epsilon start, end and fraction must lie in [0, 1]".into(),
            ));
        }
        if let LifelongKind::Re3(p) = self.lifelong {
            if p.k_nn == 0 || p.dim == 0 {
                return Err(Error::InvalidConfig("RE3 k_nn and dim must be >= 1".into()));
            }
        }
        if self.dynamics != DynamicsBackend::Oracle
            && self.dynamics_output == OutputMode::Obs
            && self.expansion.k > 1
            && self.reward.uses_episodic()
        {
            return Err(Error::InvalidConfig(
                "k > 1 with a learned model needs dynamics_output = pano".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> DecaySchedule {
        DecaySchedule {
            lambda0: self.lambda0,
            rho: self.rho,
            horizon: self
                .horizon
                .unwrap_or_else(|| u64::from(default_max_steps(&self.env))),
        }
    }

    /// Environment steps spent before the first training episode.
    pub fn step_offset(&self) -> u64 {
        match self.dynamics {
            DynamicsBackend::Oracle => 0,
            _ => self.pretrain_steps as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// 1-based step within the episode.
    pub step: u32,
    pub obs_hash: HashCode,
    pub action: Action,
    pub next_obs_hash: HashCode,
    pub r_ext: f64,
    pub r_int: f64,
    pub lambda: f64,
    pub delta_m: u64,
    pub buffer_size: u64,
    /// Agent position after the step.
    pub position: (u16, u16),
    /// Environment steps so far, pre-training included.
    pub total_env_steps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    /// 1-based episode index.
    pub episode: u64,
    pub env_seed: u64,
    pub steps: Vec<StepRecord>,
    pub steps_used: u32,
    pub extrinsic_return: f64,
    pub intrinsic_return: f64,
    pub success: bool,
    pub final_buffer_size: u64,
    pub total_env_steps: u64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: TrainConfig,
    pub episodes: Vec<EpisodeLog>,
    pub qtable: QTable,
    pub pretrain_steps: u64,
}

impl TrainRun {
    /// 1-based index of the first successful episode.
    pub fn first_success(&self) -> Option<u64> {
        self.episodes.iter().find(|e| e.success).map(|e| e.episode)
    }
}

enum Model {
    None,
    Oracle(OracleDynamics<GridEnv>),
    Tabular {
        model: TabularDynamics,
        online: bool,
    },
}

impl Model {
    fn needs_panorama(&self) -> bool {
        matches!(self, Model::Tabular { .. })
    }

    fn expand<R: Rng>(
        &self,
        buffer: &mut EpisodicBuffer,
        obs_code: HashCode,
        env: &GridEnv,
        pano_code: Option<HashCode>,
        config: &ExpansionConfig,
        rng: &mut R,
    ) -> Result<u64> {
        match self {
            Model::None => Ok(0),
            Model::Oracle(oracle) => expand(buffer, obs_code, env, oracle, config, rng),
            Model::Tabular { model, .. } => expand(
                buffer,
                obs_code,
                &pano_code.expect("panorama computed for tabular models"),
                model,
                config,
                rng,
            ),
        }
    }
}

enum Lifelong {
    Count(LifelongCount),
    Re3(Re3Memory),
}

const STREAM_LAYOUT: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_EXPANSION: u64 = 3;
const STREAM_PRETRAIN: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Runs the full training loop for one seed.
pub fn train(config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    let schedule = config.schedule();
    let offset = config.step_offset();

    let mut model = match (config.reward.uses_episodic(), config.dynamics) {
        (false, _) => Model::None,
        (true, DynamicsBackend::Oracle) => Model::Oracle(OracleDynamics::for_grid()),
        (true, backend) => {
            let online = backend == DynamicsBackend::TabularOnline;
            let model = if config.pretrain_steps == 0 {
                TabularDynamics::new(config.dynamics_output)
            } else {
                let seed = stream(config.seed, STREAM_PRETRAIN).next_u64();
                let env = config.env;
                let records =
                    collect_random_transitions(|s| env.generate(s), config.pretrain_steps, seed)?;
                train_tabular(&records, config.dynamics_output)?
            };
            Model::Tabular { model, online }
        }
    };
    train_with_model(config, &schedule, offset, &mut model)
}

/// Training with a pre-built tabular model instead of collecting one.
pub fn train_with_tabular(config: &TrainConfig, dynamics: TabularDynamics) -> Result<TrainRun> {
    config.validate()?;
    let online = config.dynamics == DynamicsBackend::TabularOnline;
    let mut model = Model::Tabular {
        model: dynamics,
        online,
    };
    train_with_model(config, &config.schedule(), config.step_offset(), &mut model)
}

fn train_with_model(
    config: &TrainConfig,
    schedule: &DecaySchedule,
    offset: u64,
    model: &mut Model,
) -> Result<TrainRun> {
    let mut layout_rng = stream(config.seed, STREAM_LAYOUT);
    let mut policy_rng = stream(config.seed, STREAM_POLICY);
    let mut expansion_rng = stream(config.seed, STREAM_EXPANSION);
    let fixed_seed = layout_rng.next_u64();

    let mut q = QTable::new(config.alpha, config.gamma);
    let mut lifelong = match config.lifelong {
        LifelongKind::Count => Lifelong::Count(LifelongCount::new()),
        LifelongKind::Re3(p) => Lifelong::Re3(Re3Memory::for_observations(p)?),
    };
    let mut buffer = EpisodicBuffer::new();
    let mut total_steps = offset;
    let mut logs = Vec::with_capacity(config.episodes);
    let mut online_records: Vec<TransitionRecord> = Vec::new();

    for e in 0..config.episodes {
        let episode = e as u64 + 1;
        let env_seed = if config.fixed_layout {
            fixed_seed
        } else {
            layout_rng.next_u64()
        };
        let mut env = config.env.generate(env_seed)?;
        buffer.reset();
        let lambda = schedule.lambda(episode);
        let epsilon = config.epsilon.value(e, config.episodes);

        let mut obs_code = env.observe().code();
        let mut pano_code = model.needs_panorama().then(|| env.panorama().code());
        // the start state and its neighbourhood seed the buffer unrewarded
        model.expand(
            &mut buffer,
            obs_code,
            &env,
            pano_code,
            &config.expansion,
            &mut expansion_rng,
        )?;
        let mut log = EpisodeLog {
            episode,
            env_seed,
            steps: Vec::new(),
            steps_used: 0,
            extrinsic_return: 0.0,
            intrinsic_return: 0.0,
            success: false,
            final_buffer_size: 0,
            total_env_steps: total_steps,
        };

        loop {
            let action = select_action(&q, obs_code, epsilon, &mut policy_rng);
            let step = env.step(action)?;
            total_steps += 1;
            let next_code = step.observation.code();
            let next_pano = model.needs_panorama().then(|| env.panorama());
            let next_pano_code = next_pano.as_ref().map(Panorama::code);
            let delta_m = model.expand(
                &mut buffer,
                next_code,
                &env,
                next_pano_code,
                &config.expansion,
                &mut expansion_rng,
            )?;

            let bonus = if config.reward.uses_lifelong() {
                match &mut lifelong {
                    Lifelong::Count(c) => c.count_bonus(next_code),
                    Lifelong::Re3(m) => m.re3_bonus(&step.observation),
                }
            } else {
                0.0
            };
            let r_int = intrinsic_reward(config.reward, delta_m, bonus);
            let total = step.reward + lambda * r_int;
            q_update(&mut q, obs_code, action, total, next_code, step.done);

            if let (Model::Tabular { online: true, .. }, Some(pano_hash), Some(next_pano)) =
                (&model, pano_code, next_pano)
            {
                online_records.push(TransitionRecord {
                    pano_hash,
                    action,
                    next_obs: step.observation,
                    next_pano,
                });
            }

            log.steps_used += 1;
            log.extrinsic_return += step.reward;
            log.intrinsic_return += r_int;
            if config.record_steps {
                let (x, y) = env.agent_pos();
                log.steps.push(StepRecord {
                    step: log.steps_used,
                    obs_hash: obs_code,
                    action,
                    next_obs_hash: next_code,
                    r_ext: step.reward,
                    r_int,
                    lambda,
                    delta_m,
                    buffer_size: buffer.len() as u64,
                    position: (x as u16, y as u16),
                    total_env_steps: total_steps,
                });
            }
            obs_code = next_code;
            pano_code = next_pano_code;
            if step.done {
                log.success = env.success();
                break;
            }
        }

        if let Model::Tabular {
            model,
            online: true,
        } = model
        {
            for r in online_records.drain(..) {
                model.update(&r);
            }
        }
        log.final_buffer_size = buffer.len() as u64;
        log.total_env_steps = total_steps;
        logs.push(log);
    }

    Ok(TrainRun {
        config: config.clone(),
        episodes: logs,
        qtable: q,
        pretrain_steps: offset,
    })
}

/// Recomputes every logged intrinsic reward from the logged `delta_m` and a
/// replayed lifelong count; returns the number of mismatches.
///
/// Only count-based lifelong bonuses can be replayed from hashes alone.
pub fn audit_intrinsic(run: &TrainRun) -> Result<usize> {
    if matches!(run.config.lifelong, LifelongKind::Re3(_)) && run.config.reward.uses_lifelong() {
        return Err(Error::InvalidConfig(
            "RE3 bonuses cannot be replayed from hashes".into(),
        ));
    }
    if !run.config.record_steps {
        return Err(Error::InvalidConfig(
            "run was trained without per-step records".into(),
        ));
    }
    let mut counts = LifelongCount::new();
    let mut mismatches = 0;
    for ep in &run.episodes {
        for s in &ep.steps {
            let bonus = if run.config.reward.uses_lifelong() {
                counts.count_bonus(s.next_obs_hash)
            } else {
                0.0
            };
            let expected = intrinsic_reward(run.config.reward, s.delta_m, bonus);
            if expected.to_bits() != s.r_int.to_bits() {
                mismatches += 1;
            }
        }
    }
    Ok(mismatches)
}

/// Something that picks an action for the current environment state.
pub trait Policy {
    fn act(&mut self, env: &GridEnv, obs_code: HashCode) -> Action;
}

/// Greedy (epsilon = 0) policy over a Q-table; never mutates it.
pub struct Greedy<'a>(pub &'a QTable);

impl Policy for Greedy<'_> {
    fn act(&mut self, _env: &GridEnv, obs_code: HashCode) -> Action {
        self.0.greedy(obs_code)
    }
}

/// Uniform random policy with its own seeded stream.
pub struct RandomPolicy(pub ChaCha8Rng);

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _env: &GridEnv, _obs_code: HashCode) -> Action {
        Action::ALL[self.0.random_range(0..NUM_ACTIONS)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub success_rate: f64,
    pub mean_return: f64,
}

pub fn evaluate_policy<P, F>(
    policy: &mut P,
    mut env_generator: F,
    n_episodes: usize,
    seed: u64,
) -> Result<Evaluation>
where
    P: Policy,
    F: FnMut(u64) -> Result<GridEnv>,
{
    if n_episodes == 0 {
        return Err(Error::InvalidConfig("n_episodes must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    let mut total_return = 0.0;
    for _ in 0..n_episodes {
        let mut env = env_generator(rng.next_u64())?;
        let mut obs_code = env.observe().code();
        loop {
            let a = policy.act(&env, obs_code);
            let step = env.step(a)?;
            total_return += step.reward;
            obs_code = step.observation.code();
            if step.done {
                successes += usize::from(env.success());
                break;
            }
        }
    }
    Ok(Evaluation {
        success_rate: successes as f64 / n_episodes as f64,
        mean_return: total_return / n_episodes as f64,
    })
}

/// Greedy rollouts of `q` on freshly generated layouts.
pub fn evaluate(q: &QTable, env: &EnvSpec, n_episodes: usize, seed: u64) -> Result<Evaluation> {
    evaluate_policy(&mut Greedy(q), |s| env.generate(s), n_episodes, seed)
}
