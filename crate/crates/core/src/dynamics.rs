//! Forward dynamics backends.
//!
//! [`OracleDynamics`] steps a copy of the true simulator. [`TabularDynamics`]
//! is a frequency table keyed by `(panorama hash, action)` learned from
//! random-policy transitions; it predicts the most frequent successor.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::{Read, Write};
use std::marker::PhantomData;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{
    Action, GridEnv, Observation, Panorama, Simulator, Snapshot, NUM_ACTIONS, OBS_BYTES,
};
use crate::hashing::HashCode;

/// One predicted step: the hash of the predicted observation and, when the
/// backend can chain, the context to predict from next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction<C> {
    pub observation: HashCode,
    pub next: Option<C>,
}

/// A one-step forward model over an opaque context.
pub trait ForwardModel {
    type Context: Clone + Eq + Hash;
    type Action: Copy + 'static;

    fn actions(&self) -> &[Self::Action];

    /// `None` when the model has nothing to say for this context and action.
    fn predict_next(
        &self,
        ctx: &Self::Context,
        action: Self::Action,
    ) -> Option<Prediction<Self::Context>>;
}

/// Forward models that can derive their context from a live [`GridEnv`].
pub trait GridModel: ForwardModel<Action = Action> {
    fn context(&self, env: &GridEnv) -> Self::Context;
}

/// Perfect dynamics: restores a copy of the simulator state and steps it.
#[derive(Debug, Clone)]
pub struct OracleDynamics<S: Simulator> {
    actions: &'static [S::Action],
    _sim: PhantomData<fn() -> S>,
}

impl<S: Simulator> OracleDynamics<S> {
    pub fn new(template: &S) -> Self {
        OracleDynamics {
            actions: template.action_set(),
            _sim: PhantomData,
        }
    }
}

impl OracleDynamics<GridEnv> {
    pub fn for_grid() -> Self {
        OracleDynamics {
            actions: &Action::ALL,
            _sim: PhantomData,
        }
    }

    /// True next observation, panorama and state; the snapshot is left untouched.
    pub fn predict_snapshot(
        &self,
        snapshot: &Snapshot,
        action: Action,
    ) -> Option<OraclePrediction> {
        let mut env = snapshot.restore();
        env.step(action).ok()?;
        Some(OraclePrediction {
            observation: env.observe(),
            panorama: env.panorama(),
            snapshot: env.snapshot(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePrediction {
    pub observation: Observation,
    pub panorama: Panorama,
    pub snapshot: Snapshot,
}

impl<S: Simulator> ForwardModel for OracleDynamics<S> {
    type Context = S;
    type Action = S::Action;

    fn actions(&self) -> &[S::Action] {
        self.actions
    }

    fn predict_next(&self, ctx: &S, action: S::Action) -> Option<Prediction<S>> {
        if ctx.is_terminal() {
            return None;
        }
        let mut next = ctx.clone();
        next.advance(action);
        Some(Prediction {
            observation: next.observation_code(),
            next: Some(next),
        })
    }
}

impl GridModel for OracleDynamics<GridEnv> {
    fn context(&self, env: &GridEnv) -> GridEnv {
        env.clone()
    }
}

/// `(pano_t, a_t) -> (o_{t+1}, pano_{t+1})` collected from a real environment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRecord {
    pub pano_hash: HashCode,
    pub action: Action,
    pub next_obs: Observation,
    pub next_pano: Panorama,
}

/// A record together with the true state it was taken from.
#[derive(Debug, Clone)]
pub struct LabeledTransition {
    pub state: Snapshot,
    pub record: TransitionRecord,
}

/// Runs a uniform random policy for exactly `n_steps` steps, regenerating the
/// environment with a fresh seed whenever an episode ends.
pub fn collect_random_transitions<F>(
    env_generator: F,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<TransitionRecord>>
where
    F: FnMut(u64) -> Result<GridEnv>,
{
    Ok(collect_labeled_transitions(env_generator, n_steps, seed)?
        .into_iter()
        .map(|l| l.record)
        .collect())
}

pub fn collect_labeled_transitions<F>(
    mut env_generator: F,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<LabeledTransition>>
where
    F: FnMut(u64) -> Result<GridEnv>,
{
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut env = env_generator(rng.next_u64())?;
    let mut out = Vec::with_capacity(n_steps);
    while out.len() < n_steps {
        let state = env.snapshot();
        let pano_hash = env.panorama().code();
        let action = Action::ALL[rng.random_range(0..NUM_ACTIONS)];
        let step = env.step(action)?;
        out.push(LabeledTransition {
            state,
            record: TransitionRecord {
                pano_hash,
                action,
                next_obs: step.observation,
                next_pano: env.panorama(),
            },
        });
        if step.done {
            env = env_generator(rng.next_u64())?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Predicts only the next observation; rollouts cannot chain past one step.
    Obs,
    /// Predicts the next panorama too, so rollouts can chain.
    Pano,
}

#[derive(Debug, Clone)]
struct Candidate {
    id: HashCode,
    obs: Observation,
    obs_code: HashCode,
    pano: Option<Box<Panorama>>,
    pano_code: Option<HashCode>,
    count: u64,
}

#[derive(Debug, Clone, Default)]
struct Entry {
    candidates: Vec<Candidate>,
    best: usize,
}

impl Entry {
    fn beats(a: &Candidate, b: &Candidate) -> bool {
        a.count > b.count || (a.count == b.count && a.id < b.id)
    }
}

/// Frequency-table dynamics keyed by `(panorama hash, action)`.
#[derive(Debug, Clone)]
pub struct TabularDynamics {
    mode: OutputMode,
    table: HashMap<(HashCode, Action), Entry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabularPrediction<'a> {
    pub observation: &'a Observation,
    pub panorama: Option<&'a Panorama>,
}

impl TabularDynamics {
    pub fn new(mode: OutputMode) -> Self {
        TabularDynamics {
            mode,
            table: HashMap::new(),
        }
    }

    pub fn mode(&self) -> OutputMode {
        self.mode
    }

    /// Number of distinct `(panorama, action)` keys.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn update(&mut self, record: &TransitionRecord) {
        let obs_code = record.next_obs.code();
        let (id, pano, pano_code) = match self.mode {
            OutputMode::Obs => (obs_code, None, None),
            OutputMode::Pano => {
                let code = record.next_pano.code();
                (code, Some(Box::new(record.next_pano)), Some(code))
            }
        };
        let entry = self
            .table
            .entry((record.pano_hash, record.action))
            .or_default();
        let slot = match entry.candidates.iter().position(|c| c.id == id) {
            Some(i) => {
                entry.candidates[i].count += 1;
                i
            }
            None => {
                entry.candidates.push(Candidate {
                    id,
                    obs: record.next_obs,
                    obs_code,
                    pano,
                    pano_code,
                    count: 1,
                });
                entry.candidates.len() - 1
            }
        };
        if slot != entry.best
            && Entry::beats(&entry.candidates[slot], &entry.candidates[entry.best])
        {
            entry.best = slot;
        }
    }

    fn best(&self, pano_code: HashCode, action: Action) -> Option<&Candidate> {
        self.table
            .get(&(pano_code, action))
            .map(|e| &e.candidates[e.best])
    }

    pub fn predict(&self, pano: &Panorama, action: Action) -> Option<TabularPrediction<'_>> {
        self.predict_code(pano.code(), action)
    }

    pub fn predict_code(
        &self,
        pano_code: HashCode,
        action: Action,
    ) -> Option<TabularPrediction<'_>> {
        self.best(pano_code, action).map(|c| TabularPrediction {
            observation: &c.obs,
            panorama: c.pano.as_deref(),
        })
    }
}

/// Builds a table from scratch. Record order does not affect the result.
pub fn train_tabular(records: &[TransitionRecord], mode: OutputMode) -> Result<TabularDynamics> {
    if records.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot train dynamics on zero records".into(),
        ));
    }
    let mut model = TabularDynamics::new(mode);
    for r in records {
        model.update(r);
    }
    Ok(model)
}

impl ForwardModel for TabularDynamics {
    /// Hash of the current panorama.
    type Context = HashCode;
    type Action = Action;

    fn actions(&self) -> &[Action] {
        &Action::ALL
    }

    fn predict_next(&self, ctx: &HashCode, action: Action) -> Option<Prediction<HashCode>> {
        self.best(*ctx, action).map(|c| Prediction {
            observation: c.obs_code,
            next: c.pano_code,
        })
    }
}

impl GridModel for TabularDynamics {
    fn context(&self, env: &GridEnv) -> HashCode {
        env.panorama().code()
    }
}

/// Anything that can predict the next observation of a recorded transition.
pub trait TransitionPredictor {
    fn predict_observation(
        &self,
        state: &Snapshot,
        pano_hash: HashCode,
        action: Action,
    ) -> Option<Observation>;
}

impl TransitionPredictor for TabularDynamics {
    fn predict_observation(
        &self,
        _state: &Snapshot,
        pano_hash: HashCode,
        action: Action,
    ) -> Option<Observation> {
        self.predict_code(pano_hash, action).map(|p| *p.observation)
    }
}

impl TransitionPredictor for OracleDynamics<GridEnv> {
    fn predict_observation(
        &self,
        state: &Snapshot,
        _pano_hash: HashCode,
        action: Action,
    ) -> Option<Observation> {
        self.predict_snapshot(state, action).map(|p| p.observation)
    }
}

/// Fraction of held-out transitions whose next observation is predicted exactly.
pub fn eval_accuracy<P: TransitionPredictor>(
    model: &P,
    held_out: &[LabeledTransition],
) -> Result<f64> {
    if held_out.is_empty() {
        return Err(Error::InvalidConfig("held-out set is empty".into()));
    }
    let hits = held_out
        .iter()
        .filter(|t| {
            model
                .predict_observation(&t.state, t.record.pano_hash, t.record.action)
                .as_ref()
                == Some(&t.record.next_obs)
        })
        .count();
    Ok(hits as f64 / held_out.len() as f64)
}

pub const DATASET_MAGIC: [u8; 8] = *b"GOBITRN\0";
pub const DATASET_VERSION: u32 = 1;
/// pano hash (8) + action (1) + next observation + next panorama.
pub const RECORD_BYTES: usize = 8 + 1 + OBS_BYTES + 4 * OBS_BYTES;

/// Writes records as: magic, version (u32 LE), record width (u32 LE),
/// count (u64 LE), then fixed-width records.
pub fn write_records<W: Write>(mut w: W, records: &[TransitionRecord]) -> Result<()> {
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&DATASET_VERSION.to_le_bytes())?;
    w.write_all(&(RECORD_BYTES as u32).to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(RECORD_BYTES);
    for r in records {
        buf.clear();
        buf.extend_from_slice(&r.pano_hash.0.to_le_bytes());
        buf.push(r.action as u8);
        buf.extend_from_slice(r.next_obs.as_bytes());
        for v in &r.next_pano.views {
            buf.extend_from_slice(v.as_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<TransitionRecord>> {
    let mut header = [0u8; 24];
    r.read_exact(&mut header)
        .map_err(|_| Error::Dataset("truncated header".into()))?;
    if header[..8] != DATASET_MAGIC {
        return Err(Error::Dataset("bad magic".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes"));
    if version != DATASET_VERSION {
        return Err(Error::Dataset(format!("unsupported version {version}")));
    }
    let width = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    if width != RECORD_BYTES {
        return Err(Error::Dataset(format!(
            "record width {width}, expected {RECORD_BYTES}"
        )));
    }
    let count = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes")) as usize;

    let mut out = Vec::with_capacity(count.min(1 << 20));
    let mut buf = vec![0u8; RECORD_BYTES];
    for i in 0..count {
        r.read_exact(&mut buf)
            .map_err(|_| Error::Dataset(format!("truncated at record {i} of {count}")))?;
        let pano_hash = HashCode(u64::from_le_bytes(buf[..8].try_into().expect("8 bytes")));
        let action = Action::from_index(buf[8] as usize)
            .ok_or_else(|| Error::Dataset(format!("bad action {} in record {i}", buf[8])))?;
        let body = &buf[9..];
        let next_obs = Observation::from_bytes(&body[..OBS_BYTES])?;
        let mut views = [Observation::unseen(); 4];
        for (k, v) in views.iter_mut().enumerate() {
            let start = OBS_BYTES * (k + 1);
            *v = Observation::from_bytes(&body[start..start + OBS_BYTES])?;
        }
        out.push(TransitionRecord {
            pano_hash,
            action,
            next_obs,
            next_pano: Panorama { views },
        });
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Dataset("trailing bytes after last record".into()));
    }
    Ok(out)
}
