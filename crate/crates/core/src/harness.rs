//! Experiment orchestration: configs, multi-seed runs, CSV logs, learning
//! curve aggregation, visitation heatmaps, SVG plots and the oracle check.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    evaluate, train, train_with_tabular, DynamicsBackend, EpisodeLog, EpsilonSchedule,
    LifelongKind, TrainConfig, TrainRun,
};
use crate::dynamics::{read_records, train_tabular, OracleDynamics, OutputMode, TabularDynamics};
use crate::error::{Error, Result};
use crate::gridworld::{Action, EnvSpec, GridEnv, PositionWorld, Simulator};
use crate::hashing::{hash_bytes, HashCode};
use crate::intrinsic::RewardKind;
use crate::reachability::{
    bfs_reachable, expand, ActionMode, EpisodicBuffer, ExpansionConfig, DEFAULT_STATE_CAP,
};

/// Caps the number of worker threads when set to a positive integer.
pub const THREADS_ENV: &str = "GOBI_THREADS";

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Column order of the per-seed step logs.
pub const STEP_COLUMNS: [&str; 9] = [
    "episode",
    "step",
    "total_env_steps",
    "r_ext",
    "r_int",
    "lambda",
    "delta_m",
    "buffer_size",
    "success",
];

pub const AGGREGATE_COLUMNS: [&str; 6] = [
    "total_env_steps",
    "mean_return",
    "std_return",
    "mean_success",
    "std_success",
    "n_seeds",
];

/// Inclusive range of 1-based episode indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRange {
    pub first: u64,
    pub last: u64,
}

impl EpisodeRange {
    pub fn contains(&self, episode: u64) -> bool {
        (self.first..=self.last).contains(&episode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub reward: RewardKind,
    pub lifelong: LifelongKind,
    pub dynamics: DynamicsBackend,
    pub dynamics_output: OutputMode,
    pub k: usize,
    pub n: usize,
    pub action_mode: ActionMode,
    pub lambda0: f64,
    pub rho: f64,
    pub horizon: Option<u64>,
    pub pretrain_steps: usize,
    /// Cached transition dataset; replaces per-seed collection when set.
    pub dataset: Option<PathBuf>,
    pub episodes: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub fixed_layout: bool,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Spacing of aggregate curve points, in environment steps.
    pub curve_interval: u64,
    /// Episodes averaged into each curve point.
    pub curve_window: usize,
    pub heatmaps: Vec<EpisodeRange>,
    /// Greedy evaluation episodes per seed after training; 0 skips it.
    pub eval_episodes: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        ExperimentConfig {
            env: t.env,
            reward: t.reward,
            lifelong: t.lifelong,
            dynamics: t.dynamics,
            dynamics_output: t.dynamics_output,
            k: t.expansion.k,
            n: t.expansion.n,
            action_mode: t.expansion.action_mode,
            lambda0: t.lambda0,
            rho: t.rho,
            horizon: t.horizon,
            pretrain_steps: t.pretrain_steps,
            dataset: None,
            episodes: t.episodes,
            alpha: t.alpha,
            gamma: t.gamma,
            epsilon: t.epsilon,
            fixed_layout: t.fixed_layout,
            seeds: vec![0],
            out: PathBuf::from("runs/default"),
            curve_interval: 1000,
            curve_window: 100,
            heatmaps: Vec::new(),
            eval_episodes: 0,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub env: Option<EnvSpec>,
    pub reward: Option<RewardKind>,
    pub seeds: Option<Vec<u64>>,
    pub episodes: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(env) = o.env {
            self.env = env;
        }
        if let Some(reward) = o.reward {
            self.reward = reward;
        }
        if let Some(seeds) = o.seeds {
            self.seeds = seeds;
        }
        if let Some(episodes) = o.episodes {
            self.episodes = episodes;
        }
        if let Some(out) = o.out {
            self.out = out;
        }
    }

    pub fn expansion(&self) -> ExpansionConfig {
        ExpansionConfig {
            k: self.k,
            n: self.n,
            action_mode: self.action_mode,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            env: self.env,
            reward: self.reward,
            lifelong: self.lifelong,
            dynamics: self.dynamics,
            dynamics_output: self.dynamics_output,
            expansion: self.expansion(),
            lambda0: self.lambda0,
            rho: self.rho,
            horizon: self.horizon,
            pretrain_steps: self.pretrain_steps,
            episodes: self.episodes,
            alpha: self.alpha,
            gamma: self.gamma,
            epsilon: self.epsilon,
            seed,
            fixed_layout: self.fixed_layout,
            record_steps: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        if self.curve_interval == 0 || self.curve_window == 0 {
            return Err(Error::InvalidConfig(
                "curve_interval and curve_window must be >= 1".into(),
            ));
        }
        for r in &self.heatmaps {
            if r.first == 0 || r.first > r.last {
                return Err(Error::InvalidConfig(format!(
                    "bad heatmap range {}..={}",
                    r.first, r.last
                )));
            }
        }
        if self.dataset.is_some() && self.dynamics == DynamicsBackend::Oracle {
            return Err(Error::InvalidConfig(
                "a dataset only applies to tabular dynamics".into(),
            ));
        }
        self.train_config(self.seeds[0]).validate()
    }

    /// FNV-1a of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> HashCode {
        let mut c = self.clone();
        c.out = PathBuf::new();
        hash_bytes(&serde_json::to_vec(&c).expect("config serializes"))
    }
}

/// Worker count from [`THREADS_ENV`]; `None` leaves the choice to rayon.
pub fn worker_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::InvalidConfig(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

/// Runs `f` on every item in parallel, honouring [`THREADS_ENV`]; results
/// keep input order and the first failure is tagged with its seed.
pub fn parallel_seeds<T, F>(seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| seeds.par_iter().map(|&s| f(s)).collect());
    seeds
        .iter()
        .zip(results)
        .map(|(&seed, r)| {
            r.map_err(|e| Error::Worker {
                seed,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Trains one run per config in parallel.
pub fn train_seeds(configs: &[TrainConfig]) -> Result<Vec<TrainRun>> {
    let index: Vec<u64> = (0..configs.len() as u64).collect();
    parallel_seeds(&index, |i| train(&configs[i as usize])).map_err(|e| match e {
        Error::Worker { seed, source } => Error::Worker {
            seed: configs[seed as usize].seed,
            source,
        },
        e => e,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub total_env_steps: u64,
    pub successes: usize,
    pub first_success: Option<u64>,
    pub greedy_success_rate: Option<f64>,
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedSummary>,
    pub files: Vec<String>,
}

impl Manifest {
    /// Reads `manifest.json` from a run directory.
    pub fn load(run_dir: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(run_dir.join("manifest.json")).map_err(|e| {
            Error::InvalidConfig(format!("{}: no readable manifest: {e}", run_dir.display()))
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Per-episode numbers the aggregate curve is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    pub total_env_steps: u64,
    pub extrinsic_return: f64,
    pub success: bool,
}

impl From<&EpisodeLog> for EpisodeOutcome {
    fn from(e: &EpisodeLog) -> Self {
        EpisodeOutcome {
            total_env_steps: e.total_env_steps,
            extrinsic_return: e.extrinsic_return,
            success: e.success,
        }
    }
}

struct SeedOutput {
    summary: SeedSummary,
    outcomes: Vec<EpisodeOutcome>,
    files: Vec<String>,
}

/// Executes every seed of `config` and writes logs, aggregate and manifest
/// under `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<Manifest> {
    config.validate()?;
    let out = &config.out;
    fs::create_dir_all(out.join("episodes"))?;
    fs::create_dir_all(out.join("traces"))?;
    if !config.heatmaps.is_empty() {
        fs::create_dir_all(out.join("heatmaps"))?;
    }

    let pretrained = match &config.dataset {
        Some(path) => {
            let records = read_records(BufReader::new(File::open(path)?))?;
            Some((
                train_tabular(&records, config.dynamics_output)?,
                records.len(),
            ))
        }
        None => None,
    };

    let outputs = parallel_seeds(&config.seeds, |seed| {
        run_seed(config, seed, pretrained.as_ref())
    })?;

    let mut files = Vec::new();
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    for o in outputs {
        files.extend(o.files);
        summaries.push(o.summary);
        curves.push(o.outcomes);
    }

    let points = aggregate(&curves, config.curve_interval, config.curve_window);
    write_aggregate_csv(
        BufWriter::new(File::create(out.join("aggregate.csv"))?),
        &points,
    )?;
    files.push("aggregate.csv".into());
    files.push("manifest.json".into());

    let manifest = Manifest {
        version: VERSION.into(),
        config_hash: config.hash().to_string(),
        config: config.clone(),
        seeds: summaries,
        files,
    };
    let mut w = BufWriter::new(File::create(out.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

fn run_seed(
    config: &ExperimentConfig,
    seed: u64,
    pretrained: Option<&(TabularDynamics, usize)>,
) -> Result<SeedOutput> {
    let mut tc = config.train_config(seed);
    let run = match pretrained {
        Some((model, n)) => {
            tc.pretrain_steps = *n;
            train_with_tabular(&tc, model.clone())?
        }
        None => train(&tc)?,
    };
    let out = &config.out;
    let log = format!("seed_{seed}.csv");
    write_step_csv(BufWriter::new(File::create(out.join(&log))?), &run.episodes)?;
    let episodes = format!("episodes/seed_{seed}.csv");
    write_episode_csv(
        BufWriter::new(File::create(out.join(&episodes))?),
        &run.episodes,
    )?;
    let traces = format!("traces/seed_{seed}.csv");
    write_trace_csv(
        BufWriter::new(File::create(out.join(&traces))?),
        &run.episodes,
    )?;
    let mut files = vec![log.clone(), episodes, traces];

    let traced: Vec<EpisodeTrace> = run.episodes.iter().map(EpisodeTrace::from).collect();
    for range in &config.heatmaps {
        let map = emit_heatmap(&traced, &config.env, *range)?;
        let stem = format!("heatmaps/seed_{seed}_ep{}-{}", range.first, range.last);
        map.write_files(&out.join(&stem))?;
        files.push(format!("{stem}.csv"));
        files.push(format!("{stem}.pgm"));
    }

    let greedy_success_rate = match config.eval_episodes {
        0 => None,
        n => Some(evaluate(&run.qtable, &config.env, n, seed ^ 0x5eed)?.success_rate),
    };
    let summary = SeedSummary {
        seed,
        episodes: run.episodes.len(),
        total_env_steps: run
            .episodes
            .last()
            .map_or(run.pretrain_steps, |e| e.total_env_steps),
        successes: run.episodes.iter().filter(|e| e.success).count(),
        first_success: run.first_success(),
        greedy_success_rate,
        log,
    };
    let outcomes = run.episodes.iter().map(EpisodeOutcome::from).collect();
    Ok(SeedOutput {
        summary,
        outcomes,
        files,
    })
}

pub fn write_step_csv<W: Write>(mut w: W, episodes: &[EpisodeLog]) -> Result<()> {
    writeln!(w, "{}", STEP_COLUMNS.join(","))?;
    for ep in episodes {
        let success = u8::from(ep.success);
        for s in &ep.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                ep.episode,
                s.step,
                s.total_env_steps,
                s.r_ext,
                s.r_int,
                s.lambda,
                s.delta_m,
                s.buffer_size,
                success
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_episode_csv<W: Write>(mut w: W, episodes: &[EpisodeLog]) -> Result<()> {
    writeln!(w, "episode,env_seed,steps,extrinsic_return,intrinsic_return,success,final_buffer_size,total_env_steps")?;
    for e in episodes {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            e.episode,
            e.env_seed,
            e.steps_used,
            e.extrinsic_return,
            e.intrinsic_return,
            u8::from(e.success),
            e.final_buffer_size,
            e.total_env_steps
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(mut w: W, episodes: &[EpisodeLog]) -> Result<()> {
    writeln!(w, "episode,step,action,x,y")?;
    for e in episodes {
        for s in &e.steps {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.episode,
                s.step,
                s.action.index(),
                s.position.0,
                s.position.1
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub total_env_steps: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_success: f64,
    pub std_success: f64,
    pub n_seeds: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Learning curve across seeds, one point every `interval` environment
/// steps up to the shortest run.
///
/// Each seed contributes the mean return and success rate of its last
/// `window` episodes finished at or before the checkpoint (zero if none
/// have). Spread is the sample standard deviation across seeds.
pub fn aggregate(seeds: &[Vec<EpisodeOutcome>], interval: u64, window: usize) -> Vec<CurvePoint> {
    let Some(end) = seeds
        .iter()
        .map(|s| s.last().map_or(0, |e| e.total_env_steps))
        .min()
    else {
        return Vec::new();
    };
    let mut cursors = vec![0usize; seeds.len()];
    let mut points = Vec::new();
    let mut x = interval;
    while x <= end {
        let mut returns = Vec::with_capacity(seeds.len());
        let mut successes = Vec::with_capacity(seeds.len());
        for (eps, cur) in seeds.iter().zip(cursors.iter_mut()) {
            while *cur < eps.len() && eps[*cur].total_env_steps <= x {
                *cur += 1;
            }
            let recent = &eps[cur.saturating_sub(window)..*cur];
            if recent.is_empty() {
                returns.push(0.0);
                successes.push(0.0);
            } else {
                let n = recent.len() as f64;
                returns.push(recent.iter().map(|e| e.extrinsic_return).sum::<f64>() / n);
                successes.push(recent.iter().filter(|e| e.success).count() as f64 / n);
            }
        }
        let (mean_return, std_return) = mean_std(&returns);
        let (mean_success, std_success) = mean_std(&successes);
        points.push(CurvePoint {
            total_env_steps: x,
            mean_return,
            std_return,
            mean_success,
            std_success,
            n_seeds: seeds.len(),
        });
        x += interval;
    }
    points
}

pub fn write_aggregate_csv<W: Write>(mut w: W, points: &[CurvePoint]) -> Result<()> {
    writeln!(w, "{}", AGGREGATE_COLUMNS.join(","))?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.total_env_steps,
            p.mean_return,
            p.std_return,
            p.mean_success,
            p.std_success,
            p.n_seeds
        )?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::Dataset(format!("line {line}: missing or malformed field")))
}

fn data_lines(path: &Path, header: &str) -> Result<Vec<(usize, String)>> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().transpose()?.unwrap_or_default();
    if first.trim() != header {
        return Err(Error::Dataset(format!(
            "{}: unexpected header {first:?}",
            path.display()
        )));
    }
    lines
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 2, l)).map_err(Error::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty()))
        .collect()
}

pub fn read_aggregate_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    data_lines(path, &AGGREGATE_COLUMNS.join(","))?
        .into_iter()
        .map(|(n, line)| {
            let mut f = line.split(',');
            Ok(CurvePoint {
                total_env_steps: parse_field(f.next(), n)?,
                mean_return: parse_field(f.next(), n)?,
                std_return: parse_field(f.next(), n)?,
                mean_success: parse_field(f.next(), n)?,
                std_success: parse_field(f.next(), n)?,
                n_seeds: parse_field(f.next(), n)?,
            })
        })
        .collect()
}

/// Actions and resulting positions of one logged episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub episode: u64,
    pub env_seed: u64,
    pub actions: Vec<Action>,
    pub positions: Vec<(u16, u16)>,
}

impl From<&EpisodeLog> for EpisodeTrace {
    fn from(e: &EpisodeLog) -> Self {
        EpisodeTrace {
            episode: e.episode,
            env_seed: e.env_seed,
            actions: e.steps.iter().map(|s| s.action).collect(),
            positions: e.steps.iter().map(|s| s.position).collect(),
        }
    }
}

/// Rebuilds traces from the `episodes/` and `traces/` files of a run.
pub fn load_traces(run_dir: &Path, seed: u64) -> Result<Vec<EpisodeTrace>> {
    let episodes = data_lines(
        &run_dir.join(format!("episodes/seed_{seed}.csv")),
        "episode,env_seed,steps,extrinsic_return,intrinsic_return,success,final_buffer_size,total_env_steps",
    )?;
    let mut traces = Vec::with_capacity(episodes.len());
    for (n, line) in episodes {
        let mut f = line.split(',');
        traces.push(EpisodeTrace {
            episode: parse_field(f.next(), n)?,
            env_seed: parse_field(f.next(), n)?,
            actions: Vec::new(),
            positions: Vec::new(),
        });
    }
    for (n, line) in data_lines(
        &run_dir.join(format!("traces/seed_{seed}.csv")),
        "episode,step,action,x,y",
    )? {
        let mut f = line.split(',');
        let episode: u64 = parse_field(f.next(), n)?;
        let _step: u32 = parse_field(f.next(), n)?;
        let action = Action::from_index(parse_field(f.next(), n)?)
            .ok_or_else(|| Error::Dataset(format!("line {n}: action out of range")))?;
        let pos = (parse_field(f.next(), n)?, parse_field(f.next(), n)?);
        let t = traces
            .iter_mut()
            .find(|t| t.episode == episode)
            .ok_or_else(|| {
                Error::Dataset(format!("line {n}: episode {episode} missing from summary"))
            })?;
        t.actions.push(action);
        t.positions.push(pos);
    }
    Ok(traces)
}

/// Visit counts plus cells the agent saw but may not have stepped on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
    pub seen: Vec<bool>,
}

/// Grey level of cells never seen.
pub const SHADE_UNSEEN: u8 = 0;
/// Grey level of cells seen but never stepped on.
pub const SHADE_SEEN: u8 = 255;

impl Heatmap {
    pub fn count(&self, x: usize, y: usize) -> u64 {
        self.counts[y * self.width + x]
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Visited cells span 1 (most visits) to 254 (fewest).
    pub fn shade(&self, x: usize, y: usize) -> u8 {
        let i = y * self.width + x;
        let c = self.counts[i];
        if c > 0 {
            let frac = c as f64 / self.max_count() as f64;
            1 + ((1.0 - frac) * 253.0).round() as u8
        } else if self.seen[i] {
            SHADE_SEEN
        } else {
            SHADE_UNSEEN
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| self.count(x, y).to_string())
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Plain (P2) graymap.
    pub fn to_pgm(&self) -> String {
        let mut s = format!("P2\n{} {}\n255\n", self.width, self.height);
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| self.shade(x, y).to_string())
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.pgm`.
    pub fn write_files(&self, stem: &Path) -> Result<()> {
        fs::write(stem.with_extension("csv"), self.to_csv())?;
        fs::write(stem.with_extension("pgm"), self.to_pgm())?;
        Ok(())
    }
}

/// Replays the episodes in `range` on their regenerated layouts, counting
/// post-step positions and marking every cell in view.
pub fn emit_heatmap(
    traces: &[EpisodeTrace],
    env: &EnvSpec,
    range: EpisodeRange,
) -> Result<Heatmap> {
    let selected: Vec<&EpisodeTrace> = traces
        .iter()
        .filter(|t| range.contains(t.episode))
        .collect();
    if range.first > range.last || selected.is_empty() {
        return Err(Error::EmptyRange);
    }
    let mut envs = Vec::with_capacity(selected.len());
    for t in &selected {
        envs.push(env.generate(t.env_seed)?);
    }
    let width = envs.iter().map(GridEnv::width).max().unwrap_or(0);
    let height = envs.iter().map(GridEnv::height).max().unwrap_or(0);
    let mut map = Heatmap {
        width,
        height,
        counts: vec![0; width * height],
        seen: vec![false; width * height],
    };

    for (t, mut e) in selected.into_iter().zip(envs) {
        for (x, y) in e.visible_cells() {
            map.seen[y * width + x] = true;
        }
        for (i, (&a, &pos)) in t.actions.iter().zip(&t.positions).enumerate() {
            e.apply(a)?;
            let (x, y) = e.agent_pos();
            if (x as u16, y as u16) != pos {
                return Err(Error::Dataset(format!(
                    "episode {} step {}: replay reached {:?}, log says {:?}",
                    t.episode,
                    i + 1,
                    (x, y),
                    pos
                )));
            }
            map.counts[y * width + x] += 1;
            for (vx, vy) in e.visible_cells() {
                map.seen[vy * width + vx] = true;
            }
        }
    }
    Ok(map)
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// Mean return against environment steps with a one-std band per curve.
pub fn plot_svg(curves: &[(String, Vec<CurvePoint>)]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 170.0, 20.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let x_max = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.total_env_steps))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let y_max = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.mean_return + p.std_return))
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let sx = |x: f64| left + x / x_max * pw;
    let sy = |y: f64| top + ph - (y / y_max).clamp(0.0, 1.0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=4 {
        let fx = f64::from(i) / 4.0;
        let (x, y) = (left + fx * pw, top + ph - fx * ph);
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            top + ph + 16.0,
            (fx * x_max).round()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{:.3}</text>"#,
            left - 6.0,
            y + 4.0,
            fx * y_max
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">environment steps</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">return</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );

    for (i, (label, points)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !points.is_empty() {
            let mut band = String::new();
            for p in points {
                let _ = write!(
                    band,
                    "{:.2},{:.2} ",
                    sx(p.total_env_steps as f64),
                    sy(p.mean_return + p.std_return)
                );
            }
            for p in points.iter().rev() {
                let _ = write!(
                    band,
                    "{:.2},{:.2} ",
                    sx(p.total_env_steps as f64),
                    sy(p.mean_return - p.std_return)
                );
            }
            let _ = writeln!(
                s,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
            let line: Vec<String> = points
                .iter()
                .map(|p| {
                    format!(
                        "{:.2},{:.2}",
                        sx(p.total_env_steps as f64),
                        sy(p.mean_return)
                    )
                })
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                line.join(" ")
            );
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/>"#,
            left + pw + 12.0,
            ly - 4.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" font-size="11">{}</text>"#,
            left + pw + 30.0,
            xml_escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub position_worlds: usize,
    pub grid_states: usize,
    pub checks: usize,
    pub mismatches: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// A random PositionWorld of at most 10x10 cells with about a quarter walls.
pub fn random_position_world<R: Rng>(rng: &mut R) -> PositionWorld {
    let w = rng.random_range(2..=10);
    let h = rng.random_range(2..=10);
    loop {
        let walls: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.25)).collect();
        let free: Vec<usize> = (0..w * h).filter(|&i| !walls[i]).collect();
        if free.is_empty() {
            continue;
        }
        let at = free[rng.random_range(0..free.len())];
        let layout: String = (0..h)
            .map(|y| {
                (0..w)
                    .map(|x| {
                        let i = y * w + x;
                        if i == at {
                            'A'
                        } else if walls[i] {
                            '#'
                        } else {
                            '.'
                        }
                    })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("\n");
        return PositionWorld::from_ascii(&layout).expect("generated layout is well formed");
    }
}

/// A generated layout advanced by a short random walk.
pub fn random_grid_state<R: Rng>(rng: &mut R) -> Result<GridEnv> {
    const SPECS: [EnvSpec; 3] = [
        EnvSpec::MultiRoom {
            n_rooms: 2,
            max_room_size: 5,
        },
        EnvSpec::MultiRoom {
            n_rooms: 3,
            max_room_size: 4,
        },
        EnvSpec::KeyCorridor {
            room_size: 3,
            rows: 2,
        },
    ];
    let spec = SPECS[rng.random_range(0..SPECS.len())];
    let mut env = spec.generate(rng.random())?;
    for _ in 0..rng.random_range(0..40) {
        if env.is_done() {
            break;
        }
        env.apply(Action::ALL[rng.random_range(0..Action::ALL.len())])?;
    }
    Ok(env)
}

fn check_equivalence<S: Simulator>(state: &S, k: usize) -> Result<bool> {
    let oracle = OracleDynamics::new(state);
    let cfg = ExpansionConfig {
        k,
        n: 1,
        action_mode: ActionMode::Exhaustive,
    };
    let mut buffer = EpisodicBuffer::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    expand(
        &mut buffer,
        state.observation_code(),
        state,
        &oracle,
        &cfg,
        &mut rng,
    )?;
    Ok(buffer.codes() == &bfs_reachable(state, k, DEFAULT_STATE_CAP)?)
}

/// Compares exhaustive oracle expansion with breadth-first search over
/// `n` random PositionWorlds and `n` random GridEnv states, for k = 1..=3.
pub fn verify_oracle(n: usize, seed: u64) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = VerifyReport {
        position_worlds: n,
        grid_states: n,
        ..Default::default()
    };
    for i in 0..n {
        let world = random_position_world(&mut rng);
        let env = random_grid_state(&mut rng)?;
        for k in 1..=3 {
            report.checks += 2;
            if !check_equivalence(&world, k)? {
                report
                    .mismatches
                    .push(format!("position world {i}, k = {k}"));
            }
            if !check_equivalence(&env, k)? {
                report.mismatches.push(format!("grid state {i}, k = {k}"));
            }
        }
    }
    Ok(report)
}
