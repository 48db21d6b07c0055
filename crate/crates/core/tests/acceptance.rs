//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Criteria 9-11 train 4 x 20 seeds x 3000 episodes; set `GOBI_THREADS` to
//! spread them over more cores.

use std::collections::{HashMap, HashSet, VecDeque};
use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use gobi_core::agent::{evaluate, train, DynamicsBackend, EpsilonSchedule, TrainConfig, TrainRun};
use gobi_core::dynamics::{
    collect_labeled_transitions, collect_random_transitions, eval_accuracy, train_tabular,
};
use gobi_core::gridworld::Move;
use gobi_core::harness::{
    random_grid_state, random_position_world, run, train_seeds, ExperimentConfig,
};
use gobi_core::intrinsic::{LifelongCount, Re3Memory, Re3Params};
use gobi_core::reachability::{bfs_reachable, expand, DEFAULT_STATE_CAP};
use gobi_core::{
    ActionMode, DecaySchedule, EnvSpec, EpisodicBuffer, ExpansionConfig, HashCode, OracleDynamics,
    OutputMode, PositionWorld, RewardKind, SimHasher, Simulator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn exhaustive(k: usize) -> ExpansionConfig {
    ExpansionConfig {
        k,
        n: 1,
        action_mode: ActionMode::Exhaustive,
    }
}

// 1 ----------------------------------------------------------------------

fn corridor_expansion() -> Outcome {
    let start = Instant::now();
    // corridor with a plus-shaped junction at x = 3
    let world = PositionWorld::from_ascii("######\n###.##\nA.....\n###.##\n######").unwrap();
    let oracle = OracleDynamics::new(&world);
    let cfg = exhaustive(2);
    let mut buffer = EpisodicBuffer::new();
    let mut r = rng(0);

    let mut s = world.clone();
    expand(&mut buffer, s.observation_code(), &s, &oracle, &cfg, &mut r).unwrap();
    s.step(Move::Right);
    let d1 = expand(&mut buffer, s.observation_code(), &s, &oracle, &cfg, &mut r).unwrap();
    s.step(Move::Right);
    let d2 = expand(&mut buffer, s.observation_code(), &s, &oracle, &cfg, &mut r).unwrap();
    let trajectory_stored = [(0, 2), (1, 2), (2, 2)]
        .iter()
        .all(|&p| buffer.contains(PositionWorld::position_code(p)));
    let elapsed = start.elapsed();
    outcome(
        d2 == 3 && trajectory_stored && elapsed < Duration::from_secs(1),
        format!("s0->s1 delta {d1}, s1->s2 delta {d2}, trajectory stored {trajectory_stored}, {elapsed:.2?}"),
    )
}

// 2 ----------------------------------------------------------------------

/// Positions within `k` moves, by plain coordinate BFS.
fn reachable_positions(w: &PositionWorld, k: usize) -> HashSet<HashCode> {
    let mut seen = HashSet::from([w.agent_pos()]);
    let mut queue = VecDeque::from([(w.agent_pos(), 0)]);
    while let Some(((x, y), d)) = queue.pop_front() {
        if d == k {
            continue;
        }
        for (dx, dy) in [(0i64, -1i64), (1, 0), (0, 1), (-1, 0)] {
            let (nx, ny) = (x as i64 + dx, y as i64 + dy);
            if w.is_free(nx, ny) && seen.insert((nx as usize, ny as usize)) {
                queue.push_back(((nx as usize, ny as usize), d + 1));
            }
        }
    }
    seen.into_iter().map(PositionWorld::position_code).collect()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut mismatches = 0;
    let mut checks = 0;
    for _ in 0..100 {
        let world = random_position_world(&mut r);
        let env = random_grid_state(&mut r).unwrap();
        for k in 1..=3 {
            let mut b = EpisodicBuffer::new();
            expand(
                &mut b,
                world.observation_code(),
                &world,
                &OracleDynamics::new(&world),
                &exhaustive(k),
                &mut r,
            )
            .unwrap();
            mismatches += usize::from(b.codes() != &reachable_positions(&world, k));
            mismatches +=
                usize::from(b.codes() != &bfs_reachable(&world, k, DEFAULT_STATE_CAP).unwrap());

            let mut b = EpisodicBuffer::new();
            expand(
                &mut b,
                env.observation_code(),
                &env,
                &OracleDynamics::for_grid(),
                &exhaustive(k),
                &mut r,
            )
            .unwrap();
            mismatches +=
                usize::from(b.codes() != &bfs_reachable(&env, k, DEFAULT_STATE_CAP).unwrap());
            checks += 3;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(30),
        format!("{checks} comparisons over 100 position worlds + 100 grid states, {mismatches} mismatches, {elapsed:.2?}"),
    )
}

// 3 ----------------------------------------------------------------------

fn reward_audit() -> Outcome {
    let base = TrainConfig {
        episodes: 40,
        seed: 17,
        ..TrainConfig::default()
    };
    let configs = [
        TrainConfig {
            reward: RewardKind::Gobi,
            ..base.clone()
        },
        TrainConfig {
            reward: RewardKind::EpisodicOnly,
            ..base.clone()
        },
        TrainConfig {
            reward: RewardKind::Indicator,
            ..base.clone()
        },
        TrainConfig {
            reward: RewardKind::LifelongOnly,
            ..base.clone()
        },
        TrainConfig {
            reward: RewardKind::Gobi,
            dynamics: DynamicsBackend::TabularOnline,
            expansion: ExpansionConfig {
                k: 2,
                n: 7,
                action_mode: ActionMode::SampleRandom,
            },
            ..base.clone()
        },
        TrainConfig {
            env: "keycorridor-S3-R2".parse().unwrap(),
            ..base.clone()
        },
    ];
    let mut steps = 0usize;
    let mut mismatches = 0usize;
    for c in &configs {
        let run = train(c).unwrap();
        let mut counts: HashMap<HashCode, u64> = HashMap::new();
        for ep in &run.episodes {
            let mut prev_size: Option<u64> = None;
            for s in &ep.steps {
                let n = counts.entry(s.next_obs_hash).or_default();
                *n += 1;
                let lifelong = 1.0 / (*n as f64).sqrt();
                let delta = s.delta_m as f64;
                let expected = match c.reward {
                    RewardKind::Extrinsic => 0.0,
                    RewardKind::Gobi => delta * lifelong,
                    RewardKind::EpisodicOnly => delta,
                    RewardKind::Indicator => {
                        if s.delta_m > 0 {
                            lifelong
                        } else {
                            0.0
                        }
                    }
                    RewardKind::LifelongOnly => lifelong,
                };
                mismatches += usize::from(expected.to_bits() != s.r_int.to_bits());
                if let Some(p) = prev_size {
                    mismatches += usize::from(s.buffer_size - p != s.delta_m);
                }
                if c.reward.uses_episodic() {
                    prev_size = Some(s.buffer_size);
                }
                steps += 1;
            }
        }
    }
    outcome(
        mismatches == 0,
        format!(
            "{steps} logged steps over {} runs, {mismatches} mismatches",
            configs.len()
        ),
    )
}

// 4 ----------------------------------------------------------------------

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dd_mul(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let p = a.0 * b.0;
    let e = a.0.mul_add(b.0, -p) + (a.0 * b.1 + a.1 * b.0);
    two_sum(p, e)
}

/// `lambda0 * (1 - rho)^n` in double-double arithmetic.
fn decay_oracle(lambda0: f64, rho: f64, n: u64) -> f64 {
    let mut base = two_sum(1.0, -rho);
    let mut acc = (1.0, 0.0);
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc = dd_mul(acc, base);
        }
        base = dd_mul(base, base);
        e >>= 1;
    }
    let r = dd_mul(acc, (lambda0, 0.0));
    r.0 + r.1
}

fn decay_schedule() -> Outcome {
    let mut r = rng(4);
    let mut worst = 0.0f64;
    let mut first_exact = true;
    for _ in 0..1000 {
        let lambda0 = r.random_range(1e-4..1.0);
        let rho = 10f64.powf(r.random_range(-9.0..-3.0));
        let horizon = r.random_range(1..=2000u64);
        let e = r.random_range(1..=5000u64);
        let s = DecaySchedule {
            lambda0,
            rho,
            horizon,
        };
        let got = s.lambda(e);
        let want = decay_oracle(lambda0, rho, (e - 1) * horizon);
        let err = if want > 1e-290 {
            ((got - want) / want).abs()
        } else {
            (got - want).abs()
        };
        worst = worst.max(err);
        first_exact &= s.lambda(1).to_bits() == lambda0.to_bits();
    }
    outcome(worst <= 1e-9 && first_exact, format!("1000 tuples, worst relative error {worst:.2e}, lambda(1) = lambda0 exactly: {first_exact}"))
}

// 5 ----------------------------------------------------------------------

fn count_sequence() -> Outcome {
    let mut counts = LifelongCount::new();
    let mut bad = 0;
    for v in 1..=10_000u32 {
        bad += usize::from(counts.count_bonus(HashCode(42)) != 1.0 / f64::from(v).sqrt());
        // interleaved visits elsewhere must not disturb the sequence
        counts.count_bonus(HashCode(u64::from(v) + 1000));
    }
    outcome(
        bad == 0,
        format!("10000 repeated visits, {bad} deviations from 1/sqrt(v)"),
    )
}

// 6 ----------------------------------------------------------------------

fn knn_oracle(bank: &[Vec<f64>], y: &[f64], k: usize) -> f64 {
    let mut d: Vec<f64> = bank
        .iter()
        .map(|b| {
            b.iter()
                .zip(y)
                .map(|(a, c)| (a - c) * (a - c))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d[k - 1].ln_1p()
}

fn re3_bonus() -> Outcome {
    let mut r = rng(6);
    let params = Re3Params {
        k_nn: 3,
        dim: 16,
        seed: 1,
    };
    let sizes = [3usize, 10, 100, 1000, 10_000];
    let mut worst = 0.0f64;
    let mut queries = 0;
    for (i, &size) in sizes.iter().enumerate() {
        let mut mem = Re3Memory::new(4, params).unwrap();
        let mut bank = Vec::with_capacity(size);
        for _ in 0..size {
            let v: Vec<f64> = (0..params.dim)
                .map(|_| StandardNormal.sample(&mut r))
                .collect();
            mem.push(&v);
            bank.push(v);
        }
        let n_queries = if i == sizes.len() - 1 {
            1000 - 4 * 50
        } else {
            50
        };
        for _ in 0..n_queries {
            let y: Vec<f64> = (0..params.dim)
                .map(|_| StandardNormal.sample(&mut r))
                .collect();
            worst = worst.max((mem.bonus(&y) - knn_oracle(&bank, &y, params.k_nn)).abs());
            queries += 1;
        }
    }
    let y: Vec<f64> = (0..params.dim)
        .map(|_| StandardNormal.sample(&mut r))
        .collect();
    let mut same = Re3Memory::new(4, params).unwrap();
    for _ in 0..params.k_nn {
        same.push(&y);
    }
    let identical = same.bonus(&y);
    outcome(
        worst <= 1e-12 && identical == 0.0,
        format!("{queries} queries against banks up to 10^4, worst error {worst:.2e}, identical bank bonus {identical}"),
    )
}

// 7 ----------------------------------------------------------------------

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn simhash_properties() -> Outcome {
    let dim = 32;
    let hasher = SimHasher::new(dim, SimHasher::DEFAULT_BITS, 7);
    let mut r = rng(7);
    let gauss =
        |r: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| StandardNormal.sample(r)).collect() };

    let mut scale_breaks = 0;
    for _ in 0..1000 {
        let v = gauss(&mut r);
        let c = 10f64.powf(r.random_range(-3.0..3.0));
        let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
        scale_breaks +=
            usize::from(hasher.simhash(&v).unwrap() != hasher.simhash(&scaled).unwrap());
    }

    let mut gap = 0.0;
    for _ in 0..1000 {
        let u = unit(gauss(&mut r));
        // random angle: mix u with a unit vector orthogonal to it
        let w = gauss(&mut r);
        let proj: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
        let w = unit(w.iter().zip(&u).map(|(a, b)| a - proj * b).collect());
        let phi = r.random_range(0.0..std::f64::consts::PI);
        let v: Vec<f64> = u
            .iter()
            .zip(&w)
            .map(|(a, b)| phi.cos() * a + phi.sin() * b)
            .collect();
        let theta = u
            .iter()
            .zip(&v)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            .clamp(-1.0, 1.0)
            .acos();
        let diff = hasher
            .simhash(&u)
            .unwrap()
            .hamming(&hasher.simhash(&v).unwrap());
        gap += f64::from(diff) / SimHasher::DEFAULT_BITS as f64 - theta / std::f64::consts::PI;
    }
    let mean_gap = gap / 1000.0;
    outcome(
        scale_breaks == 0 && mean_gap.abs() <= 0.03,
        format!("scale changes {scale_breaks}/1000, mean(differing fraction - theta/pi) = {mean_gap:+.4}"),
    )
}

// 8 ----------------------------------------------------------------------

fn dynamics_accuracy() -> Outcome {
    let spec: EnvSpec = "multiroom-N2-S5".parse().unwrap();
    let records = collect_random_transitions(|_| spec.generate(1), 5000, 8).unwrap();
    let model = train_tabular(&records, OutputMode::Pano).unwrap();
    let hits = records
        .iter()
        .filter(|rec| {
            model
                .predict_code(rec.pano_hash, rec.action)
                .is_some_and(|p| *p.observation == rec.next_obs)
        })
        .count();
    let tabular = hits as f64 / records.len() as f64;

    let kc: EnvSpec = "keycorridor-S3-R3".parse().unwrap();
    let mut held = collect_labeled_transitions(|s| spec.generate(s), 2000, 99).unwrap();
    held.extend(collect_labeled_transitions(|s| kc.generate(s), 2000, 98).unwrap());
    let oracle = eval_accuracy(&OracleDynamics::for_grid(), &held).unwrap();
    outcome(
        tabular == 1.0 && oracle == 1.0,
        format!(
            "tabular {tabular} on {} own records (fixed layout), oracle {oracle} on {} held-out",
            records.len(),
            held.len()
        ),
    )
}

// 9-11 -------------------------------------------------------------------

const ORDERING_SEEDS: u64 = 20;
const ORDERING_EPISODES: usize = 3000;

struct Arm {
    first_success: Vec<u64>,
    greedy_success: f64,
}

impl Arm {
    fn median(&self) -> f64 {
        let mut v = self.first_success.clone();
        v.sort_unstable();
        let n = v.len();
        (v[(n - 1) / 2] + v[n / 2]) as f64 / 2.0
    }
}

struct Ordering {
    gobi: Arm,
    lifelong: Arm,
    indicator: Arm,
    gobi_k2: Arm,
    elapsed: Duration,
}

fn ordering_arm(reward: RewardKind, expansion: ExpansionConfig) -> Arm {
    let env: EnvSpec = "multiroom-N2-S5".parse().unwrap();
    let configs: Vec<TrainConfig> = (0..ORDERING_SEEDS)
        .map(|seed| TrainConfig {
            env,
            reward,
            expansion,
            dynamics: DynamicsBackend::Oracle,
            lambda0: 0.01,
            episodes: ORDERING_EPISODES,
            epsilon: EpsilonSchedule {
                start: 0.3,
                end: 0.3,
                fraction: 0.0,
            },
            seed,
            record_steps: false,
            ..TrainConfig::default()
        })
        .collect();
    let runs: Vec<TrainRun> = train_seeds(&configs).unwrap();
    let first_success = runs
        .iter()
        .map(|r| r.first_success().unwrap_or(ORDERING_EPISODES as u64 + 1))
        .collect();
    let greedy_success = runs
        .iter()
        .map(|r| evaluate(&r.qtable, &env, 100, 12345).unwrap().success_rate)
        .sum::<f64>()
        / runs.len() as f64;
    Arm {
        first_success,
        greedy_success,
    }
}

fn ordering() -> &'static Ordering {
    static CELL: OnceLock<Ordering> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let k1 = ExpansionConfig {
            k: 1,
            n: 7,
            action_mode: ActionMode::EnumerateAll,
        };
        let k2 = ExpansionConfig {
            k: 2,
            n: 7,
            action_mode: ActionMode::SampleRandom,
        };
        Ordering {
            gobi: ordering_arm(RewardKind::Gobi, k1),
            lifelong: ordering_arm(RewardKind::LifelongOnly, k1),
            indicator: ordering_arm(RewardKind::Indicator, k1),
            gobi_k2: ordering_arm(RewardKind::Gobi, k2),
            elapsed: start.elapsed(),
        }
    })
}

fn gobi_beats_lifelong_only() -> Outcome {
    let o = ordering();
    let (g, l) = (o.gobi.median(), o.lifelong.median());
    outcome(
        g < l && o.gobi.greedy_success >= o.lifelong.greedy_success,
        format!(
            "median first success GoBI {g} vs lifelong-only {l}; greedy success {:.3} vs {:.3}; 4 arms trained in {:.0?}",
            o.gobi.greedy_success, o.lifelong.greedy_success, o.elapsed
        ),
    )
}

fn indicator_not_better() -> Outcome {
    let o = ordering();
    let (g, ind) = (o.gobi.median(), o.indicator.median());
    outcome(
        ind >= g,
        format!("median first success indicator {ind} vs GoBI {g}"),
    )
}

fn two_step_not_worse() -> Outcome {
    let o = ordering();
    let (k1, k2) = (o.gobi.median(), o.gobi_k2.median());
    outcome(
        k2 <= k1,
        format!("median first success k=2 sampled {k2} vs k=1 {k1}"),
    )
}

// 12 ---------------------------------------------------------------------

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        env: "keycorridor-S3-R2".parse().unwrap(),
        seeds: vec![3, 1, 4],
        episodes: 25,
        dynamics: DynamicsBackend::TabularOnline,
        k: 2,
        action_mode: ActionMode::SampleRandom,
        curve_interval: 200,
        curve_window: 5,
        ..ExperimentConfig::default()
    };
    let mut differing = Vec::new();
    let mut compared = 0;
    for (name, cfg) in [
        ("tabular-online keycorridor", base.clone()),
        (
            "oracle multiroom",
            ExperimentConfig {
                env: "multiroom-N3-S4".parse().unwrap(),
                dynamics: DynamicsBackend::Oracle,
                k: 1,
                action_mode: ActionMode::EnumerateAll,
                ..base.clone()
            },
        ),
    ] {
        let a = dir.path().join(format!("{name}-a"));
        let b = dir.path().join(format!("{name}-b"));
        run(&ExperimentConfig {
            out: a.clone(),
            ..cfg.clone()
        })
        .unwrap();
        run(&ExperimentConfig {
            out: b.clone(),
            ..cfg
        })
        .unwrap();
        let mut files = vec!["aggregate.csv".to_string()];
        for s in &base.seeds {
            files.push(format!("seed_{s}.csv"));
            files.push(format!("episodes/seed_{s}.csv"));
            files.push(format!("traces/seed_{s}.csv"));
        }
        for f in files {
            compared += 1;
            if std::fs::read(a.join(&f)).unwrap() != std::fs::read(b.join(&f)).unwrap() {
                differing.push(format!("{name}/{f}"));
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!("{compared} CSV files compared, differing: {differing:?}"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        (
            "corridor expansion adds 3 states on s1->s2",
            corridor_expansion,
        ),
        (
            "oracle expansion equals BFS reachability",
            oracle_equivalence,
        ),
        ("logged intrinsic rewards replay exactly", reward_audit),
        ("decay schedule matches extended precision", decay_schedule),
        ("count bonus sequence", count_sequence),
        ("RE3 bonus matches exhaustive k-NN", re3_bonus),
        ("SimHash scale invariance and locality", simhash_properties),
        ("tabular and oracle dynamics accuracy", dynamics_accuracy),
        (
            "GoBI reaches first success sooner than lifelong-only",
            gobi_beats_lifelong_only,
        ),
        (
            "indicator ablation is no better than GoBI",
            indicator_not_better,
        ),
        (
            "two-step sampled expansion is no worse than one-step",
            two_step_not_worse,
        ),
        (
            "identical seeds give byte-identical CSV outputs",
            determinism,
        ),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += usize::from(!result.pass);
        println!(
            "criterion {:>2} {} {name}: {} [{:.1?}]",
            i + 1,
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            start.elapsed()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
