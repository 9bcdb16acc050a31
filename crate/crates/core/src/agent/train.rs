//! The outer training loop and its on-disk run artifact.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::continuous::{
    critic_update_continuous, farsighted_improvement_continuous, ContinuousCritic, ContinuousStack, RolloutNoise,
};
use super::hyperparams::{Hyperparams, RunConfig};
use super::tabular::{critic_update_tabular, farsighted_improvement_tabular, TabularCritic, TabularStack};
use crate::buffer::TransitionBuffer;
use crate::ensemble::{train_categorical, CategoricalEnsemble, GaussianConfig, GaussianEnsemble, GaussianTrainer};
use crate::error::{Error, Result};
use crate::mdp::{state_delta, ContinuousEnv, TabularEnv};
use crate::nn::{Mlp, SquashedGaussianPolicy};
use crate::rng::{Stream, Streams};
use crate::soft_pi::{reward_return, soft_value_iteration, TabularPolicy};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

pub const METRICS_COLUMNS: [&str; 7] = [
    "env_step",
    "episode_return_mean",
    "achieved_horizon_mean",
    "model_error_l2_mean",
    "critic_loss",
    "policy_objective",
    "wall_ms",
];

/// One line of `metrics.csv`, summarizing a model-training interval.
/// Quantities with no samples in the interval are `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub env_step: usize,
    /// Undiscounted return of episodes that ended in the interval.
    pub episode_return_mean: f64,
    pub achieved_horizon_mean: f64,
    /// Mean L2 distance between the ensemble's mean prediction and the
    /// observed next state, over the interval's transitions, measured before
    /// the model is refit on them.
    pub model_error_l2_mean: f64,
    pub critic_loss: f64,
    pub policy_objective: f64,
    /// Empty unless wall-clock recording is enabled; it is the only
    /// non-reproducible column.
    pub wall_ms: Option<f64>,
}

/// Reads a metrics file written by a training run.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| artifact_error(path, &e))?.clone();
    if header.iter().ne(METRICS_COLUMNS) && !header.is_empty() {
        return Err(Error::Artifact {
            path: path.display().to_string(),
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| artifact_error(path, &e))?);
    }
    Ok(rows)
}

fn artifact_error(path: &Path, e: &csv::Error) -> Error {
    let message = match e.position() {
        Some(p) => format!("line {}: {e}", p.line()),
        None => e.to_string(),
    };
    Error::Artifact {
        path: path.display().to_string(),
        message,
    }
}

/// Final performance summary. Fields that do not apply to the run's tier
/// are `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean undiscounted return of sampled-action episodes.
    pub stochastic_return: Option<f64>,
    /// Same, acting with the squashed mean action.
    pub mean_action_return: Option<f64>,
    /// Exact discounted reward return of the argmax of head 0 from the start state.
    pub greedy_return: Option<f64>,
    /// Exact discounted reward return of the argmax of the soft-optimal policy.
    pub optimal_greedy_return: Option<f64>,
    /// Soft-optimal value of the start state.
    pub soft_optimal_value: Option<f64>,
    /// `|greedy - optimal_greedy| / |optimal_greedy|`.
    pub relative_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnapshotParams {
    Tabular {
        heads: Vec<TabularPolicy>,
        critic: TabularCritic,
        ensemble: Option<CategoricalEnsemble>,
    },
    Continuous {
        heads: Vec<SquashedGaussianPolicy>,
        q: Vec<Mlp>,
        v: Mlp,
        v_target: Mlp,
        ensemble: Option<GaussianEnsemble>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub env: String,
    pub env_steps: usize,
    pub episodes: usize,
    /// Set when the run stopped on an error; the parameters are the last ones reached.
    pub error: Option<String>,
    pub evaluation: Evaluation,
    pub params: SnapshotParams,
}

impl Snapshot {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Artifact {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub snapshot: Snapshot,
}

struct ArtifactWriter {
    dir: PathBuf,
    metrics: csv::Writer<File>,
}

impl ArtifactWriter {
    fn create(config: &RunConfig) -> Result<Self> {
        let dir = config.out.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let cfg = dir.join(CONFIG_FILE);
        std::fs::write(&cfg, config.to_json_string()).map_err(|e| Error::io(&cfg, e))?;
        let path = dir.join(METRICS_FILE);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut metrics = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        metrics.write_record(METRICS_COLUMNS).map_err(|e| csv_io(&path, e))?;
        metrics.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self { dir, metrics })
    }

    fn row(&mut self, row: &MetricsRow) -> Result<()> {
        let path = self.dir.join(METRICS_FILE);
        self.metrics.serialize(row).map_err(|e| csv_io(&path, e))?;
        self.metrics.flush().map_err(|e| Error::io(&path, e))
    }

    fn snapshot(&self, snapshot: &Snapshot) -> Result<()> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let mut text = serde_json::to_string(snapshot)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Running sums for one metrics interval.
#[derive(Default)]
struct Interval {
    returns: Vec<f64>,
    horizons: (f64, usize),
    model_error: (f64, usize),
    critic: (f64, usize),
    objective: (f64, usize),
}

fn ratio((sum, n): (f64, usize)) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl Interval {
    fn finish(&mut self, env_step: usize, started: Option<Instant>) -> MetricsRow {
        let done = std::mem::take(self);
        MetricsRow {
            env_step,
            episode_return_mean: crate::stats::mean(&done.returns).unwrap_or(f64::NAN),
            achieved_horizon_mean: ratio(done.horizons),
            model_error_l2_mean: ratio(done.model_error),
            critic_loss: ratio(done.critic),
            policy_objective: ratio(done.objective),
            wall_ms: started.map(|t| t.elapsed().as_secs_f64() * 1e3),
        }
    }
}

fn add(acc: &mut (f64, usize), x: f64, n: usize) {
    acc.0 += x;
    acc.1 += n;
}

/// Runs the loop body and, whatever happens, writes a snapshot.
fn with_artifact<S>(
    config: &RunConfig,
    state: &mut S,
    body: impl FnOnce(&mut S, &mut ArtifactWriter, &mut Vec<MetricsRow>) -> Result<()>,
    finish: impl FnOnce(&mut S, Option<String>) -> Result<Snapshot>,
) -> Result<RunOutcome> {
    config.hyperparams.validate()?;
    let mut writer = ArtifactWriter::create(config)?;
    let mut metrics = Vec::new();
    let result = body(state, &mut writer, &mut metrics);
    let error = result.as_ref().err().map(|e| e.to_string());
    let snapshot = finish(state, error)?;
    writer.snapshot(&snapshot)?;
    result?;
    Ok(RunOutcome {
        dir: writer.dir,
        metrics,
        snapshot,
    })
}

struct TabularRun {
    env: TabularEnv,
    buffer: TransitionBuffer<usize, usize>,
    stack: TabularStack,
    critic: TabularCritic,
    model: Option<CategoricalEnsemble>,
    step: usize,
    episodes: usize,
}

/// Trains the discrete variant on `env`. The reward table and terminal flags
/// of the environment are known to the planner; transitions are learned.
pub fn train_tabular(
    env: TabularEnv,
    config: &RunConfig,
    progress: &mut dyn FnMut(&MetricsRow),
) -> Result<RunOutcome> {
    let hp = config.hyperparams.clone();
    let (ns, na) = (env.mdp.n_states(), env.mdp.n_actions());
    let mut run = TabularRun {
        buffer: TransitionBuffer::new(hp.buffer_capacity)?,
        stack: TabularStack::new(ns, na, hp.max_horizon, hp.learning_rate)?,
        critic: TabularCritic::zeros(ns, na),
        model: None,
        step: 0,
        episodes: 0,
        env,
    };
    let streams = Streams::new(hp.seed);
    let env_name = config.env.clone();
    with_artifact(
        config,
        &mut run,
        |run, writer, metrics| {
            let mut env_rng = streams.rng(Stream::Env);
            let mut act_rng = streams.rng(Stream::Noise);
            let mut batch_rng = streams.rng(Stream::BatchSampling);
            let mut model_rng = streams.rng(Stream::Ensemble);
            let clock = hp.record_wall_time.then(Instant::now);
            let rewards = run.env.mdp.rewards().to_vec();
            let terminal: Vec<bool> = (0..ns).map(|s| run.env.mdp.is_terminal(s)).collect();
            let mut interval = Interval::default();
            let mut fresh = Vec::new();
            let mut episode_return = 0.0;
            run.env.reset();
            while run.step < config.steps {
                let s = run.env.state();
                let a = crate::mdp::sample_categorical(run.stack.deployed().row(s), &mut act_rng);
                let t = run.env.step(a, &mut env_rng)?;
                episode_return += t.reward;
                let ended = t.terminal || t.truncated;
                fresh.push((t.state, t.action, t.next_state));
                run.buffer.push(t);
                run.step += 1;
                if ended {
                    interval.returns.push(std::mem::take(&mut episode_return));
                    run.episodes += 1;
                    run.env.reset();
                }

                if run.step % hp.model_train_interval == 0 {
                    if let Some(model) = &run.model {
                        for &(s, a, sn) in &fresh {
                            let p = model.mean_prediction(s, a);
                            let err: f64 = p
                                .iter()
                                .enumerate()
                                .map(|(j, x)| (x - if j == sn { 1.0 } else { 0.0 }).powi(2))
                                .sum();
                            add(&mut interval.model_error, err.sqrt(), 1);
                        }
                    }
                    fresh.clear();
                    let row = interval.finish(run.step, clock);
                    writer.row(&row)?;
                    progress(&row);
                    metrics.push(row);
                    run.model = Some(train_categorical(
                        &run.buffer,
                        ns,
                        na,
                        hp.ensemble_size,
                        hp.smoothing,
                        model_rng.random(),
                    )?);
                }

                let Some(model) = &run.model else { continue };
                if run.step % hp.update_interval != 0 {
                    continue;
                }
                for _ in 0..hp.policy_updates_per_step {
                    let batch: Vec<(usize, usize, f64)> = run
                        .buffer
                        .sample(hp.batch_size, &mut batch_rng)
                        .into_iter()
                        .map(|t| (t.state, t.action, t.reward))
                        .collect();
                    let policy = run.stack.deployed();
                    let losses = critic_update_tabular(&mut run.critic, &batch, model, &terminal, &policy, &hp)?;
                    add(&mut interval.critic, losses.total(), 1);
                    let starts: Vec<usize> = batch.iter().map(|b| b.0).collect();
                    let out = farsighted_improvement_tabular(
                        &starts,
                        &mut run.stack,
                        model,
                        &rewards,
                        &terminal,
                        &run.critic.v,
                        &hp,
                    )?;
                    add(&mut interval.objective, out.objective, 1);
                    add(&mut interval.horizons, out.mean_horizon * starts.len() as f64, starts.len());
                }
            }
            Ok(())
        },
        |run, error| {
            Ok(Snapshot {
                env: env_name.clone(),
                env_steps: run.step,
                episodes: run.episodes,
                error,
                evaluation: evaluate_tabular(&run.env, &run.stack.deployed(), &hp)?,
                params: SnapshotParams::Tabular {
                    heads: (0..run.stack.horizon()).map(|h| run.stack.head(h)).collect(),
                    critic: run.critic.clone(),
                    ensemble: run.model.clone(),
                },
            })
        },
    )
}

/// Exact returns of the learned and soft-optimal argmax policies.
pub fn evaluate_tabular(env: &TabularEnv, policy: &TabularPolicy, hp: &Hyperparams) -> Result<Evaluation> {
    let s0 = env.start_state;
    let optimum = soft_value_iteration(&env.mdp, hp.alpha, 1e-10, 1_000_000)?;
    let greedy = reward_return(&env.mdp, &policy.greedy())?[s0];
    let best = reward_return(&env.mdp, &optimum.policy.greedy())?[s0];
    Ok(Evaluation {
        stochastic_return: None,
        mean_action_return: None,
        greedy_return: Some(greedy),
        optimal_greedy_return: Some(best),
        soft_optimal_value: Some(optimum.v[s0]),
        relative_gap: Some((greedy - best).abs() / best.abs().max(f64::MIN_POSITIVE)),
    })
}

struct ContinuousRun<'e> {
    env: &'e mut dyn ContinuousEnv,
    buffer: TransitionBuffer<Vec<f64>, Vec<f64>>,
    stack: ContinuousStack,
    critic: ContinuousCritic,
    trainer: GaussianTrainer,
    trained: bool,
    step: usize,
    episodes: usize,
}

/// Trains the continuous variant on `env`, whose reward function is known
/// to the planner.
pub fn train_continuous(
    env: &mut dyn ContinuousEnv,
    config: &RunConfig,
    progress: &mut dyn FnMut(&MetricsRow),
) -> Result<RunOutcome> {
    let hp = config.hyperparams.clone();
    let streams = Streams::new(hp.seed);
    let angle = env.angle_dims();
    let (m, bound) = (env.action_dim(), env.action_bound());
    let mut init_rng = streams.rng(Stream::PolicyInit);
    let mut model_rng = streams.rng(Stream::Ensemble);
    let model_config = GaussianConfig {
        k: hp.ensemble_size,
        hidden: hp.model_hidden.clone(),
        epochs: hp.model_epochs,
        batch_size: hp.model_batch_size,
        lr: hp.model_learning_rate,
        max_batches_per_epoch: hp.model_max_batches,
        ..GaussianConfig::default()
    };
    let mut run = ContinuousRun {
        buffer: TransitionBuffer::new(hp.buffer_capacity)?,
        stack: ContinuousStack::new(&angle, m, bound, &hp, &mut init_rng)?,
        critic: ContinuousCritic::new(&angle, m, &hp, &mut init_rng)?,
        trainer: GaussianTrainer::new(env.state_dim(), m, &angle, model_config, &mut model_rng)?,
        trained: false,
        step: 0,
        episodes: 0,
        env,
    };
    let env_name = config.env.clone();
    with_artifact(
        config,
        &mut run,
        |run, writer, metrics| {
            let mut env_rng = streams.rng(Stream::Env);
            let mut noise_rng = streams.rng(Stream::Noise);
            let mut batch_rng = streams.rng(Stream::BatchSampling);
            let clock = hp.record_wall_time.then(Instant::now);
            let mut interval = Interval::default();
            let mut fresh = Vec::new();
            let mut episode_return = 0.0;
            let mut state = run.env.reset(&mut env_rng);
            let (d, k) = (run.env.state_dim(), hp.ensemble_size);
            while run.step < config.steps {
                let action = run.stack.sample_action(&state, &mut noise_rng)?;
                let t = run.env.step(&action)?;
                episode_return += t.reward;
                let ended = t.terminal || t.truncated;
                state = t.next_state.clone();
                fresh.push(t.clone());
                run.buffer.push(t);
                run.step += 1;
                if ended {
                    interval.returns.push(std::mem::take(&mut episode_return));
                    run.episodes += 1;
                    state = run.env.reset(&mut env_rng);
                }

                if run.step % hp.model_train_interval == 0 {
                    if run.trained {
                        let model = &run.trainer.ensemble;
                        for t in &fresh {
                            let pred = model.mean_prediction(&t.state, &t.action)?;
                            let err = state_delta(&t.next_state, &pred, &angle);
                            add(&mut interval.model_error, err.iter().map(|x| x * x).sum::<f64>().sqrt(), 1);
                        }
                    }
                    fresh.clear();
                    let row = interval.finish(run.step, clock);
                    writer.row(&row)?;
                    progress(&row);
                    metrics.push(row);
                    run.trainer.fit(&run.buffer, &mut model_rng)?;
                    run.trained = true;
                }

                if !run.trained || run.step % hp.update_interval != 0 {
                    continue;
                }
                for _ in 0..hp.policy_updates_per_step {
                    let batch = run.buffer.sample(hp.batch_size, &mut batch_rng);
                    let losses = critic_update_continuous(&mut run.critic, &batch, &run.stack, &hp, &mut noise_rng)?;
                    add(&mut interval.critic, losses.total(), 1);
                    let starts: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
                    let noise = RolloutNoise::draw(&mut noise_rng, hp.max_horizon, starts.len(), m, d, k);
                    let out = farsighted_improvement_continuous(
                        &starts,
                        &mut run.stack,
                        &run.trainer.ensemble,
                        &*run.env,
                        &run.critic,
                        &hp,
                        &noise,
                    )?;
                    add(&mut interval.objective, out.objective, 1);
                    for r in &out.records {
                        add(&mut interval.horizons, r.achieved_horizon as f64, 1);
                    }
                }
            }
            Ok(())
        },
        |run, error| {
            let mut eval_rng = streams.rng(Stream::Evaluation);
            let evaluation = evaluate_continuous(&mut *run.env, &run.stack, hp.eval_episodes, &mut eval_rng)?;
            Ok(Snapshot {
                env: env_name.clone(),
                env_steps: run.step,
                episodes: run.episodes,
                error,
                evaluation,
                params: SnapshotParams::Continuous {
                    heads: run.stack.heads.clone(),
                    q: run.critic.q.clone(),
                    v: run.critic.v.clone(),
                    v_target: run.critic.v_target.clone(),
                    ensemble: run.trained.then(|| run.trainer.ensemble.clone()),
                },
            })
        },
    )
}

/// Runs `episodes` evaluation episodes twice: sampling from head 0 and
/// acting with its mean action.
pub fn evaluate_continuous<R: Rng + ?Sized>(
    env: &mut dyn ContinuousEnv,
    stack: &ContinuousStack,
    episodes: usize,
    rng: &mut R,
) -> Result<Evaluation> {
    if episodes == 0 {
        return Ok(Evaluation::default());
    }
    let mut run = |stochastic: bool, rng: &mut R| -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..episodes {
            let mut env_rng = crate::rng::seeded(rng.random());
            let mut state = env.reset(&mut env_rng);
            loop {
                let a = if stochastic {
                    stack.sample_action(&state, rng)?
                } else {
                    stack.mean_action(&state)?
                };
                let t = env.step(&a)?;
                total += t.reward;
                if t.terminal || t.truncated {
                    break;
                }
                state = t.next_state;
            }
        }
        Ok(total / episodes as f64)
    };
    let stochastic = run(true, rng)?;
    let mean_action = run(false, rng)?;
    Ok(Evaluation {
        stochastic_return: Some(stochastic),
        mean_action_return: Some(mean_action),
        ..Evaluation::default()
    })
}
