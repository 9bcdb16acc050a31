use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

#[derive(Debug, Parser)]
#[command(name = "mpdp", version, about = "Verification suites and training runs for planning-distilled soft actor-critic")]
pub struct Cli {
    /// Run seed; for `train` it overrides the `seed` hyperparameter.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Artifact directory for `train`, JSON report path for `verify` and `report`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// JSON config layered between the defaults and the flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Suppress progress lines.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a property suite and exit nonzero if any case fails.
    Verify {
        #[arg(long)]
        suite: String,
        /// Number of cases; defaults to the suite's own size.
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Train an agent and write a run artifact.
    Train(Box<TrainArgs>),
    /// Summarize a run artifact.
    Report {
        artifact: PathBuf,
        /// Print the JSON summary instead of the text table.
        #[arg(long)]
        json: bool,
    },
}

/// A flag value that may be the literal `none`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nullable<T>(pub Option<T>);

impl<T: Into<Value>> From<Nullable<T>> for Value {
    fn from(v: Nullable<T>) -> Value {
        v.0.map_or(Value::Null, Into::into)
    }
}

fn nullable<T: std::str::FromStr>(s: &str) -> Result<Nullable<T>, String>
where
    T::Err: std::fmt::Display,
{
    if s.eq_ignore_ascii_case("none") {
        return Ok(Nullable(None));
    }
    s.parse::<T>().map(|v| Nullable(Some(v))).map_err(|e| format!("expected a value or 'none': {e}"))
}

#[derive(Debug, Default, Args)]
pub struct TrainArgs {
    /// One of chain, gridworld, pendulum.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,

    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long)]
    pub buffer_capacity: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Natural-log stop threshold, or `none` to plan to the horizon cap.
    #[arg(long, value_parser = nullable::<f64>)]
    pub uncertainty_threshold: Option<Nullable<f64>>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub max_horizon: Option<usize>,
    #[arg(long)]
    pub policy_updates_per_step: Option<usize>,
    #[arg(long)]
    pub model_train_interval: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub update_interval: Option<usize>,
    /// Comma-separated layer widths.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub model_hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub model_learning_rate: Option<f64>,
    #[arg(long)]
    pub model_batch_size: Option<usize>,
    #[arg(long)]
    pub model_epochs: Option<usize>,
    /// Minibatch cap per model epoch, or `none`.
    #[arg(long, value_parser = nullable::<usize>)]
    pub model_max_batches: Option<Nullable<usize>>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub twin_q: Option<bool>,
    #[arg(long)]
    pub critic_step_size: Option<f64>,
    #[arg(long)]
    pub smoothing: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
    #[arg(long)]
    pub record_wall_time: Option<bool>,
}

fn put<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), v.into());
    }
}

impl TrainArgs {
    /// The flag layer as a partial config object.
    pub fn layer(&self) -> Map<String, Value> {
        let mut m = Map::new();
        put(&mut m, "env", self.env.clone());
        put(&mut m, "steps", self.steps);
        put(&mut m, "ensemble_size", self.ensemble_size);
        put(&mut m, "buffer_capacity", self.buffer_capacity);
        put(&mut m, "batch_size", self.batch_size);
        put(&mut m, "learning_rate", self.learning_rate);
        put(&mut m, "uncertainty_threshold", self.uncertainty_threshold);
        put(&mut m, "alpha", self.alpha);
        put(&mut m, "beta", self.beta);
        put(&mut m, "max_horizon", self.max_horizon);
        put(&mut m, "policy_updates_per_step", self.policy_updates_per_step);
        put(&mut m, "model_train_interval", self.model_train_interval);
        put(&mut m, "gamma", self.gamma);
        put(&mut m, "update_interval", self.update_interval);
        put(&mut m, "hidden", self.hidden.clone());
        put(&mut m, "model_hidden", self.model_hidden.clone());
        put(&mut m, "model_learning_rate", self.model_learning_rate);
        put(&mut m, "model_batch_size", self.model_batch_size);
        put(&mut m, "model_epochs", self.model_epochs);
        put(&mut m, "model_max_batches", self.model_max_batches);
        put(&mut m, "tau", self.tau);
        put(&mut m, "twin_q", self.twin_q);
        put(&mut m, "critic_step_size", self.critic_step_size);
        put(&mut m, "smoothing", self.smoothing);
        put(&mut m, "grad_clip", self.grad_clip);
        put(&mut m, "eval_episodes", self.eval_episodes);
        put(&mut m, "record_wall_time", self.record_wall_time);
        m
    }
}
