//! Name-keyed registries of environments and verification suites.
//!
//! The command-line harness resolves `--env` and `--suite` through these, so
//! a new task or property family is one `register` call away.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::agent::{train_continuous, train_tabular, MetricsRow, RunConfig, RunOutcome};
use crate::error::{Error, Result};
use crate::mdp::{chain_mdp, gridworld_mdp, Pendulum, TabularEnv};
use crate::verify::{
    AllSuites, GradcheckSuite, Lemma1Suite, Lemma2Suite, OvrSuite, Theorem1Suite, Theorem2Suite, VerifySuite,
};

/// A `BTreeMap` of boxed strategies, so listings come out sorted.
pub struct Registry<T: ?Sized> {
    entries: BTreeMap<String, Box<T>>,
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: ?Sized> Registry<T> {
    /// Replaces any earlier entry with the same name.
    pub fn register(&mut self, name: &str, entry: Box<T>) {
        self.entries.insert(name.to_string(), entry);
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries.get(name).map(|b| b.as_ref()).ok_or_else(|| {
            Error::Usage(format!("unknown name '{name}' (expected one of: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

/// How to build an environment and train on it.
pub trait EnvStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn train(&self, config: &RunConfig, progress: &mut dyn FnMut(&MetricsRow)) -> Result<RunOutcome>;
}

pub const TABULAR_EPISODE_STEPS: usize = 100;

pub struct ChainEnv;
pub struct GridworldEnv;
pub struct PendulumEnv;

impl EnvStrategy for ChainEnv {
    fn name(&self) -> &'static str {
        "chain"
    }

    fn description(&self) -> &'static str {
        "six-state chain, start at the left end"
    }

    fn train(&self, config: &RunConfig, progress: &mut dyn FnMut(&MetricsRow)) -> Result<RunOutcome> {
        let env = TabularEnv::new(chain_mdp(config.hyperparams.gamma)?, 0, TABULAR_EPISODE_STEPS)?;
        train_tabular(env, config, progress)
    }
}

impl EnvStrategy for GridworldEnv {
    fn name(&self) -> &'static str {
        "gridworld"
    }

    fn description(&self) -> &'static str {
        "slippery 3x3 grid, start top-left, goal bottom-right"
    }

    fn train(&self, config: &RunConfig, progress: &mut dyn FnMut(&MetricsRow)) -> Result<RunOutcome> {
        let env = TabularEnv::new(gridworld_mdp(config.hyperparams.gamma)?, 0, TABULAR_EPISODE_STEPS)?;
        train_tabular(env, config, progress)
    }
}

impl EnvStrategy for PendulumEnv {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn description(&self) -> &'static str {
        "torque-limited pendulum swing-up, 200-step episodes"
    }

    fn train(&self, config: &RunConfig, progress: &mut dyn FnMut(&MetricsRow)) -> Result<RunOutcome> {
        train_continuous(&mut Pendulum::default(), config, progress)
    }
}

pub fn env_registry() -> Registry<dyn EnvStrategy> {
    let mut r: Registry<dyn EnvStrategy> = Registry::default();
    for env in [Box::new(ChainEnv) as Box<dyn EnvStrategy>, Box::new(GridworldEnv), Box::new(PendulumEnv)] {
        r.register(env.name(), env);
    }
    r
}

fn base_suites() -> Vec<Box<dyn VerifySuite>> {
    vec![
        Box::new(Lemma1Suite),
        Box::new(Theorem1Suite { starts: 20 }),
        Box::new(Lemma2Suite),
        Box::new(Theorem2Suite),
        Box::new(GradcheckSuite),
        Box::new(OvrSuite),
    ]
}

pub fn suite_registry() -> Registry<dyn VerifySuite> {
    let mut r: Registry<dyn VerifySuite> = Registry::default();
    for suite in base_suites() {
        r.register(suite.name(), suite);
    }
    r.register("all", Box::new(AllSuites { suites: base_suites() }));
    r
}

/// Default artifact directory for a run.
pub fn default_out_dir(env: &str, seed: u64) -> PathBuf {
    PathBuf::from("runs").join(format!("{env}-seed{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_sorted_and_complete() {
        assert_eq!(env_registry().names(), vec!["chain", "gridworld", "pendulum"]);
        assert_eq!(
            suite_registry().names(),
            vec!["all", "gradcheck", "lemma1", "lemma2", "ovr", "thm1", "thm2"]
        );
    }

    #[test]
    fn unknown_name_is_a_usage_error_listing_choices() {
        let r = suite_registry();
        match r.get("nonsense") {
            Err(Error::Usage(m)) => assert!(m.contains("lemma1")),
            other => panic!("expected usage error, got {:?}", other.map(|s| s.name())),
        }
    }

    #[test]
    fn registered_name_matches_strategy() {
        let r = env_registry();
        for n in r.names() {
            assert_eq!(r.get(n).unwrap().name(), n);
        }
    }
}
