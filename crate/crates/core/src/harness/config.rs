use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{Mode, TrackerParams};
use crate::capture::ModePolicy;
use crate::chemistry::{Multiset, Payload, ReactionRule, COUNT_AGGREGATE_WORDS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// `molecules` integers and one rule consuming any two of them.
    BenchmarkConsume2,
    /// The ten-word count/aggregate program. Ignores `molecules`.
    CountAggregate,
}

impl Scenario {
    pub fn rules(self) -> Vec<ReactionRule> {
        match self {
            Scenario::BenchmarkConsume2 => vec![ReactionRule::consume2()],
            Scenario::CountAggregate => vec![ReactionRule::count(), ReactionRule::aggregate()],
        }
    }

    pub fn initial_payloads(self, molecules: u64) -> Vec<Payload> {
        match self {
            Scenario::BenchmarkConsume2 => (0..molecules as i64).map(Payload::Int).collect(),
            Scenario::CountAggregate => COUNT_AGGREGATE_WORDS.iter().map(|w| Payload::from(*w)).collect(),
        }
    }

    /// Reactions still needed before inertia. Exact for both scenarios: every
    /// run of either program performs the same number of reactions.
    pub fn reactions_left(self, solution: &Multiset) -> u64 {
        match self {
            Scenario::BenchmarkConsume2 => solution.len() as u64 / 2,
            Scenario::CountAggregate => {
                let count = ReactionRule::count();
                let (mut words, mut ints) = (0u64, 0u64);
                for (_, p) in solution.live() {
                    match p {
                        Payload::Int(_) => ints += 1,
                        Payload::Str(_) if count.matches(&[p]) => words += 1,
                        Payload::Str(_) => {}
                    }
                }
                // each word becomes an int, then all ints fold into one
                words + (words + ints).saturating_sub(1)
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::BenchmarkConsume2 => "benchmark-consume2",
            Scenario::CountAggregate => "count-aggregate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    OptimisticOnly,
    PessimisticOnly,
    Mixed,
}

impl RunMode {
    pub fn policy(self, threshold: f64) -> ModePolicy {
        match self {
            RunMode::OptimisticOnly => ModePolicy::Forced(Mode::Optimistic),
            RunMode::PessimisticOnly => ModePolicy::Forced(Mode::Pessimistic),
            RunMode::Mixed => ModePolicy::Adaptive { threshold },
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::OptimisticOnly => "optimistic",
            RunMode::PessimisticOnly => "pessimistic",
            RunMode::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} must be at least {min}")]
    TooSmall { field: &'static str, min: u64 },
    #[error("threshold must be in (0, 1], got {0}")]
    Threshold(f64),
    #[error("local weight must be in [0, 1], got {0}")]
    LocalWeight(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub nodes: u32,
    pub molecules: u64,
    pub scenario: Scenario,
    pub mode: RunMode,
    pub threshold: f64,
    pub w_local: usize,
    pub w_remote: usize,
    pub local_weight: f64,
    pub seed: u64,
    pub runs: u32,
    pub max_steps: u64,
    pub cycle_len: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let tracker = TrackerParams::default();
        SimConfig {
            nodes: 250,
            molecules: 15_000,
            scenario: Scenario::BenchmarkConsume2,
            mode: RunMode::Mixed,
            threshold: 0.7,
            w_local: tracker.w_local,
            w_remote: tracker.w_remote,
            local_weight: tracker.local_weight,
            seed: 42,
            runs: 50,
            max_steps: 500,
            cycle_len: 12,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let at_least = |field, value: u64, min| {
            if value < min {
                Err(ConfigError::TooSmall { field, min })
            } else {
                Ok(())
            }
        };
        at_least("nodes", self.nodes.into(), 1)?;
        at_least("runs", self.runs.into(), 1)?;
        at_least("max_steps", self.max_steps, 1)?;
        at_least("cycle_len", self.cycle_len, 1)?;
        at_least("w_local", self.w_local as u64, 1)?;
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(ConfigError::Threshold(self.threshold));
        }
        if !(0.0..=1.0).contains(&self.local_weight) {
            return Err(ConfigError::LocalWeight(self.local_weight));
        }
        Ok(())
    }

    pub fn tracker_params(&self) -> TrackerParams {
        TrackerParams { w_local: self.w_local, w_remote: self.w_remote, local_weight: self.local_weight }
    }

    pub fn policy(&self) -> ModePolicy {
        self.mode.policy(self.threshold)
    }

    /// Seed of the `index`-th repetition.
    pub fn run_seed(&self, index: u32) -> u64 {
        self.seed.wrapping_add(u64::from(index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_evaluation_setting() {
        let c = SimConfig::default();
        assert_eq!((c.nodes, c.molecules, c.runs, c.max_steps, c.cycle_len), (250, 15_000, 50, 500, 12));
        assert_eq!(c.threshold, 0.7);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = SimConfig { threshold: 0.0, ..SimConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::Threshold(0.0)));
        let bad = SimConfig { threshold: 1.5, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { runs: 0, ..SimConfig::default() };
        assert_eq!(bad.validate(), Err(ConfigError::TooSmall { field: "runs", min: 1 }));
        let bad = SimConfig { cycle_len: 0, ..SimConfig::default() };
        assert!(bad.validate().is_err());
        let ok = SimConfig { threshold: 1.0, ..SimConfig::default() };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn config_json_uses_defaults_for_missing_fields() {
        let c: SimConfig = serde_json::from_str(r#"{"nodes": 10, "mode": "pessimistic-only"}"#).unwrap();
        assert_eq!(c.nodes, 10);
        assert_eq!(c.mode, RunMode::PessimisticOnly);
        assert_eq!(c.molecules, 15_000);
        assert!(serde_json::from_str::<SimConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn reactions_left_count_aggregate() {
        let start = Multiset::from_payloads(Scenario::CountAggregate.initial_payloads(0));
        // 9 words to count, then 9 ints to fold into one: 9 + 8
        assert_eq!(Scenario::CountAggregate.reactions_left(&start), 17);
        let end = Multiset::from_payloads([Payload::from("a"), Payload::Int(49)]);
        assert_eq!(Scenario::CountAggregate.reactions_left(&end), 0);
        let bench = Multiset::from_payloads(Scenario::BenchmarkConsume2.initial_payloads(7));
        assert_eq!(Scenario::BenchmarkConsume2.reactions_left(&bench), 3);
    }
}
