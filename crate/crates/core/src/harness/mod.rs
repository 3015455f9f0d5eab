//! Runs configured simulations and collects their metrics.

pub mod cluster;
pub mod config;
pub mod metrics;
pub mod registry;

pub use cluster::{Cluster, Node};
pub use config::{ConfigError, RunMode, Scenario, SimConfig};
pub use metrics::{aggregate, classify_messages, theoretic_optimum, Aggregate, ReactionRecord, RunMetrics, TraceRecord};

use std::collections::HashSet;

use crate::adapt::Mode;
use crate::chemistry::{MoleculeId, Payload};

/// Consistency checks on a finished run. A correct run has all flags true.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Audit {
    /// No molecule was consumed by two reactions.
    pub no_double_consumption: bool,
    /// Every consumed molecule was either initial or produced by an earlier reaction.
    pub consumed_known: bool,
    /// inserted = live + consumed.
    pub ledger_balanced: bool,
    /// The ledger never rejected a reaction.
    pub no_violations: bool,
    /// Every sent message was delivered or is still in flight.
    pub transport_conserved: bool,
}

impl Audit {
    pub fn ok(&self) -> bool {
        self.no_double_consumption
            && self.consumed_known
            && self.ledger_balanced
            && self.no_violations
            && self.transport_conserved
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub seed: u64,
    pub metrics: RunMetrics,
    pub reactions: Vec<ReactionRecord>,
    pub trace: Vec<TraceRecord>,
    /// Live payloads at the end, sorted.
    pub final_solution: Vec<Payload>,
    pub audit: Audit,
}

/// Builds the cluster a run with `seed` starts from.
pub fn build_cluster(config: &SimConfig, seed: u64) -> Cluster {
    Cluster::new(
        config.nodes,
        config.scenario.initial_payloads(config.molecules),
        config.scenario.rules(),
        config.tracker_params(),
        seed,
    )
}

/// Drives an already built cluster until inertia or `config.max_steps`.
pub fn drive(mut cluster: Cluster, config: &SimConfig, seed: u64) -> RunOutput {
    let policy = config.policy();
    let n = cluster.nodes().len();
    let initial: HashSet<MoleculeId> = cluster.solution().live().map(|(id, _)| id).collect();

    let mut metrics = RunMetrics::default();
    let mut decision: Vec<Option<Mode>> = vec![None; n];
    let mut switched_at: Vec<Option<u64>> = vec![None; n];

    let mut start_and_record = |cluster: &mut Cluster, metrics: &mut RunMetrics, step: u64| {
        cluster.start_idle_attempts(policy);
        let mut optimistic = 0;
        for (i, node) in cluster.nodes().iter().enumerate() {
            let now = node.requester.last_decision();
            if now == Some(Mode::Pessimistic) && decision[i] != Some(Mode::Pessimistic) {
                switched_at[i] = Some(step);
            }
            decision[i] = now;
            if now != Some(Mode::Pessimistic) {
                optimistic += 1;
            }
        }
        metrics.reactions_left.push(config.scenario.reactions_left(cluster.solution()));
        metrics.optimistic_nodes.push(optimistic);
        metrics.pessimistic_nodes.push(n as u32 - optimistic);
    };

    start_and_record(&mut cluster, &mut metrics, 0);
    for step in 1..=config.max_steps {
        cluster.step();
        if cluster.is_inert() {
            metrics.steps_to_inertia = Some(step);
            metrics.reactions_left.push(config.scenario.reactions_left(cluster.solution()));
            let last = |v: &Vec<u32>| *v.last().expect("step 0 recorded");
            metrics.optimistic_nodes.push(last(&metrics.optimistic_nodes));
            metrics.pessimistic_nodes.push(last(&metrics.pessimistic_nodes));
            break;
        }
        start_and_record(&mut cluster, &mut metrics, step);
    }

    metrics.final_switch = decision
        .iter()
        .zip(&switched_at)
        .map(|(d, s)| if *d == Some(Mode::Pessimistic) { *s } else { None })
        .collect();

    let transport_conserved = {
        let net = cluster.network();
        net.sent_count() == net.delivered_count() + net.in_flight() as u64
    };
    let (trace, reactions, solution, violations) = cluster.into_logs();

    let (useful, useless) = classify_messages(&trace, &reactions, config.cycle_len);
    metrics.messages_useful = useful;
    metrics.messages_useless = useless;
    metrics.total_messages = trace.len() as u64;
    metrics.total_reactions = reactions.len() as u64;

    let mut seen = HashSet::new();
    let no_double_consumption = reactions.iter().flat_map(|r| &r.consumed).all(|id| seen.insert(*id));
    let produced: HashSet<MoleculeId> = reactions.iter().flat_map(|r| r.produced.iter().copied()).collect();
    let consumed_known = seen.iter().all(|id| initial.contains(id) || produced.contains(id))
        && seen.len() as u64 == solution.consumed_count()
        && seen.iter().all(|id| solution.is_consumed(*id));
    let audit = Audit {
        no_double_consumption,
        consumed_known,
        ledger_balanced: solution.ledger_balanced(),
        no_violations: violations.is_empty(),
        transport_conserved,
    };

    RunOutput { seed, metrics, reactions, trace, final_solution: solution.sorted_payloads(), audit }
}

/// One run of `config` with the given seed.
pub fn run_one(config: &SimConfig, seed: u64) -> RunOutput {
    drive(build_cluster(config, seed), config, seed)
}

/// `config.runs` repetitions with consecutive seeds. `each` sees every run
/// before it is reduced to its metrics.
pub fn run_many(config: &SimConfig, mut each: impl FnMut(&RunOutput)) -> Vec<RunMetrics> {
    (0..config.runs)
        .map(|i| {
            let out = run_one(config, config.run_seed(i));
            each(&out);
            out.metrics
        })
        .collect()
}
