use std::collections::HashSet;

use serde::Serialize;

use crate::adapt::Mode;
use crate::capture::{AttemptId, MessageKind};
use crate::chemistry::MoleculeId;
use crate::netsim::{NodeId, Step};

/// One envelope as sent.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub step: Step,
    pub from: NodeId,
    pub to: NodeId,
    pub kind: MessageKind,
    pub molecule: MoleculeId,
    pub attempt: AttemptId,
    pub request_type: Mode,
}

impl TraceRecord {
    /// The node whose attempt this envelope belongs to.
    pub fn requester(&self) -> NodeId {
        if self.kind.is_response() {
            self.to
        } else {
            self.from
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReactionRecord {
    pub step: Step,
    pub requester: NodeId,
    pub attempt: AttemptId,
    pub rule: &'static str,
    pub consumed: Vec<MoleculeId>,
    pub produced: Vec<MoleculeId>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RunMetrics {
    pub reactions_left: Vec<u64>,
    pub optimistic_nodes: Vec<u32>,
    pub pessimistic_nodes: Vec<u32>,
    pub messages_useful: Vec<u64>,
    pub messages_useless: Vec<u64>,
    pub steps_to_inertia: Option<u64>,
    pub total_reactions: u64,
    pub total_messages: u64,
    /// Per node: the step from which its decisions stayed pessimistic to the
    /// end of the run. `None` if its last decision was optimistic or it
    /// never decided.
    pub final_switch: Vec<Option<u64>>,
}

impl RunMetrics {
    pub fn total_per_cycle(&self) -> Vec<u64> {
        self.messages_useful.iter().zip(&self.messages_useless).map(|(u, w)| u + w).collect()
    }

    /// First and last step at which a node made its final switch to
    /// pessimism. `None` unless every node ended pessimistic.
    pub fn switch_window(&self) -> Option<(u64, u64)> {
        let steps: Option<Vec<u64>> = self.final_switch.iter().copied().collect();
        let steps = steps?;
        Some((*steps.iter().min()?, *steps.iter().max()?))
    }
}

/// Splits message counts per cycle into envelopes that belong to an attempt
/// which ended in a reaction and everything else.
pub fn classify_messages(
    trace: &[TraceRecord],
    reactions: &[ReactionRecord],
    cycle_len: u64,
) -> (Vec<u64>, Vec<u64>) {
    assert!(cycle_len >= 1);
    let successful: HashSet<(NodeId, AttemptId)> =
        reactions.iter().map(|r| (r.requester, r.attempt)).collect();
    let cycles = trace.iter().map(|t| t.step / cycle_len + 1).max().unwrap_or(0) as usize;
    let mut useful = vec![0; cycles];
    let mut useless = vec![0; cycles];
    for t in trace {
        let c = (t.step / cycle_len) as usize;
        if successful.contains(&(t.requester(), t.attempt)) {
            useful[c] += 1;
        } else {
            useless[c] += 1;
        }
    }
    (useful, useless)
}

/// Reactions left under an ideal central coordinator: every node completes
/// one reaction per two-step request/response round trip.
pub fn theoretic_optimum(nodes: u32, molecules: u64) -> Vec<u64> {
    let total = molecules / 2;
    let mut curve = Vec::new();
    let mut t = 0u64;
    loop {
        let done = u64::from(nodes) * t / 2;
        let left = total.saturating_sub(done);
        curve.push(left);
        if left == 0 {
            return curve;
        }
        t += 1;
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub mean: Option<f64>,
    pub min: Option<u64>,
    pub max: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: usize,
    pub reactions_left: Vec<f64>,
    pub optimistic_nodes: Vec<f64>,
    pub pessimistic_nodes: Vec<f64>,
    pub messages_useful: Vec<f64>,
    pub messages_useless: Vec<f64>,
    pub inertia_fraction: f64,
    /// Over the runs that reached inertia.
    pub steps_to_inertia: StepStats,
    pub mean_total_messages: f64,
}

enum Pad {
    Zero,
    Last,
}

fn mean_curve<T: Copy + Into<f64>>(curves: &[&[T]], pad: Pad) -> Vec<f64> {
    let len = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    let n = curves.len() as f64;
    (0..len)
        .map(|i| {
            let sum: f64 = curves
                .iter()
                .map(|c| match c.get(i) {
                    Some(v) => (*v).into(),
                    None => match pad {
                        Pad::Zero => 0.0,
                        Pad::Last => c.last().map_or(0.0, |v| (*v).into()),
                    },
                })
                .sum();
            sum / n
        })
        .collect()
}

fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
    v.iter().map(Vec::as_slice).collect()
}

fn as_f64(v: &[u64]) -> Vec<f64> {
    v.iter().map(|x| *x as f64).collect()
}

/// Pointwise mean over runs. Runs that stopped early count as zero reactions
/// left and zero messages afterwards; node counts keep their last value.
pub fn aggregate(runs: &[RunMetrics]) -> Aggregate {
    assert!(!runs.is_empty(), "nothing to aggregate");
    let left: Vec<Vec<f64>> = runs.iter().map(|r| as_f64(&r.reactions_left)).collect();
    let useful: Vec<Vec<f64>> = runs.iter().map(|r| as_f64(&r.messages_useful)).collect();
    let useless: Vec<Vec<f64>> = runs.iter().map(|r| as_f64(&r.messages_useless)).collect();

    let inert: Vec<u64> = runs.iter().filter_map(|r| r.steps_to_inertia).collect();
    let steps_to_inertia = StepStats {
        mean: (!inert.is_empty()).then(|| inert.iter().sum::<u64>() as f64 / inert.len() as f64),
        min: inert.iter().min().copied(),
        max: inert.iter().max().copied(),
    };
    Aggregate {
        runs: runs.len(),
        reactions_left: mean_curve(&refs(&left), Pad::Zero),
        optimistic_nodes: mean_curve(
            &runs.iter().map(|r| r.optimistic_nodes.as_slice()).collect::<Vec<_>>(),
            Pad::Last,
        ),
        pessimistic_nodes: mean_curve(
            &runs.iter().map(|r| r.pessimistic_nodes.as_slice()).collect::<Vec<_>>(),
            Pad::Last,
        ),
        messages_useful: mean_curve(&refs(&useful), Pad::Zero),
        messages_useless: mean_curve(&refs(&useless), Pad::Zero),
        inertia_fraction: inert.len() as f64 / runs.len() as f64,
        steps_to_inertia,
        mean_total_messages: runs.iter().map(|r| r.total_messages as f64).sum::<f64>() / runs.len() as f64,
    }
}
