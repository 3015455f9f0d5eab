//! Discrete-time message transport.
//!
//! Every envelope sent during step `t` is handed to its destination by the
//! tick that advances the clock to `t + 1`. Nothing is dropped, duplicated or
//! reordered within an ordered `(from, to)` pair.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chemistry::MoleculeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Step = u64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimClock {
    step: Step,
}

impl SimClock {
    pub fn now(&self) -> Step {
        self.step
    }

    fn advance(&mut self) -> Step {
        self.step += 1;
        self.step
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope<M> {
    pub from: NodeId,
    pub to: NodeId,
    pub sent_at: Step,
    pub payload: M,
}

/// Reliable transport with a fixed latency of one step.
#[derive(Debug)]
pub struct Network<M> {
    clock: SimClock,
    in_flight: Vec<Envelope<M>>,
    sent: u64,
    delivered: u64,
}

impl<M> Default for Network<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M> Network<M> {
    pub fn new() -> Self {
        Network { clock: SimClock::default(), in_flight: Vec::new(), sent: 0, delivered: 0 }
    }

    pub fn now(&self) -> Step {
        self.clock.now()
    }

    /// Queues a message stamped with the current step. Self-sends are allowed
    /// and pay the same latency.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: M) {
        self.sent += 1;
        self.in_flight.push(Envelope { from, to, sent_at: self.clock.now(), payload });
    }

    /// Advances the clock and returns every envelope due at the new step,
    /// ordered by destination, then sender, then send order.
    pub fn tick(&mut self) -> Vec<Envelope<M>> {
        let now = self.clock.advance();
        let mut due = std::mem::take(&mut self.in_flight);
        debug_assert!(due.iter().all(|e| e.sent_at + 1 == now));
        // stable: keeps queue order within a pair
        due.sort_by_key(|e| (e.to, e.from));
        self.delivered += due.len() as u64;
        due
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn sent_count(&self) -> u64 {
        self.sent
    }

    pub fn delivered_count(&self) -> u64 {
        self.delivered
    }
}

/// Assigns each molecule to a holder drawn uniformly from `0..nodes`.
pub fn disseminate<R: Rng + ?Sized>(
    molecules: &[MoleculeId],
    nodes: u32,
    rng: &mut R,
) -> BTreeMap<MoleculeId, NodeId> {
    assert!(nodes >= 1, "need at least one node");
    molecules.iter().map(|&id| (id, NodeId(rng.random_range(0..nodes)))).collect()
}
