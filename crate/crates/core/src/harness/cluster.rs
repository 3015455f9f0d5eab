//! A set of simulated nodes wired to one transport, one global ledger and
//! one discovery registry.
//!
//! Every node is both holder and requester. A step is: deliver everything
//! sent during the previous step, let each node serve its holder requests and
//! digest its responses, then (optionally) have idle nodes start new attempts.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapt::{Mode, TrackerParams};
use crate::capture::{
    resolve_coexistence, Arbiter, AttemptId, HolderStore, ModePolicy, Outcome, ProtocolMessage,
    Requester, Shuffled,
};
use crate::chemistry::{ChemistryError, Molecule, MoleculeId, Multiset, Payload, ReactionRule};
use crate::harness::metrics::{ReactionRecord, TraceRecord};
use crate::harness::registry::Registry;
use crate::netsim::{disseminate, Network, NodeId, Step};

// Independent random streams so that changing one consumer (say, the
// arbiter) does not shift the draws of the others.
const STREAM_PLACEMENT: u64 = 0;
const STREAM_DRAWS: u64 = 1;
const STREAM_ARBITER: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug)]
pub struct Node {
    pub requester: Requester,
    pub holder: HolderStore,
}

pub struct Cluster {
    nodes: Vec<Node>,
    net: Network<ProtocolMessage>,
    solution: Multiset,
    registry: Registry,
    location: HashMap<MoleculeId, NodeId>,
    rules: Vec<ReactionRule>,
    placement_rng: ChaCha8Rng,
    draw_rng: ChaCha8Rng,
    arbiter: Box<dyn Arbiter>,
    trace: Vec<TraceRecord>,
    reactions: Vec<ReactionRecord>,
    violations: Vec<ChemistryError>,
}

impl Cluster {
    /// Spreads `payloads` uniformly over `nodes` holders.
    pub fn new(
        nodes: u32,
        payloads: Vec<Payload>,
        rules: Vec<ReactionRule>,
        params: TrackerParams,
        seed: u64,
    ) -> Self {
        let mut placement_rng = stream(seed, STREAM_PLACEMENT);
        let mut solution = Multiset::new();
        let molecules: Vec<Molecule> = payloads.into_iter().map(|p| solution.insert(p)).collect();
        let ids: Vec<MoleculeId> = molecules.iter().map(|m| m.id).collect();
        let holders = disseminate(&ids, nodes, &mut placement_rng);
        let layout = molecules.into_iter().map(|m| {
            let h = holders[&m.id];
            (m, h)
        });
        Self::assemble(nodes, solution, layout.collect(), rules, params, seed, placement_rng)
    }

    /// Places each payload on an explicit holder.
    pub fn with_layout(
        nodes: u32,
        layout: Vec<(Payload, NodeId)>,
        rules: Vec<ReactionRule>,
        params: TrackerParams,
        seed: u64,
    ) -> Self {
        let mut solution = Multiset::new();
        let placed = layout
            .into_iter()
            .map(|(p, h)| {
                assert!(h.0 < nodes, "holder {h} out of range");
                (solution.insert(p), h)
            })
            .collect();
        Self::assemble(nodes, solution, placed, rules, params, seed, stream(seed, STREAM_PLACEMENT))
    }

    fn assemble(
        nodes: u32,
        solution: Multiset,
        placed: Vec<(Molecule, NodeId)>,
        rules: Vec<ReactionRule>,
        params: TrackerParams,
        seed: u64,
        placement_rng: ChaCha8Rng,
    ) -> Self {
        assert!(nodes >= 1);
        let mut cluster = Cluster {
            nodes: (0..nodes)
                .map(|i| Node { requester: Requester::new(NodeId(i), params), holder: HolderStore::default() })
                .collect(),
            net: Network::new(),
            solution,
            registry: Registry::default(),
            location: HashMap::new(),
            rules,
            placement_rng,
            draw_rng: stream(seed, STREAM_DRAWS),
            arbiter: Box::new(Shuffled(stream(seed, STREAM_ARBITER))),
            trace: Vec::new(),
            reactions: Vec::new(),
            violations: Vec::new(),
        };
        for (m, holder) in placed {
            cluster.place(m, holder);
        }
        cluster
    }

    pub fn set_arbiter(&mut self, arbiter: Box<dyn Arbiter>) {
        self.arbiter = arbiter;
    }

    fn place(&mut self, molecule: Molecule, holder: NodeId) {
        self.registry.insert(molecule.id);
        self.location.insert(molecule.id, holder);
        self.nodes[holder.index()].holder.insert(molecule);
    }

    pub fn now(&self) -> Step {
        self.net.now()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn solution(&self) -> &Multiset {
        &self.solution
    }

    pub fn rules(&self) -> &[ReactionRule] {
        &self.rules
    }

    pub fn holder_of(&self, molecule: MoleculeId) -> Option<NodeId> {
        self.location.get(&molecule).copied()
    }

    pub fn network(&self) -> &Network<ProtocolMessage> {
        &self.net
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn reaction_log(&self) -> &[ReactionRecord] {
        &self.reactions
    }

    /// Ledger errors raised while applying reactions. Empty in a correct run.
    pub fn violations(&self) -> &[ChemistryError] {
        &self.violations
    }

    pub fn into_logs(self) -> (Vec<TraceRecord>, Vec<ReactionRecord>, Multiset, Vec<ChemistryError>) {
        (self.trace, self.reactions, self.solution, self.violations)
    }

    pub fn is_inert(&self) -> bool {
        crate::chemistry::is_inert(&self.solution, &self.rules)
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: ProtocolMessage) {
        self.trace.push(TraceRecord {
            step: self.net.now(),
            from,
            to,
            kind: msg.kind,
            molecule: msg.molecule,
            attempt: msg.attempt,
            request_type: msg.request_type,
        });
        self.net.send(from, to, msg);
    }

    /// Starts an attempt on explicit molecules, looking up their holders.
    pub fn start_attempt(
        &mut self,
        node: NodeId,
        rule: ReactionRule,
        molecules: &[MoleculeId],
        mode: Mode,
    ) -> AttemptId {
        let combination = molecules
            .iter()
            .map(|m| (*m, self.holder_of(*m).expect("molecule has a holder")))
            .collect();
        let (id, out) = self.nodes[node.index()].requester.start_attempt(rule, combination, mode);
        for (to, msg) in out {
            self.send(node, to, msg);
        }
        id
    }

    /// Every idle node draws a fresh combination and opens an attempt in the
    /// mode `policy` dictates. Returns how many attempts were started.
    pub fn start_idle_attempts(&mut self, policy: ModePolicy) -> usize {
        let mut started = 0;
        for i in 0..self.nodes.len() {
            if !self.nodes[i].requester.is_idle() {
                continue;
            }
            let Some((rule, molecules)) = self.draw_combination() else {
                continue;
            };
            let node = NodeId(i as u32);
            let mode = self.nodes[i].requester.decide(rule.arity(), policy);
            self.start_attempt(node, rule, &molecules, mode);
            started += 1;
        }
        started
    }

    fn draw_combination(&mut self) -> Option<(ReactionRule, Vec<MoleculeId>)> {
        let mut order: Vec<usize> = (0..self.rules.len()).collect();
        if order.len() > 1 {
            order.shuffle(&mut self.draw_rng);
        }
        order.into_iter().find_map(|r| {
            let rule = self.rules[r];
            self.registry
                .find_combination(&rule, &self.solution, &mut self.draw_rng)
                .map(|c| (rule, c))
        })
    }

    /// Delivers the previous step's messages and lets every node react.
    pub fn step(&mut self) {
        let deliveries = self.net.tick();
        let now = self.net.now();
        let mut iter = deliveries.into_iter().peekable();
        while let Some(first) = iter.next() {
            let dest = first.to;
            let mut requests = Vec::new();
            let mut responses = Vec::new();
            for env in std::iter::once(first).chain(std::iter::from_fn(|| iter.next_if(|e| e.to == dest))) {
                self.nodes[dest.index()]
                    .requester
                    .tracker_mut()
                    .record_remote_sigma(env.payload.sender_sigma)
                    .expect("piggybacked success rate is a probability");
                if env.payload.kind.is_response() {
                    responses.push(env.payload);
                } else {
                    requests.push((env.from, env.payload));
                }
            }
            self.serve_requests(dest, requests);
            for resp in responses {
                self.handle_response(dest, now, resp);
            }
        }
    }

    fn serve_requests(&mut self, dest: NodeId, requests: Vec<(NodeId, ProtocolMessage)>) {
        if requests.is_empty() {
            return;
        }
        let ordered = resolve_coexistence(dest, requests, self.arbiter.as_mut());
        for (from, msg) in ordered {
            let node = &mut self.nodes[dest.index()];
            let me = node.requester.sender_info();
            if let Some(reply) = node.holder.handle(from, &msg, me) {
                self.send(dest, from, reply);
            }
        }
    }

    fn handle_response(&mut self, dest: NodeId, now: Step, resp: ProtocolMessage) {
        let (out, outcome) = self.nodes[dest.index()].requester.on_response(&resp);
        for (to, msg) in out {
            self.send(dest, to, msg);
        }
        if let Outcome::Reacted { attempt, rule, molecules, .. } = outcome {
            self.apply(dest, now, attempt, rule, molecules);
        }
    }

    fn apply(&mut self, node: NodeId, now: Step, attempt: AttemptId, rule: ReactionRule, molecules: Vec<MoleculeId>) {
        match self.solution.apply_reaction(&rule, &molecules) {
            Ok(products) => {
                for m in &molecules {
                    self.registry.remove(*m);
                }
                let produced = products.iter().map(|p| p.id).collect();
                for p in products {
                    let holder = NodeId(self.placement_rng.random_range(0..self.nodes.len() as u32));
                    self.place(p, holder);
                }
                self.reactions.push(ReactionRecord {
                    step: now,
                    requester: node,
                    attempt,
                    rule: rule.name,
                    consumed: molecules,
                    produced,
                });
            }
            Err(e) => self.violations.push(e),
        }
    }
}
