//! Requester-side state machine for one capture attempt at a time.

use crate::adapt::{Mode, SuccessTracker, TrackerParams};
use crate::capture::message::{AttemptId, MessageKind, ProtocolMessage, SenderInfo};
use crate::chemistry::{MoleculeId, Payload, ReactionRule};
use crate::netsim::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    OptFetch,
    Query,
    Commitment,
    Fetch,
}

#[derive(Clone, Debug)]
pub struct AttemptState {
    pub id: AttemptId,
    pub rule: ReactionRule,
    pub mode: Mode,
    /// `(molecule, holder)` in rule-slot order.
    pub combination: Vec<(MoleculeId, NodeId)>,
    pub phase: Phase,
    pub pending: Vec<MoleculeId>,
    pub gathered: Vec<(MoleculeId, Payload)>,
}

impl AttemptState {
    /// Gathered payloads in slot order; only meaningful once complete.
    pub fn arguments(&self) -> Vec<Payload> {
        self.combination
            .iter()
            .map(|(m, _)| {
                self.gathered
                    .iter()
                    .find(|(g, _)| g == m)
                    .map(|(_, p)| p.clone())
                    .expect("all molecules gathered")
            })
            .collect()
    }
}

pub type Outgoing = (NodeId, ProtocolMessage);

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    /// Response ignored or attempt still running.
    Pending,
    Reacted {
        attempt: AttemptId,
        rule: ReactionRule,
        molecules: Vec<MoleculeId>,
        arguments: Vec<Payload>,
    },
    Abandoned {
        attempt: AttemptId,
    },
}

#[derive(Clone, Debug)]
pub struct Requester {
    node: NodeId,
    reactions: u64,
    next_attempt: u64,
    current: Option<AttemptState>,
    tracker: SuccessTracker,
    last_decision: Option<Mode>,
}

impl Requester {
    pub fn new(node: NodeId, params: TrackerParams) -> Self {
        Requester {
            node,
            reactions: 0,
            next_attempt: 0,
            current: None,
            tracker: SuccessTracker::new(params),
            last_decision: None,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn reactions(&self) -> u64 {
        self.reactions
    }

    pub fn is_idle(&self) -> bool {
        self.current.is_none()
    }

    pub fn attempt(&self) -> Option<&AttemptState> {
        self.current.as_ref()
    }

    pub fn tracker(&self) -> &SuccessTracker {
        &self.tracker
    }

    pub fn tracker_mut(&mut self) -> &mut SuccessTracker {
        &mut self.tracker
    }

    pub fn last_decision(&self) -> Option<Mode> {
        self.last_decision
    }

    /// Piggybacked on every message this node sends.
    pub fn sender_info(&self) -> SenderInfo {
        SenderInfo { reactions: self.reactions, sigma: self.tracker.sigma_local() }
    }

    /// Picks the sub-protocol for an `arity`-molecule attempt and remembers it.
    pub fn decide(&mut self, arity: usize, policy: ModePolicy) -> Mode {
        let mode = match policy {
            ModePolicy::Forced(mode) => mode,
            ModePolicy::Adaptive { threshold } => self.tracker.choose_protocol(arity, threshold),
        };
        self.last_decision = Some(mode);
        mode
    }

    /// Opens a new attempt. Optimistic sends FETCH to every holder,
    /// pessimistic sends QUERY.
    pub fn start_attempt(
        &mut self,
        rule: ReactionRule,
        combination: Vec<(MoleculeId, NodeId)>,
        mode: Mode,
    ) -> (AttemptId, Vec<Outgoing>) {
        assert!(self.current.is_none(), "node {} already has an attempt in flight", self.node);
        assert_eq!(combination.len(), rule.arity());
        debug_assert!({
            let mut ids: Vec<_> = combination.iter().map(|(m, _)| *m).collect();
            ids.sort();
            ids.dedup();
            ids.len() == combination.len()
        });
        let id = AttemptId(self.next_attempt);
        self.next_attempt += 1;
        let (phase, kind) = match mode {
            Mode::Optimistic => (Phase::OptFetch, MessageKind::Fetch),
            Mode::Pessimistic => (Phase::Query, MessageKind::Query),
        };
        let attempt = AttemptState {
            id,
            rule,
            mode,
            pending: combination.iter().map(|(m, _)| *m).collect(),
            combination,
            phase,
            gathered: Vec::new(),
        };
        self.current = Some(attempt);
        (id, self.broadcast(kind))
    }

    fn broadcast(&self, kind: MessageKind) -> Vec<Outgoing> {
        let attempt = self.current.as_ref().expect("attempt in flight");
        let info = self.sender_info();
        attempt
            .combination
            .iter()
            .map(|&(m, holder)| {
                (holder, ProtocolMessage::request(kind, m, attempt.id, attempt.mode, info))
            })
            .collect()
    }

    /// Feeds one response. Responses for a finished attempt, or repeated
    /// responses for a molecule, are dropped.
    pub fn on_response(&mut self, resp: &ProtocolMessage) -> (Vec<Outgoing>, Outcome) {
        debug_assert!(resp.kind.is_response());
        let Some(attempt) = self.current.as_ref().filter(|a| a.id == resp.attempt) else {
            return (Vec::new(), Outcome::Pending);
        };
        let Some(slot) = attempt.pending.iter().position(|m| *m == resp.molecule) else {
            return (Vec::new(), Outcome::Pending);
        };
        match attempt.mode {
            Mode::Pessimistic => self.on_response_pessimistic(resp, slot),
            Mode::Optimistic => self.on_response_optimistic(resp, slot),
        }
    }

    fn on_response_pessimistic(&mut self, resp: &ProtocolMessage, slot: usize) -> (Vec<Outgoing>, Outcome) {
        let attempt = self.current.as_mut().expect("checked by caller");
        match attempt.phase {
            Phase::Query | Phase::Commitment => {
                if resp.kind != MessageKind::RespOk {
                    return self.abandon();
                }
                attempt.pending.swap_remove(slot);
                if !attempt.pending.is_empty() {
                    return (Vec::new(), Outcome::Pending);
                }
                let (next, kind) = if attempt.phase == Phase::Query {
                    (Phase::Commitment, MessageKind::Commitment)
                } else {
                    (Phase::Fetch, MessageKind::Fetch)
                };
                attempt.phase = next;
                attempt.pending = attempt.combination.iter().map(|(m, _)| *m).collect();
                (self.broadcast(kind), Outcome::Pending)
            }
            Phase::Fetch => {
                if resp.kind != MessageKind::RespMolecule {
                    return self.abandon();
                }
                attempt.pending.swap_remove(slot);
                let payload = resp.payload.clone().expect("RESP_MOLECULE carries its payload");
                attempt.gathered.push((resp.molecule, payload));
                if attempt.pending.is_empty() {
                    (Vec::new(), self.react())
                } else {
                    (Vec::new(), Outcome::Pending)
                }
            }
            Phase::OptFetch => unreachable!("optimistic phase in pessimistic attempt"),
        }
    }

    fn on_response_optimistic(&mut self, resp: &ProtocolMessage, slot: usize) -> (Vec<Outgoing>, Outcome) {
        let attempt = self.current.as_mut().expect("checked by caller");
        if resp.kind != MessageKind::RespMolecule {
            return self.abandon();
        }
        attempt.pending.swap_remove(slot);
        let payload = resp.payload.clone().expect("RESP_MOLECULE carries its payload");
        attempt.gathered.push((resp.molecule, payload));
        if !attempt.pending.is_empty() {
            return (Vec::new(), Outcome::Pending);
        }
        let notify = self.broadcast(MessageKind::Reaction);
        (notify, self.react())
    }

    fn react(&mut self) -> Outcome {
        let attempt = self.current.take().expect("attempt in flight");
        self.reactions += 1;
        self.tracker.record_outcome(true);
        Outcome::Reacted {
            attempt: attempt.id,
            rule: attempt.rule,
            molecules: attempt.combination.iter().map(|(m, _)| *m).collect(),
            arguments: attempt.arguments(),
        }
    }

    /// GIVE_UP to every molecule of the combination, including ones that
    /// were granted or not yet answered.
    fn abandon(&mut self) -> (Vec<Outgoing>, Outcome) {
        let out = self.broadcast(MessageKind::GiveUp);
        let attempt = self.current.take().expect("attempt in flight");
        self.tracker.record_outcome(false);
        (out, Outcome::Abandoned { attempt: attempt.id })
    }
}

/// How a node picks its sub-protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModePolicy {
    Forced(Mode),
    Adaptive { threshold: f64 },
}

#[cfg(test)]
mod tests {
    use super::*;
    use MessageKind::*;

    const HOLDER: SenderInfo = SenderInfo { reactions: 0, sigma: 1.0 };

    fn combo() -> Vec<(MoleculeId, NodeId)> {
        vec![(MoleculeId(10), NodeId(1)), (MoleculeId(11), NodeId(2))]
    }

    fn requester() -> Requester {
        Requester::new(NodeId(0), TrackerParams::default())
    }

    fn answer(out: &[Outgoing], molecule: u64, kind: MessageKind) -> ProtocolMessage {
        let (_, req) = out.iter().find(|(_, m)| m.molecule == MoleculeId(molecule)).unwrap();
        let payload = (kind == RespMolecule).then_some(Payload::Int(molecule as i64));
        req.reply(kind, payload, HOLDER)
    }

    fn kinds(out: &[Outgoing]) -> Vec<MessageKind> {
        out.iter().map(|(_, m)| m.kind).collect()
    }

    #[test]
    fn pessimistic_start_sends_queries() {
        let mut r = requester();
        let (_, out) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Pessimistic);
        assert_eq!(kinds(&out), vec![Query, Query]);
        assert_eq!(out[0].0, NodeId(1));
        assert!(out.iter().all(|(_, m)| m.request_type == Mode::Pessimistic));
        assert_eq!(r.attempt().unwrap().phase, Phase::Query);
    }

    #[test]
    fn optimistic_start_sends_fetches() {
        let mut r = requester();
        let (_, out) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Optimistic);
        assert_eq!(kinds(&out), vec![Fetch, Fetch]);
        assert!(out.iter().all(|(_, m)| m.request_type == Mode::Optimistic));
        assert_eq!(r.attempt().unwrap().phase, Phase::OptFetch);
    }

    #[test]
    fn self_held_molecules_still_go_through_messages() {
        let mut r = requester();
        let c = vec![(MoleculeId(1), NodeId(0)), (MoleculeId(2), NodeId(0))];
        let (_, out) = r.start_attempt(ReactionRule::consume2(), c, Mode::Optimistic);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|(to, _)| *to == NodeId(0)));
    }

    #[test]
    fn pessimistic_full_success_path() {
        let mut r = requester();
        let (_, q) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Pessimistic);
        let (out, o) = r.on_response(&answer(&q, 10, RespOk));
        assert!(out.is_empty());
        assert_eq!(o, Outcome::Pending);
        let (c, _) = r.on_response(&answer(&q, 11, RespOk));
        assert_eq!(kinds(&c), vec![Commitment, Commitment]);
        r.on_response(&answer(&c, 10, RespOk));
        let (f, _) = r.on_response(&answer(&c, 11, RespOk));
        assert_eq!(kinds(&f), vec![Fetch, Fetch]);
        assert!(f.iter().all(|(_, m)| m.request_type == Mode::Pessimistic));
        r.on_response(&answer(&f, 11, RespMolecule));
        let (out, o) = r.on_response(&answer(&f, 10, RespMolecule));
        assert!(out.is_empty());
        match o {
            Outcome::Reacted { molecules, arguments, .. } => {
                assert_eq!(molecules, vec![MoleculeId(10), MoleculeId(11)]);
                assert_eq!(arguments, vec![Payload::Int(10), Payload::Int(11)]);
            }
            other => panic!("expected reaction, got {other:?}"),
        }
        assert!(r.is_idle());
        assert_eq!(r.reactions(), 1);
        assert_eq!(r.tracker().sigma_local(), 1.0);
    }

    #[test]
    fn commitment_refusal_gives_up_everything() {
        let mut r = requester();
        let (_, q) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Pessimistic);
        r.on_response(&answer(&q, 10, RespOk));
        let (c, _) = r.on_response(&answer(&q, 11, RespOk));
        r.on_response(&answer(&c, 10, RespOk));
        let (out, o) = r.on_response(&answer(&c, 11, RespTaken));
        assert_eq!(kinds(&out), vec![GiveUp, GiveUp]);
        assert!(matches!(o, Outcome::Abandoned { .. }));
        assert!(r.is_idle());
        assert_eq!(r.tracker().sigma_local(), 0.0);
    }

    #[test]
    fn query_refusal_aborts_whole_combination() {
        let mut r = requester();
        let (_, q) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Pessimistic);
        let (out, o) = r.on_response(&answer(&q, 11, RespRemoved));
        assert_eq!(kinds(&out), vec![GiveUp, GiveUp]);
        assert!(matches!(o, Outcome::Abandoned { .. }));
        // late RESP_OK for the abandoned attempt is dropped
        let (out, o) = r.on_response(&answer(&q, 10, RespOk));
        assert!(out.is_empty());
        assert_eq!(o, Outcome::Pending);
    }

    #[test]
    fn optimistic_success_notifies_holders() {
        let mut r = requester();
        let (_, f) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Optimistic);
        r.on_response(&answer(&f, 10, RespMolecule));
        let (out, o) = r.on_response(&answer(&f, 11, RespMolecule));
        assert_eq!(kinds(&out), vec![Reaction, Reaction]);
        assert!(matches!(o, Outcome::Reacted { .. }));
    }

    #[test]
    fn optimistic_taken_first_returns_granted_molecule() {
        let mut r = requester();
        let (_, f) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Optimistic);
        let (out, o) = r.on_response(&answer(&f, 10, RespTaken));
        assert_eq!(kinds(&out), vec![GiveUp, GiveUp]);
        assert!(matches!(o, Outcome::Abandoned { .. }));
        assert!(r.on_response(&answer(&f, 11, RespMolecule)).0.is_empty());
    }

    #[test]
    fn optimistic_removed_after_grant_aborts() {
        let mut r = requester();
        let (_, f) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Optimistic);
        let (out, _) = r.on_response(&answer(&f, 10, RespMolecule));
        assert!(out.is_empty());
        let (out, o) = r.on_response(&answer(&f, 11, RespRemoved));
        assert_eq!(kinds(&out), vec![GiveUp, GiveUp]);
        assert_eq!(out[0].0, NodeId(1));
        assert!(matches!(o, Outcome::Abandoned { .. }));
    }

    #[test]
    fn stale_attempt_id_is_ignored() {
        let mut r = requester();
        let (_, f) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Optimistic);
        r.on_response(&answer(&f, 10, RespTaken));
        let (_, f2) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Optimistic);
        // echo from the first attempt
        let (out, o) = r.on_response(&answer(&f, 11, RespTaken));
        assert!(out.is_empty());
        assert_eq!(o, Outcome::Pending);
        assert_eq!(r.attempt().unwrap().id, f2[0].1.attempt);
    }

    #[test]
    fn messages_carry_sender_state() {
        let mut r = requester();
        r.tracker_mut().record_outcome(false);
        r.tracker_mut().record_outcome(true);
        let (_, out) = r.start_attempt(ReactionRule::consume2(), combo(), Mode::Pessimistic);
        assert_eq!(out[0].1.sender_sigma, 0.5);
        assert_eq!(out[0].1.sender_reactions, 0);
    }

    #[test]
    fn decide_records_last_choice() {
        let mut r = requester();
        assert_eq!(r.last_decision(), None);
        assert_eq!(r.decide(2, ModePolicy::Adaptive { threshold: 0.7 }), Mode::Optimistic);
        assert_eq!(r.decide(2, ModePolicy::Forced(Mode::Pessimistic)), Mode::Pessimistic);
        assert_eq!(r.last_decision(), Some(Mode::Pessimistic));
    }
}
