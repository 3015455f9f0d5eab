//! Atomic capture of molecule combinations.
//!
//! Two sub-protocols share one holder-side record per molecule:
//!
//! * pessimistic: QUERY → COMMITMENT → FETCH, with holders picking a locker
//!   by `(completed reactions, node id)` so that at least one contender wins;
//! * optimistic: FETCH → REACTION, first request to reach a holder reserves
//!   the molecule until the requester gives it back or consumes it.
//!
//! When both kinds of request reach a holder in the same step, pessimistic
//! requests are served first. A reservation or commitment that is already in
//! place is never revoked.

pub mod holder;
pub mod message;
pub mod requester;

pub use holder::{sort_requesters, HolderRecord, HolderState, HolderStore, Waiter};
pub use message::{AttemptId, MessageKind, ProtocolMessage, SenderInfo};
pub use requester::{AttemptState, ModePolicy, Outcome, Outgoing, Phase, Requester};

use rand::Rng;

use crate::adapt::Mode;
use crate::netsim::NodeId;

/// Decides the relative order of senders whose requests reach one holder in
/// the same step.
pub trait Arbiter {
    /// Smaller ranks are served first.
    fn rank(&mut self, holder: NodeId, sender: NodeId) -> u64;
}

/// Serves senders in ascending node id.
#[derive(Clone, Copy, Debug, Default)]
pub struct BySender;

impl Arbiter for BySender {
    fn rank(&mut self, _holder: NodeId, sender: NodeId) -> u64 {
        u64::from(sender.0)
    }
}

/// Serves senders in a fresh random order at every holder and step, which
/// models simultaneous arrivals racing on a real network.
#[derive(Clone, Debug)]
pub struct Shuffled<R>(pub R);

impl<R: Rng> Arbiter for Shuffled<R> {
    fn rank(&mut self, _holder: NodeId, _sender: NodeId) -> u64 {
        self.0.random()
    }
}

/// 0 = release, 1 = pessimistic request, 2 = optimistic request.
fn priority_class(msg: &ProtocolMessage) -> u8 {
    if msg.kind.is_release() {
        0
    } else {
        match msg.request_type {
            Mode::Pessimistic => 1,
            Mode::Optimistic => 2,
        }
    }
}

/// Orders the requests that reached `holder` in one step.
///
/// Releases go first, then pessimistic requests, then optimistic ones. Within
/// a class senders are ordered by `arbiter`, and each sender's own messages
/// keep their send order. `requests` must arrive in transport order (sender
/// id, then send order).
pub fn resolve_coexistence<A: Arbiter + ?Sized>(
    holder: NodeId,
    requests: Vec<(NodeId, ProtocolMessage)>,
    arbiter: &mut A,
) -> Vec<(NodeId, ProtocolMessage)> {
    let mut ranks: Vec<(NodeId, u64)> = Vec::new();
    let mut keyed: Vec<_> = requests
        .into_iter()
        .enumerate()
        .map(|(seq, (from, msg))| {
            let rank = match ranks.iter().find(|(n, _)| *n == from) {
                Some((_, r)) => *r,
                None => {
                    let r = arbiter.rank(holder, from);
                    ranks.push((from, r));
                    r
                }
            };
            ((priority_class(&msg), rank, from, seq), (from, msg))
        })
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    keyed.into_iter().map(|(_, m)| m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chemistry::{Molecule, MoleculeId, Payload};
    use MessageKind::*;

    fn msg(kind: MessageKind, mode: Mode, attempt: u64) -> ProtocolMessage {
        ProtocolMessage::request(
            kind,
            MoleculeId(0),
            AttemptId(attempt),
            mode,
            SenderInfo { reactions: 0, sigma: 1.0 },
        )
    }

    fn serve(
        rec: &mut HolderRecord,
        batch: Vec<(NodeId, ProtocolMessage)>,
    ) -> Vec<(NodeId, MessageKind)> {
        let me = SenderInfo { reactions: 0, sigma: 1.0 };
        resolve_coexistence(NodeId(0), batch, &mut BySender)
            .into_iter()
            .filter_map(|(from, m)| rec.handle(from, &m, me).map(|r| (from, r.kind)))
            .collect()
    }

    fn record() -> HolderRecord {
        HolderRecord::new(Molecule { id: MoleculeId(0), payload: Payload::Int(1) })
    }

    #[test]
    fn pessimistic_query_beats_same_step_fetch() {
        let mut rec = record();
        // the optimistic sender has the lower id and would otherwise go first
        let replies = serve(
            &mut rec,
            vec![(NodeId(1), msg(Fetch, Mode::Optimistic, 0)), (NodeId(2), msg(Query, Mode::Pessimistic, 0))],
        );
        assert_eq!(replies, vec![(NodeId(2), RespOk), (NodeId(1), RespTaken)]);
    }

    #[test]
    fn earlier_optimistic_grant_is_not_revoked() {
        let mut rec = record();
        let r1 = serve(&mut rec, vec![(NodeId(1), msg(Fetch, Mode::Optimistic, 0))]);
        assert_eq!(r1, vec![(NodeId(1), RespMolecule)]);
        let r2 = serve(&mut rec, vec![(NodeId(2), msg(Query, Mode::Pessimistic, 0))]);
        assert_eq!(r2, vec![(NodeId(2), RespTaken)]);
    }

    #[test]
    fn two_queries_in_one_step_both_ok() {
        let mut rec = record();
        let replies = serve(
            &mut rec,
            vec![(NodeId(3), msg(Query, Mode::Pessimistic, 0)), (NodeId(4), msg(Query, Mode::Pessimistic, 0))],
        );
        assert_eq!(replies, vec![(NodeId(3), RespOk), (NodeId(4), RespOk)]);
    }

    #[test]
    fn releases_precede_requests_and_sender_order_is_kept() {
        let batch = vec![
            (NodeId(1), msg(Fetch, Mode::Optimistic, 0)),
            (NodeId(2), msg(GiveUp, Mode::Optimistic, 3)),
            (NodeId(2), msg(Fetch, Mode::Optimistic, 4)),
            (NodeId(5), msg(Query, Mode::Pessimistic, 0)),
        ];
        let order: Vec<_> = resolve_coexistence(NodeId(0), batch, &mut BySender)
            .into_iter()
            .map(|(n, m)| (n.0, m.kind, m.attempt.0))
            .collect();
        assert_eq!(order, vec![(2, GiveUp, 3), (5, Query, 0), (1, Fetch, 0), (2, Fetch, 4)]);
    }

    #[test]
    fn shuffled_arbiter_is_seeded() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        let batch: Vec<_> = (0..20).map(|i| (NodeId(i), msg(Fetch, Mode::Optimistic, 0))).collect();
        let run = |seed| {
            let mut arb = Shuffled(ChaCha8Rng::seed_from_u64(seed));
            resolve_coexistence(NodeId(0), batch.clone(), &mut arb)
                .into_iter()
                .map(|(n, _)| n.0)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), (0..20).collect::<Vec<_>>());
    }
}
