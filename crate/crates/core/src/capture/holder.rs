//! Holder-side arbitration of a single molecule.

use std::collections::HashMap;

use crate::adapt::Mode;
use crate::capture::message::{AttemptId, MessageKind, ProtocolMessage, SenderInfo};
use crate::chemistry::{Molecule, MoleculeId};
use crate::netsim::NodeId;

/// A pessimistic requester that queried the molecule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Waiter {
    pub node: NodeId,
    pub reactions: u64,
    pub attempt: AttemptId,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HolderState {
    Available,
    Queried { waiters: Vec<Waiter> },
    /// `locker` is the head of `waiters` after the last sort.
    Committed { locker: NodeId, waiters: Vec<Waiter> },
    TakenOpt { reserver: NodeId, attempt: AttemptId },
    Removed,
}

/// Orders waiters by completed reactions, then node id, and returns the head.
pub fn sort_requesters(waiters: &mut [Waiter]) -> NodeId {
    assert!(!waiters.is_empty(), "cannot pick a locker among no waiters");
    waiters.sort_by_key(|w| (w.reactions, w.node));
    waiters[0].node
}

#[derive(Clone, Debug, PartialEq)]
pub struct HolderRecord {
    pub molecule: Molecule,
    pub state: HolderState,
}

impl HolderRecord {
    pub fn new(molecule: Molecule) -> Self {
        HolderRecord { molecule, state: HolderState::Available }
    }

    pub fn is_available(&self) -> bool {
        self.state == HolderState::Available
    }

    pub fn is_removed(&self) -> bool {
        self.state == HolderState::Removed
    }

    /// Processes one request and returns the reply, if any.
    pub fn handle(
        &mut self,
        from: NodeId,
        msg: &ProtocolMessage,
        me: SenderInfo,
    ) -> Option<ProtocolMessage> {
        debug_assert_eq!(msg.molecule, self.molecule.id);
        let kind = match msg.request_type {
            Mode::Pessimistic => self.handle_pessimistic(from, msg)?,
            Mode::Optimistic => self.handle_optimistic(from, msg)?,
        };
        let payload = (kind == MessageKind::RespMolecule).then(|| self.molecule.payload.clone());
        Some(msg.reply(kind, payload, me))
    }

    fn reserved_for_other(&self, from: NodeId) -> bool {
        match &self.state {
            HolderState::TakenOpt { .. } => true,
            HolderState::Committed { locker, .. } => *locker != from,
            _ => false,
        }
    }

    pub fn handle_pessimistic(&mut self, from: NodeId, msg: &ProtocolMessage) -> Option<MessageKind> {
        use MessageKind::*;
        match msg.kind {
            GiveUp => {
                self.drop_waiter(from, msg.attempt);
                return None;
            }
            // optimistic-only notification; never sent with a pessimistic type
            Reaction => return None,
            _ => {}
        }
        if self.is_removed() {
            return Some(RespRemoved);
        }
        if self.reserved_for_other(from) {
            return Some(RespTaken);
        }
        let waiter = Waiter { node: from, reactions: msg.sender_reactions, attempt: msg.attempt };
        match msg.kind {
            Fetch => {
                self.state = HolderState::Removed;
                Some(RespMolecule)
            }
            Query => {
                let mut waiters = self.take_waiters();
                upsert(&mut waiters, waiter);
                self.state = match std::mem::replace(&mut self.state, HolderState::Available) {
                    HolderState::Committed { locker, .. } => HolderState::Committed { locker, waiters },
                    _ => HolderState::Queried { waiters },
                };
                Some(RespOk)
            }
            Commitment => {
                let mut waiters = self.take_waiters();
                // a COMMITMENT from an unknown node counts as QUERY + COMMITMENT
                upsert(&mut waiters, waiter);
                let locker = sort_requesters(&mut waiters);
                self.state = HolderState::Committed { locker, waiters };
                Some(if locker == from { RespOk } else { RespTaken })
            }
            _ => unreachable!("responses are never delivered to holders"),
        }
    }

    pub fn handle_optimistic(&mut self, from: NodeId, msg: &ProtocolMessage) -> Option<MessageKind> {
        use MessageKind::*;
        let holds = matches!(
            self.state,
            HolderState::TakenOpt { reserver, attempt } if reserver == from && attempt == msg.attempt
        );
        match msg.kind {
            GiveUp => {
                if holds {
                    self.state = HolderState::Available;
                }
                None
            }
            Reaction => {
                if holds {
                    self.state = HolderState::Removed;
                }
                None
            }
            Fetch => Some(match self.state {
                HolderState::Removed => RespRemoved,
                HolderState::Available => {
                    self.state = HolderState::TakenOpt { reserver: from, attempt: msg.attempt };
                    RespMolecule
                }
                // pessimistic interest or an optimistic reservation both block
                _ => RespTaken,
            }),
            Query | Commitment => unreachable!("pessimistic requests are never typed optimistic"),
            _ => unreachable!("responses are never delivered to holders"),
        }
    }

    fn take_waiters(&mut self) -> Vec<Waiter> {
        match &mut self.state {
            HolderState::Queried { waiters } | HolderState::Committed { waiters, .. } => {
                std::mem::take(waiters)
            }
            _ => Vec::new(),
        }
    }

    fn drop_waiter(&mut self, from: NodeId, attempt: AttemptId) {
        let (was_locker, mut waiters) = match &mut self.state {
            HolderState::Queried { waiters } => (false, std::mem::take(waiters)),
            HolderState::Committed { locker, waiters } => (*locker == from, std::mem::take(waiters)),
            _ => return,
        };
        let before = waiters.len();
        waiters.retain(|w| !(w.node == from && w.attempt == attempt));
        let removed = waiters.len() != before;
        self.state = if waiters.is_empty() {
            HolderState::Available
        } else if let HolderState::Committed { locker, .. } = &self.state {
            if was_locker && removed {
                // promote the next head silently; it learns on its own COMMITMENT
                let locker = sort_requesters(&mut waiters);
                HolderState::Committed { locker, waiters }
            } else {
                HolderState::Committed { locker: *locker, waiters }
            }
        } else {
            HolderState::Queried { waiters }
        };
    }
}

fn upsert(waiters: &mut Vec<Waiter>, waiter: Waiter) {
    match waiters.iter_mut().find(|w| w.node == waiter.node) {
        Some(w) => *w = waiter,
        None => waiters.push(waiter),
    }
}

/// All molecules stored at one node.
#[derive(Clone, Debug, Default)]
pub struct HolderStore {
    records: HashMap<MoleculeId, HolderRecord>,
}

impl HolderStore {
    pub fn insert(&mut self, molecule: Molecule) {
        let id = molecule.id;
        let prev = self.records.insert(id, HolderRecord::new(molecule));
        assert!(prev.is_none(), "molecule {id} stored twice");
    }

    pub fn get(&self, id: MoleculeId) -> Option<&HolderRecord> {
        self.records.get(&id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn handle(
        &mut self,
        from: NodeId,
        msg: &ProtocolMessage,
        me: SenderInfo,
    ) -> Option<ProtocolMessage> {
        match self.records.get_mut(&msg.molecule) {
            Some(rec) => rec.handle(from, msg, me),
            // never stored here: behave as if it no longer exists
            None if msg.kind.is_release() => None,
            None => Some(msg.reply(MessageKind::RespRemoved, None, me)),
        }
    }
}
