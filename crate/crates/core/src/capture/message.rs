use std::fmt;

use crate::adapt::Mode;
use crate::chemistry::{MoleculeId, Payload};

/// Requester-local attempt sequence number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttemptId(pub u64);

impl fmt::Display for AttemptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Query,
    Commitment,
    Fetch,
    GiveUp,
    Reaction,
    RespOk,
    RespTaken,
    RespRemoved,
    RespMolecule,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::Query => "QUERY",
            MessageKind::Commitment => "COMMITMENT",
            MessageKind::Fetch => "FETCH",
            MessageKind::GiveUp => "GIVE_UP",
            MessageKind::Reaction => "REACTION",
            MessageKind::RespOk => "RESP_OK",
            MessageKind::RespTaken => "RESP_TAKEN",
            MessageKind::RespRemoved => "RESP_REMOVED",
            MessageKind::RespMolecule => "RESP_MOLECULE",
        }
    }

    /// Responses travel holder → requester; everything else is a request.
    pub fn is_response(self) -> bool {
        matches!(
            self,
            MessageKind::RespOk
                | MessageKind::RespTaken
                | MessageKind::RespRemoved
                | MessageKind::RespMolecule
        )
    }

    /// GIVE_UP and REACTION release a molecule rather than ask for it.
    pub fn is_release(self) -> bool {
        matches!(self, MessageKind::GiveUp | MessageKind::Reaction)
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub molecule: MoleculeId,
    pub attempt: AttemptId,
    pub request_type: Mode,
    /// Reactions completed by the sender so far.
    pub sender_reactions: u64,
    /// The sender's current local success rate.
    pub sender_sigma: f64,
    /// Only set on RESP_MOLECULE.
    pub payload: Option<Payload>,
}

/// Who sent a message and what it reported about itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SenderInfo {
    pub reactions: u64,
    pub sigma: f64,
}

impl ProtocolMessage {
    pub fn request(
        kind: MessageKind,
        molecule: MoleculeId,
        attempt: AttemptId,
        request_type: Mode,
        sender: SenderInfo,
    ) -> Self {
        debug_assert!(!kind.is_response());
        ProtocolMessage {
            kind,
            molecule,
            attempt,
            request_type,
            sender_reactions: sender.reactions,
            sender_sigma: sender.sigma,
            payload: None,
        }
    }

    /// Builds the reply to `self`, echoing molecule, attempt and type.
    pub fn reply(&self, kind: MessageKind, payload: Option<Payload>, holder: SenderInfo) -> Self {
        debug_assert!(kind.is_response());
        debug_assert_eq!(payload.is_some(), kind == MessageKind::RespMolecule);
        ProtocolMessage {
            kind,
            molecule: self.molecule,
            attempt: self.attempt,
            request_type: self.request_type,
            sender_reactions: holder.reactions,
            sender_sigma: holder.sigma,
            payload,
        }
    }
}
