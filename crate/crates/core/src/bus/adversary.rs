use serde::{Deserialize, Serialize};

use crate::protocol::{MessageKind, NodeId};

/// An on-bus attacker action. Occurrences count protocol messages of the given
/// kind in emission order, starting at 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversaryAction {
    /// Retransmit a complete message `delay_us` after it finished.
    Replay {
        kind: MessageKind,
        #[serde(default)]
        occurrence: usize,
        #[serde(default)]
        delay_us: u64,
        /// Identifier to replay under; the adversary's own by default.
        #[serde(default)]
        can_id: Option<u16>,
    },
    /// Flip one data bit of a fragment while it is on the wire.
    Tamper {
        kind: MessageKind,
        #[serde(default)]
        occurrence: usize,
        #[serde(default)]
        fragment: u8,
        /// Bit position within the fragment's data bytes, wrapped to its length.
        bit: usize,
    },
    /// Inject a fabricated message `offset_us` after the kind's phase begins.
    Forge {
        kind: MessageKind,
        /// Unicast target; broadcast when absent.
        #[serde(default)]
        receiver: Option<NodeId>,
        #[serde(default)]
        offset_us: u64,
        /// Explicit body; random elements or bytes of the right length otherwise.
        #[serde(default)]
        body_hex: Option<String>,
    },
}

impl AdversaryAction {
    pub fn kind(&self) -> MessageKind {
        match self {
            AdversaryAction::Replay { kind, .. }
            | AdversaryAction::Tamper { kind, .. }
            | AdversaryAction::Forge { kind, .. } => *kind,
        }
    }
}
