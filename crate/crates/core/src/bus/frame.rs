use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocol::{Destination, MessageKind};

/// Maximum CAN-FD data field.
pub const MAX_PAYLOAD: usize = 64;
pub const FRAG_HEADER_LEN: usize = 4;
/// Body bytes carried per frame after the fragment header.
pub const FRAG_DATA_LEN: usize = MAX_PAYLOAD - FRAG_HEADER_LEN;

/// `msg_seq` (u16 BE), `frag_index`, `frag_total`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FragHeader {
    pub msg_seq: u16,
    pub frag_index: u8,
    pub frag_total: u8,
}

impl FragHeader {
    pub fn to_bytes(self) -> [u8; FRAG_HEADER_LEN] {
        let seq = self.msg_seq.to_be_bytes();
        [seq[0], seq[1], self.frag_index, self.frag_total]
    }

    pub fn parse(payload: &[u8]) -> Option<Self> {
        let h = payload.get(..FRAG_HEADER_LEN)?;
        let hdr = Self {
            msg_seq: u16::from_be_bytes([h[0], h[1]]),
            frag_index: h[2],
            frag_total: h[3],
        };
        (hdr.frag_total >= 1 && hdr.frag_index < hdr.frag_total).then_some(hdr)
    }
}

/// One frame on the wire.
///
/// `kind` and `dest` model the identifier-level addressing a receiver uses to
/// route the frame; they are not part of the payload and cannot be tampered with.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanFdFrame {
    pub can_id: u16,
    pub kind: MessageKind,
    pub dest: Destination,
    pub payload: Vec<u8>,
    pub timestamp_us: u64,
}

impl CanFdFrame {
    pub fn header(&self) -> Option<FragHeader> {
        FragHeader::parse(&self.payload)
    }

    pub fn data(&self) -> &[u8] {
        &self.payload[FRAG_HEADER_LEN.min(self.payload.len())..]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FragmentError {
    #[error("body of {0} bytes needs more than 255 fragments")]
    TooLong(usize),
    #[error("fragment set is incomplete or inconsistent")]
    Incomplete,
}

pub fn frag_count(body_len: usize) -> usize {
    body_len.div_ceil(FRAG_DATA_LEN).max(1)
}

pub fn fragment(
    kind: MessageKind,
    dest: Destination,
    body: &[u8],
    can_id: u16,
    msg_seq: u16,
) -> Result<Vec<CanFdFrame>, FragmentError> {
    let total = frag_count(body.len());
    if total > u8::MAX as usize {
        return Err(FragmentError::TooLong(body.len()));
    }
    let chunks: Vec<&[u8]> = if body.is_empty() {
        vec![&[][..]]
    } else {
        body.chunks(FRAG_DATA_LEN).collect()
    };
    Ok(chunks
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| {
            let hdr = FragHeader {
                msg_seq,
                frag_index: i as u8,
                frag_total: total as u8,
            };
            let mut payload = hdr.to_bytes().to_vec();
            payload.extend_from_slice(chunk);
            CanFdFrame {
                can_id,
                kind,
                dest,
                payload,
                timestamp_us: 0,
            }
        })
        .collect())
}

/// Rebuilds a body from a complete fragment set in any order.
pub fn reassemble(frames: &[CanFdFrame]) -> Result<Vec<u8>, FragmentError> {
    let mut r = Reassembler::default();
    let mut done = None;
    for f in frames {
        if let Some(body) = r.push(f) {
            done = Some(body);
        }
    }
    match done {
        Some(body) if r.pending() == 0 => Ok(body),
        _ => Err(FragmentError::Incomplete),
    }
}

/// Collects fragments keyed by `(can_id, msg_seq)`.
#[derive(Debug, Default)]
pub struct Reassembler {
    partial: BTreeMap<(u16, u16), Partial>,
}

#[derive(Debug)]
struct Partial {
    total: u8,
    parts: BTreeMap<u8, Vec<u8>>,
}

impl Reassembler {
    /// Returns the full body once the last missing fragment arrives.
    pub fn push(&mut self, frame: &CanFdFrame) -> Option<Vec<u8>> {
        let hdr = frame.header()?;
        let key = (frame.can_id, hdr.msg_seq);
        let entry = self.partial.entry(key).or_insert_with(|| Partial {
            total: hdr.frag_total,
            parts: BTreeMap::new(),
        });
        if entry.total != hdr.frag_total {
            // a fresh message reused the sequence number; restart
            *entry = Partial {
                total: hdr.frag_total,
                parts: BTreeMap::new(),
            };
        }
        entry.parts.insert(hdr.frag_index, frame.data().to_vec());
        if entry.parts.len() == entry.total as usize {
            let done = self.partial.remove(&key).expect("present");
            Some(done.parts.into_values().flatten().collect())
        } else {
            None
        }
    }

    pub fn pending(&self) -> usize {
        self.partial.len()
    }
}
