//! Discrete-event CAN-FD bus: fragmentation, identifier arbitration, transmission
//! time accounting and per-node compute latency.

mod adversary;
mod frame;
mod latency;
mod network;

use serde::{Deserialize, Serialize};

pub use adversary::AdversaryAction;
pub use frame::{
    frag_count, fragment, reassemble, CanFdFrame, FragHeader, FragmentError, Reassembler,
    FRAG_DATA_LEN, FRAG_HEADER_LEN, MAX_PAYLOAD,
};
pub use latency::{LatencyProfile, NodeClass, OpCosts, OpTally};
pub use network::{Network, PhaseTiming, Rejection, SimReport, TraceRecord, ADVERSARY_ID};

pub const DEFAULT_BITRATE_BPS: u64 = 1_000_000;
pub const DEFAULT_FRAME_OVERHEAD_BITS: u64 = 128;
pub const SECU_CAN_ID: u16 = 0x010;
pub const ECU_CAN_BASE: u16 = 0x100;
pub const ADVERSARY_CAN_ID: u16 = 0x7FF;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusConfig {
    pub bitrate_bps: u64,
    pub frame_overhead_bits: u64,
    pub latency: LatencyProfile,
    pub secu_can_id: u16,
    /// ECU `i` transmits as `ecu_can_base + i`.
    pub ecu_can_base: u16,
    pub adversary_can_id: u16,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self {
            bitrate_bps: DEFAULT_BITRATE_BPS,
            frame_overhead_bits: DEFAULT_FRAME_OVERHEAD_BITS,
            latency: LatencyProfile::stm32(),
            secu_can_id: SECU_CAN_ID,
            ecu_can_base: ECU_CAN_BASE,
            adversary_can_id: ADVERSARY_CAN_ID,
        }
    }
}

/// Time on the wire for a payload of `payload_len` bytes, rounded up to whole microseconds.
pub fn payload_time_us(payload_len: usize, cfg: &BusConfig) -> u64 {
    let bits = cfg.frame_overhead_bits + 8 * payload_len as u64;
    (bits * 1_000_000).div_ceil(cfg.bitrate_bps)
}

pub fn frame_time_us(frame: &CanFdFrame, cfg: &BusConfig) -> u64 {
    payload_time_us(frame.payload.len(), cfg)
}
