//! Per-operation compute latencies injected into the simulation.
//!
//! Presets carry the magnitudes measured on three microcontrollers: an STM32F407
//! running FourQ, a WinnerMicro W806 running NIST K-283 and an Arduino UNO R3
//! running Curve25519. Values the measurements do not pin down (HMAC, and the
//! W806 symmetric timings) are estimates and can be overridden with a custom
//! profile file.

use serde::{Deserialize, Serialize};

use crate::protocol::MessageKind;

/// Latency in microseconds for each primitive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpCosts {
    /// One Diffie-Hellman style public-key operation (encapsulate or decapsulate).
    pub eccdh_us: u64,
    pub sha256_us: u64,
    pub hkdf_us: u64,
    pub hmac_us: u64,
    pub aes_us: u64,
    /// Signature generation, used only for the comparison tallies.
    #[serde(default)]
    pub sign_us: u64,
    /// Signature verification, used only for the comparison tallies.
    #[serde(default)]
    pub verify_us: u64,
}

impl OpCosts {
    pub fn tally(&self, t: &OpTally) -> u64 {
        t.eccdh * self.eccdh_us
            + t.sha256 * self.sha256_us
            + t.hkdf * self.hkdf_us
            + t.hmac * self.hmac_us
            + t.aes * self.aes_us
            + t.sign * self.sign_us
            + t.verify * self.verify_us
    }
}

/// Operation counts for one handler or job.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpTally {
    pub eccdh: u64,
    pub sha256: u64,
    pub hkdf: u64,
    pub hmac: u64,
    pub aes: u64,
    pub sign: u64,
    pub verify: u64,
}

impl OpTally {
    /// SECU side of one encapsulation: `g^r`, `H(c)`, `α`, `H(u^r)`.
    pub const ENCAPSULATE: OpTally = OpTally::new(1, 2, 0, 0, 0);
    /// ECU side: `H(c)`, `β`, `H(c^x)`.
    pub const DECAPSULATE: OpTally = OpTally::new(1, 2, 0, 0, 0);
    /// SECU per-ECU wrap of `SK`: split, encrypt, MAC.
    pub const WRAP_GROUP_SECRET: OpTally = OpTally::new(0, 0, 1, 1, 1);
    /// ECU unwrap: split, MAC check, decrypt.
    pub const UNWRAP_GROUP_SECRET: OpTally = OpTally::new(0, 0, 1, 1, 1);
    /// Phase-4 sender: split `SK`, derive `SSK_0`, MAC the seed.
    pub const SEED_SEND: OpTally = OpTally::new(0, 0, 2, 1, 0);
    /// Phase-4 receiver: split `SK`, verify, derive `SSK_0`.
    pub const SEED_VERIFY: OpTally = OpTally::new(0, 0, 2, 1, 0);
    /// SECU observing the seed broadcast: split and verify only.
    pub const SEED_OBSERVE: OpTally = OpTally::new(0, 0, 1, 1, 0);
    pub const REFRESH: OpTally = OpTally::new(0, 0, 1, 0, 0);

    pub const fn new(eccdh: u64, sha256: u64, hkdf: u64, hmac: u64, aes: u64) -> Self {
        Self {
            eccdh,
            sha256,
            hkdf,
            hmac,
            aes,
            sign: 0,
            verify: 0,
        }
    }

    pub fn receive(kind: MessageKind) -> Self {
        match kind {
            MessageKind::PairwiseCipher => Self::DECAPSULATE,
            MessageKind::GroupSecret => Self::UNWRAP_GROUP_SECRET,
            MessageKind::SeedBroadcast => Self::SEED_VERIFY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeClass {
    Secu,
    Ecu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyProfile {
    pub name: String,
    pub secu: OpCosts,
    pub ecu: OpCosts,
}

const STM32: OpCosts = OpCosts {
    eccdh_us: 3_000,
    sha256_us: 40,
    hkdf_us: 300,
    hmac_us: 80,
    aes_us: 40,
    sign_us: 2_870,
    verify_us: 4_460,
};

const W806: OpCosts = OpCosts {
    eccdh_us: 2_000_000,
    sha256_us: 60,
    hkdf_us: 400,
    hmac_us: 120,
    aes_us: 60,
    sign_us: 0,
    verify_us: 0,
};

const UNO: OpCosts = OpCosts {
    eccdh_us: 4_000_000,
    sha256_us: 1_000,
    hkdf_us: 88_000,
    hmac_us: 2_000,
    aes_us: 950,
    sign_us: 0,
    verify_us: 0,
};

impl LatencyProfile {
    pub fn uniform(name: &str, costs: OpCosts) -> Self {
        Self {
            name: name.to_string(),
            secu: costs,
            ecu: costs,
        }
    }

    pub fn stm32() -> Self {
        Self::uniform("stm32", STM32)
    }

    pub fn w806() -> Self {
        Self::uniform("w806", W806)
    }

    pub fn uno() -> Self {
        Self::uniform("uno", UNO)
    }

    /// No compute latency at all; only bus time advances the clock.
    pub fn zero() -> Self {
        Self::uniform(
            "zero",
            OpCosts {
                eccdh_us: 0,
                sha256_us: 0,
                hkdf_us: 0,
                hmac_us: 0,
                aes_us: 0,
                sign_us: 0,
                verify_us: 0,
            },
        )
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "stm32" => Some(Self::stm32()),
            "w806" => Some(Self::w806()),
            "uno" => Some(Self::uno()),
            "zero" => Some(Self::zero()),
            _ => None,
        }
    }

    pub fn costs(&self, class: NodeClass) -> &OpCosts {
        match class {
            NodeClass::Secu => &self.secu,
            NodeClass::Ecu => &self.ecu,
        }
    }

    pub fn cost_us(&self, class: NodeClass, tally: &OpTally) -> u64 {
        self.costs(class).tally(tally)
    }
}
