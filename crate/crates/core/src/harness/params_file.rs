//! Provisioning file: the group plus every ECU's keypair, hex encoded.

use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::group::{GroupId, GroupParams};
use crate::kem::{keygen, EcuKeyPair};

pub const SIMULATION_ONLY_NOTICE: &str =
    "SIMULATION ONLY: secret keys are stored in plaintext; never use for a real vehicle";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvisionedKey {
    pub ecu_id: u16,
    pub x: String,
    pub y: String,
    pub u: String,
    pub v: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub simulation_only: bool,
    pub notice: String,
    pub group: GroupId,
    pub prime_modulus: String,
    pub group_order: String,
    pub generator: String,
    pub keypairs: Vec<ProvisionedKey>,
}

impl ParamFile {
    /// Keypairs for ECUs `1..=n`, drawn in order from `rng`.
    pub fn generate<R: RngCore + ?Sized>(group: GroupId, n: u16, rng: &mut R) -> Self {
        let params = group.params();
        let keys: Vec<_> = (1..=n).map(|id| keygen(&params, id, rng)).collect();
        Self::from_keypairs(&params, &keys)
    }

    pub fn from_keypairs(params: &GroupParams, keys: &[EcuKeyPair]) -> Self {
        Self {
            simulation_only: true,
            notice: SIMULATION_ONLY_NOTICE.to_string(),
            group: params.id(),
            prime_modulus: params.prime_modulus().to_str_radix(16),
            group_order: params.group_order().to_str_radix(16),
            generator: params.generator().as_biguint().to_str_radix(16),
            keypairs: keys
                .iter()
                .map(|k| ProvisionedKey {
                    ecu_id: k.ecu_id,
                    x: hex::encode(k.secret.x.to_bytes_be()),
                    y: hex::encode(k.secret.y.to_bytes_be()),
                    u: hex::encode(params.encode_element(&k.public.u)),
                    v: hex::encode(params.encode_element(&k.public.v)),
                })
                .collect(),
        }
    }

    /// Checks the group matches its named parameters and every public key matches
    /// its secret.
    pub fn keypairs(&self) -> Result<(GroupParams, Vec<EcuKeyPair>), ConfigError> {
        if !self.simulation_only {
            return Err(ConfigError::Invalid(
                "parameter file must carry \"simulation_only\": true".into(),
            ));
        }
        let params = self.group.params();
        if self.prime_modulus != params.prime_modulus().to_str_radix(16)
            || self.group_order != params.group_order().to_str_radix(16)
            || self.generator != params.generator().as_biguint().to_str_radix(16)
        {
            return Err(ConfigError::Invalid(format!(
                "group parameters do not match {}",
                self.group
            )));
        }
        let unhex = |field: &str, s: &str, id: u16| {
            hex::decode(s).map_err(|e| ConfigError::Invalid(format!("ECU {id} field {field}: {e}")))
        };
        let mut out = Vec::with_capacity(self.keypairs.len());
        for k in &self.keypairs {
            let x = params.scalar_from_bytes_be(&unhex("x", &k.x, k.ecu_id)?);
            let y = params.scalar_from_bytes_be(&unhex("y", &k.y, k.ecu_id)?);
            let kp = EcuKeyPair::from_secret(&params, k.ecu_id, x, y);
            let u = params.decode_element(&unhex("u", &k.u, k.ecu_id)?);
            let v = params.decode_element(&unhex("v", &k.v, k.ecu_id)?);
            if !kp.is_consistent(&params)
                || u.as_ref() != Ok(&kp.public.u)
                || v.as_ref() != Ok(&kp.public.v)
            {
                return Err(ConfigError::Invalid(format!(
                    "ECU {} public key does not match its secret",
                    k.ecu_id
                )));
            }
            out.push(kp);
        }
        Ok((params, out))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("param file serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn round_trip_and_validation() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let f = ParamFile::generate(GroupId::Toy23, 2, &mut rng);
        assert!(f.simulation_only);
        let back = ParamFile::from_json(&f.to_json()).unwrap();
        let (params, keys) = back.keypairs().unwrap();
        assert_eq!(keys.len(), 2);
        for k in &keys {
            assert_eq!(params.exp_gen(&k.secret.x), k.public.u);
        }

        let mut bad = f.clone();
        bad.keypairs[1].u = bad.keypairs[1].v.clone();
        if bad.keypairs[1].u != f.keypairs[1].u {
            assert!(bad.keypairs().is_err());
        }
        let mut unmarked = f.clone();
        unmarked.simulation_only = false;
        assert!(unmarked.keypairs().is_err());
        let mut wrong_group = f;
        wrong_group.generator = "3".into();
        assert!(wrong_group.keypairs().is_err());
    }
}
