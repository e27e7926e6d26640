//! Hashed Diffie-Hellman key encapsulation with a ciphertext consistency check.
//!
//! The recipient holds `(x, y)` with public `(u, v) = (g^x, g^y)`. Encapsulation
//! picks `r`, sends `c = g^r` and `α = (u^tem · v)^r` where `tem = H(c)`, and keeps
//! `K = H(u^r)`. Decapsulation accepts only if `α = c^(x·tem + y)` and then derives
//! `K = H(c^x)`.

use std::fmt;

use rand::RngCore;

use crate::error::{DecodeError, KemError};
use crate::group::{GroupElement, GroupParams, Scalar};
use crate::primitives::{hash_to_key, hash_to_scalar};

/// Maps a ciphertext component to the exponent `tem`.
pub trait ExponentHash {
    fn tem(&self, params: &GroupParams, c: &GroupElement) -> Scalar;
}

/// The production hash: SHA-256 reduced into `Z_p`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TcrHash;

impl ExponentHash for TcrHash {
    fn tem(&self, params: &GroupParams, c: &GroupElement) -> Scalar {
        hash_to_scalar(params, c)
    }
}

impl<F> ExponentHash for F
where
    F: Fn(&GroupParams, &GroupElement) -> Scalar,
{
    fn tem(&self, params: &GroupParams, c: &GroupElement) -> Scalar {
        self(params, c)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub u: GroupElement,
    pub v: GroupElement,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    pub x: Scalar,
    pub y: Scalar,
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcuKeyPair {
    pub ecu_id: u16,
    pub secret: SecretKey,
    pub public: PublicKey,
}

impl EcuKeyPair {
    /// Derives the public half from `(x, y)`.
    pub fn from_secret(params: &GroupParams, ecu_id: u16, x: Scalar, y: Scalar) -> Self {
        let public = PublicKey {
            u: params.exp_gen(&x),
            v: params.exp_gen(&y),
        };
        Self {
            ecu_id,
            secret: SecretKey { x, y },
            public,
        }
    }

    /// True when the public key matches the secret exponents.
    pub fn is_consistent(&self, params: &GroupParams) -> bool {
        !self.secret.x.is_zero()
            && !self.secret.y.is_zero()
            && params.exp_gen(&self.secret.x) == self.public.u
            && params.exp_gen(&self.secret.y) == self.public.v
    }
}

/// `Cipher_i = (c, α)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KemCiphertext {
    pub c: GroupElement,
    pub alpha: GroupElement,
}

impl KemCiphertext {
    pub fn encoded_len(params: &GroupParams) -> usize {
        2 * params.element_len()
    }

    /// `enc(c) || enc(α)`.
    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = params.encode_element(&self.c);
        out.extend(params.encode_element(&self.alpha));
        out
    }

    pub fn decode(params: &GroupParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        let n = params.element_len();
        if bytes.len() != 2 * n {
            return Err(DecodeError::BodyLength {
                expected: 2 * n,
                actual: bytes.len(),
            });
        }
        Ok(Self {
            c: params.decode_element(&bytes[..n])?,
            alpha: params.decode_element(&bytes[n..])?,
        })
    }
}

/// The 32-byte pairwise secret `K_i`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PairwiseKey(pub [u8; 32]);

impl PairwiseKey {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Debug for PairwiseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PairwiseKey({}..)", hex::encode(&self.0[..4]))
    }
}

pub fn keygen<R: RngCore + ?Sized>(params: &GroupParams, ecu_id: u16, rng: &mut R) -> EcuKeyPair {
    let x = params.random_scalar(rng);
    let y = params.random_scalar(rng);
    EcuKeyPair::from_secret(params, ecu_id, x, y)
}

pub fn encapsulate<R: RngCore + ?Sized>(
    params: &GroupParams,
    pk: &PublicKey,
    rng: &mut R,
) -> (PairwiseKey, KemCiphertext) {
    let r = params.random_scalar(rng);
    encapsulate_with(params, pk, &r, &TcrHash)
}

/// Encapsulation with caller-chosen randomness `r` and exponent hash.
pub fn encapsulate_with(
    params: &GroupParams,
    pk: &PublicKey,
    r: &Scalar,
    hash: &impl ExponentHash,
) -> (PairwiseKey, KemCiphertext) {
    let c = params.exp_gen(r);
    let tem = hash.tem(params, &c);
    let base = params.mul(&params.exp(&pk.u, &tem), &pk.v);
    let alpha = params.exp(&base, r);
    let key = PairwiseKey(hash_to_key(params, &params.exp(&pk.u, r)));
    (key, KemCiphertext { c, alpha })
}

pub fn decapsulate(
    params: &GroupParams,
    kp: &EcuKeyPair,
    ct: &KemCiphertext,
) -> Result<PairwiseKey, KemError> {
    decapsulate_with(params, kp, ct, &TcrHash)
}

pub fn decapsulate_with(
    params: &GroupParams,
    kp: &EcuKeyPair,
    ct: &KemCiphertext,
    hash: &impl ExponentHash,
) -> Result<PairwiseKey, KemError> {
    if !is_consistent_with(params, kp, ct, hash) {
        return Err(KemError::Consistency);
    }
    Ok(PairwiseKey(hash_to_key(
        params,
        &params.exp(&ct.c, &kp.secret.x),
    )))
}

/// `α == c^(x·tem + y)`.
pub fn is_consistent_with(
    params: &GroupParams,
    kp: &EcuKeyPair,
    ct: &KemCiphertext,
    hash: &impl ExponentHash,
) -> bool {
    let tem = hash.tem(params, &ct.c);
    let exponent = params.scalar_mul_add(&kp.secret.x, &tem, &kp.secret.y);
    params.exp(&ct.c, &exponent) == ct.alpha
}
