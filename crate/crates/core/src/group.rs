//! Prime-order cyclic groups realised as Schnorr subgroups of `Z*_P`.
//!
//! Two instantiations ship with the crate:
//!
//! * [`GroupId::Toy23`], the order-11 subgroup of `Z*_23` generated by 2. Every
//!   algebraic statement about the scheme can be checked exhaustively here.
//! * [`GroupId::Schnorr256`], a 2048-bit safe-size modulus with a 256-bit prime
//!   order subgroup, used for realistic runs.
//!
//! Elements travel as fixed-length big-endian integers. Decoding checks both
//! the range and subgroup membership so a corrupted ciphertext never reaches
//! the KEM arithmetic.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::DecodeError;

const SCHNORR256_MODULUS: &str = "8529d321377e908884a4df892af318ff9698839dc16a944c7c6883a71c54c0d9\
18d60d50bf14b096b549c8de4cfdcd5ae72ac3d0b00d6f8159450a41637a0bdf\
c873a2b34748c76e07f0f229fb9897e96e21acc92fdb03591c0a13950df63f7c\
ce73597af5f1fd06fed2bea635cf55fc8e4764f2d4f88f549e08d707fb3bbcd5\
e669ab37a3d81cd307995766324ffaab762777a70faeb3dd2568943fe739661f\
e9727171b1ee2a17de6209466088ad7d4f77d3ed2f02eb9404f6c0f007d4849a\
67109a2ba3b5b3bbc841ab894dd0d8fc7494932fce6c6a86ef6aa9d7a821a5ae\
9633dc2fcf33f5f5d119bcb4c4cfd8f9f5db8c84c68127f57d212295a025880b";

const SCHNORR256_ORDER: &str = "83bd40afb9558426cf519fb317e182c7eb0aab556e168cef18a16b746e096e23";

const SCHNORR256_GENERATOR: &str =
    "55f13f3dc9afe246f4c2931fe1265ff7f95403ee25b226dfee770a5024c5ca57\
1f856066567d793199f3761df2dace803ae34c1d59f222cee9327d62533269d5\
ce2490a79f4ae30f1355e8e47bbaa712b9ef6c48f2ce8cf2be7a0c2a2c757151\
8ec38ce293edfab04427acbc5a8d711b907c06d1c708297d4085d8b5641d36f6\
0057190e843f17da19256e88978eecb132f5d41f2648a04e2922fc5b79705d6f\
4c60bb616c8f8b286d475d256d7adcb129368d6dbc34440053d73460f63c0d68\
a5172c655e7a4481199e59e068d0e8a3cbb7f9618b354ee456f49ccf29f51304\
bcb71b75e1aed6034e0b58d9bd14393a435a6ce6ef27c69fad229d990836f008";

/// Named group instantiations accepted in scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupId {
    Toy23,
    Schnorr256,
}

impl GroupId {
    pub fn name(self) -> &'static str {
        match self {
            GroupId::Toy23 => "toy23",
            GroupId::Schnorr256 => "schnorr256",
        }
    }

    pub fn params(self) -> GroupParams {
        match self {
            GroupId::Toy23 => GroupParams::toy23(),
            GroupId::Schnorr256 => GroupParams::schnorr256(),
        }
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GroupId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy23" => Ok(GroupId::Toy23),
            "schnorr256" => Ok(GroupId::Schnorr256),
            other => Err(format!(
                "unknown group `{other}` (expected toy23 or schnorr256)"
            )),
        }
    }
}

/// A member of the order-`p` subgroup. Construct through [`GroupParams`] only.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GroupElement(BigUint);

impl GroupElement {
    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement({:x})", self.0)
    }
}

/// An exponent, always reduced modulo the group order.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scalar(BigUint);

impl Scalar {
    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_bytes_be(&self) -> Vec<u8> {
        self.0.to_bytes_be()
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar({:x})", self.0)
    }
}

/// Parameters `(G, g, p)` of a prime-order cyclic group plus the security
/// level it is meant to provide.
#[derive(Clone, PartialEq, Eq)]
pub struct GroupParams {
    id: GroupId,
    prime_modulus: BigUint,
    group_order: BigUint,
    generator: GroupElement,
    security_bits: u32,
    key_len_bits: u32,
    element_len: usize,
}

impl fmt::Debug for GroupParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupParams")
            .field("id", &self.id)
            .field("modulus_bits", &self.prime_modulus.bits())
            .field("order_bits", &self.group_order.bits())
            .finish()
    }
}

fn from_hex(s: &str) -> BigUint {
    BigUint::parse_bytes(s.as_bytes(), 16).expect("valid hex constant")
}

impl GroupParams {
    /// Order-11 subgroup of `Z*_23` (the quadratic residues) with generator 2.
    pub fn toy23() -> Self {
        Self {
            id: GroupId::Toy23,
            prime_modulus: BigUint::from(23u32),
            group_order: BigUint::from(11u32),
            generator: GroupElement(BigUint::from(2u32)),
            security_bits: 3,
            key_len_bits: 256,
            element_len: 1,
        }
    }

    /// 2048-bit modulus, 256-bit prime-order subgroup.
    pub fn schnorr256() -> Self {
        Self {
            id: GroupId::Schnorr256,
            prime_modulus: from_hex(SCHNORR256_MODULUS),
            group_order: from_hex(SCHNORR256_ORDER),
            generator: GroupElement(from_hex(SCHNORR256_GENERATOR)),
            security_bits: 128,
            key_len_bits: 256,
            element_len: 256,
        }
    }

    pub fn id(&self) -> GroupId {
        self.id
    }

    pub fn prime_modulus(&self) -> &BigUint {
        &self.prime_modulus
    }

    pub fn group_order(&self) -> &BigUint {
        &self.group_order
    }

    pub fn generator(&self) -> &GroupElement {
        &self.generator
    }

    pub fn security_bits(&self) -> u32 {
        self.security_bits
    }

    /// Output length of the key-derivation hash, in bits.
    pub fn key_len_bits(&self) -> u32 {
        self.key_len_bits
    }

    /// Fixed length of an encoded element in bytes.
    pub fn element_len(&self) -> usize {
        self.element_len
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(BigUint::one())
    }

    pub fn exp(&self, base: &GroupElement, e: &Scalar) -> GroupElement {
        GroupElement(base.0.modpow(&e.0, &self.prime_modulus))
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement((&a.0 * &b.0) % &self.prime_modulus)
    }

    /// `g^e`.
    pub fn exp_gen(&self, e: &Scalar) -> GroupElement {
        self.exp(&self.generator, e)
    }

    pub fn is_member(&self, value: &BigUint) -> bool {
        !value.is_zero()
            && value < &self.prime_modulus
            && value
                .modpow(&self.group_order, &self.prime_modulus)
                .is_one()
    }

    /// Builds an element from an integer, rejecting anything outside the subgroup.
    pub fn element(&self, value: impl Into<BigUint>) -> Result<GroupElement, DecodeError> {
        let value = value.into();
        if self.is_member(&value) {
            Ok(GroupElement(value))
        } else {
            Err(DecodeError::NotInSubgroup)
        }
    }

    /// Reduces an arbitrary integer into a scalar.
    pub fn scalar(&self, value: impl Into<BigUint>) -> Scalar {
        Scalar(value.into() % &self.group_order)
    }

    pub fn scalar_from_bytes_be(&self, bytes: &[u8]) -> Scalar {
        self.scalar(BigUint::from_bytes_be(bytes))
    }

    /// `a·b + c mod p`.
    pub fn scalar_mul_add(&self, a: &Scalar, b: &Scalar, c: &Scalar) -> Scalar {
        Scalar((&a.0 * &b.0 + &c.0) % &self.group_order)
    }

    /// Uniform draw from `[1, p)` by rejection sampling on the bit length of `p`.
    pub fn random_scalar<R: RngCore + ?Sized>(&self, rng: &mut R) -> Scalar {
        let bits = self.group_order.bits();
        let nbytes = bits.div_ceil(8) as usize;
        let excess = (nbytes as u64 * 8 - bits) as u32;
        let mut buf = vec![0u8; nbytes];
        loop {
            rng.fill_bytes(&mut buf);
            buf[0] &= 0xffu8 >> excess;
            let candidate = BigUint::from_bytes_be(&buf);
            if !candidate.is_zero() && candidate < self.group_order {
                return Scalar(candidate);
            }
        }
    }

    pub fn encode_element(&self, e: &GroupElement) -> Vec<u8> {
        let raw = e.0.to_bytes_be();
        let mut out = vec![0u8; self.element_len];
        out[self.element_len - raw.len()..].copy_from_slice(&raw);
        out
    }

    pub fn decode_element(&self, bytes: &[u8]) -> Result<GroupElement, DecodeError> {
        if bytes.len() != self.element_len {
            return Err(DecodeError::Length {
                expected: self.element_len,
                actual: bytes.len(),
            });
        }
        self.element(BigUint::from_bytes_be(bytes))
    }

    /// All subgroup elements `g^0 .. g^(p-1)`. Only sensible for the toy group.
    pub fn enumerate(&self) -> Vec<GroupElement> {
        assert!(
            self.group_order.bits() <= 16,
            "enumeration is only supported for toy groups"
        );
        let mut out = Vec::new();
        let mut acc = self.identity();
        let mut k = BigUint::zero();
        while k < self.group_order {
            out.push(acc.clone());
            acc = self.mul(&acc, &self.generator);
            k += 1u32;
        }
        out
    }

    /// Every scalar in `[0, p)`. Only sensible for the toy group.
    pub fn all_scalars(&self) -> Vec<Scalar> {
        assert!(self.group_order.bits() <= 16);
        let p: u64 = self.group_order.iter_u64_digits().next().unwrap_or(0);
        (0..p).map(|v| Scalar(BigUint::from(v))).collect()
    }
}
