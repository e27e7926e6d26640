//! Symmetric building blocks: SHA-256, HMAC-SHA256, HKDF-SHA256 and AES-128-CTR,
//! plus the two hash roles the KEM needs (element to key, element to exponent).

use std::fmt;

use aes::cipher::{BlockEncrypt, KeyInit, KeyIvInit, StreamCipher};
use aes::Aes128;
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};

use crate::error::DecryptError;
use crate::group::{GroupElement, GroupParams, Scalar};

type HmacSha256 = Hmac<Sha256>;
type Aes128Ctr = ctr::Ctr128BE<Aes128>;

pub const NONCE_LEN: usize = 16;
pub const CIPHER_KEY_LEN: usize = 16;
pub const MAC_KEY_LEN: usize = 32;
pub const TAG_LEN: usize = 32;

const KEY_HASH_PREFIX: &[u8] = b"KEYH";
const TCR_HASH_PREFIX: &[u8] = b"TCRH";

macro_rules! secret_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash)]
        pub struct $name([u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn from_bytes(bytes: [u8; $len]) -> Self {
                Self(bytes)
            }

            /// Fails unless `bytes` has exactly the role's length.
            pub fn from_slice(bytes: &[u8]) -> Option<Self> {
                bytes.try_into().ok().map(Self)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!(stringify!($name), "({}..)"), hex::encode(&self.0[..4]))
            }
        }
    };
}

secret_bytes!(
    /// 16-byte AES-128 key.
    CipherKey,
    CIPHER_KEY_LEN
);
secret_bytes!(
    /// 32-byte HMAC key.
    MacKey,
    MAC_KEY_LEN
);
secret_bytes!(
    /// 32-byte round session key `SSK_R`.
    SessionKey,
    32
);

/// HMAC-SHA256 output. Equality inspects every byte.
#[derive(Clone, Copy)]
pub struct MacTag([u8; TAG_LEN]);

impl MacTag {
    pub fn from_bytes(bytes: [u8; TAG_LEN]) -> Self {
        Self(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Self)
    }

    pub fn as_bytes(&self) -> &[u8; TAG_LEN] {
        &self.0
    }
}

impl PartialEq for MacTag {
    fn eq(&self, other: &Self) -> bool {
        self.0
            .iter()
            .zip(other.0.iter())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }
}

impl Eq for MacTag {}

impl fmt::Debug for MacTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MacTag({})", hex::encode(self.0))
    }
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// `H: G -> {0,1}^256`, the key hash.
pub fn hash_to_key(params: &GroupParams, e: &GroupElement) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(KEY_HASH_PREFIX);
    h.update(params.encode_element(e));
    h.finalize().into()
}

/// Target-collision-resistant `G -> Z_p`.
pub fn hash_to_scalar(params: &GroupParams, e: &GroupElement) -> Scalar {
    let mut h = Sha256::new();
    h.update(TCR_HASH_PREFIX);
    h.update(params.encode_element(e));
    params.scalar_from_bytes_be(&h.finalize())
}

/// Raw HKDF-SHA256 (extract then expand).
pub fn hkdf_sha256(ikm: &[u8], salt: &[u8], info: &[u8], out: &mut [u8]) {
    Hkdf::<Sha256>::new(Some(salt), ikm)
        .expand(info, out)
        .expect("HKDF output length within 255 blocks");
}

/// Splits `ikm` into an encryption key and a MAC key under a zero salt.
pub fn hkdf_split(ikm: &[u8], info: &[u8]) -> (CipherKey, MacKey) {
    debug_assert!(!ikm.is_empty());
    let mut okm = [0u8; CIPHER_KEY_LEN + MAC_KEY_LEN];
    hkdf_sha256(ikm, &[0u8; 32], info, &mut okm);
    let (enc, mac) = okm.split_at(CIPHER_KEY_LEN);
    (
        CipherKey::from_slice(enc).expect("16 bytes"),
        MacKey::from_slice(mac).expect("32 bytes"),
    )
}

/// Round key: ikm = `seed`, salt = `key`, info = round as 8 big-endian bytes.
pub fn hkdf_session(seed: &[u8], round: u64, key: &CipherKey) -> SessionKey {
    let mut okm = [0u8; 32];
    hkdf_sha256(seed, key.as_bytes(), &round.to_be_bytes(), &mut okm);
    SessionKey(okm)
}

pub fn hmac(msg: &[u8], key: &MacKey) -> MacTag {
    let mut m = <HmacSha256 as Mac>::new_from_slice(key.as_bytes()).expect("any key length");
    m.update(msg);
    MacTag(m.finalize().into_bytes().into())
}

pub fn hmac_verify(msg: &[u8], key: &MacKey, tag: &MacTag) -> bool {
    hmac(msg, key) == *tag
}

/// Single-block AES-128 encryption.
pub fn aes128_encrypt_block(key: &[u8; 16], block: &[u8; 16]) -> [u8; 16] {
    let cipher = Aes128::new(key.into());
    let mut b = (*block).into();
    cipher.encrypt_block(&mut b);
    b.into()
}

/// AES-128-CTR. Output is `nonce || ciphertext`; the nonce is the initial counter block.
pub fn sym_encrypt(plaintext: &[u8], key: &CipherKey, nonce: &[u8; NONCE_LEN]) -> Vec<u8> {
    let mut out = Vec::with_capacity(NONCE_LEN + plaintext.len());
    out.extend_from_slice(nonce);
    out.extend_from_slice(plaintext);
    let mut cipher = Aes128Ctr::new(key.as_bytes().into(), nonce.into());
    cipher.apply_keystream(&mut out[NONCE_LEN..]);
    out
}

pub fn sym_decrypt(ciphertext: &[u8], key: &CipherKey) -> Result<Vec<u8>, DecryptError> {
    if ciphertext.len() < NONCE_LEN {
        return Err(DecryptError::Truncated(ciphertext.len()));
    }
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    let nonce: [u8; NONCE_LEN] = nonce.try_into().expect("16 bytes");
    let mut out = body.to_vec();
    let mut cipher = Aes128Ctr::new(key.as_bytes().into(), (&nonce).into());
    cipher.apply_keystream(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unhex(s: &str) -> Vec<u8> {
        hex::decode(s).unwrap()
    }

    #[test]
    fn sha256_abc() {
        assert_eq!(
            hex::encode(sha256(b"abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_roles_are_separated() {
        let g = GroupParams::toy23();
        let two = g.element(2u32).unwrap();
        // golden values from an independent hashlib script
        assert_eq!(
            hex::encode(hash_to_key(&g, &two)),
            "c2a8258d9304a802221ac81eed31851ea2a425f06118dc1bfd6e6bfc1c1edad4"
        );
        assert_ne!(hash_to_key(&g, &two), sha256(&[2]));
        let sixteen = g.element(16u32).unwrap();
        assert_eq!(hash_to_scalar(&g, &sixteen), g.scalar(4u32));
    }

    #[test]
    fn hash_to_key_respects_group_equality() {
        let g = GroupParams::toy23();
        let cubed = g.exp(&g.element(16u32).unwrap(), &g.scalar(3u32));
        assert_eq!(cubed, g.element(2u32).unwrap());
        assert_eq!(
            hash_to_key(&g, &cubed),
            hash_to_key(&g, &g.element(2u32).unwrap())
        );
    }

    #[test]
    fn hash_to_scalar_range() {
        use rand::SeedableRng;
        let g = GroupParams::schnorr256();
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let e = g.exp_gen(&g.random_scalar(&mut rng));
            let s = hash_to_scalar(&g, &e);
            assert!(s.as_biguint() < g.group_order());
            assert_eq!(s, hash_to_scalar(&g, &e));
        }
    }

    #[test]
    fn hkdf_split_golden_and_label_separation() {
        let ikm: Vec<u8> = (0u8..32).collect();
        let (e3, m3) = hkdf_split(&ikm, b"phase3");
        let (e4, m4) = hkdf_split(&ikm, b"phase4");
        assert_eq!(
            hex::encode(e3.as_bytes()),
            "d00fc6e06783378bc2aab0148d0e1dd0"
        );
        assert_eq!(
            hex::encode(m3.as_bytes()),
            "8cf5fe0171cd7f02d04d2667ed80c2105e4ea819e32196f65e09564172da26bd"
        );
        assert_eq!(
            hex::encode(e4.as_bytes()),
            "367f8774c5f76ed1f438997d47897cda"
        );
        assert_eq!(
            hex::encode(m4.as_bytes()),
            "7822e2fa10a1f9dad03f119005a83a91c217f1d3faccc90f126e683ebe1fee07"
        );
        assert_eq!(hkdf_split(&ikm, b"phase3"), (e3, m3));
        assert_ne!(&e3.as_bytes()[..], &m3.as_bytes()[..16]);
    }

    #[test]
    fn hkdf_session_golden() {
        let seed: Vec<u8> = (0u8..16).collect();
        let key = CipherKey::from_slice(&(0x40u8..0x50).collect::<Vec<_>>()).unwrap();
        let r0 = hkdf_session(&seed, 0, &key);
        let r1 = hkdf_session(&seed, 1, &key);
        assert_eq!(
            hex::encode(r0.as_bytes()),
            "1a02b7d6f5315dd093332f2ee5b47d6dd61b7a5114939ddffd53038ae4d00c28"
        );
        assert_eq!(
            hex::encode(r1.as_bytes()),
            "852b148beb96ffe56a8986918d65faccd7e95ab90dd423871859736930b0cfc3"
        );
    }

    #[test]
    fn key_roles_reject_wrong_lengths() {
        assert!(CipherKey::from_slice(&[0u8; 32]).is_none());
        assert!(MacKey::from_slice(&[0u8; 16]).is_none());
        assert!(MacTag::from_slice(&[0u8; 31]).is_none());
    }

    #[test]
    fn aes_fips197_block() {
        let key: [u8; 16] = unhex("000102030405060708090a0b0c0d0e0f")
            .try_into()
            .unwrap();
        let pt: [u8; 16] = unhex("00112233445566778899aabbccddeeff")
            .try_into()
            .unwrap();
        assert_eq!(
            hex::encode(aes128_encrypt_block(&key, &pt)),
            "69c4e0d86a7b0430d8cdb78070b4c55a"
        );
    }

    #[test]
    fn ctr_nonce_dependence_and_truncation() {
        let key = CipherKey::from_bytes([7; 16]);
        let sk = [0xAB; 16];
        let a = sym_encrypt(&sk, &key, &[1; 16]);
        let b = sym_encrypt(&sk, &key, &[2; 16]);
        assert_ne!(a, b);
        assert_eq!(a.len(), 32);
        assert_eq!(
            sym_decrypt(&a[..15], &key),
            Err(DecryptError::Truncated(15))
        );
        assert_eq!(sym_decrypt(&a[..16], &key).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn hmac_tag_bit_flips_all_rejected() {
        let key = MacKey::from_bytes([9; 32]);
        let tag = hmac(b"seed material", &key);
        for bit in 0..TAG_LEN * 8 {
            let mut t = *tag.as_bytes();
            t[bit / 8] ^= 1 << (bit % 8);
            assert!(!hmac_verify(b"seed material", &key, &MacTag::from_bytes(t)));
        }
    }

    proptest! {
        #[test]
        fn ctr_round_trip(pt in proptest::collection::vec(any::<u8>(), 0..80),
                          key in any::<[u8; 16]>(), nonce in any::<[u8; 16]>()) {
            let key = CipherKey::from_bytes(key);
            let ct = sym_encrypt(&pt, &key, &nonce);
            prop_assert_eq!(sym_decrypt(&ct, &key).unwrap(), pt);
        }

        #[test]
        fn hmac_round_trip(msg in proptest::collection::vec(any::<u8>(), 0..100), key in any::<[u8; 32]>()) {
            let key = MacKey::from_bytes(key);
            prop_assert!(hmac_verify(&msg, &key, &hmac(&msg, &key)));
        }
    }
}
