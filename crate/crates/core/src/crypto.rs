//! Hashing, commitments and authenticated record sealing.
//!
//! Sealing uses ChaCha20-Poly1305 with the key id bound as associated data.
//! It provides confidentiality and tamper detection for stored records; it
//! does not support computation over ciphertexts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chacha20poly1305::aead::{AeadInOut, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::{canonicalize, Canonical, CanonicalError, Value};

pub const SALT_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CryptoError {
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error("unknown key id {0:?}")]
    UnknownKey(String),
    #[error("authentication failed: sealed payload does not verify under key {0:?}")]
    AuthenticationFailed(String),
    #[error("malformed hash: {0}")]
    BadHash(String),
}

/// A SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0; 32]);

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", self.to_hex())
    }
}

impl FromStr for Hash256 {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(CryptoError::BadHash(s.to_string()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| CryptoError::BadHash(s.to_string()))?;
        Ok(Hash256(out))
    }
}

impl Canonical for Hash256 {
    fn to_value(&self) -> Value {
        Value::Bytes(self.0.to_vec())
    }

    fn from_value(value: &Value, path: &str) -> Result<Self, CanonicalError> {
        let bytes = value.as_bytes(path)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CanonicalError::invalid(path, "hash must be 32 bytes"))?;
        Ok(Hash256(arr))
    }
}

/// SHA-256 of `data`.
pub fn digest(data: &[u8]) -> Hash256 {
    Hash256(Sha256::digest(data).into())
}

/// SHA-256 of the canonical encoding of `value`.
pub fn digest_value(value: &Value) -> Result<Hash256, CanonicalError> {
    Ok(digest(canonicalize(value)?.as_bytes()))
}

pub fn digest_of<T: Canonical>(item: &T) -> Result<Hash256, CanonicalError> {
    digest_value(&item.to_value())
}

/// Salted hash commitment to a structured plaintext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Commitment {
    pub digest: Hash256,
    pub salt: [u8; SALT_LEN],
}

pub fn commit(plaintext: &Value, salt: [u8; SALT_LEN]) -> Result<Commitment, CanonicalError> {
    let mut bytes = canonicalize(plaintext)?.into_bytes();
    bytes.extend_from_slice(&salt);
    Ok(Commitment {
        digest: digest(&bytes),
        salt,
    })
}

/// False on mismatch and also when `plaintext` cannot be canonicalized.
pub fn verify_commit(plaintext: &Value, commitment: &Commitment) -> bool {
    commit(plaintext, commitment.salt)
        .map(|c| c.digest == commitment.digest)
        .unwrap_or(false)
}

pub fn random_salt<R: RngCore>(rng: &mut R) -> [u8; SALT_LEN] {
    let mut salt = [0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    salt
}

#[derive(Clone, PartialEq, Eq)]
pub struct SealingKey {
    pub id: String,
    bytes: [u8; 32],
}

impl SealingKey {
    pub fn new(id: impl Into<String>, bytes: [u8; 32]) -> Self {
        Self { id: id.into(), bytes }
    }

    pub fn generate<R: RngCore>(id: impl Into<String>, rng: &mut R) -> Self {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        Self::new(id, bytes)
    }

    pub fn secret(&self) -> &[u8; 32] {
        &self.bytes
    }
}

impl fmt::Debug for SealingKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SealingKey")
            .field("id", &self.id)
            .finish_non_exhaustive()
    }
}

/// Registered sealing keys, by key id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyTable {
    keys: BTreeMap<String, SealingKey>,
}

impl KeyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: SealingKey) {
        self.keys.insert(key.id.clone(), key);
    }

    pub fn get(&self, id: &str) -> Result<&SealingKey, CryptoError> {
        self.keys.get(id).ok_or_else(|| CryptoError::UnknownKey(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.keys.contains_key(id)
    }

    pub fn unseal(&self, sealed: &SealedPayload) -> Result<Value, CryptoError> {
        unseal(sealed, self.get(&sealed.key_id)?)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SealingKey> {
        self.keys.values()
    }
}

impl Canonical for KeyTable {
    fn to_value(&self) -> Value {
        Value::Map(
            self.keys
                .iter()
                .map(|(id, k)| (id.clone(), Value::Bytes(k.bytes.to_vec())))
                .collect(),
        )
    }

    fn from_value(value: &Value, path: &str) -> Result<Self, CanonicalError> {
        let mut table = KeyTable::new();
        for (id, v) in value.as_map(path)? {
            let p = format!("{path}.{id}");
            let bytes: [u8; 32] = v
                .as_bytes(&p)?
                .try_into()
                .map_err(|_| CanonicalError::invalid(&p, "key must be 32 bytes"))?;
            table.insert(SealingKey::new(id.clone(), bytes));
        }
        Ok(table)
    }
}

/// Authenticated ciphertext of a structured plaintext.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedPayload {
    pub key_id: String,
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
    pub auth_tag: [u8; TAG_LEN],
}

impl SealedPayload {
    /// Length of the tamperable region: ciphertext followed by tag.
    pub fn stored_len(&self) -> usize {
        self.ciphertext.len() + TAG_LEN
    }

    /// XOR `mask` into the byte at `offset` of ciphertext ∥ tag.
    pub fn flip_byte(&mut self, offset: usize, mask: u8) -> bool {
        if offset < self.ciphertext.len() {
            self.ciphertext[offset] ^= mask;
            true
        } else if offset < self.stored_len() {
            self.auth_tag[offset - self.ciphertext.len()] ^= mask;
            true
        } else {
            false
        }
    }
}

impl Canonical for SealedPayload {
    fn to_value(&self) -> Value {
        Value::map()
            .with("auth_tag", Value::Bytes(self.auth_tag.to_vec()))
            .with("ciphertext", Value::Bytes(self.ciphertext.clone()))
            .with("key_id", self.key_id.as_str())
            .with("nonce", Value::Bytes(self.nonce.to_vec()))
            .build()
    }

    fn from_value(value: &Value, path: &str) -> Result<Self, CanonicalError> {
        let fixed = |key: &str, len: usize| -> Result<Vec<u8>, CanonicalError> {
            let p = format!("{path}.{key}");
            let b = value.field(path, key)?.as_bytes(&p)?;
            if b.len() != len {
                return Err(CanonicalError::invalid(p, format!("expected {len} bytes")));
            }
            Ok(b)
        };
        Ok(SealedPayload {
            key_id: value.field(path, "key_id")?.as_text(path)?.to_string(),
            nonce: fixed("nonce", NONCE_LEN)?.try_into().expect("length checked"),
            ciphertext: value
                .field(path, "ciphertext")?
                .as_bytes(&format!("{path}.ciphertext"))?,
            auth_tag: fixed("auth_tag", TAG_LEN)?.try_into().expect("length checked"),
        })
    }
}

pub fn seal<R: RngCore>(plaintext: &Value, key: &SealingKey, rng: &mut R) -> Result<SealedPayload, CryptoError> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut buf = canonicalize(plaintext)?.into_bytes();
    let cipher = ChaCha20Poly1305::new(&Key::from(key.bytes));
    let tag = cipher
        .encrypt_inout_detached(&Nonce::from(nonce), key.id.as_bytes(), buf.as_mut_slice().into())
        .expect("chacha20poly1305 encryption of in-memory buffer");
    Ok(SealedPayload {
        key_id: key.id.clone(),
        nonce,
        ciphertext: buf,
        auth_tag: tag.into(),
    })
}

/// Decrypt with `key`. The result is the parsed plaintext; it canonicalizes
/// to exactly the sealed bytes, and typed decoding recovers the original
/// structure. A wrong key and a modified payload are
/// indistinguishable and both report [`CryptoError::AuthenticationFailed`].
pub fn unseal(sealed: &SealedPayload, key: &SealingKey) -> Result<Value, CryptoError> {
    let fail = || CryptoError::AuthenticationFailed(key.id.clone());
    let cipher = ChaCha20Poly1305::new(&Key::from(key.bytes));
    let mut buf = sealed.ciphertext.clone();
    cipher
        .decrypt_inout_detached(
            &Nonce::from(sealed.nonce),
            sealed.key_id.as_bytes(),
            buf.as_mut_slice().into(),
            &Tag::from(sealed.auth_tag),
        )
        .map_err(|_| fail())?;
    Value::parse(&buf).map_err(|_| fail())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record() -> Value {
        Value::map()
            .with("features", Value::reals(&[0.5, 1.25, -3.0]))
            .with("label", 1.0)
            .with("record_id", "hosp-a-r00")
            .build()
    }

    #[test]
    fn sha256_vectors() {
        assert_eq!(
            digest(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            digest(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_hex_round_trip_and_rejects_uppercase() {
        let h = digest(b"x");
        assert_eq!(h.to_hex().parse::<Hash256>().unwrap(), h);
        assert!(h.to_hex().to_uppercase().parse::<Hash256>().is_err());
        assert!("abc".parse::<Hash256>().is_err());
    }

    #[test]
    fn commitment_round_trip_and_ulp_change() {
        let c = commit(&record(), [9; SALT_LEN]).unwrap();
        assert!(verify_commit(&record(), &c));
        let bumped = Value::map()
            .with(
                "features",
                Value::reals(&[f64::from_bits(0.5f64.to_bits() + 1), 1.25, -3.0]),
            )
            .with("label", 1.0)
            .with("record_id", "hosp-a-r00")
            .build();
        assert!(!verify_commit(&bumped, &c));
    }

    #[test]
    fn seal_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let key = SealingKey::generate("k1", &mut rng);
        let sealed = seal(&record(), &key, &mut rng).unwrap();
        let back = unseal(&sealed, &key).unwrap();
        assert_eq!(canonicalize(&back).unwrap(), canonicalize(&record()).unwrap());
    }

    #[test]
    fn flipped_ciphertext_bit_fails_authentication() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let key = SealingKey::generate("k1", &mut rng);
        let mut sealed = seal(&record(), &key, &mut rng).unwrap();
        sealed.ciphertext[3] ^= 0x10;
        assert_eq!(
            unseal(&sealed, &key),
            Err(CryptoError::AuthenticationFailed("k1".into()))
        );
    }

    #[test]
    fn wrong_key_vs_unknown_key() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k1 = SealingKey::generate("k1", &mut rng);
        let k2 = SealingKey::generate("k2", &mut rng);
        let sealed = seal(&record(), &k1, &mut rng).unwrap();
        assert!(matches!(
            unseal(&sealed, &k2),
            Err(CryptoError::AuthenticationFailed(_))
        ));

        let mut table = KeyTable::new();
        table.insert(k2);
        assert_eq!(table.unseal(&sealed), Err(CryptoError::UnknownKey("k1".into())));
    }
}
