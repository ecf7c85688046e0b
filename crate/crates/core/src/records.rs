//! Patient records and their sealed, committed form.

use std::collections::BTreeMap;

use rand::RngCore;

use crate::canonical::{Canonical, CanonicalError, Value};
use crate::crypto::{self, Commitment, CryptoError, KeyTable, SealedPayload, SALT_LEN};

/// Plaintext patient row: features plus outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub record_id: String,
    pub institution: String,
    pub features: Vec<f64>,
    pub label: f64,
}

impl Canonical for PatientRecord {
    fn to_value(&self) -> Value {
        Value::map()
            .with("features", Value::reals(&self.features))
            .with("institution", self.institution.as_str())
            .with("label", self.label)
            .with("record_id", self.record_id.as_str())
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        Ok(PatientRecord {
            record_id: v.field(path, "record_id")?.as_text(path)?.to_string(),
            institution: v.field(path, "institution")?.as_text(path)?.to_string(),
            features: v.field(path, "features")?.as_reals(&format!("{path}.features"))?,
            label: v.field(path, "label")?.as_real(&format!("{path}.label"))?,
        })
    }
}

/// A record as held in an institution's store: ciphertext plus the salt of
/// its on-chain commitment.
#[derive(Debug, Clone, PartialEq)]
pub struct SealedRecord {
    pub record_id: String,
    pub institution: String,
    pub payload: SealedPayload,
    pub commitment: Commitment,
}

impl SealedRecord {
    pub fn seal<R: RngCore>(
        record: &PatientRecord,
        keys: &KeyTable,
        key_id: &str,
        rng: &mut R,
    ) -> Result<Self, CryptoError> {
        let key = keys.get(key_id)?;
        let plaintext = record.to_value();
        let mut salt = [0u8; SALT_LEN];
        rng.fill_bytes(&mut salt);
        let commitment = crypto::commit(&plaintext, salt)?;
        let payload = crypto::seal(&plaintext, key, rng)?;
        Ok(SealedRecord {
            record_id: record.record_id.clone(),
            institution: record.institution.clone(),
            payload,
            commitment,
        })
    }

    /// Unseal and check the plaintext against `onchain_commitment`.
    pub fn open(&self, keys: &KeyTable, onchain_commitment: &crypto::Hash256) -> Result<PatientRecord, CryptoError> {
        let plaintext = keys.unseal(&self.payload)?;
        let check = Commitment {
            digest: *onchain_commitment,
            salt: self.commitment.salt,
        };
        if !crypto::verify_commit(&plaintext, &check) {
            return Err(CryptoError::AuthenticationFailed(self.payload.key_id.clone()));
        }
        Ok(PatientRecord::from_value(&plaintext, "$")?)
    }
}

impl Canonical for SealedRecord {
    fn to_value(&self) -> Value {
        Value::map()
            .with("commitment", self.commitment.digest.to_value())
            .with("institution", self.institution.as_str())
            .with("payload", self.payload.to_value())
            .with("record_id", self.record_id.as_str())
            .with("salt", Value::Bytes(self.commitment.salt.to_vec()))
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let salt: [u8; SALT_LEN] = v
            .field(path, "salt")?
            .as_bytes(&format!("{path}.salt"))?
            .try_into()
            .map_err(|_| CanonicalError::invalid(format!("{path}.salt"), "salt must be 16 bytes"))?;
        Ok(SealedRecord {
            record_id: v.field(path, "record_id")?.as_text(path)?.to_string(),
            institution: v.field(path, "institution")?.as_text(path)?.to_string(),
            payload: SealedPayload::from_value(v.field(path, "payload")?, &format!("{path}.payload"))?,
            commitment: Commitment {
                digest: crypto::Hash256::from_value(v.field(path, "commitment")?, path)?,
                salt,
            },
        })
    }
}

/// Sealed records of every institution, keyed by record id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordVault {
    records: BTreeMap<String, SealedRecord>,
}

impl RecordVault {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: SealedRecord) {
        self.records.insert(record.record_id.clone(), record);
    }

    pub fn get(&self, record_id: &str) -> Option<&SealedRecord> {
        self.records.get(record_id)
    }

    pub fn get_mut(&mut self, record_id: &str) -> Option<&mut SealedRecord> {
        self.records.get_mut(record_id)
    }

    pub fn remove(&mut self, record_id: &str) -> Option<SealedRecord> {
        self.records.remove(record_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &SealedRecord> {
        self.records.values()
    }

    pub fn held_by<'a>(&'a self, institution: &'a str) -> impl Iterator<Item = &'a SealedRecord> + 'a {
        self.records.values().filter(move |r| r.institution == institution)
    }
}

impl Canonical for RecordVault {
    fn to_value(&self) -> Value {
        Value::List(self.records.values().map(Canonical::to_value).collect())
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let mut vault = RecordVault::new();
        for (i, item) in v.as_list(path)?.iter().enumerate() {
            vault.insert(SealedRecord::from_value(item, &format!("{path}[{i}]"))?);
        }
        Ok(vault)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::SealingKey;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn seal_open_and_salt_tamper() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut keys = KeyTable::new();
        keys.insert(SealingKey::generate("key-a", &mut rng));
        let rec = PatientRecord {
            record_id: "r1".into(),
            institution: "hosp-a".into(),
            features: vec![0.1, 0.9],
            label: 1.0,
        };
        let mut sealed = SealedRecord::seal(&rec, &keys, "key-a", &mut rng).unwrap();
        let onchain = sealed.commitment.digest;
        assert_eq!(sealed.open(&keys, &onchain).unwrap(), rec);

        sealed.commitment.salt[0] ^= 1;
        assert!(sealed.open(&keys, &onchain).is_err());
    }
}
