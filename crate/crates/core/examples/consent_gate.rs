//! Consent-gated reads: grant, read, revoke, read again, then audit.

use bxhf::access::{
    gated_fetch, update_consent, AccessPolicy, AccessRequest, ConsentRegistry, FetchOutcome, Purpose, RecordScope,
};
use bxhf::crypto::{KeyTable, SealingKey};
use bxhf::ledger::{Ledger, RegistrationBody, TxBody};
use bxhf::records::{PatientRecord, RecordVault, SealedRecord};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut keys = KeyTable::new();
    keys.insert(SealingKey::generate("key-a", &mut rng));

    let record = PatientRecord {
        record_id: "hosp-a-01".into(),
        institution: "hosp-a".into(),
        features: vec![0.82, 1.0, 0.64, 0.31],
        label: 1.0,
    };
    let sealed = SealedRecord::seal(&record, &keys, "key-a", &mut rng)?;
    let mut ledger = Ledger::new();
    ledger.stage(
        "hosp-a",
        TxBody::DataRegistration(RegistrationBody {
            record_id: record.record_id.clone(),
            institution: "hosp-a".into(),
            key_id: "key-a".into(),
            commitment: sealed.commitment.digest,
        }),
    )?;
    ledger.commit()?;
    let mut vault = RecordVault::new();
    vault.insert(sealed);

    let mut registry = ConsentRegistry::new();
    let policy = AccessPolicy {
        policy_id: "p-ada".into(),
        user_id: "dr-ada".into(),
        scope: RecordScope::Record(record.record_id.clone()),
        purpose: Purpose::Treatment,
        valid_from: 0,
        valid_until: 1_000,
        granted: true,
    };
    update_consent(&mut ledger, &mut registry, "patient", policy.clone())?;
    ledger.commit()?;

    let request = AccessRequest::new("dr-ada", "hosp-a-01", Purpose::Treatment);
    let show = |label: &str, out: &FetchOutcome| match out {
        FetchOutcome::Released { record, .. } => println!("{label}: released {:?}", record.features),
        FetchOutcome::Denied { reason, .. } => println!("{label}: denied ({reason})"),
    };

    let now = ledger.next_time();
    show(
        "treatment read",
        &gated_fetch(&mut ledger, &registry, &vault, &keys, &request, now)?,
    );
    ledger.commit()?;

    let research = AccessRequest::new("dr-ada", "hosp-a-01", Purpose::Research);
    let now = ledger.next_time();
    show(
        "research read",
        &gated_fetch(&mut ledger, &registry, &vault, &keys, &research, now)?,
    );
    ledger.commit()?;

    update_consent(&mut ledger, &mut registry, "patient", policy.revoked())?;
    ledger.commit()?;
    let now = ledger.next_time();
    show(
        "after revoke",
        &gated_fetch(&mut ledger, &registry, &vault, &keys, &request, now)?,
    );
    ledger.commit()?;

    println!("\naudit trail for hosp-a-01:");
    for tx in ledger.audit_trail("hosp-a-01") {
        println!("  t={:<3} {:<18} by {}", tx.logical_time, tx.kind(), tx.actor);
    }
    Ok(())
}
