//! Simulator state: ledger, sealed vault, keys, and the off-chain artifact
//! stores that decision records point into.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::{stream_rng, ScenarioConfig, KEY_STREAM, SEAL_STREAM};
use super::HarnessError;
use crate::access::{update_consent, ConsentRegistry};
use crate::canonical::{canonicalize, Canonical, CanonicalError, Value};
use crate::crypto::{Hash256, KeyTable, SealingKey};
use crate::learning::{Dataset, FeatureSpec, LinearModel, Prediction, Row};
use crate::ledger::{Ledger, RegistrationBody, TxBody, TxKind};
use crate::records::{PatientRecord, RecordVault, SealedRecord};

pub const SCENARIO_FILE: &str = "scenario.json";
pub const LEDGER_FILE: &str = "ledger.dump";
pub const WORLD_FILE: &str = "world.json";
pub const REPORT_FILE: &str = "report.json";

const CONSENT_ACTOR: &str = "consent-registry";

/// One thing the simulator did, logged independently of the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub kind: TxKind,
    pub actor: String,
    pub record_id: Option<String>,
}

impl Canonical for Event {
    fn to_value(&self) -> Value {
        let mut b = Value::map()
            .with("actor", self.actor.as_str())
            .with("kind", self.kind.as_str());
        if let Some(r) = &self.record_id {
            b = b.with("record_id", r.as_str());
        }
        b.build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let kind_text = v.field(path, "kind")?.as_text(&format!("{path}.kind"))?;
        Ok(Event {
            kind: TxKind::from_name(kind_text).ok_or_else(|| {
                CanonicalError::invalid(format!("{path}.kind"), format!("unknown kind {kind_text:?}"))
            })?,
            actor: v.field(path, "actor")?.as_text(&format!("{path}.actor"))?.to_string(),
            record_id: v
                .opt_field(path, "record_id")?
                .map(|r| r.as_text(&format!("{path}.record_id")).map(str::to_string))
                .transpose()?,
        })
    }
}

/// Off-chain artifacts of one decision: the explanation exactly as hashed,
/// and the prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredDecision {
    pub record_id: String,
    pub explanation: Vec<u8>,
    pub prediction: Prediction,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub config: ScenarioConfig,
    pub spec: FeatureSpec,
    pub ledger: Ledger,
    pub keys: KeyTable,
    pub vault: RecordVault,
    pub consent: ConsentRegistry,
    pub models: BTreeMap<Hash256, LinearModel>,
    pub global_model: Option<Hash256>,
    /// Keyed by the DecisionRecord transaction id.
    pub decisions: BTreeMap<Hash256, StoredDecision>,
    pub events: Vec<Event>,
}

impl WorldState {
    /// Seal and register every record (one block), then publish the consent
    /// policies (one block). Deterministic in `config.seed`.
    pub fn build(config: ScenarioConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let records = config.materialize_records();
        let spec = config.resolved_spec(&records);

        let mut key_rng = stream_rng(config.seed, KEY_STREAM);
        let mut keys = KeyTable::new();
        for inst in &config.institutions {
            keys.insert(SealingKey::generate(inst.key_id.as_str(), &mut key_rng));
        }

        let mut world = WorldState {
            spec,
            ledger: Ledger::new(),
            keys,
            vault: RecordVault::new(),
            consent: ConsentRegistry::new(),
            models: BTreeMap::new(),
            global_model: None,
            decisions: BTreeMap::new(),
            events: Vec::new(),
            config,
        };

        let mut seal_rng = stream_rng(world.config.seed, SEAL_STREAM);
        for record in &records {
            let key_id = world.key_id_of(&record.institution)?;
            let sealed = SealedRecord::seal(record, &world.keys, &key_id, &mut seal_rng)?;
            world.ledger.stage(
                &record.institution,
                TxBody::DataRegistration(RegistrationBody {
                    record_id: record.record_id.clone(),
                    institution: record.institution.clone(),
                    key_id,
                    commitment: sealed.commitment.digest,
                }),
            )?;
            world.vault.insert(sealed);
            world.log(TxKind::DataRegistration, &record.institution, Some(&record.record_id));
        }
        world.ledger.commit()?;

        for policy in world.config.policies.clone() {
            let record = policy.scope.record_id().map(str::to_string);
            update_consent(&mut world.ledger, &mut world.consent, CONSENT_ACTOR, policy)?;
            world.log(TxKind::ConsentUpdate, CONSENT_ACTOR, record.as_deref());
        }
        world.ledger.commit()?;
        Ok(world)
    }

    pub(crate) fn log(&mut self, kind: TxKind, actor: &str, record_id: Option<&str>) {
        self.events.push(Event {
            kind,
            actor: actor.to_string(),
            record_id: record_id.map(str::to_string),
        });
    }

    fn key_id_of(&self, institution: &str) -> Result<String, HarnessError> {
        self.config
            .institutions
            .iter()
            .find(|i| i.id == institution)
            .map(|i| i.key_id.clone())
            .ok_or_else(|| HarnessError::Config {
                path: "$.institutions".into(),
                message: format!("unknown institution {institution:?}"),
            })
    }

    /// Ground-truth count of access requests the simulator made.
    pub fn access_events(&self) -> usize {
        self.events.iter().filter(|e| e.kind == TxKind::AccessDecision).count()
    }

    pub fn global(&self) -> Option<&LinearModel> {
        self.global_model.as_ref().and_then(|h| self.models.get(h))
    }

    /// Plaintext rows regenerated from the scenario, for scoring.
    pub fn plaintext_records(&self) -> Vec<PatientRecord> {
        self.config.materialize_records()
    }

    pub fn pooled_dataset(&self) -> Dataset {
        let rows = self
            .plaintext_records()
            .into_iter()
            .map(|r| Row {
                features: r.features,
                label: r.label,
            })
            .collect();
        Dataset::new("pooled", rows)
    }

    /// Decision transaction ids for `record_id`, in ledger order.
    pub fn decisions_for(&self, record_id: &str) -> Vec<Hash256> {
        self.ledger
            .transactions()
            .filter(|tx| tx.kind() == TxKind::DecisionRecord && tx.body.references(record_id))
            .map(|tx| tx.tx_id)
            .collect()
    }

    /// Write `scenario.json`, `ledger.dump` and `world.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SCENARIO_FILE), self.config.to_pretty())?;
        fs::write(dir.join(LEDGER_FILE), self.ledger.dump())?;
        fs::write(dir.join(WORLD_FILE), canonicalize(&self.artifacts_value())?.as_bytes())?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let config = ScenarioConfig::parse(&fs::read_to_string(dir.join(SCENARIO_FILE))?)?;
        let ledger = Ledger::load(&fs::read(dir.join(LEDGER_FILE))?)?;
        let raw = fs::read(dir.join(WORLD_FILE))?;
        let v = Value::parse(&raw)?;
        let p = "$";
        let models = v
            .field(p, "models")?
            .as_list("$.models")?
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let mp = format!("$.models[{i}]");
                Ok((
                    Hash256::from_value(m.field(&mp, "hash")?, &mp)?,
                    LinearModel::from_value(m.field(&mp, "model")?, &mp)?,
                ))
            })
            .collect::<Result<BTreeMap<_, _>, CanonicalError>>()?;
        let decisions = v
            .field(p, "decisions")?
            .as_list("$.decisions")?
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let dp = format!("$.decisions[{i}]");
                Ok((
                    Hash256::from_value(d.field(&dp, "tx_id")?, &dp)?,
                    StoredDecision {
                        record_id: d.field(&dp, "record_id")?.as_text(&dp)?.to_string(),
                        explanation: d.field(&dp, "explanation")?.as_bytes(&dp)?.to_vec(),
                        prediction: Prediction::from_value(d.field(&dp, "prediction")?, &dp)?,
                    },
                ))
            })
            .collect::<Result<BTreeMap<_, _>, CanonicalError>>()?;
        let global_model = v
            .opt_field(p, "global_model")?
            .map(|h| Hash256::from_value(h, "$.global_model"))
            .transpose()?;
        let events = v
            .field(p, "events")?
            .as_list("$.events")?
            .iter()
            .enumerate()
            .map(|(i, e)| Event::from_value(e, &format!("$.events[{i}]")))
            .collect::<Result<_, _>>()?;
        Ok(WorldState {
            spec: FeatureSpec::from_value(v.field(p, "spec")?, "$.spec")?,
            keys: KeyTable::from_value(v.field(p, "keys")?, "$.keys")?,
            vault: RecordVault::from_value(v.field(p, "vault")?, "$.vault")?,
            consent: ConsentRegistry::from_value(v.field(p, "consent")?, "$.consent")?,
            config,
            ledger,
            models,
            global_model,
            decisions,
            events,
        })
    }

    fn artifacts_value(&self) -> Value {
        let models = self
            .models
            .iter()
            .map(|(h, m)| {
                Value::map()
                    .with("hash", h.to_value())
                    .with("model", m.to_value())
                    .build()
            })
            .collect::<Vec<_>>();
        let decisions = self
            .decisions
            .iter()
            .map(|(id, d)| {
                Value::map()
                    .with("explanation", Value::Bytes(d.explanation.clone()))
                    .with("prediction", d.prediction.to_value())
                    .with("record_id", d.record_id.as_str())
                    .with("tx_id", id.to_value())
                    .build()
            })
            .collect::<Vec<_>>();
        let mut b = Value::map()
            .with("consent", self.consent.to_value())
            .with("decisions", decisions)
            .with(
                "events",
                Value::List(self.events.iter().map(Canonical::to_value).collect()),
            )
            .with("keys", self.keys.to_value())
            .with("models", models)
            .with("spec", self.spec.to_value())
            .with("vault", self.vault.to_value());
        if let Some(h) = &self.global_model {
            b = b.with("global_model", h.to_value());
        }
        b.build()
    }

    /// Canonical bytes of the whole world, for determinism checks.
    pub fn fingerprint(&self) -> Result<Vec<u8>, CanonicalError> {
        let mut bytes = self.ledger.dump();
        bytes.extend_from_slice(canonicalize(&self.artifacts_value())?.as_bytes());
        Ok(bytes)
    }
}
