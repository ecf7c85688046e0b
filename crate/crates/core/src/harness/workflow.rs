//! The end-to-end run, decision verification and fault injection.

use std::fmt;
use std::str::FromStr;

use super::world::{StoredDecision, WorldState};
use super::HarnessError;
use crate::access::{gated_fetch, AccessError, FetchOutcome};
use crate::canonical::{canonicalize, Canonical, Value};
use crate::crypto::{digest, digest_of, Hash256};
use crate::explain::explain_linear;
use crate::learning::{fed_avg, local_update, log_model_update, predict, Dataset, LinearModel, NodeUpdate, Row};
use crate::ledger::{ChainStatus, DecisionRecordBody, TxBody, TxKind};
use crate::trust::{security_score, trust_objective, SecurityReport, TrustReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchKind {
    Chain,
    Input,
    Model,
    Prediction,
    Explanation,
}

impl MismatchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MismatchKind::Chain => "chain",
            MismatchKind::Input => "input",
            MismatchKind::Model => "model",
            MismatchKind::Prediction => "prediction",
            MismatchKind::Explanation => "explanation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionVerdict {
    Valid,
    Mismatch(MismatchKind),
}

impl fmt::Display for DecisionVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DecisionVerdict::Valid => f.write_str("valid"),
            DecisionVerdict::Mismatch(k) => write!(f, "mismatch({})", k.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSummary {
    pub name: String,
    pub block_index: u64,
    pub transactions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub steps: Vec<StepSummary>,
    pub decision_count: usize,
    pub denied_count: usize,
    pub verifications: Vec<(Hash256, DecisionVerdict)>,
    pub security: SecurityReport,
    pub trust: TrustReport,
    pub global_model_hash: Hash256,
    pub final_block_hash: Hash256,
}

impl RunReport {
    pub fn to_value(&self) -> Value {
        let steps = self
            .steps
            .iter()
            .map(|s| {
                Value::map()
                    .with("block", s.block_index)
                    .with("step", s.name.as_str())
                    .with("transactions", s.transactions)
                    .build()
            })
            .collect::<Vec<_>>();
        let verifications = self
            .verifications
            .iter()
            .map(|(id, v)| {
                Value::map()
                    .with("decision", id.to_value())
                    .with("verdict", v.to_string())
                    .build()
            })
            .collect::<Vec<_>>();
        Value::map()
            .with("decision_count", self.decision_count)
            .with("denied_count", self.denied_count)
            .with("final_block_hash", self.final_block_hash.to_value())
            .with("global_model_hash", self.global_model_hash.to_value())
            .with("security", self.security.to_value())
            .with("steps", steps)
            .with("trust", self.trust.to_value())
            .with("verifications", verifications)
            .build()
    }

    pub fn to_canonical(&self) -> Vec<u8> {
        canonicalize(&self.to_value())
            .expect("report values are finite")
            .into_bytes()
    }

    pub fn all_valid(&self) -> bool {
        self.verifications.iter().all(|(_, v)| *v == DecisionVerdict::Valid)
    }
}

fn integrity_alarm(record_id: &str, detail: impl fmt::Display) -> HarnessError {
    HarnessError::IntegrityAlarm {
        record_id: record_id.to_string(),
        detail: detail.to_string(),
    }
}

/// Each institution unseals its own records against their on-chain
/// commitments. Nodes are returned in ascending id order.
fn node_shards(world: &WorldState) -> Result<Vec<Dataset>, HarnessError> {
    let mut nodes: Vec<&str> = world.config.institutions.iter().map(|i| i.id.as_str()).collect();
    nodes.sort_unstable();
    let mut shards = Vec::new();
    for inst in nodes {
        let mut rows = Vec::new();
        for sealed in world.vault.held_by(inst) {
            let reg = world
                .ledger
                .registration(&sealed.record_id)
                .ok_or_else(|| integrity_alarm(&sealed.record_id, "no registration on-chain"))?;
            let record = sealed
                .open(&world.keys, &reg.commitment)
                .map_err(|e| integrity_alarm(&sealed.record_id, e))?;
            rows.push(Row {
                features: record.features,
                label: record.label,
            });
        }
        shards.push(Dataset::new(inst, rows));
    }
    Ok(shards)
}

fn commit_step(world: &mut WorldState, name: String, steps: &mut Vec<StepSummary>) -> Result<(), HarnessError> {
    if let Some(block) = world.ledger.commit()? {
        steps.push(StepSummary {
            name,
            block_index: block.index,
            transactions: block.transactions.len(),
        });
    }
    Ok(())
}

fn store_model(world: &mut WorldState, model: &LinearModel) -> Result<Hash256, HarnessError> {
    let hash = model.hash()?;
    world.models.insert(hash, model.clone());
    Ok(hash)
}

/// Federated training, then every configured access request (one block
/// each), then a validation pass over every decision and the trust scores.
pub fn run_workflow(world: &mut WorldState) -> Result<RunReport, HarnessError> {
    let mut steps = Vec::new();
    let train = world.config.train_config();
    let spec = world.spec.clone();
    let shards = node_shards(world)?;

    let mut global = LinearModel::zeros(spec.dim(), train.link);
    store_model(world, &global)?;
    for round in 1..=world.config.federation.rounds {
        let mut updates = Vec::new();
        for shard in shards.iter().filter(|s| !s.is_empty()) {
            let delta = local_update(&global, shard, &spec, &train, world.config.federation.local_steps)?;
            log_model_update(&mut world.ledger, &shard.institution, round, &delta)?;
            world.log(TxKind::ModelUpdate, &shard.institution, None);
            updates.push(NodeUpdate {
                node_id: shard.institution.clone(),
                delta,
                shard_size: shard.len(),
            });
        }
        global = global.apply(&fed_avg(&updates)?)?;
        store_model(world, &global)?;
        commit_step(world, format!("federated round {round}"), &mut steps)?;
    }
    let model_hash = store_model(world, &global)?;
    world.global_model = Some(model_hash);

    let mut decided = Vec::new();
    let mut denied_count = 0;
    for (i, request) in world.config.requests.clone().into_iter().enumerate() {
        let now = world.ledger.next_time();
        world.log(TxKind::AccessDecision, &request.user_id, Some(&request.record_id));
        let fetched = gated_fetch(
            &mut world.ledger,
            &world.consent,
            &world.vault,
            &world.keys,
            &request,
            now,
        );
        let record = match fetched {
            Ok(FetchOutcome::Released { record, .. }) => record,
            Ok(FetchOutcome::Denied { .. }) => {
                denied_count += 1;
                commit_step(world, format!("request {} denied", i + 1), &mut steps)?;
                continue;
            }
            Err(AccessError::IntegrityAlarm { record_id, detail, .. }) => {
                world.ledger.commit()?;
                return Err(integrity_alarm(&record_id, detail));
            }
            Err(e) => return Err(e.into()),
        };
        let input_commitment = world
            .ledger
            .registration(&record.record_id)
            .map(|r| r.commitment)
            .ok_or_else(|| integrity_alarm(&record.record_id, "no registration on-chain"))?;
        let prediction = predict(&global, &record.features)?;
        let explanation = explain_linear(&global, &spec, &record.features, &record.record_id, input_commitment)?;
        let explanation_bytes = explanation.canonical_bytes()?.into_bytes();
        let tx = world.ledger.stage(
            &request.user_id,
            TxBody::DecisionRecord(DecisionRecordBody {
                record_ref: record.record_id.clone(),
                input_commitment,
                model_hash,
                prediction_hash: digest_of(&prediction)?,
                explanation_hash: digest(&explanation_bytes),
            }),
        )?;
        world.log(TxKind::DecisionRecord, &request.user_id, Some(&record.record_id));
        world.decisions.insert(
            tx.tx_id,
            StoredDecision {
                record_id: record.record_id.clone(),
                explanation: explanation_bytes,
                prediction,
            },
        );
        decided.push(tx.tx_id);
        commit_step(world, format!("request {} released", i + 1), &mut steps)?;
    }

    let verifications = decided
        .iter()
        .copied()
        .map(|id| Ok((id, verify_decision(world, &id)?)))
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let (security, trust) = score(world)?;
    Ok(RunReport {
        steps,
        decision_count: decided.len(),
        denied_count,
        verifications,
        security,
        trust,
        global_model_hash: model_hash,
        final_block_hash: world.ledger.tip_hash(),
    })
}

/// Security score from ledger state and J for the current global model.
pub fn score(world: &WorldState) -> Result<(SecurityReport, TrustReport), HarnessError> {
    let model = world.global().ok_or(HarnessError::NotRun)?;
    let security = security_score(
        &world.ledger,
        &world.vault,
        &world.keys,
        &world.config.record_ids(),
        world.access_events(),
        world.config.trust.weights,
    )?;
    let trust = trust_objective(
        model,
        &world.pooled_dataset(),
        &world.spec,
        &security,
        world.config.lambda1,
        world.config.trust.lambda2,
    )?;
    Ok((security, trust))
}

/// Re-derive a decision from its on-chain record: chain up to its block,
/// input, model, prediction, then explanation. The first failing check is
/// reported. A decision that cannot be found while the chain is corrupt is
/// reported as a chain mismatch, since the corrupt block may have held it.
pub fn verify_decision(world: &WorldState, decision_tx: &Hash256) -> Result<DecisionVerdict, HarnessError> {
    use DecisionVerdict::Mismatch;
    let corrupt = match world.ledger.verify_chain() {
        ChainStatus::Valid => None,
        ChainStatus::CorruptAt(i) => Some(i),
    };
    let Some(TxBody::DecisionRecord(rec)) = world.ledger.transaction(decision_tx).map(|t| &t.body) else {
        if corrupt.is_some() {
            return Ok(Mismatch(MismatchKind::Chain));
        }
        return Err(HarnessError::UnknownDecision(decision_tx.to_hex()));
    };
    if let (Some(bad), Some(at)) = (corrupt, world.ledger.block_of(decision_tx)) {
        if bad <= at {
            return Ok(Mismatch(MismatchKind::Chain));
        }
    }

    let registered = world.ledger.registration(&rec.record_ref).map(|r| r.commitment);
    if registered != Some(rec.input_commitment) {
        return Ok(Mismatch(MismatchKind::Input));
    }
    let Some(record) = world
        .vault
        .get(&rec.record_ref)
        .and_then(|s| s.open(&world.keys, &rec.input_commitment).ok())
    else {
        return Ok(Mismatch(MismatchKind::Input));
    };

    let Some(model) = world.models.get(&rec.model_hash) else {
        return Ok(Mismatch(MismatchKind::Model));
    };
    if model.hash().ok() != Some(rec.model_hash) {
        return Ok(Mismatch(MismatchKind::Model));
    }

    let Some(stored) = world.decisions.get(decision_tx) else {
        return Ok(Mismatch(MismatchKind::Explanation));
    };
    let recomputed = predict(model, &record.features)?;
    if digest_of(&recomputed)? != rec.prediction_hash || digest_of(&stored.prediction)? != rec.prediction_hash {
        return Ok(Mismatch(MismatchKind::Prediction));
    }

    if digest(&stored.explanation) != rec.explanation_hash {
        return Ok(Mismatch(MismatchKind::Explanation));
    }
    let again = explain_linear(
        model,
        &world.spec,
        &record.features,
        &rec.record_ref,
        rec.input_commitment,
    )?;
    if again.hash()? != rec.explanation_hash {
        return Ok(Mismatch(MismatchKind::Explanation));
    }
    Ok(DecisionVerdict::Valid)
}

/// Where a fault is injected: a stored block, a sealed record's
/// ciphertext ∥ tag, or a stored explanation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TamperTarget {
    Block(usize),
    Record(String),
    Explanation(Hash256),
}

impl FromStr for TamperTarget {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || HarnessError::BadTarget(s.to_string());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "block" => arg.parse().map(TamperTarget::Block).map_err(|_| bad()),
            "record" if !arg.is_empty() => Ok(TamperTarget::Record(arg.to_string())),
            "explanation" => arg.parse().map(TamperTarget::Explanation).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for TamperTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TamperTarget::Block(i) => write!(f, "block:{i}"),
            TamperTarget::Record(r) => write!(f, "record:{r}"),
            TamperTarget::Explanation(h) => write!(f, "explanation:{h}"),
        }
    }
}

pub const TAMPER_MASK: u8 = 0x01;

/// Number of tamperable byte offsets of `target`.
pub fn tamper_len(world: &WorldState, target: &TamperTarget) -> Result<usize, HarnessError> {
    let missing = || HarnessError::BadTarget(target.to_string());
    Ok(match target {
        TamperTarget::Block(i) => world.ledger.stored_block(*i).ok_or_else(missing)?.len(),
        TamperTarget::Record(id) => world.vault.get(id).ok_or_else(missing)?.payload.stored_len(),
        TamperTarget::Explanation(id) => world.decisions.get(id).ok_or_else(missing)?.explanation.len(),
    })
}

/// XOR one byte of `target` at `offset`. No hashes are recomputed.
pub fn tamper(world: &mut WorldState, target: &TamperTarget, offset: usize) -> Result<(), HarnessError> {
    let len = tamper_len(world, target)?;
    if offset >= len {
        return Err(HarnessError::OffsetOutOfRange { offset, len });
    }
    match target {
        TamperTarget::Block(i) => {
            world.ledger.flip_stored_byte(*i, offset, TAMPER_MASK);
        }
        TamperTarget::Record(id) => {
            if let Some(sealed) = world.vault.get_mut(id) {
                sealed.payload.flip_byte(offset, TAMPER_MASK);
            }
        }
        TamperTarget::Explanation(id) => {
            if let Some(d) = world.decisions.get_mut(id) {
                d.explanation[offset] ^= TAMPER_MASK;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::ScenarioConfig;

    fn demo_run() -> (WorldState, RunReport) {
        let mut world = WorldState::build(ScenarioConfig::demo()).unwrap();
        let report = run_workflow(&mut world).unwrap();
        (world, report)
    }

    #[test]
    fn demo_shape() {
        let (world, report) = demo_run();
        assert_eq!(world.ledger.len(), 12);
        assert_eq!(report.decision_count, 5);
        assert_eq!(report.denied_count, 1);
        assert!(report.all_valid());
        assert_eq!(world.ledger.verify_chain(), ChainStatus::Valid);
        assert_eq!(report.security.score, 1.0);
    }

    #[test]
    fn target_parsing() {
        assert_eq!("block:3".parse::<TamperTarget>().unwrap(), TamperTarget::Block(3));
        assert_eq!(
            "record:hosp-a-01".parse::<TamperTarget>().unwrap(),
            TamperTarget::Record("hosp-a-01".into())
        );
        assert!("block:x".parse::<TamperTarget>().is_err());
        assert!("disk:1".parse::<TamperTarget>().is_err());
        assert!("explanation:abc".parse::<TamperTarget>().is_err());
    }

    #[test]
    fn offset_out_of_range() {
        let (mut world, _) = demo_run();
        let len = tamper_len(&world, &TamperTarget::Block(1)).unwrap();
        assert!(matches!(
            tamper(&mut world, &TamperTarget::Block(1), len),
            Err(HarnessError::OffsetOutOfRange { .. })
        ));
        assert!(tamper(&mut world, &TamperTarget::Block(99), 0).is_err());
    }

    #[test]
    fn explanation_tamper_is_caught() {
        let (mut world, report) = demo_run();
        let id = report.verifications[0].0;
        tamper(&mut world, &TamperTarget::Explanation(id), 10).unwrap();
        assert_eq!(
            verify_decision(&world, &id).unwrap(),
            DecisionVerdict::Mismatch(MismatchKind::Explanation)
        );
    }

    #[test]
    fn swapped_model_is_caught() {
        let (mut world, report) = demo_run();
        let id = report.verifications[0].0;
        let h = world.global_model.unwrap();
        world.models.get_mut(&h).unwrap().bias += 1e-9;
        assert_eq!(
            verify_decision(&world, &id).unwrap(),
            DecisionVerdict::Mismatch(MismatchKind::Model)
        );
    }

    #[test]
    fn record_tamper_breaks_input() {
        let (mut world, report) = demo_run();
        let id = report.verifications[0].0;
        let record = world.decisions[&id].record_id.clone();
        tamper(&mut world, &TamperTarget::Record(record), 0).unwrap();
        assert_eq!(
            verify_decision(&world, &id).unwrap(),
            DecisionVerdict::Mismatch(MismatchKind::Input)
        );
    }

    #[test]
    fn tampered_record_raises_alarm_on_fetch() {
        let mut world = WorldState::build(ScenarioConfig::demo()).unwrap();
        tamper(&mut world, &TamperTarget::Record("hosp-a-03".into()), 3).unwrap();
        match run_workflow(&mut world) {
            Err(HarnessError::IntegrityAlarm { record_id, .. }) => assert_eq!(record_id, "hosp-a-03"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_decision_is_an_error() {
        let (world, _) = demo_run();
        assert!(matches!(
            verify_decision(&world, &Hash256::ZERO),
            Err(HarnessError::UnknownDecision(_))
        ));
    }
}
