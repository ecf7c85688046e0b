//! Ledger-derived security score S(D) and the joint trust objective
//! `J = loss + λ₁·Ω̄ − λ₂·S`.
//!
//! S is a weighted mean of three fractions, each read off ledger state:
//!
//! - integrity `I`: chain validity (0 or 1) times the share of registered
//!   records whose stored ciphertext still opens against its on-chain commitment
//! - provenance `P`: share of known records that have a registration
//! - auditability `A`: on-chain access decisions over ground-truth access
//!   events, capped at 1

use std::collections::BTreeSet;

use thiserror::Error;

use crate::canonical::{Canonical, CanonicalError, Value};
use crate::crypto::KeyTable;
use crate::explain::{explain_linear, plausibility_penalty, ExplainError};
use crate::learning::{loss, Dataset, FeatureSpec, LearningError, LinearModel};
use crate::ledger::{ChainStatus, Ledger, TxBody, TxKind};
use crate::records::RecordVault;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustError {
    #[error("security weights must be non-negative and sum to 1, got {0:?}")]
    Weights([f64; 3]),
    #[error("trade-off weights must be non-negative and finite")]
    Lambda,
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityWeights {
    pub integrity: f64,
    pub provenance: f64,
    pub auditability: f64,
}

impl Default for SecurityWeights {
    fn default() -> Self {
        SecurityWeights {
            integrity: 1.0 / 3.0,
            provenance: 1.0 / 3.0,
            auditability: 1.0 / 3.0,
        }
    }
}

impl SecurityWeights {
    pub fn validate(&self) -> Result<(), TrustError> {
        let w = [self.integrity, self.provenance, self.auditability];
        let ok = w.iter().all(|x| x.is_finite() && *x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-12;
        if ok {
            Ok(())
        } else {
            Err(TrustError::Weights(w))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityReport {
    pub integrity: f64,
    pub provenance: f64,
    pub auditability: f64,
    pub weights: SecurityWeights,
    pub score: f64,
}

impl SecurityReport {
    pub fn from_components(
        integrity: f64,
        provenance: f64,
        auditability: f64,
        weights: SecurityWeights,
    ) -> Result<Self, TrustError> {
        weights.validate()?;
        let score =
            weights.integrity * integrity + weights.provenance * provenance + weights.auditability * auditability;
        Ok(SecurityReport {
            integrity,
            provenance,
            auditability,
            weights,
            score: score.clamp(0.0, 1.0),
        })
    }
}

impl Canonical for SecurityReport {
    fn to_value(&self) -> Value {
        Value::map()
            .with("A", self.auditability)
            .with("I", self.integrity)
            .with("P", self.provenance)
            .with("S", self.score)
            .with(
                "weights",
                Value::reals(&[
                    self.weights.integrity,
                    self.weights.provenance,
                    self.weights.auditability,
                ]),
            )
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let w = v.field(path, "weights")?.as_reals(&format!("{path}.weights"))?;
        if w.len() != 3 {
            return Err(CanonicalError::invalid(path, "weights must have 3 entries"));
        }
        let r = |k: &str| v.field(path, k)?.as_real(&format!("{path}.{k}"));
        Ok(SecurityReport {
            integrity: r("I")?,
            provenance: r("P")?,
            auditability: r("A")?,
            weights: SecurityWeights {
                integrity: w[0],
                provenance: w[1],
                auditability: w[2],
            },
            score: r("S")?,
        })
    }
}

/// Compute S(D) for the records in `record_table` (ids the simulator knows
/// should exist) given `access_events` ground-truth access requests.
pub fn security_score(
    ledger: &Ledger,
    vault: &RecordVault,
    keys: &KeyTable,
    record_table: &[String],
    access_events: usize,
    weights: SecurityWeights,
) -> Result<SecurityReport, TrustError> {
    weights.validate()?;
    let chain_ok = ledger.verify_chain() == ChainStatus::Valid;

    let mut registered = Vec::new();
    let mut seen = BTreeSet::new();
    for tx in ledger.transactions() {
        if let TxBody::DataRegistration(b) = &tx.body {
            if seen.insert(b.record_id.clone()) {
                registered.push(b);
            }
        }
    }
    let intact = registered
        .iter()
        .filter(|reg| {
            vault
                .get(&reg.record_id)
                .is_some_and(|sealed| sealed.open(keys, &reg.commitment).is_ok())
        })
        .count();
    let record_share = if registered.is_empty() {
        1.0
    } else {
        intact as f64 / registered.len() as f64
    };
    let integrity = if chain_ok { record_share } else { 0.0 };

    let provenance = if record_table.is_empty() {
        1.0
    } else {
        record_table.iter().filter(|id| seen.contains(id.as_str())).count() as f64 / record_table.len() as f64
    };

    let logged = ledger.count_kind(TxKind::AccessDecision);
    let auditability = if access_events == 0 {
        1.0
    } else {
        (logged as f64 / access_events as f64).min(1.0)
    };

    SecurityReport::from_components(integrity, provenance, auditability, weights)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustReport {
    pub empirical_loss: f64,
    pub mean_penalty: f64,
    pub security: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub objective: f64,
}

impl Canonical for TrustReport {
    fn to_value(&self) -> Value {
        Value::map()
            .with("J", self.objective)
            .with("S", self.security)
            .with("lambda1", self.lambda1)
            .with("lambda2", self.lambda2)
            .with("loss", self.empirical_loss)
            .with("omega_bar", self.mean_penalty)
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let r = |k: &str| v.field(path, k)?.as_real(&format!("{path}.{k}"));
        Ok(TrustReport {
            empirical_loss: r("loss")?,
            mean_penalty: r("omega_bar")?,
            security: r("S")?,
            lambda1: r("lambda1")?,
            lambda2: r("lambda2")?,
            objective: r("J")?,
        })
    }
}

/// Mean over rows of the plausibility penalty of each row's explanation.
pub fn mean_explanation_penalty(model: &LinearModel, spec: &FeatureSpec, data: &Dataset) -> Result<f64, TrustError> {
    if data.is_empty() {
        return Err(LearningError::EmptyDataset.into());
    }
    let hash = crate::crypto::Hash256::ZERO;
    let mut total = 0.0;
    for row in &data.rows {
        let e = explain_linear(model, spec, &row.features, "", hash)?;
        total += plausibility_penalty(&e, spec);
    }
    Ok(total / data.len() as f64)
}

/// Evaluate J for a fixed model. S enters through `security`.
pub fn trust_objective(
    model: &LinearModel,
    data: &Dataset,
    spec: &FeatureSpec,
    security: &SecurityReport,
    lambda1: f64,
    lambda2: f64,
) -> Result<TrustReport, TrustError> {
    if !(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
        return Err(TrustError::Lambda);
    }
    let empirical_loss = loss(model, data)?;
    let mean_penalty = mean_explanation_penalty(model, spec, data)?;
    Ok(TrustReport {
        empirical_loss,
        mean_penalty,
        security: security.score,
        lambda1,
        lambda2,
        objective: empirical_loss + lambda1 * mean_penalty - lambda2 * security.score,
    })
}
