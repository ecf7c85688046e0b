//! Scenario configuration and record materialization.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HarnessError;
use crate::access::{AccessPolicy, AccessRequest, Purpose, RecordScope};
use crate::canonical::{Canonical, CanonicalError, Value};
use crate::learning::{sigmoid, FeatureSpec, Link, PenaltyStep, SignConstraint, TrainConfig};
use crate::records::PatientRecord;
use crate::trust::SecurityWeights;

/// RNG stream used for synthetic rows; keys and sealing use their own streams.
pub(crate) const DATA_STREAM: u64 = 0;
pub(crate) const KEY_STREAM: u64 = 1;
pub(crate) const SEAL_STREAM: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Institution {
    pub id: String,
    pub key_id: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub id: String,
    pub role: String,
}

/// Planted linear ground truth for synthetic rows. Feature j is drawn
/// uniformly from `[low_j, high_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    /// Half-width of uniform label noise (identity link only).
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlineRow {
    pub id: String,
    pub features: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordSource {
    Generated { institution: String, count: usize },
    Inline { institution: String, rows: Vec<InlineRow> },
}

impl RecordSource {
    pub fn institution(&self) -> &str {
        match self {
            RecordSource::Generated { institution, .. } | RecordSource::Inline { institution, .. } => institution,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustSettings {
    pub lambda2: f64,
    pub weights: SecurityWeights,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederationSettings {
    pub rounds: u64,
    pub local_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub institutions: Vec<Institution>,
    pub users: Vec<User>,
    /// Baseline may be empty, meaning "mean of the materialized rows".
    pub features: FeatureSpec,
    pub link: Link,
    pub generator: Option<Generator>,
    pub records: Vec<RecordSource>,
    pub policies: Vec<AccessPolicy>,
    pub requests: Vec<AccessRequest>,
    pub learning_rate: f64,
    /// Epochs for centralized training. Federated rounds run
    /// `federation.local_steps` epochs per node instead.
    pub epochs: usize,
    pub lambda1: f64,
    pub trust: TrustSettings,
    pub federation: FederationSettings,
}

fn cfg_err(path: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let value = Value::parse_str(text)?;
        let config = Self::from_value(&value, "$")?;
        config.validate()?;
        Ok(config)
    }

    /// Pretty, human-editable rendering (reals as decimals).
    pub fn to_pretty(&self) -> String {
        self.to_value().to_pretty()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            lambda: self.lambda1,
            seed: self.seed,
            link: self.link,
            penalty_step: PenaltyStep::Proximal,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.institutions.is_empty() {
            return Err(cfg_err("$.institutions", "at least one institution required"));
        }
        let mut inst_ids = BTreeSet::new();
        let mut key_ids = BTreeSet::new();
        for (i, inst) in self.institutions.iter().enumerate() {
            if inst.id.is_empty() || !inst_ids.insert(inst.id.as_str()) {
                return Err(cfg_err(
                    format!("$.institutions[{i}].id"),
                    "empty or duplicate institution id",
                ));
            }
            if inst.key_id.is_empty() || !key_ids.insert(inst.key_id.as_str()) {
                return Err(cfg_err(
                    format!("$.institutions[{i}].key_id"),
                    "empty or duplicate key id",
                ));
            }
        }
        let mut user_ids = BTreeSet::new();
        for (i, u) in self.users.iter().enumerate() {
            if u.id.is_empty() || !user_ids.insert(u.id.as_str()) {
                return Err(cfg_err(format!("$.users[{i}].id"), "empty or duplicate user id"));
            }
        }

        let m = self.features.names.len();
        let mut spec = self.features.clone();
        if spec.baseline.is_empty() {
            spec.baseline = vec![0.0; m];
        }
        spec.validate().map_err(|e| cfg_err("$.features", e.to_string()))?;

        if self.records.is_empty() {
            return Err(cfg_err("$.records", "at least one record required"));
        }
        let mut any_generated = false;
        for (i, src) in self.records.iter().enumerate() {
            if !inst_ids.contains(src.institution()) {
                return Err(cfg_err(
                    format!("$.records[{i}].institution"),
                    format!("unknown institution {:?}", src.institution()),
                ));
            }
            match src {
                RecordSource::Generated { count, .. } => {
                    any_generated = true;
                    if *count == 0 {
                        return Err(cfg_err(format!("$.records[{i}].generate"), "count must be positive"));
                    }
                }
                RecordSource::Inline { rows, .. } => {
                    for (k, row) in rows.iter().enumerate() {
                        if row.features.len() != m {
                            return Err(cfg_err(
                                format!("$.records[{i}].rows[{k}].features"),
                                format!("expected {m} features"),
                            ));
                        }
                        if self.link == Link::Logistic && row.label != 0.0 && row.label != 1.0 {
                            return Err(cfg_err(
                                format!("$.records[{i}].rows[{k}].label"),
                                "label must be 0 or 1",
                            ));
                        }
                    }
                }
            }
        }
        if any_generated {
            let g = self
                .generator
                .as_ref()
                .ok_or_else(|| cfg_err("$.generator", "required when records are generated"))?;
            for (name, v) in [("weights", &g.weights), ("low", &g.low), ("high", &g.high)] {
                if v.len() != m {
                    return Err(cfg_err(format!("$.generator.{name}"), format!("expected {m} entries")));
                }
            }
            if g.low.iter().zip(&g.high).any(|(l, h)| l > h) {
                return Err(cfg_err("$.generator", "low must not exceed high"));
            }
        }

        let record_ids = self.record_ids();
        let mut seen = BTreeSet::new();
        for id in &record_ids {
            if !seen.insert(id.as_str()) {
                return Err(cfg_err("$.records", format!("duplicate record id {id:?}")));
            }
        }
        let mut policy_ids = BTreeSet::new();
        for (i, p) in self.policies.iter().enumerate() {
            let path = format!("$.policies[{i}]");
            p.validate().map_err(|e| cfg_err(&path, e.to_string()))?;
            if !policy_ids.insert(p.policy_id.as_str()) {
                return Err(cfg_err(format!("{path}.policy_id"), "duplicate policy id"));
            }
            if !user_ids.contains(p.user_id.as_str()) {
                return Err(cfg_err(
                    format!("{path}.user_id"),
                    format!("unknown user {:?}", p.user_id),
                ));
            }
            match &p.scope {
                RecordScope::Record(r) if !seen.contains(r.as_str()) => {
                    return Err(cfg_err(format!("{path}.record_scope"), format!("unknown record {r:?}")));
                }
                RecordScope::Institution(inst) if !inst_ids.contains(inst.as_str()) => {
                    return Err(cfg_err(
                        format!("{path}.record_scope"),
                        format!("unknown institution {inst:?}"),
                    ));
                }
                _ => {}
            }
        }
        for (i, r) in self.requests.iter().enumerate() {
            if !user_ids.contains(r.user_id.as_str()) {
                return Err(cfg_err(
                    format!("$.requests[{i}].user"),
                    format!("unknown user {:?}", r.user_id),
                ));
            }
            if !seen.contains(r.record_id.as_str()) {
                return Err(cfg_err(
                    format!("$.requests[{i}].record"),
                    format!("unknown record {:?}", r.record_id),
                ));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(cfg_err("$.train.learning_rate", "must be positive"));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return Err(cfg_err("$.train.lambda", "must be non-negative"));
        }
        if !(self.trust.lambda2 >= 0.0 && self.trust.lambda2.is_finite()) {
            return Err(cfg_err("$.trust.lambda2", "must be non-negative"));
        }
        self.trust
            .weights
            .validate()
            .map_err(|e| cfg_err("$.trust.weights", e.to_string()))?;
        Ok(())
    }

    /// Record ids in materialization order.
    pub fn record_ids(&self) -> Vec<String> {
        let mut ids = Vec::new();
        for src in &self.records {
            match src {
                RecordSource::Generated { institution, count } => {
                    let start = ids
                        .iter()
                        .filter(|id: &&String| id.starts_with(&format!("{institution}-")))
                        .count();
                    ids.extend((start..start + count).map(|k| generated_id(institution, k)));
                }
                RecordSource::Inline { rows, .. } => ids.extend(rows.iter().map(|r| r.id.clone())),
            }
        }
        ids
    }

    /// Plaintext rows for every record, deterministic in the seed.
    pub fn materialize_records(&self) -> Vec<PatientRecord> {
        let mut rng = stream_rng(self.seed, DATA_STREAM);
        let ids = self.record_ids();
        let mut ids = ids.into_iter();
        let mut out = Vec::new();
        for src in &self.records {
            match src {
                RecordSource::Generated { institution, count } => {
                    let g = self.generator.as_ref().expect("validated: generator present");
                    for _ in 0..*count {
                        let features: Vec<f64> = g
                            .low
                            .iter()
                            .zip(&g.high)
                            .map(|(lo, hi)| lo + (hi - lo) * rng.gen::<f64>())
                            .collect();
                        let margin: f64 = g.weights.iter().zip(&features).map(|(w, x)| w * x).sum::<f64>() + g.bias;
                        let u: f64 = rng.gen();
                        let label = match self.link {
                            Link::Logistic => f64::from(u8::from(u < sigmoid(margin))),
                            Link::Identity => margin + g.noise * (2.0 * u - 1.0),
                        };
                        out.push(PatientRecord {
                            record_id: ids.next().expect("one id per row"),
                            institution: institution.clone(),
                            features,
                            label,
                        });
                    }
                }
                RecordSource::Inline { institution, rows } => {
                    for row in rows {
                        ids.next();
                        out.push(PatientRecord {
                            record_id: row.id.clone(),
                            institution: institution.clone(),
                            features: row.features.clone(),
                            label: row.label,
                        });
                    }
                }
            }
        }
        out
    }

    /// Feature spec with the baseline resolved (defaults to the row mean).
    pub fn resolved_spec(&self, records: &[PatientRecord]) -> FeatureSpec {
        let mut spec = self.features.clone();
        if spec.baseline.is_empty() {
            let m = spec.names.len();
            let n = records.len().max(1) as f64;
            spec.baseline = (0..m)
                .map(|j| records.iter().map(|r| r.features[j]).sum::<f64>() / n)
                .collect();
        }
        spec
    }

    pub fn institution_of_key(&self, key_id: &str) -> Option<&Institution> {
        self.institutions.iter().find(|i| i.key_id == key_id)
    }

    /// The shipped heart-failure scenario: two hospitals, ten records each,
    /// troponin and ECG abnormality constrained to push risk upward.
    pub fn demo() -> Self {
        let grant = |id: &str, user: &str, scope: RecordScope, purpose: Purpose, from: u64, until: u64| AccessPolicy {
            policy_id: id.into(),
            user_id: user.into(),
            scope,
            purpose,
            valid_from: from,
            valid_until: until,
            granted: true,
        };
        let inst = |s: &str| RecordScope::Institution(s.into());
        ScenarioConfig {
            seed: 20240917,
            institutions: vec![
                Institution {
                    id: "hosp-a".into(),
                    key_id: "key-hosp-a".into(),
                },
                Institution {
                    id: "hosp-b".into(),
                    key_id: "key-hosp-b".into(),
                },
            ],
            users: vec![
                User {
                    id: "dr-ada".into(),
                    role: "clinician".into(),
                },
                User {
                    id: "dr-ben".into(),
                    role: "clinician".into(),
                },
                User {
                    id: "auditor-cy".into(),
                    role: "auditor".into(),
                },
                User {
                    id: "researcher-dee".into(),
                    role: "researcher".into(),
                },
            ],
            features: FeatureSpec {
                names: vec![
                    "troponin".into(),
                    "ecg_abnormality".into(),
                    "age".into(),
                    "systolic_bp".into(),
                ],
                baseline: vec![0.0, 0.0, 0.5, 0.5],
                signs: vec![
                    SignConstraint::Positive,
                    SignConstraint::Positive,
                    SignConstraint::Free,
                    SignConstraint::Free,
                ],
            },
            link: Link::Logistic,
            generator: Some(Generator {
                weights: vec![3.0, 2.0, 0.8, -0.6],
                bias: -2.4,
                low: vec![0.0; 4],
                high: vec![1.0; 4],
                noise: 0.0,
            }),
            records: vec![
                RecordSource::Generated {
                    institution: "hosp-a".into(),
                    count: 10,
                },
                RecordSource::Generated {
                    institution: "hosp-b".into(),
                    count: 10,
                },
            ],
            policies: vec![
                grant("p-ada-a", "dr-ada", inst("hosp-a"), Purpose::Treatment, 0, 10_000),
                grant("p-ben-b", "dr-ben", inst("hosp-b"), Purpose::Treatment, 0, 10_000),
                grant(
                    "p-ada-b02",
                    "dr-ada",
                    RecordScope::Record("hosp-b-02".into()),
                    Purpose::Treatment,
                    0,
                    10_000,
                ),
                grant("p-cy-audit", "auditor-cy", inst("hosp-a"), Purpose::Audit, 0, 10_000),
                grant("p-dee-old", "researcher-dee", inst("hosp-a"), Purpose::Research, 0, 1),
            ],
            requests: vec![
                AccessRequest::new("dr-ada", "hosp-a-03", Purpose::Treatment),
                AccessRequest::new("dr-ben", "hosp-b-07", Purpose::Treatment),
                AccessRequest::new("dr-ada", "hosp-b-02", Purpose::Treatment),
                AccessRequest::new("researcher-dee", "hosp-a-05", Purpose::Research),
                AccessRequest::new("dr-ben", "hosp-b-01", Purpose::Treatment),
                AccessRequest::new("dr-ada", "hosp-a-09", Purpose::Treatment),
            ],
            learning_rate: 0.5,
            epochs: 150,
            lambda1: 1.0,
            trust: TrustSettings {
                lambda2: 0.5,
                weights: SecurityWeights::default(),
            },
            federation: FederationSettings {
                rounds: 3,
                local_steps: 50,
            },
        }
    }
}

pub fn generated_id(institution: &str, k: usize) -> String {
    format!("{institution}-{k:02}")
}

impl Canonical for ScenarioConfig {
    fn to_value(&self) -> Value {
        let mut features = self.features.to_value();
        if self.features.baseline.is_empty() {
            if let Value::Map(m) = &mut features {
                m.remove("baseline");
            }
        }
        let records = self
            .records
            .iter()
            .map(|src| match src {
                RecordSource::Generated { institution, count } => Value::map()
                    .with("generate", *count)
                    .with("institution", institution.as_str())
                    .build(),
                RecordSource::Inline { institution, rows } => Value::map()
                    .with("institution", institution.as_str())
                    .with(
                        "rows",
                        Value::List(
                            rows.iter()
                                .map(|r| {
                                    Value::map()
                                        .with("features", Value::reals(&r.features))
                                        .with("id", r.id.as_str())
                                        .with("label", r.label)
                                        .build()
                                })
                                .collect(),
                        ),
                    )
                    .build(),
            })
            .collect::<Vec<_>>();
        let mut b = Value::map()
            .with("features", features)
            .with(
                "federation",
                Value::map()
                    .with("local_steps", self.federation.local_steps)
                    .with("rounds", self.federation.rounds)
                    .build(),
            )
            .with(
                "institutions",
                Value::List(
                    self.institutions
                        .iter()
                        .map(|i| {
                            Value::map()
                                .with("id", i.id.as_str())
                                .with("key_id", i.key_id.as_str())
                                .build()
                        })
                        .collect(),
                ),
            )
            .with("link", self.link.as_str())
            .with(
                "policies",
                Value::List(self.policies.iter().map(Canonical::to_value).collect()),
            )
            .with("records", records)
            .with(
                "requests",
                Value::List(
                    self.requests
                        .iter()
                        .map(|r| {
                            Value::map()
                                .with("purpose", r.purpose.as_str())
                                .with("record", r.record_id.as_str())
                                .with("user", r.user_id.as_str())
                                .build()
                        })
                        .collect(),
                ),
            )
            .with("seed", self.seed)
            .with(
                "train",
                Value::map()
                    .with("epochs", self.epochs)
                    .with("lambda", self.lambda1)
                    .with("learning_rate", self.learning_rate)
                    .build(),
            )
            .with(
                "trust",
                Value::map()
                    .with("lambda2", self.trust.lambda2)
                    .with(
                        "weights",
                        Value::reals(&[
                            self.trust.weights.integrity,
                            self.trust.weights.provenance,
                            self.trust.weights.auditability,
                        ]),
                    )
                    .build(),
            )
            .with(
                "users",
                Value::List(
                    self.users
                        .iter()
                        .map(|u| {
                            Value::map()
                                .with("id", u.id.as_str())
                                .with("role", u.role.as_str())
                                .build()
                        })
                        .collect(),
                ),
            );
        if let Some(g) = &self.generator {
            b = b.with(
                "generator",
                Value::map()
                    .with("bias", g.bias)
                    .with("high", Value::reals(&g.high))
                    .with("low", Value::reals(&g.low))
                    .with("noise", g.noise)
                    .with("weights", Value::reals(&g.weights))
                    .build(),
            );
        }
        b.build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let p = |k: &str| format!("{path}.{k}");
        let list = |key: &str| -> Result<Vec<(String, &Value)>, CanonicalError> {
            Ok(match v.opt_field(path, key)? {
                Some(l) => l
                    .as_list(&p(key))?
                    .iter()
                    .enumerate()
                    .map(|(i, item)| (format!("{path}.{key}[{i}]"), item))
                    .collect(),
                None => Vec::new(),
            })
        };
        let text = |item: &Value, ipath: &str, key: &str| -> Result<String, CanonicalError> {
            Ok(item.field(ipath, key)?.as_text(&format!("{ipath}.{key}"))?.to_string())
        };

        let institutions = list("institutions")?
            .into_iter()
            .map(|(ip, item)| {
                Ok(Institution {
                    id: text(item, &ip, "id")?,
                    key_id: text(item, &ip, "key_id")?,
                })
            })
            .collect::<Result<_, CanonicalError>>()?;
        let users = list("users")?
            .into_iter()
            .map(|(ip, item)| {
                Ok(User {
                    id: text(item, &ip, "id")?,
                    role: match item.opt_field(&ip, "role")? {
                        Some(r) => r.as_text(&format!("{ip}.role"))?.to_string(),
                        None => String::new(),
                    },
                })
            })
            .collect::<Result<_, CanonicalError>>()?;
        let features = FeatureSpec::from_value(v.field(path, "features")?, &p("features"))?;
        let link = match v.opt_field(path, "link")? {
            Some(l) => {
                let s = l.as_text(&p("link"))?;
                Link::parse(s).ok_or_else(|| CanonicalError::invalid(p("link"), format!("unknown link {s:?}")))?
            }
            None => Link::Logistic,
        };
        let generator = match v.opt_field(path, "generator")? {
            Some(g) => {
                let gp = p("generator");
                Some(Generator {
                    weights: g.field(&gp, "weights")?.as_reals(&format!("{gp}.weights"))?,
                    bias: g.field(&gp, "bias")?.as_real(&format!("{gp}.bias"))?,
                    low: g.field(&gp, "low")?.as_reals(&format!("{gp}.low"))?,
                    high: g.field(&gp, "high")?.as_reals(&format!("{gp}.high"))?,
                    noise: match g.opt_field(&gp, "noise")? {
                        Some(n) => n.as_real(&format!("{gp}.noise"))?,
                        None => 0.0,
                    },
                })
            }
            None => None,
        };
        let records = list("records")?
            .into_iter()
            .map(|(ip, item)| {
                let institution = text(item, &ip, "institution")?;
                match (item.opt_field(&ip, "generate")?, item.opt_field(&ip, "rows")?) {
                    (Some(n), None) => Ok(RecordSource::Generated {
                        institution,
                        count: n.as_u64(&format!("{ip}.generate"))? as usize,
                    }),
                    (None, Some(rows)) => {
                        let rp = format!("{ip}.rows");
                        let rows = rows
                            .as_list(&rp)?
                            .iter()
                            .enumerate()
                            .map(|(k, r)| {
                                let rowp = format!("{rp}[{k}]");
                                Ok(InlineRow {
                                    id: text(r, &rowp, "id")?,
                                    features: r.field(&rowp, "features")?.as_reals(&format!("{rowp}.features"))?,
                                    label: r.field(&rowp, "label")?.as_real(&format!("{rowp}.label"))?,
                                })
                            })
                            .collect::<Result<_, CanonicalError>>()?;
                        Ok(RecordSource::Inline { institution, rows })
                    }
                    _ => Err(CanonicalError::invalid(ip, "exactly one of generate or rows required")),
                }
            })
            .collect::<Result<_, CanonicalError>>()?;
        let policies = list("policies")?
            .into_iter()
            .map(|(ip, item)| AccessPolicy::from_value(item, &ip))
            .collect::<Result<_, _>>()?;
        let requests = list("requests")?
            .into_iter()
            .map(|(ip, item)| {
                let purpose_text = text(item, &ip, "purpose")?;
                Ok(AccessRequest {
                    user_id: text(item, &ip, "user")?,
                    record_id: text(item, &ip, "record")?,
                    purpose: Purpose::parse(&purpose_text).ok_or_else(|| {
                        CanonicalError::invalid(format!("{ip}.purpose"), format!("unknown purpose {purpose_text:?}"))
                    })?,
                })
            })
            .collect::<Result<_, CanonicalError>>()?;

        let train = v.field(path, "train")?;
        let tp = p("train");
        let trust = v.opt_field(path, "trust")?;
        let (lambda2, weights) = match trust {
            Some(t) => {
                let trp = p("trust");
                let lambda2 = match t.opt_field(&trp, "lambda2")? {
                    Some(l) => l.as_real(&format!("{trp}.lambda2"))?,
                    None => 0.0,
                };
                let weights = match t.opt_field(&trp, "weights")? {
                    Some(w) => {
                        let w = w.as_reals(&format!("{trp}.weights"))?;
                        if w.len() != 3 {
                            return Err(CanonicalError::invalid(format!("{trp}.weights"), "expected 3 weights"));
                        }
                        SecurityWeights {
                            integrity: w[0],
                            provenance: w[1],
                            auditability: w[2],
                        }
                    }
                    None => SecurityWeights::default(),
                };
                (lambda2, weights)
            }
            None => (0.0, SecurityWeights::default()),
        };
        let fed = v.opt_field(path, "federation")?;
        let federation = match fed {
            Some(f) => {
                let fp = p("federation");
                FederationSettings {
                    rounds: f.field(&fp, "rounds")?.as_u64(&format!("{fp}.rounds"))?,
                    local_steps: f.field(&fp, "local_steps")?.as_u64(&format!("{fp}.local_steps"))? as usize,
                }
            }
            None => FederationSettings {
                rounds: 1,
                local_steps: 1,
            },
        };
        Ok(ScenarioConfig {
            seed: v.field(path, "seed")?.as_u64(&p("seed"))?,
            institutions,
            users,
            features,
            link,
            generator,
            records,
            policies,
            requests,
            learning_rate: train
                .field(&tp, "learning_rate")?
                .as_real(&format!("{tp}.learning_rate"))?,
            epochs: train.field(&tp, "epochs")?.as_u64(&format!("{tp}.epochs"))? as usize,
            lambda1: match train.opt_field(&tp, "lambda")? {
                Some(l) => l.as_real(&format!("{tp}.lambda"))?,
                None => 0.0,
            },
            trust: TrustSettings { lambda2, weights },
            federation,
        })
    }
}
