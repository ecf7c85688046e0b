//! Additive predictive models, penalized training and federated averaging.
//!
//! Models are `margin = w·x + b` with an identity or logistic link. The
//! plausibility penalty is the instance-averaged hinge on sign-constrained
//! margin attributions,
//!
//! ```text
//! Ω̄(w) = mean_i Σ_j max(0, −s_j · w_j · (x_ij − μ_j))
//! ```
//!
//! and training minimizes `mean loss + λ · Ω̄` by full-batch descent from the
//! zero model.

use std::fmt;

use thiserror::Error;

use crate::canonical::{Canonical, CanonicalError, Value};
use crate::crypto::{digest_of, Hash256};
use crate::ledger::{Ledger, LedgerError, ModelUpdateBody, Transaction, TxBody};

/// Probabilities are clamped to `[EPS, 1 − EPS]` inside the cross-entropy.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearningError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {0} is not valid for the logistic link (expected 0 or 1)")]
    BadLabel(f64),
    #[error("training diverged at epoch {0}")]
    Divergence(usize),
    #[error("invalid feature spec: {0}")]
    Spec(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("nothing to aggregate")]
    NoUpdates,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    pub fn as_str(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Logistic => "logistic",
        }
    }

    pub fn parse(s: &str) -> Option<Link> {
        match s {
            "identity" => Some(Link::Identity),
            "logistic" => Some(Link::Logistic),
            _ => None,
        }
    }

    pub fn apply(self, margin: f64) -> f64 {
        match self {
            Link::Identity => margin,
            Link::Logistic => sigmoid(margin),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Clinician-declared direction of effect for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignConstraint {
    Positive,
    Negative,
    Free,
}

impl SignConstraint {
    pub fn sign(self) -> f64 {
        match self {
            SignConstraint::Positive => 1.0,
            SignConstraint::Negative => -1.0,
            SignConstraint::Free => 0.0,
        }
    }

    pub fn from_int(s: i128) -> Option<Self> {
        match s {
            1 => Some(SignConstraint::Positive),
            -1 => Some(SignConstraint::Negative),
            0 => Some(SignConstraint::Free),
            _ => None,
        }
    }

    fn as_int(self) -> i64 {
        self.sign() as i64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub names: Vec<String>,
    /// Reference point μ for attributions.
    pub baseline: Vec<f64>,
    pub signs: Vec<SignConstraint>,
}

impl FeatureSpec {
    pub fn new(names: Vec<String>, baseline: Vec<f64>, signs: Vec<SignConstraint>) -> Result<Self, LearningError> {
        let spec = FeatureSpec { names, baseline, signs };
        spec.validate()?;
        Ok(spec)
    }

    /// All-free constraints and zero baseline.
    pub fn unconstrained(m: usize) -> Self {
        FeatureSpec {
            names: (0..m).map(|j| format!("x{j}")).collect(),
            baseline: vec![0.0; m],
            signs: vec![SignConstraint::Free; m],
        }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn validate(&self) -> Result<(), LearningError> {
        let m = self.names.len();
        if m == 0 {
            return Err(LearningError::Spec("at least one feature required".into()));
        }
        if self.baseline.len() != m || self.signs.len() != m {
            return Err(LearningError::Spec(format!(
                "names/baseline/signs lengths differ: {}/{}/{}",
                m,
                self.baseline.len(),
                self.signs.len()
            )));
        }
        let mut sorted: Vec<&String> = self.names.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(LearningError::Spec("feature names must be unique".into()));
        }
        if self.baseline.iter().any(|x| !x.is_finite()) {
            return Err(LearningError::NonFinite);
        }
        Ok(())
    }
}

impl Canonical for FeatureSpec {
    fn to_value(&self) -> Value {
        Value::map()
            .with("baseline", Value::reals(&self.baseline))
            .with(
                "names",
                Value::List(self.names.iter().map(|n| Value::text(n.as_str())).collect()),
            )
            .with(
                "signs",
                Value::List(self.signs.iter().map(|s| Value::Int(s.as_int() as i128)).collect()),
            )
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let names = v
            .field(path, "names")?
            .as_list(path)?
            .iter()
            .map(|n| n.as_text(&format!("{path}.names")).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?;
        let signs_path = format!("{path}.signs");
        let signs = v
            .field(path, "signs")?
            .as_list(&signs_path)?
            .iter()
            .map(|s| {
                SignConstraint::from_int(s.as_int(&signs_path)?)
                    .ok_or_else(|| CanonicalError::invalid(&signs_path, "sign must be -1, 0 or 1"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let baseline = match v.opt_field(path, "baseline")? {
            Some(b) => b.as_reals(&format!("{path}.baseline"))?,
            None => Vec::new(),
        };
        Ok(FeatureSpec { names, baseline, signs })
    }
}

/// `margin = w·x + b`, prediction = link(margin).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub link: Link,
}

impl LinearModel {
    pub fn zeros(m: usize, link: Link) -> Self {
        LinearModel {
            weights: vec![0.0; m],
            bias: 0.0,
            link,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    pub fn hash(&self) -> Result<Hash256, CanonicalError> {
        digest_of(self)
    }

    pub fn params(&self) -> Params {
        Params {
            weights: self.weights.clone(),
            bias: self.bias,
        }
    }

    /// `self + delta`.
    pub fn apply(&self, delta: &Params) -> Result<LinearModel, LearningError> {
        check_dim(self.dim(), delta.weights.len())?;
        Ok(LinearModel {
            weights: self.weights.iter().zip(&delta.weights).map(|(w, d)| w + d).collect(),
            bias: self.bias + delta.bias,
            link: self.link,
        })
    }
}

impl Canonical for LinearModel {
    fn to_value(&self) -> Value {
        Value::map()
            .with("bias", self.bias)
            .with("link", self.link.as_str())
            .with("weights", Value::reals(&self.weights))
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let link_text = v.field(path, "link")?.as_text(path)?;
        Ok(LinearModel {
            weights: v.field(path, "weights")?.as_reals(&format!("{path}.weights"))?,
            bias: v.field(path, "bias")?.as_real(&format!("{path}.bias"))?,
            link: Link::parse(link_text)
                .ok_or_else(|| CanonicalError::invalid(path, format!("unknown link {link_text:?}")))?,
        })
    }
}

/// A parameter-space vector: weight deltas, gradients. Carries no row data.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub type ModelDelta = Params;

impl Params {
    pub fn zeros(m: usize) -> Self {
        Params {
            weights: vec![0.0; m],
            bias: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// All coordinates, bias last.
    pub fn coords(&self) -> Vec<f64> {
        let mut v = self.weights.clone();
        v.push(self.bias);
        v
    }
}

impl Canonical for Params {
    fn to_value(&self) -> Value {
        Value::map()
            .with("bias", self.bias)
            .with("weights", Value::reals(&self.weights))
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        Ok(Params {
            weights: v.field(path, "weights")?.as_reals(&format!("{path}.weights"))?,
            bias: v.field(path, "bias")?.as_real(&format!("{path}.bias"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub margin: f64,
    pub value: f64,
}

impl Canonical for Prediction {
    fn to_value(&self) -> Value {
        Value::map()
            .with("margin", self.margin)
            .with("value", self.value)
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        Ok(Prediction {
            margin: v.field(path, "margin")?.as_real(&format!("{path}.margin"))?,
            value: v.field(path, "value")?.as_real(&format!("{path}.value"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub features: Vec<f64>,
    pub label: f64,
}

/// Rows held by one institution.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub institution: String,
    pub rows: Vec<Row>,
}

impl Dataset {
    pub fn new(institution: impl Into<String>, rows: Vec<Row>) -> Self {
        Dataset {
            institution: institution.into(),
            rows,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self, m: usize, link: Link) -> Result<(), LearningError> {
        if self.rows.is_empty() {
            return Err(LearningError::EmptyDataset);
        }
        for row in &self.rows {
            check_dim(m, row.features.len())?;
            if !row.label.is_finite() || row.features.iter().any(|x| !x.is_finite()) {
                return Err(LearningError::NonFinite);
            }
            if link == Link::Logistic && row.label != 0.0 && row.label != 1.0 {
                return Err(LearningError::BadLabel(row.label));
            }
        }
        Ok(())
    }
}

/// How the penalty term enters each descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyStep {
    /// Gradient step on the loss followed by the exact proximal map of the
    /// penalty. Lands exactly on the constraint boundary for large λ.
    Proximal,
    /// Plain subgradient of loss + λ·penalty.
    Subgradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Interpretability weight λ (the same λ₁ that appears in the trust objective).
    pub lambda: f64,
    /// Recorded with the run; initialization is always the zero model.
    pub seed: u64,
    pub link: Link,
    pub penalty_step: PenaltyStep,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, epochs: usize, link: Link) -> Self {
        TrainConfig {
            learning_rate,
            epochs,
            lambda: 0.0,
            seed: 0,
            link,
            penalty_step: PenaltyStep::Proximal,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self) -> Result<(), LearningError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LearningError::Config("learning_rate must be positive".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(LearningError::Config("lambda must be non-negative".into()));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(expected: usize, got: usize) -> Result<(), LearningError> {
    if expected != got {
        return Err(LearningError::Dimension { expected, got });
    }
    Ok(())
}

pub fn predict(model: &LinearModel, x: &[f64]) -> Result<Prediction, LearningError> {
    check_dim(model.dim(), x.len())?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LearningError::NonFinite);
    }
    let margin = model.margin(x);
    Ok(Prediction {
        margin,
        value: model.link.apply(margin),
    })
}

fn row_loss(link: Link, margin: f64, y: f64) -> f64 {
    match link {
        Link::Identity => (margin - y).powi(2),
        Link::Logistic => {
            let p = sigmoid(margin).clamp(PROB_EPS, 1.0 - PROB_EPS);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

/// d(row loss)/d(margin).
fn row_loss_slope(link: Link, margin: f64, y: f64) -> f64 {
    match link {
        Link::Identity => 2.0 * (margin - y),
        Link::Logistic => sigmoid(margin) - y,
    }
}

/// Mean cross-entropy (logistic) or mean squared error (identity).
pub fn loss(model: &LinearModel, data: &Dataset) -> Result<f64, LearningError> {
    data.validate(model.dim(), model.link)?;
    let total: f64 = data
        .rows
        .iter()
        .map(|r| row_loss(model.link, model.margin(&r.features), r.label))
        .sum();
    Ok(total / data.len() as f64)
}

pub fn loss_gradient(model: &LinearModel, data: &Dataset) -> Result<Params, LearningError> {
    data.validate(model.dim(), model.link)?;
    let mut grad = Params::zeros(model.dim());
    for r in &data.rows {
        let slope = row_loss_slope(model.link, model.margin(&r.features), r.label);
        for (g, x) in grad.weights.iter_mut().zip(&r.features) {
            *g += slope * x;
        }
        grad.bias += slope;
    }
    let n = data.len() as f64;
    grad.weights.iter_mut().for_each(|g| *g /= n);
    grad.bias /= n;
    Ok(grad)
}

/// Instance-averaged plausibility penalty Ω̄.
pub fn mean_penalty(model: &LinearModel, spec: &FeatureSpec, data: &Dataset) -> Result<f64, LearningError> {
    spec.validate()?;
    check_dim(spec.dim(), model.dim())?;
    data.validate(model.dim(), model.link)?;
    let total: f64 = data
        .rows
        .iter()
        .map(|r| {
            (0..spec.dim())
                .map(|j| {
                    let alpha = model.weights[j] * (r.features[j] - spec.baseline[j]);
                    (-spec.signs[j].sign() * alpha).max(0.0)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// A subgradient of Ω̄ (zero at kinks).
pub fn penalty_subgradient(model: &LinearModel, spec: &FeatureSpec, data: &Dataset) -> Result<Params, LearningError> {
    check_dim(spec.dim(), model.dim())?;
    data.validate(model.dim(), model.link)?;
    let mut grad = Params::zeros(model.dim());
    for r in &data.rows {
        for j in 0..spec.dim() {
            let s = spec.signs[j].sign();
            let d = r.features[j] - spec.baseline[j];
            if -s * model.weights[j] * d > 0.0 {
                grad.weights[j] += -s * d;
            }
        }
    }
    let n = data.len() as f64;
    grad.weights.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// `mean loss + λ · Ω̄`.
pub fn objective(model: &LinearModel, spec: &FeatureSpec, data: &Dataset, lambda: f64) -> Result<f64, LearningError> {
    let base = loss(model, data)?;
    if lambda == 0.0 {
        return Ok(base);
    }
    Ok(base + lambda * mean_penalty(model, spec, data)?)
}

pub fn objective_gradient(
    model: &LinearModel,
    spec: &FeatureSpec,
    data: &Dataset,
    lambda: f64,
) -> Result<Params, LearningError> {
    let mut grad = loss_gradient(model, data)?;
    if lambda != 0.0 {
        let pen = penalty_subgradient(model, spec, data)?;
        for (g, p) in grad.weights.iter_mut().zip(&pen.weights) {
            *g += lambda * p;
        }
    }
    Ok(grad)
}

/// Per-feature coefficients of Ω̄ as a function of `u_j = s_j·w_j`:
/// `Ω̄_j = a_j·max(0, u_j) + b_j·max(0, −u_j)`.
fn penalty_coefficients(spec: &FeatureSpec, data: &Dataset) -> Vec<(f64, f64)> {
    let n = data.len() as f64;
    (0..spec.dim())
        .map(|j| {
            let (mut a, mut b) = (0.0, 0.0);
            for r in &data.rows {
                let d = r.features[j] - spec.baseline[j];
                a += (-d).max(0.0);
                b += d.max(0.0);
            }
            (a / n, b / n)
        })
        .collect()
}

/// Proximal map of `step · Ω̄` applied coordinate-wise to the weights.
fn penalty_prox(weights: &mut [f64], spec: &FeatureSpec, coeffs: &[(f64, f64)], step: f64) {
    for (j, w) in weights.iter_mut().enumerate() {
        let s = spec.signs[j].sign();
        if s == 0.0 {
            continue;
        }
        let (a, b) = coeffs[j];
        let u = s * *w;
        let u_new = if u > step * a {
            u - step * a
        } else if u < -step * b {
            u + step * b
        } else {
            0.0
        };
        *w = s * u_new;
    }
}

/// Model plus the per-epoch training loss (entry `k` is the loss before epoch
/// `k`; the last entry is the loss of the returned model).
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: LinearModel,
    pub loss_trace: Vec<f64>,
}

/// Full-batch descent on `mean loss + λ·Ω̄` starting from `init`.
pub fn fit_from(
    init: &LinearModel,
    data: &Dataset,
    spec: &FeatureSpec,
    config: &TrainConfig,
    epochs: usize,
) -> Result<Fit, LearningError> {
    config.validate()?;
    spec.validate()?;
    check_dim(spec.dim(), init.dim())?;
    data.validate(init.dim(), init.link)?;
    let lr = config.learning_rate;
    let lambda = config.lambda;
    let coeffs = penalty_coefficients(spec, data);
    let mut model = init.clone();
    let mut trace = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        trace.push(loss(&model, data)?);
        let grad = match config.penalty_step {
            PenaltyStep::Subgradient => objective_gradient(&model, spec, data, lambda)?,
            PenaltyStep::Proximal => loss_gradient(&model, data)?,
        };
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * g;
        }
        model.bias -= lr * grad.bias;
        if config.penalty_step == PenaltyStep::Proximal && lambda != 0.0 {
            penalty_prox(&mut model.weights, spec, &coeffs, lr * lambda);
        }
        if !model.is_finite() {
            return Err(LearningError::Divergence(epoch));
        }
    }
    trace.push(loss(&model, data)?);
    Ok(Fit {
        model,
        loss_trace: trace,
    })
}

/// Unpenalized empirical risk minimization (`config.lambda` is ignored).
pub fn train_erm(data: &Dataset, spec: &FeatureSpec, config: &TrainConfig) -> Result<LinearModel, LearningError> {
    let plain = TrainConfig {
        lambda: 0.0,
        ..config.clone()
    };
    let init = LinearModel::zeros(spec.dim(), config.link);
    Ok(fit_from(&init, data, spec, &plain, config.epochs)?.model)
}

/// Training with the plausibility penalty weighted by `config.lambda`.
pub fn train_constrained(
    data: &Dataset,
    spec: &FeatureSpec,
    config: &TrainConfig,
) -> Result<LinearModel, LearningError> {
    let init = LinearModel::zeros(spec.dim(), config.link);
    Ok(fit_from(&init, data, spec, config, config.epochs)?.model)
}

/// Run `local_steps` epochs on one institution's shard starting from the
/// global model and return only the parameter change.
pub fn local_update(
    global: &LinearModel,
    shard: &Dataset,
    spec: &FeatureSpec,
    config: &TrainConfig,
    local_steps: usize,
) -> Result<ModelDelta, LearningError> {
    let local = fit_from(global, shard, spec, config, local_steps)?.model;
    Ok(Params {
        weights: local.weights.iter().zip(&global.weights).map(|(l, g)| l - g).collect(),
        bias: local.bias - global.bias,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeUpdate {
    pub node_id: String,
    pub delta: ModelDelta,
    pub shard_size: usize,
}

/// Shard-size-weighted mean of deltas, accumulated in ascending node-id order.
pub fn fed_avg(updates: &[NodeUpdate]) -> Result<ModelDelta, LearningError> {
    let first = updates.first().ok_or(LearningError::NoUpdates)?;
    let m = first.delta.weights.len();
    let mut ordered: Vec<&NodeUpdate> = updates.iter().collect();
    ordered.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    let mut acc = Params::zeros(m);
    let mut total = 0usize;
    for u in ordered {
        check_dim(m, u.delta.weights.len())?;
        let n = u.shard_size as f64;
        for (a, d) in acc.weights.iter_mut().zip(&u.delta.weights) {
            *a += n * d;
        }
        acc.bias += n * u.delta.bias;
        total += u.shard_size;
    }
    if total == 0 {
        return Err(LearningError::NoUpdates);
    }
    let total = total as f64;
    acc.weights.iter_mut().for_each(|a| *a /= total);
    acc.bias /= total;
    Ok(acc)
}

/// Stage a ModelUpdate transaction carrying the hash of `delta`.
pub fn log_model_update(
    ledger: &mut Ledger,
    node_id: &str,
    round: u64,
    delta: &ModelDelta,
) -> Result<Transaction, LearningError> {
    if !delta.is_finite() {
        return Err(LearningError::NonFinite);
    }
    let delta_hash = digest_of(delta)?;
    Ok(ledger.stage(
        node_id,
        TxBody::ModelUpdate(ModelUpdateBody {
            node_id: node_id.to_string(),
            round,
            delta_hash,
        }),
    )?)
}
