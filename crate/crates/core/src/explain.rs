//! Exact Shapley attributions for additive models.
//!
//! Attributions live on the margin scale. For `margin = w·x + b` and baseline
//! μ the Shapley value of feature j is `w_j (x_j − μ_j)`, and
//! `φ₀ + Σ_j α_j = margin(x)` holds with `φ₀ = w·μ + b`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::canonical::{Canonical, CanonicalError, Value};
use crate::crypto::{digest_of, Hash256};
use crate::learning::{FeatureSpec, LearningError, LinearModel};

/// Tolerance of the completeness identity.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Largest feature count accepted by [`shapley_bruteforce`].
pub const MAX_BRUTE_FORCE_FEATURES: usize = 12;
pub const MARGIN_SCALE: &str = "margin";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("{0} features exceed brute-force capacity of {MAX_BRUTE_FORCE_FEATURES}")]
    Capacity(usize),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub record_ref: String,
    /// φ₀: model margin at the baseline.
    pub baseline_value: f64,
    pub attributions: BTreeMap<String, f64>,
    pub model_hash: Hash256,
    pub input_commitment: Hash256,
    pub scale: String,
}

impl Explanation {
    /// Attributions in feature-spec order.
    pub fn ordered(&self, spec: &FeatureSpec) -> Vec<f64> {
        spec.names
            .iter()
            .map(|n| self.attributions.get(n).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn total(&self) -> f64 {
        self.baseline_value + self.attributions.values().sum::<f64>()
    }

    pub fn hash(&self) -> Result<Hash256, CanonicalError> {
        digest_of(self)
    }

    /// `(feature, attribution)` sorted by descending magnitude, then name.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut rows: Vec<(&str, f64)> = self.attributions.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        rows.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(b.0)));
        rows
    }

    /// Text table of attributions, largest magnitude first.
    pub fn table(&self) -> String {
        let width = self.attributions.keys().map(String::len).max().unwrap_or(7).max(7);
        let mut out = format!("{:<width$}  {:>14}\n", "feature", "attribution");
        out.push_str(&format!("{:<width$}  {:>14.6}\n", "(base)", self.baseline_value));
        for (name, a) in self.ranked() {
            out.push_str(&format!("{name:<width$}  {a:>14.6}\n"));
        }
        out.push_str(&format!("{:<width$}  {:>14.6}\n", "= margin", self.total()));
        out
    }
}

impl Canonical for Explanation {
    fn to_value(&self) -> Value {
        Value::map()
            .with(
                "attributions",
                Value::Map(
                    self.attributions
                        .iter()
                        .map(|(k, v)| (k.clone(), Value::Real(*v)))
                        .collect(),
                ),
            )
            .with("baseline_value", self.baseline_value)
            .with("input_commitment", self.input_commitment.to_value())
            .with("model_hash", self.model_hash.to_value())
            .with("record_ref", self.record_ref.as_str())
            .with("scale", self.scale.as_str())
            .build()
    }

    fn from_value(v: &Value, path: &str) -> Result<Self, CanonicalError> {
        let attr_path = format!("{path}.attributions");
        let attributions = v
            .field(path, "attributions")?
            .as_map(&attr_path)?
            .iter()
            .map(|(k, a)| Ok((k.clone(), a.as_real(&format!("{attr_path}.{k}"))?)))
            .collect::<Result<_, CanonicalError>>()?;
        Ok(Explanation {
            record_ref: v.field(path, "record_ref")?.as_text(path)?.to_string(),
            baseline_value: v
                .field(path, "baseline_value")?
                .as_real(&format!("{path}.baseline_value"))?,
            attributions,
            model_hash: Hash256::from_value(v.field(path, "model_hash")?, path)?,
            input_commitment: Hash256::from_value(v.field(path, "input_commitment")?, path)?,
            scale: v.field(path, "scale")?.as_text(path)?.to_string(),
        })
    }
}

fn check_input(expected: usize, x: &[f64]) -> Result<(), ExplainError> {
    if x.len() != expected {
        return Err(ExplainError::Dimension { expected, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ExplainError::NonFinite);
    }
    Ok(())
}

/// `α_j = w_j (x_j − μ_j)` in feature order.
pub fn linear_attributions(model: &LinearModel, spec: &FeatureSpec, x: &[f64]) -> Result<Vec<f64>, ExplainError> {
    spec.validate()?;
    check_input(spec.dim(), &model.weights)?;
    check_input(spec.dim(), x)?;
    Ok(model
        .weights
        .iter()
        .zip(x.iter().zip(&spec.baseline))
        .map(|(w, (xj, mu))| w * (xj - mu))
        .collect())
}

/// Closed-form Shapley explanation of a linear model at `x`, bound to the
/// model hash and the record's input commitment.
pub fn explain_linear(
    model: &LinearModel,
    spec: &FeatureSpec,
    x: &[f64],
    record_ref: &str,
    input_commitment: Hash256,
) -> Result<Explanation, ExplainError> {
    let alphas = linear_attributions(model, spec, x)?;
    Ok(Explanation {
        record_ref: record_ref.to_string(),
        baseline_value: model.margin(&spec.baseline),
        attributions: spec.names.iter().cloned().zip(alphas).collect(),
        model_hash: model.hash()?,
        input_commitment,
        scale: MARGIN_SCALE.to_string(),
    })
}

/// Exact Shapley values of a black-box `predictor` by enumerating all 2^m
/// coalitions. Features outside a coalition take their baseline value.
pub fn shapley_bruteforce<F>(predictor: F, spec: &FeatureSpec, x: &[f64]) -> Result<Vec<f64>, ExplainError>
where
    F: Fn(&[f64]) -> f64,
{
    let m = spec.dim();
    if m > MAX_BRUTE_FORCE_FEATURES {
        return Err(ExplainError::Capacity(m));
    }
    spec.validate()?;
    check_input(m, x)?;

    let value: Vec<f64> = (0..1usize << m)
        .map(|mask| {
            let z: Vec<f64> = (0..m)
                .map(|j| if mask >> j & 1 == 1 { x[j] } else { spec.baseline[j] })
                .collect();
            predictor(&z)
        })
        .collect();

    // |S|!(m−|S|−1)!/m! for each coalition size.
    let fact: Vec<f64> = (0..=m)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    let weight: Vec<f64> = (0..m).map(|s| fact[s] * fact[m - s - 1] / fact[m]).collect();

    Ok((0..m)
        .map(|j| {
            let bit = 1usize << j;
            (0..1usize << m)
                .filter(|mask| mask & bit == 0)
                .map(|mask| weight[mask.count_ones() as usize] * (value[mask | bit] - value[mask]))
                .sum()
        })
        .collect())
}

/// `Ω = Σ_j max(0, −s_j α_j)`.
pub fn plausibility_penalty(explanation: &Explanation, spec: &FeatureSpec) -> f64 {
    spec.names
        .iter()
        .zip(&spec.signs)
        .map(|(name, s)| {
            let a = explanation.attributions.get(name).copied().unwrap_or(0.0);
            (-s.sign() * a).max(0.0)
        })
        .sum()
}

/// `|φ₀ + Σ α_j − margin(x)| ≤ 1e−9`. False on dimension mismatch.
pub fn check_completeness(explanation: &Explanation, model: &LinearModel, x: &[f64]) -> bool {
    if x.len() != model.dim() {
        return false;
    }
    (explanation.total() - model.margin(x)).abs() <= COMPLETENESS_TOL
}
