//! Canonical object notation.
//!
//! Every hashed or persisted structure goes through [`Value`]. The text form is
//! JSON-compatible with a few extra rules so that two implementations hashing
//! the same structure produce the same bytes:
//!
//! - map keys are emitted in strict byte-lexicographic order
//! - no whitespace between tokens
//! - reals are rendered as the 16 lowercase hex digits of their IEEE-754
//!   binary64 big-endian bit pattern, inside a string
//! - byte strings are rendered as lowercase hex, inside a string
//!
//! Because reals, byte strings and text all render as JSON strings, decoding is
//! schema-directed: the reader asks for a real and the accessor interprets the
//! string accordingly. On input, plain JSON numbers are also accepted where a
//! real is expected, so hand-written scenario files can use decimals.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CanonicalError {
    #[error("non-finite real at {0}")]
    NonFinite(String),
    #[error("malformed object notation: {0}")]
    Syntax(String),
    #[error("{path}: expected {expected}")]
    Type { path: String, expected: &'static str },
    #[error("{0}: missing field")]
    Missing(String),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl CanonicalError {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        CanonicalError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }
}

/// A structured value that can be canonically encoded.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i128),
    Real(f64),
    Text(String),
    Bytes(Vec<u8>),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

/// Canonical encoding of a [`Value`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalBytes(Vec<u8>);

impl CanonicalBytes {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }

    pub fn as_str(&self) -> &str {
        // Only ever built from a String.
        std::str::from_utf8(&self.0).expect("canonical bytes are utf-8")
    }
}

/// Render a real as its big-endian IEEE-754 bit pattern.
pub fn real_hex(x: f64) -> String {
    format!("{:016x}", x.to_bits())
}

/// Encode `value` canonically. Fails on NaN or infinite reals.
pub fn canonicalize(value: &Value) -> Result<CanonicalBytes, CanonicalError> {
    let mut out = String::new();
    encode_into(value, &mut out, "$")?;
    Ok(CanonicalBytes(out.into_bytes()))
}

fn encode_into(value: &Value, out: &mut String, path: &str) -> Result<(), CanonicalError> {
    match value {
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => write!(out, "{i}").expect("write to string"),
        Value::Real(x) => {
            if !x.is_finite() {
                return Err(CanonicalError::NonFinite(path.to_string()));
            }
            out.push('"');
            out.push_str(&real_hex(*x));
            out.push('"');
        }
        Value::Text(s) => out.push_str(&serde_json::to_string(s).expect("string encodes")),
        Value::Bytes(b) => {
            out.push('"');
            out.push_str(&hex::encode(b));
            out.push('"');
        }
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                encode_into(item, out, &format!("{path}[{i}]"))?;
            }
            out.push(']');
        }
        Value::Map(map) => {
            out.push('{');
            for (i, (k, v)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string encodes"));
                out.push(':');
                encode_into(v, out, &format!("{path}.{k}"))?;
            }
            out.push('}');
        }
    }
    Ok(())
}

impl Value {
    /// Parse object notation (canonical or free-form JSON).
    pub fn parse(bytes: &[u8]) -> Result<Value, CanonicalError> {
        let json: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| CanonicalError::Syntax(e.to_string()))?;
        from_json(json)
    }

    pub fn parse_str(text: &str) -> Result<Value, CanonicalError> {
        Self::parse(text.as_bytes())
    }

    /// Parse and additionally require that `bytes` is exactly the canonical
    /// encoding of the parsed value under `decode`'s interpretation.
    pub fn parse_canonical<T: Canonical>(bytes: &[u8]) -> Result<T, CanonicalError> {
        let value = Self::parse(bytes)?;
        let decoded = T::from_value(&value, "$")?;
        let again = canonicalize(&decoded.to_value())?;
        if again.as_bytes() != bytes {
            return Err(CanonicalError::Syntax("input is not in canonical form".into()));
        }
        Ok(decoded)
    }

    /// Free-form pretty rendering for human-edited files. Reals print as
    /// decimal numbers (shortest round-trip form), byte strings as hex.
    pub fn to_pretty(&self) -> String {
        serde_json::to_string_pretty(&to_json(self)).expect("value renders")
    }

    pub fn map() -> MapBuilder {
        MapBuilder(BTreeMap::new())
    }

    pub fn text(s: impl Into<String>) -> Value {
        Value::Text(s.into())
    }

    pub fn reals(xs: &[f64]) -> Value {
        Value::List(xs.iter().map(|x| Value::Real(*x)).collect())
    }
}

fn from_json(json: serde_json::Value) -> Result<Value, CanonicalError> {
    Ok(match json {
        serde_json::Value::Null => return Err(CanonicalError::Syntax("null is not a value".into())),
        serde_json::Value::Bool(b) => Value::Bool(b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::Int(i as i128)
            } else if let Some(u) = n.as_u64() {
                Value::Int(u as i128)
            } else {
                Value::Real(n.as_f64().ok_or_else(|| CanonicalError::Syntax("bad number".into()))?)
            }
        }
        serde_json::Value::String(s) => Value::Text(s),
        serde_json::Value::Array(items) => Value::List(items.into_iter().map(from_json).collect::<Result<_, _>>()?),
        serde_json::Value::Object(map) => Value::Map(
            map.into_iter()
                .map(|(k, v)| Ok((k, from_json(v)?)))
                .collect::<Result<_, CanonicalError>>()?,
        ),
    })
}

fn to_json(value: &Value) -> serde_json::Value {
    match value {
        Value::Bool(b) => serde_json::Value::Bool(*b),
        Value::Int(i) => {
            if let Ok(v) = i64::try_from(*i) {
                serde_json::Value::from(v)
            } else if let Ok(v) = u64::try_from(*i) {
                serde_json::Value::from(v)
            } else {
                serde_json::Value::String(i.to_string())
            }
        }
        Value::Real(x) => serde_json::Number::from_f64(*x)
            .map(serde_json::Value::Number)
            .unwrap_or_else(|| serde_json::Value::String(real_hex(*x))),
        Value::Text(s) => serde_json::Value::String(s.clone()),
        Value::Bytes(b) => serde_json::Value::String(hex::encode(b)),
        Value::List(items) => serde_json::Value::Array(items.iter().map(to_json).collect()),
        Value::Map(map) => serde_json::Value::Object(map.iter().map(|(k, v)| (k.clone(), to_json(v))).collect()),
    }
}

pub struct MapBuilder(BTreeMap<String, Value>);

impl MapBuilder {
    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.0.insert(key.to_string(), value.into());
        self
    }

    pub fn build(self) -> Value {
        Value::Map(self.0)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}
impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Real(x)
    }
}
impl From<u64> for Value {
    fn from(i: u64) -> Self {
        Value::Int(i as i128)
    }
}
impl From<usize> for Value {
    fn from(i: usize) -> Self {
        Value::Int(i as i128)
    }
}
impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i as i128)
    }
}
impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.to_string())
    }
}
impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}
impl From<Vec<Value>> for Value {
    fn from(v: Vec<Value>) -> Self {
        Value::List(v)
    }
}

/// Schema-directed accessors. `path` is only used for error messages.
impl Value {
    pub fn as_map(&self, path: &str) -> Result<&BTreeMap<String, Value>, CanonicalError> {
        match self {
            Value::Map(m) => Ok(m),
            _ => Err(type_err(path, "map")),
        }
    }

    pub fn field<'a>(&'a self, path: &str, key: &str) -> Result<&'a Value, CanonicalError> {
        self.as_map(path)?
            .get(key)
            .ok_or_else(|| CanonicalError::Missing(format!("{path}.{key}")))
    }

    pub fn opt_field<'a>(&'a self, path: &str, key: &str) -> Result<Option<&'a Value>, CanonicalError> {
        Ok(self.as_map(path)?.get(key))
    }

    pub fn as_list(&self, path: &str) -> Result<&[Value], CanonicalError> {
        match self {
            Value::List(l) => Ok(l),
            _ => Err(type_err(path, "list")),
        }
    }

    pub fn as_text(&self, path: &str) -> Result<&str, CanonicalError> {
        match self {
            Value::Text(s) => Ok(s),
            _ => Err(type_err(path, "text")),
        }
    }

    pub fn as_bool(&self, path: &str) -> Result<bool, CanonicalError> {
        match self {
            Value::Bool(b) => Ok(*b),
            _ => Err(type_err(path, "boolean")),
        }
    }

    pub fn as_int(&self, path: &str) -> Result<i128, CanonicalError> {
        match self {
            Value::Int(i) => Ok(*i),
            _ => Err(type_err(path, "integer")),
        }
    }

    pub fn as_u64(&self, path: &str) -> Result<u64, CanonicalError> {
        u64::try_from(self.as_int(path)?).map_err(|_| type_err(path, "non-negative integer"))
    }

    /// Accepts a decoded real, a 16-hex-digit bit pattern, or a JSON integer.
    pub fn as_real(&self, path: &str) -> Result<f64, CanonicalError> {
        let x = match self {
            Value::Real(x) => *x,
            Value::Int(i) => *i as f64,
            Value::Text(s) if s.len() == 16 && is_lower_hex(s) => {
                f64::from_bits(u64::from_str_radix(s, 16).expect("checked hex"))
            }
            _ => return Err(type_err(path, "real")),
        };
        if !x.is_finite() {
            return Err(CanonicalError::NonFinite(path.to_string()));
        }
        Ok(x)
    }

    pub fn as_reals(&self, path: &str) -> Result<Vec<f64>, CanonicalError> {
        self.as_list(path)?
            .iter()
            .enumerate()
            .map(|(i, v)| v.as_real(&format!("{path}[{i}]")))
            .collect()
    }

    pub fn as_bytes(&self, path: &str) -> Result<Vec<u8>, CanonicalError> {
        match self {
            Value::Bytes(b) => Ok(b.clone()),
            Value::Text(s) if is_lower_hex(s) && s.len() % 2 == 0 => Ok(hex::decode(s).expect("checked hex")),
            _ => Err(type_err(path, "lowercase hex bytes")),
        }
    }
}

fn is_lower_hex(s: &str) -> bool {
    s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

fn type_err(path: &str, expected: &'static str) -> CanonicalError {
    CanonicalError::Type {
        path: path.to_string(),
        expected,
    }
}

/// Types with a fixed canonical schema.
pub trait Canonical: Sized {
    fn to_value(&self) -> Value;
    fn from_value(value: &Value, path: &str) -> Result<Self, CanonicalError>;

    fn canonical_bytes(&self) -> Result<CanonicalBytes, CanonicalError> {
        canonicalize(&self.to_value())
    }
}

impl Canonical for f64 {
    fn to_value(&self) -> Value {
        Value::Real(*self)
    }
    fn from_value(value: &Value, path: &str) -> Result<Self, CanonicalError> {
        value.as_real(path)
    }
}
