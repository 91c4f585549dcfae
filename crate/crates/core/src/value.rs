//! Primitive attribute values.
//!
//! After flattening, every attribute of a publication is one of four kinds:
//! text, number, boolean, or null. All JSON numbers are treated as IEEE 754
//! doubles. Non-finite numbers are rejected at ingestion (JSON itself cannot
//! express them, but programmatic construction is guarded too), and negative
//! zero is normalized to positive zero so that numerically equal values have
//! one canonical rendering.

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use thiserror::Error;

/// Kind tag of an [`AttributeValue`]. Values of different kinds never compare
/// equal, and the ordered operators are defined only between numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Text,
    Number,
    Boolean,
    Null,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueKind::Text => "text",
            ValueKind::Number => "number",
            ValueKind::Boolean => "boolean",
            ValueKind::Null => "null",
        })
    }
}

/// Error produced when a number cannot become an attribute value.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValueError {
    #[error("attribute numbers must be finite")]
    NonFinite,
}

/// A single primitive attribute value.
#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Text(String),
    Number(f64),
    Boolean(bool),
    Null,
}

impl AttributeValue {
    /// Builds a numeric value, rejecting NaN and infinities and normalizing
    /// `-0.0` to `0.0`.
    pub fn number(f: f64) -> Result<Self, ValueError> {
        if !f.is_finite() {
            return Err(ValueError::NonFinite);
        }
        // -0.0 == 0.0 numerically but renders differently; keep one form so
        // equal constraint sets produce identical canonical bytes.
        Ok(AttributeValue::Number(if f == 0.0 { 0.0 } else { f }))
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            AttributeValue::Text(_) => ValueKind::Text,
            AttributeValue::Number(_) => ValueKind::Number,
            AttributeValue::Boolean(_) => ValueKind::Boolean,
            AttributeValue::Null => ValueKind::Null,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttributeValue::Number(f) => Some(*f),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, AttributeValue::Null)
    }

    /// The JSON form of this value.
    pub fn to_json(&self) -> serde_json::Value {
        match self {
            AttributeValue::Text(s) => serde_json::Value::String(s.clone()),
            AttributeValue::Number(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .expect("attribute numbers are finite"),
            AttributeValue::Boolean(b) => serde_json::Value::Bool(*b),
            AttributeValue::Null => serde_json::Value::Null,
        }
    }
}

impl From<&str> for AttributeValue {
    fn from(s: &str) -> Self {
        AttributeValue::Text(s.to_owned())
    }
}

impl From<f64> for AttributeValue {
    /// Convenience for literals; panics on non-finite input, which a literal
    /// never is. Use [`AttributeValue::number`] for untrusted data.
    fn from(f: f64) -> Self {
        AttributeValue::number(f).expect("numeric literals must be finite")
    }
}

impl From<bool> for AttributeValue {
    fn from(b: bool) -> Self {
        AttributeValue::Boolean(b)
    }
}

impl Serialize for AttributeValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            AttributeValue::Text(s) => serializer.serialize_str(s),
            AttributeValue::Number(f) => serializer.serialize_f64(*f),
            AttributeValue::Boolean(b) => serializer.serialize_bool(*b),
            AttributeValue::Null => serializer.serialize_unit(),
        }
    }
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = AttributeValue;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a primitive attribute value (string, number, boolean or null)")
    }

    fn visit_str<E: de::Error>(self, s: &str) -> Result<Self::Value, E> {
        Ok(AttributeValue::Text(s.to_owned()))
    }

    fn visit_string<E: de::Error>(self, s: String) -> Result<Self::Value, E> {
        Ok(AttributeValue::Text(s))
    }

    fn visit_bool<E: de::Error>(self, b: bool) -> Result<Self::Value, E> {
        Ok(AttributeValue::Boolean(b))
    }

    fn visit_i64<E: de::Error>(self, n: i64) -> Result<Self::Value, E> {
        self.visit_f64(n as f64)
    }

    fn visit_u64<E: de::Error>(self, n: u64) -> Result<Self::Value, E> {
        self.visit_f64(n as f64)
    }

    fn visit_f64<E: de::Error>(self, n: f64) -> Result<Self::Value, E> {
        AttributeValue::number(n).map_err(|e| E::custom(e))
    }

    fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
        Ok(AttributeValue::Null)
    }

    fn visit_none<E: de::Error>(self) -> Result<Self::Value, E> {
        Ok(AttributeValue::Null)
    }
}

impl<'de> Deserialize<'de> for AttributeValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_any(ValueVisitor)
    }
}
