//! Flattening of nested JSON publications into attribute maps.
//!
//! Subscriptions constrain single dotted paths, so a published document is
//! flattened before matching: nested object fields join their path with `.`,
//! array elements use their zero-based index as a path segment, and only the
//! four primitive kinds survive as leaves. `{"box": {"lat": [50.0, 60.0]}}`
//! becomes `{"box.lat.0": 50.0, "box.lat.1": 60.0}`. Empty objects and arrays
//! contribute no attributes.
//!
//! Distinct input paths can join to the same flat key (`{"a": {"b": 1}}` vs
//! `{"a.b": 2}`); that is a hard error rather than a silent overwrite, because
//! the two documents would otherwise become indistinguishable to matching.

use crate::value::AttributeValue;
use crate::AttrMap;
use serde_json::Value;
use thiserror::Error;

/// Why a document could not be flattened.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlattenError {
    #[error("publication must be a JSON object at the top level")]
    NotAnObject,
    #[error("attribute {path:?} is not a finite number")]
    NonFiniteNumber { path: String },
    #[error("flattening produced duplicate key {key:?}")]
    KeyCollision { key: String },
}

/// Flattens a JSON document into dotted-path attributes.
///
/// An already-flat object comes back with the same keys and values. The input
/// is not mutated; numbers are normalized per [`AttributeValue::number`].
pub fn flatten(doc: &Value) -> Result<AttrMap, FlattenError> {
    let Value::Object(fields) = doc else {
        return Err(FlattenError::NotAnObject);
    };
    let mut out = AttrMap::with_capacity(fields.len());
    for (key, child) in fields {
        walk(key.clone(), child, &mut out)?;
    }
    Ok(out)
}

fn walk(path: String, node: &Value, out: &mut AttrMap) -> Result<(), FlattenError> {
    match node {
        Value::Object(fields) => {
            for (key, child) in fields {
                walk(format!("{path}.{key}"), child, out)?;
            }
            Ok(())
        }
        Value::Array(items) => {
            for (idx, child) in items.iter().enumerate() {
                walk(format!("{path}.{idx}"), child, out)?;
            }
            Ok(())
        }
        Value::Null => insert(path, AttributeValue::Null, out),
        Value::Bool(b) => insert(path, AttributeValue::Boolean(*b), out),
        Value::String(s) => insert(path, AttributeValue::Text(s.clone()), out),
        Value::Number(n) => {
            let parsed = n
                .as_f64()
                .ok_or(())
                .and_then(|f| AttributeValue::number(f).map_err(|_| ()));
            match parsed {
                Ok(v) => insert(path, v, out),
                Err(()) => Err(FlattenError::NonFiniteNumber { path }),
            }
        }
    }
}

fn insert(path: String, value: AttributeValue, out: &mut AttrMap) -> Result<(), FlattenError> {
    if out.contains_key(&path) {
        return Err(FlattenError::KeyCollision { key: path });
    }
    out.insert(path, value);
    Ok(())
}
