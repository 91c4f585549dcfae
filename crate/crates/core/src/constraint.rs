//! Subscription constraints and their evaluation.
//!
//! A subscription is a list of constraints combined with AND; the empty list
//! matches every publication. Each constraint names one attribute key, an
//! operator, and a comparison value. Evaluation is total — any combination of
//! constraint and publication yields a boolean, never an error:
//!
//! * A key absent from the publication fails the constraint, for every
//!   operator including `ne`.
//! * `eq`/`ne` compare within a kind; values of different kinds are never
//!   equal (so cross-kind `eq` fails and cross-kind `ne` succeeds when the
//!   key is present).
//! * `gt`/`ge`/`lt`/`le` are defined only between two numbers; any other
//!   pairing evaluates to no-match. The comparisons are strict in the IEEE
//!   sense: a publication value exactly on a `gt`/`lt` bound does not match.

use crate::value::AttributeValue;
use crate::AttrMap;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Comparison operator of a constraint, named as on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Eq,
    Ne,
    Gt,
    Ge,
    Lt,
    Le,
}

impl Operator {
    /// Wire and canonical-encoding name.
    pub fn name(self) -> &'static str {
        match self {
            Operator::Eq => "eq",
            Operator::Ne => "ne",
            Operator::Gt => "gt",
            Operator::Ge => "ge",
            Operator::Lt => "lt",
            Operator::Le => "le",
        }
    }

    /// Whether this operator orders its operands (defined only for numbers).
    pub fn is_ordered(self) -> bool {
        matches!(self, Operator::Gt | Operator::Ge | Operator::Lt | Operator::Le)
    }

    pub const ALL: [Operator; 6] = [
        Operator::Eq,
        Operator::Ne,
        Operator::Gt,
        Operator::Ge,
        Operator::Lt,
        Operator::Le,
    ];
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error for operator names not on the wire vocabulary.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown operator {0:?} (expected eq|ne|gt|ge|lt|le)")]
pub struct UnknownOperator(pub String);

impl FromStr for Operator {
    type Err = UnknownOperator;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| UnknownOperator(s.to_owned()))
    }
}

/// A single attribute constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub key: String,
    pub op: Operator,
    pub val: AttributeValue,
}

impl Constraint {
    pub fn new(key: impl Into<String>, op: Operator, val: impl Into<AttributeValue>) -> Self {
        Constraint {
            key: key.into(),
            op,
            val: val.into(),
        }
    }

    /// Structural validity: performed at registration, not at evaluation.
    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.key.is_empty() {
            return Err(ConstraintError::EmptyKey);
        }
        if self.op.is_ordered() && self.val.is_null() {
            return Err(ConstraintError::NullOrderedValue { op: self.op });
        }
        Ok(())
    }
}

/// Why a constraint was rejected at registration.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("constraint keys must be non-empty")]
    EmptyKey,
    #[error("operator {op} requires a non-null comparison value")]
    NullOrderedValue { op: Operator },
}

/// Validates every constraint of a subscription or policy.
pub fn validate_all(constraints: &[Constraint]) -> Result<(), ConstraintError> {
    constraints.iter().try_for_each(Constraint::validate)
}

fn values_equal(a: &AttributeValue, b: &AttributeValue) -> bool {
    match (a, b) {
        (AttributeValue::Text(x), AttributeValue::Text(y)) => x == y,
        (AttributeValue::Number(x), AttributeValue::Number(y)) => x == y,
        (AttributeValue::Boolean(x), AttributeValue::Boolean(y)) => x == y,
        (AttributeValue::Null, AttributeValue::Null) => true,
        _ => false,
    }
}

/// Evaluates one constraint against a flattened publication. Total: never
/// panics, never errors.
pub fn eval_constraint(constraint: &Constraint, attrs: &AttrMap) -> bool {
    let Some(actual) = attrs.get(&constraint.key) else {
        return false;
    };
    match constraint.op {
        Operator::Eq => values_equal(actual, &constraint.val),
        Operator::Ne => !values_equal(actual, &constraint.val),
        op => {
            let (AttributeValue::Number(have), AttributeValue::Number(want)) =
                (actual, &constraint.val)
            else {
                return false;
            };
            match op {
                Operator::Gt => have > want,
                Operator::Ge => have >= want,
                Operator::Lt => have < want,
                Operator::Le => have <= want,
                Operator::Eq | Operator::Ne => unreachable!("handled above"),
            }
        }
    }
}

/// Evaluates a whole subscription (AND over its constraints; empty matches
/// everything).
pub fn match_subscription(constraints: &[Constraint], attrs: &AttrMap) -> bool {
    constraints.iter().all(|c| eval_constraint(c, attrs))
}
