//! Canonical byte encoding of constraint sets.
//!
//! Partition routing hashes the *meaning* of a subscription, so every node —
//! matcher, load balancer, SDK, benchmark — must encode a constraint set to
//! the same bytes. The format is normative and bit-exact:
//!
//! * Constraints are sorted by `(key, operator name, rendered value)`,
//!   comparing as raw bytes. Duplicates are kept: equal constraint multisets
//!   encode identically, and only those.
//! * Each constraint is rendered as `key 0x1F opname 0x1F value 0x1E`.
//! * Values render as: text raw UTF-8, booleans `true`/`false`, null `null`,
//!   numbers in the shortest decimal form that round-trips the double
//!   (`50.0` renders as `50`, `51.0504` as `51.0504`).
//!
//! Changing any detail here changes every partition assignment in a cluster;
//! treat the golden tests as a compatibility contract.

use crate::constraint::Constraint;
use crate::value::AttributeValue;

/// Separator between the fields of one rendered constraint.
pub const UNIT_SEPARATOR: u8 = 0x1f;
/// Terminator after each rendered constraint.
pub const RECORD_SEPARATOR: u8 = 0x1e;

/// Renders one comparison value in its canonical text form.
pub fn render_value(val: &AttributeValue) -> String {
    match val {
        AttributeValue::Text(s) => s.clone(),
        // `{}` on f64 prints the shortest decimal that round-trips.
        AttributeValue::Number(f) => format!("{f}"),
        AttributeValue::Boolean(b) => b.to_string(),
        AttributeValue::Null => "null".to_owned(),
    }
}

/// Encodes a constraint set to its canonical bytes.
pub fn canonicalize(constraints: &[Constraint]) -> Vec<u8> {
    let mut rendered: Vec<(&str, &'static str, String)> = constraints
        .iter()
        .map(|c| (c.key.as_str(), c.op.name(), render_value(&c.val)))
        .collect();
    rendered.sort();

    let mut out = Vec::with_capacity(rendered.iter().map(|(k, o, v)| k.len() + o.len() + v.len() + 3).sum());
    for (key, op, val) in &rendered {
        out.extend_from_slice(key.as_bytes());
        out.push(UNIT_SEPARATOR);
        out.extend_from_slice(op.as_bytes());
        out.push(UNIT_SEPARATOR);
        out.extend_from_slice(val.as_bytes());
        out.push(RECORD_SEPARATOR);
    }
    out
}
