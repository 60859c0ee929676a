//! WHERE-clause predicates evaluated on a single row.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::RowValue;

/// Comparison operator of a [`Predicate::Cmp`] node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "!=")]
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ge, CmpOp::Gt, CmpOp::Ne];

    pub fn apply(self, lhs: i64, rhs: i64) -> bool {
        match self {
            CmpOp::Lt => lhs < rhs,
            CmpOp::Le => lhs <= rhs,
            CmpOp::Eq => lhs == rhs,
            CmpOp::Ge => lhs >= rhs,
            CmpOp::Gt => lhs > rhs,
            CmpOp::Ne => lhs != rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
            CmpOp::Ne => "!=",
        }
    }
}

/// A predicate over one row, identified by its key and holding its value.
///
/// JSON encoding: `true`/`false`, `{"cmp": "<=", "value": 0}`,
/// `{"key_eq": "x1"}`, `{"and": [..]}`, `{"or": [..]}`, `{"not": p}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Predicate {
    Literal(bool),
    Cmp { cmp: CmpOp, value: i64 },
    KeyEq { key_eq: String },
    And { and: Vec<Predicate> },
    Or { or: Vec<Predicate> },
    Not { not: Box<Predicate> },
}

impl Predicate {
    pub fn cmp(op: CmpOp, value: i64) -> Self {
        Predicate::Cmp { cmp: op, value }
    }

    pub fn key_eq(key: impl Into<String>) -> Self {
        Predicate::KeyEq { key_eq: key.into() }
    }

    pub fn and(parts: Vec<Predicate>) -> Self {
        Predicate::And { and: parts }
    }

    pub fn or(parts: Vec<Predicate>) -> Self {
        Predicate::Or { or: parts }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Predicate) -> Self {
        Predicate::Not { not: Box::new(inner) }
    }

    /// Evaluates the predicate on the row `(key, value)`.
    ///
    /// Deleted and undefined rows satisfy no predicate, not even `true`
    /// or a negation.
    pub fn eval(&self, key: &str, value: RowValue) -> bool {
        match value {
            RowValue::Present(v) => self.eval_present(key, v),
            RowValue::Deleted | RowValue::Undefined => false,
        }
    }

    fn eval_present(&self, key: &str, v: i64) -> bool {
        match self {
            Predicate::Literal(b) => *b,
            Predicate::Cmp { cmp, value } => cmp.apply(v, *value),
            Predicate::KeyEq { key_eq } => key_eq == key,
            Predicate::And { and } => and.iter().all(|p| p.eval_present(key, v)),
            Predicate::Or { or } => or.iter().any(|p| p.eval_present(key, v)),
            Predicate::Not { not } => !not.eval_present(key, v),
        }
    }

    /// Keys named by `key_eq` nodes.
    pub fn mentioned_keys(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Predicate::KeyEq { key_eq } => out.push(key_eq),
            Predicate::And { and: ps } | Predicate::Or { or: ps } => {
                ps.iter().for_each(|p| p.collect_keys(out))
            }
            Predicate::Not { not } => not.collect_keys(out),
            Predicate::Literal(_) | Predicate::Cmp { .. } => {}
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, ps: &[Predicate], sep: &str| {
            write!(f, "(")?;
            for (i, p) in ps.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{p}")?;
            }
            write!(f, ")")
        };
        match self {
            Predicate::Literal(b) => write!(f, "{b}"),
            Predicate::Cmp { cmp, value } => write!(f, "v {} {value}", cmp.symbol()),
            Predicate::KeyEq { key_eq } => write!(f, "key = {key_eq}"),
            Predicate::And { and } => join(f, and, "and"),
            Predicate::Or { or } => join(f, or, "or"),
            Predicate::Not { not } => write!(f, "not {not}"),
        }
    }
}
