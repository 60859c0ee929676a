//! Serializable, unvalidated form of a history, keyed by names.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{IsolationLevel, Predicate};

/// Top-level document tag of a history file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum HistoryTag {
    #[default]
    #[serde(rename = "history")]
    History,
}

/// Initial value of a key, written by the synthetic `init` transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitialValue {
    Value(i64),
    Absent,
}

impl Serialize for InitialValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InitialValue::Value(v) => s.serialize_i64(*v),
            InitialValue::Absent => s.serialize_str("absent"),
        }
    }
}

impl<'de> Deserialize<'de> for InitialValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = InitialValue;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an integer or the string \"absent\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<InitialValue, E> {
                Ok(InitialValue::Value(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<InitialValue, E> {
                i64::try_from(v)
                    .map(InitialValue::Value)
                    .map_err(|_| E::custom("integer out of range"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<InitialValue, E> {
                if v == "absent" {
                    Ok(InitialValue::Absent)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Completion status of a recorded transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TxnStatus {
    Committed,
    Aborted,
    /// Accepted by the parser so that it can be rejected with a precise error.
    Pending,
}

/// A database operation as it appears in a history file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum Operation {
    Select {
        #[serde(rename = "where")]
        pred: Predicate,
    },
    Insert {
        rows: BTreeMap<String, i64>,
    },
    Delete {
        #[serde(rename = "where")]
        pred: Predicate,
    },
    Update {
        #[serde(rename = "where")]
        pred: Predicate,
        set: BTreeMap<String, i64>,
    },
}

impl Operation {
    pub fn is_read(&self) -> bool {
        !matches!(self, Operation::Insert { .. })
    }

    pub fn is_write(&self) -> bool {
        !matches!(self, Operation::Select { .. })
    }

    pub fn predicate(&self) -> Option<&Predicate> {
        match self {
            Operation::Select { pred } | Operation::Delete { pred } | Operation::Update { pred, .. } => Some(pred),
            Operation::Insert { .. } => None,
        }
    }
}

/// Names an event: the transaction id plus the position of the operation
/// in that transaction's event list.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventId {
    pub txn: String,
    pub pos: usize,
}

impl EventId {
    pub fn new(txn: impl Into<String>, pos: usize) -> Self {
        EventId { txn: txn.into(), pos }
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.txn, self.pos)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTransaction {
    pub id: String,
    pub iso: IsolationLevel,
    pub status: TxnStatus,
    pub events: Vec<Operation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSession {
    pub id: String,
    pub transactions: Vec<RawTransaction>,
}

/// A write-read edge: `to_event` reads `key` from `from_event`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWr {
    pub key: String,
    pub from_event: EventId,
    pub to_event: EventId,
}

/// A history as stored on disk. Convert with [`super::History::from_raw`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHistory {
    pub kind: HistoryTag,
    pub keys: Vec<String>,
    pub initial_state: BTreeMap<String, InitialValue>,
    pub sessions: Vec<RawSession>,
    #[serde(default)]
    pub wr: Vec<RawWr>,
}

impl RawHistory {
    /// Starts a history over `keys`, all initially set to `0`.
    pub fn new<S: AsRef<str>>(keys: &[S]) -> Self {
        let keys: Vec<String> = keys.iter().map(|k| k.as_ref().to_string()).collect();
        let initial_state = keys.iter().map(|k| (k.clone(), InitialValue::Value(0))).collect();
        RawHistory { kind: HistoryTag::History, keys, initial_state, sessions: Vec::new(), wr: Vec::new() }
    }

    pub fn set_initial(&mut self, key: &str, value: InitialValue) -> &mut Self {
        self.initial_state.insert(key.to_string(), value);
        self
    }

    /// Appends a committed transaction to `session`, creating the session on
    /// first use.
    pub fn push_txn(
        &mut self,
        session: &str,
        id: &str,
        iso: IsolationLevel,
        events: Vec<Operation>,
    ) -> &mut Self {
        self.push_txn_with_status(session, id, iso, TxnStatus::Committed, events)
    }

    pub fn push_txn_with_status(
        &mut self,
        session: &str,
        id: &str,
        iso: IsolationLevel,
        status: TxnStatus,
        events: Vec<Operation>,
    ) -> &mut Self {
        let txn = RawTransaction { id: id.to_string(), iso, status, events };
        match self.sessions.iter_mut().find(|s| s.id == session) {
            Some(s) => s.transactions.push(txn),
            None => self
                .sessions
                .push(RawSession { id: session.to_string(), transactions: vec![txn] }),
        }
        self
    }

    /// Adds a write-read edge; `from`/`to` are `(txn id, position)`.
    pub fn push_wr(&mut self, key: &str, from: (&str, usize), to: (&str, usize)) -> &mut Self {
        self.wr.push(RawWr {
            key: key.to_string(),
            from_event: EventId::new(from.0, from.1),
            to_event: EventId::new(to.0, to.1),
        });
        self
    }

    pub fn transactions(&self) -> impl Iterator<Item = &RawTransaction> {
        self.sessions.iter().flat_map(|s| s.transactions.iter())
    }

    pub fn transactions_mut(&mut self) -> impl Iterator<Item = &mut RawTransaction> {
        self.sessions.iter_mut().flat_map(|s| s.transactions.iter_mut())
    }

    /// Puts the edge list into canonical order.
    pub fn canonicalize(&mut self) {
        self.wr.sort();
        self.wr.dedup();
    }
}

/// Shorthand constructors for operations.
pub mod ops {
    use super::*;

    pub fn select(pred: Predicate) -> Operation {
        Operation::Select { pred }
    }

    pub fn insert(rows: &[(&str, i64)]) -> Operation {
        Operation::Insert { rows: rows.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    pub fn delete(pred: Predicate) -> Operation {
        Operation::Delete { pred }
    }

    pub fn update(pred: Predicate, set: &[(&str, i64)]) -> Operation {
        Operation::Update { pred, set: set.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }
}
