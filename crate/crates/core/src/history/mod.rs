//! Transactions, histories, and the semantic functions over them.
//!
//! A [`History`] is built from a [`RawHistory`] (names, as stored on disk)
//! and is immutable afterwards. Construction validates every structural
//! requirement and precomputes the value written by each event on each key,
//! so all queries below are lookups.

mod predicate;
mod raw;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use predicate::{CmpOp, Predicate};
pub use raw::{
    ops, EventId, HistoryTag, InitialValue, Operation, RawHistory, RawSession, RawTransaction,
    RawWr, TxnStatus,
};

use crate::relation::find_cycle;

/// Index of a transaction inside a [`History`]; `0` is always `init`.
pub type TxnIdx = usize;
/// Index of a key inside a [`History`]'s key universe.
pub type KeyIdx = usize;
/// Index of a read event in [`History::reads`].
pub type ReadIdx = usize;

pub const INIT: TxnIdx = 0;
pub const INIT_ID: &str = "init";

/// Value of a row as seen through a write.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowValue {
    Present(i64),
    /// The row was deleted.
    Deleted,
    /// The event does not write this key.
    Undefined,
}

impl RowValue {
    pub fn is_defined(self) -> bool {
        self != RowValue::Undefined
    }
}

impl fmt::Display for RowValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowValue::Present(v) => write!(f, "{v}"),
            RowValue::Deleted => write!(f, "deleted"),
            RowValue::Undefined => write!(f, "undefined"),
        }
    }
}

/// Isolation level of one transaction, from strongest to weakest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IsolationLevel {
    #[serde(rename = "SER")]
    Ser,
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "PC")]
    Pc,
    #[serde(rename = "RA")]
    Ra,
    #[serde(rename = "RC")]
    Rc,
}

impl IsolationLevel {
    pub const ALL: [IsolationLevel; 5] = [
        IsolationLevel::Ser,
        IsolationLevel::Si,
        IsolationLevel::Pc,
        IsolationLevel::Ra,
        IsolationLevel::Rc,
    ];

    /// Levels whose axioms never mention the commit order.
    pub fn is_saturable(self) -> bool {
        matches!(self, IsolationLevel::Ra | IsolationLevel::Rc)
    }

    /// Whether every execution allowed by `self` is allowed by `other`.
    pub fn is_at_least_as_strong_as(self, other: IsolationLevel) -> bool {
        self <= other
    }

    pub fn name(self) -> &'static str {
        match self {
            IsolationLevel::Ser => "SER",
            IsolationLevel::Si => "SI",
            IsolationLevel::Pc => "PC",
            IsolationLevel::Ra => "RA",
            IsolationLevel::Rc => "RC",
        }
    }
}

impl fmt::Display for IsolationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IsolationLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IsolationLevel::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown isolation level `{s}` (expected SER, SI, PC, RA or RC)"))
    }
}

/// An event, named by its transaction and position in that transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventRef {
    pub txn: TxnIdx,
    pub pos: usize,
}

impl EventRef {
    pub fn new(txn: TxnIdx, pos: usize) -> Self {
        EventRef { txn, pos }
    }
}

/// An operation with its keys resolved to indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    Select(Predicate),
    /// Only `init` may insert [`RowValue::Deleted`].
    Insert(Vec<(KeyIdx, RowValue)>),
    Delete(Predicate),
    Update(Predicate, Vec<(KeyIdx, i64)>),
}

impl Op {
    pub fn is_read(&self) -> bool {
        !matches!(self, Op::Insert(_))
    }

    pub fn is_write(&self) -> bool {
        !matches!(self, Op::Select(_))
    }

    pub fn predicate(&self) -> Option<&Predicate> {
        match self {
            Op::Select(p) | Op::Delete(p) | Op::Update(p, _) => Some(p),
            Op::Insert(_) => None,
        }
    }
}

/// The value `op` writes on key `x` (named `key`), given the value of the
/// write it reads `x` from, if any.
pub fn written_value(op: &Op, key: &str, x: KeyIdx, source: Option<RowValue>) -> RowValue {
    let guard = |p: &Predicate| source.is_some_and(|v| p.eval(key, v));
    match op {
        Op::Select(_) => RowValue::Undefined,
        Op::Insert(rows) => {
            rows.iter().find(|(k, _)| *k == x).map_or(RowValue::Undefined, |(_, v)| *v)
        }
        Op::Delete(p) => {
            if guard(p) {
                RowValue::Deleted
            } else {
                RowValue::Undefined
            }
        }
        Op::Update(p, set) => match set.iter().find(|(k, _)| *k == x) {
            Some((_, v)) if guard(p) => RowValue::Present(*v),
            _ => RowValue::Undefined,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transaction {
    pub id: String,
    pub iso: IsolationLevel,
    pub status: TxnStatus,
    /// `None` for `init`.
    pub session: Option<usize>,
    pub events: Vec<Op>,
}

impl Transaction {
    pub fn is_aborted(&self) -> bool {
        self.status == TxnStatus::Aborted
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub id: String,
    pub txns: Vec<TxnIdx>,
}

/// A write-read edge on `key`: `to` reads `key` from `from`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WrEdge {
    pub key: KeyIdx,
    pub from: EventRef,
    pub to: EventRef,
}

/// A structural problem that makes a document not a history.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("key `{0}` is declared twice")]
    DuplicateKey(String),
    #[error("unknown key `{key}` in {context}")]
    UnknownKey { key: String, context: String },
    #[error("key `{0}` has no initial value")]
    MissingInitialValue(String),
    #[error("transaction id `{0}` is reserved")]
    ReservedId(String),
    #[error("transaction id `{0}` is used twice")]
    DuplicateTransaction(String),
    #[error("session id `{0}` is used twice")]
    DuplicateSession(String),
    #[error("transaction `{0}` is pending; only committed or aborted transactions can be checked")]
    Pending(String),
    #[error("event {0} does not exist")]
    UnknownEvent(EventId),
    #[error("wr edge on `{key}` targets {event}, which is not a read")]
    NotARead { key: String, event: EventId },
    #[error("wr edge on `{key}` starts at {event}, which is not a write")]
    NotAWrite { key: String, event: EventId },
    #[error("wr edge on `{key}` from {from} to {to} stays inside one transaction")]
    IntraTransaction { key: String, from: EventId, to: EventId },
    #[error("read {read} has several wr sources on `{key}`")]
    MultipleSources { key: String, read: EventId },
    #[error("read {read} reads `{key}` from aborted write {from}")]
    ReadsFromAborted { key: String, from: EventId, read: EventId },
    #[error("read {read} reads `{key}` locally but also has a wr source")]
    LocalReadWithSource { key: String, read: EventId },
    #[error("session order and wr form a cycle through {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("transaction `{txn}` writes `{key}` more than once")]
    MultipleWrites { txn: String, key: String },
    #[error("read {read} reads `{key}` from {from}, which does not write it")]
    DanglingWrite { key: String, from: EventId, read: EventId },
}

/// Every problem found while building a history.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("invalid history: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct InvalidHistory(pub Vec<HistoryError>);

/// Index-resolved pieces of a history before validation.
#[derive(Clone, Debug)]
struct Parts {
    keys: Vec<String>,
    txns: Vec<Transaction>,
    sessions: Vec<Session>,
    wr: Vec<WrEdge>,
}

/// A validated history. See the module documentation.
#[derive(Clone, Debug)]
pub struct History {
    keys: Vec<String>,
    txns: Vec<Transaction>,
    sessions: Vec<Session>,
    reads: Vec<EventRef>,
    read_slot: Vec<Vec<Option<ReadIdx>>>,
    wr: Vec<Vec<Option<EventRef>>>,
    values: Vec<Vec<Vec<RowValue>>>,
    writer_pos: Vec<Vec<Option<usize>>>,
    so_pred: Vec<FixedBitSet>,
    so_wr_pred: Vec<FixedBitSet>,
    rc_visible: Vec<FixedBitSet>,
    write_keys: Vec<FixedBitSet>,
    writers: Vec<FixedBitSet>,
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.keys == other.keys
            && self.txns == other.txns
            && self.sessions == other.sessions
            && self.wr == other.wr
    }
}

impl Eq for History {}

impl History {
    /// Validates `raw` and builds the history.
    pub fn from_raw(raw: &RawHistory) -> Result<History, InvalidHistory> {
        let parts = resolve(raw)?;
        build(parts)
    }

    /// Converts back to the on-disk form, with edges in canonical order.
    pub fn to_raw(&self) -> RawHistory {
        let init_rows = match &self.txns[INIT].events[..] {
            [Op::Insert(rows)] => rows.clone(),
            _ => unreachable!("init is a single insert"),
        };
        let initial_state = init_rows
            .iter()
            .map(|&(k, v)| {
                let v = match v {
                    RowValue::Present(v) => InitialValue::Value(v),
                    _ => InitialValue::Absent,
                };
                (self.keys[k].clone(), v)
            })
            .collect();
        let sessions = self
            .sessions
            .iter()
            .map(|s| RawSession {
                id: s.id.clone(),
                transactions: s.txns.iter().map(|&t| self.raw_transaction(t)).collect(),
            })
            .collect();
        let wr = self
            .wr_edges()
            .into_iter()
            .map(|e| RawWr {
                key: self.keys[e.key].clone(),
                from_event: self.event_id(e.from),
                to_event: self.event_id(e.to),
            })
            .collect();
        RawHistory { kind: HistoryTag::History, keys: self.keys.clone(), initial_state, sessions, wr }
    }

    fn raw_transaction(&self, t: TxnIdx) -> RawTransaction {
        let txn = &self.txns[t];
        let names = |pairs: &[(KeyIdx, i64)]| -> BTreeMap<String, i64> {
            pairs.iter().map(|&(k, v)| (self.keys[k].clone(), v)).collect()
        };
        let events = txn
            .events
            .iter()
            .map(|op| match op {
                Op::Select(p) => Operation::Select { pred: p.clone() },
                Op::Insert(rows) => Operation::Insert {
                    rows: rows
                        .iter()
                        .map(|&(k, v)| match v {
                            RowValue::Present(v) => (self.keys[k].clone(), v),
                            _ => unreachable!("only init inserts deleted rows"),
                        })
                        .collect(),
                },
                Op::Delete(p) => Operation::Delete { pred: p.clone() },
                Op::Update(p, set) => Operation::Update { pred: p.clone(), set: names(set) },
            })
            .collect();
        RawTransaction { id: txn.id.clone(), iso: txn.iso, status: txn.status, events }
    }

    /// The same history with `edges` added to wr, revalidated.
    pub fn with_added_wr(&self, edges: &[WrEdge]) -> Result<History, InvalidHistory> {
        let mut wr = self.wr_edges();
        wr.extend_from_slice(edges);
        build(Parts {
            keys: self.keys.clone(),
            txns: self.txns.clone(),
            sessions: self.sessions.clone(),
            wr,
        })
    }

    /// The same transactions and sessions with every wr edge replaced.
    pub fn with_wr(&self, edges: Vec<WrEdge>) -> Result<History, InvalidHistory> {
        build(Parts {
            keys: self.keys.clone(),
            txns: self.txns.clone(),
            sessions: self.sessions.clone(),
            wr: edges,
        })
    }

    /// The same history with transaction `t` running at `iso`.
    pub fn with_isolation(&self, t: TxnIdx, iso: IsolationLevel) -> History {
        let mut h = self.clone();
        h.txns[t].iso = iso;
        h
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn key_name(&self, x: KeyIdx) -> &str {
        &self.keys[x]
    }

    pub fn key_index(&self, name: &str) -> Option<KeyIdx> {
        self.keys.iter().position(|k| k == name)
    }

    pub fn key_count(&self) -> usize {
        self.keys.len()
    }

    /// Number of transactions, `init` included.
    pub fn txn_count(&self) -> usize {
        self.txns.len()
    }

    pub fn txn(&self, t: TxnIdx) -> &Transaction {
        &self.txns[t]
    }

    pub fn txns(&self) -> &[Transaction] {
        &self.txns
    }

    pub fn txn_index(&self, id: &str) -> Option<TxnIdx> {
        self.txns.iter().position(|t| t.id == id)
    }

    pub fn iso(&self, t: TxnIdx) -> IsolationLevel {
        self.txns[t].iso
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    pub fn op(&self, e: EventRef) -> &Op {
        &self.txns[e.txn].events[e.pos]
    }

    pub fn event_id(&self, e: EventRef) -> EventId {
        EventId::new(self.txns[e.txn].id.clone(), e.pos)
    }

    pub fn event_ref(&self, id: &EventId) -> Option<EventRef> {
        let t = self.txn_index(&id.txn)?;
        (id.pos < self.txns[t].events.len()).then_some(EventRef::new(t, id.pos))
    }

    /// All read events, ordered by transaction index then position.
    pub fn reads(&self) -> &[EventRef] {
        &self.reads
    }

    pub fn read_index(&self, e: EventRef) -> Option<ReadIdx> {
        self.read_slot.get(e.txn)?.get(e.pos).copied().flatten()
    }

    /// The write event that read `r` reads `x` from.
    pub fn wr_source(&self, r: ReadIdx, x: KeyIdx) -> Option<EventRef> {
        self.wr[r][x]
    }

    /// The transaction that read `r` reads `x` from.
    pub fn wr_source_txn(&self, r: ReadIdx, x: KeyIdx) -> Option<TxnIdx> {
        self.wr[r][x].map(|e| e.txn)
    }

    /// Every wr edge, ordered by reader, then key.
    pub fn wr_edges(&self) -> Vec<WrEdge> {
        let mut out = Vec::new();
        for (ri, row) in self.wr.iter().enumerate() {
            for (x, src) in row.iter().enumerate() {
                if let Some(from) = src {
                    out.push(WrEdge { key: x, from: *from, to: self.reads[ri] });
                }
            }
        }
        out
    }

    /// The value event `w` writes on `x`, or `Undefined` if it does not.
    pub fn value_wr(&self, w: EventRef, x: KeyIdx) -> RowValue {
        self.values[w.txn][w.pos][x]
    }

    /// Whether `t` is committed and some event of `t` writes `x`.
    pub fn writes(&self, t: TxnIdx, x: KeyIdx) -> bool {
        self.write_keys[t].contains(x)
    }

    /// The value written on `x` by the last writer of `x` in `t`.
    pub fn txn_value(&self, t: TxnIdx, x: KeyIdx) -> Option<RowValue> {
        if !self.writes(t, x) {
            return None;
        }
        self.writer_pos[t][x].map(|p| self.values[t][p][x])
    }

    /// The event of `t` writing `x`, ignoring whether `t` aborted.
    pub fn writer_event(&self, t: TxnIdx, x: KeyIdx) -> Option<EventRef> {
        self.writer_pos[t][x].map(|p| EventRef::new(t, p))
    }

    /// Whether an earlier event of the reading transaction writes `x`.
    pub fn reads_locally(&self, r: EventRef, x: KeyIdx) -> bool {
        self.writer_pos[r.txn][x].is_some_and(|p| p < r.pos)
    }

    /// Read/key pairs without a wr source that do not read locally.
    pub fn missing_pairs(&self) -> Vec<(ReadIdx, KeyIdx)> {
        let mut out = Vec::new();
        for (ri, &r) in self.reads.iter().enumerate() {
            for x in 0..self.keys.len() {
                if self.wr[ri][x].is_none() && !self.reads_locally(r, x) {
                    out.push((ri, x));
                }
            }
        }
        out
    }

    pub fn is_full(&self) -> bool {
        self.missing_pairs().is_empty()
    }

    /// Keys written by `t` (empty if `t` aborted).
    pub fn write_keys(&self, t: TxnIdx) -> &FixedBitSet {
        &self.write_keys[t]
    }

    /// Transactions writing `x`.
    pub fn writers(&self, x: KeyIdx) -> &FixedBitSet {
        &self.writers[x]
    }

    /// Whether `a` precedes `b` in session order.
    pub fn so(&self, a: TxnIdx, b: TxnIdx) -> bool {
        self.so_pred[b].contains(a)
    }

    pub fn so_predecessors(&self, t: TxnIdx) -> &FixedBitSet {
        &self.so_pred[t]
    }

    /// Transactions `t'` with `(t', t)` in session order or wr.
    pub fn so_wr_predecessors(&self, t: TxnIdx) -> &FixedBitSet {
        &self.so_wr_pred[t]
    }

    /// Transactions that precede the transaction of read `r` in session
    /// order, or that some read up to and including `r` reads from.
    pub fn rc_visible(&self, r: ReadIdx) -> &FixedBitSet {
        &self.rc_visible[r]
    }

    /// Session index and position within the session; `None` for `init`.
    pub fn session_position(&self, t: TxnIdx) -> Option<(usize, usize)> {
        let s = self.txns[t].session?;
        Some((s, self.sessions[s].txns.iter().position(|&u| u == t).unwrap()))
    }

    /// Whether any transaction runs at `iso`.
    pub fn uses_level(&self, iso: IsolationLevel) -> bool {
        self.txns.iter().skip(1).any(|t| t.iso == iso)
    }

    /// The relation so ∪ wr lifted to transactions, not closed.
    pub fn so_wr_pairs(&self) -> Vec<(TxnIdx, TxnIdx)> {
        let mut out = Vec::new();
        for (b, row) in self.so_wr_pred.iter().enumerate() {
            out.extend(row.ones().map(|a| (a, b)));
        }
        out
    }
}

/// Whether `full` is a full extension of `client` whose added edges all
/// carry values the reading predicate rejects.
pub fn is_witness(full: &History, client: &History) -> bool {
    if full.keys != client.keys || full.txns != client.txns || full.sessions != client.sessions {
        return false;
    }
    if !full.is_full() {
        return false;
    }
    for (ri, &r) in client.reads.iter().enumerate() {
        for x in 0..client.keys.len() {
            match (client.wr[ri][x], full.wr[ri][x]) {
                (Some(a), Some(b)) if a == b => {}
                (Some(_), _) => return false,
                (None, None) => {}
                (None, Some(w)) => {
                    let pred = full.op(r).predicate().expect("reads carry a predicate");
                    if pred.eval(&full.keys[x], full.value_wr(w, x)) {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Whether every missing wr edge of `client` can be filled by a write that
/// deletes the key.
pub fn is_partial_observation(client: &History) -> bool {
    client.missing_pairs().into_iter().all(|(ri, x)| {
        let reader = client.reads[ri].txn;
        client
            .writers(x)
            .ones()
            .any(|t| t != reader && client.txn_value(t, x) == Some(RowValue::Deleted))
    })
}

fn resolve(raw: &RawHistory) -> Result<Parts, InvalidHistory> {
    let mut errors = Vec::new();
    let mut key_index: HashMap<&str, KeyIdx> = HashMap::new();
    for (i, k) in raw.keys.iter().enumerate() {
        if key_index.insert(k.as_str(), i).is_some() {
            errors.push(HistoryError::DuplicateKey(k.clone()));
        }
    }
    for k in raw.initial_state.keys() {
        if !key_index.contains_key(k.as_str()) {
            errors.push(HistoryError::UnknownKey { key: k.clone(), context: "initial_state".into() });
        }
    }
    let mut init_rows = Vec::new();
    for (x, k) in raw.keys.iter().enumerate() {
        match raw.initial_state.get(k) {
            Some(InitialValue::Value(v)) => init_rows.push((x, RowValue::Present(*v))),
            Some(InitialValue::Absent) => init_rows.push((x, RowValue::Deleted)),
            None => errors.push(HistoryError::MissingInitialValue(k.clone())),
        }
    }
    let mut txns = vec![Transaction {
        id: INIT_ID.to_string(),
        iso: IsolationLevel::Ser,
        status: TxnStatus::Committed,
        session: None,
        events: vec![Op::Insert(init_rows)],
    }];
    let mut txn_index: HashMap<&str, TxnIdx> = HashMap::new();
    let mut session_ids: HashMap<&str, ()> = HashMap::new();
    let mut sessions = Vec::new();
    for (s, rs) in raw.sessions.iter().enumerate() {
        if session_ids.insert(rs.id.as_str(), ()).is_some() {
            errors.push(HistoryError::DuplicateSession(rs.id.clone()));
        }
        let mut members = Vec::new();
        for rt in &rs.transactions {
            let t = txns.len();
            if rt.id == INIT_ID {
                errors.push(HistoryError::ReservedId(rt.id.clone()));
            } else if txn_index.insert(rt.id.as_str(), t).is_some() {
                errors.push(HistoryError::DuplicateTransaction(rt.id.clone()));
            }
            if rt.status == TxnStatus::Pending {
                errors.push(HistoryError::Pending(rt.id.clone()));
            }
            let mut resolve_map = |m: &BTreeMap<String, i64>, pos: usize| -> Vec<(KeyIdx, i64)> {
                m.iter()
                    .filter_map(|(k, v)| match key_index.get(k.as_str()) {
                        Some(&x) => Some((x, *v)),
                        None => {
                            errors.push(HistoryError::UnknownKey {
                                key: k.clone(),
                                context: EventId::new(rt.id.clone(), pos).to_string(),
                            });
                            None
                        }
                    })
                    .collect()
            };
            let events = rt
                .events
                .iter()
                .enumerate()
                .map(|(pos, op)| match op {
                    Operation::Select { pred } => Op::Select(pred.clone()),
                    Operation::Insert { rows } => Op::Insert(
                        resolve_map(rows, pos)
                            .into_iter()
                            .map(|(x, v)| (x, RowValue::Present(v)))
                            .collect(),
                    ),
                    Operation::Delete { pred } => Op::Delete(pred.clone()),
                    Operation::Update { pred, set } => Op::Update(pred.clone(), resolve_map(set, pos)),
                })
                .collect();
            txns.push(Transaction {
                id: rt.id.clone(),
                iso: rt.iso,
                status: rt.status,
                session: Some(s),
                events,
            });
            members.push(t);
        }
        sessions.push(Session { id: rs.id.clone(), txns: members });
    }
    txn_index.insert(INIT_ID, INIT);
    let mut wr = Vec::new();
    for e in &raw.wr {
        let key = match key_index.get(e.key.as_str()) {
            Some(&x) => x,
            None => {
                errors.push(HistoryError::UnknownKey { key: e.key.clone(), context: "wr".into() });
                continue;
            }
        };
        let mut lookup = |id: &EventId| -> Option<EventRef> {
            let found = txn_index
                .get(id.txn.as_str())
                .filter(|&&t| id.pos < txns[t].events.len())
                .map(|&t| EventRef::new(t, id.pos));
            if found.is_none() {
                errors.push(HistoryError::UnknownEvent(id.clone()));
            }
            found
        };
        if let (Some(from), Some(to)) = (lookup(&e.from_event), lookup(&e.to_event)) {
            wr.push(WrEdge { key, from, to });
        }
    }
    if errors.is_empty() {
        Ok(Parts { keys: raw.keys.clone(), txns, sessions, wr })
    } else {
        Err(InvalidHistory(errors))
    }
}

fn build(parts: Parts) -> Result<History, InvalidHistory> {
    let Parts { keys, txns, sessions, wr: edges } = parts;
    let n = txns.len();
    let k = keys.len();
    let event_id = |e: EventRef| EventId::new(txns[e.txn].id.clone(), e.pos);
    let mut errors = Vec::new();

    let mut reads = Vec::new();
    let mut read_slot = Vec::with_capacity(n);
    for (t, txn) in txns.iter().enumerate() {
        let slots: Vec<Option<ReadIdx>> = txn
            .events
            .iter()
            .enumerate()
            .map(|(pos, op)| {
                op.is_read().then(|| {
                    reads.push(EventRef::new(t, pos));
                    reads.len() - 1
                })
            })
            .collect();
        read_slot.push(slots);
    }

    let mut wr: Vec<Vec<Option<EventRef>>> = vec![vec![None; k]; reads.len()];
    for e in &edges {
        let valid = |r: EventRef| r.txn < n && r.pos < txns[r.txn].events.len();
        if !valid(e.from) || !valid(e.to) || e.key >= k {
            errors.push(HistoryError::UnknownEvent(if valid(e.from) { event_id(e.to) } else { event_id(e.from) }));
            continue;
        }
        let key = keys[e.key].clone();
        let Some(ri) = read_slot[e.to.txn][e.to.pos] else {
            errors.push(HistoryError::NotARead { key, event: event_id(e.to) });
            continue;
        };
        if !txns[e.from.txn].events[e.from.pos].is_write() {
            errors.push(HistoryError::NotAWrite { key, event: event_id(e.from) });
            continue;
        }
        if e.from.txn == e.to.txn {
            errors.push(HistoryError::IntraTransaction { key, from: event_id(e.from), to: event_id(e.to) });
            continue;
        }
        if txns[e.from.txn].is_aborted() {
            errors.push(HistoryError::ReadsFromAborted { key, from: event_id(e.from), read: event_id(e.to) });
            continue;
        }
        match wr[ri][e.key] {
            Some(prev) if prev != e.from => {
                errors.push(HistoryError::MultipleSources { key, read: event_id(e.to) })
            }
            _ => wr[ri][e.key] = Some(e.from),
        }
    }
    if !errors.is_empty() {
        return Err(InvalidHistory(errors));
    }

    // Transaction-level so ∪ wr, as adjacency lists, for the acyclicity check.
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in &sessions {
        let mut prev = INIT;
        for &t in &s.txns {
            adj[prev].push(t);
            prev = t;
        }
    }
    for (ri, row) in wr.iter().enumerate() {
        for src in row.iter().flatten() {
            adj[src.txn].push(reads[ri].txn);
        }
    }
    if let Some(cycle) = find_cycle(&adj) {
        let names = cycle.iter().map(|&t| txns[t].id.clone()).collect();
        return Err(InvalidHistory(vec![HistoryError::Cycle(names)]));
    }
    let order = topological_order(&adj);

    let mut values: Vec<Vec<Vec<RowValue>>> =
        txns.iter().map(|t| vec![vec![RowValue::Undefined; k]; t.events.len()]).collect();
    for &t in &order {
        for (pos, op) in txns[t].events.iter().enumerate() {
            for x in 0..k {
                let source = read_slot[t][pos]
                    .and_then(|ri| wr[ri][x])
                    .map(|w| values[w.txn][w.pos][x]);
                values[t][pos][x] = written_value(op, &keys[x], x, source);
            }
        }
    }

    let mut writer_pos = vec![vec![None; k]; n];
    for t in 0..n {
        for x in 0..k {
            let mut writers = (0..txns[t].events.len()).filter(|&p| values[t][p][x].is_defined());
            writer_pos[t][x] = writers.next();
            if writers.next().is_some() {
                errors.push(HistoryError::MultipleWrites { txn: txns[t].id.clone(), key: keys[x].clone() });
            }
        }
    }
    for (ri, row) in wr.iter().enumerate() {
        let r = reads[ri];
        for (x, src) in row.iter().enumerate() {
            let Some(w) = *src else { continue };
            if !values[w.txn][w.pos][x].is_defined() {
                errors.push(HistoryError::DanglingWrite { key: keys[x].clone(), from: event_id(w), read: event_id(r) });
            }
            if writer_pos[r.txn][x].is_some_and(|p| p < r.pos) {
                errors.push(HistoryError::LocalReadWithSource { key: keys[x].clone(), read: event_id(r) });
            }
        }
    }
    if !errors.is_empty() {
        return Err(InvalidHistory(errors));
    }

    let mut so_pred = vec![FixedBitSet::with_capacity(n); n];
    for s in &sessions {
        let mut before = FixedBitSet::with_capacity(n);
        before.insert(INIT);
        for &t in &s.txns {
            so_pred[t] = before.clone();
            before.insert(t);
        }
    }
    let mut so_wr_pred = so_pred.clone();
    let mut rc_visible = Vec::with_capacity(reads.len());
    let mut running = FixedBitSet::with_capacity(n);
    for (ri, &r) in reads.iter().enumerate() {
        if ri == 0 || reads[ri - 1].txn != r.txn {
            running = so_pred[r.txn].clone();
        }
        for src in wr[ri].iter().flatten() {
            running.insert(src.txn);
            so_wr_pred[r.txn].insert(src.txn);
        }
        rc_visible.push(running.clone());
    }
    let mut write_keys = vec![FixedBitSet::with_capacity(k); n];
    let mut writers = vec![FixedBitSet::with_capacity(n); k];
    for t in 0..n {
        if txns[t].is_aborted() {
            continue;
        }
        for x in 0..k {
            if writer_pos[t][x].is_some() {
                write_keys[t].insert(x);
                writers[x].insert(t);
            }
        }
    }

    Ok(History {
        keys,
        txns,
        sessions,
        reads,
        read_slot,
        wr,
        values,
        writer_pos,
        so_pred,
        so_wr_pred,
        rc_visible,
        write_keys,
        writers,
    })
}

/// Topological order of an acyclic graph (Kahn's algorithm, smallest index first).
fn topological_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut indegree = vec![0usize; n];
    for targets in adj {
        for &w in targets {
            indegree[w] += 1;
        }
    }
    let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
        (0..n).filter(|&v| indegree[v] == 0).map(std::cmp::Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(v)) = ready.pop() {
        order.push(v);
        for &w in &adj[v] {
            indegree[w] -= 1;
            if indegree[w] == 0 {
                ready.push(std::cmp::Reverse(w));
            }
        }
    }
    order
}

#[cfg(test)]
mod tests;
