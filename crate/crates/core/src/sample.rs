//! Small random histories for cross-checking the checker and the oracle.
//!
//! A history is built by picking an interleaving of its sessions and, for
//! every read, a source among the transactions placed earlier. The result
//! is a valid full history; edges whose source value the read's predicate
//! rejects may then be dropped to obtain a client history.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::history::{
    CmpOp, History, InitialValue, IsolationLevel, Operation, Predicate, RawHistory, RowValue, TxnStatus,
};

#[derive(Clone, Debug)]
pub struct SampleParams {
    pub max_sessions: usize,
    /// Transactions other than `init`.
    pub max_txns: usize,
    pub max_keys: usize,
    pub max_events: usize,
    pub levels: Vec<IsolationLevel>,
    pub abort_probability: f64,
    /// Chance of dropping each edge whose value the read rejects.
    pub drop_probability: f64,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams {
            max_sessions: 3,
            max_txns: 6,
            max_keys: 4,
            max_events: 3,
            levels: IsolationLevel::ALL.to_vec(),
            abort_probability: 0.1,
            drop_probability: 0.5,
        }
    }
}

impl SampleParams {
    /// Full histories only.
    pub fn full(mut self) -> Self {
        self.drop_probability = 0.0;
        self
    }

    pub fn with_levels(mut self, levels: &[IsolationLevel]) -> Self {
        self.levels = levels.to_vec();
        self
    }
}

/// A random predicate over small constants.
pub fn random_predicate<R: Rng>(rng: &mut R, keys: &[String], depth: usize) -> Predicate {
    let leaf = |rng: &mut R| match rng.gen_range(0..10) {
        0 => Predicate::Literal(true),
        1 => Predicate::key_eq(keys.choose(rng).expect("at least one key").clone()),
        _ => Predicate::cmp(*CmpOp::ALL.choose(rng).expect("operators"), rng.gen_range(-2..=2)),
    };
    if depth == 0 || rng.gen_bool(0.7) {
        return leaf(rng);
    }
    match rng.gen_range(0..3) {
        0 => Predicate::and(vec![random_predicate(rng, keys, depth - 1), random_predicate(rng, keys, depth - 1)]),
        1 => Predicate::or(vec![random_predicate(rng, keys, depth - 1), random_predicate(rng, keys, depth - 1)]),
        _ => Predicate::not(random_predicate(rng, keys, depth - 1)),
    }
}

/// The value a raw operation writes on `key`, given the value it reads.
fn raw_written(op: &Operation, key: &str, read: RowValue) -> RowValue {
    match op {
        Operation::Select { .. } => RowValue::Undefined,
        Operation::Insert { rows } => rows.get(key).map_or(RowValue::Undefined, |&v| RowValue::Present(v)),
        Operation::Delete { pred } if pred.eval(key, read) => RowValue::Deleted,
        Operation::Update { pred, set } if pred.eval(key, read) => {
            set.get(key).map_or(RowValue::Undefined, |&v| RowValue::Present(v))
        }
        _ => RowValue::Undefined,
    }
}

fn random_operation<R: Rng>(rng: &mut R, keys: &[String]) -> Operation {
    let pick_rows = |rng: &mut R| {
        let n = rng.gen_range(1..=keys.len().min(2));
        keys.choose_multiple(rng, n).map(|k| (k.clone(), rng.gen_range(-3..=3))).collect()
    };
    match rng.gen_range(0..4) {
        0 => Operation::Select { pred: random_predicate(rng, keys, 2) },
        1 => Operation::Insert { rows: pick_rows(rng) },
        2 => Operation::Delete { pred: random_predicate(rng, keys, 2) },
        _ => Operation::Update { pred: random_predicate(rng, keys, 2), set: pick_rows(rng) },
    }
}

/// A random valid history. Every transaction's level is drawn from
/// `params.levels`.
pub fn random_history<R: Rng>(rng: &mut R, params: &SampleParams) -> History {
    let k = rng.gen_range(1..=params.max_keys);
    let keys: Vec<String> = (1..=k).map(|i| format!("x{i}")).collect();
    let mut raw = RawHistory::new(&keys);
    let mut init = Vec::with_capacity(k);
    for key in &keys {
        let v = if rng.gen_bool(0.15) { InitialValue::Absent } else { InitialValue::Value(rng.gen_range(-2..=2)) };
        raw.set_initial(key, v);
        init.push(match v {
            InitialValue::Value(v) => RowValue::Present(v),
            InitialValue::Absent => RowValue::Deleted,
        });
    }

    let sessions = rng.gen_range(1..=params.max_sessions);
    let n = rng.gen_range(1..=params.max_txns);
    let mut owner: Vec<usize> = (0..n).map(|i| if i < sessions { i } else { rng.gen_range(0..sessions) }).collect();
    owner.sort_unstable();
    // Interleave by shuffling session slots; per-session order is kept.
    let mut schedule = owner.clone();
    schedule.shuffle(rng);

    // Final values of committed transactions placed so far, init first.
    let mut placed: Vec<(String, Vec<Option<(usize, RowValue)>>)> =
        vec![("init".to_string(), init.iter().map(|&v| Some((0, v))).collect())];
    let mut next_in_session = vec![0usize; sessions];
    let mut ids_by_session: Vec<Vec<usize>> = vec![Vec::new(); sessions];
    for (t, &s) in owner.iter().enumerate() {
        ids_by_session[s].push(t + 1);
    }

    let mut txns = Vec::with_capacity(n);
    for s in schedule {
        let id = format!("t{}", ids_by_session[s][next_in_session[s]]);
        next_in_session[s] += 1;
        let iso = *params.levels.choose(rng).expect("at least one level");
        let aborted = rng.gen_bool(params.abort_probability);
        let mut events: Vec<Operation> = Vec::new();
        // Per key, the position and value of this transaction's write.
        let mut local: Vec<Option<(usize, RowValue)>> = vec![None; k];
        // (key, source index in `placed`, source position, read position, value)
        let mut edges = Vec::new();
        for pos in 0..rng.gen_range(1..=params.max_events) {
            let mut op = random_operation(rng, &keys);
            let mut reads = draw_reads(rng, &op, &placed, &local);
            let written = |op: &Operation, reads: &[(RowValue, Option<(usize, usize)>)]| -> Vec<RowValue> {
                (0..k).map(|x| raw_written(op, &keys[x], reads.get(x).map_or(RowValue::Undefined, |r| r.0))).collect()
            };
            if written(&op, &reads).iter().zip(&local).any(|(w, l)| w.is_defined() && l.is_some()) {
                // Keep one write per key and transaction.
                op = match op {
                    Operation::Insert { rows } => {
                        let rows: BTreeMap<_, _> = rows
                            .into_iter()
                            .filter(|(key, _)| local[keys.iter().position(|k| k == key).expect("known key")].is_none())
                            .collect();
                        if rows.is_empty() {
                            Operation::Select { pred: Predicate::Literal(true) }
                        } else {
                            Operation::Insert { rows }
                        }
                    }
                    Operation::Delete { pred } | Operation::Update { pred, .. } => Operation::Select { pred },
                    select => select,
                };
                if reads.is_empty() {
                    reads = draw_reads(rng, &op, &placed, &local);
                }
            }
            for (x, w) in written(&op, &reads).into_iter().enumerate() {
                if w.is_defined() {
                    local[x] = Some((pos, w));
                }
            }
            for (x, &(value, source)) in reads.iter().enumerate() {
                if let Some((u, from_pos)) = source {
                    edges.push((x, u, from_pos, pos, value));
                }
            }
            events.push(op);
        }
        for (x, u, from_pos, to_pos, value) in edges {
            let pred = events[to_pos].predicate().expect("reads carry a predicate");
            if pred.eval(&keys[x], value) || !rng.gen_bool(params.drop_probability) {
                raw.push_wr(&keys[x], (placed[u].0.as_str(), from_pos), (id.as_str(), to_pos));
            }
        }
        if !aborted {
            placed.push((id.clone(), local));
        }
        txns.push((s, id, iso, aborted, events));
    }
    // Sessions list transactions in session order; the schedule already
    // visits each session's transactions in that order.
    for (s, id, iso, aborted, events) in txns {
        let status = if aborted { TxnStatus::Aborted } else { TxnStatus::Committed };
        raw.push_txn_with_status(&format!("s{}", s + 1), &id, iso, status, events);
    }
    raw.sessions.sort_by(|a, b| a.id.cmp(&b.id));
    raw.canonicalize();
    History::from_raw(&raw).unwrap_or_else(|e| panic!("sampled history is invalid: {e}\n{raw:?}"))
}

/// For each key, the value a read operation sees and, unless it reads its
/// own transaction's write, the chosen source `(index in placed, position)`.
/// Empty for inserts. Sources lean toward the latest writer.
fn draw_reads<R: Rng>(
    rng: &mut R,
    op: &Operation,
    placed: &[(String, Vec<Option<(usize, RowValue)>>)],
    local: &[Option<(usize, RowValue)>],
) -> Vec<(RowValue, Option<(usize, usize)>)> {
    if !op.is_read() {
        return Vec::new();
    }
    (0..local.len())
        .map(|x| match local[x] {
            Some((_, v)) => (v, None),
            None => {
                let writers: Vec<usize> = (0..placed.len()).filter(|&u| placed[u].1[x].is_some()).collect();
                let u = if rng.gen_bool(0.6) {
                    *writers.last().expect("init writes every key")
                } else {
                    *writers.choose(rng).expect("init writes every key")
                };
                let (from_pos, value) = placed[u].1[x].expect("writers have a value");
                (value, Some((u, from_pos)))
            }
        })
        .collect()
}

/// Drops, each with probability `p`, the wr edges whose written value the
/// read's predicate rejects. The input is a witness of the result.
pub fn drop_rejected_edges<R: Rng>(h: &History, p: f64, rng: &mut R) -> History {
    let kept = h
        .wr_edges()
        .into_iter()
        .filter(|e| {
            let pred = h.op(e.to).predicate().expect("reads carry a predicate");
            pred.eval(h.key_name(e.key), h.value_wr(e.from, e.key)) || !rng.gen_bool(p)
        })
        .collect();
    h.with_wr(kept).expect("dropping rejected edges keeps the history valid")
}
