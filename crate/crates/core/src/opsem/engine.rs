//! The step machine and the scheduler driving it.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{Instruction, Program};
use crate::history::{
    EventId, History, InitialValue, InvalidHistory, IsolationLevel, Operation, RawHistory, RawSession,
    RawTransaction, RawWr, RowValue, TxnStatus, INIT_ID,
};

/// Reschedules tried after the first blocked run.
pub const MAX_RESCHEDULES: usize = 32;

/// Chance that the scheduler keeps running the session it ran last.
const STICKINESS: f64 = 0.75;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("transaction `{txn}` failed validation and the run blocked")]
    Blocked { txn: String },
    #[error("no completing schedule after {attempts} attempts")]
    NoCompletingSchedule { attempts: usize },
    #[error("the run produced an invalid history: {0}")]
    InvalidHistory(#[from] InvalidHistory),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceKind {
    Begin,
    /// A database operation, by position among the transaction's events.
    Event(usize),
    Commit,
    Abort,
}

/// One rule application.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub session: usize,
    pub txn: String,
    pub kind: TraceKind,
    pub timestamp: u64,
    /// The snapshot chosen at begin (SER, SI) or for the event (RC).
    pub snapshot: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Began,
    Executed,
    Committed,
    Aborted,
}

struct Committed {
    timestamp: u64,
    txn: String,
    /// Per key, the writing event's position and the value written.
    writes: Vec<Option<(usize, RowValue)>>,
}

struct Live {
    txn: usize,
    pc: usize,
    iso: IsolationLevel,
    /// Snapshot fixed at begin (SER, SI).
    snapshot: Option<u64>,
    /// Largest snapshot used by an earlier event (RC).
    last_snapshot: u64,
    events: Vec<Operation>,
    local: Vec<Option<(usize, RowValue)>>,
    read_keys: Vec<bool>,
}

struct SessionState {
    next_txn: usize,
    live: Option<Live>,
    /// Largest commit timestamp when the previous transaction ended.
    floor: u64,
    done: Vec<RawTransaction>,
}

/// A configuration of the machine: the history so far, the clock, and the
/// state of every session.
pub struct RunConfig<'p> {
    program: &'p Program,
    key_index: BTreeMap<&'p str, usize>,
    clock: u64,
    committed: Vec<Committed>,
    sessions: Vec<SessionState>,
    wr: Vec<RawWr>,
    trace: Vec<TraceEntry>,
    end_order: Vec<String>,
}

impl<'p> RunConfig<'p> {
    /// The initial configuration: only `init`, at timestamp 0, has run.
    pub fn new(program: &'p Program) -> Result<Self, RunError> {
        validate_program(program)?;
        let key_index = program.keys.iter().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let init_writes = program
            .keys
            .iter()
            .map(|k| {
                Some((
                    0,
                    match program.initial_state[k] {
                        InitialValue::Value(v) => RowValue::Present(v),
                        InitialValue::Absent => RowValue::Deleted,
                    },
                ))
            })
            .collect();
        Ok(RunConfig {
            program,
            key_index,
            clock: 0,
            committed: vec![Committed { timestamp: 0, txn: INIT_ID.to_string(), writes: init_writes }],
            sessions: program
                .sessions
                .iter()
                .map(|_| SessionState { next_txn: 0, live: None, floor: 0, done: Vec::new() })
                .collect(),
            wr: Vec::new(),
            trace: Vec::new(),
            end_order: vec![INIT_ID.to_string()],
        })
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    /// Whether `session` can take a step.
    pub fn is_enabled(&self, session: usize) -> bool {
        let s = &self.sessions[session];
        s.live.is_some() || s.next_txn < self.program.sessions[session].transactions.len()
    }

    pub fn is_final(&self) -> bool {
        (0..self.sessions.len()).all(|s| !self.is_enabled(s))
    }

    /// Whether the next step of `session` commits a write that makes some
    /// other live transaction fail validation, now or once it performs its
    /// remaining instructions.
    pub fn dooms_others(&self, session: usize) -> bool {
        let Some(live) = &self.sessions[session].live else { return false };
        let body = &self.program.sessions[session].transactions[live.txn];
        if live.pc < body.instructions.len() {
            return false;
        }
        let written: Vec<usize> = (0..live.local.len()).filter(|&x| live.local[x].is_some()).collect();
        if written.is_empty() {
            return false;
        }
        self.sessions.iter().enumerate().any(|(other, state)| {
            let Some(l) = state.live.as_ref().filter(|_| other != session) else { return false };
            let rest = &self.program.sessions[other].transactions[l.txn].instructions[l.pc..];
            let future = potential_writes(rest, &self.program.keys);
            let will_write = |x: usize| l.local[x].is_some() || future[x];
            match l.iso {
                IsolationLevel::Ser => {
                    let will_read = rest.iter().any(|i| !matches!(i, Instruction::Insert { .. } | Instruction::Abort));
                    written.iter().any(|&x| l.read_keys[x] || will_write(x) || (will_read && l.local[x].is_none()))
                }
                IsolationLevel::Si => written.iter().any(|&x| will_write(x)),
                _ => false,
            }
        })
    }

    /// Whether beginning the next transaction of `session` now risks a
    /// failed validation: SER and SI transactions may overlap only with RC
    /// transactions or with SI transactions writing other keys.
    pub fn begin_is_risky(&self, session: usize) -> bool {
        let state = &self.sessions[session];
        if state.live.is_some() {
            return false;
        }
        let body = &self.program.sessions[session].transactions[state.next_txn];
        if body.iso == IsolationLevel::Rc {
            return false;
        }
        let ours = potential_writes(&body.instructions, &self.program.keys);
        self.sessions.iter().enumerate().any(|(other, st)| {
            let Some(l) = st.live.as_ref().filter(|_| other != session) else { return false };
            match (body.iso, l.iso) {
                (_, IsolationLevel::Rc) => false,
                (IsolationLevel::Si, IsolationLevel::Si) => {
                    let rest = &self.program.sessions[other].transactions[l.txn].instructions[l.pc..];
                    let theirs = potential_writes(rest, &self.program.keys);
                    (0..ours.len()).any(|x| ours[x] && (theirs[x] || l.local[x].is_some()))
                }
                _ => true,
            }
        })
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    fn latest_commit(&self) -> u64 {
        self.committed.last().map_or(0, |c| c.timestamp)
    }

    /// Commit timestamps at or above `floor`, in increasing order.
    fn commits_from(&self, floor: u64) -> Vec<u64> {
        self.committed.iter().map(|c| c.timestamp).filter(|&t| t >= floor).collect()
    }

    /// Applies one rule for `session`.
    pub fn step<R: Rng>(&mut self, session: usize, rng: &mut R) -> Result<StepOutcome, RunError> {
        assert!(self.is_enabled(session), "session {session} has no enabled rule");
        let Some(live) = self.sessions[session].live.as_ref() else {
            return Ok(self.begin(session, rng));
        };
        let body = &self.program.sessions[session].transactions[live.txn];
        match body.instructions.get(live.pc) {
            None => self.end(session, false),
            Some(Instruction::Abort) => self.end(session, true),
            Some(instr) => {
                let op = instr.operation().expect("data instruction");
                self.execute(session, op, rng)?;
                Ok(StepOutcome::Executed)
            }
        }
    }

    fn begin<R: Rng>(&mut self, session: usize, rng: &mut R) -> StepOutcome {
        let timestamp = self.tick();
        let state = &self.sessions[session];
        let txn = state.next_txn;
        let body = &self.program.sessions[session].transactions[txn];
        let snapshot = match body.iso {
            IsolationLevel::Ser => Some(self.latest_commit()),
            IsolationLevel::Si => {
                // Snapshots older than a commit writing one of our keys
                // can only lead to a failed validation.
                let ours = potential_writes(&body.instructions, &self.program.keys);
                let doomed_below = self
                    .committed
                    .iter()
                    .filter(|c| (0..ours.len()).any(|x| ours[x] && c.writes[x].is_some()))
                    .map(|c| c.timestamp)
                    .max()
                    .unwrap_or(0);
                let floor = state.floor.max(doomed_below);
                Some(*self.commits_from(floor).choose(rng).expect("the floor is a commit timestamp"))
            }
            _ => None,
        };
        let k = self.program.keys.len();
        let live = Live {
            txn,
            pc: 0,
            iso: body.iso,
            snapshot,
            last_snapshot: state.floor,
            events: Vec::new(),
            local: vec![None; k],
            read_keys: vec![false; k],
        };
        self.trace.push(TraceEntry {
            session,
            txn: body.id.clone(),
            kind: TraceKind::Begin,
            timestamp,
            snapshot,
        });
        let state = &mut self.sessions[session];
        state.next_txn += 1;
        state.live = Some(live);
        StepOutcome::Began
    }

    fn execute<R: Rng>(&mut self, session: usize, op: Operation, rng: &mut R) -> Result<(), RunError> {
        let timestamp = self.tick();
        let live = self.sessions[session].live.as_ref().expect("live transaction");
        let snapshot = match live.snapshot {
            Some(s) => s,
            None => *self.commits_from(live.last_snapshot).choose(rng).expect("the bound is a commit timestamp"),
        };
        let txn_id = self.program.sessions[session].transactions[live.txn].id.clone();
        let pos = live.events.len();
        let k = self.program.keys.len();
        let mut reads = vec![RowValue::Undefined; k];
        let mut edges = Vec::new();
        if op.is_read() {
            for (x, read) in reads.iter_mut().enumerate() {
                *read = match live.local[x] {
                    Some((_, v)) => v,
                    None => {
                        let source = self
                            .committed
                            .iter()
                            .rev()
                            .filter(|c| c.timestamp <= snapshot)
                            .find_map(|c| c.writes[x].map(|w| (c, w)))
                            .expect("init writes every key");
                        let (c, (from_pos, value)) = source;
                        edges.push(RawWr {
                            key: self.program.keys[x].clone(),
                            from_event: EventId::new(c.txn.clone(), from_pos),
                            to_event: EventId::new(txn_id.clone(), pos),
                        });
                        value
                    }
                };
            }
        }
        let mut writes = Vec::new();
        for (x, key) in self.program.keys.iter().enumerate() {
            let w = written(&op, key, reads[x]);
            if w.is_defined() {
                if live.local[x].is_some() {
                    return Err(RunError::InvalidProgram(format!("transaction `{txn_id}` writes `{key}` twice")));
                }
                writes.push((x, w));
            }
        }
        let live = self.sessions[session].live.as_mut().expect("live transaction");
        for e in &edges {
            live.read_keys[self.key_index[e.key.as_str()]] = true;
        }
        for (x, w) in writes {
            live.local[x] = Some((pos, w));
        }
        if live.snapshot.is_none() {
            live.last_snapshot = snapshot;
        }
        live.events.push(op);
        live.pc += 1;
        self.wr.extend(edges);
        self.trace.push(TraceEntry { session, txn: txn_id, kind: TraceKind::Event(pos), timestamp, snapshot: Some(snapshot) });
        Ok(())
    }

    /// Whether no transaction that committed after the snapshot conflicts
    /// with `live`: SER checks reads and writes, SI writes only, RC nothing.
    fn validate(&self, live: &Live) -> bool {
        let Some(snapshot) = live.snapshot else { return true };
        let touched = |x: usize| match live.iso {
            IsolationLevel::Ser => live.read_keys[x] || live.local[x].is_some(),
            _ => live.local[x].is_some(),
        };
        self.committed
            .iter()
            .filter(|c| c.timestamp > snapshot)
            .all(|c| (0..c.writes.len()).all(|x| c.writes[x].is_none() || !touched(x)))
    }

    fn end(&mut self, session: usize, abort: bool) -> Result<StepOutcome, RunError> {
        let live = self.sessions[session].live.take().expect("live transaction");
        let body = &self.program.sessions[session].transactions[live.txn];
        if !self.validate(&live) {
            return Err(RunError::Blocked { txn: body.id.clone() });
        }
        let timestamp = self.tick();
        if !abort {
            self.committed.push(Committed { timestamp, txn: body.id.clone(), writes: live.local.clone() });
        }
        self.end_order.push(body.id.clone());
        self.trace.push(TraceEntry {
            session,
            txn: body.id.clone(),
            kind: if abort { TraceKind::Abort } else { TraceKind::Commit },
            timestamp,
            snapshot: None,
        });
        let floor = self.latest_commit();
        let state = &mut self.sessions[session];
        state.floor = floor;
        state.done.push(RawTransaction {
            id: body.id.clone(),
            iso: body.iso,
            status: if abort { TxnStatus::Aborted } else { TxnStatus::Committed },
            events: live.events,
        });
        Ok(if abort { StepOutcome::Aborted } else { StepOutcome::Committed })
    }

    /// The history of a final configuration.
    pub fn into_output(self) -> Result<RunOutput, RunError> {
        assert!(self.is_final(), "the run has not finished");
        let mut raw = RawHistory::new(&self.program.keys);
        raw.initial_state = self.program.initial_state.clone();
        raw.sessions = self
            .program
            .sessions
            .iter()
            .zip(self.sessions)
            .map(|(s, state)| RawSession { id: s.id.clone(), transactions: state.done })
            .collect();
        raw.wr = self.wr;
        raw.canonicalize();
        let history = History::from_raw(&raw)?;
        Ok(RunOutput { history, raw, trace: self.trace, commit_order: self.end_order, attempts: 1 })
    }
}

/// Per key, whether some instruction may write it.
fn potential_writes(instructions: &[Instruction], keys: &[String]) -> Vec<bool> {
    keys.iter()
        .map(|k| {
            instructions.iter().any(|i| match i {
                Instruction::Insert { rows } => rows.contains_key(k),
                Instruction::Update { set, .. } => set.contains_key(k),
                Instruction::Delete { .. } => true,
                _ => false,
            })
        })
        .collect()
}

/// The value `op` writes on `key` after reading `read`.
fn written(op: &Operation, key: &str, read: RowValue) -> RowValue {
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

fn validate_program(p: &Program) -> Result<(), RunError> {
    let bad = |m: String| Err(RunError::InvalidProgram(m));
    let mut keys = HashSet::new();
    for k in &p.keys {
        if !keys.insert(k.as_str()) {
            return bad(format!("duplicate key `{k}`"));
        }
        if !p.initial_state.contains_key(k) {
            return bad(format!("key `{k}` has no initial value"));
        }
    }
    if let Some(k) = p.initial_state.keys().find(|k| !keys.contains(k.as_str())) {
        return bad(format!("initial value for unknown key `{k}`"));
    }
    let mut ids = HashSet::new();
    let mut session_ids = HashSet::new();
    for s in &p.sessions {
        if !session_ids.insert(s.id.as_str()) {
            return bad(format!("duplicate session `{}`", s.id));
        }
        for t in &s.transactions {
            if t.id == INIT_ID || !ids.insert(t.id.as_str()) {
                return bad(format!("transaction id `{}` is reserved or repeated", t.id));
            }
            if !matches!(t.iso, IsolationLevel::Ser | IsolationLevel::Si | IsolationLevel::Rc) {
                return bad(format!("transaction `{}` runs at {}, which cannot be executed", t.id, t.iso));
            }
            for i in &t.instructions {
                let named = match i {
                    Instruction::Insert { rows } => rows.keys().collect(),
                    Instruction::Update { set, .. } => set.keys().collect(),
                    _ => Vec::new(),
                };
                if let Some(k) = named.into_iter().find(|k| !keys.contains(k.as_str())) {
                    return bad(format!("transaction `{}` writes unknown key `{k}`", t.id));
                }
            }
        }
    }
    Ok(())
}

/// A completed run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub history: History,
    pub raw: RawHistory,
    pub trace: Vec<TraceEntry>,
    /// Transaction ids by end timestamp, `init` first.
    pub commit_order: Vec<String>,
    /// Schedules tried, counting the successful one.
    pub attempts: usize,
}

/// Runs `program` once under the scheduler seeded by `seed`.
pub fn run_with_schedule(program: &Program, seed: u64) -> Result<RunOutput, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut config = RunConfig::new(program)?;
    let mut last = None;
    loop {
        let mut enabled: Vec<usize> = (0..program.sessions.len()).filter(|&s| config.is_enabled(s)).collect();
        if enabled.is_empty() {
            return config.into_output();
        }
        // Prefer steps that leave every live transaction able to commit.
        let harmless: Vec<usize> =
            enabled.iter().copied().filter(|&s| !config.dooms_others(s) && !config.begin_is_risky(s)).collect();
        if !harmless.is_empty() {
            enabled = harmless;
        }
        let session = match last {
            Some(s) if enabled.contains(&s) && rng.gen_bool(STICKINESS) => s,
            _ => *enabled.choose(&mut rng).expect("non-empty"),
        };
        config.step(session, &mut rng)?;
        last = Some(session);
    }
}

/// Runs `program` to completion, rescheduling blocked runs with derived
/// seeds up to [`MAX_RESCHEDULES`] times.
pub fn run_to_history(program: &Program, seed: u64) -> Result<RunOutput, RunError> {
    for attempt in 0..=MAX_RESCHEDULES {
        let derived = seed.wrapping_add((attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        match run_with_schedule(program, derived) {
            Ok(mut out) => {
                out.attempts = attempt + 1;
                return Ok(out);
            }
            Err(RunError::Blocked { txn }) => log::debug!("attempt {attempt} blocked on `{txn}`"),
            Err(e) => return Err(e),
        }
    }
    Err(RunError::NoCompletingSchedule { attempts: MAX_RESCHEDULES + 1 })
}
