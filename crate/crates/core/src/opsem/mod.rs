//! Histories generated by running programs under an interleaving semantics
//! for SER, SI and RC.
//!
//! Every event gets a fresh timestamp and reads from a snapshot, named by
//! a commit timestamp. Reads return the value of the latest transaction
//! committed at or before the snapshot, or the transaction's own earlier
//! write. Commits and aborts validate against transactions that committed
//! after the snapshot; a failed validation blocks the run. Completed runs
//! produce full histories that are consistent under the commit order given
//! by end timestamps.

mod engine;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::history::{InitialValue, IsolationLevel, Operation, Predicate};
use crate::sample::random_predicate;

pub use engine::{
    run_to_history, run_with_schedule, RunConfig, RunError, RunOutput, StepOutcome, TraceEntry, TraceKind,
    MAX_RESCHEDULES,
};

/// Top-level tag of program files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgramTag {
    #[default]
    Program,
}

/// One statement of a transaction body.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum Instruction {
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
    /// Ends the transaction without committing.
    Abort,
}

impl Instruction {
    /// The database operation, or `None` for `abort`.
    pub fn operation(&self) -> Option<Operation> {
        Some(match self.clone() {
            Instruction::Select { pred } => Operation::Select { pred },
            Instruction::Insert { rows } => Operation::Insert { rows },
            Instruction::Delete { pred } => Operation::Delete { pred },
            Instruction::Update { pred, set } => Operation::Update { pred, set },
            Instruction::Abort => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransactionBody {
    pub id: String,
    pub iso: IsolationLevel,
    pub instructions: Vec<Instruction>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramSession {
    pub id: String,
    pub transactions: Vec<TransactionBody>,
}

/// Sessions of transaction bodies over a fixed key set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Program {
    pub kind: ProgramTag,
    pub keys: Vec<String>,
    pub initial_state: BTreeMap<String, InitialValue>,
    pub sessions: Vec<ProgramSession>,
}

/// Weighted choice of isolation levels, written `SER:1,SI:1,RC:3`.
/// Only the levels the semantics covers (SER, SI, RC) are allowed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IsoMix {
    weights: Vec<(IsolationLevel, u32)>,
}

impl IsoMix {
    pub fn new(weights: Vec<(IsolationLevel, u32)>) -> Result<IsoMix, String> {
        if let Some((l, _)) = weights.iter().find(|(l, _)| !RUNNABLE.contains(l)) {
            return Err(format!("level {l} cannot be generated (use SER, SI or RC)"));
        }
        if weights.iter().all(|&(_, w)| w == 0) {
            return Err("the isolation mix needs a positive weight".into());
        }
        Ok(IsoMix { weights })
    }

    pub fn only(level: IsolationLevel) -> Result<IsoMix, String> {
        IsoMix::new(vec![(level, 1)])
    }

    pub fn pick<R: Rng>(&self, rng: &mut R) -> IsolationLevel {
        self.weights.choose_weighted(rng, |&(_, w)| w).expect("positive total weight").0
    }
}

const RUNNABLE: [IsolationLevel; 3] = [IsolationLevel::Ser, IsolationLevel::Si, IsolationLevel::Rc];

impl Default for IsoMix {
    fn default() -> Self {
        IsoMix { weights: RUNNABLE.iter().map(|&l| (l, 1)).collect() }
    }
}

impl FromStr for IsoMix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut weights = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (level, weight) = match part.split_once(':') {
                Some((l, w)) => (l, w.trim().parse::<u32>().map_err(|e| format!("bad weight in `{part}`: {e}"))?),
                None => (part, 1),
            };
            weights.push((level.trim().parse()?, weight));
        }
        IsoMix::new(weights)
    }
}

impl fmt::Display for IsoMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<_> = self.weights.iter().map(|(l, w)| format!("{l}:{w}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// Shape of generated programs.
#[derive(Clone, Debug)]
pub struct ProgramShape {
    pub sessions: usize,
    pub txns_per_session: usize,
    pub keys: usize,
    pub iso_mix: IsoMix,
    /// Upper bound on instructions per transaction.
    pub max_instructions: usize,
    /// Chance that an instruction is a select; the rest split evenly
    /// among inserts, deletes and updates.
    pub read_ratio: f64,
    pub abort_probability: f64,
}

impl ProgramShape {
    pub fn new(sessions: usize, txns_per_session: usize, keys: usize, iso_mix: IsoMix) -> Self {
        ProgramShape {
            sessions,
            txns_per_session,
            keys,
            iso_mix,
            max_instructions: 4,
            read_ratio: 0.4,
            abort_probability: 0.05,
        }
    }
}

/// A random program, deterministic in `seed`.
///
/// Within a transaction, each key can be written by at most one
/// instruction: deletes are confined to chosen keys with `key_eq`, and
/// inserts and updates only name keys no other instruction may write.
pub fn random_program(shape: &ProgramShape, seed: u64) -> Program {
    assert!(shape.sessions >= 1 && shape.txns_per_session >= 1 && shape.keys >= 1, "counts must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<String> = (1..=shape.keys).map(|i| format!("x{i}")).collect();
    let initial_state = keys.iter().map(|k| (k.clone(), InitialValue::Value(rng.gen_range(-2..=2)))).collect();
    let mut sessions = Vec::with_capacity(shape.sessions);
    let mut next_id = 1;
    for s in 1..=shape.sessions {
        let mut transactions = Vec::with_capacity(shape.txns_per_session);
        for _ in 0..shape.txns_per_session {
            let iso = shape.iso_mix.pick(&mut rng);
            let mut free: Vec<&String> = keys.iter().collect();
            let mut instructions = Vec::new();
            for _ in 0..rng.gen_range(1..=shape.max_instructions) {
                instructions.push(random_instruction(&mut rng, shape.read_ratio, &keys, &mut free));
            }
            if rng.gen_bool(shape.abort_probability) {
                let at = rng.gen_range(0..=instructions.len());
                instructions.insert(at, Instruction::Abort);
            }
            transactions.push(TransactionBody { id: format!("t{next_id}"), iso, instructions });
            next_id += 1;
        }
        sessions.push(ProgramSession { id: format!("s{s}"), transactions });
    }
    Program { kind: ProgramTag::Program, keys, initial_state, sessions }
}

/// Draws an instruction that may only write keys in `free`, and removes the
/// keys it may write from `free`.
fn random_instruction<R: Rng>(rng: &mut R, read_ratio: f64, keys: &[String], free: &mut Vec<&String>) -> Instruction {
    if free.is_empty() || rng.gen_bool(read_ratio) {
        return Instruction::Select { pred: random_predicate(rng, keys, 2) };
    }
    let n = rng.gen_range(1..=free.len().min(2));
    free.shuffle(rng);
    let chosen: Vec<String> = free.drain(..n).map(String::clone).collect();
    let rows = || -> BTreeMap<String, i64> { BTreeMap::new() };
    match rng.gen_range(0..3) {
        0 => {
            let mut r = rows();
            for k in &chosen {
                r.insert(k.clone(), rng.gen_range(-3..=3));
            }
            Instruction::Insert { rows: r }
        }
        1 => {
            let scope = Predicate::or(chosen.iter().map(|k| Predicate::key_eq(k.clone())).collect());
            Instruction::Delete { pred: Predicate::and(vec![scope, random_predicate(rng, keys, 1)]) }
        }
        _ => {
            let mut set = rows();
            for k in &chosen {
                set.insert(k.clone(), rng.gen_range(-3..=3));
            }
            Instruction::Update { pred: random_predicate(rng, keys, 2), set }
        }
    }
}

#[cfg(test)]
mod tests;
