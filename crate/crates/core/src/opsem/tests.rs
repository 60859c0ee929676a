use super::*;
use crate::axioms::Execution;
use crate::checker::{check_consistency, Status};
use crate::history::CmpOp;

fn body(id: &str, iso: IsolationLevel, instructions: Vec<Instruction>) -> TransactionBody {
    TransactionBody { id: id.into(), iso, instructions }
}

fn program(keys: &[&str], sessions: Vec<Vec<TransactionBody>>) -> Program {
    Program {
        kind: ProgramTag::Program,
        keys: keys.iter().map(|k| k.to_string()).collect(),
        initial_state: keys.iter().map(|k| (k.to_string(), InitialValue::Value(0))).collect(),
        sessions: sessions
            .into_iter()
            .enumerate()
            .map(|(i, transactions)| ProgramSession { id: format!("s{}", i + 1), transactions })
            .collect(),
    }
}

fn select_all() -> Instruction {
    Instruction::Select { pred: Predicate::Literal(true) }
}

fn update(key: &str, value: i64) -> Instruction {
    Instruction::Update { pred: Predicate::key_eq(key), set: [(key.to_string(), value)].into() }
}

fn order_indices(out: &RunOutput) -> Vec<usize> {
    out.commit_order.iter().map(|id| out.history.txn_index(id).unwrap()).collect()
}

#[test]
fn single_session_reads_its_predecessors() {
    let p = program(
        &["x"],
        vec![vec![body("t1", IsolationLevel::Ser, vec![update("x", 1)]), body("t2", IsolationLevel::Rc, vec![select_all()])]],
    );
    let out = run_to_history(&p, 3).unwrap();
    assert_eq!(out.attempts, 1);
    let h = &out.history;
    assert!(h.is_full());
    let t2 = h.txn_index("t2").unwrap();
    let r = h.read_index(crate::history::EventRef::new(t2, 0)).unwrap();
    assert_eq!(h.wr_source_txn(r, 0), Some(h.txn_index("t1").unwrap()));
}

#[test]
fn serializable_contention_blocks() {
    let incr = |id: &str| body(id, IsolationLevel::Ser, vec![select_all(), update("x", 1)]);
    let p = program(&["x"], vec![vec![incr("t1")], vec![incr("t2")]]);
    let mut config = RunConfig::new(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // Both begin and read before either commits.
    for s in [0, 1, 0, 1, 0, 1] {
        config.step(s, &mut rng).unwrap();
    }
    assert_eq!(config.step(0, &mut rng).unwrap(), engine::StepOutcome::Committed);
    assert!(matches!(config.step(1, &mut rng), Err(RunError::Blocked { .. })));
}

#[test]
fn snapshot_write_skew_commits_and_is_not_serializable() {
    let skew = |id: &str, key: &str| body(id, IsolationLevel::Si, vec![select_all(), update(key, 1)]);
    let p = program(&["x", "y"], vec![vec![skew("t1", "x")], vec![skew("t2", "y")]]);
    let mut config = RunConfig::new(&p).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for s in [0, 1, 0, 1, 0, 1, 0, 1] {
        config.step(s, &mut rng).unwrap();
    }
    let out = config.into_output().unwrap();
    assert_eq!(check_consistency(&out.history).status, Status::Consistent);
    let mut ser = out.history.clone();
    for t in 1..ser.txn_count() {
        ser = ser.with_isolation(t, IsolationLevel::Ser);
    }
    assert_eq!(check_consistency(&ser).status, Status::Inconsistent);
}

#[test]
fn random_programs_are_deterministic() {
    let shape = ProgramShape::new(3, 10, 4, "SER:1,SI:1,RC:3".parse().unwrap());
    assert_eq!(random_program(&shape, 7), random_program(&shape, 7));
    let one = random_program(&ProgramShape::new(1, 1, 1, IsoMix::only(IsolationLevel::Rc).unwrap()), 42);
    assert_eq!(one.sessions.len(), 1);
    assert_eq!(one.sessions[0].transactions.len(), 1);
}

#[test]
fn iso_mix_parsing() {
    let mix: IsoMix = "SER:1, SI:2,RC".parse().unwrap();
    assert_eq!(mix.to_string(), "SER:1,SI:2,RC:1");
    assert!("PC:1".parse::<IsoMix>().is_err());
    assert!("SER:x".parse::<IsoMix>().is_err());
    assert!("SER:0".parse::<IsoMix>().is_err());
}

#[test]
fn invalid_programs_are_rejected() {
    let mut p = program(&["x"], vec![vec![body("t1", IsolationLevel::Pc, vec![])]]);
    assert!(matches!(RunConfig::new(&p), Err(RunError::InvalidProgram(_))));
    p.sessions[0].transactions[0] = body("t1", IsolationLevel::Rc, vec![Instruction::Insert { rows: [("y".into(), 1)].into() }]);
    assert!(matches!(RunConfig::new(&p), Err(RunError::InvalidProgram(_))));
    p.sessions[0].transactions[0] =
        body("t1", IsolationLevel::Rc, vec![Instruction::Insert { rows: [("x".into(), 1)].into() }, update("x", 2)]);
    assert!(matches!(run_to_history(&p, 0), Err(RunError::InvalidProgram(_))));
}

#[test]
fn program_json_round_trip() {
    let mut p = random_program(&ProgramShape::new(2, 3, 3, IsoMix::default()), 5);
    p.sessions[0].transactions[0].instructions.push(Instruction::Abort);
    p.sessions[0].transactions[0].instructions.push(Instruction::Select {
        pred: Predicate::cmp(CmpOp::Le, 0),
    });
    let text = serde_json::to_string(&p).unwrap();
    assert!(text.contains(r#""kind":"program""#));
    assert!(text.contains(r#"{"op":"abort"}"#));
    assert_eq!(serde_json::from_str::<Program>(&text).unwrap(), p);
}

#[test]
fn generated_runs_are_consistent_under_their_end_order() {
    let shape = ProgramShape::new(3, 4, 3, IsoMix::default());
    let mut completed = 0;
    for seed in 0..150 {
        let p = random_program(&shape, seed);
        let Ok(out) = run_to_history(&p, seed) else { continue };
        completed += 1;
        assert!(out.history.is_full());
        let exec = Execution::new(out.history.clone(), order_indices(&out)).expect("end order extends so and wr");
        assert!(exec.is_consistent(), "seed {seed}: {:?}", exec.violations());
    }
    assert!(completed > 100, "only {completed} runs completed");
}
