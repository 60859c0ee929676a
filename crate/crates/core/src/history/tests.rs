use super::ops::{delete, insert, select, update};
use super::*;
use crate::corpus;

fn ev(h: &History, txn: &str, pos: usize) -> EventRef {
    h.event_ref(&EventId::new(txn, pos)).unwrap()
}

fn t(h: &History, id: &str) -> TxnIdx {
    h.txn_index(id).unwrap()
}

fn k(h: &History, name: &str) -> KeyIdx {
    h.key_index(name).unwrap()
}

fn errors(raw: &RawHistory) -> Vec<HistoryError> {
    History::from_raw(raw).err().map(|e| e.0).unwrap_or_default()
}

#[test]
fn update_reading_a_delete_writes_nothing() {
    let h = corpus::load("update_delete_chain");
    let upd = ev(&h, "t1", 0);
    assert_eq!(h.value_wr(upd, k(&h, "x1")), RowValue::Undefined);
    assert_eq!(h.value_wr(upd, k(&h, "x2")), RowValue::Present(-2));
    assert_eq!(h.value_wr(ev(&h, "init", 0), k(&h, "x1")), RowValue::Present(0));
    assert_eq!(h.value_wr(ev(&h, "t2", 0), k(&h, "x1")), RowValue::Deleted);
    assert_eq!(h.value_wr(ev(&h, "t2", 0), k(&h, "x2")), RowValue::Undefined);
}

#[test]
fn writes_and_transaction_values() {
    let h = corpus::load("update_delete_chain");
    assert!(h.writes(t(&h, "t1"), k(&h, "x2")));
    assert!(!h.writes(t(&h, "t1"), k(&h, "x1")));
    assert_eq!(h.txn_value(INIT, k(&h, "x2")), Some(RowValue::Present(1)));
    assert_eq!(h.txn_value(t(&h, "t2"), k(&h, "x1")), Some(RowValue::Deleted));
    assert_eq!(h.txn_value(t(&h, "t1"), k(&h, "x2")), Some(RowValue::Present(-2)));
    assert_eq!(h.txn_value(t(&h, "t1"), k(&h, "x1")), None);
}

#[test]
fn aborted_transactions_write_nothing() {
    let mut raw = RawHistory::new(&["x"]);
    raw.push_txn_with_status("s", "t1", IsolationLevel::Rc, TxnStatus::Aborted, vec![insert(&[("x", 5)])]);
    let h = History::from_raw(&raw).unwrap();
    assert!(!h.writes(1, 0));
    assert_eq!(h.value_wr(EventRef::new(1, 0), 0), RowValue::Present(5));
}

#[test]
fn local_reads() {
    let mut raw = RawHistory::new(&["x"]);
    raw.push_txn("s", "a", IsolationLevel::Rc, vec![insert(&[("x", 1)]), select(Predicate::Literal(true))]);
    raw.push_txn("s", "b", IsolationLevel::Rc, vec![select(Predicate::Literal(true)), insert(&[("x", 1)])]);
    let h = History::from_raw(&raw).unwrap();
    assert!(h.reads_locally(ev(&h, "a", 1), 0));
    assert!(!h.reads_locally(ev(&h, "b", 0), 0));

    let h = corpus::load("mixed_levels_conflict");
    assert!(!h.reads_locally(ev(&h, "t3", 0), k(&h, "x2")));
}

#[test]
fn history_classes() {
    assert!(corpus::load("update_delete_chain").is_full());
    assert!(!corpus::load("client_missing_reads").is_full());
    assert!(History::from_raw(&RawHistory::new(&["x", "y"])).unwrap().is_full());
}

#[test]
fn witnesses() {
    let client = corpus::load("client_missing_reads");
    let good = corpus::load("client_witness_ser");
    let bad = corpus::load("client_bad_extension");
    assert!(is_witness(&good, &client));
    assert!(!is_witness(&bad, &client));
    assert!(is_witness(&good, &good));
    // A full history with different levels is a different history.
    assert!(!is_witness(&corpus::load("client_witness_rc"), &client));
}

#[test]
fn partial_observation() {
    assert!(!is_partial_observation(&corpus::load("client_missing_reads")));
    assert!(is_partial_observation(&corpus::load("update_delete_chain")));

    // The only writer other than the reader deletes the key.
    let mut raw = RawHistory::new(&["x"]);
    raw.set_initial("x", InitialValue::Absent);
    raw.push_txn("s", "t1", IsolationLevel::Rc, vec![select(Predicate::cmp(CmpOp::Gt, 0))]);
    let h = History::from_raw(&raw).unwrap();
    assert!(!h.is_full());
    assert!(is_partial_observation(&h));
}

#[test]
fn valid_corpus() {
    for (name, _) in corpus::ENTRIES {
        assert_eq!(errors(&corpus::raw(name)), vec![], "{name}");
    }
}

#[test]
fn wr_cycle_is_rejected() {
    let mut raw = RawHistory::new(&["x", "y"]);
    raw.push_txn("s1", "t1", IsolationLevel::Rc, vec![select(Predicate::Literal(true)), insert(&[("x", 1)])]);
    raw.push_txn("s2", "t2", IsolationLevel::Rc, vec![select(Predicate::Literal(true)), insert(&[("y", 1)])]);
    raw.push_wr("y", ("t2", 1), ("t1", 0)).push_wr("x", ("t1", 1), ("t2", 0));
    assert!(matches!(&errors(&raw)[..], [HistoryError::Cycle(_)]));
}

#[test]
fn read_from_a_non_deleting_delete_is_rejected() {
    let mut raw = RawHistory::new(&["x"]);
    raw.push_txn("s1", "t1", IsolationLevel::Rc, vec![delete(Predicate::cmp(CmpOp::Lt, 0))]);
    raw.push_txn("s2", "t2", IsolationLevel::Rc, vec![select(Predicate::Literal(true))]);
    raw.push_wr("x", ("init", 0), ("t1", 0)).push_wr("x", ("t1", 0), ("t2", 0));
    assert!(matches!(&errors(&raw)[..], [HistoryError::DanglingWrite { .. }]));
}

#[test]
fn structural_errors() {
    let base = || {
        let mut raw = RawHistory::new(&["x"]);
        raw.push_txn("s1", "t1", IsolationLevel::Rc, vec![insert(&[("x", 1)]), select(Predicate::Literal(true))]);
        raw.push_txn("s2", "t2", IsolationLevel::Rc, vec![select(Predicate::Literal(true))]);
        raw
    };
    assert!(errors(&base()).is_empty());

    let mut raw = base();
    raw.push_wr("x", ("t1", 0), ("t2", 0)).push_wr("x", ("init", 0), ("t2", 0));
    assert!(matches!(&errors(&raw)[..], [HistoryError::MultipleSources { .. }]));

    let mut raw = base();
    raw.push_wr("x", ("t1", 0), ("t1", 1));
    assert!(matches!(&errors(&raw)[..], [HistoryError::IntraTransaction { .. }]));

    let mut raw = base();
    raw.push_wr("x", ("init", 0), ("t1", 1));
    assert!(matches!(&errors(&raw)[..], [HistoryError::LocalReadWithSource { .. }]));

    let mut raw = base();
    raw.push_wr("x", ("t2", 0), ("t1", 1));
    assert!(matches!(&errors(&raw)[..], [HistoryError::NotAWrite { .. }]));

    let mut raw = base();
    raw.push_wr("x", ("init", 0), ("t1", 0));
    assert!(matches!(&errors(&raw)[..], [HistoryError::NotARead { .. }]));

    let mut raw = base();
    raw.push_wr("x", ("init", 0), ("t9", 0));
    assert!(matches!(&errors(&raw)[..], [HistoryError::UnknownEvent(_)]));

    let mut raw = base();
    raw.sessions[0].transactions[0].status = TxnStatus::Pending;
    assert!(matches!(&errors(&raw)[..], [HistoryError::Pending(_)]));

    let mut raw = base();
    raw.sessions[0].transactions[0].status = TxnStatus::Aborted;
    raw.push_wr("x", ("t1", 0), ("t2", 0));
    assert!(matches!(&errors(&raw)[..], [HistoryError::ReadsFromAborted { .. }]));

    let mut raw = base();
    raw.sessions[1].transactions[0].events.push(insert(&[("x", 2)]));
    raw.sessions[1].transactions[0].events.push(update(Predicate::Literal(true), &[("x", 3)]));
    raw.push_wr("x", ("init", 0), ("t2", 0)).push_wr("x", ("init", 0), ("t2", 2));
    // The update reads x locally, so its wr source is rejected.
    assert!(errors(&raw).iter().any(|e| matches!(e, HistoryError::LocalReadWithSource { .. })));

    let mut raw = base();
    raw.sessions[1].transactions[0].events.push(update(Predicate::Literal(true), &[("x", 3)]));
    raw.sessions[1].transactions[0].events.push(insert(&[("x", 2)]));
    raw.push_wr("x", ("init", 0), ("t2", 1));
    assert!(matches!(&errors(&raw)[..], [HistoryError::MultipleWrites { .. }]));

    let mut raw = base();
    raw.sessions[1].transactions[0].id = "t1".into();
    assert!(matches!(&errors(&raw)[..], [HistoryError::DuplicateTransaction(_)]));

    let mut raw = base();
    raw.initial_state.clear();
    assert!(matches!(&errors(&raw)[..], [HistoryError::MissingInitialValue(_)]));

    let mut raw = base();
    raw.sessions[1].transactions[0].events.push(insert(&[("z", 2)]));
    assert!(matches!(&errors(&raw)[..], [HistoryError::UnknownKey { .. }]));
}

#[test]
fn raw_round_trip_is_canonical() {
    for (name, _) in corpus::ENTRIES {
        let h = corpus::load(name);
        let raw = h.to_raw();
        let again = History::from_raw(&raw).unwrap();
        assert_eq!(h, again, "{name}");
        assert_eq!(raw, again.to_raw(), "{name}");
    }
}

#[test]
fn session_order_and_visibility_sets() {
    let h = corpus::load("mixed_levels_conflict");
    let (t1, t2, t3, t4, t5) = (t(&h, "t1"), t(&h, "t2"), t(&h, "t3"), t(&h, "t4"), t(&h, "t5"));
    assert!(h.so(INIT, t4) && h.so(t1, t3) && !h.so(t4, t3));
    let preds: Vec<_> = h.so_wr_predecessors(t3).ones().collect();
    assert_eq!(preds, vec![INIT, t1, t2, t5]);
    let r5 = h.read_index(ev(&h, "t5", 0)).unwrap();
    let vis: Vec<_> = h.rc_visible(r5).ones().collect();
    assert_eq!(vis, vec![INIT, t1, t4]);
}
