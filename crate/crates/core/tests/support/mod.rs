//! Properties shared by the proptest suite and the acceptance run. Each
//! takes a seed and builds its own random input from it.

#![allow(dead_code)]

use std::ops::ControlFlow;

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use isocheck::axioms::{all_axioms_hold, vis_holds, Execution, VisibilityRelation};
use isocheck::checker::{
    check_consistency, check_consistency_with, explore_consistent_prefixes, is_consistent_extension_slow,
    CheckOptions, Prefix, SearchContext, SearchOptions, Status,
};
use isocheck::history::{is_witness, History, IsolationLevel, RawHistory, TxnIdx, INIT};
use isocheck::opsem::{random_program, run_to_history, IsoMix, ProgramShape, TraceKind};
use isocheck::oracle::{accepts_order, brute_force_check, enumerate_consistent_orders, for_each_full_extension, OracleBudget};
use isocheck::relation::{for_each_linear_extension, TotalOrder};
use isocheck::sample::{random_history, SampleParams};
use isocheck::saturation::{base_relation, check_saturable, saturate, saturate_fixpoint};

pub fn sample(seed: u64, params: &SampleParams) -> History {
    random_history(&mut ChaCha8Rng::seed_from_u64(seed), params)
}

pub fn small(max_txns: usize) -> SampleParams {
    SampleParams { max_txns, ..SampleParams::default() }
}

/// A random total order extending so ∪ wr.
pub fn random_extension(h: &History, rng: &mut ChaCha8Rng) -> Vec<TxnIdx> {
    let base = base_relation(h);
    let mut placed = vec![false; h.txn_count()];
    let mut order = Vec::with_capacity(h.txn_count());
    while order.len() < h.txn_count() {
        let ready: Vec<TxnIdx> = (0..h.txn_count())
            .filter(|&t| !placed[t] && base.predecessors(t).ones().all(|u| placed[u]))
            .collect();
        let t = *ready.choose(rng).expect("so ∪ wr is acyclic");
        placed[t] = true;
        order.push(t);
    }
    order
}

pub fn with_level(h: &History, iso: IsolationLevel) -> History {
    (1..h.txn_count()).fold(h.clone(), |acc, t| acc.with_isolation(t, iso))
}

pub fn levels(rng: &mut ChaCha8Rng, h: &History) -> History {
    (1..h.txn_count()).fold(h.clone(), |acc, t| acc.with_isolation(t, *IsolationLevel::ALL.choose(rng).unwrap()))
}


pub fn saturation_is_extensive_and_monotone(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let lower = base_relation(&h);
    let order = random_extension(&h, &mut rng);
    // Some pairs of a total order extending the base, closed.
    let mut upper = lower.clone();
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if rng.gen_bool(0.3) {
                upper.insert(a, b);
            }
        }
    }
    upper.close();
    let s_lower = saturate(&h, &lower);
    let s_upper = saturate(&h, &upper);
    prop_assert!(lower.is_subset(&s_lower));
    prop_assert!(s_lower.is_subset(&s_upper));
    prop_assert!(s_upper.is_transitive());
    Ok(())
}

/// Adding wr edges never removes pairs from the saturation fixpoint.
pub fn saturation_grows_with_added_wr_edges(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &small(6));
    let lower = saturate_fixpoint(&h).pco;
    let mut shrunk = 0;
    let _ = for_each_full_extension(&h, &OracleBudget::default(), |full, _| {
        shrunk += usize::from(!lower.is_subset(&saturate_fixpoint(&full).pco));
        ControlFlow::Continue(())
    });
    prop_assert_eq!(shrunk, 0);
    Ok(())
}

pub fn saturation_fixpoint_is_idempotent(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    let fix = saturate_fixpoint(&h);
    prop_assert_eq!(saturate(&h, &fix.pco), fix.pco.clone());
    prop_assert_eq!(fix.acyclic, fix.pco.is_acyclic());
    // Every consistent order contains the fixpoint.
    if let Ok(v) = brute_force_check(&h.clone(), &OracleBudget::default()) {
        if let Some(w) = v.witness {
            let co = TotalOrder::new(w.commit_order);
            prop_assert!(co.extends(&saturate_fixpoint(&w.history).pco));
        }
    }
    Ok(())
}

pub fn visibility_is_monotone_in_the_commit_relation(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default().full());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
    let small_rel = base_relation(&h);
    let big_rel = TotalOrder::new(random_extension(&h, &mut rng)).to_relation();
    for r in 0..h.reads().len() {
        for t2 in 0..h.txn_count() {
            for v in [VisibilityRelation::Ser, VisibilityRelation::Prefix, VisibilityRelation::Conflict,
                      VisibilityRelation::Ra, VisibilityRelation::Rc] {
                if vis_holds(&h, &small_rel, v, t2, r) {
                    prop_assert!(vis_holds(&h, &big_rel, v, t2, r), "{v} for {t2} and read {r}");
                }
            }
        }
    }
    Ok(())
}

pub fn serializable_executions_satisfy_every_level(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default().full());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
    let order = random_extension(&h, &mut rng);
    let ser = with_level(&h, IsolationLevel::Ser);
    let co = TotalOrder::new(order);
    if all_axioms_hold(&ser, &co) {
        let mixed = levels(&mut rng, &h);
        prop_assert!(all_axioms_hold(&mixed, &co));
    }
    Ok(())
}

pub fn weakening_a_level_keeps_consistency(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
    if check_consistency(&h).status == Status::Consistent && h.txn_count() > 1 {
        let t = rng.gen_range(1..h.txn_count());
        let weaker: Vec<_> = IsolationLevel::ALL.into_iter().filter(|&l| h.iso(t).is_at_least_as_strong_as(l)).collect();
        let w = h.with_isolation(t, *weaker.choose(&mut rng).unwrap());
        prop_assert_eq!(check_consistency(&w).status, Status::Consistent);
    }
    if check_consistency(&with_level(&h, IsolationLevel::Ser)).status == Status::Consistent {
        prop_assert_eq!(check_consistency(&h).status, Status::Consistent);
    }
    Ok(())
}

pub fn consistent_verdicts_carry_valid_witnesses(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    let v = check_consistency(&h);
    match v.status {
        Status::Consistent => {
            let w = v.witness.expect("consistent verdicts carry a witness");
            prop_assert!(w.history.is_full());
            prop_assert!(is_witness(&w.history, &h));
            let exec = Execution::new(w.history.clone(), w.commit_order.clone()).expect("order extends so ∪ wr");
            prop_assert!(exec.is_consistent());
            prop_assert_eq!(w.commit_order[0], INIT);
        }
        Status::Inconsistent => prop_assert!(v.violation.is_some()),
        Status::Unknown => prop_assert!(false, "no budget was set"),
    }
    Ok(())
}

pub fn seen_store_only_prunes(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    let off = CheckOptions { search: SearchOptions { use_seen: false, max_prefixes: None }, ..CheckOptions::default() };
    let with = check_consistency(&h);
    let without = check_consistency_with(&h, &off);
    prop_assert_eq!(with.status, without.status);
    prop_assert!(with.stats.prefixes_explored <= without.stats.prefixes_explored);
    Ok(())
}

pub fn fast_extension_check_matches_the_axioms(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    let fix = saturate_fixpoint(&h);
    prop_assume!(fix.acyclic);
    let ctx = SearchContext::new(&h, &fix.pco);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
    // Random walks through consistent prefixes.
    for _ in 0..4 {
        let mut prefix = Prefix::initial(&h);
        let mut seq = vec![INIT];
        loop {
            let mut ok = Vec::new();
            for t in 1..h.txn_count() {
                if prefix.contains(t) { continue; }
                let slow = is_consistent_extension_slow(&h, &fix.pco, &seq, t);
                prop_assert_eq!(ctx.is_consistent_extension(&prefix, t), slow, "after {:?} adding {}", seq, t);
                if slow { ok.push(t); }
            }
            let Some(&t) = ok.choose(&mut rng) else { break };
            prefix = prefix.extended(&h, t);
            seq.push(t);
        }
    }
    let _ = explore_consistent_prefixes(&ctx, SearchOptions::default());
    Ok(())
}

pub fn values_follow_wr_sources(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    for e in h.wr_edges() {
        prop_assert_eq!(Some(h.value_wr(e.from, e.key)), h.txn_value(e.from.txn, e.key));
        prop_assert!(h.writes(e.from.txn, e.key));
    }
    Ok(())
}

pub fn histories_survive_serialization(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    let text = serde_json::to_string_pretty(&h.to_raw()).unwrap();
    let raw: RawHistory = serde_json::from_str(&text).unwrap();
    prop_assert_eq!(raw.clone(), h.to_raw());
    prop_assert_eq!(History::from_raw(&raw).unwrap(), h);
    Ok(())
}

/// An order is accepted by one saturation pass exactly when every axiom
/// holds under it, for every order of every full extension.
pub fn saturation_acceptance_matches_axioms(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &small(5));
    let budget = OracleBudget::default();
    let result = for_each_full_extension(&h, &budget, |full, _| {
        let base = base_relation(&full);
        let preds: Vec<_> = (0..full.txn_count()).map(|t| base.predecessors(t).clone()).collect();
        let mut mismatch = None;
        for_each_linear_extension(&preds, |order| {
            let by_saturation = accepts_order(&full, order);
            let by_axioms = all_axioms_hold(&full, &TotalOrder::new(order.to_vec()));
            if by_saturation != by_axioms {
                mismatch = Some(order.to_vec());
                return ControlFlow::Break(());
            }
            ControlFlow::Continue(())
        });
        match mismatch {
            Some(order) => panic!("acceptance differs on {order:?}"),
            None => ControlFlow::Continue(()),
        }
    });
    // Over-budget histories are refused before any enumeration.
    let _ = result;
    Ok(())
}

pub fn oracle_first_accept_matches_full_scan(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &small(5));
    let budget = OracleBudget::default();
    let Ok(first) = brute_force_check(&h, &budget) else { return Ok(()) };
    let mut any = false;
    for_each_full_extension(&h, &budget, |full, _| {
        enumerate_consistent_orders(&full, &budget, |_| { any = true; ControlFlow::Continue(()) }).unwrap();
        ControlFlow::Continue(())
    }).unwrap();
    prop_assert_eq!(first.status == Status::Consistent, any);
    Ok(())
}

pub fn checker_matches_oracle(seed: u64) -> Result<(), TestCaseError> {
    let h = sample(seed, &SampleParams::default());
    if let Ok(o) = brute_force_check(&h, &OracleBudget::default()) {
        prop_assert_eq!(check_consistency(&h).status, o.status);
    }
    Ok(())
}

pub fn saturable_check_matches_oracle(seed: u64) -> Result<(), TestCaseError> {
    let params = SampleParams::default().full().with_levels(&[IsolationLevel::Ra, IsolationLevel::Rc]);
    let h = sample(seed, &params);
    let fast = check_saturable(&h).expect("full RA/RC history");
    let o = brute_force_check(&h, &OracleBudget::default()).expect("full histories have one extension");
    prop_assert_eq!(fast, o.status == Status::Consistent);
    Ok(())
}

pub fn generated_runs_are_full_consistent_and_well_timed(seed: u64) -> Result<(), TestCaseError> {
    let sessions = 1 + (seed % 3) as usize;
    let txns = 1 + (seed / 3 % 5) as usize;
    let shape = ProgramShape::new(sessions, txns, 3, "SER:1,SI:1,RC:2".parse::<IsoMix>().unwrap());
    let program = random_program(&shape, seed);
    let Ok(out) = run_to_history(&program, seed) else { return Ok(()) };
    prop_assert!(out.history.is_full());
    prop_assert_eq!(check_consistency(&out.history).status, Status::Consistent);
    let order: Vec<_> = out.commit_order.iter().map(|id| out.history.txn_index(id).unwrap()).collect();
    prop_assert!(Execution::new(out.history.clone(), order).unwrap().is_consistent());

    let mut last = 0;
    // Per session: latest RC snapshot seen, for monotonicity along po and so.
    let mut rc_floor = vec![0u64; sessions];
    for e in &out.trace {
        prop_assert!(e.timestamp > last);
        last = e.timestamp;
        if let Some(s) = e.snapshot {
            prop_assert!(s <= e.timestamp);
        }
        let iso = out.history.iso(out.history.txn_index(&e.txn).unwrap());
        if iso == IsolationLevel::Rc {
            if let (TraceKind::Event(_), Some(s)) = (e.kind, e.snapshot) {
                prop_assert!(s >= rc_floor[e.session]);
                rc_floor[e.session] = s;
            }
        }
    }
    Ok(())
}

pub type Property = fn(u64) -> Result<(), TestCaseError>;

/// Every property with its name.
pub const PROPERTIES: &[(&str, Property)] = &[
    ("saturation_is_extensive_and_monotone", saturation_is_extensive_and_monotone),
    ("saturation_grows_with_added_wr_edges", saturation_grows_with_added_wr_edges),
    ("saturation_fixpoint_is_idempotent", saturation_fixpoint_is_idempotent),
    ("visibility_is_monotone_in_the_commit_relation", visibility_is_monotone_in_the_commit_relation),
    ("serializable_executions_satisfy_every_level", serializable_executions_satisfy_every_level),
    ("weakening_a_level_keeps_consistency", weakening_a_level_keeps_consistency),
    ("consistent_verdicts_carry_valid_witnesses", consistent_verdicts_carry_valid_witnesses),
    ("seen_store_only_prunes", seen_store_only_prunes),
    ("fast_extension_check_matches_the_axioms", fast_extension_check_matches_the_axioms),
    ("values_follow_wr_sources", values_follow_wr_sources),
    ("histories_survive_serialization", histories_survive_serialization),
    ("saturation_acceptance_matches_axioms", saturation_acceptance_matches_axioms),
    ("oracle_first_accept_matches_full_scan", oracle_first_accept_matches_full_scan),
    ("checker_matches_oracle", checker_matches_oracle),
    ("saturable_check_matches_oracle", saturable_check_matches_oracle),
    ("generated_runs_are_full_consistent_and_well_timed", generated_runs_are_full_consistent_and_well_timed),
];
