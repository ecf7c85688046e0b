use proptest::prelude::*;

use bxhf::access::{AccessRequest, Purpose};
use bxhf::harness::{
    run_workflow, score, tamper, tamper_len, verify_decision, DecisionVerdict, Institution, MismatchKind, RecordSource,
    ScenarioConfig, TamperTarget, WorldState,
};
use bxhf::ledger::TxKind;
use bxhf::trust::{trust_objective, SecurityReport, SecurityWeights};

fn demo() -> WorldState {
    let mut world = WorldState::build(ScenarioConfig::demo()).unwrap();
    run_workflow(&mut world).unwrap();
    world
}

#[test]
fn every_decision_and_tamper_kind_is_flagged() {
    let world = demo();
    let ids: Vec<_> = world.decisions.keys().copied().collect();
    for id in &ids {
        assert_eq!(verify_decision(&world, id).unwrap(), DecisionVerdict::Valid);
        let block = world.ledger.block_of(id).unwrap();
        let record = world.decisions[id].record_id.clone();
        let cases = [
            (TamperTarget::Block(block), MismatchKind::Chain),
            (TamperTarget::Record(record), MismatchKind::Input),
            (TamperTarget::Explanation(*id), MismatchKind::Explanation),
        ];
        for (target, expected) in cases {
            let len = tamper_len(&world, &target).unwrap();
            for offset in [0, len / 2, len - 1] {
                let mut w = world.clone();
                tamper(&mut w, &target, offset).unwrap();
                assert_eq!(
                    verify_decision(&w, id).unwrap(),
                    DecisionVerdict::Mismatch(expected),
                    "{target} at {offset}"
                );
            }
        }
    }
}

#[test]
fn block_tamper_spares_earlier_decisions() {
    let world = demo();
    let last = world.ledger.len() - 1;
    let mut w = world.clone();
    tamper(&mut w, &TamperTarget::Block(last), 12).unwrap();
    let mut verdicts: Vec<_> = world
        .decisions
        .keys()
        .map(|id| (world.ledger.block_of(id).unwrap(), verify_decision(&w, id).unwrap()))
        .collect();
    verdicts.sort_by_key(|(b, _)| *b);
    for (block, verdict) in verdicts {
        let expected = if block == last {
            DecisionVerdict::Mismatch(MismatchKind::Chain)
        } else {
            DecisionVerdict::Valid
        };
        assert_eq!(verdict, expected, "block {block}");
    }
}

#[test]
fn ground_truth_events_match_the_ledger() {
    let world = demo();
    assert_eq!(world.access_events(), world.ledger.count_kind(TxKind::AccessDecision));
    for kind in [
        TxKind::DataRegistration,
        TxKind::ConsentUpdate,
        TxKind::ModelUpdate,
        TxKind::DecisionRecord,
    ] {
        let logged = world.events.iter().filter(|e| e.kind == kind).count();
        assert_eq!(logged, world.ledger.count_kind(kind), "{kind}");
    }
    let (s, _) = score(&world).unwrap();
    assert_eq!(s.auditability, 1.0);
}

#[test]
fn audit_trail_follows_the_event_log() {
    let world = demo();
    for id in world.config.record_ids() {
        let on_chain: Vec<TxKind> = world.ledger.audit_trail(&id).iter().map(|t| t.kind()).collect();
        let logged: Vec<TxKind> = world
            .events
            .iter()
            .filter(|e| e.record_id.as_deref() == Some(id.as_str()))
            .map(|e| e.kind)
            .collect();
        assert_eq!(on_chain, logged, "{id}");
    }
}

#[test]
fn three_nodes_two_rounds_counts() {
    let mut config = ScenarioConfig::demo();
    config.institutions.push(Institution {
        id: "hosp-c".into(),
        key_id: "key-hosp-c".into(),
    });
    config.records.push(RecordSource::Generated {
        institution: "hosp-c".into(),
        count: 4,
    });
    config.federation.rounds = 2;
    config.requests.retain(|r| r.user_id != "researcher-dee");
    let mut world = WorldState::build(config).unwrap();
    let report = run_workflow(&mut world).unwrap();
    assert_eq!(world.ledger.count_kind(TxKind::ModelUpdate), 6);
    assert_eq!(world.ledger.count_kind(TxKind::DecisionRecord), 5);
    assert_eq!(report.decision_count, 5);
}

#[test]
fn save_and_load_preserve_the_world() {
    let world = demo();
    let dir = tempfile::tempdir().unwrap();
    world.save(dir.path()).unwrap();
    let back = WorldState::load(dir.path()).unwrap();
    assert_eq!(back.fingerprint().unwrap(), world.fingerprint().unwrap());
    for id in world.decisions.keys() {
        assert_eq!(verify_decision(&back, id).unwrap(), DecisionVerdict::Valid);
    }
}

#[test]
fn denied_request_leaves_no_decision() {
    let mut config = ScenarioConfig::demo();
    config.requests = vec![AccessRequest::new("researcher-dee", "hosp-a-05", Purpose::Research)];
    let mut world = WorldState::build(config).unwrap();
    let report = run_workflow(&mut world).unwrap();
    assert_eq!(report.decision_count, 0);
    assert_eq!(report.denied_count, 1);
    assert!(world.decisions_for("hosp-a-05").is_empty());
    assert_eq!(world.ledger.audit_trail("hosp-a-05").len(), 2);
}

#[test]
fn j_strictly_decreases_in_s() {
    let world = demo();
    let model = world.global().unwrap();
    let data = world.pooled_dataset();
    let mut last = f64::INFINITY;
    for k in 0..=20 {
        let x = k as f64 / 20.0;
        let s = SecurityReport::from_components(x, x, x, SecurityWeights::default()).unwrap();
        let j = trust_objective(model, &data, &world.spec, &s, 1.0, 0.5)
            .unwrap()
            .objective;
        assert!(j < last);
        last = j;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn security_score_stays_in_unit_interval(
        sites in proptest::collection::vec((0..3usize, 0..20usize, 0usize..4096), 0..6),
    ) {
        let mut world = demo();
        let ids = world.config.record_ids();
        let decisions: Vec<_> = world.decisions.keys().copied().collect();
        for (kind, pick, raw) in sites {
            let target = match kind {
                0 => TamperTarget::Block(pick % world.ledger.len()),
                1 => TamperTarget::Record(ids[pick % ids.len()].clone()),
                _ => TamperTarget::Explanation(decisions[pick % decisions.len()]),
            };
            let len = tamper_len(&world, &target).unwrap();
            tamper(&mut world, &target, raw % len).unwrap();
        }
        let (s, _) = score(&world).unwrap();
        for v in [s.integrity, s.provenance, s.auditability, s.score] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
