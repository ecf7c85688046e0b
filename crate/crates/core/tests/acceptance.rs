//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bxhf::access::{
    gated_fetch, update_consent, AccessPolicy, AccessRequest, ConsentRegistry, FetchOutcome, Outcome, Purpose, Reason,
    RecordScope,
};
use bxhf::crypto::{digest, KeyTable, SealingKey};
use bxhf::explain::{explain_linear, linear_attributions, shapley_bruteforce};
use bxhf::harness::{
    run_workflow, score, tamper, tamper_len, verify_decision, DecisionVerdict, MismatchKind, ScenarioConfig,
    TamperTarget, WorldState,
};
use bxhf::learning::{
    fed_avg, fit_from, local_update, mean_penalty, objective, objective_gradient, train_constrained, train_erm,
    Dataset, FeatureSpec, LinearModel, Link, NodeUpdate, Row, SignConstraint, TrainConfig,
};
use bxhf::ledger::{ChainStatus, Ledger, RegistrationBody, TxBody};
use bxhf::records::{PatientRecord, RecordVault, SealedRecord};
use bxhf::trust::{trust_objective, SecurityReport, SecurityWeights};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn demo_world() -> (WorldState, Vec<bxhf::crypto::Hash256>) {
    let mut world = WorldState::build(ScenarioConfig::demo()).expect("demo builds");
    let report = run_workflow(&mut world).expect("demo runs");
    let ids = report.verifications.iter().map(|(id, _)| *id).collect();
    (world, ids)
}

fn random_vec(rng: &mut ChaCha8Rng, m: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(lo..hi)).collect()
}

fn random_signs(rng: &mut ChaCha8Rng, m: usize) -> Vec<SignConstraint> {
    (0..m)
        .map(|_| match rng.gen_range(0..3) {
            0 => SignConstraint::Negative,
            1 => SignConstraint::Free,
            _ => SignConstraint::Positive,
        })
        .collect()
}

fn spec_of(baseline: Vec<f64>, signs: Vec<SignConstraint>) -> FeatureSpec {
    let names = (0..baseline.len()).map(|j| format!("f{j}")).collect();
    FeatureSpec::new(names, baseline, signs).expect("valid spec")
}

fn tamper_detection() -> Check {
    let (world, decisions) = demo_world();
    let blocks = world.ledger.len();
    let records = world.config.record_ids();
    ensure(blocks >= 10 && records.len() >= 20 && decisions.len() >= 5, || {
        format!(
            "demo too small: {blocks} blocks, {} records, {} decisions",
            records.len(),
            decisions.len()
        )
    })?;
    ensure(world.ledger.verify_chain() == ChainStatus::Valid, || {
        "untampered chain invalid".into()
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut cases = 0;
    let mut missed = Vec::new();
    let mut offset_for = |world: &WorldState, target: &TamperTarget| {
        let len = tamper_len(world, target).expect("target exists");
        rng.gen_range(0..len)
    };

    for i in 0..blocks {
        let target = TamperTarget::Block(i);
        let offset = offset_for(&world, &target);
        let mut w = world.clone();
        tamper(&mut w, &target, offset).unwrap();
        cases += 1;
        if w.ledger.verify_chain() != ChainStatus::CorruptAt(i) {
            missed.push(format!("{target}@{offset}"));
        }
    }
    for id in &records {
        let target = TamperTarget::Record(id.clone());
        let offset = offset_for(&world, &target);
        let mut w = world.clone();
        tamper(&mut w, &target, offset).unwrap();
        cases += 1;
        let reg = w.ledger.registration(id).unwrap();
        let opens = w.vault.get(id).unwrap().open(&w.keys, &reg.commitment).is_ok();
        let decisions_flagged = w
            .decisions_for(id)
            .iter()
            .all(|d| verify_decision(&w, d).unwrap() == DecisionVerdict::Mismatch(MismatchKind::Input));
        if opens || !decisions_flagged {
            missed.push(format!("{target}@{offset}"));
        }
    }
    for id in &decisions {
        let target = TamperTarget::Explanation(*id);
        let offset = offset_for(&world, &target);
        let mut w = world.clone();
        tamper(&mut w, &target, offset).unwrap();
        cases += 1;
        if verify_decision(&w, id).unwrap() != DecisionVerdict::Mismatch(MismatchKind::Explanation) {
            missed.push(format!("{target}@{offset}"));
        }
    }
    ensure(cases >= 35, || format!("only {cases} cases"))?;
    ensure(missed.is_empty(), || {
        format!("missed {} of {cases}: {missed:?}", missed.len())
    })?;
    Ok(format!(
        "{cases}/{cases} detected ({blocks} blocks, {} records, {} explanations)",
        records.len(),
        decisions.len()
    ))
}

fn explanation_completeness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=12);
        let model = LinearModel {
            weights: random_vec(&mut rng, m, -5.0, 5.0),
            bias: rng.gen_range(-5.0..5.0),
            link: if rng.gen() { Link::Logistic } else { Link::Identity },
        };
        let spec = spec_of(random_vec(&mut rng, m, -5.0, 5.0), random_signs(&mut rng, m));
        let x = random_vec(&mut rng, m, -5.0, 5.0);
        let e = explain_linear(&model, &spec, &x, "r", digest(b"x")).map_err(|e| e.to_string())?;
        worst = worst.max((e.total() - model.margin(&x)).abs());
    }
    ensure(worst <= 1e-9, || format!("max gap {worst:e}"))?;
    Ok(format!(
        "1000 instances, max |phi0 + sum(alpha) - margin| = {worst:.2e}"
    ))
}

fn shapley_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for m in 1..=10 {
        for _ in 0..50 {
            let model = LinearModel {
                weights: random_vec(&mut rng, m, -3.0, 3.0),
                bias: rng.gen_range(-3.0..3.0),
                link: Link::Logistic,
            };
            let spec = spec_of(random_vec(&mut rng, m, -2.0, 2.0), vec![SignConstraint::Free; m]);
            let x = random_vec(&mut rng, m, -2.0, 2.0);
            let closed = linear_attributions(&model, &spec, &x).map_err(|e| e.to_string())?;
            let brute = shapley_bruteforce(|z| model.margin(z), &spec, &x).map_err(|e| e.to_string())?;
            for (a, b) in closed.iter().zip(&brute) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max coordinate gap {worst:e}"))?;
    Ok(format!("m = 1..10 x 50 instances, max coordinate gap {worst:.2e}"))
}

#[derive(Clone, Copy, Debug)]
enum PolicyState {
    Granted,
    Revoked,
    Absent,
}

/// Declarative reference: the single policy (u1, scope, treatment,
/// [100, 200]) is the only candidate, checked purpose → window → granted.
fn expected_phi(
    state: PolicyState,
    institution_scope: bool,
    user: &str,
    record: &str,
    purpose: Purpose,
    now: u64,
) -> (Outcome, Reason) {
    let scope_covers = if institution_scope {
        record == "r1" || record == "r3"
    } else {
        record == "r1"
    };
    let candidate = !matches!(state, PolicyState::Absent) && user == "u1" && scope_covers;
    let reason = if !candidate {
        Reason::NoPolicy
    } else if purpose != Purpose::Treatment {
        Reason::PurposeMismatch
    } else if !(100..=200).contains(&now) {
        Reason::Expired
    } else if matches!(state, PolicyState::Revoked) {
        Reason::Revoked
    } else {
        Reason::Granted
    };
    let outcome = if reason == Reason::Granted {
        Outcome::Permit
    } else {
        Outcome::Deny
    };
    (outcome, reason)
}

fn access_truth_table() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let users = ["u1", "u2"];
    // r1 and r3 at inst-a, r2 at inst-b.
    let records = [("r1", "inst-a"), ("r2", "inst-b"), ("r3", "inst-a")];
    let phases = [50u64, 150, 250];
    let mut cases = 0;
    let mut failures = Vec::new();

    for state in [PolicyState::Granted, PolicyState::Revoked, PolicyState::Absent] {
        for institution_scope in [false, true] {
            let mut keys = KeyTable::new();
            keys.insert(SealingKey::generate("k-a", &mut rng));
            keys.insert(SealingKey::generate("k-b", &mut rng));
            let mut ledger = Ledger::new();
            let mut vault = RecordVault::new();
            for (id, inst) in records {
                let key = if inst == "inst-a" { "k-a" } else { "k-b" };
                let plain = PatientRecord {
                    record_id: id.into(),
                    institution: inst.into(),
                    features: vec![1.0],
                    label: 0.0,
                };
                let sealed = SealedRecord::seal(&plain, &keys, key, &mut rng).unwrap();
                ledger
                    .stage(
                        inst,
                        TxBody::DataRegistration(RegistrationBody {
                            record_id: id.into(),
                            institution: inst.into(),
                            key_id: key.into(),
                            commitment: sealed.commitment.digest,
                        }),
                    )
                    .unwrap();
                vault.insert(sealed);
            }
            ledger.commit().unwrap();
            let mut registry = ConsentRegistry::new();
            let policy = AccessPolicy {
                policy_id: "p1".into(),
                user_id: "u1".into(),
                scope: if institution_scope {
                    RecordScope::Institution("inst-a".into())
                } else {
                    RecordScope::Record("r1".into())
                },
                purpose: Purpose::Treatment,
                valid_from: 100,
                valid_until: 200,
                granted: true,
            };
            match state {
                PolicyState::Granted => {
                    update_consent(&mut ledger, &mut registry, "admin", policy).unwrap();
                }
                PolicyState::Revoked => {
                    let revoked = policy.revoked();
                    update_consent(&mut ledger, &mut registry, "admin", policy).unwrap();
                    update_consent(&mut ledger, &mut registry, "admin", revoked).unwrap();
                }
                PolicyState::Absent => {}
            }
            ledger.commit().unwrap();

            let before = ledger.count_kind(bxhf::ledger::TxKind::AccessDecision);
            let mut evaluated = 0;
            for user in users {
                for (record, _) in records {
                    for purpose in Purpose::ALL {
                        for now in phases {
                            cases += 1;
                            evaluated += 1;
                            let request = AccessRequest::new(user, record, purpose);
                            let got = gated_fetch(&mut ledger, &registry, &vault, &keys, &request, now)
                                .map_err(|e| e.to_string())?;
                            let (outcome, reason) = expected_phi(state, institution_scope, user, record, purpose, now);
                            let tx = got.decision_tx().clone();
                            let body_ok = match &tx.body {
                                TxBody::AccessDecision(b) => {
                                    b.user_id == user
                                        && b.record_id == record
                                        && b.purpose == purpose
                                        && b.outcome == outcome
                                        && b.reason == reason
                                        && b.evaluated_at == now
                                }
                                _ => false,
                            };
                            let released_ok = match &got {
                                FetchOutcome::Released { record: r, .. } => {
                                    outcome == Outcome::Permit && r.record_id == record
                                }
                                FetchOutcome::Denied { reason: r, .. } => outcome == Outcome::Deny && *r == reason,
                            };
                            let staged_once = ledger.pending().len() == 1;
                            ledger.commit().unwrap();
                            if !(body_ok && released_ok && staged_once) {
                                failures.push(format!("{state:?}/{institution_scope}/{user}/{record}/{purpose}/{now}"));
                            }
                        }
                    }
                }
            }
            let logged = ledger.count_kind(bxhf::ledger::TxKind::AccessDecision) - before;
            if logged != evaluated {
                failures.push(format!(
                    "{state:?}/{institution_scope}: {logged} txs for {evaluated} evaluations"
                ));
            }
        }
    }
    ensure(failures.is_empty(), || {
        format!(
            "{} mismatches: {:?}",
            failures.len(),
            &failures[..failures.len().min(5)]
        )
    })?;
    Ok(format!("{cases} cases match, one AccessDecision tx each"))
}

fn federated_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    for k in [2usize, 4] {
        for link in [Link::Logistic, Link::Identity] {
            for _ in 0..5 {
                let m = 4;
                let per_shard = 6;
                let shards: Vec<Dataset> = (0..k)
                    .map(|s| {
                        let rows = (0..per_shard)
                            .map(|_| Row {
                                features: random_vec(&mut rng, m, -1.0, 1.0),
                                label: match link {
                                    Link::Logistic => f64::from(u8::from(rng.gen::<bool>())),
                                    Link::Identity => rng.gen_range(-2.0..2.0),
                                },
                            })
                            .collect();
                        Dataset::new(format!("node-{s}"), rows)
                    })
                    .collect();
                let pooled = Dataset::new("pooled", shards.iter().flat_map(|s| s.rows.clone()).collect());
                let spec = FeatureSpec::unconstrained(m);
                let config = TrainConfig::new(0.3, 1, link);
                let global = LinearModel {
                    weights: random_vec(&mut rng, m, -1.0, 1.0),
                    bias: rng.gen_range(-1.0..1.0),
                    link,
                };
                let updates: Vec<NodeUpdate> = shards
                    .iter()
                    .map(|s| NodeUpdate {
                        node_id: s.institution.clone(),
                        delta: local_update(&global, s, &spec, &config, 1).unwrap(),
                        shard_size: s.len(),
                    })
                    .collect();
                let federated = global.apply(&fed_avg(&updates).unwrap()).unwrap();
                let central = fit_from(&global, &pooled, &spec, &config, 1).unwrap().model;
                for (a, b) in federated.params().coords().iter().zip(central.params().coords()) {
                    worst = worst.max((a - b).abs());
                }
                runs += 1;
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max coordinate gap {worst:e}"))?;
    Ok(format!("K in {{2,4}}, {runs} runs, max coordinate gap {worst:.2e}"))
}

fn planted_violation_data() -> (Dataset, FeatureSpec) {
    // Feature 0 is declared risk-increasing but the planted effect is negative.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let truth = [-2.5, 1.5, 0.5];
    let rows = (0..400)
        .map(|_| {
            let x = random_vec(&mut rng, 3, 0.0, 1.0);
            let margin: f64 = truth.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + 0.2;
            let y = f64::from(u8::from(rng.gen::<f64>() < bxhf::learning::sigmoid(margin)));
            Row { features: x, label: y }
        })
        .collect();
    let spec = FeatureSpec::new(
        vec!["marker".into(), "ecg".into(), "age".into()],
        vec![0.0; 3],
        vec![SignConstraint::Positive, SignConstraint::Positive, SignConstraint::Free],
    )
    .unwrap();
    (Dataset::new("planted", rows), spec)
}

fn constrained_efficacy() -> Check {
    let (data, spec) = planted_violation_data();
    let base = TrainConfig::new(0.5, 3000, Link::Logistic);
    let erm = train_erm(&data, &spec, &base).map_err(|e| e.to_string())?;
    let erm_violation = mean_penalty(&erm, &spec, &data).unwrap();
    ensure(erm_violation > 1e-2, || {
        format!("ERM shows no violation ({erm_violation:e})")
    })?;
    let lambdas = [0.0, 0.1, 1.0, 10.0, 1000.0];
    let violations: Vec<f64> = lambdas
        .iter()
        .map(|&l| {
            let model = train_constrained(&data, &spec, &base.clone().with_lambda(l)).unwrap();
            mean_penalty(&model, &spec, &data).unwrap()
        })
        .collect();
    let monotone = violations.windows(2).all(|w| w[1] <= w[0]);
    ensure(monotone, || format!("not monotone: {violations:?}"))?;
    ensure(violations[4] < 1e-3, || {
        format!("violation at 1000 is {:e}", violations[4])
    })?;
    let shown: Vec<String> = violations.iter().map(|v| format!("{v:.3e}")).collect();
    Ok(format!("violation over lambda {lambdas:?}: [{}]", shown.join(", ")))
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut points = 0;
    while points < 100 {
        let m = rng.gen_range(1..=5);
        let link = if rng.gen() { Link::Logistic } else { Link::Identity };
        let spec = spec_of(random_vec(&mut rng, m, -0.5, 0.5), random_signs(&mut rng, m));
        let rows: Vec<Row> = (0..rng.gen_range(3..12))
            .map(|_| Row {
                features: random_vec(&mut rng, m, -1.0, 1.0),
                label: match link {
                    Link::Logistic => f64::from(u8::from(rng.gen::<bool>())),
                    Link::Identity => rng.gen_range(-2.0..2.0),
                },
            })
            .collect();
        let data = Dataset::new("g", rows);
        let model = LinearModel {
            weights: random_vec(&mut rng, m, -2.0, 2.0),
            bias: rng.gen_range(-1.0..1.0),
            link,
        };
        let lambda = rng.gen_range(0.0..5.0);
        let kink_free = (0..m).all(|j| {
            spec.signs[j] == SignConstraint::Free
                || data
                    .rows
                    .iter()
                    .all(|r| (model.weights[j] * (r.features[j] - spec.baseline[j])).abs() > 1e-4)
        });
        if !kink_free {
            continue;
        }
        points += 1;
        let analytic = objective_gradient(&model, &spec, &data, lambda).unwrap().coords();
        let f = |mdl: &LinearModel| objective(mdl, &spec, &data, lambda).unwrap();
        for (c, a) in analytic.iter().enumerate() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            if c < m {
                plus.weights[c] += h;
                minus.weights[c] -= h;
            } else {
                plus.bias += h;
                minus.bias -= h;
            }
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-5, || format!("max relative error {worst:e}"))?;
    Ok(format!("100 kink-free points, max relative error {worst:.2e}"))
}

fn trust_identities() -> Check {
    let (world, _) = demo_world();
    let model = world.global().unwrap().clone();
    let data = world.pooled_dataset();
    let (security, trust) = score(&world).map_err(|e| e.to_string())?;

    let zero = trust_objective(&model, &data, &world.spec, &security, 0.0, 0.0).unwrap();
    let plain_loss = bxhf::learning::loss(&model, &data).unwrap();
    ensure(zero.objective == plain_loss, || {
        format!("J={} vs loss={plain_loss}", zero.objective)
    })?;

    let mut worst_delta: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let comps: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let s1 = SecurityReport::from_components(comps[0], comps[1], comps[2], SecurityWeights::default()).unwrap();
        let s2 = SecurityReport::from_components(comps[3], comps[4], comps[5], SecurityWeights::default()).unwrap();
        let (l1, l2) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
        let j1 = trust_objective(&model, &data, &world.spec, &s1, l1, l2)
            .unwrap()
            .objective;
        let j2 = trust_objective(&model, &data, &world.spec, &s2, l1, l2)
            .unwrap()
            .objective;
        worst_delta = worst_delta.max(((j2 - j1) - (-l2 * (s2.score - s1.score))).abs());
    }
    ensure(worst_delta <= 1e-12, || format!("dJ identity off by {worst_delta:e}"))?;

    ensure(world.config.trust.lambda2 > 0.0, || "demo lambda2 is zero".into())?;
    let mut failures = Vec::new();
    for id in world.config.record_ids() {
        let mut w = world.clone();
        tamper(&mut w, &TamperTarget::Record(id.clone()), 0).unwrap();
        let (s2, t2) = score(&w).unwrap();
        if !(s2.score < security.score && t2.objective > trust.objective) {
            failures.push(id);
        }
    }
    ensure(failures.is_empty(), || format!("S/J did not move for {failures:?}"))?;
    Ok(format!(
        "J=loss at zero weights; dJ=-l2*dS within {worst_delta:.1e}; S down and J up for all {} record tampers",
        world.config.record_ids().len()
    ))
}

fn determinism() -> Check {
    let run = || {
        let mut world = WorldState::build(ScenarioConfig::demo()).unwrap();
        let report = run_workflow(&mut world).unwrap();
        (world.ledger.dump(), report.to_canonical(), world.fingerprint().unwrap())
    };
    let (d1, r1, f1) = run();
    let (d2, r2, f2) = run();
    ensure(d1 == d2, || "ledger dumps differ".into())?;
    ensure(r1 == r2, || "reports differ".into())?;
    ensure(f1 == f2, || "world state differs".into())?;

    let mut files = vec![d1.clone(), Ledger::new().dump()];
    let (world, _) = demo_world();
    for i in 0..world.ledger.len() {
        let mut w = world.clone();
        let len = tamper_len(&w, &TamperTarget::Block(i)).unwrap();
        tamper(&mut w, &TamperTarget::Block(i), i * 7 % len).unwrap();
        files.push(w.ledger.dump());
    }
    for f in &files {
        let again = Ledger::load(f).map_err(|e| e.to_string())?.dump();
        ensure(&again == f, || "load/dump round trip changed bytes".into())?;
    }
    Ok(format!(
        "identical dumps ({} bytes) and reports; {} ledger files round-trip",
        d1.len(),
        files.len()
    ))
}

fn sha256_vectors() -> Check {
    let empty = digest(b"").to_hex();
    let abc = digest(b"abc").to_hex();
    ensure(
        empty == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        || empty.clone(),
    )?;
    ensure(
        abc == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
        || abc.clone(),
    )?;
    Ok("empty string and \"abc\" digests match".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("tamper detection", tamper_detection),
        ("explanation completeness", explanation_completeness),
        ("shapley oracle equivalence", shapley_equivalence),
        ("access-control truth table", access_truth_table),
        ("federated one-step identity", federated_identity),
        ("constrained-training efficacy", constrained_efficacy),
        ("gradient check", gradient_check),
        ("trust objective identities", trust_identities),
        ("determinism", determinism),
        ("sha-256 conformance", sha256_vectors),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let ms = t.elapsed().as_millis();
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}) [{ms} ms]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({detail}) [{ms} ms]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
