//! Security score and trust objective before and after a record is tampered.

use bxhf::harness::{run_workflow, score, tamper, ScenarioConfig, TamperTarget, WorldState};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut world = WorldState::build(ScenarioConfig::demo())?;
    run_workflow(&mut world)?;
    let (s, t) = score(&world)?;
    println!(
        "clean:    I={:.3} P={:.3} A={:.3} S={:.4}  J={:.5}",
        s.integrity, s.provenance, s.auditability, s.score, t.objective
    );

    for (n, id) in ["hosp-a-02", "hosp-b-05", "hosp-b-08"].iter().enumerate() {
        tamper(&mut world, &TamperTarget::Record(id.to_string()), 7)?;
        let (s, t) = score(&world)?;
        println!(
            "{} bad:    I={:.3} P={:.3} A={:.3} S={:.4}  J={:.5}",
            n + 1,
            s.integrity,
            s.provenance,
            s.auditability,
            s.score,
            t.objective
        );
    }
    println!("J = loss + {} * omega_bar - {} * S", t.lambda1, t.lambda2);
    Ok(())
}
