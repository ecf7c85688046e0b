//! The full heart-failure scenario: register, consent, federate, predict,
//! explain, verify and score. Optionally saves the world to a directory.

use std::path::PathBuf;

use bxhf::harness::{run_workflow, ScenarioConfig, WorldState, REPORT_FILE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut world = WorldState::build(ScenarioConfig::demo())?;
    let report = run_workflow(&mut world)?;

    for block in world.ledger.blocks() {
        let kinds: Vec<&str> = block.transactions.iter().map(|t| t.kind().as_str()).collect();
        println!("block {:>2}  {}", block.index, kinds.join(", "));
    }
    let model = world.global().expect("trained");
    println!("\nglobal model: weights {:.3?} bias {:.3}", model.weights, model.bias);
    println!("decisions {}  denied {}", report.decision_count, report.denied_count);
    for (id, verdict) in &report.verifications {
        let d = &world.decisions[id];
        println!("  {} p={:.3}  {verdict}", d.record_id, d.prediction.value);
    }
    let s = &report.security;
    println!(
        "\nS={:.4} (I={:.3} P={:.3} A={:.3})",
        s.score, s.integrity, s.provenance, s.auditability
    );
    println!(
        "J={:.5} (loss {:.5}, omega_bar {:.2e})",
        report.trust.objective, report.trust.empirical_loss, report.trust.mean_penalty
    );

    if let Some(dir) = std::env::args().nth(1).map(PathBuf::from) {
        world.save(&dir)?;
        std::fs::write(dir.join(REPORT_FILE), report.to_canonical())?;
        println!("saved world to {}", dir.display());
    }
    Ok(())
}
