//! Build a small chain, flip one byte in a stored block and locate it.

use bxhf::crypto::digest;
use bxhf::ledger::{ChainStatus, Ledger, ModelUpdateBody, TxBody};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ledger = Ledger::new();
    for round in 1..=6 {
        ledger.stage(
            "hosp-a",
            TxBody::ModelUpdate(ModelUpdateBody {
                node_id: "hosp-a".into(),
                round,
                delta_hash: digest(format!("delta {round}").as_bytes()),
            }),
        )?;
        ledger.commit()?;
    }
    println!("{} blocks, tip {}", ledger.len(), ledger.tip_hash());
    println!("verify: {:?}", ledger.verify_chain());

    let dump = ledger.dump();
    let reloaded = Ledger::load(&dump)?;
    println!("dump round trip identical: {}", reloaded.dump() == dump);

    let mut tampered = reloaded;
    tampered.flip_stored_byte(4, 40, 0x01);
    match tampered.verify_chain() {
        ChainStatus::Valid => println!("tamper went unnoticed"),
        ChainStatus::CorruptAt(i) => println!("after flipping byte 40 of block 4: corrupt at block {i}"),
    }
    Ok(())
}
