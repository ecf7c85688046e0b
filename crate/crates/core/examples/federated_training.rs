//! Three rounds of federated averaging across two hospitals, each round
//! logged on the ledger, compared with pooled training.

use bxhf::harness::ScenarioConfig;
use bxhf::learning::{
    fed_avg, local_update, log_model_update, loss, train_erm, Dataset, LinearModel, NodeUpdate, Row, TrainConfig,
};
use bxhf::ledger::{Ledger, TxKind};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ScenarioConfig::demo();
    let records = config.materialize_records();
    let spec = config.resolved_spec(&records);
    let shard = |inst: &str| {
        let rows = records
            .iter()
            .filter(|r| r.institution == inst)
            .map(|r| Row {
                features: r.features.clone(),
                label: r.label,
            })
            .collect();
        Dataset::new(inst, rows)
    };
    let shards = [shard("hosp-a"), shard("hosp-b")];
    let pooled = Dataset::new("pooled", shards.iter().flat_map(|s| s.rows.clone()).collect());
    let train = TrainConfig::new(0.1, 200, config.link);

    let mut ledger = Ledger::new();
    let mut global = LinearModel::zeros(spec.dim(), config.link);
    for round in 1..=3 {
        let mut updates = Vec::new();
        for s in &shards {
            let delta = local_update(&global, s, &spec, &train, 50)?;
            log_model_update(&mut ledger, &s.institution, round, &delta)?;
            updates.push(NodeUpdate {
                node_id: s.institution.clone(),
                delta,
                shard_size: s.len(),
            });
        }
        global = global.apply(&fed_avg(&updates)?)?;
        ledger.commit()?;
        println!("round {round}: pooled loss {:.5}", loss(&global, &pooled)?);
    }
    let central = train_erm(&pooled, &spec, &TrainConfig { epochs: 150, ..train })?;
    println!("federated weights {:.3?} bias {:.3}", global.weights, global.bias);
    println!("pooled    weights {:.3?} bias {:.3}", central.weights, central.bias);
    println!("model updates on ledger: {}", ledger.count_kind(TxKind::ModelUpdate));
    Ok(())
}
