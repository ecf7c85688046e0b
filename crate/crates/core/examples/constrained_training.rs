//! Sweep the plausibility weight on data whose first feature has the
//! "wrong" effect direction and watch the sign violation vanish.

use bxhf::learning::{
    loss, mean_penalty, sigmoid, train_constrained, Dataset, FeatureSpec, Link, Row, SignConstraint, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = [-2.0, 1.5, 0.5];
    let rows = (0..300)
        .map(|_| {
            let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let m: f64 = truth.iter().zip(&x).map(|(w, v)| w * v).sum();
            let y = f64::from(u8::from(rng.gen::<f64>() < sigmoid(m)));
            Row { features: x, label: y }
        })
        .collect();
    let data = Dataset::new("planted", rows);
    let spec = FeatureSpec::new(
        vec!["troponin".into(), "ecg_abnormality".into(), "age".into()],
        vec![0.0; 3],
        vec![SignConstraint::Positive, SignConstraint::Positive, SignConstraint::Free],
    )?;

    println!("{:>8}  {:>10}  {:>12}  weights", "lambda", "loss", "violation");
    for lambda in [0.0, 0.01, 0.1, 1.0, 10.0, 1000.0] {
        let config = TrainConfig::new(0.5, 2000, Link::Logistic).with_lambda(lambda);
        let model = train_constrained(&data, &spec, &config)?;
        println!(
            "{lambda:>8}  {:>10.5}  {:>12.3e}  {:.3?}",
            loss(&model, &data)?,
            mean_penalty(&model, &spec, &data)?,
            model.weights
        );
    }
    Ok(())
}
