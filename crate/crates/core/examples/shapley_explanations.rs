//! Closed-form linear Shapley values checked against exhaustive coalition
//! enumeration.

use bxhf::crypto::digest;
use bxhf::explain::{explain_linear, shapley_bruteforce};
use bxhf::learning::{FeatureSpec, LinearModel, Link, SignConstraint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = FeatureSpec::new(
        vec![
            "troponin".into(),
            "ecg_abnormality".into(),
            "age".into(),
            "systolic_bp".into(),
        ],
        vec![0.0, 0.0, 0.5, 0.5],
        vec![
            SignConstraint::Positive,
            SignConstraint::Positive,
            SignConstraint::Free,
            SignConstraint::Free,
        ],
    )?;
    let model = LinearModel {
        weights: vec![2.9, 1.7, 0.6, -0.4],
        bias: -2.1,
        link: Link::Logistic,
    };
    let x = [0.91, 1.0, 0.72, 0.35];

    let e = explain_linear(&model, &spec, &x, "hosp-a-03", digest(b"commitment"))?;
    print!("{}", e.table());
    println!("margin(x) = {:.6}", model.margin(&x));

    let brute = shapley_bruteforce(|z| model.margin(z), &spec, &x)?;
    let gap = e
        .ordered(&spec)
        .iter()
        .zip(&brute)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("max gap to brute-force Shapley over 16 coalitions: {gap:.2e}");
    println!("explanation hash {}", e.hash()?);
    Ok(())
}
