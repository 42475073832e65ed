//! Training the learned ratio backend: fits the shared-trunk network on
//! labeled real data and generator draws, verifies its gradients against
//! finite differences, and compares the learned label posterior and
//! real-vs-generated odds to their closed forms.

use jointmc::net::{
    gradient_check, train_heads, CalibrationParams, LearnedProvider, TrainingBatch,
    TrainingConfig, TrainingData,
};
use jointmc::sampler::{chain_rng, RatioProvider};
use jointmc::worlds::overlap_1d;
use ndarray::Array2;
use rand::Rng;

fn main() -> jointmc::Result<()> {
    let world = overlap_1d();
    let mut rng = chain_rng(7, 1000);
    let real: Vec<(Vec<f64>, usize)> =
        (0..30_000).map(|_| world.family.sample_labeled(&mut rng)).collect();
    let generated: Vec<(Vec<f64>, Option<usize>)> = (0..30_000)
        .map(|_| (world.generator.sample(&mut rng).coordinates, None))
        .collect();
    let data = TrainingData { real, generated };

    let config = TrainingConfig {
        hidden: vec![64, 64],
        epochs: 25,
        seed: 3,
        ..TrainingConfig::default()
    };
    let (net, losses) = train_heads(&data, 2, None, &config)?;
    println!("loss: first epoch {:.4}, last epoch {:.4}", losses[0], losses.last().unwrap());

    // verify gradients on a fresh batch
    let batch = TrainingBatch {
        real_x: Array2::from_shape_fn((32, 1), |_| rng.random_range(-3.0..3.0)),
        real_label: (0..32).map(|_| rng.random_range(0..2)).collect(),
        gen_x: Array2::from_shape_fn((32, 1), |_| rng.random_range(-3.0..3.0)),
        gen_condition: None,
    };
    let max_rel = gradient_check(&net, &batch, 250, 9)?;
    println!("gradient check: max relative error {max_rel:.2e}");

    let provider =
        LearnedProvider::new(net, CalibrationParams::default(), world.family.gammas())?;
    println!("\n{:>6} {:>12} {:>12} {:>12} {:>12}", "x", "dr learned", "dr exact", "odds learned", "odds exact");
    for x in [-2.5f64, -2.0, -1.0, 0.0, 1.0, 2.0] {
        let learned = provider.dr_vector(&[x])?[0];
        let exact = world.family.analytic_dr(0, &[x])?;
        let odds_learned = provider.log_dv_odds(&[x])?;
        let odds_exact = jointmc::family::analytic_log_dv_odds(&world.family, &world.generator, &[x])?;
        println!("{x:>6.2} {learned:>12.4} {exact:>12.4} {odds_learned:>12.4} {odds_exact:>12.4}");
    }
    Ok(())
}
