//! Geometric convergence of the independence chain: when the generator
//! puts mass α on the target's support and acceptance is flat there, the
//! distance to the target contracts like (1-α)^t. Runs ensembles of
//! chains from a common worst-case start and prints measured TV against
//! the law.

use jointmc::eval::convergence_curve;
use jointmc::family::DataPoint;
use jointmc::sampler::{step_marginals, AnalyticProvider, ProposalDistribution};
use jointmc::worlds::{normalized_joint_density_1d, two_island_world};

fn main() -> jointmc::Result<()> {
    for alpha in [0.5, 0.25, 0.1] {
        let (world, spec, start) = two_island_world(alpha);
        let provider = AnalyticProvider::new(&world.family, &world.generator);
        let states = step_marginals(
            4_000,
            30,
            17,
            Some(DataPoint::new(vec![start])),
            ProposalDistribution::Generator(&world.generator),
            &provider,
            &spec,
            100_000,
        )?;
        let density = normalized_joint_density_1d(&world.family, &spec, -2.0, 2.0);
        let curve = convergence_curve(&states, -2.0, 2.0, 48, density);

        println!("alpha = {alpha}");
        println!("{:>6} {:>12} {:>12}", "step", "measured TV", "(1-a)^t");
        for t in [1usize, 2, 4, 8, 16, 30] {
            println!(
                "{:>6} {:>12.4} {:>12.4}",
                t,
                curve[t - 1],
                (1.0 - alpha).powi(t as i32)
            );
        }
        println!();
    }
    Ok(())
}
