//! The config-driven pipeline the CLI wraps: build a config in code (or
//! parse it from TOML), validate it, run it, and write the output bundle
//! (manifest.json, report.json, samples.csv, diagnostics.csv).

use jointmc::experiment::{
    format_report, run_experiment, run_sweep, sweep_csv, validate_config, write_outputs,
    ExperimentConfig,
};
use std::path::Path;

fn main() -> jointmc::Result<()> {
    let toml_text = r#"
version = 1
preset = "two-grids"
backend = "analytic"
target = "+0+1"
iterations_per_sample = 200
chains = 8
samples = 2000
seed = 42
spurious_mass = 0.15
"#;
    let config = ExperimentConfig::from_toml(toml_text)?;
    println!("validate: {}", validate_config(&config)?);
    println!("config hash: {}\n", config.content_hash());

    let outcome = run_experiment(&config)?;
    print!("{}", format_report(&outcome.report));

    let out = Path::new("target/example-run");
    write_outputs(out, &outcome)?;
    println!("\noutputs written to {}", out.display());

    // a small seed sweep over two targets
    let mut sweep_config = config.clone();
    sweep_config.samples = 500;
    let targets = vec!["+0-1".to_string(), "+0+1".to_string()];
    let rows = run_sweep(&sweep_config, 2, Some(&targets))?;
    println!("\nsweep:\n{}", sweep_csv(&rows));
    Ok(())
}
