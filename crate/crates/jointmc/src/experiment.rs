//! Experiment orchestration: a versioned TOML config selects a preset
//! world, a ratio backend (closed-form or trained), an optional latent
//! adaptation phase, and a sampling budget; a run produces a manifest,
//! a metrics report, and CSV sample/diagnostic dumps.
//!
//! Reproducibility contract: every random quantity derives from the config
//! seed through fixed ChaCha streams (chains by index, training and
//! adaptation on reserved streams). No wall-clock entropy enters anywhere,
//! so a config hash plus the crate version pins a run exactly.

use crate::adapt::{adaptation_round, AdaptationConfig, AdaptationRound, AdaptedLatent, EmConfig};
use crate::algebra::JointClassSpec;
use crate::error::{Error, Result};
use crate::eval::{evaluate_samples, SpecEvaluation};
use crate::net::{train_heads, CalibrationParams, LearnedProvider, TrainingConfig, TrainingData};
use crate::sampler::{
    run_sampler, AnalyticProvider, ChainDiagnostics, EmissionMode, EmittedSample,
    ProposalDistribution, RatioProvider, SamplerConfig,
};
use crate::worlds::{
    attribute_cube_world, overlap_1d, shared_minority_world, two_grids, two_island_world,
    AnalyticWorld,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// Everything a run needs, deserializable from TOML.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    /// World preset: `overlap-1d`, `two-grids`, `two-islands`,
    /// `shared-minority`, or `attribute-cube`.
    pub preset: String,
    /// Ratio backend: `analytic` or `learned`.
    pub backend: String,
    /// Target in canonical text form, e.g. `+0+1` or `+0-1`.
    pub target: String,
    pub iterations_per_sample: usize,
    pub chains: usize,
    pub samples: usize,
    #[serde(default = "default_emission")]
    pub emission: EmissionMode,
    pub seed: u64,
    #[serde(default = "default_max_init_attempts")]
    pub max_init_attempts: usize,
    /// Preset parameter: background mass for `two-grids` (default 0.15).
    pub spurious_mass: Option<f64>,
    /// Preset parameter: target-class generator mass for `two-islands`.
    pub alpha: Option<f64>,
    /// Per-class γ overrides; defaults to the world's exact values.
    pub gamma_overrides: Option<Vec<f64>>,
    pub training: Option<TrainingSection>,
    pub adaptation: Option<AdaptationSection>,
}

fn default_emission() -> EmissionMode {
    EmissionMode::FreshChainPerSample
}

fn default_max_init_attempts() -> usize {
    1_000_000
}

/// Learned-backend settings: dataset sizes, optimizer, calibration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_train_samples")]
    pub real_samples: usize,
    #[serde(default = "default_train_samples")]
    pub generated_samples: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "default_temperature")]
    pub dv_temperature: f64,
    #[serde(default = "default_temperature")]
    pub dr_temperature: f64,
}

fn default_train_samples() -> usize {
    50_000
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    128
}
fn default_lr() -> f64 {
    1e-3
}
fn default_lr_decay() -> f64 {
    1.0
}
fn default_temperature() -> f64 {
    1.0
}

/// Latent adaptation settings: number of rounds before the final sampling
/// pass, pilot budget per round, and the mixture size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationSection {
    pub rounds: usize,
    #[serde(default = "default_pilot")]
    pub pilot_samples: usize,
    #[serde(default = "default_components")]
    pub components: usize,
}

fn default_pilot() -> usize {
    2000
}
fn default_components() -> usize {
    8
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))?;
        if config.version != CONFIG_FORMAT_VERSION {
            return Err(Error::FormatVersion(config.version));
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// FNV-1a over the canonical JSON encoding; stable across runs and
    /// platforms, independent of TOML formatting.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }
}

/// Builds the preset world named by the config.
pub fn build_world(config: &ExperimentConfig) -> Result<AnalyticWorld> {
    match config.preset.as_str() {
        "overlap-1d" => Ok(overlap_1d()),
        "two-grids" => Ok(two_grids(config.spurious_mass.unwrap_or(0.15))),
        "two-islands" => {
            let alpha = config.alpha.unwrap_or(0.25);
            if !(0.0 < alpha && alpha < 1.0) {
                return Err(Error::config("alpha", "must lie in (0, 1)"));
            }
            Ok(two_island_world(alpha).0)
        }
        "shared-minority" => Ok(shared_minority_world()),
        "attribute-cube" => Ok(attribute_cube_world()),
        other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
    }
}

/// A provider of either flavor, usable wherever a [`RatioProvider`] is.
pub enum ProviderHandle<'a> {
    Analytic(AnalyticProvider<'a>),
    Learned(LearnedProvider),
}

impl RatioProvider for ProviderHandle<'_> {
    fn class_count(&self) -> usize {
        match self {
            ProviderHandle::Analytic(p) => p.class_count(),
            ProviderHandle::Learned(p) => p.class_count(),
        }
    }

    fn gammas(&self) -> &[f64] {
        match self {
            ProviderHandle::Analytic(p) => p.gammas(),
            ProviderHandle::Learned(p) => p.gammas(),
        }
    }

    fn log_dv_odds(&self, x: &[f64]) -> Result<f64> {
        match self {
            ProviderHandle::Analytic(p) => p.log_dv_odds(x),
            ProviderHandle::Learned(p) => p.log_dv_odds(x),
        }
    }

    fn dr_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            ProviderHandle::Analytic(p) => p.dr_vector(x),
            ProviderHandle::Learned(p) => p.dr_vector(x),
        }
    }

    fn log_df(&self, c: usize, x: &[f64]) -> Result<f64> {
        match self {
            ProviderHandle::Analytic(p) => p.log_df(c, x),
            ProviderHandle::Learned(p) => p.log_df(c, x),
        }
    }

    fn score_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<(f64, Vec<f64>)>> {
        match self {
            ProviderHandle::Analytic(p) => p.score_batch(xs),
            ProviderHandle::Learned(p) => p.score_batch(xs),
        }
    }
}

/// RNG stream indices reserved for non-chain randomness.
const STREAM_TRAIN_REAL: u64 = 1 << 32;
const STREAM_TRAIN_GEN: u64 = (1 << 32) + 1;

/// Builds the ratio backend for a world. The learned path draws labeled
/// real data and generator data on reserved RNG streams, trains the heads,
/// and wires in calibration temperatures from the config.
pub fn build_provider<'a>(
    config: &ExperimentConfig,
    world: &'a AnalyticWorld,
) -> Result<ProviderHandle<'a>> {
    let gammas = config
        .gamma_overrides
        .clone()
        .unwrap_or_else(|| world.family.gammas());
    if gammas.len() != world.class_count() {
        return Err(Error::DimensionMismatch {
            expected: world.class_count(),
            got: gammas.len(),
        });
    }
    match config.backend.as_str() {
        "analytic" => Ok(ProviderHandle::Analytic(
            AnalyticProvider::new(&world.family, &world.generator).with_gammas(gammas),
        )),
        "learned" => {
            let section = config.training.clone().unwrap_or(TrainingSection {
                real_samples: default_train_samples(),
                generated_samples: default_train_samples(),
                hidden: default_hidden(),
                epochs: default_epochs(),
                batch_size: default_batch(),
                learning_rate: default_lr(),
                lr_decay: default_lr_decay(),
                dv_temperature: 1.0,
                dr_temperature: 1.0,
            });
            let mut rng = crate::sampler::chain_rng(config.seed, STREAM_TRAIN_REAL);
            let real: Vec<(Vec<f64>, usize)> = (0..section.real_samples)
                .map(|_| world.family.sample_labeled(&mut rng))
                .collect();
            let mut rng = crate::sampler::chain_rng(config.seed, STREAM_TRAIN_GEN);
            let generated: Vec<(Vec<f64>, Option<usize>)> = (0..section.generated_samples)
                .map(|_| (world.generator.sample(&mut rng).coordinates, None))
                .collect();
            let data = TrainingData { real, generated };
            let train_config = TrainingConfig {
                hidden: section.hidden.clone(),
                learning_rate: section.learning_rate,
                lr_decay: section.lr_decay,
                batch_size: section.batch_size,
                epochs: section.epochs,
                seed: config.seed,
            };
            let (net, _) = train_heads(&data, world.class_count(), None, &train_config)?;
            let calibration = CalibrationParams {
                dv_temperature: section.dv_temperature,
                dr_temperature: section.dr_temperature,
                df_temperature: 1.0,
            };
            Ok(ProviderHandle::Learned(LearnedProvider::new(net, calibration, gammas)?))
        }
        other => Err(Error::config("backend", format!("unknown backend `{other}`"))),
    }
}

/// What a single run writes out, before serialization.
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub report: RunReport,
    pub samples: Vec<EmittedSample>,
}

/// Frozen provenance of a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub crate_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    /// Chains use ChaCha streams `0..chains` of the config seed.
    pub chain_stream_range: (u64, u64),
}

/// Aggregate metrics of a run.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub evaluation: SpecEvaluation,
    pub diagnostics: ChainDiagnostics,
    pub adaptation: Option<Vec<AdaptationSummary>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdaptationSummary {
    pub round: usize,
    pub steps_used: usize,
    pub init_attempts: usize,
    pub mean_acceptance: f64,
}

/// Executes a config end to end: world, provider, optional adaptation
/// rounds, sampling, evaluation.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    let world = build_world(config)?;
    let spec = JointClassSpec::parse(&config.target, world.class_count(), None)?;
    let provider = build_provider(config, &world)?;

    let mut adaptation_summaries = None;
    let mut adapted: Option<AdaptedLatent> = None;
    if let Some(section) = &config.adaptation {
        let mut current = AdaptedLatent::identity(world.generator.latent_dim());
        let mut summaries = Vec::with_capacity(section.rounds);
        for round in 0..section.rounds {
            let round_config = AdaptationConfig {
                pilot_samples: section.pilot_samples,
                em: EmConfig {
                    components: section.components,
                    seed: config.seed.wrapping_add(round as u64),
                    ..EmConfig::default()
                },
                seed: config.seed ^ 0x5eed_ada9_7000_0000u64.wrapping_add(round as u64),
                max_init_attempts: config.max_init_attempts,
                ..AdaptationConfig::default()
            };
            let outcome: AdaptationRound =
                adaptation_round(&world.generator, &current, &provider, &spec, &round_config)?;
            summaries.push(AdaptationSummary {
                round,
                steps_used: outcome.steps_used,
                init_attempts: outcome.init_attempts,
                mean_acceptance: outcome.mean_acceptance,
            });
            current = outcome.adapted;
        }
        adapted = Some(current);
        adaptation_summaries = Some(summaries);
    }

    let sampler_config = SamplerConfig {
        iterations_per_sample: config.iterations_per_sample,
        chains: config.chains,
        samples: config.samples,
        emission: config.emission,
        seed: config.seed,
        max_init_attempts: config.max_init_attempts,
    };
    let distribution = match &adapted {
        Some(a) => ProposalDistribution::Adapted { generator: &world.generator, adapted: a },
        None => ProposalDistribution::Generator(&world.generator),
    };
    let (samples, diagnostics) = run_sampler(&sampler_config, distribution, &provider, &spec)?;

    let points: Vec<Vec<f64>> = samples.iter().map(|s| s.point.coordinates.clone()).collect();
    let evaluation = evaluate_samples(&points, &world.modes, &spec)?;

    Ok(RunOutcome {
        manifest: RunManifest {
            version: CONFIG_FORMAT_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.content_hash(),
            config: config.clone(),
            chain_stream_range: (0, config.chains as u64),
        },
        report: RunReport {
            evaluation,
            diagnostics,
            adaptation: adaptation_summaries,
        },
        samples,
    })
}

/// Checks a config without spending the sampling budget: preset exists,
/// target parses against the world, γ overrides have the right arity, and
/// the generator covers the labeled marginal on a mode-bounding grid.
pub fn validate_config(config: &ExperimentConfig) -> Result<String> {
    let world = build_world(config)?;
    let spec = JointClassSpec::parse(&config.target, world.class_count(), None)?;
    SamplerConfig {
        iterations_per_sample: config.iterations_per_sample,
        chains: config.chains,
        samples: config.samples,
        emission: config.emission,
        seed: config.seed,
        max_init_attempts: config.max_init_attempts,
    }
    .validate()?;
    if let Some(g) = &config.gamma_overrides {
        if g.len() != world.class_count() {
            return Err(Error::DimensionMismatch {
                expected: world.class_count(),
                got: g.len(),
            });
        }
        if g.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::config("gamma_overrides", "gammas must be positive"));
        }
    }
    world.generator.check_support(&world.family, &support_grid(&world))?;
    Ok(format!(
        "preset `{}`, {} classes, target `{}` ({} admissible of {} modes), backend `{}`",
        config.preset,
        world.class_count(),
        spec.format(None),
        (0..world.modes.centers.len())
            .filter(|&m| world.modes.mode_admitted(m, &spec))
            .count(),
        world.modes.centers.len(),
        config.backend,
    ))
}

/// Coarse grid over the mode bounding box (±4σ margin) for the numeric
/// support-containment check.
fn support_grid(world: &AnalyticWorld) -> Vec<Vec<f64>> {
    let dim = world.modes.dim();
    let margin = 4.0 * world.modes.sigma;
    let (mut lo, mut hi) = (vec![f64::INFINITY; dim], vec![f64::NEG_INFINITY; dim]);
    for c in &world.modes.centers {
        for j in 0..dim {
            lo[j] = lo[j].min(c[j] - margin);
            hi[j] = hi[j].max(c[j] + margin);
        }
    }
    // axis-aligned scan lines through every mode center keep the grid size
    // linear in dimension instead of exponential
    let mut grid = Vec::new();
    const STEPS: usize = 64;
    for c in &world.modes.centers {
        for j in 0..dim {
            for s in 0..=STEPS {
                let mut x = c.clone();
                x[j] = lo[j] + (hi[j] - lo[j]) * s as f64 / STEPS as f64;
                grid.push(x);
            }
        }
    }
    grid
}

/// Writes `manifest.json`, `report.json`, `samples.csv`, and
/// `diagnostics.csv` into `dir` (created if missing).
pub fn write_outputs(dir: &Path, outcome: &RunOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&outcome.manifest)?,
    )?;
    fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&outcome.report)?,
    )?;
    fs::write(dir.join("samples.csv"), samples_csv(&outcome.samples))?;
    fs::write(dir.join("diagnostics.csv"), diagnostics_csv(&outcome.report.diagnostics))?;
    Ok(())
}

fn samples_csv(samples: &[EmittedSample]) -> String {
    let dim = samples.first().map(|s| s.point.coordinates.len()).unwrap_or(0);
    let mut out = String::from("chain");
    for j in 0..dim {
        let _ = write!(out, ",x{j}");
    }
    out.push_str(",log_r,cumulative_acceptance\n");
    for s in samples {
        let _ = write!(out, "{}", s.chain);
        for v in &s.point.coordinates {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{},{}", s.log_r, s.cumulative_acceptance);
    }
    out
}

fn diagnostics_csv(diag: &ChainDiagnostics) -> String {
    let mut out = String::from("step,mean_acceptance\n");
    for (t, a) in diag.per_step_mean_acceptance.iter().enumerate() {
        let _ = writeln!(out, "{},{a}", t + 1);
    }
    out
}

/// One sweep row: a full run at a given (seed, target) pair.
#[derive(Debug, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub target: String,
    pub accuracy: f64,
    pub high_quality: f64,
    pub mode_std: f64,
    pub acceptance_rate: f64,
}

/// Repeats the run over `seeds` consecutive seeds and an optional list of
/// alternative targets.
pub fn run_sweep(
    config: &ExperimentConfig,
    seeds: u64,
    targets: Option<&[String]>,
) -> Result<Vec<SweepRow>> {
    let target_list: Vec<String> = match targets {
        Some(t) if !t.is_empty() => t.to_vec(),
        _ => vec![config.target.clone()],
    };
    let mut rows = Vec::new();
    for offset in 0..seeds.max(1) {
        for target in &target_list {
            let run_config = ExperimentConfig {
                seed: config.seed + offset,
                target: target.clone(),
                ..config.clone()
            };
            let outcome = run_experiment(&run_config)?;
            rows.push(SweepRow {
                seed: run_config.seed,
                target: outcome.report.evaluation.spec.clone(),
                accuracy: outcome.report.evaluation.accuracy,
                high_quality: outcome.report.evaluation.high_quality,
                mode_std: outcome.report.evaluation.mode_std,
                acceptance_rate: outcome.report.diagnostics.acceptance_rate(),
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("seed,target,accuracy,high_quality,mode_std,acceptance_rate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.seed, r.target, r.accuracy, r.high_quality, r.mode_std, r.acceptance_rate
        );
    }
    out
}

/// Human-readable digest of a written run directory.
pub fn format_report(report: &RunReport) -> String {
    let e = &report.evaluation;
    let mut out = String::new();
    let _ = writeln!(out, "target          {}", e.spec);
    let _ = writeln!(out, "samples         {}", e.samples);
    let _ = writeln!(out, "accuracy        {:.4}", e.accuracy);
    let _ = writeln!(out, "high quality    {:.4}", e.high_quality);
    let _ = writeln!(out, "mode std        {:.4}", e.mode_std);
    let _ = writeln!(
        out,
        "acceptance      {:.4} over {} steps",
        report.diagnostics.acceptance_rate(),
        report.diagnostics.total_steps
    );
    if let Some(rounds) = &report.adaptation {
        for r in rounds {
            let _ = writeln!(
                out,
                "adaptation {}    {} steps, mean acceptance {:.4}",
                r.round, r.steps_used, r.mean_acceptance
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn base_config() -> ExperimentConfig {
        ExperimentConfig {
            version: 1,
            preset: "overlap-1d".into(),
            backend: "analytic".into(),
            target: "+0+1".into(),
            iterations_per_sample: 20,
            chains: 4,
            samples: 400,
            emission: EmissionMode::FreshChainPerSample,
            seed: 11,
            max_init_attempts: 100_000,
            spurious_mass: None,
            alpha: None,
            gamma_overrides: None,
            training: None,
            adaptation: None,
        }
    }

    #[test]
    fn toml_roundtrip_preserves_hash() {
        let config = base_config();
        let text = config.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(config.content_hash(), back.content_hash());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("version = 2\n").is_err());
        let mut config = base_config();
        config.preset = "no-such-world".into();
        assert!(validate_config(&config).is_err());
        let mut config = base_config();
        config.target = "+0+7".into();
        assert!(validate_config(&config).is_err());
        let mut config = base_config();
        config.gamma_overrides = Some(vec![1.0]);
        assert!(validate_config(&config).is_err());
        // unknown TOML keys are rejected, not silently dropped
        let mut text = base_config().to_toml();
        text.push_str("\nno_such_key = 3\n");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn validate_summarizes_world() {
        let summary = validate_config(&base_config()).unwrap();
        assert!(summary.contains("overlap-1d"));
        assert!(summary.contains("1 admissible of 3"));
    }

    #[test]
    fn run_is_deterministic_and_writes_outputs() {
        let config = base_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(
            a.samples.iter().map(|s| &s.point.coordinates).collect::<Vec<_>>(),
            b.samples.iter().map(|s| &s.point.coordinates).collect::<Vec<_>>()
        );
        assert!(a.report.evaluation.accuracy > 0.95);

        let dir = tempdir().unwrap();
        write_outputs(dir.path(), &a).unwrap();
        for file in ["manifest.json", "report.json", "samples.csv", "diagnostics.csv"] {
            assert!(dir.path().join(file).exists(), "{file} missing");
        }
        let manifest: RunManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest.config_hash, config.content_hash());
        let samples = fs::read_to_string(dir.path().join("samples.csv")).unwrap();
        assert_eq!(samples.lines().count(), 401);
        assert!(samples.starts_with("chain,x0,log_r,"));
    }

    #[test]
    fn sweep_covers_seeds_and_targets() {
        let mut config = base_config();
        config.samples = 100;
        let targets = vec!["+0-1".to_string(), "+0+1".to_string()];
        let rows = run_sweep(&config, 2, Some(&targets)).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.accuracy > 0.9));
        let csv = sweep_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn adaptation_section_runs_end_to_end() {
        let mut config = base_config();
        config.preset = "shared-minority".into();
        config.samples = 300;
        config.adaptation = Some(AdaptationSection {
            rounds: 2,
            pilot_samples: 800,
            components: 4,
        });
        let outcome = run_experiment(&config).unwrap();
        let rounds = outcome.report.adaptation.as_ref().unwrap();
        assert_eq!(rounds.len(), 2);
        assert!(rounds[1].mean_acceptance > rounds[0].mean_acceptance);
        assert!(outcome.report.evaluation.accuracy > 0.95);
    }
}
