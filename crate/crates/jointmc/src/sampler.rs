//! Independence Metropolis-Hastings filtering of generator proposals.
//!
//! Proposals are drawn from the generator (optionally class-conditional or
//! with an adapted latent prior) and accepted with a probability built from
//! the density-ratio trio: the r-factor combines γ-scaled label posteriors
//! through the joint-class min/max rule, and the real-vs-generated odds
//! correct for the generator/data mismatch. All ratio arithmetic is in log
//! space; a zero r-factor short-circuits to rejection before any
//! subtraction can produce NaN.

use crate::adapt::AdaptedLatent;
use crate::algebra::{joint_density_value, JointClassSpec};
use crate::error::{Error, Result};
use crate::family::{ConditionalGenerator, DataPoint, SyntheticGenerator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// The density-ratio oracle trio consumed by the acceptance rules.
///
/// Implementations: closed-form (`AnalyticProvider`) and learned
/// (`net::LearnedProvider`). `dv` must stay in (0,1) and `dr`/`df` on the
/// probability simplex; the sampler checks and reports violations.
pub trait RatioProvider: Sync {
    fn class_count(&self) -> usize;

    /// Effective per-class γ (prior ratio, possibly overridden by config).
    fn gammas(&self) -> &[f64];

    /// `log(1/D_v(x) - 1)`; finite iff `D_v(x)` lies strictly in (0,1).
    fn log_dv_odds(&self, x: &[f64]) -> Result<f64>;

    /// Posterior over single positive labels at `x`.
    fn dr_vector(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// `log D_f(c|x)`. Unconditional providers use the constant-1
    /// convention, i.e. 0 in log space.
    fn log_df(&self, _c: usize, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    /// Batched scoring hook: `(log_dv_odds, dr_vector)` per point. The
    /// default delegates pointwise; learned providers override with a
    /// matrix forward pass.
    fn score_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<(f64, Vec<f64>)>> {
        xs.iter()
            .map(|x| Ok((self.log_dv_odds(x)?, self.dr_vector(x)?)))
            .collect()
    }
}

/// `log r_{(I,J)}(x)`: the joint-class combination of γ-scaled label
/// posteriors, with −∞ representing a zero r-factor.
pub fn log_r_factor<P: RatioProvider + ?Sized>(
    x: &[f64],
    spec: &JointClassSpec,
    provider: &P,
) -> Result<f64> {
    let dr = provider.dr_vector(x)?;
    Ok(log_r_from_dr(&dr, spec, provider.gammas()))
}

pub fn log_r_from_dr(dr: &[f64], spec: &JointClassSpec, gammas: &[f64]) -> f64 {
    let scaled: Vec<f64> = dr.iter().zip(gammas).map(|(d, g)| d * g).collect();
    let r = joint_density_value(&scaled, spec);
    if r > 0.0 {
        r.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// A proposal or chain point with every log-quantity the acceptance rules
/// need, computed once and cached.
#[derive(Debug, Clone)]
pub struct ScoredPoint {
    pub point: DataPoint,
    pub log_r: f64,
    pub log_dv_odds: f64,
    /// `log D_f(c|x)` under the active condition; 0 when unconditional.
    pub log_df: f64,
    /// `log p_z(z) - log p̃_z(z)` up to an additive constant; 0 when no
    /// latent adaptation is active.
    pub log_latent_ratio: f64,
}

/// Acceptance probability for the unconditional rule.
pub fn acceptance_unconditional(proposal: &ScoredPoint, current: &ScoredPoint) -> Result<f64> {
    acceptance_probability(proposal, current)
}

/// Acceptance probability for class-conditional proposals; identical to the
/// unconditional rule when `log_df` is identically zero.
pub fn acceptance_conditional(proposal: &ScoredPoint, current: &ScoredPoint) -> Result<f64> {
    if proposal.log_df == f64::NEG_INFINITY {
        return Err(Error::ProviderContractViolation(
            "proposal has zero density under the conditional proposal distribution".into(),
        ));
    }
    acceptance_probability(proposal, current)
}

/// The shared min(1, ·) log-ratio. Conditional and latent-adapted factors
/// enter through the cached `log_df` / `log_latent_ratio` fields.
pub fn acceptance_probability(proposal: &ScoredPoint, current: &ScoredPoint) -> Result<f64> {
    for (name, v) in [
        ("dv", proposal.log_dv_odds),
        ("dv", current.log_dv_odds),
    ] {
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::ProviderContractViolation(format!(
                "{name} outside (0,1): log odds = {v}"
            )));
        }
    }
    if proposal.log_r == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if current.log_r == f64::NEG_INFINITY {
        // only reachable before initialization completes
        return Ok(1.0);
    }
    let log_alpha = (proposal.log_r + current.log_dv_odds + current.log_df
        + proposal.log_latent_ratio)
        - (current.log_r + proposal.log_dv_odds + proposal.log_df + current.log_latent_ratio);
    Ok(log_alpha.min(0.0).exp())
}

/// Where proposals come from: the raw generator, one class of a conditional
/// generator, or the generator re-driven by an adapted latent prior.
#[derive(Clone, Copy)]
pub enum ProposalDistribution<'a> {
    Generator(&'a SyntheticGenerator),
    Conditional {
        generator: &'a ConditionalGenerator,
        condition: usize,
    },
    Adapted {
        generator: &'a SyntheticGenerator,
        adapted: &'a AdaptedLatent,
    },
}

impl<'a> ProposalDistribution<'a> {
    fn draw_raw(&self, rng: &mut impl Rng) -> DataPoint {
        match self {
            ProposalDistribution::Generator(g) => g.sample(rng),
            ProposalDistribution::Conditional { generator, condition } => {
                generator.conditional(*condition).sample(rng)
            }
            ProposalDistribution::Adapted { generator, adapted } => {
                let z = adapted.model().sample(rng);
                let x = generator.map_latent(&z).expect("latent dims match");
                DataPoint::with_latent(x, z)
            }
        }
    }

    pub fn data_dim(&self) -> usize {
        match self {
            ProposalDistribution::Generator(g) => g.data_dim(),
            ProposalDistribution::Conditional { generator, .. } => {
                generator.conditional(0).data_dim()
            }
            ProposalDistribution::Adapted { generator, .. } => generator.data_dim(),
        }
    }
}

/// Per-chain proposal stream: draws raw proposals in blocks, scores them
/// through the provider's batch hook, and hands them out one at a time.
pub struct ProposalEngine<'a, P: RatioProvider + ?Sized> {
    distribution: ProposalDistribution<'a>,
    provider: &'a P,
    spec: &'a JointClassSpec,
    batch: usize,
    buffer: Vec<ScoredPoint>,
}

impl<'a, P: RatioProvider + ?Sized> ProposalEngine<'a, P> {
    pub fn new(
        distribution: ProposalDistribution<'a>,
        provider: &'a P,
        spec: &'a JointClassSpec,
        batch: usize,
    ) -> Self {
        ProposalEngine {
            distribution,
            provider,
            spec,
            batch: batch.max(1),
            buffer: Vec::new(),
        }
    }

    /// Scores an externally supplied point (used for chain initialization
    /// from a fixed state).
    pub fn score_point(&self, point: DataPoint) -> Result<ScoredPoint> {
        let x = &point.coordinates;
        let log_dv_odds = self.provider.log_dv_odds(x)?;
        let dr = self.provider.dr_vector(x)?;
        let log_r = log_r_from_dr(&dr, self.spec, self.provider.gammas());
        let log_df = match self.distribution {
            ProposalDistribution::Conditional { condition, .. } => {
                self.provider.log_df(condition, x)?
            }
            _ => 0.0,
        };
        let log_latent_ratio = match self.distribution {
            ProposalDistribution::Adapted { adapted, .. } => {
                let z = point
                    .latent
                    .as_deref()
                    .ok_or_else(|| Error::ProviderContractViolation(
                        "latent-adapted sampling requires latents on every point".into(),
                    ))?;
                adapted.log_latent_ratio_score(z)
            }
            _ => 0.0,
        };
        Ok(ScoredPoint {
            point,
            log_r,
            log_dv_odds,
            log_df,
            log_latent_ratio,
        })
    }

    fn refill(&mut self, rng: &mut impl Rng) -> Result<()> {
        let raw: Vec<DataPoint> = (0..self.batch)
            .map(|_| self.distribution.draw_raw(rng))
            .collect();
        let xs: Vec<Vec<f64>> = raw.iter().map(|p| p.coordinates.clone()).collect();
        let scored = self.provider.score_batch(&xs)?;
        let gammas = self.provider.gammas();
        self.buffer.reserve(raw.len());
        // reversed so pop() returns proposals in draw order
        for (point, (log_dv_odds, dr)) in raw.into_iter().zip(scored).rev() {
            let log_r = log_r_from_dr(&dr, self.spec, gammas);
            let log_df = match self.distribution {
                ProposalDistribution::Conditional { condition, .. } => {
                    self.provider.log_df(condition, &point.coordinates)?
                }
                _ => 0.0,
            };
            let log_latent_ratio = match self.distribution {
                ProposalDistribution::Adapted { adapted, .. } => adapted
                    .log_latent_ratio_score(point.latent.as_deref().expect("adapted draws carry latents")),
                _ => 0.0,
            };
            self.buffer.push(ScoredPoint {
                point,
                log_r,
                log_dv_odds,
                log_df,
                log_latent_ratio,
            });
        }
        Ok(())
    }

    pub fn next(&mut self, rng: &mut impl Rng) -> Result<ScoredPoint> {
        if self.buffer.is_empty() {
            self.refill(rng)?;
        }
        Ok(self.buffer.pop().expect("refill produced proposals"))
    }
}

/// Chain state: the current point with its cached log quantities and
/// acceptance accounting.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub current: ScoredPoint,
    pub step: usize,
    pub accepted_count: usize,
}

/// Draws proposals until one lands inside the target support
/// (`r_{(I,J)} > 0`). Returns the state and the number of draws used.
pub fn initialize_chain<P: RatioProvider + ?Sized>(
    engine: &mut ProposalEngine<'_, P>,
    rng: &mut impl Rng,
    max_attempts: usize,
) -> Result<(ChainState, usize)> {
    for attempt in 1..=max_attempts.max(1) {
        let candidate = engine.next(rng)?;
        if candidate.log_r > f64::NEG_INFINITY {
            return Ok((
                ChainState {
                    current: candidate,
                    step: 0,
                    accepted_count: 0,
                },
                attempt,
            ));
        }
    }
    Err(Error::InitializationExhausted {
        attempts: max_attempts,
    })
}

/// One MH transition. Returns the acceptance probability used.
pub fn mh_step<P: RatioProvider + ?Sized>(
    state: &mut ChainState,
    engine: &mut ProposalEngine<'_, P>,
    rng: &mut impl Rng,
) -> Result<f64> {
    let proposal = engine.next(rng)?;
    let alpha = acceptance_probability(&proposal, &state.current)?;
    let u: f64 = rng.random();
    if u <= alpha {
        state.current = proposal;
        state.accepted_count += 1;
    }
    state.step += 1;
    Ok(alpha)
}

/// How emitted samples relate to chain restarts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionMode {
    /// Re-initialize before every emitted sample (the default; each sample
    /// is the end state of its own K-step chain).
    FreshChainPerSample,
    /// Initialize once and emit every K-th state of one long chain.
    ContinuedChain,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// K: MH iterations per emitted sample.
    pub iterations_per_sample: usize,
    pub chains: usize,
    /// Total emitted samples, spread across chains.
    pub samples: usize,
    pub emission: EmissionMode,
    pub seed: u64,
    pub max_init_attempts: usize,
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations_per_sample == 0 {
            return Err(Error::config("iterations_per_sample", "K must be >= 1"));
        }
        if self.chains == 0 {
            return Err(Error::config("chains", "must be >= 1"));
        }
        Ok(())
    }
}

/// One emitted sample with provenance.
#[derive(Debug, Clone)]
pub struct EmittedSample {
    pub chain: usize,
    pub point: DataPoint,
    pub log_r: f64,
    /// Acceptance rate of the producing chain up to emission.
    pub cumulative_acceptance: f64,
}

/// Per-run diagnostics: mean acceptance probability per MCMC iteration
/// (averaged over chains and, in fresh-chain mode, over sample windows).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub per_step_mean_acceptance: Vec<f64>,
    pub total_steps: usize,
    pub total_accepted: usize,
    pub init_attempts: usize,
}

impl ChainDiagnostics {
    pub fn acceptance_rate(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.total_accepted as f64 / self.total_steps as f64
        }
    }
}

/// RNG for chain `index` under `seed`: one ChaCha stream per chain, same
/// key. This is the documented seed-derivation rule for the whole crate.
pub fn chain_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct ChainOutput {
    samples: Vec<EmittedSample>,
    alpha_per_step: Vec<f64>,
    steps: usize,
    accepted: usize,
    init_attempts: usize,
}

fn run_one_chain<P: RatioProvider + ?Sized>(
    chain_index: usize,
    config: &SamplerConfig,
    distribution: ProposalDistribution<'_>,
    provider: &P,
    spec: &JointClassSpec,
) -> Result<ChainOutput> {
    let mut rng = chain_rng(config.seed, chain_index as u64);
    let k = config.iterations_per_sample;
    let batch = k.min(4096);
    let mut engine = ProposalEngine::new(distribution, provider, spec, batch);
    let base = config.samples / config.chains;
    let extra = usize::from(chain_index < config.samples % config.chains);
    let my_samples = base + extra;

    let mut out = ChainOutput {
        samples: Vec::with_capacity(my_samples),
        alpha_per_step: vec![0.0; k],
        steps: 0,
        accepted: 0,
        init_attempts: 0,
    };
    if my_samples == 0 {
        return Ok(out);
    }

    let mut state: Option<ChainState> = None;
    for _ in 0..my_samples {
        if state.is_none() || config.emission == EmissionMode::FreshChainPerSample {
            let (s, attempts) = initialize_chain(&mut engine, &mut rng, config.max_init_attempts)?;
            out.init_attempts += attempts;
            state = Some(s);
        }
        let s = state.as_mut().unwrap();
        let window_start = s.step;
        for t in 0..k {
            let alpha = mh_step(s, &mut engine, &mut rng)?;
            out.alpha_per_step[t] += alpha;
            out.steps += 1;
        }
        debug_assert_eq!(s.step, window_start + k);
        out.samples.push(EmittedSample {
            chain: chain_index,
            point: s.current.point.clone(),
            log_r: s.current.log_r,
            cumulative_acceptance: s.accepted_count as f64 / s.step as f64,
        });
        match config.emission {
            // state restarts per sample, so sum the window counts
            EmissionMode::FreshChainPerSample => out.accepted += s.accepted_count,
            // one long chain: the final count already covers every window
            EmissionMode::ContinuedChain => out.accepted = s.accepted_count,
        }
    }
    Ok(out)
}

/// Runs the configured number of chains in parallel and gathers emitted
/// samples and diagnostics. Chains use disjoint RNG streams derived from
/// `(seed, chain index)`; results are ordered by chain, then emission.
pub fn run_sampler<P: RatioProvider + ?Sized>(
    config: &SamplerConfig,
    distribution: ProposalDistribution<'_>,
    provider: &P,
    spec: &JointClassSpec,
) -> Result<(Vec<EmittedSample>, ChainDiagnostics)> {
    config.validate()?;
    let chain_results: Vec<Result<ChainOutput>> = (0..config.chains)
        .into_par_iter()
        .map(|ci| run_one_chain(ci, config, distribution, provider, spec))
        .collect();

    let mut samples = Vec::with_capacity(config.samples);
    let mut diag = ChainDiagnostics {
        per_step_mean_acceptance: vec![0.0; config.iterations_per_sample],
        ..Default::default()
    };
    let mut windows = 0usize;
    for result in chain_results {
        let out = result?;
        windows += out.samples.len();
        for (t, a) in out.alpha_per_step.iter().enumerate() {
            diag.per_step_mean_acceptance[t] += a;
        }
        diag.total_steps += out.steps;
        diag.total_accepted += out.accepted;
        diag.init_attempts += out.init_attempts;
        samples.extend(out.samples);
    }
    if windows > 0 {
        for a in &mut diag.per_step_mean_acceptance {
            *a /= windows as f64;
        }
    }
    Ok((samples, diag))
}

/// Runs `chains` independent chains for `steps` steps each and snapshots
/// every state, for convergence studies. `start` fixes a common initial
/// point (worst-case start); with `None`, chains initialize by rejection
/// from the proposal distribution.
pub fn step_marginals<P: RatioProvider + ?Sized>(
    chains: usize,
    steps: usize,
    seed: u64,
    start: Option<DataPoint>,
    distribution: ProposalDistribution<'_>,
    provider: &P,
    spec: &JointClassSpec,
    max_init_attempts: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let per_chain: Vec<Result<Vec<Vec<Vec<f64>>>>> = (0..chains)
        .into_par_iter()
        .map(|ci| {
            let mut rng = chain_rng(seed, ci as u64);
            let mut engine = ProposalEngine::new(distribution, provider, spec, steps.min(1024));
            let mut state = match &start {
                Some(p) => {
                    let scored = engine.score_point(p.clone())?;
                    ChainState { current: scored, step: 0, accepted_count: 0 }
                }
                None => initialize_chain(&mut engine, &mut rng, max_init_attempts)?.0,
            };
            let mut snaps = Vec::with_capacity(steps);
            for _ in 0..steps {
                mh_step(&mut state, &mut engine, &mut rng)?;
                snaps.push(vec![state.current.point.coordinates.clone()]);
            }
            Ok(snaps)
        })
        .collect();

    // transpose to [step][chain]
    let mut result: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(chains); steps];
    for chain in per_chain {
        let snaps = chain?;
        for (t, mut states) in snaps.into_iter().enumerate() {
            result[t].push(states.pop().unwrap());
        }
    }
    Ok(result)
}

/// Mean acceptance probability at each step over freshly initialized
/// parallel chains (the Fig-style acceptance curve).
pub fn acceptance_curve<P: RatioProvider + ?Sized>(
    chains: usize,
    steps: usize,
    seed: u64,
    distribution: ProposalDistribution<'_>,
    provider: &P,
    spec: &JointClassSpec,
    max_init_attempts: usize,
) -> Result<Vec<f64>> {
    let per_chain: Vec<Result<Vec<f64>>> = (0..chains)
        .into_par_iter()
        .map(|ci| {
            let mut rng = chain_rng(seed, ci as u64);
            let mut engine = ProposalEngine::new(distribution, provider, spec, steps.min(1024));
            let (mut state, _) = initialize_chain(&mut engine, &mut rng, max_init_attempts)?;
            (0..steps)
                .map(|_| mh_step(&mut state, &mut engine, &mut rng))
                .collect()
        })
        .collect();
    let mut curve = vec![0.0; steps];
    let mut count = 0usize;
    for chain in per_chain {
        let alphas = chain?;
        for (t, a) in alphas.iter().enumerate() {
            curve[t] += a;
        }
        count += 1;
    }
    for c in &mut curve {
        *c /= count.max(1) as f64;
    }
    Ok(curve)
}

/// Closed-form provider backed by a density family and generator.
pub struct AnalyticProvider<'a> {
    family: &'a crate::family::LabeledDensityFamily,
    generator_logpdf: GeneratorDensity<'a>,
    conditional: Option<&'a ConditionalGenerator>,
    gammas: Vec<f64>,
}

enum GeneratorDensity<'a> {
    Unconditional(&'a SyntheticGenerator),
    Conditional(&'a ConditionalGenerator),
}

impl<'a> AnalyticProvider<'a> {
    pub fn new(
        family: &'a crate::family::LabeledDensityFamily,
        generator: &'a SyntheticGenerator,
    ) -> Self {
        let gammas = family.gammas();
        AnalyticProvider {
            family,
            generator_logpdf: GeneratorDensity::Unconditional(generator),
            conditional: None,
            gammas,
        }
    }

    pub fn conditional(
        family: &'a crate::family::LabeledDensityFamily,
        generator: &'a ConditionalGenerator,
    ) -> Self {
        let gammas = family.gammas();
        AnalyticProvider {
            family,
            generator_logpdf: GeneratorDensity::Conditional(generator),
            conditional: Some(generator),
            gammas,
        }
    }

    /// Replaces the per-class γ with explicit overrides.
    pub fn with_gammas(mut self, gammas: Vec<f64>) -> Self {
        assert_eq!(gammas.len(), self.gammas.len());
        self.gammas = gammas;
        self
    }
}

impl RatioProvider for AnalyticProvider<'_> {
    fn class_count(&self) -> usize {
        self.family.class_count()
    }

    fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    fn log_dv_odds(&self, x: &[f64]) -> Result<f64> {
        let log_gen = match &self.generator_logpdf {
            GeneratorDensity::Unconditional(g) => g.log_pdf(x)?,
            GeneratorDensity::Conditional(g) => g.log_marginal(x)?,
        };
        let log_data = self.family.log_pdata(x)?;
        if log_data == f64::NEG_INFINITY && log_gen == f64::NEG_INFINITY {
            return Err(Error::DensityUndefined);
        }
        Ok(log_gen - log_data)
    }

    fn dr_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.family.analytic_dr_vector(x)
    }

    fn log_df(&self, c: usize, x: &[f64]) -> Result<f64> {
        match self.conditional {
            Some(g) => Ok(g.analytic_df(c, x)?.ln()),
            None => Ok(0.0),
        }
    }
}
