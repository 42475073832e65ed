//! Latent proposal adaptation: fit a Gaussian mixture to the latents of
//! accepted samples, propose from it instead of the standard-normal prior,
//! and correct the acceptance probability with the latent prior ratio so the
//! stationary distribution is unchanged.
//!
//! The correction is exact for any deterministic generator map: the target
//! weight `w(G(z))` is reweighted in latent space by `p_z(z) / p̃_z(z)`,
//! so the adapted chain has stationary latent density proportional to
//! `w(G(z)) p_z(z)`, whose pushforward is the original target.

use crate::error::{Error, Result};
use crate::gmm::{Covariances, GaussianMixture};
use crate::math::logsumexp;
use crate::sampler::{
    acceptance_probability, initialize_chain, mh_step, ProposalDistribution, ProposalEngine,
    RatioProvider, ScoredPoint,
};
use crate::algebra::JointClassSpec;
use crate::family::SyntheticGenerator;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Acceptance probability with the latent prior-ratio correction; the
/// shared core reads the correction from the cached `log_latent_ratio`
/// fields, so when both points carry the prior (ratio 0) this is
/// bit-identical to the unconditional rule.
pub fn acceptance_adapted(proposal: &ScoredPoint, current: &ScoredPoint) -> Result<f64> {
    acceptance_probability(proposal, current)
}

/// An adapted latent proposal distribution `p̃_z` with precomputed pieces
/// for the prior-ratio correction.
#[derive(Debug, Clone)]
pub struct AdaptedLatent {
    model: GaussianMixture,
    /// Inverse-covariance Cholesky data for the determinant-free score,
    /// available when the model has a shared covariance.
    shared_factor: Option<DMatrix<f64>>,
}

impl AdaptedLatent {
    pub fn new(model: GaussianMixture) -> Self {
        let shared_factor = match model.covariances() {
            Covariances::Shared(cov) => Cholesky::new(cov.clone()).map(|c| c.l()),
            Covariances::PerComponent(_) => None,
        };
        AdaptedLatent { model, shared_factor }
    }

    /// The un-adapted case: `p̃_z` equal to the standard-normal prior, so
    /// every latent ratio is exactly zero.
    pub fn identity(dim: usize) -> Self {
        AdaptedLatent::new(GaussianMixture::standard_normal(dim))
    }

    pub fn model(&self) -> &GaussianMixture {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Exact `log p_z(z) - log p̃_z(z)` under the standard-normal prior.
    pub fn log_latent_ratio(&self, z: &[f64]) -> Result<f64> {
        let d = z.len() as f64;
        let log_prior = -0.5 * d * crate::math::LN_2PI
            - 0.5 * z.iter().map(|v| v * v).sum::<f64>();
        Ok(log_prior - self.model.logpdf(z)?)
    }

    /// `log p_z(z) - log p̃_z(z)` up to an additive constant, which cancels
    /// in acceptance ratios. For shared-covariance models this uses only
    /// quadratic forms — no determinant or 2π terms enter.
    pub fn log_latent_ratio_score(&self, z: &[f64]) -> f64 {
        match &self.shared_factor {
            Some(l) => {
                let quad_terms: Vec<f64> = self
                    .model
                    .means()
                    .iter()
                    .zip(self.model.weights())
                    .map(|(mu, &w)| {
                        let diff = DVector::from_row_slice(z) - mu;
                        let y = l.solve_lower_triangular(&diff).expect("factor is triangular");
                        w.ln() - 0.5 * y.norm_squared()
                    })
                    .collect();
                -0.5 * z.iter().map(|v| v * v).sum::<f64>() - logsumexp(&quad_terms)
            }
            None => self
                .log_latent_ratio(z)
                .expect("latent dimension fixed at construction"),
        }
    }

    /// Pairwise correction `log [p_z(a) p̃_z(b)] / [p̃_z(a) p_z(b)]` — the
    /// quantity acceptance ratios consume, free of all normalizing
    /// constants.
    pub fn pairwise_log_ratio(&self, a: &[f64], b: &[f64]) -> f64 {
        self.log_latent_ratio_score(a) - self.log_latent_ratio_score(b)
    }
}

/// Expectation-maximization settings for fitting the latent mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub components: usize,
    pub max_iterations: usize,
    /// Stop when the log-likelihood improves by less than this per point.
    pub tolerance: f64,
    pub seed: u64,
    /// Reseeds allowed when a component collapses before giving up.
    pub max_retries: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            components: 8,
            max_iterations: 200,
            tolerance: 1e-7,
            seed: 0,
            max_retries: 5,
        }
    }
}

/// A fitted mixture plus its per-iteration mean log-likelihood trace
/// (non-decreasing by construction of the EM updates).
#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: GaussianMixture,
    pub log_likelihood: Vec<f64>,
}

/// Fits a shared-covariance Gaussian mixture by EM.
///
/// Shared covariance keeps the M-step a single pooled scatter and makes the
/// adapted-prior acceptance correction determinant-free. Components are
/// seeded by distance-weighted draws from the data; a collapsing component
/// (vanishing responsibility mass or non-SPD pooled covariance) is reseeded
/// at the worst-explained point up to `max_retries` times.
pub fn fit_gmm_em(data: &[Vec<f64>], config: &EmConfig) -> Result<EmFit> {
    let n = data.len();
    let m = config.components;
    if m == 0 || n < 2 * m {
        return Err(Error::TooFewPoints { needed: 2 * m, got: n });
    }
    let dim = data[0].len();
    if data.iter().any(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: 0 });
    }

    let mut rng = crate::sampler::chain_rng(config.seed, 0);
    let points: Vec<DVector<f64>> = data.iter().map(|x| DVector::from_row_slice(x)).collect();

    let mut means = seed_means(&points, m, &mut rng);
    let mut weights = vec![1.0 / m as f64; m];
    let mut cov = pooled_covariance(&points);
    let data_scale = cov.trace() / dim as f64;
    if data_scale < 1e-12 {
        // all points (numerically) identical: no covariance to fit
        return Err(Error::DegenerateComponent { retries: 0 });
    }

    let mut trace: Vec<f64> = Vec::new();
    let mut retries = 0usize;
    let mut resp = vec![vec![0.0f64; m]; n];

    for _ in 0..config.max_iterations {
        let model = match build_model(&weights, &means, &cov) {
            Ok(model) => model,
            Err(_) => {
                // non-SPD pooled covariance: ridge and retry
                retries += 1;
                if retries > config.max_retries {
                    return Err(Error::DegenerateComponent { retries });
                }
                cov += DMatrix::identity(dim, dim) * (1e-6 * data_scale);
                continue;
            }
        };

        // E-step
        let mut loglik = 0.0;
        let mut worst = (0usize, f64::INFINITY);
        for (i, x) in data.iter().enumerate() {
            let terms = model.weighted_component_logpdfs(x)?;
            let norm = logsumexp(&terms);
            loglik += norm;
            if norm < worst.1 {
                worst = (i, norm);
            }
            for k in 0..m {
                resp[i][k] = (terms[k] - norm).exp();
            }
        }
        loglik /= n as f64;

        if let Some(&prev) = trace.last() {
            if loglik - prev < config.tolerance {
                trace.push(loglik.max(prev));
                break;
            }
        }
        trace.push(loglik);

        // M-step
        let mass: Vec<f64> = (0..m).map(|k| resp.iter().map(|r| r[k]).sum()).collect();
        if let Some(k) = mass.iter().position(|&nk| nk < 1e-8 * n as f64) {
            retries += 1;
            if retries > config.max_retries {
                return Err(Error::DegenerateComponent { retries });
            }
            means[k] = points[worst.0].clone();
            weights = vec![1.0 / m as f64; m];
            trace.clear();
            continue;
        }
        for k in 0..m {
            weights[k] = mass[k] / n as f64;
            let mut mu = DVector::zeros(dim);
            for (i, x) in points.iter().enumerate() {
                mu += x * resp[i][k];
            }
            means[k] = mu / mass[k];
        }
        let mut scatter = DMatrix::zeros(dim, dim);
        for (i, x) in points.iter().enumerate() {
            for k in 0..m {
                let diff = x - &means[k];
                scatter.ger(resp[i][k], &diff, &diff, 1.0);
            }
        }
        cov = scatter / n as f64;
    }

    let model = build_model(&weights, &means, &cov)
        .map_err(|_| Error::DegenerateComponent { retries: retries + 1 })?;
    Ok(EmFit { model, log_likelihood: trace })
}

fn build_model(
    weights: &[f64],
    means: &[DVector<f64>],
    cov: &DMatrix<f64>,
) -> Result<GaussianMixture> {
    let total: f64 = weights.iter().sum();
    let normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
    GaussianMixture::new(normalized, means.to_vec(), Covariances::Shared(cov.clone()))
}

/// Distance-weighted seeding: first mean uniform, each further mean drawn
/// with probability proportional to squared distance from the chosen set.
fn seed_means(points: &[DVector<f64>], m: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    let n = points.len();
    let mut means = Vec::with_capacity(m);
    means.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| (p - &means[0]).norm_squared()).collect();
    while means.len() < m {
        let total: f64 = d2.iter().sum();
        let chosen = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut u: f64 = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        };
        means.push(points[chosen].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min((p - &means[means.len() - 1]).norm_squared());
        }
    }
    means
}

fn pooled_covariance(points: &[DVector<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let dim = points[0].len();
    let mean: DVector<f64> = points.iter().sum::<DVector<f64>>() / n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for p in points {
        let diff = p - &mean;
        cov.ger(1.0, &diff, &diff, 1.0);
    }
    cov / n as f64
}

/// Settings for one latent-adaptation round.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptationConfig {
    /// Accepted samples to collect before fitting the latent mixture.
    pub pilot_samples: usize,
    pub em: EmConfig,
    pub seed: u64,
    pub max_init_attempts: usize,
    /// Hard ceiling on MH steps while collecting, against zero-mass targets.
    pub max_steps: usize,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            pilot_samples: 2000,
            em: EmConfig::default(),
            seed: 0,
            max_init_attempts: 1_000_000,
            max_steps: 50_000_000,
        }
    }
}

/// Outcome of one adaptation round: the newly fitted latent proposal and
/// the MH budget the pilot collection consumed.
#[derive(Debug)]
pub struct AdaptationRound {
    pub adapted: AdaptedLatent,
    /// MH steps spent collecting the pilot.
    pub steps_used: usize,
    /// Proposals drawn during chain initialization.
    pub init_attempts: usize,
    /// Mean acceptance probability over the collection run.
    pub mean_acceptance: f64,
    pub em_log_likelihood: Vec<f64>,
}

/// Runs one chain under the current latent proposal until `pilot_samples`
/// acceptance events occur, then fits a fresh latent mixture to the latents
/// of the accepted points.
pub fn adaptation_round<P: RatioProvider + ?Sized>(
    generator: &SyntheticGenerator,
    current: &AdaptedLatent,
    provider: &P,
    spec: &JointClassSpec,
    config: &AdaptationConfig,
) -> Result<AdaptationRound> {
    let distribution = ProposalDistribution::Adapted { generator, adapted: current };
    let mut rng = crate::sampler::chain_rng(config.seed, 0);
    let mut engine = ProposalEngine::new(distribution, provider, spec, 1024);
    let (mut state, init_attempts) =
        initialize_chain(&mut engine, &mut rng, config.max_init_attempts)?;

    let mut latents: Vec<Vec<f64>> = Vec::with_capacity(config.pilot_samples);
    let mut alpha_sum = 0.0;
    let mut steps = 0usize;
    while latents.len() < config.pilot_samples {
        if steps >= config.max_steps {
            return Err(Error::InitializationExhausted { attempts: steps });
        }
        let before = state.accepted_count;
        alpha_sum += mh_step(&mut state, &mut engine, &mut rng)?;
        steps += 1;
        if state.accepted_count > before {
            latents.push(
                state
                    .current
                    .point
                    .latent
                    .clone()
                    .expect("adapted proposals carry latents"),
            );
        }
    }

    let fit = fit_gmm_em(&latents, &config.em)?;
    Ok(AdaptationRound {
        adapted: AdaptedLatent::new(fit.model),
        steps_used: steps,
        init_attempts,
        mean_acceptance: alpha_sum / steps as f64,
        em_log_likelihood: fit.log_likelihood,
    })
}

/// Repeated adaptation over a schedule of targets (e.g. adding one class
/// at a time): each round starts from the previous round's latent proposal.
/// Returns one report per scheduled target.
pub fn run_adaptation_schedule<P: RatioProvider + ?Sized>(
    generator: &SyntheticGenerator,
    provider: &P,
    schedule: &[JointClassSpec],
    config: &AdaptationConfig,
) -> Result<Vec<AdaptationRound>> {
    let mut current = AdaptedLatent::identity(generator.latent_dim());
    let mut rounds = Vec::with_capacity(schedule.len());
    for (i, spec) in schedule.iter().enumerate() {
        let round_config = AdaptationConfig {
            seed: config.seed.wrapping_add(i as u64),
            ..config.clone()
        };
        let round = adaptation_round(generator, &current, provider, spec, &round_config)?;
        current = round.adapted.clone();
        rounds.push(round);
    }
    Ok(rounds)
}
