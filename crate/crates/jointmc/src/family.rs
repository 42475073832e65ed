//! Class-conditional density families and synthetic generators with exact
//! densities, plus the closed-form optimal classifiers computed from them.
//!
//! These are the analytic stand-ins for a trained GAN and its classifier
//! heads: `D_v*(x) = p_data(x) / (p_data(x) + p_G(x))`,
//! `D_r*(c|x) = p(x|y_c=1) p_data(c) / p_data(x)`, and
//! `D_f*(c|x) = p_G(x|c) p_G(c) / p_G(x)`. Everything is evaluated in log
//! space; Gaussian tails underflow linear arithmetic far from the modes and
//! the Markov chains visit those tails.

use crate::error::{Error, Result};
use crate::gmm::GaussianMixture;
use crate::math::logsumexp;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A point in data space, optionally carrying the generator latent that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub coordinates: Vec<f64>,
    pub latent: Option<Vec<f64>>,
}

impl DataPoint {
    pub fn new(coordinates: Vec<f64>) -> Self {
        DataPoint { coordinates, latent: None }
    }

    pub fn with_latent(coordinates: Vec<f64>, latent: Vec<f64>) -> Self {
        DataPoint { coordinates, latent: Some(latent) }
    }
}

/// `n` class-conditional densities `p(x|y_k=1)` with multi-label class
/// priors `π_k` and observed single-positive label priors `p_data(k)`.
#[derive(Debug, Clone)]
pub struct LabeledDensityFamily {
    class_densities: Vec<GaussianMixture>,
    class_priors: Vec<f64>,
    observed_priors: Vec<f64>,
}

impl LabeledDensityFamily {
    pub fn new(
        class_densities: Vec<GaussianMixture>,
        class_priors: Vec<f64>,
        observed_priors: Vec<f64>,
    ) -> Result<Self> {
        let n = class_densities.len();
        if n == 0 || class_priors.len() != n || observed_priors.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: class_priors.len() });
        }
        let obs_sum: f64 = observed_priors.iter().sum();
        if (obs_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(obs_sum));
        }
        for k in 0..n {
            let gamma = class_priors[k] / observed_priors[k];
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(Error::config(
                    format!("class_priors[{k}]"),
                    "gamma = pi_k / p_data(k) must be finite and positive",
                ));
            }
            if !(class_priors[k] > 0.0 && class_priors[k] <= 1.0) {
                return Err(Error::config(
                    format!("class_priors[{k}]"),
                    "class prior must lie in (0, 1]",
                ));
            }
        }
        let dim = class_densities[0].dim();
        if class_densities.iter().any(|d| d.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: 0 });
        }
        Ok(LabeledDensityFamily { class_densities, class_priors, observed_priors })
    }

    pub fn class_count(&self) -> usize {
        self.class_densities.len()
    }

    pub fn dim(&self) -> usize {
        self.class_densities[0].dim()
    }

    pub fn class_density(&self, c: usize) -> &GaussianMixture {
        &self.class_densities[c]
    }

    pub fn class_prior(&self, c: usize) -> f64 {
        self.class_priors[c]
    }

    pub fn observed_prior(&self, c: usize) -> f64 {
        self.observed_priors[c]
    }

    /// `γ_k = π_k / p_data(k)` for every class.
    pub fn gammas(&self) -> Vec<f64> {
        (0..self.class_count())
            .map(|k| self.class_priors[k] / self.observed_priors[k])
            .collect()
    }

    /// log of the observed marginal `p_data(x) = Σ_c p_data(c) p(x|y_c=1)`.
    pub fn log_pdata(&self, x: &[f64]) -> Result<f64> {
        let terms = (0..self.class_count())
            .map(|c| Ok(self.observed_priors[c].ln() + self.class_densities[c].logpdf(x)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(logsumexp(&terms))
    }

    /// Optimal label posterior `D_r*(c|x)` for a single class.
    pub fn analytic_dr(&self, c: usize, x: &[f64]) -> Result<f64> {
        Ok(self.analytic_dr_vector(x)?[c])
    }

    /// The full posterior simplex over single positive labels.
    pub fn analytic_dr_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let terms = (0..self.class_count())
            .map(|c| Ok(self.observed_priors[c].ln() + self.class_densities[c].logpdf(x)?))
            .collect::<Result<Vec<f64>>>()?;
        let norm = logsumexp(&terms);
        if norm == f64::NEG_INFINITY {
            return Err(Error::DensityUndefined);
        }
        Ok(terms.iter().map(|t| (t - norm).exp()).collect())
    }

    /// Draws a labeled pair `(x, c)` from the observed joint
    /// `p_data(x, c) = p_data(c) p(x|y_c=1)`.
    pub fn sample_labeled(&self, rng: &mut impl Rng) -> (Vec<f64>, usize) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut class = self.class_count() - 1;
        for (c, &w) in self.observed_priors.iter().enumerate() {
            acc += w;
            if u < acc {
                class = c;
                break;
            }
        }
        (self.class_densities[class].sample(rng), class)
    }
}

/// Grid thresholds for the numeric support-containment check: the generator
/// must retain at least `GEN_FLOOR` density wherever the data marginal
/// exceeds `TARGET_FLOOR`.
pub const SUPPORT_GEN_FLOOR: f64 = 1e-12;
pub const SUPPORT_TARGET_FLOOR: f64 = 1e-9;

/// A generator with a known density: a Gaussian-mixture pushforward over
/// data space, sampled through a recorded latent.
///
/// The latent is `(selector, noise)` in `R^{d+1}` with a standard normal
/// prior: `Φ(selector)` picks the mixture component through the cumulative
/// weight bands and the remaining `d` coordinates are the pre-transform
/// Gaussian draw. The map is deterministic, so latent-space proposal
/// re-weighting stays exact for this generator.
#[derive(Debug, Clone)]
pub struct SyntheticGenerator {
    pushforward: GaussianMixture,
    spurious_mass: f64,
}

impl SyntheticGenerator {
    pub fn new(pushforward: GaussianMixture, spurious_mass: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&spurious_mass) {
            return Err(Error::config("spurious_mass", "must lie in [0, 1)"));
        }
        Ok(SyntheticGenerator { pushforward, spurious_mass })
    }

    /// Builds the generator and verifies on `grid` that its support covers
    /// the data marginal of `family` (and with it every joint-class target).
    pub fn paired(
        pushforward: GaussianMixture,
        spurious_mass: f64,
        family: &LabeledDensityFamily,
        grid: &[Vec<f64>],
    ) -> Result<Self> {
        let gen = SyntheticGenerator::new(pushforward, spurious_mass)?;
        gen.check_support(family, grid)?;
        Ok(gen)
    }

    /// Numeric support containment: fails on the first grid point where the
    /// target density is material but the generator density is not.
    pub fn check_support(&self, family: &LabeledDensityFamily, grid: &[Vec<f64>]) -> Result<()> {
        for x in grid {
            let target = family.log_pdata(x)?.exp();
            if target >= SUPPORT_TARGET_FLOOR {
                let gen = self.log_pdf(x)?.exp();
                if gen < SUPPORT_GEN_FLOOR {
                    return Err(Error::SupportNotCovered(x.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn data_dim(&self) -> usize {
        self.pushforward.dim()
    }

    /// Latent dimension: one selector coordinate plus the noise vector.
    pub fn latent_dim(&self) -> usize {
        self.pushforward.dim() + 1
    }

    pub fn spurious_mass(&self) -> f64 {
        self.spurious_mass
    }

    pub fn pushforward(&self) -> &GaussianMixture {
        &self.pushforward
    }

    /// log p_G(x).
    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        self.pushforward.logpdf(x)
    }

    /// The deterministic generator map `G(z)`.
    pub fn map_latent(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                got: latent.len(),
            });
        }
        let component = self.pushforward.component_for_selector(latent[0]);
        Ok(self.pushforward.push_noise(component, &latent[1..]))
    }

    /// Draws `z` from the standard-normal latent prior and returns
    /// `G(z)` with the latent recorded.
    pub fn sample(&self, rng: &mut impl Rng) -> DataPoint {
        let latent: Vec<f64> = (0..self.latent_dim())
            .map(|_| StandardNormal.sample(rng))
            .collect();
        let x = self.map_latent(&latent).expect("latent has the right length");
        DataPoint::with_latent(x, latent)
    }

    /// log-density of the standard-normal latent prior.
    pub fn latent_prior_logpdf(&self, z: &[f64]) -> f64 {
        let d = z.len() as f64;
        -0.5 * d * crate::math::LN_2PI - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Optimal real-vs-generated discriminator `D_v*` at a point, in (0,1).
pub fn analytic_dv(
    family: &LabeledDensityFamily,
    generator: &SyntheticGenerator,
    x: &[f64],
) -> Result<f64> {
    Ok(1.0 / (1.0 + analytic_log_dv_odds(family, generator, x)?.exp()))
}

/// `log(1/D_v*(x) - 1) = log p_G(x) - log p_data(x)`, the quantity the
/// acceptance rules actually consume.
pub fn analytic_log_dv_odds(
    family: &LabeledDensityFamily,
    generator: &SyntheticGenerator,
    x: &[f64],
) -> Result<f64> {
    let log_data = family.log_pdata(x)?;
    let log_gen = generator.log_pdf(x)?;
    if log_data == f64::NEG_INFINITY && log_gen == f64::NEG_INFINITY {
        return Err(Error::DensityUndefined);
    }
    Ok(log_gen - log_data)
}

/// A class-conditional generator: per-condition pushforward densities and
/// condition priors, with the optimal condition posterior `D_f*`.
#[derive(Debug, Clone)]
pub struct ConditionalGenerator {
    conditionals: Vec<SyntheticGenerator>,
    condition_priors: Vec<f64>,
}

impl ConditionalGenerator {
    pub fn new(conditionals: Vec<SyntheticGenerator>, condition_priors: Vec<f64>) -> Result<Self> {
        if conditionals.is_empty() || conditionals.len() != condition_priors.len() {
            return Err(Error::DimensionMismatch {
                expected: conditionals.len(),
                got: condition_priors.len(),
            });
        }
        let sum: f64 = condition_priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || condition_priors.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidWeights(sum));
        }
        Ok(ConditionalGenerator { conditionals, condition_priors })
    }

    pub fn condition_count(&self) -> usize {
        self.conditionals.len()
    }

    pub fn conditional(&self, c: usize) -> &SyntheticGenerator {
        &self.conditionals[c]
    }

    /// log of the marginal `p_G(x) = Σ_c p_G(c) p_G(x|c)`.
    pub fn log_marginal(&self, x: &[f64]) -> Result<f64> {
        let terms = (0..self.condition_count())
            .map(|c| Ok(self.condition_priors[c].ln() + self.conditionals[c].log_pdf(x)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(logsumexp(&terms))
    }

    /// Optimal condition posterior `D_f*(c|x)` as a simplex vector.
    pub fn analytic_df_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let terms = (0..self.condition_count())
            .map(|c| Ok(self.condition_priors[c].ln() + self.conditionals[c].log_pdf(x)?))
            .collect::<Result<Vec<f64>>>()?;
        let norm = logsumexp(&terms);
        if norm == f64::NEG_INFINITY {
            return Err(Error::DensityUndefined);
        }
        Ok(terms.iter().map(|t| (t - norm).exp()).collect())
    }

    pub fn analytic_df(&self, c: usize, x: &[f64]) -> Result<f64> {
        Ok(self.analytic_df_vector(x)?[c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::GaussianMixture;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn two_class_1d() -> LabeledDensityFamily {
        // class 0 around -2 and 0, class 1 around 0 and +2
        let a = GaussianMixture::from_1d(&[(0.5, -2.0, 0.25), (0.5, 0.0, 0.25)]).unwrap();
        let b = GaussianMixture::from_1d(&[(0.5, 0.0, 0.25), (0.5, 2.0, 0.25)]).unwrap();
        LabeledDensityFamily::new(vec![a, b], vec![0.6, 0.6], vec![0.5, 0.5]).unwrap()
    }

    fn matched_generator(family: &LabeledDensityFamily) -> SyntheticGenerator {
        let mix = GaussianMixture::from_1d(&[
            (0.25, -2.0, 0.25),
            (0.5, 0.0, 0.25),
            (0.25, 2.0, 0.25),
        ])
        .unwrap();
        let grid: Vec<Vec<f64>> = (0..101).map(|i| vec![-4.0 + 0.08 * i as f64]).collect();
        SyntheticGenerator::paired(mix, 0.0, family, &grid).unwrap()
    }

    #[test]
    fn dv_matched_densities_is_half() {
        let family = two_class_1d();
        let gen = matched_generator(&family);
        // generator mixture equals p_data exactly for equal observed priors
        for x in [-2.0, -1.0, 0.0, 1.5] {
            assert_relative_eq!(analytic_dv(&family, &gen, &[x]).unwrap(), 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn dv_tends_to_one_where_generator_vanishes() {
        let family = two_class_1d();
        let narrow = GaussianMixture::from_1d(&[(1.0, -2.0, 0.05)]).unwrap();
        let gen = SyntheticGenerator::new(narrow, 0.0).unwrap();
        // at x = +2 the narrow generator has essentially no mass
        let dv = analytic_dv(&family, &gen, &[2.0]).unwrap();
        assert!(dv > 1.0 - 1e-12, "dv = {dv}");
    }

    #[test]
    fn dv_grid_matches_direct_quotient() {
        let family = two_class_1d();
        let gen = matched_generator(&family);
        for i in 0..101 {
            let x = [-4.0 + 0.08 * i as f64];
            let p_data = family.log_pdata(&x).unwrap().exp();
            let p_gen = gen.log_pdf(&x).unwrap().exp();
            let direct = p_data / (p_data + p_gen);
            assert!((analytic_dv(&family, &gen, &x).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn dr_separated_supports_and_symmetry() {
        let family = two_class_1d();
        // deep inside class-0-only territory
        assert!(family.analytic_dr(0, &[-2.0]).unwrap() > 1.0 - 1e-9);
        // shared mode at 0 with symmetric classes
        assert_relative_eq!(family.analytic_dr(0, &[0.0]).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(family.analytic_dr(1, &[0.0]).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn dr_grid_matches_bayes_rule() {
        let family = two_class_1d();
        for i in 0..101 {
            let x = [-4.0 + 0.08 * i as f64];
            let pa = family.class_density(0).logpdf(&x).unwrap().exp();
            let pb = family.class_density(1).logpdf(&x).unwrap().exp();
            let direct = 0.5 * pa / (0.5 * pa + 0.5 * pb);
            assert!((family.analytic_dr(0, &x).unwrap() - direct).abs() < 1e-10);
            let v = family.analytic_dr_vector(&x).unwrap();
            assert!(v.iter().all(|&p| (0.0..=1.0).contains(&p)));
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn df_single_condition_is_constant_one() {
        let family = two_class_1d();
        let gen = matched_generator(&family);
        let cond = ConditionalGenerator::new(vec![gen], vec![1.0]).unwrap();
        for x in [-2.0, 0.0, 3.0] {
            assert_relative_eq!(cond.analytic_df(0, &[x]).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn df_symmetric_conditions_grid_oracle() {
        let left = SyntheticGenerator::new(
            GaussianMixture::from_1d(&[(1.0, -1.0, 0.5)]).unwrap(),
            0.0,
        )
        .unwrap();
        let right = SyntheticGenerator::new(
            GaussianMixture::from_1d(&[(1.0, 1.0, 0.5)]).unwrap(),
            0.0,
        )
        .unwrap();
        let cond = ConditionalGenerator::new(vec![left, right], vec![0.5, 0.5]).unwrap();
        assert_relative_eq!(cond.analytic_df(0, &[0.0]).unwrap(), 0.5, epsilon = 1e-12);
        for i in 0..101 {
            let x = [-3.0 + 0.06 * i as f64];
            let p0 = cond.conditional(0).log_pdf(&x).unwrap().exp();
            let p1 = cond.conditional(1).log_pdf(&x).unwrap().exp();
            let direct = 0.5 * p0 / (0.5 * p0 + 0.5 * p1);
            assert!((cond.analytic_df(0, &x).unwrap() - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn dv_odds_identity() {
        // (1/dv - 1) must equal p_G/p_data wherever both densities are alive
        let family = two_class_1d();
        let gen = matched_generator(&family);
        for i in 0..101 {
            let x = [-4.0 + 0.08 * i as f64];
            let dv = analytic_dv(&family, &gen, &x).unwrap();
            let ratio = (gen.log_pdf(&x).unwrap() - family.log_pdata(&x).unwrap()).exp();
            assert!((1.0 / dv - 1.0 - ratio).abs() < 1e-10 * (1.0 + ratio));
        }
    }

    #[test]
    fn generator_latent_roundtrip_and_determinism() {
        let family = two_class_1d();
        let gen = matched_generator(&family);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = gen.sample(&mut rng);
            let z = p.latent.as_ref().unwrap();
            assert_eq!(z.len(), 2);
            assert_eq!(gen.map_latent(z).unwrap(), p.coordinates);
        }
        let seq = |seed: u64| -> Vec<DataPoint> {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..20).map(|_| gen.sample(&mut rng)).collect()
        };
        assert_eq!(seq(5), seq(5));
    }

    #[test]
    fn spurious_mass_fraction_observed() {
        // background component appended with 20% weight
        let mix = GaussianMixture::new(
            vec![0.4, 0.4, 0.2],
            vec![
                nalgebra::DVector::from_vec(vec![-2.0]),
                nalgebra::DVector::from_vec(vec![2.0]),
                nalgebra::DVector::from_vec(vec![0.0]),
            ],
            crate::gmm::Covariances::PerComponent(vec![
                nalgebra::DMatrix::from_element(1, 1, 0.01),
                nalgebra::DMatrix::from_element(1, 1, 0.01),
                nalgebra::DMatrix::from_element(1, 1, 16.0),
            ]),
        )
        .unwrap();
        let gen = SyntheticGenerator::new(mix, 0.2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let n = 100_000;
        let mut background = 0usize;
        for _ in 0..n {
            let p = gen.sample(&mut rng);
            let z = p.latent.unwrap();
            if gen.pushforward().component_for_selector(z[0]) == 2 {
                background += 1;
            }
        }
        let frac = background as f64 / n as f64;
        let sigma = (0.2 * 0.8 / n as f64).sqrt();
        assert!((frac - 0.2).abs() < 3.0 * sigma, "frac = {frac}");
    }

    #[test]
    fn pushforward_samples_match_data_histogram() {
        // spurious_mass = 0 and pushforward = family marginal: 32-bin TV <= 0.02
        let family = two_class_1d();
        let gen = matched_generator(&family);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let lo = -4.0;
        let hi = 4.0;
        let bins = 32;
        let width = (hi - lo) / bins as f64;
        let n = 100_000;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let x = gen.sample(&mut rng).coordinates[0];
            if x >= lo && x < hi {
                counts[((x - lo) / width) as usize] += 1;
            }
        }
        // exact bin masses by midpoint quadrature, 8 subdivisions per bin
        let mut tv = 0.0;
        for (b, &count) in counts.iter().enumerate() {
            let mut mass = 0.0;
            for s in 0..8 {
                let x = lo + width * (b as f64 + (s as f64 + 0.5) / 8.0);
                mass += family.log_pdata(&[x]).unwrap().exp() * width / 8.0;
            }
            tv += (count as f64 / n as f64 - mass).abs();
        }
        tv *= 0.5;
        assert!(tv <= 0.02, "tv = {tv}");
    }

    #[test]
    fn support_check_rejects_uncovered_generator() {
        let family = two_class_1d();
        let narrow = GaussianMixture::from_1d(&[(1.0, -2.0, 0.05)]).unwrap();
        let grid: Vec<Vec<f64>> = (0..101).map(|i| vec![-4.0 + 0.08 * i as f64]).collect();
        let err = SyntheticGenerator::paired(narrow, 0.0, &family, &grid).unwrap_err();
        assert!(matches!(err, Error::SupportNotCovered(_)));
    }
}
