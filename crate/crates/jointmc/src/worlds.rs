//! Checked-in benchmark worlds: mode layouts with known label sets, the
//! density families derived from them, and matched (or deliberately
//! mismatched) generators. Every preset is built from one literal table of
//! `(center, mass, labels)` rows so the ground truth used by the metrics
//! and the densities used by the samplers can never drift apart.

use crate::algebra::{joint_density_value, JointClassSpec};
use crate::error::Result;
use crate::eval::ModeWorld;
use crate::family::{LabeledDensityFamily, SyntheticGenerator};
use crate::gmm::GaussianMixture;

/// A fully specified benchmark: density family, generator, and the mode
/// ground truth the metrics score against.
#[derive(Debug, Clone)]
pub struct AnalyticWorld {
    pub family: LabeledDensityFamily,
    pub generator: SyntheticGenerator,
    pub modes: ModeWorld,
}

impl AnalyticWorld {
    pub fn class_count(&self) -> usize {
        self.family.class_count()
    }
}

/// One ground-truth mode: isotropic Gaussian at `center` with overall
/// probability `mass`, belonging to the classes in `labels`.
#[derive(Debug, Clone)]
pub struct ModeRow {
    pub center: Vec<f64>,
    pub mass: f64,
    pub labels: Vec<usize>,
}

/// Builds the labeled family from a mode table.
///
/// Class conditionals are the mode mixtures restricted to each class with
/// weights proportional to mode mass (labeled data is collected per class,
/// so `p_data(x|k) = p(x|y_k=1)`); the multi-label prior `π_k` is the total
/// mass of modes carrying `k`, and the observed single-label priors are
/// uniform over classes.
pub fn family_from_modes(
    rows: &[ModeRow],
    sigma: f64,
    n_classes: usize,
) -> Result<LabeledDensityFamily> {
    let mut class_densities = Vec::with_capacity(n_classes);
    let mut class_priors = Vec::with_capacity(n_classes);
    for k in 0..n_classes {
        let members: Vec<&ModeRow> = rows.iter().filter(|r| r.labels.contains(&k)).collect();
        let total: f64 = members.iter().map(|r| r.mass).sum();
        let weights: Vec<f64> = members.iter().map(|r| r.mass / total).collect();
        let centers: Vec<Vec<f64>> = members.iter().map(|r| r.center.clone()).collect();
        class_densities.push(GaussianMixture::isotropic(weights, centers, sigma)?);
        class_priors.push(total);
    }
    let observed = vec![1.0 / n_classes as f64; n_classes];
    LabeledDensityFamily::new(class_densities, class_priors, observed)
}

/// Mode ground truth from the same table.
pub fn modes_from_rows(rows: &[ModeRow], sigma: f64) -> Result<ModeWorld> {
    ModeWorld::new(
        rows.iter().map(|r| r.center.clone()).collect(),
        sigma,
        rows.iter().map(|r| r.labels.clone()).collect(),
    )
}

/// Generator over the same modes with its own weighting, plus an optional
/// broad spurious background component (weight `spurious_mass`, standard
/// deviation `background_sigma`, centered at the mode centroid).
pub fn generator_from_modes(
    rows: &[ModeRow],
    mode_weights: &[f64],
    sigma: f64,
    spurious_mass: f64,
    background_sigma: f64,
) -> Result<SyntheticGenerator> {
    let mut weights: Vec<f64> =
        mode_weights.iter().map(|w| w * (1.0 - spurious_mass)).collect();
    let mut centers: Vec<Vec<f64>> = rows.iter().map(|r| r.center.clone()).collect();
    let dim = centers[0].len();
    let mut sigmas = vec![sigma; rows.len()];
    if spurious_mass > 0.0 {
        let centroid: Vec<f64> = (0..dim)
            .map(|j| centers.iter().map(|c| c[j]).sum::<f64>() / centers.len() as f64)
            .collect();
        centers.push(centroid);
        weights.push(spurious_mass);
        sigmas.push(background_sigma);
    }
    let covs = sigmas
        .iter()
        .map(|&s| nalgebra::DMatrix::identity(dim, dim) * (s * s))
        .collect();
    let mix = GaussianMixture::new(
        weights,
        centers.into_iter().map(nalgebra::DVector::from_vec).collect(),
        crate::gmm::Covariances::PerComponent(covs),
    )?;
    SyntheticGenerator::new(mix, spurious_mass)
}

/// Exact (numerically normalized) 1D joint-class density
/// `(min_I f_i - max_J f_j)⁺ / Z` with `f_k = π_k p(x|y_k=1)`,
/// normalized over `[lo, hi]`.
pub fn normalized_joint_density_1d<'a>(
    family: &'a LabeledDensityFamily,
    spec: &JointClassSpec,
    lo: f64,
    hi: f64,
) -> impl Fn(f64) -> f64 + 'a {
    let spec = spec.clone();
    let n = family.class_count();
    let unnormalized = move |family: &LabeledDensityFamily, spec: &JointClassSpec, x: f64| {
        let values: Vec<f64> = (0..n)
            .map(|k| {
                family.class_prior(k) * family.class_density(k).logpdf(&[x]).unwrap().exp()
            })
            .collect();
        joint_density_value(&values, spec)
    };
    let steps = 16_384;
    let h = (hi - lo) / steps as f64;
    let z: f64 = (0..steps)
        .map(|i| unnormalized(family, &spec, lo + h * (i as f64 + 0.5)) * h)
        .sum();
    move |x: f64| unnormalized(family, &spec, x) / z
}

/// Two overlapping 1D classes sharing their middle mode (classes `A` at
/// {-2, 0} and `B` at {0, +2}, σ = 0.25, equal mode masses) with a
/// generator matched to the labeled-data marginal.
pub fn overlap_1d() -> AnalyticWorld {
    let third = 1.0 / 3.0;
    let rows = vec![
        ModeRow { center: vec![-2.0], mass: third, labels: vec![0] },
        ModeRow { center: vec![0.0], mass: third, labels: vec![0, 1] },
        ModeRow { center: vec![2.0], mass: third, labels: vec![1] },
    ];
    let sigma = 0.25;
    let family = family_from_modes(&rows, sigma, 2).expect("static table is valid");
    // labeled marginal: 0.5 p(x|A) + 0.5 p(x|B) weights the shared mode double
    let generator = generator_from_modes(&rows, &[0.25, 0.5, 0.25], sigma, 0.0, 0.0)
        .expect("static table is valid");
    let modes = modes_from_rows(&rows, sigma).expect("static table is valid");
    AnalyticWorld { family, generator, modes }
}

/// The two-grid benchmark: two 4×4 grids of σ = 0.05 modes with unit
/// spacing sharing a 3×3 block (23 distinct modes, 9 shared), uniform
/// ground-truth mass. The generator spreads `spurious_mass` over a broad
/// background (σ = 4) and weights the 23 modes uniformly, which
/// deliberately mismatches the labeled marginal on the shared block.
pub fn two_grids(spurious_mass: f64) -> AnalyticWorld {
    let mut rows = Vec::with_capacity(23);
    for gx in 0..5 {
        for gy in 0..5 {
            let in_a = gx < 4 && gy < 4;
            let in_b = gx >= 1 && gy >= 1;
            if !in_a && !in_b {
                continue;
            }
            let mut labels = Vec::new();
            if in_a {
                labels.push(0);
            }
            if in_b {
                labels.push(1);
            }
            rows.push(ModeRow {
                center: vec![gx as f64, gy as f64],
                mass: 1.0 / 23.0,
                labels,
            });
        }
    }
    debug_assert_eq!(rows.len(), 23);
    let sigma = 0.05;
    let family = family_from_modes(&rows, sigma, 2).expect("static table is valid");
    let weights = vec![1.0 / 23.0; 23];
    let generator = generator_from_modes(&rows, &weights, sigma, spurious_mass, 4.0)
        .expect("static table is valid");
    let modes = modes_from_rows(&rows, sigma).expect("static table is valid");
    AnalyticWorld { family, generator, modes }
}

/// Geometric-convergence study world: two far-separated 1D classes where
/// the generator puts mass `alpha` on the target class. Acceptance for
/// in-target proposals is ≈ 1, so the chain law is within noise of
/// `TV(t) = (1-alpha)^t` from a fixed start.
///
/// Returns the world, the target (`class 0 minus class 1`), and a fixed
/// off-mode start point inside the target support.
pub fn two_island_world(alpha: f64) -> (AnalyticWorld, JointClassSpec, f64) {
    let rows = vec![
        ModeRow { center: vec![0.0], mass: alpha, labels: vec![0] },
        ModeRow { center: vec![8.0], mass: 1.0 - alpha, labels: vec![1] },
    ];
    let sigma = 0.2;
    let mut family = family_from_modes(&rows, sigma, 2).expect("static table is valid");
    // observed priors matching the mode masses keep p_data equal to the
    // generator marginal, so the odds factor is exactly flat
    family = LabeledDensityFamily::new(
        (0..2).map(|k| family.class_density(k).clone()).collect(),
        vec![alpha, 1.0 - alpha],
        vec![alpha, 1.0 - alpha],
    )
    .expect("static weights are valid");
    let generator = generator_from_modes(&rows, &[alpha, 1.0 - alpha], sigma, 0.0, 0.0)
        .expect("static table is valid");
    let modes = modes_from_rows(&rows, sigma).expect("static table is valid");
    let spec = JointClassSpec::new([0], [1], 2).expect("static spec is valid");
    (AnalyticWorld { family, generator, modes }, spec, 0.6)
}

/// Latent-adaptation benchmark: eight 2D modes (3 only-`A`, 3 only-`B`,
/// 2 shared) where the generator puts just 10% of its mass on the shared
/// modes, so the `A∩B` target starts with low acceptance.
pub fn shared_minority_world() -> AnalyticWorld {
    let rows = vec![
        ModeRow { center: vec![-3.0, 3.0], mass: 0.125, labels: vec![0] },
        ModeRow { center: vec![-3.0, 0.0], mass: 0.125, labels: vec![0] },
        ModeRow { center: vec![-3.0, -3.0], mass: 0.125, labels: vec![0] },
        ModeRow { center: vec![0.0, 1.5], mass: 0.125, labels: vec![0, 1] },
        ModeRow { center: vec![0.0, -1.5], mass: 0.125, labels: vec![0, 1] },
        ModeRow { center: vec![3.0, 3.0], mass: 0.125, labels: vec![1] },
        ModeRow { center: vec![3.0, 0.0], mass: 0.125, labels: vec![1] },
        ModeRow { center: vec![3.0, -3.0], mass: 0.125, labels: vec![1] },
    ];
    let sigma = 0.25;
    let family = family_from_modes(&rows, sigma, 2).expect("static table is valid");
    let weights = vec![0.15, 0.15, 0.15, 0.05, 0.05, 0.15, 0.15, 0.15];
    let generator = generator_from_modes(&rows, &weights, sigma, 0.0, 0.0)
        .expect("static table is valid");
    let modes = modes_from_rows(&rows, sigma).expect("static table is valid");
    AnalyticWorld { family, generator, modes }
}

/// Three-attribute world on cube corners: corner `(b0,b1,b2)` of
/// `{0,3}³` carries the attributes with `b_k = 1` and mass
/// `Π q^{b_k} (1-q)^{1-b_k}` with `q = 0.3`, so each attribute has
/// marginal mass 0.3 and the triple intersection 0.027. The generator
/// matches the full corner distribution (including the unlabeled origin).
pub fn attribute_cube_world() -> AnalyticWorld {
    let q = 0.3;
    let mut rows = Vec::with_capacity(8);
    for bits in 0..8u32 {
        let b = |k: u32| (bits >> k) & 1;
        let mass = (0..3)
            .map(|k| if b(k) == 1 { q } else { 1.0 - q })
            .product::<f64>();
        rows.push(ModeRow {
            center: (0..3).map(|k| 3.0 * b(k) as f64).collect(),
            mass,
            labels: (0..3).filter(|&k| b(k as u32) == 1).collect(),
        });
    }
    let sigma = 0.15;
    let family = family_from_modes(&rows, sigma, 3).expect("static table is valid");
    let weights: Vec<f64> = rows.iter().map(|r| r.mass).collect();
    let generator = generator_from_modes(&rows, &weights, sigma, 0.0, 0.0)
        .expect("static table is valid");
    let modes = modes_from_rows(&rows, sigma).expect("static table is valid");
    AnalyticWorld { family, generator, modes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{AnalyticProvider, RatioProvider};

    #[test]
    fn overlap_world_is_consistent() {
        let w = overlap_1d();
        assert_eq!(w.class_count(), 2);
        // π_A = mass of modes carrying A = 2/3; γ = (2/3)/(1/2) = 4/3
        let gammas = w.family.gammas();
        assert!((gammas[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((gammas[1] - 4.0 / 3.0).abs() < 1e-12);
        // generator marginal equals the labeled marginal everywhere
        for x in [-3.0, -2.0, -0.7, 0.0, 1.3, 2.0] {
            let d = (w.generator.log_pdf(&[x]).unwrap() - w.family.log_pdata(&[x]).unwrap()).abs();
            assert!(d < 1e-10, "mismatch {d} at {x}");
        }
    }

    #[test]
    fn overlap_intersection_density_is_normalized_and_centered() {
        let w = overlap_1d();
        let spec = JointClassSpec::new([0, 1], [], 2).unwrap();
        let density = normalized_joint_density_1d(&w.family, &spec, -4.0, 4.0);
        let steps = 4000;
        let h = 8.0 / steps as f64;
        let total: f64 = (0..steps).map(|i| density(-4.0 + h * (i as f64 + 0.5)) * h).sum();
        assert!((total - 1.0).abs() < 1e-6, "integral {total}");
        // intersection target is (numerically) the shared mode at 0
        assert!(density(0.0) > 100.0 * density(-2.0));
        assert!(density(0.0) > 100.0 * density(2.0));
    }

    #[test]
    fn two_grids_layout() {
        let w = two_grids(0.15);
        assert_eq!(w.modes.centers.len(), 23);
        let shared = w.modes.labels.iter().filter(|l| l.len() == 2).count();
        assert_eq!(shared, 9);
        let only_a = w.modes.labels.iter().filter(|l| l.as_slice() == [0]).count();
        let only_b = w.modes.labels.iter().filter(|l| l.as_slice() == [1]).count();
        assert_eq!(only_a, 7);
        assert_eq!(only_b, 7);
        assert!((w.generator.spurious_mass() - 0.15).abs() < 1e-12);
        // π = 16/23 per class, γ = 32/23
        assert!((w.family.gammas()[0] - 32.0 / 23.0).abs() < 1e-12);
    }

    #[test]
    fn two_grids_r_factor_oracle_points() {
        let w = two_grids(0.0);
        let provider = AnalyticProvider::new(&w.family, &w.generator);
        let both = JointClassSpec::new([0, 1], [], 2).unwrap();
        let a_minus_b = JointClassSpec::new([0], [1], 2).unwrap();
        // (0,0) is A-only; (2,2) is shared
        let at = |spec: &JointClassSpec, x: &[f64]| {
            crate::sampler::log_r_factor(x, spec, &provider).unwrap()
        };
        // at an A-only mode the intersection r-factor is suppressed by the
        // vanishing B posterior (hundreds of nats below the shared mode)
        assert!(at(&both, &[0.0, 0.0]) < at(&both, &[2.0, 2.0]) - 100.0);
        assert!(at(&both, &[2.0, 2.0]).is_finite());
        assert!(at(&a_minus_b, &[0.0, 0.0]).is_finite());
        assert_eq!(at(&a_minus_b, &[2.0, 2.0]), f64::NEG_INFINITY);
        // at a shared mode dr = (1/2, 1/2) scaled by γ = 32/23
        let dr = provider.dr_vector(&[2.0, 2.0]).unwrap();
        assert!((dr[0] - 0.5).abs() < 1e-9 && (dr[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn two_island_world_odds_are_flat() {
        let (w, spec, start) = two_island_world(0.25);
        let provider = AnalyticProvider::new(&w.family, &w.generator);
        for x in [-0.3, 0.0, start, 7.6, 8.0] {
            assert!(provider.log_dv_odds(&[x]).unwrap().abs() < 1e-9);
        }
        assert!(crate::sampler::log_r_factor(&[start], &spec, &provider)
            .unwrap()
            .is_finite());
        assert_eq!(
            crate::sampler::log_r_factor(&[8.0], &spec, &provider).unwrap(),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn cube_world_masses() {
        let w = attribute_cube_world();
        assert_eq!(w.modes.centers.len(), 8);
        // per-attribute marginal 0.3
        for g in w.family.gammas() {
            assert!((g - 0.3 / (1.0 / 3.0)).abs() < 1e-12);
        }
        // triple corner mass = 0.027 under the generator
        let triple: f64 = w
            .modes
            .labels
            .iter()
            .zip(w.generator.pushforward().weights())
            .filter(|(l, _)| l.len() == 3)
            .map(|(_, &wt)| wt)
            .sum();
        assert!((triple - 0.027).abs() < 1e-12);
    }

    #[test]
    fn shared_minority_generator_mass() {
        let w = shared_minority_world();
        let shared_weight: f64 = w
            .modes
            .labels
            .iter()
            .zip(w.generator.pushforward().weights())
            .filter(|(l, _)| l.len() == 2)
            .map(|(_, &wt)| wt)
            .sum();
        assert!((shared_weight - 0.1).abs() < 1e-12);
    }
}
