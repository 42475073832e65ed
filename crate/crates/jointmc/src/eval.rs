//! Evaluation of drawn samples against mode-structured ground truth:
//! nearest-mode assignment, joint-class accuracy, high-quality ratio,
//! per-axis mode spread, and histogram total-variation distances.

use crate::algebra::JointClassSpec;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Ground truth for mode-based metrics: isotropic modes at known centers,
/// each carrying the set of class labels it belongs to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeWorld {
    pub centers: Vec<Vec<f64>>,
    /// Common per-axis standard deviation of every mode.
    pub sigma: f64,
    /// Class labels present at each mode, sorted ascending.
    pub labels: Vec<Vec<usize>>,
}

impl ModeWorld {
    pub fn new(centers: Vec<Vec<f64>>, sigma: f64, labels: Vec<Vec<usize>>) -> Result<Self> {
        if centers.is_empty() || centers.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: centers.len(),
                got: labels.len(),
            });
        }
        if !(sigma > 0.0) {
            return Err(Error::config("sigma", "mode spread must be positive"));
        }
        let dim = centers[0].len();
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: 0 });
        }
        Ok(ModeWorld { centers, sigma, labels })
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    /// Whether the mode's label set satisfies the joint-class membership
    /// rule (all intersection classes present, no difference class).
    pub fn mode_admitted(&self, mode: usize, spec: &JointClassSpec) -> bool {
        spec.admits(&self.labels[mode])
    }
}

/// Index of the nearest center in Euclidean distance; ties resolve to the
/// lowest index.
pub fn assign_to_mode(x: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    best
}

/// Per-sample verdicts plus the aggregate rates for one target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecEvaluation {
    /// Canonical text of the evaluated target.
    pub spec: String,
    pub samples: usize,
    /// Fraction assigned to a mode whose label set satisfies the target.
    pub accuracy: f64,
    /// Fraction within `4σ` (Euclidean) of their assigned mode center.
    pub high_quality: f64,
    /// Pooled per-axis RMS deviation from the assigned center, over
    /// high-quality samples only (background samples would swamp it).
    pub mode_std: f64,
}

/// Scores a batch of points against the mode world for one target.
pub fn evaluate_samples(
    points: &[Vec<f64>],
    world: &ModeWorld,
    spec: &JointClassSpec,
) -> Result<SpecEvaluation> {
    if points.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let dim = world.dim();
    let cutoff2 = (4.0 * world.sigma) * (4.0 * world.sigma);
    let mut correct = 0usize;
    let mut high_quality = 0usize;
    let mut sq_sum = 0.0;
    let mut axis_count = 0usize;
    for x in points {
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        let mode = assign_to_mode(x, &world.centers);
        if world.mode_admitted(mode, spec) {
            correct += 1;
        }
        let center = &world.centers[mode];
        let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        if d2 <= cutoff2 {
            high_quality += 1;
            sq_sum += d2;
            axis_count += dim;
        }
    }
    let n = points.len();
    Ok(SpecEvaluation {
        spec: spec.format(None),
        samples: n,
        accuracy: correct as f64 / n as f64,
        high_quality: high_quality as f64 / n as f64,
        mode_std: if axis_count == 0 { f64::NAN } else { (sq_sum / axis_count as f64).sqrt() },
    })
}

/// Number of midpoint-quadrature subdivisions per histogram bin when
/// integrating an exact density into bin masses.
pub const QUADRATURE_SUBDIVISIONS: usize = 8;

/// Exact bin masses of a 1D density over `bins` equal bins on `[lo, hi)`,
/// by midpoint quadrature, plus the leftover mass as a final overflow
/// entry (`1 - Σ bins`, clamped at 0). The density must be normalized.
pub fn density_bin_masses(
    lo: f64,
    hi: f64,
    bins: usize,
    density: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    let step = width / QUADRATURE_SUBDIVISIONS as f64;
    let mut masses = Vec::with_capacity(bins + 1);
    let mut total = 0.0;
    for b in 0..bins {
        let mut mass = 0.0;
        for s in 0..QUADRATURE_SUBDIVISIONS {
            let x = lo + width * b as f64 + step * (s as f64 + 0.5);
            mass += density(x) * step;
        }
        total += mass;
        masses.push(mass);
    }
    masses.push((1.0 - total).max(0.0));
    masses
}

/// Histogram counts over the same layout: `bins` in-range bins plus one
/// overflow bin for everything outside `[lo, hi)`.
pub fn histogram_counts(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins + 1];
    for v in values {
        if v >= lo && v < hi {
            counts[((v - lo) / width) as usize] += 1;
        } else {
            counts[bins] += 1;
        }
    }
    counts
}

/// Total variation between an empirical histogram and exact bin masses:
/// `½ Σ |p̂_b - p_b|`, including the overflow bin.
pub fn tv_from_masses(counts: &[usize], masses: &[f64]) -> f64 {
    assert_eq!(counts.len(), masses.len(), "histogram layouts must match");
    let n: usize = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(masses)
        .map(|(&c, &m)| (c as f64 / n as f64 - m).abs())
        .sum::<f64>()
}

/// One-call TV between 1D samples and a normalized density.
pub fn tv_histogram_1d(
    samples: impl IntoIterator<Item = f64>,
    lo: f64,
    hi: f64,
    bins: usize,
    density: impl Fn(f64) -> f64,
) -> f64 {
    let counts = histogram_counts(samples, lo, hi, bins);
    let masses = density_bin_masses(lo, hi, bins, density);
    tv_from_masses(&counts, &masses)
}

/// TV to the target at every step of a chain ensemble:
/// `states[step][chain]` holds 1D chain positions (the layout
/// `sampler::step_marginals` produces).
pub fn convergence_curve(
    states: &[Vec<Vec<f64>>],
    lo: f64,
    hi: f64,
    bins: usize,
    density: impl Fn(f64) -> f64,
) -> Vec<f64> {
    let masses = density_bin_masses(lo, hi, bins, &density);
    states
        .iter()
        .map(|chains| {
            let counts = histogram_counts(chains.iter().map(|x| x[0]), lo, hi, bins);
            tv_from_masses(&counts, &masses)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::LN_2PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
        (-0.5 * ((x - mu) / sigma).powi(2)).exp() / (sigma * (LN_2PI.exp()).sqrt())
    }

    fn grid_world() -> ModeWorld {
        // three modes: class {0}, classes {0,1}, class {1}
        ModeWorld::new(
            vec![vec![-2.0, 0.0], vec![0.0, 0.0], vec![2.0, 0.0]],
            0.1,
            vec![vec![0], vec![0, 1], vec![1]],
        )
        .unwrap()
    }

    #[test]
    fn nearest_mode_with_tie_break() {
        let centers = vec![vec![0.0], vec![2.0]];
        assert_eq!(assign_to_mode(&[0.4], &centers), 0);
        assert_eq!(assign_to_mode(&[1.7], &centers), 1);
        // exact midpoint ties to the lower index
        assert_eq!(assign_to_mode(&[1.0], &centers), 0);
    }

    #[test]
    fn accuracy_against_hand_labeled_points() {
        let world = grid_world();
        let spec = JointClassSpec::new([0], [1], 2).unwrap();
        // two points at the {0} mode, one at the shared mode, one at {1}
        let points = vec![
            vec![-2.05, 0.02],
            vec![-1.9, -0.03],
            vec![0.01, 0.0],
            vec![2.0, 0.1],
        ];
        let eval = evaluate_samples(&points, &world, &spec).unwrap();
        assert_eq!(eval.accuracy, 0.5);
        let both = JointClassSpec::new([0, 1], [], 2).unwrap();
        let eval = evaluate_samples(&points, &world, &both).unwrap();
        assert_eq!(eval.accuracy, 0.25);
    }

    #[test]
    fn high_quality_cutoff_at_four_sigma() {
        let world = grid_world();
        let spec = JointClassSpec::new([0], [], 2).unwrap();
        // sigma = 0.1: cutoff radius 0.4
        let points = vec![vec![-2.0 + 0.39, 0.0], vec![-2.0 + 0.41, 0.0]];
        let eval = evaluate_samples(&points, &world, &spec).unwrap();
        assert_eq!(eval.high_quality, 0.5);
    }

    #[test]
    fn mode_std_recovers_generating_sigma() {
        let world = grid_world();
        let spec = JointClassSpec::new([0], [], 2).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut points = Vec::new();
        for _ in 0..50_000 {
            let c = &world.centers[rng.random_range(0..3)];
            points.push(vec![
                c[0] + 0.1 * normal_draw(&mut rng),
                c[1] + 0.1 * normal_draw(&mut rng),
            ]);
        }
        let eval = evaluate_samples(&points, &world, &spec).unwrap();
        assert!((eval.mode_std - 0.1).abs() < 0.003, "mode_std {}", eval.mode_std);
        assert!(eval.high_quality > 0.999);
    }

    fn normal_draw(rng: &mut impl Rng) -> f64 {
        use rand_distr::{Distribution, StandardNormal};
        StandardNormal.sample(rng)
    }

    #[test]
    fn tv_zero_mass_mismatch_oracle() {
        // uniform target on [0,1), samples all in [0,0.5): TV = 0.5 exactly
        let samples: Vec<f64> = (0..10_000).map(|i| 0.5 * (i as f64 + 0.5) / 10_000.0).collect();
        let tv = tv_histogram_1d(samples, 0.0, 1.0, 64, |x| {
            if (0.0..1.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        assert!((tv - 0.5).abs() < 0.01, "tv {tv}");
    }

    #[test]
    fn tv_small_for_matched_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let samples: Vec<f64> = (0..100_000).map(|_| 1.5 + 0.3 * normal_draw(&mut rng)).collect();
        let tv = tv_histogram_1d(samples, 0.0, 3.0, 64, |x| normal_pdf(x, 1.5, 0.3));
        assert!(tv < 0.03, "tv {tv}");
    }

    #[test]
    fn overflow_bin_catches_outside_mass() {
        // half the samples outside the window, target entirely inside
        let samples: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { 0.5 } else { 10.0 })
            .collect();
        let counts = histogram_counts(samples, 0.0, 1.0, 4);
        assert_eq!(counts[4], 500);
        let masses = density_bin_masses(0.0, 1.0, 4, |x| {
            if (0.0..1.0).contains(&x) {
                1.0
            } else {
                0.0
            }
        });
        assert!((masses[4]).abs() < 1e-12);
        // by hand: in-window samples pile 0.5 into one 0.25-mass bin
        // (|0.5-0.25| = 0.25), three empty bins contribute 0.75, and the
        // overflow bin |0.5-0| = 0.5 → TV = 1.5/2 = 0.75
        let tv = tv_from_masses(&counts, &masses);
        assert!((tv - 0.75).abs() < 0.01, "tv {tv}");
    }

    #[test]
    fn convergence_curve_matches_planted_mixture_decay() {
        // chains stuck at x0 = -1 with probability (1-a)^t, else exact draws
        // from N(1, 0.2): TV(t) should track (1-a)^t
        let a = 0.25;
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let chains = 40_000;
        let steps = 12;
        let mut states: Vec<Vec<Vec<f64>>> = Vec::new();
        let mut moved: Vec<Option<f64>> = vec![None; chains];
        for _ in 0..steps {
            for slot in moved.iter_mut() {
                if slot.is_none() && rng.random::<f64>() < a {
                    *slot = Some(1.0 + 0.2 * normal_draw(&mut rng));
                }
            }
            states.push(moved.iter().map(|m| vec![m.unwrap_or(-1.0)]).collect());
        }
        let curve = convergence_curve(&states, 0.0, 2.0, 32, |x| normal_pdf(x, 1.0, 0.2));
        for (t, &tv) in curve.iter().enumerate() {
            let predicted = (1.0 - a).powi(t as i32 + 1);
            assert!(
                (tv - predicted).abs() < 0.02,
                "step {t}: tv {tv} predicted {predicted}"
            );
        }
    }
}
