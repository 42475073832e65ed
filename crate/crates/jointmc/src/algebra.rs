//! Joint-class index algebra.
//!
//! A joint class is named by a pair of index sets `(I, J)`: a sample belongs
//! to every class in the intersection set `I` and to none of the classes in
//! the difference set `J`. The density of such a class can be recovered from
//! per-class densities by a min/max positive-part combination, which
//! [`joint_density_value`] implements and [`DiscreteLabelWorld`] validates
//! against a brute-force subset-summation oracle.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Index of a single class in the universe `{0, ..., n-1}`.
pub type ClassIndex = usize;

/// A validated `(I, J)` pair over a universe of `n` classes.
///
/// Invariants: `I` non-empty, `I` and `J` disjoint, all indices `< n`.
/// Index sets are kept sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointClassSpec {
    intersection: Vec<ClassIndex>,
    difference: Vec<ClassIndex>,
    n: usize,
}

fn sorted_dedup(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

impl JointClassSpec {
    /// Validates an `(I, J)` pair, returning the canonical sorted form.
    pub fn new(
        intersection: impl IntoIterator<Item = ClassIndex>,
        difference: impl IntoIterator<Item = ClassIndex>,
        n: usize,
    ) -> Result<Self> {
        let intersection = sorted_dedup(intersection.into_iter().collect());
        let difference = sorted_dedup(difference.into_iter().collect());
        if intersection.is_empty() {
            return Err(Error::EmptyIntersection);
        }
        let overlap: Vec<usize> = intersection
            .iter()
            .copied()
            .filter(|i| difference.binary_search(i).is_ok())
            .collect();
        if !overlap.is_empty() {
            return Err(Error::OverlappingSets(overlap));
        }
        for &idx in intersection.iter().chain(difference.iter()) {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        Ok(JointClassSpec {
            intersection,
            difference,
            n,
        })
    }

    pub fn intersection(&self) -> &[ClassIndex] {
        &self.intersection
    }

    pub fn difference(&self) -> &[ClassIndex] {
        &self.difference
    }

    /// Universe size this spec was validated against.
    pub fn universe(&self) -> usize {
        self.n
    }

    /// True when `I ∪ J` covers the whole universe.
    pub fn is_saturated(&self) -> bool {
        self.intersection.len() + self.difference.len() == self.n
    }

    /// Whether a label subset `s` (the classes a point belongs to) is a
    /// member of this joint class: `I ⊆ s` and `J ∩ s = ∅`.
    pub fn admits(&self, s: &[ClassIndex]) -> bool {
        self.intersection.iter().all(|i| s.contains(i))
            && self.difference.iter().all(|j| !s.contains(j))
    }

    /// Canonical text form: `+` before each intersection member, `-` before
    /// each difference member, e.g. `+0+2-1`. With `names` given, indices
    /// are replaced by class names, e.g. `+B+M+S-A-N-W`.
    pub fn format(&self, names: Option<&[String]>) -> String {
        let name = |idx: usize| match names {
            Some(ns) => ns[idx].clone(),
            None => idx.to_string(),
        };
        let mut out = String::new();
        for &i in &self.intersection {
            out.push('+');
            out.push_str(&name(i));
        }
        for &j in &self.difference {
            out.push('-');
            out.push_str(&name(j));
        }
        out
    }

    /// Parses the canonical text form produced by [`JointClassSpec::format`].
    pub fn parse(input: &str, n: usize, names: Option<&[String]>) -> Result<Self> {
        let err = |message: &str| Error::SpecParse {
            input: input.to_string(),
            message: message.to_string(),
        };
        let mut intersection = Vec::new();
        let mut difference = Vec::new();
        let mut rest = input.trim();
        if rest.is_empty() {
            return Err(err("empty spec"));
        }
        while !rest.is_empty() {
            let sign = rest.chars().next().unwrap();
            if sign != '+' && sign != '-' {
                return Err(err("each class must be prefixed with '+' or '-'"));
            }
            rest = &rest[1..];
            let end = rest
                .find(|c| c == '+' || c == '-')
                .unwrap_or(rest.len());
            let token = &rest[..end];
            rest = &rest[end..];
            if token.is_empty() {
                return Err(err("empty class name"));
            }
            let idx = match names {
                Some(ns) => ns
                    .iter()
                    .position(|name| name == token)
                    .ok_or_else(|| err(&format!("unknown class name {token:?}")))?,
                None => token
                    .parse::<usize>()
                    .map_err(|_| err(&format!("invalid class index {token:?}")))?,
            };
            if sign == '+' {
                intersection.push(idx);
            } else {
                difference.push(idx);
            }
        }
        JointClassSpec::new(intersection, difference, n)
    }
}

/// Combines `n` per-class values into the joint-class value
/// `(min over I - max over J)⁺`, with the max over an empty `J` taken as 0.
///
/// The inputs are the per-class functions evaluated at one point; in the
/// sampler they are the γ-scaled class posteriors.
pub fn joint_density_value(single_class_values: &[f64], spec: &JointClassSpec) -> f64 {
    debug_assert_eq!(single_class_values.len(), spec.universe());
    let min_i = spec
        .intersection
        .iter()
        .map(|&i| single_class_values[i])
        .fold(f64::INFINITY, f64::min);
    let max_j = spec
        .difference
        .iter()
        .map(|&j| single_class_values[j])
        .fold(0.0, f64::max);
    (min_i - max_j).max(0.0)
}

/// All saturated specs (`I ∪ J = N`) over `n` classes: exactly `2^n - 1`,
/// one per non-empty subset taken as the intersection.
pub fn enumerate_joint_classes(n: usize) -> Result<Vec<JointClassSpec>> {
    if n == 0 || n > 16 {
        return Err(Error::UniverseSizeOutOfRange(n));
    }
    let mut specs = Vec::with_capacity((1usize << n) - 1);
    for mask in 1u32..(1 << n) {
        let intersection: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
        let difference: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) == 0).collect();
        specs.push(JointClassSpec::new(intersection, difference, n)?);
    }
    Ok(specs)
}

/// A finite weighted point set where every point belongs to exactly one
/// joint class `(S, N\S)`. Serves as the test scaffold for the joint-density
/// formula: with one label subset per point, mutually exclusive classes have
/// disjoint support by construction.
#[derive(Debug, Clone)]
pub struct DiscreteLabelWorld {
    n: usize,
    labels: Vec<Vec<ClassIndex>>,
    masses: Vec<f64>,
}

impl DiscreteLabelWorld {
    /// `labels[p]` is the full label subset of point `p`, `masses[p]` its
    /// non-negative mass. Masses must sum to a positive finite total.
    pub fn new(n: usize, labels: Vec<Vec<ClassIndex>>, masses: Vec<f64>) -> Result<Self> {
        if n == 0 || n > 16 {
            return Err(Error::UniverseSizeOutOfRange(n));
        }
        if labels.len() != masses.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                got: masses.len(),
            });
        }
        let total: f64 = masses.iter().sum();
        if !(total.is_finite() && total > 0.0) || masses.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::InvalidWeights(total));
        }
        let labels = labels
            .into_iter()
            .map(|s| {
                let s = sorted_dedup(s);
                for &idx in &s {
                    if idx >= n {
                        return Err(Error::IndexOutOfRange { index: idx, n });
                    }
                }
                Ok(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiscreteLabelWorld { n, labels, masses })
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn point_count(&self) -> usize {
        self.labels.len()
    }

    pub fn label_subset(&self, point: usize) -> Result<&[ClassIndex]> {
        self.labels
            .get(point)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownPoint(point))
    }

    pub fn mass(&self, point: usize) -> Result<f64> {
        self.masses
            .get(point)
            .copied()
            .ok_or(Error::UnknownPoint(point))
    }

    /// Per-class marginal masses `f_k(point) = mass(point) · 1[k ∈ S]`
    /// for `k = 0..n`.
    pub fn class_marginals(&self, point: usize) -> Result<Vec<f64>> {
        let s = self.label_subset(point)?;
        let m = self.masses[point];
        Ok((0..self.n)
            .map(|k| if s.contains(&k) { m } else { 0.0 })
            .collect())
    }

    /// Brute-force joint-class mass at a point: sums the point's mass over
    /// every saturated class `(S', N\S')` with `I ⊆ S'` and `J ⊆ N\S'`,
    /// enumerating all subsets of `N`.
    pub fn oracle_joint_mass(&self, spec: &JointClassSpec, point: usize) -> Result<f64> {
        let s = self.label_subset(point)?;
        let m = self.masses[point];
        let mut s_mask = 0u32;
        for &k in s {
            s_mask |= 1 << k;
        }
        let mut total = 0.0;
        for candidate in 0u32..(1 << self.n) {
            let contains_i = spec
                .intersection
                .iter()
                .all(|&i| candidate & (1 << i) != 0);
            let avoids_j = spec.difference.iter().all(|&j| candidate & (1 << j) == 0);
            if contains_i && avoids_j && candidate == s_mask {
                total += m;
            }
        }
        Ok(total)
    }

    /// Total mass of the joint class named by `spec` (its unnormalized
    /// probability); exposed for tests only, acceptance ratios never need it.
    pub fn joint_class_mass(&self, spec: &JointClassSpec) -> f64 {
        (0..self.point_count())
            .map(|p| self.oracle_joint_mass(spec, p).unwrap())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn spec(i: &[usize], j: &[usize], n: usize) -> JointClassSpec {
        JointClassSpec::new(i.iter().copied(), j.iter().copied(), n).unwrap()
    }

    #[test]
    fn validates_minimal_pair() {
        let s = spec(&[0], &[], 2);
        assert_eq!(s.intersection(), &[0]);
        assert!(s.difference().is_empty());
    }

    #[test]
    fn rejects_empty_intersection() {
        let err = JointClassSpec::new([], [1], 2).unwrap_err();
        assert!(matches!(err, Error::EmptyIntersection));
    }

    #[test]
    fn rejects_overlapping_sets() {
        let err = JointClassSpec::new([0, 1], [1], 3).unwrap_err();
        assert!(matches!(err, Error::OverlappingSets(v) if v == vec![1]));
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = JointClassSpec::new([2], [], 2).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { index: 2, n: 2 }));
    }

    #[test]
    fn joint_density_basic_values() {
        assert_eq!(joint_density_value(&[0.5, 0.2], &spec(&[0], &[1], 2)), 0.3);
        assert_eq!(joint_density_value(&[0.2, 0.5], &spec(&[0], &[1], 2)), 0.0);
        let v = joint_density_value(&[0.3, 0.7, 0.4], &spec(&[1, 2], &[0], 3));
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn enumerate_counts() {
        assert_eq!(enumerate_joint_classes(1).unwrap().len(), 1);
        assert_eq!(enumerate_joint_classes(3).unwrap().len(), 7);
        assert_eq!(enumerate_joint_classes(6).unwrap().len(), 63);
        assert!(enumerate_joint_classes(0).is_err());
        assert!(enumerate_joint_classes(17).is_err());
        let specs = enumerate_joint_classes(4).unwrap();
        for s in &specs {
            assert!(s.is_saturated());
            assert!(!s.intersection().is_empty());
        }
    }

    #[test]
    fn oracle_mass_containment() {
        let world =
            DiscreteLabelWorld::new(2, vec![vec![0, 1], vec![0]], vec![0.7, 0.3]).unwrap();
        let s = spec(&[0], &[], 2);
        assert_eq!(world.oracle_joint_mass(&s, 0).unwrap(), 0.7);
        assert_eq!(world.oracle_joint_mass(&s, 1).unwrap(), 0.3);
        let s = spec(&[1], &[], 2);
        assert_eq!(world.oracle_joint_mass(&s, 1).unwrap(), 0.0);
        assert!(world.oracle_joint_mass(&s, 5).is_err());
    }

    pub(crate) fn random_world(rng: &mut impl Rng, n: usize, max_points: usize) -> DiscreteLabelWorld {
        let points = rng.random_range(1..=max_points);
        let labels = (0..points)
            .map(|_| {
                let mask = rng.random_range(0u32..(1 << n));
                (0..n).filter(|&k| mask & (1 << k) != 0).collect()
            })
            .collect();
        let masses = (0..points).map(|_| rng.random_range(0.0..1.0)).collect();
        match DiscreteLabelWorld::new(n, labels, masses) {
            Ok(w) => w,
            // zero total mass is astronomically unlikely; resample
            Err(_) => random_world(rng, n, max_points),
        }
    }

    #[test]
    fn theorem_property_randomized() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let n = rng.random_range(1..=4usize);
            let world = random_world(&mut rng, n, 64);
            let mut specs = enumerate_joint_classes(n).unwrap();
            for _ in 0..10 {
                let i_mask = rng.random_range(1u32..(1 << n));
                let j_mask = rng.random_range(0u32..(1 << n)) & !i_mask;
                let i: Vec<usize> = (0..n).filter(|&k| i_mask & (1 << k) != 0).collect();
                let j: Vec<usize> = (0..n).filter(|&k| j_mask & (1 << k) != 0).collect();
                specs.push(JointClassSpec::new(i, j, n).unwrap());
            }
            for s in &specs {
                for p in 0..world.point_count() {
                    let marginals = world.class_marginals(p).unwrap();
                    let direct = joint_density_value(&marginals, s);
                    let oracle = world.oracle_joint_mass(s, p).unwrap();
                    assert_eq!(direct, oracle, "spec {:?} point {}", s, p);
                }
            }
        }
    }

    #[test]
    fn canonical_text_roundtrip() {
        let names: Vec<String> = ["A", "B", "M", "N", "S", "W"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let s = spec(&[1, 2, 4], &[0, 3, 5], 6);
        assert_eq!(s.format(Some(&names)), "+B+M+S-A-N-W");
        assert_eq!(s.format(None), "+1+2+4-0-3-5");
        assert_eq!(
            JointClassSpec::parse("+B+M+S-A-N-W", 6, Some(&names)).unwrap(),
            s
        );
        assert_eq!(JointClassSpec::parse("+1+2+4-0-3-5", 6, None).unwrap(), s);
        assert!(JointClassSpec::parse("", 2, None).is_err());
        assert!(JointClassSpec::parse("0+1", 2, None).is_err());
        assert!(JointClassSpec::parse("-0", 2, None).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_intersection_and_difference(
            vals in proptest::collection::vec(0.0f64..1.0, 4),
            bump in 0.0f64..0.5,
        ) {
            let s = spec(&[0, 1], &[2], 4);
            let base = joint_density_value(&vals, &s);
            let mut up = vals.clone();
            up[0] += bump;
            prop_assert!(joint_density_value(&up, &s) >= base);
            let mut down = vals.clone();
            down[2] += bump;
            prop_assert!(joint_density_value(&down, &s) <= base);
        }

        #[test]
        fn singleton_identity(v in 0.0f64..10.0, other in 0.0f64..10.0) {
            let s = spec(&[0], &[], 2);
            prop_assert_eq!(joint_density_value(&[v, other], &s), v);
        }

        #[test]
        fn positive_homogeneity(
            vals in proptest::collection::vec(0.0f64..1.0, 3),
            scale in 0.01f64..100.0,
        ) {
            for s in enumerate_joint_classes(3).unwrap() {
                let base = joint_density_value(&vals, &s);
                let scaled: Vec<f64> = vals.iter().map(|v| v * scale).collect();
                let got = joint_density_value(&scaled, &s);
                prop_assert!((got - scale * base).abs() <= 1e-12 * (1.0 + got.abs()));
            }
        }
    }
}
