//! Brute-force oracles for the proposal-distribution properties: maximal
//! distortion constants, derangements, change of measure, low norm and
//! ordering invariance of the greedy sampler.

use num::bigint::BigUint;
use num::rational::BigRational;
use num::{BigInt, One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{best_latent_raw, check_model, dot, FeatureMap, InputX, ModelParams, SyntheticMap, TableMap};
use crate::rng::{derive_seed, stream, substream};
use crate::sampling::climb;
use crate::structures::{DistortionKind, Latent, Output, StructureSpace, StructuredPoint};

fn factorial(v: u64) -> BigUint {
    (1..=v).fold(BigUint::one(), |a, k| a * k)
}

/// Number of permutations of `v` elements with no fixed point, by
/// `F(v) = (v−1)!·(1 + Σ_{i=1}^{v−2} F(i)/i!)`, `F(1) = 0`.
pub fn derangement_count(v: u64) -> BigUint {
    if v <= 1 {
        return BigUint::zero();
    }
    let mut f: Vec<BigUint> = vec![BigUint::zero(), BigUint::zero()];
    for k in 2..=v {
        let mut sum = BigRational::one();
        for i in 1..=k.saturating_sub(2) {
            sum += BigRational::new(BigInt::from(f[i as usize].clone()), BigInt::from(factorial(i)));
        }
        let value = sum * BigRational::from_integer(BigInt::from(factorial(k - 1)));
        assert!(value.is_integer());
        f.push(value.to_integer().to_biguint().expect("nonnegative"));
    }
    f.pop().expect("computed")
}

/// `F(v)/v!`: the uniform probability of distortion 1 between permutations.
pub fn derangement_fraction(v: u64) -> BigRational {
    BigRational::new(BigInt::from(derangement_count(v)), BigInt::from(factorial(v)))
}

/// Exact worst-case probability of maximal distortion under the uniform proposal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaCheck {
    pub space: String,
    /// `min_y #{y' : d(y, y') = 1}`.
    pub worst_count: u64,
    pub output_count: u64,
    pub worst_prob: f64,
    pub beta_num: u64,
    pub beta_den: u64,
    pub beta: f64,
    pub passes: bool,
}

/// Enumerates every `y` and counts outputs at distortion exactly 1; the
/// latent is uniform and independent, so it cancels.
pub fn verify_beta(space: &StructureSpace) -> Result<BetaCheck> {
    let (num, den) = space.beta_ratio()?;
    let outputs = space.outputs()?;
    let worst = outputs
        .par_iter()
        .map(|y| {
            outputs
                .iter()
                .filter(|y2| {
                    let (a, b) = space.distortion_ratio_unchecked(y, y2);
                    a == b && b > 0
                })
                .count() as u64
        })
        .min()
        .unwrap_or(0);
    let total = outputs.len() as u64;
    // worst/total ≥ 1 − num/den
    let passes = worst as u128 * den as u128 >= total as u128 * (den - num) as u128;
    Ok(BetaCheck {
        space: space.label(),
        worst_count: worst,
        output_count: total,
        worst_prob: worst as f64 / total as f64,
        beta_num: num,
        beta_den: den,
        beta: num as f64 / den as f64,
        passes,
    })
}

/// A probability mass function over a finite support.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<StructuredPoint>,
    mass: Vec<f64>,
}

impl DiscreteDistribution {
    /// Sorts by canonical order; rejects duplicates, negative mass and totals
    /// away from 1 by more than `1e-12`.
    pub fn new(support: Vec<StructuredPoint>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: mass.len() });
        }
        if mass.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidArgument("negative or NaN mass".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mass sums to {total}")));
        }
        let mut pairs: Vec<(StructuredPoint, f64)> = support.into_iter().zip(mass).collect();
        pairs.sort_by(|a, b| a.0.cmp(&b.0));
        if pairs.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::InvalidArgument("duplicate support point".into()));
        }
        let (support, mass) = pairs.into_iter().unzip();
        Ok(Self { support, mass })
    }

    /// Uniform over `Y x H`.
    pub fn uniform(space: &StructureSpace) -> Result<Self> {
        let support: Vec<StructuredPoint> = space
            .outputs()?
            .iter()
            .flat_map(|y| space.enumerate_latents().map(move |h| StructuredPoint::new(y.clone(), h)))
            .collect();
        let m = 1.0 / support.len() as f64;
        let mass = vec![m; support.len()];
        Ok(Self { support, mass })
    }

    pub fn point_mass(point: StructuredPoint) -> Self {
        Self { support: vec![point], mass: vec![1.0] }
    }

    pub fn support(&self) -> &[StructuredPoint] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StructuredPoint, f64)> {
        self.support.iter().zip(self.mass.iter().copied())
    }

    /// `P[d(y, y') = 1]`.
    pub fn max_distortion_prob(&self, space: &StructureSpace, y: &Output) -> f64 {
        self.iter()
            .filter(|(p, _)| {
                let (a, b) = space.distortion_ratio_unchecked(y, &p.output);
                a == b && b > 0
            })
            .map(|(_, m)| m)
            .sum()
    }
}

/// `(1/2)·Σ|p − q|` over a common support.
pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.support != q.support {
        return Err(Error::SupportMismatch);
    }
    Ok(0.5 * p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangeOfMeasure {
    /// `1 − min_y P_p[d = 1]`.
    pub beta1: f64,
    /// `TV(p, q)`.
    pub beta2: f64,
    /// `min_y P_q[d = 1]`.
    pub worst_q: f64,
    pub passes: bool,
}

/// Checks that `q` has maximal-distortion mass at least `1 − β₁ − β₂` for
/// every output, where `β₁` is exact for `p` and `β₂ = TV(p, q)`.
pub fn verify_change_of_measure(
    space: &StructureSpace,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<ChangeOfMeasure> {
    for pt in p.support() {
        space.validate_point(pt)?;
    }
    let beta2 = tv_distance(p, q)?;
    let outputs = space.outputs()?;
    let worst = |d: &DiscreteDistribution| {
        outputs
            .iter()
            .map(|y| d.max_distortion_prob(space, y))
            .fold(f64::INFINITY, f64::min)
    };
    let beta1 = 1.0 - worst(p);
    if beta1 + beta2 >= 1.0 {
        return Err(Error::PreconditionViolated(format!("β₁ + β₂ = {} is not below 1", beta1 + beta2)));
    }
    let worst_q = worst(q);
    Ok(ChangeOfMeasure { beta1, beta2, worst_q, passes: worst_q >= 1.0 - beta1 - beta2 - 1e-12 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowNorm {
    pub norm: f64,
    /// `1/(2√n)`.
    pub bound: f64,
    pub passes: bool,
}

/// `‖E_{(y',h')~R}[Φ(x,y,h*) − Φ(x,y',h')]‖₂ ≤ 1/(2√n)` by exact weighted
/// enumeration of the proposal, with `1e-12` slack for rounding.
pub fn verify_low_norm(
    w: &ModelParams,
    x: &InputX,
    y: &Output,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    proposal: &DiscreteDistribution,
    n: usize,
) -> Result<LowNorm> {
    check_model(w, map)?;
    map.check_input(x, space)?;
    space.validate_output(y)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let (h_star, _) = best_latent_raw(w.values(), x, y, space, map);
    let mut diff = map.phi(x, space, &StructuredPoint::new(y.clone(), h_star)).0;
    for (p, m) in proposal.iter() {
        space.validate_point(p)?;
        map.add_phi(x, space, p, -m, &mut diff);
    }
    let norm = dot(&diff, &diff).sqrt();
    let bound = 1.0 / (2.0 * (n as f64).sqrt());
    Ok(LowNorm { norm, bound, passes: norm <= bound + 1e-12 })
}

/// Permutations of 4 elements with one latent and 24 coordinates: the true
/// output maps to a base vector and every other output adds 1 to its own
/// coordinate, so each pair differs from the truth in a single coordinate by
/// at most `b = 1`.
pub fn sparse_mapping_instance() -> Result<(StructureSpace, TableMap, Output, ModelParams)> {
    let space = StructureSpace::permutation(4)?.with_latent(crate::structures::LatentKind::OneHotBit { dim: 1 })?;
    let outputs = space.enumerate_outputs()?;
    let truth = outputs[0].clone();
    let map = TableMap::new(&space, 24, |p| {
        let mut phi = vec![0.5; 24];
        if p.output != truth {
            let k = outputs.binary_search(&p.output).expect("enumerated");
            phi[k] += 1.0;
        }
        phi
    })?;
    let w = ModelParams::new((0..24).map(|k| (k as f64 - 11.5) / 10.0).collect());
    Ok((space, map, truth, w))
}

/// Permutations of 3 elements with two latents and 16 coordinates: the best
/// pair of the true output maps to 0 and every other pair to `(1/16)·1`, so
/// every coordinate difference is at most `b/16` with `b = 1`.
pub fn dense_mapping_instance() -> Result<(StructureSpace, TableMap, Output, ModelParams)> {
    let space = StructureSpace::permutation(3)?.with_latent(crate::structures::LatentKind::OneHotBit { dim: 2 })?;
    let truth = space.outputs()?[0].clone();
    let best = StructuredPoint::new(truth.clone(), Latent(0));
    let map = TableMap::new(&space, 16, |p| if *p == best { vec![0.0; 16] } else { vec![1.0 / 16.0; 16] })?;
    let w = ModelParams::new(vec![-1.0; 16]);
    Ok((space, map, truth, w))
}

/// Permutations of 3 elements with one latent: uniform `p`, and `q` with
/// `shift` mass moved from a maximal-distortion output onto the truth.
pub fn change_of_measure_instance(shift: f64) -> Result<(StructureSpace, DiscreteDistribution, DiscreteDistribution)> {
    let space = StructureSpace::permutation(3)?.with_latent(crate::structures::LatentKind::OneHotBit { dim: 1 })?;
    let p = DiscreteDistribution::uniform(&space)?;
    let truth = space.outputs()?[0].clone();
    let far = space
        .outputs()?
        .iter()
        .find(|y| space.distortion_of(&truth, y) == 1.0)
        .expect("a derangement exists")
        .clone();
    let mut mass = p.mass().to_vec();
    for (k, pt) in p.support().iter().enumerate() {
        if pt.output == far {
            mass[k] -= shift;
        } else if pt.output == truth {
            mass[k] += shift;
        }
    }
    let q = DiscreteDistribution::new(p.support().to_vec(), mass)?;
    Ok((space, p, q))
}

/// Runs `trials` random `(w, x, stream)` tuples and checks that the greedy
/// sampler returns the same point under `c·w` for every scale `c`.
pub fn verify_ordering_invariance_with_scales(
    space: &StructureSpace,
    map: &dyn FeatureMap,
    trials: usize,
    seed: u64,
    scales: &[f64],
) -> Result<bool> {
    if scales.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidArgument("scales must be positive".into()));
    }
    let results: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, &[t as u64]);
            let w: Vec<f64> = (0..map.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let x = map.sample_input(space, &mut rng);
            map.check_input(&x, space)?;
            let stream_seed = derive_seed(seed, &[t as u64, 1]);
            let draw = |w: &[f64]| -> Result<StructuredPoint> {
                let start = space.sample_uniform(&mut stream(stream_seed))?;
                climb(w, &x, space, map, start, None)
            };
            let base = draw(&w)?;
            for &c in scales {
                let scaled: Vec<f64> = w.iter().map(|v| c * v).collect();
                if draw(&scaled)? != base {
                    return Ok(false);
                }
            }
            Ok(true)
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().all(|b| b))
}

/// [`verify_ordering_invariance_with_scales`] with a random scale per trial
/// drawn log-uniformly from `[1e-6, 1e3]`, plus `c = 1`.
pub fn verify_ordering_invariance(space: &StructureSpace, map: &dyn FeatureMap, trials: usize, seed: u64) -> Result<bool> {
    let mut ok = true;
    for t in 0..trials {
        let mut rng = substream(seed, &[u64::MAX, t as u64]);
        let c = 10f64.powf(rng.random_range(-6.0..3.0));
        ok &= verify_ordering_invariance_with_scales(space, map, 1, derive_seed(seed, &[t as u64]), &[1.0, c])?;
    }
    Ok(ok)
}

/// One row of the verification manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClaimResult {
    pub claim: String,
    pub instance: String,
    pub passes: bool,
    pub detail: serde_json::Value,
}

fn row(claim: &str, instance: String, passes: bool, detail: impl Serialize) -> ClaimResult {
    ClaimResult {
        claim: claim.into(),
        instance,
        passes,
        detail: serde_json::to_value(detail).unwrap_or(serde_json::Value::Null),
    }
}

/// The standard β spaces: trees `v ∈ {3,4,5}`, DAGs `(4,2)`, sets `(9,3)`,
/// permutations `v ∈ {2..6}`.
pub fn beta_spaces() -> Result<Vec<StructureSpace>> {
    let mut spaces = Vec::new();
    for v in 3..=5 {
        spaces.push(StructureSpace::spanning_tree(v)?);
    }
    spaces.push(StructureSpace::dag(4, 2)?);
    spaces.push(StructureSpace::card_set(9, 3)?);
    for v in 2..=6 {
        spaces.push(StructureSpace::permutation(v)?);
    }
    Ok(spaces)
}

pub fn verify_beta_all() -> Result<Vec<ClaimResult>> {
    let mut rows = Vec::new();
    for s in beta_spaces()? {
        let r = verify_beta(&s)?;
        rows.push(row("maximal_distortion", s.label(), r.passes, &r));
    }
    let binary = StructureSpace::card_set(4, 2)?.with_distortion(DistortionKind::Binary);
    let r = verify_beta(&binary)?;
    rows.push(row("maximal_distortion", format!("{} binary", binary.label()), r.passes, &r));
    Ok(rows)
}

/// Brute-force count of fixed-point-free permutations.
pub fn brute_force_derangements(v: usize) -> u64 {
    use itertools::Itertools;
    (0..v).permutations(v).filter(|p| p.iter().enumerate().all(|(i, &t)| i != t)).count() as u64
}

pub fn verify_derangements() -> Vec<ClaimResult> {
    let mut rows = Vec::new();
    for v in 1..=8u64 {
        let f = derangement_count(v);
        let brute = brute_force_derangements(v as usize);
        rows.push(row(
            "derangements",
            format!("v={v}"),
            f.to_u64() == Some(brute),
            serde_json::json!({ "recursion": f.to_string(), "brute_force": brute }),
        ));
    }
    let third = BigRational::new(BigInt::one(), BigInt::from(3));
    let fractions: Vec<BigRational> = (2..=10).map(derangement_fraction).collect();
    let all_above = fractions.iter().all(|f| *f >= third);
    let only_at_three = (2..=10u64).zip(&fractions).all(|(v, f)| (*f == third) == (v == 3));
    rows.push(row(
        "permutations",
        "F(v)/v!, v=2..10".into(),
        all_above && only_at_three,
        fractions.iter().map(|f| f.to_string()).collect::<Vec<_>>(),
    ));
    rows
}

pub fn verify_change_of_measure_all() -> Result<Vec<ClaimResult>> {
    let mut rows = Vec::new();
    let (space, p, q) = change_of_measure_instance(0.0)?;
    let r = verify_change_of_measure(&space, &p, &q)?;
    rows.push(row("change_of_measure", "perm(v=3), q = p".into(), r.passes && r.beta2 == 0.0, &r));
    let (space, p, q) = change_of_measure_instance(0.05)?;
    let r = verify_change_of_measure(&space, &p, &q)?;
    rows.push(row("change_of_measure", "perm(v=3), 0.05 moved off d=1".into(), r.passes, &r));
    let truth = StructuredPoint::new(space.outputs()?[0].clone(), Latent(0));
    let mass: Vec<f64> = p.support().iter().map(|pt| if *pt == truth { 1.0 } else { 0.0 }).collect();
    let all_on_truth = DiscreteDistribution::new(p.support().to_vec(), mass)?;
    let guarded = matches!(verify_change_of_measure(&space, &p, &all_on_truth), Err(Error::PreconditionViolated(_)));
    rows.push(row("change_of_measure", "perm(v=3), q on d<1 only".into(), guarded, "precondition guard"));
    Ok(rows)
}

pub fn verify_low_norm_all() -> Result<Vec<ClaimResult>> {
    let mut rows = Vec::new();
    let x = InputX::from_bits(vec![]);
    let (space, map, truth, w) = sparse_mapping_instance()?;
    let uniform = DiscreteDistribution::uniform(&space)?;
    for n in [1, 6, 7] {
        let r = verify_low_norm(&w, &x, &truth, &space, &map, &uniform, n)?;
        // |P|/(4b²) = 6
        let expected = n <= 6;
        rows.push(row("sparse_mapping", format!("perm(v=4), uniform, n={n}"), r.passes == expected, &r));
    }
    let (space, map, truth, w) = dense_mapping_instance()?;
    let far = DiscreteDistribution::point_mass(StructuredPoint::new(space.outputs()?[1].clone(), Latent(1)));
    let uniform = DiscreteDistribution::uniform(&space)?;
    let star = DiscreteDistribution::point_mass(StructuredPoint::new(truth.clone(), Latent(0)));
    for (label, prop, n, expected) in [
        ("uniform", &uniform, 4, true),
        ("point mass at the truth", &star, 4, true),
        ("adversarial point mass", &far, 4, true),
        ("adversarial point mass", &far, 5, false),
    ] {
        let r = verify_low_norm(&w, &x, &truth, &space, &map, prop, n)?;
        rows.push(row("dense_mapping", format!("perm(v=3), {label}, n={n}"), r.passes == expected, &r));
    }
    Ok(rows)
}

pub fn verify_ordering_all(trials: usize, seed: u64) -> Result<Vec<ClaimResult>> {
    let scales = [1e-6, 1.0, 7.3, 1e3];
    let mut rows = Vec::new();
    for space in [
        StructureSpace::spanning_tree(4)?,
        StructureSpace::dag(4, 2)?,
        StructureSpace::card_set(9, 3)?,
        StructureSpace::permutation(4)?,
    ] {
        let map = SyntheticMap::for_space(&space);
        let ok = verify_ordering_invariance_with_scales(&space, &map, trials, seed, &scales)?;
        rows.push(row("ordering_invariance", space.label(), ok, serde_json::json!({ "trials": trials, "scales": scales })));
    }
    Ok(rows)
}

/// Pass/fail manifest over every oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationManifest {
    pub results: Vec<ClaimResult>,
    pub all_pass: bool,
}

impl VerificationManifest {
    pub fn new(results: Vec<ClaimResult>) -> Self {
        let all_pass = results.iter().all(|r| r.passes);
        Self { results, all_pass }
    }
}

pub fn verify_all(seed: u64) -> Result<VerificationManifest> {
    let mut results = verify_beta_all()?;
    results.extend(verify_derangements());
    results.extend(verify_change_of_measure_all()?);
    results.extend(verify_low_norm_all()?);
    results.extend(verify_ordering_all(100, seed)?);
    Ok(VerificationManifest::new(results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::LatentKind;

    #[test]
    fn derangements_match_brute_force() {
        let known = [0u64, 1, 2, 9, 44, 265, 1854, 14833];
        for v in 1..=8 {
            assert_eq!(derangement_count(v as u64).to_u64(), Some(known[v - 1]));
            assert_eq!(brute_force_derangements(v), known[v - 1]);
        }
        assert_eq!(derangement_count(0), BigUint::zero());
    }

    #[test]
    fn derangement_fraction_minimum_is_one_third_at_three() {
        let third = BigRational::new(BigInt::one(), BigInt::from(3));
        for v in 2..=10 {
            let f = derangement_fraction(v);
            assert!(f >= third);
            assert_eq!(f == third, v == 3);
        }
    }

    #[test]
    fn beta_examples() {
        let r = verify_beta(&StructureSpace::permutation(3).unwrap()).unwrap();
        assert_eq!((r.worst_count, r.output_count), (2, 6));
        assert!(r.passes);
        // only disjoint sets reach d = 1: C(6,3)/C(9,3)
        let r = verify_beta(&StructureSpace::card_set(9, 3).unwrap()).unwrap();
        assert_eq!((r.worst_count, r.output_count), (20, 84));
        assert!(!r.passes);
        let r = verify_beta(&StructureSpace::card_set(16, 3).unwrap()).unwrap();
        assert!(r.passes);
        let r = verify_beta(&StructureSpace::spanning_tree(4).unwrap()).unwrap();
        assert_eq!((r.worst_count, r.output_count), (27, 64));
        assert!(r.passes);
        // 4/9 < 1 - (v-2)/(v-1) = 1/2
        let r = verify_beta(&StructureSpace::spanning_tree(3).unwrap()).unwrap();
        assert_eq!((r.worst_count, r.output_count), (4, 9));
        assert!(!r.passes);
        let r = verify_beta(&StructureSpace::spanning_tree(5).unwrap()).unwrap();
        assert_eq!((r.worst_count, r.output_count), (256, 625));
        assert!(r.passes);
        let r = verify_beta(&StructureSpace::card_set(4, 2).unwrap().with_distortion(DistortionKind::Binary)).unwrap();
        assert_eq!((r.worst_count, r.output_count), (5, 6));
        assert!(r.passes);
    }

    #[test]
    fn beta_on_dags_is_reported_not_forced() {
        let r = verify_beta(&StructureSpace::dag(4, 2).unwrap()).unwrap();
        assert_eq!((r.worst_count, r.output_count), (3, 60));
        assert!(!r.passes);
    }

    fn on_four() -> Vec<StructuredPoint> {
        (0..4).map(|h| StructuredPoint::new(Output::Perm(vec![0]), Latent(h))).collect()
    }

    #[test]
    fn tv_examples() {
        let u = DiscreteDistribution::new(on_four(), vec![0.25; 4]).unwrap();
        let q = DiscreteDistribution::new(on_four(), vec![0.4, 0.3, 0.2, 0.1]).unwrap();
        assert!((tv_distance(&u, &q).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(tv_distance(&u, &u).unwrap(), 0.0);
        let a = DiscreteDistribution::new(on_four(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = DiscreteDistribution::new(on_four(), vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(tv_distance(&a, &b).unwrap(), 1.0);
        let other = DiscreteDistribution::point_mass(StructuredPoint::new(Output::Perm(vec![0]), Latent(0)));
        assert_eq!(tv_distance(&a, &other), Err(Error::SupportMismatch));
        assert!(DiscreteDistribution::new(on_four(), vec![0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(DiscreteDistribution::new(on_four(), vec![0.3; 4]).is_err());
    }

    #[test]
    fn tv_is_a_metric() {
        let mut rng = stream(3);
        let mut draw = || {
            let raw: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let t: f64 = raw.iter().sum();
            let mut m: Vec<f64> = raw.iter().map(|v| v / t).collect();
            let fix = 1.0 - m.iter().sum::<f64>();
            m[0] += fix;
            DiscreteDistribution::new(on_four(), m).unwrap()
        };
        for _ in 0..200 {
            let (p, q, r) = (draw(), draw(), draw());
            assert_eq!(tv_distance(&p, &q).unwrap(), tv_distance(&q, &p).unwrap());
            assert!(tv_distance(&p, &r).unwrap() <= tv_distance(&p, &q).unwrap() + tv_distance(&q, &r).unwrap() + 1e-15);
        }
    }

    #[test]
    fn change_of_measure_cases() {
        let (s, p, q) = change_of_measure_instance(0.0).unwrap();
        let r = verify_change_of_measure(&s, &p, &q).unwrap();
        assert!(r.passes);
        assert!((r.beta1 - 2.0 / 3.0).abs() < 1e-12);
        let (s, p, q) = change_of_measure_instance(0.05).unwrap();
        let r = verify_change_of_measure(&s, &p, &q).unwrap();
        assert!((r.beta2 - 0.05).abs() < 1e-12);
        assert!(r.passes);
        assert!(verify_change_of_measure_all().unwrap().iter().all(|r| r.passes));
    }

    #[test]
    fn low_norm_instances() {
        let x = InputX::from_bits(vec![]);
        let (s, map, truth, w) = sparse_mapping_instance().unwrap();
        let u = DiscreteDistribution::uniform(&s).unwrap();
        let r = verify_low_norm(&w, &x, &truth, &s, &map, &u, 6).unwrap();
        assert!((r.norm - 23f64.sqrt() / 24.0).abs() < 1e-12);
        assert!(r.passes);
        assert!(!verify_low_norm(&w, &x, &truth, &s, &map, &u, 7).unwrap().passes);

        let (s, map, truth, w) = dense_mapping_instance().unwrap();
        let star = DiscreteDistribution::point_mass(StructuredPoint::new(truth.clone(), Latent(0)));
        assert_eq!(verify_low_norm(&w, &x, &truth, &s, &map, &star, 100).unwrap().norm, 0.0);
        let far = DiscreteDistribution::point_mass(StructuredPoint::new(s.outputs().unwrap()[3].clone(), Latent(1)));
        let r = verify_low_norm(&w, &x, &truth, &s, &map, &far, 4).unwrap();
        assert_eq!(r.norm, 0.25);
        assert!(r.passes);
        assert!(!verify_low_norm(&w, &x, &truth, &s, &map, &far, 5).unwrap().passes);
        assert!(verify_low_norm_all().unwrap().iter().all(|r| r.passes));
    }

    #[test]
    fn ordering_invariance_small() {
        let s = StructureSpace::permutation(4).unwrap();
        let map = SyntheticMap::for_space(&s);
        assert!(verify_ordering_invariance_with_scales(&s, &map, 30, 1, &[1.0]).unwrap());
        assert!(verify_ordering_invariance_with_scales(&s, &map, 30, 2, &[7.3, 1e-6]).unwrap());
        assert!(verify_ordering_invariance(&s, &map, 20, 3).unwrap());
        assert!(verify_ordering_invariance_with_scales(&s, &map, 1, 2, &[0.0]).is_err());
        let s = StructureSpace::permutation(3).unwrap().with_latent(LatentKind::AffineGrid).unwrap();
        let map = crate::features::MatchingMap::new(8);
        assert!(verify_ordering_invariance_with_scales(&s, &map, 20, 4, &[1e-6, 7.3, 1e3]).unwrap());
    }
}
