//! Exact decoding over `Y x H` and randomized decoding over a proposal set.

use crate::error::{Error, Result};
use crate::features::{check_model, FeatureMap, InputX, ModelParams};
use crate::sampling::ProposalSet;
use crate::structures::{StructureSpace, StructuredPoint};

/// A decoded `(y, h)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoding {
    pub point: StructuredPoint,
    pub score: f64,
    /// Number of candidates scored.
    pub search_size: u64,
}

/// Highest-scoring point of the product space, first in canonical order on ties.
pub(crate) fn exact_decode_raw(
    w: &[f64],
    x: &InputX,
    space: &StructureSpace,
    map: &dyn FeatureMap,
) -> Result<Decoding> {
    let outputs = space.outputs()?;
    let mut best: Option<(StructuredPoint, f64)> = None;
    let mut count = 0u64;
    for y in outputs {
        let mut point = StructuredPoint::new(y.clone(), crate::structures::Latent(0));
        for h in space.enumerate_latents() {
            point.latent = h;
            let s = map.score(w, x, space, &point);
            count += 1;
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((point.clone(), s));
            }
        }
    }
    let (point, score) = best.expect("spaces are never empty");
    Ok(Decoding { point, score, search_size: count })
}

/// `f_w(x) = argmax_{(y,h)} ⟨Φ(x,y,h), w⟩` by enumeration.
pub fn exact_decode(w: &ModelParams, x: &InputX, space: &StructureSpace, map: &dyn FeatureMap) -> Result<Decoding> {
    check_model(w, map)?;
    map.check_input(x, space)?;
    exact_decode_raw(w.values(), x, space, map)
}

pub(crate) fn random_decode_raw(
    w: &[f64],
    x: &InputX,
    space: &StructureSpace,
    points: &[StructuredPoint],
    map: &dyn FeatureMap,
) -> Result<Decoding> {
    let mut best: Option<(&StructuredPoint, f64)> = None;
    for p in points {
        let s = map.score(w, x, space, p);
        let better = match &best {
            None => true,
            Some((bp, bs)) => s > *bs || (s == *bs && p < *bp),
        };
        if better {
            best = Some((p, s));
        }
    }
    let (point, score) = best.ok_or(Error::EmptyProposalSet)?;
    Ok(Decoding { point: point.clone(), score, search_size: points.len() as u64 })
}

/// `f̃_w(x)`: the best member of a proposal set, first in canonical order on ties.
pub fn random_decode(
    w: &ModelParams,
    x: &InputX,
    space: &StructureSpace,
    proposals: &ProposalSet,
    map: &dyn FeatureMap,
) -> Result<Decoding> {
    check_model(w, map)?;
    map.check_input(x, space)?;
    for p in &proposals.points {
        space.validate_point(p)?;
    }
    random_decode_raw(w.values(), x, space, &proposals.points, map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{SyntheticMap, TableMap};
    use crate::rng::stream;
    use crate::structures::{Latent, LatentKind, Output};
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut crate::rng::Stream, n: usize) -> ModelParams {
        ModelParams::new((0..n).map(|_| rng.sample(StandardNormal)).collect())
    }

    /// Scores every pair through the dense feature vector and keeps the
    /// lexicographically smallest among the maximisers.
    fn brute_force(w: &ModelParams, x: &InputX, space: &StructureSpace, map: &dyn FeatureMap) -> (StructuredPoint, f64) {
        let mut all = Vec::new();
        for y in space.enumerate_outputs().unwrap() {
            for h in 0..space.latent_count() {
                let p = StructuredPoint::new(y.clone(), Latent(h));
                let phi = map.phi(x, space, &p).0;
                let s: f64 = phi.iter().zip(w.values()).map(|(a, b)| a * b).sum();
                all.push((p, s));
            }
        }
        let max = all.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
        all.into_iter().filter(|a| a.1 == max).min_by(|a, b| a.0.cmp(&b.0)).unwrap()
    }

    #[test]
    fn constant_scores_pick_first_point() {
        let s = StructureSpace::permutation(3).unwrap();
        let map = SyntheticMap::for_space(&s);
        let x = InputX::from_bits(vec![0; 81]);
        let d = exact_decode(&ModelParams::zeros(81), &x, &s, &map).unwrap();
        assert_eq!(d.point, StructuredPoint::new(Output::Perm(vec![0, 1, 2]), Latent(0)));
        assert_eq!(d.search_size, 6 * 81);
    }

    #[test]
    fn singleton_output_space_returns_best_latent() {
        let s = StructureSpace::card_set(2, 1).unwrap().with_latent(LatentKind::OneHotBit { dim: 3 }).unwrap();
        let table = TableMap::new(&s, 1, |p| vec![if p.output == Output::Subset(vec![0]) { p.latent.0 as f64 } else { -1.0 }]).unwrap();
        let d = exact_decode(&ModelParams::new(vec![1.0]), &InputX::from_bits(vec![]), &s, &table).unwrap();
        assert_eq!(d.point, StructuredPoint::new(Output::Subset(vec![0]), Latent(2)));
        assert_eq!(d.score, 2.0);
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut rng = stream(11);
        for space in [
            StructureSpace::permutation(3).unwrap(),
            StructureSpace::spanning_tree(3).unwrap(),
            StructureSpace::card_set(5, 2).unwrap(),
        ] {
            let map = SyntheticMap::for_space(&space);
            for _ in 0..30 {
                let x = map.sample_input(&space, &mut rng);
                let w = gaussian(&mut rng, map.dim());
                let d = exact_decode(&w, &x, &space, &map).unwrap();
                let (p, s) = brute_force(&w, &x, &space, &map);
                assert_eq!(d.point, p);
                assert!((d.score - s).abs() <= 1e-12 * s.abs().max(1.0));
            }
        }
    }

    #[test]
    fn exact_is_scale_invariant() {
        let s = StructureSpace::spanning_tree(4).unwrap();
        let map = SyntheticMap::for_space(&s);
        let mut rng = stream(5);
        for _ in 0..10 {
            let x = map.sample_input(&s, &mut rng);
            let w = gaussian(&mut rng, 144);
            let base = exact_decode(&w, &x, &s, &map).unwrap().point;
            for c in [1e-3, 2.5, 1e4] {
                assert_eq!(exact_decode(&w.scaled(c), &x, &s, &map).unwrap().point, base);
            }
        }
    }

    fn set_of(points: Vec<StructuredPoint>) -> ProposalSet {
        ProposalSet::from_points(points, 0)
    }

    #[test]
    fn random_decode_over_full_space_equals_exact() {
        let s = StructureSpace::permutation(3).unwrap();
        let map = SyntheticMap::for_space(&s);
        let mut rng = stream(9);
        let x = map.sample_input(&s, &mut rng);
        let w = gaussian(&mut rng, 81);
        let mut all: Vec<StructuredPoint> = s
            .enumerate_outputs()
            .unwrap()
            .into_iter()
            .flat_map(|y| s.enumerate_latents().map(move |h| StructuredPoint::new(y.clone(), h)))
            .collect();
        all.shuffle(&mut rng);
        let r = random_decode(&w, &x, &s, &set_of(all), &map).unwrap();
        assert_eq!(r.point, exact_decode(&w, &x, &s, &map).unwrap().point);

        let zero = ModelParams::zeros(81);
        let mut all = r.point.clone();
        all.latent = Latent(7);
        let pts = vec![all.clone(), StructuredPoint::new(Output::Perm(vec![0, 1, 2]), Latent(3))];
        assert_eq!(random_decode(&zero, &x, &s, &set_of(pts), &map).unwrap().point.output, Output::Perm(vec![0, 1, 2]));
    }

    #[test]
    fn random_decode_singleton_and_empty() {
        let s = StructureSpace::permutation(3).unwrap();
        let map = SyntheticMap::for_space(&s);
        let x = InputX::from_bits(vec![1; 81]);
        let w = ModelParams::new(vec![0.3; 81]);
        let p = StructuredPoint::new(Output::Perm(vec![2, 0, 1]), Latent(4));
        assert_eq!(random_decode(&w, &x, &s, &set_of(vec![p.clone()]), &map).unwrap().point, p);
        assert_eq!(random_decode(&w, &x, &s, &set_of(vec![]), &map), Err(Error::EmptyProposalSet));
    }

    #[test]
    fn random_decode_dominated_and_monotone() {
        let s = StructureSpace::spanning_tree(4).unwrap();
        let map = SyntheticMap::for_space(&s);
        let mut rng = stream(21);
        for _ in 0..1000 {
            let x = map.sample_input(&s, &mut rng);
            let w = gaussian(&mut rng, 144);
            let exact = exact_decode(&w, &x, &s, &map).unwrap().score;
            let k = rng.random_range(1..20);
            let mut pts: Vec<StructuredPoint> = (0..k).map(|_| s.sample_uniform(&mut rng).unwrap()).collect();
            let small = random_decode(&w, &x, &s, &set_of(pts.clone()), &map).unwrap().score;
            assert!(small <= exact);
            pts.extend((0..5).map(|_| s.sample_uniform(&mut rng).unwrap()));
            let large = random_decode(&w, &x, &s, &set_of(pts), &map).unwrap().score;
            assert!(large >= small && large <= exact);
        }
    }
}
