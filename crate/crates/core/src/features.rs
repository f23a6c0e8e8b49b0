//! Feature maps `Φ(x, y, h)`, linear scores and the latent-maximised margin.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::structures::{affine_matrix, LatentKind, Output, StructureKind, StructureSpace, StructuredPoint, Latent};

/// Observed input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputX {
    /// Bits indexed by ordered candidate pairs `(i, j)` at `i*|E| + j`.
    #[serde(with = "bitstring", default)]
    pub bits: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Keypoints>,
}

impl InputX {
    pub fn from_bits(bits: Vec<u8>) -> Self {
        Self { bits, keypoints: None }
    }

    pub fn from_keypoints(keypoints: Keypoints) -> Self {
        Self { bits: Vec::new(), keypoints: Some(keypoints) }
    }
}

/// Two keypoint clouds with descriptors; `target[y_i]` is matched to `source[i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoints {
    pub source: Vec<[f64; 2]>,
    pub target: Vec<[f64; 2]>,
    pub source_desc: Vec<Vec<f64>>,
    pub target_desc: Vec<Vec<f64>>,
}

mod bitstring {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&bits.iter().map(|&b| if b != 0 { '1' } else { '0' }).collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(serde::de::Error::custom(format!("bad bit {other:?}"))),
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn l2(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Weight vector with cached norm bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    w: Vec<f64>,
    cached_l2: f64,
    nnz: usize,
}

#[derive(Deserialize)]
struct RawParams {
    w: Vec<f64>,
    cached_l2: Option<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;
    fn try_from(raw: RawParams) -> Result<Self> {
        let p = ModelParams::new(raw.w);
        if let Some(c) = raw.cached_l2 {
            if (c - p.cached_l2).abs() > 1e-12 * p.cached_l2.max(1e-300) {
                return Err(Error::InvalidArgument(format!("cached_l2 {c} does not match {}", p.cached_l2)));
            }
        }
        Ok(p)
    }
}

impl ModelParams {
    pub fn new(w: Vec<f64>) -> Self {
        let cached_l2 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nnz = w.iter().filter(|v| v.abs() > 0.0).count();
        Self { w, cached_l2, nnz }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn into_values(self) -> Vec<f64> {
        self.w
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn l2(&self) -> f64 {
        self.cached_l2
    }

    pub fn nnz(&self) -> usize {
        self.nnz
    }

    pub fn is_zero(&self) -> bool {
        self.nnz == 0
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.w.iter().map(|v| v * c).collect())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A deterministic map `(x, y, h) -> R^ℓ`.
pub trait FeatureMap: Send + Sync {
    /// Feature dimension ℓ.
    fn dim(&self) -> usize;

    /// Bound γ on `‖Φ(x, y, h)‖₂`.
    fn gamma(&self) -> f64;

    /// Checks that `x` and `space` fit this map.
    fn check_input(&self, x: &InputX, space: &StructureSpace) -> Result<()>;

    /// `Φ(x, y, h)`. Callers must have run [`FeatureMap::check_input`].
    fn phi(&self, x: &InputX, space: &StructureSpace, point: &StructuredPoint) -> FeatureVector;

    /// `⟨Φ(x, y, h), w⟩`.
    fn score(&self, w: &[f64], x: &InputX, space: &StructureSpace, point: &StructuredPoint) -> f64 {
        dot(&self.phi(x, space, point).0, w)
    }

    /// `out += coeff * Φ(x, y, h)`.
    fn add_phi(&self, x: &InputX, space: &StructureSpace, point: &StructuredPoint, coeff: f64, out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(self.phi(x, space, point).0) {
            *o += coeff * p;
        }
    }

    /// A random input of the shape this map expects.
    fn sample_input(&self, space: &StructureSpace, rng: &mut Stream) -> InputX;
}

/// The pair map: coordinate `(i, j)` is `(h_ij xor x_ij) and i ∈ y and j ∈ y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticMap {
    candidates: usize,
}

impl SyntheticMap {
    pub fn for_space(space: &StructureSpace) -> Self {
        Self { candidates: space.candidate_count() }
    }

    pub fn candidates(&self) -> usize {
        self.candidates
    }
}

impl FeatureMap for SyntheticMap {
    fn dim(&self) -> usize {
        self.candidates * self.candidates
    }

    fn gamma(&self) -> f64 {
        (self.dim() as f64).sqrt()
    }

    fn check_input(&self, x: &InputX, space: &StructureSpace) -> Result<()> {
        if space.candidate_count() != self.candidates {
            return Err(Error::DimensionMismatch { expected: self.candidates, got: space.candidate_count() });
        }
        if x.bits.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.bits.len() });
        }
        match space.latent_kind() {
            LatentKind::OneHotBit { dim } if dim == self.dim() => Ok(()),
            LatentKind::OneHotBit { dim } => Err(Error::DimensionMismatch { expected: self.dim(), got: dim }),
            LatentKind::AffineGrid => Err(Error::InvalidArgument("the synthetic map needs a one-hot latent".into())),
        }
    }

    fn phi(&self, x: &InputX, space: &StructureSpace, point: &StructuredPoint) -> FeatureVector {
        let e = self.candidates;
        let mut out = vec![0.0; e * e];
        let present = space.present(&point.output);
        for &i in present.iter() {
            for &j in present.iter() {
                let k = i as usize * e + j as usize;
                out[k] = ((x.bits[k] != 0) ^ (point.latent.0 == k)) as u8 as f64;
            }
        }
        FeatureVector(out)
    }

    fn score(&self, w: &[f64], x: &InputX, space: &StructureSpace, point: &StructuredPoint) -> f64 {
        let e = self.candidates;
        let present = space.present(&point.output);
        let mut s = 0.0;
        for &i in present.iter() {
            let row = i as usize * e;
            for &j in present.iter() {
                let k = row + j as usize;
                if (x.bits[k] != 0) ^ (point.latent.0 == k) {
                    s += w[k];
                }
            }
        }
        s
    }

    fn add_phi(&self, x: &InputX, space: &StructureSpace, point: &StructuredPoint, coeff: f64, out: &mut [f64]) {
        let e = self.candidates;
        let present = space.present(&point.output);
        for &i in present.iter() {
            for &j in present.iter() {
                let k = i as usize * e + j as usize;
                if (x.bits[k] != 0) ^ (point.latent.0 == k) {
                    out[k] += coeff;
                }
            }
        }
    }

    fn sample_input(&self, _space: &StructureSpace, rng: &mut Stream) -> InputX {
        InputX::from_bits((0..self.dim()).map(|_| rng.random_bool(0.5) as u8).collect())
    }
}

/// Keypoint matching map: `D` mean squared descriptor differences under `y`
/// plus the mean squared coordinate residual after applying the affine cell `h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchingMap {
    desc_dim: usize,
    gamma: f64,
}

fn centered(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = points.len().max(1) as f64;
    let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
    points.iter().map(|p| [p[0] - mx, p[1] - my]).collect()
}

impl MatchingMap {
    pub fn new(desc_dim: usize) -> Self {
        Self { desc_dim, gamma: 1.0 }
    }

    pub fn desc_dim(&self) -> usize {
        self.desc_dim
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Sets γ to the largest `‖Φ‖₂` over every `(y, h)` of every input.
    pub fn fit_gamma<'a>(mut self, inputs: impl IntoIterator<Item = &'a InputX>, space: &StructureSpace) -> Result<Self> {
        let outputs = space.outputs()?;
        let mut g: f64 = 0.0;
        for x in inputs {
            self.check_input(x, space)?;
            for y in outputs {
                for h in space.enumerate_latents() {
                    g = g.max(self.phi(x, space, &StructuredPoint::new(y.clone(), h)).l2());
                }
            }
        }
        self.gamma = g.max(f64::MIN_POSITIVE);
        Ok(self)
    }
}

impl FeatureMap for MatchingMap {
    fn dim(&self) -> usize {
        self.desc_dim + 1
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn check_input(&self, x: &InputX, space: &StructureSpace) -> Result<()> {
        if space.kind() != StructureKind::Permutation || space.latent_kind() != LatentKind::AffineGrid {
            return Err(Error::InvalidArgument("the matching map needs permutations with affine latents".into()));
        }
        let kp = x
            .keypoints
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("input has no keypoints".into()))?;
        let v = space.v();
        for len in [kp.source.len(), kp.target.len(), kp.source_desc.len(), kp.target_desc.len()] {
            if len != v {
                return Err(Error::DimensionMismatch { expected: v, got: len });
            }
        }
        for d in kp.source_desc.iter().chain(&kp.target_desc) {
            if d.len() != self.desc_dim {
                return Err(Error::DimensionMismatch { expected: self.desc_dim, got: d.len() });
            }
        }
        Ok(())
    }

    fn phi(&self, x: &InputX, _space: &StructureSpace, point: &StructuredPoint) -> FeatureVector {
        let kp = x.keypoints.as_ref().expect("checked input");
        let Output::Perm(perm) = &point.output else {
            panic!("matching map needs a permutation output");
        };
        let v = perm.len() as f64;
        let mut out = vec![0.0; self.desc_dim + 1];
        for (i, &t) in perm.iter().enumerate() {
            for (o, (a, b)) in out.iter_mut().zip(kp.source_desc[i].iter().zip(&kp.target_desc[t as usize])) {
                *o += (a - b) * (a - b) / v;
            }
        }
        let src = centered(&kp.source);
        let dst = centered(&kp.target);
        let m = affine_matrix(point.latent);
        let mut residual = 0.0;
        for (i, &t) in perm.iter().enumerate() {
            let [cx, cy] = src[i];
            // row vector times matrix
            let px = cx * m[0][0] + cy * m[1][0];
            let py = cx * m[0][1] + cy * m[1][1];
            let [tx, ty] = dst[t as usize];
            residual += (px - tx).powi(2) + (py - ty).powi(2);
        }
        out[self.desc_dim] = residual / v;
        FeatureVector(out)
    }

    fn sample_input(&self, space: &StructureSpace, rng: &mut Stream) -> InputX {
        let v = space.v();
        let mut pt = || [rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal)];
        let source: Vec<[f64; 2]> = (0..v).map(|_| pt()).collect();
        let target: Vec<[f64; 2]> = (0..v).map(|_| pt()).collect();
        let mut desc = || (0..self.desc_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>();
        let source_desc = (0..v).map(|_| desc()).collect();
        let target_desc = (0..v).map(|_| desc()).collect();
        InputX::from_keypoints(Keypoints { source, target, source_desc, target_desc })
    }
}

/// An explicit table of feature vectors over the whole product space.
///
/// Used to build hand-made mappings for the verification oracles.
#[derive(Clone, Debug)]
pub struct TableMap {
    dim: usize,
    gamma: f64,
    table: HashMap<StructuredPoint, Vec<f64>>,
}

impl TableMap {
    pub fn new(space: &StructureSpace, dim: usize, mut f: impl FnMut(&StructuredPoint) -> Vec<f64>) -> Result<Self> {
        let mut table = HashMap::new();
        let mut gamma: f64 = 0.0;
        for y in space.outputs()? {
            for h in space.enumerate_latents() {
                let p = StructuredPoint::new(y.clone(), h);
                let phi = f(&p);
                if phi.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: phi.len() });
                }
                gamma = gamma.max(phi.iter().map(|v| v * v).sum::<f64>().sqrt());
                table.insert(p, phi);
            }
        }
        Ok(Self { dim, gamma, table })
    }
}

impl FeatureMap for TableMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn check_input(&self, _x: &InputX, _space: &StructureSpace) -> Result<()> {
        Ok(())
    }

    fn phi(&self, _x: &InputX, _space: &StructureSpace, point: &StructuredPoint) -> FeatureVector {
        FeatureVector(self.table.get(point).cloned().unwrap_or_else(|| vec![0.0; self.dim]))
    }

    fn sample_input(&self, _space: &StructureSpace, _rng: &mut Stream) -> InputX {
        InputX::from_bits(Vec::new())
    }
}

/// Serializable choice of feature map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureMapSpec {
    Synthetic(SyntheticMap),
    Matching(MatchingMap),
}

impl FeatureMapSpec {
    fn inner(&self) -> &dyn FeatureMap {
        match self {
            FeatureMapSpec::Synthetic(m) => m,
            FeatureMapSpec::Matching(m) => m,
        }
    }
}

impl FeatureMap for FeatureMapSpec {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn gamma(&self) -> f64 {
        self.inner().gamma()
    }
    fn check_input(&self, x: &InputX, space: &StructureSpace) -> Result<()> {
        self.inner().check_input(x, space)
    }
    fn phi(&self, x: &InputX, space: &StructureSpace, point: &StructuredPoint) -> FeatureVector {
        self.inner().phi(x, space, point)
    }
    fn score(&self, w: &[f64], x: &InputX, space: &StructureSpace, point: &StructuredPoint) -> f64 {
        self.inner().score(w, x, space, point)
    }
    fn add_phi(&self, x: &InputX, space: &StructureSpace, point: &StructuredPoint, coeff: f64, out: &mut [f64]) {
        self.inner().add_phi(x, space, point, coeff, out)
    }
    fn sample_input(&self, space: &StructureSpace, rng: &mut Stream) -> InputX {
        self.inner().sample_input(space, rng)
    }
}

/// Synthetic pair features of `(y, h)`.
pub fn phi_synthetic(x: &InputX, point: &StructuredPoint, space: &StructureSpace) -> Result<FeatureVector> {
    let map = SyntheticMap::for_space(space);
    map.check_input(x, space)?;
    space.validate_point(point)?;
    Ok(map.phi(x, space, point))
}

/// Matching features of `(y, h)` with descriptor dimension `desc_dim`.
pub fn phi_matching(x: &InputX, point: &StructuredPoint, space: &StructureSpace, desc_dim: usize) -> Result<FeatureVector> {
    let map = MatchingMap::new(desc_dim);
    map.check_input(x, space)?;
    if !space.is_valid_output(&point.output) {
        return Err(Error::NonPermutationOutput);
    }
    space.validate_point(point)?;
    Ok(map.phi(x, space, point))
}

/// `⟨phi, w⟩`.
pub fn score(w: &ModelParams, phi: &FeatureVector) -> Result<f64> {
    if w.dim() != phi.0.len() {
        return Err(Error::DimensionMismatch { expected: w.dim(), got: phi.0.len() });
    }
    Ok(dot(w.values(), &phi.0))
}

pub(crate) fn check_model(w: &ModelParams, map: &dyn FeatureMap) -> Result<()> {
    if w.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: w.dim() });
    }
    Ok(())
}

/// Latent maximising the score of `y`, lowest index on ties.
pub(crate) fn best_latent_raw(
    w: &[f64],
    x: &InputX,
    y: &Output,
    space: &StructureSpace,
    map: &dyn FeatureMap,
) -> (Latent, f64) {
    let mut point = StructuredPoint::new(y.clone(), Latent(0));
    let mut best = (Latent(0), f64::NEG_INFINITY);
    for h in space.enumerate_latents() {
        point.latent = h;
        let s = map.score(w, x, space, &point);
        if s > best.1 {
            best = (h, s);
        }
    }
    best
}

/// `h* = argmax_h ⟨Φ(x, y, h), w⟩` with its score.
pub fn best_latent(
    w: &ModelParams,
    x: &InputX,
    y: &Output,
    space: &StructureSpace,
    map: &dyn FeatureMap,
) -> Result<(Latent, f64)> {
    check_model(w, map)?;
    map.check_input(x, space)?;
    space.validate_output(y)?;
    Ok(best_latent_raw(w.values(), x, y, space, map))
}

/// `m(x, y, y', h', w) = max_h ⟨Φ(x,y,h), w⟩ − ⟨Φ(x,y',h'), w⟩`.
pub fn margin(
    w: &ModelParams,
    x: &InputX,
    y: &Output,
    y_prime: &Output,
    h_prime: Latent,
    space: &StructureSpace,
    map: &dyn FeatureMap,
) -> Result<f64> {
    let (_, best) = best_latent(w, x, y, space, map)?;
    let other = StructuredPoint::new(y_prime.clone(), h_prime);
    space.validate_point(&other)?;
    Ok(best - map.score(w.values(), x, space, &other))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::structures::{AFFINE_IDENTITY, affine_cell};

    fn tree4() -> StructureSpace {
        StructureSpace::spanning_tree(4).unwrap()
    }

    #[test]
    fn synthetic_zero_when_pair_absent() {
        // a 3-element set over 9 elements never contains candidate 8 with 7
        let s = StructureSpace::card_set(9, 3).unwrap();
        let x = InputX::from_bits(vec![1; 81]);
        let p = StructuredPoint::new(Output::Subset(vec![0, 1, 2]), Latent(0));
        let phi = phi_synthetic(&x, &p, &s).unwrap();
        assert_eq!(phi.0[7 * 9 + 8], 0.0);
        assert_eq!(phi.0.iter().filter(|&&v| v != 0.0).count(), 8);
    }

    #[test]
    fn synthetic_single_hot_on_zero_input() {
        let s = tree4();
        let y = s.parse_output("0->1,1->2,2->3").unwrap();
        let present = s.present(&y);
        let (i0, j0) = (present[0] as usize, present[2] as usize);
        let x = InputX::from_bits(vec![0; 144]);
        let p = StructuredPoint::new(y, Latent(i0 * 12 + j0));
        let phi = phi_synthetic(&x, &p, &s).unwrap();
        assert_eq!(phi.0.iter().sum::<f64>(), 1.0);
        assert_eq!(phi.0[i0 * 12 + j0], 1.0);
    }

    #[test]
    fn synthetic_all_ones_full_output() {
        // every candidate of a 2-permutation: (0,0),(1,1) or (0,1),(1,0)
        let s = StructureSpace::card_set(2, 1).unwrap();
        let x = InputX::from_bits(vec![1; 4]);
        let p = StructuredPoint::new(Output::Subset(vec![1]), Latent(3));
        let phi = phi_synthetic(&x, &p, &s).unwrap();
        assert_eq!(phi.0, vec![0.0, 0.0, 0.0, 0.0]);
        let p = StructuredPoint::new(Output::Subset(vec![1]), Latent(0));
        assert_eq!(phi_synthetic(&x, &p, &s).unwrap().0, vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn synthetic_dimension_checks() {
        let s = tree4();
        let y = s.outputs().unwrap()[0].clone();
        let bad = InputX::from_bits(vec![0; 10]);
        assert!(matches!(
            phi_synthetic(&bad, &StructuredPoint::new(y, Latent(0)), &s),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn synthetic_fast_score_matches_dense() {
        let s = StructureSpace::dag(4, 2).unwrap();
        let map = SyntheticMap::for_space(&s);
        let mut rng = stream(1);
        let x = map.sample_input(&s, &mut rng);
        let w: Vec<f64> = (0..map.dim()).map(|_| rng.sample(StandardNormal)).collect();
        for y in s.outputs().unwrap() {
            for h in (0..144).step_by(7) {
                let p = StructuredPoint::new(y.clone(), Latent(h));
                let dense = dot(&map.phi(&x, &s, &p).0, &w);
                assert!((dense - map.score(&w, &x, &s, &p)).abs() < 1e-12);
            }
        }
    }

    fn matching_input(scale: f64) -> (StructureSpace, InputX) {
        let s = StructureSpace::permutation(4).unwrap().with_latent(LatentKind::AffineGrid).unwrap();
        let source = vec![[0.0, 1.0], [2.0, -1.0], [-1.5, 0.5], [0.5, 3.0]];
        let target = source.iter().map(|p| [p[0] * scale, p[1] * scale]).collect();
        let desc = vec![vec![0.5; 8]; 4];
        (s, InputX::from_keypoints(Keypoints { source, target, source_desc: desc.clone(), target_desc: desc }))
    }

    #[test]
    fn matching_identity_has_zero_residual() {
        let (s, x) = matching_input(1.0);
        let p = StructuredPoint::new(Output::Perm(vec![0, 1, 2, 3]), AFFINE_IDENTITY);
        let phi = phi_matching(&x, &p, &s, 8).unwrap();
        assert_eq!(phi.0.len(), 9);
        assert!(phi.0[8].abs() < 1e-24);
    }

    #[test]
    fn matching_scaled_cloud_recovered_by_affine_cell() {
        let (s, x) = matching_input(1.2);
        let h = affine_cell([[1.2, 0.0], [0.0, 1.2]]).unwrap();
        let p = StructuredPoint::new(Output::Perm(vec![0, 1, 2, 3]), h);
        assert!(phi_matching(&x, &p, &s, 8).unwrap().0[8].abs() < 1e-20);
        let off = StructuredPoint::new(Output::Perm(vec![0, 1, 2, 3]), AFFINE_IDENTITY);
        assert!(phi_matching(&x, &off, &s, 8).unwrap().0[8] > 0.01);
    }

    #[test]
    fn matching_identical_descriptors_zero_block() {
        let (s, x) = matching_input(1.0);
        for y in s.outputs().unwrap() {
            let phi = phi_matching(&x, &StructuredPoint::new(y.clone(), Latent(0)), &s, 8).unwrap();
            assert!(phi.0[..8].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn matching_rejects_bad_outputs() {
        let (s, x) = matching_input(1.0);
        let p = StructuredPoint::new(Output::Perm(vec![0, 0, 2, 3]), Latent(0));
        assert_eq!(phi_matching(&x, &p, &s, 8), Err(Error::NonPermutationOutput));
        let p = StructuredPoint::new(Output::Perm(vec![0, 1, 2, 3]), Latent(0));
        assert!(matches!(phi_matching(&x, &p, &s, 5), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn score_examples() {
        let mut e1 = vec![0.0; 5];
        e1[0] = 1.0;
        let w = ModelParams::new(e1);
        assert_eq!(score(&w, &FeatureVector(vec![3.5, 1.0, 2.0, 0.0, 9.0])).unwrap(), 3.5);
        assert_eq!(score(&w, &FeatureVector(vec![0.0; 5])).unwrap(), 0.0);
        assert!(score(&w, &FeatureVector(vec![0.0; 4])).is_err());
    }

    /// Error-free summation of products (TwoProduct via fma, TwoSum).
    fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
        let (mut s, mut c) = (0.0f64, 0.0f64);
        for (x, y) in a.iter().zip(b) {
            let p = x * y;
            let pe = x.mul_add(*y, -p);
            let t = s + p;
            let z = t - s;
            c += (s - (t - z)) + (p - z) + pe;
            s = t;
        }
        s + c
    }

    #[test]
    fn score_matches_compensated_reference() {
        let mut rng = stream(2024);
        let a: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let got = score(&ModelParams::new(a.clone()), &FeatureVector(b.clone())).unwrap();
        let want = compensated_dot(&a, &b);
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn best_latent_examples() {
        let s = tree4().with_latent(LatentKind::OneHotBit { dim: 1 }).unwrap();
        let table = TableMap::new(&s, 2, |p| vec![(p.output == s.outputs().unwrap()[0]) as u8 as f64; 2]).unwrap();
        let w = ModelParams::new(vec![1.0, 2.0]);
        let y = s.outputs().unwrap()[0].clone();
        assert_eq!(best_latent(&w, &InputX::from_bits(vec![]), &y, &s, &table).unwrap(), (Latent(0), 3.0));

        let s = tree4();
        let map = SyntheticMap::for_space(&s);
        let x = InputX::from_bits(vec![0; 144]);
        let zero = ModelParams::zeros(144);
        assert_eq!(best_latent(&zero, &x, &y, &s, &map).unwrap(), (Latent(0), 0.0));
    }

    #[test]
    fn best_latent_matches_exhaustive_scan() {
        let s = tree4();
        let map = SyntheticMap::for_space(&s);
        let mut rng = stream(77);
        for _ in 0..20 {
            let x = map.sample_input(&s, &mut rng);
            let w = ModelParams::new((0..144).map(|_| rng.sample(StandardNormal)).collect());
            let y = s.sample_output(&mut rng).unwrap();
            let scores: Vec<f64> = (0..144)
                .map(|h| dot(&map.phi(&x, &s, &StructuredPoint::new(y.clone(), Latent(h))).0, w.values()))
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let first = scores.iter().position(|&v| v == max).unwrap();
            let (h, v) = best_latent(&w, &x, &y, &s, &map).unwrap();
            assert_eq!(h, Latent(first));
            assert_eq!(v, max);
        }
    }

    #[test]
    fn margin_properties() {
        let s = tree4();
        let map = SyntheticMap::for_space(&s);
        let mut rng = stream(8);
        for _ in 0..20 {
            let x = map.sample_input(&s, &mut rng);
            let w = ModelParams::new((0..144).map(|_| rng.sample(StandardNormal)).collect());
            let y = s.sample_output(&mut rng).unwrap();
            let (h_star, best) = best_latent(&w, &x, &y, &s, &map).unwrap();
            assert_eq!(margin(&w, &x, &y, &y, h_star, &s, &map).unwrap(), 0.0);

            let other = s.sample_uniform(&mut rng).unwrap();
            let m = margin(&w, &x, &y, &other.output, other.latent, &s, &map).unwrap();
            let phi = map.phi(&x, &s, &other);
            assert_eq!(m, best - map.score(w.values(), &x, &s, &other));
            assert!((m - (best - score(&w, &phi).unwrap())).abs() < 1e-12);
            for c in [0.5, 3.0, 1e3] {
                let mc = margin(&w.scaled(c), &x, &y, &other.output, other.latent, &s, &map).unwrap();
                assert!((mc - c * m).abs() <= 1e-10 * (c * m).abs().max(1e-12));
            }
        }
    }

    #[test]
    fn gamma_bounds_every_feature_vector() {
        let s = StructureSpace::card_set(6, 3).unwrap();
        let map = SyntheticMap::for_space(&s);
        let mut rng = stream(3);
        let x = map.sample_input(&s, &mut rng);
        for y in s.outputs().unwrap() {
            for h in s.enumerate_latents() {
                assert!(map.phi(&x, &s, &StructuredPoint::new(y.clone(), h)).l2() <= map.gamma());
            }
        }
    }

    #[test]
    fn params_bookkeeping() {
        let p = ModelParams::new(vec![3.0, 0.0, -4.0]);
        assert_eq!(p.l2(), 5.0);
        assert_eq!(p.nnz(), 2);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ModelParams>(&text).unwrap(), p);
        assert!(serde_json::from_str::<ModelParams>(r#"{"w":[3.0,4.0],"cached_l2":6.0}"#).is_err());
    }

    #[test]
    fn input_bits_serialize_as_string() {
        let x = InputX::from_bits(vec![0, 1, 1, 0]);
        let text = serde_json::to_string(&x).unwrap();
        assert_eq!(text, r#"{"bits":"0110"}"#);
        assert_eq!(serde_json::from_str::<InputX>(&text).unwrap(), x);
    }
}
