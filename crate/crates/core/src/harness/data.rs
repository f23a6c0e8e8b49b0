use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, FeatureMapSpec, InputX, Keypoints, MatchingMap, ModelParams, SyntheticMap};
use crate::inference::exact_decode;
use crate::learning::Sample;
use crate::rng::substream;
use crate::structures::{affine_matrix, LatentKind, Output, StructureSpace};

pub const SYNTHETIC_TAG: &str = "synthetic-bernoulli";
pub const MATCHING_TAG: &str = "synthetic-matching";
pub const MATCHING_DESC_DIM: usize = 8;

/// Labelled samples together with the generator that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub space: StructureSpace,
    pub map: FeatureMapSpec,
    /// Ground-truth parameter, kept for auditing.
    pub w_star: ModelParams,
    pub seed: u64,
    pub protocol_tag: String,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    x: InputX,
    y: String,
}

#[derive(Serialize, Deserialize)]
struct DatasetRecord {
    samples: Vec<SampleRecord>,
    space: StructureSpace,
    map: FeatureMapSpec,
    w_star: ModelParams,
    seed: u64,
    protocol_tag: String,
}

impl Serialize for Dataset {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatasetRecord {
            samples: self
                .samples
                .iter()
                .map(|smp| SampleRecord { x: smp.x.clone(), y: self.space.format_output(&smp.y) })
                .collect(),
            space: self.space.clone(),
            map: self.map,
            w_star: self.w_star.clone(),
            seed: self.seed,
            protocol_tag: self.protocol_tag.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Dataset {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rec = DatasetRecord::deserialize(d)?;
        let samples = rec
            .samples
            .into_iter()
            .map(|r| Ok(Sample::new(r.x, rec.space.parse_output(&r.y)?)))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let ds = Dataset {
            samples,
            space: rec.space,
            map: rec.map,
            w_star: rec.w_star,
            seed: rec.seed,
            protocol_tag: rec.protocol_tag,
        };
        ds.check_shapes().map_err(serde::de::Error::custom)?;
        Ok(ds)
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check_shapes(&self) -> Result<()> {
        if self.w_star.dim() != self.map.dim() {
            return Err(Error::DimensionMismatch { expected: self.map.dim(), got: self.w_star.dim() });
        }
        for s in &self.samples {
            self.map.check_input(&s.x, &self.space)?;
            self.space.validate_output(&s.y)?;
        }
        Ok(())
    }

    /// Indices of samples whose `y` is not the exact decoding under `w_star`.
    pub fn audit(&self) -> Result<Vec<usize>> {
        let decoded = self
            .samples
            .par_iter()
            .map(|s| exact_decode(&self.w_star, &s.x, &self.space, &self.map).map(|d| d.point.output))
            .collect::<Result<Vec<Output>>>()?;
        Ok(self
            .samples
            .iter()
            .zip(decoded)
            .enumerate()
            .filter(|(_, (s, y))| s.y != *y)
            .map(|(i, _)| i)
            .collect())
    }

    /// Splits into the first `k` samples and the rest.
    pub fn split(&self, k: usize) -> (Vec<Sample>, Vec<Sample>) {
        let k = k.min(self.samples.len());
        (self.samples[..k].to_vec(), self.samples[k..].to_vec())
    }
}

/// Gaussian `w*`, Bernoulli(1/2) inputs, labels from the exact decoding under `w*`.
pub fn generate_synthetic(space: &StructureSpace, n: usize, seed: u64) -> Result<Dataset> {
    space.product_size()?;
    let map = SyntheticMap::for_space(space);
    let mut rng = substream(seed, &[0]);
    let w_star = ModelParams::new((0..map.dim()).map(|_| rng.sample(StandardNormal)).collect());
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = map.sample_input(space, &mut substream(seed, &[1, i as u64]));
            let y = exact_decode(&w_star, &x, space, &map)?.point.output;
            Ok(Sample::new(x, y))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        space: space.clone(),
        map: FeatureMapSpec::Synthetic(map),
        w_star,
        seed,
        protocol_tag: SYNTHETIC_TAG.into(),
    })
}

/// Keypoint matching over permutations of `v` points with affine-grid latents.
///
/// The target cloud is the source cloud moved by a random grid cell, reordered
/// by a random permutation, plus Gaussian noise of scale `noise` on
/// coordinates and descriptors. `w_star` is `-1` on every coordinate.
pub fn generate_matching(v: usize, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be a nonnegative number, got {noise}")));
    }
    let space = StructureSpace::permutation(v)?.with_latent(LatentKind::AffineGrid)?;
    let samples: Vec<Sample> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[1, i as u64]);
            let mut normal = || rng.sample::<f64, _>(StandardNormal);
            let source: Vec<[f64; 2]> = (0..v).map(|_| [normal(), normal()]).collect();
            let source_desc: Vec<Vec<f64>> =
                (0..v).map(|_| (0..MATCHING_DESC_DIM).map(|_| normal()).collect()).collect();
            let point = space.sample_uniform(&mut rng)?;
            let Output::Perm(perm) = &point.output else { unreachable!() };
            let m = affine_matrix(point.latent);
            let mut target = vec![[0.0; 2]; v];
            let mut target_desc = vec![Vec::new(); v];
            for (i, &t) in perm.iter().enumerate() {
                let [cx, cy] = source[i];
                target[t as usize] = [
                    cx * m[0][0] + cy * m[1][0] + noise * rng.sample::<f64, _>(StandardNormal),
                    cx * m[0][1] + cy * m[1][1] + noise * rng.sample::<f64, _>(StandardNormal),
                ];
                target_desc[t as usize] =
                    source_desc[i].iter().map(|d| d + noise * rng.sample::<f64, _>(StandardNormal)).collect();
            }
            let x = InputX::from_keypoints(Keypoints { source, target, source_desc, target_desc });
            Ok(Sample::new(x, point.output))
        })
        .collect::<Result<_>>()?;
    let map = MatchingMap::new(MATCHING_DESC_DIM).fit_gamma(samples.iter().map(|s| &s.x), &space)?;
    Ok(Dataset {
        w_star: ModelParams::new(vec![-1.0; map.dim()]),
        samples,
        space,
        map: FeatureMapSpec::Matching(map),
        seed,
        protocol_tag: MATCHING_TAG.into(),
    })
}
