//! Greedy local proposal sampler, proposal-set sizes and proposal sets.

use crate::error::{Error, Result};
use crate::features::{check_model, FeatureMap, InputX, ModelParams};
use crate::rng::{substream, Stream};
use crate::structures::{StructureSpace, StructuredPoint};

/// The random set `T(w, x)` attached to one training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalSet {
    /// Draws in order; duplicates allowed.
    pub points: Vec<StructuredPoint>,
    pub seed: u64,
    pub n_prime: usize,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub w_l2: Option<f64>,
    pub n: Option<usize>,
}

impl ProposalSet {
    /// A set of given points without sampling provenance.
    pub fn from_points(points: Vec<StructuredPoint>, seed: u64) -> Self {
        let n_prime = points.len();
        Self { points, seed, n_prime, beta: None, gamma: None, w_l2: None, n: None }
    }

    pub fn with_size_inputs(mut self, beta: f64, gamma: f64, w_l2: f64, n: usize) -> Self {
        self.beta = Some(beta);
        self.gamma = Some(gamma);
        self.w_l2 = Some(w_l2);
        self.n = Some(n);
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn step_cap(space: &StructureSpace, nbhd: usize) -> usize {
    let size = match space.output_count() {
        Ok(c) => c as f64 * space.latent_count() as f64,
        Err(_) => f64::MAX,
    };
    (10.0 * nbhd.max(1) as f64 * size.log2().max(1.0)).ceil() as usize
}

/// Hill-climbs from `start`; returns the local maximum and the visited scores.
pub(crate) fn climb(
    w: &[f64],
    x: &InputX,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    start: StructuredPoint,
    trace: Option<&mut Vec<f64>>,
) -> Result<StructuredPoint> {
    let mut output_nbrs = space.output_neighbors(&start.output);
    let cap = step_cap(space, output_nbrs.len() + space.latent_neighbors(start.latent).len());
    let mut current = start;
    let mut current_score = map.score(w, x, space, &current);
    let mut trace = trace;
    if let Some(t) = trace.as_deref_mut() {
        t.push(current_score);
    }
    for _ in 0..=cap {
        // strict improvement, ties to the smallest point in canonical order
        let mut best: Option<(StructuredPoint, f64)> = None;
        let mut consider = |p: StructuredPoint, s: f64| {
            let better = match &best {
                None => s > current_score,
                Some((bp, bs)) => s > *bs || (s == *bs && p < *bp),
            };
            if better {
                best = Some((p, s));
            }
        };
        let mut probe = current.clone();
        for y in &output_nbrs {
            probe.output = y.clone();
            let s = map.score(w, x, space, &probe);
            consider(probe.clone(), s);
        }
        probe.output = current.output.clone();
        for h in space.latent_neighbors(current.latent) {
            probe.latent = h;
            let s = map.score(w, x, space, &probe);
            consider(probe.clone(), s);
        }
        match best {
            None => return Ok(current),
            Some((p, s)) => {
                if p.output != current.output {
                    output_nbrs = space.output_neighbors(&p.output);
                }
                current = p;
                current_score = s;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(s);
                }
            }
        }
    }
    Err(Error::StepCapExceeded { cap })
}

/// One draw from `R(w, x)`: a uniform start followed by best-improvement
/// local search, neighbours visited in canonical order.
pub fn greedy_local_sample(
    w: &ModelParams,
    x: &InputX,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    rng: &mut Stream,
) -> Result<StructuredPoint> {
    check_model(w, map)?;
    map.check_input(x, space)?;
    let start = space.sample_uniform(rng)?;
    climb(w.values(), x, space, map, start, None)
}

/// As [`greedy_local_sample`], also returning the score after every step.
pub fn greedy_local_sample_traced(
    w: &ModelParams,
    x: &InputX,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    rng: &mut Stream,
) -> Result<(StructuredPoint, Vec<f64>)> {
    check_model(w, map)?;
    map.check_input(x, space)?;
    let start = space.sample_uniform(rng)?;
    let mut trace = Vec::new();
    let p = climb(w.values(), x, space, map, start, Some(&mut trace))?;
    Ok((p, trace))
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidBeta(beta));
    }
    Ok(())
}

fn beta_term(beta: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        1.0 / (1.0 / beta).ln()
    }
}

/// `⌈(1/2)·max(1/ln(1/β), 128γ²‖w‖²)·ln n⌉`, at least 1.
pub fn proposal_set_size(beta: f64, gamma: f64, w_l2: f64, n: usize) -> Result<usize> {
    check_beta(beta)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("n must be at least 2, got {n}")));
    }
    let term = beta_term(beta).max(128.0 * gamma * gamma * w_l2 * w_l2);
    Ok(((0.5 * term * (n as f64).ln()).ceil() as usize).max(1))
}

/// `⌈(1/2)·ln n / ln(1/β)⌉`, at least 1: the set size with the norm term dropped.
pub fn beta_only_set_size(beta: f64, n: usize) -> Result<usize> {
    proposal_set_size(beta, 0.0, 0.0, n)
}

pub(crate) fn build_points(
    w: &[f64],
    x: &InputX,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    size: usize,
    seed: u64,
) -> Result<Vec<StructuredPoint>> {
    (0..size)
        .map(|i| {
            let mut rng = substream(seed, &[i as u64]);
            let start = space.sample_uniform(&mut rng)?;
            climb(w, x, space, map, start, None)
        })
        .collect()
}

/// `size` independent sampler draws, draw `i` using sub-stream `i` of `seed`.
pub fn build_proposal_set(
    w: &ModelParams,
    x: &InputX,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    size: usize,
    seed: u64,
) -> Result<ProposalSet> {
    if size == 0 {
        return Err(Error::EmptyProposalSet);
    }
    check_model(w, map)?;
    map.check_input(x, space)?;
    let points = build_points(w.values(), x, space, map, size, seed)?;
    let mut set = ProposalSet::from_points(points, seed);
    set.gamma = Some(map.gamma());
    set.w_l2 = Some(w.l2());
    set.beta = space.beta_constant().ok();
    Ok(set)
}
