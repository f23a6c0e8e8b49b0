//! Gaussian-perturbation (PAC-Bayes) diagnostics: posterior scale, Gibbs
//! distortion estimates and the two generalization bounds. Logarithms are
//! natural.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{best_latent_raw, check_model, FeatureMap, ModelParams};
use crate::inference::exact_decode_raw;
use crate::learning::Sample;
use crate::rng::substream;
use crate::sampling::ProposalSet;
use crate::structures::{Latent, StructureSpace, StructuredPoint};

/// `α = γ·√(8·ln(rn/‖w‖²))`.
pub fn alpha_scale(gamma: f64, r: u128, n: usize, w_l2: f64) -> Result<f64> {
    let ratio = log_ratio(r, n, w_l2)?;
    Ok(gamma * (8.0 * ratio).sqrt())
}

fn log_ratio(r: u128, n: usize, w_l2: f64) -> Result<f64> {
    let sq = w_l2 * w_l2;
    let rn = r as f64 * n as f64;
    if !(sq > 0.0) || rn <= sq {
        return Err(Error::InvalidScale(format!("need 0 < ‖w‖² < rn, got ‖w‖²={sq}, rn={rn}")));
    }
    Ok((rn / sq).ln())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidScale(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

fn perturbed(w: &ModelParams, alpha: f64, seed: u64, draw: usize) -> Vec<f64> {
    let mut rng = substream(seed, &[draw as u64]);
    w.values().iter().map(|v| alpha * v + rng.sample::<f64, _>(StandardNormal)).collect()
}

fn check_samples(w: &ModelParams, data: &[Sample], space: &StructureSpace, map: &dyn FeatureMap) -> Result<()> {
    check_model(w, map)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    for s in data {
        map.check_input(&s.x, space)?;
        space.validate_output(&s.y)?;
    }
    space.outputs()?;
    Ok(())
}

/// Monte-Carlo estimate of the empirical Gibbs distortion under
/// `w' = αw + N(0, I)`: `(mean, standard error)` over draws.
pub fn gibbs_estimate(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    map: &dyn FeatureMap,
    alpha: f64,
    num_draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_samples(w, data, space, map)?;
    if num_draws == 0 {
        return Err(Error::InvalidArgument("num_draws must be at least 1".into()));
    }
    let per_draw: Vec<f64> = (0..num_draws)
        .into_par_iter()
        .map(|k| {
            let wp = perturbed(w, alpha, seed, k);
            let mut total = 0.0;
            for s in data {
                let d = exact_decode_raw(&wp, &s.x, space, map)?;
                total += space.distortion_of(&s.y, &d.point.output);
            }
            Ok(total / data.len() as f64)
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&per_draw))
}

/// `max d(y,ŷ,ĥ)·1[m(x,y,ŷ,ĥ,w) ≤ 1]` over the given candidates, or over all
/// of `Y x H` when `points` is `None`.
fn slack01_max(w: &[f64], sample: &Sample, space: &StructureSpace, map: &dyn FeatureMap, points: Option<&[StructuredPoint]>) -> Result<f64> {
    let (_, s_star) = best_latent_raw(w, &sample.x, &sample.y, space, map);
    let mut best: f64 = 0.0;
    match points {
        Some(points) => {
            if points.is_empty() {
                return Err(Error::EmptyProposalSet);
            }
            for p in points {
                let d = space.distortion_of(&sample.y, &p.output);
                if d > best && s_star - map.score(w, &sample.x, space, p) <= 1.0 {
                    best = d;
                }
            }
        }
        None => {
            for y_hat in space.outputs()? {
                let d = space.distortion_of(&sample.y, y_hat);
                if d <= best {
                    continue;
                }
                let mut p = StructuredPoint::new(y_hat.clone(), Latent(0));
                for h in space.enumerate_latents() {
                    p.latent = h;
                    if s_star - map.score(w, &sample.x, space, &p) <= 1.0 {
                        best = d;
                        break;
                    }
                }
            }
        }
    }
    Ok(best)
}

/// The sample average of [`slack01_max`] over all of `Y x H`.
pub fn empirical_all(w: &ModelParams, data: &[Sample], space: &StructureSpace, map: &dyn FeatureMap) -> Result<f64> {
    check_samples(w, data, space, map)?;
    let terms: Vec<f64> = data
        .par_iter()
        .map(|s| slack01_max(w.values(), s, space, map, None))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / data.len() as f64)
}

/// The sample average of [`slack01_max`] over each sample's proposal set.
pub fn empirical_random(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    sets: &[ProposalSet],
    map: &dyn FeatureMap,
) -> Result<f64> {
    check_samples(w, data, space, map)?;
    if sets.len() != data.len() {
        return Err(Error::DimensionMismatch { expected: data.len(), got: sets.len() });
    }
    let terms: Vec<f64> = data
        .par_iter()
        .zip(sets)
        .map(|(s, t)| slack01_max(w.values(), s, space, map, Some(&t.points)))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum::<f64>() / data.len() as f64)
}

/// `√((4‖w‖²γ²·ln(rn/‖w‖²) + ln(2n/δ)) / (2(n−1)))`.
pub fn theorem1_tail(gamma: f64, r: u128, n: usize, w_l2: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if n < 2 {
        return Err(Error::InvalidScale(format!("n must be at least 2, got {n}")));
    }
    let lr = log_ratio(r, n, w_l2)?;
    let nf = n as f64;
    Ok(((4.0 * w_l2 * w_l2 * gamma * gamma * lr + (2.0 * nf / delta).ln()) / (2.0 * (nf - 1.0))).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Terms {
    pub empirical: f64,
    pub norm: f64,
    pub tail: f64,
}

impl Theorem1Terms {
    pub fn total(&self) -> f64 {
        self.empirical + self.norm + self.tail
    }
}

pub fn theorem1_terms(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    map: &dyn FeatureMap,
    gamma: f64,
    r: u128,
    n: usize,
    delta: f64,
) -> Result<Theorem1Terms> {
    let tail = theorem1_tail(gamma, r, n, w.l2(), delta)?;
    let empirical = empirical_all(w, data, space, map)?;
    Ok(Theorem1Terms { empirical, norm: w.l2().powi(2) / n as f64, tail })
}

/// Right-hand side of the bound for the maximum loss over all of `Y x H`.
pub fn theorem1_rhs(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    map: &dyn FeatureMap,
    gamma: f64,
    r: u128,
    n: usize,
    delta: f64,
) -> Result<f64> {
    Ok(theorem1_terms(w, data, space, map, gamma, r, n, delta)?.total())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Terms {
    pub empirical: f64,
    pub norm: f64,
    pub tail: f64,
    pub sample: f64,
    pub sparsity: f64,
    pub proposal: f64,
    /// Whether `3 ≤ 2s+1 ≤ (9/20)·√(ℓ(r+1)+1)`.
    pub in_range: bool,
}

impl Theorem2Terms {
    pub fn total(&self) -> f64 {
        self.empirical + self.norm + self.tail + self.sample + self.sparsity + self.proposal
    }
}

/// Inputs of the bound for the maximum loss over random proposal sets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Theorem2Inputs {
    pub gamma: f64,
    pub r: u128,
    pub ell: usize,
    pub n: usize,
    pub n_prime: usize,
    pub s: usize,
    pub delta: f64,
    pub beta: f64,
}

/// The closed-form terms that do not depend on the data.
pub fn theorem2_constant_terms(w_l2: f64, inputs: &Theorem2Inputs) -> Result<(f64, f64, f64, f64, bool)> {
    let Theorem2Inputs { gamma, r, ell, n, s, delta, beta, .. } = *inputs;
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidBeta(beta));
    }
    if ell == 0 {
        return Err(Error::InvalidScale("ell must be positive".into()));
    }
    let tail = theorem1_tail(gamma, r, n, w_l2, delta)?;
    let (nf, rf, lf, sf) = (n as f64, r as f64, ell as f64, s as f64);
    let sample = (1.0 / nf).sqrt();
    let sparsity = 3.0 * ((sf * (lf.ln() + 2.0 * (nf * rf).ln()) + (4.0 / delta).ln()) / nf).sqrt();
    let beta_term = if beta == 0.0 { 0.0 } else { 1.0 / (1.0 / beta).ln() };
    let size_term = beta_term.max(128.0 * gamma * gamma * w_l2 * w_l2);
    let proposal = 2.0
        * size_term
        * ((2.0 * sf + 1.0) * (lf * (nf * rf + 1.0) + 1.0).ln() * (nf + 1.0).ln().powi(3) / nf).sqrt();
    let k = 2.0 * sf + 1.0;
    let in_range = k >= 3.0 && k <= 0.45 * (lf * (rf + 1.0) + 1.0).sqrt();
    Ok((tail, sample, sparsity, proposal, in_range))
}

pub fn theorem2_terms(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    sets: &[ProposalSet],
    map: &dyn FeatureMap,
    inputs: &Theorem2Inputs,
) -> Result<Theorem2Terms> {
    let (tail, sample, sparsity, proposal, in_range) = theorem2_constant_terms(w.l2(), inputs)?;
    let empirical = empirical_random(w, data, space, sets, map)?;
    Ok(Theorem2Terms {
        empirical,
        norm: w.l2().powi(2) / inputs.n as f64,
        tail,
        sample,
        sparsity,
        proposal,
        in_range,
    })
}

/// Right-hand side of the bound for the maximum loss over random proposal
/// sets; an out-of-range `s` is reported in [`Theorem2Terms::in_range`].
pub fn theorem2_rhs(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    sets: &[ProposalSet],
    map: &dyn FeatureMap,
    inputs: &Theorem2Inputs,
) -> Result<f64> {
    Ok(theorem2_terms(w, data, space, sets, map, inputs)?.total())
}

/// Per-sample check of the Gibbs upper bound: returns
/// `(lhs_mean, lhs_stderr, rhs)` where lhs estimates `E_{w'}[d(y, f_{w'}(x))]`
/// and `rhs = max d·1[m ≤ 1] + ‖w‖²/n`.
pub fn persample_gibbs_check(
    w: &ModelParams,
    sample: &Sample,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    alpha: f64,
    num_draws: usize,
    seed: u64,
    n: usize,
) -> Result<(f64, f64, f64)> {
    let data = std::slice::from_ref(sample);
    let (mean, stderr) = gibbs_estimate(w, data, space, map, alpha, num_draws, seed)?;
    let rhs = slack01_max(w.values(), sample, space, map, None)? + w.l2().powi(2) / n as f64;
    Ok((mean, stderr, rhs))
}

/// Monte-Carlo `P_{w'}[m(x, y, f_{w'}(x), w) > 1]` with its standard error.
pub fn lemma1_tail(
    w: &ModelParams,
    sample: &Sample,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    alpha: f64,
    num_draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_samples(w, std::slice::from_ref(sample), space, map)?;
    if num_draws == 0 {
        return Err(Error::InvalidArgument("num_draws must be at least 1".into()));
    }
    let (_, s_star) = best_latent_raw(w.values(), &sample.x, &sample.y, space, map);
    let hits: Vec<f64> = (0..num_draws)
        .into_par_iter()
        .map(|k| {
            let wp = perturbed(w, alpha, seed, k);
            let d = exact_decode_raw(&wp, &sample.x, space, map)?;
            let m = s_star - map.score(w.values(), &sample.x, space, &d.point);
            Ok(if m > 1.0 { 1.0 } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(mean_stderr(&hits))
}

/// All bound diagnostics for one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub alpha: f64,
    pub gibbs_mean: f64,
    pub gibbs_stderr: f64,
    pub gibbs_draws: usize,
    pub t1_rhs: f64,
    pub t1_terms: Theorem1Terms,
    pub t2_rhs: Option<f64>,
    pub t2_terms: Option<Theorem2Terms>,
    pub inputs: Theorem2Inputs,
    pub w_l2: f64,
}

/// Computes every diagnostic with `r = |Y x H|`, `ℓ = dim`, `s = nnz(w)`.
/// The random-set bound needs proposal sets and a β for the space.
pub fn bound_report(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    map: &dyn FeatureMap,
    sets: Option<&[ProposalSet]>,
    delta: f64,
    num_draws: usize,
    seed: u64,
) -> Result<BoundReport> {
    let r = space.product_size()?;
    let n = data.len();
    let gamma = map.gamma();
    let alpha = alpha_scale(gamma, r, n, w.l2())?;
    let (gibbs_mean, gibbs_stderr) = gibbs_estimate(w, data, space, map, alpha, num_draws, seed)?;
    let t1_terms = theorem1_terms(w, data, space, map, gamma, r, n, delta)?;
    let inputs = Theorem2Inputs {
        gamma,
        r,
        ell: map.dim(),
        n,
        n_prime: sets.and_then(|s| s.first()).map_or(0, |t| t.len()),
        s: w.nnz(),
        delta,
        beta: space.beta_constant().unwrap_or(0.0),
    };
    let t2_terms = match (sets, space.beta_constant()) {
        (Some(sets), Ok(_)) => Some(theorem2_terms(w, data, space, sets, map, &inputs)?),
        _ => None,
    };
    Ok(BoundReport {
        alpha,
        gibbs_mean,
        gibbs_stderr,
        gibbs_draws: num_draws,
        t1_rhs: t1_terms.total(),
        t1_terms,
        t2_rhs: t2_terms.map(|t| t.total()),
        t2_terms,
        inputs,
        w_l2: w.l2(),
    })
}
