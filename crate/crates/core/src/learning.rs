//! Randomized slack re-scaling, all-outputs slack re-scaling and margin
//! re-scaling, trained by subgradient descent with a `1/√t` step.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{best_latent_raw, check_model, FeatureMap, InputX, ModelParams};
use crate::rng::derive_seed;
use crate::sampling::{build_points, proposal_set_size, ProposalSet};
use crate::structures::{Latent, Output, StructureSpace, StructuredPoint};

/// One labelled example; the latent is never observed.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: InputX,
    pub y: Output,
}

impl Sample {
    pub fn new(x: InputX, y: Output) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Slack re-scaling maximised over a random proposal set per sample.
    RandomSlack,
    /// Slack re-scaling maximised over all of `Y x H`.
    AllSlack,
    /// Margin re-scaling (latent structural SVM).
    MarginRescale,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::RandomSlack => "random",
            Method::AllSlack => "all",
            Method::MarginRescale => "lssvm",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "random" | "random_slack" => Ok(Method::RandomSlack),
            "all" | "all_slack" => Ok(Method::AllSlack),
            "lssvm" | "margin_rescale" => Ok(Method::MarginRescale),
            other => Err(Error::Parse(format!("unknown method {other:?}"))),
        }
    }
}

/// How many proposals to draw per sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ProposalSizeRule {
    /// The full size formula with `‖w‖₂` floored at `norm_floor`.
    Theorem { norm_floor: f64 },
    /// `⌈(1/2)·ln n / ln(1/β)⌉`: the formula without its norm term.
    BetaOnly,
    Fixed { size: usize },
}

impl Default for ProposalSizeRule {
    fn default() -> Self {
        ProposalSizeRule::BetaOnly
    }
}

impl ProposalSizeRule {
    pub fn size(&self, beta: f64, gamma: f64, w_l2: f64, n: usize) -> Result<usize> {
        match *self {
            ProposalSizeRule::Theorem { norm_floor } => proposal_set_size(beta, gamma, w_l2.max(norm_floor), n.max(2)),
            ProposalSizeRule::BetaOnly => proposal_set_size(beta, 0.0, 0.0, n.max(2)),
            ProposalSizeRule::Fixed { size } => Ok(size.max(1)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    pub iterations: usize,
    /// Defaults to `1/n`.
    pub lambda: Option<f64>,
    pub eta0: f64,
    pub seed: u64,
    pub size_rule: ProposalSizeRule,
    /// Every coordinate of the starting point.
    pub init: f64,
}

impl TrainConfig {
    pub fn new(method: Method) -> Self {
        Self { method, iterations: 30, lambda: None, eta0: 1.0, seed: 0, size_rule: ProposalSizeRule::default(), init: 1e-6 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = Some(lambda);
        self
    }

    pub fn with_size_rule(mut self, rule: ProposalSizeRule) -> Self {
        self.size_rule = rule;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be at least 1".into()));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("lambda must be positive, got {l}")));
            }
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta0 must be positive, got {}", self.eta0)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: Method,
    pub w_final: ModelParams,
    /// Objective at the iterate each step starts from.
    pub objective_trace: Vec<f64>,
    pub wall_time: f64,
    pub proposal_draw_count: u64,
    /// Per-sample proposal-set size used at each iteration (random slack only).
    pub proposal_sizes: Vec<usize>,
    pub lambda: f64,
    pub config: TrainConfig,
}

#[derive(Clone, Copy)]
enum Candidates<'a> {
    All,
    Set(&'a [StructuredPoint]),
}

struct Term {
    value: f64,
    /// `coeff·(Φ(hat) − Φ(star))` enters the subgradient.
    step: Option<(StructuredPoint, StructuredPoint, f64)>,
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Slack,
    Margin,
}

fn sample_term(
    w: &[f64],
    sample: &Sample,
    space: &StructureSpace,
    map: &dyn FeatureMap,
    candidates: Candidates<'_>,
    kind: Kind,
) -> Result<Term> {
    let (h_star, s_star) = best_latent_raw(w, &sample.x, &sample.y, space, map);
    let value_of = |s: f64, d: f64| match kind {
        Kind::Slack => d * (2.0 - (s_star - s)).max(0.0),
        Kind::Margin => s + d,
    };
    let mut best: Option<(StructuredPoint, f64, f64, f64)> = None;
    let mut consider = |p: &StructuredPoint, s: f64, d: f64| {
        let v = value_of(s, d);
        let better = match &best {
            None => true,
            Some((bp, bv, _, _)) => v > *bv || (v == *bv && p < bp),
        };
        if better {
            best = Some((p.clone(), v, s, d));
        }
    };
    match candidates {
        Candidates::All => {
            for y_hat in space.outputs()? {
                let d = space.distortion_of(&sample.y, y_hat);
                let mut p = StructuredPoint::new(y_hat.clone(), Latent(0));
                for h in space.enumerate_latents() {
                    p.latent = h;
                    consider(&p, map.score(w, &sample.x, space, &p), d);
                }
            }
        }
        Candidates::Set(points) => {
            if points.is_empty() {
                return Err(Error::EmptyProposalSet);
            }
            for p in points {
                let d = space.distortion_of(&sample.y, &p.output);
                consider(p, map.score(w, &sample.x, space, p), d);
            }
        }
    }
    let (hat, value, s_hat, d) = best.expect("candidates are nonempty");
    let star = StructuredPoint::new(sample.y.clone(), h_star);
    let (value, step) = match kind {
        Kind::Slack => {
            let arg = 2.0 - (s_star - s_hat);
            (value, (arg > 0.0 && d > 0.0).then_some((hat, star, d)))
        }
        Kind::Margin => (value - s_star, Some((hat, star, 1.0))),
    };
    Ok(Term { value, step })
}

fn check_data(w: &ModelParams, data: &[Sample], space: &StructureSpace, map: &dyn FeatureMap) -> Result<()> {
    check_model(w, map)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    for s in data {
        map.check_input(&s.x, space)?;
        space.validate_output(&s.y)?;
    }
    Ok(())
}

fn evaluate(
    w: &[f64],
    data: &[Sample],
    space: &StructureSpace,
    map: &dyn FeatureMap,
    sets: Option<&[ProposalSet]>,
    kind: Kind,
    lambda: f64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    if let Some(sets) = sets {
        if sets.len() != data.len() {
            return Err(Error::DimensionMismatch { expected: data.len(), got: sets.len() });
        }
    }
    let terms: Vec<Term> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let c = match sets {
                Some(sets) => Candidates::Set(&sets[i].points),
                None => Candidates::All,
            };
            sample_term(w, &data[i], space, map, c, kind)
        })
        .collect::<Result<_>>()?;
    let n = data.len() as f64;
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>();
    let value = terms.iter().map(|t| t.value).sum::<f64>() / n + lambda * reg;
    let grad = want_grad.then(|| {
        let mut g = vec![0.0; w.len()];
        for (t, sample) in terms.iter().zip(data) {
            if let Some((hat, star, c)) = &t.step {
                map.add_phi(&sample.x, space, hat, c / n, &mut g);
                map.add_phi(&sample.x, space, star, -c / n, &mut g);
            }
        }
        for (gi, wi) in g.iter_mut().zip(w) {
            *gi += 2.0 * lambda * wi;
        }
        g
    });
    Ok((value, grad))
}

/// `(1/n)·Σ max_{(ŷ,ĥ)∈T} d·max(0, 2−m) + λ‖w‖²`.
pub fn objective_random_slack(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    sets: &[ProposalSet],
    map: &dyn FeatureMap,
    lambda: f64,
) -> Result<f64> {
    check_data(w, data, space, map)?;
    Ok(evaluate(w.values(), data, space, map, Some(sets), Kind::Slack, lambda, false)?.0)
}

/// As [`objective_random_slack`] with the maximum over all of `Y x H`.
pub fn objective_all_slack(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    map: &dyn FeatureMap,
    lambda: f64,
) -> Result<f64> {
    check_data(w, data, space, map)?;
    Ok(evaluate(w.values(), data, space, map, None, Kind::Slack, lambda, false)?.0)
}

/// `λ‖w‖² + (1/n)·Σ [max_{(ŷ,ĥ)} (⟨Φ(x,ŷ,ĥ),w⟩ + d) − max_h ⟨Φ(x,y,h),w⟩]`.
pub fn objective_margin_rescale(
    w: &ModelParams,
    data: &[Sample],
    space: &StructureSpace,
    map: &dyn FeatureMap,
    lambda: f64,
) -> Result<f64> {
    check_data(w, data, space, map)?;
    Ok(evaluate(w.values(), data, space, map, None, Kind::Margin, lambda, false)?.0)
}

fn kind_of(method: Method) -> Kind {
    match method {
        Method::MarginRescale => Kind::Margin,
        _ => Kind::Slack,
    }
}

fn sets_for(method: Method, sets: Option<&[ProposalSet]>) -> Result<Option<&[ProposalSet]>> {
    match method {
        Method::RandomSlack => sets
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument("random slack needs proposal sets".into())),
        _ => Ok(None),
    }
}

/// A subgradient of the method's objective: canonical tie-breaks and the zero
/// branch at hinge kinks.
pub fn subgradient(
    w: &ModelParams,
    method: Method,
    data: &[Sample],
    space: &StructureSpace,
    sets: Option<&[ProposalSet]>,
    map: &dyn FeatureMap,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_data(w, data, space, map)?;
    let sets = sets_for(method, sets)?;
    let (_, g) = evaluate(w.values(), data, space, map, sets, kind_of(method), lambda, true)?;
    Ok(g.expect("gradient requested"))
}

/// The method's objective value.
pub fn objective(
    w: &ModelParams,
    method: Method,
    data: &[Sample],
    space: &StructureSpace,
    sets: Option<&[ProposalSet]>,
    map: &dyn FeatureMap,
    lambda: f64,
) -> Result<f64> {
    check_data(w, data, space, map)?;
    let sets = sets_for(method, sets)?;
    Ok(evaluate(w.values(), data, space, map, sets, kind_of(method), lambda, false)?.0)
}

/// Smallest distance from `w` to a point where the objective may fail to be
/// differentiable, measured in objective units: the gap between the best and
/// the runner-up value of every inner and outer maximisation (candidates with
/// identical feature vectors count as one) and the active hinge argument.
pub fn kink_distance(
    w: &ModelParams,
    method: Method,
    data: &[Sample],
    space: &StructureSpace,
    sets: Option<&[ProposalSet]>,
    map: &dyn FeatureMap,
) -> Result<f64> {
    check_data(w, data, space, map)?;
    let sets = sets_for(method, sets)?;
    let wv = w.values();
    let mut gap = f64::INFINITY;
    for (i, sample) in data.iter().enumerate() {
        let star: Vec<(StructuredPoint, f64, f64)> = space
            .enumerate_latents()
            .map(|h| {
                let p = StructuredPoint::new(sample.y.clone(), h);
                let s = map.score(wv, &sample.x, space, &p);
                (p, s, 0.0)
            })
            .collect();
        gap = gap.min(top_gap(&star, &sample.x, space, map));
        let s_star = star.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
        let points: Vec<StructuredPoint> = match sets {
            Some(sets) => sets[i].points.clone(),
            None => space
                .outputs()?
                .iter()
                .flat_map(|y| space.enumerate_latents().map(move |h| StructuredPoint::new(y.clone(), h)))
                .collect(),
        };
        let mut cands = Vec::with_capacity(points.len());
        for p in points {
            let s = map.score(wv, &sample.x, space, &p);
            let d = space.distortion_of(&sample.y, &p.output);
            let v = match method {
                Method::MarginRescale => s + d,
                _ => {
                    let arg = 2.0 - (s_star - s);
                    if d > 0.0 {
                        gap = gap.min(arg.abs());
                    }
                    d * arg.max(0.0)
                }
            };
            cands.push((p, v, d));
        }
        gap = gap.min(top_gap(&cands, &sample.x, space, map));
    }
    Ok(gap)
}

fn top_gap(cands: &[(StructuredPoint, f64, f64)], x: &InputX, space: &StructureSpace, map: &dyn FeatureMap) -> f64 {
    let top = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<&(StructuredPoint, f64, f64)> = cands.iter().filter(|c| c.1 == top).collect();
    let reference = map.phi(x, space, &tied[0].0);
    for t in &tied[1..] {
        if map.phi(x, space, &t.0) != reference || t.2 != tied[0].2 {
            return 0.0;
        }
    }
    let second = cands.iter().map(|c| c.1).filter(|&v| v < top).fold(f64::NEG_INFINITY, f64::max);
    top - second
}

/// Runs subgradient descent `w ← w − (η₀/√t)·g` from `w₀ = init·1`.
///
/// Random slack redraws every sample's proposal set at every iteration; draw
/// `k` of sample `i` at iteration `t` uses the sub-stream `(seed, t, i)`.
pub fn train(data: &[Sample], space: &StructureSpace, map: &dyn FeatureMap, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let mut w = vec![config.init; map.dim()];
    check_data(&ModelParams::new(w.clone()), data, space, map)?;
    let n = data.len();
    let lambda = config.lambda.unwrap_or(1.0 / n as f64);
    let kind = kind_of(config.method);
    let beta = match config.method {
        Method::RandomSlack => space.beta_constant()?,
        _ => 0.0,
    };
    let start = Instant::now();
    let mut trace = Vec::with_capacity(config.iterations);
    let mut sizes = Vec::new();
    let mut draws = 0u64;
    for t in 1..=config.iterations {
        let sets: Option<Vec<ProposalSet>> = match config.method {
            Method::RandomSlack => {
                let l2 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                let size = config.size_rule.size(beta, map.gamma(), l2, n)?;
                sizes.push(size);
                draws += (size * n) as u64;
                let sets = (0..n)
                    .into_par_iter()
                    .map(|i| {
                        let seed = derive_seed(config.seed, &[t as u64, i as u64]);
                        let points = build_points(&w, &data[i].x, space, map, size, seed)?;
                        Ok(ProposalSet::from_points(points, seed).with_size_inputs(beta, map.gamma(), l2, n))
                    })
                    .collect::<Result<_>>()?;
                Some(sets)
            }
            _ => None,
        };
        let (value, g) = evaluate(&w, data, space, map, sets.as_deref(), kind, lambda, true)?;
        trace.push(value);
        let eta = config.eta0 / (t as f64).sqrt();
        for (wi, gi) in w.iter_mut().zip(g.expect("gradient requested")) {
            *wi -= eta * gi;
        }
    }
    Ok(TrainReport {
        method: config.method,
        w_final: ModelParams::new(w),
        objective_trace: trace,
        wall_time: start.elapsed().as_secs_f64(),
        proposal_draw_count: draws,
        proposal_sizes: sizes,
        lambda,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{SyntheticMap, TableMap};
    use crate::inference::exact_decode;
    use crate::rng::stream;
    use crate::sampling::build_proposal_set;
    use crate::structures::{DistortionKind, LatentKind};
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn synthetic(space: &StructureSpace, n: usize, seed: u64) -> (SyntheticMap, Vec<Sample>) {
        let map = SyntheticMap::for_space(space);
        let mut rng = stream(seed);
        let w_star = ModelParams::new((0..map.dim()).map(|_| rng.sample(StandardNormal)).collect());
        let data = (0..n)
            .map(|_| {
                let x = map.sample_input(space, &mut rng);
                let y = exact_decode(&w_star, &x, space, &map).unwrap().point.output;
                Sample::new(x, y)
            })
            .collect();
        (map, data)
    }

    /// Two outputs, one latent, one feature: `Φ(y0) = 0`, `Φ(y1) = 1`.
    fn toy() -> (StructureSpace, TableMap, Vec<Sample>) {
        let s = StructureSpace::card_set(2, 1).unwrap().with_latent(LatentKind::OneHotBit { dim: 1 }).unwrap();
        let y1 = Output::Subset(vec![1]);
        let table = TableMap::new(&s, 1, |p| vec![(p.output == y1) as u8 as f64]).unwrap();
        let data = vec![Sample::new(InputX::from_bits(vec![]), Output::Subset(vec![0]))];
        (s, table, data)
    }

    #[test]
    fn toy_objectives_by_hand() {
        let (s, table, data) = toy();
        let w = ModelParams::new(vec![0.5]);
        // true y0 scores 0; y1 scores 0.5 with d = 1; m = -0.5; hinge 2.5
        let all = objective_all_slack(&w, &data, &s, &table, 0.1).unwrap();
        assert!((all - (2.5 + 0.1 * 0.25)).abs() < 1e-12);
        let lssvm = objective_margin_rescale(&w, &data, &s, &table, 0.1).unwrap();
        assert!((lssvm - (1.5 + 0.025)).abs() < 1e-12);
        let only_truth = ProposalSet::from_points(vec![StructuredPoint::new(Output::Subset(vec![0]), Latent(0))], 0);
        let r = objective_random_slack(&w, &data, &s, &[only_truth], &table, 0.1).unwrap();
        assert!((r - 0.025).abs() < 1e-12);

        let g = subgradient(&w, Method::AllSlack, &data, &s, None, &table, 0.1).unwrap();
        // d·(Φ(ŷ) − Φ(y)) + 2λw = 1 + 0.1
        assert!((g[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn separable_objective_is_regulariser() {
        let (s, table, data) = toy();
        let w = ModelParams::new(vec![-3.0]);
        let lambda = 0.2;
        assert!((objective_all_slack(&w, &data, &s, &table, lambda).unwrap() - lambda * 9.0).abs() < 1e-12);
        let g = subgradient(&w, Method::AllSlack, &data, &s, None, &table, lambda).unwrap();
        assert_eq!(g, vec![2.0 * lambda * -3.0]);
        // margin exactly 2 is a kink: the zero branch is taken
        let w = ModelParams::new(vec![-2.0]);
        let g = subgradient(&w, Method::AllSlack, &data, &s, None, &table, lambda).unwrap();
        assert_eq!(g, vec![2.0 * lambda * -2.0]);
    }

    #[test]
    fn tiny_w_gives_about_two() {
        let s = StructureSpace::permutation(3).unwrap();
        let (map, data) = synthetic(&s, 2, 1);
        let w = ModelParams::new(vec![1e-9; map.dim()]);
        let v = objective_all_slack(&w, &data, &s, &map, 0.5).unwrap();
        assert!((v - 2.0).abs() < 1e-6);
        let m = objective_margin_rescale(&w, &data, &s, &map, 0.5).unwrap();
        assert!((m - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_distortion_margin_term_vanishes() {
        let s = StructureSpace::spanning_tree(3).unwrap().with_distortion(DistortionKind::Zero);
        let (map, data) = synthetic(&s, 4, 3);
        let mut rng = stream(3);
        let w_star = ModelParams::new((0..map.dim()).map(|_| rng.sample(StandardNormal)).collect());
        let lambda = 0.25;
        assert!(
            (objective_margin_rescale(&w_star, &data, &s, &map, lambda).unwrap() - lambda * w_star.l2().powi(2)).abs()
                < 1e-9
        );
    }

    #[test]
    fn all_dominates_random() {
        let s = StructureSpace::spanning_tree(4).unwrap();
        let (map, data) = synthetic(&s, 10, 4);
        let mut rng = stream(40);
        for seed in 0..10 {
            let w = ModelParams::new((0..map.dim()).map(|_| 0.2 * rng.sample::<f64, _>(StandardNormal)).collect());
            let sets: Vec<ProposalSet> = data
                .iter()
                .enumerate()
                .map(|(i, d)| build_proposal_set(&w, &d.x, &s, &map, 4, seed * 100 + i as u64).unwrap())
                .collect();
            let r = objective_random_slack(&w, &data, &s, &sets, &map, 0.1).unwrap();
            let a = objective_all_slack(&w, &data, &s, &map, 0.1).unwrap();
            assert!(a >= r);
        }
    }

    #[test]
    fn single_point_space_objectives_agree() {
        let s = StructureSpace::card_set(2, 1).unwrap().with_latent(LatentKind::OneHotBit { dim: 1 }).unwrap();
        let table = TableMap::new(&s, 1, |_| vec![1.0]).unwrap();
        let data = vec![Sample::new(InputX::from_bits(vec![]), Output::Subset(vec![0]))];
        let w = ModelParams::new(vec![0.7]);
        let all_points: Vec<StructuredPoint> = s
            .enumerate_outputs()
            .unwrap()
            .into_iter()
            .map(|y| StructuredPoint::new(y, Latent(0)))
            .collect();
        let set = ProposalSet::from_points(all_points, 0);
        assert_eq!(
            objective_all_slack(&w, &data, &s, &table, 0.3).unwrap(),
            objective_random_slack(&w, &data, &s, &[set], &table, 0.3).unwrap()
        );
    }

    fn finite_difference(
        w: &ModelParams,
        method: Method,
        data: &[Sample],
        s: &StructureSpace,
        sets: Option<&[ProposalSet]>,
        map: &dyn FeatureMap,
        lambda: f64,
    ) -> Vec<f64> {
        let h = 1e-6;
        (0..w.dim())
            .map(|k| {
                let mut plus = w.values().to_vec();
                let mut minus = w.values().to_vec();
                plus[k] += h;
                minus[k] -= h;
                let fp = objective(&ModelParams::new(plus), method, data, s, sets, map, lambda).unwrap();
                let fm = objective(&ModelParams::new(minus), method, data, s, sets, map, lambda).unwrap();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn subgradients_match_finite_differences() {
        let s = StructureSpace::spanning_tree(3).unwrap();
        let (map, data) = synthetic(&s, 4, 8);
        let mut rng = stream(80);
        for method in [Method::RandomSlack, Method::AllSlack, Method::MarginRescale] {
            let mut checked = 0;
            while checked < 5 {
                let w = ModelParams::new((0..map.dim()).map(|_| 0.4 * rng.sample::<f64, _>(StandardNormal)).collect());
                let sets: Vec<ProposalSet> = data
                    .iter()
                    .map(|d| build_proposal_set(&w, &d.x, &s, &map, 3, rng.random()).unwrap())
                    .collect();
                let sets = (method == Method::RandomSlack).then_some(sets.as_slice());
                if kink_distance(&w, method, &data, &s, sets, &map).unwrap() <= 1e-3 {
                    continue;
                }
                let g = subgradient(&w, method, &data, &s, sets, &map, 0.25).unwrap();
                let fd = finite_difference(&w, method, &data, &s, sets, &map, 0.25);
                let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-4 * scale, "{method:?}: {a} vs {b}");
                }
                checked += 1;
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let s = StructureSpace::spanning_tree(4).unwrap();
        let (map, data) = synthetic(&s, 20, 6);
        for method in [Method::RandomSlack, Method::AllSlack, Method::MarginRescale] {
            let config = TrainConfig::new(method).with_seed(17).with_iterations(10);
            let a = train(&data, &s, &map, &config).unwrap();
            let b = train(&data, &s, &map, &config).unwrap();
            assert_eq!(a.w_final, b.w_final);
            assert_eq!(a.objective_trace, b.objective_trace);
            assert_eq!(a.objective_trace.len(), 10);
            let best = a.objective_trace.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(best < a.objective_trace[0], "{method:?}");
        }
    }

    #[test]
    fn one_step_on_separable_data_barely_moves() {
        let (s, table, data) = toy();
        let mut config = TrainConfig::new(Method::AllSlack).with_iterations(1);
        config.init = -5.0;
        let r = train(&data, &s, &table, &config).unwrap();
        // only the regulariser is active: w1 = w0 − 2λ·w0
        assert!((r.w_final.values()[0] - (-5.0 + 2.0 * 5.0)).abs() < 1e-12);
        assert_eq!(r.proposal_draw_count, 0);
    }

    #[test]
    fn random_slack_counts_draws() {
        let s = StructureSpace::spanning_tree(4).unwrap();
        let (map, data) = synthetic(&s, 10, 2);
        let r = train(&data, &s, &map, &TrainConfig::new(Method::RandomSlack).with_iterations(3)).unwrap();
        let size = proposal_set_size(2.0 / 3.0, 0.0, 0.0, 10).unwrap();
        assert_eq!(r.proposal_sizes, vec![size; 3]);
        assert_eq!(r.proposal_draw_count, 3 * 10 * size as u64);
    }

    #[test]
    fn config_validation() {
        let (s, table, data) = toy();
        assert!(train(&data, &s, &table, &TrainConfig::new(Method::AllSlack).with_iterations(0)).is_err());
        assert!(train(&data, &s, &table, &TrainConfig::new(Method::AllSlack).with_lambda(0.0)).is_err());
        assert_eq!(Method::parse("lssvm").unwrap(), Method::MarginRescale);
        assert!(Method::parse("cccp").is_err());
    }
}
