use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMap, ModelParams};
use crate::inference::{exact_decode_raw, random_decode_raw};
use crate::learning::{train, Method, ProposalSizeRule, Sample, TrainConfig};
use crate::rng::derive_seed;
use crate::sampling::build_points;
use crate::structures::StructureSpace;

use super::data::generate_synthetic;

pub const ALL: &str = "All";
pub const RANDOM: &str = "Random";
pub const RANDOM_ALL: &str = "Random/All";
pub const LSSVM: &str = "LSSVM";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub reps: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub iterations: usize,
    pub eta0: f64,
    pub lambda: Option<f64>,
    pub size_rule: ProposalSizeRule,
}

impl ExperimentConfig {
    pub fn new(reps: usize, n_train: usize, n_test: usize, seed: u64) -> Self {
        let base = TrainConfig::new(Method::AllSlack);
        Self {
            methods: vec![Method::AllSlack, Method::RandomSlack, Method::MarginRescale],
            reps,
            n_train,
            n_test,
            seed,
            iterations: base.iterations,
            eta0: base.eta0,
            lambda: None,
            size_rule: base.size_rule,
        }
    }
}

/// One method evaluated in one repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub rep: usize,
    pub method: String,
    /// Seed of the repetition's dataset.
    pub dataset_seed: u64,
    pub train_runtime_s: f64,
    pub test_runtime_s: f64,
    pub train_distortion: f64,
    pub test_distortion: f64,
    pub w: ModelParams,
}

/// Means over repetitions with 95% normal-approximation half-widths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub problem: String,
    pub method: String,
    pub reps: usize,
    pub train_runtime_s: f64,
    pub hw_train_runtime: f64,
    pub test_runtime_s: f64,
    pub hw_test_runtime: f64,
    pub train_distortion: f64,
    pub hw_train: f64,
    pub test_distortion: f64,
    pub hw_test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub problem: String,
    pub config: ExperimentConfig,
    pub rows: Vec<RepRow>,
    pub results: Vec<ExperimentResult>,
}

/// `(mean, 1.96·sd/√k)` with the sample standard deviation; zero width for one value.
pub fn mean_half_width(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, 1.96 * var.sqrt() / (k as f64).sqrt())
}

/// Aggregates per-repetition rows by method, keeping first-appearance order.
pub fn summarize(problem: &str, rows: &[RepRow]) -> Vec<ExperimentResult> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let sel: Vec<&RepRow> = rows.iter().filter(|r| r.method == m).collect();
            let col = |f: fn(&RepRow) -> f64| mean_half_width(&sel.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (train_runtime_s, hw_train_runtime) = col(|r| r.train_runtime_s);
            let (test_runtime_s, hw_test_runtime) = col(|r| r.test_runtime_s);
            let (train_distortion, hw_train) = col(|r| r.train_distortion);
            let (test_distortion, hw_test) = col(|r| r.test_distortion);
            ExperimentResult {
                problem: problem.to_string(),
                method: m.to_string(),
                reps: sel.len(),
                train_runtime_s,
                hw_train_runtime,
                test_runtime_s,
                hw_test_runtime,
                train_distortion,
                hw_train,
                test_distortion,
                hw_test,
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Mode {
    Exact,
    Random { size: usize, seed: u64 },
}

/// Mean distortion of the decodings of `data` and the time spent decoding.
fn evaluate(w: &[f64], data: &[Sample], space: &StructureSpace, map: &dyn FeatureMap, mode: Mode) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let start = Instant::now();
    let outputs = data
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let d = match mode {
                Mode::Exact => exact_decode_raw(w, &s.x, space, map)?,
                Mode::Random { size, seed } => {
                    let seed = derive_seed(seed, &[j as u64]);
                    let points = build_points(w, &s.x, space, map, size, seed)?;
                    random_decode_raw(w, &s.x, space, &points, map)?
                }
            };
            Ok(d.point.output)
        })
        .collect::<Result<Vec<_>>>()?;
    let elapsed = start.elapsed().as_secs_f64();
    let total: f64 = data.iter().zip(&outputs).map(|(s, y)| space.distortion_of(&s.y, y)).sum();
    Ok((total / data.len() as f64, elapsed))
}

fn run_rep(space: &StructureSpace, config: &ExperimentConfig, rep: usize) -> Result<Vec<RepRow>> {
    let dataset_seed = derive_seed(config.seed, &[rep as u64, 0]);
    let ds = generate_synthetic(space, config.n_train + config.n_test, dataset_seed)?;
    let (train_set, test_set) = ds.split(config.n_train);
    let map = &ds.map;
    let mut rows = Vec::new();
    for (m, &method) in config.methods.iter().enumerate() {
        let mut tc = TrainConfig::new(method)
            .with_seed(derive_seed(config.seed, &[rep as u64, 1, m as u64]))
            .with_iterations(config.iterations)
            .with_size_rule(config.size_rule);
        tc.eta0 = config.eta0;
        tc.lambda = config.lambda;
        let report = train(&train_set, space, map, &tc)?;
        let w = report.w_final;
        let mut push = |label: &str, mode_train: Mode, mode_test: Mode| -> Result<()> {
            let (train_distortion, _) = evaluate(w.values(), &train_set, space, map, mode_train)?;
            let (test_distortion, test_runtime_s) = evaluate(w.values(), &test_set, space, map, mode_test)?;
            rows.push(RepRow {
                rep,
                method: label.to_string(),
                dataset_seed,
                train_runtime_s: report.wall_time,
                test_runtime_s,
                train_distortion,
                test_distortion,
                w: w.clone(),
            });
            Ok(())
        };
        match method {
            Method::AllSlack => push(ALL, Mode::Exact, Mode::Exact)?,
            Method::MarginRescale => push(LSSVM, Mode::Exact, Mode::Exact)?,
            Method::RandomSlack => {
                let size = config.size_rule.size(space.beta_constant()?, map.gamma(), w.l2(), config.n_train)?;
                let seed_of = |k: u64| derive_seed(config.seed, &[rep as u64, 2 + k, m as u64]);
                push(
                    RANDOM,
                    Mode::Random { size, seed: seed_of(0) },
                    Mode::Random { size, seed: seed_of(1) },
                )?;
                push(RANDOM_ALL, Mode::Exact, Mode::Exact)?;
            }
        }
    }
    Ok(rows)
}

/// Repeats generate / train / evaluate `reps` times on fresh synthetic data.
///
/// Random slack yields two rows: decoding over a fresh proposal set
/// (`Random`) and exact decoding (`Random/All`).
pub fn run_experiment(space: &StructureSpace, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.reps == 0 {
        return Err(Error::InvalidArgument("reps must be at least 1".into()));
    }
    if config.n_train == 0 {
        return Err(Error::InvalidArgument("n_train must be at least 1".into()));
    }
    if config.methods.is_empty() {
        return Err(Error::InvalidArgument("no methods given".into()));
    }
    let per_rep = (0..config.reps)
        .into_par_iter()
        .map(|r| run_rep(space, config, r))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<RepRow> = per_rep.into_iter().flatten().collect();
    let problem = space.label();
    let results = summarize(&problem, &rows);
    Ok(ExperimentReport { problem, config: config.clone(), rows, results })
}
