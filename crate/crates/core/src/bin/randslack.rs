use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use randslack::bounds::bound_report;
use randslack::harness::{
    generate_matching, generate_synthetic, read_json, results_csv, results_table, run_experiment, to_json,
    write_json, Dataset, ExperimentConfig,
};
use randslack::rng::derive_seed;
use randslack::sampling::build_proposal_set;
use randslack::verification::{
    verify_beta_all, verify_change_of_measure_all, verify_derangements, verify_low_norm_all, verify_ordering_all,
    ClaimResult, VerificationManifest,
};
use randslack::{
    exact_decode, random_decode, train, Error, FeatureMap, Method, ModelParams, ProposalSizeRule, StructureSpace,
    TrainConfig, TrainReport,
};

#[derive(Parser)]
#[command(name = "randslack", version, about = "Latent structured prediction with randomized slack re-scaling")]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true, env = "LS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Train a model on a dataset.
    Train(TrainArgs),
    /// Decode every sample of a dataset with a trained model.
    Infer(InferArgs),
    /// Run the exact verification oracles.
    Verify(VerifyArgs),
    /// Gaussian-perturbation bound diagnostics for a trained model.
    Bound(BoundArgs),
    /// Repeated train/test experiment in the layout of a results table.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Tree,
    Dag,
    Set,
    Perm,
    /// Keypoint matching: permutations with affine latents.
    Match,
}

#[derive(Args)]
struct SpaceOpts {
    #[arg(long, value_enum, default_value = "tree")]
    space: SpaceArg,
    #[arg(long, default_value_t = 4)]
    v: usize,
    /// DAG in-degree bound or set cardinality.
    #[arg(long, default_value_t = 2)]
    b: usize,
}

impl SpaceOpts {
    fn space(&self) -> Result<StructureSpace, Error> {
        match self.space {
            SpaceArg::Tree => StructureSpace::spanning_tree(self.v),
            SpaceArg::Dag => StructureSpace::dag(self.v, self.b),
            SpaceArg::Set => StructureSpace::card_set(self.v, self.b),
            SpaceArg::Perm => StructureSpace::permutation(self.v),
            SpaceArg::Match => Err(Error::InvalidArgument("matching data only comes from `gen`".into())),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    space: SpaceOpts,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Coordinate and descriptor noise for `--space match`.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "random")]
    method: String,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    /// Defaults to 1/n.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    eta0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `beta`, `theorem` or a fixed count.
    #[arg(long, default_value = "beta")]
    size_rule: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Random,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Training report or bare parameter vector.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    /// Proposal draws per sample; defaults to the size rule.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    all: bool,
    #[arg(long)]
    beta: bool,
    #[arg(long)]
    derangements: bool,
    #[arg(long)]
    change_of_measure: bool,
    #[arg(long)]
    low_norm: bool,
    #[arg(long)]
    ordering: bool,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    space: SpaceOpts,
    #[arg(long, default_value_t = 30)]
    reps: usize,
    #[arg(long, default_value_t = 100)]
    n_train: usize,
    #[arg(long, default_value_t = 100)]
    n_test: usize,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "beta")]
    size_rule: String,
    /// Full report with per-repetition rows.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::StepCapExceeded { .. } => Failure::Internal(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn parse_size_rule(text: &str) -> Result<ProposalSizeRule, Error> {
    match text {
        "beta" => Ok(ProposalSizeRule::BetaOnly),
        "theorem" => Ok(ProposalSizeRule::Theorem { norm_floor: 1.0 }),
        n => n
            .parse::<usize>()
            .ok()
            .filter(|&s| s > 0)
            .map(|size| ProposalSizeRule::Fixed { size })
            .ok_or_else(|| Error::Parse(format!("size rule must be beta, theorem or a positive count, got {n:?}"))),
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => write_json(path, value)?,
        None => println!("{}", to_json(value)?),
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelParams, ProposalSizeRule), Error> {
    if let Ok(report) = read_json::<TrainReport>(path) {
        return Ok((report.w_final, report.config.size_rule));
    }
    Ok((read_json::<ModelParams>(path)?, ProposalSizeRule::default()))
}

fn gen(args: GenArgs) -> Outcome {
    let ds = match args.space.space {
        SpaceArg::Match => generate_matching(args.space.v, args.n, args.noise, args.seed)?,
        _ => generate_synthetic(&args.space.space()?, args.n, args.seed)?,
    };
    write_json(&args.out, &ds)?;
    eprintln!("wrote {} samples of {} to {}", ds.len(), ds.space.label(), args.out.display());
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Outcome {
    let ds: Dataset = read_json(&args.input)?;
    let mut config = TrainConfig::new(Method::parse(&args.method)?)
        .with_seed(args.seed)
        .with_iterations(args.iters)
        .with_size_rule(parse_size_rule(&args.size_rule)?);
    config.eta0 = args.eta0;
    config.lambda = args.lambda;
    let report = train(&ds.samples, &ds.space, &ds.map, &config)?;
    write_json(&args.out, &report)?;
    eprintln!(
        "{}: objective {:.6} -> {:.6}, {:.3}s",
        report.method.name(),
        report.objective_trace.first().copied().unwrap_or(f64::NAN),
        report.objective_trace.last().copied().unwrap_or(f64::NAN),
        report.wall_time
    );
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    y_hat: String,
    h_hat: usize,
    score: f64,
    distortion: f64,
    search_size: u64,
}

#[derive(Serialize)]
struct InferReport {
    mode: &'static str,
    mean_distortion: f64,
    predictions: Vec<Prediction>,
}

fn infer(args: InferArgs) -> Outcome {
    let ds: Dataset = read_json(&args.input)?;
    let (w, rule) = load_model(&args.model)?;
    let size = match args.draws {
        Some(0) => return Err(Failure::Validation("--draws must be positive".into())),
        Some(d) => d,
        None => rule.size(ds.space.beta_constant()?, ds.map.gamma(), w.l2(), ds.len())?,
    };
    let mut predictions = Vec::with_capacity(ds.len());
    for (i, s) in ds.samples.iter().enumerate() {
        let d = match args.mode {
            Mode::Exact => exact_decode(&w, &s.x, &ds.space, &ds.map)?,
            Mode::Random => {
                let set = build_proposal_set(&w, &s.x, &ds.space, &ds.map, size, derive_seed(args.seed, &[i as u64]))?;
                random_decode(&w, &s.x, &ds.space, &set, &ds.map)?
            }
        };
        predictions.push(Prediction {
            y_hat: ds.space.format_output(&d.point.output),
            h_hat: d.point.latent.0,
            score: d.score,
            distortion: ds.space.distortion(&s.y, &d.point.output, d.point.latent)?,
            search_size: d.search_size,
        });
    }
    let mean_distortion = predictions.iter().map(|p| p.distortion).sum::<f64>() / predictions.len().max(1) as f64;
    let mode = match args.mode {
        Mode::Exact => "exact",
        Mode::Random => "random",
    };
    eprintln!("{mode} decoding, mean distortion {mean_distortion:.4}");
    emit(&InferReport { mode, mean_distortion, predictions }, args.out.as_deref())
}

fn verify(args: VerifyArgs) -> Outcome {
    let any = args.beta || args.derangements || args.change_of_measure || args.low_norm || args.ordering;
    let all = args.all || !any;
    let mut results: Vec<ClaimResult> = Vec::new();
    if all || args.beta {
        results.extend(verify_beta_all()?);
    }
    if all || args.derangements {
        results.extend(verify_derangements());
    }
    if all || args.change_of_measure {
        results.extend(verify_change_of_measure_all()?);
    }
    if all || args.low_norm {
        results.extend(verify_low_norm_all()?);
    }
    if all || args.ordering {
        results.extend(verify_ordering_all(args.trials, args.seed)?);
    }
    for r in &results {
        eprintln!("{:<4} {:<20} {}", if r.passes { "pass" } else { "FAIL" }, r.claim, r.instance);
    }
    let all_pass = results.iter().all(|r| r.passes);
    emit(&VerificationManifest { results, all_pass }, args.out.as_deref())?;
    if all_pass {
        Ok(())
    } else {
        Err(Failure::Validation("some claims failed".into()))
    }
}

fn bound(args: BoundArgs) -> Outcome {
    let ds: Dataset = read_json(&args.input)?;
    let (w, rule) = load_model(&args.model)?;
    let size = rule.size(ds.space.beta_constant()?, ds.map.gamma(), w.l2(), ds.len())?;
    let sets = ds
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| build_proposal_set(&w, &s.x, &ds.space, &ds.map, size, derive_seed(args.seed, &[1, i as u64])))
        .collect::<Result<Vec<_>, _>>()?;
    let report = bound_report(&w, &ds.samples, &ds.space, &ds.map, Some(&sets), args.delta, args.draws, args.seed)?;
    eprintln!(
        "gibbs {:.4} ± {:.4}, theorem 1 bound {:.4}",
        report.gibbs_mean, report.gibbs_stderr, report.t1_rhs
    );
    emit(&report, args.out.as_deref())
}

fn bench(args: BenchArgs) -> Outcome {
    let space = args.space.space()?;
    let mut config = ExperimentConfig::new(args.reps, args.n_train, args.n_test, args.seed);
    config.iterations = args.iters;
    config.size_rule = parse_size_rule(&args.size_rule)?;
    let report = run_experiment(&space, &config)?;
    print!("{}", results_table(&report.results));
    if let Some(path) = &args.csv {
        std::fs::write(path, results_csv(&report.results)?)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Internal(e.to_string()))?;
    }
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Train(a) => train_cmd(a),
        Command::Infer(a) => infer(a),
        Command::Verify(a) => verify(a),
        Command::Bound(a) => bound(a),
        Command::Bench(a) => bench(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Failure::Validation(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Ok(Err(Failure::Internal(msg))) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
