mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use qpad::dataset::{self, Delimiter, Format};
use qpad::eval::{self, Method, RecallReport, RecallRow, SweepConfig, SweepGrid};
use qpad::optimizer::axis_eval_csv;
use qpad::selfcheck::{self, SelfcheckOptions};
use qpad::{fit_with, Dataset, Engine, FitDescriptor, FitOptions, ProjectionModel, QpadConfig, RpVariant, SplitSpec};

#[derive(Parser, Debug)]
#[command(name = "qpad", version, about = "Quantile-preserving linear dimension reduction", args_override_self = true)]
struct Cli {
    /// Worker threads. Falls back to QPAD_THREADS, then to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// key = value file of flag settings; explicit flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a QPAD projection and write the model file.
    Fit(FitArgs),
    /// Apply a saved model to a dataset.
    Transform(TransformArgs),
    /// Recall@k of a saved model or a random projection baseline.
    Evaluate(EvaluateArgs),
    /// Recall@k over a grid of DRR, k, alpha and b.
    Sweep(SweepArgs),
    /// Consistency checks on seeded synthetic data.
    Selfcheck(SelfcheckArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FormatArg {
    Fvecs,
    Bvecs,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DelimiterArg {
    Comma,
    Whitespace,
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
    /// Defaults to the file extension.
    #[arg(long)]
    format: Option<FormatArg>,
    /// CSV only: skip the first line.
    #[arg(long)]
    has_header: bool,
    #[arg(long, value_enum, default_value = "comma")]
    delimiter: DelimiterArg,
    /// Scale every nonzero row to unit length after loading.
    #[arg(long)]
    l2_normalize: bool,
    /// Keep a seeded random subset of this many columns.
    #[arg(long, value_name = "COUNT")]
    select_columns: Option<usize>,
    #[arg(long, default_value_t = 0)]
    column_seed: u64,
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Query file in the same format as the input. Without it, queries are
    /// held out from the input.
    #[arg(long, value_name = "PATH")]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    query_count: usize,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args, Debug)]
struct OptimizerArgs {
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    /// Relative to the data radius bound.
    #[arg(long, default_value_t = 1e-6)]
    grad_tol: f64,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    #[arg(long, default_value = "fast")]
    engine: Engine,
    /// Allow the naive engine above its size cap.
    #[arg(long)]
    force_naive: bool,
}

impl OptimizerArgs {
    fn template(&self) -> QpadConfig {
        QpadConfig {
            max_iters_per_axis: self.max_iters,
            grad_tol: self.grad_tol,
            restarts_per_axis: self.restarts,
            ..QpadConfig::default()
        }
    }

    fn options(&self) -> FitOptions {
        FitOptions { engine: self.engine, force_naive: self.force_naive, ..FitOptions::default() }
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Target dimension.
    #[arg(long)]
    m: usize,
    /// Percentage of smallest pairwise distances averaged.
    #[arg(long, default_value_t = 70.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    opt: OptimizerArgs,
    /// Fit only on the training part of a held-out split.
    #[arg(long, value_name = "COUNT")]
    holdout: Option<usize>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Write one iteration CSV per axis into this directory.
    #[arg(long, value_name = "DIR")]
    trace_dir: Option<PathBuf>,
    /// Write threshold, boundary count, B and mu per iteration as CSV.
    #[arg(long, value_name = "PATH")]
    dump_axis_eval: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TransformArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Output file; `.csv` writes text, anything else fvecs.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, value_name = "PATH", conflicts_with = "method")]
    model: Option<PathBuf>,
    /// Baseline to fit on the fly: rp, rp-gaussian or rp-sparse.
    #[arg(long)]
    method: Option<Method>,
    /// Baseline target dimension.
    #[arg(long, conflicts_with = "drr")]
    m: Option<usize>,
    /// Baseline target dimension as a share of the input dimension.
    #[arg(long)]
    drr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Leave the timing columns empty so reports are byte-reproducible.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_values_t = SweepGrid::reference().drr)]
    drr: Vec<f64>,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_values_t = SweepGrid::reference().k)]
    k: Vec<usize>,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_values_t = SweepGrid::reference().alpha)]
    alpha: Vec<f64>,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_values_t = SweepGrid::reference().b)]
    b: Vec<f64>,
    #[arg(long, action = ArgAction::Set, value_delimiter = ',', default_value = "qpad,rp-gaussian")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    opt: OptimizerArgs,
    /// Fits per cell; timings are the median.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// First/second place counts per method.
    #[arg(long, value_name = "PATH")]
    tally_out: Option<PathBuf>,
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args, Debug)]
struct SelfcheckArgs {
    /// Three instances per check.
    #[arg(long)]
    quick: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flip the gradient sign; the run must then fail.
    #[arg(long, hide = true)]
    selfcheck_sabotage: bool,
}

fn format_of(args: &InputArgs, path: &Path) -> Result<Format> {
    let kind = match args.format {
        Some(f) => f,
        None => match path.extension().and_then(|e| e.to_str()) {
            Some("fvecs") => FormatArg::Fvecs,
            Some("bvecs") => FormatArg::Bvecs,
            Some("csv") | Some("txt") => FormatArg::Csv,
            _ => bail!("cannot infer the format of {}; pass --format", path.display()),
        },
    };
    Ok(match kind {
        FormatArg::Fvecs => Format::Fvecs,
        FormatArg::Bvecs => Format::Bvecs,
        FormatArg::Csv => Format::Csv {
            has_header: args.has_header,
            delimiter: match args.delimiter {
                DelimiterArg::Comma => Delimiter::Comma,
                DelimiterArg::Whitespace => Delimiter::Whitespace,
            },
        },
    })
}

fn load(args: &InputArgs, path: &Path) -> Result<Dataset> {
    let mut ds = dataset::read_dataset(path, format_of(args, path)?)?;
    if let Some(c) = args.select_columns {
        ds = ds.select_columns(c, args.column_seed)?;
    }
    if args.l2_normalize {
        let (normed, zeros) = dataset::l2_normalize(&ds);
        if zeros > 0 {
            eprintln!("warning: {zeros} zero rows in {} left unnormalized", path.display());
        }
        ds = normed;
    }
    Ok(ds)
}

fn load_input(args: &InputArgs) -> Result<Dataset> {
    load(args, &args.input)
}

fn train_and_queries(input: &InputArgs, split: &SplitArgs) -> Result<(Dataset, Dataset)> {
    let ds = load_input(input)?;
    match &split.queries {
        Some(q) => Ok((ds, load(input, q)?)),
        None => {
            let s = dataset::split(&ds, SplitSpec { query_count: split.query_count, seed: split.split_seed })?;
            Ok((s.train, s.queries))
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let mut ds = load_input(&a.input)?;
    if let Some(q) = a.holdout {
        ds = dataset::split(&ds, SplitSpec { query_count: q, seed: a.split_seed })?.train;
    }
    let config = QpadConfig { m: a.m, b_percent: a.b, alpha: a.alpha, seed: a.seed, ..a.opt.template() };
    let t0 = Instant::now();
    let (model, traces) = fit_with(&ds, &config, &a.opt.options())?;
    let elapsed = t0.elapsed().as_secs_f64();
    model.save(&a.out)?;
    if let Some(dir) = &a.trace_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for (k, t) in traces.iter().enumerate() {
            write(&dir.join(format!("axis_{k}.csv")), &t.to_csv())?;
        }
    }
    if let Some(p) = &a.dump_axis_eval {
        write(p, &axis_eval_csv(&traces))?;
    }
    println!("m = {}, n = {}, N = {}", model.m(), model.n(), ds.len());
    for (k, t) in traces.iter().enumerate() {
        println!(
            "axis {k}: phi = {:.6e}, grad = {:.3e}, iterations = {}, {:?}",
            t.final_phi(),
            t.final_grad_norm(),
            t.iterations.len().saturating_sub(1),
            t.termination
        );
    }
    println!("wall time {elapsed:.3} s");
    Ok(())
}

fn cmd_transform(a: &TransformArgs) -> Result<()> {
    let model = ProjectionModel::load(&a.model)?;
    let ds = load_input(&a.input)?;
    let out = model.transform(&ds)?;
    if a.out.extension().and_then(|e| e.to_str()) == Some("csv") {
        dataset::write_csv(&a.out, &out)?;
    } else {
        dataset::write_fvecs(&a.out, &out)?;
    }
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let (train, queries) = train_and_queries(&a.input, &a.split)?;
    let t0 = Instant::now();
    let (model, method) = match (&a.model, a.method) {
        (Some(p), _) => {
            let model = ProjectionModel::load(p)?;
            let method = match model.fit() {
                FitDescriptor::Qpad { .. } => Method::Qpad,
                FitDescriptor::RandomProjection { variant: RpVariant::Gaussian, .. } => Method::RpGaussian,
                FitDescriptor::RandomProjection { variant: RpVariant::Sparse, .. } => Method::RpSparse,
            };
            (model, method)
        }
        (None, Some(Method::Qpad)) => bail!("--method qpad needs a fitted --model"),
        (None, Some(method)) => {
            let n = train.dim();
            let m = match (a.m, a.drr) {
                (Some(m), _) => m,
                (None, Some(d)) => eval::target_dim(d, n)?,
                (None, None) => bail!("a baseline needs --m or --drr"),
            };
            let variant = if method == Method::RpSparse { RpVariant::Sparse } else { RpVariant::Gaussian };
            (eval::random_projection_fit(n, m, a.seed, variant)?, method)
        }
        (None, None) => bail!("pass --model or --method"),
    };
    // a loaded model reports zero fit time
    let fit_seconds = if a.model.is_some() { 0.0 } else { t0.elapsed().as_secs_f64() };
    let k_max = a.k.iter().copied().max().unwrap_or(0);
    let truth = eval::exact_knn(&train, &queries, k_max)?;
    let (recalls, transform_seconds) = eval::evaluate_model(&model, &train, &queries, &truth, &a.k)?;
    let (alpha, b) = match model.fit() {
        FitDescriptor::Qpad { config, .. } => (Some(config.alpha), Some(config.b_percent)),
        FitDescriptor::RandomProjection { .. } => (None, None),
    };
    let report = RecallReport {
        rows: a
            .k
            .iter()
            .zip(recalls)
            .map(|(&k, r)| RecallRow {
                method,
                drr: model.m() as f64 / model.n() as f64,
                k,
                alpha,
                b,
                recall: Ok(r),
                fit_seconds,
                transform_seconds,
            })
            .collect(),
    };
    write(&a.out, &report.to_csv(!a.no_timings))?;
    for row in &report.rows {
        println!("{} recall@{} = {:.4}", row.method, row.k, row.recall.as_ref().unwrap());
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let (train, queries) = train_and_queries(&a.input, &a.split)?;
    let grid = SweepGrid { drr: a.drr.clone(), k: a.k.clone(), alpha: a.alpha.clone(), b: a.b.clone() };
    let cfg = SweepConfig {
        qpad: a.opt.template(),
        fit_options: a.opt.options(),
        repeats: a.repeats,
        ..SweepConfig::new(grid, a.methods.clone(), a.seed)
    };
    let out = eval::run_sweep(&train, &queries, &cfg)?;
    write(&a.out, &out.report.to_csv(!a.no_timings))?;
    if let Some(p) = &a.tally_out {
        write(p, &eval::tally_csv(&out.tally))?;
    }
    let failed = out.report.rows.iter().filter(|r| r.recall.is_err()).count();
    if failed > 0 {
        eprintln!("warning: {failed} report rows failed; see the recall column");
    }
    for t in &out.tally {
        println!("{}: first {}, second {}", t.method, t.wins_first, t.wins_second);
    }
    Ok(())
}

fn cmd_selfcheck(a: &SelfcheckArgs) -> Result<bool> {
    let results = selfcheck::run(SelfcheckOptions { quick: a.quick, sabotage: a.selfcheck_sabotage, seed: a.seed })?;
    for r in &results {
        println!(
            "{:<4}  {:<28} {:>3} instances  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.instances,
            r.detail
        );
    }
    Ok(results.iter().all(|r| r.passed))
}

fn init_pool(workers: Option<usize>) -> Result<()> {
    let n = match workers {
        Some(n) => Some(n),
        None => match std::env::var("QPAD_THREADS") {
            Ok(v) => Some(v.trim().parse().with_context(|| format!("QPAD_THREADS={v:?} is not a count"))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            bail!("worker count must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    init_pool(cli.workers)?;
    match &cli.command {
        Command::Fit(a) => cmd_fit(a)?,
        Command::Transform(a) => cmd_transform(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Sweep(a) => cmd_sweep(a)?,
        Command::Selfcheck(a) => {
            if !cmd_selfcheck(a)? {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

const SUBCOMMANDS: [&str; 5] = ["fit", "transform", "evaluate", "sweep", "selfcheck"];

/// Error chain on one line, skipping causes the outer message already
/// spells out.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let c = cause.to_string();
        if !msg.contains(&c) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&c);
        }
    }
    msg
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect(), &SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            return ExitCode::from(2);
        }
    };
    let cli = Cli::try_parse_from(args).unwrap_or_else(|e| e.exit());
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
