use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lazyreg::bench::{run_bench, BenchConfig};
use lazyreg::numfmt::significant;
use lazyreg::{
    generate_synthetic, parse_libsvm, train, train_dense, Algo, Dataset, Error, IndexBase,
    LinearModel, RegConfig, Schedule, ScheduleKind, TrainOptions,
};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "lazyreg", version, about = "Sparse logistic regression with lazy elastic-net updates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it to --out.
    Train {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        config: TrainArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print one positive-class probability per input example.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
        index_base: u8,
    },
    /// Train lazily and densely with the same seed and compare weights.
    Verify {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        config: TrainArgs,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Time lazy, dense and dense-with-sparse-predictions training.
    Bench {
        #[arg(long, default_value_t = BenchConfig::default().n)]
        n: usize,
        #[arg(long, default_value_t = BenchConfig::default().d)]
        d: usize,
        #[arg(long, default_value_t = BenchConfig::default().p)]
        p: usize,
        #[arg(long, default_value_t = BenchConfig::default().weight_sparsity)]
        weight_sparsity: f64,
        #[arg(long, default_value_t = BenchConfig::default().epochs)]
        epochs: usize,
        /// Rounds per variant; the fastest timed block is reported.
        #[arg(long, default_value_t = BenchConfig::default().repeats)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = BenchConfig::default().lambda1)]
        l1: f64,
        #[arg(long, default_value_t = BenchConfig::default().lambda2)]
        l2: f64,
        #[arg(long, default_value_t = BenchConfig::default().eta0)]
        eta0: f64,
        #[arg(long, value_enum, default_value_t = ScheduleArg::Invsqrt)]
        schedule: ScheduleArg,
        /// Also print machine-readable key=value lines.
        #[arg(long)]
        kv: bool,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long)]
    data: PathBuf,
    /// Dimensionality; inferred from the data when omitted.
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    index_base: u8,
}

/// A libsvm file, or a synthetic dataset when --data is absent.
#[derive(Args)]
struct SourceArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(0..=1))]
    index_base: u8,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    d: usize,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 0.05)]
    weight_sparsity: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum, default_value_t = AlgoArg::Sgd)]
    algo: AlgoArg,
    #[arg(long, default_value_t = 0.0)]
    l1: f64,
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    #[arg(long, default_value_t = 0.1)]
    eta0: f64,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Invsqrt)]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    /// Maximum steps between flushes; defaults to one epoch.
    #[arg(long)]
    flush_budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Sgd,
    Fobos,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Constant,
    Inv,
    Invsqrt,
}

impl From<ScheduleArg> for ScheduleKind {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Constant => ScheduleKind::Constant,
            ScheduleArg::Inv => ScheduleKind::InverseT,
            ScheduleArg::Invsqrt => ScheduleKind::InverseSqrtT,
        }
    }
}

impl TrainArgs {
    fn resolve(&self) -> Result<(RegConfig, Schedule, TrainOptions), Error> {
        let algo = match self.algo {
            AlgoArg::Sgd => Algo::Sgd,
            AlgoArg::Fobos => Algo::Fobos,
        };
        let reg = RegConfig::new(algo, self.l1, self.l2)?;
        let sched = Schedule::new(self.schedule.into(), self.eta0)?;
        reg.validate(&sched)?;
        if self.flush_budget == Some(0) {
            return Err(Error::InvalidConfig("--flush-budget must be positive".into()));
        }
        let opts = TrainOptions {
            epochs: self.epochs,
            flush_budget: self.flush_budget,
            seed: self.seed,
        };
        Ok((reg, sched, opts))
    }
}

fn index_base(b: u8) -> IndexBase {
    if b == 0 {
        IndexBase::Zero
    } else {
        IndexBase::One
    }
}

fn load(path: &Path, base: u8, dims: Option<usize>) -> Result<Dataset, Error> {
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file), index_base(base), dims)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parse { .. } | Error::DimensionMismatch { .. } | Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn cmd_train(input: &InputArgs, config: &TrainArgs, out: &Path) -> Result<u8, Error> {
    let (reg, sched, opts) = config.resolve()?;
    let data = load(&input.data, input.index_base, input.dims)?;
    let (model, report) = train(&data, &reg, &sched, &opts)?;
    let mut w = BufWriter::new(File::create(out)?);
    model.write(&mut w)?;
    w.flush()?;
    println!(
        "epochs={} final_loss={} nonzeros={} per_example_seconds={:e} flush_count={}",
        report.epochs_run,
        significant(report.final_loss, 12),
        report.nonzero_weights,
        report.per_example_seconds,
        report.flush_count
    );
    Ok(0)
}

fn cmd_predict(model: &Path, data: &Path, base: u8) -> Result<u8, Error> {
    let model = LinearModel::read(BufReader::new(File::open(model)?))?;
    let data = load(data, base, None)?;
    let mut lines = String::new();
    for x in data.examples() {
        lines.push_str(&significant(model.predict(x)?, 9));
        lines.push('\n');
    }
    let stdout = io::stdout();
    let mut out = stdout.lock();
    out.write_all(lines.as_bytes())?;
    Ok(0)
}

fn cmd_verify(source: &SourceArgs, config: &TrainArgs, tolerance: f64) -> Result<u8, Error> {
    let (reg, sched, opts) = config.resolve()?;
    let data = match &source.data {
        Some(path) => load(path, source.index_base, source.dims)?,
        None => {
            if source.p == 0 || source.p > source.d {
                return Err(Error::InvalidConfig("need 1 <= p <= d".into()));
            }
            if !(0.0..=1.0).contains(&source.weight_sparsity) {
                return Err(Error::InvalidConfig("--weight-sparsity must lie in [0, 1]".into()));
            }
            generate_synthetic(source.n, source.d, source.p, source.weight_sparsity, config.seed).dataset
        }
    };
    let (lazy, _) = train(&data, &reg, &sched, &opts)?;
    let (dense, _) = train_dense(&data, &reg, &sched, &opts, true)?;
    let (linf, l1) = lazy
        .weights()
        .iter()
        .zip(dense.weights())
        .map(|(a, b)| (a - b).abs())
        .fold((0.0f64, 0.0f64), |(m, s), d| (m.max(d), s + d));
    let pass = linf <= tolerance;
    println!(
        "linf={linf:e} l1={l1:e} tolerance={tolerance:e} status={}",
        if pass { "pass" } else { "fail" }
    );
    Ok(if pass { 0 } else { EXIT_VERIFY_FAILED })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { input, config, out } => cmd_train(input, config, out),
        Command::Predict {
            model,
            data,
            index_base,
        } => cmd_predict(model, data, *index_base),
        Command::Verify {
            source,
            config,
            tolerance,
        } => cmd_verify(source, config, *tolerance),
        Command::Bench {
            n,
            d,
            p,
            weight_sparsity,
            epochs,
            repeats,
            seed,
            l1,
            l2,
            eta0,
            schedule,
            kv,
        } => {
            let cfg = BenchConfig {
                n: *n,
                d: *d,
                p: *p,
                weight_sparsity: *weight_sparsity,
                epochs: *epochs,
                repeats: *repeats,
                seed: *seed,
                lambda1: *l1,
                lambda2: *l2,
                eta0: *eta0,
                schedule: (*schedule).into(),
            };
            run_bench(&cfg).map(|report| {
                print!("{report}");
                if *kv {
                    print!("{}", report.key_values());
                }
                0
            })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("lazyreg: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
