//! Per-example training latency of the lazy trainer against both dense
//! baselines on one synthetic dataset.
//!
//! The three variants take turns for `repeats` rounds. In each round a variant
//! runs one untimed warmup epoch, then timed blocks of `epochs` epochs until a
//! tenth of a second has passed. The reported figure is the fastest block's
//! wall time over `n * epochs`, since interference only ever adds time. It includes the
//! prediction made while processing each example and the lazy trainer's
//! end-of-epoch flushes.

use std::fmt;
use std::time::Instant;

use crate::data::{generate_synthetic, Dataset, SparseExample};
use crate::error::{Error, Result};
use crate::lazy_reg::{Algo, RegConfig};
use crate::numfmt::significant;
use crate::schedule::{Schedule, ScheduleKind};
use crate::trainer::{DenseTrainer, EpochOrder, LazyTrainer};

/// Minimum timed wall time per variant per round.
pub const ROUND_SECONDS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub weight_sparsity: f64,
    pub epochs: usize,
    pub repeats: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta0: f64,
    pub schedule: ScheduleKind,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n: 5000,
            d: 100_000,
            p: 30,
            weight_sparsity: 0.01,
            epochs: 1,
            repeats: 5,
            seed: 0,
            lambda1: 1e-5,
            lambda2: 1e-4,
            eta0: 0.1,
            schedule: ScheduleKind::InverseSqrtT,
        }
    }
}

/// Per-example seconds for one algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub algo: Algo,
    pub lazy: f64,
    pub dense: f64,
    pub dense_sparse_predictions: f64,
}

impl BenchRow {
    pub fn speedup_vs_dense(&self) -> f64 {
        self.dense / self.lazy
    }

    pub fn speedup_vs_sparse_predictions(&self) -> f64 {
        self.dense_sparse_predictions / self.lazy
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub n: usize,
    pub d: usize,
    pub p_mean: f64,
    pub seed: u64,
    pub epochs: usize,
}

impl BenchReport {
    /// Stable `key=value` lines, one per row plus a metadata line.
    pub fn key_values(&self) -> String {
        let mut out = format!(
            "bench_meta n={} d={} p_mean={} seed={} epochs={}\n",
            self.n,
            self.d,
            significant(self.p_mean, 6),
            self.seed,
            self.epochs
        );
        for r in &self.rows {
            out.push_str(&format!(
                "bench algo={} lazy={:e} dense={:e} dense_sparse_predictions={:e} speedup_dense={} speedup_sparse_predictions={}\n",
                r.algo,
                r.lazy,
                r.dense,
                r.dense_sparse_predictions,
                significant(r.speedup_vs_dense(), 3),
                significant(r.speedup_vs_sparse_predictions(), 3),
            ));
        }
        out
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "Average seconds per example (n={}, d={}, p={}, seed={}, epochs={})",
            self.n,
            self.d,
            significant(self.p_mean, 6),
            self.seed,
            self.epochs
        )?;
        writeln!(
            f,
            "{:<6} {:>12} {:>12} {:>18} {:>10} {:>12}",
            "", "lazy", "dense", "dense+sparse-pred", "x dense", "x sparse-pred"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<6} {:>12.4e} {:>12.4e} {:>18.4e} {:>10} {:>12}",
                match r.algo {
                    Algo::Sgd => "SGD",
                    Algo::Fobos => "FoBoS",
                },
                r.lazy,
                r.dense,
                r.dense_sparse_predictions,
                significant(r.speedup_vs_dense(), 3),
                significant(r.speedup_vs_sparse_predictions(), 3),
            )?;
        }
        Ok(())
    }
}

trait Stepper {
    fn step(&mut self, x: &SparseExample) -> Result<()>;
    fn end_epoch(&mut self) -> Result<()>;
}

impl Stepper for LazyTrainer {
    fn step(&mut self, x: &SparseExample) -> Result<()> {
        self.sgd_step(x)
    }

    fn end_epoch(&mut self) -> Result<()> {
        if self.cache().base() != self.clock() {
            self.flush()?;
        }
        Ok(())
    }
}

impl Stepper for DenseTrainer {
    fn step(&mut self, x: &SparseExample) -> Result<()> {
        self.sgd_step(x)
    }

    fn end_epoch(&mut self) -> Result<()> {
        Ok(())
    }
}

/// A trainer with its own epoch order and its fastest timed block so far.
struct Timed<'a, T> {
    trainer: T,
    order: EpochOrder,
    data: &'a Dataset,
    best: f64,
}

impl<'a, T: Stepper> Timed<'a, T> {
    fn new(trainer: T, data: &'a Dataset, seed: u64) -> Self {
        Timed {
            trainer,
            order: EpochOrder::new(data.len(), seed),
            data,
            best: f64::INFINITY,
        }
    }

    fn epoch(&mut self) -> Result<()> {
        for &i in self.order.next_epoch() {
            self.trainer.step(&self.data.examples()[i])?;
        }
        self.trainer.end_epoch()
    }

    /// One untimed warmup epoch, then timed blocks of `epochs` epochs until
    /// [`ROUND_SECONDS`] have passed (at least one block).
    fn round(&mut self, epochs: usize) -> Result<()> {
        self.epoch()?;
        let round = Instant::now();
        loop {
            let start = Instant::now();
            for _ in 0..epochs {
                self.epoch()?;
            }
            self.best = self.best.min(start.elapsed().as_secs_f64());
            if round.elapsed().as_secs_f64() >= ROUND_SECONDS {
                return Ok(());
            }
        }
    }

    fn per_example(&self, epochs: usize) -> f64 {
        (self.best / (self.data.len() * epochs) as f64).max(1e-12)
    }
}

/// Times the three variants of `reg.algo` on `data`.
///
/// The variants take turns over `repeats` rounds, so slow stretches of a
/// shared machine are spread across all of them rather than landing on
/// whichever ran at the time.
pub fn bench_algo(
    data: &Dataset,
    reg: &RegConfig,
    sched: &Schedule,
    epochs: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchRow> {
    if data.is_empty() || epochs == 0 || repeats == 0 {
        return Err(Error::InvalidConfig(
            "bench needs examples, at least one epoch and at least one repeat".into(),
        ));
    }
    let d = data.dims();
    let mut lazy = Timed::new(LazyTrainer::new(d, *reg, *sched, data.len() as u64)?, data, seed);
    let mut dense = Timed::new(DenseTrainer::new(d, *reg, *sched, false)?, data, seed);
    let mut sparse = Timed::new(DenseTrainer::new(d, *reg, *sched, true)?, data, seed);
    for _ in 0..repeats {
        lazy.round(epochs)?;
        dense.round(epochs)?;
        sparse.round(epochs)?;
    }
    Ok(BenchRow {
        algo: reg.algo,
        lazy: lazy.per_example(epochs),
        dense: dense.per_example(epochs),
        dense_sparse_predictions: sparse.per_example(epochs),
    })
}

/// Generates the dataset and times SGD and FoBoS rows sequentially.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.p == 0 || cfg.p > cfg.d {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= p <= d, got p = {}, d = {}",
            cfg.p, cfg.d
        )));
    }
    if !(0.0..=1.0).contains(&cfg.weight_sparsity) {
        return Err(Error::InvalidConfig("weight sparsity must lie in [0, 1]".into()));
    }
    let sched = Schedule::new(cfg.schedule, cfg.eta0)?;
    let data = generate_synthetic(cfg.n, cfg.d, cfg.p, cfg.weight_sparsity, cfg.seed).dataset;
    let rows = Algo::ALL
        .iter()
        .map(|&algo| {
            let reg = RegConfig::new(algo, cfg.lambda1, cfg.lambda2)?;
            bench_algo(&data, &reg, &sched, cfg.epochs, cfg.repeats, cfg.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        rows,
        n: data.len(),
        d: data.dims(),
        p_mean: data.p_mean(),
        seed: cfg.seed,
        epochs: cfg.epochs,
    })
}
