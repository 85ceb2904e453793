//! Logistic-regression trainers.
//!
//! [`LazyTrainer`] touches only the nonzero features of each example. Every
//! coordinate `j` carries a timestamp `psi[j]`: its weight includes the loss
//! gradient of step `psi[j]` (if it was touched then) and the regularization
//! of all steps strictly before `psi[j]`. Regularization for steps
//! `psi[j]..k` is applied in one closed-form update when `j` is next touched
//! at step `k`, or at a flush.
//!
//! [`DenseTrainer`] is the baseline: it regularizes all `d` coordinates at
//! the end of every step. Both perform the same per-coordinate arithmetic up
//! to grouping, so their weights agree to rounding.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, LinearModel, SparseExample};
use crate::error::{Error, Result};
use crate::lazy_reg::{lazy_update, prox_shrink, sgd_shrink, Algo, Kernel, RegConfig};
use crate::schedule::{CacheRow, Schedule, ScheduleCache};

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Derivative of the logistic loss `ln(1 + e^(-y m))` with respect to the margin `m`.
#[inline]
fn loss_slope(margin: f64, y: f64) -> f64 {
    -y * sigmoid(-y * margin)
}

/// Mean logistic loss plus `l1 |w|_1 + (l2 / 2) |w|_2^2`.
pub fn objective(data: &Dataset, weights: &[f64], reg: &RegConfig) -> f64 {
    let loss = if data.is_empty() {
        0.0
    } else {
        let total: f64 = data
            .examples()
            .iter()
            .map(|x| softplus(-x.label().sign() * x.dot(weights)))
            .sum();
        total / data.len() as f64
    };
    let l1: f64 = weights.iter().map(|w| w.abs()).sum();
    let l2: f64 = weights.iter().map(|w| w * w).sum();
    loss + reg.lambda1 * l1 + 0.5 * reg.lambda2 * l2
}

/// A weight and its timestamp, stored together so a touch costs one cache line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Slot {
    weight: f64,
    stamp: u64,
}

/// Training state for the lazy algorithm.
#[derive(Debug, Clone)]
pub struct LazyTrainer {
    slots: Vec<Slot>,
    clock: u64,
    cache: ScheduleCache,
    reg: RegConfig,
    kernel: Kernel,
    schedule: Schedule,
    flush_budget: u64,
    flushes: usize,
    touches: u64,
}

impl LazyTrainer {
    /// Zero-initialized trainer over `dims` features that flushes at least
    /// every `flush_budget` steps.
    pub fn new(dims: usize, reg: RegConfig, schedule: Schedule, flush_budget: u64) -> Result<Self> {
        if flush_budget == 0 {
            return Err(Error::InvalidConfig("flush budget must be positive".into()));
        }
        Ok(LazyTrainer {
            slots: vec![Slot::default(); dims],
            clock: 0,
            cache: reg.cache(schedule)?,
            reg,
            kernel: Kernel::of(&reg),
            schedule,
            flush_budget,
            flushes: 0,
            touches: 0,
        })
    }

    pub fn dims(&self) -> usize {
        self.slots.len()
    }

    /// Stored value of weight `j`, which may lag the clock.
    pub fn weight(&self, j: usize) -> f64 {
        self.slots[j].weight
    }

    /// Step up to which weight `j`'s regularization has been applied.
    pub fn timestamp(&self, j: usize) -> u64 {
        self.slots[j].stamp
    }

    /// Copy of the stored weights.
    pub fn weights(&self) -> Vec<f64> {
        self.slots.iter().map(|s| s.weight).collect()
    }

    /// Global step counter: the index of the next step.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn cache(&self) -> &ScheduleCache {
        &self.cache
    }

    pub fn flush_count(&self) -> usize {
        self.flushes
    }

    /// Per-coordinate weight accesses so far.
    pub fn weight_touches(&self) -> u64 {
        self.touches
    }

    /// Coordinates with regularization still pending.
    pub fn pending(&self) -> usize {
        self.slots.iter().filter(|s| s.stamp < self.clock).count()
    }

    /// Applies the delayed regularization of steps `psi[j]..k` to `w[j]`.
    pub fn bring_current(&mut self, j: usize, k: u64) -> Result<f64> {
        assert!(k <= self.clock, "cannot bring current past the clock");
        let slot = &mut self.slots[j];
        slot.weight = lazy_update(slot.weight, slot.stamp, k, &self.reg, &self.cache)?;
        slot.stamp = k;
        Ok(slot.weight)
    }

    /// Positive-class probability; every feature of `x` must be current.
    pub fn predict(&self, x: &SparseExample) -> f64 {
        debug_assert!(x.iter().all(|(j, _)| self.slots[j].stamp == self.clock));
        sigmoid(x.iter().map(|(j, v)| self.slots[j].weight * v).sum())
    }

    /// One logistic-loss SGD step on `x`; its regularization is left pending.
    ///
    /// Bringing the touched weights current and accumulating the margin
    /// share one pass, and the row for step `t - 1` is read once.
    pub fn sgd_step(&mut self, x: &SparseExample) -> Result<()> {
        let t = self.clock;
        let kernel = self.kernel;
        let lambda1 = self.reg.lambda1;
        let end = if t > 0 && kernel != Kernel::Identity {
            self.cache.row(t as i64 - 1)?
        } else {
            CacheRow::ORIGIN
        };
        let mut margin = -0.0;
        for (&j, &v) in x.indices().iter().zip(x.values()) {
            let slot = &mut self.slots[j as usize];
            if slot.stamp != t && slot.weight != 0.0 && kernel != Kernel::Identity {
                let start = self.cache.row(slot.stamp as i64 - 1)?;
                slot.weight = kernel.apply(slot.weight, &start, &end, lambda1);
            }
            slot.stamp = t;
            margin += slot.weight * v;
        }
        let slope = loss_slope(margin, x.label().sign());
        let eta = self.schedule.eta(t);
        for (&j, &v) in x.indices().iter().zip(x.values()) {
            let slot = &mut self.slots[j as usize];
            let w = slot.weight - eta * slope * v;
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("weight {j} at step {t}")));
            }
            slot.weight = w;
        }
        self.touches += 2 * x.nnz() as u64;
        self.clock = t + 1;
        self.cache.extend_to(t as i64)?;
        if self.cache.needs_rebase() || self.clock - self.cache.base() >= self.flush_budget {
            self.flush()?;
        }
        Ok(())
    }

    /// Brings every coordinate current and rebases the cache at the clock.
    pub fn flush(&mut self) -> Result<()> {
        let k = self.clock;
        if k > 0 && self.kernel != Kernel::Identity {
            let end = self.cache.row(k as i64 - 1)?;
            for slot in &mut self.slots {
                if slot.stamp < k && slot.weight != 0.0 {
                    let start = self.cache.row(slot.stamp as i64 - 1)?;
                    slot.weight = self.kernel.apply(slot.weight, &start, &end, self.reg.lambda1);
                }
            }
        }
        for slot in &mut self.slots {
            slot.stamp = k;
        }
        self.cache.rebase(k);
        self.flushes += 1;
        Ok(())
    }

    pub fn into_model(self) -> LinearModel {
        LinearModel::new(self.weights())
    }
}

/// Baseline that regularizes every coordinate on every step.
#[derive(Debug, Clone)]
pub struct DenseTrainer {
    weights: Vec<f64>,
    clock: u64,
    reg: RegConfig,
    schedule: Schedule,
    sparse_predictions: bool,
    dense_x: Vec<f64>,
    touches: u64,
}

impl DenseTrainer {
    pub fn new(dims: usize, reg: RegConfig, schedule: Schedule, sparse_predictions: bool) -> Result<Self> {
        reg.validate(&schedule)?;
        Ok(DenseTrainer {
            weights: vec![0.0; dims],
            clock: 0,
            reg,
            schedule,
            sparse_predictions,
            dense_x: if sparse_predictions { Vec::new() } else { vec![0.0; dims] },
            touches: 0,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn weight_touches(&self) -> u64 {
        self.touches
    }

    fn margin(&mut self, x: &SparseExample) -> f64 {
        if self.sparse_predictions {
            self.touches += x.nnz() as u64;
            return x.dot(&self.weights);
        }
        for (j, v) in x.iter() {
            self.dense_x[j] = v;
        }
        let m = self
            .weights
            .iter()
            .zip(&self.dense_x)
            .map(|(w, v)| w * v)
            .sum();
        for (j, _) in x.iter() {
            self.dense_x[j] = 0.0;
        }
        self.touches += self.weights.len() as u64;
        m
    }

    pub fn predict(&mut self, x: &SparseExample) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn sgd_step(&mut self, x: &SparseExample) -> Result<()> {
        let t = self.clock;
        let margin = self.margin(x);
        let slope = loss_slope(margin, x.label().sign());
        let eta = self.schedule.eta(t);
        for (j, v) in x.iter() {
            let w = self.weights[j] - eta * slope * v;
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("weight {j} at step {t}")));
            }
            self.weights[j] = w;
        }
        let (l1, l2) = (eta * self.reg.lambda1, eta * self.reg.lambda2);
        match self.reg.algo {
            Algo::Sgd => {
                let shrink = 1.0 - l2;
                if shrink <= 0.0 {
                    return Err(Error::InvalidRate { step: t, product: l2 });
                }
                for w in &mut self.weights {
                    *w = sgd_shrink(*w, shrink, l1);
                }
            }
            Algo::Fobos => {
                let scale = 1.0 + l2;
                for w in &mut self.weights {
                    *w = prox_shrink(*w, l1, scale);
                }
            }
        }
        self.touches += (x.nnz() + self.weights.len()) as u64;
        self.clock = t + 1;
        Ok(())
    }

    pub fn into_model(self) -> LinearModel {
        LinearModel::new(self.weights)
    }
}

/// Epoch count, flush budget and shuffling seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub epochs: usize,
    /// Maximum steps between flushes; `None` means one epoch.
    pub flush_budget: Option<u64>,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 1,
            flush_budget: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Regularized objective over the training set at the final weights.
    pub final_loss: f64,
    pub nonzero_weights: usize,
    /// Training wall time divided by steps; floored at timer resolution.
    pub per_example_seconds: f64,
    pub flush_count: usize,
    pub steps: u64,
}

/// Seeded per-epoch permutations shared by every trainer variant.
#[derive(Debug, Clone)]
pub struct EpochOrder {
    rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl EpochOrder {
    pub fn new(n: usize, seed: u64) -> Self {
        EpochOrder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
        }
    }

    pub fn next_epoch(&mut self) -> &[usize] {
        self.order.shuffle(&mut self.rng);
        &self.order
    }
}

const TIMER_FLOOR: f64 = 1e-9;

fn check_inputs(data: &Dataset, reg: &RegConfig, sched: &Schedule) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    reg.validate(sched)
}

/// Trains with lazy regularization updates.
pub fn train(
    data: &Dataset,
    reg: &RegConfig,
    sched: &Schedule,
    opts: &TrainOptions,
) -> Result<(LinearModel, TrainReport)> {
    check_inputs(data, reg, sched)?;
    let budget = opts.flush_budget.unwrap_or(data.len() as u64);
    let mut trainer = LazyTrainer::new(data.dims(), *reg, *sched, budget)?;
    let mut order = EpochOrder::new(data.len(), opts.seed);
    let start = Instant::now();
    for _ in 0..opts.epochs {
        for &i in order.next_epoch() {
            trainer.sgd_step(&data.examples()[i])?;
        }
        if trainer.cache().base() != trainer.clock() {
            trainer.flush()?;
        }
    }
    if opts.epochs == 0 {
        trainer.flush()?;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let steps = trainer.clock();
    let flush_count = trainer.flush_count();
    let model = trainer.into_model();
    let report = TrainReport {
        epochs_run: opts.epochs,
        final_loss: objective(data, model.weights(), reg),
        nonzero_weights: model.nonzeros(),
        per_example_seconds: (elapsed / steps.max(1) as f64).max(TIMER_FLOOR),
        flush_count,
        steps,
    };
    Ok((model, report))
}

/// Trains with eager regularization of all coordinates.
///
/// With `sparse_predictions` the margin uses only the example's nonzeros;
/// otherwise it is a full `d`-length dot product.
pub fn train_dense(
    data: &Dataset,
    reg: &RegConfig,
    sched: &Schedule,
    opts: &TrainOptions,
    sparse_predictions: bool,
) -> Result<(LinearModel, TrainReport)> {
    check_inputs(data, reg, sched)?;
    let mut trainer = DenseTrainer::new(data.dims(), *reg, *sched, sparse_predictions)?;
    let mut order = EpochOrder::new(data.len(), opts.seed);
    let start = Instant::now();
    for _ in 0..opts.epochs {
        for &i in order.next_epoch() {
            trainer.sgd_step(&data.examples()[i])?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let steps = trainer.clock();
    let model = trainer.into_model();
    let report = TrainReport {
        epochs_run: opts.epochs,
        final_loss: objective(data, model.weights(), reg),
        nonzero_weights: model.nonzeros(),
        per_example_seconds: (elapsed / steps.max(1) as f64).max(TIMER_FLOOR),
        flush_count: 0,
        steps,
    };
    Ok((model, report))
}
