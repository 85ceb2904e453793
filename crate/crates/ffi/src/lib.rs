//! C interface to `lazyreg`.
//!
//! Every function returns an [`LrStatus`]; on failure a description is
//! available from [`lr_last_error_message`] on the same thread. Handles are
//! opaque, owned by the caller, and released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::ptr;
use std::slice;

use lazyreg::lazy_reg::lazy_update;
use lazyreg::schedule::Tables;
use lazyreg::{
    generate_synthetic, parse_libsvm, train, train_dense, Algo, Dataset, Error, IndexBase, Label,
    LinearModel, RegConfig, Schedule, ScheduleCache, ScheduleKind, SparseExample, Table,
    TrainOptions, TrainReport,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrStatus {
    Ok = 0,
    /// Null pointer, bad enum value, or a violated precondition.
    InvalidArgument = 1,
    InvalidConfig = 2,
    /// SGD with `eta * l2 >= 1`.
    InvalidRate = 3,
    OutOfRange = 4,
    TableNotMaintained = 5,
    Parse = 6,
    DimensionMismatch = 7,
    NonFinite = 8,
    Io = 9,
    /// A Rust panic was caught at the boundary.
    Internal = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrAlgo {
    Sgd = 0,
    Fobos = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant = 0,
    InverseT = 1,
    InverseSqrtT = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrTable {
    S = 0,
    P = 1,
    B = 2,
    Phi = 3,
    Beta = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrTrainConfig {
    pub algo: LrAlgo,
    pub lambda1: f64,
    pub lambda2: f64,
    pub eta0: f64,
    pub schedule: LrSchedule,
    pub epochs: u64,
    /// Maximum steps between flushes; 0 means one epoch.
    pub flush_budget: u64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LrTrainReport {
    pub epochs_run: u64,
    pub final_loss: f64,
    pub nonzero_weights: u64,
    pub per_example_seconds: f64,
    pub flush_count: u64,
    pub steps: u64,
}

pub struct LrDataset(Dataset);

pub struct LrModel(LinearModel);

pub struct LrCache(ScheduleCache);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(LrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidRate { .. } => LrStatus::InvalidRate,
            Error::OutOfRange { .. } => LrStatus::OutOfRange,
            Error::TableNotMaintained(_) => LrStatus::TableNotMaintained,
            Error::Parse { .. } => LrStatus::Parse,
            Error::DimensionMismatch { .. } => LrStatus::DimensionMismatch,
            Error::InvalidConfig(_) => LrStatus::InvalidConfig,
            Error::NonFinite(_) => LrStatus::NonFinite,
            Error::Io(_) => LrStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LrStatus::InvalidArgument, msg.into())
}

fn set_error(msg: &str) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LrStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LrStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {msg}"));
            LrStatus::Internal
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn get_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(format!("{name} is null")))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(invalid(format!("{name} is null")));
    }
    out.write(value);
    Ok(())
}

unsafe fn c_path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid("path is null"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))
}

unsafe fn array<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    match (p.is_null(), len) {
        (_, 0) => Ok(&[]),
        (true, _) => Err(invalid(format!("{name} is null"))),
        (false, _) => Ok(slice::from_raw_parts(p, len)),
    }
}

fn index_base(base: u32) -> Result<IndexBase, Failure> {
    match base {
        0 => Ok(IndexBase::Zero),
        1 => Ok(IndexBase::One),
        _ => Err(invalid(format!("index base must be 0 or 1, got {base}"))),
    }
}

fn dims_opt(dims: usize) -> Option<usize> {
    (dims > 0).then_some(dims)
}

impl From<LrAlgo> for Algo {
    fn from(a: LrAlgo) -> Self {
        match a {
            LrAlgo::Sgd => Algo::Sgd,
            LrAlgo::Fobos => Algo::Fobos,
        }
    }
}

impl From<LrSchedule> for ScheduleKind {
    fn from(s: LrSchedule) -> Self {
        match s {
            LrSchedule::Constant => ScheduleKind::Constant,
            LrSchedule::InverseT => ScheduleKind::InverseT,
            LrSchedule::InverseSqrtT => ScheduleKind::InverseSqrtT,
        }
    }
}

impl From<LrTable> for Table {
    fn from(t: LrTable) -> Self {
        match t {
            LrTable::S => Table::S,
            LrTable::P => Table::P,
            LrTable::B => Table::B,
            LrTable::Phi => Table::Phi,
            LrTable::Beta => Table::Beta,
        }
    }
}

impl From<&TrainReport> for LrTrainReport {
    fn from(r: &TrainReport) -> Self {
        LrTrainReport {
            epochs_run: r.epochs_run as u64,
            final_loss: r.final_loss,
            nonzero_weights: r.nonzero_weights as u64,
            per_example_seconds: r.per_example_seconds,
            flush_count: r.flush_count as u64,
            steps: r.steps,
        }
    }
}

impl LrTrainConfig {
    fn resolve(&self) -> Result<(RegConfig, Schedule, TrainOptions), Failure> {
        let reg = RegConfig::new(self.algo.into(), self.lambda1, self.lambda2)?;
        let sched = Schedule::new(self.schedule.into(), self.eta0)?;
        reg.validate(&sched)?;
        let opts = TrainOptions {
            epochs: usize::try_from(self.epochs).map_err(|_| invalid("epochs too large"))?,
            flush_budget: (self.flush_budget > 0).then_some(self.flush_budget),
            seed: self.seed,
        };
        Ok((reg, sched, opts))
    }
}

/// Message for the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next `lr_` call on the same thread.
#[no_mangle]
pub extern "C" fn lr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// SGD, no regularization, eta0 = 0.1, 1/sqrt(1+t) schedule, one epoch,
/// per-epoch flushes, seed 0.
#[no_mangle]
pub extern "C" fn lr_train_config_default() -> LrTrainConfig {
    LrTrainConfig {
        algo: LrAlgo::Sgd,
        lambda1: 0.0,
        lambda2: 0.0,
        eta0: 0.1,
        schedule: LrSchedule::InverseSqrtT,
        epochs: 1,
        flush_budget: 0,
        seed: 0,
    }
}

/// Reads a libsvm file. `dims` = 0 infers the dimensionality.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_read_libsvm(
    path: *const c_char,
    index_base: u32,
    dims: usize,
    out: *mut *mut LrDataset,
) -> LrStatus {
    guard(|| {
        let file = File::open(c_path(path)?).map_err(Error::from)?;
        let data = parse_libsvm(BufReader::new(file), self::index_base(index_base)?, dims_opt(dims))?;
        put(out, Box::into_raw(Box::new(LrDataset(data))), "out")
    })
}

/// Parses libsvm text from a buffer of `len` bytes.
///
/// # Safety
/// `text` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_parse_libsvm(
    text: *const u8,
    len: usize,
    index_base: u32,
    dims: usize,
    out: *mut *mut LrDataset,
) -> LrStatus {
    guard(|| {
        let bytes = array(text, len, "text")?;
        let data = parse_libsvm(bytes, self::index_base(index_base)?, dims_opt(dims))?;
        put(out, Box::into_raw(Box::new(LrDataset(data))), "out")
    })
}

/// Synthetic data: `n` examples over `d` features with exactly `p` nonzeros
/// each. When `true_weights` is non-null it receives the `d` generating weights.
///
/// # Safety
/// `out` must be writable; `true_weights`, if non-null, must hold `d` doubles.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_generate(
    n: usize,
    d: usize,
    p: usize,
    weight_sparsity: f64,
    seed: u64,
    true_weights: *mut f64,
    out: *mut *mut LrDataset,
) -> LrStatus {
    guard(|| {
        if p == 0 || p > d {
            return Err(invalid(format!("need 1 <= p <= d, got p = {p}, d = {d}")));
        }
        if !(0.0..=1.0).contains(&weight_sparsity) {
            return Err(invalid("weight_sparsity must lie in [0, 1]"));
        }
        if out.is_null() {
            return Err(invalid("out is null"));
        }
        let synth = generate_synthetic(n, d, p, weight_sparsity, seed);
        if !true_weights.is_null() {
            ptr::copy_nonoverlapping(synth.true_weights.as_ptr(), true_weights, d);
        }
        put(out, Box::into_raw(Box::new(LrDataset(synth.dataset))), "out")
    })
}

/// Appends one example; `label` > 0 is positive. Indices must be strictly
/// increasing and below the dataset's dimensionality.
///
/// # Safety
/// `data` must be a live handle; `indices` and `values` must hold `nnz` items.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_push(
    data: *mut LrDataset,
    indices: *const u32,
    values: *const f64,
    nnz: usize,
    label: i32,
) -> LrStatus {
    guard(|| {
        let data = get_mut(data, "data")?;
        let x = example(indices, values, nnz, label)?;
        Ok(data.0.push(x)?)
    })
}

unsafe fn example(indices: *const u32, values: *const f64, nnz: usize, label: i32) -> Result<SparseExample, Failure> {
    let indices = array(indices, nnz, "indices")?.to_vec();
    let values = array(values, nnz, "values")?.to_vec();
    let label = if label > 0 { Label::Positive } else { Label::Negative };
    Ok(SparseExample::new(indices, values, label)?)
}

/// An empty dataset over `dims` features, to be filled with [`lr_dataset_push`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_new(dims: usize, out: *mut *mut LrDataset) -> LrStatus {
    guard(|| {
        let data = Dataset::new(Vec::new(), dims)?;
        put(out, Box::into_raw(Box::new(LrDataset(data))), "out")
    })
}

/// # Safety
/// `data` must be a live handle; `n` and `d` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_shape(data: *const LrDataset, n: *mut usize, d: *mut usize) -> LrStatus {
    guard(|| {
        let data = get(data, "data")?;
        put(n, data.0.len(), "n")?;
        put(d, data.0.dims(), "d")
    })
}

/// # Safety
/// `data` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lr_dataset_free(data: *mut LrDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

unsafe fn run_training(
    data: *const LrDataset,
    config: *const LrTrainConfig,
    dense: Option<bool>,
    out_model: *mut *mut LrModel,
    out_report: *mut LrTrainReport,
) -> Result<(), Failure> {
    let data = get(data, "data")?;
    let (reg, sched, opts) = get(config, "config")?.resolve()?;
    if out_model.is_null() {
        return Err(invalid("out_model is null"));
    }
    let (model, report) = match dense {
        None => train(&data.0, &reg, &sched, &opts)?,
        Some(sparse_predictions) => train_dense(&data.0, &reg, &sched, &opts, sparse_predictions)?,
    };
    if !out_report.is_null() {
        out_report.write(LrTrainReport::from(&report));
    }
    put(out_model, Box::into_raw(Box::new(LrModel(model))), "out_model")
}

/// Trains with lazy regularization. `out_report` may be null.
///
/// # Safety
/// `data` and `config` must be valid; `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn lr_train(
    data: *const LrDataset,
    config: *const LrTrainConfig,
    out_model: *mut *mut LrModel,
    out_report: *mut LrTrainReport,
) -> LrStatus {
    guard(|| run_training(data, config, None, out_model, out_report))
}

/// Trains the dense reference, regularizing every weight on every step.
///
/// # Safety
/// As [`lr_train`].
#[no_mangle]
pub unsafe extern "C" fn lr_train_dense(
    data: *const LrDataset,
    config: *const LrTrainConfig,
    sparse_predictions: bool,
    out_model: *mut *mut LrModel,
    out_report: *mut LrTrainReport,
) -> LrStatus {
    guard(|| run_training(data, config, Some(sparse_predictions), out_model, out_report))
}

/// Positive-class probability for one sparse example.
///
/// # Safety
/// `model` must be live; `indices`/`values` must hold `nnz` items; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lr_model_predict(
    model: *const LrModel,
    indices: *const u32,
    values: *const f64,
    nnz: usize,
    out: *mut f64,
) -> LrStatus {
    guard(|| {
        let model = get(model, "model")?;
        let x = example(indices, values, nnz, 1)?;
        put(out, model.0.predict(&x)?, "out")
    })
}

/// # Safety
/// `model` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lr_model_dims(model: *const LrModel, out: *mut usize) -> LrStatus {
    guard(|| put(out, get(model, "model")?.0.dims(), "out"))
}

/// Copies the weights into `buf`, which must hold `len` >= dims doubles.
///
/// # Safety
/// `model` must be live; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn lr_model_weights(model: *const LrModel, buf: *mut f64, len: usize) -> LrStatus {
    guard(|| {
        let w = get(model, "model")?.0.weights();
        if len < w.len() {
            return Err(invalid(format!("buffer holds {len} weights, model has {}", w.len())));
        }
        if buf.is_null() && !w.is_empty() {
            return Err(invalid("buf is null"));
        }
        ptr::copy_nonoverlapping(w.as_ptr(), buf, w.len());
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lr_model_read(path: *const c_char, out: *mut *mut LrModel) -> LrStatus {
    guard(|| {
        let file = File::open(c_path(path)?).map_err(Error::from)?;
        let model = LinearModel::read(BufReader::new(file))?;
        put(out, Box::into_raw(Box::new(LrModel(model))), "out")
    })
}

/// # Safety
/// `model` must be live; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lr_model_write(model: *const LrModel, path: *const c_char) -> LrStatus {
    guard(|| {
        let model = get(model, "model")?;
        let mut w = BufWriter::new(File::create(c_path(path)?).map_err(Error::from)?);
        model.0.write(&mut w)?;
        w.flush().map_err(Error::from)?;
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lr_model_free(model: *mut LrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// A schedule cache. Full caches require `eta0 * lambda2 < 1`; with
/// `proximal_only` the P and B tables are not kept and that limit is lifted.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lr_cache_new(
    schedule: LrSchedule,
    eta0: f64,
    lambda2: f64,
    proximal_only: bool,
    out: *mut *mut LrCache,
) -> LrStatus {
    guard(|| {
        let sched = Schedule::new(schedule.into(), eta0)?;
        let tables = if proximal_only { Tables::ProximalOnly } else { Tables::Full };
        if tables == Tables::Full && eta0 * lambda2 >= 1.0 {
            // Every schedule peaks at step 0, so this is the only step to check.
            return Err(Error::InvalidRate { step: 0, product: eta0 * lambda2 }.into());
        }
        let cache = ScheduleCache::with_tables(sched, lambda2, tables)?;
        put(out, Box::into_raw(Box::new(LrCache(cache))), "out")
    })
}

/// Fills rows through step `t`.
///
/// # Safety
/// `cache` must be live.
#[no_mangle]
pub unsafe extern "C" fn lr_cache_extend(cache: *mut LrCache, t: i64) -> LrStatus {
    guard(|| {
        let cache = get_mut(cache, "cache")?;
        if t < cache.0.base() as i64 - 1 {
            return Err(invalid(format!("step {t} precedes the cache base {}", cache.0.base())));
        }
        Ok(cache.0.extend_to(t)?)
    })
}

/// Drops all rows and restarts the tables at `new_base`.
///
/// # Safety
/// `cache` must be live.
#[no_mangle]
pub unsafe extern "C" fn lr_cache_rebase(cache: *mut LrCache, new_base: u64) -> LrStatus {
    guard(|| {
        let cache = get_mut(cache, "cache")?;
        if new_base < cache.0.base() {
            return Err(invalid(format!("rebase to {new_base} precedes base {}", cache.0.base())));
        }
        cache.0.rebase(new_base);
        Ok(())
    })
}

/// # Safety
/// `cache` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lr_cache_lookup(cache: *const LrCache, table: LrTable, t: i64, out: *mut f64) -> LrStatus {
    guard(|| {
        let value = get(cache, "cache")?.0.lookup(table.into(), t)?;
        put(out, value, "out")
    })
}

/// Brings a weight last made current at step `psi` up to step `k`, reading
/// `cache`, which must have been built with the same `lambda2`.
///
/// # Safety
/// `cache` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lr_lazy_update(
    w: f64,
    psi: u64,
    k: u64,
    algo: LrAlgo,
    lambda1: f64,
    lambda2: f64,
    cache: *const LrCache,
    out: *mut f64,
) -> LrStatus {
    guard(|| {
        let cache = get(cache, "cache")?;
        if !w.is_finite() {
            return Err(invalid(format!("weight {w} is not finite")));
        }
        if psi > k {
            return Err(invalid(format!("timestamp {psi} is ahead of step {k}")));
        }
        if lambda2 != cache.0.lambda2() {
            return Err(Failure(
                LrStatus::InvalidConfig,
                format!("lambda2 {lambda2} differs from the cache's {}", cache.0.lambda2()),
            ));
        }
        let cfg = RegConfig::new(algo.into(), lambda1, lambda2)?;
        if cfg.cache_tables() == Tables::Full && cache.0.tables() == Tables::ProximalOnly {
            return Err(Failure(LrStatus::TableNotMaintained, "SGD needs a full cache".into()));
        }
        put(out, lazy_update(w, psi, k, &cfg, &cache.0)?, "out")
    })
}

/// # Safety
/// `cache` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lr_cache_free(cache: *mut LrCache) {
    if !cache.is_null() {
        drop(Box::from_raw(cache));
    }
}
