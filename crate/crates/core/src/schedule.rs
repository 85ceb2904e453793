//! Learning-rate schedules and the append-only prefix tables that make
//! every delayed regularization update a constant-time lookup.
//!
//! For a schedule `eta(t)` and an L2 strength `lambda2` the cache keeps, per
//! step `t` relative to its base:
//!
//! ```text
//! S(t)    = S(t-1) + eta(t)                       S(-1)    = 0
//! P(t)    = (1 - eta(t) * lambda2) * P(t-1)       P(-1)    = 1
//! B(t)    = B(t-1) + eta(t) / P(t)                B(-1)    = 0
//! Phi(t)  = Phi(t-1) / (1 + eta(t) * lambda2)     Phi(-1)  = 1
//! beta(t) = beta(t-1) + eta(t) / Phi(t-1)         beta(-1) = 0
//! ```
//!
//! Rates are always evaluated at the global step, so rebasing the tables
//! never changes the schedule itself.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// Once `P` or `Phi` falls below this value the owner should flush and rebase.
pub const UNDERFLOW_FLOOR: f64 = 1e-100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    /// `eta(t) = eta0`
    Constant,
    /// `eta(t) = eta0 / (1 + t)`
    InverseT,
    /// `eta(t) = eta0 / sqrt(1 + t)`
    InverseSqrtT,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [
        ScheduleKind::Constant,
        ScheduleKind::InverseT,
        ScheduleKind::InverseSqrtT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::InverseT => "inv",
            ScheduleKind::InverseSqrtT => "invsqrt",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "inv" => Ok(ScheduleKind::InverseT),
            "invsqrt" => Ok(ScheduleKind::InverseSqrtT),
            other => Err(Error::InvalidConfig(format!("unknown schedule {other:?}"))),
        }
    }
}

/// A non-increasing learning-rate rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    eta0: f64,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, eta0: f64) -> Result<Self> {
        if !(eta0.is_finite() && eta0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta0 must be positive and finite, got {eta0}"
            )));
        }
        Ok(Schedule { kind, eta0 })
    }

    pub fn constant(eta0: f64) -> Result<Self> {
        Schedule::new(ScheduleKind::Constant, eta0)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn eta0(&self) -> f64 {
        self.eta0
    }

    /// Learning rate at global step `t`.
    #[inline]
    pub fn eta(&self, t: u64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.eta0,
            ScheduleKind::InverseT => self.eta0 / (1.0 + t as f64),
            ScheduleKind::InverseSqrtT => self.eta0 / (1.0 + t as f64).sqrt(),
        }
    }
}

/// Names a column of the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Table {
    S,
    P,
    B,
    Phi,
    Beta,
}

impl Table {
    pub const ALL: [Table; 5] = [Table::S, Table::P, Table::B, Table::Phi, Table::Beta];
}

/// Which tables a cache maintains.
///
/// `P` and `B` only exist for SGD, where `1 - eta * lambda2` must stay
/// positive. FoBoS never reads them, so a proximal-only cache accepts any
/// `lambda2 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tables {
    Full,
    ProximalOnly,
}

/// One cached step: all five table values at the same index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheRow {
    pub s: f64,
    pub p: f64,
    pub b: f64,
    pub phi: f64,
    pub beta: f64,
}

impl CacheRow {
    /// Values at virtual index -1.
    pub const ORIGIN: CacheRow = CacheRow {
        s: 0.0,
        p: 1.0,
        b: 0.0,
        phi: 1.0,
        beta: 0.0,
    };

    pub fn get(&self, table: Table) -> f64 {
        match table {
            Table::S => self.s,
            Table::P => self.p,
            Table::B => self.b,
            Table::Phi => self.phi,
            Table::Beta => self.beta,
        }
    }
}

/// Append-only dynamic-programming tables over a schedule.
///
/// Indices passed to [`lookup`](Self::lookup) and [`extend_to`](Self::extend_to)
/// are global steps; the cache stores them relative to `base`, with global
/// step `base - 1` mapped to the virtual origin row.
#[derive(Debug)]
pub struct ScheduleCache {
    schedule: Schedule,
    lambda2: f64,
    tables: Tables,
    base: u64,
    rows: Vec<CacheRow>,
    lookups: AtomicU64,
}

impl Clone for ScheduleCache {
    fn clone(&self) -> Self {
        ScheduleCache {
            schedule: self.schedule,
            lambda2: self.lambda2,
            tables: self.tables,
            base: self.base,
            rows: self.rows.clone(),
            lookups: AtomicU64::new(self.lookups.load(Ordering::Relaxed)),
        }
    }
}

impl ScheduleCache {
    /// A cache maintaining all five tables.
    pub fn new(schedule: Schedule, lambda2: f64) -> Result<Self> {
        ScheduleCache::with_tables(schedule, lambda2, Tables::Full)
    }

    pub fn with_tables(schedule: Schedule, lambda2: f64, tables: Tables) -> Result<Self> {
        if !(lambda2.is_finite() && lambda2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda2 must be non-negative and finite, got {lambda2}"
            )));
        }
        Ok(ScheduleCache {
            schedule,
            lambda2,
            tables,
            base: 0,
            rows: Vec::new(),
            lookups: AtomicU64::new(0),
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    pub fn tables(&self) -> Tables {
        self.tables
    }

    /// Global step treated as relative index 0.
    pub fn base(&self) -> u64 {
        self.base
    }

    /// Largest cached relative index, `-1` when empty.
    pub fn high_water(&self) -> i64 {
        self.rows.len() as i64 - 1
    }

    /// Largest cached global step, `base - 1` when empty.
    pub fn last_step(&self) -> i64 {
        self.base as i64 + self.high_water()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Populates every table through global step `t`.
    ///
    /// Appends exactly `t - last_step()` rows; a no-op when already populated.
    pub fn extend_to(&mut self, t: i64) -> Result<()> {
        let base = self.base as i64;
        assert!(t >= base - 1, "extend_to({t}) precedes base - 1 = {}", base - 1);
        let target_len = (t - base + 1) as usize;
        if target_len <= self.rows.len() {
            return Ok(());
        }
        self.rows.reserve(target_len - self.rows.len());
        let mut prev = self.rows.last().copied().unwrap_or(CacheRow::ORIGIN);
        while self.rows.len() < target_len {
            let step = self.base + self.rows.len() as u64;
            let row = self.next_row(&prev, step)?;
            self.rows.push(row);
            prev = row;
        }
        Ok(())
    }

    fn next_row(&self, prev: &CacheRow, step: u64) -> Result<CacheRow> {
        let eta = self.schedule.eta(step);
        let decay = eta * self.lambda2;
        let (p, b) = match self.tables {
            Tables::Full => {
                let shrink = 1.0 - decay;
                if shrink <= 0.0 {
                    return Err(Error::InvalidRate {
                        step,
                        product: decay,
                    });
                }
                let p = shrink * prev.p;
                (p, prev.b + eta / p)
            }
            Tables::ProximalOnly => (f64::NAN, f64::NAN),
        };
        Ok(CacheRow {
            s: prev.s + eta,
            p,
            b,
            phi: prev.phi / (1.0 + decay),
            beta: prev.beta + eta / prev.phi,
        })
    }

    /// All table values at global step `t`, with `t = base - 1` giving the origin row.
    #[inline]
    pub fn row(&self, t: i64) -> Result<CacheRow> {
        // Plain load/store rather than an RMW: the counter is diagnostic and
        // concurrent readers may drop increments.
        self.lookups
            .store(self.lookups.load(Ordering::Relaxed) + 1, Ordering::Relaxed);
        let rel = t - self.base as i64;
        if rel == -1 {
            return Ok(CacheRow::ORIGIN);
        }
        match usize::try_from(rel).ok().and_then(|r| self.rows.get(r)) {
            Some(row) => Ok(*row),
            None => Err(Error::OutOfRange {
                step: t,
                lo: self.base as i64 - 1,
                hi: self.last_step(),
            }),
        }
    }

    pub fn lookup(&self, table: Table, t: i64) -> Result<f64> {
        if self.tables == Tables::ProximalOnly && matches!(table, Table::P | Table::B) {
            return Err(Error::TableNotMaintained(table));
        }
        self.row(t).map(|row| row.get(table))
    }

    /// Drops all rows and makes `new_base` the new relative origin.
    ///
    /// The caller must have brought every timestamp up to `new_base` first.
    pub fn rebase(&mut self, new_base: u64) {
        assert!(
            new_base >= self.base,
            "rebase to {new_base} precedes current base {}",
            self.base
        );
        self.rows.clear();
        self.base = new_base;
    }

    /// True once a decaying product has dropped below [`UNDERFLOW_FLOOR`].
    pub fn needs_rebase(&self) -> bool {
        match self.rows.last() {
            None => false,
            Some(row) => {
                row.phi < UNDERFLOW_FLOOR
                    || (self.tables == Tables::Full && row.p < UNDERFLOW_FLOOR)
            }
        }
    }

    /// Number of row reads served so far.
    pub fn lookups(&self) -> u64 {
        self.lookups.load(Ordering::Relaxed)
    }

    pub fn reset_lookups(&self) {
        self.lookups.store(0, Ordering::Relaxed);
    }
}
