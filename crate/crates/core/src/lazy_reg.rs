//! Regularization update kernels.
//!
//! Each single-step rule has a closed-form multi-step counterpart that reads
//! two rows of a [`ScheduleCache`]. For a coordinate last made current at
//! step `psi`, bringing it to step `k` applies the regularization of steps
//! `psi..k` in one shot:
//!
//! ```text
//! SGD L1       sgn(w) [ |w| - l1 (S(k-1) - S(psi-1)) ]+
//! SGD L2^2     w P(k-1) / P(psi-1)
//! SGD elastic  sgn(w) [ |w| P(k-1)/P(psi-1) - l1 P(k-1) (B(k-1) - B(psi-1)) ]+
//! FoBoS L2^2   w Phi(k-1) / Phi(psi-1)
//! FoBoS elastic sgn(w) [ |w| Phi(k-1)/Phi(psi-1) - l1 Phi(k-1) (beta(k-1) - beta(psi-1)) ]+
//! ```
//!
//! Per-step clamping at zero is reproduced exactly by one outer clamp: each
//! step is `z -> a z + c` with `a > 0` and `c <= 0`, so once the unclamped
//! value goes negative it stays negative.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::schedule::{CacheRow, Schedule, ScheduleCache, Tables};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Sgd,
    Fobos,
}

impl Algo {
    pub const ALL: [Algo; 2] = [Algo::Sgd, Algo::Fobos];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Sgd => "sgd",
            Algo::Fobos => "fobos",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Algo::Sgd),
            "fobos" => Ok(Algo::Fobos),
            other => Err(Error::InvalidConfig(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Which penalty terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Penalty {
    None,
    L1,
    L2Squared,
    ElasticNet,
}

/// Algorithm plus elastic-net strengths `l1 |w|_1 + (l2 / 2) |w|_2^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegConfig {
    pub algo: Algo,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl RegConfig {
    pub fn new(algo: Algo, lambda1: f64, lambda2: f64) -> Result<Self> {
        for (name, v) in [("l1", lambda1), ("l2", lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be non-negative and finite, got {v}"
                )));
            }
        }
        Ok(RegConfig {
            algo,
            lambda1,
            lambda2,
        })
    }

    pub fn penalty(&self) -> Penalty {
        match (self.lambda1 > 0.0, self.lambda2 > 0.0) {
            (false, false) => Penalty::None,
            (true, false) => Penalty::L1,
            (false, true) => Penalty::L2Squared,
            (true, true) => Penalty::ElasticNet,
        }
    }

    /// Checks the SGD positivity condition `eta0 * l2 < 1`, which covers
    /// every step because schedules are non-increasing.
    pub fn validate(&self, schedule: &Schedule) -> Result<()> {
        if self.algo == Algo::Sgd && self.lambda2 > 0.0 {
            let product = schedule.eta0() * self.lambda2;
            if product >= 1.0 {
                return Err(Error::InvalidRate { step: 0, product });
            }
        }
        Ok(())
    }

    /// Tables the lazy kernels for this configuration read.
    pub fn cache_tables(&self) -> Tables {
        match self.algo {
            Algo::Sgd => Tables::Full,
            Algo::Fobos => Tables::ProximalOnly,
        }
    }

    pub fn cache(&self, schedule: Schedule) -> Result<ScheduleCache> {
        self.validate(&schedule)?;
        ScheduleCache::with_tables(schedule, self.lambda2, self.cache_tables())
    }
}

/// `sgn(w) [shrink |w| - offset]+`
#[inline(always)]
pub(crate) fn sgd_shrink(w: f64, shrink: f64, offset: f64) -> f64 {
    (shrink * w.abs() - offset).max(0.0).copysign(w)
}

/// `sgn(w) [(|w| - offset) / scale]+`
#[inline(always)]
pub(crate) fn prox_shrink(w: f64, offset: f64, scale: f64) -> f64 {
    ((w.abs() - offset) / scale).max(0.0).copysign(w)
}

/// One regularization-only SGD step at global step `t`.
pub fn step_sgd_elastic(w: f64, t: u64, cfg: &RegConfig, sched: &Schedule) -> Result<f64> {
    let eta = sched.eta(t);
    let decay = eta * cfg.lambda2;
    if decay >= 1.0 {
        return Err(Error::InvalidRate {
            step: t,
            product: decay,
        });
    }
    Ok(sgd_shrink(w, 1.0 - decay, eta * cfg.lambda1))
}

/// One FoBoS proximal step at global step `t`.
pub fn step_fobos_elastic(w: f64, t: u64, cfg: &RegConfig, sched: &Schedule) -> f64 {
    let eta = sched.eta(t);
    prox_shrink(w, eta * cfg.lambda1, 1.0 + eta * cfg.lambda2)
}

/// The per-coordinate objective minimized by [`step_fobos_elastic`].
pub fn fobos_prox_objective(
    candidate: f64,
    half_step: f64,
    t: u64,
    cfg: &RegConfig,
    sched: &Schedule,
) -> f64 {
    let eta = sched.eta(t);
    let d = candidate - half_step;
    0.5 * d * d + eta * cfg.lambda1 * candidate.abs() + 0.5 * eta * cfg.lambda2 * candidate * candidate
}

/// Applies the single-step rule for `cfg.algo` at steps `psi..k` in order.
pub fn sequential_oracle(
    mut w: f64,
    psi: u64,
    k: u64,
    cfg: &RegConfig,
    sched: &Schedule,
) -> Result<f64> {
    check_range(w, psi, k);
    for t in psi..k {
        w = match cfg.algo {
            Algo::Sgd => step_sgd_elastic(w, t, cfg, sched)?,
            Algo::Fobos => step_fobos_elastic(w, t, cfg, sched),
        };
    }
    Ok(w)
}

#[inline(always)]
fn check_range(w: f64, psi: u64, k: u64) {
    assert!(w.is_finite(), "non-finite weight {w}");
    assert!(psi <= k, "timestamp {psi} is ahead of step {k}");
}

#[inline(always)]
fn run(kernel: Kernel, w: f64, psi: u64, k: u64, cfg: &RegConfig, cache: &ScheduleCache) -> Result<f64> {
    check_range(w, psi, k);
    if psi == k || w == 0.0 {
        return Ok(w);
    }
    let end = cache.row(k as i64 - 1)?;
    let start = cache.row(psi as i64 - 1)?;
    Ok(kernel.apply(w, &start, &end, cfg.lambda1))
}

pub fn lazy_l1_sgd(w: f64, psi: u64, k: u64, cfg: &RegConfig, cache: &ScheduleCache) -> Result<f64> {
    run(Kernel::L1Sgd, w, psi, k, cfg, cache)
}

pub fn lazy_l2sq_sgd(w: f64, psi: u64, k: u64, cfg: &RegConfig, cache: &ScheduleCache) -> Result<f64> {
    run(Kernel::L2SquaredSgd, w, psi, k, cfg, cache)
}

pub fn lazy_elastic_sgd(
    w: f64,
    psi: u64,
    k: u64,
    cfg: &RegConfig,
    cache: &ScheduleCache,
) -> Result<f64> {
    run(Kernel::ElasticSgd, w, psi, k, cfg, cache)
}

pub fn lazy_l2sq_fobos(w: f64, psi: u64, k: u64, cfg: &RegConfig, cache: &ScheduleCache) -> Result<f64> {
    run(Kernel::L2SquaredFobos, w, psi, k, cfg, cache)
}

pub fn lazy_elastic_fobos(
    w: f64,
    psi: u64,
    k: u64,
    cfg: &RegConfig,
    cache: &ScheduleCache,
) -> Result<f64> {
    run(Kernel::ElasticFobos, w, psi, k, cfg, cache)
}

/// `sgn(w) [ |w| end/start - l1 end acc ]+` for a decaying product `end`.
#[inline(always)]
fn shrink_affine(w: f64, end: f64, start: f64, lambda1: f64, acc: f64) -> f64 {
    if end == 0.0 {
        // |result| <= |w| end / start, which has underflowed.
        return 0.0f64.copysign(w);
    }
    let offset = if lambda1 > 0.0 { lambda1 * end * acc } else { 0.0 };
    let mag = w.abs() * (end / start) - offset;
    debug_assert!(!mag.is_nan(), "lazy update produced NaN");
    mag.max(0.0).copysign(w)
}

/// The closed form for one (algorithm, penalty) pair, resolved once so that
/// hot loops skip the dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kernel {
    Identity,
    L1Sgd,
    L2SquaredSgd,
    ElasticSgd,
    L2SquaredFobos,
    ElasticFobos,
}

impl Kernel {
    pub(crate) fn of(cfg: &RegConfig) -> Kernel {
        match (cfg.algo, cfg.penalty()) {
            (_, Penalty::None) => Kernel::Identity,
            (Algo::Sgd, Penalty::L1) => Kernel::L1Sgd,
            (Algo::Sgd, Penalty::L2Squared) => Kernel::L2SquaredSgd,
            (Algo::Sgd, Penalty::ElasticNet) => Kernel::ElasticSgd,
            (Algo::Fobos, Penalty::L2Squared) => Kernel::L2SquaredFobos,
            (Algo::Fobos, Penalty::L1 | Penalty::ElasticNet) => Kernel::ElasticFobos,
        }
    }

    /// `start` is the row at `psi - 1`, `end` the row at `k - 1`.
    #[inline(always)]
    pub(crate) fn apply(self, w: f64, start: &CacheRow, end: &CacheRow, lambda1: f64) -> f64 {
        match self {
            Kernel::Identity => w,
            Kernel::L1Sgd => (w.abs() - lambda1 * (end.s - start.s)).max(0.0).copysign(w),
            Kernel::L2SquaredSgd => w * (end.p / start.p),
            Kernel::ElasticSgd => shrink_affine(w, end.p, start.p, lambda1, end.b - start.b),
            Kernel::L2SquaredFobos => w * (end.phi / start.phi),
            Kernel::ElasticFobos => shrink_affine(w, end.phi, start.phi, lambda1, end.beta - start.beta),
        }
    }
}

/// Brings `w` from step `psi` to step `k` with the kernel matching `cfg`.
#[inline]
pub fn lazy_update(w: f64, psi: u64, k: u64, cfg: &RegConfig, cache: &ScheduleCache) -> Result<f64> {
    match Kernel::of(cfg) {
        Kernel::Identity => {
            check_range(w, psi, k);
            Ok(w)
        }
        kernel => run(kernel, w, psi, k, cfg, cache),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sgd(l1: f64, l2: f64) -> RegConfig {
        RegConfig::new(Algo::Sgd, l1, l2).unwrap()
    }

    fn fobos(l1: f64, l2: f64) -> RegConfig {
        RegConfig::new(Algo::Fobos, l1, l2).unwrap()
    }

    fn cache_through(cfg: &RegConfig, sched: Schedule, t: i64) -> ScheduleCache {
        let mut c = cfg.cache(sched).unwrap();
        c.extend_to(t).unwrap();
        c
    }

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn sgd_step_examples() {
        let s = Schedule::constant(0.1).unwrap();
        approx(step_sgd_elastic(1.0, 0, &sgd(1.0, 1.0), &s).unwrap(), 0.8, 1e-15);
        assert_eq!(step_sgd_elastic(0.05, 0, &sgd(1.0, 0.0), &s).unwrap(), 0.0);
        assert_eq!(step_sgd_elastic(0.0, 7, &sgd(3.0, 2.0), &s).unwrap(), 0.0);
        approx(step_sgd_elastic(2.0, 0, &sgd(0.0, 1.0), &s).unwrap(), 1.8, 1e-15);
    }

    #[test]
    fn sgd_step_rejects_large_rate() {
        let s = Schedule::constant(0.2).unwrap();
        assert!(matches!(
            step_sgd_elastic(1.0, 0, &sgd(0.0, 5.0), &s),
            Err(Error::InvalidRate { .. })
        ));
    }

    #[test]
    fn fobos_step_examples() {
        let s = Schedule::constant(0.1).unwrap();
        approx(step_fobos_elastic(1.0, 0, &fobos(1.0, 1.0), &s), 0.9 / 1.1, 1e-15);
        approx(step_fobos_elastic(-1.0, 0, &fobos(1.0, 1.0), &s), -0.818182, 1e-6);
        approx(step_fobos_elastic(0.5, 0, &fobos(0.0, 2.0), &s), 0.5 / 1.2, 1e-15);
    }

    #[test]
    fn prox_objective_examples() {
        let s = Schedule::constant(0.1).unwrap();
        assert_eq!(fobos_prox_objective(0.7, 0.7, 0, &fobos(0.0, 0.0), &s), 0.0);
        approx(fobos_prox_objective(0.0, 1.0, 0, &fobos(1.0, 1.0), &s), 0.5, 1e-15);
    }

    #[test]
    fn lazy_l1_examples() {
        let cfg = sgd(2.0, 0.0);
        let c = cache_through(&cfg, Schedule::constant(0.1).unwrap(), 2);
        approx(lazy_l1_sgd(1.0, 0, 3, &cfg, &c).unwrap(), 0.4, 1e-15);
        assert_eq!(lazy_l1_sgd(0.5, 0, 3, &cfg, &c).unwrap(), 0.0);
        assert_eq!(lazy_l1_sgd(-0.3, 2, 2, &cfg, &c).unwrap(), -0.3);
    }

    #[test]
    fn lazy_l2sq_sgd_examples() {
        let cfg = sgd(0.0, 1.0);
        let c = cache_through(&cfg, Schedule::constant(0.1).unwrap(), 2);
        approx(lazy_l2sq_sgd(1.0, 0, 3, &cfg, &c).unwrap(), 0.729, 1e-15);
        assert_eq!(lazy_l2sq_sgd(1.5, 1, 1, &cfg, &c).unwrap(), 1.5);
        let none = sgd(0.0, 0.0);
        let c0 = cache_through(&none, Schedule::constant(0.1).unwrap(), 50);
        assert_eq!(lazy_l2sq_sgd(1.5, 3, 40, &none, &c0).unwrap(), 1.5);
    }

    #[test]
    fn lazy_elastic_sgd_examples() {
        let cfg = sgd(1.0, 1.0);
        let sched = Schedule::constant(0.1).unwrap();
        let c = cache_through(&cfg, sched, 1);
        approx(lazy_elastic_sgd(1.0, 0, 2, &cfg, &c).unwrap(), 0.62, 1e-14);
        approx(sequential_oracle(1.0, 0, 2, &cfg, &sched).unwrap(), 0.62, 1e-14);
        // the printed P(t-1) denominator without l1 would give 0.639
        let uncorrected: f64 = 0.81 - 0.81 * (0.1 / 1.0 + 0.1 / 0.9);
        assert!((uncorrected - 0.639).abs() < 1e-12);
    }

    #[test]
    fn elastic_sgd_without_l1_matches_l2sq() {
        let sched = Schedule::new(crate::schedule::ScheduleKind::InverseSqrtT, 0.3).unwrap();
        let cfg = sgd(0.0, 2.0);
        let c = cache_through(&cfg, sched, 40);
        for (w, psi, k) in [(1.3, 0, 41), (-0.2, 7, 19), (5.0, 40, 41)] {
            assert_eq!(
                lazy_elastic_sgd(w, psi, k, &cfg, &c).unwrap(),
                lazy_l2sq_sgd(w, psi, k, &cfg, &c).unwrap()
            );
        }
    }

    #[test]
    fn lazy_l2sq_fobos_examples() {
        let cfg = fobos(0.0, 1.0);
        let c = cache_through(&cfg, Schedule::constant(0.1).unwrap(), 1);
        approx(lazy_l2sq_fobos(1.0, 0, 2, &cfg, &c).unwrap(), 1.0 / 1.21, 1e-15);
        assert_eq!(lazy_l2sq_fobos(0.25, 1, 1, &cfg, &c).unwrap(), 0.25);
        approx(lazy_l2sq_fobos(-2.0, 0, 1, &cfg, &c).unwrap(), -2.0 / 1.1, 1e-15);
    }

    #[test]
    fn lazy_elastic_fobos_examples() {
        let cfg = fobos(1.0, 1.0);
        let sched = Schedule::constant(0.1).unwrap();
        let c = cache_through(&cfg, sched, 1);
        let seq = sequential_oracle(1.0, 0, 2, &cfg, &sched).unwrap();
        approx(seq, 0.652893, 1e-6);
        approx(lazy_elastic_fobos(1.0, 0, 2, &cfg, &c).unwrap(), seq, 1e-14);
        let l2only = fobos(0.0, 1.0);
        assert_eq!(
            lazy_elastic_fobos(0.7, 0, 2, &l2only, &c).unwrap(),
            lazy_l2sq_fobos(0.7, 0, 2, &l2only, &c).unwrap()
        );
    }

    #[test]
    fn oracle_zero_steps_and_absorption() {
        let sched = Schedule::constant(0.1).unwrap();
        let cfg = sgd(1.0, 1.0);
        assert_eq!(sequential_oracle(0.3, 4, 4, &cfg, &sched).unwrap(), 0.3);
        // clamps to zero at step 1 and stays there
        let mut w = 0.15;
        for t in 0..10 {
            w = step_sgd_elastic(w, t, &cfg, &sched).unwrap();
            if t >= 1 {
                assert_eq!(w, 0.0);
            }
        }
    }

    #[test]
    fn kernels_read_two_rows() {
        let sched = Schedule::constant(0.05).unwrap();
        for cfg in [sgd(1.0, 0.0), sgd(0.0, 1.0), sgd(1.0, 1.0), fobos(0.0, 1.0), fobos(1.0, 1.0)] {
            let c = cache_through(&cfg, sched, 999);
            for (psi, k) in [(0, 1), (0, 1000), (500, 510)] {
                c.reset_lookups();
                lazy_update(0.5, psi, k, &cfg, &c).unwrap();
                assert_eq!(c.lookups(), 2, "{cfg:?} {psi}..{k}");
            }
        }
    }

    #[test]
    fn lazy_out_of_range() {
        let cfg = sgd(1.0, 1.0);
        let c = cache_through(&cfg, Schedule::constant(0.1).unwrap(), 3);
        assert!(matches!(
            lazy_elastic_sgd(1.0, 0, 10, &cfg, &c),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    #[should_panic(expected = "ahead of step")]
    fn psi_after_k_is_a_contract_violation() {
        let cfg = sgd(1.0, 0.0);
        let c = cache_through(&cfg, Schedule::constant(0.1).unwrap(), 3);
        let _ = lazy_l1_sgd(1.0, 3, 2, &cfg, &c);
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn nan_weight_is_a_contract_violation() {
        let cfg = fobos(1.0, 0.0);
        let c = cache_through(&cfg, Schedule::constant(0.1).unwrap(), 3);
        let _ = lazy_elastic_fobos(f64::NAN, 0, 2, &cfg, &c);
    }

    #[test]
    fn validate_positivity() {
        let s = Schedule::constant(0.2).unwrap();
        assert!(matches!(sgd(0.0, 10.0).validate(&s), Err(Error::InvalidRate { .. })));
        assert!(sgd(0.0, 4.9).validate(&s).is_ok());
        assert!(fobos(0.0, 10.0).validate(&s).is_ok());
        assert!(RegConfig::new(Algo::Sgd, -1.0, 0.0).is_err());
    }
}
