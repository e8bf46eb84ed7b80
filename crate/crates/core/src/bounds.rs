//! Standalone growth oracles and runtime monitors.
//!
//! The sequence oracles check convex-growth conclusions on arbitrary real
//! windows (synthetic or simulated); the monitor battery evaluates every
//! aggregate inequality the run is expected to satisfy strictly before its
//! verdict step. All checks are report-only and tolerance-guarded: the
//! inequalities are strict in exact arithmetic but traces are floating
//! point.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{l1_norm, LatticeField};
use crate::observables::{energy, lattice_sum, GrowthConstants, Trace};
use crate::scheme::{powr, SchemeParams};

/// Default relative tolerance guard for monitor inequalities.
pub const MONITOR_REL_TOL: f64 = 1e-10;

/// Convexity is held to a tighter, scale-relative tolerance.
pub const CONVEXITY_REL_TOL: f64 = 1e-12;

/// A contiguous window `U_{start}, U_{start+1}, ...` of a real sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    start: u64,
    values: Vec<f64>,
}

impl SequenceWindow {
    pub fn new(start: u64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::WindowTooShort);
        }
        Ok(Self { start, values })
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.start + self.values.len() as u64 - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, n: u64) -> Option<f64> {
        if n < self.start {
            return None;
        }
        self.values.get((n - self.start) as usize).copied()
    }

    /// Window of the trace's `U_n` column over `[trace.n0, end_n]`.
    pub fn from_trace(trace: &Trace, end_n: u64) -> Result<Self> {
        let mut values = Vec::new();
        let mut n = trace.n0;
        while n <= end_n {
            match trace.u(n) {
                Some(u) => values.push(u),
                None => break,
            }
            n += 1;
        }
        Self::new(trace.n0, values)
    }
}

/// Result of checking one bound over an index range.
///
/// `min_margin` is the smallest satisfied-by amount seen over the range
/// (`None` when the range is empty); `violated_at` is the first index where
/// the bound failed beyond its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub bound_id: String,
    pub range: (i64, i64),
    pub violated_at: Option<i64>,
    pub min_margin: Option<f64>,
    #[serde(skip)]
    pub checked: u64,
}

impl MonitorReport {
    pub fn empty(id: &str, lo: i64, hi: i64) -> Self {
        Self {
            bound_id: id.to_string(),
            range: (lo, hi),
            violated_at: None,
            min_margin: None,
            checked: 0,
        }
    }

    /// True when the checked range contained no indices.
    pub fn range_empty(&self) -> bool {
        self.checked == 0
    }

    pub fn ok(&self) -> bool {
        self.violated_at.is_none()
    }
}

struct BoundScan {
    report: MonitorReport,
}

impl BoundScan {
    fn new(id: &str, lo: i64, hi: i64) -> Self {
        Self { report: MonitorReport::empty(id, lo, hi) }
    }

    fn check(&mut self, n: i64, margin: f64, tol: f64) {
        self.report.checked += 1;
        if self.report.min_margin.map_or(true, |m| margin < m) {
            self.report.min_margin = Some(margin);
        }
        if margin < -tol && self.report.violated_at.is_none() {
            self.report.violated_at = Some(n);
        }
    }

    fn finish(self) -> MonitorReport {
        self.report
    }
}

/// Lower-bound scan `U_n >= rhs(n)` over `lo..=hi` (window-clipped).
fn scan_lower_bound(
    w: &SequenceWindow,
    id: &str,
    lo: i64,
    hi: i64,
    rhs: impl Fn(u64) -> f64,
) -> MonitorReport {
    let lo_eff = lo.max(w.start() as i64);
    let hi_eff = hi.min(w.end() as i64);
    let mut scan = BoundScan::new(id, lo, hi);
    scan.report.range = (lo, hi);
    let mut n = lo_eff;
    while n <= hi_eff {
        let u = w.value(n as u64).expect("clipped range stays in window");
        let r = rhs(n as u64);
        scan.check(n, u - r, MONITOR_REL_TOL * r.abs().max(1.0));
        n += 1;
    }
    scan.finish()
}

/// Outcome of a sequence oracle: which hypotheses failed (with the first
/// failing index where applicable) plus the conclusion monitor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexCheck {
    pub hypothesis_failures: Vec<HypothesisFailure>,
    pub monitor: MonitorReport,
}

impl ConvexCheck {
    pub fn hypotheses_ok(&self) -> bool {
        self.hypothesis_failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisFailure {
    pub name: String,
    pub at: Option<i64>,
}

fn hypothesis_failures_part1(w: &SequenceWindow, incr: f64) -> Vec<HypothesisFailure> {
    let mut failures = Vec::new();
    let v = w.values();
    if v[0] < 0.0 {
        failures.push(HypothesisFailure { name: "start_nonnegative".into(), at: Some(w.start() as i64) });
    }
    let du0 = v[1] - v[0];
    if du0 < incr - MONITOR_REL_TOL * incr.abs().max(1.0) {
        failures.push(HypothesisFailure {
            name: "first_increment_at_least_incr".into(),
            at: Some(w.start() as i64 + 1),
        });
    }
    for k in 1..v.len() - 1 {
        let d2 = v[k + 1] - 2.0 * v[k] + v[k - 1];
        if d2 < -MONITOR_REL_TOL * v[k].abs().max(1.0) {
            failures.push(HypothesisFailure {
                name: "second_difference_nonnegative".into(),
                at: Some(w.start() as i64 + k as i64),
            });
            break;
        }
    }
    failures
}

/// Checks the linear growth conclusion on a convex window: for every
/// `n > start`, the increments stay positive and `U_n >= incr * (n - start)`.
///
/// The stated hypotheses (nonnegative second differences, first increment at
/// least `incr`, nonnegative start) are verified as well and reported, not
/// enforced.
pub fn check_linear_growth(w: &SequenceWindow, incr: f64) -> Result<ConvexCheck> {
    if !(incr > 0.0) || !incr.is_finite() {
        return Err(Error::InvalidParam {
            name: "incr",
            reason: format!("increment must be positive, got {}", incr),
        });
    }
    let hypothesis_failures = hypothesis_failures_part1(w, incr);

    let n0 = w.start();
    let mut monitor = scan_lower_bound(
        w,
        "linear_growth",
        n0 as i64 + 1,
        w.end() as i64,
        |n| incr * (n - n0) as f64,
    );
    // Fold the strict positivity of increments into the same verdict: the
    // first index failing either conclusion is reported.
    let v = w.values();
    for k in 1..v.len() {
        let du = v[k] - v[k - 1];
        if du < -MONITOR_REL_TOL * v[k].abs().max(1.0) {
            let n = n0 as i64 + k as i64;
            if monitor.violated_at.map_or(true, |m| n < m) {
                monitor.violated_at = Some(n);
            }
            break;
        }
    }
    Ok(ConvexCheck { hypothesis_failures, monitor })
}

/// Checks the `n log n` growth conclusion: `U_n >= (c/3) n ln n` for every
/// `n > max(ntilde^3, 21)` in the window.
pub fn check_nlogn_growth(w: &SequenceWindow, c: f64, ntilde: u64) -> Result<ConvexCheck> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidParam {
            name: "c",
            reason: format!("constant must be positive, got {}", c),
        });
    }
    let mut hypothesis_failures = hypothesis_failures_part1(w, f64::MIN_POSITIVE);
    hypothesis_failures.retain(|f| f.name != "first_increment_at_least_incr");
    let v = w.values();
    if v[1] - v[0] <= 0.0 {
        hypothesis_failures.push(HypothesisFailure {
            name: "first_increment_positive".into(),
            at: Some(w.start() as i64 + 1),
        });
    }
    for k in 1..v.len() - 1 {
        let n = w.start() + k as u64;
        if n < ntilde {
            continue;
        }
        let d2 = v[k + 1] - 2.0 * v[k] + v[k - 1];
        let rhs = c / n as f64;
        if d2 < rhs - MONITOR_REL_TOL * rhs.abs().max(1.0) {
            hypothesis_failures.push(HypothesisFailure {
                name: "second_difference_at_least_c_over_n".into(),
                at: Some(n as i64),
            });
            break;
        }
    }

    let big_n = ntilde.checked_pow(3).map_or(u64::MAX, |x| x.max(crate::observables::E_CUBED_CEIL));
    let lo = big_n.saturating_add(1).min(i64::MAX as u64) as i64;
    let monitor = scan_lower_bound(w, "nlogn_growth", lo, w.end() as i64, |n| {
        let nf = n as f64;
        c / 3.0 * nf * nf.ln()
    });
    Ok(ConvexCheck { hypothesis_failures, monitor })
}

/// Verdict of checking the blow-up theorem's hypotheses on the two initial
/// levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub support_ok: bool,
    /// `(level, site)` of the first support violation, if any.
    pub support_violation: Option<(String, Vec<i64>)>,
    /// `U_{N0}`, the lattice sum of the first level.
    pub initial_sum: f64,
    pub initial_sum_nonneg: bool,
    /// Boundary case `U_{N0} = 0`: allowed, but flagged.
    pub initial_sum_zero: bool,
    /// Measured increment `I = U_{N0+1} - U_{N0}`.
    pub increment: f64,
    pub increment_positive: bool,
    /// `p <= 1 + 2/d`.
    pub p_within_range: bool,
    /// All hypotheses hold, so guaranteed finite-time blow-up applies.
    pub applicable: bool,
}

/// Checks (a) support of both levels inside the radius-R ball, (b) the
/// first-level sum is nonnegative, (c) the measured increment is strictly
/// positive, and whether `p` is within the guaranteed range.
pub fn check_hypotheses(
    params: &SchemeParams,
    level0: &LatticeField,
    level1: &LatticeField,
) -> HypothesisReport {
    let r = params.radius;
    let viol = |f: &LatticeField| f.iter_nonzero().find(|(s, _)| l1_norm(s) > r).map(|(s, _)| s);
    let support_violation = viol(level0)
        .map(|s| ("u_n0".to_string(), s))
        .or_else(|| viol(level1).map(|s| ("u_n0_plus_1".to_string(), s)));
    let support_ok = support_violation.is_none();

    let u0 = lattice_sum(level0);
    let u1 = lattice_sum(level1);
    let increment = u1 - u0;

    let initial_sum_nonneg = u0 >= 0.0;
    let increment_positive = increment > 0.0;
    let p_within_range = params.p <= params.fujita_exponent();
    HypothesisReport {
        support_ok,
        support_violation,
        initial_sum: u0,
        initial_sum_nonneg,
        initial_sum_zero: u0 == 0.0,
        increment,
        increment_positive,
        p_within_range,
        applicable: support_ok && initial_sum_nonneg && increment_positive && p_within_range,
    }
}

/// Evaluates the full monitor battery on a trace, each bound on its own
/// validity range, never touching the verdict step: `monitor_end` is the
/// last level to check (callers pass `N_b - 1` for blow-up runs).
pub fn growth_monitors(
    trace: &Trace,
    params: &SchemeParams,
    constants: &GrowthConstants,
    monitor_end: u64,
) -> Vec<MonitorReport> {
    let mut out = Vec::new();
    let n0 = trace.n0;
    let last = match trace.last_n() {
        Some(l) => l,
        None => return out,
    };
    let end = monitor_end.min(last);
    let window = match SequenceWindow::from_trace(trace, end) {
        Ok(w) => w,
        Err(_) => return out,
    };
    let p = params.p;
    let d = params.dim as f64;
    let incr = constants.increment;

    // Convexity of U_n: second differences are nonnegative pre-verdict.
    {
        let lo = n0 as i64 + 1;
        let hi = end.min(last.saturating_sub(1)) as i64;
        let mut scan = BoundScan::new("convexity", lo, hi);
        let mut n = lo;
        while n <= hi {
            let rec = trace.record_for(n as u64).expect("range inside trace");
            if let Some(d2) = rec.d2u {
                scan.check(n, d2, CONVEXITY_REL_TOL * rec.u_sum.abs());
            }
            n += 1;
        }
        out.push(scan.finish());
    }

    // Telescoping identity: the second difference of U equals the recorded
    // nonlinear source total (the stencil part cancels over the lattice).
    {
        let lo = n0 as i64 + 1;
        let hi = end.min(last.saturating_sub(1)) as i64;
        let mut scan = BoundScan::new("telescoping", lo, hi);
        let mut n = lo;
        while n <= hi {
            let rec = trace.record_for(n as u64).expect("range inside trace");
            if let (Some(d2), Some(src)) = (rec.d2u, rec.source_sum) {
                let u_prev = trace.u(n as u64 - 1).unwrap_or(0.0);
                let u_next = trace.u(n as u64 + 1).unwrap_or(0.0);
                let scale = u_next.abs() + 2.0 * rec.u_sum.abs() + u_prev.abs();
                let tol = MONITOR_REL_TOL * scale.max(1.0);
                scan.check(n, tol - (d2 - src).abs(), 0.0);
            }
            n += 1;
        }
        out.push(scan.finish());
    }

    out.push(scan_lower_bound(
        &window,
        "linear_growth",
        n0 as i64 + 1,
        end as i64,
        |n| incr * (n - n0) as f64,
    ));

    out.push(scan_lower_bound(
        &window,
        "half_slope_growth",
        2 * n0 as i64 + 1,
        end as i64,
        |n| incr / 2.0 * n as f64,
    ));

    // The n log n bound goes through the standalone oracle so both paths
    // produce bit-identical reports.
    if let Ok(check) = check_nlogn_growth(&window, constants.c2, constants.n2) {
        out.push(check.monitor);
    }

    // Squared-increment bound: (U_{n+1} - U_n)^2 >= (c/(p+1)) (U_n/n)^(p+1).
    {
        let lo = constants.n2 as i64 + 1;
        let hi = end.min(last.saturating_sub(1)) as i64;
        let mut scan = BoundScan::new("increment_square", lo, hi);
        let mut n = lo;
        while n <= hi {
            let u = trace.u(n as u64).expect("range inside trace");
            let u_next = trace.u(n as u64 + 1).expect("hi stays below trace end");
            let du = u_next - u;
            let rhs = constants.c_energy / (p + 1.0) * (u / n as f64).powf(p + 1.0);
            scan.check(n, du * du - rhs, MONITOR_REL_TOL * rhs.abs().max(1.0));
            n += 1;
        }
        out.push(scan.finish());
    }

    // Energy monotonicity: E_{n+1} >= E_n for N2 < n, pairs up to the verdict.
    {
        let lo = constants.n2 as i64 + 1;
        let hi = end.min(last.saturating_sub(1)) as i64;
        let mut scan = BoundScan::new("energy_monotone", lo, hi);
        let mut n = lo;
        while n <= hi {
            let e_n = energy(
                n as u64,
                trace.u(n as u64 - 1).expect("inside trace"),
                trace.u(n as u64).expect("inside trace"),
                constants.c_energy,
                p,
            );
            let e_next = energy(
                n as u64 + 1,
                trace.u(n as u64).expect("inside trace"),
                trace.u(n as u64 + 1).expect("inside trace"),
                constants.c_energy,
                p,
            );
            scan.check(n, e_next - e_n, CONVEXITY_REL_TOL * e_n.abs().max(1.0));
            n += 1;
        }
        out.push(scan.finish());
    }

    // Final polynomial bound, usually vacuous because N4 is astronomical.
    {
        let lo_u64 = constants.n4.map_or(u64::MAX, |n4| n4.max(constants.n3).saturating_add(1));
        let lo = lo_u64.min(i64::MAX as u64) as i64;
        let hi = end as i64;
        if lo <= hi {
            let n4 = constants.n4.expect("lo finite implies n4 known") as f64;
            let u_n4 = window.value(n4 as u64).unwrap_or(f64::NAN);
            let coef = u_n4 / (n4 + p + d - 1.0).powf(p + d);
            out.push(scan_lower_bound(&window, "polynomial_growth", lo, hi, |n| {
                coef * (n as f64).powf(p + d)
            }));
        } else {
            out.push(MonitorReport::empty("polynomial_growth", lo, hi));
        }
    }

    // Ceiling from the counting bound: U_n <= (pi/2) delta^-1 2^(3d+1) n^(p+d-1)
    // for n >= N1. Its violation corroborates blow-up rather than flagging a bug.
    {
        let lo = constants.n1.max(n0) as i64;
        let hi = end as i64;
        let mut scan = BoundScan::new("sum_ceiling", lo, hi);
        let coef = std::f64::consts::FRAC_PI_2 * params.delta_inv() * (3.0 * d + 1.0).exp2();
        let mut n = lo.max(window.start() as i64);
        while n <= hi {
            let u = window.value(n as u64).expect("inside window");
            let bound = coef * powr(n as f64, p + d - 1.0);
            scan.check(n, bound - u, MONITOR_REL_TOL * bound.abs().max(1.0));
            n += 1;
        }
        out.push(scan.finish());
    }

    out
}

/// Least-squares fit of `log N_b` against `log epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LifespanFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub points: usize,
}

/// Fits blow-up step against amplitude on log-log axes. Requires at least
/// three runs with positive amplitudes spanning two decades.
pub fn lifespan_fit(points: &[(f64, f64)]) -> Result<LifespanFit> {
    if points.len() < 3 {
        return Err(Error::LifespanFit(format!(
            "need at least 3 runs, got {}",
            points.len()
        )));
    }
    for &(eps, n_b) in points {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::LifespanFit(format!("amplitude must be positive, got {}", eps)));
        }
        if !(n_b >= 1.0) || !n_b.is_finite() {
            return Err(Error::LifespanFit(format!("blow-up step must be >= 1, got {}", n_b)));
        }
    }
    let min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if max / min < 100.0 * (1.0 - 1e-12) {
        return Err(Error::LifespanFit(format!(
            "amplitudes must span at least two decades, got ratio {}",
            max / min
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 * sxx.abs().max(1.0) {
        return Err(Error::LifespanFit("amplitudes are collinear in log space".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    Ok(LifespanFit {
        slope,
        intercept,
        residual_rms: (ss / n).sqrt(),
        points: points.len(),
    })
}

/// Deterministic generators for synthetic sequences satisfying the oracle
/// hypotheses by construction. Used by both the test suites and the CLI's
/// oracle command.
pub mod synth {
    use super::SequenceWindow;
    use rand::Rng;

    /// Random convex window: nonnegative second differences, first increment
    /// at least the returned `incr`, nonnegative start. Length in `[2, max_len]`.
    pub fn convex_window<R: Rng>(rng: &mut R, max_len: usize) -> (SequenceWindow, f64) {
        let n0 = rng.gen_range(0..8u64);
        let len = rng.gen_range(2..=max_len.max(2));
        let u0 = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..50.0) };
        let incr = 10f64.powf(rng.gen_range(-3.0..1.0));
        let mut du = incr * (1.0 + rng.gen_range(0.0..1.0));
        let mut values = Vec::with_capacity(len);
        let mut u = u0;
        values.push(u);
        for _ in 1..len {
            u += du;
            values.push(u);
            // Second difference >= 0; zero with positive probability so the
            // equality boundary is exercised.
            let d2 = if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..incr) };
            du += d2;
        }
        (SequenceWindow::new(n0, values).expect("len >= 2"), incr)
    }

    /// Random window whose second differences are at least `c/n` from
    /// `ntilde` on (and nonnegative before), with a positive first increment.
    pub fn cn_window<R: Rng>(rng: &mut R, max_len: usize, c: f64, ntilde: u64) -> SequenceWindow {
        let n0 = rng.gen_range(0..ntilde.max(1));
        let len = rng.gen_range(2..=max_len.max(2));
        let u0 = if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.0..10.0) };
        let mut du = 10f64.powf(rng.gen_range(-3.0..0.0));
        let mut values = Vec::with_capacity(len);
        let mut u = u0;
        values.push(u);
        for k in 1..len {
            u += du;
            values.push(u);
            let n = n0 + k as u64;
            let floor = if n >= ntilde { c / n as f64 } else { 0.0 };
            let extra = if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.0..c) };
            du += floor + extra;
        }
        SequenceWindow::new(n0, values).expect("len >= 2")
    }

    /// The exact line `U_n = incr * (n - n0)` with a dip injected at
    /// `fault_at`, used to verify fault localization.
    pub fn linear_fault_window(n0: u64, incr: f64, len: usize, fault_at: u64) -> SequenceWindow {
        let mut values: Vec<f64> = (0..len as u64).map(|k| incr * k as f64).collect();
        let idx = (fault_at - n0) as usize;
        values[idx] -= 0.5 * incr;
        SequenceWindow::new(n0, values).expect("len >= 2")
    }
}
