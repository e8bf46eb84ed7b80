//! The two explicit time-stepping rules and blow-up detection.
//!
//! Both rules share the same linear stencil
//! `(d^2/h^2) * neighbor_sum + (2 - 2 d d^2/h^2) u_n - u_{n-1}`
//! (with `d = delta` the time step) and differ only in the nonlinear source:
//!
//! * the tangent rule adds `delta^(2-p) |u|^(p-1) tan(delta |u| / n^(p-1))`,
//!   which is singular once the tangent argument reaches pi/2 — that is the
//!   finite-time blow-up mechanism this lab exists to observe;
//! * the power rule adds `delta^2 |u|^p / t_n^(p-1)` with `t_n = n * delta`,
//!   the plain central-difference discretization. The two agree to first
//!   order; their per-site gap is the cubic Taylor remainder of `tan`.
//!
//! A step only writes inside the L1 ball that the current support can reach,
//! so support grows by at most one cell per step (finite propagation speed).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{support_radius, LatticeField, MAX_DIM};
use crate::shapes::InitialShape;

/// Validated scheme parameters. `delta = 1/n0` is derived, never stored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeParams {
    pub dim: usize,
    pub p: f64,
    pub n0: u64,
    pub h: f64,
    pub radius: u64,
    pub step_budget: u64,
}

/// Default cap on the number of steps a run may take.
pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000;

impl SchemeParams {
    pub fn new(dim: usize, p: f64, n0: u64, h: f64, radius: u64, step_budget: u64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidDim { got: dim, max: MAX_DIM });
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::InvalidParam {
                name: "p",
                reason: format!("exponent must satisfy p > 1, got {}", p),
            });
        }
        if n0 == 0 || n0 > 1 << 40 {
            return Err(Error::InvalidParam {
                name: "n0",
                reason: format!("N0 must be a positive integer (at most 2^40), got {}", n0),
            });
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParam {
                name: "h",
                reason: format!("grid spacing must be positive, got {}", h),
            });
        }
        if step_budget == 0 {
            return Err(Error::InvalidParam {
                name: "step_budget",
                reason: "step budget must be positive".into(),
            });
        }
        Ok(Self { dim, p, n0, h, radius, step_budget })
    }

    /// Parameters with `h = delta * sqrt(d)`, the choice that zeroes the
    /// stencil's center coefficient. `h` is nudged up by ulps if rounding
    /// left `d*delta^2/h^2` above 1, so the stability flag stays off.
    pub fn with_critical_h(dim: usize, p: f64, n0: u64, radius: u64, step_budget: u64) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidDim { got: dim, max: MAX_DIM });
        }
        if n0 == 0 {
            return Err(Error::InvalidParam {
                name: "n0",
                reason: "N0 must be a positive integer".into(),
            });
        }
        let delta = 1.0 / n0 as f64;
        let mut h = delta * (dim as f64).sqrt();
        for _ in 0..4 {
            if dim as f64 * delta * delta / (h * h) <= 1.0 {
                break;
            }
            h = f64::from_bits(h.to_bits() + 1);
        }
        Self::new(dim, p, n0, h, radius, step_budget)
    }

    /// Time step `1/N0`.
    pub fn delta(&self) -> f64 {
        1.0 / self.n0 as f64
    }

    /// `1/delta = N0`, exact as a float.
    pub fn delta_inv(&self) -> f64 {
        self.n0 as f64
    }

    /// Physical time of step `n`, one floating multiply from `n`.
    pub fn t_of(&self, n: u64) -> f64 {
        n as f64 * self.delta()
    }

    /// `d * delta^2 / h^2`; 1 is the critical value.
    pub fn lap_ratio(&self) -> f64 {
        let d = self.delta();
        self.dim as f64 * d * d / (self.h * self.h)
    }

    /// True when the center coefficient `2 - 2 d delta^2/h^2` is negative.
    pub fn cfl_exceeded(&self) -> bool {
        self.lap_ratio() > 1.0
    }

    /// `1 + 2/d`, the upper end of the guaranteed blow-up range.
    pub fn fujita_exponent(&self) -> f64 {
        1.0 + 2.0 / self.dim as f64
    }

    /// True when `p` exceeds the guaranteed blow-up range (run still allowed).
    pub fn beyond_guaranteed_range(&self) -> bool {
        self.p > self.fujita_exponent()
    }

    /// Blow-up threshold `(pi/2) * delta^-1 * n^(p-1)` at step `n`.
    pub fn blowup_threshold(&self, n: u64) -> f64 {
        std::f64::consts::FRAC_PI_2 * self.delta_inv() * powr(n as f64, self.p - 1.0)
    }
}

/// Terminal status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RunStatus {
    BlewUp,
    BudgetExhausted,
    NumericFailure,
}

/// Outcome of blow-up detection or a failed step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowUpVerdict {
    pub status: RunStatus,
    /// Step index `N_b` at which the threshold was reached.
    pub n_b: Option<u64>,
    /// Lexicographically first offending site `i_b`.
    pub site: Option<Vec<i64>>,
    /// Set when a step produced a non-finite value.
    pub overflow: bool,
}

impl BlowUpVerdict {
    pub fn blew_up(n_b: u64, site: Vec<i64>) -> Self {
        Self { status: RunStatus::BlewUp, n_b: Some(n_b), site: Some(site), overflow: false }
    }

    pub fn budget_exhausted() -> Self {
        Self { status: RunStatus::BudgetExhausted, n_b: None, site: None, overflow: false }
    }

    pub fn numeric_failure() -> Self {
        Self { status: RunStatus::NumericFailure, n_b: None, site: None, overflow: true }
    }
}

/// Which nonlinear source a step applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SourceKind {
    Tan,
    Power,
}

/// Two consecutive time levels of the evolution.
#[derive(Debug, Clone)]
pub struct SimState {
    params: SchemeParams,
    /// `u_{n-1}`
    prev: LatticeField,
    /// `u_n`
    curr: LatticeField,
    n: u64,
    supp_prev: Option<u64>,
    supp_curr: Option<u64>,
    last_source_sum: f64,
    scratch: Vec<f64>,
}

/// Samples the two data levels and validates their support.
///
/// `prev` holds `f(x_i)`, `curr` holds `f(x_i) + delta * g(x_i)`, and the
/// state starts at step `n = N0 + 1`. The amplitude multiplier `epsilon`
/// scales both shapes.
pub fn init_state(
    params: &SchemeParams,
    f: &InitialShape,
    g: &InitialShape,
    epsilon: f64,
) -> Result<SimState> {
    if !epsilon.is_finite() {
        return Err(Error::InvalidParam {
            name: "epsilon",
            reason: format!("amplitude multiplier must be finite, got {}", epsilon),
        });
    }
    let f_field = f.sample(params.dim, params.h, epsilon)?;
    if let Some(site) = InitialShape::support_violation(&f_field, params.radius) {
        return Err(Error::SupportViolation { which: "f", radius: params.radius, site });
    }
    let g_field = g.sample(params.dim, params.h, epsilon)?;
    if let Some(site) = InitialShape::support_violation(&g_field, params.radius) {
        return Err(Error::SupportViolation { which: "g", radius: params.radius, site });
    }

    let box_radius = params.radius + 2;
    let mut prev = LatticeField::centered(params.dim, box_radius)?;
    for (site, v) in f_field.iter_nonzero() {
        prev.set(&site, v);
    }
    let mut curr = prev.clone();
    let delta = params.delta();
    for (site, v) in g_field.iter_nonzero() {
        let idx = curr.index_of(&site).expect("g support fits the sim box");
        curr.values_mut()[idx] = prev.get(&site) + delta * v;
    }
    let supp_prev = support_radius(&prev);
    let supp_curr = support_radius(&curr);
    Ok(SimState {
        params: params.clone(),
        prev,
        curr,
        n: params.n0 + 1,
        supp_prev,
        supp_curr,
        last_source_sum: 0.0,
        scratch: Vec::new(),
    })
}

impl SimState {
    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `u_n`, the current level.
    pub fn curr(&self) -> &LatticeField {
        &self.curr
    }

    /// `u_{n-1}`, the previous level.
    pub fn prev(&self) -> &LatticeField {
        &self.prev
    }

    /// Measured support radius of the current level.
    pub fn support(&self) -> Option<u64> {
        self.supp_curr
    }

    /// Total nonlinear source added by the most recent step, accumulated
    /// over fixed geometry-determined segments so the value does not depend
    /// on the worker count.
    pub fn last_source_sum(&self) -> f64 {
        self.last_source_sum
    }

    /// One step of the tangent rule. Requires a prior blow-up check: the
    /// tangent argument must stay below pi/2 at every site.
    pub fn step_tan(&mut self) -> Result<()> {
        self.step(SourceKind::Tan)
    }

    /// One step of the plain power rule (no singular term, never blows up
    /// in the threshold sense; it can still overflow to non-finite values).
    pub fn step_power(&mut self) -> Result<()> {
        self.step(SourceKind::Power)
    }

    fn step(&mut self, kind: SourceKind) -> Result<()> {
        let write_radius = match self.supp_prev.max(self.supp_curr) {
            // Zero state is a fixed point; keep it exact and cheap.
            None => {
                std::mem::swap(&mut self.prev, &mut self.curr);
                self.n += 1;
                self.supp_prev = None;
                self.supp_curr = None;
                self.last_source_sum = 0.0;
                return Ok(());
            }
            Some(r) => r + 1,
        };
        self.ensure_capacity(write_radius + 1)?;

        let dim = self.params.dim;
        let delta = self.params.delta();
        let clap = delta * delta / (self.params.h * self.params.h);
        let cc = 2.0 - 2.0 * dim as f64 * clap;
        let p = self.params.p;
        let n = self.n;
        let np1 = powr(n as f64, p - 1.0);
        let c_tan = powr(delta, 2.0 - p);
        let d2 = delta * delta;
        let tnp1 = powr(self.params.t_of(n), p - 1.0);

        let segments = build_segments(&self.curr, write_radius as i64);
        let total_sites: usize = segments.iter().map(|s| s.len()).sum();

        // A recycled buffer is zero outside the ball it was last written
        // into, which sits inside today's write ball; the kernel writes
        // every cell of the ball, so no wholesale zero-fill is needed.
        let mut next = std::mem::take(&mut self.scratch);
        if next.len() != self.curr.num_cells() {
            next.clear();
            next.resize(self.curr.num_cells(), 0.0);
        }

        let curr_vals = self.curr.values();
        let prev_vals = self.prev.values();
        let strides = self.curr.strides();

        let kernel = |seg: &Segment, out: &mut [f64]| -> SegmentResult {
            let mut src_sum = 0.0f64;
            let mut max_l1: Option<u64> = None;
            let mut bad: Option<usize> = None;
            let mut idx = seg.base;
            let mut i_last = seg.lo_last;
            for slot in out.iter_mut() {
                let u = curr_vals[idx];
                let mut nb = 0.0;
                for &st in strides {
                    nb += curr_vals[idx + st];
                    nb += curr_vals[idx - st];
                }
                let au = u.abs();
                let src = match kind {
                    SourceKind::Tan => {
                        let x = delta * au / np1;
                        if x >= std::f64::consts::FRAC_PI_2 && bad.is_none() {
                            bad = Some(idx);
                        }
                        c_tan * powr(au, p - 1.0) * tan_eval(x)
                    }
                    SourceKind::Power => d2 * powr(au, p) / tnp1,
                };
                let v = clap * nb + cc * u - prev_vals[idx] + src;
                *slot = v;
                src_sum += src;
                if v != 0.0 {
                    let l1 = seg.prefix_l1 + i_last.unsigned_abs();
                    if max_l1.map_or(true, |m| l1 > m) {
                        max_l1 = Some(l1);
                    }
                    if !v.is_finite() && bad.is_none() {
                        bad = Some(idx);
                    }
                }
                idx += 1;
                i_last += 1;
            }
            SegmentResult { src_sum, max_l1, bad }
        };

        // Carve disjoint output windows, one per segment, in order.
        let mut windows: Vec<&mut [f64]> = Vec::with_capacity(segments.len());
        {
            let mut rest = next.as_mut_slice();
            let mut offset = 0usize;
            for seg in &segments {
                let (_, r) = rest.split_at_mut(seg.base - offset);
                let (w, r2) = r.split_at_mut(seg.len());
                windows.push(w);
                rest = r2;
                offset = seg.base + seg.len();
            }
        }

        let results: Vec<SegmentResult> = if total_sites >= PARALLEL_THRESHOLD {
            segments
                .par_iter()
                .zip(windows.into_par_iter())
                .map(|(seg, w)| kernel(seg, w))
                .collect()
        } else {
            segments
                .iter()
                .zip(windows)
                .map(|(seg, w)| kernel(seg, w))
                .collect()
        };

        let mut src_total = 0.0f64;
        let mut supp_next: Option<u64> = None;
        let mut first_bad: Option<usize> = None;
        for r in &results {
            src_total += r.src_sum;
            if let Some(l1) = r.max_l1 {
                if supp_next.map_or(true, |m| l1 > m) {
                    supp_next = Some(l1);
                }
            }
            if first_bad.is_none() {
                first_bad = r.bad;
            }
        }

        if let Some(idx) = first_bad {
            let site = flat_to_site(&self.curr, idx);
            self.scratch = next;
            let value_domain = {
                let au = curr_vals_at(&self.curr, &site).abs();
                delta * au / np1 >= std::f64::consts::FRAC_PI_2
            };
            return Err(if value_domain && kind == SourceKind::Tan {
                Error::TanDomain { n: n + 1, site }
            } else {
                Error::NonFinite { n: n + 1, site }
            });
        }

        let next_field = LatticeField::from_parts(dim, self.curr.lo_arr(), self.curr.shape_arr(), next);
        let old_prev = std::mem::replace(&mut self.prev, std::mem::replace(&mut self.curr, next_field));
        self.scratch = old_prev.take_values();
        self.supp_prev = self.supp_curr;
        self.supp_curr = supp_next;
        self.last_source_sum = src_total;
        self.n += 1;
        Ok(())
    }

    fn ensure_capacity(&mut self, needed_radius: u64) -> Result<()> {
        if self.curr.contains_centered(needed_radius) && self.prev.contains_centered(needed_radius) {
            return Ok(());
        }
        let current = (-self.curr.box_lo()[0]) as u64;
        let grown = needed_radius.max(current + current / 2 + 8);
        self.prev.grow_to_centered(grown)?;
        self.curr.grow_to_centered(grown)?;
        self.scratch = Vec::new();
        Ok(())
    }
}

const PARALLEL_THRESHOLD: usize = 1 << 15;

/// Segment size for the 1-d line; fixed so that reductions are independent
/// of the worker count.
const LINE_SEGMENT: usize = 1 << 12;

struct SegmentResult {
    src_sum: f64,
    max_l1: Option<u64>,
    bad: Option<usize>,
}

/// A contiguous last-axis run inside the update ball.
struct Segment {
    base: usize,
    lo_last: i64,
    hi_last: i64,
    prefix_l1: u64,
}

impl Segment {
    fn len(&self) -> usize {
        (self.hi_last - self.lo_last + 1) as usize
    }
}

/// Splits the L1 ball of the given radius into lexicographically ordered
/// contiguous runs of the field's storage. The split depends only on the
/// geometry, never on thread count.
fn build_segments(field: &LatticeField, radius: i64) -> Vec<Segment> {
    let dim = field.dim();
    let lo = field.box_lo().to_vec();
    let strides = field.strides().to_vec();
    let mut segments = Vec::new();
    let mut coords = [0i64; MAX_DIM];
    build_rec(dim, 0, radius, 0, 0, &lo, &strides, &mut coords, &mut segments);
    segments
}

#[allow(clippy::too_many_arguments)]
fn build_rec(
    dim: usize,
    axis: usize,
    budget: i64,
    base: usize,
    prefix_l1: u64,
    lo: &[i64],
    strides: &[usize],
    coords: &mut [i64; MAX_DIM],
    out: &mut Vec<Segment>,
) {
    if axis == dim - 1 {
        let lo_last = -budget;
        let hi_last = budget;
        let row_base = base + (lo_last - lo[axis]) as usize * strides[axis];
        let mut start = lo_last;
        while start <= hi_last {
            let end = (start + LINE_SEGMENT as i64 - 1).min(hi_last);
            out.push(Segment {
                base: row_base + (start - lo_last) as usize,
                lo_last: start,
                hi_last: end,
                prefix_l1,
            });
            start = end + 1;
        }
        return;
    }
    for v in -budget..=budget {
        coords[axis] = v;
        let b2 = base + (v - lo[axis]) as usize * strides[axis];
        build_rec(dim, axis + 1, budget - v.abs(), b2, prefix_l1 + v.unsigned_abs(), lo, strides, coords, out);
    }
}

fn flat_to_site(field: &LatticeField, mut idx: usize) -> Vec<i64> {
    let mut site = vec![0i64; field.dim()];
    for k in 0..field.dim() {
        site[k] = field.box_lo()[k] + (idx / field.strides()[k]) as i64;
        idx %= field.strides()[k];
    }
    site
}

fn curr_vals_at(field: &LatticeField, site: &[i64]) -> f64 {
    field.get(site)
}

/// Arguments below 2^-27 are returned unchanged by every common libm tan
/// (and `tan x` rounds to `x` there anyway), so the call can be skipped
/// without changing a single bit.
const TAN_TINY: f64 = 1.0 / (1u64 << 27) as f64;

#[inline]
pub(crate) fn tan_eval(x: f64) -> f64 {
    if x < TAN_TINY {
        x
    } else {
        x.tan()
    }
}

/// Power with exact shortcuts for the exponents the schemes actually hit.
#[inline]
pub(crate) fn powr(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 3.0 {
        x * x * x
    } else if e == 0.5 {
        x.sqrt()
    } else {
        x.powf(e)
    }
}

/// Nonlinear source of the tangent rule at a single site.
///
/// `|u|^(p-1)` is the continuous extension through zero: `powr(0, p-1) = 0`.
pub fn tan_source(u: f64, n: u64, params: &SchemeParams) -> f64 {
    let delta = params.delta();
    let au = u.abs();
    let np1 = powr(n as f64, params.p - 1.0);
    powr(delta, 2.0 - params.p) * powr(au, params.p - 1.0) * tan_eval(delta * au / np1)
}

/// Nonlinear source of the power rule at a single site.
pub fn power_source(u: f64, n: u64, params: &SchemeParams) -> f64 {
    let delta = params.delta();
    let au = u.abs();
    let tnp1 = powr(params.t_of(n), params.p - 1.0);
    delta * delta * powr(au, params.p) / tnp1
}

/// Checks the blow-up criterion `|u_n| >= (pi/2) delta^-1 n^(p-1)` on a
/// field at step `n`, returning the lexicographically first offending site.
///
/// A site is also flagged when rounding pushes its tangent argument to
/// pi/2 even though the threshold comparison just missed; this keeps the
/// stepper's precondition exact.
pub fn check_blowup_field(field: &LatticeField, n: u64, params: &SchemeParams) -> Option<BlowUpVerdict> {
    check_blowup_with_max(field, n, params, field.max_abs())
}

/// Same check with the field's max |u| already in hand (the run loop
/// computes it while recording observables).
pub(crate) fn check_blowup_with_max(
    field: &LatticeField,
    n: u64,
    params: &SchemeParams,
    max_abs: f64,
) -> Option<BlowUpVerdict> {
    let thr = params.blowup_threshold(n);
    let delta = params.delta();
    let np1 = powr(n as f64, params.p - 1.0);
    let offending = |u: f64| -> bool {
        let au = u.abs();
        au >= thr || delta * au / np1 >= std::f64::consts::FRAC_PI_2
    };
    if !offending(max_abs) {
        return None;
    }
    for (site, v) in field.iter_nonzero() {
        if offending(v) {
            return Some(BlowUpVerdict::blew_up(n, site));
        }
    }
    // max_abs flagged, so some site must verify the same predicate.
    unreachable!("blow-up scan lost the offending site");
}

/// Blow-up check for the current level of a state.
pub fn check_blowup(state: &SimState) -> Option<BlowUpVerdict> {
    check_blowup_field(state.curr(), state.n(), state.params())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::neighbor_sum;

    fn params_d1(p: f64, n0: u64) -> SchemeParams {
        SchemeParams::with_critical_h(1, p, n0, 1, 10_000).unwrap()
    }

    /// Independent one-site calculator: transcribes the update formula
    /// without sharing any code with the stepping kernel.
    fn one_site_tan(
        prev: f64,
        u: f64,
        nb: f64,
        d: usize,
        delta: f64,
        h: f64,
        p: f64,
        n: u64,
    ) -> f64 {
        let lin = (delta * delta / (h * h)) * nb + (2.0 - 2.0 * d as f64 * delta * delta / (h * h)) * u - prev;
        lin + delta.powf(2.0 - p) * u.abs().powf(p - 1.0) * (delta * u.abs() / (n as f64).powf(p - 1.0)).tan()
    }

    #[test]
    fn params_validation() {
        assert!(SchemeParams::new(0, 2.0, 2, 0.5, 1, 100).is_err());
        assert!(SchemeParams::new(5, 2.0, 2, 0.5, 1, 100).is_err());
        assert!(SchemeParams::new(1, 1.0, 2, 0.5, 1, 100).is_err());
        assert!(SchemeParams::new(1, 2.0, 0, 0.5, 1, 100).is_err());
        assert!(SchemeParams::new(1, 2.0, 2, 0.0, 1, 100).is_err());
        assert!(SchemeParams::new(1, 2.0, 2, 0.5, 1, 0).is_err());
    }

    #[test]
    fn critical_h_never_flags_cfl() {
        for dim in 1..=4 {
            for n0 in [1u64, 2, 3, 7, 10] {
                let p = SchemeParams::with_critical_h(dim, 2.0, n0, 1, 100).unwrap();
                assert!(!p.cfl_exceeded(), "d={} n0={} ratio={}", dim, n0, p.lap_ratio());
                assert!(p.lap_ratio() > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn theorem_range_flag() {
        let p = params_d1(3.0, 2);
        assert!(!p.beyond_guaranteed_range());
        let p = params_d1(3.0001, 2);
        assert!(p.beyond_guaranteed_range());
        let p2 = SchemeParams::with_critical_h(2, 2.0, 2, 1, 100).unwrap();
        assert!(!p2.beyond_guaranteed_range());
        let p2 = SchemeParams::with_critical_h(2, 2.1, 2, 1, 100).unwrap();
        assert!(p2.beyond_guaranteed_range());
    }

    #[test]
    fn init_spike_scales_by_delta() {
        let params = SchemeParams::with_critical_h(1, 2.0, 10, 1, 100).unwrap();
        let f = InitialShape::Zero;
        let g = InitialShape::Spike { amplitude: 1.0 };
        let s = init_state(&params, &f, &g, 1.0).unwrap();
        assert_eq!(s.curr().get(&[0]), 0.1);
        assert_eq!(s.prev().max_abs(), 0.0);
        assert_eq!(s.n(), 11);
    }

    #[test]
    fn init_const_ball_with_zero_g() {
        let params = SchemeParams::with_critical_h(1, 2.0, 4, 1, 100).unwrap();
        let f = InitialShape::ConstBall { amplitude: 1.0, radius: 1 };
        let s = init_state(&params, &f, &InitialShape::Zero, 1.0).unwrap();
        assert_eq!(s.curr(), s.prev());
        assert_eq!(s.curr().iter_nonzero().count(), 3);
        assert!(s.curr().iter_nonzero().all(|(_, v)| v == 1.0));
    }

    #[test]
    fn init_tiny_amplitude() {
        let params = SchemeParams::with_critical_h(1, 2.0, 1000, 0, 100).unwrap();
        let f = InitialShape::Zero;
        let g = InitialShape::ConstBall { amplitude: 1e-6, radius: 0 };
        let s = init_state(&params, &f, &g, 1.0).unwrap();
        let got = s.curr().get(&[0]);
        assert!((got - 1e-9).abs() <= 1e-9 * 1e-14, "got {}", got);
    }

    #[test]
    fn init_rejects_support_violation() {
        let params = SchemeParams::with_critical_h(1, 2.0, 2, 1, 100).unwrap();
        let f = InitialShape::ConstBall { amplitude: 1.0, radius: 2 };
        let err = init_state(&params, &f, &InitialShape::Zero, 1.0).unwrap_err();
        match err {
            Error::SupportViolation { which, site, .. } => {
                assert_eq!(which, "f");
                assert_eq!(site, vec![-2]);
            }
            other => panic!("unexpected error {:?}", other),
        }
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let params = params_d1(2.0, 2);
        let mut s = init_state(&params, &InitialShape::Zero, &InitialShape::Zero, 1.0).unwrap();
        for _ in 0..50 {
            s.step_tan().unwrap();
        }
        assert_eq!(s.curr().max_abs(), 0.0);
        assert_eq!(s.support(), None);
        assert_eq!(s.n(), params.n0 + 1 + 50);
    }

    #[test]
    fn tan_source_scalar_example() {
        // p=2, delta=0.1, a=0.01, n=10: source = 0.01 * tan(1e-4).
        let params = SchemeParams::new(1, 2.0, 10, 0.1, 1, 100).unwrap();
        let got = tan_source(0.01, 10, &params);
        let want = 0.01 * (1e-4f64).tan();
        assert!((got - want).abs() <= want.abs() * 1e-15, "got {} want {}", got, want);
    }

    #[test]
    fn step_tan_matches_one_site_calculator() {
        let params = SchemeParams::new(1, 2.0, 10, 0.1, 1, 100).unwrap();
        let f = InitialShape::Zero;
        let g = InitialShape::Spike { amplitude: 0.1 };
        let mut s = init_state(&params, &f, &g, 1.0).unwrap();
        let a = s.curr().get(&[0]);
        let n = s.n();
        s.step_tan().unwrap();
        let want_center = one_site_tan(0.0, a, 0.0, 1, 0.1, 0.1, 2.0, n);
        let want_side = one_site_tan(0.0, 0.0, a, 1, 0.1, 0.1, 2.0, n);
        let got_center = s.curr().get(&[0]);
        let got_side = s.curr().get(&[1]);
        assert!((got_center - want_center).abs() <= want_center.abs() * 1e-15);
        assert!((got_side - want_side).abs() <= want_side.abs() * 1e-15);
        assert_eq!(s.curr().get(&[-1]), got_side, "left-right symmetry");
    }

    #[test]
    fn step_power_hand_expansion() {
        // d=1, h=delta, cc=0: next(0) = delta^2 a^p / t_n^(p-1), next(+-1) = a.
        let n0 = 4;
        let p = 2.5;
        let params = SchemeParams::new(1, p, n0, 1.0 / n0 as f64, 1, 100).unwrap();
        let a = 0.3;
        let g = InitialShape::Spike { amplitude: a / params.delta() };
        let mut s = init_state(&params, &InitialShape::Zero, &g, 1.0).unwrap();
        let u0 = s.curr().get(&[0]);
        let n = s.n();
        s.step_power().unwrap();
        let t_n = params.t_of(n);
        let want = params.delta() * params.delta() * u0.abs().powf(p) / t_n.powf(p - 1.0);
        let got = s.curr().get(&[0]);
        assert!((got - want).abs() <= want.abs() * 1e-14, "got {} want {}", got, want);
        assert_eq!(s.curr().get(&[1]), u0);
        assert_eq!(s.curr().get(&[-1]), u0);
    }

    #[test]
    fn finite_propagation_per_step() {
        let params = SchemeParams::with_critical_h(2, 1.5, 3, 2, 100).unwrap();
        let f = InitialShape::ConstBall { amplitude: 0.5, radius: 2 };
        let g = InitialShape::ConstBall { amplitude: 1.0, radius: 1 };
        let mut s = init_state(&params, &f, &g, 1.0).unwrap();
        for k in 1..=30u64 {
            s.step_tan().unwrap();
            let supp = support_radius(s.curr()).unwrap();
            assert!(supp <= params.radius + k, "step {}: supp {} too wide", k, supp);
        }
    }

    #[test]
    fn neighbor_sum_consistent_with_kernel() {
        // One tan step vs a by-hand reconstruction through public ops.
        let params = SchemeParams::with_critical_h(2, 2.0, 5, 2, 100).unwrap();
        let f = InitialShape::Gaussian { amplitude: 0.4, radius: 2 };
        let g = InitialShape::ConstBall { amplitude: 0.2, radius: 1 };
        let mut s = init_state(&params, &f, &g, 1.0).unwrap();
        let prev = s.prev().clone();
        let curr = s.curr().clone();
        let n = s.n();
        s.step_tan().unwrap();
        let delta = params.delta();
        let clap = delta * delta / (params.h * params.h);
        let cc = 2.0 - 2.0 * params.dim as f64 * clap;
        for site in crate::lattice::L1Ball::new(2, 6).unwrap().iter() {
            let u = curr.get(&site);
            let want = clap * neighbor_sum(&curr, &site) + cc * u - prev.get(&site) + tan_source(u, n, &params);
            let got = s.curr().get(&site);
            assert!(
                (got - want).abs() <= 1e-15 * want.abs().max(1e-300),
                "site {:?}: got {} want {}",
                site,
                got,
                want
            );
        }
    }

    #[test]
    fn blowup_boundary_is_detected() {
        let params = params_d1(2.0, 2);
        let g = InitialShape::Spike { amplitude: 1.0 };
        let mut s = init_state(&params, &InitialShape::Zero, &g, 1.0).unwrap();
        let n = s.n();
        let thr = params.blowup_threshold(n);
        let idx = s.curr.index_of(&[0]).unwrap();
        s.curr.values_mut()[idx] = thr;
        let v = check_blowup(&s).expect("exact threshold must blow up");
        assert_eq!(v.status, RunStatus::BlewUp);
        assert_eq!(v.n_b, Some(n));
        assert_eq!(v.site, Some(vec![0]));

        s.curr.values_mut()[idx] = thr * (1.0 - 1e-9);
        assert!(check_blowup(&s).is_none());
    }

    #[test]
    fn blowup_tie_break_is_lexicographic() {
        let params = params_d1(2.0, 2);
        let g = InitialShape::ConstBall { amplitude: 1.0, radius: 1 };
        let mut s = init_state(&params, &InitialShape::Zero, &g, 1.0).unwrap();
        let thr = params.blowup_threshold(s.n());
        for site in [[-1i64], [1i64]] {
            let idx = s.curr.index_of(&site).unwrap();
            s.curr.values_mut()[idx] = -thr * 2.0;
        }
        let v = check_blowup(&s).unwrap();
        assert_eq!(v.site, Some(vec![-1]));
    }

    #[test]
    fn nonnegative_source_for_all_inputs() {
        let params = params_d1(2.5, 3);
        for &u in &[-10.0f64, -0.5, 0.0, 1e-8, 0.3, 7.9] {
            for n in [4u64, 10, 100] {
                let thr = params.blowup_threshold(n);
                if u.abs() >= thr {
                    continue;
                }
                assert!(tan_source(u, n, &params) >= 0.0);
                assert!(power_source(u, n, &params) >= 0.0);
            }
        }
    }

    #[test]
    fn deterministic_across_reruns() {
        let run_once = || {
            let params = SchemeParams::with_critical_h(2, 2.0, 3, 1, 100).unwrap();
            let f = InitialShape::ConstBall { amplitude: 0.3, radius: 1 };
            let g = InitialShape::ConstBall { amplitude: 1.0, radius: 1 };
            let mut s = init_state(&params, &f, &g, 1.0).unwrap();
            for _ in 0..25 {
                s.step_tan().unwrap();
            }
            s.curr().iter_nonzero().collect::<Vec<_>>()
        };
        let a = run_once();
        let b = run_once();
        assert_eq!(a, b);
    }
}
