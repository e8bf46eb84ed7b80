//! Run orchestration: the check/record/step loop, trace assembly, and the
//! final report with verdict, hypothesis check and monitor results.

use serde::Serialize;

use crate::bounds::{check_hypotheses, growth_monitors, HypothesisReport, MonitorReport};
use crate::error::{Error, Result};
use crate::lattice::support_radius;
use crate::observables::{compute_constants, energy, GrowthConstants, Trace, TraceRecord};
use crate::scheme::{check_blowup_with_max, init_state, BlowUpVerdict, RunStatus, SchemeParams};
use crate::shapes::InitialShape;

/// Knobs for a single run that are not scheme parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOptions {
    /// Amplitude multiplier applied to both data shapes.
    pub epsilon: f64,
    /// Evaluate the monitor battery after the run.
    pub monitors: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { epsilon: 1.0, monitors: true }
    }
}

/// Everything a run reports besides the raw trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub status: RunStatus,
    pub n_b: Option<u64>,
    pub blowup_site: Option<Vec<i64>>,
    pub overflow: bool,
    pub steps_taken: u64,
    pub final_n: u64,
    pub hypotheses: HypothesisReport,
    pub constants: Option<GrowthConstants>,
    pub constants_unavailable: Option<String>,
    pub monitors: Vec<MonitorReport>,
    pub warnings: Vec<String>,
    pub exponents: ExponentInfo,
}

/// Critical-exponent metadata carried in reports for context.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentInfo {
    /// `1 + 2/d`.
    pub fujita: f64,
    /// Positive root of `(d+1) q^2 - (d+3) q - 2 = 0` (the wave-equation
    /// critical exponent shifted by two dimensions).
    pub strauss_shifted: f64,
    /// `max(fujita, strauss_shifted)`.
    pub critical: f64,
}

impl ExponentInfo {
    pub fn for_dim(d: usize) -> Self {
        let df = d as f64;
        // Positive root of (d-1)p^2 - (d+1)p - 2 = 0 evaluated at d+2.
        let a = df + 1.0;
        let b = -(df + 3.0);
        let c = -2.0;
        let strauss_shifted = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        let fujita = 1.0 + 2.0 / df;
        Self { fujita, strauss_shifted, critical: fujita.max(strauss_shifted) }
    }
}

/// A completed run: per-step observables plus the report.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Trace,
    pub report: RunReport,
}

/// Executes the full loop: blow-up check, observable recording, tangent
/// step — until a verdict or the step budget. One trace record per level,
/// including the verdict level.
pub fn run(
    params: &SchemeParams,
    f: &InitialShape,
    g: &InitialShape,
    opts: &RunOptions,
) -> Result<RunOutcome> {
    let mut state = init_state(params, f, g, opts.epsilon)?;
    let hypotheses = check_hypotheses(params, state.prev(), state.curr());

    let mut warnings = Vec::new();
    if params.beyond_guaranteed_range() {
        warnings.push(format!(
            "p = {} exceeds 1 + 2/d = {}; blow-up is no longer guaranteed",
            params.p,
            params.fujita_exponent()
        ));
    }
    if params.cfl_exceeded() {
        warnings.push(format!(
            "d*delta^2/h^2 = {} > 1: the stencil's center coefficient is negative",
            params.lap_ratio()
        ));
    }
    if hypotheses.initial_sum_zero {
        warnings.push("initial lattice sum is exactly zero (hypothesis boundary)".into());
    }

    let mut trace = Trace::new(params.n0);
    let mut constants: Option<GrowthConstants> = None;
    let mut constants_unavailable: Option<String> = None;

    // Level N0 comes from the first data level.
    let (u0_sum, u0_max) = state.prev().sum_and_max_abs();
    record_level(
        &mut trace,
        params,
        params.n0,
        u0_sum,
        u0_max,
        support_radius(state.prev()),
        &constants,
    );

    // The blow-up criterion admits N_b = N0, so the first level is checked too.
    let verdict;
    if let Some(v) = check_blowup_with_max(state.prev(), params.n0, params, u0_max) {
        verdict = v;
    } else {
        verdict = loop {
            let n = state.n();
            let (u_sum, u_max) = state.curr().sum_and_max_abs();
            record_level(&mut trace, params, n, u_sum, u_max, state.support(), &constants);
            if constants.is_none() && constants_unavailable.is_none() {
                let n2 = (2 * params.n0).max(params.radius);
                if n == n2 + 1 {
                    match compute_constants(params, &trace) {
                        Ok(c) => {
                            // The record at N2+1 is the first with a defined energy.
                            backfill_energy(&mut trace, params, &c);
                            constants = Some(c);
                        }
                        Err(Error::ConstantsUnavailable(reason)) => {
                            constants_unavailable = Some(reason);
                        }
                        Err(other) => return Err(other),
                    }
                }
            }
            if let Some(v) = check_blowup_with_max(state.curr(), n, params, u_max) {
                break v;
            }
            let steps_taken = n - (params.n0 + 1);
            if steps_taken >= params.step_budget {
                break BlowUpVerdict::budget_exhausted();
            }
            match state.step_tan() {
                Ok(()) => {
                    let k = (state.n() - 1 - params.n0) as usize;
                    trace.records[k].source_sum = Some(state.last_source_sum());
                    fill_d2u(&mut trace, state.n());
                }
                Err(Error::NonFinite { .. }) | Err(Error::TanDomain { .. }) => {
                    break BlowUpVerdict::numeric_failure();
                }
                Err(other) => return Err(other),
            }
        };
    }

    // d2U for the last interior record needs the verdict level's U, which
    // was recorded before the loop broke, so one more fill pass closes it.
    if let Some(last) = trace.last_n() {
        fill_d2u(&mut trace, last);
    }

    let monitor_end = match verdict.status {
        RunStatus::BlewUp => verdict.n_b.unwrap_or(params.n0).saturating_sub(1),
        _ => trace.last_n().unwrap_or(params.n0),
    };
    let monitors = match (&constants, opts.monitors && hypotheses.applicable) {
        (Some(c), true) => growth_monitors(&trace, params, c, monitor_end),
        _ => Vec::new(),
    };

    let steps_taken = trace
        .last_n()
        .unwrap_or(params.n0)
        .saturating_sub(params.n0 + 1);
    let report = RunReport {
        status: verdict.status,
        n_b: verdict.n_b,
        blowup_site: verdict.site,
        overflow: verdict.overflow,
        steps_taken,
        final_n: trace.last_n().unwrap_or(params.n0),
        hypotheses,
        constants,
        constants_unavailable,
        monitors,
        warnings,
        exponents: ExponentInfo::for_dim(params.dim),
    };
    Ok(RunOutcome { trace, report })
}

fn record_level(
    trace: &mut Trace,
    params: &SchemeParams,
    n: u64,
    u_sum: f64,
    max_abs: f64,
    supp: Option<u64>,
    constants: &Option<GrowthConstants>,
) {
    let du = trace.last_n().and_then(|_| trace.u(n.wrapping_sub(1))).map(|prev| u_sum - prev);
    let e = constants.as_ref().and_then(|c| {
        if n > c.n2 {
            trace.u(n - 1).map(|u_prev| energy(n, u_prev, u_sum, c.c_energy, params.p))
        } else {
            None
        }
    });
    trace.records.push(TraceRecord {
        n,
        t: params.t_of(n),
        u_sum,
        du,
        d2u: None,
        max_abs,
        threshold: params.blowup_threshold(n),
        energy: e,
        supp,
        source_sum: None,
    });
}

/// Fills `d2u` of level `latest - 1` once `latest` has been recorded.
fn fill_d2u(trace: &mut Trace, latest: u64) {
    if latest < trace.n0 + 2 {
        return;
    }
    let mid = latest - 1;
    let (u_prev, u_mid, u_next) = match (trace.u(mid - 1), trace.u(mid), trace.u(latest)) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return,
    };
    let k = (mid - trace.n0) as usize;
    trace.records[k].d2u = Some(u_next - 2.0 * u_mid + u_prev);
}

/// Computes the energy of the newest record once constants become known.
fn backfill_energy(trace: &mut Trace, params: &SchemeParams, c: &GrowthConstants) {
    if let Some(n) = trace.last_n() {
        if n > c.n2 {
            if let Some(u_prev) = trace.u(n - 1) {
                let k = (n - trace.n0) as usize;
                let u_sum = trace.records[k].u_sum;
                trace.records[k].energy = Some(energy(n, u_prev, u_sum, c.c_energy, params.p));
            }
        }
    }
}
