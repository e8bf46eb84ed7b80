//! Aggregate observables recorded alongside a run: the lattice sum `U_n`,
//! its finite differences, the energy functional, and the constants that
//! drive the growth monitors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::LatticeField;
use crate::scheme::{powr, SchemeParams};

/// Sum of the field over all sites, accumulated in the fixed lexicographic
/// storage order so the value is reproducible bit for bit.
pub fn lattice_sum(field: &LatticeField) -> f64 {
    let mut acc = 0.0f64;
    for &v in field.values() {
        acc += v;
    }
    acc
}

/// Kahan-compensated variant of [`lattice_sum`], used as a cross-check
/// oracle for the plain accumulation.
pub fn lattice_sum_compensated(field: &LatticeField) -> f64 {
    let mut acc = 0.0f64;
    let mut carry = 0.0f64;
    for &v in field.values() {
        let y = v - carry;
        let t = acc + y;
        carry = (t - acc) - y;
        acc = t;
    }
    acc
}

/// Energy functional `E_n = (U_n - U_{n-1})^2 - (C/(p+1)) (U_{n-1}/(n-1))^(p+1)`.
///
/// With `c = 0` the second term is absent by definition, not a `0 * NaN`.
pub fn energy(n: u64, u_prev: f64, u_curr: f64, c: f64, p: f64) -> f64 {
    assert!(n >= 2, "energy needs n >= 2, got {}", n);
    let du = u_curr - u_prev;
    if c == 0.0 {
        return du * du;
    }
    du * du - c / (p + 1.0) * (u_prev / (n - 1) as f64).powf(p + 1.0)
}

/// Per-step record of observables. `d2u` is filled one step late and the
/// energy only exists once the constants are known, hence the options.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub n: u64,
    pub t: f64,
    pub u_sum: f64,
    pub du: Option<f64>,
    pub d2u: Option<f64>,
    pub max_abs: f64,
    pub threshold: f64,
    pub energy: Option<f64>,
    pub supp: Option<u64>,
    /// Total nonlinear source added by the step taken FROM this level;
    /// equals `d2u` up to rounding. Not part of the CSV interface.
    #[serde(skip)]
    pub source_sum: Option<f64>,
}

/// Observables for every recorded level of a run, starting at `n0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub n0: u64,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(n0: u64) -> Self {
        Self { n0, records: Vec::new() }
    }

    pub fn record_for(&self, n: u64) -> Option<&TraceRecord> {
        if n < self.n0 {
            return None;
        }
        let r = self.records.get((n - self.n0) as usize)?;
        debug_assert_eq!(r.n, n);
        Some(r)
    }

    pub fn u(&self, n: u64) -> Option<f64> {
        self.record_for(n).map(|r| r.u_sum)
    }

    pub fn last_n(&self) -> Option<u64> {
        self.records.last().map(|r| r.n)
    }

    /// Writes the trace as CSV with the fixed column order
    /// `n,t_n,U,dU,d2U,maxAbs,threshold,E,supp`; missing values are empty cells.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "n,t_n,U,dU,d2U,maxAbs,threshold,E,supp")?;
        for r in &self.records {
            write!(w, "{},{},{},", r.n, r.t, r.u_sum)?;
            write_opt(w, r.du)?;
            w.write_all(b",")?;
            write_opt(w, r.d2u)?;
            write!(w, ",{},{},", r.max_abs, r.threshold)?;
            write_opt(w, r.energy)?;
            w.write_all(b",")?;
            match r.supp {
                Some(s) => writeln!(w, "{}", s)?,
                None => writeln!(w)?,
            }
        }
        Ok(())
    }
}

fn write_opt<W: std::io::Write>(w: &mut W, v: Option<f64>) -> std::io::Result<()> {
    if let Some(v) = v {
        write!(w, "{}", v)?;
    }
    Ok(())
}

/// Constants and index thresholds that drive the growth monitors,
/// measured from a run's trace prefix.
///
/// `n4` is the smallest integer making `c3 >= p + d`; it routinely exceeds
/// any representable integer, so it is reported as `None` with `log_n4`
/// carrying the exact natural-log requirement instead.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthConstants {
    /// Measured initial increment `I = U_{N0+1} - U_{N0}`.
    pub increment: f64,
    pub c1: f64,
    pub c2: f64,
    /// Largest coefficient admissible for the energy functional.
    pub c_energy: f64,
    pub c3: f64,
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
    pub n4: Option<u64>,
    pub log_n4: Option<f64>,
}

/// Ceiling of `e^3`; the integer threshold used in place of the real `e^3`.
pub const E_CUBED_CEIL: u64 = 21;

/// Derives the monitor constants from a trace that covers steps through
/// `N2 + 1`.
///
/// * `C1 = delta^(3-p) * 2^(-(3d+1)(p-1))`
/// * `C2 = C1 * (I/2)^p`
/// * `c_energy = min(C1, (p+1) (U_{N2+1}-U_{N2})^2 (N2/U_{N2})^(p+1))`,
///   the largest value satisfying both smallness conditions.
pub fn compute_constants(params: &SchemeParams, trace: &Trace) -> Result<GrowthConstants> {
    let n0 = params.n0;
    let r = params.radius;
    let p = params.p;
    let d = params.dim as f64;

    let n1 = n0.max(r);
    let n2 = (2 * n0).max(r);
    let n3 = n2
        .checked_pow(3)
        .map_or(u64::MAX, |c| c.max(E_CUBED_CEIL));

    let u_n0 = trace.u(n0).ok_or_else(|| missing(n0))?;
    let u_n0p1 = trace.u(n0 + 1).ok_or_else(|| missing(n0 + 1))?;
    let increment = u_n0p1 - u_n0;
    if !(increment > 0.0) {
        return Err(Error::ConstantsUnavailable(format!(
            "initial increment must be positive, measured {}",
            increment
        )));
    }

    let u_n2 = trace.u(n2).ok_or_else(|| missing(n2))?;
    let u_n2p1 = trace.u(n2 + 1).ok_or_else(|| missing(n2 + 1))?;
    if !(u_n2 > 0.0) {
        return Err(Error::ConstantsUnavailable(format!(
            "U_{{N2}} must be positive, measured {}",
            u_n2
        )));
    }

    let delta = params.delta();
    let c1 = powr(delta, 3.0 - p) * (-(3.0 * d + 1.0) * (p - 1.0)).exp2();
    let c2 = c1 * powr(increment / 2.0, p);

    let du2 = u_n2p1 - u_n2;
    let from_smallness = (p + 1.0) * du2 * du2 * (n2 as f64 / u_n2).powf(p + 1.0);
    let c_energy = c1.min(from_smallness);

    // Smallest integer N4 with
    //   sqrt(c/(p+1)) * ((c2/3) ln N4)^((p-1)/2) >= p + d.
    let log_n4 = (3.0 / c2) * ((p + d) * ((p + 1.0) / c_energy).sqrt()).powf(2.0 / (p - 1.0));
    let (n4, ln_actual) = if log_n4.is_finite() && log_n4.exp().is_finite() {
        let n4 = log_n4.exp().ceil();
        if n4 <= u64::MAX as f64 {
            (Some(n4 as u64), (n4 as u64 as f64).ln())
        } else {
            (None, log_n4)
        }
    } else {
        (None, log_n4)
    };
    let c3 = (c_energy / (p + 1.0)).sqrt() * ((c2 / 3.0) * ln_actual).powf((p - 1.0) / 2.0);

    Ok(GrowthConstants {
        increment,
        c1,
        c2,
        c_energy,
        c3,
        n1,
        n2,
        n3,
        n4,
        log_n4: if log_n4.is_finite() { Some(log_n4) } else { None },
    })
}

fn missing(n: u64) -> Error {
    Error::ConstantsUnavailable(format!("trace does not cover step {}", n))
}
