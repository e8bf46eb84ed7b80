//! A simulation and verification lab for an explicit lattice discretization
//! of a semilinear wave equation whose nonlinearity carries a tangent
//! factor. The tangent makes finite-time blow-up observable in exact
//! arithmetic: a solution value reaching `(pi/2) delta^-1 n^(p-1)` puts the
//! tangent at its pole, and detecting that threshold is the run verdict.
//!
//! Alongside the evolution the crate tracks the aggregate sum `U_n`, its
//! convexity, an energy functional, and a battery of growth bounds that the
//! pre-verdict trajectory must satisfy; each is evaluated as a runtime
//! monitor. Standalone combinatorial and sequence oracles (L1-ball counting,
//! convex-growth conclusions) double as property-test harnesses.

pub mod bounds;
pub mod error;
pub mod lattice;
pub mod observables;
pub mod runner;
pub mod scheme;
pub mod shapes;

pub use bounds::{
    check_hypotheses, check_linear_growth, check_nlogn_growth, growth_monitors, lifespan_fit,
    ConvexCheck, HypothesisReport, LifespanFit, MonitorReport, SequenceWindow,
};
pub use error::{Error, Result};
pub use lattice::{
    count_l1_ball, l1_ball_bound, l1_norm, neighbor_sum, read_snapshot, support_radius,
    write_snapshot, L1Ball, LatticeField, MAX_DIM,
};
pub use observables::{
    compute_constants, energy, lattice_sum, lattice_sum_compensated, GrowthConstants, Trace,
    TraceRecord,
};
pub use runner::{run, ExponentInfo, RunOptions, RunOutcome, RunReport};
pub use scheme::{
    check_blowup, check_blowup_field, init_state, power_source, tan_source, BlowUpVerdict,
    RunStatus, SchemeParams, SimState, DEFAULT_STEP_BUDGET,
};
pub use shapes::InitialShape;
