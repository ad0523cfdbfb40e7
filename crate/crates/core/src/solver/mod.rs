//! Placement solvers: the exact branch-and-bound optimizer, fixed-placement
//! baselines, a greedy heuristic, and a brute-force enumeration oracle for
//! small instances.
//!
//! All solvers share one objective, compared lexicographically:
//!
//! 1. maximize the number of admitted users;
//! 2. among equal admission, minimize total network power;
//! 3. among equal power, return the assignment with the smallest
//!    [canonical order](crate::assignment::canonical_order) key, so every
//!    solver is bit-for-bit deterministic and two independent solvers that
//!    both reach the optimum return the *same* assignment.
//!
//! Power is compared internally on an exact 1 microwatt integer grid (see
//! `power::PowerGrid`), which makes tie detection independent of summation
//! order; reported watt values always come from the public
//! [`power_breakdown`](crate::power::power_breakdown) evaluation of the
//! returned assignment.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::assignment::Assignment;
use crate::feasibility::{ConstraintId, SplitOnceRelation};
use crate::scenario::Scenario;

mod baselines;
mod canonical;
mod descent;
mod enumerate;
mod greedy;
mod model;
mod packing;
mod search;

pub use enumerate::{enumerate_optimal, HardLimits, OracleError};

/// Which solver strategy [`solve`] dispatches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Exact flexible-split optimization over all decision variables.
    Fscp,
    /// Everything at the edge: full user-plane and control-plane stacks in
    /// the edge clouds and every admitted user's file cached there. The
    /// split-uniformity constraint (C1) is not applicable and is reported
    /// as bypassed; admission is still maximized exactly subject to edge
    /// cache capacity, processing capacity, and delay.
    AllEc,
    /// Everything centralized: no functions at the edge, nothing cached.
    /// C1 and C12 are reported as bypassed; users whose delay exceeds
    /// their threshold under this fixed placement are dropped.
    AllCc,
    /// Deterministic most-constrained-first heuristic. Feasible but not
    /// proven optimal; never used for acceptance comparisons.
    Greedy,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::Fscp => "fscp",
            Mode::AllEc => "all_ec",
            Mode::AllCc => "all_cc",
            Mode::Greedy => "greedy",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fscp" => Ok(Mode::Fscp),
            "all_ec" => Ok(Mode::AllEc),
            "all_cc" => Ok(Mode::AllCc),
            "greedy" => Ok(Mode::Greedy),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Knobs controlling a single [`solve`] call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Solver strategy.
    pub mode: Mode,
    /// Wall-clock budget in seconds; must be positive. If the exact solver
    /// exhausts the budget it returns the best incumbent found so far with
    /// `proven_optimal = false` (an empty admission if nothing was found).
    pub time_budget_s: f64,
    /// Seed recorded for experiment pipelines. The solvers themselves are
    /// deterministic and do not consume randomness.
    pub seed: u64,
    /// Relative optimality gap on the power objective, in `[0, 1)`.
    /// `0` demands the exact optimum. A positive gap lets the search stop
    /// earlier; the result is then never marked proven.
    pub optimality_gap: f64,
    /// Whether the split-uniformity indicator constraint is an equality or
    /// an upper bound. See [`SplitOnceRelation`].
    pub split_once_relation: SplitOnceRelation,
    /// Whether delay evaluation skips the midhaul chain for edge-served
    /// cached traffic. See
    /// [`user_delay_components`](crate::delay::user_delay_components).
    pub path_aware_delay: bool,
    /// Worker threads for the exact search. The result — including every
    /// byte of the serialized solution — is independent of this value.
    pub parallel_workers: u32,
    /// Optional path receiving line-delimited JSON search-trace records
    /// (incumbent updates with timestamps and node counts). Timing fields
    /// make the trace non-deterministic; it is a diagnostic, not an output.
    #[serde(skip)]
    pub trace_path: Option<String>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mode: Mode::Fscp,
            time_budget_s: 60.0,
            seed: 0,
            optimality_gap: 0.0,
            split_once_relation: SplitOnceRelation::Eq,
            path_aware_delay: false,
            parallel_workers: 1,
            trace_path: None,
        }
    }
}

impl SolverOptions {
    /// Validation messages for out-of-range knobs; empty means usable.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.time_budget_s <= 0.0 || self.time_budget_s.is_nan() {
            errs.push(format!(
                "time_budget_s must be positive (got {})",
                self.time_budget_s
            ));
        }
        if !(0.0..1.0).contains(&self.optimality_gap) {
            errs.push(format!(
                "optimality_gap must lie in [0, 1) (got {})",
                self.optimality_gap
            ));
        }
        if self.parallel_workers == 0 {
            errs.push("parallel_workers must be at least 1".to_string());
        }
        errs
    }
}

/// Result of a [`solve`] call.
///
/// Invariants upheld by every mode:
/// * `assignment` passes [`check`](crate::feasibility::check) with the
///   constraints named in `bypassed` skipped;
/// * `admitted_count == assignment.admitted.len()`;
/// * `dropped` is the sorted complement of `assignment.admitted` in the
///   scenario's user set;
/// * `bound_w <= total_power_w` always, with equality demanded only when
///   `proven_optimal` (the bound is on the power of a maximum-admission
///   solution, so it is meaningful only with `admitted_count` maximal);
/// * serialized form is identical across repeated runs (`wall_time_s` is
///   pinned to zero when written by the CLI; the measured value lives in
///   the sidecar metadata document).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Solution {
    /// The placement decision.
    pub assignment: Assignment,
    /// Network power of `assignment` in watts, from the public breakdown.
    pub total_power_w: f64,
    /// Number of admitted users.
    pub admitted_count: u32,
    /// Whether the solver proved this solution optimal for its mode's
    /// search space (baselines prove their fixed-placement subproblem).
    pub proven_optimal: bool,
    /// Best lower bound on optimal power at maximum admission, in watts.
    pub bound_w: f64,
    /// Wall-clock time spent solving, in seconds.
    pub wall_time_s: f64,
    /// User ids present in the scenario but not admitted, ascending.
    pub dropped: Vec<u32>,
    /// Constraints the chosen mode does not enforce (fixed placements make
    /// C1 vacuous; `all_cc` converts C12 violations into drops).
    pub bypassed: Vec<ConstraintId>,
    /// The options the solution was computed under; carried so downstream
    /// consumers (metrics, delay evaluation) agree with the solver on the
    /// split-uniformity relation and path-aware delay semantics.
    pub options: SolverOptions,
}

/// Errors from [`solve`].
#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    /// The scenario or options failed validation; the string names the
    /// first offending item.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn dropped_of(s: &Scenario, a: &Assignment) -> Vec<u32> {
    s.users
        .iter()
        .map(|u| u.id)
        .filter(|id| !a.admitted.contains(id))
        .collect()
}

/// Solve `s` under `opts`, dispatching on `opts.mode`.
///
/// All modes are deterministic: same scenario plus same options (including
/// different `parallel_workers`) yield an identical [`Solution`].
pub fn solve(s: &Scenario, opts: &SolverOptions) -> Result<Solution, SolveError> {
    if let Some(msg) = opts.validation_errors().into_iter().next() {
        return Err(SolveError::InvalidInput(msg));
    }
    let diags = s.validate();
    if let Some(first) = diags
        .iter()
        .find(|d| d.severity == crate::scenario::Severity::Error)
    {
        return Err(SolveError::InvalidInput(format!(
            "{} ({})",
            first.invariant, first.subject
        )));
    }
    let started = std::time::Instant::now();
    let mut sol = match opts.mode {
        Mode::Fscp => search::solve_exact(s, opts),
        Mode::AllEc => baselines::solve_all_ec(s, opts),
        Mode::AllCc => baselines::solve_all_cc(s, opts),
        Mode::Greedy => greedy::solve_greedy(s, opts),
    };
    sol.wall_time_s = started.elapsed().as_secs_f64();
    debug_assert_eq!(sol.admitted_count as usize, sol.assignment.admitted.len());
    debug_assert!(
        crate::feasibility::check_with(
            &sol.assignment,
            s,
            &crate::feasibility::CheckOptions {
                split_once_relation: opts.split_once_relation,
                path_aware_delay: opts.path_aware_delay,
                skip: sol.bypassed.iter().copied().collect(),
            }
        )
        .is_empty(),
        "solver returned an infeasible assignment"
    );
    Ok(sol)
}

/// Lower bound on total network power, in watts, over every placement in
/// which each cell admits its individually maximal feasible user set (the
/// root of the exact search conditioned on full admission); when no such
/// placement exists it falls back to a bound valid for every feasible
/// placement. Useful as an honest `bound_w` for heuristics and as a sanity
/// anchor in tests: whenever full admission is achievable, no feasible
/// full-admission assignment has lower power than this value.
pub fn root_lower_bound(s: &Scenario, opts: &SolverOptions) -> f64 {
    search::root_lower_bound_w(s, opts)
}

/// Lower bound on total network power, in watts, valid for *every*
/// feasible placement regardless of how many users it admits. Weaker than
/// [`root_lower_bound`] but safe to cite when the reported assignment does
/// not admit every user.
pub fn relaxed_lower_bound(s: &Scenario, opts: &SolverOptions) -> f64 {
    search::relaxed_lower_bound_w(s, opts)
}
