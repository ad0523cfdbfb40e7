//! Fixed-placement baselines.
//!
//! Both baselines pin every split decision and optimize only what remains —
//! which users to admit and how to pack processing and wavelengths — by
//! running the exact search engine over per-cell option lists restricted to
//! the fixed placement. That reuse keeps the baselines exact for their
//! subproblem (admission maximal, power minimal, canonical tie-break) and
//! guarantees their solutions pass the same feasibility checks, minus the
//! constraints their placement makes inapplicable.

use crate::feasibility::ConstraintId;
use crate::scenario::Scenario;
use crate::solver::model::{CellOpt, Model};
use crate::solver::search::run_search;
use crate::solver::{Solution, SolverOptions};

/// Everything at the edge: every admitted user fully UP-split (`p = f_up`)
/// with its file cached at the edge cloud, every active cell fully CP-split
/// (`q = f_cp`). The split-uniformity rule cannot hold at this corner, so
/// C1 is bypassed. Admission is maximized exactly, which makes the edge
/// cache capacity the interesting constraint: the admitted set implies the
/// cached file set per edge cloud.
pub(crate) fn solve_all_ec(s: &Scenario, opts: &SolverOptions) -> Solution {
    let tables = s.split_tables();
    let mut model = Model::build(s, &tables, opts);
    let options: Vec<Vec<CellOpt>> = (0..model.cells.len())
        .map(|ci| {
            let users = &model.cells[ci].users;
            let feasible: Vec<usize> = (0..users.len())
                .filter(|&k| {
                    let feas = &model.users[users[k]].feas;
                    feas[usize::from(model.f_up)][usize::from(model.f_cp)][1]
                })
                .collect();
            let mut out = vec![CellOpt::inactive()];
            // Every admitted subset matters here: users demand different
            // files, so subsets of equal size can need different cache
            // space.
            for pick in 1..(1u32 << feasible.len()) {
                let mut mask = 0u32;
                let mut choice = Vec::new();
                for (j, &k) in feasible.iter().enumerate() {
                    if pick & (1 << j) != 0 {
                        mask |= 1 << k;
                        choice.push((users[k], model.f_up, true));
                    }
                }
                out.push(model.assemble(ci, mask, model.f_cp, &choice));
            }
            model.sort_cell_options(&mut out);
            out
        })
        .collect();
    model.options = options;
    model.refresh_potentials();
    let mut sol = run_search(s, &model, opts, vec![ConstraintId::C1]);
    sol.bound_w = sol.bound_w.min(sol.total_power_w);
    sol
}

/// Everything centralized: no functions at the edge (`p = 0`, `q = 0`),
/// nothing cached. C1 cannot hold at this corner and is bypassed; C12 is
/// bypassed in the sense that users whose delay threshold cannot be met by
/// this fixed placement are converted into drops instead of making the
/// whole placement infeasible.
pub(crate) fn solve_all_cc(s: &Scenario, opts: &SolverOptions) -> Solution {
    let tables = s.split_tables();
    let mut model = Model::build(s, &tables, opts);
    let options: Vec<Vec<CellOpt>> = (0..model.cells.len())
        .map(|ci| {
            let users = &model.cells[ci].users;
            let feasible: Vec<usize> = (0..users.len())
                .filter(|&k| model.users[users[k]].feas[0][0][0])
                .collect();
            // Users of one cell are interchangeable under this placement
            // (same load, same bandwidth, no files involved), so only the
            // lowest-id prefix of each admission count can appear in a
            // canonical optimum.
            let mut out = vec![CellOpt::inactive()];
            for take in 1..=feasible.len() {
                let mut mask = 0u32;
                let mut choice = Vec::new();
                for &k in feasible.iter().take(take) {
                    mask |= 1 << k;
                    choice.push((users[k], 0, false));
                }
                out.push(model.assemble(ci, mask, 0, &choice));
            }
            model.sort_cell_options(&mut out);
            out
        })
        .collect();
    model.options = options;
    model.refresh_potentials();
    let mut sol = run_search(
        s,
        &model,
        opts,
        vec![ConstraintId::C1, ConstraintId::C12],
    );
    sol.bound_w = sol.bound_w.min(sol.total_power_w);
    sol
}
