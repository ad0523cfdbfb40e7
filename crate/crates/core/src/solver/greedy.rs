//! Deterministic admission heuristic: most-constrained users first.
//!
//! Users are visited in ascending delay-threshold order (ties by id). Each
//! user is admitted with the cheapest placement that keeps the whole
//! partial structure feasible — respecting the cell's already-fixed CP
//! split if it has one — and is dropped only when no placement fits.
//! The result is feasible by construction but carries no optimality claim;
//! its `bound_w` is the sharpest search-root lower bound that is valid for
//! the achieved admission level, so the gap the heuristic leaves on the
//! table is visible to callers.

use std::collections::BTreeMap;

use crate::power::total_power;
use crate::scenario::Scenario;
use crate::solver::canonical::{build_canonical, leaf_microwatts, leaf_resources};
use crate::solver::model::{CellOpt, Model};
use crate::solver::{Solution, SolverOptions};

pub(crate) fn solve_greedy(s: &Scenario, opts: &SolverOptions) -> Solution {
    let tables = s.split_tables();
    let model = Model::build(s, &tables, opts);

    let thresholds: BTreeMap<u32, f64> = s
        .users
        .iter()
        .map(|u| (u.id, u.delay_threshold_s))
        .collect();
    let mut order: Vec<usize> = (0..model.users.len()).collect();
    order.sort_by(|&a, &b| {
        let ta = thresholds[&model.users[a].id];
        let tb = thresholds[&model.users[b].id];
        ta.total_cmp(&tb).then(model.users[a].id.cmp(&model.users[b].id))
    });

    // Per-cell committed choices, kept sorted by user model index.
    let mut masks = vec![0u32; model.cells.len()];
    let mut qs: Vec<Option<u8>> = vec![None; model.cells.len()];
    let mut picks: Vec<Vec<(usize, u8, bool)>> = vec![Vec::new(); model.cells.len()];
    let mut chosen: Vec<CellOpt> = vec![CellOpt::inactive(); model.cells.len()];

    for &ui in &order {
        let ci = model.users[ui].cell;
        let slot = model.cells[ci]
            .users
            .iter()
            .position(|&u| u == ui)
            .expect("user listed in its cell");
        let q_candidates: Vec<u8> = match qs[ci] {
            Some(q) => vec![q],
            None => (0..=model.f_cp).collect(),
        };
        let mut best: Option<(u64, u8, u8, bool, CellOpt)> = None;
        for q in q_candidates {
            for (p, d) in model.user_choice_set(ui, q) {
                let mut choice = picks[ci].clone();
                choice.push((ui, p, d));
                choice.sort_by_key(|&(u, _, _)| u);
                let cand = model.assemble(ci, masks[ci] | (1 << slot), q, &choice);
                let refs: Vec<&CellOpt> = chosen
                    .iter()
                    .enumerate()
                    .map(|(i, o)| if i == ci { &cand } else { o })
                    .collect();
                let Some(res) = leaf_resources(&model, &refs) else {
                    continue;
                };
                let uw = leaf_microwatts(&model, &refs, &res);
                let key = (uw, q, p, d);
                if best
                    .as_ref()
                    .is_none_or(|(bu, bq, bp, bd, _)| key < (*bu, *bq, *bp, *bd))
                {
                    best = Some((uw, q, p, d, cand));
                }
            }
        }
        if let Some((_, q, p, d, cand)) = best {
            masks[ci] |= 1 << slot;
            qs[ci] = Some(q);
            picks[ci].push((ui, p, d));
            picks[ci].sort_by_key(|&(u, _, _)| u);
            chosen[ci] = cand;
        }
    }

    let refs: Vec<&CellOpt> = chosen.iter().collect();
    let (assignment, _) = build_canonical(&model, &refs)
        .expect("greedy only commits placements that stay feasible");
    let total_power_w = total_power(&assignment, s);
    // The full-admission-conditioned root bound may legitimately exceed
    // the optimum when the optimum drops users; admitting everyone here
    // witnesses that the optimum admits everyone too, and only then is
    // the sharper bound safe to cite.
    let lower = if assignment.admitted.len() == s.users.len() {
        super::root_lower_bound(s, opts)
    } else {
        super::relaxed_lower_bound(s, opts)
    };
    let bound_w = lower.min(total_power_w);
    let admitted_count = assignment.admitted.len() as u32;
    let dropped = super::dropped_of(s, &assignment);
    Solution {
        assignment,
        total_power_w,
        admitted_count,
        proven_optimal: false,
        bound_w,
        wall_time_s: 0.0,
        dropped,
        bypassed: Vec::new(),
        options: opts.clone(),
    }
}
