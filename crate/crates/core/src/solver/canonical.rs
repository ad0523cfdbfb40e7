//! Construction of the canonical (lexicographically minimal) assignment
//! realizing a leaf structure.
//!
//! A *leaf structure* fixes the admitted users, every user's UP split and
//! cache bit, and every active cell's CP split. What remains — DU indices
//! at both tiers and wavelengths — does not change feasibility margins or
//! power as long as each tier uses its exact minimum number of loaded DUs
//! and lit wavelengths. This module picks, among those minimum-resource
//! realizations, the unique one whose [canonical
//! key](crate::assignment::canonical_key) is smallest, by deciding
//! variables in key order (user UP DUs, then cell CP DUs, each tier
//! independently; wavelengths last) and committing the smallest value that
//! still admits a completion.
//!
//! Every solver funnels its results through this construction, which is
//! what makes independently computed optima bit-for-bit identical.

use crate::assignment::{derive_counts, structural_errors, Assignment};
use crate::solver::model::{CellOpt, Model};
use crate::solver::packing::{can_group, can_pack_with_state, min_bins_2d, min_groups_f64};
use crate::split_maps::Site;

/// A DU-tier variable in canonical decision order.
enum TierVar {
    /// A user's own DU choice carrying its own load.
    UserOwn { ui: usize, load: (u32, u32) },
    /// A user whose DU is tied to its cell's anchor (split-level coupling).
    UserAlias { ui: usize, cell: usize },
    /// A cell's CP DU choice carrying the anchor load (which may be zero).
    CellAnchor { cell: usize },
}

/// One DU tier (edge clouds or central cloud) posed as a packing problem
/// over anchored and loose loads.
struct Tier {
    du_count: u32,
    cap_cp: u32,
    cap_up: u32,
    /// Anchor load per active cell participating in this tier.
    anchor_load: Vec<(usize, (u32, u32))>,
    vars: Vec<TierVar>,
}

/// DU picks for one tier: `(per-user, per-cell)`, each `(index, DU id)`.
type TierPicks = (Vec<(usize, u32)>, Vec<(usize, u32)>);

impl Tier {
    fn items(&self) -> Vec<(u32, u32)> {
        let mut items: Vec<(u32, u32)> = self
            .anchor_load
            .iter()
            .map(|&(_, load)| load)
            .collect();
        for v in &self.vars {
            if let TierVar::UserOwn { load, .. } = v {
                items.push(*load);
            }
        }
        items
    }

    fn load_of(&self, cell: usize) -> (u32, u32) {
        self.anchor_load
            .iter()
            .find(|&&(c, _)| c == cell)
            .map(|&(_, l)| l)
            .expect("anchored cell has a recorded load")
    }

    /// Lexicographically minimal values for `vars` using exactly
    /// `target_loaded` loaded DUs. Returns `(user_du, cell_du)` keyed by the
    /// indices used in the vars, or `None` if the target is unreachable.
    fn solve(&self, target_loaded: u32) -> Option<TierPicks> {
        let n = self.du_count as usize;
        let mut residual = vec![(self.cap_cp, self.cap_up); n];
        let mut loaded = vec![false; n];
        let mut anchor_value: Vec<(usize, Option<u32>)> =
            self.anchor_load.iter().map(|&(c, _)| (c, None)).collect();
        let mut users = Vec::new();
        let mut cells = Vec::new();

        let place = |residual: &mut Vec<(u32, u32)>,
                     loaded: &mut Vec<bool>,
                     d: usize,
                     load: (u32, u32)|
         -> bool {
            if residual[d].0 < load.0 || residual[d].1 < load.1 {
                return false;
            }
            residual[d].0 -= load.0;
            residual[d].1 -= load.1;
            if load != (0, 0) {
                loaded[d] = true;
            }
            true
        };

        for (vi, var) in self.vars.iter().enumerate() {
            let (forced, load): (Option<u32>, (u32, u32)) = match var {
                TierVar::UserAlias { cell, .. } | TierVar::CellAnchor { cell } => {
                    let fixed = anchor_value
                        .iter()
                        .find(|&&(c, _)| c == *cell)
                        .and_then(|&(_, v)| v);
                    match fixed {
                        Some(v) => (Some(v), (0, 0)),
                        None => (None, self.load_of(*cell)),
                    }
                }
                TierVar::UserOwn { load, .. } => (None, *load),
            };
            let chosen = match forced {
                Some(v) => v,
                None => {
                    let mut committed = None;
                    for d in 0..n {
                        let mut res_try = residual.clone();
                        let mut lod_try = loaded.clone();
                        if !place(&mut res_try, &mut lod_try, d, load) {
                            continue;
                        }
                        if lod_try.iter().filter(|&&l| l).count() as u32 > target_loaded {
                            continue;
                        }
                        let remaining = self.remaining_items(vi + 1, &anchor_value, var);
                        if can_pack_with_state(&remaining, &res_try, &lod_try, target_loaded) {
                            residual = res_try;
                            loaded = lod_try;
                            committed = Some(d as u32);
                            break;
                        }
                    }
                    committed?
                }
            };
            match var {
                TierVar::UserOwn { ui, .. } => users.push((*ui, chosen)),
                TierVar::UserAlias { ui, cell } => {
                    users.push((*ui, chosen));
                    if let Some(slot) = anchor_value.iter_mut().find(|(c, _)| c == cell) {
                        slot.1 = Some(chosen);
                    }
                }
                TierVar::CellAnchor { cell } => {
                    cells.push((*cell, chosen));
                    if let Some(slot) = anchor_value.iter_mut().find(|(c, _)| c == cell) {
                        slot.1 = Some(chosen);
                    }
                }
            }
        }
        debug_assert_eq!(
            loaded.iter().filter(|&&l| l).count() as u32,
            target_loaded,
            "construction must land exactly on the packing minimum"
        );
        Some((users, cells))
    }

    /// Loads of every variable after `from` whose DU is still undecided.
    /// Each undecided anchor contributes its load exactly once; aliases of
    /// the variable currently being placed contribute nothing because its
    /// load is already reflected in the residual state handed to the
    /// completability oracle.
    fn remaining_items(
        &self,
        from: usize,
        anchor_value: &[(usize, Option<u32>)],
        current: &TierVar,
    ) -> Vec<(u32, u32)> {
        let decided = |cell: usize| {
            anchor_value
                .iter()
                .any(|&(c, v)| c == cell && v.is_some())
        };
        let curr_cell = match current {
            TierVar::UserAlias { cell, .. } | TierVar::CellAnchor { cell } => Some(*cell),
            TierVar::UserOwn { .. } => None,
        };
        let mut seen: Vec<usize> = curr_cell.into_iter().collect();
        let mut out = Vec::new();
        for v in &self.vars[from..] {
            match v {
                TierVar::UserOwn { load, .. } => out.push(*load),
                TierVar::UserAlias { cell, .. } | TierVar::CellAnchor { cell } => {
                    if !seen.contains(cell) && !decided(*cell) {
                        seen.push(*cell);
                        out.push(self.load_of(*cell));
                    }
                }
            }
        }
        out
    }
}

/// Exact minimum loaded-DU count for a tier; `None` when unpackable.
fn tier_min(tier: &Tier) -> Option<u32> {
    min_bins_2d(&tier.items(), tier.cap_cp, tier.cap_up, tier.du_count)
}

/// Build the EC-tier packing problem for one edge cloud.
fn ec_tier(m: &Model, ec_idx: usize, chosen: &[&CellOpt]) -> Tier {
    let ec = &m.ecs[ec_idx];
    let mut anchor_load = Vec::new();
    let mut cells_by_id: Vec<usize> = ec.cells.clone().collect();
    cells_by_id.sort_by_key(|&ci| m.cells[ci].id);
    for &ci in &cells_by_id {
        if chosen[ci].active {
            anchor_load.push((ci, chosen[ci].ec_bundle));
        }
    }
    let mut member_users: Vec<(usize, Option<usize>, (u32, u32))> = Vec::new();
    for &ci in &cells_by_id {
        let opt = chosen[ci];
        for &(ui, p, _) in &opt.choices {
            if p < m.f_up {
                member_users.push((ui, Some(ci), (0, 0)));
            } else {
                member_users.push((
                    ui,
                    None,
                    (0, u32::from(m.tables.up_functions_at(Site::Ec, p))),
                ));
            }
        }
    }
    member_users.sort_by_key(|&(ui, _, _)| ui);
    let mut vars: Vec<TierVar> = member_users
        .into_iter()
        .map(|(ui, cell, load)| match cell {
            Some(c) => TierVar::UserAlias { ui, cell: c },
            None => TierVar::UserOwn { ui, load },
        })
        .collect();
    for &ci in &cells_by_id {
        if chosen[ci].active {
            vars.push(TierVar::CellAnchor { cell: ci });
        }
    }
    Tier {
        du_count: ec.du_count,
        cap_cp: ec.cap_cp,
        cap_up: ec.cap_up,
        anchor_load,
        vars,
    }
}

/// Build the CC-tier packing problem across all edge clouds.
fn cc_tier(m: &Model, chosen: &[&CellOpt]) -> Tier {
    let mut cells_by_id: Vec<usize> = (0..m.cells.len()).collect();
    cells_by_id.sort_by_key(|&ci| m.cells[ci].id);
    let mut anchor_load = Vec::new();
    let mut member_users: Vec<(usize, Option<usize>, (u32, u32))> = Vec::new();
    for &ci in &cells_by_id {
        let opt = chosen[ci];
        if !opt.active {
            continue;
        }
        let coupled = opt.q < m.f_cp;
        let cp = u32::from(m.tables.cp_functions_at(Site::Cc, opt.q));
        let mut up_sum = 0u32;
        for &(ui, p, _) in &opt.choices {
            let up = u32::from(m.tables.up_functions_at(Site::Cc, p));
            if coupled {
                up_sum += up;
                member_users.push((ui, Some(ci), (0, 0)));
            } else {
                member_users.push((ui, None, (0, up)));
            }
        }
        anchor_load.push((ci, (cp, if coupled { up_sum } else { 0 })));
    }
    member_users.sort_by_key(|&(ui, _, _)| ui);
    let mut vars: Vec<TierVar> = member_users
        .into_iter()
        .map(|(ui, cell, load)| match cell {
            Some(c) => TierVar::UserAlias { ui, cell: c },
            None => TierVar::UserOwn { ui, load },
        })
        .collect();
    for &ci in &cells_by_id {
        if chosen[ci].active {
            vars.push(TierVar::CellAnchor { cell: ci });
        }
    }
    Tier {
        du_count: m.du_cc,
        cap_cp: m.cap_cp_cc,
        cap_up: m.cap_up_cc,
        anchor_load,
        vars,
    }
}

/// Per-EC midhaul bandwidth, folded exactly as the public counting code
/// folds it: cell term then user terms, cells in topology order.
pub(crate) fn ec_bandwidths(m: &Model, chosen: &[&CellOpt]) -> Vec<f64> {
    m.ecs
        .iter()
        .map(|ec| {
            let mut bw = 0.0f64;
            for ci in ec.cells.clone() {
                for term in &chosen[ci].bw_terms {
                    bw += term;
                }
            }
            bw
        })
        .collect()
}

/// Lexicographically minimal wavelength choice for the active ECs, using
/// exactly `target_lit` distinct wavelengths. ECs are decided in id order;
/// per-wavelength load feasibility folds per-EC bandwidth in topology
/// order, mirroring the feasibility checker.
fn solve_wavelengths(
    m: &Model,
    active: &[usize],
    bws: &[f64],
    target_lit: u32,
) -> Option<Vec<(usize, u32)>> {
    let mut order: Vec<usize> = active.to_vec();
    order.sort_by_key(|&e| m.ecs[e].id);
    let mut out: Vec<(usize, u32)> = Vec::new();
    fn feasible_prefix(
        m: &Model,
        decided: &[(usize, u32)],
        bws: &[f64],
    ) -> bool {
        for w in 0..m.n_wavelengths {
            let mut load = 0.0f64;
            for (e_idx, _) in m.ecs.iter().enumerate() {
                if let Some(&(_, wv)) = decided.iter().find(|&&(d, _)| d == e_idx) {
                    if wv == w && bws[e_idx] > 0.0 {
                        load += bws[e_idx];
                    }
                }
            }
            if load > m.k_mbps {
                return false;
            }
        }
        true
    }
    fn complete(
        m: &Model,
        order: &[usize],
        pos: usize,
        decided: &mut Vec<(usize, u32)>,
        bws: &[f64],
        target_lit: u32,
        out: &mut Vec<(usize, u32)>,
    ) -> bool {
        let used: std::collections::BTreeSet<u32> =
            decided.iter().map(|&(_, w)| w).collect();
        if used.len() as u32 > target_lit {
            return false;
        }
        if pos == order.len() {
            if used.len() as u32 != target_lit {
                return false;
            }
            out.clone_from(decided);
            return true;
        }
        let e = order[pos];
        for w in 0..m.n_wavelengths {
            decided.push((e, w));
            if feasible_prefix(m, decided, bws)
                && complete(m, order, pos + 1, decided, bws, target_lit, out)
            {
                decided.pop();
                return true;
            }
            decided.pop();
        }
        false
    }
    let mut decided = Vec::new();
    if complete(m, &order, 0, &mut decided, bws, target_lit, &mut out) {
        Some(out)
    } else {
        None
    }
}

/// Leaf evaluation without construction: the exact loaded-DU minima per EC
/// and at the CC, the lit-wavelength minimum, and the cache-capacity check.
/// Returns `None` when the structure is infeasible.
pub(crate) struct LeafResources {
    pub ec_loaded: Vec<u32>,
    pub cc_loaded: u32,
    pub lit: u32,
    pub active_ecs: Vec<usize>,
    pub bws: Vec<f64>,
}

pub(crate) fn leaf_resources(m: &Model, chosen: &[&CellOpt]) -> Option<LeafResources> {
    let mut ec_loaded = Vec::with_capacity(m.ecs.len());
    for e in 0..m.ecs.len() {
        ec_loaded.push(tier_min(&ec_tier(m, e, chosen))?);
        let mut bytes_seen: Vec<u32> = Vec::new();
        let mut bytes = 0u64;
        for ci in m.ecs[e].cells.clone() {
            for &f in &chosen[ci].cached_files {
                if !bytes_seen.contains(&f) {
                    bytes_seen.push(f);
                    bytes += m
                        .s
                        .file(f)
                        .size_bytes;
                }
            }
        }
        if bytes > m.ecs[e].cache_bytes {
            return None;
        }
    }
    let cc_loaded = tier_min(&cc_tier(m, chosen))?;
    let bws = ec_bandwidths(m, chosen);
    let active_ecs: Vec<usize> = (0..m.ecs.len())
        .filter(|&e| m.ecs[e].cells.clone().any(|ci| chosen[ci].n_admit > 0))
        .collect();
    let lit = if active_ecs.is_empty() {
        0
    } else {
        let loads: Vec<f64> = active_ecs
            .iter()
            .map(|&e| bws[e])
            .filter(|&b| b > 0.0)
            .collect();
        let base = min_groups_f64(&loads, m.k_mbps, m.n_wavelengths)?;
        // Zero-bandwidth active ECs still need a wavelength but can share
        // any lit one; they only force a wavelength to exist at all.
        let lit = base.max(1);
        if lit > m.n_wavelengths {
            return None;
        }
        // Confirm the exact grouping is achievable with the fold order the
        // checker uses (guards against pathological float boundaries).
        if !can_group(&loads, m.k_mbps, lit) {
            return None;
        }
        lit
    };
    Some(LeafResources {
        ec_loaded,
        cc_loaded,
        lit,
        active_ecs,
        bws,
    })
}

/// Construct the canonical assignment for a leaf structure, returning it
/// with its exact microwatt power. `None` means the structure is
/// infeasible (capacity, cache, or wavelength).
pub(crate) fn build_canonical(m: &Model, chosen: &[&CellOpt]) -> Option<(Assignment, u64)> {
    let res = leaf_resources(m, chosen)?;
    let mut a = Assignment::default();
    for (ci, opt) in chosen.iter().enumerate() {
        if !opt.active {
            continue;
        }
        a.cp_split.insert(m.cells[ci].id, opt.q);
        for &(ui, p, d) in &opt.choices {
            let uid = m.users[ui].id;
            a.admitted.insert(uid);
            a.up_split.insert(uid, p);
            if d {
                a.edge_cached.insert(uid);
            }
        }
    }

    for e in 0..m.ecs.len() {
        let tier = ec_tier(m, e, chosen);
        let (users, cells) = tier.solve(res.ec_loaded[e])?;
        for (ui, d) in users {
            a.ec_up_du.insert(m.users[ui].id, d);
        }
        for (ci, d) in cells {
            a.ec_cp_du.insert(m.cells[ci].id, d);
        }
    }
    {
        let tier = cc_tier(m, chosen);
        let (users, cells) = tier.solve(res.cc_loaded)?;
        for (ui, d) in users {
            a.cc_up_du.insert(m.users[ui].id, d);
        }
        for (ci, d) in cells {
            a.cc_cp_du.insert(m.cells[ci].id, d);
        }
    }
    let ws = solve_wavelengths(m, &res.active_ecs, &res.bws, res.lit)?;
    for (e, w) in ws {
        a.wavelength.insert(m.ecs[e].id, w);
    }

    debug_assert!(
        structural_errors(&a, m.s).is_empty(),
        "canonical construction produced a structurally invalid assignment: {:?}",
        structural_errors(&a, m.s)
    );
    let counts = derive_counts(&a, m.s);
    let uw = m.grid.profile_microwatts(&counts.profile);
    Some((a, uw))
}

/// Exact microwatt power of a leaf structure without constructing the
/// assignment (used for incumbent comparison before tie-breaking).
pub(crate) fn leaf_microwatts(m: &Model, chosen: &[&CellOpt], res: &LeafResources) -> u64 {
    let grid = &m.grid;
    let mut uw = grid.lc * u64::from(res.lit) + grid.du_cc * u64::from(res.cc_loaded);
    if res.cc_loaded > 0 {
        uw += grid.cool_cc;
    }
    let any_uncached_admitted = chosen
        .iter()
        .any(|o| o.choices.iter().any(|&(_, _, d)| !d));
    if grid.cc_cache_always_on || any_uncached_admitted {
        uw += grid.cache_cc;
    }
    for e in 0..m.ecs.len() {
        let mut active_cells = 0u64;
        let mut any_user = false;
        let mut any_cached = false;
        for ci in m.ecs[e].cells.clone() {
            if chosen[ci].n_admit > 0 {
                active_cells += 1;
                any_user = true;
            }
            if !chosen[ci].cached.is_empty() {
                any_cached = true;
            }
        }
        uw += (grid.tx + grid.fh) * active_cells;
        if any_user {
            uw += grid.onu;
        }
        if res.ec_loaded[e] > 0 {
            uw += grid.cool_ec;
        }
        uw += grid.du_ec * u64::from(res.ec_loaded[e]);
        if any_cached {
            uw += grid.cache_ec;
        }
    }
    uw
}
