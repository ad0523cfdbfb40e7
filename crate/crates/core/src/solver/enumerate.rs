//! Brute-force reference optimizer for very small instances.
//!
//! This walks the raw decision grid — admitted set, per-user UP split and
//! cache bit, per-cell CP split, every DU index at both tiers, every
//! wavelength — and keeps the lexicographically best feasible assignment
//! (most admitted, least power on the exact microwatt grid, smallest
//! canonical key). Feasibility of every surviving leaf is decided by the
//! public constraint checker, not by any solver-side aggregation, so this
//! is an independent oracle for the optimizer: the only shared substrate
//! is the constraint checker, the delay model, and the power model
//! themselves. Partial-assignment rejections are literal restatements of
//! individual constraints and only ever discard states the final check
//! would reject anyway.
//!
//! Everything here is exponential; [`HardLimits`] keeps accidental misuse
//! from hanging a test run.

use std::collections::{BTreeMap, BTreeSet};

use crate::assignment::{canonical_key, derive_counts, Assignment, CanonicalKey};
use crate::delay::user_delay_components;
use crate::feasibility::{check_with, CheckOptions};
use crate::power::{total_power, PowerGrid};
use crate::scenario::Scenario;
use crate::solver::{Solution, SolverOptions};
use crate::split_maps::{Site, SplitTables};

/// Caps on the instance size and on the number of enumeration steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HardLimits {
    pub max_users: usize,
    pub max_cells: usize,
    pub max_ecs: usize,
    /// Budget on partial-assignment steps across the whole enumeration.
    pub max_nodes: u64,
}

impl Default for HardLimits {
    fn default() -> Self {
        HardLimits {
            max_users: 4,
            max_cells: 4,
            max_ecs: 2,
            max_nodes: 50_000_000,
        }
    }
}

/// The enumeration was cut short; the result would not be trustworthy.
#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error("limits exceeded: {0}")]
    LimitsExceeded(String),
}

struct CellV {
    id: u32,
    ec: usize,
    rb: u32,
    /// Admitted users of this cell, ascending by id.
    users: Vec<u32>,
}

struct Oracle<'a> {
    s: &'a Scenario,
    tables: SplitTables,
    opts: &'a SolverOptions,
    grid: PowerGrid,
    f_up: u8,
    f_cp: u8,
    nodes_left: u64,
    best: Option<(usize, u64, CanonicalKey, Assignment)>,
}

/// Exhaustively find the optimum of the full placement problem (the same
/// objective and constraint semantics as the exact solver in its default
/// mode). Instances beyond `limits` are refused rather than attempted.
pub fn enumerate_optimal(
    s: &Scenario,
    opts: &SolverOptions,
    limits: &HardLimits,
) -> Result<Solution, OracleError> {
    let n_users = s.users.len();
    let n_cells: usize = s.topology.edge_clouds.iter().map(|e| e.cells.len()).sum();
    let n_ecs = s.topology.edge_clouds.len();
    if n_users > limits.max_users {
        return Err(OracleError::LimitsExceeded(format!(
            "{n_users} users > {}",
            limits.max_users
        )));
    }
    if n_cells > limits.max_cells {
        return Err(OracleError::LimitsExceeded(format!(
            "{n_cells} cells > {}",
            limits.max_cells
        )));
    }
    if n_ecs > limits.max_ecs {
        return Err(OracleError::LimitsExceeded(format!(
            "{n_ecs} edge clouds > {}",
            limits.max_ecs
        )));
    }

    let mut o = Oracle {
        s,
        tables: s.split_tables(),
        opts,
        grid: PowerGrid::new(&s.power_params),
        f_up: s.topology.f_up,
        f_cp: s.topology.f_cp,
        nodes_left: limits.max_nodes,
        best: None,
    };

    let mut ids: Vec<u32> = s.users.iter().map(|u| u.id).collect();
    ids.sort_unstable();
    for size in (0..=ids.len()).rev() {
        if o.best.as_ref().is_some_and(|b| b.0 > size) {
            break;
        }
        let mut subset = Vec::with_capacity(size);
        o.subsets(&ids, 0, size, &mut subset)?;
    }

    let (_, _, _, assignment) = o.best.expect("the empty admission is always feasible");
    let total_power_w = total_power(&assignment, s);
    let admitted_count = assignment.admitted.len() as u32;
    let dropped = crate::solver::dropped_of(s, &assignment);
    Ok(Solution {
        assignment,
        total_power_w,
        admitted_count,
        proven_optimal: true,
        bound_w: total_power_w,
        wall_time_s: 0.0,
        dropped,
        bypassed: Vec::new(),
        options: opts.clone(),
    })
}

impl<'a> Oracle<'a> {
    fn tick(&mut self) -> Result<(), OracleError> {
        if self.nodes_left == 0 {
            return Err(OracleError::LimitsExceeded(
                "node budget exhausted".to_string(),
            ));
        }
        self.nodes_left -= 1;
        Ok(())
    }

    /// Ascending-lexicographic k-subsets of `ids`.
    fn subsets(
        &mut self,
        ids: &[u32],
        from: usize,
        want: usize,
        acc: &mut Vec<u32>,
    ) -> Result<(), OracleError> {
        if want == 0 {
            return self.run_subset(acc);
        }
        if ids.len() - from < want {
            return Ok(());
        }
        for i in from..=ids.len() - want {
            acc.push(ids[i]);
            self.subsets(ids, i + 1, want - 1, acc)?;
            acc.pop();
        }
        Ok(())
    }

    fn run_subset(&mut self, admitted: &[u32]) -> Result<(), OracleError> {
        // Group the admitted users by cell, in topology order.
        let mut cells: Vec<CellV> = Vec::new();
        for (e, ec) in self.s.topology.edge_clouds.iter().enumerate() {
            for cell in &ec.cells {
                let mut users: Vec<u32> = admitted
                    .iter()
                    .copied()
                    .filter(|&u| self.s.user(u).cell_id == cell.id)
                    .collect();
                users.sort_unstable();
                if !users.is_empty() {
                    cells.push(CellV {
                        id: cell.id,
                        ec: e,
                        rb: cell.rb_per_user,
                        users,
                    });
                }
            }
        }
        let mut st = SubsetState {
            q: vec![0; cells.len()],
            p: BTreeMap::new(),
            b: BTreeMap::new(),
            x: vec![0; cells.len()],
            y: vec![0; cells.len()],
            m: BTreeMap::new(),
            n: BTreeMap::new(),
            w: BTreeMap::new(),
            cache_bytes: vec![0; self.s.topology.edge_clouds.len()],
            cache_files: vec![BTreeSet::new(); self.s.topology.edge_clouds.len()],
        };
        self.splits(&cells, 0, &mut st)
    }

    /// Stage 1: per cell, the CP split and each user's (UP split, cache
    /// bit), rejecting literal violations of the uniformity rule, the
    /// cache implication, the delay threshold, and edge cache capacity.
    fn splits(
        &mut self,
        cells: &[CellV],
        ci: usize,
        st: &mut SubsetState,
    ) -> Result<(), OracleError> {
        if ci == cells.len() {
            return self.dus(cells, 0, st);
        }
        for q in 0..=self.f_cp {
            self.tick()?;
            st.q[ci] = q;
            self.user_splits(cells, ci, 0, st)?;
        }
        Ok(())
    }

    fn user_splits(
        &mut self,
        cells: &[CellV],
        ci: usize,
        k: usize,
        st: &mut SubsetState,
    ) -> Result<(), OracleError> {
        let cell = &cells[ci];
        if k == cell.users.len() {
            return self.splits(cells, ci + 1, st);
        }
        let u = cell.users[k];
        let q = st.q[ci];
        for p in 0..=self.f_up {
            for b in [false, true] {
                self.tick()?;
                // Cache implication: a cached user is fully edge-split.
                if b && p != self.f_up {
                    continue;
                }
                // Split-once rule at this user.
                let ind = u8::from(p < self.f_up) + u8::from(q < self.f_cp);
                let ok = match self.opts.split_once_relation {
                    crate::feasibility::SplitOnceRelation::Eq => ind == 1,
                    crate::feasibility::SplitOnceRelation::Le => ind <= 1,
                };
                if !ok {
                    continue;
                }
                // Delay threshold.
                let d = user_delay_components(
                    self.s,
                    &self.tables,
                    u,
                    p,
                    q,
                    b,
                    self.opts.path_aware_delay,
                )
                .expect("validated scenario evaluates delay for every split");
                if d.total() > self.s.user(u).delay_threshold_s {
                    continue;
                }
                // Edge cache capacity, as a running union per edge cloud.
                let mut inserted = false;
                let mut undo_bytes = 0u64;
                if b {
                    let f = self.s.user(u).demanded_file;
                    if st.cache_files[cell.ec].insert(f) {
                        inserted = true;
                        undo_bytes = self.s.file(f).size_bytes;
                        st.cache_bytes[cell.ec] += undo_bytes;
                    }
                    if st.cache_bytes[cell.ec]
                        > self.s.topology.edge_clouds[cell.ec].cache_capacity_bytes
                    {
                        st.cache_bytes[cell.ec] -= undo_bytes;
                        if inserted {
                            st.cache_files[cell.ec].remove(&f);
                        }
                        continue;
                    }
                }
                st.p.insert(u, p);
                st.b.insert(u, b);
                self.user_splits(cells, ci, k + 1, st)?;
                st.p.remove(&u);
                st.b.remove(&u);
                if inserted {
                    st.cache_bytes[cell.ec] -= undo_bytes;
                    st.cache_files[cell.ec].remove(&self.s.user(u).demanded_file);
                }
            }
        }
        Ok(())
    }

    /// Stage 2: DU indices — the cell CP DUs and each user's UP DU at both
    /// tiers — rejecting literal violations of co-location and per-DU
    /// capacity.
    fn dus(
        &mut self,
        cells: &[CellV],
        ci: usize,
        st: &mut SubsetState,
    ) -> Result<(), OracleError> {
        if ci == cells.len() {
            return self.wavelengths(cells, st);
        }
        let cell = &cells[ci];
        let ec = &self.s.topology.edge_clouds[cell.ec];
        for x in 0..ec.du_count {
            self.tick()?;
            st.x[ci] = x;
            if !self.ec_caps_ok(cells, ci, usize::MAX, st) {
                continue;
            }
            self.ec_user_dus(cells, ci, 0, st)?;
        }
        Ok(())
    }

    fn ec_user_dus(
        &mut self,
        cells: &[CellV],
        ci: usize,
        k: usize,
        st: &mut SubsetState,
    ) -> Result<(), OracleError> {
        let cell = &cells[ci];
        if k == cell.users.len() {
            return self.cc_cell_du(cells, ci, st);
        }
        let u = cell.users[k];
        let ec = &self.s.topology.edge_clouds[cell.ec];
        for m in 0..ec.du_count {
            self.tick()?;
            // Co-location: a user split below the top UP level shares its
            // cell's edge CP DU.
            if st.p[&u] < self.f_up && m != st.x[ci] {
                continue;
            }
            st.m.insert(u, m);
            if self.ec_caps_ok(cells, ci, k, st) {
                self.ec_user_dus(cells, ci, k + 1, st)?;
            }
            st.m.remove(&u);
        }
        Ok(())
    }

    fn cc_cell_du(
        &mut self,
        cells: &[CellV],
        ci: usize,
        st: &mut SubsetState,
    ) -> Result<(), OracleError> {
        for y in 0..self.s.topology.central_cloud.du_count {
            self.tick()?;
            st.y[ci] = y;
            if !self.cc_caps_ok(cells, ci, usize::MAX, st) {
                continue;
            }
            self.cc_user_dus(cells, ci, 0, st)?;
        }
        Ok(())
    }

    fn cc_user_dus(
        &mut self,
        cells: &[CellV],
        ci: usize,
        k: usize,
        st: &mut SubsetState,
    ) -> Result<(), OracleError> {
        let cell = &cells[ci];
        if k == cell.users.len() {
            return self.dus(cells, ci + 1, st);
        }
        let u = cell.users[k];
        for n in 0..self.s.topology.central_cloud.du_count {
            self.tick()?;
            // Co-location: a cell split below the top CP level hosts its
            // users' central UP DUs on its own central CP DU.
            if st.q[ci] < self.f_cp && n != st.y[ci] {
                continue;
            }
            st.n.insert(u, n);
            if self.cc_caps_ok(cells, ci, k, st) {
                self.cc_user_dus(cells, ci, k + 1, st)?;
            }
            st.n.remove(&u);
        }
        Ok(())
    }

    /// Edge-tier per-DU loads over all decided cells/users, compared
    /// against the EC's DU capacities. `upto_cell`/`upto_user` bound the
    /// decided prefix (`usize::MAX` for "cell split decided, no users").
    fn ec_caps_ok(
        &self,
        cells: &[CellV],
        upto_cell: usize,
        upto_user: usize,
        st: &mut SubsetState,
    ) -> bool {
        let mut cp: BTreeMap<(usize, u32), u32> = BTreeMap::new();
        let mut up: BTreeMap<(usize, u32), u32> = BTreeMap::new();
        for (ci, cell) in cells.iter().enumerate().take(upto_cell + 1) {
            *cp.entry((cell.ec, st.x[ci])).or_insert(0) +=
                u32::from(self.tables.cp_functions_at(Site::Ec, st.q[ci]));
            let k_max = if ci == upto_cell {
                if upto_user == usize::MAX {
                    0
                } else {
                    upto_user + 1
                }
            } else {
                cell.users.len()
            };
            for &u in cell.users.iter().take(k_max) {
                *up.entry((cell.ec, st.m[&u])).or_insert(0) +=
                    u32::from(self.tables.up_functions_at(Site::Ec, st.p[&u]));
            }
        }
        cp.iter().all(|(&(ec, _), &load)| {
            load <= self.s.topology.edge_clouds[ec].du_cp_capacity
        }) && up.iter().all(|(&(ec, _), &load)| {
            load <= self.s.topology.edge_clouds[ec].du_up_capacity
        })
    }

    fn cc_caps_ok(
        &self,
        cells: &[CellV],
        upto_cell: usize,
        upto_user: usize,
        st: &mut SubsetState,
    ) -> bool {
        let mut cp: BTreeMap<u32, u32> = BTreeMap::new();
        let mut up: BTreeMap<u32, u32> = BTreeMap::new();
        for (ci, cell) in cells.iter().enumerate().take(upto_cell + 1) {
            *cp.entry(st.y[ci]).or_insert(0) +=
                u32::from(self.tables.cp_functions_at(Site::Cc, st.q[ci]));
            let k_max = if ci == upto_cell {
                if upto_user == usize::MAX {
                    0
                } else {
                    upto_user + 1
                }
            } else {
                cell.users.len()
            };
            for &u in cell.users.iter().take(k_max) {
                *up.entry(st.n[&u]).or_insert(0) +=
                    u32::from(self.tables.up_functions_at(Site::Cc, st.p[&u]));
            }
        }
        let cc = &self.s.topology.central_cloud;
        cp.values().all(|&load| load <= cc.du_cp_capacity)
            && up.values().all(|&load| load <= cc.du_up_capacity)
    }

    /// Stage 3: one wavelength per edge cloud that serves admitted users,
    /// rejecting per-wavelength bandwidth overflows with the same fold
    /// order the checker uses.
    fn wavelengths(&mut self, cells: &[CellV], st: &mut SubsetState) -> Result<(), OracleError> {
        let active_ecs: Vec<usize> = (0..self.s.topology.edge_clouds.len())
            .filter(|&e| cells.iter().any(|c| c.ec == e))
            .collect();
        self.wavelength_at(cells, &active_ecs, 0, st)
    }

    fn wavelength_at(
        &mut self,
        cells: &[CellV],
        active: &[usize],
        k: usize,
        st: &mut SubsetState,
    ) -> Result<(), OracleError> {
        if k == active.len() {
            return self.leaf(cells, st);
        }
        let e = active[k];
        for w in 0..self.s.topology.wavelengths {
            self.tick()?;
            st.w.insert(e, w);
            if self.bandwidth_ok(cells, st) {
                self.wavelength_at(cells, active, k + 1, st)?;
            }
            st.w.remove(&e);
        }
        Ok(())
    }

    fn ec_bw(&self, cells: &[CellV], e: usize, st: &SubsetState) -> f64 {
        let mut bw = 0.0f64;
        for (ci, cell) in cells.iter().enumerate() {
            if cell.ec != e {
                continue;
            }
            bw += self.tables.cell_midhaul_bw_mbps(st.q[ci]);
            for &u in &cell.users {
                bw += self.tables.user_midhaul_bw_mbps(st.p[&u], cell.rb);
            }
        }
        bw
    }

    fn bandwidth_ok(&self, cells: &[CellV], st: &SubsetState) -> bool {
        for w in 0..self.s.topology.wavelengths {
            let mut load = 0.0f64;
            for e in 0..self.s.topology.edge_clouds.len() {
                if st.w.get(&e) == Some(&w) {
                    let bw = self.ec_bw(cells, e, st);
                    if bw > 0.0 {
                        load += bw;
                    }
                }
            }
            if load > self.s.topology.wavelength_capacity_mbps {
                return false;
            }
        }
        true
    }

    /// Stage 4: authoritative feasibility via the public checker, then
    /// objective comparison on the exact microwatt grid.
    fn leaf(&mut self, cells: &[CellV], st: &mut SubsetState) -> Result<(), OracleError> {
        self.tick()?;
        let mut a = Assignment::default();
        for (ci, cell) in cells.iter().enumerate() {
            a.cp_split.insert(cell.id, st.q[ci]);
            a.ec_cp_du.insert(cell.id, st.x[ci]);
            a.cc_cp_du.insert(cell.id, st.y[ci]);
            for &u in &cell.users {
                a.admitted.insert(u);
                a.up_split.insert(u, st.p[&u]);
                a.ec_up_du.insert(u, st.m[&u]);
                a.cc_up_du.insert(u, st.n[&u]);
                if st.b[&u] {
                    a.edge_cached.insert(u);
                }
            }
        }
        for (&e, &w) in &st.w {
            a.wavelength
                .insert(self.s.topology.edge_clouds[e].id, w);
        }
        let violations = check_with(
            &a,
            self.s,
            &CheckOptions {
                split_once_relation: self.opts.split_once_relation,
                path_aware_delay: self.opts.path_aware_delay,
                skip: BTreeSet::new(),
            },
        );
        if !violations.is_empty() {
            return Ok(());
        }
        let uw = self
            .grid
            .profile_microwatts(&derive_counts(&a, self.s).profile);
        let adm = a.admitted.len();
        let key = canonical_key(&a);
        let better = match &self.best {
            None => true,
            Some((ba, bu, bk, _)) => {
                adm > *ba || (adm == *ba && (uw < *bu || (uw == *bu && key < *bk)))
            }
        };
        if better {
            self.best = Some((adm, uw, key, a));
        }
        Ok(())
    }
}

/// Mutable enumeration state for one admitted subset.
struct SubsetState {
    /// Per active cell (indexed like the `cells` slice).
    q: Vec<u8>,
    x: Vec<u32>,
    y: Vec<u32>,
    /// Per admitted user id.
    p: BTreeMap<u32, u8>,
    b: BTreeMap<u32, bool>,
    m: BTreeMap<u32, u32>,
    n: BTreeMap<u32, u32>,
    /// Per EC index: chosen wavelength (active ECs only).
    w: BTreeMap<usize, u32>,
    cache_bytes: Vec<u64>,
    cache_files: Vec<BTreeSet<u32>>,
}
