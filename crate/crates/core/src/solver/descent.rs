//! Canonical tie-break among optimal-value placements.
//!
//! Phase 1 of the search proves the optimal `(admitted, power)` value;
//! this module then finds, without enumerating tied leaves, the placement
//! whose canonical key is smallest among those attaining that value. The
//! key orders fields as: the admitted user set, per-user uplink splits
//! (ascending user id), per-cell control splits (ascending cell id), the
//! DU and wavelength indices — which the canonical construction derives
//! purely from the admitted sets and splits — and finally the edge-cached
//! user set. The descent pins those free fields in exactly that order,
//! keeping a candidate exactly when the pinned option space still attains
//! the optimal value.
//!
//! Attainability questions are answered two ways. A running *witness* — an
//! assignment known to attain the value inside the current pinned space —
//! settles "yes" instantly whenever it already satisfies the candidate
//! pin. Only pins the witness violates cost a query: one target-pruned
//! existence search over the pinned space, whose satisfying leaf then
//! replaces the witness (it satisfies both the new pin and all earlier
//! ones). Failed queries are proofs of unattainability, so the opposite
//! pin keeps every attaining completion and the witness stays valid.
//!
//! Every query runs single-threaded under a deterministic node budget, so
//! the selected assignment is identical across worker counts and runs.
//! `None` (deadline or budget exhausted) makes the caller fall back to an
//! unproven witness instead of risking an unsound pin.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::assignment::Assignment;
use crate::solver::canonical::build_canonical;
use crate::solver::model::{CellOpt, Model};
use crate::solver::search::{pack, search_core, SearchCtx};
use crate::solver::SolverOptions;

/// Deterministic per-query node budget; a query that exceeds it aborts
/// the whole descent rather than risk an unsound "unattainable" verdict.
const QUERY_NODE_BUDGET: u64 = 20_000_000;

/// Smallest canonical assignment among placements packing exactly to
/// `(adm, uw)` within `base`'s option space. `witness` must be one such
/// placement (phase 1's winner); it seeds the attainability shortcuts.
pub(crate) fn canonical_min<'a>(
    base: &Model<'a>,
    opts: &SolverOptions,
    adm: u32,
    uw: u64,
    witness: Assignment,
    deadline: Instant,
) -> Option<Assignment> {
    let m: Model<'a> = base.clone();
    let ctx = SearchCtx::new(&m, opts);
    let mut d = Descent {
        m,
        ctx,
        target: pack(adm, uw),
        wit: witness,
        deadline,
    };
    d.run(adm)
}

/// One candidate restriction of a single canonical field.
#[derive(Clone, Copy)]
enum Pin {
    /// Admit this user (model index).
    In(usize),
    /// Do not admit this user.
    Out(usize),
    /// The user's uplink split equals this value.
    Up(usize, u8),
    /// The cell's control split equals this value.
    Cp(usize, u8),
    /// The user's edge-cache bit equals this value.
    Cache(usize, bool),
}

fn keeps(o: &CellOpt, pin: Pin) -> bool {
    match pin {
        Pin::In(u) => o.choices.iter().any(|&(x, _, _)| x == u),
        Pin::Out(u) => !o.choices.iter().any(|&(x, _, _)| x == u),
        Pin::Up(u, p) => o.choices.iter().any(|&(x, pp, _)| x == u && pp == p),
        Pin::Cp(_, q) => o.active && o.q == q,
        Pin::Cache(u, dv) => o.choices.iter().any(|&(x, _, dd)| x == u && dd == dv),
    }
}

/// Saved option lists for reverting one [`Descent::apply`].
struct Saved {
    cells: Vec<(usize, Vec<CellOpt>)>,
    ecs: BTreeSet<usize>,
}

struct Descent<'a> {
    m: Model<'a>,
    ctx: SearchCtx,
    target: u64,
    /// An assignment attaining the target within the current pinned space.
    wit: Assignment,
    deadline: Instant,
}

impl<'a> Descent<'a> {
    fn cell_of(&self, pin: Pin) -> usize {
        match pin {
            Pin::In(u) | Pin::Out(u) | Pin::Up(u, _) | Pin::Cache(u, _) => self.m.users[u].cell,
            Pin::Cp(ci, _) => ci,
        }
    }

    /// Does the running witness satisfy this pin already?
    fn wit_satisfies(&self, pin: Pin) -> bool {
        match pin {
            Pin::In(u) => self.wit.admitted.contains(&self.m.users[u].id),
            Pin::Out(u) => !self.wit.admitted.contains(&self.m.users[u].id),
            Pin::Up(u, p) => self.wit.up_split.get(&self.m.users[u].id) == Some(&p),
            Pin::Cp(ci, q) => self.wit.cp_split.get(&self.m.cells[ci].id) == Some(&q),
            Pin::Cache(u, dv) => self.wit.edge_cached.contains(&self.m.users[u].id) == dv,
        }
    }

    /// Rebuild the derived tables of the given clouds after option edits.
    fn refresh(&mut self, ecs: &BTreeSet<usize>) {
        self.m.refresh_potentials();
        for &e in ecs {
            self.ctx.build_ec(&self.m, e);
        }
        self.ctx.fold_suffixes(&self.m);
    }

    /// Restrict option lists to those satisfying every pin. Returns `None`
    /// — with the restriction fully rolled back — when some cell would be
    /// left without options (i.e. the pins are outright unsatisfiable).
    fn apply(&mut self, pins: &[Pin]) -> Option<Saved> {
        let mut by_cell: BTreeMap<usize, Vec<Pin>> = BTreeMap::new();
        for &pin in pins {
            by_cell.entry(self.cell_of(pin)).or_default().push(pin);
        }
        let mut cells: Vec<(usize, Vec<CellOpt>)> = Vec::new();
        let mut ecs = BTreeSet::new();
        let mut emptied = false;
        for (&ci, cpins) in &by_cell {
            let saved = self.m.options[ci].clone();
            self.m.options[ci].retain(|o| cpins.iter().all(|&p| keeps(o, p)));
            ecs.insert(self.m.cells[ci].ec);
            let now_empty = self.m.options[ci].is_empty();
            cells.push((ci, saved));
            if now_empty {
                emptied = true;
                break;
            }
        }
        if emptied {
            // The derived tables were not refreshed yet, so restoring the
            // lists restores the exact prior state.
            for (ci, saved) in cells {
                self.m.options[ci] = saved;
            }
            return None;
        }
        self.refresh(&ecs);
        Some(Saved { cells, ecs })
    }

    fn revert(&mut self, saved: Saved) {
        for (ci, opts) in saved.cells {
            self.m.options[ci] = opts;
        }
        self.refresh(&saved.ecs);
    }

    /// Does some completion of the current pinned space pack exactly to
    /// the optimal value? `Some(true)` also replaces the witness with the
    /// satisfying leaf. `None` = budget exhausted (verdict unknown).
    fn query(&mut self) -> Option<bool> {
        if Instant::now() >= self.deadline {
            return None;
        }
        let out = search_core(
            &self.m,
            &self.ctx,
            1,
            self.deadline,
            Some(self.target),
            Some(QUERY_NODE_BUDGET),
            true,
            None,
            None,
            0,
        );
        if out.satisfied {
            if let Some(a) = out.assignment {
                self.wit = a;
            }
            Some(true)
        } else if out.timed_out || out.capped {
            None
        } else {
            Some(false)
        }
    }

    /// Commit a pin the witness (or a just-successful query) proved
    /// attainable. The restriction can never empty a cell: the witness's
    /// own options satisfy it.
    fn commit(&mut self, pins: &[Pin]) {
        let committed = self.apply(pins);
        debug_assert!(committed.is_some(), "a witnessed pin keeps its witness");
    }

    fn run(&mut self, adm_star: u32) -> Option<Assignment> {
        self.pin_admitted(adm_star)?;
        self.pin_up_splits()?;
        self.pin_cp_splits()?;
        self.pin_cached()?;
        // Every canonical field is pinned, so each cell keeps exactly one
        // placement (up to duplicates with identical content).
        let chosen: Vec<&CellOpt> = self.m.options.iter().map(|v| &v[0]).collect();
        let (assignment, uw) = build_canonical(&self.m, &chosen)?;
        if pack(assignment.admitted.len() as u32, uw) != self.target {
            debug_assert!(false, "the pinned leaf must attain the proven value");
            return None;
        }
        Some(assignment)
    }

    /// Pin the admitted set: the canonical order compares equal-size id
    /// vectors, so including the smallest ids first is lexicographically
    /// minimal — include each user in ascending id order exactly when some
    /// optimal-value completion still admits it.
    fn pin_admitted(&mut self, adm_star: u32) -> Option<()> {
        let n_users = self.m.users.len();
        if adm_star as usize == n_users || adm_star == 0 {
            // Degenerate sets need no queries: every optimal placement
            // admits everyone (resp. no one), cell by cell.
            let full = adm_star as usize == n_users;
            let mut ecs = BTreeSet::new();
            for ci in 0..self.m.cells.len() {
                let want = if full {
                    self.m.cells[ci].users.len() as u32
                } else {
                    0
                };
                self.m.options[ci].retain(|o| o.n_admit == want);
                debug_assert!(!self.m.options[ci].is_empty());
                ecs.insert(self.m.cells[ci].ec);
            }
            self.refresh(&ecs);
            return Some(());
        }
        for u in 0..n_users {
            let ci = self.m.users[u].cell;
            let any_in = self.m.options[ci].iter().any(|o| keeps(o, Pin::In(u)));
            let any_out = self.m.options[ci].iter().any(|o| keeps(o, Pin::Out(u)));
            if !(any_in && any_out) {
                continue;
            }
            if self.wit_satisfies(Pin::In(u)) {
                self.commit(&[Pin::In(u)]);
                continue;
            }
            match self.apply(&[Pin::In(u)]) {
                Some(sv) => {
                    if !self.query()? {
                        self.revert(sv);
                        self.commit(&[Pin::Out(u)]);
                    }
                }
                None => self.commit(&[Pin::Out(u)]),
            }
        }
        Some(())
    }

    /// Pin per-user uplink splits in ascending user id order, preferring
    /// smaller splits (the admitted sets now all match, so the split
    /// vectors compare elementwise).
    fn pin_up_splits(&mut self) -> Option<()> {
        for u in 0..self.m.users.len() {
            let ci = self.m.users[u].cell;
            if !self.m.options[ci].iter().all(|o| keeps(o, Pin::In(u))) {
                continue; // not admitted
            }
            let mut cands: BTreeSet<u8> = BTreeSet::new();
            for o in &self.m.options[ci] {
                if let Some(&(_, p, _)) = o.choices.iter().find(|&&(x, _, _)| x == u) {
                    cands.insert(p);
                }
            }
            if cands.len() <= 1 {
                continue;
            }
            let cands: Vec<u8> = cands.into_iter().collect();
            self.pin_first(&cands, |p| Pin::Up(u, p))?;
        }
        Some(())
    }

    /// Pin per-cell control splits in ascending cell id order, preferring
    /// smaller splits.
    fn pin_cp_splits(&mut self) -> Option<()> {
        let mut order: Vec<usize> = (0..self.m.cells.len()).collect();
        order.sort_by_key(|&ci| self.m.cells[ci].id);
        for ci in order {
            if !self.m.options[ci][0].active {
                continue; // idle cell: no control split assigned
            }
            let cands: BTreeSet<u8> = self.m.options[ci].iter().map(|o| o.q).collect();
            if cands.len() <= 1 {
                continue;
            }
            let cands: Vec<u8> = cands.into_iter().collect();
            self.pin_first(&cands, |q| Pin::Cp(ci, q))?;
        }
        Some(())
    }

    /// Keep the first attainable candidate of one ordered field. The
    /// witness's own value needs no query, and no later value can win, so
    /// it caps the scan; candidates before it are queried in order.
    fn pin_first(&mut self, cands: &[u8], mk: impl Fn(u8) -> Pin) -> Option<()> {
        for &v in cands {
            let pin = mk(v);
            if self.wit_satisfies(pin) {
                self.commit(&[pin]);
                break;
            }
            let sv = self.apply(&[pin]).expect("candidates come from live options");
            if self.query()? {
                break;
            }
            self.revert(sv);
        }
        Some(())
    }

    /// Pin the edge-cached user set. Its canonical form is the ascending
    /// id vector compared lexicographically across *different sizes*, so
    /// the empty set is best and otherwise the next member must have the
    /// smallest attainable id — a per-user preference would get this
    /// wrong (caching a smaller id can beat not caching it).
    fn pin_cached(&mut self) -> Option<()> {
        loop {
            if Instant::now() >= self.deadline {
                return None;
            }
            let mut undecided: Vec<usize> = Vec::new();
            for u in 0..self.m.users.len() {
                let ci = self.m.users[u].cell;
                let mut has_on = false;
                let mut has_off = false;
                for o in &self.m.options[ci] {
                    if let Some(&(_, _, d)) = o.choices.iter().find(|&&(x, _, _)| x == u) {
                        if d {
                            has_on = true;
                        } else {
                            has_off = true;
                        }
                    }
                }
                if has_on && has_off {
                    undecided.push(u);
                }
            }
            if undecided.is_empty() {
                return Some(());
            }
            let all_off: Vec<Pin> = undecided.iter().map(|&u| Pin::Cache(u, false)).collect();
            if all_off.iter().all(|&p| self.wit_satisfies(p)) {
                self.commit(&all_off);
                return Some(());
            }
            if let Some(sv) = self.apply(&all_off) {
                if self.query()? {
                    return Some(());
                }
                self.revert(sv);
            }
            // Some witness caches another user: commit the smallest id
            // that can be the next cached member (everything below it
            // pinned uncached). The witness's own next member caps the
            // scan the same way it does in `pin_first`.
            let mut advanced = false;
            for k in 0..undecided.len() {
                let mut pins: Vec<Pin> = undecided[..k]
                    .iter()
                    .map(|&u| Pin::Cache(u, false))
                    .collect();
                pins.push(Pin::Cache(undecided[k], true));
                if pins.iter().all(|&p| self.wit_satisfies(p)) {
                    self.commit(&pins);
                    advanced = true;
                    break;
                }
                let Some(sv) = self.apply(&pins) else { continue };
                if self.query()? {
                    advanced = true;
                    break;
                }
                self.revert(sv);
            }
            if !advanced {
                debug_assert!(false, "some cached member must extend the prefix");
                return None;
            }
        }
    }
}
