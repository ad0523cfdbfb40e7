//! Exact two-phase search over per-cell placement options.
//!
//! **Phase 1 (value).** Branch and bound, cell by cell (grouped by edge
//! cloud), establishes the optimal objective value: the maximum admitted
//! count and, at that count, the minimum exact microwatt power. Subtrees
//! that cannot *strictly* beat the incumbent are pruned — ties included —
//! so equal-power regions are never enumerated; the phase ends with a
//! proven value and one witness placement, and because every prune is
//! justified by an admissible bound, the value is independent of worker
//! count and scheduling. A cheap probe runs first: it asks whether the
//! root lower bound is attained at the root admission potential, and when
//! it is (the common case) phase 1 finishes without exploring rivals.
//!
//! **Phase 2 (canonical tie-break).** The reported assignment must be the
//! canonically smallest among all optimal-value placements, so that equal
//! configurations emit byte-identical results. Instead of visiting every
//! tied leaf, [`super::descent`] pins the canonical fields one at a time
//! and keeps a candidate prefix exactly when a value-preserving completion
//! still exists; each such question is one more target-pruned search over
//! the pinned space, driven by [`search_core`] with a `stop_at` packed
//! objective.
//!
//! Pruning is by admission potential first (admission dominates power in
//! the objective), with per-edge-cloud admission caps established by an
//! exact cloud-local mini-search — a shared edge cache or the DU packing
//! limit often caps a cloud far below its per-cell sum. At matching
//! potential an admissible power bound applies, assembled from
//! admission-leveled Pareto fronts within the open cloud plus level-priced
//! suffix minima across the remaining clouds, and sharpened — whenever the
//! target equals the uncapped potential — by fronts conditioned on every
//! cell admitting its per-cell maximum.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering as AOrd};
use std::sync::Mutex;
use std::time::Instant;

use crate::assignment::Assignment;
use crate::feasibility::ConstraintId;
use crate::power::{ActivityProfile, PowerGrid};
use crate::scenario::Scenario;
use crate::solver::canonical::{build_canonical, leaf_microwatts, LeafResources};
use crate::solver::model::{CellOpt, Model};
use crate::solver::packing::{can_group, min_bins_2d, min_groups_f64};
use crate::solver::{Solution, SolverOptions};

/// Packed `(admitted, power)` objective in one atomic word: higher
/// admission always wins; at equal admission lower power wins. Layout:
/// bits 44.. hold the admitted count, bits 0..44 hold `MAX44 - power_uw`,
/// so a numerically larger packed value is always a lexicographically
/// better objective, and 0 means "no leaf seen yet".
const UW_BITS: u32 = 44;
const MAX44: u64 = (1 << UW_BITS) - 1;

pub(crate) fn pack(adm: u32, uw: u64) -> u64 {
    (u64::from(adm) << UW_BITS) | (MAX44 - uw.min(MAX44))
}

fn unpack(packed: u64) -> (u32, u64) {
    ((packed >> UW_BITS) as u32, MAX44 - (packed & MAX44))
}

/// Pareto front width for the admission-leveled fronts (one front per
/// admission level per position, so these stay narrow).
const LVL_FRONT_CAP: usize = 8;
/// Pareto front width for the full-admission-conditioned fronts (one per
/// position; kept wide because they drive the sharpest pruning).
const COND_FRONT_CAP: usize = 4096;
/// Node budget for one exact per-cloud admission-cap mini-search.
const EC_CAP_BUDGET: u64 = 2_000_000;
/// Node budget for the root probe (phase 1 shortcut attempt).
const PROBE_NODE_BUDGET: u64 = 4_000_000;

struct Incumbent {
    adm: u32,
    uw: u64,
    assignment: Option<Assignment>,
}

/// Improvement trace sink shared across search phases.
pub(crate) struct Trace {
    w: Mutex<std::io::BufWriter<std::fs::File>>,
    started: Instant,
    root_lb_uw: u64,
}

struct Shared<'m, 'a> {
    m: &'a Model<'m>,
    ctx: &'a SearchCtx,
    /// Authoritative incumbent; the packed atomic mirrors `(adm, uw)`.
    incumbent: Mutex<Option<Incumbent>>,
    packed: AtomicU64,
    nodes: AtomicU64,
    nodes_base: u64,
    deadline: Instant,
    timed_out: AtomicBool,
    /// Existence-query target: abort as satisfied once a leaf packs to it.
    stop_at: Option<u64>,
    satisfied: AtomicBool,
    node_budget: Option<u64>,
    capped: AtomicBool,
    want_assignment: bool,
    trace: Option<&'a Trace>,
}

/// One edge-cloud completion aggregate used by the admissible bounds:
/// remaining processing loads at both tiers, midhaul bandwidth, active
/// cell count, and whether an edge cache is unavoidably on.
#[derive(Clone, Copy, Debug)]
struct Agg {
    ec_cp: u32,
    ec_up: u32,
    cc_cp: u32,
    cc_up: u32,
    bw: f64,
    act: u32,
    cached: bool,
}

impl Agg {
    const ZERO: Agg = Agg {
        ec_cp: 0,
        ec_up: 0,
        cc_cp: 0,
        cc_up: 0,
        bw: 0.0,
        act: 0,
        cached: false,
    };

    fn plus(&self, o: &Agg) -> Agg {
        Agg {
            ec_cp: self.ec_cp + o.ec_cp,
            ec_up: self.ec_up + o.ec_up,
            cc_cp: self.cc_cp + o.cc_cp,
            cc_up: self.cc_up + o.cc_up,
            bw: self.bw + o.bw,
            act: self.act + o.act,
            cached: self.cached || o.cached,
        }
    }

    fn dominates(&self, o: &Agg) -> bool {
        self.ec_cp <= o.ec_cp
            && self.ec_up <= o.ec_up
            && self.cc_cp <= o.cc_cp
            && self.cc_up <= o.cc_up
            && self.bw <= o.bw
            && self.act <= o.act
            && u8::from(self.cached) <= u8::from(o.cached)
    }
}

/// Per-edge-cloud component minima over full-admission completions, used
/// to price the cross-cloud part of the conditioned bound separably
/// (sound because a sum of per-cloud minima never exceeds the minimum of
/// sums).
#[derive(Clone, Copy, Default)]
struct Scal {
    local_uw: u64,
    cc_cp: u32,
    cc_up: u32,
    bw: f64,
}

/// Everything the search threads share read-only. Holds no borrow of the
/// model so the canonical descent can re-derive single clouds after
/// pinning options; [`SearchCtx::build_ec`] plus [`SearchCtx::fold_suffixes`]
/// refresh exactly the affected parts.
pub(crate) struct SearchCtx {
    /// Per position `i`: Pareto fronts over completions of the same-cloud
    /// cells `i..`, one front per exact admission level.
    fronts_lv: Vec<Vec<Vec<Agg>>>,
    /// Per position `i`: sum of per-cell maximum admissions over the
    /// same-cloud cells `i..`.
    maxlvl: Vec<u32>,
    /// Per position `i`: Pareto front over completions of the same-cloud
    /// cells `i..` in which every cell admits its per-cell maximum.
    fronts_cond: Vec<Vec<Agg>>,
    /// Per cloud: exact maximum admission achievable inside the cloud
    /// alone (options, shared cache, DU packing).
    ec_cap: Vec<u32>,
    /// Per position `i`, when every option of every same-cloud cell `i..`
    /// caches every user it admits: the remaining file demand as
    /// `(file, size, user count)` sorted by density (count per byte,
    /// descending). Admissions from those cells are then cache-limited, and
    /// a fractional-knapsack pass over this table bounds them. `None` where
    /// some option admits without caching.
    cache_tail: Vec<Option<Vec<(u32, u64, u32)>>>,
    /// Suffix sums of `ec_cap` (length clouds + 1).
    cap_ec_suffix: Vec<u32>,
    /// Per cloud `e`: `price[a]` = minimal local power of any DU-feasible
    /// completion of the whole cloud admitting at least `a` users.
    ec_lvl_price: Vec<Vec<u64>>,
    /// `lvl_suffix[e][a]` = minimal summed local power over clouds `e..`
    /// admitting at least `a` users in total (`u64::MAX` = impossible).
    lvl_suffix: Vec<Vec<u64>>,
    /// Per cloud: separable minima over full-admission completions;
    /// `None` when the cloud has no DU-feasible full-admission completion.
    ec_scal_cond: Vec<Option<Scal>>,
    /// Suffix fold of `ec_scal_cond` (length clouds + 1).
    scal_cond_suffix: Vec<Option<Scal>>,
    gap_num: u64,
    gap_den: u64,
    threshold_exact: bool,
}

fn pareto_insert(front: &mut Vec<Agg>, cand: Agg) {
    for f in front.iter() {
        if f.dominates(&cand) {
            return;
        }
    }
    front.retain(|f| !cand.dominates(f));
    front.push(cand);
}

/// Collapse an over-large front to its component-wise minimum (a single
/// point that underestimates every member; the bound stays admissible,
/// just looser).
fn cap_front(front: Vec<Agg>, cap: usize) -> Vec<Agg> {
    if front.len() <= cap {
        return front;
    }
    let min = front.iter().fold(
        Agg {
            ec_cp: u32::MAX,
            ec_up: u32::MAX,
            cc_cp: u32::MAX,
            cc_up: u32::MAX,
            bw: f64::INFINITY,
            act: u32::MAX,
            cached: true,
        },
        |acc, f| Agg {
            ec_cp: acc.ec_cp.min(f.ec_cp),
            ec_up: acc.ec_up.min(f.ec_up),
            cc_cp: acc.cc_cp.min(f.cc_cp),
            cc_up: acc.cc_up.min(f.cc_up),
            bw: acc.bw.min(f.bw),
            act: acc.act.min(f.act),
            cached: acc.cached && f.cached,
        },
    );
    vec![min]
}

fn opt_agg(m: &Model, o: &CellOpt) -> Agg {
    Agg {
        ec_cp: o.ec_bundle.0,
        ec_up: o.ec_up_total(m.ec_loose_size),
        cc_cp: o.cc_cp_total(),
        cc_up: o.cc_up_total(),
        bw: o.bw,
        act: u32::from(o.active),
        cached: !o.cached.is_empty(),
    }
}

fn ceil_div(load: u32, cap: u32) -> Option<u32> {
    if load == 0 {
        Some(0)
    } else if cap == 0 {
        None
    } else {
        Some(load.div_ceil(cap))
    }
}

/// Local power of one edge cloud given its completion aggregate and its
/// loaded-DU count.
fn local_price(grid: &PowerGrid, f: &Agg, lr: u32) -> u64 {
    let mut v = (grid.tx + grid.fh) * u64::from(f.act);
    if f.act > 0 {
        v += grid.onu;
    }
    v += grid.du_ec * u64::from(lr);
    if lr > 0 {
        v += grid.cool_ec;
    }
    if f.cached {
        v += grid.cache_ec;
    }
    v
}

/// Exact admission/price profile of one edge cloud considered alone,
/// respecting per-cell placement options, the shared edge cache, and the
/// cloud's DU packing limit.
struct EcProfile {
    /// Maximum admission achievable inside the cloud. Exact unless the
    /// node budget ran out, in which case it falls back to the per-cell
    /// maximum sum (always an upper bound).
    cap: u32,
    /// When requested and completed within budget: `price[a]` = exact
    /// minimal local power of a completion admitting exactly `a` users
    /// (`u64::MAX` where no such completion exists).
    price: Option<Vec<u64>>,
}

/// Search one cloud's option space for [`EcProfile`]. `want_prices` keeps
/// the search exhaustive over admission levels (instead of stopping once
/// the per-cell maximum sum is admitted) and tracks leaf powers; it is
/// meant for clouds whose admission the cache limits, where the tree is
/// small. The budget is counted in nodes, so results are deterministic.
fn ec_profile(m: &Model, e: usize, budget: &mut u64, want_prices: bool) -> EcProfile {
    let ec = &m.ecs[e];
    let cells: Vec<usize> = ec.cells.clone().collect();
    let mut suffix_pot = vec![0u32; cells.len() + 1];
    for j in (0..cells.len()).rev() {
        suffix_pot[j] = suffix_pot[j + 1] + m.max_adm[cells[j]];
    }
    if suffix_pot[0] == 0 {
        let price = want_prices.then(|| {
            let mut p = vec![u64::MAX; 1];
            p[0] = 0;
            p
        });
        return EcProfile { cap: 0, price };
    }
    // When every option caches every admitted user, admission is limited
    // by which file sets fit the cache; that enables a knapsack-style
    // upper bound below.
    let cache_forced = cells
        .iter()
        .all(|&ci| m.options[ci].iter().all(|o| o.cached.len() == o.choices.len()));

    struct Cx<'x, 'a> {
        m: &'x Model<'a>,
        cells: &'x [usize],
        cap_cp: u32,
        cap_up: u32,
        du_count: u32,
        cache_bytes: u64,
        suffix_pot: &'x [u32],
        cache_forced: bool,
        best: u32,
        /// Exact per-level local-power minima, tracked when prices are
        /// wanted (indexed by admission count).
        price: Vec<u64>,
        want_prices: bool,
        grid: PowerGrid,
        budget: &'x mut u64,
        exhausted: bool,
    }

    /// Fractional-knapsack upper bound on additional admissions from cells
    /// `j..` when every admission requires its file cached: users whose
    /// files are already cached count fully; fresh files are taken in
    /// density order into the remaining bytes.
    fn cache_ub(cx: &Cx, j: usize, files: &[u32], bytes: u64) -> u32 {
        let left = cx.cache_bytes - bytes;
        let mut in_cnt: u64 = 0;
        let mut fresh: std::collections::BTreeMap<u32, (u64, u64)> = std::collections::BTreeMap::new();
        for &ci in &cx.cells[j..] {
            for &ui in &cx.m.cells[ci].users {
                let f = cx.m.users[ui].file;
                if files.contains(&f) {
                    in_cnt += 1;
                } else {
                    let ent = fresh.entry(f).or_insert((cx.m.s.file(f).size_bytes, 0));
                    ent.1 += 1;
                }
            }
        }
        let mut arr: Vec<(u64, u64)> = fresh.into_values().collect();
        // Density order: count/size descending, via cross-multiplication.
        arr.sort_by(|a, b| {
            (u128::from(b.1) * u128::from(a.0)).cmp(&(u128::from(a.1) * u128::from(b.0)))
        });
        let mut cap = left;
        let mut ub = in_cnt;
        for (sz, cnt) in arr {
            if sz == 0 || sz <= cap {
                cap -= sz.min(cap);
                ub += cnt;
            } else {
                // One fractional item; its floor keeps the bound integral.
                ub += (u128::from(cnt) * u128::from(cap) / u128::from(sz)) as u64;
                break;
            }
        }
        u32::try_from(ub.min(u64::from(cx.suffix_pot[j]))).unwrap_or(cx.suffix_pot[j])
    }

    /// Running totals along one branch of the profile search.
    #[derive(Clone, Copy)]
    struct Node {
        adm: u32,
        cp: u32,
        up: u32,
        bytes: u64,
        act: u32,
        cached: bool,
    }

    /// Lower bound on the local power of any completion of this branch
    /// (later cells only add active cells, loads, and cache use).
    fn floor_uw(cx: &Cx, at: Node) -> u64 {
        let lr = match (ceil_div(at.cp, cx.cap_cp), ceil_div(at.up, cx.cap_up)) {
            (Some(a), Some(b)) => a.max(b),
            _ => return u64::MAX,
        };
        local_price(
            &cx.grid,
            &Agg {
                act: at.act,
                cached: at.cached,
                ..Agg::ZERO
            },
            lr,
        )
    }

    fn rec(cx: &mut Cx, j: usize, at: Node, files: &mut Vec<u32>, items: &mut Vec<(u32, u32)>) {
        if *cx.budget == 0 {
            cx.exhausted = true;
            return;
        }
        *cx.budget -= 1;
        if !cx.want_prices && cx.best == cx.suffix_pot[0] {
            return;
        }
        if j == cx.cells.len() {
            if let Some(lr) = min_bins_2d(items, cx.cap_cp, cx.cap_up, cx.du_count) {
                cx.best = cx.best.max(at.adm);
                if cx.want_prices {
                    let agg = Agg {
                        act: at.act,
                        cached: at.cached,
                        ..Agg::ZERO
                    };
                    let uw = local_price(&cx.grid, &agg, lr);
                    let slot = &mut cx.price[at.adm as usize];
                    *slot = (*slot).min(uw);
                }
            }
            return;
        }
        let mut reach = cx.suffix_pot[j];
        if cx.cache_forced {
            reach = reach.min(cache_ub(cx, j, files, at.bytes));
        }
        if cx.want_prices {
            // Useful only if some reachable admission level could still
            // get cheaper than this branch's power floor.
            let fl = floor_uw(cx, at);
            let hi = (at.adm + reach) as usize;
            if !cx.price[at.adm as usize..=hi].iter().any(|&p| p > fl) {
                return;
            }
        } else if at.adm + reach <= cx.best {
            return;
        }
        let m = cx.m;
        for o in &m.options[cx.cells[j]] {
            if !cx.want_prices && at.adm + o.n_admit + cx.suffix_pot[j + 1] <= cx.best {
                // Options are sorted most-admitting first.
                break;
            }
            let ncp = at.cp + o.ec_bundle.0;
            let nup = at.up + o.ec_up_total(m.ec_loose_size);
            let du_ok = matches!(
                (ceil_div(ncp, cx.cap_cp), ceil_div(nup, cx.cap_up)),
                (Some(a), Some(b)) if a.max(b) <= cx.du_count
            );
            if !du_ok {
                continue;
            }
            let mut nbytes = at.bytes;
            let mut added = 0usize;
            let mut fits = true;
            for &f in &o.cached_files {
                if !files.contains(&f) {
                    nbytes += m.s.file(f).size_bytes;
                    if nbytes > cx.cache_bytes {
                        fits = false;
                        break;
                    }
                    files.push(f);
                    added += 1;
                }
            }
            if fits {
                let base_items = items.len();
                if o.active {
                    items.push(o.ec_bundle);
                    for _ in 0..o.ec_loose {
                        items.push((0, m.ec_loose_size));
                    }
                }
                let next = Node {
                    adm: at.adm + o.n_admit,
                    cp: ncp,
                    up: nup,
                    bytes: nbytes,
                    act: at.act + u32::from(o.active),
                    cached: at.cached || !o.cached.is_empty(),
                };
                rec(cx, j + 1, next, files, items);
                items.truncate(base_items);
            }
            files.truncate(files.len() - added);
            if cx.exhausted || (!cx.want_prices && cx.best == cx.suffix_pot[0]) {
                return;
            }
        }
    }

    let mut cx = Cx {
        m,
        cells: &cells,
        cap_cp: ec.cap_cp,
        cap_up: ec.cap_up,
        du_count: ec.du_count,
        cache_bytes: ec.cache_bytes,
        suffix_pot: &suffix_pot,
        cache_forced,
        best: 0,
        price: if want_prices {
            vec![u64::MAX; suffix_pot[0] as usize + 1]
        } else {
            Vec::new()
        },
        want_prices,
        grid: m.grid,
        budget,
        exhausted: false,
    };
    let mut files = Vec::new();
    let mut items = Vec::new();
    let root = Node {
        adm: 0,
        cp: 0,
        up: 0,
        bytes: 0,
        act: 0,
        cached: false,
    };
    rec(&mut cx, 0, root, &mut files, &mut items);
    if cx.exhausted {
        EcProfile {
            cap: suffix_pot[0],
            price: None,
        }
    } else {
        EcProfile {
            cap: cx.best,
            price: cx.want_prices.then(|| {
                let mut p = cx.price;
                p.truncate(cx.best as usize + 1);
                p
            }),
        }
    }
}

impl SearchCtx {
    pub(crate) fn new(m: &Model, opts: &SolverOptions) -> Self {
        let n = m.cells.len();
        let ecs = m.ecs.len();
        let (gap_num, gap_den, threshold_exact) = if opts.optimality_gap == 0.0 {
            (0, 1, true)
        } else {
            // threshold = floor(uw * (1 - gap)) via integer arithmetic on
            // a 2^32 denominator.
            let scaled = ((1.0 - opts.optimality_gap) * 4294967296.0).floor() as u64;
            (scaled, 1u64 << 32, false)
        };
        let mut ctx = SearchCtx {
            fronts_lv: vec![Vec::new(); n + 1],
            maxlvl: vec![0; n + 1],
            fronts_cond: vec![Vec::new(); n + 1],
            ec_cap: vec![0; ecs],
            cache_tail: vec![None; n],
            cap_ec_suffix: vec![0; ecs + 1],
            ec_lvl_price: vec![Vec::new(); ecs],
            lvl_suffix: vec![Vec::new(); ecs + 1],
            ec_scal_cond: vec![None; ecs],
            scal_cond_suffix: vec![None; ecs + 1],
            gap_num,
            gap_den,
            threshold_exact,
        };
        for e in 0..ecs {
            ctx.build_ec(m, e);
        }
        ctx.fold_suffixes(m);
        ctx
    }

    /// Recompute everything derived from one cloud's option lists: its
    /// admission cap, leveled and conditioned fronts, level prices, and
    /// separable minima. Call [`Self::fold_suffixes`] afterwards.
    pub(crate) fn build_ec(&mut self, m: &Model, e: usize) {
        let grid = &m.grid;
        let ec = &m.ecs[e];
        let cells = ec.cells.clone();

        // Cache-limited admission tails, built backward so each position
        // extends the demand table of the one after it.
        let mut forced = true;
        let mut demand: std::collections::BTreeMap<u32, (u64, u32)> = std::collections::BTreeMap::new();
        for i in cells.clone().rev() {
            forced = forced
                && m.options[i]
                    .iter()
                    .all(|o| o.cached.len() == o.choices.len());
            if !forced {
                self.cache_tail[i] = None;
                continue;
            }
            let mut admissible = 0u32;
            for o in &m.options[i] {
                admissible |= o.mask;
            }
            for (k, &u) in m.cells[i].users.iter().enumerate() {
                if admissible & (1 << k) != 0 {
                    let f = m.users[u].file;
                    let ent = demand.entry(f).or_insert((m.s.file(f).size_bytes, 0));
                    ent.1 += 1;
                }
            }
            let mut stats: Vec<(u32, u64, u32)> = demand
                .iter()
                .map(|(&f, &(sz, cnt))| (f, sz, cnt))
                .collect();
            stats.sort_by(|a, b| {
                (u128::from(b.2) * u128::from(a.1)).cmp(&(u128::from(a.2) * u128::from(b.1)))
            });
            self.cache_tail[i] = Some(stats);
        }

        // Admission cap — with exact level prices where the cache is what
        // limits admission (the profile tree is small exactly then, and
        // level pricing blind to the cache would be uselessly optimistic).
        let mut budget = EC_CAP_BUDGET;
        let want_prices = !cells.is_empty() && self.cache_tail[cells.start].is_some();
        let prof = ec_profile(m, e, &mut budget, want_prices);
        self.ec_cap[e] = prof.cap;

        // Admission-leveled fronts, folded backward through the cloud.
        let mut carry: Vec<Vec<Agg>> = vec![vec![Agg::ZERO]];
        for i in cells.clone().rev() {
            let top = m.max_adm[i] as usize + carry.len() - 1;
            let mut next: Vec<Vec<Agg>> = vec![Vec::new(); top + 1];
            for o in &m.options[i] {
                let a = opt_agg(m, o);
                for (k, fr) in carry.iter().enumerate() {
                    for f in fr {
                        pareto_insert(&mut next[o.n_admit as usize + k], a.plus(f));
                    }
                }
            }
            for lv in &mut next {
                let v = std::mem::take(lv);
                *lv = cap_front(v, LVL_FRONT_CAP);
            }
            self.maxlvl[i] = top as u32;
            self.fronts_lv[i] = next.clone();
            carry = next;
        }
        let lv_start = carry;

        // Full-admission-conditioned fronts.
        let mut carry: Vec<Agg> = vec![Agg::ZERO];
        for i in cells.clone().rev() {
            let mut next: Vec<Agg> = Vec::new();
            for o in m.full_options(i) {
                let a = opt_agg(m, o);
                for f in &carry {
                    pareto_insert(&mut next, a.plus(f));
                }
            }
            let next = cap_front(next, COND_FRONT_CAP);
            self.fronts_cond[i] = next.clone();
            carry = next;
        }

        // Separable minima over the conditioned front at the cloud start.
        let mut min_local = u64::MAX;
        let mut min_cc_cp = u32::MAX;
        let mut min_cc_up = u32::MAX;
        let mut min_bw = f64::INFINITY;
        for f in &carry {
            let lr = match (ceil_div(f.ec_cp, ec.cap_cp), ceil_div(f.ec_up, ec.cap_up)) {
                (Some(a), Some(b)) => a.max(b),
                _ => continue,
            };
            if lr > ec.du_count {
                continue;
            }
            min_local = min_local.min(local_price(grid, f, lr));
            min_cc_cp = min_cc_cp.min(f.cc_cp);
            min_cc_up = min_cc_up.min(f.cc_up);
            min_bw = min_bw.min(f.bw);
        }
        self.ec_scal_cond[e] = if min_local == u64::MAX {
            None
        } else {
            Some(Scal {
                local_uw: min_local,
                cc_cp: min_cc_cp,
                cc_up: min_cc_up,
                bw: min_bw,
            })
        };

        // Level prices for the whole cloud: price[a] = cheapest local
        // power among DU-feasible completions admitting >= a — exact from
        // the profile search when available, otherwise priced off the
        // leveled fronts (cache-blind, still a valid floor).
        let lvlmin = if let Some(p) = prof.price {
            p
        } else {
            let kmax = lv_start.len() - 1;
            let mut lv = vec![u64::MAX; kmax + 1];
            for (k, fr) in lv_start.iter().enumerate() {
                for f in fr {
                    let lr = match (ceil_div(f.ec_cp, ec.cap_cp), ceil_div(f.ec_up, ec.cap_up)) {
                        (Some(a), Some(b)) => a.max(b),
                        _ => continue,
                    };
                    if lr > ec.du_count {
                        continue;
                    }
                    lv[k] = lv[k].min(local_price(grid, f, lr));
                }
            }
            lv
        };
        let kmax = lvlmin.len() - 1;
        let mut suf = vec![u64::MAX; kmax + 2];
        for k in (0..=kmax).rev() {
            suf[k] = suf[k + 1].min(lvlmin[k]);
        }
        let cap = self.ec_cap[e] as usize;
        debug_assert!(cap <= kmax || cells.is_empty());
        self.ec_lvl_price[e] = (0..=cap.min(kmax)).map(|a| suf[a]).collect();
        if self.ec_lvl_price[e].is_empty() {
            self.ec_lvl_price[e] = vec![0];
        }
    }

    /// Refold the cross-cloud suffix tables after one or more
    /// [`Self::build_ec`] calls.
    pub(crate) fn fold_suffixes(&mut self, m: &Model) {
        let ecs = m.ecs.len();
        self.cap_ec_suffix[ecs] = 0;
        for e in (0..ecs).rev() {
            self.cap_ec_suffix[e] = self.cap_ec_suffix[e + 1] + self.ec_cap[e];
        }

        self.lvl_suffix[ecs] = vec![0];
        for e in (0..ecs).rev() {
            let total = self.cap_ec_suffix[e] as usize;
            let mut out = vec![u64::MAX; total + 1];
            let price = &self.ec_lvl_price[e];
            let rest = &self.lvl_suffix[e + 1];
            for (a1, &p) in price.iter().enumerate() {
                if p == u64::MAX {
                    continue;
                }
                for (a2, &r) in rest.iter().enumerate() {
                    if r == u64::MAX {
                        continue;
                    }
                    let v = p + r;
                    if v < out[a1 + a2] {
                        out[a1 + a2] = v;
                    }
                }
            }
            // "At least a" admits everything "at least a-1" does, so a
            // running max keeps the table monotone (and only sharpens it).
            for a in 1..=total {
                if out[a] < out[a - 1] {
                    out[a] = out[a - 1];
                }
            }
            self.lvl_suffix[e] = out;
        }

        self.scal_cond_suffix[ecs] = Some(Scal::default());
        for e in (0..ecs).rev() {
            self.scal_cond_suffix[e] = match (self.ec_scal_cond[e], self.scal_cond_suffix[e + 1]) {
                (Some(a), Some(b)) => Some(Scal {
                    local_uw: a.local_uw + b.local_uw,
                    cc_cp: a.cc_cp + b.cc_cp,
                    cc_up: a.cc_up + b.cc_up,
                    bw: a.bw + b.bw,
                }),
                _ => None,
            };
        }
    }

    fn prune_threshold(&self, inc_uw: u64) -> u64 {
        if self.threshold_exact {
            inc_uw
        } else {
            ((u128::from(inc_uw) * u128::from(self.gap_num)) / u128::from(self.gap_den)) as u64
        }
    }

    /// Admissible microwatt lower bound over completions of `st` from cell
    /// position `i` whose total admission reaches at least `target_adm`.
    /// `u64::MAX` means no such completion exists.
    fn bound(&self, m: &Model, st: &State, i: usize, target_adm: u32) -> u64 {
        let lv = self.bound_leveled(m, st, i, target_adm);
        if lv == u64::MAX {
            return u64::MAX;
        }
        if st.adm + m.pot_suffix[i] == target_adm {
            // Reaching the target forces every remaining cell to admit its
            // per-cell maximum, so the conditioned front applies — and if
            // it is empty the target is outright unreachable.
            let cond = self.bound_conditioned(m, st, i, target_adm > 0 || st.adm > 0);
            if cond == u64::MAX {
                return u64::MAX;
            }
            return lv.max(cond);
        }
        lv
    }

    fn bound_leveled(&self, m: &Model, st: &State, i: usize, target_adm: u32) -> u64 {
        let grid = &m.grid;
        let e = m.cells[i].ec;
        let need = target_adm.saturating_sub(st.adm);
        let mut base = st.done_uw;
        if grid.cc_cache_always_on || st.any_uncached {
            base += grid.cache_cc;
        }
        let any_user = target_adm > 0 || st.adm > 0;
        // At a cloud boundary the state carries no partial cloud content, so
        // the cross-cloud level prices cover the *current* cloud as well.
        // Those prices account for cache capacity when the profile search
        // produced them, which the per-position fronts never do, so this
        // floor can be much sharper; both are admissible, so take the max.
        let mut start_floor = 0u64;
        if i == m.ecs[e].cells.start {
            debug_assert_eq!(st.cur_adm, 0);
            match self.lvl_suffix[e].get(need as usize) {
                None | Some(&u64::MAX) => return u64::MAX,
                Some(&suffix) => {
                    let l = match (
                        ceil_div(st.cc_cp, m.cap_cp_cc),
                        ceil_div(st.cc_up, m.cap_up_cc),
                    ) {
                        (Some(a), Some(b)) => a.max(b),
                        _ => return u64::MAX,
                    };
                    if l > m.du_cc {
                        return u64::MAX;
                    }
                    let mut v = grid.du_cc * u64::from(l);
                    if l > 0 {
                        v += grid.cool_cc;
                    }
                    let mut g = if m.k_mbps > 0.0 {
                        (((st.bw_closed - 1e-6) / m.k_mbps).ceil().max(0.0)) as u64
                    } else {
                        u64::from(st.bw_closed > 0.0)
                    };
                    if any_user {
                        g = g.max(1);
                    }
                    v += grid.lc * g;
                    start_floor = v.saturating_add(suffix);
                }
            }
        }
        let suffix_prices = &self.lvl_suffix[e + 1];
        let mut best = u64::MAX;
        for (k, front) in self.fronts_lv[i].iter().enumerate() {
            if front.is_empty() {
                continue;
            }
            let need_later = need.saturating_sub(k as u32) as usize;
            let Some(&later) = suffix_prices.get(need_later) else {
                continue;
            };
            if later == u64::MAX {
                continue;
            }
            for f in front {
                let lr = match (
                    ceil_div(st.cur_cp + f.ec_cp, m.ecs[e].cap_cp),
                    ceil_div(st.cur_up + f.ec_up, m.ecs[e].cap_up),
                ) {
                    (Some(a), Some(b)) => a.max(b),
                    _ => continue,
                };
                if lr > m.ecs[e].du_count {
                    continue;
                }
                let act = st.cur_active + f.act;
                let mut v = (grid.tx + grid.fh) * u64::from(act);
                if st.cur_any || f.act > 0 {
                    v += grid.onu;
                }
                v += grid.du_ec * u64::from(lr);
                if lr > 0 {
                    v += grid.cool_ec;
                }
                if st.cur_cached || f.cached {
                    v += grid.cache_ec;
                }
                // Later clouds contribute admissions at `later` price; their
                // central loads and bandwidth relax to zero.
                let ccp = st.cc_cp + f.cc_cp;
                let cup = st.cc_up + f.cc_up;
                let l = match (ceil_div(ccp, m.cap_cp_cc), ceil_div(cup, m.cap_up_cc)) {
                    (Some(a), Some(b)) => a.max(b),
                    _ => continue,
                };
                if l > m.du_cc {
                    continue;
                }
                v += grid.du_cc * u64::from(l);
                if l > 0 {
                    v += grid.cool_cc;
                }
                let bw = st.bw_closed + st.cur_bw + f.bw;
                let mut g = if m.k_mbps > 0.0 {
                    (((bw - 1e-6) / m.k_mbps).ceil().max(0.0)) as u64
                } else {
                    u64::from(bw > 0.0)
                };
                if any_user {
                    g = g.max(1);
                }
                v += grid.lc * g;
                best = best.min(v.saturating_add(later));
            }
        }
        match best {
            u64::MAX => u64::MAX,
            b => base.saturating_add(b.max(start_floor)),
        }
    }

    fn bound_conditioned(&self, m: &Model, st: &State, i: usize, any_user: bool) -> u64 {
        let grid = &m.grid;
        let e = m.cells[i].ec;
        let Some(suf) = self.scal_cond_suffix[e + 1] else {
            return u64::MAX;
        };
        let mut base = st.done_uw + suf.local_uw;
        if grid.cc_cache_always_on || st.any_uncached {
            base += grid.cache_cc;
        }
        let mut best = u64::MAX;
        for f in &self.fronts_cond[i] {
            let lr = match (
                ceil_div(st.cur_cp + f.ec_cp, m.ecs[e].cap_cp),
                ceil_div(st.cur_up + f.ec_up, m.ecs[e].cap_up),
            ) {
                (Some(a), Some(b)) => a.max(b),
                _ => continue,
            };
            if lr > m.ecs[e].du_count {
                continue;
            }
            let act = st.cur_active + f.act;
            let mut v = (grid.tx + grid.fh) * u64::from(act);
            if st.cur_any || f.act > 0 {
                v += grid.onu;
            }
            v += grid.du_ec * u64::from(lr);
            if lr > 0 {
                v += grid.cool_ec;
            }
            if st.cur_cached || f.cached {
                v += grid.cache_ec;
            }
            let ccp = st.cc_cp + f.cc_cp + suf.cc_cp;
            let cup = st.cc_up + f.cc_up + suf.cc_up;
            let l = match (ceil_div(ccp, m.cap_cp_cc), ceil_div(cup, m.cap_up_cc)) {
                (Some(a), Some(b)) => a.max(b),
                _ => continue,
            };
            if l > m.du_cc {
                continue;
            }
            v += grid.du_cc * u64::from(l);
            if l > 0 {
                v += grid.cool_cc;
            }
            let bw = st.bw_closed + st.cur_bw + f.bw + suf.bw;
            let mut g = if m.k_mbps > 0.0 {
                (((bw - 1e-6) / m.k_mbps).ceil().max(0.0)) as u64
            } else {
                u64::from(bw > 0.0)
            };
            if any_user {
                g = g.max(1);
            }
            v += grid.lc * g;
            best = best.min(v);
        }
        match best {
            u64::MAX => u64::MAX,
            b => base.saturating_add(b),
        }
    }
}

/// Mutable search state with undo-based application of cell options.
struct State<'a> {
    chosen: Vec<Option<&'a CellOpt>>,
    adm: u32,
    any_uncached: bool,
    /// Admissions inside the currently open (not yet closed) cloud.
    cur_adm: u32,
    cur_cp: u32,
    cur_up: u32,
    cur_active: u32,
    cur_any: bool,
    cur_cached: bool,
    cur_bw: f64,
    /// Union of files cached in the cloud being filled: the slice
    /// `cur_files[files_base..]`; entries below `files_base` belong to
    /// already-closed clouds and are kept only so reverts can restore them.
    cur_files: Vec<u32>,
    files_base: usize,
    cur_bytes: u64,
    cc_cp: u32,
    cc_up: u32,
    bw_closed: f64,
    done_uw: u64,
    ec_loaded: Vec<u32>,
    per_ec_bw: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Undo {
    adm: u32,
    any_uncached: bool,
    cur_adm: u32,
    cur_cp: u32,
    cur_up: u32,
    cur_active: u32,
    cur_any: bool,
    cur_cached: bool,
    cur_bw: f64,
    cur_files_len: usize,
    files_base: usize,
    cur_bytes: u64,
    cc_cp: u32,
    cc_up: u32,
    bw_closed: f64,
    done_uw: u64,
    closed: bool,
}

impl<'a> State<'a> {
    fn new(n: usize) -> Self {
        State {
            chosen: vec![None; n],
            adm: 0,
            any_uncached: false,
            cur_adm: 0,
            cur_cp: 0,
            cur_up: 0,
            cur_active: 0,
            cur_any: false,
            cur_cached: false,
            cur_bw: 0.0,
            cur_files: Vec::new(),
            files_base: 0,
            cur_bytes: 0,
            cc_cp: 0,
            cc_up: 0,
            bw_closed: 0.0,
            done_uw: 0,
            ec_loaded: Vec::new(),
            per_ec_bw: Vec::new(),
        }
    }
}

struct Worker<'m, 'a> {
    sh: &'a Shared<'m, 'a>,
    st: State<'a>,
    local_nodes: u64,
    check_counter: u32,
    aborted: bool,
}

impl<'m, 'a> Worker<'m, 'a> {
    fn new(sh: &'a Shared<'m, 'a>) -> Self {
        Worker {
            sh,
            st: State::new(sh.m.cells.len()),
            local_nodes: 0,
            check_counter: 0,
            aborted: false,
        }
    }

    fn tick(&mut self) {
        self.local_nodes += 1;
        self.check_counter += 1;
        if self.check_counter >= 1024 {
            self.check_counter = 0;
            let seen = self.sh.nodes.fetch_add(1024, AOrd::Relaxed) + 1024;
            if let Some(nb) = self.sh.node_budget {
                if seen >= nb {
                    self.sh.capped.store(true, AOrd::Relaxed);
                }
            }
            if Instant::now() >= self.sh.deadline {
                self.sh.timed_out.store(true, AOrd::Relaxed);
            }
            if self.sh.timed_out.load(AOrd::Relaxed)
                || self.sh.capped.load(AOrd::Relaxed)
                || self.sh.satisfied.load(AOrd::Relaxed)
            {
                self.aborted = true;
            }
        }
    }

    /// Remaining admission potential of a completion from cell position
    /// `i`, honoring per-cloud admission caps and, where admission implies
    /// caching, the bytes left in the current cloud's cache.
    fn potential(&self, i: usize) -> u32 {
        let m = self.sh.m;
        let ctx = self.sh.ctx;
        let e = m.cells[i].ec;
        let mut rest = ctx.maxlvl[i].min(ctx.ec_cap[e].saturating_sub(self.st.cur_adm));
        if let Some(stats) = ctx.cache_tail[i].as_deref() {
            rest = rest.min(self.cache_rest(stats, m.ecs[e].cache_bytes));
        }
        self.st.adm + rest + ctx.cap_ec_suffix[e + 1]
    }

    /// Fractional-knapsack bound on further admissions in the current cloud
    /// given its remaining file demand: users of already-cached files count
    /// fully, fresh files fill the remaining bytes in density order with one
    /// fractional (floored) cutoff.
    fn cache_rest(&self, stats: &[(u32, u64, u32)], cache_bytes: u64) -> u32 {
        let seg = &self.st.cur_files[self.st.files_base..];
        let mut left = cache_bytes - self.st.cur_bytes;
        let mut ub = 0u64;
        for &(f, sz, cnt) in stats {
            if seg.contains(&f) {
                ub += u64::from(cnt);
            } else if sz <= left {
                left -= sz;
                ub += u64::from(cnt);
            } else {
                ub += (u128::from(cnt) * u128::from(left) / u128::from(sz)) as u64;
                left = 0;
            }
        }
        u32::try_from(ub).unwrap_or(u32::MAX)
    }

    /// Apply option `o` at cell `i`; returns the undo token, or `None` if
    /// quick checks already rule the child out.
    fn apply(&mut self, i: usize, o: &'a CellOpt) -> Option<Undo> {
        let m = self.sh.m;
        let e = m.cells[i].ec;
        let undo = Undo {
            adm: self.st.adm,
            any_uncached: self.st.any_uncached,
            cur_adm: self.st.cur_adm,
            cur_cp: self.st.cur_cp,
            cur_up: self.st.cur_up,
            cur_active: self.st.cur_active,
            cur_any: self.st.cur_any,
            cur_cached: self.st.cur_cached,
            cur_bw: self.st.cur_bw,
            cur_files_len: self.st.cur_files.len(),
            files_base: self.st.files_base,
            cur_bytes: self.st.cur_bytes,
            cc_cp: self.st.cc_cp,
            cc_up: self.st.cc_up,
            bw_closed: self.st.bw_closed,
            done_uw: self.st.done_uw,
            closed: false,
        };
        let st = &mut self.st;
        st.chosen[i] = Some(o);
        st.adm += o.n_admit;
        st.cur_adm += o.n_admit;
        if o.choices.iter().any(|&(_, _, d)| !d) {
            st.any_uncached = true;
        }
        if o.active {
            st.cur_active += 1;
            st.cur_any = true;
        }
        st.cur_cp += o.ec_bundle.0;
        st.cur_up += o.ec_up_total(m.ec_loose_size);
        st.cur_cached |= !o.cached.is_empty();
        st.cur_bw += o.bw;
        st.cc_cp += o.cc_cp_total();
        st.cc_up += o.cc_up_total();
        for &f in &o.cached_files {
            if !st.cur_files[st.files_base..].contains(&f) {
                st.cur_files.push(f);
                st.cur_bytes += m.s.file(f).size_bytes;
            }
        }

        // Quick partial rejection: cache bytes and capacities at both tiers
        // only grow as the cloud fills.
        let ec = &m.ecs[e];
        let lr_ok = matches!(
            (ceil_div(st.cur_cp, ec.cap_cp), ceil_div(st.cur_up, ec.cap_up)),
            (Some(a), Some(b)) if a.max(b) <= ec.du_count
        );
        let cc_ok = matches!(
            (ceil_div(st.cc_cp, m.cap_cp_cc), ceil_div(st.cc_up, m.cap_up_cc)),
            (Some(a), Some(b)) if a.max(b) <= m.du_cc
        );
        if !lr_ok || !cc_ok || st.cur_bytes > ec.cache_bytes {
            self.revert(i, undo);
            return None;
        }

        let last_of_ec = i + 1 == ec.cells.end;
        if last_of_ec && !self.close_ec(e) {
            self.revert(i, undo);
            return None;
        }
        Some(Undo {
            closed: last_of_ec,
            ..undo
        })
    }

    /// Settle the just-completed cloud `e`: exact loaded-DU minimum, cache
    /// capacity, exact bandwidth fold, and its local power.
    fn close_ec(&mut self, e: usize) -> bool {
        let m = self.sh.m;
        let grid = &m.grid;
        let ec = &m.ecs[e];
        let mut items: Vec<(u32, u32)> = Vec::new();
        for ci in ec.cells.clone() {
            let o = self.st.chosen[ci].expect("cells of a closing cloud are decided");
            if o.active {
                items.push(o.ec_bundle);
                for _ in 0..o.ec_loose {
                    items.push((0, m.ec_loose_size));
                }
            }
        }
        // Cache capacity was enforced as each cell applied; cross-check the
        // incremental union against a recount.
        #[cfg(debug_assertions)]
        {
            let mut files: Vec<u32> = Vec::new();
            let mut bytes = 0u64;
            for ci in ec.cells.clone() {
                let o = self.st.chosen[ci].expect("decided");
                for &f in &o.cached_files {
                    if !files.contains(&f) {
                        files.push(f);
                        bytes += m.s.file(f).size_bytes;
                    }
                }
            }
            debug_assert_eq!(bytes, self.st.cur_bytes);
        }
        let Some(lr) = min_bins_2d(&items, ec.cap_cp, ec.cap_up, ec.du_count) else {
            return false;
        };
        // Exact per-cloud bandwidth with the same fold order as the public
        // counting code.
        let mut bw = 0.0f64;
        for ci in ec.cells.clone() {
            let o = self.st.chosen[ci].expect("decided");
            for t in &o.bw_terms {
                bw += t;
            }
        }
        let mut local = (grid.tx + grid.fh) * u64::from(self.st.cur_active);
        if self.st.cur_any {
            local += grid.onu;
        }
        local += grid.du_ec * u64::from(lr);
        if lr > 0 {
            local += grid.cool_ec;
        }
        if self.st.cur_cached {
            local += grid.cache_ec;
        }
        self.st.done_uw += local;
        self.st.bw_closed += bw;
        self.st.ec_loaded.push(lr);
        self.st.per_ec_bw.push(bw);
        self.st.cur_adm = 0;
        self.st.cur_cp = 0;
        self.st.cur_up = 0;
        self.st.cur_active = 0;
        self.st.cur_any = false;
        self.st.cur_cached = false;
        self.st.cur_bw = 0.0;
        self.st.files_base = self.st.cur_files.len();
        self.st.cur_bytes = 0;
        true
    }

    fn revert(&mut self, i: usize, undo: Undo) {
        if undo.closed {
            self.st.ec_loaded.pop();
            self.st.per_ec_bw.pop();
        }
        self.st.chosen[i] = None;
        self.st.adm = undo.adm;
        self.st.any_uncached = undo.any_uncached;
        self.st.cur_adm = undo.cur_adm;
        self.st.cur_cp = undo.cur_cp;
        self.st.cur_up = undo.cur_up;
        self.st.cur_active = undo.cur_active;
        self.st.cur_any = undo.cur_any;
        self.st.cur_cached = undo.cur_cached;
        self.st.cur_bw = undo.cur_bw;
        self.st.cur_files.truncate(undo.cur_files_len);
        self.st.files_base = undo.files_base;
        self.st.cur_bytes = undo.cur_bytes;
        self.st.cc_cp = undo.cc_cp;
        self.st.cc_up = undo.cc_up;
        self.st.bw_closed = undo.bw_closed;
        self.st.done_uw = undo.done_uw;
    }

    fn dfs(&mut self, i: usize) {
        self.tick();
        if self.aborted {
            return;
        }
        let m = self.sh.m;
        if i == m.cells.len() {
            self.leaf();
            return;
        }
        let pot = self.potential(i);
        let mut need_adm = 0u32;
        // Existence-query target pruning: only leaves packing at least the
        // target matter, so equal-target subtrees with a worse-than-target
        // power bound can go too.
        if let Some(t) = self.sh.stop_at {
            let (ta, tu) = unpack(t);
            if pot < ta {
                return;
            }
            if pot == ta && self.sh.ctx.bound(m, &self.st, i, ta) > tu {
                return;
            }
            need_adm = ta;
        }
        // Incumbent pruning (non-strict at the exact threshold: a tie can
        // never improve the value, and phase 2 owns the tie-break).
        let packed = self.sh.packed.load(AOrd::Relaxed);
        if packed != 0 {
            let (ia, iu) = unpack(packed);
            if pot < ia {
                return;
            }
            if pot == ia {
                let lb = self.sh.ctx.bound(m, &self.st, i, ia);
                let thr = self.sh.ctx.prune_threshold(iu);
                if lb > thr || (self.sh.ctx.threshold_exact && lb == thr) {
                    return;
                }
            }
            need_adm = need_adm.max(ia);
        }
        // Options are pre-sorted most-admitting first, and the capped
        // child potential is monotone in the option's admission count.
        let e = m.cells[i].ec;
        let cells_end = m.ecs[e].cells.end;
        let opts: &'a [CellOpt] = &m.options[i];
        for o in opts {
            let rest = if i + 1 < cells_end {
                self.sh.ctx.maxlvl[i + 1].min(
                    self.sh.ctx.ec_cap[e]
                        .saturating_sub(self.st.cur_adm + o.n_admit),
                )
            } else {
                0
            };
            let child_pot = self.st.adm + o.n_admit + rest + self.sh.ctx.cap_ec_suffix[e + 1];
            if child_pot < need_adm {
                break;
            }
            if let Some(undo) = self.apply(i, o) {
                self.dfs(i + 1);
                self.revert(i, undo);
            }
            if self.aborted {
                return;
            }
        }
    }

    /// Evaluate a complete placement: exact central packing and wavelength
    /// minimum, then strict incumbent competition.
    fn leaf(&mut self) {
        let m = self.sh.m;
        let chosen: Vec<&CellOpt> = self
            .st
            .chosen
            .iter()
            .map(|o| o.expect("leaf has all cells decided"))
            .collect();
        let mut cc_items: Vec<(u32, u32)> = Vec::new();
        for o in &chosen {
            cc_items.extend_from_slice(&o.cc_items);
        }
        let Some(cc_loaded) = min_bins_2d(&cc_items, m.cap_cp_cc, m.cap_up_cc, m.du_cc) else {
            return;
        };
        let active_ecs: Vec<usize> = (0..m.ecs.len())
            .filter(|&e| m.ecs[e].cells.clone().any(|ci| chosen[ci].n_admit > 0))
            .collect();
        let lit = if active_ecs.is_empty() {
            0
        } else {
            let loads: Vec<f64> = active_ecs
                .iter()
                .map(|&e| self.st.per_ec_bw[e])
                .filter(|&b| b > 0.0)
                .collect();
            let Some(base) = min_groups_f64(&loads, m.k_mbps, m.n_wavelengths) else {
                return;
            };
            let lit = base.max(1);
            if lit > m.n_wavelengths || !can_group(&loads, m.k_mbps, lit) {
                return;
            }
            lit
        };
        let res = LeafResources {
            ec_loaded: self.st.ec_loaded.clone(),
            cc_loaded,
            lit,
            active_ecs,
            bws: self.st.per_ec_bw.clone(),
        };
        let uw = leaf_microwatts(m, &chosen, &res);
        let adm = self.st.adm;
        let cand = pack(adm, uw);
        if cand <= self.sh.packed.load(AOrd::Relaxed) {
            return;
        }
        let mut guard = self.sh.incumbent.lock().expect("incumbent lock");
        let cur = guard.as_ref().map_or(0, |c| pack(c.adm, c.uw));
        if cand <= cur {
            return;
        }
        let assignment = if self.sh.want_assignment {
            let Some((assignment, uw2)) = build_canonical(m, &chosen) else {
                return;
            };
            debug_assert_eq!(uw, uw2, "leaf scoring must agree with construction");
            Some(assignment)
        } else {
            None
        };
        *guard = Some(Incumbent {
            adm,
            uw,
            assignment,
        });
        self.sh.packed.store(cand, AOrd::Relaxed);
        drop(guard);
        if self.sh.stop_at == Some(cand) {
            self.sh.satisfied.store(true, AOrd::Relaxed);
        }
        self.trace_update(adm, uw);
    }

    fn trace_update(&self, adm: u32, uw: u64) {
        if let Some(tr) = self.sh.trace {
            use std::io::Write;
            let t_s = tr.started.elapsed().as_secs_f64();
            let nodes =
                self.sh.nodes_base + self.sh.nodes.load(AOrd::Relaxed) + self.local_nodes % 1024;
            let line = format!(
                "{{\"t_s\":{:.6},\"nodes\":{},\"incumbent_admitted\":{},\"incumbent_w\":{:.6},\"bound_w\":{:.6}}}\n",
                t_s,
                nodes,
                adm,
                uw as f64 / 1e6,
                tr.root_lb_uw as f64 / 1e6
            );
            if let Ok(mut w) = tr.w.lock() {
                let _ = w.write_all(line.as_bytes());
            }
        }
    }
}

/// Outcome of one [`search_core`] pass.
pub(crate) struct CoreOutcome {
    pub best: Option<(u32, u64)>,
    pub assignment: Option<Assignment>,
    pub satisfied: bool,
    pub timed_out: bool,
    pub capped: bool,
    pub nodes: u64,
}

/// One complete branch-and-bound pass over `m`'s option space.
///
/// With `stop_at` set this is an existence query: the pass aborts as
/// `satisfied` as soon as some leaf packs exactly to the target, and
/// prunes everything that cannot reach it. `node_budget` bounds the pass
/// deterministically (counted nodes, not time); `seed` pre-loads the
/// incumbent. The result is schedule-independent unless the pass reports
/// `timed_out` or `capped`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn search_core(
    m: &Model,
    ctx: &SearchCtx,
    workers: usize,
    deadline: Instant,
    stop_at: Option<u64>,
    node_budget: Option<u64>,
    want_assignment: bool,
    seed: Option<(u32, u64, Option<Assignment>)>,
    trace: Option<&Trace>,
    nodes_base: u64,
) -> CoreOutcome {
    let seed_packed = seed.as_ref().map_or(0, |&(adm, uw, _)| pack(adm, uw));
    let shared = Shared {
        m,
        ctx,
        incumbent: Mutex::new(seed.map(|(adm, uw, assignment)| Incumbent {
            adm,
            uw,
            assignment,
        })),
        packed: AtomicU64::new(seed_packed),
        nodes: AtomicU64::new(0),
        nodes_base,
        deadline,
        timed_out: AtomicBool::new(false),
        stop_at,
        satisfied: AtomicBool::new(false),
        node_budget,
        capped: AtomicBool::new(false),
        want_assignment,
        trace,
    };

    if workers <= 1 {
        let mut w = Worker::new(&shared);
        w.dfs(0);
        shared.nodes.fetch_add(w.local_nodes % 1024, AOrd::Relaxed);
    } else {
        // Split the root: each task is one option of the first cell.
        let tasks: Mutex<VecDeque<usize>> = Mutex::new((0..m.options[0].len()).collect());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| {
                    let mut w = Worker::new(&shared);
                    loop {
                        let next = {
                            let mut q = tasks.lock().expect("task queue");
                            q.pop_front()
                        };
                        let Some(k) = next else { break };
                        let o = &m.options[0][k];
                        if let Some(undo) = w.apply(0, o) {
                            w.dfs(1);
                            w.revert(0, undo);
                        }
                        if w.aborted {
                            break;
                        }
                    }
                    shared.nodes.fetch_add(w.local_nodes % 1024, AOrd::Relaxed);
                });
            }
        });
    }

    let satisfied = shared.satisfied.load(AOrd::Relaxed);
    let timed_out = shared.timed_out.load(AOrd::Relaxed) && !satisfied;
    let capped = shared.capped.load(AOrd::Relaxed) && !satisfied;
    let nodes = shared.nodes.load(AOrd::Relaxed);
    let inc = shared.incumbent.lock().expect("incumbent lock").take();
    CoreOutcome {
        best: inc.as_ref().map(|c| (c.adm, c.uw)),
        assignment: inc.and_then(|c| c.assignment),
        satisfied,
        timed_out,
        capped,
        nodes,
    }
}

/// Root lower bound in microwatts over completions in which every cell
/// admits its individually maximal feasible user set. Falls back to the
/// fully relaxed bound when no such completion exists.
fn root_lb_uw(m: &Model, opts: &SolverOptions) -> u64 {
    if m.cells.is_empty() {
        return empty_profile_uw(m);
    }
    let ctx = SearchCtx::new(m, opts);
    let st = State::new(m.cells.len());
    let lb = ctx.bound(m, &st, 0, m.pot_suffix[0]);
    if lb == u64::MAX {
        relaxed_lb_of(m, &ctx)
    } else {
        lb
    }
}

/// Lower bound in microwatts valid for *every* feasible placement,
/// including partial admission: everything not structurally forced (the
/// central cache when configured always-on) is relaxed away.
fn relaxed_lb_of(m: &Model, ctx: &SearchCtx) -> u64 {
    if m.cells.is_empty() {
        return empty_profile_uw(m);
    }
    let st = State::new(m.cells.len());
    let lb = ctx.bound(m, &st, 0, 0);
    if lb == u64::MAX {
        empty_profile_uw(m)
    } else {
        lb
    }
}

fn empty_profile_uw(m: &Model) -> u64 {
    let profile = ActivityProfile {
        lit_wavelengths: 0,
        loaded_cc_dus: 0,
        cc_cache_used: false,
        per_ec: m
            .s
            .topology
            .edge_clouds
            .iter()
            .map(|ec| crate::power::EcActivity {
                ec_id: ec.id,
                active_cells: 0,
                any_user: false,
                loaded_dus: 0,
                any_cached: false,
            })
            .collect(),
    };
    m.grid.profile_microwatts(&profile)
}

pub(crate) fn root_lower_bound_w(s: &Scenario, opts: &SolverOptions) -> f64 {
    let tables = s.split_tables();
    let model = Model::build(s, &tables, opts);
    root_lb_uw(&model, opts) as f64 / 1e6
}

pub(crate) fn relaxed_lower_bound_w(s: &Scenario, opts: &SolverOptions) -> f64 {
    let tables = s.split_tables();
    let model = Model::build(s, &tables, opts);
    if model.cells.is_empty() {
        return empty_profile_uw(&model) as f64 / 1e6;
    }
    let ctx = SearchCtx::new(&model, opts);
    relaxed_lb_of(&model, &ctx) as f64 / 1e6
}

/// Exact search over the full decision space. Returns the optimum (proven
/// unless the time budget ran out or a positive optimality gap was set).
pub(crate) fn solve_exact(s: &Scenario, opts: &SolverOptions) -> Solution {
    let tables = s.split_tables();
    let model = Model::build(s, &tables, opts);
    run_search(s, &model, opts, Vec::new())
}

/// Exact search over whatever option set `model` carries. Baselines reuse
/// the full engine by restricting each cell's options to a fixed placement
/// before calling this; `bypassed` is carried into the returned solution.
pub(crate) fn run_search(
    s: &Scenario,
    model: &Model,
    opts: &SolverOptions,
    bypassed: Vec<ConstraintId>,
) -> Solution {
    let started = Instant::now();
    let deadline = started + std::time::Duration::from_secs_f64(opts.time_budget_s);

    if model.cells.is_empty() || model.users.is_empty() {
        // Nothing to decide: the canonical empty assignment is optimal.
        let chosen: Vec<&CellOpt> = model
            .options
            .iter()
            .map(|cell| cell.iter().find(|o| !o.active).expect("inactive option"))
            .collect();
        let (assignment, uw) = build_canonical(model, &chosen)
            .expect("the all-inactive structure is always feasible");
        return finish(s, opts, assignment, uw, true, uw, bypassed);
    }

    let ctx = SearchCtx::new(model, opts);
    let st0 = State::new(model.cells.len());
    let safe_lb = relaxed_lb_of(model, &ctx);
    let cond_root = ctx.bound(model, &st0, 0, model.pot_suffix[0]);
    let trace_lb = if cond_root == u64::MAX {
        safe_lb
    } else {
        cond_root
    };
    let trace = opts.trace_path.as_ref().and_then(|p| {
        std::fs::File::create(p).ok().map(|f| Trace {
            w: Mutex::new(std::io::BufWriter::new(f)),
            started,
            root_lb_uw: trace_lb,
        })
    });

    let workers = opts.parallel_workers.max(1) as usize;
    let gap_mode = opts.optimality_gap > 0.0;
    let mut nodes_total = 0u64;
    let mut timed_out = false;
    let mut value: Option<(u32, u64)> = None;
    let mut witness: Option<Assignment> = None;
    let mut fallback: Option<(u32, u64, Option<Assignment>)> = None;

    // Phase 1a: probe — is the root bound attained at the root potential?
    if !gap_mode {
        let root_pot = ctx.cap_ec_suffix[0];
        let t_uw = ctx.bound(model, &st0, 0, root_pot);
        if t_uw != u64::MAX {
            let out = search_core(
                model,
                &ctx,
                workers,
                deadline,
                Some(pack(root_pot, t_uw)),
                Some(PROBE_NODE_BUDGET),
                true,
                None,
                trace.as_ref(),
                nodes_total,
            );
            nodes_total += out.nodes;
            if out.satisfied {
                value = Some((root_pot, t_uw));
                witness = out.assignment;
            } else {
                if out.timed_out {
                    timed_out = true;
                }
                fallback = out.best.map(|(a, u)| (a, u, out.assignment));
            }
        }
    }

    // Phase 1b: full value search (seeded with whatever the probe found).
    if value.is_none() && !timed_out {
        let seed = fallback.take();
        let out = search_core(
            model,
            &ctx,
            workers,
            deadline,
            None,
            None,
            true,
            seed,
            trace.as_ref(),
            nodes_total,
        );
        nodes_total += out.nodes;
        if out.timed_out {
            timed_out = true;
            fallback = out.best.map(|(a, u)| (a, u, out.assignment));
        } else if let Some((a, u)) = out.best {
            value = Some((a, u));
            witness = out.assignment;
        } else {
            timed_out = true;
        }
    }

    if timed_out {
        return match fallback {
            Some((adm, uw, Some(assignment))) => {
                // Only the relaxed bound survives unknown admission in the
                // unexplored space; at full admission the conditioned root
                // bound applies too.
                let b = if adm == model.pot_suffix[0] {
                    trace_lb
                } else {
                    safe_lb
                };
                trace_final(trace.as_ref(), nodes_total, adm, uw, false);
                finish(s, opts, assignment, uw, false, b.min(uw), bypassed)
            }
            _ => {
                trace_final(trace.as_ref(), nodes_total, 0, empty_profile_uw(model), false);
                finish(
                    s,
                    opts,
                    Assignment::default(),
                    empty_profile_uw(model),
                    false,
                    0,
                    bypassed,
                )
            }
        };
    }

    let (adm_star, uw_star) = value.expect("a completed pass always reaches some leaf");
    let witness = witness.expect("a completed pass always stores its witness");

    if gap_mode {
        // Gap-complete: every subtree was either explored or bounded above
        // `floor(uw * (1 - gap))`, so that threshold bounds the optimum.
        let b = ctx.prune_threshold(uw_star).max(safe_lb).min(uw_star);
        trace_final(trace.as_ref(), nodes_total, adm_star, uw_star, false);
        return finish(s, opts, witness, uw_star, false, b, bypassed);
    }

    // Phase 2: canonical tie-break among optimal-value placements.
    match super::descent::canonical_min(model, opts, adm_star, uw_star, witness.clone(), deadline)
    {
        Some(assignment) => {
            trace_final(trace.as_ref(), nodes_total, adm_star, uw_star, true);
            finish(s, opts, assignment, uw_star, true, uw_star, bypassed)
        }
        None => {
            // The tie-break ran out of budget: the value is exact but the
            // witness may not be the canonical representative, so stay
            // honest and report it unproven with the exact value as bound.
            trace_final(trace.as_ref(), nodes_total, adm_star, uw_star, false);
            finish(s, opts, witness, uw_star, false, uw_star, bypassed)
        }
    }
}

fn trace_final(trace: Option<&Trace>, nodes: u64, admitted: u32, uw: u64, proven: bool) {
    if let Some(tr) = trace {
        use std::io::Write;
        if let Ok(mut w) = tr.w.lock() {
            let line = format!(
                "{{\"t_s\":{:.6},\"nodes\":{},\"final_admitted\":{},\"final_w\":{:.6},\"proven\":{}}}\n",
                tr.started.elapsed().as_secs_f64(),
                nodes,
                admitted,
                uw as f64 / 1e6,
                proven
            );
            let _ = w.write_all(line.as_bytes());
            let _ = w.flush();
        }
    }
}

fn finish(
    s: &Scenario,
    opts: &SolverOptions,
    assignment: Assignment,
    uw: u64,
    proven: bool,
    bound_uw: u64,
    bypassed: Vec<ConstraintId>,
) -> Solution {
    let total_power_w = crate::power::total_power(&assignment, s);
    debug_assert!(
        (total_power_w - uw as f64 / 1e6).abs() < 1e-6,
        "microwatt scoring must agree with the public power count"
    );
    let bound_w = if proven {
        total_power_w
    } else {
        (bound_uw as f64 / 1e6).min(total_power_w)
    };
    let admitted_count = assignment.admitted.len() as u32;
    let dropped = super::dropped_of(s, &assignment);
    Solution {
        assignment,
        total_power_w,
        admitted_count,
        proven_optimal: proven,
        bound_w,
        wall_time_s: 0.0,
        dropped,
        bypassed,
        options: opts.clone(),
    }
}
