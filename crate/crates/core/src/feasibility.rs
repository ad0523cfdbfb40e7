//! Constraint checker: evaluates an assignment against the twelve
//! constraint families and reports every violation as data.
//!
//! Families:
//! - `C1` single-split rule: each admitted user splits exactly once across
//!   UP and CP (`I(p<f_up) + I(q<f_cp) = 1`); the relaxed `le` relation
//!   additionally admits the fully distributed corner (indicator sum 0).
//! - `C2`/`C3` co-location: a user's centrally-split counterpart lives on
//!   its cell's DU (`p < f_up ⇒ m = x_cell`; `q < f_cp ⇒ n_i = y_cell`).
//! - `C4`/`C5` CP capacity per EC/CC DU; `C6`/`C7` UP capacity per EC/CC DU.
//! - `C8` per-wavelength midhaul bandwidth.
//! - `C9`/`C10` caching implies full edge UP placement (`b=1 ⇒ p = f_up`,
//!   the exact form of the printed big-M pair with `M = f_up + 1`; an
//!   implication break violates both printed inequalities' intent, so both
//!   ids are reported).
//! - `C11` EC cache capacity; `C12` per-user delay threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::assignment::{derive_counts, structural_errors, Assignment};
use crate::delay::total_user_delay;
use crate::scenario::Scenario;
use crate::split_maps::Site;

/// Identifier of one constraint family.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[allow(missing_docs)]
pub enum ConstraintId {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
    C9,
    C10,
    C11,
    C12,
}

impl ConstraintId {
    /// All families in report order.
    pub const ALL: [ConstraintId; 12] = [
        ConstraintId::C1,
        ConstraintId::C2,
        ConstraintId::C3,
        ConstraintId::C4,
        ConstraintId::C5,
        ConstraintId::C6,
        ConstraintId::C7,
        ConstraintId::C8,
        ConstraintId::C9,
        ConstraintId::C10,
        ConstraintId::C11,
        ConstraintId::C12,
    ];
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl std::str::FromStr for ConstraintId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ConstraintId::ALL
            .iter()
            .copied()
            .find(|c| format!("{c}") == s)
            .ok_or_else(|| format!("unknown constraint id: {s}"))
    }
}

/// One constraint violation: which family, on which entity, and the measured
/// value against its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint_id: ConstraintId,
    /// Entity the violation is about, e.g. `user:3`, `ec:1/du:2`,
    /// `wavelength:0`, `cc/du:1`.
    pub subject: String,
    pub measured: f64,
    pub bound: f64,
}

/// How the single-split rule C1 is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitOnceRelation {
    /// Indicator sum must equal 1 (as printed).
    #[default]
    Eq,
    /// Indicator sum must not exceed 1: additionally allows the fully
    /// distributed corner `p = f_up, q = f_cp`.
    Le,
}

/// Options refining the check.
#[derive(Debug, Clone, Default)]
pub struct CheckOptions {
    pub split_once_relation: SplitOnceRelation,
    /// Evaluate delays with the path-aware relief for edge-served users.
    pub path_aware_delay: bool,
    /// Constraint families to skip entirely (used by the fixed-placement
    /// baseline modes).
    pub skip: BTreeSet<ConstraintId>,
}

/// Check an assignment with default options (strict C1 equality, literal
/// delay sum, nothing skipped). Returns every violation; empty means
/// feasible.
///
/// Precondition: `a` is structurally valid for `s` (see
/// [`structural_errors`]).
pub fn check(a: &Assignment, s: &Scenario) -> Vec<Violation> {
    check_with(a, s, &CheckOptions::default())
}

/// `true` iff [`check`] returns no violations.
pub fn is_feasible(a: &Assignment, s: &Scenario) -> bool {
    check(a, s).is_empty()
}

/// Check an assignment under explicit options.
pub fn check_with(a: &Assignment, s: &Scenario, opts: &CheckOptions) -> Vec<Violation> {
    debug_assert!(structural_errors(a, s).is_empty());
    let tables = s.split_tables();
    let f_up = s.topology.f_up;
    let f_cp = s.topology.f_cp;
    let mut v: Vec<Violation> = Vec::new();
    let on = |id: ConstraintId| !opts.skip.contains(&id);

    // C1: split exactly (or at most) once per admitted user.
    if on(ConstraintId::C1) {
        for &u in &a.admitted {
            let p = a.up_split[&u];
            let q = a.cp_split[&s.user(u).cell_id];
            let ind = u8::from(p < f_up) + u8::from(q < f_cp);
            let violated = match opts.split_once_relation {
                SplitOnceRelation::Eq => ind != 1,
                SplitOnceRelation::Le => ind > 1,
            };
            if violated {
                v.push(Violation {
                    constraint_id: ConstraintId::C1,
                    subject: format!("user:{}", u),
                    measured: f64::from(ind),
                    bound: 1.0,
                });
            }
        }
    }

    // C2: partially central UP rides on the cell's EC CP DU.
    if on(ConstraintId::C2) {
        for &u in &a.admitted {
            let p = a.up_split[&u];
            if p < f_up {
                let cell_id = s.user(u).cell_id;
                let m = a.ec_up_du[&u];
                let x = a.ec_cp_du[&cell_id];
                if m != x {
                    v.push(Violation {
                        constraint_id: ConstraintId::C2,
                        subject: format!("user:{}", u),
                        measured: f64::from(m),
                        bound: f64::from(x),
                    });
                }
            }
        }
    }

    // C3: partially central CP binds every user's CC UP DU to the cell's.
    if on(ConstraintId::C3) {
        for (&cell_id, &q) in &a.cp_split {
            if q < f_cp {
                let y = a.cc_cp_du[&cell_id];
                for &u in s.users_of_cell(cell_id) {
                    if a.admitted.contains(&u) {
                        let n = a.cc_up_du[&u];
                        if n != y {
                            v.push(Violation {
                                constraint_id: ConstraintId::C3,
                                subject: format!("user:{}", u),
                                measured: f64::from(n),
                                bound: f64::from(y),
                            });
                        }
                    }
                }
            }
        }
    }

    // Capacity sums. Loads keyed by DU index.
    let mut ec_cp_load: BTreeMap<(u32, u32), u32> = BTreeMap::new(); // (ec, du)
    let mut cc_cp_load: BTreeMap<u32, u32> = BTreeMap::new();
    let mut ec_up_load: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    let mut cc_up_load: BTreeMap<u32, u32> = BTreeMap::new();
    for (&cell_id, &q) in &a.cp_split {
        let (ec, _) = s.cell(cell_id);
        let h_ec = u32::from(tables.cp_functions_at(Site::Ec, q));
        let h_cc = u32::from(tables.cp_functions_at(Site::Cc, q));
        if let Some(&x) = a.ec_cp_du.get(&cell_id) {
            *ec_cp_load.entry((ec.id, x)).or_insert(0) += h_ec;
        }
        if let Some(&y) = a.cc_cp_du.get(&cell_id) {
            *cc_cp_load.entry(y).or_insert(0) += h_cc;
        }
    }
    for &u in &a.admitted {
        let p = a.up_split[&u];
        let (ec, _) = s.cell(s.user(u).cell_id);
        let h_ec = u32::from(tables.up_functions_at(Site::Ec, p));
        let h_cc = u32::from(tables.up_functions_at(Site::Cc, p));
        if let Some(&m) = a.ec_up_du.get(&u) {
            *ec_up_load.entry((ec.id, m)).or_insert(0) += h_ec;
        }
        if let Some(&n) = a.cc_up_du.get(&u) {
            *cc_up_load.entry(n).or_insert(0) += h_cc;
        }
    }

    if on(ConstraintId::C4) {
        for (&(ec_id, du), &load) in &ec_cp_load {
            let cap = s
                .topology
                .edge_clouds
                .iter()
                .find(|e| e.id == ec_id)
                .map(|e| e.du_cp_capacity)
                .unwrap_or(0);
            if load > cap {
                v.push(Violation {
                    constraint_id: ConstraintId::C4,
                    subject: format!("ec:{}/du:{}", ec_id, du),
                    measured: f64::from(load),
                    bound: f64::from(cap),
                });
            }
        }
    }
    if on(ConstraintId::C5) {
        for (&du, &load) in &cc_cp_load {
            let cap = s.topology.central_cloud.du_cp_capacity;
            if load > cap {
                v.push(Violation {
                    constraint_id: ConstraintId::C5,
                    subject: format!("cc/du:{}", du),
                    measured: f64::from(load),
                    bound: f64::from(cap),
                });
            }
        }
    }
    if on(ConstraintId::C6) {
        for (&(ec_id, du), &load) in &ec_up_load {
            let cap = s
                .topology
                .edge_clouds
                .iter()
                .find(|e| e.id == ec_id)
                .map(|e| e.du_up_capacity)
                .unwrap_or(0);
            if load > cap {
                v.push(Violation {
                    constraint_id: ConstraintId::C6,
                    subject: format!("ec:{}/du:{}", ec_id, du),
                    measured: f64::from(load),
                    bound: f64::from(cap),
                });
            }
        }
    }
    if on(ConstraintId::C7) {
        for (&du, &load) in &cc_up_load {
            let cap = s.topology.central_cloud.du_up_capacity;
            if load > cap {
                v.push(Violation {
                    constraint_id: ConstraintId::C7,
                    subject: format!("cc/du:{}", du),
                    measured: f64::from(load),
                    bound: f64::from(cap),
                });
            }
        }
    }

    // C8: per-wavelength midhaul bandwidth.
    if on(ConstraintId::C8) {
        let counts = derive_counts(a, s);
        for (&w, &bw) in &counts.per_wavelength_bw_mbps {
            if bw > s.topology.wavelength_capacity_mbps {
                v.push(Violation {
                    constraint_id: ConstraintId::C8,
                    subject: format!("wavelength:{}", w),
                    measured: bw,
                    bound: s.topology.wavelength_capacity_mbps,
                });
            }
        }
    }

    // C9/C10: edge caching requires full edge UP placement. An implication
    // break is reported under both printed inequality ids.
    for &u in &a.edge_cached {
        let p = a.up_split[&u];
        if p != f_up {
            for id in [ConstraintId::C9, ConstraintId::C10] {
                if on(id) {
                    v.push(Violation {
                        constraint_id: id,
                        subject: format!("user:{}", u),
                        measured: f64::from(p),
                        bound: f64::from(f_up),
                    });
                }
            }
        }
    }

    // C11: EC cache capacity over distinct cached files.
    if on(ConstraintId::C11) {
        let counts = derive_counts(a, s);
        for (&ec_id, &bytes) in &counts.ec_cache_bytes {
            let cap = s
                .topology
                .edge_clouds
                .iter()
                .find(|e| e.id == ec_id)
                .map(|e| e.cache_capacity_bytes)
                .unwrap_or(0);
            if bytes > cap {
                v.push(Violation {
                    constraint_id: ConstraintId::C11,
                    subject: format!("ec:{}", ec_id),
                    measured: bytes as f64,
                    bound: cap as f64,
                });
            }
        }
    }

    // C12: per-user delay threshold.
    if on(ConstraintId::C12) {
        for &u in &a.admitted {
            let d = total_user_delay(u, a, s, opts.path_aware_delay)
                .expect("admitted user has splits by structural validity");
            let bound = s.user(u).delay_threshold_s;
            if d > bound {
                v.push(Violation {
                    constraint_id: ConstraintId::C12,
                    subject: format!("user:{}", u),
                    measured: d,
                    bound,
                });
            }
        }
    }

    v.sort_by(|a, b| {
        a.constraint_id
            .cmp(&b.constraint_id)
            .then_with(|| a.subject.cmp(&b.subject))
    });
    v
}

/// The printed big-M pair for the caching implication, with `M = f_up + 1`:
/// `p - f_up <= M(1-b)` and `p - f_up >= -M(1-b)`. Exposed for the
/// exhaustive equivalence test against the implication form.
pub fn big_m_pair_holds(p: u8, b: bool, f_up: u8) -> bool {
    let m = i32::from(f_up) + 1;
    let lhs = i32::from(p) - i32::from(f_up);
    let slack = m * i32::from(!b);
    lhs <= slack && lhs >= -slack
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    fn scenario() -> Scenario {
        load_scenario(
            r#"{
            "topology": {
                "central_cloud": {},
                "edge_clouds": [{"id": 0, "cells": [{"id": 0}, {"id": 1}]}]
            },
            "users": [
                {"id": 0, "cell_id": 0, "distance_m": 10.0, "demanded_file": 0, "delay_threshold_s": 0.1},
                {"id": 1, "cell_id": 0, "distance_m": 20.0, "demanded_file": 0, "delay_threshold_s": 0.1}
            ],
            "files": [{"id": 0, "size_bytes": 1000}]
        }"#,
        )
        .unwrap()
    }

    /// Case-style assignment: both users split on the UP (p=0), the cell
    /// fully edge-hosts its CP (q=3).
    fn feasible_assignment() -> Assignment {
        Assignment {
            admitted: [0, 1].into_iter().collect(),
            up_split: [(0, 0), (1, 0)].into_iter().collect(),
            cp_split: [(0, 3)].into_iter().collect(),
            ec_up_du: [(0, 0), (1, 0)].into_iter().collect(),
            cc_up_du: [(0, 0), (1, 0)].into_iter().collect(),
            ec_cp_du: [(0, 0)].into_iter().collect(),
            cc_cp_du: [(0, 0)].into_iter().collect(),
            wavelength: [(0, 0)].into_iter().collect(),
            ..Default::default()
        }
    }

    #[test]
    fn empty_assignment_is_feasible() {
        let s = scenario();
        assert!(is_feasible(&Assignment::default(), &s));
    }

    #[test]
    fn case_style_assignment_is_feasible() {
        let s = scenario();
        let a = feasible_assignment();
        assert_eq!(check(&a, &s), Vec::new());
    }

    #[test]
    fn double_split_raises_c1_with_indicator_sum_two() {
        let s = scenario();
        let mut a = feasible_assignment();
        a.cp_split.insert(0, 0); // p=0 and q=0: both chains split
        let v = check(&a, &s);
        let c1: Vec<_> = v
            .iter()
            .filter(|x| x.constraint_id == ConstraintId::C1)
            .collect();
        assert_eq!(c1.len(), 2); // both users
        assert_eq!(c1[0].measured, 2.0);
        assert_eq!(c1[0].bound, 1.0);
    }

    #[test]
    fn corner_is_c1_violation_under_eq_but_not_le() {
        let s = scenario();
        let mut a = feasible_assignment();
        a.up_split = [(0, 3), (1, 3)].into_iter().collect(); // p=3 ∧ q=3
        let v = check(&a, &s);
        assert!(v.iter().any(|x| x.constraint_id == ConstraintId::C1
            && x.measured == 0.0));
        let opts = CheckOptions {
            split_once_relation: SplitOnceRelation::Le,
            ..Default::default()
        };
        let v = check_with(&a, &s, &opts);
        assert!(v.iter().all(|x| x.constraint_id != ConstraintId::C1));
    }

    #[test]
    fn detached_up_du_raises_c2() {
        let s = scenario();
        let mut a = feasible_assignment();
        a.ec_up_du.insert(1, 1); // x_cell = 0, m_1 = 1, p_1 < f_up
        let v = check(&a, &s);
        assert!(v
            .iter()
            .any(|x| x.constraint_id == ConstraintId::C2 && x.subject == "user:1"));
    }

    #[test]
    fn detached_cc_du_raises_c3() {
        let s = scenario();
        let mut a = feasible_assignment();
        // Flip to the other case: cell splits its CP (q=1), users take p=3.
        a.up_split = [(0, 3), (1, 3)].into_iter().collect();
        a.cp_split = [(0, 1)].into_iter().collect();
        a.cc_up_du = [(0, 0), (1, 2)].into_iter().collect(); // y = 0, n_1 = 2
        let v = check(&a, &s);
        assert!(v
            .iter()
            .any(|x| x.constraint_id == ConstraintId::C3 && x.subject == "user:1"));
    }

    #[test]
    fn cp_capacity_overflow_raises_c4() {
        let s = scenario();
        let mut a = feasible_assignment();
        // Both cells pin 2 EC CP functions on EC DU 0: 4 > 3.
        a.admitted = [0].into_iter().collect();
        a.up_split = [(0, 3)].into_iter().collect();
        a.cp_split = [(0, 2), (1, 2)].into_iter().collect();
        a.ec_cp_du = [(0, 0), (1, 0)].into_iter().collect();
        a.cc_cp_du = [(0, 0), (1, 0)].into_iter().collect();
        a.ec_up_du = [(0, 0)].into_iter().collect();
        a.cc_up_du = [(0, 0)].into_iter().collect();
        let v = check(&a, &s);
        let c4: Vec<_> = v
            .iter()
            .filter(|x| x.constraint_id == ConstraintId::C4)
            .collect();
        assert_eq!(c4.len(), 1);
        assert_eq!(c4[0].subject, "ec:0/du:0");
        assert_eq!(c4[0].measured, 4.0);
        assert_eq!(c4[0].bound, 3.0);
    }

    #[test]
    fn caching_without_full_edge_up_raises_c9_and_c10() {
        let s = scenario();
        let mut a = feasible_assignment();
        a.edge_cached.insert(0); // p_0 = 0 != f_up
        let v = check(&a, &s);
        assert!(v.iter().any(|x| x.constraint_id == ConstraintId::C9));
        assert!(v.iter().any(|x| x.constraint_id == ConstraintId::C10));
    }

    #[test]
    fn big_m_pair_matches_implication_exhaustively() {
        for f_up in 1..=4u8 {
            for p in 0..=f_up {
                for b in [false, true] {
                    let implication = !b || p == f_up;
                    assert_eq!(
                        big_m_pair_holds(p, b, f_up),
                        implication,
                        "p={p} b={b} f_up={f_up}"
                    );
                }
            }
        }
    }

    #[test]
    fn skipped_families_are_not_reported() {
        let s = scenario();
        let mut a = feasible_assignment();
        a.cp_split.insert(0, 0);
        let mut opts = CheckOptions::default();
        opts.skip.insert(ConstraintId::C1);
        let v = check_with(&a, &s, &opts);
        assert!(v.iter().all(|x| x.constraint_id != ConstraintId::C1));
    }

    #[test]
    fn constraint_ids_round_trip_through_strings() {
        for id in ConstraintId::ALL {
            let s = format!("{id}");
            let back: ConstraintId = s.parse().unwrap();
            assert_eq!(back, id);
        }
        assert!("C13".parse::<ConstraintId>().is_err());
    }
}
