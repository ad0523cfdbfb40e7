//! Decision variables of one solution and the quantities derived from them.
//!
//! An [`Assignment`] records, for every admitted user, its UP split `p` and
//! its DU indices at both tiers; for every assigned cell, its CP split `q`
//! and CP DU indices at both tiers; for every active EC, its midhaul
//! wavelength; and the set of edge-cached users. Entities without any
//! admitted user are normally left fully unassigned by solvers, but
//! hand-written assignments may pin a CP split on an idle cell — such
//! entries are validated for domain membership and included literally in
//! capacity and bandwidth sums, while drawing no per-cell power.
//!
//! [`derive_counts`] turns an assignment into activity counts (loaded DUs,
//! lit wavelengths, cache occupancy, midhaul bandwidth) that feed the power
//! model and the metrics rows. [`canonical_key`] defines the canonical total
//! order used everywhere a tie between equal-objective solutions must be
//! broken deterministically.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::power::{ActivityProfile, EcActivity};
use crate::scenario::Scenario;
use crate::split_maps::Site;

/// All decision variables of one solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Assignment {
    /// Ids of admitted users.
    pub admitted: BTreeSet<u32>,
    /// UP split level `p` per admitted user.
    pub up_split: BTreeMap<u32, u8>,
    /// CP split level `q` per assigned cell.
    pub cp_split: BTreeMap<u32, u8>,
    /// EC DU index `m` hosting each admitted user's edge UP functions.
    pub ec_up_du: BTreeMap<u32, u32>,
    /// CC DU index `n` hosting each admitted user's central UP functions.
    pub cc_up_du: BTreeMap<u32, u32>,
    /// EC DU index `x` hosting each assigned cell's edge CP functions.
    pub ec_cp_du: BTreeMap<u32, u32>,
    /// CC DU index `y` hosting each assigned cell's central CP functions.
    pub cc_cp_du: BTreeMap<u32, u32>,
    /// Midhaul wavelength per active EC.
    pub wavelength: BTreeMap<u32, u32>,
    /// Users whose demanded file is cached at their EC.
    pub edge_cached: BTreeSet<u32>,
}

/// Activity counts and totals derived from an assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedCounts {
    /// Counts feeding the power model.
    pub profile: ActivityProfile,
    /// Admitted users served from their EC cache.
    pub edge_hits: u32,
    /// Distinct cached bytes per EC id.
    pub ec_cache_bytes: BTreeMap<u32, u64>,
    /// Midhaul load per wavelength id, Mbps.
    pub per_wavelength_bw_mbps: BTreeMap<u32, f64>,
    /// Midhaul load per EC id, Mbps (counted toward its wavelength).
    pub per_ec_bw_mbps: BTreeMap<u32, f64>,
    /// Total midhaul load across all wavelengths, Mbps.
    pub midhaul_bw_mbps: f64,
}

/// Structural problems that make an assignment unevaluable; empty means the
/// assignment is structurally valid (which says nothing about feasibility).
pub fn structural_errors(a: &Assignment, s: &Scenario) -> Vec<String> {
    let mut errs = Vec::new();
    let topo = &s.topology;
    let known_cell = |id: u32| {
        topo.edge_clouds
            .iter()
            .flat_map(|e| e.cells.iter())
            .any(|c| c.id == id)
    };
    let known_ec = |id: u32| topo.edge_clouds.iter().any(|e| e.id == id);
    let known_user = |id: u32| s.users.iter().any(|u| u.id == id);

    for &u in &a.admitted {
        if !known_user(u) {
            errs.push(format!("admitted user {} does not exist", u));
        }
    }
    for (&u, &p) in &a.up_split {
        if !a.admitted.contains(&u) {
            errs.push(format!("up_split set for non-admitted user {}", u));
        }
        if p > topo.f_up {
            errs.push(format!("up_split[{}]={} exceeds f_up={}", u, p, topo.f_up));
        }
    }
    for (&c, &q) in &a.cp_split {
        if !known_cell(c) {
            errs.push(format!("cp_split set for unknown cell {}", c));
        }
        if q > topo.f_cp {
            errs.push(format!("cp_split[{}]={} exceeds f_cp={}", c, q, topo.f_cp));
        }
    }
    for &u in &a.admitted {
        if !known_user(u) {
            continue;
        }
        if !a.up_split.contains_key(&u) {
            errs.push(format!("admitted user {} has no up_split", u));
        }
        if !a.ec_up_du.contains_key(&u) {
            errs.push(format!("admitted user {} has no ec_up_du", u));
        }
        if !a.cc_up_du.contains_key(&u) {
            errs.push(format!("admitted user {} has no cc_up_du", u));
        }
        let cell_id = s.user(u).cell_id;
        if !a.cp_split.contains_key(&cell_id) {
            errs.push(format!(
                "cell {} has admitted user {} but no cp_split",
                cell_id, u
            ));
        }
        let (ec, _) = s.cell(cell_id);
        if !a.wavelength.contains_key(&ec.id) {
            errs.push(format!(
                "ec {} has admitted user {} but no wavelength",
                ec.id, u
            ));
        }
    }
    for (map, name, of_users) in [
        (&a.ec_up_du, "ec_up_du", true),
        (&a.cc_up_du, "cc_up_du", true),
        (&a.ec_cp_du, "ec_cp_du", false),
        (&a.cc_cp_du, "cc_cp_du", false),
    ] {
        for (&k, &d) in map {
            if of_users {
                if !a.admitted.contains(&k) {
                    errs.push(format!("{} set for non-admitted user {}", name, k));
                    continue;
                }
                if !known_user(k) {
                    continue;
                }
                let cell_id = s.user(k).cell_id;
                if !known_cell(cell_id) {
                    continue;
                }
                let bound = if name == "ec_up_du" {
                    s.cell(cell_id).0.du_count
                } else {
                    topo.central_cloud.du_count
                };
                if d >= bound {
                    errs.push(format!("{}[{}]={} out of DU range", name, k, d));
                }
            } else {
                if !known_cell(k) {
                    errs.push(format!("{} set for unknown cell {}", name, k));
                    continue;
                }
                if !a.cp_split.contains_key(&k) {
                    errs.push(format!("{} set for cell {} without cp_split", name, k));
                }
                let bound = if name == "ec_cp_du" {
                    s.cell(k).0.du_count
                } else {
                    topo.central_cloud.du_count
                };
                if d >= bound {
                    errs.push(format!("{}[{}]={} out of DU range", name, k, d));
                }
            }
        }
    }
    for &c in a.cp_split.keys() {
        if known_cell(c) {
            if !a.ec_cp_du.contains_key(&c) {
                errs.push(format!("cell {} has cp_split but no ec_cp_du", c));
            }
            if !a.cc_cp_du.contains_key(&c) {
                errs.push(format!("cell {} has cp_split but no cc_cp_du", c));
            }
        }
    }
    for (&r, &w) in &a.wavelength {
        if !known_ec(r) {
            errs.push(format!("wavelength set for unknown ec {}", r));
        } else if w >= topo.wavelengths {
            errs.push(format!("wavelength[{}]={} out of range", r, w));
        }
    }
    for &u in &a.edge_cached {
        if !a.admitted.contains(&u) {
            errs.push(format!("edge_cached set for non-admitted user {}", u));
        }
    }
    errs.sort();
    errs
}

/// Derive all activity counts from a structurally valid assignment.
pub fn derive_counts(a: &Assignment, s: &Scenario) -> DerivedCounts {
    debug_assert!(structural_errors(a, s).is_empty());
    let tables = s.split_tables();
    let mut per_ec = Vec::with_capacity(s.topology.edge_clouds.len());
    let mut ec_cache_bytes = BTreeMap::new();
    let mut per_ec_bw = BTreeMap::new();
    let mut edge_hits = 0u32;

    let mut cc_loaded: BTreeSet<u32> = BTreeSet::new();
    let mut lit: BTreeSet<u32> = BTreeSet::new();
    let mut cc_cache_used = false;

    for ec in &s.topology.edge_clouds {
        let mut active_cells = 0u32;
        let mut any_user = false;
        let mut ec_loaded: BTreeSet<u32> = BTreeSet::new();
        let mut cached_files: BTreeSet<u32> = BTreeSet::new();
        let mut bw = 0.0f64;

        for cell in &ec.cells {
            let users = s.users_of_cell(cell.id);
            let admitted_here: Vec<u32> = users
                .iter()
                .copied()
                .filter(|u| a.admitted.contains(u))
                .collect();
            if !admitted_here.is_empty() {
                active_cells += 1;
                any_user = true;
            }
            if let Some(&q) = a.cp_split.get(&cell.id) {
                bw += tables.cell_midhaul_bw_mbps(q);
                if tables.cp_functions_at(Site::Ec, q) > 0 {
                    if let Some(&x) = a.ec_cp_du.get(&cell.id) {
                        ec_loaded.insert(x);
                    }
                }
                if tables.cp_functions_at(Site::Cc, q) > 0 {
                    if let Some(&y) = a.cc_cp_du.get(&cell.id) {
                        cc_loaded.insert(y);
                    }
                }
            }
            for &u in &admitted_here {
                let p = a.up_split[&u];
                bw += tables.user_midhaul_bw_mbps(p, cell.rb_per_user);
                if tables.up_functions_at(Site::Ec, p) > 0 {
                    if let Some(&m) = a.ec_up_du.get(&u) {
                        ec_loaded.insert(m);
                    }
                }
                if tables.up_functions_at(Site::Cc, p) > 0 {
                    if let Some(&n) = a.cc_up_du.get(&u) {
                        cc_loaded.insert(n);
                    }
                }
                if a.edge_cached.contains(&u) {
                    edge_hits += 1;
                    cached_files.insert(s.user(u).demanded_file);
                } else {
                    cc_cache_used = true;
                }
            }
        }

        if any_user {
            if let Some(&w) = a.wavelength.get(&ec.id) {
                lit.insert(w);
            }
        }
        let bytes: u64 = cached_files
            .iter()
            .map(|&f| s.file(f).size_bytes)
            .sum();
        if bytes > 0 {
            ec_cache_bytes.insert(ec.id, bytes);
        }
        if bw > 0.0 {
            per_ec_bw.insert(ec.id, bw);
        }
        per_ec.push(EcActivity {
            ec_id: ec.id,
            active_cells,
            any_user,
            loaded_dus: ec_loaded.len() as u32,
            any_cached: !cached_files.is_empty(),
        });
    }

    let mut per_wavelength_bw: BTreeMap<u32, f64> = BTreeMap::new();
    for ec in &s.topology.edge_clouds {
        if let (Some(&w), Some(&bw)) = (a.wavelength.get(&ec.id), per_ec_bw.get(&ec.id)) {
            *per_wavelength_bw.entry(w).or_insert(0.0) += bw;
        }
    }
    let midhaul_bw_mbps = per_wavelength_bw.values().sum();

    DerivedCounts {
        profile: ActivityProfile {
            lit_wavelengths: lit.len() as u32,
            loaded_cc_dus: cc_loaded.len() as u32,
            cc_cache_used,
            per_ec,
        },
        edge_hits,
        ec_cache_bytes,
        per_wavelength_bw_mbps: per_wavelength_bw,
        per_ec_bw_mbps: per_ec_bw,
        midhaul_bw_mbps,
    }
}

/// The canonical representation of an assignment: every variable family
/// flattened to id-ordered vectors. The derived lexicographic order on this
/// key is a total order on assignments — two assignments compare equal only
/// if they are identical — and is the deterministic tie-break used among
/// equal-objective solutions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CanonicalKey {
    pub admitted: Vec<u32>,
    pub up_split: Vec<(u32, u8)>,
    pub cp_split: Vec<(u32, u8)>,
    pub ec_up_du: Vec<(u32, u32)>,
    pub cc_up_du: Vec<(u32, u32)>,
    pub ec_cp_du: Vec<(u32, u32)>,
    pub cc_cp_du: Vec<(u32, u32)>,
    pub wavelength: Vec<(u32, u32)>,
    pub edge_cached: Vec<u32>,
}

/// Canonical key of an assignment; see [`CanonicalKey`].
pub fn canonical_key(a: &Assignment) -> CanonicalKey {
    CanonicalKey {
        admitted: a.admitted.iter().copied().collect(),
        up_split: a.up_split.iter().map(|(&k, &v)| (k, v)).collect(),
        cp_split: a.cp_split.iter().map(|(&k, &v)| (k, v)).collect(),
        ec_up_du: a.ec_up_du.iter().map(|(&k, &v)| (k, v)).collect(),
        cc_up_du: a.cc_up_du.iter().map(|(&k, &v)| (k, v)).collect(),
        ec_cp_du: a.ec_cp_du.iter().map(|(&k, &v)| (k, v)).collect(),
        cc_cp_du: a.cc_cp_du.iter().map(|(&k, &v)| (k, v)).collect(),
        wavelength: a.wavelength.iter().map(|(&k, &v)| (k, v)).collect(),
        edge_cached: a.edge_cached.iter().copied().collect(),
    }
}

/// Deterministic total order on assignments (lexicographic on
/// [`canonical_key`]).
pub fn canonical_order(a: &Assignment, b: &Assignment) -> std::cmp::Ordering {
    canonical_key(a).cmp(&canonical_key(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;
    use std::cmp::Ordering;

    fn scenario() -> Scenario {
        load_scenario(
            r#"{
            "topology": {
                "central_cloud": {},
                "edge_clouds": [
                    {"id": 0, "cells": [{"id": 0}, {"id": 1}]},
                    {"id": 1, "cells": [{"id": 2}]}
                ]
            },
            "users": [
                {"id": 0, "cell_id": 0, "distance_m": 10.0, "demanded_file": 0, "delay_threshold_s": 0.1},
                {"id": 1, "cell_id": 0, "distance_m": 20.0, "demanded_file": 1, "delay_threshold_s": 0.1},
                {"id": 2, "cell_id": 2, "distance_m": 30.0, "demanded_file": 0, "delay_threshold_s": 0.1}
            ],
            "files": [
                {"id": 0, "size_bytes": 700},
                {"id": 1, "size_bytes": 900}
            ]
        }"#,
        )
        .unwrap()
    }

    fn sample_assignment() -> Assignment {
        // Users 0 and 1 in cell 0 (EC 0): edge-heavy CP (q=3), central UP
        // (p=0). User 2 in cell 2 (EC 1): edge UP (p=3), partially central
        // CP (q=1), edge-cached.
        Assignment {
            admitted: [0, 1, 2].into_iter().collect(),
            up_split: [(0, 0), (1, 0), (2, 3)].into_iter().collect(),
            cp_split: [(0, 3), (2, 1)].into_iter().collect(),
            ec_up_du: [(0, 0), (1, 0), (2, 0)].into_iter().collect(),
            cc_up_du: [(0, 0), (1, 0), (2, 0)].into_iter().collect(),
            ec_cp_du: [(0, 0), (2, 0)].into_iter().collect(),
            cc_cp_du: [(0, 0), (2, 0)].into_iter().collect(),
            wavelength: [(0, 0), (1, 1)].into_iter().collect(),
            edge_cached: [2].into_iter().collect(),
        }
    }

    #[test]
    fn empty_assignment_is_structurally_valid_and_idle() {
        let s = scenario();
        let a = Assignment::default();
        assert!(structural_errors(&a, &s).is_empty());
        let c = derive_counts(&a, &s);
        assert_eq!(c.profile.lit_wavelengths, 0);
        assert_eq!(c.profile.loaded_cc_dus, 0);
        assert_eq!(c.edge_hits, 0);
        assert_eq!(c.midhaul_bw_mbps, 0.0);
        assert!(c.profile.per_ec.iter().all(|e| e.loaded_dus == 0 && !e.any_user));
    }

    #[test]
    fn sample_counts_are_derived_correctly() {
        let s = scenario();
        let a = sample_assignment();
        assert_eq!(structural_errors(&a, &s), Vec::<String>::new());
        let c = derive_counts(&a, &s);
        // EC0: users 0,1 at p=0 put no UP at the EC; q=3 puts 3 CP functions
        // on EC DU 0 -> 1 loaded DU. EC1: user 2 at p=3 loads EC DU 0; q=1
        // leaves 2 CP functions at the CC on DU 0.
        assert_eq!(c.profile.per_ec[0].loaded_dus, 1);
        assert_eq!(c.profile.per_ec[0].active_cells, 1);
        assert_eq!(c.profile.per_ec[1].loaded_dus, 1);
        // CC: users 0,1 bring 3 UP functions each to DU 0; cell 2 brings 2
        // CP functions to DU 0 -> 1 distinct loaded DU.
        assert_eq!(c.profile.loaded_cc_dus, 1);
        assert_eq!(c.profile.lit_wavelengths, 2);
        assert_eq!(c.edge_hits, 1);
        assert_eq!(c.ec_cache_bytes.get(&1), Some(&700));
        assert!(c.profile.cc_cache_used); // users 0,1 are served centrally
        assert!(c.profile.per_ec[1].any_cached);
        assert!(!c.profile.per_ec[0].any_cached);
        // Bandwidth: EC0 = G(3) + 2*J(0)*1 = 0 + 49.2; EC1 = G(1) + J(3) =
        // 1228.8 + 1.5.
        let t = s.split_tables();
        let expect0 = t.cell_midhaul_bw_mbps(3) + 2.0 * t.user_midhaul_bw_mbps(0, 1);
        let expect1 = t.cell_midhaul_bw_mbps(1) + t.user_midhaul_bw_mbps(3, 1);
        assert_eq!(c.per_ec_bw_mbps[&0], expect0);
        assert_eq!(c.per_ec_bw_mbps[&1], expect1);
        assert_eq!(c.midhaul_bw_mbps, expect0 + expect1);
        assert_eq!(c.per_wavelength_bw_mbps[&0], expect0);
        assert_eq!(c.per_wavelength_bw_mbps[&1], expect1);
    }

    #[test]
    fn cached_files_are_deduplicated_per_ec() {
        let s = scenario();
        let mut a = sample_assignment();
        // Move user 1 to be edge-cached as well; users 0 and 2 demand the
        // same file but sit in different ECs, so no dedup across ECs.
        a.edge_cached.insert(1);
        // User 1 caches at EC0 -> file 1 (900 B). User 2 caches file 0 at EC1.
        let c = derive_counts(&a, &s);
        assert_eq!(c.ec_cache_bytes.get(&0), Some(&900));
        assert_eq!(c.ec_cache_bytes.get(&1), Some(&700));
        assert_eq!(c.edge_hits, 2);

        // Same file cached by two users of one EC counts once.
        let mut b = a.clone();
        b.edge_cached = [0, 1].into_iter().collect();
        let c = derive_counts(&b, &s);
        assert_eq!(c.ec_cache_bytes.get(&0), Some(&(700 + 900)));
        let mut both_same = b.clone();
        both_same.edge_cached = [0].into_iter().collect();
        let c1 = derive_counts(&both_same, &s);
        assert_eq!(c1.ec_cache_bytes.get(&0), Some(&700));
    }

    #[test]
    fn missing_pieces_are_reported() {
        let s = scenario();
        let mut a = sample_assignment();
        a.ec_up_du.remove(&1);
        let errs = structural_errors(&a, &s);
        assert!(errs.iter().any(|e| e.contains("user 1 has no ec_up_du")), "{errs:?}");

        let mut a = sample_assignment();
        a.wavelength.remove(&1);
        assert!(structural_errors(&a, &s)
            .iter()
            .any(|e| e.contains("ec 1") && e.contains("no wavelength")));

        let mut a = sample_assignment();
        a.edge_cached.insert(1);
        a.admitted.remove(&1);
        let errs = structural_errors(&a, &s);
        assert!(errs.iter().any(|e| e.contains("edge_cached")), "{errs:?}");

        let mut a = sample_assignment();
        a.up_split.insert(0, 9);
        assert!(structural_errors(&a, &s)
            .iter()
            .any(|e| e.contains("exceeds f_up")));

        let mut a = sample_assignment();
        a.wavelength.insert(1, 99);
        assert!(structural_errors(&a, &s)
            .iter()
            .any(|e| e.contains("wavelength[1]")));
    }

    #[test]
    fn canonical_order_is_a_deterministic_total_order() {
        let a = sample_assignment();
        let mut b = a.clone();
        assert_eq!(canonical_order(&a, &b), Ordering::Equal);
        // Removing a cached user makes the key strictly smaller on the
        // edge_cached component (empty set sorts first).
        b.edge_cached.clear();
        assert_eq!(canonical_order(&b, &a), Ordering::Less);
        // A smaller split vector wins on the up_split component.
        let mut c = a.clone();
        c.up_split.insert(2, 2); // was 3
        assert_eq!(canonical_order(&c, &a), Ordering::Less);
        // Antisymmetry on this sample.
        assert_eq!(canonical_order(&a, &c), Ordering::Greater);
    }

    #[test]
    fn assignment_round_trips_through_json() {
        let a = sample_assignment();
        let text = serde_json::to_string(&a).unwrap();
        let back: Assignment = serde_json::from_str(&text).unwrap();
        assert_eq!(a, back);
    }
}
