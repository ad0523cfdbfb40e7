//! Exact optimizer for joint baseband-function placement and edge content
//! caching in a two-tier radio access network.
//!
//! The network under study has a central cloud (CC) connected over a TWDM-PON
//! midhaul to a set of edge clouds (ECs); each EC serves a cluster of small
//! cells over mm-wave fronthaul. Every cell's baseband processing chain can be
//! split between its EC and the CC: per-user user-plane functions split at
//! level `p` (0 = everything at the CC, `f_up` = everything at the EC) and
//! per-cell control-plane functions split at level `q` (same convention with
//! ceiling `f_cp`). Each admitted user's demanded file may additionally be
//! cached at its EC, shortening the content path.
//!
//! The optimizer admits as many users as possible and, among maximum
//! admissions, minimizes total network power. Admission is constrained by
//! digital-unit (DU) pools at both tiers, per-wavelength midhaul capacity,
//! per-EC cache capacity, a single-split rule coupling `p` and `q`, and
//! per-user end-to-end delay thresholds.
//!
//! Module map:
//! - [`scenario`]: input document (topology, users, files, parameter blocks),
//!   loading, saving, validation.
//! - [`split_maps`]: split-level lookup tables (function placement counts,
//!   midhaul bandwidth, residual CC processing volume, per-function delays).
//! - [`assignment`]: decision-variable bundle, derived activity counts, and
//!   the canonical total order used for deterministic tie-breaking.
//! - [`power`]: power model (per-component breakdown and total).
//! - [`delay`]: end-to-end user delay model.
//! - [`feasibility`]: constraint checker producing typed violations.
//! - [`solver`]: exact branch-and-bound solver, fixed-placement baselines,
//!   a greedy heuristic, and a brute-force enumeration oracle.
//! - [`experiments`]: seeded scenario generation, sweeps, and metrics rows.

pub mod assignment;
pub mod delay;
pub mod experiments;
pub mod feasibility;
pub mod power;
pub mod scenario;
pub mod solver;
pub mod split_maps;
