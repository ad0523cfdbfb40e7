//! Scenario document: topology, users, files, and parameter blocks.
//!
//! A scenario is a single JSON document with top-level keys `topology`,
//! `users`, `files`, `split_tables`, `power_params`, `delay_params`, and
//! `solver_defaults`. Every parameter block is optional and falls back to the
//! reference defaults of a 4-EC, 20-cell deployment; `split_tables` defaults
//! exist only for split ceilings `f_up = f_cp = 3` and must be given
//! explicitly for any other ceiling.
//!
//! Loading is strict: unknown keys are rejected (naming the offending key)
//! and structural invariants are checked before a scenario is handed out.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::delay::DelayParams;
use crate::power::PowerParams;
use crate::solver::SolverOptions;
use crate::split_maps::SplitTables;

/// Central-cloud resource pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcSpec {
    /// Number of digital units in the CC pool.
    #[serde(default = "default_cc_du_count")]
    pub du_count: u32,
    /// CP functions one CC digital unit can host.
    #[serde(default = "default_cc_cp_capacity")]
    pub du_cp_capacity: u32,
    /// UP functions one CC digital unit can host.
    #[serde(default = "default_cc_up_capacity")]
    pub du_up_capacity: u32,
    /// Content cache size at the CC in bytes. The CC cache is assumed to
    /// hold the whole catalog; it is not a constraint, only a power sink.
    #[serde(default = "default_cc_cache_bytes")]
    pub cache_capacity_bytes: u64,
}

fn default_cc_du_count() -> u32 {
    4
}
fn default_cc_cp_capacity() -> u32 {
    37
}
fn default_cc_up_capacity() -> u32 {
    135
}
fn default_cc_cache_bytes() -> u64 {
    1_000_000_000
}

/// One small cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub id: u32,
    /// Id of the owning EC. Optional in the document (the enclosing EC is
    /// implied); filled in during loading and rejected if it contradicts the
    /// enclosing EC.
    #[serde(default)]
    pub ec_id: Option<u32>,
    /// Cell radius in meters; user distances must not exceed it.
    #[serde(default = "default_radius_m")]
    pub radius_m: f64,
    /// Resource blocks granted to each admitted user of this cell.
    #[serde(default = "default_rb_per_user")]
    pub rb_per_user: u32,
}

fn default_radius_m() -> f64 {
    250.0
}
fn default_rb_per_user() -> u32 {
    1
}

/// One edge cloud and its cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EcSpec {
    pub id: u32,
    /// Number of digital units in this EC's pool.
    #[serde(default = "default_ec_du_count")]
    pub du_count: u32,
    /// CP functions one EC digital unit can host.
    #[serde(default = "default_ec_cp_capacity")]
    pub du_cp_capacity: u32,
    /// UP functions one EC digital unit can host.
    #[serde(default = "default_ec_up_capacity")]
    pub du_up_capacity: u32,
    /// Content cache size at this EC in bytes.
    #[serde(default = "default_ec_cache_bytes")]
    pub cache_capacity_bytes: u64,
    #[serde(default)]
    pub cells: Vec<CellSpec>,
}

fn default_ec_du_count() -> u32 {
    5
}
fn default_ec_cp_capacity() -> u32 {
    3
}
fn default_ec_up_capacity() -> u32 {
    15
}
fn default_ec_cache_bytes() -> u64 {
    10_000
}

/// Network-wide structure: the CC, the ECs, and the midhaul.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub central_cloud: CcSpec,
    pub edge_clouds: Vec<EcSpec>,
    /// Number of TWDM-PON wavelengths available on the midhaul.
    #[serde(default = "default_wavelengths")]
    pub wavelengths: u32,
    /// Capacity of one midhaul wavelength in Mbps.
    #[serde(default = "default_wavelength_capacity")]
    pub wavelength_capacity_mbps: f64,
    /// UP split ceiling: split levels run 0..=f_up.
    #[serde(default = "default_f_up")]
    pub f_up: u8,
    /// CP split ceiling: split levels run 0..=f_cp.
    #[serde(default = "default_f_cp")]
    pub f_cp: u8,
}

fn default_wavelengths() -> u32 {
    4
}
fn default_wavelength_capacity() -> f64 {
    26_000.0
}
fn default_f_up() -> u8 {
    3
}
fn default_f_cp() -> u8 {
    3
}

/// One active user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub id: u32,
    pub cell_id: u32,
    /// Distance from the cell site in meters.
    pub distance_m: f64,
    /// Id of the file this user demands.
    pub demanded_file: u32,
    /// End-to-end delay threshold in seconds.
    pub delay_threshold_s: f64,
}

/// One file of the content catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub id: u32,
    pub size_bytes: u64,
}

/// A full scenario document.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub topology: Topology,
    #[serde(default)]
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub files: Vec<FileSpec>,
    /// Split-level tables; defaults to [`SplitTables::reference_default`]
    /// when absent and `f_up = f_cp = 3`.
    #[serde(default)]
    pub split_tables: Option<SplitTables>,
    #[serde(default)]
    pub power_params: PowerParams,
    #[serde(default)]
    pub delay_params: DelayParams,
    /// Solver options used when the caller does not override them.
    #[serde(default)]
    pub solver_defaults: Option<SolverOptions>,
    #[serde(skip)]
    index: OnceLock<Index>,
}

impl Clone for Scenario {
    fn clone(&self) -> Self {
        Scenario {
            topology: self.topology.clone(),
            users: self.users.clone(),
            files: self.files.clone(),
            split_tables: self.split_tables.clone(),
            power_params: self.power_params.clone(),
            delay_params: self.delay_params.clone(),
            solver_defaults: self.solver_defaults.clone(),
            index: OnceLock::new(),
        }
    }
}

#[derive(Debug, Default)]
struct Index {
    user_pos: BTreeMap<u32, usize>,
    file_pos: BTreeMap<u32, usize>,
    /// cell id -> (EC position, cell position within it)
    cell_pos: BTreeMap<u32, (usize, usize)>,
    users_of_cell: BTreeMap<u32, Vec<u32>>,
    total_cells: u32,
}

/// How severe a validation finding is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    /// The scenario must not be used.
    Error,
    /// The scenario is usable but likely misconfigured.
    Warning,
}

/// One validation finding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// Name of the violated invariant, e.g. `"unknown cell"`.
    pub invariant: String,
    /// The entity the finding is about, e.g. `"user:3"`.
    pub subject: String,
}

impl Diagnostic {
    fn error(invariant: &str, subject: String) -> Self {
        Diagnostic {
            severity: Severity::Error,
            invariant: invariant.to_string(),
            subject,
        }
    }
    fn warning(invariant: &str, subject: String) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            invariant: invariant.to_string(),
            subject,
        }
    }
}

/// Errors raised while loading a scenario.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    /// The document does not match the schema (unknown key, wrong type, ...).
    #[error("schema violation: {0}")]
    Schema(String),
    /// The document parses but breaks a structural invariant.
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Scenario {
    /// All diagnostics for this scenario, errors first, in a deterministic
    /// order.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = validate_scenario(self);
        diags.sort_by(|a, b| {
            let rank = |s: Severity| match s {
                Severity::Error => 0,
                Severity::Warning => 1,
            };
            rank(a.severity)
                .cmp(&rank(b.severity))
                .then_with(|| a.invariant.cmp(&b.invariant))
                .then_with(|| a.subject.cmp(&b.subject))
        });
        diags
    }

    /// Effective split tables: the explicit ones, or the reference defaults
    /// when the ceilings are `(3, 3)`.
    ///
    /// # Panics
    /// Panics if the tables are absent and the ceilings are not `(3, 3)`;
    /// [`load_scenario`] rejects such documents up front.
    pub fn split_tables(&self) -> SplitTables {
        match &self.split_tables {
            Some(t) => t.clone(),
            None => {
                assert!(
                    self.topology.f_up == 3 && self.topology.f_cp == 3,
                    "split_tables are required when (f_up, f_cp) != (3, 3)"
                );
                SplitTables::reference_default()
            }
        }
    }

    /// Total number of cells across all ECs.
    pub fn total_cells(&self) -> u32 {
        self.index().total_cells
    }

    /// Effective radio-frame share divisor: the configured value, or the
    /// total cell count (at least 1) when unset.
    pub fn frame_share_divisor(&self) -> u64 {
        self.delay_params
            .frame_share_divisor
            .unwrap_or_else(|| u64::from(self.total_cells()).max(1))
    }

    pub fn user(&self, user_id: u32) -> &UserSpec {
        let pos = self.index().user_pos[&user_id];
        &self.users[pos]
    }

    pub fn file(&self, file_id: u32) -> &FileSpec {
        let pos = self.index().file_pos[&file_id];
        &self.files[pos]
    }

    /// The EC owning `cell_id` and the cell itself.
    pub fn cell(&self, cell_id: u32) -> (&EcSpec, &CellSpec) {
        let (e, c) = self.index().cell_pos[&cell_id];
        let ec = &self.topology.edge_clouds[e];
        (ec, &ec.cells[c])
    }

    /// Ids of the users attached to `cell_id`, ascending.
    pub fn users_of_cell(&self, cell_id: u32) -> &[u32] {
        self.index()
            .users_of_cell
            .get(&cell_id)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    fn index(&self) -> &Index {
        self.index.get_or_init(|| {
            let mut ix = Index::default();
            for (e, ec) in self.topology.edge_clouds.iter().enumerate() {
                for (c, cell) in ec.cells.iter().enumerate() {
                    ix.cell_pos.insert(cell.id, (e, c));
                    ix.total_cells += 1;
                }
            }
            for (u, user) in self.users.iter().enumerate() {
                ix.user_pos.insert(user.id, u);
                ix.users_of_cell
                    .entry(user.cell_id)
                    .or_default()
                    .push(user.id);
            }
            for list in ix.users_of_cell.values_mut() {
                list.sort_unstable();
            }
            for (f, file) in self.files.iter().enumerate() {
                ix.file_pos.insert(file.id, f);
            }
            ix
        })
    }
}

/// Parse, normalize, and validate a scenario from a JSON string.
///
/// Unknown keys and type mismatches are schema violations naming the
/// offending key; any error-severity diagnostic is an invariant violation
/// naming the failed invariant and subject.
pub fn load_scenario(json: &str) -> Result<Scenario, LoadError> {
    let mut s: Scenario =
        serde_json::from_str(json).map_err(|e| LoadError::Schema(e.to_string()))?;
    // Normalize: fill in the implied EC id of each cell. A contradicting
    // explicit id is caught by validation below.
    for ec in &mut s.topology.edge_clouds {
        let ec_id = ec.id;
        for cell in &mut ec.cells {
            cell.ec_id.get_or_insert(ec_id);
        }
    }
    let diags = s.validate();
    if let Some(first) = diags.iter().find(|d| d.severity == Severity::Error) {
        return Err(LoadError::Invariant(format!(
            "{} ({})",
            first.invariant, first.subject
        )));
    }
    Ok(s)
}

/// [`load_scenario`] reading from a file path.
pub fn load_scenario_path(path: &Path) -> Result<Scenario, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    load_scenario(&text)
}

/// Serialize a scenario to pretty JSON (stable field and map order).
pub fn save_scenario(s: &Scenario) -> String {
    let mut out = serde_json::to_string_pretty(s).expect("scenario serialization cannot fail");
    out.push('\n');
    out
}

fn validate_scenario(s: &Scenario) -> Vec<Diagnostic> {
    let mut d = Vec::new();
    let topo = &s.topology;

    if topo.f_up < 1 {
        d.push(Diagnostic::error("f_up must be at least 1", "topology".into()));
    }
    if topo.f_cp < 1 {
        d.push(Diagnostic::error("f_cp must be at least 1", "topology".into()));
    }
    if !(topo.wavelength_capacity_mbps.is_finite() && topo.wavelength_capacity_mbps > 0.0) {
        d.push(Diagnostic::error(
            "wavelength capacity must be positive",
            "topology".into(),
        ));
    }
    if topo.central_cloud.du_count < 1 {
        d.push(Diagnostic::error(
            "du_count must be at least 1",
            "central_cloud".into(),
        ));
    }

    let mut ec_ids = BTreeSet::new();
    let mut cell_ids: BTreeMap<u32, u32> = BTreeMap::new(); // cell id -> ec id
    for ec in &topo.edge_clouds {
        if !ec_ids.insert(ec.id) {
            d.push(Diagnostic::error("duplicate ec id", format!("ec:{}", ec.id)));
        }
        if ec.du_count < 1 {
            d.push(Diagnostic::error(
                "du_count must be at least 1",
                format!("ec:{}", ec.id),
            ));
        }
        for cell in &ec.cells {
            if cell_ids.insert(cell.id, ec.id).is_some() {
                d.push(Diagnostic::error(
                    "duplicate cell id",
                    format!("cell:{}", cell.id),
                ));
            }
            if let Some(claimed) = cell.ec_id {
                if claimed != ec.id {
                    d.push(Diagnostic::error(
                        "cell ec_id contradicts enclosing ec",
                        format!("cell:{}", cell.id),
                    ));
                }
            }
            if !(cell.radius_m.is_finite() && cell.radius_m > 0.0) {
                d.push(Diagnostic::error(
                    "cell radius must be positive",
                    format!("cell:{}", cell.id),
                ));
            }
            if cell.rb_per_user < 1 {
                d.push(Diagnostic::error(
                    "rb_per_user must be at least 1",
                    format!("cell:{}", cell.id),
                ));
            }
        }
    }

    if topo.edge_clouds.iter().any(|ec| {
        ec.du_cp_capacity > topo.central_cloud.du_cp_capacity
    }) {
        d.push(Diagnostic::error(
            "ec du cp capacity exceeds cc du cp capacity",
            "topology".into(),
        ));
    } else if topo.edge_clouds.iter().any(|ec| {
        ec.du_cp_capacity == topo.central_cloud.du_cp_capacity
    }) {
        d.push(Diagnostic::warning(
            "ec du cp capacity equals cc du cp capacity",
            "topology".into(),
        ));
    }

    let mut file_ids = BTreeSet::new();
    for f in &s.files {
        if !file_ids.insert(f.id) {
            d.push(Diagnostic::error(
                "duplicate file id",
                format!("file:{}", f.id),
            ));
        }
        if f.size_bytes == 0 {
            d.push(Diagnostic::error(
                "file size must be positive",
                format!("file:{}", f.id),
            ));
        }
    }

    let mut user_ids = BTreeSet::new();
    for u in &s.users {
        if !user_ids.insert(u.id) {
            d.push(Diagnostic::error(
                "duplicate user id",
                format!("user:{}", u.id),
            ));
        }
        match cell_ids.get(&u.cell_id) {
            None => d.push(Diagnostic::error("unknown cell", format!("user:{}", u.id))),
            Some(_) => {
                let radius = topo
                    .edge_clouds
                    .iter()
                    .flat_map(|e| e.cells.iter())
                    .find(|c| c.id == u.cell_id)
                    .map(|c| c.radius_m)
                    .unwrap_or(f64::INFINITY);
                if !(u.distance_m.is_finite() && u.distance_m >= 0.0) {
                    d.push(Diagnostic::error(
                        "user distance must be non-negative",
                        format!("user:{}", u.id),
                    ));
                } else if u.distance_m > radius {
                    d.push(Diagnostic::error(
                        "user distance exceeds cell radius",
                        format!("user:{}", u.id),
                    ));
                }
            }
        }
        if !file_ids.contains(&u.demanded_file) {
            d.push(Diagnostic::error("unknown file", format!("user:{}", u.id)));
        }
        if !(u.delay_threshold_s.is_finite() && u.delay_threshold_s > 0.0) {
            d.push(Diagnostic::error(
                "delay threshold must be positive",
                format!("user:{}", u.id),
            ));
        }
    }

    if s.split_tables.is_none() && (topo.f_up != 3 || topo.f_cp != 3) {
        d.push(Diagnostic::error(
            "split_tables are required when (f_up, f_cp) != (3, 3)",
            "split_tables".into(),
        ));
    }
    if let Some(tables) = &s.split_tables {
        for err in tables.validation_errors(topo.f_up, topo.f_cp) {
            d.push(Diagnostic::error(&err, "split_tables".into()));
        }
    }

    for err in s.power_params.validation_errors() {
        d.push(Diagnostic::error(&err, "power_params".into()));
    }
    for err in s.delay_params.validation_errors() {
        d.push(Diagnostic::error(&err, "delay_params".into()));
    }

    if let Some(opts) = &s.solver_defaults {
        for err in opts.validation_errors() {
            d.push(Diagnostic::error(&err, "solver_defaults".into()));
        }
        if matches!(opts.mode, crate::solver::Mode::AllEc)
            && topo.edge_clouds.iter().any(|e| e.cache_capacity_bytes == 0)
        {
            d.push(Diagnostic::warning(
                "all_ec default mode with a zero-capacity ec cache",
                "solver_defaults".into(),
            ));
        }
    }

    if topo.wavelengths == 0 && !s.users.is_empty() {
        d.push(Diagnostic::warning(
            "users present but no midhaul wavelengths",
            "topology".into(),
        ));
    }

    d
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_json() -> String {
        r#"{
            "topology": {
                "central_cloud": {},
                "edge_clouds": [
                    {"id": 0, "cells": [{"id": 0}, {"id": 1}]},
                    {"id": 1, "cells": [{"id": 2}]}
                ]
            },
            "users": [
                {"id": 0, "cell_id": 0, "distance_m": 100.0, "demanded_file": 0, "delay_threshold_s": 0.06},
                {"id": 1, "cell_id": 2, "distance_m": 50.0, "demanded_file": 1, "delay_threshold_s": 0.06}
            ],
            "files": [
                {"id": 0, "size_bytes": 1000},
                {"id": 1, "size_bytes": 1000}
            ]
        }"#
        .to_string()
    }

    #[test]
    fn loads_and_fills_defaults() {
        let s = load_scenario(&tiny_json()).unwrap();
        assert_eq!(s.topology.f_up, 3);
        assert_eq!(s.topology.wavelengths, 4);
        assert_eq!(s.topology.central_cloud.du_up_capacity, 135);
        assert_eq!(s.total_cells(), 3);
        assert_eq!(s.frame_share_divisor(), 3);
        let (ec, cell) = s.cell(2);
        assert_eq!(ec.id, 1);
        assert_eq!(cell.radius_m, 250.0);
        assert_eq!(cell.ec_id, Some(1));
        assert_eq!(s.users_of_cell(0), &[0]);
        assert_eq!(s.user(1).demanded_file, 1);
        assert_eq!(s.file(1).size_bytes, 1000);
    }

    #[test]
    fn unknown_key_is_schema_error_naming_the_key() {
        let json = tiny_json().replace("\"users\"", "\"subscribers\"");
        let err = load_scenario(&json).unwrap_err();
        match err {
            LoadError::Schema(msg) => assert!(msg.contains("subscribers"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_cell_is_invariant_error() {
        let json = tiny_json().replace("\"cell_id\": 2", "\"cell_id\": 99");
        let err = load_scenario(&json).unwrap_err();
        match err {
            LoadError::Invariant(msg) => {
                assert!(msg.contains("unknown cell"), "{msg}");
                assert!(msg.contains("user:1"), "{msg}");
            }
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn distance_beyond_radius_is_rejected() {
        let json = tiny_json().replace("\"distance_m\": 100.0", "\"distance_m\": 251.0");
        assert!(matches!(
            load_scenario(&json),
            Err(LoadError::Invariant(msg)) if msg.contains("distance exceeds cell radius")
        ));
    }

    #[test]
    fn contradicting_ec_id_is_rejected() {
        let json = tiny_json().replace("{\"id\": 2}", "{\"id\": 2, \"ec_id\": 0}");
        assert!(matches!(
            load_scenario(&json),
            Err(LoadError::Invariant(msg)) if msg.contains("contradicts")
        ));
    }

    #[test]
    fn save_load_round_trip_is_identity() {
        let s = load_scenario(&tiny_json()).unwrap();
        let text = save_scenario(&s);
        let s2 = load_scenario(&text).unwrap();
        let v1 = serde_json::to_value(&s).unwrap();
        let v2 = serde_json::to_value(&s2).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn non_reference_ceilings_require_tables() {
        let json = tiny_json().replace(
            "\"central_cloud\": {},",
            "\"central_cloud\": {}, \"f_up\": 2,",
        );
        assert!(matches!(
            load_scenario(&json),
            Err(LoadError::Invariant(msg)) if msg.contains("split_tables are required")
        ));
    }

    #[test]
    fn duplicate_user_id_is_rejected() {
        let json = tiny_json().replace("\"id\": 1, \"cell_id\": 2", "\"id\": 0, \"cell_id\": 2");
        assert!(matches!(
            load_scenario(&json),
            Err(LoadError::Invariant(msg)) if msg.contains("duplicate user id")
        ));
    }
}
