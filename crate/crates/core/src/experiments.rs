//! Scenario generation and sweep harness.
//!
//! [`generate_scenario`] materializes a parameterized instance family
//! (reference topology counts, uniform user drop, uniform or 80/20 request
//! model, uniform delay thresholds) into a concrete [`Scenario`], fully
//! deterministic in the seed. [`run_sweep`] solves a load or
//! delay-threshold series across solver modes and reports one
//! [`MetricsRow`] per (point, mode).
//!
//! CSV output is byte-stable across reruns: the `wall_time_s` column is
//! zeroed in every row serialized by this module, and the real timings are
//! reported in the [`SweepMeta`] sidecar instead.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::delay::user_delay_components;
use crate::scenario::{load_scenario, Scenario};
use crate::solver::{solve, Mode, SolveError, Solution, SolverOptions};

/// Cell radius written by the generator, matching the reference defaults.
const GEN_RADIUS_M: f64 = 250.0;

/// How users pick files from the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestModel {
    /// Every user draws uniformly over the whole catalog.
    Uniform,
    /// Per edge cloud, the first 80% of its users draw uniformly from the
    /// lexicographically first 20% of file ids (the "head"); the rest draw
    /// from the tail.
    #[serde(rename = "pareto_80_20")]
    Pareto8020,
}

impl fmt::Display for RequestModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestModel::Uniform => "uniform",
            RequestModel::Pareto8020 => "pareto_80_20",
        })
    }
}

impl FromStr for RequestModel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(RequestModel::Uniform),
            "pareto_80_20" => Ok(RequestModel::Pareto8020),
            other => Err(format!(
                "unknown request model `{other}` (expected uniform|pareto_80_20)"
            )),
        }
    }
}

/// Parameterized instance family: reference topology counts plus the knobs
/// the sweeps vary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    /// Number of edge clouds.
    pub ecs: u32,
    /// Cells attached to each edge cloud.
    pub cells_per_ec: u32,
    /// User population at full load; users are dealt round-robin over the
    /// cells so every prefix stays balanced.
    pub max_users: u32,
    /// Fraction of the population that is active, in [0, 1].
    pub active_user_fraction: f64,
    pub request_model: RequestModel,
    /// Number of files in the catalog (≥ 1).
    pub catalog_size: u32,
    /// Delay thresholds are drawn uniformly on mean ± spread.
    pub mean_delay_threshold_s: f64,
    pub delay_spread_s: f64,
    /// Every catalog file has this size.
    pub file_size_bytes: u64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            ecs: 4,
            cells_per_ec: 5,
            max_users: 95,
            active_user_fraction: 1.0,
            request_model: RequestModel::Uniform,
            catalog_size: 30,
            mean_delay_threshold_s: 0.060,
            delay_spread_s: 0.010,
            file_size_bytes: 1_000,
            seed: 1,
        }
    }
}

impl GenSpec {
    /// Violated invariants of this spec, as human-readable strings.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(0.0..=1.0).contains(&self.active_user_fraction) {
            errs.push(format!(
                "active_user_fraction must be in [0, 1], got {}",
                self.active_user_fraction
            ));
        }
        if self.catalog_size < 1 {
            errs.push("catalog_size must be at least 1".to_string());
        }
        if self.ecs < 1 || self.cells_per_ec < 1 {
            errs.push("topology must have at least one edge cloud and one cell".to_string());
        }
        if self.delay_spread_s < 0.0 {
            errs.push(format!(
                "delay_spread_s must be non-negative, got {}",
                self.delay_spread_s
            ));
        }
        if self.mean_delay_threshold_s - self.delay_spread_s < 0.0 {
            errs.push(format!(
                "mean_delay_threshold_s - delay_spread_s must be non-negative, got {}",
                self.mean_delay_threshold_s - self.delay_spread_s
            ));
        }
        errs
    }
}

/// One ChaCha stream per quantity so the draws for one quantity never
/// shift when another is reconfigured.
const STREAM_DISTANCES: u64 = 0;
const STREAM_FILES: u64 = 1;
const STREAM_THRESHOLDS: u64 = 2;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    // SplitMix64-style mix of (seed, stream) into one 64-bit state.
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Materialize a [`GenSpec`] into a concrete, validated [`Scenario`].
///
/// Deterministic in the seed. User `i` sits in cell `i mod total_cells`,
/// so the population of any `active_user_fraction` is a prefix of the full
/// population and load sweeps form a nested sequence; per-user distances,
/// demanded files, and thresholds are drawn one per user in id order, so a
/// user keeps its attributes across load points.
///
/// # Panics
///
/// Panics if `g` fails [`GenSpec::validation_errors`].
pub fn generate_scenario(g: &GenSpec) -> Scenario {
    let errs = g.validation_errors();
    assert!(errs.is_empty(), "invalid GenSpec: {}", errs.join("; "));

    let total_cells = g.ecs * g.cells_per_ec;
    let n_users = ((g.active_user_fraction * g.max_users as f64).round() as u64)
        .min(g.max_users as u64) as u32;

    let mut dist_rng = stream_rng(g.seed, STREAM_DISTANCES);
    let mut file_rng = stream_rng(g.seed, STREAM_FILES);
    let mut thr_rng = stream_rng(g.seed, STREAM_THRESHOLDS);

    // Placement first: the request model needs per-EC user ranks.
    let cell_of: Vec<u32> = (0..n_users).map(|i| i % total_cells).collect();
    let ec_of: Vec<u32> = cell_of.iter().map(|c| c / g.cells_per_ec).collect();
    let mut per_ec: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for (i, &e) in ec_of.iter().enumerate() {
        per_ec.entry(e).or_default().push(i as u32);
    }
    // Head of the catalog: the lexicographically first 20% of file ids.
    let head = (g.catalog_size / 5).max(1);
    let mut from_head = vec![false; n_users as usize];
    if g.request_model == RequestModel::Pareto8020 {
        for users in per_ec.values() {
            let n_head = users.len() * 4 / 5;
            for &u in users.iter().take(n_head) {
                from_head[u as usize] = true;
            }
        }
    }

    let users: Vec<serde_json::Value> = (0..n_users)
        .map(|i| {
            let distance_m: f64 = dist_rng.random_range(0.0..=GEN_RADIUS_M);
            let file = match g.request_model {
                RequestModel::Uniform => file_rng.random_range(0..g.catalog_size),
                RequestModel::Pareto8020 => {
                    if from_head[i as usize] || head >= g.catalog_size {
                        file_rng.random_range(0..head)
                    } else {
                        file_rng.random_range(head..g.catalog_size)
                    }
                }
            };
            let offset: f64 = thr_rng.random_range(-g.delay_spread_s..=g.delay_spread_s);
            serde_json::json!({
                "id": i,
                "cell_id": cell_of[i as usize],
                "distance_m": distance_m,
                "demanded_file": file,
                "delay_threshold_s": g.mean_delay_threshold_s + offset,
            })
        })
        .collect();

    let files: Vec<serde_json::Value> = (0..g.catalog_size)
        .map(|f| serde_json::json!({"id": f, "size_bytes": g.file_size_bytes}))
        .collect();

    let edge_clouds: Vec<serde_json::Value> = (0..g.ecs)
        .map(|e| {
            let cells: Vec<serde_json::Value> = (0..g.cells_per_ec)
                .map(|c| {
                    serde_json::json!({
                        "id": e * g.cells_per_ec + c,
                        "radius_m": GEN_RADIUS_M,
                    })
                })
                .collect();
            serde_json::json!({"id": e, "cells": cells})
        })
        .collect();

    let doc = serde_json::json!({
        "topology": {
            "central_cloud": {},
            "edge_clouds": edge_clouds,
        },
        "users": users,
        "files": files,
    });
    load_scenario(&doc.to_string()).expect("generated scenario is valid")
}

/// One row of the sweep CSV.
///
/// Field order is the CSV column order; all resource figures are
/// recomputed from the assignment rather than copied from the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub mode: String,
    /// Users present in the scenario (the load-axis value).
    pub active_users: u32,
    pub total_power_w: f64,
    /// Admitted users over present users; 0 when the scenario is empty.
    pub hit_rate: f64,
    /// Mean delay over admitted users; absent when nothing was admitted.
    pub avg_delay_s: Option<f64>,
    /// Sum over wavelengths of the per-wavelength midhaul load.
    pub midhaul_bw_mbps: f64,
    /// Total bytes cached across all edge clouds (distinct files per EC).
    pub ec_cache_bytes_total: u64,
    pub wall_time_s: f64,
    pub proven_optimal: bool,
}

/// Compute the reported metrics for one solved scenario.
///
/// `wall_time_s` is copied from the solution here; serialization helpers
/// zero it to keep CSV output byte-stable.
pub fn metrics(sol: &Solution, s: &Scenario) -> MetricsRow {
    let a = &sol.assignment;
    let tables = s.split_tables();
    let total = s.users.len() as u32;
    let hit_rate = if total == 0 {
        0.0
    } else {
        f64::from(sol.admitted_count) / f64::from(total)
    };

    let avg_delay_s = if a.admitted.is_empty() {
        None
    } else {
        let mut sum = 0.0;
        for &u in &a.admitted {
            let q = a.cp_split[&s.user(u).cell_id];
            let d = user_delay_components(
                s,
                &tables,
                u,
                a.up_split[&u],
                q,
                a.edge_cached.contains(&u),
                sol.options.path_aware_delay,
            )
            .expect("admitted user evaluates delay");
            sum += d.total();
        }
        Some(sum / a.admitted.len() as f64)
    };

    // Per-EC midhaul bandwidth, folded cell-term then user-terms in
    // topology order — the same shape the bandwidth constraint uses.
    let mut per_ec_bw: Vec<(u32, f64)> = Vec::new();
    for ec in &s.topology.edge_clouds {
        let mut bw = 0.0f64;
        for cell in &ec.cells {
            if let Some(&q) = a.cp_split.get(&cell.id) {
                bw += tables.cell_midhaul_bw_mbps(q);
            }
            for &u in s.users_of_cell(cell.id) {
                if a.admitted.contains(&u) {
                    bw += tables.user_midhaul_bw_mbps(a.up_split[&u], cell.rb_per_user);
                }
            }
        }
        per_ec_bw.push((ec.id, bw));
    }
    let mut midhaul_bw_mbps = 0.0f64;
    for w in 0..s.topology.wavelengths {
        for &(ec_id, bw) in &per_ec_bw {
            if a.wavelength.get(&ec_id) == Some(&w) && bw > 0.0 {
                midhaul_bw_mbps += bw;
            }
        }
    }

    let mut ec_cache_bytes_total = 0u64;
    for ec in &s.topology.edge_clouds {
        let mut cached: Vec<u32> = Vec::new();
        for cell in &ec.cells {
            for &u in s.users_of_cell(cell.id) {
                if a.edge_cached.contains(&u) {
                    cached.push(s.user(u).demanded_file);
                }
            }
        }
        cached.sort_unstable();
        cached.dedup();
        ec_cache_bytes_total += cached
            .iter()
            .map(|&f| s.file(f).size_bytes)
            .sum::<u64>();
    }

    MetricsRow {
        mode: sol.options.mode.to_string(),
        active_users: total,
        total_power_w: sol.total_power_w,
        hit_rate,
        avg_delay_s,
        midhaul_bw_mbps,
        ec_cache_bytes_total,
        wall_time_s: sol.wall_time_s,
        proven_optimal: sol.proven_optimal,
    }
}

/// Which generator knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Points are active-user fractions in [0, 1].
    Load,
    /// Points are mean delay thresholds in seconds.
    DelayThreshold,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Load => "load",
            SweepAxis::DelayThreshold => "delay_threshold",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "load" => Ok(SweepAxis::Load),
            "delay_threshold" => Ok(SweepAxis::DelayThreshold),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected load|delay_threshold)"
            )),
        }
    }
}

/// A sweep failure, annotated with the point and mode it happened at.
#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("solve failed at point {point} mode {mode}: {source}")]
    Solve {
        point: f64,
        mode: Mode,
        #[source]
        source: SolveError,
    },
}

/// Real timings and provenance for one sweep, written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMeta {
    pub template: GenSpec,
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    pub modes: Vec<Mode>,
    pub options: SolverOptions,
    pub timings: Vec<SweepTiming>,
}

/// Wall-clock record for one (point, mode) solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepTiming {
    pub point: f64,
    pub mode: Mode,
    pub wall_time_s: f64,
    pub proven_optimal: bool,
}

/// Solve a series of generated scenarios and report one row per
/// (point, mode), in that order.
///
/// All modes at a point share one generated scenario, so they compare on
/// identical instances. Returned rows have `wall_time_s` zeroed; the real
/// timings are in the returned [`SweepMeta`].
pub fn run_sweep(
    template: &GenSpec,
    axis: SweepAxis,
    points: &[f64],
    modes: &[Mode],
    opts: &SolverOptions,
) -> Result<(Vec<MetricsRow>, SweepMeta), ExperimentError> {
    let errs = template.validation_errors();
    if !errs.is_empty() {
        return Err(ExperimentError::InvalidSpec(errs.join("; ")));
    }
    let mut rows = Vec::with_capacity(points.len() * modes.len());
    let mut timings = Vec::with_capacity(points.len() * modes.len());
    for &point in points {
        let mut g = template.clone();
        match axis {
            SweepAxis::Load => g.active_user_fraction = point,
            SweepAxis::DelayThreshold => g.mean_delay_threshold_s = point,
        }
        let errs = g.validation_errors();
        if !errs.is_empty() {
            return Err(ExperimentError::InvalidSpec(format!(
                "point {point}: {}",
                errs.join("; ")
            )));
        }
        let scenario = generate_scenario(&g);
        for &mode in modes {
            let mut mode_opts = opts.clone();
            mode_opts.mode = mode;
            let sol = solve(&scenario, &mode_opts).map_err(|source| ExperimentError::Solve {
                point,
                mode,
                source,
            })?;
            let mut row = metrics(&sol, &scenario);
            timings.push(SweepTiming {
                point,
                mode,
                wall_time_s: row.wall_time_s,
                proven_optimal: row.proven_optimal,
            });
            row.wall_time_s = 0.0;
            rows.push(row);
        }
    }
    let meta = SweepMeta {
        template: template.clone(),
        axis,
        points: points.to_vec(),
        modes: modes.to_vec(),
        options: opts.clone(),
        timings,
    };
    Ok((rows, meta))
}

/// Serialize rows to CSV with the fixed header; `wall_time_s` is zeroed in
/// every row so reruns are byte-identical.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    const HEADER: &str = "mode,active_users,total_power_w,hit_rate,avg_delay_s,\
                          midhaul_bw_mbps,ec_cache_bytes_total,wall_time_s,proven_optimal\n";
    if rows.is_empty() {
        return HEADER.replace(' ', "");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        let mut row = row.clone();
        row.wall_time_s = 0.0;
        w.serialize(row).expect("in-memory CSV write succeeds");
    }
    let bytes = w.into_inner().expect("in-memory CSV flush succeeds");
    String::from_utf8(bytes).expect("CSV output is UTF-8")
}
