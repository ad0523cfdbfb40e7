//! Network power model.
//!
//! Total power is a sum of labeled components derived purely from activity
//! counts: active midhaul line cards, loaded digital units at both tiers,
//! cooling overheads gated on tier activity, per-cell radio and fronthaul
//! chains, per-EC optical network units, and cache standby power. Components
//! are computed from an [`ActivityProfile`] so that the solver's internal
//! search and the public evaluator produce bit-identical sums.

use serde::{Deserialize, Serialize};

use crate::assignment::{derive_counts, Assignment};
use crate::scenario::Scenario;

/// Power draw parameters in watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerParams {
    /// One loaded digital unit at the CC.
    pub p_du_cc: f64,
    /// One loaded digital unit at an EC.
    pub p_du_ec: f64,
    /// One active midhaul line card (per lit wavelength).
    pub p_lc: f64,
    /// One active optical network unit (per EC serving admitted users).
    pub p_onu: f64,
    /// Radio transmission chain of one active cell.
    pub p_tx: f64,
    /// mm-wave fronthaul chain of one active cell.
    pub p_fh: f64,
    /// CC cooling overhead, charged while any CC digital unit is loaded.
    pub p_cool_cc: f64,
    /// EC cooling overhead, charged per EC while any of its digital units is
    /// loaded.
    pub p_cool_ec: f64,
    /// CC cache standby power.
    pub p_cache_cc: f64,
    /// EC cache standby power, charged per EC holding at least one cached
    /// file.
    pub p_cache_ec: f64,
    /// When true (default) the CC cache is always powered, since it holds
    /// the full catalog regardless of admissions. When false it is charged
    /// only while some admitted user is actually served from it.
    pub cc_cache_always_on: bool,
}

impl Default for PowerParams {
    fn default() -> Self {
        PowerParams {
            p_du_cc: 100.0,
            p_du_ec: 50.0,
            p_lc: 20.0,
            p_onu: 5.0,
            p_tx: 20.0,
            p_fh: 40.0,
            p_cool_cc: 0.0,
            p_cool_ec: 0.0,
            p_cache_cc: 20.0,
            p_cache_ec: 30.0,
            cc_cache_always_on: true,
        }
    }
}

impl PowerParams {
    /// Validation errors for this block; empty when valid.
    pub fn validation_errors(&self) -> Vec<String> {
        let fields = [
            ("p_du_cc", self.p_du_cc),
            ("p_du_ec", self.p_du_ec),
            ("p_lc", self.p_lc),
            ("p_onu", self.p_onu),
            ("p_tx", self.p_tx),
            ("p_fh", self.p_fh),
            ("p_cool_cc", self.p_cool_cc),
            ("p_cool_ec", self.p_cool_ec),
            ("p_cache_cc", self.p_cache_cc),
            ("p_cache_ec", self.p_cache_ec),
        ];
        fields
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(name, _)| format!("power_params.{} must be finite and non-negative", name))
            .collect()
    }
}

/// Per-EC activity counts feeding the power model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcActivity {
    pub ec_id: u32,
    /// Cells with at least one admitted user.
    pub active_cells: u32,
    /// Whether this EC serves any admitted user (powers its ONU).
    pub any_user: bool,
    /// Loaded digital units at this EC.
    pub loaded_dus: u32,
    /// Whether this EC caches at least one file.
    pub any_cached: bool,
}

/// Activity counts of a whole solution, sufficient to price it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityProfile {
    /// Lit midhaul wavelengths (each powers one line card).
    pub lit_wavelengths: u32,
    /// Loaded digital units at the CC.
    pub loaded_cc_dus: u32,
    /// Whether any admitted user is served from the CC cache (used only when
    /// the CC cache is not configured always-on).
    pub cc_cache_used: bool,
    /// One entry per EC, in scenario order.
    pub per_ec: Vec<EcActivity>,
}

/// Labeled power components for an activity profile, in a fixed order:
/// `line_cards`, `cc_du`, `cc_cooling`, `cc_cache`, then per EC (scenario
/// order) `ec{id}_cells`, `ec{id}_onu`, `ec{id}_cooling`, `ec{id}_du`,
/// `ec{id}_cache`.
pub fn breakdown_for_profile(
    profile: &ActivityProfile,
    params: &PowerParams,
) -> Vec<(String, f64)> {
    let mut parts = Vec::with_capacity(4 + 5 * profile.per_ec.len());
    parts.push((
        "line_cards".to_string(),
        params.p_lc * f64::from(profile.lit_wavelengths),
    ));
    parts.push((
        "cc_du".to_string(),
        params.p_du_cc * f64::from(profile.loaded_cc_dus),
    ));
    parts.push((
        "cc_cooling".to_string(),
        if profile.loaded_cc_dus > 0 {
            params.p_cool_cc
        } else {
            0.0
        },
    ));
    parts.push((
        "cc_cache".to_string(),
        if params.cc_cache_always_on || profile.cc_cache_used {
            params.p_cache_cc
        } else {
            0.0
        },
    ));
    for ec in &profile.per_ec {
        parts.push((
            format!("ec{}_cells", ec.ec_id),
            (params.p_tx + params.p_fh) * f64::from(ec.active_cells),
        ));
        parts.push((
            format!("ec{}_onu", ec.ec_id),
            if ec.any_user { params.p_onu } else { 0.0 },
        ));
        parts.push((
            format!("ec{}_cooling", ec.ec_id),
            if ec.loaded_dus > 0 {
                params.p_cool_ec
            } else {
                0.0
            },
        ));
        parts.push((
            format!("ec{}_du", ec.ec_id),
            params.p_du_ec * f64::from(ec.loaded_dus),
        ));
        parts.push((
            format!("ec{}_cache", ec.ec_id),
            if ec.any_cached {
                params.p_cache_ec
            } else {
                0.0
            },
        ));
    }
    parts
}

/// Total power for an activity profile: the exact sum of
/// [`breakdown_for_profile`] in component order.
pub fn total_for_profile(profile: &ActivityProfile, params: &PowerParams) -> f64 {
    breakdown_for_profile(profile, params)
        .iter()
        .map(|(_, w)| w)
        .sum()
}

/// Power parameters snapped to an exact 1 microwatt integer grid.
///
/// Solvers compare candidate powers on this grid: integer sums are
/// associative, so equal-power ties are detected identically regardless of
/// summation order, which floating-point sums cannot guarantee. Reported
/// watt values always come from [`breakdown_for_profile`]; the grid is only
/// the comparison domain. Parameters with sub-microwatt precision are
/// rounded to the nearest microwatt for comparison purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PowerGrid {
    pub lc: u64,
    pub du_cc: u64,
    pub du_ec: u64,
    pub onu: u64,
    pub tx: u64,
    pub fh: u64,
    pub cool_cc: u64,
    pub cool_ec: u64,
    pub cache_cc: u64,
    pub cache_ec: u64,
    pub cc_cache_always_on: bool,
}

fn to_uw(w: f64) -> u64 {
    (w * 1e6).round() as u64
}

impl PowerGrid {
    pub fn new(p: &PowerParams) -> Self {
        PowerGrid {
            lc: to_uw(p.p_lc),
            du_cc: to_uw(p.p_du_cc),
            du_ec: to_uw(p.p_du_ec),
            onu: to_uw(p.p_onu),
            tx: to_uw(p.p_tx),
            fh: to_uw(p.p_fh),
            cool_cc: to_uw(p.p_cool_cc),
            cool_ec: to_uw(p.p_cool_ec),
            cache_cc: to_uw(p.p_cache_cc),
            cache_ec: to_uw(p.p_cache_ec),
            cc_cache_always_on: p.cc_cache_always_on,
        }
    }

    /// Exact microwatt total for an activity profile; mirrors
    /// [`breakdown_for_profile`] term for term.
    pub fn profile_microwatts(&self, profile: &ActivityProfile) -> u64 {
        let mut uw = self.lc * u64::from(profile.lit_wavelengths)
            + self.du_cc * u64::from(profile.loaded_cc_dus);
        if profile.loaded_cc_dus > 0 {
            uw += self.cool_cc;
        }
        if self.cc_cache_always_on || profile.cc_cache_used {
            uw += self.cache_cc;
        }
        for ec in &profile.per_ec {
            uw += (self.tx + self.fh) * u64::from(ec.active_cells);
            if ec.any_user {
                uw += self.onu;
            }
            if ec.loaded_dus > 0 {
                uw += self.cool_ec;
            }
            uw += self.du_ec * u64::from(ec.loaded_dus);
            if ec.any_cached {
                uw += self.cache_ec;
            }
        }
        uw
    }
}

/// Labeled power components of an assignment. See
/// [`breakdown_for_profile`] for the component order.
pub fn power_breakdown(a: &Assignment, s: &Scenario) -> Vec<(String, f64)> {
    let counts = derive_counts(a, s);
    breakdown_for_profile(&counts.profile, &s.power_params)
}

/// Total network power of an assignment in watts: the exact sum of its
/// breakdown.
pub fn total_power(a: &Assignment, s: &Scenario) -> f64 {
    power_breakdown(a, s).iter().map(|(_, w)| w).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(lit: u32, cc_dus: u32, ecs: Vec<EcActivity>) -> ActivityProfile {
        ActivityProfile {
            lit_wavelengths: lit,
            loaded_cc_dus: cc_dus,
            cc_cache_used: false,
            per_ec: ecs,
        }
    }

    #[test]
    fn idle_network_draws_only_cc_cache() {
        let params = PowerParams::default();
        let p = profile(0, 0, vec![]);
        let parts = breakdown_for_profile(&p, &params);
        let total = total_for_profile(&p, &params);
        assert_eq!(total, 20.0);
        let nonzero: Vec<_> = parts.iter().filter(|(_, w)| *w != 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].0, "cc_cache");
    }

    #[test]
    fn guarded_cc_cache_draws_nothing_when_unused() {
        let params = PowerParams {
            cc_cache_always_on: false,
            ..PowerParams::default()
        };
        let p = profile(0, 0, vec![]);
        assert_eq!(total_for_profile(&p, &params), 0.0);
        let mut used = p.clone();
        used.cc_cache_used = true;
        assert_eq!(total_for_profile(&used, &params), 20.0);
    }

    #[test]
    fn single_ec_components_add_up() {
        let params = PowerParams::default();
        let p = profile(
            1,
            2,
            vec![EcActivity {
                ec_id: 7,
                active_cells: 1,
                any_user: true,
                loaded_dus: 1,
                any_cached: true,
            }],
        );
        // 20 (lc) + 200 (cc du) + 0 + 20 (cc cache) + 60 (cell) + 5 (onu)
        // + 0 + 50 (ec du) + 30 (ec cache)
        assert_eq!(total_for_profile(&p, &params), 385.0);
        let parts = breakdown_for_profile(&p, &params);
        assert!(parts.iter().any(|(n, w)| n == "ec7_cache" && *w == 30.0));
        let sum: f64 = parts.iter().map(|(_, w)| w).sum();
        assert_eq!(sum, total_for_profile(&p, &params));
    }

    #[test]
    fn cooling_is_gated_on_loaded_dus() {
        let params = PowerParams {
            p_cool_cc: 100.0,
            p_cool_ec: 10.0,
            ..PowerParams::default()
        };
        let idle = profile(0, 0, vec![]);
        assert_eq!(total_for_profile(&idle, &params), 20.0);
        let busy = profile(
            0,
            1,
            vec![EcActivity {
                ec_id: 0,
                active_cells: 0,
                any_user: false,
                loaded_dus: 1,
                any_cached: false,
            }],
        );
        // 100 (cc du) + 100 (cc cooling) + 20 (cc cache) + 50 (ec du) + 10 (ec cooling)
        assert_eq!(total_for_profile(&busy, &params), 280.0);
    }
}
