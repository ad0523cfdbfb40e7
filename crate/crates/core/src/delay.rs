//! End-to-end user delay model.
//!
//! Each admitted user experiences a sum of delay components: baseband
//! function processing at both tiers, radio subframe serialization, optical
//! frame transport over the midhaul, transceiver latencies (ONU, line card),
//! optical and mm-wave and radio propagation, mm-wave conversion, switching,
//! and the cache processing delay of whichever tier serves the content.
//!
//! All components are exposed individually ([`DelayComponents`]) and the
//! total is their exact sum, so tests can pin each term separately.

use serde::{Deserialize, Serialize};

use crate::assignment::Assignment;
use crate::scenario::Scenario;
use crate::split_maps::{Site, SplitTables};

/// Speed of light in vacuum, m/s, used for propagation delays.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Delay model parameters in seconds (and frame geometry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayParams {
    /// Radio subframe transmission time.
    pub t_rsf_s: f64,
    /// Symbols per physical resource block per subframe.
    pub n_symbols_per_prb: u64,
    /// Bits carried per symbol (64-QAM: 6).
    pub bits_per_symbol: u64,
    /// Optical frame size in bytes.
    pub s_of_bytes: u64,
    /// Optical frame time.
    pub t_of_s: f64,
    /// Optical network unit latency.
    pub d_onu_s: f64,
    /// Line card latency.
    pub d_lc_s: f64,
    /// Optical propagation over the midhaul.
    pub d_opg_s: f64,
    /// mm-wave propagation over the fronthaul.
    pub d_mw_prg_s: f64,
    /// mm-wave conversion.
    pub d_mw_cnv_s: f64,
    /// Ethernet switching share.
    pub d_sw_ethernet_s: f64,
    /// Optical switching share.
    pub d_sw_optical_s: f64,
    /// Cache processing delay when serving from the CC.
    pub d_cache_cc_s: f64,
    /// Cache processing delay when serving from an EC.
    pub d_cache_ec_s: f64,
    /// How many cells share one optical frame. Defaults to the total cell
    /// count of the scenario when unset (resolve via
    /// [`Scenario::frame_share_divisor`]).
    pub frame_share_divisor: Option<u64>,
}

impl Default for DelayParams {
    fn default() -> Self {
        DelayParams {
            t_rsf_s: 1e-3,
            n_symbols_per_prb: 168,
            bits_per_symbol: 6,
            s_of_bytes: 38_880,
            t_of_s: 125e-6,
            d_onu_s: 7.5e-6,
            d_lc_s: 1.5e-6,
            d_opg_s: 0.4e-3,
            d_mw_prg_s: 6.7e-7,
            d_mw_cnv_s: 30e-6,
            d_sw_ethernet_s: 5.2e-3,
            d_sw_optical_s: 2.5e-3,
            d_cache_cc_s: 20e-3,
            d_cache_ec_s: 25e-3,
            frame_share_divisor: None,
        }
    }
}

impl DelayParams {
    /// Validation errors for this block; empty when valid.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let fields = [
            ("t_rsf_s", self.t_rsf_s),
            ("t_of_s", self.t_of_s),
            ("d_onu_s", self.d_onu_s),
            ("d_lc_s", self.d_lc_s),
            ("d_opg_s", self.d_opg_s),
            ("d_mw_prg_s", self.d_mw_prg_s),
            ("d_mw_cnv_s", self.d_mw_cnv_s),
            ("d_sw_ethernet_s", self.d_sw_ethernet_s),
            ("d_sw_optical_s", self.d_sw_optical_s),
            ("d_cache_cc_s", self.d_cache_cc_s),
            ("d_cache_ec_s", self.d_cache_ec_s),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!(
                    "delay_params.{} must be finite and non-negative",
                    name
                ));
            }
        }
        if self.s_of_bytes == 0 {
            errs.push("delay_params.s_of_bytes must be positive".to_string());
        }
        if self.n_symbols_per_prb == 0 {
            errs.push("delay_params.n_symbols_per_prb must be positive".to_string());
        }
        if self.bits_per_symbol == 0 {
            errs.push("delay_params.bits_per_symbol must be positive".to_string());
        }
        if self.frame_share_divisor == Some(0) {
            errs.push("delay_params.frame_share_divisor must be at least 1".to_string());
        }
        errs
    }
}

/// Errors from delay evaluation.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DelayError {
    #[error("user {0} is not admitted")]
    NotAdmitted(u32),
    #[error("zero denominator: rb_per_user, bits_per_symbol, and n_symbols_per_prb must all be positive")]
    ZeroDenominator,
}

/// Baseband function processing delay for splits `(p, q)`: every chain
/// position is charged against the per-function delay table of the tier
/// hosting it. UP functions at split `p` place the first `up_at_ec(p)` chain
/// positions at the EC and the rest at the CC; the CP chain behaves the same
/// at table offset `f_up`.
pub fn processing_delay(p: u8, q: u8, tables: &SplitTables) -> f64 {
    let f_up = tables.f_up() as usize;
    let f_cp = tables.f_cp() as usize;
    let up_ec = tables.up_functions_at(Site::Ec, p) as usize;
    let cp_ec = tables.cp_functions_at(Site::Ec, q) as usize;
    let mut sum = 0.0;
    for k in 0..f_up {
        sum += if k < up_ec {
            tables.per_function_delay_ec_s[k]
        } else {
            tables.per_function_delay_cc_s[k]
        };
    }
    for k in 0..f_cp {
        sum += if k < cp_ec {
            tables.per_function_delay_ec_s[f_up + k]
        } else {
            tables.per_function_delay_cc_s[f_up + k]
        };
    }
    sum
}

/// Number of radio subframes needed to carry a file of `file_bytes` bytes
/// for a user holding `u_prb` resource blocks:
/// `ceil(8*file_bytes / (u_prb * bits_per_symbol * n_symbols_per_prb))`.
pub fn radio_subframe_count(
    file_bytes: u64,
    u_prb: u32,
    params: &DelayParams,
) -> Result<u64, DelayError> {
    let denom = u128::from(u_prb) * u128::from(params.bits_per_symbol)
        * u128::from(params.n_symbols_per_prb);
    if denom == 0 {
        return Err(DelayError::ZeroDenominator);
    }
    let bits = 8u128 * u128::from(file_bytes);
    Ok(bits.div_ceil(denom) as u64)
}

/// Number of optical frames needed to move the residual central-cloud
/// processing volume of splits `(p, q)` across the midhaul:
/// `ceil(cc_volume(p,q) * n_rsf / (s_of_bytes / frame_share_divisor))`,
/// and 0 when the volume is 0. Computed exactly in integer arithmetic.
pub fn optical_frame_count(
    p: u8,
    q: u8,
    n_rsf: u64,
    tables: &SplitTables,
    params: &DelayParams,
    frame_share_divisor: u64,
) -> u64 {
    let volume = tables.cc_volume_bytes(p, q);
    if volume == 0 {
        return 0;
    }
    let num = u128::from(volume) * u128::from(n_rsf) * u128::from(frame_share_divisor);
    let den = u128::from(params.s_of_bytes.max(1));
    num.div_ceil(den) as u64
}

/// Every delay component of one user, in seconds. The total is the exact
/// sum of the fields in declaration order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayComponents {
    /// Baseband function processing at both tiers.
    pub processing_s: f64,
    /// Radio subframe serialization (`n_rsf * t_rsf_s`).
    pub radio_subframes_s: f64,
    /// Optical frame transport (`n_of * t_of_s`).
    pub optical_frames_s: f64,
    pub onu_s: f64,
    pub line_card_s: f64,
    pub optical_propagation_s: f64,
    pub mw_propagation_s: f64,
    pub mw_conversion_s: f64,
    /// Radio propagation: user distance over the speed of light.
    pub radio_propagation_s: f64,
    pub switching_ethernet_s: f64,
    pub switching_optical_s: f64,
    /// Cache processing at the serving tier.
    pub cache_s: f64,
}

impl DelayComponents {
    /// Exact sum of all components in field order.
    pub fn total(&self) -> f64 {
        self.processing_s
            + self.radio_subframes_s
            + self.optical_frames_s
            + self.onu_s
            + self.line_card_s
            + self.optical_propagation_s
            + self.mw_propagation_s
            + self.mw_conversion_s
            + self.radio_propagation_s
            + self.switching_ethernet_s
            + self.switching_optical_s
            + self.cache_s
    }
}

/// Delay components of a user under splits `(p, q)` with its content served
/// from the EC cache (`edge_cached`) or the CC.
///
/// With `path_aware` set and the user both edge-cached and fully
/// edge-processed on the user plane, the content path never touches the
/// midhaul: the optical-frame, ONU, line-card, optical-propagation, and
/// optical-switching terms are zeroed. Everything else is charged
/// unconditionally, mirroring the evaluated delay sum.
pub fn user_delay_components(
    s: &Scenario,
    tables: &SplitTables,
    user_id: u32,
    p: u8,
    q: u8,
    edge_cached: bool,
    path_aware: bool,
) -> Result<DelayComponents, DelayError> {
    let user = s.user(user_id);
    let (_, cell) = s.cell(user.cell_id);
    let file = s.file(user.demanded_file);
    let params = &s.delay_params;

    let n_rsf = radio_subframe_count(file.size_bytes, cell.rb_per_user, params)?;
    let n_of = optical_frame_count(p, q, n_rsf, tables, params, s.frame_share_divisor());

    let relieved =
        path_aware && edge_cached && tables.up_functions_at(Site::Cc, p) == 0;
    let midhaul = |v: f64| if relieved { 0.0 } else { v };

    Ok(DelayComponents {
        processing_s: processing_delay(p, q, tables),
        radio_subframes_s: n_rsf as f64 * params.t_rsf_s,
        optical_frames_s: midhaul(n_of as f64 * params.t_of_s),
        onu_s: midhaul(params.d_onu_s),
        line_card_s: midhaul(params.d_lc_s),
        optical_propagation_s: midhaul(params.d_opg_s),
        mw_propagation_s: params.d_mw_prg_s,
        mw_conversion_s: params.d_mw_cnv_s,
        radio_propagation_s: user.distance_m / SPEED_OF_LIGHT_M_PER_S,
        switching_ethernet_s: params.d_sw_ethernet_s,
        switching_optical_s: midhaul(params.d_sw_optical_s),
        cache_s: if edge_cached {
            params.d_cache_ec_s
        } else {
            params.d_cache_cc_s
        },
    })
}

/// Total end-to-end delay of an admitted user under an assignment.
///
/// Reads the user's UP split, its cell's CP split, and its cache placement
/// from the assignment. Errors if the user is not admitted.
pub fn total_user_delay(
    user_id: u32,
    a: &Assignment,
    s: &Scenario,
    path_aware: bool,
) -> Result<f64, DelayError> {
    if !a.admitted.contains(&user_id) {
        return Err(DelayError::NotAdmitted(user_id));
    }
    let user = s.user(user_id);
    let p = *a
        .up_split
        .get(&user_id)
        .ok_or(DelayError::NotAdmitted(user_id))?;
    let q = *a
        .cp_split
        .get(&user.cell_id)
        .ok_or(DelayError::NotAdmitted(user_id))?;
    let tables = s.split_tables();
    let comps = user_delay_components(
        s,
        &tables,
        user_id,
        p,
        q,
        a.edge_cached.contains(&user_id),
        path_aware,
    )?;
    Ok(comps.total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    fn uniform_tables(ec_d: f64, cc_d: f64) -> SplitTables {
        let mut t = SplitTables::reference_default();
        t.per_function_delay_ec_s = vec![ec_d; 6];
        t.per_function_delay_cc_s = vec![cc_d; 6];
        t
    }

    #[test]
    fn processing_is_site_symmetric_when_tables_agree() {
        // A dyadic per-function delay keeps every partial sum exact, so
        // the assertion can be bitwise.
        let d = 1.0 / 4096.0;
        let t = uniform_tables(d, d);
        for p in 0..=3 {
            for q in 0..=3 {
                assert_eq!(processing_delay(p, q, &t), 6.0 * d);
            }
        }
    }

    #[test]
    fn processing_fully_centralized_uses_cc_table_only() {
        let t = uniform_tables(0.0, 1e-4);
        assert_eq!(processing_delay(0, 0, &t), 6.0 * 1e-4);
    }

    #[test]
    fn processing_mixed_split_hand_sum() {
        let mut t = SplitTables::reference_default();
        t.per_function_delay_ec_s = vec![1e-4, 2e-4, 3e-4, 4e-4, 5e-4, 6e-4];
        t.per_function_delay_cc_s = vec![7e-4, 8e-4, 9e-4, 10e-4, 11e-4, 12e-4];
        // p=2: UP positions 0,1 at EC, position 2 at CC.
        // q=3: CP positions 0..3 (table offset 3) all at EC.
        let expected = 1e-4 + 2e-4 + 9e-4 + 4e-4 + 5e-4 + 6e-4;
        assert_eq!(processing_delay(2, 3, &t), expected);
    }

    #[test]
    fn radio_subframe_count_matches_hand_ceils() {
        let params = DelayParams {
            n_symbols_per_prb: 100,
            bits_per_symbol: 6,
            ..Default::default()
        };
        // 1000 bits = 125 bytes over 600 bits per subframe.
        assert_eq!(radio_subframe_count(125, 1, &params).unwrap(), 2);
        // 600 bits = 75 bytes: exact division.
        assert_eq!(radio_subframe_count(75, 1, &params).unwrap(), 1);
        // 20 MB with the default 6 bits x 168 symbols.
        let params = DelayParams::default();
        assert_eq!(
            radio_subframe_count(20_000_000, 1, &params).unwrap(),
            158_731
        );
    }

    #[test]
    fn radio_subframe_count_rejects_zero_denominator() {
        let params = DelayParams::default();
        assert_eq!(
            radio_subframe_count(1000, 0, &params),
            Err(DelayError::ZeroDenominator)
        );
    }

    #[test]
    fn optical_frame_count_matches_hand_ceils() {
        let mut t = SplitTables::reference_default();
        t.cc_volume_bytes[1][1] = 1944;
        t.cc_volume_bytes[1][2] = 1944; // keep row monotone
        t.cc_volume_bytes[1][3] = 1000;
        t.cc_volume_bytes[2][1] = 1944;
        t.cc_volume_bytes[2][2] = 1000;
        t.cc_volume_bytes[2][3] = 900;
        t.cc_volume_bytes[3][0] = 1945;
        t.cc_volume_bytes[3][1] = 1945;
        t.cc_volume_bytes[3][2] = 1000;
        let params = DelayParams::default();
        // 1944 * 1 * 20 / 38880 = 1.0 exactly.
        assert_eq!(optical_frame_count(1, 1, 1, &t, &params, 20), 1);
        // 1945 crosses the frame boundary.
        assert_eq!(optical_frame_count(3, 0, 1, &t, &params, 20), 2);
        // Fully distributed: zero volume, zero frames.
        assert_eq!(optical_frame_count(3, 3, 5, &t, &params, 20), 0);
    }

    fn one_user_scenario() -> crate::scenario::Scenario {
        load_scenario(
            r#"{
            "topology": {
                "central_cloud": {},
                "edge_clouds": [{"id": 0, "cells": [{"id": 0}]}]
            },
            "users": [{"id": 0, "cell_id": 0, "distance_m": 0.0,
                       "demanded_file": 0, "delay_threshold_s": 1.0}],
            "files": [{"id": 0, "size_bytes": 1000}]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn cache_selection_term_is_exercised_in_isolation() {
        let mut s = one_user_scenario();
        s.delay_params = DelayParams {
            d_cache_cc_s: 0.020,
            d_cache_ec_s: 0.025,
            t_rsf_s: 0.0,
            t_of_s: 0.0,
            d_onu_s: 0.0,
            d_lc_s: 0.0,
            d_opg_s: 0.0,
            d_mw_prg_s: 0.0,
            d_mw_cnv_s: 0.0,
            d_sw_ethernet_s: 0.0,
            d_sw_optical_s: 0.0,
            ..DelayParams::default()
        };
        let mut tables = SplitTables::reference_default();
        tables.per_function_delay_ec_s = vec![0.0; 6];
        tables.per_function_delay_cc_s = vec![0.0; 6];
        let cached =
            user_delay_components(&s, &tables, 0, 3, 0, true, false).unwrap();
        assert_eq!(cached.total(), 0.025);
        let central =
            user_delay_components(&s, &tables, 0, 3, 0, false, false).unwrap();
        assert_eq!(central.total(), 0.020);
        // Sign test: with these parameters the selection term alone grows
        // when the content moves to the edge.
        assert!(cached.cache_s > central.cache_s);
    }

    #[test]
    fn totals_equal_component_sums() {
        let s = one_user_scenario();
        let tables = s.split_tables();
        for p in 0..=3 {
            for q in 0..=3 {
                for cached in [false, true] {
                    let c =
                        user_delay_components(&s, &tables, 0, p, q, cached, false).unwrap();
                    let manual = c.processing_s
                        + c.radio_subframes_s
                        + c.optical_frames_s
                        + c.onu_s
                        + c.line_card_s
                        + c.optical_propagation_s
                        + c.mw_propagation_s
                        + c.mw_conversion_s
                        + c.radio_propagation_s
                        + c.switching_ethernet_s
                        + c.switching_optical_s
                        + c.cache_s;
                    assert_eq!(c.total(), manual);
                }
            }
        }
    }

    #[test]
    fn path_aware_relief_zeroes_midhaul_terms_only_when_fully_edge() {
        let s = one_user_scenario();
        let tables = s.split_tables();
        // Edge-cached and fully edge-processed: midhaul terms vanish.
        let relieved = user_delay_components(&s, &tables, 0, 3, 1, true, true).unwrap();
        assert_eq!(relieved.optical_frames_s, 0.0);
        assert_eq!(relieved.onu_s, 0.0);
        assert_eq!(relieved.line_card_s, 0.0);
        assert_eq!(relieved.optical_propagation_s, 0.0);
        assert_eq!(relieved.switching_optical_s, 0.0);
        assert!(relieved.switching_ethernet_s > 0.0);
        // Same placement without the flag: all terms charged.
        let literal = user_delay_components(&s, &tables, 0, 3, 1, true, false).unwrap();
        assert!(literal.onu_s > 0.0 && literal.switching_optical_s > 0.0);
        // Edge-cached but UP functions still at the CC: no relief.
        let partial = user_delay_components(&s, &tables, 0, 2, 1, true, true).unwrap();
        assert!(partial.onu_s > 0.0);
    }

    #[test]
    fn total_user_delay_requires_admission() {
        let s = one_user_scenario();
        let a = Assignment::default();
        assert_eq!(
            total_user_delay(0, &a, &s, false),
            Err(DelayError::NotAdmitted(0))
        );
    }
}
