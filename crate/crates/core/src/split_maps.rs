//! Split-level lookup tables.
//!
//! A user-plane (UP) chain has `f_up` functions and a control-plane (CP)
//! chain has `f_cp` functions. A split level counts how many functions of the
//! chain run at the edge cloud: level `0` places the whole chain at the
//! central cloud, level `f` places it entirely at the edge. All model
//! quantities that depend on a split level are table-driven so that
//! heterogeneous function sizes can be expressed without code changes.

use serde::{Deserialize, Serialize};

/// Which tier hosts a function group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Site {
    /// Central cloud.
    Cc,
    /// Edge cloud.
    Ec,
}

/// Lookup tables describing what each split level means physically.
///
/// Table lengths are tied to the split ceilings `f_up` and `f_cp` of the
/// enclosing scenario:
/// - `up_at_ec`: `f_up + 1` entries; entry `p` is the number of UP functions
///   hosted at the EC under split `p`. Non-decreasing, `up_at_ec[0] == 0`,
///   `up_at_ec[f_up] == f_up`.
/// - `cp_at_ec`: `f_cp + 1` entries, same convention for the CP chain.
/// - `user_bw_mbps_per_rb`: `f_up + 1` entries; per-user midhaul bandwidth in
///   Mbps per resource block under split `p`. Non-increasing in `p`.
/// - `cell_bw_mbps`: `f_cp + 1` entries; per-cell midhaul bandwidth in Mbps
///   under split `q`. Non-increasing in `q`.
/// - `cc_volume_bytes`: `(f_up + 1) x (f_cp + 1)` entries; residual
///   central-cloud processing volume (bytes per radio subframe) under splits
///   `(p, q)`. Non-increasing in both coordinates, and zero at the fully
///   distributed corner `(f_up, f_cp)` where nothing crosses the midhaul.
/// - `per_function_delay_ec_s` / `per_function_delay_cc_s`: `f_up + f_cp`
///   entries each; processing delay of chain position `k` when hosted at the
///   EC or the CC. Positions `0..f_up` are the UP chain, positions
///   `f_up..f_up+f_cp` are the CP chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitTables {
    pub up_at_ec: Vec<u8>,
    pub cp_at_ec: Vec<u8>,
    pub user_bw_mbps_per_rb: Vec<f64>,
    pub cell_bw_mbps: Vec<f64>,
    pub cc_volume_bytes: Vec<Vec<u64>>,
    pub per_function_delay_ec_s: Vec<f64>,
    pub per_function_delay_cc_s: Vec<f64>,
}

impl SplitTables {
    /// Split ceiling of the UP chain implied by the table lengths.
    pub fn f_up(&self) -> u8 {
        (self.up_at_ec.len().max(1) - 1) as u8
    }

    /// Split ceiling of the CP chain implied by the table lengths.
    pub fn f_cp(&self) -> u8 {
        (self.cp_at_ec.len().max(1) - 1) as u8
    }

    /// Number of UP functions of a user at split `p` hosted at `site`.
    ///
    /// # Panics
    /// Panics if `p` exceeds the UP split ceiling.
    pub fn up_functions_at(&self, site: Site, p: u8) -> u8 {
        let at_ec = self.up_at_ec[p as usize];
        match site {
            Site::Ec => at_ec,
            Site::Cc => self.f_up() - at_ec,
        }
    }

    /// Number of CP functions of a cell at split `q` hosted at `site`.
    ///
    /// # Panics
    /// Panics if `q` exceeds the CP split ceiling.
    pub fn cp_functions_at(&self, site: Site, q: u8) -> u8 {
        let at_ec = self.cp_at_ec[q as usize];
        match site {
            Site::Ec => at_ec,
            Site::Cc => self.f_cp() - at_ec,
        }
    }

    /// Per-user midhaul bandwidth (Mbps) at UP split `p` for `rb` resource
    /// blocks.
    pub fn user_midhaul_bw_mbps(&self, p: u8, rb: u32) -> f64 {
        self.user_bw_mbps_per_rb[p as usize] * f64::from(rb)
    }

    /// Per-cell midhaul bandwidth (Mbps) at CP split `q`.
    pub fn cell_midhaul_bw_mbps(&self, q: u8) -> f64 {
        self.cell_bw_mbps[q as usize]
    }

    /// Residual central-cloud processing volume (bytes per radio subframe)
    /// under splits `(p, q)`.
    pub fn cc_volume_bytes(&self, p: u8, q: u8) -> u64 {
        self.cc_volume_bytes[p as usize][q as usize]
    }

    /// Structural and monotonicity errors of the tables against the split
    /// ceilings `(f_up, f_cp)`. An empty result means the tables are valid.
    pub fn validation_errors(&self, f_up: u8, f_cp: u8) -> Vec<String> {
        let mut errs = Vec::new();
        let nu = f_up as usize + 1;
        let nc = f_cp as usize + 1;

        if self.up_at_ec.len() != nu {
            errs.push(format!(
                "split_tables.up_at_ec: expected {} entries for f_up={}, got {}",
                nu,
                f_up,
                self.up_at_ec.len()
            ));
        }
        if self.cp_at_ec.len() != nc {
            errs.push(format!(
                "split_tables.cp_at_ec: expected {} entries for f_cp={}, got {}",
                nc,
                f_cp,
                self.cp_at_ec.len()
            ));
        }
        if self.user_bw_mbps_per_rb.len() != nu {
            errs.push(format!(
                "split_tables.user_bw_mbps_per_rb: expected {} entries, got {}",
                nu,
                self.user_bw_mbps_per_rb.len()
            ));
        }
        if self.cell_bw_mbps.len() != nc {
            errs.push(format!(
                "split_tables.cell_bw_mbps: expected {} entries, got {}",
                nc,
                self.cell_bw_mbps.len()
            ));
        }
        if self.cc_volume_bytes.len() != nu
            || self.cc_volume_bytes.iter().any(|row| row.len() != nc)
        {
            errs.push(format!(
                "split_tables.cc_volume_bytes: expected {}x{} entries",
                nu, nc
            ));
        }
        for (name, table, len) in [
            (
                "per_function_delay_ec_s",
                &self.per_function_delay_ec_s,
                f_up as usize + f_cp as usize,
            ),
            (
                "per_function_delay_cc_s",
                &self.per_function_delay_cc_s,
                f_up as usize + f_cp as usize,
            ),
        ] {
            if table.len() != len {
                errs.push(format!(
                    "split_tables.{}: expected {} entries, got {}",
                    name,
                    len,
                    table.len()
                ));
            }
            if table.iter().any(|d| !d.is_finite() || *d < 0.0) {
                errs.push(format!(
                    "split_tables.{}: entries must be finite and non-negative",
                    name
                ));
            }
        }
        if !errs.is_empty() {
            // Length errors make the shape checks below meaningless.
            return errs;
        }

        for (name, table, ceiling) in [
            ("up_at_ec", &self.up_at_ec, f_up),
            ("cp_at_ec", &self.cp_at_ec, f_cp),
        ] {
            if table[0] != 0 {
                errs.push(format!("split_tables.{}[0] must be 0", name));
            }
            if *table.last().unwrap() != ceiling {
                errs.push(format!(
                    "split_tables.{}[{}] must equal {}",
                    name, ceiling, ceiling
                ));
            }
            if table.windows(2).any(|w| w[0] > w[1]) {
                errs.push(format!("split_tables.{} must be non-decreasing", name));
            }
            if table.iter().any(|v| *v > ceiling) {
                errs.push(format!(
                    "split_tables.{} entries must not exceed {}",
                    name, ceiling
                ));
            }
        }
        for (name, table) in [
            ("user_bw_mbps_per_rb", &self.user_bw_mbps_per_rb),
            ("cell_bw_mbps", &self.cell_bw_mbps),
        ] {
            if table.iter().any(|v| !v.is_finite() || *v < 0.0) {
                errs.push(format!(
                    "split_tables.{}: entries must be finite and non-negative",
                    name
                ));
            }
            if table.windows(2).any(|w| w[0] < w[1]) {
                errs.push(format!("split_tables.{} must be non-increasing", name));
            }
        }
        for p in 0..nu {
            let row = &self.cc_volume_bytes[p];
            if row.windows(2).any(|w| w[0] < w[1]) {
                errs.push(format!(
                    "split_tables.cc_volume_bytes[{}] must be non-increasing in q",
                    p
                ));
            }
            if p + 1 < nu {
                let next = &self.cc_volume_bytes[p + 1];
                if row.iter().zip(next.iter()).any(|(a, b)| a < b) {
                    errs.push(format!(
                        "split_tables.cc_volume_bytes must be non-increasing in p (rows {}..{})",
                        p,
                        p + 1
                    ));
                }
            }
        }
        if self.cc_volume_bytes[nu - 1][nc - 1] != 0 {
            errs.push(
                "split_tables.cc_volume_bytes at the fully distributed corner must be 0"
                    .to_string(),
            );
        }
        errs
    }

    /// Reference tables for split ceilings `f_up = f_cp = 3`, dimensioned for
    /// a 20 MHz, 2x2 MIMO, 64-QAM cell.
    ///
    /// Per-user bandwidth per resource block descends from the raw I/Q
    /// sample rate at split 0 to the decoded payload rate at full edge
    /// placement. Per-cell bandwidth descends from broadcast-heavy CP
    /// traffic to zero once all CP functions sit at the edge. The residual
    /// CC volume is additive over both chains and vanishes at the fully
    /// distributed corner.
    pub fn reference_default() -> Self {
        SplitTables {
            up_at_ec: vec![0, 1, 2, 3],
            cp_at_ec: vec![0, 1, 2, 3],
            user_bw_mbps_per_rb: vec![24.6, 12.3, 3.0, 1.5],
            cell_bw_mbps: vec![2457.6, 1228.8, 614.4, 0.0],
            cc_volume_bytes: vec![
                vec![17739, 17253, 16767, 9720],
                vec![17253, 16767, 16281, 9234],
                vec![15309, 14823, 14337, 7290],
                vec![8019, 7533, 7047, 0],
            ],
            per_function_delay_ec_s: vec![2e-4; 6],
            per_function_delay_cc_s: vec![1e-4; 6],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_tables_are_valid() {
        let t = SplitTables::reference_default();
        assert_eq!(t.f_up(), 3);
        assert_eq!(t.f_cp(), 3);
        assert!(t.validation_errors(3, 3).is_empty());
    }

    #[test]
    fn function_counts_complement_each_other() {
        let t = SplitTables::reference_default();
        for p in 0..=3u8 {
            assert_eq!(
                t.up_functions_at(Site::Ec, p) + t.up_functions_at(Site::Cc, p),
                3
            );
        }
        for q in 0..=3u8 {
            assert_eq!(
                t.cp_functions_at(Site::Ec, q) + t.cp_functions_at(Site::Cc, q),
                3
            );
        }
        assert_eq!(t.up_functions_at(Site::Ec, 0), 0);
        assert_eq!(t.up_functions_at(Site::Ec, 3), 3);
        assert_eq!(t.cp_functions_at(Site::Cc, 3), 0);
    }

    #[test]
    fn bandwidth_scales_with_resource_blocks() {
        let t = SplitTables::reference_default();
        assert_eq!(t.user_midhaul_bw_mbps(0, 2), 49.2);
        assert_eq!(t.user_midhaul_bw_mbps(3, 1), 1.5);
        assert_eq!(t.cell_midhaul_bw_mbps(3), 0.0);
    }

    #[test]
    fn corner_volume_is_zero() {
        let t = SplitTables::reference_default();
        assert_eq!(t.cc_volume_bytes(3, 3), 0);
        assert!(t.cc_volume_bytes(0, 0) >= t.cc_volume_bytes(3, 3));
    }

    #[test]
    fn length_mismatch_is_reported_with_table_name() {
        let mut t = SplitTables::reference_default();
        t.up_at_ec.pop();
        let errs = t.validation_errors(3, 3);
        assert!(errs.iter().any(|e| e.contains("up_at_ec")), "{errs:?}");
    }

    #[test]
    fn monotonicity_violations_are_reported() {
        let mut t = SplitTables::reference_default();
        t.user_bw_mbps_per_rb[2] = 99.0;
        assert!(t
            .validation_errors(3, 3)
            .iter()
            .any(|e| e.contains("user_bw_mbps_per_rb") && e.contains("non-increasing")));

        let mut t = SplitTables::reference_default();
        t.cc_volume_bytes[3][3] = 5;
        assert!(t
            .validation_errors(3, 3)
            .iter()
            .any(|e| e.contains("fully distributed corner")));

        let mut t = SplitTables::reference_default();
        t.up_at_ec = vec![0, 2, 1, 3];
        assert!(t
            .validation_errors(3, 3)
            .iter()
            .any(|e| e.contains("up_at_ec") && e.contains("non-decreasing")));
    }
}
