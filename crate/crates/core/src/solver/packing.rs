//! Exact small-scale packing: minimum processing units for two-dimensional
//! load items and minimum wavelength groups for per-edge-cloud bandwidth.
//!
//! Instances are tiny (tens of items, single-digit bins), so exact search
//! is affordable. Every function is pure and deterministic.

/// Exact minimum number of bins for items with (control, user) plane loads,
/// where each bin offers `cap_cp`/`cap_up` capacity on the respective
/// dimension. Zero-load items are ignored. Returns `None` when some item
/// exceeds a single bin's capacity or more than `max_bins` bins are needed.
pub(crate) fn min_bins_2d(
    items: &[(u32, u32)],
    cap_cp: u32,
    cap_up: u32,
    max_bins: u32,
) -> Option<u32> {
    let mut live: Vec<(u32, u32)> = items
        .iter()
        .copied()
        .filter(|&(c, u)| c > 0 || u > 0)
        .collect();
    if live.is_empty() {
        return Some(0);
    }
    if live.iter().any(|&(c, u)| c > cap_cp || u > cap_up) {
        return None;
    }
    // Deterministic order: dominant normalized size descending, then raw
    // loads, so first-fit-decreasing and the exact search see a stable
    // sequence.
    live.sort_by(|a, b| {
        let key = |&(c, u): &(u32, u32)| {
            (
                std::cmp::Reverse(std::cmp::max(
                    u64::from(c) * u64::from(cap_up.max(1)),
                    u64::from(u) * u64::from(cap_cp.max(1)),
                )),
                std::cmp::Reverse(c),
                std::cmp::Reverse(u),
            )
        };
        key(a).cmp(&key(b))
    });

    let lower = lower_bound_2d(&live, cap_cp, cap_up);
    let upper = first_fit(&live, cap_cp, cap_up);
    if lower == upper {
        return (lower <= max_bins).then_some(lower);
    }
    // Exact branch and bound between the ceiling bound and the first-fit
    // solution.
    let mut best = upper;
    let mut bins: Vec<(u32, u32)> = Vec::new();
    dfs_bins(&live, 0, cap_cp, cap_up, &mut bins, &mut best, lower);
    (best <= max_bins).then_some(best)
}

fn lower_bound_2d(items: &[(u32, u32)], cap_cp: u32, cap_up: u32) -> u32 {
    let sum_cp: u64 = items.iter().map(|&(c, _)| u64::from(c)).sum();
    let sum_up: u64 = items.iter().map(|&(_, u)| u64::from(u)).sum();
    let b_cp = if cap_cp == 0 {
        u32::from(sum_cp > 0)
    } else {
        sum_cp.div_ceil(u64::from(cap_cp)) as u32
    };
    let b_up = if cap_up == 0 {
        u32::from(sum_up > 0)
    } else {
        sum_up.div_ceil(u64::from(cap_up)) as u32
    };
    b_cp.max(b_up).max(1)
}

fn first_fit(items: &[(u32, u32)], cap_cp: u32, cap_up: u32) -> u32 {
    let mut bins: Vec<(u32, u32)> = Vec::new();
    for &(c, u) in items {
        let slot = bins
            .iter()
            .position(|&(bc, bu)| bc + c <= cap_cp && bu + u <= cap_up);
        match slot {
            Some(i) => {
                bins[i].0 += c;
                bins[i].1 += u;
            }
            None => bins.push((c, u)),
        }
    }
    bins.len() as u32
}

fn dfs_bins(
    items: &[(u32, u32)],
    idx: usize,
    cap_cp: u32,
    cap_up: u32,
    bins: &mut Vec<(u32, u32)>,
    best: &mut u32,
    global_lower: u32,
) {
    if *best == global_lower {
        return;
    }
    if idx == items.len() {
        *best = (*best).min(bins.len() as u32);
        return;
    }
    if bins.len() as u32 >= *best {
        return;
    }
    let remaining = &items[idx..];
    if lower_bound_partial(bins, remaining, cap_cp, cap_up) >= *best {
        return;
    }
    let (c, u) = items[idx];
    // Try existing bins; skip bins identical in residual capacity to an
    // already tried one (symmetry).
    let mut seen: Vec<(u32, u32)> = Vec::new();
    for i in 0..bins.len() {
        let residual = (cap_cp - bins[i].0, cap_up - bins[i].1);
        if residual.0 >= c && residual.1 >= u && !seen.contains(&residual) {
            seen.push(residual);
            bins[i].0 += c;
            bins[i].1 += u;
            dfs_bins(items, idx + 1, cap_cp, cap_up, bins, best, global_lower);
            bins[i].0 -= c;
            bins[i].1 -= u;
        }
    }
    if (bins.len() as u32) + 1 < *best {
        bins.push((c, u));
        dfs_bins(items, idx + 1, cap_cp, cap_up, bins, best, global_lower);
        bins.pop();
    }
}

fn lower_bound_partial(
    bins: &[(u32, u32)],
    remaining: &[(u32, u32)],
    cap_cp: u32,
    cap_up: u32,
) -> u32 {
    // Loads already placed plus remaining loads cannot beat the ceiling
    // bound on total volume.
    let placed_cp: u64 = bins.iter().map(|&(c, _)| u64::from(c)).sum();
    let placed_up: u64 = bins.iter().map(|&(_, u)| u64::from(u)).sum();
    let rest_cp: u64 = remaining.iter().map(|&(c, _)| u64::from(c)).sum();
    let rest_up: u64 = remaining.iter().map(|&(_, u)| u64::from(u)).sum();
    let b_cp = if cap_cp == 0 {
        u32::from(placed_cp + rest_cp > 0)
    } else {
        ((placed_cp + rest_cp).div_ceil(u64::from(cap_cp))) as u32
    };
    let b_up = if cap_up == 0 {
        u32::from(placed_up + rest_up > 0)
    } else {
        ((placed_up + rest_up).div_ceil(u64::from(cap_up))) as u32
    };
    b_cp.max(b_up).max(bins.len() as u32)
}

/// Whether `items` can be placed onto DUs with the given residual
/// capacities so that the total count of loaded DUs (those already flagged
/// in `loaded` plus any that receive a positive load) stays at most
/// `max_loaded`. Used as the completability oracle while constructing
/// lexicographically minimal DU assignments.
pub(crate) fn can_pack_with_state(
    items: &[(u32, u32)],
    residual: &[(u32, u32)],
    loaded: &[bool],
    max_loaded: u32,
) -> bool {
    let mut live: Vec<(u32, u32)> = items
        .iter()
        .copied()
        .filter(|&(c, u)| c > 0 || u > 0)
        .collect();
    if loaded.iter().filter(|&&l| l).count() as u32 > max_loaded {
        return false;
    }
    if live.is_empty() {
        return true;
    }
    live.sort_by_key(|&(c, u)| std::cmp::Reverse((u64::from(c) + u64::from(u), c, u)));
    let mut res = residual.to_vec();
    let mut lod = loaded.to_vec();
    dfs_pack_state(&live, 0, &mut res, &mut lod, max_loaded)
}

fn dfs_pack_state(
    items: &[(u32, u32)],
    idx: usize,
    residual: &mut [(u32, u32)],
    loaded: &mut [bool],
    max_loaded: u32,
) -> bool {
    if idx == items.len() {
        return true;
    }
    let (c, u) = items[idx];
    let n_loaded = loaded.iter().filter(|&&l| l).count() as u32;
    let mut tried: Vec<(u32, u32, bool)> = Vec::new();
    for d in 0..residual.len() {
        let sig = (residual[d].0, residual[d].1, loaded[d]);
        if residual[d].0 >= c && residual[d].1 >= u && !tried.contains(&sig) {
            if !loaded[d] && n_loaded == max_loaded {
                continue;
            }
            tried.push(sig);
            let was_loaded = loaded[d];
            residual[d].0 -= c;
            residual[d].1 -= u;
            loaded[d] = true;
            if dfs_pack_state(items, idx + 1, residual, loaded, max_loaded) {
                return true;
            }
            residual[d].0 += c;
            residual[d].1 += u;
            loaded[d] = was_loaded;
        }
    }
    false
}

/// Exact minimum number of groups needed to partition `values` so that each
/// group sums to at most `cap`. Returns `None` if a single value exceeds
/// `cap` or more than `max_groups` groups would be required. Used for
/// assigning edge-cloud bandwidth to wavelengths.
pub(crate) fn min_groups_f64(values: &[f64], cap: f64, max_groups: u32) -> Option<u32> {
    let live: Vec<f64> = values.to_vec();
    if live.is_empty() {
        return Some(0);
    }
    if live.iter().any(|&v| v > cap) {
        return None;
    }
    (1..=max_groups).find(|&k| can_group(&live, cap, k))
}

/// Whether `values` fit into at most `k` groups of sum at most `cap` each.
/// Group loads are accumulated in input order (matching how feasibility
/// checking folds per-wavelength bandwidth).
pub(crate) fn can_group(values: &[f64], cap: f64, k: u32) -> bool {
    if values.is_empty() {
        return true;
    }
    if k == 0 {
        return false;
    }
    let mut groups: Vec<f64> = Vec::with_capacity(k as usize);
    dfs_groups(values, 0, cap, k as usize, &mut groups)
}

fn dfs_groups(values: &[f64], idx: usize, cap: f64, k: usize, groups: &mut Vec<f64>) -> bool {
    if idx == values.len() {
        return true;
    }
    let v = values[idx];
    let mut tried: Vec<u64> = Vec::new();
    for i in 0..groups.len() {
        let bits = groups[i].to_bits();
        if groups[i] + v <= cap && !tried.contains(&bits) {
            tried.push(bits);
            let prev = groups[i];
            groups[i] = prev + v;
            if dfs_groups(values, idx + 1, cap, k, groups) {
                return true;
            }
            groups[i] = prev;
        }
    }
    if groups.len() < k {
        groups.push(v);
        if dfs_groups(values, idx + 1, cap, k, groups) {
            return true;
        }
        groups.pop();
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_zero_items_need_no_bins() {
        assert_eq!(min_bins_2d(&[], 3, 15, 5), Some(0));
        assert_eq!(min_bins_2d(&[(0, 0), (0, 0)], 3, 15, 5), Some(0));
    }

    #[test]
    fn identical_user_plane_items_fill_bins_exactly() {
        // 25 items of user-plane size 3 into capacity 15: five per bin.
        let items = vec![(0u32, 3u32); 25];
        assert_eq!(min_bins_2d(&items, 3, 15, 5), Some(5));
        assert_eq!(min_bins_2d(&items, 3, 15, 4), None);
    }

    #[test]
    fn two_dimensional_coupling_forces_extra_bin() {
        // Control-plane budget is the binding dimension here: three items
        // of (2, 1) against caps (3, 15) cannot share bins pairwise.
        let items = vec![(2, 1), (2, 1), (2, 1)];
        assert_eq!(min_bins_2d(&items, 3, 15, 5), Some(3));
        // Relaxing the control cap lets them share: two per bin at 4,
        // all three in one bin at 6.
        assert_eq!(min_bins_2d(&items, 4, 15, 5), Some(2));
        assert_eq!(min_bins_2d(&items, 6, 15, 5), Some(1));
    }

    #[test]
    fn oversized_item_is_unpackable() {
        assert_eq!(min_bins_2d(&[(4, 0)], 3, 15, 5), None);
        assert_eq!(min_bins_2d(&[(0, 16)], 3, 15, 5), None);
    }

    #[test]
    fn exact_search_beats_first_fit() {
        // First-fit-decreasing on user-plane sizes [8, 7, 6, 5, 4] with
        // capacity 15 opens three bins (8+7, 6+5+4 -> 8+7, 6+5, 4 depending
        // on order); the exact optimum is two (8+7, 6+5+4).
        let items = vec![(0, 8), (0, 7), (0, 6), (0, 5), (0, 4)];
        assert_eq!(min_bins_2d(&items, 0, 15, 5), Some(2));
    }

    #[test]
    fn mixed_bundles_and_loose_items() {
        // One bundle occupying a full control column plus loose user items.
        let items = vec![(3, 15), (0, 3), (0, 3)];
        assert_eq!(min_bins_2d(&items, 3, 15, 5), Some(2));
    }

    #[test]
    fn wavelength_grouping_exact() {
        assert_eq!(min_groups_f64(&[], 26_000.0, 4), Some(0));
        assert_eq!(min_groups_f64(&[1.0, 2.0], 26_000.0, 4), Some(1));
        // Four loads of 13 000 fit pairwise into two wavelengths.
        assert_eq!(
            min_groups_f64(&[13_000.0, 13_000.0, 13_000.0, 13_000.0], 26_000.0, 4),
            Some(2)
        );
        // 3x18k: no two share, so three wavelengths.
        assert_eq!(
            min_groups_f64(&[18_000.0, 18_000.0, 18_000.0], 26_000.0, 4),
            Some(3)
        );
        assert_eq!(min_groups_f64(&[30_000.0], 26_000.0, 4), None);
        assert_eq!(
            min_groups_f64(&[18_000.0, 18_000.0, 18_000.0], 26_000.0, 2),
            None
        );
    }

    #[test]
    fn grouping_respects_capacity_boundary_exactly() {
        assert!(can_group(&[13_000.0, 13_000.0], 26_000.0, 1));
        assert!(!can_group(&[13_000.0, 13_000.1], 26_000.0, 1));
    }

    #[test]
    fn completability_respects_loaded_budget_and_residuals() {
        // Two fresh DUs of capacity (3, 15); items fit in one DU only if
        // the loaded budget allows opening it.
        let residual = [(3, 15), (3, 15)];
        let loaded = [false, false];
        assert!(can_pack_with_state(&[(0, 9), (0, 6)], &residual, &loaded, 1));
        assert!(!can_pack_with_state(&[(0, 9), (0, 7)], &residual, &loaded, 1));
        assert!(can_pack_with_state(&[(0, 9), (0, 7)], &residual, &loaded, 2));
        // A partially consumed DU that is already loaded does not count
        // again toward the budget.
        let residual = [(3, 6), (3, 15)];
        let loaded = [true, false];
        assert!(can_pack_with_state(&[(0, 6)], &residual, &loaded, 1));
        assert!(!can_pack_with_state(&[(0, 7)], &residual, &loaded, 1));
        // Zero-load items never constrain anything.
        assert!(can_pack_with_state(&[(0, 0)], &[(0, 0)], &[false], 0));
    }
}
