//! Macro-tier optimal allocation: best-gain subcarrier assignment and
//! cap-limited water-filling.
//!
//! With the phantom tier silent, each macro subcarrier sees only thermal
//! noise, so the optimal assignment is the per-subcarrier best-gain user
//! and the optimal powers solve a water-filling problem with a per-subcarrier
//! cap. Powers take the form `p_i = clamp(w - noise/h_i, cap_i)` for a common
//! water level `w`; the level is found by bisection so the total spend equals
//! `min(budget, sum of caps)`.

/// Result of ['capped_waterfill'].
#[derive(Debug, Clone, PartialEq)]
pub struct WaterfillResult {
    /// Per-subcarrier transmit powers, watts.
    pub powers: Vec<f64>,
    /// The common water level `w` (reciprocal of the budget multiplier), watts.
    pub water_level: f64,
    /// Total power spent, watts.
    pub budget_used: f64,
}

/// Clamp `x` into `[0, cap]`: `cap` if `x >= cap`, `x` if `0 < x < cap`,
/// else `0`.
#[inline]
pub fn clamp_power(x: f64, cap: f64) -> f64 {
    debug_assert!(cap >= 0.0);
    if x >= cap {
        cap
    } else if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Best-gain user per subcarrier. `gains[k][i]` is user `k`'s gain on
/// subcarrier `i`; ties go to the lowest user index.
pub fn assign_best_gain(gains: &[Vec<f64>]) -> Vec<usize> {
    assert!(!gains.is_empty(), "need at least one user");
    let n_sc = gains[0].len();
    (0..n_sc)
        .map(|i| {
            let mut best = 0usize;
            for k in 1..gains.len() {
                if gains[k][i] > gains[best][i] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Water-filling over parallel channels with per-subcarrier caps.
///
/// `best_gains[i]` is the gain of subcarrier `i`'s assigned user, `noise` the
/// per-subcarrier noise power, `caps[i]` the spectral mask. The returned
/// powers satisfy `0 <= p_i <= cap_i` and sum to `min(budget, sum(caps))`
/// to within 1e-12 of the target.
pub fn capped_waterfill(
    best_gains: &[f64],
    noise: f64,
    budget: f64,
    caps: &[f64],
) -> WaterfillResult {
    assert_eq!(best_gains.len(), caps.len());
    assert!(noise > 0.0, "noise must be positive");
    assert!(budget >= 0.0, "budget must be non-negative");
    assert!(best_gains.iter().all(|&h| h > 0.0), "gains must be positive");
    assert!(caps.iter().all(|&c| c >= 0.0), "caps must be non-negative");

    let n = best_gains.len();
    if n == 0 {
        return WaterfillResult {
            powers: vec![],
            water_level: 0.0,
            budget_used: 0.0,
        };
    }
    let cap_total: f64 = caps.iter().sum();
    let target = budget.min(cap_total);
    let floors: Vec<f64> = best_gains.iter().map(|&h| noise / h).collect();
    if target <= 0.0 {
        let lo = floors.iter().cloned().fold(f64::INFINITY, f64::min);
        return WaterfillResult {
            powers: vec![0.0; n],
            water_level: lo,
            budget_used: 0.0,
        };
    }

    let powers_at = |w: f64| -> Vec<f64> {
        (0..n).map(|i| clamp_power(w - floors[i], caps[i])).collect()
    };
    let spend_at = |w: f64| -> f64 { (0..n).map(|i| clamp_power(w - floors[i], caps[i])).sum() };

    let mut lo = floors.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut hi = floors.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + budget.max(cap_total);
    let mut w = hi;
    for _ in 0..200 {
        w = 0.5 * (lo + hi);
        let s = spend_at(w);
        if (s - target).abs() <= 1e-12 * target.max(1e-300) {
            break;
        }
        if s < target {
            lo = w;
        } else {
            hi = w;
        }
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            // Spend is piecewise linear in w; once the bracket collapses the
            // midpoint is as good as it gets. Take the feasible endpoint.
            w = if spend_at(hi) <= target + 1e-12 * target { hi } else { lo };
            break;
        }
    }
    // The bracket may close on a water level whose spend is a hair above the
    // target (caps make spend_at flat in places). Final pass: if we overshot,
    // lower to the exact crossing by one more sweep.
    let mut powers = powers_at(w);
    let mut used: f64 = powers.iter().sum();
    if used > target {
        // At most one subcarrier is strictly interior at the crossing; scale
        // the interior ones down by the overshoot.
        let overshoot = used - target;
        let interior: Vec<usize> = (0..n)
            .filter(|&i| powers[i] > 0.0 && powers[i] < caps[i])
            .collect();
        if !interior.is_empty() {
            let cut = overshoot / interior.len() as f64;
            for &i in &interior {
                powers[i] = (powers[i] - cut).max(0.0);
            }
            used = powers.iter().sum();
        }
    }
    WaterfillResult {
        powers,
        water_level: w,
        budget_used: used,
    }
}
