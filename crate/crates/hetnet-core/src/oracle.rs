//! Brute-force reference solvers for desk-scale instances.
//!
//! These enumerate every subcarrier assignment and a uniform power grid per
//! (cell, subcarrier) slot, keeping the exact maximizer over the enumerated
//! set. They exist as independent ground truth for the iterative allocators
//! and refuse instances beyond their budget rather than silently truncating.
//!
//! When no constraint couples the subcarriers (no macro rate filter and the
//! per-cell budget cannot bind because `subcarriers * mask <= budget`), the
//! grid maximization decomposes exactly into one joint grid per subcarrier,
//! which cuts the enumeration from `levels^(M*N)` to `N * levels^M` without
//! changing the result.

use crate::model::{rate_ln, Band, ChannelGains, NetworkConfig, UserId};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "enumeration budget exceeded: {assignments} assignments (max {max_assignments}), \
         {vars} power variables (max {max_vars})"
    )]
    BudgetExceeded {
        assignments: u128,
        max_assignments: usize,
        vars: usize,
        max_vars: usize,
    },
}

/// Enumeration limits. Exceeding any of them is a refusal, never truncation.
#[derive(Debug, Clone)]
pub struct OracleBudget {
    pub max_assignments: usize,
    /// Uniform grid levels per power variable over [0, mask].
    pub levels: usize,
    /// Max jointly-enumerated power variables.
    pub max_vars: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_assignments: 4096,
            levels: 64,
            max_vars: 6,
        }
    }
}

/// Frozen macro tier for shared-band problems: its rate floor filters the
/// phantom power grid.
#[derive(Debug, Clone)]
pub struct FixedMacroOracle<'a> {
    pub assignment: &'a [usize],
    pub powers: &'a [f64],
    pub min_rate: f64,
}

/// One band problem for the oracle. `fixed_macro` present means shared band.
#[derive(Debug, Clone)]
pub struct BandProblem<'a> {
    pub gains: &'a ChannelGains,
    pub cfg: &'a NetworkConfig,
    pub fixed_macro: Option<FixedMacroOracle<'a>>,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// `assignment[cell-1][sc]` = user index.
    pub assignment: Vec<Vec<usize>>,
    /// `powers[cell-1][sc]`, watts.
    pub powers: Vec<Vec<f64>>,
    /// Phantom sum rate, nats/use.
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub enum OracleOutcome {
    Optimal(OracleSolution),
    /// No grid point satisfies the macro rate floor.
    Infeasible,
}

struct Instance<'a> {
    problem: &'a BandProblem<'a>,
    m: usize,
    n_sc: usize,
    masks: Vec<f64>,
    budgets: Vec<f64>,
    noise: f64,
}

impl<'a> Instance<'a> {
    fn new(problem: &'a BandProblem<'a>) -> Self {
        let cfg = problem.cfg;
        let m = cfg.phantom_cells;
        let n_sc = match problem.gains.band() {
            Band::F1 => cfg.subcarriers_f1,
            Band::F2 => cfg.subcarriers_f2,
        };
        assert_eq!(problem.gains.subcarriers(), n_sc);
        if problem.fixed_macro.is_some() {
            assert_eq!(problem.gains.band(), Band::F1);
        }
        Self {
            problem,
            m,
            n_sc,
            masks: cfg.power_mask[1..].to_vec(),
            budgets: cfg.power_budget[1..].to_vec(),
            noise: cfg.noise_power,
        }
    }

    fn grid_value(&self, mi: usize, level: usize, levels: usize) -> f64 {
        if levels <= 1 {
            return 0.0;
        }
        self.masks[mi] * level as f64 / (levels - 1) as f64
    }

    /// Phantom sum rate on one subcarrier at the given per-cell powers.
    fn subcarrier_objective(
        &self,
        assignment: &[Vec<usize>],
        sc: usize,
        powers: &[f64],
    ) -> f64 {
        let gains = self.problem.gains;
        let mut total = 0.0;
        for mi in 0..self.m {
            let cell = mi + 1;
            let user = UserId {
                cell,
                k: assignment[mi][sc],
            };
            let mut interf = self.noise;
            for mj in 0..self.m {
                if mj != mi {
                    interf += gains.gain(mj + 1, user, sc) * powers[mj];
                }
            }
            if let Some(fm) = &self.problem.fixed_macro {
                interf += gains.gain(0, user, sc) * fm.powers[sc];
            }
            total += rate_ln(gains.gain(cell, user, sc), powers[mi], interf);
        }
        total
    }

    /// Macro sum rate under per-(cell, sc) phantom powers (shared band only).
    fn macro_rate(&self, powers: &[Vec<f64>]) -> f64 {
        let fm = self.problem.fixed_macro.as_ref().expect("shared band");
        let gains = self.problem.gains;
        let mut total = 0.0;
        for sc in 0..self.n_sc {
            let mue = UserId {
                cell: 0,
                k: fm.assignment[sc],
            };
            let mut interf = self.noise;
            for mi in 0..self.m {
                interf += gains.gain(mi + 1, mue, sc) * powers[mi][sc];
            }
            total += rate_ln(gains.gain(0, mue, sc), fm.powers[sc], interf);
        }
        total
    }

    /// True when per-subcarrier decomposition is exact: no macro filter and
    /// no cell budget can bind at any grid point.
    fn decomposable(&self) -> bool {
        self.problem.fixed_macro.is_none()
            && (0..self.m)
                .all(|mi| self.n_sc as f64 * self.masks[mi] <= self.budgets[mi] + 1e-12)
    }
}

/// Exhaustive maximization over the power grid at a fixed assignment.
pub fn grid_power_search(
    problem: &BandProblem,
    assignment: &[Vec<usize>],
    budget: &OracleBudget,
) -> Result<OracleOutcome, OracleError> {
    let inst = Instance::new(problem);
    check_power_budget(&inst, budget)?;
    Ok(grid_power_search_inner(&inst, assignment, budget))
}

fn check_power_budget(inst: &Instance, budget: &OracleBudget) -> Result<(), OracleError> {
    let vars = if inst.decomposable() {
        inst.m
    } else {
        inst.m * inst.n_sc
    };
    if vars > budget.max_vars {
        return Err(OracleError::BudgetExceeded {
            assignments: 1,
            max_assignments: budget.max_assignments,
            vars,
            max_vars: budget.max_vars,
        });
    }
    Ok(())
}

fn grid_power_search_inner(
    inst: &Instance,
    assignment: &[Vec<usize>],
    budget: &OracleBudget,
) -> OracleOutcome {
    let m = inst.m;
    let n_sc = inst.n_sc;
    let levels = budget.levels;

    if inst.decomposable() {
        // Exact per-subcarrier maximization: a joint grid over the M cells.
        let mut powers = vec![vec![0.0; n_sc]; m];
        let mut objective = 0.0;
        let mut level = vec![0usize; m];
        for sc in 0..n_sc {
            let mut best = (f64::NEG_INFINITY, vec![0.0; m]);
            level.iter_mut().for_each(|l| *l = 0);
            loop {
                let p: Vec<f64> = (0..m)
                    .map(|mi| inst.grid_value(mi, level[mi], levels))
                    .collect();
                let obj = inst.subcarrier_objective(assignment, sc, &p);
                if obj > best.0 {
                    best = (obj, p);
                }
                // Odometer over the per-cell levels.
                let mut digit = 0;
                loop {
                    if digit == m {
                        break;
                    }
                    level[digit] += 1;
                    if level[digit] < levels {
                        break;
                    }
                    level[digit] = 0;
                    digit += 1;
                }
                if digit == m {
                    break;
                }
            }
            objective += best.0;
            for mi in 0..m {
                powers[mi][sc] = best.1[mi];
            }
        }
        return OracleOutcome::Optimal(OracleSolution {
            assignment: assignment.to_vec(),
            powers,
            objective,
        });
    }

    // Joint grid over every (cell, subcarrier) with budget and rate filters.
    let vars = m * n_sc;
    let mut level = vec![0usize; vars];
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut any_feasible = false;
    loop {
        let mut powers = vec![vec![0.0; n_sc]; m];
        for v in 0..vars {
            powers[v / n_sc][v % n_sc] = inst.grid_value(v / n_sc, level[v], levels);
        }
        let budgets_ok = (0..m).all(|mi| {
            powers[mi].iter().sum::<f64>() <= inst.budgets[mi] + 1e-12
        });
        if budgets_ok {
            let rate_ok = match &inst.problem.fixed_macro {
                Some(fm) => inst.macro_rate(&powers) >= fm.min_rate,
                None => true,
            };
            if rate_ok {
                any_feasible = true;
                let obj: f64 = (0..n_sc)
                    .map(|sc| {
                        let p: Vec<f64> = (0..m).map(|mi| powers[mi][sc]).collect();
                        inst.subcarrier_objective(assignment, sc, &p)
                    })
                    .sum();
                if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                    best = Some((obj, powers));
                }
            }
        }
        let mut digit = 0;
        loop {
            if digit == vars {
                break;
            }
            level[digit] += 1;
            if level[digit] < levels {
                break;
            }
            level[digit] = 0;
            digit += 1;
        }
        if digit == vars {
            break;
        }
    }
    if !any_feasible {
        return OracleOutcome::Infeasible;
    }
    let (objective, powers) = best.unwrap();
    OracleOutcome::Optimal(OracleSolution {
        assignment: assignment.to_vec(),
        powers,
        objective,
    })
}

/// Exhaustive search over every assignment and the power grid.
pub fn brute_force(
    problem: &BandProblem,
    budget: &OracleBudget,
) -> Result<OracleOutcome, OracleError> {
    let inst = Instance::new(problem);
    let cfg = problem.cfg;
    let m = inst.m;
    let n_sc = inst.n_sc;

    let mut assignments_count: u128 = 1;
    for mi in 0..m {
        let k = cfg.users_per_cell[mi + 1] as u128;
        for _ in 0..n_sc {
            assignments_count = assignments_count.saturating_mul(k);
        }
    }
    let vars = if inst.decomposable() { m } else { m * n_sc };
    if assignments_count > budget.max_assignments as u128 || vars > budget.max_vars {
        return Err(OracleError::BudgetExceeded {
            assignments: assignments_count,
            max_assignments: budget.max_assignments,
            vars,
            max_vars: budget.max_vars,
        });
    }

    let mut assignment = vec![vec![0usize; n_sc]; m];
    let mut best: Option<OracleSolution> = None;
    let mut all_infeasible = true;
    loop {
        match grid_power_search_inner(&inst, &assignment, budget) {
            OracleOutcome::Optimal(sol) => {
                all_infeasible = false;
                if best.as_ref().is_none_or(|b| sol.objective > b.objective) {
                    best = Some(sol);
                }
            }
            OracleOutcome::Infeasible => {}
        }
        // Odometer over the (cell, subcarrier) user slots.
        let mut slot = 0;
        let total_slots = m * n_sc;
        loop {
            if slot == total_slots {
                break;
            }
            let (mi, sc) = (slot / n_sc, slot % n_sc);
            assignment[mi][sc] += 1;
            if assignment[mi][sc] < cfg.users_per_cell[mi + 1] {
                break;
            }
            assignment[mi][sc] = 0;
            slot += 1;
        }
        if slot == total_slots {
            break;
        }
    }
    if all_infeasible {
        return Ok(OracleOutcome::Infeasible);
    }
    Ok(OracleOutcome::Optimal(best.unwrap()))
}
