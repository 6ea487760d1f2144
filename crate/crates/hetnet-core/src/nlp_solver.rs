//! Projected-gradient solver for the fixed-assignment phantom power problem.
//!
//! Given a subcarrier assignment for every phantom cell (and, on the shared
//! band, a frozen macro allocation), this maximizes the phantom sum rate over
//! the phantom transmit powers subject to per-subcarrier masks, per-cell
//! power budgets, and — on the shared band — the macro minimum-rate
//! guarantee. The box/budget set is handled by exact Euclidean projection;
//! the rate guarantee, which makes the problem nonconvex, by an adaptive
//! quadratic penalty whose weight doubles until the constraint is met to
//! within a small slack. Multi-start covers the nonconvexity: only local
//! optimality is claimed.

use crate::model::{rate_ln, Band, ChannelGains, UserId};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Macro-tier transmission frozen while phantom powers are optimized.
#[derive(Debug, Clone)]
pub struct FixedMacro<'a> {
    /// Per-subcarrier macro user (best-gain assignment).
    pub assignment: &'a [usize],
    /// Per-subcarrier macro transmit power, watts.
    pub powers: &'a [f64],
    /// Macro sum-rate floor, nats/use.
    pub min_rate: f64,
}

/// One instance of the fixed-assignment power problem.
#[derive(Debug, Clone)]
pub struct PowerProblem<'a> {
    pub gains: &'a ChannelGains,
    /// Per phantom cell (index 0 = cell 1), per subcarrier: assigned user.
    pub assignment: &'a [Vec<Option<usize>>],
    /// Present on the shared band only.
    pub fixed_macro: Option<FixedMacro<'a>>,
    /// Per phantom cell power budget, watts.
    pub budgets: &'a [f64],
    /// Per phantom cell per-subcarrier mask, watts.
    pub masks: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Number of cold starts: zeros, half-mask, then uniform random.
    pub restarts: usize,
    /// Projected-gradient iteration cap across penalty rounds.
    pub max_iters: usize,
    /// Stationarity tolerance on the projected-gradient displacement.
    pub grad_tol: f64,
    /// Accepted macro-rate slack, nats.
    pub constraint_slack: f64,
    /// Seed for the random starts.
    pub seed: u64,
    /// Extra start from a previous solution.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iters: 20_000,
            grad_tol: 1e-7,
            constraint_slack: 1e-6,
            seed: 0,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Flat phantom powers, index `(cell-1) * subcarriers + sc`, watts.
    pub powers: Vec<f64>,
    /// Phantom sum rate at the returned powers, nats/use.
    pub objective: f64,
    /// Macro sum rate at the returned powers (None off the shared band).
    pub macro_rate: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub restarts_used: usize,
}

/// Per-subcarrier gain views so the hot loop never walks the full tensor.
struct EvalCtx {
    m: usize,
    n_sc: usize,
    /// Upper bound per variable: the mask where assigned, 0 where not.
    ub: Vec<f64>,
    /// own[v]: gain from cell m to its assigned user (0 where unassigned).
    own: Vec<f64>,
    /// cross[v * m + j]: gain from phantom tx j+1 to the user at slot v.
    cross: Vec<f64>,
    /// Frozen macro interference into the user at slot v (F1 only, else 0).
    macro_into: Vec<f64>,
    /// macro_signal[sc]: macro own-link gain times macro power (F1 only).
    macro_signal: Vec<f64>,
    /// to_macro[v]: gain from phantom tx of slot v to that sc's macro user.
    to_macro: Vec<f64>,
    min_rate: f64,
    noise: f64,
    has_macro: bool,
}

impl EvalCtx {
    fn build(p: &PowerProblem) -> Self {
        let m = p.assignment.len();
        let n_sc = p.gains.subcarriers();
        assert_eq!(m, p.gains.phantom_cells(), "assignment rows != phantom cells");
        assert_eq!(m, p.budgets.len());
        assert_eq!(m, p.masks.len());
        if p.fixed_macro.is_some() {
            assert_eq!(p.gains.band(), Band::F1, "frozen macro only exists on F1");
        }
        let n_vars = m * n_sc;
        let mut ub = vec![0.0; n_vars];
        let mut own = vec![0.0; n_vars];
        let mut cross = vec![0.0; n_vars * m];
        let mut macro_into = vec![0.0; n_vars];
        let mut macro_signal = vec![0.0; n_sc];
        let mut to_macro = vec![0.0; n_vars];

        for (mi, row) in p.assignment.iter().enumerate() {
            assert_eq!(row.len(), n_sc, "assignment row has wrong length");
            let cell = mi + 1;
            for sc in 0..n_sc {
                let v = mi * n_sc + sc;
                if let Some(k) = row[sc] {
                    let user = UserId { cell, k };
                    ub[v] = p.masks[mi];
                    own[v] = p.gains.gain(cell, user, sc);
                    for mj in 0..m {
                        if mj != mi {
                            cross[v * m + mj] = p.gains.gain(mj + 1, user, sc);
                        }
                    }
                    if let Some(fm) = &p.fixed_macro {
                        macro_into[v] = p.gains.gain(0, user, sc) * fm.powers[sc];
                    }
                }
            }
        }
        let mut min_rate = 0.0;
        if let Some(fm) = &p.fixed_macro {
            assert_eq!(fm.assignment.len(), n_sc);
            assert_eq!(fm.powers.len(), n_sc);
            min_rate = fm.min_rate;
            for sc in 0..n_sc {
                let mue = UserId {
                    cell: 0,
                    k: fm.assignment[sc],
                };
                macro_signal[sc] = p.gains.gain(0, mue, sc) * fm.powers[sc];
                for mi in 0..m {
                    to_macro[mi * n_sc + sc] = p.gains.gain(mi + 1, mue, sc);
                }
            }
        }
        Self {
            m,
            n_sc,
            ub,
            own,
            cross,
            macro_into,
            macro_signal,
            to_macro,
            min_rate,
            noise: p.gains.noise_power(),
            has_macro: p.fixed_macro.is_some(),
        }
    }

    /// Phantom sum rate at `x`.
    fn objective(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for sc in 0..self.n_sc {
            for mi in 0..self.m {
                let v = mi * self.n_sc + sc;
                if self.own[v] == 0.0 {
                    continue;
                }
                let mut interf = self.noise + self.macro_into[v];
                for mj in 0..self.m {
                    if mj != mi {
                        interf += self.cross[v * self.m + mj] * x[mj * self.n_sc + sc];
                    }
                }
                total += rate_ln(self.own[v], x[v], interf);
            }
        }
        total
    }

    /// Phantom sum rate and its gradient at `x`.
    fn objective_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for sc in 0..self.n_sc {
            for mi in 0..self.m {
                let v = mi * self.n_sc + sc;
                if self.own[v] == 0.0 {
                    continue;
                }
                let mut interf = self.noise + self.macro_into[v];
                for mj in 0..self.m {
                    if mj != mi {
                        interf += self.cross[v * self.m + mj] * x[mj * self.n_sc + sc];
                    }
                }
                let signal = self.own[v] * x[v];
                total += (1.0 + signal / interf).ln();
                // Own power raises this link's rate; it also degrades every
                // other phantom link sharing the subcarrier.
                grad[v] += self.own[v] / (interf + signal);
                let coupling = signal / (interf * (interf + signal));
                for mj in 0..self.m {
                    if mj != mi {
                        grad[mj * self.n_sc + sc] -= self.cross[v * self.m + mj] * coupling;
                    }
                }
            }
        }
        total
    }

    /// Macro sum rate at `x` under the frozen macro allocation.
    fn macro_rate(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for sc in 0..self.n_sc {
            let mut interf = self.noise;
            for mi in 0..self.m {
                interf += self.to_macro[mi * self.n_sc + sc] * x[mi * self.n_sc + sc];
            }
            total += (1.0 + self.macro_signal[sc] / interf).ln();
        }
        total
    }

    /// Macro sum rate and its gradient with respect to the phantom powers.
    fn macro_rate_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for sc in 0..self.n_sc {
            let mut interf = self.noise;
            for mi in 0..self.m {
                interf += self.to_macro[mi * self.n_sc + sc] * x[mi * self.n_sc + sc];
            }
            let signal = self.macro_signal[sc];
            total += (1.0 + signal / interf).ln();
            let coupling = signal / (interf * (interf + signal));
            for mi in 0..self.m {
                grad[mi * self.n_sc + sc] -= self.to_macro[mi * self.n_sc + sc] * coupling;
            }
        }
        total
    }
}

/// Phantom sum rate and its gradient at `powers` (flat, `(cell-1)*n_sc + sc`).
pub fn objective_and_gradient(problem: &PowerProblem, powers: &[f64]) -> (f64, Vec<f64>) {
    let ctx = EvalCtx::build(problem);
    let mut grad = vec![0.0; powers.len()];
    let value = ctx.objective_grad(powers, &mut grad);
    (value, grad)
}

/// Macro sum rate at `powers` under the problem's frozen macro allocation.
pub fn macro_rate(problem: &PowerProblem, powers: &[f64]) -> f64 {
    EvalCtx::build(problem).macro_rate(powers)
}

/// Euclidean projection of `x` onto `{0 <= x_i <= ub_i, sum(x) <= budget}`.
///
/// The KKT form of the projection is `clamp(x_i - theta, 0, ub_i)` with a
/// single shift `theta >= 0`, zero when the plain box clamp already meets
/// the budget. The shift is found by bisection on the original coordinates;
/// clamping before shifting would destroy their ordering.
pub fn project_box_budget(x: &mut [f64], ub: &[f64], budget: f64) {
    debug_assert_eq!(x.len(), ub.len());
    let spend = |theta: f64| -> f64 {
        x.iter()
            .zip(ub)
            .map(|(&xi, &u)| (xi - theta).clamp(0.0, u))
            .sum()
    };
    let mut theta = 0.0;
    if spend(0.0) > budget {
        let mut lo = 0.0;
        let mut hi = x.iter().cloned().fold(0.0, f64::max);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if spend(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        theta = hi;
    }
    for (xi, &u) in x.iter_mut().zip(ub) {
        *xi = (*xi - theta).clamp(0.0, u);
    }
}

struct Candidate {
    feasible: bool,
    objective: f64,
    powers: Vec<f64>,
    stationary: bool,
}

/// Solves the phantom power problem from several starts and returns the best
/// feasible local maximizer found.
///
/// The all-zero vector is always feasible once the shared-band feasibility
/// gate has passed, so the returned objective is never below the zero
/// baseline. A report with `converged: false` means no start reached both
/// stationarity and the rate guarantee; its payload is the best iterate
/// seen, never a fabricated optimum.
pub fn solve_phantom_powers(problem: &PowerProblem, opts: &SolveOptions) -> SolveReport {
    let ctx = EvalCtx::build(problem);
    let n_vars = ctx.m * ctx.n_sc;
    let zeros = vec![0.0; n_vars];

    if n_vars == 0 || ctx.ub.iter().all(|&u| u == 0.0) {
        let macro_rate = ctx.has_macro.then(|| ctx.macro_rate(&zeros));
        return SolveReport {
            powers: zeros,
            objective: 0.0,
            macro_rate,
            converged: true,
            iterations: 0,
            restarts_used: 0,
        };
    }

    let mut starts: Vec<Vec<f64>> = Vec::new();
    if let Some(w) = &opts.warm_start {
        assert_eq!(w.len(), n_vars, "warm start has wrong dimension");
        starts.push(w.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for r in 0..opts.restarts {
        starts.push(match r {
            0 => zeros.clone(),
            1 => ctx.ub.iter().map(|&u| 0.5 * u).collect(),
            _ => ctx.ub.iter().map(|&u| rng.random_range(0.0..=u)).collect(),
        });
    }
    let restarts_used = starts.len();

    let mut best: Option<Candidate> = None;
    let mut total_iters = 0usize;
    for mut x in starts {
        project_all(&mut x, &ctx.ub, problem.budgets, ctx.n_sc);
        let (stationary, iters) = ascend(&ctx, &mut x, problem.budgets, opts);
        total_iters += iters;
        let objective = ctx.objective(&x);
        let feasible = !ctx.has_macro
            || ctx.macro_rate(&x) >= ctx.min_rate - opts.constraint_slack;
        let cand = Candidate {
            feasible,
            objective,
            powers: x,
            stationary,
        };
        let better = match &best {
            None => true,
            Some(b) => {
                (cand.feasible && !b.feasible)
                    || (cand.feasible == b.feasible && cand.objective > b.objective)
            }
        };
        if better {
            best = Some(cand);
        }
    }

    let best = best.expect("at least one start");
    if !best.feasible {
        // Zero phantom power is the guaranteed-feasible fallback.
        let macro_rate = ctx.has_macro.then(|| ctx.macro_rate(&zeros));
        return SolveReport {
            powers: zeros,
            objective: 0.0,
            macro_rate,
            converged: false,
            iterations: total_iters,
            restarts_used,
        };
    }
    let macro_rate = ctx.has_macro.then(|| ctx.macro_rate(&best.powers));
    SolveReport {
        powers: best.powers,
        objective: best.objective,
        macro_rate,
        converged: best.stationary,
        iterations: total_iters,
        restarts_used,
    }
}

fn project_all(x: &mut [f64], ub: &[f64], budgets: &[f64], n_sc: usize) {
    for (mi, &budget) in budgets.iter().enumerate() {
        let lo = mi * n_sc;
        project_box_budget(&mut x[lo..lo + n_sc], &ub[lo..lo + n_sc], budget);
    }
}

/// Projected gradient ascent with Armijo backtracking on the penalized
/// objective, doubling the penalty weight until the rate guarantee holds.
fn ascend(ctx: &EvalCtx, x: &mut Vec<f64>, budgets: &[f64], opts: &SolveOptions) -> (bool, usize) {
    let n = x.len();
    let mut rho = 1.0f64;
    let mut iters = 0usize;

    let mut grad = vec![0.0; n];
    let mut macro_grad = vec![0.0; n];

    let penalized = |x: &[f64], rho: f64| -> f64 {
        let mut v = ctx.objective(x);
        if ctx.has_macro {
            let viol = (ctx.min_rate - ctx.macro_rate(x)).max(0.0);
            v -= rho * viol * viol;
        }
        v
    };

    for _round in 0..40 {
        let mut step_hint = 1.0f64;
        let mut stationary = false;
        // Previous iterate and gradient for the spectral step size, and the
        // recent objective window for the nonmonotone acceptance rule.
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut recent: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
        while iters < opts.max_iters {
            iters += 1;
            let mut f = ctx.objective_grad(x, &mut grad);
            if ctx.has_macro {
                let r0 = ctx.macro_rate_grad(x, &mut macro_grad);
                let viol = (ctx.min_rate - r0).max(0.0);
                if viol > 0.0 {
                    f -= rho * viol * viol;
                    for (g, mg) in grad.iter_mut().zip(&macro_grad) {
                        *g += 2.0 * rho * viol * mg;
                    }
                }
            }

            // Stationarity: projected-gradient norm, taken as the small-step
            // limit of the projection arc so active constraints cancel the
            // outward gradient components exactly.
            let probe_step = 1e-8;
            let mut probe: Vec<f64> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| xi + probe_step * gi)
                .collect();
            project_all(&mut probe, &ctx.ub, budgets, ctx.n_sc);
            let residual = probe
                .iter()
                .zip(x.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                / probe_step;
            if residual <= opts.grad_tol * (1.0 + f.abs()) {
                stationary = true;
                break;
            }

            // Spectral (Barzilai-Borwein) trial step, safeguarded by the
            // Armijo backtracking below. Plain unit steps zig-zag badly on
            // these ill-conditioned rate surfaces.
            let mut alpha = match &prev {
                Some((px, pg)) => {
                    let mut ss = 0.0;
                    let mut sy = 0.0;
                    for i in 0..n {
                        let s = x[i] - px[i];
                        ss += s * s;
                        sy += s * (pg[i] - grad[i]);
                    }
                    if sy > 0.0 && ss > 0.0 {
                        (ss / sy).clamp(1e-12, 1e12)
                    } else {
                        step_hint
                    }
                }
                None => step_hint,
            };
            prev = Some((x.clone(), grad.clone()));
            recent.push_back(f);
            if recent.len() > 10 {
                recent.pop_front();
            }
            // Spectral steps need the nonmonotone acceptance rule: compare
            // against the worst of the last few values, not the current one.
            let f_ref = recent.iter().cloned().fold(f, f64::min);

            // Armijo backtracking along the projection arc.
            let mut accepted = false;
            for _ in 0..80 {
                let mut xa: Vec<f64> = x
                    .iter()
                    .zip(&grad)
                    .map(|(xi, gi)| xi + alpha * gi)
                    .collect();
                project_all(&mut xa, &ctx.ub, budgets, ctx.n_sc);
                let inner: f64 = grad
                    .iter()
                    .zip(xa.iter().zip(x.iter()))
                    .map(|(g, (a, b))| g * (a - b))
                    .sum();
                if inner <= 0.0 {
                    break;
                }
                if penalized(&xa, rho) >= f_ref + 1e-4 * inner {
                    *x = xa;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                stationary = true;
                break;
            }
            step_hint = (alpha * 4.0).min(1e12);
        }

        if !ctx.has_macro {
            return (stationary, iters);
        }
        let slack = ctx.macro_rate(x) - ctx.min_rate;
        if slack >= -opts.constraint_slack {
            return (stationary, iters);
        }
        if iters >= opts.max_iters {
            return (false, iters);
        }
        rho *= 2.0;
    }
    (false, iters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelGains;
    use crate::waterfill::capped_waterfill;

    fn gains_f1(
        m: usize,
        users: &[usize],
        n_sc: usize,
        noise: f64,
        f: impl FnMut(usize, UserId, usize) -> f64,
    ) -> ChannelGains {
        ChannelGains::from_fn(Band::F1, m, users, n_sc, noise, f).unwrap()
    }

    fn single_user_assignment(m: usize, n_sc: usize) -> Vec<Vec<Option<usize>>> {
        vec![vec![Some(0); n_sc]; m]
    }

    #[test]
    fn gradient_at_zero_is_gain_over_noise() {
        let gains = gains_f1(1, &[1, 1], 1, 1.0, |_, _, _| 1.0);
        let assignment = single_user_assignment(1, 1);
        let problem = PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: None,
            budgets: &[1.0],
            masks: &[1.0],
        };
        let (value, grad) = objective_and_gradient(&problem, &[0.0]);
        assert_eq!(value, 0.0);
        assert!((grad[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..25 {
            let m = rng.random_range(1..=3usize);
            let n_sc = rng.random_range(1..=4usize);
            let users = vec![2; m + 1];
            let mut gain_rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>());
            let gains = gains_f1(m, &users, n_sc, 0.31, |_, _, _| {
                10f64.powf(gain_rng.random_range(-2.0..1.0))
            });
            let assignment: Vec<Vec<Option<usize>>> = (0..m)
                .map(|_| {
                    (0..n_sc)
                        .map(|_| {
                            if rng.random_bool(0.85) {
                                Some(rng.random_range(0..2usize))
                            } else {
                                None
                            }
                        })
                        .collect()
                })
                .collect();
            let budgets = vec![2.0; m];
            let masks = vec![0.5; m];
            let macro_assign: Vec<usize> = (0..n_sc).map(|_| rng.random_range(0..2usize)).collect();
            let macro_powers: Vec<f64> = (0..n_sc).map(|_| rng.random_range(0.0..1.0)).collect();
            let problem = PowerProblem {
                gains: &gains,
                assignment: &assignment,
                fixed_macro: Some(FixedMacro {
                    assignment: &macro_assign,
                    powers: &macro_powers,
                    min_rate: 0.0,
                }),
                budgets: &budgets,
                masks: &masks,
            };
            let x: Vec<f64> = (0..m * n_sc).map(|_| rng.random_range(0.0..0.5)).collect();
            let (_, grad) = objective_and_gradient(&problem, &x);
            let ctx = EvalCtx::build(&problem);
            for v in 0..x.len() {
                let h = 1e-6 * (1.0 + x[v].abs());
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[v] += h;
                xm[v] -= h;
                let fd = (ctx.objective(&xp) - ctx.objective(&xm)) / (2.0 * h);
                let scale = grad[v].abs().max(fd.abs()).max(1e-8);
                assert!(
                    (grad[v] - fd).abs() / scale < 1e-5,
                    "grad[{v}] = {} vs fd {fd}",
                    grad[v]
                );
            }
        }
    }

    #[test]
    fn symmetric_cells_get_symmetric_gradients() {
        let gains = gains_f1(2, &[1, 1, 1], 2, 1.0, |tx, user, _| {
            if tx == user.cell {
                2.0
            } else {
                0.25
            }
        });
        let assignment = single_user_assignment(2, 2);
        let problem = PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: None,
            budgets: &[1.0, 1.0],
            masks: &[0.5, 0.5],
        };
        let x = vec![0.3, 0.1, 0.3, 0.1];
        let (_, grad) = objective_and_gradient(&problem, &x);
        assert!((grad[0] - grad[2]).abs() < 1e-12);
        assert!((grad[1] - grad[3]).abs() < 1e-12);
    }

    #[test]
    fn empty_assignment_returns_zeros() {
        let gains = gains_f1(1, &[1, 1], 2, 1.0, |_, _, _| 1.0);
        let assignment = vec![vec![None, None]];
        let problem = PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: None,
            budgets: &[1.0],
            masks: &[0.5],
        };
        let report = solve_phantom_powers(&problem, &SolveOptions::default());
        assert_eq!(report.powers, vec![0.0, 0.0]);
        assert_eq!(report.objective, 0.0);
        assert!(report.converged);
    }

    #[test]
    fn unconstrained_single_link_hits_mask() {
        // Rate is monotone in own power; with no rate floor the cap binds.
        let gains = gains_f1(1, &[1, 1], 1, 1.0, |_, _, _| 1.0);
        let assignment = single_user_assignment(1, 1);
        let macro_assign = [0usize];
        let macro_powers = [1.0];
        let problem = PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: Some(FixedMacro {
                assignment: &macro_assign,
                powers: &macro_powers,
                min_rate: 0.0,
            }),
            budgets: &[10.0],
            masks: &[0.7],
        };
        let report = solve_phantom_powers(&problem, &SolveOptions::default());
        assert!(
            (report.powers[0] - 0.7).abs() < 1e-6,
            "power {}",
            report.powers[0]
        );
        assert!(report.converged);
    }

    /// 1-D grid oracle: the best phantom power in [0, mask] keeping the macro
    /// rate above the floor, rates evaluated exactly as the model does.
    fn binding_constraint_oracle(
        g_own: f64,
        g_macro_sig: f64,
        g_to_macro: f64,
        g_macro_into: f64,
        noise: f64,
        p0: f64,
        mask: f64,
        min_rate: f64,
    ) -> (f64, f64) {
        let n = 100_000;
        let mut best = (0.0, f64::NEG_INFINITY);
        for j in 0..=n {
            let q = mask * j as f64 / n as f64;
            let macro_rate = rate_ln(g_macro_sig, p0, noise + g_to_macro * q);
            if macro_rate < min_rate {
                continue;
            }
            let obj = rate_ln(g_own, q, noise + g_macro_into * p0);
            if obj > best.1 {
                best = (q, obj);
            }
        }
        best
    }

    #[test]
    fn binding_macro_constraint_matches_grid_oracle() {
        let (g_own, g_macro_sig, g_to_macro, g_macro_into) = (2.0, 1.5, 0.8, 0.3);
        let noise = 0.2;
        let p0 = 1.0;
        let mask = 1.0;
        // Floor strictly between the full-mask and zero-phantom macro rates,
        // so the constraint genuinely binds.
        let r_full = rate_ln(g_macro_sig, p0, noise + g_to_macro * mask);
        let r_zero = rate_ln(g_macro_sig, p0, noise);
        let min_rate = 0.5 * (r_full + r_zero);
        let (oracle_q, oracle_obj) = binding_constraint_oracle(
            g_own,
            g_macro_sig,
            g_to_macro,
            g_macro_into,
            noise,
            p0,
            mask,
            min_rate,
        );
        assert!(oracle_q > 0.0 && oracle_q < mask, "constraint must bind");

        let gains = gains_f1(1, &[1, 1], 1, noise, |tx, user, _| match (tx, user.cell) {
            (1, 1) => g_own,
            (0, 0) => g_macro_sig,
            (1, 0) => g_to_macro,
            (0, 1) => g_macro_into,
            _ => unreachable!(),
        });
        let assignment = single_user_assignment(1, 1);
        let macro_assign = [0usize];
        let macro_powers = [p0];
        let problem = PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: Some(FixedMacro {
                assignment: &macro_assign,
                powers: &macro_powers,
                min_rate,
            }),
            budgets: &[10.0],
            masks: &[mask],
        };
        let report = solve_phantom_powers(&problem, &SolveOptions::default());
        assert!(report.converged);
        assert!(
            (report.objective - oracle_obj).abs() <= 1e-3 * oracle_obj.abs(),
            "objective {} vs oracle {oracle_obj} (q = {} vs {oracle_q})",
            report.objective,
            report.powers[0]
        );
        assert!(report.macro_rate.unwrap() >= min_rate - 1e-6);
    }

    #[test]
    fn no_cross_interference_matches_waterfill_per_cell() {
        let n_sc = 4;
        let own = [[1.9, 0.6, 1.1, 0.3], [0.8, 1.4, 0.5, 2.2]];
        let noise = 0.25;
        let gains = gains_f1(2, &[1, 1, 1], n_sc, noise, |tx, user, sc| {
            if tx == user.cell && tx >= 1 {
                own[tx - 1][sc]
            } else {
                1e-30
            }
        });
        let assignment = single_user_assignment(2, n_sc);
        let macro_assign = [0usize; 4];
        let macro_powers = [0.0; 4];
        let budgets = [1.5, 1.5];
        let masks = [0.6, 0.6];
        let problem = PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: Some(FixedMacro {
                assignment: &macro_assign,
                powers: &macro_powers,
                min_rate: 0.0,
            }),
            budgets: &budgets,
            masks: &masks,
        };
        let report = solve_phantom_powers(&problem, &SolveOptions::default());
        let mut wf_obj = 0.0;
        for mi in 0..2 {
            let r = capped_waterfill(&own[mi], noise, budgets[mi], &[masks[mi]; 4]);
            wf_obj += (0..n_sc)
                .map(|sc| rate_ln(own[mi][sc], r.powers[sc], noise))
                .sum::<f64>();
        }
        assert!(
            (report.objective - wf_obj).abs() <= 1e-4 * wf_obj,
            "solver {} vs waterfill {wf_obj}",
            report.objective
        );
    }

    #[test]
    fn box_constraints_hold_exactly() {
        let mut gain_rng = ChaCha8Rng::seed_from_u64(17);
        let gains = gains_f1(2, &[2, 2, 2], 3, 0.4, |_, _, _| {
            10f64.powf(gain_rng.random_range(-1.5..0.5))
        });
        let assignment = vec![vec![Some(0), Some(1), None], vec![Some(1), None, Some(0)]];
        let budgets = [0.9, 0.9];
        let masks = [0.5, 0.5];
        let macro_assign = [0, 1, 0];
        let macro_powers = [0.4, 0.2, 0.1];
        let problem = PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: Some(FixedMacro {
                assignment: &macro_assign,
                powers: &macro_powers,
                min_rate: 0.1,
            }),
            budgets: &budgets,
            masks: &masks,
        };
        let report = solve_phantom_powers(&problem, &SolveOptions::default());
        for (mi, chunk) in report.powers.chunks(3).enumerate() {
            let total: f64 = chunk.iter().sum();
            assert!(total <= budgets[mi] + 1e-9);
            for (sc, &p) in chunk.iter().enumerate() {
                assert!(p >= 0.0);
                let cap = if assignment[mi][sc].is_some() {
                    masks[mi]
                } else {
                    0.0
                };
                assert!(p <= cap + 1e-12, "cell {mi} sc {sc}: {p} > {cap}");
            }
        }
        assert!(report.objective >= 0.0);
    }

    #[test]
    fn projection_respects_budget_and_box() {
        let mut x = vec![0.9, 0.9, 0.9, -0.3];
        let ub = vec![1.0, 0.5, 1.0, 1.0];
        project_box_budget(&mut x, &ub, 1.0);
        let total: f64 = x.iter().sum();
        assert!(total <= 1.0 + 1e-9);
        for (xi, u) in x.iter().zip(&ub) {
            assert!(*xi >= 0.0 && xi <= u);
        }
    }
}
