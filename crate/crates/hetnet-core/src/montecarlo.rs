//! Seeded Monte Carlo experiment driver: independent trials, paired
//! rate-floor sweeps, convergence traces, and the solver comparison.
//!
//! Trials derive their seeds from a master seed, run independently (and in
//! parallel, capped by the `HETNET_THREADS` environment variable), and are
//! aggregated by a deterministic in-order reduction, so every result is
//! byte-reproducible from the master seed alone.

use crate::channel::{FadingMode, PropagationParams};
use crate::f1_allocator::{self, F1Options, F1Outcome, GateOutcome};
use crate::f2_allocator::{self, F2Options, F2Result, IterStats};
use crate::model::{throughput, Allocation, Band, NetworkConfig, RateReport};
use crate::nlp_solver::{self, PowerProblem, SolveOptions};
use crate::scenario::{self, Preset, PresetParams};
use rayon::prelude::*;
use std::time::Instant;

/// Everything one experiment needs: scenario geometry, network constraints,
/// propagation constants, and solver settings.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub geometry: PresetParams,
    pub network: NetworkConfig,
    pub propagation: PropagationParams,
    pub fading: FadingMode,
    pub f1_opts: F1Options,
    pub f2_opts: F2Options,
}

impl ExperimentConfig {
    /// Preset defaults with a given macro rate floor.
    pub fn from_preset(preset: Preset, min_macro_rate: f64) -> Self {
        let geometry = preset.params();
        Self {
            network: geometry.network_config(min_macro_rate),
            preset,
            geometry,
            propagation: PropagationParams::default(),
            fading: FadingMode::PerSubcarrier,
            f1_opts: F1Options::default(),
            f2_opts: F2Options::default(),
        }
    }

    pub fn with_min_macro_rate(&self, r: f64) -> Self {
        let mut c = self.clone();
        c.network.min_macro_rate = r;
        c
    }
}

/// SplitMix64 step: decorrelates per-trial seeds from the master seed.
pub fn trial_seed(master_seed: u64, trial: usize) -> u64 {
    let mut z = master_seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One trial's full outcome.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub f1: F1Outcome,
    pub f2: F2Result,
    /// Rates recomputed from the shared-band allocation (None when the
    /// floor was infeasible and no allocation exists).
    pub f1_rates: Option<RateReport>,
    pub f2_rates: RateReport,
    /// Shared-band outer iterations (0 on gate short-circuits).
    pub f1_iterations: usize,
    pub f2_iterations: usize,
    pub f1_seconds: f64,
    pub f2_seconds: f64,
}

impl TrialResult {
    pub fn gate_label(&self) -> &'static str {
        match &self.f1 {
            F1Outcome::Gate(GateOutcome::Infeasible { .. }) => "infeasible",
            F1Outcome::Gate(GateOutcome::MacroOnly { .. }) => "macro_only",
            F1Outcome::Gate(GateOutcome::Proceed { .. }) => "proceed",
            F1Outcome::Solved(_) => "solved",
        }
    }

    pub fn infeasible(&self) -> bool {
        matches!(self.f1, F1Outcome::Gate(GateOutcome::Infeasible { .. }))
    }

    pub fn converged(&self) -> bool {
        let f1_ok = match &self.f1 {
            F1Outcome::Gate(_) => true,
            F1Outcome::Solved(r) => r.converged,
        };
        f1_ok && self.f2.converged
    }

    /// Phantom sum rate on the shared band (0 for short-circuits).
    pub fn phantom_rate_f1(&self) -> f64 {
        self.f1_rates.as_ref().map_or(0.0, |r| r.phantom_total)
    }

    pub fn phantom_rate_f2(&self) -> f64 {
        self.f2_rates.phantom_total
    }

    /// Macro sum rate on the shared band (0 when infeasible: no transmission
    /// plan exists).
    pub fn macro_rate_f1(&self) -> f64 {
        self.f1_rates.as_ref().map_or(0.0, |r| r.macro_total)
    }
}

/// Mean plus 95% normal-approximation confidence half-width.
fn mean_ci(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

/// Aggregate over a batch of trials. Means are recomputable from the stored
/// trial list; nothing is accumulated behind its back.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub trials: Vec<TrialResult>,
    pub mean_phantom_f1: f64,
    pub ci_phantom_f1: f64,
    pub mean_phantom_f2: f64,
    pub ci_phantom_f2: f64,
    pub mean_macro_f1: f64,
    pub ci_macro_f1: f64,
    pub infeasible_trials: usize,
    pub unconverged_trials: usize,
}

impl Aggregate {
    fn from_trials(trials: Vec<TrialResult>) -> Self {
        let f1: Vec<f64> = trials.iter().map(|t| t.phantom_rate_f1()).collect();
        let f2: Vec<f64> = trials.iter().map(|t| t.phantom_rate_f2()).collect();
        let macro_f1: Vec<f64> = trials.iter().map(|t| t.macro_rate_f1()).collect();
        let (mean_phantom_f1, ci_phantom_f1) = mean_ci(&f1);
        let (mean_phantom_f2, ci_phantom_f2) = mean_ci(&f2);
        let (mean_macro_f1, ci_macro_f1) = mean_ci(&macro_f1);
        let infeasible_trials = trials.iter().filter(|t| t.infeasible()).count();
        let unconverged_trials = trials.iter().filter(|t| !t.converged()).count();
        Self {
            trials,
            mean_phantom_f1,
            ci_phantom_f1,
            mean_phantom_f2,
            ci_phantom_f2,
            mean_macro_f1,
            ci_macro_f1,
            infeasible_trials,
            unconverged_trials,
        }
    }
}

fn thread_pool() -> rayon::ThreadPool {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("HETNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
    {
        builder = builder.num_threads(n);
    }
    builder.build().expect("thread pool")
}

/// Runs one seeded trial: realize the channels, allocate both bands.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, seed: u64) -> TrialResult {
    let channels = scenario::realize_trial(
        cfg.preset,
        &cfg.geometry,
        &cfg.network,
        &cfg.propagation,
        cfg.fading,
        seed,
    );
    let mut f1_opts = cfg.f1_opts.clone();
    f1_opts.solver.seed = seed;

    let t0 = Instant::now();
    let f1 = f1_allocator::run(&channels.f1, &cfg.network, &f1_opts);
    let f1_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let f2 = f2_allocator::run(&channels.f2, &cfg.network, &cfg.f2_opts);
    let f2_seconds = t1.elapsed().as_secs_f64();

    let f1_rates = match &f1 {
        F1Outcome::Solved(r) => Some(throughput(&r.allocation, &channels.f1).expect("valid")),
        F1Outcome::Gate(GateOutcome::MacroOnly { allocation, .. }) => {
            Some(throughput(allocation, &channels.f1).expect("valid"))
        }
        F1Outcome::Gate(_) => None,
    };
    let f2_rates = throughput(&f2.allocation, &channels.f2).expect("valid");
    let f1_iterations = match &f1 {
        F1Outcome::Solved(r) => r.outer_iterations,
        F1Outcome::Gate(_) => 0,
    };
    TrialResult {
        trial,
        seed,
        f1_iterations,
        f2_iterations: f2.iterations,
        f1,
        f2,
        f1_rates,
        f2_rates,
        f1_seconds,
        f2_seconds,
    }
}

/// Runs `n` independent trials with seeds derived from `master_seed`.
pub fn run_trials(cfg: &ExperimentConfig, n: usize, master_seed: u64) -> Aggregate {
    let pool = thread_pool();
    let trials: Vec<TrialResult> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|t| run_trial(cfg, t, trial_seed(master_seed, t)))
            .collect()
    });
    Aggregate::from_trials(trials)
}

/// One point of the paired rate-floor sweep.
#[derive(Debug, Clone)]
pub struct SweepCurve {
    pub r_min_grid: Vec<f64>,
    pub mean_phantom_f1: Vec<f64>,
    pub ci_phantom_f1: Vec<f64>,
    pub mean_phantom_f2: Vec<f64>,
    pub ci_phantom_f2: Vec<f64>,
    pub mean_phantom_total: Vec<f64>,
    pub ci_phantom_total: Vec<f64>,
    pub infeasible: Vec<usize>,
    /// True when every trial's phantom-band result was bit-identical across
    /// the whole grid (it must be: that problem never sees the floor).
    pub f2_bit_identical: bool,
}

/// Sweeps the macro rate floor over `grid`, reusing identical per-trial
/// seeds at every point so differences reflect the floor, not noise.
/// Infeasible trials contribute zero phantom capacity at their grid point.
pub fn sweep_rmin(
    cfg: &ExperimentConfig,
    grid: &[f64],
    n_trials: usize,
    master_seed: u64,
) -> SweepCurve {
    let mut curve = SweepCurve {
        r_min_grid: grid.to_vec(),
        mean_phantom_f1: vec![],
        ci_phantom_f1: vec![],
        mean_phantom_f2: vec![],
        ci_phantom_f2: vec![],
        mean_phantom_total: vec![],
        ci_phantom_total: vec![],
        infeasible: vec![],
        f2_bit_identical: true,
    };
    let mut reference_f2: Option<Vec<Allocation>> = None;
    for &r in grid {
        let agg = run_trials(&cfg.with_min_macro_rate(r), n_trials, master_seed);
        let f2_allocs: Vec<Allocation> = agg
            .trials
            .iter()
            .map(|t| t.f2.allocation.clone())
            .collect();
        match &reference_f2 {
            None => reference_f2 = Some(f2_allocs),
            Some(reference) => {
                if reference != &f2_allocs {
                    curve.f2_bit_identical = false;
                }
            }
        }
        let totals: Vec<f64> = agg
            .trials
            .iter()
            .map(|t| t.phantom_rate_f1() + t.phantom_rate_f2())
            .collect();
        let (mean_total, ci_total) = mean_ci(&totals);
        curve.mean_phantom_f1.push(agg.mean_phantom_f1);
        curve.ci_phantom_f1.push(agg.ci_phantom_f1);
        curve.mean_phantom_f2.push(agg.mean_phantom_f2);
        curve.ci_phantom_f2.push(agg.ci_phantom_f2);
        curve.mean_phantom_total.push(mean_total);
        curve.ci_phantom_total.push(ci_total);
        curve.infeasible.push(agg.infeasible_trials);
    }
    curve
}

/// Default sweep grid: evenly spaced points from zero to `factor` times the
/// mean macro-only capacity, spanning the feasibility knee.
pub fn default_rmin_grid(
    cfg: &ExperimentConfig,
    n_trials: usize,
    master_seed: u64,
    points: usize,
    factor: f64,
) -> Vec<f64> {
    let mean_r0 = mean_macro_only_capacity(cfg, n_trials, master_seed);
    let top = factor * mean_r0;
    (0..points)
        .map(|i| top * i as f64 / (points - 1).max(1) as f64)
        .collect()
}

/// Mean macro-only capacity `R0*` over the trial seeds.
pub fn mean_macro_only_capacity(cfg: &ExperimentConfig, n_trials: usize, master_seed: u64) -> f64 {
    let pool = thread_pool();
    let r0: Vec<f64> = pool.install(|| {
        (0..n_trials)
            .into_par_iter()
            .map(|t| {
                let channels = scenario::realize_trial(
                    cfg.preset,
                    &cfg.geometry,
                    &cfg.network,
                    &cfg.propagation,
                    cfg.fading,
                    trial_seed(master_seed, t),
                );
                match f1_allocator::feasibility_gate(&channels.f1, &cfg.network) {
                    GateOutcome::Infeasible { max_macro_rate }
                    | GateOutcome::MacroOnly {
                        macro_rate: max_macro_rate,
                        ..
                    }
                    | GateOutcome::Proceed { max_macro_rate, .. } => max_macro_rate,
                }
            })
            .collect()
    });
    r0.iter().sum::<f64>() / r0.len().max(1) as f64
}

/// Convergence traces for one seeded realization.
#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    /// Phantom-band per-iteration stats (power mean, objective, dual change).
    pub f2: Vec<IterStats>,
    pub f2_iterations: usize,
    pub f2_converged: bool,
    /// Shared-band outer objective trace (empty on gate short-circuits).
    pub f1_objective: Vec<f64>,
    pub f1_iterations: usize,
}

pub fn trace_convergence(cfg: &ExperimentConfig, seed: u64) -> ConvergenceTrace {
    let trial = run_trial(cfg, 0, seed);
    let (f1_objective, f1_iterations) = match &trial.f1 {
        F1Outcome::Solved(r) => (r.objective_trace.clone(), r.outer_iterations),
        F1Outcome::Gate(_) => (vec![], 0),
    };
    ConvergenceTrace {
        f2: trial.f2.dual_trace.clone(),
        f2_iterations: trial.f2.iterations,
        f2_converged: trial.f2.converged,
        f1_objective,
        f1_iterations,
    }
}

/// Paired comparison of the two solution methods on the phantom band.
///
/// Both arms see identical channel realizations of the same relaxed problem
/// family (the phantom-band allocation, which has no rate floor): one arm
/// alternates the projected-gradient power solve with best-rate
/// reassignment, the other runs the priced subgradient iteration. The
/// comparison is method-level.
#[derive(Debug, Clone)]
pub struct SolverComparison {
    /// Final phantom capacity per trial, nats/use.
    pub nlp_capacity: Vec<f64>,
    pub subgradient_capacity: Vec<f64>,
    pub mean_nlp: f64,
    pub mean_subgradient: f64,
    /// Capacity trace of trial 0, per outer iteration (nlp arm).
    pub nlp_trace: Vec<f64>,
    /// Capacity trace of trial 0, per subgradient iteration.
    pub subgradient_trace: Vec<f64>,
    /// Mean wall-clock seconds per iteration, each arm.
    pub nlp_iter_seconds: f64,
    pub subgradient_iter_seconds: f64,
}

/// Projected-gradient arm of the comparison: alternate the power solve and
/// best-rate reassignment on the phantom band.
pub fn pga_band_allocate(
    gains: &crate::model::ChannelGains,
    cfg: &NetworkConfig,
    f1_opts: &F1Options,
    seed: u64,
) -> (Allocation, Vec<f64>, usize) {
    assert_eq!(gains.band(), Band::F2);
    let m = cfg.phantom_cells;
    let n_sc = cfg.subcarriers_f2;
    let budgets = &cfg.power_budget[1..];
    let masks = &cfg.power_mask[1..];

    // Initial assignment: best own-link gain per slot (zero power).
    let mut alloc = Allocation::empty(Band::F2, m, n_sc);
    for mi in 0..m {
        let cell = mi + 1;
        for sc in 0..n_sc {
            let best = (0..cfg.users_per_cell[cell])
                .max_by(|&a, &b| {
                    let ga = gains.gain(cell, crate::model::UserId { cell, k: a }, sc);
                    let gb = gains.gain(cell, crate::model::UserId { cell, k: b }, sc);
                    ga.partial_cmp(&gb).unwrap()
                })
                .unwrap_or(0);
            alloc.set(cell, sc, Some(best), 0.0);
        }
    }
    let mut assignment: Vec<Vec<Option<usize>>> = (0..m)
        .map(|mi| (0..n_sc).map(|sc| alloc.assigned(mi + 1, sc)).collect())
        .collect();

    let mut powers: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut outer = 0usize;
    while outer < f1_opts.max_outer {
        outer += 1;
        let mut solver_opts = SolveOptions {
            seed,
            warm_start: powers.clone(),
            ..f1_opts.solver.clone()
        };
        if powers.is_some() {
            solver_opts.restarts = 0;
        }
        let problem = PowerProblem {
            gains,
            assignment: &assignment,
            fixed_macro: None,
            budgets,
            masks,
        };
        let report = nlp_solver::solve_phantom_powers(&problem, &solver_opts);
        trace.push(report.objective);
        let delta = match &powers {
            Some(prev) => prev
                .iter()
                .zip(&report.powers)
                .enumerate()
                .map(|(v, (a, b))| (a - b).abs() / cfg.power_budget[1 + v / n_sc])
                .fold(0.0, f64::max),
            None => f64::INFINITY,
        };
        powers = Some(report.powers);
        let p = powers.as_ref().unwrap();
        for mi in 0..m {
            for sc in 0..n_sc {
                alloc.set(mi + 1, sc, assignment[mi][sc], p[mi * n_sc + sc]);
            }
        }
        assignment = f1_allocator::update_assignment(gains, &alloc);
        if delta < f1_opts.power_tol {
            break;
        }
    }
    let p = powers.expect("ran at least once");
    for mi in 0..m {
        for sc in 0..n_sc {
            alloc.set(mi + 1, sc, assignment[mi][sc], p[mi * n_sc + sc]);
        }
    }
    (alloc, trace, outer)
}

pub fn compare_solvers(cfg: &ExperimentConfig, n_trials: usize, master_seed: u64) -> SolverComparison {
    let pool = thread_pool();
    type Arm = (f64, f64, Vec<f64>, usize, f64, Vec<f64>, usize, f64);
    let rows: Vec<Arm> = pool.install(|| {
        (0..n_trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(master_seed, t);
                let channels = scenario::realize_trial(
                    cfg.preset,
                    &cfg.geometry,
                    &cfg.network,
                    &cfg.propagation,
                    cfg.fading,
                    seed,
                );
                let t0 = Instant::now();
                let (alloc, nlp_trace, nlp_iters) =
                    pga_band_allocate(&channels.f2, &cfg.network, &cfg.f1_opts, seed);
                let nlp_secs = t0.elapsed().as_secs_f64();
                let nlp_cap = throughput(&alloc, &channels.f2)
                    .expect("valid")
                    .phantom_total;
                let t1 = Instant::now();
                let f2 = f2_allocator::run(&channels.f2, &cfg.network, &cfg.f2_opts);
                let sg_secs = t1.elapsed().as_secs_f64();
                let sg_trace: Vec<f64> = f2.dual_trace.iter().map(|s| s.objective).collect();
                (
                    nlp_cap,
                    f2.objective,
                    nlp_trace,
                    nlp_iters,
                    nlp_secs,
                    sg_trace,
                    f2.iterations,
                    sg_secs,
                )
            })
            .collect()
    });
    let nlp_capacity: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let subgradient_capacity: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (mean_nlp, _) = mean_ci(&nlp_capacity);
    let (mean_subgradient, _) = mean_ci(&subgradient_capacity);
    let total_nlp_iters: usize = rows.iter().map(|r| r.3).sum();
    let total_sg_iters: usize = rows.iter().map(|r| r.6).sum();
    let nlp_iter_seconds = rows.iter().map(|r| r.4).sum::<f64>() / total_nlp_iters.max(1) as f64;
    let subgradient_iter_seconds =
        rows.iter().map(|r| r.7).sum::<f64>() / total_sg_iters.max(1) as f64;
    SolverComparison {
        mean_nlp,
        mean_subgradient,
        nlp_trace: rows.first().map(|r| r.2.clone()).unwrap_or_default(),
        subgradient_trace: rows.first().map(|r| r.5.clone()).unwrap_or_default(),
        nlp_capacity,
        subgradient_capacity,
        nlp_iter_seconds,
        subgradient_iter_seconds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small custom geometry so unit tests stay quick; acceptance runs the
    /// full presets.
    fn tiny_config(r_min: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_preset(Preset::Indoor, r_min);
        cfg.geometry.phantom_cells = 2;
        cfg.geometry.macro_users = 3;
        cfg.geometry.users_per_phantom = 2;
        cfg.geometry.subcarriers = 4;
        cfg.network = cfg.geometry.network_config(r_min);
        cfg
    }

    #[test]
    fn single_trial_aggregate_equals_trial() {
        let cfg = tiny_config(0.0);
        let agg = run_trials(&cfg, 1, 3);
        assert_eq!(agg.trials.len(), 1);
        assert_eq!(agg.mean_phantom_f1, agg.trials[0].phantom_rate_f1());
        assert_eq!(agg.mean_phantom_f2, agg.trials[0].phantom_rate_f2());
        assert_eq!(agg.ci_phantom_f1, 0.0);
    }

    #[test]
    fn aggregates_are_recomputable_from_trials() {
        let cfg = tiny_config(0.0);
        let agg = run_trials(&cfg, 5, 11);
        let mean = agg
            .trials
            .iter()
            .map(|t| t.phantom_rate_f1())
            .sum::<f64>()
            / 5.0;
        assert!((mean - agg.mean_phantom_f1).abs() < 1e-12);
    }

    #[test]
    fn different_master_seeds_differ() {
        let cfg = tiny_config(0.0);
        let a = run_trials(&cfg, 3, 1);
        let b = run_trials(&cfg, 3, 2);
        assert_ne!(a.mean_phantom_f2, b.mean_phantom_f2);
    }

    #[test]
    fn run_trials_is_deterministic() {
        let cfg = tiny_config(0.0);
        let a = run_trials(&cfg, 3, 9);
        let b = run_trials(&cfg, 3, 9);
        for (x, y) in a.trials.iter().zip(&b.trials) {
            assert_eq!(x.seed, y.seed);
            assert_eq!(x.phantom_rate_f1(), y.phantom_rate_f1());
            assert_eq!(x.f2.allocation, y.f2.allocation);
        }
    }

    #[test]
    fn paired_sweep_f2_is_bit_identical() {
        let cfg = tiny_config(0.0);
        let grid = default_rmin_grid(&cfg, 3, 5, 4, 1.1);
        assert_eq!(grid.len(), 4);
        assert_eq!(grid[0], 0.0);
        let curve = sweep_rmin(&cfg, &grid, 3, 5);
        assert!(curve.f2_bit_identical);
        // Upper grid points exceed most trials' macro-only capacity.
        let tightened = *curve.mean_phantom_f1.last().unwrap() < curve.mean_phantom_f1[0];
        assert!(curve.infeasible.last().copied().unwrap_or(0) > 0 || tightened);
    }

    #[test]
    fn trace_lengths_match_iterations() {
        let cfg = tiny_config(0.0);
        let trace = trace_convergence(&cfg, 21);
        assert_eq!(trace.f2.len(), trace.f2_iterations);
        assert_eq!(trace.f1_objective.len(), trace.f1_iterations);
        // Allocated power per user never exceeds its per-subcarrier mask sum.
        let mask = cfg.network.power_mask[1];
        let n2 = cfg.network.subcarriers_f2;
        for s in &trace.f2 {
            assert!(s.mean_user_power <= mask * n2 as f64 + 1e-12);
        }
    }

    #[test]
    fn comparison_is_paired_and_finite() {
        let cfg = tiny_config(0.0);
        let cmp = compare_solvers(&cfg, 3, 7);
        assert_eq!(cmp.nlp_capacity.len(), 3);
        assert_eq!(cmp.subgradient_capacity.len(), 3);
        assert!(cmp.mean_nlp.is_finite() && cmp.mean_subgradient.is_finite());
        assert!(!cmp.nlp_trace.is_empty());
        assert!(!cmp.subgradient_trace.is_empty());
    }
}
