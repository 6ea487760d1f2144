//! Config-driven command-line entry points.
//!
//! Five subcommands: `simulate` (seeded Monte Carlo batch), `sweep` (paired
//! macro-rate-floor sweep), `trace` (per-iteration convergence series),
//! `compare` (projected-gradient versus subgradient arms), and `validate`
//! (oracle-vs-solver checks on built-in small instances).
//!
//! Configs are plain `key = value` text with `[scenario]`, `[solver]`,
//! `[sweep]`, and `[output]` sections; keys before any header belong to
//! `[scenario]`. Unknown keys are rejected by name. Every run writes CSV
//! data files plus a `run_meta.txt` sidecar (command, config hash, master
//! seed, full canonical config) from which the CSVs are reproducible
//! byte for byte.

use crate::channel::FadingMode;
use crate::f1_allocator::F1Options;
use crate::f2_allocator::F2Options;
use crate::model::{interference, rate, Band, ChannelGains, NetworkConfig, UserId};
use crate::montecarlo::{self, ExperimentConfig};
use crate::nlp_solver::SolveOptions;
use crate::oracle::{self, BandProblem, OracleBudget, OracleOutcome};
use crate::scenario::Preset;
use clap::{Args, Parser, Subcommand};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NO_CONVERGE: i32 = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown section [{section}]")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: key `{key}`: {message}")]
    BadValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
}

/// Upper end of a sweep grid: either a multiple of the mean macro-only
/// capacity (suffix `x`) or an absolute rate in nats/use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepMax {
    Factor(f64),
    Absolute(f64),
}

impl SweepMax {
    fn parse(s: &str) -> Result<Self, String> {
        if let Some(f) = s.strip_suffix('x') {
            f.parse::<f64>()
                .map(SweepMax::Factor)
                .map_err(|_| format!("bad factor `{s}`"))
        } else {
            s.parse::<f64>()
                .map(SweepMax::Absolute)
                .map_err(|_| format!("bad rate `{s}` (use a number, or `1.5x` for a factor)"))
        }
    }
}

impl std::fmt::Display for SweepMax {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepMax::Factor(v) => write!(f, "{v}x"),
            SweepMax::Absolute(v) => write!(f, "{v}"),
        }
    }
}

/// Full run configuration: scenario selection with optional dimension
/// overrides, solver settings, sweep shape, and the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub preset: Preset,
    pub seed: u64,
    pub trials: usize,
    pub r_min: f64,
    pub fading: FadingMode,
    pub phantom_cells: Option<usize>,
    pub macro_users: Option<usize>,
    pub users_per_phantom: Option<usize>,
    pub subcarriers: Option<usize>,
    pub f1_restarts: usize,
    pub f1_max_iters: usize,
    pub f1_grad_tol: f64,
    pub f1_max_outer: usize,
    pub f1_power_tol: f64,
    pub f2_max_iters: usize,
    pub f2_dual_tol: f64,
    pub f2_step_scale: f64,
    pub sweep_points: usize,
    pub sweep_max: SweepMax,
    pub out_dir: PathBuf,
}

impl SimConfig {
    pub fn default_for(preset: Preset) -> Self {
        let f1 = F1Options::default();
        let f2 = F2Options::default();
        Self {
            preset,
            seed: 0,
            trials: preset.params().trials,
            r_min: 0.0,
            fading: FadingMode::PerSubcarrier,
            phantom_cells: None,
            macro_users: None,
            users_per_phantom: None,
            subcarriers: None,
            f1_restarts: f1.solver.restarts,
            f1_max_iters: f1.solver.max_iters,
            f1_grad_tol: f1.solver.grad_tol,
            f1_max_outer: f1.max_outer,
            f1_power_tol: f1.power_tol,
            f2_max_iters: f2.max_iters,
            f2_dual_tol: f2.dual_tol,
            f2_step_scale: f2.step_scale,
            sweep_points: 12,
            sweep_max: SweepMax::Factor(1.1),
            out_dir: PathBuf::from("out"),
        }
    }

    /// Canonical serialization; `parse_config` inverts it exactly.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[scenario]");
        let _ = writeln!(s, "preset = {}", self.preset.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "r_min = {}", self.r_min);
        let fading = match self.fading {
            FadingMode::PerSubcarrier => "per_subcarrier",
            FadingMode::PerLink => "per_link",
        };
        let _ = writeln!(s, "fading = {fading}");
        if let Some(v) = self.phantom_cells {
            let _ = writeln!(s, "phantom_cells = {v}");
        }
        if let Some(v) = self.macro_users {
            let _ = writeln!(s, "macro_users = {v}");
        }
        if let Some(v) = self.users_per_phantom {
            let _ = writeln!(s, "users_per_phantom = {v}");
        }
        if let Some(v) = self.subcarriers {
            let _ = writeln!(s, "subcarriers = {v}");
        }
        let _ = writeln!(s, "\n[solver]");
        let _ = writeln!(s, "f1_restarts = {}", self.f1_restarts);
        let _ = writeln!(s, "f1_max_iters = {}", self.f1_max_iters);
        let _ = writeln!(s, "f1_grad_tol = {}", self.f1_grad_tol);
        let _ = writeln!(s, "f1_max_outer = {}", self.f1_max_outer);
        let _ = writeln!(s, "f1_power_tol = {}", self.f1_power_tol);
        let _ = writeln!(s, "f2_max_iters = {}", self.f2_max_iters);
        let _ = writeln!(s, "f2_dual_tol = {}", self.f2_dual_tol);
        let _ = writeln!(s, "f2_step_scale = {}", self.f2_step_scale);
        let _ = writeln!(s, "\n[sweep]");
        let _ = writeln!(s, "points = {}", self.sweep_points);
        let _ = writeln!(s, "max = {}", self.sweep_max);
        let _ = writeln!(s, "\n[output]");
        let _ = writeln!(s, "dir = {}", self.out_dir.display());
        s
    }

    /// Experiment view: geometry from the preset plus any overrides, network
    /// constraints derived from the geometry, solver options from the
    /// `[solver]` section.
    pub fn experiment(&self) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_preset(self.preset, self.r_min);
        if let Some(v) = self.phantom_cells {
            cfg.geometry.phantom_cells = v;
        }
        if let Some(v) = self.macro_users {
            cfg.geometry.macro_users = v;
        }
        if let Some(v) = self.users_per_phantom {
            cfg.geometry.users_per_phantom = v;
        }
        if let Some(v) = self.subcarriers {
            cfg.geometry.subcarriers = v;
        }
        cfg.network = cfg.geometry.network_config(self.r_min);
        cfg.fading = self.fading;
        cfg.f1_opts = F1Options {
            max_outer: self.f1_max_outer,
            power_tol: self.f1_power_tol,
            solver: SolveOptions {
                restarts: self.f1_restarts,
                max_iters: self.f1_max_iters,
                grad_tol: self.f1_grad_tol,
                ..SolveOptions::default()
            },
        };
        cfg.f2_opts = F2Options {
            max_iters: self.f2_max_iters,
            dual_tol: self.f2_dual_tol,
            step_scale: self.f2_step_scale,
        };
        cfg
    }

    /// FNV-1a hash of the canonical serialization, for the sidecar.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.serialize().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Parses `key = value` config text with optional section headers.
/// Defaults come from the preset named inside (or indoor when absent).
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    // The preset decides defaults (trial counts), so find it first.
    let mut preset = Preset::Indoor;
    for (_, _, key, value) in config_entries(text)? {
        if key == "preset" {
            preset = Preset::parse(&value).ok_or(ConfigError::BadValue {
                line: 0,
                key: "preset".into(),
                message: format!("unknown preset `{value}` (use indoor or outdoor)"),
            })?;
        }
    }
    let mut cfg = SimConfig::default_for(preset);

    macro_rules! parse_num {
        ($key:expr, $value:expr, $line:expr, $ty:ty) => {
            $value
                .parse::<$ty>()
                .map_err(|e| ConfigError::BadValue {
                    line: $line,
                    key: $key.to_string(),
                    message: e.to_string(),
                })?
        };
    }

    for (line, section, key, value) in config_entries(text)? {
        match (section.as_str(), key.as_str()) {
            ("scenario", "preset") => {} // handled above
            ("scenario", "seed") => cfg.seed = parse_num!(key, value, line, u64),
            ("scenario", "trials") => cfg.trials = parse_num!(key, value, line, usize),
            ("scenario", "r_min") => cfg.r_min = parse_num!(key, value, line, f64),
            ("scenario", "fading") => {
                cfg.fading = match value.as_str() {
                    "per_subcarrier" => FadingMode::PerSubcarrier,
                    "per_link" => FadingMode::PerLink,
                    other => {
                        return Err(ConfigError::BadValue {
                            line,
                            key,
                            message: format!(
                                "unknown fading `{other}` (per_subcarrier or per_link)"
                            ),
                        })
                    }
                }
            }
            ("scenario", "phantom_cells") => {
                cfg.phantom_cells = Some(parse_num!(key, value, line, usize))
            }
            ("scenario", "macro_users") => {
                cfg.macro_users = Some(parse_num!(key, value, line, usize))
            }
            ("scenario", "users_per_phantom") => {
                cfg.users_per_phantom = Some(parse_num!(key, value, line, usize))
            }
            ("scenario", "subcarriers") => {
                cfg.subcarriers = Some(parse_num!(key, value, line, usize))
            }
            ("solver", "f1_restarts") => cfg.f1_restarts = parse_num!(key, value, line, usize),
            ("solver", "f1_max_iters") => cfg.f1_max_iters = parse_num!(key, value, line, usize),
            ("solver", "f1_grad_tol") => cfg.f1_grad_tol = parse_num!(key, value, line, f64),
            ("solver", "f1_max_outer") => cfg.f1_max_outer = parse_num!(key, value, line, usize),
            ("solver", "f1_power_tol") => cfg.f1_power_tol = parse_num!(key, value, line, f64),
            ("solver", "f2_max_iters") => cfg.f2_max_iters = parse_num!(key, value, line, usize),
            ("solver", "f2_dual_tol") => cfg.f2_dual_tol = parse_num!(key, value, line, f64),
            ("solver", "f2_step_scale") => {
                cfg.f2_step_scale = parse_num!(key, value, line, f64)
            }
            ("sweep", "points") => cfg.sweep_points = parse_num!(key, value, line, usize),
            ("sweep", "max") => {
                cfg.sweep_max = SweepMax::parse(&value).map_err(|message| {
                    ConfigError::BadValue {
                        line,
                        key,
                        message,
                    }
                })?
            }
            ("output", "dir") => cfg.out_dir = PathBuf::from(value),
            (section, _) => {
                return Err(ConfigError::UnknownKey {
                    line,
                    section: section.to_string(),
                    key,
                })
            }
        }
    }
    Ok(cfg)
}

/// Splits config text into `(line, section, key, value)` entries.
fn config_entries(text: &str) -> Result<Vec<(usize, String, String, String)>, ConfigError> {
    const SECTIONS: [&str; 4] = ["scenario", "solver", "sweep", "output"];
    let mut section = "scenario".to_string();
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(name) = stripped.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::UnknownSection {
                    line,
                    section: name.to_string(),
                });
            }
            section = name.to_string();
            continue;
        }
        // Accept comma-separated pairs on one line for terse configs.
        for piece in stripped.split(',') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            let Some((key, value)) = piece.split_once('=') else {
                return Err(ConfigError::Malformed {
                    line,
                    text: piece.to_string(),
                });
            };
            entries.push((
                line,
                section.clone(),
                key.trim().to_string(),
                value.trim().to_string(),
            ));
        }
    }
    Ok(entries)
}

#[derive(Parser, Debug)]
#[command(
    name = "hetnet",
    version,
    about = "Two-tier OFDMA downlink resource allocation: simulator and solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded Monte Carlo trials and write per-trial and per-slot CSVs.
    Simulate(CommonArgs),
    /// Sweep the macro rate floor with paired seeds.
    Sweep(SweepArgs),
    /// Write per-iteration convergence traces for one seed.
    Trace(CommonArgs),
    /// Paired projected-gradient vs subgradient comparison.
    Compare(CommonArgs),
    /// Oracle-vs-solver checks on built-in small instances.
    Validate(CommonArgs),
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Config file (key = value with sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario preset: indoor or outdoor.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Macro rate floor, nats/use.
    #[arg(long)]
    rmin: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Phantom cell count override.
    #[arg(long)]
    phantom_cells: Option<usize>,
    /// Subcarrier count override (both bands).
    #[arg(long)]
    subcarriers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid points.
    #[arg(long)]
    points: Option<usize>,
    /// Grid top: absolute nats/use, or a factor of mean macro-only capacity
    /// with an `x` suffix (e.g. `1.1x`).
    #[arg(long, value_name = "RATE|FACTORx")]
    rmin_max: Option<String>,
}

fn load_config(args: &CommonArgs) -> Result<SimConfig, String> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => {
            let preset = match &args.preset {
                Some(p) => {
                    Preset::parse(p).ok_or_else(|| format!("unknown preset `{p}`"))?
                }
                None => Preset::Indoor,
            };
            SimConfig::default_for(preset)
        }
    };
    if let Some(p) = &args.preset {
        cfg.preset = Preset::parse(p).ok_or_else(|| format!("unknown preset `{p}`"))?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(r) = args.rmin {
        cfg.r_min = r;
    }
    if let Some(o) = &args.out {
        cfg.out_dir = o.clone();
    }
    if let Some(m) = args.phantom_cells {
        cfg.phantom_cells = Some(m);
    }
    if let Some(n) = args.subcarriers {
        cfg.subcarriers = Some(n);
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}

fn write_sidecar(cfg: &SimConfig, command: &str) -> Result<(), String> {
    let mut meta = String::new();
    let _ = writeln!(meta, "command = {command}");
    let _ = writeln!(meta, "config_hash = {:016x}", cfg.hash());
    let _ = writeln!(meta, "master_seed = {}", cfg.seed);
    let _ = writeln!(meta, "crate_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(meta, "\n# canonical config");
    meta.push_str(&cfg.serialize());
    write_file(&cfg.out_dir, "run_meta.txt", &meta)?;
    Ok(())
}

/// Per-slot rows of an allocation: `(cell, sc, user, power, rate)`.
fn slot_rows(
    alloc: &crate::model::Allocation,
    gains: &ChannelGains,
) -> Vec<(usize, usize, Option<usize>, f64, f64)> {
    let mut rows = Vec::new();
    for cell in alloc.transmitters() {
        for sc in 0..alloc.subcarriers() {
            let user = alloc.assigned(cell, sc);
            let power = alloc.power(cell, sc);
            let r = match user {
                Some(k) => {
                    let u = UserId { cell, k };
                    let i = interference(alloc, gains, u, sc).expect("same band");
                    rate(gains.gain(cell, u, sc), power, i).expect("valid")
                }
                None => 0.0,
            };
            rows.push((cell, sc, user, power, r));
        }
    }
    rows
}

fn cmd_simulate(cfg: &SimConfig) -> Result<i32, String> {
    let experiment = cfg.experiment();
    experiment
        .network
        .validate()
        .map_err(|e| format!("invalid configuration: {e}"))?;
    let agg = montecarlo::run_trials(&experiment, cfg.trials, cfg.seed);

    // Internals stay in nats/use; the per-trial file also carries the
    // bit/s view at the subcarrier bandwidth.
    let bw = experiment.geometry.subcarrier_bw_hz;
    let mut trials_csv = String::from(
        "trial,seed,gate,converged,macro_rate_f1_nats,phantom_rate_f1_nats,phantom_rate_f2_nats,macro_rate_f1_bps,phantom_rate_f1_bps,phantom_rate_f2_bps,iterations_f1,iterations_f2\n",
    );
    let mut alloc_csv = String::from("trial,band,cell,user,subcarrier,power_w,rate_nats\n");
    for t in &agg.trials {
        let _ = writeln!(
            trials_csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            t.trial,
            t.seed,
            t.gate_label(),
            t.converged(),
            t.macro_rate_f1(),
            t.phantom_rate_f1(),
            t.phantom_rate_f2(),
            crate::model::nats_to_bits_per_sec(t.macro_rate_f1(), bw),
            crate::model::nats_to_bits_per_sec(t.phantom_rate_f1(), bw),
            crate::model::nats_to_bits_per_sec(t.phantom_rate_f2(), bw),
            t.f1_iterations,
            t.f2_iterations
        );
        // Per-slot rows need the gains; re-realize them (cheap and exact).
        let channels = crate::scenario::realize_trial(
            experiment.preset,
            &experiment.geometry,
            &experiment.network,
            &experiment.propagation,
            experiment.fading,
            t.seed,
        );
        let f1_alloc = match &t.f1 {
            crate::f1_allocator::F1Outcome::Solved(r) => Some(&r.allocation),
            crate::f1_allocator::F1Outcome::Gate(
                crate::f1_allocator::GateOutcome::MacroOnly { allocation, .. },
            ) => Some(allocation),
            _ => None,
        };
        if let Some(alloc) = f1_alloc {
            for (cell, sc, user, power, r) in slot_rows(alloc, &channels.f1) {
                let user = user.map_or(String::new(), |k| k.to_string());
                let _ = writeln!(alloc_csv, "{},f1,{cell},{user},{sc},{power},{r}", t.trial);
            }
        }
        for (cell, sc, user, power, r) in slot_rows(&t.f2.allocation, &channels.f2) {
            let user = user.map_or(String::new(), |k| k.to_string());
            let _ = writeln!(alloc_csv, "{},f2,{cell},{user},{sc},{power},{r}", t.trial);
        }
    }
    write_sidecar(cfg, "simulate")?;
    let p1 = write_file(&cfg.out_dir, "trials.csv", &trials_csv)?;
    let p2 = write_file(&cfg.out_dir, "allocations.csv", &alloc_csv)?;
    println!(
        "simulate: {} trials, mean phantom rate F1 = {} nats/use (ci {}), F2 = {} nats/use (ci {}), infeasible = {}",
        cfg.trials,
        agg.mean_phantom_f1,
        agg.ci_phantom_f1,
        agg.mean_phantom_f2,
        agg.ci_phantom_f2,
        agg.infeasible_trials
    );
    println!("wrote {}", p1.display());
    println!("wrote {}", p2.display());

    if agg.infeasible_trials == cfg.trials && cfg.trials > 0 {
        eprintln!("simulate: macro rate floor infeasible in every trial");
        return Ok(EXIT_INFEASIBLE);
    }
    if agg.unconverged_trials > 0 {
        eprintln!(
            "simulate: {} trial(s) flagged non-convergent",
            agg.unconverged_trials
        );
        return Ok(EXIT_NO_CONVERGE);
    }
    Ok(EXIT_OK)
}

fn cmd_sweep(cfg: &SimConfig) -> Result<i32, String> {
    let experiment = cfg.experiment();
    experiment
        .network
        .validate()
        .map_err(|e| format!("invalid configuration: {e}"))?;
    let grid = match cfg.sweep_max {
        SweepMax::Factor(f) => {
            montecarlo::default_rmin_grid(&experiment, cfg.trials, cfg.seed, cfg.sweep_points, f)
        }
        SweepMax::Absolute(top) => (0..cfg.sweep_points)
            .map(|i| top * i as f64 / (cfg.sweep_points - 1).max(1) as f64)
            .collect(),
    };
    let curve = montecarlo::sweep_rmin(&experiment, &grid, cfg.trials, cfg.seed);
    let mut csv = String::from(
        "r_min_nats,mean_phantom_f1_nats,ci_phantom_f1,mean_phantom_f2_nats,ci_phantom_f2,mean_phantom_total_nats,ci_phantom_total,infeasible_trials,trials\n",
    );
    for i in 0..curve.r_min_grid.len() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            curve.r_min_grid[i],
            curve.mean_phantom_f1[i],
            curve.ci_phantom_f1[i],
            curve.mean_phantom_f2[i],
            curve.ci_phantom_f2[i],
            curve.mean_phantom_total[i],
            curve.ci_phantom_total[i],
            curve.infeasible[i],
            cfg.trials
        );
    }
    write_sidecar(cfg, "sweep")?;
    let p = write_file(&cfg.out_dir, "sweep.csv", &csv)?;
    println!(
        "sweep: {} grid points x {} trials, phantom-band results bit-identical across grid: {}",
        curve.r_min_grid.len(),
        cfg.trials,
        curve.f2_bit_identical
    );
    println!("wrote {}", p.display());
    Ok(EXIT_OK)
}

fn cmd_trace(cfg: &SimConfig) -> Result<i32, String> {
    let experiment = cfg.experiment();
    experiment
        .network
        .validate()
        .map_err(|e| format!("invalid configuration: {e}"))?;
    let trace = montecarlo::trace_convergence(&experiment, cfg.seed);
    let mut f2_csv = String::from("iteration,max_dual_change,mean_user_power_w,objective_nats\n");
    for (i, s) in trace.f2.iter().enumerate() {
        let _ = writeln!(
            f2_csv,
            "{},{},{},{}",
            i + 1,
            s.max_dual_change,
            s.mean_user_power,
            s.objective
        );
    }
    let mut f1_csv = String::from("iteration,objective_nats\n");
    for (i, obj) in trace.f1_objective.iter().enumerate() {
        let _ = writeln!(f1_csv, "{},{}", i + 1, obj);
    }
    write_sidecar(cfg, "trace")?;
    let p1 = write_file(&cfg.out_dir, "trace_f2.csv", &f2_csv)?;
    let p2 = write_file(&cfg.out_dir, "trace_f1.csv", &f1_csv)?;
    println!(
        "trace: phantom band settled in {} iterations (converged: {})",
        trace.f2_iterations, trace.f2_converged
    );
    println!("wrote {}", p1.display());
    println!("wrote {}", p2.display());
    if !trace.f2_converged {
        return Ok(EXIT_NO_CONVERGE);
    }
    Ok(EXIT_OK)
}

fn cmd_compare(cfg: &SimConfig) -> Result<i32, String> {
    let experiment = cfg.experiment();
    experiment
        .network
        .validate()
        .map_err(|e| format!("invalid configuration: {e}"))?;
    let cmp = montecarlo::compare_solvers(&experiment, cfg.trials, cfg.seed);
    let mut csv = String::from("trial,nlp_capacity_nats,subgradient_capacity_nats\n");
    for i in 0..cmp.nlp_capacity.len() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            i, cmp.nlp_capacity[i], cmp.subgradient_capacity[i]
        );
    }
    let mut trace_csv = String::from("iteration,arm,objective_nats\n");
    for (i, v) in cmp.nlp_trace.iter().enumerate() {
        let _ = writeln!(trace_csv, "{},nlp,{}", i + 1, v);
    }
    for (i, v) in cmp.subgradient_trace.iter().enumerate() {
        let _ = writeln!(trace_csv, "{},subgradient,{}", i + 1, v);
    }
    write_sidecar(cfg, "compare")?;
    let p1 = write_file(&cfg.out_dir, "compare.csv", &csv)?;
    let p2 = write_file(&cfg.out_dir, "compare_trace.csv", &trace_csv)?;
    println!(
        "compare: mean capacity nlp = {} nats/use, subgradient = {} nats/use over {} paired trials",
        cmp.mean_nlp, cmp.mean_subgradient, cfg.trials
    );
    eprintln!(
        "compare: per-iteration cost nlp = {:.3e} s, subgradient = {:.3e} s",
        cmp.nlp_iter_seconds, cmp.subgradient_iter_seconds
    );
    println!("wrote {}", p1.display());
    println!("wrote {}", p2.display());
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------------------
// validate: oracle-vs-solver suite on built-in small instances
// ---------------------------------------------------------------------------

pub struct ValidationRow {
    pub check: String,
    pub instance: usize,
    pub reference: f64,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Runs the built-in validation suite. Small instance counts keep it quick;
/// the full acceptance suite runs the same families harder.
pub fn run_validation(seed: u64) -> Vec<ValidationRow> {
    use crate::f2_allocator;
    use crate::nlp_solver;
    use crate::waterfill;
    use rand::Rng as _;
    use rand::SeedableRng as _;
    use rand_chacha::ChaCha8Rng;

    let mut rows = Vec::new();

    // Phantom-band allocator vs brute force, M=2 K=2 N=2.
    for i in 0..5 {
        let cfg = NetworkConfig {
            phantom_cells: 2,
            users_per_cell: vec![2, 2, 2],
            subcarriers_f1: 2,
            subcarriers_f2: 2,
            power_budget: vec![1.0, 1.0, 1.0],
            power_mask: vec![0.5, 0.5, 0.5],
            min_macro_rate: 0.0,
            noise_power: 0.1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
        let gains = ChannelGains::from_fn(
            Band::F2,
            2,
            &cfg.users_per_cell,
            2,
            cfg.noise_power,
            |tx, user, _| {
                let base = if tx == user.cell { 1.0 } else { 0.1 };
                base * 10f64.powf(rng.random_range(-0.5..0.5))
            },
        )
        .unwrap();
        let problem = BandProblem {
            gains: &gains,
            cfg: &cfg,
            fixed_macro: None,
        };
        let oracle_obj = match oracle::brute_force(&problem, &OracleBudget::default()).unwrap() {
            OracleOutcome::Optimal(sol) => sol.objective,
            OracleOutcome::Infeasible => unreachable!("no rate floor"),
        };
        let res = f2_allocator::run(&gains, &cfg, &F2Options::default());
        let tol = 0.05 * oracle_obj;
        rows.push(ValidationRow {
            check: "f2_vs_oracle".into(),
            instance: i as usize,
            reference: oracle_obj,
            value: res.objective,
            tolerance: tol,
            pass: res.objective >= oracle_obj - tol,
        });
    }

    // Water-filling KKT: budget binding and monotonicity.
    for i in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000 + i));
        let n = rng.random_range(2..=8usize);
        let gains: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..5.0)).collect();
        let budget = rng.random_range(0.5..4.0);
        let caps = vec![budget; n];
        let noise = rng.random_range(0.01..1.0);
        let r = waterfill::capped_waterfill(&gains, noise, budget, &caps);
        let pass = (r.budget_used - budget).abs() <= 1e-9 * budget;
        rows.push(ValidationRow {
            check: "waterfill_budget".into(),
            instance: i as usize,
            reference: budget,
            value: r.budget_used,
            tolerance: 1e-9 * budget,
            pass,
        });
    }

    // Analytic gradient vs finite differences.
    for i in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2000 + i));
        let m = rng.random_range(1..=3usize);
        let n_sc = rng.random_range(1..=4usize);
        let users = vec![2; m + 1];
        let mut gain_rng = ChaCha8Rng::seed_from_u64(rng.random::<u64>());
        let gains = ChannelGains::from_fn(Band::F1, m, &users, n_sc, 0.3, |_, _, _| {
            10f64.powf(gain_rng.random_range(-2.0..1.0))
        })
        .unwrap();
        let assignment: Vec<Vec<Option<usize>>> =
            vec![vec![Some(0); n_sc]; m];
        let budgets = vec![2.0; m];
        let masks = vec![0.5; m];
        let macro_assign: Vec<usize> = vec![0; n_sc];
        let macro_powers: Vec<f64> = (0..n_sc).map(|_| rng.random_range(0.0..1.0)).collect();
        let problem = nlp_solver::PowerProblem {
            gains: &gains,
            assignment: &assignment,
            fixed_macro: Some(nlp_solver::FixedMacro {
                assignment: &macro_assign,
                powers: &macro_powers,
                min_rate: 0.0,
            }),
            budgets: &budgets,
            masks: &masks,
        };
        let x: Vec<f64> = (0..m * n_sc).map(|_| rng.random_range(0.0..0.5)).collect();
        let (_, grad) = nlp_solver::objective_and_gradient(&problem, &x);
        let mut worst = 0.0f64;
        for v in 0..x.len() {
            let h = 1e-6 * (1.0 + x[v].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[v] += h;
            xm[v] -= h;
            let (fp, _) = nlp_solver::objective_and_gradient(&problem, &xp);
            let (fm, _) = nlp_solver::objective_and_gradient(&problem, &xm);
            let fd = (fp - fm) / (2.0 * h);
            let scale = grad[v].abs().max(fd.abs()).max(1e-8);
            worst = worst.max((grad[v] - fd).abs() / scale);
        }
        rows.push(ValidationRow {
            check: "gradient_vs_fd".into(),
            instance: i as usize,
            reference: 0.0,
            value: worst,
            tolerance: 1e-5,
            pass: worst < 1e-5,
        });
    }
    rows
}

fn cmd_validate(cfg: &SimConfig) -> Result<i32, String> {
    let rows = run_validation(cfg.seed);
    let mut csv = String::from("check,instance,reference,value,tolerance,pass\n");
    let mut failures = 0usize;
    for r in &rows {
        if !r.pass {
            failures += 1;
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.check, r.instance, r.reference, r.value, r.tolerance, r.pass
        );
    }
    write_sidecar(cfg, "validate")?;
    let p = write_file(&cfg.out_dir, "validate.csv", &csv)?;
    println!(
        "validate: {} checks, {} failures",
        rows.len(),
        failures
    );
    println!("wrote {}", p.display());
    if failures > 0 {
        return Ok(EXIT_NO_CONVERGE);
    }
    Ok(EXIT_OK)
}

/// Full CLI entry point; returns the process exit code.
pub fn run_command<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own help/version through the error path.
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Simulate(args) => load_config(args).and_then(|cfg| cmd_simulate(&cfg)),
        Command::Sweep(args) => {
            let mut cfg = match load_config(&args.common) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            if let Some(p) = args.points {
                cfg.sweep_points = p;
            }
            if let Some(m) = &args.rmin_max {
                match SweepMax::parse(m) {
                    Ok(v) => cfg.sweep_max = v,
                    Err(e) => {
                        eprintln!("error: --rmin-max: {e}");
                        return EXIT_USAGE;
                    }
                }
            }
            cmd_sweep(&cfg)
        }
        Command::Trace(args) => load_config(args).and_then(|cfg| cmd_trace(&cfg)),
        Command::Compare(args) => load_config(args).and_then(|cfg| cmd_compare(&cfg)),
        Command::Validate(args) => load_config(args).and_then(|cfg| cmd_validate(&cfg)),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("preset=indoor, seed=42").unwrap();
        assert_eq!(cfg.preset, Preset::Indoor);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.trials, 80);
        assert_eq!(cfg.sweep_points, 12);
        assert_eq!(cfg.f2_max_iters, 2000);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("fooo=1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fooo"), "{msg}");
    }

    #[test]
    fn unknown_section_is_named() {
        let err = parse_config("[nope]\nx=1").unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = SimConfig::default_for(Preset::Outdoor);
        cfg.seed = 7;
        cfg.trials = 5;
        cfg.r_min = 3.25;
        cfg.phantom_cells = Some(2);
        cfg.subcarriers = Some(4);
        cfg.sweep_max = SweepMax::Absolute(2.5);
        cfg.f1_grad_tol = 3e-8;
        let text = cfg.serialize();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn bad_value_is_diagnosed() {
        let err = parse_config("seed=notanumber").unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn sweep_max_forms() {
        assert_eq!(SweepMax::parse("1.5x").unwrap(), SweepMax::Factor(1.5));
        assert_eq!(SweepMax::parse("2.5").unwrap(), SweepMax::Absolute(2.5));
        assert!(SweepMax::parse("abc").is_err());
    }

    #[test]
    fn experiment_applies_overrides() {
        let mut cfg = SimConfig::default_for(Preset::Indoor);
        cfg.phantom_cells = Some(2);
        cfg.subcarriers = Some(4);
        let e = cfg.experiment();
        assert_eq!(e.network.phantom_cells, 2);
        assert_eq!(e.network.subcarriers_f2, 4);
        assert_eq!(e.network.users_per_cell.len(), 3);
        e.network.validate().unwrap();
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = SimConfig::default_for(Preset::Indoor);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
