//! Deployment geometry and channel realization for the built-in indoor and
//! outdoor setups.
//!
//! Both presets share one macro cell of 1000 m radius with four phantom
//! cells placed evenly on a ring at half the macro radius. Users draw a
//! uniform angle and a folded-Gaussian distance around their serving base
//! station. The indoor preset models phantom hotspots of 50 m radius at
//! 23 dBm; the outdoor one, 250 m cells at 30 dBm.

use crate::channel::{
    dbm_to_watts, linear_gain as channel_linear_gain, noise_power, path_loss, FadingMode,
    LinkType, PropagationParams, MIN_LINK_DISTANCE_M,
};
use crate::model::{Band, ChannelGains, NetworkConfig, UserId};
use rand::Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp1, Normal};
use rand_chacha::ChaCha8Rng;

/// Built-in scenario family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Indoor,
    Outdoor,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Indoor => "indoor",
            Preset::Outdoor => "outdoor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "indoor" => Some(Preset::Indoor),
            "outdoor" => Some(Preset::Outdoor),
            _ => None,
        }
    }

    pub fn params(self) -> PresetParams {
        let common = PresetParams {
            macro_radius_m: 1000.0,
            phantom_radius_m: 50.0,
            macro_power_dbm: 47.0,
            phantom_power_dbm: 23.0,
            macro_users: 10,
            phantom_cells: 4,
            users_per_phantom: 5,
            subcarriers: 8,
            subcarrier_bw_hz: 180e3,
            trials: 80,
        };
        match self {
            Preset::Indoor => common,
            Preset::Outdoor => PresetParams {
                phantom_radius_m: 250.0,
                phantom_power_dbm: 30.0,
                ..common
            },
        }
    }

    /// Network config with every dimension and power taken from the preset.
    pub fn network_config(self, min_macro_rate: f64) -> NetworkConfig {
        self.params().network_config(min_macro_rate)
    }
}

/// Scenario constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetParams {
    pub macro_radius_m: f64,
    pub phantom_radius_m: f64,
    pub macro_power_dbm: f64,
    pub phantom_power_dbm: f64,
    pub macro_users: usize,
    pub phantom_cells: usize,
    pub users_per_phantom: usize,
    /// Subcarriers per band (both bands use the same count).
    pub subcarriers: usize,
    pub subcarrier_bw_hz: f64,
    /// Default Monte Carlo trial count.
    pub trials: usize,
}

impl PresetParams {
    pub fn network_config(&self, min_macro_rate: f64) -> NetworkConfig {
        let m = self.phantom_cells;
        let mut users = vec![self.macro_users];
        users.extend(std::iter::repeat_n(self.users_per_phantom, m));
        let macro_p = dbm_to_watts(self.macro_power_dbm);
        let phantom_p = dbm_to_watts(self.phantom_power_dbm);
        let mut budget = vec![macro_p];
        budget.extend(std::iter::repeat_n(phantom_p, m));
        // Spectral mask: budget / subcarrier count, per cell.
        let mask: Vec<f64> = budget.iter().map(|p| p / self.subcarriers as f64).collect();
        NetworkConfig {
            phantom_cells: m,
            users_per_cell: users,
            subcarriers_f1: self.subcarriers,
            subcarriers_f2: self.subcarriers,
            power_budget: budget,
            power_mask: mask,
            min_macro_rate,
            noise_power: noise_power(self.subcarrier_bw_hz),
        }
    }
}

/// Base station and user positions for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub preset: Preset,
    pub seed: u64,
    /// Index 0 = macro BS (at the origin), then the phantom BSs.
    pub bs_positions: Vec<[f64; 2]>,
    /// `users[cell][k]` position.
    pub users: Vec<Vec<[f64; 2]>>,
}

impl Deployment {
    pub fn distance(&self, tx_cell: usize, user: UserId) -> f64 {
        let bs = self.bs_positions[tx_cell];
        let ue = self.users[user.cell][user.k];
        ((bs[0] - ue[0]).powi(2) + (bs[1] - ue[1]).powi(2)).sqrt()
    }
}

/// Draws a deployment: phantom BSs evenly spaced on a ring at half the macro
/// radius, users around their serving BS with uniform angle and
/// folded-Gaussian distance (sigma = radius/3) clamped into the cell.
///
/// Users landing within the minimum link distance of any base station are
/// redrawn so every path-loss evaluation stays in-domain.
pub fn generate(preset: Preset, seed: u64) -> Deployment {
    generate_with(preset, &preset.params(), seed)
}

/// [`generate`] for customized dimensions (cell counts, radii, user counts).
/// `preset` tags the propagation environment of the phantom tier.
pub fn generate_with(preset: Preset, p: &PresetParams, seed: u64) -> Deployment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut bs_positions = vec![[0.0, 0.0]];
    let ring = 0.5 * p.macro_radius_m;
    for i in 0..p.phantom_cells {
        let angle = 2.0 * std::f64::consts::PI * i as f64 / p.phantom_cells as f64;
        bs_positions.push([ring * angle.cos(), ring * angle.sin()]);
    }

    let mut users = Vec::with_capacity(p.phantom_cells + 1);
    for (cell, &center) in bs_positions.iter().enumerate() {
        let radius = if cell == 0 {
            p.macro_radius_m
        } else {
            p.phantom_radius_m
        };
        let sigma = radius / 3.0;
        let normal = Normal::new(0.0, sigma).expect("positive sigma");
        let count = if cell == 0 {
            p.macro_users
        } else {
            p.users_per_phantom
        };
        let mut cell_users = Vec::with_capacity(count);
        for _ in 0..count {
            let pos = loop {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let dist: f64 = normal.sample(&mut rng);
                let dist = dist.abs().clamp(MIN_LINK_DISTANCE_M, radius);
                let pos = [
                    center[0] + dist * angle.cos(),
                    center[1] + dist * angle.sin(),
                ];
                let clear = bs_positions.iter().all(|bs| {
                    let d = ((bs[0] - pos[0]).powi(2) + (bs[1] - pos[1]).powi(2)).sqrt();
                    d >= MIN_LINK_DISTANCE_M
                });
                if clear {
                    break pos;
                }
            };
            cell_users.push(pos);
        }
        users.push(cell_users);
    }
    Deployment {
        preset,
        seed,
        bs_positions,
        users,
    }
}

/// Link class for a transmitter/receiver pair under a preset.
pub fn link_type(tx_cell: usize, rx: UserId, preset: Preset) -> LinkType {
    match (tx_cell == 0, rx.cell == 0) {
        (true, true) => LinkType::MbsToMue,
        (true, false) => LinkType::MbsInterferingPue,
        (false, true) => LinkType::PbsInterferingMue,
        (false, false) => match preset {
            Preset::Indoor => LinkType::PbsToIndoorPue,
            Preset::Outdoor => LinkType::PbsToOutdoorPue,
        },
    }
}

/// Building boundaries a link crosses beyond what its path-loss row already
/// charges. The rows charge one wall per macro/phantom tier crossing; an
/// indoor phantom BS interfering a *different* building's indoor user exits
/// its own building and penetrates the target's, so two extra walls apply.
fn extra_wall_crossings(tx_cell: usize, rx: UserId, preset: Preset) -> f64 {
    if preset == Preset::Indoor && tx_cell >= 1 && rx.cell >= 1 && tx_cell != rx.cell {
        2.0
    } else {
        0.0
    }
}

/// Realizes the gain tensor for one band: per-link shadowing, per-subcarrier
/// fading (or one draw per link under [`FadingMode::PerLink`]), composed
/// with the preset's path loss.
pub fn realize_gains<R: Rng + ?Sized>(
    deployment: &Deployment,
    band: Band,
    cfg: &NetworkConfig,
    params: &PropagationParams,
    fading: FadingMode,
    rng: &mut R,
) -> ChannelGains {
    let n_sc = cfg.subcarriers(band);
    let preset = deployment.preset;
    let tx_cells: Vec<usize> = match band {
        Band::F1 => (0..=cfg.phantom_cells).collect(),
        Band::F2 => (1..=cfg.phantom_cells).collect(),
    };
    // Draw every link's randomness up front, in a fixed order that does not
    // depend on how the tensor is later traversed.
    let mut link_gains =
        vec![vec![0.0f64; n_sc]; tx_cells.len() * cfg.total_users()];
    let mut flat = 0usize;
    for &tx in &tx_cells {
        for cell in 0..=cfg.phantom_cells {
            for k in 0..cfg.users_per_cell[cell] {
                let user = UserId { cell, k };
                let link = link_type(tx, user, preset);
                let d = deployment.distance(tx, user);
                let loss_db = path_loss(link, d, params).expect("d >= d_min")
                    + extra_wall_crossings(tx, user, preset) * params.wall_loss_db;
                let shadow_db = Normal::new(0.0, params.shadow_sigma_db)
                    .expect("sigma >= 0")
                    .sample(rng);
                let mut fade: f64 = Exp1.sample(rng);
                for sc in 0..n_sc {
                    if sc > 0 && fading == FadingMode::PerSubcarrier {
                        fade = Exp1.sample(rng);
                    }
                    link_gains[flat][sc] = channel_linear_gain(loss_db, shadow_db, fade);
                }
                flat += 1;
            }
        }
    }
    let user_offset = {
        let mut offsets = vec![0usize; cfg.phantom_cells + 2];
        for cell in 0..=cfg.phantom_cells {
            offsets[cell + 1] = offsets[cell] + cfg.users_per_cell[cell];
        }
        offsets
    };
    let total_users = cfg.total_users();
    ChannelGains::from_fn(
        band,
        cfg.phantom_cells,
        &cfg.users_per_cell,
        n_sc,
        cfg.noise_power,
        |tx, user, sc| {
            let tx_idx = match band {
                Band::F1 => tx,
                Band::F2 => tx - 1,
            };
            let row = tx_idx * total_users + user_offset[user.cell] + user.k;
            link_gains[row][sc]
        },
    )
    .expect("composite gains are positive")
}

/// Path loss in dB for every link of a deployment (no randomness), mainly
/// for diagnostics.
pub fn mean_path_loss_db(deployment: &Deployment, tx_cell: usize, user: UserId) -> f64 {
    let params = PropagationParams::default();
    let link = link_type(tx_cell, user, deployment.preset);
    path_loss(link, deployment.distance(tx_cell, user), &params).expect("d >= d_min")
}

/// Convenience wrapper bundling what a Monte Carlo trial needs.
pub struct TrialChannels {
    pub deployment: Deployment,
    pub f1: ChannelGains,
    pub f2: ChannelGains,
}

/// Deterministically realizes deployment and both bands' gains for a trial
/// seed. Separate stream indices decorrelate geometry, F1, and F2 draws.
pub fn realize_trial(
    preset: Preset,
    geometry: &PresetParams,
    cfg: &NetworkConfig,
    params: &PropagationParams,
    fading: FadingMode,
    seed: u64,
) -> TrialChannels {
    let deployment = generate_with(preset, geometry, seed);
    let mut rng_f1 = ChaCha8Rng::seed_from_u64(seed);
    rng_f1.set_stream(1);
    let mut rng_f2 = ChaCha8Rng::seed_from_u64(seed);
    rng_f2.set_stream(2);
    let f1 = realize_gains(&deployment, Band::F1, cfg, params, fading, &mut rng_f1);
    let f2 = realize_gains(&deployment, Band::F2, cfg, params, fading, &mut rng_f2);
    TrialChannels {
        deployment,
        f1,
        f2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_constants_pin_table_values() {
        let indoor = Preset::Indoor.params();
        assert_eq!(indoor.macro_radius_m, 1000.0);
        assert_eq!(indoor.phantom_radius_m, 50.0);
        assert_eq!(indoor.macro_power_dbm, 47.0);
        assert_eq!(indoor.phantom_power_dbm, 23.0);
        assert_eq!(indoor.macro_users, 10);
        assert_eq!(indoor.phantom_cells, 4);
        assert_eq!(indoor.users_per_phantom, 5);
        assert_eq!(indoor.subcarriers, 8);
        assert_eq!(indoor.subcarrier_bw_hz, 180e3);
        assert_eq!(indoor.trials, 80);

        let outdoor = Preset::Outdoor.params();
        assert_eq!(outdoor.macro_radius_m, 1000.0);
        assert_eq!(outdoor.phantom_radius_m, 250.0);
        assert_eq!(outdoor.phantom_power_dbm, 30.0);
        assert_eq!(outdoor.macro_power_dbm, 47.0);

        let cfg = Preset::Indoor.network_config(0.0);
        assert_eq!(cfg.users_per_cell, vec![10, 5, 5, 5, 5]);
        assert!((cfg.power_budget[0] - 50.11872336272722).abs() < 1e-10);
        assert!((cfg.power_budget[1] - 0.19952623149688797).abs() < 1e-12);
        assert!((cfg.power_mask[0] - cfg.power_budget[0] / 8.0).abs() < 1e-15);
        assert!((cfg.noise_power - 7.166e-16).abs() < 1e-18);
        cfg.validate().unwrap();
    }

    #[test]
    fn deployment_counts_match_preset() {
        let d = generate(Preset::Indoor, 42);
        assert_eq!(d.bs_positions.len(), 5);
        assert_eq!(d.users[0].len(), 10);
        for cell in 1..=4 {
            assert_eq!(d.users[cell].len(), 5);
        }
    }

    #[test]
    fn deployment_is_deterministic() {
        assert_eq!(generate(Preset::Outdoor, 7), generate(Preset::Outdoor, 7));
        assert_ne!(generate(Preset::Outdoor, 7), generate(Preset::Outdoor, 8));
    }

    #[test]
    fn users_stay_inside_their_cells() {
        for seed in 0..200u64 {
            for preset in [Preset::Indoor, Preset::Outdoor] {
                let p = preset.params();
                let d = generate(preset, seed);
                for (cell, cell_users) in d.users.iter().enumerate() {
                    let radius = if cell == 0 {
                        p.macro_radius_m
                    } else {
                        p.phantom_radius_m
                    };
                    for (k, _) in cell_users.iter().enumerate() {
                        let dist = d.distance(cell, UserId { cell, k });
                        assert!(
                            dist <= radius + 1e-9,
                            "{preset:?} seed {seed}: user ({cell},{k}) at {dist} m"
                        );
                        // No user sits on top of any BS.
                        for tx in 0..d.bs_positions.len() {
                            assert!(d.distance(tx, UserId { cell, k }) >= MIN_LINK_DISTANCE_M);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn phantom_ring_is_centered() {
        let d = generate(Preset::Indoor, 0);
        assert_eq!(d.bs_positions[0], [0.0, 0.0]);
        for bs in &d.bs_positions[1..] {
            let r = (bs[0].powi(2) + bs[1].powi(2)).sqrt();
            assert!((r - 500.0).abs() < 1e-9);
        }
    }

    #[test]
    fn link_types_cover_the_table() {
        let mue = UserId { cell: 0, k: 0 };
        let pue = UserId { cell: 1, k: 0 };
        assert_eq!(link_type(0, mue, Preset::Indoor), LinkType::MbsToMue);
        assert_eq!(
            link_type(0, pue, Preset::Indoor),
            LinkType::MbsInterferingPue
        );
        assert_eq!(
            link_type(1, pue, Preset::Indoor),
            LinkType::PbsToIndoorPue
        );
        assert_eq!(
            link_type(2, pue, Preset::Outdoor),
            LinkType::PbsToOutdoorPue
        );
        assert_eq!(
            link_type(1, mue, Preset::Outdoor),
            LinkType::PbsInterferingMue
        );
    }

    #[test]
    fn f2_gains_have_no_macro_transmitter() {
        let cfg = Preset::Indoor.network_config(0.0);
        let t = realize_trial(
            Preset::Indoor,
            &Preset::Indoor.params(),
            &cfg,
            &PropagationParams::default(),
            FadingMode::PerSubcarrier,
            5,
        );
        assert_eq!(t.f2.transmitters().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(t.f1.transmitters().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn gains_are_deterministic_and_positive() {
        let cfg = Preset::Outdoor.network_config(0.0);
        let a = realize_trial(
            Preset::Outdoor,
            &Preset::Outdoor.params(),
            &cfg,
            &PropagationParams::default(),
            FadingMode::PerSubcarrier,
            11,
        );
        let b = realize_trial(
            Preset::Outdoor,
            &Preset::Outdoor.params(),
            &cfg,
            &PropagationParams::default(),
            FadingMode::PerSubcarrier,
            11,
        );
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.f2, b.f2);
        for tx in a.f1.transmitters() {
            for cell in 0..=cfg.phantom_cells {
                for k in 0..cfg.users_per_cell[cell] {
                    for sc in 0..cfg.subcarriers_f1 {
                        assert!(a.f1.gain(tx, UserId { cell, k }, sc) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn per_link_fading_is_flat_across_subcarriers() {
        let cfg = Preset::Indoor.network_config(0.0);
        let d = generate(Preset::Indoor, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = realize_gains(
            &d,
            Band::F1,
            &cfg,
            &PropagationParams::default(),
            FadingMode::PerLink,
            &mut rng,
        );
        let user = UserId { cell: 1, k: 0 };
        let first = g.gain(0, user, 0);
        for sc in 1..cfg.subcarriers_f1 {
            assert_eq!(g.gain(0, user, sc), first);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = realize_gains(
            &d,
            Band::F1,
            &cfg,
            &PropagationParams::default(),
            FadingMode::PerSubcarrier,
            &mut rng,
        );
        let distinct = (1..cfg.subcarriers_f1).any(|sc| g.gain(0, user, sc) != first);
        assert!(distinct);
    }
}
