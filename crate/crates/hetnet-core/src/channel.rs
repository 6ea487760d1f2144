//! Link-level channel synthesis: path loss, log-normal shadowing,
//! Rayleigh fading, and thermal noise.
//!
//! Five link classes exist, one per combination of transmitter tier and
//! receiver situation; each has its own empirical path-loss law and the
//! wall-crossing ones add a fixed penetration loss. The composite linear
//! gain of a link is `h = F * 10^((S - PL)/10)` with `F` a unit-mean
//! exponential fading draw and `S` a zero-mean Gaussian shadowing draw
//! in dB.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use thiserror::Error;

/// Shortest permitted transmitter-receiver distance, metres. The log-distance
/// laws diverge at zero, so deployments clamp positions to this.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

/// Floor for fading draws so composite gains stay strictly positive.
pub const MIN_FADE_GAIN: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("link distance {0} m is below the {MIN_LINK_DISTANCE_M} m minimum")]
    DistanceTooShort(f64),
}

/// The five modelled link classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinkType {
    /// Macro BS serving one of its own users.
    MbsToMue,
    /// Macro BS interfering a phantom user (crosses the wall).
    MbsInterferingPue,
    /// Phantom BS to an indoor phantom user.
    PbsToIndoorPue,
    /// Phantom BS to an outdoor phantom user.
    PbsToOutdoorPue,
    /// Phantom BS interfering a macro user (crosses the wall).
    PbsInterferingMue,
}

impl LinkType {
    pub const ALL: [LinkType; 5] = [
        LinkType::MbsToMue,
        LinkType::MbsInterferingPue,
        LinkType::PbsToIndoorPue,
        LinkType::PbsToOutdoorPue,
        LinkType::PbsInterferingMue,
    ];
}

/// Propagation constants shared by all links of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    /// Wall penetration loss, dB.
    pub wall_loss_db: f64,
    /// Shadowing standard deviation, dB.
    pub shadow_sigma_db: f64,
    /// Thermal noise power spectral density, dBm/Hz.
    pub noise_psd_dbm_hz: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            wall_loss_db: 10.0,
            shadow_sigma_db: 10.0,
            noise_psd_dbm_hz: -174.0,
        }
    }
}

/// Whether fading is redrawn per subcarrier or held fixed across a link's
/// subcarriers. Shadowing is always one draw per link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FadingMode {
    #[default]
    PerSubcarrier,
    PerLink,
}

/// Distance-dependent path loss in dB for one link class.
pub fn path_loss(
    link: LinkType,
    distance_m: f64,
    params: &PropagationParams,
) -> Result<f64, ChannelError> {
    if distance_m.is_nan() || distance_m < MIN_LINK_DISTANCE_M {
        return Err(ChannelError::DistanceTooShort(distance_m));
    }
    let log_d = distance_m.log10();
    let pl = match link {
        LinkType::MbsToMue => 15.3 + 37.6 * log_d,
        LinkType::MbsInterferingPue => 15.3 + 37.6 * log_d + params.wall_loss_db,
        LinkType::PbsToIndoorPue => 38.46 + 20.0 * log_d,
        LinkType::PbsToOutdoorPue => 15.3 + 37.6 * log_d,
        LinkType::PbsInterferingMue => 38.46 + 20.0 * log_d + params.wall_loss_db,
    };
    Ok(pl)
}

/// One shadowing draw (dB, zero-mean Gaussian) and one fading draw
/// (linear, unit-mean exponential).
pub fn sample_link_randomness<R: Rng + ?Sized>(
    rng: &mut R,
    params: &PropagationParams,
) -> (f64, f64) {
    let normal = Normal::new(0.0, params.shadow_sigma_db).expect("sigma must be >= 0");
    let shadow_db = normal.sample(rng);
    let fade: f64 = Exp1.sample(rng);
    (shadow_db, fade)
}

/// Composite linear gain of a link given its random draws.
///
/// Fading is floored at [`MIN_FADE_GAIN`] so the result is strictly positive.
pub fn composite_gain(
    link: LinkType,
    distance_m: f64,
    shadow_db: f64,
    fade_gain: f64,
    params: &PropagationParams,
) -> Result<f64, ChannelError> {
    let pl_db = path_loss(link, distance_m, params)?;
    Ok(linear_gain(pl_db, shadow_db, fade_gain))
}

/// Linear gain from a total loss in dB and the link's random draws.
pub fn linear_gain(loss_db: f64, shadow_db: f64, fade_gain: f64) -> f64 {
    fade_gain.max(MIN_FADE_GAIN) * 10f64.powf((shadow_db - loss_db) / 10.0)
}

/// Thermal noise power in watts over `bw_hz` of bandwidth at the default
/// -174 dBm/Hz density.
pub fn noise_power(bw_hz: f64) -> f64 {
    noise_power_with_psd(bw_hz, -174.0)
}

pub fn noise_power_with_psd(bw_hz: f64, psd_dbm_hz: f64) -> f64 {
    assert!(bw_hz > 0.0, "bandwidth must be positive");
    dbm_to_watts(psd_dbm_hz + 10.0 * bw_hz.log10())
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}
