//! Core domain types and rate/interference primitives.
//!
//! The network is a single macro cell (cell 0) overlaid with `M` phantom
//! cells (cells `1..=M`). Two downlink bands exist: F1 is shared by the
//! macro and the phantom tier (co-channel interference between tiers),
//! F2 is used by phantom cells only. Everything downstream — water-filling,
//! the iterative allocators, the brute-force oracle — is expressed in terms
//! of the types here.
//!
//! Rates are kept in nats per channel use throughout; conversion to bit/s
//! happens only at the reporting edge (see [`nats_to_bits_per_sec`]).

use thiserror::Error;

/// Absolute tolerance for power-budget checks, in watts.
pub const POWER_EPS: f64 = 1e-9;

/// Relative tolerance for rate aggregation checks.
pub const RATE_REL_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("band mismatch: allocation is {alloc:?}, gains are {gains:?}")]
    BandMismatch { alloc: Band, gains: Band },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Downlink frequency band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Band {
    /// Shared band: macro + phantom transmitters.
    F1,
    /// Phantom-only band: the macro cell never transmits here.
    F2,
}

/// A user terminal, identified by its serving cell and its index within
/// that cell. Cell 0 is the macro cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UserId {
    pub cell: usize,
    pub k: usize,
}

/// Static network dimensioning and the constraints every allocator obeys.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Number of phantom cells (M). The macro cell is implicit.
    pub phantom_cells: usize,
    /// Users per cell, index 0 = macro. Length `phantom_cells + 1`.
    pub users_per_cell: Vec<usize>,
    /// Subcarriers in the shared band F1.
    pub subcarriers_f1: usize,
    /// Subcarriers in the phantom-only band F2.
    pub subcarriers_f2: usize,
    /// Per-cell total transmit power budget, watts. Length `phantom_cells + 1`.
    pub power_budget: Vec<f64>,
    /// Per-cell per-subcarrier spectral mask, watts. Length `phantom_cells + 1`.
    pub power_mask: Vec<f64>,
    /// Minimum guaranteed macro sum rate on F1, nats/use.
    pub min_macro_rate: f64,
    /// Per-subcarrier thermal noise power, watts.
    pub noise_power: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let cells = self.phantom_cells + 1;
        if self.users_per_cell.len() != cells {
            return Err(ModelError::InvalidConfig(format!(
                "users_per_cell has {} entries, expected {}",
                self.users_per_cell.len(),
                cells
            )));
        }
        if self.power_budget.len() != cells || self.power_mask.len() != cells {
            return Err(ModelError::InvalidConfig(
                "power_budget/power_mask must have one entry per cell".into(),
            ));
        }
        if self.users_per_cell.contains(&0) {
            return Err(ModelError::InvalidConfig(
                "every cell needs at least one user".into(),
            ));
        }
        if self.subcarriers_f1 == 0 || self.subcarriers_f2 == 0 {
            return Err(ModelError::InvalidConfig(
                "subcarrier counts must be >= 1".into(),
            ));
        }
        for cell in 0..cells {
            let th = self.power_budget[cell];
            let mask = self.power_mask[cell];
            if !(th > 0.0 && th.is_finite()) || !(mask > 0.0 && mask.is_finite()) {
                return Err(ModelError::InvalidConfig(format!(
                    "cell {cell}: powers must be positive and finite"
                )));
            }
            if mask > th + POWER_EPS {
                return Err(ModelError::InvalidConfig(format!(
                    "cell {cell}: spectral mask {mask} exceeds budget {th}"
                )));
            }
        }
        if !(self.min_macro_rate >= 0.0 && self.min_macro_rate.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "min_macro_rate must be finite and >= 0".into(),
            ));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "noise_power must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.phantom_cells + 1
    }

    pub fn subcarriers(&self, band: Band) -> usize {
        match band {
            Band::F1 => self.subcarriers_f1,
            Band::F2 => self.subcarriers_f2,
        }
    }

    pub fn total_users(&self) -> usize {
        self.users_per_cell.iter().sum()
    }

    pub fn phantom_users(&self) -> usize {
        self.users_per_cell[1..].iter().sum()
    }
}

/// Linear power gains from every transmitting base station to every user
/// on every subcarrier of one band.
///
/// On F2 the macro cell is not a transmitter and has no rows in the tensor.
/// All gains are strictly positive and finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelGains {
    band: Band,
    phantom_cells: usize,
    users_per_cell: Vec<usize>,
    user_offsets: Vec<usize>,
    subcarriers: usize,
    noise_power: f64,
    /// Flat tensor, index = (tx_row * total_users + user_flat) * subcarriers + sc.
    gains: Vec<f64>,
}

impl ChannelGains {
    /// Builds the tensor by evaluating `gain_fn(tx_cell, user, sc)` for every
    /// transmitter of the band, every user, every subcarrier.
    pub fn from_fn<F>(
        band: Band,
        phantom_cells: usize,
        users_per_cell: &[usize],
        subcarriers: usize,
        noise_power: f64,
        mut gain_fn: F,
    ) -> Result<Self, ModelError>
    where
        F: FnMut(usize, UserId, usize) -> f64,
    {
        if users_per_cell.len() != phantom_cells + 1 {
            return Err(ModelError::InvalidConfig(
                "users_per_cell must have one entry per cell".into(),
            ));
        }
        if !(noise_power > 0.0 && noise_power.is_finite()) {
            return Err(ModelError::InvalidConfig(
                "noise_power must be positive".into(),
            ));
        }
        let mut user_offsets = Vec::with_capacity(users_per_cell.len() + 1);
        let mut off = 0usize;
        for &k in users_per_cell {
            user_offsets.push(off);
            off += k;
        }
        user_offsets.push(off);
        let total_users = off;

        let tx_cells: Vec<usize> = match band {
            Band::F1 => (0..=phantom_cells).collect(),
            Band::F2 => (1..=phantom_cells).collect(),
        };
        let mut gains = Vec::with_capacity(tx_cells.len() * total_users * subcarriers);
        for &tx in &tx_cells {
            for (cell, &k_count) in users_per_cell.iter().enumerate() {
                for k in 0..k_count {
                    for sc in 0..subcarriers {
                        let h = gain_fn(tx, UserId { cell, k }, sc);
                        if !(h > 0.0 && h.is_finite()) {
                            return Err(ModelError::Domain(format!(
                                "gain from cell {tx} to user ({cell},{k}) on subcarrier {sc} \
                                 must be positive and finite, got {h}"
                            )));
                        }
                        gains.push(h);
                    }
                }
            }
        }
        Ok(Self {
            band,
            phantom_cells,
            users_per_cell: users_per_cell.to_vec(),
            user_offsets,
            subcarriers,
            noise_power,
            gains,
        })
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn phantom_cells(&self) -> usize {
        self.phantom_cells
    }

    pub fn users_per_cell(&self) -> &[usize] {
        &self.users_per_cell
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Cells that transmit on this band, in index order.
    pub fn transmitters(&self) -> std::ops::RangeInclusive<usize> {
        match self.band {
            Band::F1 => 0..=self.phantom_cells,
            Band::F2 => 1..=self.phantom_cells,
        }
    }

    fn tx_row(&self, cell: usize) -> Option<usize> {
        match self.band {
            Band::F1 if cell <= self.phantom_cells => Some(cell),
            Band::F2 if cell >= 1 && cell <= self.phantom_cells => Some(cell - 1),
            _ => None,
        }
    }

    fn user_flat(&self, user: UserId) -> usize {
        debug_assert!(user.cell < self.users_per_cell.len());
        debug_assert!(user.k < self.users_per_cell[user.cell]);
        self.user_offsets[user.cell] + user.k
    }

    /// Linear gain from `tx_cell`'s base station to `user` on subcarrier `sc`.
    ///
    /// Panics if `tx_cell` does not transmit on this band.
    pub fn gain(&self, tx_cell: usize, user: UserId, sc: usize) -> f64 {
        let row = self
            .tx_row(tx_cell)
            .unwrap_or_else(|| panic!("cell {tx_cell} does not transmit on {:?}", self.band));
        let total = *self.user_offsets.last().unwrap();
        self.gains[(row * total + self.user_flat(user)) * self.subcarriers + sc]
    }
}

/// Per-band subcarrier assignment and transmit powers.
///
/// One row per transmitter of the band. Each (cell, subcarrier) slot carries
/// at most one user, so OFDMA exclusivity is structural.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    band: Band,
    phantom_cells: usize,
    subcarriers: usize,
    assign: Vec<Option<usize>>,
    power: Vec<f64>,
}

impl Allocation {
    pub fn empty(band: Band, phantom_cells: usize, subcarriers: usize) -> Self {
        let rows = match band {
            Band::F1 => phantom_cells + 1,
            Band::F2 => phantom_cells,
        };
        Self {
            band,
            phantom_cells,
            subcarriers,
            assign: vec![None; rows * subcarriers],
            power: vec![0.0; rows * subcarriers],
        }
    }

    pub fn band(&self) -> Band {
        self.band
    }

    pub fn phantom_cells(&self) -> usize {
        self.phantom_cells
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn transmitters(&self) -> std::ops::RangeInclusive<usize> {
        match self.band {
            Band::F1 => 0..=self.phantom_cells,
            Band::F2 => 1..=self.phantom_cells,
        }
    }

    fn row(&self, cell: usize) -> usize {
        match self.band {
            Band::F1 if cell <= self.phantom_cells => cell,
            Band::F2 if cell >= 1 && cell <= self.phantom_cells => cell - 1,
            _ => panic!("cell {cell} does not transmit on {:?}", self.band),
        }
    }

    pub fn assigned(&self, cell: usize, sc: usize) -> Option<usize> {
        self.assign[self.row(cell) * self.subcarriers + sc]
    }

    pub fn power(&self, cell: usize, sc: usize) -> f64 {
        self.power[self.row(cell) * self.subcarriers + sc]
    }

    /// Sets one slot. Clearing the user forces the power to zero.
    pub fn set(&mut self, cell: usize, sc: usize, user: Option<usize>, power: f64) {
        let idx = self.row(cell) * self.subcarriers + sc;
        self.assign[idx] = user;
        self.power[idx] = if user.is_some() { power } else { 0.0 };
    }

    pub fn cell_power(&self, cell: usize) -> f64 {
        let row = self.row(cell);
        self.power[row * self.subcarriers..(row + 1) * self.subcarriers]
            .iter()
            .sum()
    }

    /// Checks the allocation invariants against a config: powers within
    /// [0, mask], zero where unassigned, per-cell sums within budget.
    pub fn validate(&self, cfg: &NetworkConfig) -> Result<(), ModelError> {
        if self.phantom_cells != cfg.phantom_cells || self.subcarriers != cfg.subcarriers(self.band)
        {
            return Err(ModelError::InvalidAllocation(
                "allocation dimensions do not match config".into(),
            ));
        }
        for cell in self.transmitters() {
            for sc in 0..self.subcarriers {
                let p = self.power(cell, sc);
                if !p.is_finite() || p < 0.0 {
                    return Err(ModelError::InvalidAllocation(format!(
                        "cell {cell} sc {sc}: power {p} out of range"
                    )));
                }
                match self.assigned(cell, sc) {
                    None if p != 0.0 => {
                        return Err(ModelError::InvalidAllocation(format!(
                            "cell {cell} sc {sc}: unassigned but power {p} != 0"
                        )));
                    }
                    Some(k) if k >= cfg.users_per_cell[cell] => {
                        return Err(ModelError::InvalidAllocation(format!(
                            "cell {cell} sc {sc}: user index {k} out of range"
                        )));
                    }
                    _ => {}
                }
                if p > cfg.power_mask[cell] + POWER_EPS {
                    return Err(ModelError::InvalidAllocation(format!(
                        "cell {cell} sc {sc}: power {p} exceeds mask {}",
                        cfg.power_mask[cell]
                    )));
                }
            }
            let total = self.cell_power(cell);
            if total > cfg.power_budget[cell] + POWER_EPS {
                return Err(ModelError::InvalidAllocation(format!(
                    "cell {cell}: total power {total} exceeds budget {}",
                    cfg.power_budget[cell]
                )));
            }
        }
        Ok(())
    }
}

/// Per-user and aggregate rates for one band, nats/use.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub band: Band,
    /// Indexed like the config: `per_user[cell][k]`. On F2 the macro row is
    /// all zeros (no macro transmission there).
    pub per_user: Vec<Vec<f64>>,
    pub per_cell: Vec<f64>,
    pub phantom_total: f64,
    pub macro_total: f64,
}

impl RateReport {
    fn from_per_user(band: Band, per_user: Vec<Vec<f64>>) -> Self {
        let per_cell: Vec<f64> = per_user.iter().map(|u| u.iter().sum()).collect();
        let macro_total = per_cell[0];
        let phantom_total = per_cell[1..].iter().sum();
        Self {
            band,
            per_user,
            per_cell,
            phantom_total,
            macro_total,
        }
    }
}

/// Shannon rate for one link: `ln(1 + h*p / I)` nats/use.
pub fn rate(gain: f64, power: f64, interference: f64) -> Result<f64, ModelError> {
    if !(gain > 0.0 && gain.is_finite()) {
        return Err(ModelError::Domain(format!("gain must be > 0, got {gain}")));
    }
    if !(power >= 0.0 && power.is_finite()) {
        return Err(ModelError::Domain(format!(
            "power must be >= 0, got {power}"
        )));
    }
    if !(interference > 0.0 && interference.is_finite()) {
        return Err(ModelError::Domain(format!(
            "interference must be > 0, got {interference}"
        )));
    }
    Ok(rate_ln(gain, power, interference))
}

/// Unchecked rate kernel for hot loops. Inputs must already satisfy the
/// domain of [`rate`].
#[inline]
pub(crate) fn rate_ln(gain: f64, power: f64, interference: f64) -> f64 {
    (1.0 + gain * power / interference).ln()
}

/// Total received interference power at `user` on subcarrier `sc`: the sum
/// over all other transmitters of the band of their gain times their
/// transmit power on that subcarrier, plus thermal noise.
///
/// On F1 the macro cell is among the interferers of phantom users (and vice
/// versa); on F2 the macro cell does not transmit at all.
pub fn interference(
    alloc: &Allocation,
    gains: &ChannelGains,
    user: UserId,
    sc: usize,
) -> Result<f64, ModelError> {
    if alloc.band() != gains.band() {
        return Err(ModelError::BandMismatch {
            alloc: alloc.band(),
            gains: gains.band(),
        });
    }
    let mut total = gains.noise_power();
    for tx in gains.transmitters() {
        if tx == user.cell {
            continue;
        }
        let p = alloc.power(tx, sc);
        if p > 0.0 {
            total += gains.gain(tx, user, sc) * p;
        }
    }
    Ok(total)
}

/// Evaluates every assigned link of the allocation and aggregates per-user,
/// per-cell, and per-tier rates.
pub fn throughput(alloc: &Allocation, gains: &ChannelGains) -> Result<RateReport, ModelError> {
    if alloc.band() != gains.band() {
        return Err(ModelError::BandMismatch {
            alloc: alloc.band(),
            gains: gains.band(),
        });
    }
    if alloc.subcarriers() != gains.subcarriers() || alloc.phantom_cells() != gains.phantom_cells()
    {
        return Err(ModelError::InvalidAllocation(
            "allocation dimensions do not match gains".into(),
        ));
    }
    let mut per_user: Vec<Vec<f64>> = gains
        .users_per_cell()
        .iter()
        .map(|&k| vec![0.0; k])
        .collect();
    for cell in alloc.transmitters() {
        for sc in 0..alloc.subcarriers() {
            let p = alloc.power(cell, sc);
            if !p.is_finite() || p < 0.0 {
                return Err(ModelError::InvalidAllocation(format!(
                    "cell {cell} sc {sc}: power {p} out of range"
                )));
            }
            match alloc.assigned(cell, sc) {
                Some(k) => {
                    let user = UserId { cell, k };
                    let i = interference(alloc, gains, user, sc)?;
                    per_user[cell][k] += rate_ln(gains.gain(cell, user, sc), p, i);
                }
                None if p != 0.0 => {
                    return Err(ModelError::InvalidAllocation(format!(
                        "cell {cell} sc {sc}: unassigned but power {p} != 0"
                    )));
                }
                None => {}
            }
        }
    }
    Ok(RateReport::from_per_user(alloc.band(), per_user))
}

/// Reporting conversion: nats/use to bit/s for a given subcarrier bandwidth.
pub fn nats_to_bits_per_sec(nats_per_use: f64, bandwidth_hz: f64) -> f64 {
    nats_per_use * bandwidth_hz / std::f64::consts::LN_2
}
