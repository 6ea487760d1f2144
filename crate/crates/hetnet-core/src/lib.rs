//! Downlink resource allocation for a two-tier OFDMA network: one macro cell
//! overlaid with phantom cells sharing band F1 under a macro minimum-rate
//! guarantee, plus a phantom-exclusive band F2.
//!
//! The crate provides:
//!
//! - [`model`]: domain types plus the rate/interference/throughput primitives;
//! - [`channel`]: path loss, shadowing, fading, and noise synthesis;
//! - [`waterfill`]: cap-limited water-filling for the macro tier;
//! - [`nlp_solver`]: projected-gradient solver for the fixed-assignment
//!   phantom power problem with the macro rate guarantee;
//! - [`f1_allocator`]: the shared-band allocator (feasibility gate, then
//!   alternating power optimization and subchannel reassignment);
//! - [`f2_allocator`]: the phantom-band allocator (dual decomposition with
//!   subgradient multiplier updates);
//! - [`oracle`]: brute-force reference solvers for desk-scale instances;
//! - [`scenario`]: indoor/outdoor deployment and channel realization presets;
//! - [`montecarlo`]: seeded trial runner, rate-guarantee sweeps, convergence
//!   traces, and solver comparisons;
//! - [`cli`]: config parsing and the `hetnet` command-line entry points.

pub mod channel;
pub mod cli;
pub mod f1_allocator;
pub mod f2_allocator;
pub mod model;
pub mod montecarlo;
pub mod nlp_solver;
pub mod oracle;
pub mod scenario;
pub mod waterfill;

pub use model::{Allocation, Band, ChannelGains, NetworkConfig, RateReport, UserId};
