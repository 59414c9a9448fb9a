//! Robust transceiver design for a dual-functional radar-communication
//! system with movable antennas and a reconfigurable intelligent surface.
//!
//! The optimizer maximizes the worst-case radar SINR over an angular
//! uncertainty set, subject to per-user communication QoS that must hold
//! for every CSI error in a norm ball. The design variables are the
//! transmit beamformers, the RIS phases, the transmit/receive antenna
//! positions, an auxiliary receive filter bank, and the convex-hull
//! weights of the angular samples; they are updated in a two-layer
//! block-coordinate loop.

pub mod baselines;
pub mod bench;
pub mod calculus;
pub mod channel;
pub mod driver;
pub mod metrics;
pub mod scenario;
pub mod subproblems;
pub mod uncertainty;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("QoS infeasible for user {user} in block {block}")]
    QosInfeasible { user: usize, block: &'static str },
    #[error("antenna packing failed after {attempts} attempts")]
    Packing { attempts: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("solver failure in block {block}: {detail}")]
    Solver { block: &'static str, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
