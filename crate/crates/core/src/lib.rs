//! Energy-efficient user association and beamforming for fog radio access
//! networks.

pub mod al;
pub mod baselines;
pub mod beamformer;
pub mod channel;
pub mod error;
pub mod harness;
pub mod heuristic;
pub mod metrics;
pub mod power;
pub mod rng;
pub mod solution;
pub mod topology;

pub use beamformer::{ActiveSet, Beamformer};
pub use channel::{ChannelModel, ChannelSet, CsiView};
pub use error::{Error, Result};
pub use power::PowerParams;
pub use rng::RngSeed;
pub use topology::{NetworkTopology, TopologyConfig};
