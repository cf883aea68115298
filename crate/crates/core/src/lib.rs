//! Node-categorization analysis of simulations on complex networks.
//!
//! The pipeline runs in stages, each of which can be driven on its own:
//!
//! 1. [`generators`] grows a Holme–Kim or connecting-nearest-neighbor network.
//! 2. [`metrics`] computes the per-node feature vector `(k, k_nn, b, L, C)`.
//! 3. [`som`] trains a self-organizing map on the features and assigns each
//!    node to one lattice cell.
//! 4. [`sir`] and [`spd`] run an epidemic or a spatial prisoner's dilemma on
//!    the graph, recording state counts per cell in a [`trace::SimTrace`].
//! 5. [`viz`] renders heat maps of the cell statistics and pie-chart lattices
//!    of the traces as SVG.
//!
//! [`pipeline`] ties the stages together with seeded, hash-audited file
//! artifacts.

pub mod error;
pub mod generators;
pub mod graph;
pub mod metrics;
pub mod pipeline;
pub mod sir;
pub mod som;
pub mod spd;
pub mod stats;
pub mod trace;
pub mod viz;

pub use error::{Error, Result};
pub use graph::Graph;

/// Seedable generator used by every stochastic stage.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds the stage RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
