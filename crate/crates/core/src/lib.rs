//! Networks of Poisson-Dirichlet process (Pitman-Yor) nodes for short texts with
//! hashtags, sampled by collapsed Gibbs, coupled to a Gaussian-process random
//! function model of the author follower network.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, snapshots and the
//! command line live in the `tntm` crate.
//!
//! Layout:
//!
//! * [`pdp`]: one restaurant. Predictive rule, seating and unseating of customers,
//!   concentration resampling.
//! * [`graph`]: declarative DAGs of restaurants ([`graph::GraphSpec`]), their
//!   instantiation over authors/documents/topics and the collapsed Gibbs sampler.
//! * [`tn`]: builders for the Twitter-Network model, its baselines and ablations.
//! * [`gp`]: kernels, Gram factors, the logistic link likelihood, pCN updates of the
//!   latent link function and the coupling ratio for author-topic moves.
//! * [`engine`]: the alternating schedule, traces and the Geweke harness.
//! * [`corpus`]: in-memory corpora, splitting and the synthetic generator.
//! * [`eval`]: perplexity, clustering metrics, coherence, labeling, recommendation.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod engine;
pub mod error;
pub mod eval;
pub mod gp;
pub mod graph;
pub mod math;
pub mod pdp;
pub mod tn;

pub use error::{Error, Result};

/// Random number generator used by every chain. Its state is part of a snapshot.
pub type ChainRng = rand_chacha::ChaCha8Rng;

/// Builds a chain generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> ChainRng {
    use rand::SeedableRng;
    ChainRng::seed_from_u64(seed)
}
