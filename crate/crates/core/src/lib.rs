//! Entropic autoencoder: a deterministic autoencoder whose bottleneck is
//! batch-normalized without an affine shift, trained to reconstruct while
//! pushing up a nearest-neighbor estimate of the latent entropy. Because the
//! codes have zero mean and unit variance by construction, maximizing their
//! entropy drives them toward `N(0, I)`, so the decoder can be sampled from
//! an isotropic Gaussian or from a density fitted to the codes afterwards.

pub mod cli;
pub mod data;
pub mod density;
pub mod entropy;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{EaeError, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The crate's one generator type. Every random draw goes through a seeded
/// instance of it.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
