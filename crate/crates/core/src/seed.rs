//! Counter-based seed derivation.
//!
//! Every rollout of a run gets its own generator, seeded from
//! `(master, iteration, index, purpose)`. The derived seed does not depend
//! on the order in which rollouts are executed, so the M rollouts of one
//! estimate can run on any number of threads and still reproduce bit for
//! bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    /// Perturbation draw for the K estimator.
    PerturbK = 1,
    /// Rollout under a K perturbation.
    RolloutK = 2,
    /// Perturbation draw for the Sigma estimator.
    PerturbSigma = 3,
    /// Rollout under a Sigma perturbation.
    RolloutSigma = 4,
    /// Rollouts used only for reporting an estimated cost.
    Report = 5,
    Other = 6,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes the four coordinates into one 64-bit seed.
pub fn derive(master: u64, iteration: u64, index: u64, purpose: Purpose) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ iteration);
    h = splitmix64(h ^ index.rotate_left(17));
    splitmix64(h ^ (purpose as u64).rotate_left(41))
}

pub fn rng(master: u64, iteration: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, iteration, index, purpose))
}
