//! Seeded randomness.
//!
//! Every random draw in the crate goes through [`seeded`], which returns a
//! ChaCha20 stream generator. ChaCha20 is a counter-based generator with a
//! platform-independent output stream, so a seed reproduces the same POVMs,
//! probe states and shot counts on every machine.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type ForgeRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> ForgeRng {
    ChaCha20Rng::seed_from_u64(seed)
}
