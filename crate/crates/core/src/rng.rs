//! Named random substreams derived from a single episode seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Seeds a generator from SHA-256 over the seed bytes and the component name,
/// so streams of distinct components never perturb each other.
pub fn substream(seed: u64, component: &str) -> SimRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(component.as_bytes());
    SimRng::from_seed(h.finalize().into())
}
