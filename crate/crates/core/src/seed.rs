//! Labelled sub-seed derivation so every random stream is reproducible from
//! one master seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// SHA-256 of the master seed followed by the label bytes.
pub fn derive_seed(master: u64, label: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.finalize().into()
}

/// A 64-bit sub-seed, suitable for handing to a child component.
pub fn sub_seed(master: u64, label: &str) -> u64 {
    let bytes = derive_seed(master, label);
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

pub fn rng(master: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_seed(master, label))
}
