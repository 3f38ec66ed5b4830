//! Named sub-seeds, so adding a random consumer never shifts the others.

use sha2::{Digest, Sha256};

/// Seed for the stream of randomness called `name` under `seed`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_names_give_distinct_seeds() {
        assert_eq!(derive_seed(7, "split"), derive_seed(7, "split"));
        assert_ne!(derive_seed(7, "split"), derive_seed(7, "init"));
        assert_ne!(derive_seed(7, "split"), derive_seed(8, "split"));
    }
}
