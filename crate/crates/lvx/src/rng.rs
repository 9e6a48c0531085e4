//! Counter-based random streams keyed by (seed, replicate, cell).
//!
//! Every cell of every replicate gets its own ChaCha stream, so the draws
//! for a cell never depend on the order in which cells are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for cell `cell` of replicate `replicate` under base seed `seed`.
pub fn stream(seed: u64, replicate: u64, cell: u64) -> Stream {
    let mut state = seed ^ splitmix(&mut replicate.wrapping_mul(0xD1B5_4A32_D192_ED03).clone());
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(cell);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, 1, 2).random();
        let b: u64 = stream(7, 1, 2).random();
        let c: u64 = stream(7, 1, 3).random();
        let d: u64 = stream(7, 2, 2).random();
        let e: u64 = stream(8, 1, 2).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_ne!(a, e);
    }
}
