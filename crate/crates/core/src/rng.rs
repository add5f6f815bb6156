//! Deterministic, order-independent random streams.
//!
//! Every randomized event in a simulation is keyed by the master seed plus a
//! short tuple of integers: a purpose tag, then indices such as iteration,
//! cluster, and agent. The key is absorbed into a SplitMix64 chain whose
//! output seeds an independent ChaCha8 stream. Draws therefore depend only on
//! their key, never on evaluation order or thread interleaving.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keeping unrelated streams disjoint.
pub mod tag {
    /// Sphere direction draw for one (iteration, cluster, agent).
    pub const SPHERE: u64 = 1;
    /// Oracle representative choice for one (iteration, cluster, agent, other cluster).
    pub const REPRESENTATIVE: u64 = 2;
    /// Random initial estimate for one (cluster, agent).
    pub const INITIAL_STATE: u64 = 3;
    /// Lipschitz estimation samples inside the reference solver.
    pub const LIPSCHITZ: u64 = 4;
    /// Random starting points for solver probes.
    pub const SOLVER_START: u64 = 5;
    /// Random candidates in the brute-force best-response check.
    pub const BEST_RESPONSE: u64 = 6;
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent ChaCha8 stream for the given master seed and key tuple.
pub fn stream(master_seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mut acc = mix(master_seed);
    for &word in key {
        acc = mix(acc ^ mix(word));
    }
    let mut seed = [0u8; 32];
    let mut state = acc;
    for chunk in seed.chunks_mut(8) {
        state = mix(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
