//! Named, independently keyed random streams derived from a master seed.
//!
//! Every random draw in a run comes from a generator keyed by
//! `(master seed, stream, agent, time)`, so swapping the delay model never
//! perturbs the estimator noise and vice versa.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Additive estimator noise.
    Noise = 1,
    /// Perturbation directions of two-point estimators.
    Direction = 2,
    /// Direct-sampling delays `t - tau_i(t)`.
    Delay = 3,
    /// Transit delays of buffered messages.
    Transit = 4,
    /// Construction of objective suites.
    Suite = 5,
    /// Weighted random index draws.
    Index = 6,
    /// Property and certification suites.
    Check = 7,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(master: u64, stream: Stream, agent: u64, t: u64) -> SimRng {
    let mut state = master;
    for word in [stream as u64, agent, t] {
        state = splitmix64(&mut state) ^ word.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
