//! Seeded, stream-addressable randomness.
//!
//! Every stochastic routine in this crate derives its randomness from an
//! explicit 64-bit seed plus a stream id, so results are reproducible
//! bit-for-bit and independent of scheduling: draw `s` of a simulation reads
//! from `stream(seed, s)` no matter which thread evaluates it.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// A ChaCha12 generator positioned on stream `stream_id` of `seed`.
pub fn stream(seed: u64, stream_id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Stream addressed by a pair, e.g. `(date_index, repetition)`.
///
/// Both components must fit in 32 bits; they are packed into the 64-bit
/// stream id so distinct pairs never collide.
pub fn stream2(seed: u64, hi: u32, lo: u32) -> ChaCha12Rng {
    stream(seed, ((hi as u64) << 32) | lo as u64)
}

/// Uniform draw in the open interval (0, 1).
///
/// Uses the top 53 bits of the generator output, offset by half an ulp so
/// neither endpoint can be produced.
pub fn uniform_open01(rng: &mut ChaCha12Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inverse-CDF of a uniform.
pub fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    crate::normal::inverse_cdf(uniform_open01(rng))
}
