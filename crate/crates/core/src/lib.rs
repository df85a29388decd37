//! Core algorithms for classifying WiFi protocol families directly from raw
//! IQ samples.
//!
//! The crate is `no_std` (it needs `alloc`) and carries everything that is
//! pure computation: signal representation and AWGN, FIR/rational resampling,
//! standard-inspired 802.11b/g/n/ax burst synthesis, fading channels, the
//! sequence/slice/token partitioning, an encoder-only transformer with
//! hand-written backpropagation (plus a 1D-CNN baseline), a correlation-based
//! preamble format detector and the evaluation metrics.
//!
//! File formats, the streaming pipeline and the command line live in the
//! `protoclass` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod channel;
pub mod dsp;
pub mod error;
pub mod legacy;
pub mod metrics;
pub mod model;
pub mod signal;
pub mod sweep;
pub mod tokenizer;
pub mod waveform;

pub use error::{Error, Result};
pub use signal::{ComplexSignal, InterleavedVector};

/// Complex baseband sample.
pub type Complex = num_complex::Complex64;

/// Deterministic random source used throughout the crate.
pub type RandomSource = rand_chacha::ChaCha8Rng;

/// Builds a [`RandomSource`] from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> RandomSource {
    use rand::SeedableRng;
    RandomSource::seed_from_u64(seed)
}

/// Derives an independent seed for sub-stream `stream` of `seed`
/// (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
