//! Seeded random streams.
//!
//! Every chain owns a ChaCha20 stream keyed by the master seed and selected by
//! the chain index, so chains are independent and the batch result does not
//! depend on scheduling. Standard normals come from `rand_distr::StandardNormal`
//! (ziggurat method).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::state::StateVector;

pub type ChainRng = ChaCha20Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A vector of `dim` i.i.d. standard normal draws.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> StateVector {
    let values: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    StateVector::new(values).expect("standard normal draws are finite")
}
