//! Small dense-tensor core with hand-written backward passes.
//!
//! Every differentiable op comes as a `*_forward` / `*_backward` pair (or a
//! loss returning its own gradient). There is no autodiff graph: callers
//! keep whatever caches a backward pass needs and thread gradients through
//! explicitly.

mod loss;
mod lstm;
mod ops;
mod optim;
mod params;
mod tensor;

pub use loss::{sigmoid, sigmoid_bce, softmax, softmax_ce, DEFAULT_LOGIT_CLAMP};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_backward, lstm_forward, BiLstmCache, LstmCache,
    LstmGrads, LstmWeights,
};
pub use ops::{
    embedding_backward, embedding_lookup, fc_backward, fc_forward, hconcat, hsplit,
    mean_pool, mean_pool_backward, FcGrads,
};
pub use optim::{Adam, AdamConfig};
pub use params::{Checkpoint, CheckpointParam, Param, ParamId, ParamStore, CHECKPOINT_VERSION};
pub use tensor::Tensor;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for a `(seed, stream)` pair. Distinct streams
/// give independent sequences from the same seed.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform_init<R: Rng>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-limit..=limit)).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("shape product matches data length")
}

/// Xavier/Glorot uniform init for a `[fan_in x fan_out]` matrix.
pub fn xavier_uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    uniform_init(&[fan_in, fan_out], limit, rng)
}
