use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

/// The generator used by every kernel. ChaCha is counter based, so substreams
/// are independent by construction and positions can be saved exactly.
pub type McRng = ChaCha20Rng;

pub const SAMPLING_STREAM: u64 = 0;
pub const PREDICTION_STREAM: u64 = 1;
const PREDICTION_FLAG: u64 = 1 << 63;

/// Position of one substream, enough to compare or restore generator state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamPosition {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

/// A seed split into a sampling substream and a prediction substream.
///
/// Substream ids: 0 = sampling, 1 = prediction, 2+k = sampling for validation
/// chain k (whose prediction stream sets the high bit of the same id).
#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    sampling: McRng,
    prediction: McRng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self::with_ids(seed, SAMPLING_STREAM, PREDICTION_STREAM)
    }

    pub fn for_chain(seed: u64, chain: u64) -> Self {
        let id = 2 + chain;
        Self::with_ids(seed, id, id | PREDICTION_FLAG)
    }

    fn with_ids(seed: u64, sampling_id: u64, prediction_id: u64) -> Self {
        Self {
            seed,
            sampling: substream(seed, sampling_id),
            prediction: substream(seed, prediction_id),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sampling(&mut self) -> &mut McRng {
        &mut self.sampling
    }

    pub fn prediction(&mut self) -> &mut McRng {
        &mut self.prediction
    }

    pub fn sampling_position(&self) -> StreamPosition {
        position(self.seed, &self.sampling)
    }

    pub fn prediction_position(&self) -> StreamPosition {
        position(self.seed, &self.prediction)
    }
}

/// A fresh generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> McRng {
    let mut rng = McRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn position(seed: u64, rng: &McRng) -> StreamPosition {
    StreamPosition {
        seed,
        stream: rng.get_stream(),
        word_pos: rng.get_word_pos(),
    }
}
