//! The stateful block contract, shared pool, draw history, RNG streams and
//! the sequential-scan sampler loop.

mod block;
mod history;
mod pool;
mod rng;
mod sampler;
mod value;

pub use block::{Block, BlockDescriptor, KernelSpec, StatefulBlock, Transition};
pub use history::{History, HistoryField};
pub use pool::{EntryRole, PoolEntry, SharedPool};
pub use rng::{substream, McRng, RngStreams, StreamPosition, PREDICTION_STREAM, SAMPLING_STREAM};
pub use sampler::{CompositeBlock, Sampler};
pub use value::{flat_labels, Value, ValueKind};
