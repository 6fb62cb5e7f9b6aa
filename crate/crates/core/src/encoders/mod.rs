//! Signal and text encoders, the contrastive head, and model checkpoints.

mod checkpoint;
mod model;
mod pair;
mod signal;
mod text;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, LoadedModel, ModelSpec};
pub use model::{BaselineModelConfig, ContrastiveModel, ModelConfig, MultilabelModel, StepOutput};
pub use pair::{normalize_and_pair, ContrastiveHead, EmbeddingBatch, HeadParams};
pub use signal::{decimate, SignalEncoder, SignalEncoderConfig};
pub use text::{
    FrozenEmbeddings, FrozenTextEncoder, TextEncoder, TextEncoderConfig, ToyTextEncoder,
};

/// Embedding widths the projection heads are meant to be trained with.
pub const EMBED_DIMS: [usize; 3] = [128, 256, 512];
