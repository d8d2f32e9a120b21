//! One language branch: embeddings, Transformer encoder layers, masked mean
//! pooling and a linear projection into the joint fingerprint space.

mod config;
mod forward;
mod weights;

pub use config::EncoderConfig;
pub use forward::{
    forward, masked_mean_pool, multi_head_attention, Branch, Encoder, EncoderTrace, Fingerprint, LayerActivations,
};
pub use weights::{EncoderVars, EncoderWeights, LayerVars, LayerWeights};
