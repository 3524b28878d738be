//! Stage 1: relational graph-convolution encoder with a DistMult decoder,
//! trained on negative-sampled triples to produce frozen entity embeddings.

mod decoder;
mod embedding_file;
mod model;
mod rgcn;
mod training;

pub use decoder::{
    distmult_raw, distmult_score, sample_negatives, sample_negatives_with, LabeledTripleBatch, MAX_CORRUPTION_RETRIES,
};
pub use embedding_file::{read_embeddings, write_embeddings};
pub use model::{encode, encode_backward, encode_with_cache, EncodeCache, EncoderLayout, KgEncoderModel, LayerIds};
pub use rgcn::{rgcn_layer_forward, LayerCache, LayerView, RgcnLayerParams};
pub use training::{
    kg_loss, kg_loss_and_grad, kg_loss_with, train_kg_encoder, KgEpochLog, KgTrainConfig, KgTrainOutcome,
};

pub(crate) use training::bce;
