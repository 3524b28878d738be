//! Knowledge-graph-aware neural collective matrix factorization for
//! cross-domain recommendation.
//!
//! The pipeline has two stages. [`kg_encoder`] pretrains entity embeddings
//! on a knowledge graph with a relational graph-convolution autoencoder.
//! [`neucmf`] then factorizes two rating matrices with a shared user table,
//! coupling item embeddings to the frozen entity embeddings through a
//! mutual-information discriminator. [`baselines`] and [`eval`] provide the
//! comparison models, metrics and experiment harness.

pub mod baselines;
pub mod cli;
mod domain;
pub mod error;
pub mod eval;
pub mod interactions;
pub mod kg;
pub mod kg_encoder;
pub mod neucmf;
pub mod numerics;
pub mod training;

pub use domain::Domain;
pub use error::{Error, ErrorKind, Result};
