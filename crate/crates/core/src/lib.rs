//! Second-chance k-competitive autoencoder for text.
//!
//! A shallow tied-weight autoencoder over bag-of-words documents whose hidden
//! layer runs a competition during training: among the positive activations,
//! the strongest and the weakest units win and absorb the activation of the
//! remaining positive units, which are switched off. K-Sparse and KATE-style
//! competitive layers are included as baselines.
//!
//! - [`corpus`]: tokenizer, vocabulary, sparse document vectors, 20 Newsgroups
//!   loader and the `CAE1` archive format
//! - [`nn`]: encoder, competitive layers, decoder, loss and analytic backward pass
//! - [`train`]: minibatch training, optimizers and finite-difference gradient checks
//! - [`eval`]: encodings, per-unit topics, softmax classifier and metrics
//! - [`model_file`]: the `SCAT` model format

pub mod corpus;
pub mod eval;
pub mod model_file;
pub mod nn;
pub mod train;

pub use corpus::{CorpusConfig, DocMatrix, SparseRow, Vocabulary, Weighting};
pub use model_file::ModelFile;
pub use nn::{Competition, ModelParams, Variant};
pub use train::{fit, TrainConfig, TrainReport};
