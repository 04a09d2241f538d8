//! Post-hoc compression of pre-computed sentence embeddings.
//!
//! * [`store`]: EMB1/TSV matrices, pair and label files, synthetic corpora.
//! * [`linalg`]: eigen/singular decompositions with fixed conventions.
//! * [`reducers`]: PCA, truncated SVD, kernel PCA, Gaussian random
//!   projection and a one-hidden-layer autoencoder behind one fit/transform
//!   contract, with the PRJ1 model format.
//! * [`probe`]: cosine, Spearman, pair features and a logistic probe.
//! * [`eval`]: inductive/transductive fitting, task runners and sweeps.
//! * [`bench`]: wall-clock medians of fit and transform.

pub mod bench;
pub mod eval;
pub mod linalg;
pub mod probe;
pub mod reducers;
pub mod store;
