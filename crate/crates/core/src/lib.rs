//! Feature-based unsupervised domain adaptation for fixed-dimensional speaker
//! embeddings.
//!
//! Out-of-domain training embeddings are mapped toward the second-order
//! statistics of unlabeled in-domain data with one of three linear adaptors:
//!
//! * CORAL: whiten with `(C_O + I)^{-1/2}`, re-color with `(C_I + I)^{1/2}`.
//! * feature-Distribution Adaptor (fDA): re-color only along directions where
//!   the in-domain variance, measured in the whitened out-of-domain space,
//!   exceeds one.
//! * CORAL++: z-score the in-domain eigenvalue spectrum, floor it at `alpha`,
//!   and regularize both covariances with `lambda * I` before whitening and
//!   re-coloring.
//!
//! The adapted embeddings feed a conventional scoring back-end (centering,
//! PCA, length normalization, LDA, two-covariance PLDA or cosine scoring),
//! and trials are evaluated with EER and minimum normalized detection cost.
//! [`synth`] provides a synthetic domain-shift benchmark that exercises the
//! whole chain end to end.

pub mod adapt;
pub mod backend;
pub mod cli;
pub mod embedio;
mod error;
pub mod linalg;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
