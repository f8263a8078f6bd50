//! Privacy-preserving principal component analysis for horizontally
//! partitioned data.
//!
//! Data providers jointly compute the column means and the covariance
//! matrix of their pooled rows through secure addition only, either with
//! Paillier encryption (an aggregating provider adds ciphertexts, the server
//! decrypts) or with additive secret sharing (providers exchange shares,
//! the server reconstructs the sums). The server eigendecomposes the
//! covariance and broadcasts the transfer matrix; each provider projects its
//! own rows and hands them to a data consumer.

pub mod encoding;
pub mod eval;
pub mod linalg;
pub mod paillier;
pub mod party;
pub mod protocol;
pub mod sharing;
pub mod transport;

pub use linalg::Matrix;
pub use party::PartyId;
