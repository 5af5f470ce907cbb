//! Shares, the 2D erasure-coded data square, and coding fraud proofs.
//!
//! Block data is serialized into fixed-size shares, arranged into a k×k
//! square (k a power of two, padded with reserved empty shares), and extended
//! to 2k×2k with a systematic Reed-Solomon code over GF(2^8): first every row
//! is stretched to twice its length, then every column of the widened square
//! is stretched downward. Each of the 2k rows and 2k columns gets its own
//! namespaced Merkle root, so a sample can be authenticated against a line
//! root with a path that is logarithmic in the *side* of the square rather
//! than its area.
//!
//! A share travels as `ns(8 bytes, big-endian) || data(payload size)`.
//! Original shares self-describe: their first eight bytes are the namespace.
//! Parity cells are raw codeword output; they carry the reserved parity
//! namespace as their tree label and their bytes have no internal structure.

mod fraud;
mod gf;
mod rs;
mod shares;
mod square;

pub use fraud::{gen_coding_fraud_proof, verify_coding_fraud_proof, CodingFraudProof};
pub use rs::LineCodec;
pub use shares::{parse_shares, split_to_shares};
pub use square::{cell_label, reconstruct, CellGrid, ExtendedDataSquare, ReconstructError};

use crate::nmt::{NamespaceId, NAMESPACE_SIZE};
use thiserror::Error;

/// Largest supported original square side. The row code lives in GF(2^8), so
/// an extended line cannot exceed 256 symbols.
pub const MAX_SQUARE_SIDE: usize = 128;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodingError {
    /// Share stream could not be parsed back into messages.
    #[error("malformed shares: {0}")]
    MalformedShares(&'static str),
    /// The data volume needs a square side beyond [`MAX_SQUARE_SIDE`].
    #[error("data needs square side {needed}, maximum is {MAX_SQUARE_SIDE}")]
    SquareTooLarge { needed: usize },
    /// Fraud proof generation was asked for a line that is correctly coded.
    #[error("line {index} on the {axis:?} axis matches its commitment")]
    NotFraudulent { axis: Axis, index: usize },
    /// An operation needed a fully present line or square.
    #[error("line or square has missing cells")]
    Incomplete,
    /// Inconsistent share sizes or geometry.
    #[error("invalid input: {0}")]
    Invalid(&'static str),
}

/// Row or column of the square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    Row,
    Col,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::Row => Axis::Col,
            Axis::Col => Axis::Row,
        }
    }
}

/// One cell of the square: its tree label plus the full wire bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Share {
    label: NamespaceId,
    bytes: Vec<u8>,
}

impl Share {
    /// Builds an original-data share: `ns || chunk`, zero-padded to the
    /// payload size.
    pub fn original(ns: NamespaceId, chunk: &[u8], payload_size: usize) -> Self {
        assert!(chunk.len() <= payload_size);
        let mut bytes = Vec::with_capacity(NAMESPACE_SIZE + payload_size);
        bytes.extend_from_slice(&ns.to_bytes());
        bytes.extend_from_slice(chunk);
        bytes.resize(NAMESPACE_SIZE + payload_size, 0);
        Share { label: ns, bytes }
    }

    /// An all-zero share in the reserved padding namespace.
    pub fn pad(payload_size: usize) -> Self {
        Share::original(NamespaceId::PAD, &[], payload_size)
    }

    /// Wraps raw parity output produced by the line code.
    pub fn parity(bytes: Vec<u8>) -> Self {
        Share { label: NamespaceId::PARITY, bytes }
    }

    /// Reinterprets received bytes as an original share, reading the
    /// namespace back out of the prefix.
    pub fn from_original_bytes(bytes: Vec<u8>) -> Result<Self, CodingError> {
        if bytes.len() <= NAMESPACE_SIZE {
            return Err(CodingError::MalformedShares("share shorter than its prefix"));
        }
        let label = NamespaceId::from_bytes(bytes[..NAMESPACE_SIZE].try_into().unwrap());
        Ok(Share { label, bytes })
    }

    /// The namespace this share is hashed under.
    pub fn label(&self) -> NamespaceId {
        self.label
    }

    /// Full wire bytes (prefix included for original shares).
    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// Payload portion of an original share.
    pub fn payload(&self) -> &[u8] {
        &self.bytes[NAMESPACE_SIZE..]
    }

    /// The leaf fed to a line tree: label as namespace, full bytes as payload.
    pub fn as_leaf(&self) -> crate::nmt::Message {
        crate::nmt::Message::reserved(self.label, self.bytes.clone())
    }
}

#[cfg(test)]
mod tests;
