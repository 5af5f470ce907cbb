//! Chain-wide parameters.
//!
//! Everything that must be agreed on out-of-band by all participants lives
//! here: the hash function, the share geometry, leaf size limits, and the
//! default sampling effort. All golden values in the test suite were produced
//! with the defaults below.

use serde::{Deserialize, Serialize};

/// Name of the underlying 256-bit hash. The codebase is written against one
/// hash chosen per build; this string is recorded so serialized fixtures can
/// state their provenance.
pub const HASH_NAME: &str = "sha-256";

/// Name of the signature scheme used by the currency and registrar apps.
pub const SIGNATURE_NAME: &str = "schnorr-modp2048-sha256";

/// Parameters shared by every node on a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Maximum message payload size in bytes. Oversized leaves make the
    /// namespaced hash fail, which is what enforces the block size limit.
    pub max_leaf_size: usize,
    /// Share payload size in bytes (share wire size is this plus the 8-byte
    /// namespace prefix).
    pub share_payload_size: usize,
    /// Samples drawn per node per block under the probabilistic validity rule.
    pub sample_count: usize,
    /// Fixed price of one name registration, in currency units.
    pub name_price: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            max_leaf_size: 1024,
            share_payload_size: 225,
            sample_count: 15,
            name_price: 10,
        }
    }
}

impl ChainConfig {
    /// Total wire size of one share: namespace prefix plus payload.
    pub fn share_size(&self) -> usize {
        crate::nmt::NAMESPACE_SIZE + self.share_payload_size
    }
}
