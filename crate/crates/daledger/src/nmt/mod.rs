//! Namespaced Merkle tree.
//!
//! An ordered Merkle tree whose every digest carries the lowest and highest
//! namespace found among the leaves beneath it. Leaves must be sorted by
//! namespace; the node hash refuses to combine children whose ranges are
//! inverted, so an out-of-order leaf list has *no* valid root at all. The
//! range labels are what make complete-namespace retrieval provable: a proof
//! whose first path has a left sibling reaching into the queried namespace,
//! or whose last path has a right sibling doing the same, is showing its own
//! omission.
//!
//! Byte layouts are fixed: a serialized digest is
//! `minNs(8, big-endian) || maxNs(8) || hash(32)`; a leaf preimage is
//! `0x00 || ns(8) || payload`; a node preimage is
//! `0x01 || left(48) || right(48)`. The hash is SHA-256.

mod proof;

pub use proof::{verify_namespace, AuditPath, NamespaceProof, PathStep, Side};

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Width of a namespace identifier on the wire, in bytes.
pub const NAMESPACE_SIZE: usize = 8;
/// Width of a serialized [`NamespacedDigest`], in bytes.
pub const DIGEST_SIZE: usize = 2 * NAMESPACE_SIZE + 32;

const LEAF_TAG: u8 = 0x00;
const NODE_TAG: u8 = 0x01;

/// Errors raised while hashing, building, or decoding namespaced trees.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NmtError {
    /// A leaf payload exceeded the configured maximum leaf size.
    #[error("leaf payload of {got} bytes exceeds the {max}-byte leaf limit")]
    OversizedLeaf { got: usize, max: usize },
    /// Two children were combined whose namespace ranges are inverted.
    #[error("ordering violation: left max namespace {left_max} > right min namespace {right_min}")]
    OrderingViolation { left_max: u64, right_min: u64 },
    /// The input message list is not sorted by namespace.
    #[error("unsorted input: namespace at index {index} precedes a larger one")]
    UnsortedInput { index: usize },
    /// A tree cannot be built over zero leaves.
    #[error("cannot build a tree over an empty message list")]
    EmptyTree,
    /// An application message used a reserved namespace.
    #[error("namespace {0} is reserved")]
    ReservedNamespace(u64),
    /// A serialized digest or proof could not be decoded.
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
}

/// Fixed-width application identifier. Ordered numerically; the all-ones
/// value is reserved for erasure-code parity data and the value just below it
/// for padding, so neither is usable by applications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub struct NamespaceId(pub u64);

impl NamespaceId {
    /// Reserved namespace carried by every parity share.
    pub const PARITY: NamespaceId = NamespaceId(u64::MAX);
    /// Reserved namespace for padding shares and the empty-block leaf.
    /// Sorts above every application namespace and below parity.
    pub const PAD: NamespaceId = NamespaceId(u64::MAX - 1);
    /// Smallest namespace.
    pub const MIN: NamespaceId = NamespaceId(0);

    /// True for the two reserved values.
    pub fn is_reserved(self) -> bool {
        self >= Self::PAD
    }

    /// Big-endian canonical encoding.
    pub fn to_bytes(self) -> [u8; NAMESPACE_SIZE] {
        self.0.to_be_bytes()
    }

    /// Decode from the canonical big-endian encoding.
    pub fn from_bytes(b: [u8; NAMESPACE_SIZE]) -> Self {
        NamespaceId(u64::from_be_bytes(b))
    }
}

impl std::fmt::Display for NamespaceId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A namespaced application payload: the unit stored in blocks and proved in
/// and out of namespaced trees.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Message {
    namespace: NamespaceId,
    payload: Vec<u8>,
}

impl Message {
    /// Creates an application message. Reserved namespaces are rejected.
    pub fn new(namespace: NamespaceId, payload: Vec<u8>) -> Result<Self, NmtError> {
        if namespace.is_reserved() {
            return Err(NmtError::ReservedNamespace(namespace.0));
        }
        Ok(Self { namespace, payload })
    }

    /// Creates a message in a reserved namespace. Used for padding shares,
    /// parity leaves, and the single leaf of an empty block.
    pub fn reserved(namespace: NamespaceId, payload: Vec<u8>) -> Self {
        Self { namespace, payload }
    }

    pub fn namespace(&self) -> NamespaceId {
        self.namespace
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Wire size of this message inside a block body:
    /// `ns(8) || len(4, big-endian) || payload`.
    pub fn wire_len(&self) -> usize {
        NAMESPACE_SIZE + 4 + self.payload.len()
    }
}

/// A hash value labelled with the namespace range of everything beneath it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NamespacedDigest {
    min_ns: NamespaceId,
    max_ns: NamespaceId,
    digest: [u8; 32],
}

impl NamespacedDigest {
    pub fn min_ns(&self) -> NamespaceId {
        self.min_ns
    }

    pub fn max_ns(&self) -> NamespaceId {
        self.max_ns
    }

    /// The raw 32-byte hash output, without the range labels.
    pub fn hash_bytes(&self) -> &[u8; 32] {
        &self.digest
    }

    /// True when the namespace could occur under this digest.
    pub fn contains(&self, nid: NamespaceId) -> bool {
        self.min_ns <= nid && nid <= self.max_ns
    }

    /// Canonical 48-byte encoding: `minNs || maxNs || hash`.
    pub fn to_bytes(&self) -> [u8; DIGEST_SIZE] {
        let mut out = [0u8; DIGEST_SIZE];
        out[..8].copy_from_slice(&self.min_ns.to_bytes());
        out[8..16].copy_from_slice(&self.max_ns.to_bytes());
        out[16..].copy_from_slice(&self.digest);
        out
    }

    /// Decode the canonical encoding. Fails if the range is inverted.
    pub fn from_bytes(b: &[u8]) -> Result<Self, NmtError> {
        if b.len() != DIGEST_SIZE {
            return Err(NmtError::Malformed("digest must be 48 bytes"));
        }
        let min_ns = NamespaceId::from_bytes(b[..8].try_into().unwrap());
        let max_ns = NamespaceId::from_bytes(b[8..16].try_into().unwrap());
        if min_ns > max_ns {
            return Err(NmtError::Malformed("digest namespace range inverted"));
        }
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&b[16..]);
        Ok(Self { min_ns, max_ns, digest })
    }
}

/// Hashes a leaf. The digest is `H(0x00 || ns || payload)` and both range
/// labels equal the leaf's namespace. Payloads above `max_leaf_size` are
/// rejected, which is what lets verifiers enforce a maximum block size
/// without seeing whole blocks.
pub fn ns_hash_leaf(message: &Message, max_leaf_size: usize) -> Result<NamespacedDigest, NmtError> {
    if message.payload.len() > max_leaf_size {
        return Err(NmtError::OversizedLeaf {
            got: message.payload.len(),
            max: max_leaf_size,
        });
    }
    let mut h = Sha256::new();
    h.update([LEAF_TAG]);
    h.update(message.namespace.to_bytes());
    h.update(&message.payload);
    Ok(NamespacedDigest {
        min_ns: message.namespace,
        max_ns: message.namespace,
        digest: h.finalize().into(),
    })
}

/// Combines two children into their parent digest. There is no valid parent
/// when the left child's maximum namespace exceeds the right child's minimum;
/// equal namespaces on both sides are fine (several messages may share one
/// namespace).
pub fn ns_hash_node(
    left: &NamespacedDigest,
    right: &NamespacedDigest,
) -> Result<NamespacedDigest, NmtError> {
    if left.max_ns > right.min_ns {
        return Err(NmtError::OrderingViolation {
            left_max: left.max_ns.0,
            right_min: right.min_ns.0,
        });
    }
    let mut h = Sha256::new();
    h.update([NODE_TAG]);
    h.update(left.to_bytes());
    h.update(right.to_bytes());
    Ok(NamespacedDigest {
        min_ns: left.min_ns.min(right.min_ns),
        max_ns: left.max_ns.max(right.max_ns),
        digest: h.finalize().into(),
    })
}

/// Split point of a tree over `n > 1` leaves: the largest power of two
/// strictly below `n`.
pub(crate) fn split_point(n: usize) -> usize {
    debug_assert!(n > 1);
    if n.is_power_of_two() {
        n / 2
    } else {
        // highest power of two below n
        1 << (usize::BITS - 1 - n.leading_zeros())
    }
}

/// An immutable namespaced Merkle tree over an ordered message list.
///
/// The shape is deterministic: the left subtree takes the largest power of
/// two strictly below the leaf count, recursively. Once built the tree is
/// never mutated and can be shared freely across threads.
#[derive(Debug, Clone)]
pub struct NamespaceTree {
    messages: Vec<Message>,
    leaf_digests: Vec<NamespacedDigest>,
    // digest of every subtree, keyed by half-open leaf range
    subtrees: std::collections::BTreeMap<(usize, usize), NamespacedDigest>,
    root: NamespacedDigest,
}

impl NamespaceTree {
    /// Builds the tree. The list must be non-empty and sorted by namespace;
    /// any adjacent inversion fails (first reported as `UnsortedInput` here,
    /// and independently as `OrderingViolation` inside the hash).
    pub fn build(messages: Vec<Message>, max_leaf_size: usize) -> Result<Self, NmtError> {
        if messages.is_empty() {
            return Err(NmtError::EmptyTree);
        }
        for i in 1..messages.len() {
            if messages[i - 1].namespace > messages[i].namespace {
                return Err(NmtError::UnsortedInput { index: i - 1 });
            }
        }
        let leaf_digests = messages
            .iter()
            .map(|m| ns_hash_leaf(m, max_leaf_size))
            .collect::<Result<Vec<_>, _>>()?;
        let mut subtrees = std::collections::BTreeMap::new();
        let root = Self::build_range(&leaf_digests, 0, leaf_digests.len(), &mut subtrees)?;
        Ok(Self { messages, leaf_digests, subtrees, root })
    }

    fn build_range(
        leaves: &[NamespacedDigest],
        lo: usize,
        hi: usize,
        out: &mut std::collections::BTreeMap<(usize, usize), NamespacedDigest>,
    ) -> Result<NamespacedDigest, NmtError> {
        let d = if hi - lo == 1 {
            leaves[lo]
        } else {
            let m = lo + split_point(hi - lo);
            let left = Self::build_range(leaves, lo, m, out)?;
            let right = Self::build_range(leaves, m, hi, out)?;
            ns_hash_node(&left, &right)?
        };
        out.insert((lo, hi), d);
        Ok(d)
    }

    pub fn root(&self) -> NamespacedDigest {
        self.root
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty lists
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn leaf_digest(&self, index: usize) -> NamespacedDigest {
        self.leaf_digests[index]
    }

    /// Half-open leaf index range holding `nid`, possibly empty.
    pub fn namespace_range(&self, nid: NamespaceId) -> std::ops::Range<usize> {
        let start = self.messages.partition_point(|m| m.namespace < nid);
        let end = self.messages.partition_point(|m| m.namespace <= nid);
        start..end
    }

    /// Audit path for one leaf, ordered leaf-to-root.
    pub fn audit_path(&self, index: usize) -> AuditPath {
        assert!(index < self.messages.len());
        let mut steps = Vec::new();
        let mut lo = 0usize;
        let mut hi = self.messages.len();
        // walk down from the root, recording the sibling at each branch
        while hi - lo > 1 {
            let m = lo + split_point(hi - lo);
            if index < m {
                steps.push(PathStep {
                    side: Side::Right,
                    sibling: self.subtrees[&(m, hi)],
                });
                hi = m;
            } else {
                steps.push(PathStep {
                    side: Side::Left,
                    sibling: self.subtrees[&(lo, m)],
                });
                lo = m;
            }
        }
        steps.reverse();
        AuditPath { steps }
    }

    /// Proof that the returned set of `nid` messages is complete, or — when
    /// the namespace holds nothing — a one-path proof of its absence built on
    /// the boundary leaf (the leftmost leaf with a larger namespace, or the
    /// rightmost leaf when every namespace is smaller).
    pub fn prove_namespace(&self, nid: NamespaceId) -> NamespaceProof {
        let range = self.namespace_range(nid);
        if !range.is_empty() {
            let paths = range.clone().map(|i| self.audit_path(i)).collect();
            NamespaceProof::Presence { start_index: range.start as u64, paths }
        } else {
            let boundary = if range.start == self.messages.len() {
                self.messages.len() - 1
            } else {
                range.start
            };
            NamespaceProof::Absence {
                index: boundary as u64,
                path: self.audit_path(boundary),
                boundary: self.leaf_digests[boundary],
            }
        }
    }

    /// Messages in the namespace, in leaf order.
    pub fn namespace_messages(&self, nid: NamespaceId) -> Vec<Message> {
        self.messages[self.namespace_range(nid)].to_vec()
    }
}

#[cfg(test)]
mod tests;
