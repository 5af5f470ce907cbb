//! Erasure-coding fraud proofs.
//!
//! When a committed line is not a valid codeword, whoever holds the full
//! square can prove it compactly: publish the line's 2k cells together with
//! audit paths authenticating the first k of them against the *orthogonal*
//! commitments (row cells against column roots and vice versa). Those k
//! authenticated cells pin down the only codeword the line could honestly
//! be; if the root of that codeword differs from the committed line root,
//! the commitment is fraudulent. An honest line can never be framed: its
//! authenticated half re-encodes to exactly the committed line.
//!
//! Carrying paths for k cells rather than all 2k keeps the proof at
//! O(√n · log √n) bytes — the k cells with paths already determine the line,
//! so further paths prove nothing more.

use super::square::cell_label;
use super::{Axis, CodingError, ExtendedDataSquare, LineCodec, Share};
use crate::nmt::{ns_hash_leaf, AuditPath, NamespaceTree, NamespacedDigest, PathStep, Side, DIGEST_SIZE};

/// A committed line, with enough authenticated cells to re-derive what it
/// should have been.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodingFraudProof {
    pub axis: Axis,
    pub index: u32,
    pub k: u32,
    /// All 2k cells of the line as published.
    pub shares: Vec<Vec<u8>>,
    /// Audit paths for cells `0..k`, each against the orthogonal root at the
    /// cell's position.
    pub paths: Vec<AuditPath>,
}

impl CodingFraudProof {
    /// Serialized size in bytes.
    pub fn wire_len(&self) -> usize {
        self.encode().len()
    }

    /// Versioned binary encoding:
    ///
    /// ```text
    /// u8 version (1) || u8 axis (0 row / 1 col) || u32 index || u32 k || u32 share size
    /// 2k × share bytes
    /// k × path: u8 step count, steps of u8 side || digest(48)
    /// ```
    /// All integers big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let share_size = self.shares.first().map_or(0, Vec::len) as u32;
        let mut out = Vec::new();
        out.push(1u8);
        out.push(match self.axis {
            Axis::Row => 0,
            Axis::Col => 1,
        });
        out.extend_from_slice(&self.index.to_be_bytes());
        out.extend_from_slice(&self.k.to_be_bytes());
        out.extend_from_slice(&share_size.to_be_bytes());
        for s in &self.shares {
            out.extend_from_slice(s);
        }
        for p in &self.paths {
            out.push(p.steps.len() as u8);
            for step in &p.steps {
                out.push(match step.side {
                    Side::Left => 0,
                    Side::Right => 1,
                });
                out.extend_from_slice(&step.sibling.to_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodingError> {
        let bad = |m| CodingError::MalformedShares(m);
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], CodingError> {
            if pos + n > bytes.len() {
                return Err(bad("truncated fraud proof"));
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        if take(1)?[0] != 1 {
            return Err(bad("unknown fraud proof version"));
        }
        let axis = match take(1)?[0] {
            0 => Axis::Row,
            1 => Axis::Col,
            _ => return Err(bad("bad axis")),
        };
        let index = u32::from_be_bytes(take(4)?.try_into().unwrap());
        let k = u32::from_be_bytes(take(4)?.try_into().unwrap());
        let share_size = u32::from_be_bytes(take(4)?.try_into().unwrap()) as usize;
        if k == 0 || k as usize > super::MAX_SQUARE_SIDE || share_size == 0 {
            return Err(bad("bad geometry"));
        }
        let mut shares = Vec::with_capacity(2 * k as usize);
        for _ in 0..2 * k {
            shares.push(take(share_size)?.to_vec());
        }
        let mut paths = Vec::with_capacity(k as usize);
        for _ in 0..k {
            let n = take(1)?[0] as usize;
            let mut steps = Vec::with_capacity(n);
            for _ in 0..n {
                let side = match take(1)?[0] {
                    0 => Side::Left,
                    1 => Side::Right,
                    _ => return Err(bad("bad side flag")),
                };
                let sibling = NamespacedDigest::from_bytes(take(DIGEST_SIZE)?)
                    .map_err(|_| bad("bad sibling digest"))?;
                steps.push(PathStep { side, sibling });
            }
            paths.push(AuditPath { steps });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { axis, index, k, shares, paths })
    }
}

/// Builds a fraud proof for the line at `(axis, index)` of a fully held
/// square. Fails with `NotFraudulent` when the line re-encodes to its own
/// commitment — i.e. the square is honest there.
pub fn gen_coding_fraud_proof(
    square: &ExtendedDataSquare,
    axis: Axis,
    index: usize,
) -> Result<CodingFraudProof, CodingError> {
    let k = square.k();
    let codec = LineCodec::new(k)?;
    let line: Vec<Vec<u8>> = square
        .line(axis, index)
        .into_iter()
        .map(|s| s.bytes().to_vec())
        .collect();
    let reencoded = codec.reencode(&line[..k])?;
    let implied_root = line_root(k, axis, index, &reencoded);
    if implied_root == Some(square.committed_root(axis, index)) {
        return Err(CodingError::NotFraudulent { axis, index });
    }
    let paths = (0..k)
        .map(|pos| {
            let tree = square.line_tree(axis.other(), pos);
            tree.audit_path(index)
        })
        .collect();
    Ok(CodingFraudProof {
        axis,
        index: index as u32,
        k: k as u32,
        shares: line,
        paths,
    })
}

/// Root of a line's cells under the position labelling rule, or `None` when
/// no valid namespaced root exists for those bytes.
fn line_root(k: usize, axis: Axis, index: usize, cells: &[Vec<u8>]) -> Option<NamespacedDigest> {
    let leaves = cells
        .iter()
        .enumerate()
        .map(|(pos, bytes)| {
            let (r, c) = match axis {
                Axis::Row => (index, pos),
                Axis::Col => (pos, index),
            };
            crate::nmt::Message::reserved(cell_label(k, r, c, bytes), bytes.clone())
        })
        .collect();
    NamespaceTree::build(leaves, usize::MAX).ok().map(|t| t.root())
}

/// Checks a fraud proof against a header's line commitments. `true` obliges
/// the caller to reject the block; `false` means the accusation is bogus.
pub fn verify_coding_fraud_proof(
    row_roots: &[NamespacedDigest],
    col_roots: &[NamespacedDigest],
    proof: &CodingFraudProof,
    share_size: usize,
) -> bool {
    let k = proof.k as usize;
    let index = proof.index as usize;
    let side = 2 * k;
    if row_roots.len() != side || col_roots.len() != side || index >= side {
        return false;
    }
    if proof.shares.len() != side || proof.paths.len() != k {
        return false;
    }
    if proof.shares.iter().any(|s| s.len() != share_size) {
        return false;
    }
    // authenticate the first k cells against the orthogonal commitments
    let orthogonal = match proof.axis {
        Axis::Row => col_roots,
        Axis::Col => row_roots,
    };
    for (pos, path) in proof.paths.iter().enumerate() {
        let (r, c) = match proof.axis {
            Axis::Row => (index, pos),
            Axis::Col => (pos, index),
        };
        let leaf = Share {
            label: cell_label(k, r, c, &proof.shares[pos]),
            bytes: proof.shares[pos].clone(),
        }
        .as_leaf();
        let Ok(digest) = ns_hash_leaf(&leaf, usize::MAX) else {
            return false;
        };
        match path.apply(digest) {
            Ok(root) if root == orthogonal[pos] => {}
            _ => return false,
        }
    }
    // the authenticated half determines the honest line; fraud iff its root
    // differs from (or cannot equal) the commitment
    let Ok(codec) = LineCodec::new(k) else {
        return false;
    };
    let Ok(reencoded) = codec.reencode(&proof.shares[..k]) else {
        return false;
    };
    let committed = match proof.axis {
        Axis::Row => row_roots[index],
        Axis::Col => col_roots[index],
    };
    match line_root(k, proof.axis, index, &reencoded) {
        Some(root) => root != committed,
        // no valid namespaced root exists over the implied codeword, so the
        // committed root certainly is not it
        None => true,
    }
}
