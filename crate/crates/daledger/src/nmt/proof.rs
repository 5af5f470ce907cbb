//! Namespace proofs and their verification.
//!
//! A proof is an ordered list of per-leaf audit paths plus the index of the
//! first one. Verification recomputes the root from every path and then runs
//! the completeness checks: the first path must not have a left sibling whose
//! range reaches the queried namespace, the last path must not have such a
//! right sibling, and every adjacent pair of paths must belong to adjacent
//! leaves. Adjacency is established structurally — each leaf must be the
//! rightmost descendant of their meet's left child while its successor is the
//! leftmost descendant of the right child — so no leaf count or claimed index
//! has to be trusted.

use super::{ns_hash_leaf, ns_hash_node, Message, NamespaceId, NamespacedDigest, NmtError, DIGEST_SIZE};

/// Which side of the running hash a sibling sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// One sibling along an audit path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathStep {
    pub side: Side,
    pub sibling: NamespacedDigest,
}

/// Sibling digests from a leaf up to (but excluding) the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditPath {
    pub steps: Vec<PathStep>,
}

impl AuditPath {
    /// Folds a leaf digest up through the path. Fails on an ordering
    /// violation, which a forged path over a sorted tree will often trip.
    pub fn apply(&self, leaf: NamespacedDigest) -> Result<NamespacedDigest, NmtError> {
        apply_steps(leaf, &self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Serialized size in bytes within the proof wire encoding.
    pub fn wire_len(&self) -> usize {
        1 + self.steps.len() * (1 + DIGEST_SIZE)
    }
}

fn apply_steps(leaf: NamespacedDigest, steps: &[PathStep]) -> Result<NamespacedDigest, NmtError> {
    let mut acc = leaf;
    for step in steps {
        acc = match step.side {
            Side::Left => ns_hash_node(&step.sibling, &acc)?,
            Side::Right => ns_hash_node(&acc, &step.sibling)?,
        };
    }
    Ok(acc)
}

/// Proof that a namespace's messages are exactly the presented ones, or that
/// the namespace is empty in the tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NamespaceProof {
    /// One audit path per message, for consecutive leaves starting at
    /// `start_index`.
    Presence { start_index: u64, paths: Vec<AuditPath> },
    /// A single audit path for the boundary leaf. Only the leaf's digest is
    /// included — its payload is irrelevant to showing the namespace empty.
    Absence {
        index: u64,
        path: AuditPath,
        boundary: NamespacedDigest,
    },
}

impl NamespaceProof {
    pub fn is_absence(&self) -> bool {
        matches!(self, NamespaceProof::Absence { .. })
    }

    /// Index of the first proved leaf. Positioning metadata; completeness
    /// never relies on it.
    pub fn start_index(&self) -> u64 {
        match self {
            NamespaceProof::Presence { start_index, .. } => *start_index,
            NamespaceProof::Absence { index, .. } => *index,
        }
    }

    /// Number of audit paths carried.
    pub fn path_count(&self) -> usize {
        match self {
            NamespaceProof::Presence { paths, .. } => paths.len(),
            NamespaceProof::Absence { .. } => 1,
        }
    }

    /// Serialized size in bytes.
    pub fn wire_len(&self) -> usize {
        self.encode().len()
    }

    /// Length-prefixed binary encoding, as served by storage nodes.
    ///
    /// ```text
    /// u8  version (1)
    /// u8  kind: 0 presence / 1 absence
    /// u64 start index (big-endian)
    /// u16 path count (big-endian)
    /// per path: u8 step count, then per step: u8 side (0 left / 1 right) || digest(48)
    /// absence only: boundary leaf digest (48)
    /// ```
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.push(1u8);
        match self {
            NamespaceProof::Presence { start_index, paths } => {
                out.push(0);
                out.extend_from_slice(&start_index.to_be_bytes());
                out.extend_from_slice(&(paths.len() as u16).to_be_bytes());
                for p in paths {
                    encode_path(&mut out, p);
                }
            }
            NamespaceProof::Absence { index, path, boundary } => {
                out.push(1);
                out.extend_from_slice(&index.to_be_bytes());
                out.extend_from_slice(&1u16.to_be_bytes());
                encode_path(&mut out, path);
                out.extend_from_slice(&boundary.to_bytes());
            }
        }
        out
    }

    /// Decodes the binary encoding.
    pub fn decode(bytes: &[u8]) -> Result<Self, NmtError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.u8()? != 1 {
            return Err(NmtError::Malformed("unknown proof version"));
        }
        let kind = r.u8()?;
        let start = r.u64()?;
        let count = r.u16()? as usize;
        match kind {
            0 => {
                let mut paths = Vec::with_capacity(count);
                for _ in 0..count {
                    paths.push(decode_path(&mut r)?);
                }
                r.finish()?;
                Ok(NamespaceProof::Presence { start_index: start, paths })
            }
            1 => {
                if count != 1 {
                    return Err(NmtError::Malformed("absence proof must hold exactly one path"));
                }
                let path = decode_path(&mut r)?;
                let boundary = NamespacedDigest::from_bytes(r.take(DIGEST_SIZE)?)?;
                r.finish()?;
                Ok(NamespaceProof::Absence { index: start, path, boundary })
            }
            _ => Err(NmtError::Malformed("unknown proof kind")),
        }
    }
}

fn encode_path(out: &mut Vec<u8>, p: &AuditPath) {
    out.push(p.steps.len() as u8);
    for s in &p.steps {
        out.push(match s.side {
            Side::Left => 0,
            Side::Right => 1,
        });
        out.extend_from_slice(&s.sibling.to_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NmtError> {
        if self.pos + n > self.buf.len() {
            return Err(NmtError::Malformed("truncated proof"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, NmtError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, NmtError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, NmtError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn finish(&self) -> Result<(), NmtError> {
        if self.pos != self.buf.len() {
            return Err(NmtError::Malformed("trailing bytes after proof"));
        }
        Ok(())
    }
}

fn decode_path(r: &mut Reader) -> Result<AuditPath, NmtError> {
    let n = r.u8()? as usize;
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let side = match r.u8()? {
            0 => Side::Left,
            1 => Side::Right,
            _ => return Err(NmtError::Malformed("bad side flag")),
        };
        let sibling = NamespacedDigest::from_bytes(r.take(DIGEST_SIZE)?)?;
        steps.push(PathStep { side, sibling });
    }
    Ok(AuditPath { steps })
}

/// Checks that `(leaf_a, path_a)` and `(leaf_b, path_b)` prove *adjacent*
/// leaves of the same tree.
///
/// Below their lowest common ancestor, the first leaf may only see left
/// siblings (it is the rightmost leaf of the left subtree) and the second
/// only right siblings; at the ancestor each side's recomputed subtree root
/// must equal the other's recorded sibling; above it both paths must be
/// identical.
fn adjacent(
    leaf_a: NamespacedDigest,
    path_a: &AuditPath,
    leaf_b: NamespacedDigest,
    path_b: &AuditPath,
) -> bool {
    let a = path_a.steps.iter().take_while(|s| s.side == Side::Left).count();
    if a == path_a.steps.len() {
        return false; // rightmost leaf of the whole tree has no successor
    }
    let b = path_b.steps.iter().take_while(|s| s.side == Side::Right).count();
    if b == path_b.steps.len() {
        return false;
    }
    if path_a.steps[a + 1..] != path_b.steps[b + 1..] {
        return false;
    }
    let left_subtree = match apply_steps(leaf_a, &path_a.steps[..a]) {
        Ok(d) => d,
        Err(_) => return false,
    };
    let right_subtree = match apply_steps(leaf_b, &path_b.steps[..b]) {
        Ok(d) => d,
        Err(_) => return false,
    };
    path_a.steps[a].sibling == right_subtree && path_b.steps[b].sibling == left_subtree
}

/// Verifies a namespace proof against a trusted root.
///
/// For a presence proof, true if and only if every supplied message carries
/// the queried namespace, every path recomputes the root, consecutive paths
/// prove adjacent leaves, no left sibling of the first path has a maximum
/// namespace at or above the query, and no right sibling of the last path has
/// a minimum namespace at or below it. For an absence proof, true when the
/// boundary leaf straddles the query from the right (with every left sibling
/// below the query) or is the rightmost leaf with a smaller namespace.
///
/// Returns `false` rather than an error: a failed check means the responding
/// peer misbehaved.
pub fn verify_namespace(
    root: &NamespacedDigest,
    nid: NamespaceId,
    messages: &[Message],
    proof: &NamespaceProof,
    max_leaf_size: usize,
) -> bool {
    match proof {
        NamespaceProof::Presence { paths, .. } => {
            if messages.is_empty() || messages.len() != paths.len() {
                return false;
            }
            if messages.iter().any(|m| m.namespace() != nid) {
                return false;
            }
            let mut leaves = Vec::with_capacity(messages.len());
            for m in messages {
                match ns_hash_leaf(m, max_leaf_size) {
                    Ok(d) => leaves.push(d),
                    Err(_) => return false,
                }
            }
            for (leaf, path) in leaves.iter().zip(paths) {
                match path.apply(*leaf) {
                    Ok(d) if d == *root => {}
                    _ => return false,
                }
            }
            for i in 1..leaves.len() {
                if !adjacent(leaves[i - 1], &paths[i - 1], leaves[i], &paths[i]) {
                    return false;
                }
            }
            let first = &paths[0];
            if first
                .steps
                .iter()
                .filter(|s| s.side == Side::Left)
                .any(|s| s.sibling.max_ns() >= nid)
            {
                return false;
            }
            let last = paths.last().unwrap();
            if last
                .steps
                .iter()
                .filter(|s| s.side == Side::Right)
                .any(|s| s.sibling.min_ns() <= nid)
            {
                return false;
            }
            true
        }
        NamespaceProof::Absence { path, boundary, .. } => {
            if !messages.is_empty() {
                return false;
            }
            // the boundary must be a leaf digest
            if boundary.min_ns() != boundary.max_ns() {
                return false;
            }
            match path.apply(*boundary) {
                Ok(d) if d == *root => {}
                _ => return false,
            }
            let ns = boundary.min_ns();
            if ns > nid {
                // leftmost leaf above the query: nothing on its left may
                // reach the queried namespace
                path.steps
                    .iter()
                    .filter(|s| s.side == Side::Left)
                    .all(|s| s.sibling.max_ns() < nid)
            } else if ns < nid {
                // must be the rightmost leaf of the tree; the root being
                // valid implies everything else is sorted below it
                path.steps.iter().all(|s| s.side == Side::Left)
            } else {
                false
            }
        }
    }
}
