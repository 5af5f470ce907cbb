//! Block and header model, the two validity rules, and a minimal
//! longest-chain fork choice.
//!
//! A header commits to the ordered message list through the namespaced tree
//! root `m_root`. Under the probabilistic rule it additionally commits to the
//! extended data square through `availability_root`, a plain Merkle root over
//! the ordered list of 2k row roots followed by 2k column roots; the roots
//! themselves travel in a companion wide header so the chain link stays
//! compact. Validity is availability-only: no rule here ever inspects what a
//! message means.
//!
//! Canonical header encoding (the preimage of the chain link):
//! `prevHash(32) || height(8, big-endian) || mRoot(48) || mode(1) || k(4) ||
//! availabilityRoot(32)`, with `k = 0` and a zero availability root in
//! simplistic mode. Block archives are length-prefixed canonical blocks with
//! little-endian `u32` lengths.

use crate::coding::{
    split_to_shares, Axis, CodingError, CodingFraudProof, ExtendedDataSquare,
};
use crate::config::ChainConfig;
use crate::nmt::{
    ns_hash_leaf, AuditPath, Message, NamespaceId, NamespaceTree, NamespacedDigest, NmtError,
    DIGEST_SIZE, NAMESPACE_SIZE,
};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BlockError {
    #[error(transparent)]
    Nmt(#[from] NmtError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("malformed block encoding: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which availability rule a block was produced for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ValidityMode {
    /// Download everything, recompute the message root.
    Simplistic,
    /// Sample the extended square against committed line roots.
    Probabilistic,
}

/// Compact chain link. Hashes of these form the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockHeader {
    pub prev_hash: [u8; 32],
    pub height: u64,
    pub m_root: NamespacedDigest,
    pub mode: ValidityMode,
    /// Original square side; zero in simplistic mode.
    pub k: u32,
    /// Plain Merkle root over the 4k line roots; zero in simplistic mode.
    pub availability_root: [u8; 32],
}

pub const HEADER_WIRE_LEN: usize = 32 + 8 + DIGEST_SIZE + 1 + 4 + 32;

impl BlockHeader {
    /// Canonical, bit-exact encoding. This is the preimage of `hash`.
    pub fn canonical_bytes(&self) -> [u8; HEADER_WIRE_LEN] {
        let mut out = [0u8; HEADER_WIRE_LEN];
        out[..32].copy_from_slice(&self.prev_hash);
        out[32..40].copy_from_slice(&self.height.to_be_bytes());
        out[40..88].copy_from_slice(&self.m_root.to_bytes());
        out[88] = match self.mode {
            ValidityMode::Simplistic => 0,
            ValidityMode::Probabilistic => 1,
        };
        out[89..93].copy_from_slice(&self.k.to_be_bytes());
        out[93..125].copy_from_slice(&self.availability_root);
        out
    }

    pub fn from_canonical_bytes(b: &[u8]) -> Result<Self, BlockError> {
        if b.len() != HEADER_WIRE_LEN {
            return Err(BlockError::Malformed("header must be 125 bytes"));
        }
        let mode = match b[88] {
            0 => ValidityMode::Simplistic,
            1 => ValidityMode::Probabilistic,
            _ => return Err(BlockError::Malformed("unknown validity mode")),
        };
        Ok(Self {
            prev_hash: b[..32].try_into().unwrap(),
            height: u64::from_be_bytes(b[32..40].try_into().unwrap()),
            m_root: NamespacedDigest::from_bytes(&b[40..88])?,
            mode,
            k: u32::from_be_bytes(b[89..93].try_into().unwrap()),
            availability_root: b[93..125].try_into().unwrap(),
        })
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }
}

/// Header plus the line roots its availability root binds. This is what
/// probabilistic nodes download before sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WideHeader {
    pub header: BlockHeader,
    /// Row roots then column roots, 4k entries.
    pub line_roots: Vec<NamespacedDigest>,
}

impl WideHeader {
    /// Checks that the carried roots are exactly the ones the header binds.
    pub fn roots_consistent(&self) -> bool {
        match self.header.mode {
            ValidityMode::Simplistic => self.line_roots.is_empty(),
            ValidityMode::Probabilistic => {
                self.line_roots.len() == 4 * self.header.k as usize
                    && merkle_root_over_digests(&self.line_roots) == self.header.availability_root
            }
        }
    }

    pub fn row_roots(&self) -> &[NamespacedDigest] {
        &self.line_roots[..self.line_roots.len() / 2]
    }

    pub fn col_roots(&self) -> &[NamespacedDigest] {
        &self.line_roots[self.line_roots.len() / 2..]
    }

    pub fn committed_root(&self, axis: Axis, index: usize) -> NamespacedDigest {
        match axis {
            Axis::Row => self.row_roots()[index],
            Axis::Col => self.col_roots()[index],
        }
    }

    /// Wire size: header plus the serialized roots.
    pub fn wire_len(&self) -> usize {
        HEADER_WIRE_LEN + self.line_roots.len() * DIGEST_SIZE
    }
}

/// Plain (non-namespaced) Merkle root with leaf/node domain tags, same
/// left-balanced shape as the namespaced tree.
pub fn merkle_root_over_digests(items: &[NamespacedDigest]) -> [u8; 32] {
    fn rec(items: &[NamespacedDigest]) -> [u8; 32] {
        if items.len() == 1 {
            let mut h = Sha256::new();
            h.update([0x00]);
            h.update(items[0].to_bytes());
            return h.finalize().into();
        }
        let m = crate::nmt::split_point(items.len());
        let l = rec(&items[..m]);
        let r = rec(&items[m..]);
        let mut h = Sha256::new();
        h.update([0x01]);
        h.update(l);
        h.update(r);
        h.finalize().into()
    }
    if items.is_empty() {
        return [0u8; 32];
    }
    rec(items)
}

/// A full block: header, the ordered messages behind `m_root`, and (in
/// probabilistic mode) the committed square.
#[derive(Debug, Clone)]
pub struct Block {
    pub header: BlockHeader,
    pub messages: Vec<Message>,
    pub square: Option<ExtendedDataSquare>,
}

impl Block {
    pub fn wide_header(&self) -> WideHeader {
        WideHeader {
            header: self.header.clone(),
            line_roots: self.square.as_ref().map(ExtendedDataSquare::line_roots).unwrap_or_default(),
        }
    }

    /// Message tree (rebuilt on demand; blocks are immutable).
    pub fn message_tree(&self, cfg: &ChainConfig) -> NamespaceTree {
        NamespaceTree::build(leaves_for(&self.messages), cfg.max_leaf_size)
            .expect("a constructed block always re-roots")
    }

    /// Serialized body size: what the simplistic rule must download.
    pub fn body_wire_len(&self) -> usize {
        4 + self.messages.iter().map(Message::wire_len).sum::<usize>()
    }

    /// Canonical block encoding: header followed by the message list.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_WIRE_LEN + self.body_wire_len());
        out.extend_from_slice(&self.header.canonical_bytes());
        out.extend_from_slice(&(self.messages.len() as u32).to_be_bytes());
        for m in &self.messages {
            out.extend_from_slice(&m.namespace().to_bytes());
            out.extend_from_slice(&(m.payload().len() as u32).to_be_bytes());
            out.extend_from_slice(m.payload());
        }
        out
    }

    /// Decodes a canonical block and rebuilds the square for probabilistic
    /// headers.
    pub fn from_canonical_bytes(bytes: &[u8], cfg: &ChainConfig) -> Result<Self, BlockError> {
        if bytes.len() < HEADER_WIRE_LEN + 4 {
            return Err(BlockError::Malformed("block too short"));
        }
        let header = BlockHeader::from_canonical_bytes(&bytes[..HEADER_WIRE_LEN])?;
        let mut pos = HEADER_WIRE_LEN;
        let count = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        let mut messages = Vec::with_capacity(count);
        for _ in 0..count {
            if pos + NAMESPACE_SIZE + 4 > bytes.len() {
                return Err(BlockError::Malformed("truncated message header"));
            }
            let ns = NamespaceId::from_bytes(bytes[pos..pos + 8].try_into().unwrap());
            pos += 8;
            let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if pos + len > bytes.len() {
                return Err(BlockError::Malformed("truncated message payload"));
            }
            messages.push(Message::reserved(ns, bytes[pos..pos + len].to_vec()));
            pos += len;
        }
        if pos != bytes.len() {
            return Err(BlockError::Malformed("trailing bytes after block"));
        }
        let square = match header.mode {
            ValidityMode::Simplistic => None,
            ValidityMode::Probabilistic => Some(ExtendedDataSquare::extend(
                split_to_shares(&messages, cfg.share_payload_size),
                cfg.share_payload_size,
            )?),
        };
        Ok(Self { header, messages, square })
    }
}

/// An empty block still needs a root: it gets one reserved padding leaf.
fn leaves_for(messages: &[Message]) -> Vec<Message> {
    if messages.is_empty() {
        vec![Message::reserved(NamespaceId::PAD, Vec::new())]
    } else {
        messages.to_vec()
    }
}

/// Assembles a block on top of `prev`. Messages are sorted by namespace with
/// a stable sort, so submission order survives within each namespace.
pub fn make_block(
    prev: Option<&BlockHeader>,
    mut messages: Vec<Message>,
    mode: ValidityMode,
    cfg: &ChainConfig,
) -> Result<Block, BlockError> {
    messages.sort_by_key(Message::namespace);
    let tree = NamespaceTree::build(leaves_for(&messages), cfg.max_leaf_size)?;
    let (square, k, availability_root) = match mode {
        ValidityMode::Simplistic => (None, 0u32, [0u8; 32]),
        ValidityMode::Probabilistic => {
            let shares = split_to_shares(&leaves_for(&messages), cfg.share_payload_size);
            let square = ExtendedDataSquare::extend(shares, cfg.share_payload_size)?;
            let k = square.k() as u32;
            let root = merkle_root_over_digests(&square.line_roots());
            (Some(square), k, root)
        }
    };
    let header = BlockHeader {
        prev_hash: prev.map(BlockHeader::hash).unwrap_or_default(),
        height: prev.map_or(0, |p| p.height + 1),
        m_root: tree.root(),
        mode,
        k,
        availability_root,
    };
    Ok(Block { header, messages, square })
}

/// The simplistic validity rule, given whatever data retrieval produced:
/// valid exactly when the full message list arrived and re-roots to the
/// header's commitment. `None` models an exhausted timeout.
pub fn block_valid_simplistic(
    header: &BlockHeader,
    fetched: Option<&[Message]>,
    cfg: &ChainConfig,
) -> bool {
    let Some(messages) = fetched else {
        return false;
    };
    match NamespaceTree::build(leaves_for(messages), cfg.max_leaf_size) {
        Ok(tree) => tree.root() == header.m_root,
        Err(_) => false,
    }
}

/// One answered (or unanswered) sample against a wide header.
#[derive(Debug, Clone)]
pub struct SampleOutcome {
    /// Row index of the sampled cell.
    pub row: usize,
    /// Column index of the sampled cell.
    pub col: usize,
    /// Share bytes and the audit path to the row root, if anyone answered.
    pub response: Option<(Vec<u8>, AuditPath)>,
}

impl SampleOutcome {
    /// Does the response authenticate against the committed row root?
    pub fn verifies(&self, wide: &WideHeader) -> bool {
        let Some((bytes, path)) = &self.response else {
            return false;
        };
        let k = wide.header.k as usize;
        let label = crate::coding::cell_label(k, self.row, self.col, bytes);
        let leaf = Message::reserved(label, bytes.clone());
        let Ok(digest) = ns_hash_leaf(&leaf, usize::MAX) else {
            return false;
        };
        match path.apply(digest) {
            Ok(root) => root == wide.row_roots()[self.row],
            Err(_) => false,
        }
    }
}

/// The probabilistic validity rule over gathered evidence: every sample must
/// have verified, and no valid coding fraud proof may be known. Bandwidth is
/// the caller's concern; this is the final judgement.
pub fn block_valid_probabilistic(
    wide: &WideHeader,
    samples: &[SampleOutcome],
    fraud: Option<&CodingFraudProof>,
    cfg: &ChainConfig,
) -> bool {
    if !wide.roots_consistent() {
        return false;
    }
    if let Some(proof) = fraud {
        if crate::coding::verify_coding_fraud_proof(
            wide.row_roots(),
            wide.col_roots(),
            proof,
            cfg.share_size(),
        ) {
            return false;
        }
    }
    !samples.is_empty() && samples.iter().all(|s| s.verifies(wide))
}

/// The set of distinct header chains a node has observed.
#[derive(Debug, Clone, Default)]
pub struct ChainView {
    pub chains: Vec<Vec<BlockHeader>>,
}

impl ChainView {
    /// The winning chain: longest among chains whose links check out and
    /// whose every header satisfies `valid`; ties go to the lexicographically
    /// smallest tip hash. Consensus beyond this is out of scope.
    pub fn best_chain<'a>(&'a self, valid: &dyn Fn(&BlockHeader) -> bool) -> Option<&'a Vec<BlockHeader>> {
        self.chains
            .iter()
            .filter(|chain| !chain.is_empty() && chain_linked(chain) && chain.iter().all(valid))
            .max_by(|a, b| {
                a.len()
                    .cmp(&b.len())
                    .then_with(|| b.last().unwrap().hash().cmp(&a.last().unwrap().hash()))
            })
    }

    /// Is this header on the winning chain?
    pub fn in_chain(&self, header: &BlockHeader, valid: &dyn Fn(&BlockHeader) -> bool) -> bool {
        let target = header.hash();
        self.best_chain(valid)
            .is_some_and(|chain| chain.iter().any(|h| h.hash() == target))
    }
}

fn chain_linked(chain: &[BlockHeader]) -> bool {
    chain.windows(2).all(|w| w[1].prev_hash == w[0].hash() && w[1].height == w[0].height + 1)
}

/// Writes blocks as a length-prefixed archive (little-endian u32 lengths).
pub fn write_archive<W: std::io::Write>(mut w: W, blocks: &[Block]) -> Result<(), BlockError> {
    for b in blocks {
        let bytes = b.canonical_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(&bytes)?;
    }
    Ok(())
}

/// Reads a block archive written by [`write_archive`].
pub fn read_archive<R: std::io::Read>(mut r: R, cfg: &ChainConfig) -> Result<Vec<Block>, BlockError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut blocks = Vec::new();
    let mut pos = 0usize;
    while pos < buf.len() {
        if pos + 4 > buf.len() {
            return Err(BlockError::Malformed("truncated archive length"));
        }
        let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        if pos + len > buf.len() {
            return Err(BlockError::Malformed("truncated archive entry"));
        }
        blocks.push(Block::from_canonical_bytes(&buf[pos..pos + len], cfg)?);
        pos += len;
    }
    Ok(blocks)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::draw_samples;

    fn cfg() -> ChainConfig {
        ChainConfig { share_payload_size: 32, ..ChainConfig::default() }
    }

    fn msg(ns: u64, payload: &[u8]) -> Message {
        Message::new(NamespaceId(ns), payload.to_vec()).unwrap()
    }

    fn currency_like_messages(n: u64) -> Vec<Message> {
        (0..n).map(|i| msg(7, format!("transfer-{i}").as_bytes())).collect()
    }

    #[test]
    fn empty_block_roots_on_the_reserved_leaf() {
        let b = make_block(None, vec![], ValidityMode::Simplistic, &cfg()).unwrap();
        assert_eq!(b.header.m_root.min_ns(), NamespaceId::PAD);
        assert_eq!(b.header.m_root.max_ns(), NamespaceId::PAD);
        assert!(block_valid_simplistic(&b.header, Some(&b.messages), &cfg()));
    }

    #[test]
    fn namespace_query_returns_every_message() {
        let b = make_block(None, currency_like_messages(10), ValidityMode::Simplistic, &cfg()).unwrap();
        let tree = b.message_tree(&cfg());
        let proof = tree.prove_namespace(NamespaceId(7));
        let msgs = tree.namespace_messages(NamespaceId(7));
        assert_eq!(msgs.len(), 10);
        assert!(crate::nmt::verify_namespace(&tree.root(), NamespaceId(7), &msgs, &proof, cfg().max_leaf_size));
    }

    #[test]
    fn sorting_is_stable_within_a_namespace() {
        // submission order interleaves another namespace between the two 9s
        let msgs = vec![msg(9, b"first-of-9"), msg(3, b"a"), msg(9, b"second-of-9")];
        let b = make_block(None, msgs, ValidityMode::Simplistic, &cfg()).unwrap();
        let in_nine: Vec<&[u8]> = b
            .messages
            .iter()
            .filter(|m| m.namespace() == NamespaceId(9))
            .map(Message::payload)
            .collect();
        assert_eq!(in_nine, vec![b"first-of-9".as_slice(), b"second-of-9".as_slice()]);
    }

    #[test]
    fn oversized_message_fails_block_production() {
        let big = msg(3, &vec![0u8; cfg().max_leaf_size + 1]);
        match make_block(None, vec![big], ValidityMode::Simplistic, &cfg()) {
            Err(BlockError::Nmt(NmtError::OversizedLeaf { .. })) => {}
            other => panic!("expected OversizedLeaf, got {other:?}"),
        }
    }

    #[test]
    fn simplistic_rule_rejects_timeouts_and_substitutions() {
        let b = make_block(None, currency_like_messages(4), ValidityMode::Simplistic, &cfg()).unwrap();
        assert!(block_valid_simplistic(&b.header, Some(&b.messages), &cfg()));
        // timeout
        assert!(!block_valid_simplistic(&b.header, None, &cfg()));
        // one message replaced: root mismatch
        let mut tampered = b.messages.clone();
        tampered[2] = msg(7, b"not-the-original");
        assert!(!block_valid_simplistic(&b.header, Some(&tampered), &cfg()));
    }

    #[test]
    fn header_encoding_round_trips_and_links() {
        let g = make_block(None, vec![], ValidityMode::Simplistic, &cfg()).unwrap();
        let b1 = make_block(Some(&g.header), currency_like_messages(3), ValidityMode::Probabilistic, &cfg()).unwrap();
        let decoded = BlockHeader::from_canonical_bytes(&b1.header.canonical_bytes()).unwrap();
        assert_eq!(decoded, b1.header);
        assert_eq!(b1.header.prev_hash, g.header.hash());
        assert_eq!(b1.header.height, 1);
        let wide = b1.wide_header();
        assert!(wide.roots_consistent());
        assert_eq!(wide.line_roots.len(), 4 * b1.header.k as usize);
        // flipping any root breaks the binding
        let mut bad = wide.clone();
        bad.line_roots.swap(0, 1);
        assert!(!bad.roots_consistent());
    }

    #[test]
    fn probabilistic_rule_accepts_honest_samples_and_honours_fraud() {
        let b = make_block(None, currency_like_messages(6), ValidityMode::Probabilistic, &cfg()).unwrap();
        let square = b.square.as_ref().unwrap();
        let wide = b.wide_header();
        let side = square.side();
        let outcomes: Vec<SampleOutcome> = draw_samples(side * side, 15.min(side * side), 999)
            .into_iter()
            .map(|cell| {
                let (row, col) = (cell / side, cell % side);
                let path = square.line_tree(Axis::Row, row).audit_path(col);
                SampleOutcome { row, col, response: Some((square.cell(row, col).bytes().to_vec(), path)) }
            })
            .collect();
        assert!(block_valid_probabilistic(&wide, &outcomes, None, &cfg()));

        // one unanswered sample sinks the block
        let mut with_hole = outcomes.clone();
        with_hole[0].response = None;
        assert!(!block_valid_probabilistic(&wide, &with_hole, None, &cfg()));

        // a delivered, valid fraud proof sinks it even with perfect samples
        let tampered = square.tamper(0, square.k(), |bytes| bytes[0] ^= 1);
        let t_wide = WideHeader {
            header: BlockHeader {
                availability_root: merkle_root_over_digests(&tampered.line_roots()),
                ..b.header.clone()
            },
            line_roots: tampered.line_roots(),
        };
        let proof = crate::coding::gen_coding_fraud_proof(&tampered, Axis::Row, 0).unwrap();
        let t_outcomes: Vec<SampleOutcome> = draw_samples(side * side, 15.min(side * side), 999)
            .into_iter()
            .map(|cell| {
                let (row, col) = (cell / side, cell % side);
                let path = tampered.line_tree(Axis::Row, row).audit_path(col);
                SampleOutcome { row, col, response: Some((tampered.cell(row, col).bytes().to_vec(), path)) }
            })
            .collect();
        assert!(block_valid_probabilistic(&t_wide, &t_outcomes, None, &cfg()));
        assert!(!block_valid_probabilistic(&t_wide, &t_outcomes, Some(&proof), &cfg()));
    }

    fn chain_of(len: u64, tag: u8) -> Vec<BlockHeader> {
        let mut headers = Vec::new();
        let mut prev: Option<BlockHeader> = None;
        for i in 0..len {
            let b = make_block(
                prev.as_ref(),
                vec![msg(5, &[tag, i as u8])],
                ValidityMode::Simplistic,
                &cfg(),
            )
            .unwrap();
            headers.push(b.header.clone());
            prev = Some(b.header);
        }
        headers
    }

    #[test]
    fn longest_valid_chain_wins() {
        let short = chain_of(3, 1);
        let long = chain_of(5, 2);
        let view = ChainView { chains: vec![short.clone(), long.clone()] };
        let all_valid = |_: &BlockHeader| true;
        for h in &long {
            assert!(view.in_chain(h, &all_valid));
        }
        for h in &short {
            assert!(!view.in_chain(h, &all_valid));
        }
        // a data-unavailable block disqualifies its whole fork
        let bad = long[3].hash();
        let with_bad = move |h: &BlockHeader| h.hash() != bad;
        for h in &short {
            assert!(view.in_chain(h, &with_bad));
        }
        assert!(!view.in_chain(&long[4], &with_bad));
        // in_chain implies valid
        assert!(!view.in_chain(&long[3], &with_bad));
    }

    #[test]
    fn single_chain_tip_is_in_chain() {
        let chain = chain_of(2, 3);
        let view = ChainView { chains: vec![chain.clone()] };
        assert!(view.in_chain(&chain[1], &|_| true));
    }

    #[test]
    fn archive_round_trips() {
        let g = make_block(None, vec![], ValidityMode::Simplistic, &cfg()).unwrap();
        let b1 = make_block(Some(&g.header), currency_like_messages(4), ValidityMode::Probabilistic, &cfg()).unwrap();
        let blocks = vec![g, b1];
        let mut buf = Vec::new();
        write_archive(&mut buf, &blocks).unwrap();
        let back = read_archive(&buf[..], &cfg()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in blocks.iter().zip(&back) {
            assert_eq!(a.header, b.header);
            assert_eq!(a.messages, b.messages);
            assert_eq!(
                a.square.as_ref().map(|s| s.line_roots()),
                b.square.as_ref().map(|s| s.line_roots())
            );
        }
        assert!(read_archive(&buf[..buf.len() - 1], &cfg()).is_err());
    }
}
