//! Dependency-aware application state sync.
//!
//! A client replays an application by fetching, for every accepted block,
//! the complete message set of the app's namespace and of each dependency
//! namespace — nothing else. Completeness is enforced by namespace proofs
//! against the block's message root; a failed proof marks the peer as
//! misbehaving and the next peer is tried. Byte counters record exactly what
//! was downloaded per namespace, which is what the sovereignty measurements
//! in the benchmarks assert over.

use super::{currency, Address, AppRegistry, AppState, BlockContext};
use crate::block::{Block, BlockHeader};
use crate::config::ChainConfig;
use crate::nmt::{
    verify_namespace, AuditPath, Message, NamespaceId, NamespaceProof, NamespaceTree,
    NamespacedDigest, DIGEST_SIZE,
};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyncError {
    /// Every peer returned an unverifiable response for this query.
    #[error("no peer produced a valid namespace {ns} response at height {height}")]
    PeerMisbehavior { ns: NamespaceId, height: u64 },
    /// The registry is missing the app (or one of its dependencies).
    #[error("namespace {0} has no registered application")]
    UnknownApp(NamespaceId),
}

/// A storage node's query surface, as seen by one syncing client.
pub trait StoragePeer {
    /// All messages of `nid` in the block, with a completeness proof.
    fn namespace_data(
        &mut self,
        header: &BlockHeader,
        nid: NamespaceId,
    ) -> Option<(Vec<Message>, NamespaceProof)>;

    /// Inclusion path for the leaf whose hash portion equals `leaf_hash`
    /// (fee-child lookups).
    fn leaf_path(
        &mut self,
        header: &BlockHeader,
        leaf_hash: [u8; 32],
    ) -> Option<(NamespacedDigest, AuditPath)>;
}

/// Download accounting for one sync run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncStats {
    /// Message payload bytes received, by namespace. Sovereignty means keys
    /// never stray outside the app and its dependencies.
    pub leaf_bytes_by_namespace: BTreeMap<NamespaceId, u64>,
    /// Merkle path and proof framing bytes.
    pub proof_bytes: u64,
    /// Responses that failed verification before a good peer answered.
    pub rejected_responses: u32,
}

impl SyncStats {
    pub fn total_leaf_bytes(&self) -> u64 {
        self.leaf_bytes_by_namespace.values().sum()
    }

    pub fn total_bytes(&self) -> u64 {
        self.total_leaf_bytes() + self.proof_bytes
    }
}

/// Result of syncing one application: final states for the app and its
/// dependencies, plus what it cost.
#[derive(Debug, Clone)]
pub struct SyncedApp {
    pub states: BTreeMap<NamespaceId, AppState>,
    pub stats: SyncStats,
}

impl SyncedApp {
    pub fn state(&self, ns: NamespaceId) -> &AppState {
        &self.states[&ns]
    }
}

/// Replays `app_ns` over the accepted headers by querying storage peers.
///
/// `producers` maps heights to the addresses fee transactions credit;
/// `genesis` seeds initial states (missing namespaces start empty).
pub fn sync_app(
    peers: &mut [&mut dyn StoragePeer],
    registry: &AppRegistry,
    app_ns: NamespaceId,
    headers: &[BlockHeader],
    producers: &BTreeMap<u64, Address>,
    genesis: &BTreeMap<NamespaceId, AppState>,
    cfg: &ChainConfig,
) -> Result<SyncedApp, SyncError> {
    let closure = registry.closure(app_ns);
    for ns in &closure {
        if registry.get(*ns).is_none() {
            return Err(SyncError::UnknownApp(*ns));
        }
    }
    let mut states: BTreeMap<NamespaceId, AppState> = closure
        .iter()
        .map(|ns| (*ns, genesis.get(ns).cloned().unwrap_or_default()))
        .collect();
    let mut stats = SyncStats::default();

    for header in headers {
        for ns in &closure {
            let desc = registry.get(*ns).unwrap();
            let messages = fetch_verified(peers, header, *ns, cfg, &mut stats)?;

            // fee transactions need inclusion evidence before they apply
            let mut fee_proofs = BTreeMap::new();
            if matches!(desc.logic, super::AppLogic::Currency) {
                for m in &messages {
                    let Some(tx) = currency::CurrencyTx::decode(m.payload()) else {
                        continue;
                    };
                    let Some(child) = tx.fee_child else { continue };
                    if let Some((leaf, path)) = fetch_leaf_path(peers, header, child, &mut stats) {
                        fee_proofs.insert(child, (leaf, path));
                    }
                }
            }

            let dep_states: BTreeMap<NamespaceId, AppState> = desc
                .dependencies()
                .into_iter()
                .map(|dep| (dep, states[&dep].clone()))
                .collect();
            let ctx = BlockContext {
                height: header.height,
                m_root: header.m_root,
                producer: producers.get(&header.height).copied().unwrap_or_default(),
                fee_proofs,
                dep_states,
            };
            let mut state = states[ns].clone();
            for message in &messages {
                state = desc.transition(&state, message, &ctx);
            }
            states.insert(*ns, state);
        }
    }
    Ok(SyncedApp { states, stats })
}

fn fetch_verified(
    peers: &mut [&mut dyn StoragePeer],
    header: &BlockHeader,
    ns: NamespaceId,
    cfg: &ChainConfig,
    stats: &mut SyncStats,
) -> Result<Vec<Message>, SyncError> {
    for peer in peers.iter_mut() {
        let Some((messages, proof)) = peer.namespace_data(header, ns) else {
            stats.rejected_responses += 1;
            continue;
        };
        if verify_namespace(&header.m_root, ns, &messages, &proof, cfg.max_leaf_size) {
            *stats.leaf_bytes_by_namespace.entry(ns).or_default() +=
                messages.iter().map(|m| m.wire_len() as u64).sum::<u64>();
            stats.proof_bytes += proof.wire_len() as u64;
            return Ok(messages);
        }
        stats.rejected_responses += 1;
    }
    Err(SyncError::PeerMisbehavior { ns, height: header.height })
}

fn fetch_leaf_path(
    peers: &mut [&mut dyn StoragePeer],
    header: &BlockHeader,
    leaf_hash: [u8; 32],
    stats: &mut SyncStats,
) -> Option<(NamespacedDigest, AuditPath)> {
    for peer in peers.iter_mut() {
        if let Some((leaf, path)) = peer.leaf_path(header, leaf_hash) {
            if leaf.hash_bytes() == &leaf_hash && path.apply(leaf).is_ok_and(|r| r == header.m_root)
            {
                stats.proof_bytes += (DIGEST_SIZE + path.wire_len()) as u64;
                return Some((leaf, path));
            }
            stats.rejected_responses += 1;
        }
    }
    None
}

/// An honest in-memory storage peer over full blocks. Backs the benchmarks,
/// the examples, and the honest storage nodes of the simulator.
pub struct FullBlockPeer {
    trees: BTreeMap<[u8; 32], NamespaceTree>,
    leaf_index: BTreeMap<[u8; 32], BTreeMap<[u8; 32], usize>>,
}

impl FullBlockPeer {
    pub fn new(blocks: &[Block], cfg: &ChainConfig) -> Self {
        let mut trees = BTreeMap::new();
        let mut leaf_index = BTreeMap::new();
        for block in blocks {
            Self::insert_into(&mut trees, &mut leaf_index, block, cfg);
        }
        Self { trees, leaf_index }
    }

    pub fn push(&mut self, block: &Block, cfg: &ChainConfig) {
        Self::insert_into(&mut self.trees, &mut self.leaf_index, block, cfg);
    }

    fn insert_into(
        trees: &mut BTreeMap<[u8; 32], NamespaceTree>,
        leaf_index: &mut BTreeMap<[u8; 32], BTreeMap<[u8; 32], usize>>,
        block: &Block,
        cfg: &ChainConfig,
    ) {
        let hash = block.header.hash();
        let tree = block.message_tree(cfg);
        let by_hash = (0..tree.len())
            .map(|i| (*tree.leaf_digest(i).hash_bytes(), i))
            .collect();
        trees.insert(hash, tree);
        leaf_index.insert(hash, by_hash);
    }
}

impl StoragePeer for FullBlockPeer {
    fn namespace_data(
        &mut self,
        header: &BlockHeader,
        nid: NamespaceId,
    ) -> Option<(Vec<Message>, NamespaceProof)> {
        let tree = self.trees.get(&header.hash())?;
        Some((tree.namespace_messages(nid), tree.prove_namespace(nid)))
    }

    fn leaf_path(
        &mut self,
        header: &BlockHeader,
        leaf_hash: [u8; 32],
    ) -> Option<(NamespacedDigest, AuditPath)> {
        let hash = header.hash();
        let index = *self.leaf_index.get(&hash)?.get(&leaf_hash)?;
        let tree = self.trees.get(&hash)?;
        Some((tree.leaf_digest(index), tree.audit_path(index)))
    }
}
