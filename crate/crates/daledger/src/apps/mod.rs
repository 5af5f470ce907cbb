//! Client-side applications.
//!
//! Nothing on the chain validates these messages; every client of an
//! application replays its namespace (and its declared dependencies'
//! namespaces) through a transition function that *cannot fail*. A message
//! that is garbage, mis-signed, replayed, or underfunded leaves the state
//! exactly as it was — returning the previous state is the only error
//! handling there is, otherwise a hostile message could wedge an application
//! forever.
//!
//! Three applications live here: a currency with signed transfers and fee
//! transactions, a name registrar that depends on the currency for top-ups,
//! and a dummy key-value app used to generate irrelevant traffic in the
//! measurements. Application state is one or more named key-value stores with
//! a deterministic commitment over the sorted contents.

pub mod currency;
pub mod dummy;
pub mod registrar;
pub mod sync;

pub use currency::{keypair_from_seed, CurrencyTx, KeyPair};
pub use registrar::RegistrarTx;
pub use sync::{sync_app, FullBlockPeer, StoragePeer, SyncError, SyncStats, SyncedApp};

use crate::nmt::{AuditPath, Message, NamespaceId, NamespacedDigest};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Address of an account: its Ed25519 public key bytes.
pub type Address = [u8; 32];

/// One or more named key-value stores.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppState {
    stores: BTreeMap<String, BTreeMap<Vec<u8>, Vec<u8>>>,
}

impl AppState {
    pub fn get(&self, store: &str, key: &[u8]) -> Option<&[u8]> {
        self.stores.get(store)?.get(key).map(Vec::as_slice)
    }

    pub fn insert(&mut self, store: &str, key: Vec<u8>, value: Vec<u8>) {
        self.stores.entry(store.to_string()).or_default().insert(key, value);
    }

    pub fn store(&self, store: &str) -> Option<&BTreeMap<Vec<u8>, Vec<u8>>> {
        self.stores.get(store)
    }

    pub fn get_u64(&self, store: &str, key: &[u8]) -> u64 {
        self.get(store, key)
            .and_then(|v| v.try_into().ok().map(u64::from_be_bytes))
            .unwrap_or(0)
    }

    pub fn set_u64(&mut self, store: &str, key: &[u8], value: u64) {
        self.insert(store, key.to_vec(), value.to_be_bytes().to_vec());
    }

    /// Number of entries across all stores.
    pub fn entry_count(&self) -> usize {
        self.stores.values().map(BTreeMap::len).sum()
    }

    /// Bytes held across all stores (keys plus values).
    pub fn byte_size(&self) -> usize {
        self.stores
            .values()
            .flat_map(|s| s.iter())
            .map(|(k, v)| k.len() + v.len())
            .sum()
    }

    /// Order-insensitive, content-sensitive commitment: a hash over the
    /// length-prefixed `(store, key, value)` triples in sorted order.
    pub fn commitment(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for (name, store) in &self.stores {
            for (k, v) in store {
                h.update((name.len() as u32).to_be_bytes());
                h.update(name.as_bytes());
                h.update((k.len() as u32).to_be_bytes());
                h.update(k);
                h.update((v.len() as u32).to_be_bytes());
                h.update(v);
            }
        }
        h.finalize().into()
    }
}

/// What an application's transition may see of the block it is replaying.
#[derive(Debug, Clone)]
pub struct BlockContext {
    pub height: u64,
    /// Message-tree root of the block, used to check fee-child inclusion.
    pub m_root: NamespacedDigest,
    /// Address credited by fee transactions in this block.
    pub producer: Address,
    /// Inclusion evidence for fee children, keyed by child leaf hash.
    pub fee_proofs: BTreeMap<[u8; 32], (NamespacedDigest, AuditPath)>,
    /// States of dependency applications at this block, dependencies first.
    pub dep_states: BTreeMap<NamespaceId, AppState>,
}

/// The logic bound to a namespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AppLogic {
    Currency,
    Registrar {
        /// The currency application this registrar draws top-ups from.
        currency_ns: NamespaceId,
        /// Account that top-up transfers must pay.
        registrar: Address,
        /// Fixed price of one name.
        price: u64,
    },
    Dummy,
}

/// A registered application: namespace, dependencies, transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppDescriptor {
    pub namespace: NamespaceId,
    pub logic: AppLogic,
}

impl AppDescriptor {
    /// Namespaces this application must also replay.
    pub fn dependencies(&self) -> Vec<NamespaceId> {
        match &self.logic {
            AppLogic::Registrar { currency_ns, .. } => vec![*currency_ns],
            AppLogic::Currency | AppLogic::Dummy => Vec::new(),
        }
    }

    /// The total transition function: applies one message, returning the
    /// next state. Never fails; rejected messages return the state as-is.
    pub fn transition(&self, state: &AppState, message: &Message, ctx: &BlockContext) -> AppState {
        if message.namespace() != self.namespace {
            return state.clone();
        }
        match &self.logic {
            AppLogic::Currency => currency::apply(state, message.payload(), ctx),
            AppLogic::Registrar { currency_ns, registrar, price } => {
                registrar::apply(state, message.payload(), ctx, *currency_ns, registrar, *price)
            }
            AppLogic::Dummy => dummy::apply(state, message.payload()),
        }
    }
}

/// All applications known to a client, keyed by namespace.
#[derive(Debug, Clone, Default)]
pub struct AppRegistry {
    apps: BTreeMap<NamespaceId, AppDescriptor>,
}

impl AppRegistry {
    pub fn register(&mut self, desc: AppDescriptor) {
        self.apps.insert(desc.namespace, desc);
    }

    pub fn get(&self, ns: NamespaceId) -> Option<&AppDescriptor> {
        self.apps.get(&ns)
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &AppDescriptor> {
        self.apps.values()
    }

    /// The app and everything it depends on, dependencies first. Dependency
    /// graphs are acyclic here by construction (registrars depend on
    /// currencies, which depend on nothing); each namespace is visited once.
    pub fn closure(&self, ns: NamespaceId) -> Vec<NamespaceId> {
        fn visit(
            reg: &AppRegistry,
            ns: NamespaceId,
            seen: &mut std::collections::BTreeSet<NamespaceId>,
            order: &mut Vec<NamespaceId>,
        ) {
            if !seen.insert(ns) {
                return;
            }
            if let Some(desc) = reg.get(ns) {
                for dep in desc.dependencies() {
                    visit(reg, dep, seen, order);
                }
            }
            order.push(ns);
        }
        let mut order = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        visit(self, ns, &mut seen, &mut order);
        order
    }
}

/// Leaf hash a fee transaction points at: the raw hash portion of the
/// child message's leaf digest.
pub fn fee_child_hash(message: &Message, max_leaf_size: usize) -> Option<[u8; 32]> {
    crate::nmt::ns_hash_leaf(message, max_leaf_size)
        .ok()
        .map(|d| *d.hash_bytes())
}
