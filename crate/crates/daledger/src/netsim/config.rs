//! Scenario configuration: the TOML schema and its validation.
//!
//! A scenario fixes everything up front — nodes, topology, the per-height
//! block plan, the adversary's script, and the RNG seed — so a run is a pure
//! function of the file. Validation enforces the standing assumptions: at
//! least one honest storage node, a connected honest subgraph, and a network
//! delay bound no tighter than the honest diameter.

use crate::nmt::NamespaceId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario parse: {0}")]
    Parse(#[from] toml::de::Error),
}

fn cfg_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Consensus,
    Storage,
    Client,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Simplistic,
    Probabilistic,
}

/// One node of the simulated network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: u32,
    pub kind: NodeKind,
    #[serde(default = "default_true")]
    pub honest: bool,
    /// Consensus stake fraction; informational for the stake-sampling rule.
    #[serde(default)]
    pub stake: f64,
    #[serde(default = "default_rule")]
    pub rule: Rule,
    /// Samples per block for probabilistic nodes; falls back to the chain
    /// default when absent.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Application namespaces this node follows (clients).
    #[serde(default)]
    pub apps: Vec<u64>,
}

fn default_true() -> bool {
    true
}

fn default_rule() -> Rule {
    Rule::Simplistic
}

/// Application instances available in the scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AppSetup {
    Currency {
        ns: u64,
        /// Number of seeded accounts.
        accounts: u32,
        /// Genesis balance per account.
        balance: u64,
    },
    Registrar {
        ns: u64,
        /// Namespace of the currency this registrar depends on.
        currency: u64,
        price: u64,
        /// Seed of the registrar's keypair.
        key_seed: u64,
    },
    Dummy { ns: u64 },
}

impl AppSetup {
    pub fn ns(&self) -> NamespaceId {
        match self {
            AppSetup::Currency { ns, .. }
            | AppSetup::Registrar { ns, .. }
            | AppSetup::Dummy { ns } => NamespaceId(*ns),
        }
    }
}

/// What goes into one produced block.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Workload {
    /// Plain transfers within each currency app: `(currency ns, count)`.
    #[serde(default)]
    pub transfers: Vec<(u64, u32)>,
    /// Fee transactions (each with a dummy child in the same block):
    /// `(currency ns, count)`.
    #[serde(default)]
    pub fee_txs: Vec<(u64, u32)>,
    /// Registrar top-ups: `(registrar ns, count)` — each emits the backing
    /// currency transfer and the referencing top-up.
    #[serde(default)]
    pub top_ups: Vec<(u64, u32)>,
    /// Name registrations: `(registrar ns, count)`.
    #[serde(default)]
    pub registrations: Vec<(u64, u32)>,
    /// Dummy key-value inserts: `(dummy ns, count, value bytes)`.
    #[serde(default)]
    pub dummy: Vec<(u64, u32, u32)>,
}

/// One planned block. `parent = 0` is the implicit genesis block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockPlan {
    pub id: u32,
    #[serde(default)]
    pub parent: u32,
    pub producer: u32,
    pub round: u32,
    #[serde(default = "default_rule")]
    pub mode: Rule,
    #[serde(default)]
    pub workload: Workload,
}

/// The adversary's fixed script. Producer strategies apply to blocks
/// produced by dishonest nodes; `omit_namespace` scripts dishonest storage
/// nodes during the application sync phase.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Adversary {
    #[default]
    None,
    /// Ignore block-data requests except from the listed nodes.
    WithholdBlock {
        #[serde(default)]
        serve_only: Vec<u32>,
    },
    /// Never reveal the listed `(row, col)` cells of the square.
    WithholdCells { cells: Vec<(u32, u32)> },
    /// Corrupt one parity cell of the named line before committing roots.
    BadEncoding { axis: String, index: u32 },
    /// Dishonest storage nodes drop this namespace's messages from their
    /// responses.
    OmitNamespace { ns: u64 },
}

/// Chain parameters a scenario may override.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainParams {
    #[serde(default = "default_share_payload")]
    pub share_payload_size: usize,
    #[serde(default = "default_max_leaf")]
    pub max_leaf_size: usize,
    #[serde(default = "default_samples")]
    pub sample_count: usize,
    #[serde(default = "default_price")]
    pub name_price: u64,
}

fn default_share_payload() -> usize {
    64
}
fn default_max_leaf() -> usize {
    1024
}
fn default_samples() -> usize {
    5
}
fn default_price() -> u64 {
    10
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            share_payload_size: default_share_payload(),
            max_leaf_size: default_max_leaf(),
            sample_count: default_samples(),
            name_price: default_price(),
        }
    }
}

impl ChainParams {
    pub fn chain_config(&self) -> crate::config::ChainConfig {
        crate::config::ChainConfig {
            max_leaf_size: self.max_leaf_size,
            share_payload_size: self.share_payload_size,
            sample_count: self.sample_count,
            name_price: self.name_price,
        }
    }
}

/// A complete scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    /// Total rounds to simulate (leave slack past the last block's deadline).
    pub rounds: u32,
    /// Maximum network delay δ in rounds; must cover the honest diameter.
    pub delta: u32,
    #[serde(default)]
    pub chain: ChainParams,
    pub nodes: Vec<NodeSpec>,
    /// Undirected edges by node id.
    pub topology: Vec<(u32, u32)>,
    #[serde(default)]
    pub apps: Vec<AppSetup>,
    #[serde(default)]
    pub blocks: Vec<BlockPlan>,
    #[serde(default)]
    pub adversary: Adversary,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, SimError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.delta < 1 {
            return Err(cfg_err("delta must be at least 1"));
        }
        if self.nodes.is_empty() {
            return Err(cfg_err("a scenario needs nodes"));
        }
        let ids: BTreeSet<u32> = self.nodes.iter().map(|n| n.id).collect();
        if ids.len() != self.nodes.len() {
            return Err(cfg_err("duplicate node ids"));
        }
        for &(a, b) in &self.topology {
            if !ids.contains(&a) || !ids.contains(&b) {
                return Err(cfg_err(format!("edge ({a},{b}) names an unknown node")));
            }
        }
        if !self
            .nodes
            .iter()
            .any(|n| n.honest && n.kind == NodeKind::Storage)
        {
            return Err(cfg_err("at least one honest storage node is required"));
        }
        let diameter = self
            .honest_diameter()
            .ok_or_else(|| cfg_err("honest nodes must form a connected subgraph"))?;
        if self.delta < diameter {
            return Err(cfg_err(format!(
                "delta {} is below the honest diameter {diameter}",
                self.delta
            )));
        }
        let app_ns: BTreeSet<u64> = self.apps.iter().map(|a| a.ns().0).collect();
        if app_ns.len() != self.apps.len() {
            return Err(cfg_err("duplicate app namespaces"));
        }
        for app in &self.apps {
            if let AppSetup::Registrar { currency, .. } = app {
                if !self
                    .apps
                    .iter()
                    .any(|a| matches!(a, AppSetup::Currency { ns, .. } if ns == currency))
                {
                    return Err(cfg_err("registrar depends on an unknown currency app"));
                }
            }
            if app.ns().is_reserved() {
                return Err(cfg_err("apps cannot use reserved namespaces"));
            }
        }
        for node in &self.nodes {
            for ns in &node.apps {
                if !app_ns.contains(ns) {
                    return Err(cfg_err(format!("node {} follows unknown app {ns}", node.id)));
                }
            }
        }
        let mut block_ids = BTreeSet::from([0u32]);
        for plan in &self.blocks {
            if plan.id == 0 || !block_ids.insert(plan.id) {
                return Err(cfg_err(format!("block id {} reused or reserved", plan.id)));
            }
            if !block_ids.contains(&plan.parent) {
                return Err(cfg_err(format!(
                    "block {} names parent {} before it exists",
                    plan.id, plan.parent
                )));
            }
            if !ids.contains(&plan.producer) {
                return Err(cfg_err(format!("block {} has unknown producer", plan.id)));
            }
            if plan.round == 0 || plan.round >= self.rounds {
                return Err(cfg_err(format!(
                    "block {} must be produced in rounds 1..{}",
                    plan.id, self.rounds
                )));
            }
        }
        if let Adversary::BadEncoding { axis, .. } = &self.adversary {
            if axis != "row" && axis != "col" {
                return Err(cfg_err("bad_encoding axis must be \"row\" or \"col\""));
            }
        }
        Ok(())
    }

    pub fn node(&self, id: u32) -> &NodeSpec {
        self.nodes.iter().find(|n| n.id == id).expect("validated id")
    }

    /// Neighbors of `id` in ascending order.
    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .topology
            .iter()
            .filter_map(|&(a, b)| {
                if a == id {
                    Some(b)
                } else if b == id {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Hop distances from `from` over the full topology.
    pub fn distances(&self, from: u32) -> BTreeMap<u32, u32> {
        let mut dist = BTreeMap::from([(from, 0u32)]);
        let mut queue = VecDeque::from([from]);
        while let Some(v) = queue.pop_front() {
            let d = dist[&v];
            for n in self.neighbors(v) {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(n) {
                    e.insert(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Diameter of the honest subgraph, or `None` if it is disconnected.
    pub fn honest_diameter(&self) -> Option<u32> {
        let honest: Vec<u32> = self.nodes.iter().filter(|n| n.honest).map(|n| n.id).collect();
        let honest_set: BTreeSet<u32> = honest.iter().copied().collect();
        let mut max = 0;
        for &start in &honest {
            let mut dist = BTreeMap::from([(start, 0u32)]);
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                let d = dist[&v];
                for n in self.neighbors(v) {
                    if honest_set.contains(&n) && !dist.contains_key(&n) {
                        dist.insert(n, d + 1);
                        queue.push_back(n);
                    }
                }
            }
            if dist.len() != honest.len() {
                return None;
            }
            max = max.max(*dist.values().max().unwrap_or(&0));
        }
        Some(max.max(1))
    }
}
