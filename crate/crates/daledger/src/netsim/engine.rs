//! The lock-step round engine.
//!
//! Time advances in synchronous rounds. A message sent in round `T` is
//! delivered after one round per hop toward its destination (neighbor
//! traffic takes exactly one round). Each round the engine: produces any
//! blocks scheduled for it, delivers due messages, lets every node react,
//! and fires fetch timeouts. Everything is driven by the scenario's seed;
//! two runs of the same scenario produce identical traces, byte for byte.
//!
//! Honest behavior follows the validity rules: simplistic nodes download
//! whole blocks (from the producer or any neighbor that already accepted —
//! acceptance obliges a node to serve the data onward), probabilistic nodes
//! sample the extended square against the wide header's line roots and
//! gossip verified shares to storage nodes, storage nodes pull whole squares,
//! reconstruct when enough cells arrive, and turn miscoded lines into fraud
//! proofs that flood the network.

use super::config::*;
use super::trace::*;
use crate::apps::{
    self, currency, dummy, registrar, sync_app, AppDescriptor, AppLogic, AppRegistry, AppState,
    KeyPair, StoragePeer,
};
use crate::block::{
    block_valid_simplistic, make_block, merkle_root_over_digests, Block, BlockHeader,
    SampleOutcome, ValidityMode, WideHeader,
};
use crate::coding::{
    gen_coding_fraud_proof, reconstruct, verify_coding_fraud_proof, Axis, CellGrid,
    CodingFraudProof, ExtendedDataSquare,
};
use crate::config::ChainConfig;
use crate::nmt::{Message, NamespaceId, NamespaceProof, NamespaceTree};
use crate::sampler::draw_samples;
use std::collections::{BTreeMap, BTreeSet};

/// Seed base for per-node producer keypairs.
const PRODUCER_KEY_BASE: u64 = 0x70_0000;

fn mix_seed(seed: u64, node: u32, hash: &[u8; 32]) -> u64 {
    let h = u64::from_be_bytes(hash[..8].try_into().unwrap());
    seed ^ (u64::from(node) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ h.rotate_left(17)
}

#[derive(Debug, Clone)]
struct SampleReply {
    row: u16,
    col: u16,
    bytes: Vec<u8>,
    path: crate::nmt::AuditPath,
}

#[derive(Debug, Clone)]
enum Payload {
    Announce(WideHeader),
    GetBlock([u8; 32]),
    BlockData(Box<Block>),
    GetSquare([u8; 32]),
    SquareData([u8; 32], Vec<Option<Vec<u8>>>),
    GetSamples([u8; 32], Vec<(u16, u16)>),
    Samples([u8; 32], Vec<SampleReply>),
    ShareGossip([u8; 32], Vec<SampleReply>),
    Fraud([u8; 32], CodingFraudProof),
}

impl Payload {
    /// Canonical payload bytes on the simulated wire (framing excluded).
    fn wire_len(&self) -> u64 {
        let reply_len =
            |r: &SampleReply| 4 + r.bytes.len() as u64 + 1 + r.path.steps.len() as u64 * 49;
        match self {
            Payload::Announce(w) => w.wire_len() as u64,
            Payload::GetBlock(_) | Payload::GetSquare(_) => 33,
            Payload::BlockData(b) => b.canonical_bytes().len() as u64,
            Payload::SquareData(_, cells) => {
                33 + cells
                    .iter()
                    .map(|c| 1 + c.as_ref().map_or(0, |b| b.len() as u64))
                    .sum::<u64>()
            }
            Payload::GetSamples(_, cells) => 33 + 4 * cells.len() as u64,
            Payload::Samples(_, replies) | Payload::ShareGossip(_, replies) => {
                33 + replies.iter().map(reply_len).sum::<u64>()
            }
            Payload::Fraud(_, proof) => 33 + proof.wire_len() as u64,
        }
    }
}

struct Envelope {
    to: u32,
    from: u32,
    seq: u64,
    payload: Payload,
}

/// Per-header node state.
#[derive(Default)]
struct Rec {
    wide: Option<WideHeader>,
    received: u32,
    block: Option<Block>,
    square: Option<ExtendedDataSquare>,
    /// Verified stray cells (from sampling or gossip).
    cells: BTreeMap<(u16, u16), (Vec<u8>, crate::nmt::AuditPath)>,
    /// Raw square served by the producer (storage acquisition).
    served_cells: Option<Vec<Option<Vec<u8>>>>,
    samples: Vec<(u16, u16)>,
    sample_ok: BTreeMap<(u16, u16), (Vec<u8>, crate::nmt::AuditPath)>,
    asked: BTreeSet<u32>,
    sample_asked: BTreeSet<u32>,
    verdict: Option<bool>,
    first_accept: Option<u32>,
    fraud: Option<CodingFraudProof>,
    fraud_rebroadcast: bool,
    fraud_rejected: bool,
    data_round: Option<u32>,
}

struct NodeRt {
    spec: NodeSpec,
    headers: BTreeMap<[u8; 32], Rec>,
}

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    Engine::new(cfg)?.run()
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    chain: ChainConfig,
    registry: AppRegistry,
    gen: WorkloadGen,
    nodes: Vec<NodeRt>,
    node_index: BTreeMap<u32, usize>,
    storage_ids: Vec<u32>,
    dist: BTreeMap<u32, BTreeMap<u32, u32>>,
    queue: BTreeMap<u32, Vec<Envelope>>,
    seq: u64,
    round: u32,
    headers_by_plan: BTreeMap<u32, BlockHeader>,
    producers_by_height: BTreeMap<u64, apps::Address>,
    trace: Trace,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Result<Self, SimError> {
        let chain = cfg.chain.chain_config();
        let mut registry = AppRegistry::default();
        for app in &cfg.apps {
            registry.register(descriptor_for(app, &chain));
        }
        let gen = WorkloadGen::new(cfg, &chain);
        let nodes: Vec<NodeRt> = cfg
            .nodes
            .iter()
            .map(|spec| NodeRt { spec: spec.clone(), headers: BTreeMap::new() })
            .collect();
        let node_index = nodes.iter().enumerate().map(|(i, n)| (n.spec.id, i)).collect();
        let storage_ids: Vec<u32> = cfg
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Storage)
            .map(|n| n.id)
            .collect();
        let dist = cfg.nodes.iter().map(|n| (n.id, cfg.distances(n.id))).collect();
        let trace = Trace {
            scenario: cfg.name.clone(),
            rounds: cfg.rounds,
            delta: cfg.delta,
            hop_bound: cfg.honest_diameter().unwrap(),
            nodes: cfg
                .nodes
                .iter()
                .map(|n| TraceNode { id: n.id, kind: n.kind, honest: n.honest, rule: n.rule })
                .collect(),
            ..Trace::default()
        };
        Ok(Self {
            cfg,
            chain,
            registry,
            gen,
            nodes,
            node_index,
            storage_ids,
            dist,
            queue: BTreeMap::new(),
            seq: 0,
            round: 0,
            headers_by_plan: BTreeMap::new(),
            producers_by_height: BTreeMap::new(),
            trace,
        })
    }

    fn run(mut self) -> Result<Trace, SimError> {
        self.install_genesis()?;
        for round in 0..=self.cfg.rounds {
            self.round = round;
            self.produce_scheduled()?;
            self.deliver_due();
            self.tick_nodes();
        }
        self.finish_chain_views();
        self.run_app_sync();
        Ok(self.trace)
    }

    // ---------------------------------------------------------------- setup

    fn install_genesis(&mut self) -> Result<(), SimError> {
        let genesis = make_block(None, vec![], ValidityMode::Simplistic, &self.chain)
            .map_err(|e| SimError::Config(format!("genesis: {e}")))?;
        let hash = genesis.header.hash();
        self.headers_by_plan.insert(0, genesis.header.clone());
        self.trace.headers.insert(
            hash,
            TraceHeader { plan_id: 0, height: 0, producer: u32::MAX, probabilistic: false },
        );
        for node in &mut self.nodes {
            let rec = node.headers.entry(hash).or_default();
            rec.wide = Some(genesis.wide_header());
            rec.block = Some(genesis.clone());
            rec.verdict = Some(true);
            rec.first_accept = Some(0);
            rec.data_round = Some(0);
        }
        // genesis events keep the checkers' bookkeeping uniform
        for node in &self.cfg.nodes {
            self.trace.verdicts.push(VerdictEvent { node: node.id, header: hash, accepted: true, round: 0 });
            if node.kind == NodeKind::Storage {
                self.trace.full_data.push(DataEvent { node: node.id, header: hash, round: 0 });
            }
        }
        Ok(())
    }

    // ----------------------------------------------------------- production

    fn produce_scheduled(&mut self) -> Result<(), SimError> {
        let due: Vec<BlockPlan> = self
            .cfg
            .blocks
            .iter()
            .filter(|p| p.round == self.round)
            .cloned()
            .collect();
        for plan in due {
            let parent = self
                .headers_by_plan
                .get(&plan.parent)
                .cloned()
                .ok_or_else(|| SimError::Config(format!("block {} produced before its parent", plan.id)))?;
            let messages = self.gen.build(&plan.workload, plan.producer);
            let mode = match plan.mode {
                Rule::Simplistic => ValidityMode::Simplistic,
                Rule::Probabilistic => ValidityMode::Probabilistic,
            };
            let mut block = make_block(Some(&parent), messages, mode, &self.chain)
                .map_err(|e| SimError::Config(format!("block {}: {e}", plan.id)))?;

            let producer_spec = self.cfg.node(plan.producer);
            if !producer_spec.honest {
                if let Adversary::BadEncoding { axis, index } = &self.cfg.adversary {
                    if mode == ValidityMode::Probabilistic {
                        let square = block.square.take().unwrap();
                        let side = square.side();
                        let (r, c) = if axis == "row" {
                            (*index as usize % side, side - 1)
                        } else {
                            (side - 1, *index as usize % side)
                        };
                        // flip a parity byte, recommit every root
                        let tampered = square.tamper(r, c, |bytes| bytes[0] ^= 0x5A);
                        block.header.availability_root =
                            merkle_root_over_digests(&tampered.line_roots());
                        block.square = Some(tampered);
                    }
                }
            }

            let hash = block.header.hash();
            self.headers_by_plan.insert(plan.id, block.header.clone());
            self.producers_by_height
                .insert(block.header.height, self.gen.producer_key(plan.producer).address());
            self.trace.headers.insert(
                hash,
                TraceHeader {
                    plan_id: plan.id,
                    height: block.header.height,
                    producer: plan.producer,
                    probabilistic: mode == ValidityMode::Probabilistic,
                },
            );

            let wide = block.wide_header();
            let producer_idx = self.node_index[&plan.producer];
            {
                let rec = self.nodes[producer_idx].headers.entry(hash).or_default();
                rec.wide = Some(wide.clone());
                rec.square = block.square.clone();
                rec.block = Some(block.clone());
                rec.received = self.round;
                rec.verdict = Some(true);
                rec.first_accept = Some(self.round);
                rec.data_round = Some(self.round);
            }
            self.trace.verdicts.push(VerdictEvent {
                node: plan.producer,
                header: hash,
                accepted: true,
                round: self.round,
            });
            if self.cfg.node(plan.producer).kind == NodeKind::Storage {
                self.trace.full_data.push(DataEvent { node: plan.producer, header: hash, round: self.round });
            }
            for neighbor in self.cfg.neighbors(plan.producer) {
                self.send(plan.producer, neighbor, Payload::Announce(wide.clone()));
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------ transport

    fn send(&mut self, from: u32, to: u32, payload: Payload) {
        if from == to {
            return;
        }
        let Some(&hops) = self.dist[&from].get(&to) else {
            return; // unreachable: dropped
        };
        let hops = hops.max(1);
        let size = payload.wire_len();
        let up = self.trace.bytes.entry((from, self.round)).or_default();
        up.1 += size;
        let deliver = self.round + hops;
        if deliver > self.cfg.rounds {
            return; // past the horizon; bytes already charged to the sender
        }
        self.seq += 1;
        self.queue
            .entry(deliver)
            .or_default()
            .push(Envelope { to, from, seq: self.seq, payload });
    }

    fn deliver_due(&mut self) {
        let Some(mut due) = self.queue.remove(&self.round) else {
            return;
        };
        due.sort_by_key(|e| (e.to, e.seq));
        for env in due {
            let size = env.payload.wire_len();
            let down = self.trace.bytes.entry((env.to, self.round)).or_default();
            down.0 += size;
            self.receive(env);
        }
    }

    // -------------------------------------------------------------- inbound

    fn receive(&mut self, env: Envelope) {
        let Envelope { to, from, payload, .. } = env;
        let idx = self.node_index[&to];
        if !self.nodes[idx].spec.honest {
            self.receive_dishonest(to, from, payload);
            return;
        }
        match payload {
            Payload::Announce(wide) => self.on_announce(to, from, wide),
            Payload::GetBlock(hash) => {
                let reply = self.nodes[idx]
                    .headers
                    .get(&hash)
                    .and_then(|rec| rec.block.clone());
                if let Some(block) = reply {
                    self.send(to, from, Payload::BlockData(Box::new(block)));
                }
            }
            Payload::BlockData(block) => self.on_block_data(to, *block),
            Payload::GetSquare(hash) => {
                let cells = self.nodes[idx].headers.get(&hash).and_then(|rec| {
                    rec.square
                        .as_ref()
                        .map(|sq| sq.cells().iter().map(|s| Some(s.bytes().to_vec())).collect())
                });
                if let Some(cells) = cells {
                    self.send(to, from, Payload::SquareData(hash, cells));
                }
            }
            Payload::SquareData(hash, cells) => self.on_square_data(to, hash, cells),
            Payload::GetSamples(hash, cells) => self.serve_samples(to, from, hash, &cells, None),
            Payload::Samples(hash, replies) => self.on_samples(to, hash, replies),
            Payload::ShareGossip(hash, replies) => self.on_gossip(to, hash, replies),
            Payload::Fraud(hash, proof) => self.on_fraud(to, hash, proof),
        }
    }

    /// Dishonest nodes follow their script: producers answer data requests
    /// per the adversary strategy and stay silent otherwise.
    fn receive_dishonest(&mut self, to: u32, from: u32, payload: Payload) {
        let idx = self.node_index[&to];
        match (&self.cfg.adversary, payload) {
            (Adversary::WithholdBlock { serve_only }, Payload::GetBlock(hash)) => {
                if serve_only.contains(&from) {
                    let reply = self.nodes[idx].headers.get(&hash).and_then(|r| r.block.clone());
                    if let Some(block) = reply {
                        self.send(to, from, Payload::BlockData(Box::new(block)));
                    }
                }
            }
            (Adversary::WithholdBlock { .. }, _) => {}
            (Adversary::WithholdCells { cells }, Payload::GetSamples(hash, wanted)) => {
                let withheld: BTreeSet<(u16, u16)> =
                    cells.iter().map(|&(r, c)| (r as u16, c as u16)).collect();
                let allowed: Vec<(u16, u16)> =
                    wanted.into_iter().filter(|cell| !withheld.contains(cell)).collect();
                self.serve_samples(to, from, hash, &allowed, None);
            }
            (Adversary::WithholdCells { .. }, _) => {}
            // a bad-encoding producer behaves like an honest data server: the
            // data is all there, only the code is wrong
            (Adversary::BadEncoding { .. }, Payload::GetBlock(hash)) => {
                let reply = self.nodes[idx].headers.get(&hash).and_then(|r| r.block.clone());
                if let Some(block) = reply {
                    self.send(to, from, Payload::BlockData(Box::new(block)));
                }
            }
            (Adversary::BadEncoding { .. }, Payload::GetSquare(hash)) => {
                let cells = self.nodes[idx].headers.get(&hash).and_then(|rec| {
                    rec.square
                        .as_ref()
                        .map(|sq| sq.cells().iter().map(|s| Some(s.bytes().to_vec())).collect())
                });
                if let Some(cells) = cells {
                    self.send(to, from, Payload::SquareData(hash, cells));
                }
            }
            (Adversary::BadEncoding { .. }, Payload::GetSamples(hash, wanted)) => {
                self.serve_samples(to, from, hash, &wanted, None);
            }
            // omission adversaries misbehave at the storage query surface,
            // not during block propagation
            (Adversary::OmitNamespace { .. } | Adversary::None, Payload::GetBlock(hash)) => {
                let reply = self.nodes[idx].headers.get(&hash).and_then(|r| r.block.clone());
                if let Some(block) = reply {
                    self.send(to, from, Payload::BlockData(Box::new(block)));
                }
            }
            (Adversary::OmitNamespace { .. } | Adversary::None, Payload::GetSamples(hash, wanted)) => {
                self.serve_samples(to, from, hash, &wanted, None);
            }
            (Adversary::OmitNamespace { .. } | Adversary::None, Payload::GetSquare(hash)) => {
                let cells = self.nodes[idx].headers.get(&hash).and_then(|rec| {
                    rec.square
                        .as_ref()
                        .map(|sq| sq.cells().iter().map(|s| Some(s.bytes().to_vec())).collect())
                });
                if let Some(cells) = cells {
                    self.send(to, from, Payload::SquareData(hash, cells));
                }
            }
            (_, Payload::Announce(wide)) => {
                // dishonest nodes still remember headers (they may produce on
                // top of them) but do not relay
                let hash = wide.header.hash();
                let rec = self.nodes[idx].headers.entry(hash).or_default();
                if rec.wide.is_none() {
                    rec.wide = Some(wide);
                    rec.received = self.round;
                }
            }
            _ => {}
        }
    }

    fn on_announce(&mut self, to: u32, from: u32, wide: WideHeader) {
        if !wide.roots_consistent() {
            return;
        }
        let hash = wide.header.hash();
        let idx = self.node_index[&to];
        if self.nodes[idx].headers.contains_key(&hash) {
            return;
        }
        let probabilistic_block = wide.header.mode == ValidityMode::Probabilistic;
        let k = wide.header.k as usize;
        {
            let rec = self.nodes[idx].headers.entry(hash).or_default();
            rec.wide = Some(wide.clone());
            rec.received = self.round;
        }
        // gossip the header onward
        for neighbor in self.cfg.neighbors(to) {
            if neighbor != from {
                self.send(to, neighbor, Payload::Announce(wide.clone()));
            }
        }
        let spec = self.nodes[idx].spec.clone();
        let producer = self.trace.headers.get(&hash).map(|h| h.producer).unwrap_or(from);
        let samples_wanted = spec.samples.unwrap_or(self.chain.sample_count);

        if spec.kind == NodeKind::Storage {
            if probabilistic_block {
                self.send(to, producer, Payload::GetSquare(hash));
            } else {
                self.send(to, producer, Payload::GetBlock(hash));
            }
            self.nodes[idx].headers.get_mut(&hash).unwrap().asked.insert(producer);
        }
        let samples_this_block = probabilistic_block && spec.rule == Rule::Probabilistic;
        if samples_this_block {
            let side = 2 * k;
            let total = side * side;
            let count = samples_wanted.min(total);
            let cells: Vec<(u16, u16)> =
                draw_samples(total, count, mix_seed(self.cfg.seed, to, &hash))
                    .into_iter()
                    .map(|p| ((p / side) as u16, (p % side) as u16))
                    .collect();
            let rec = self.nodes[idx].headers.get_mut(&hash).unwrap();
            rec.samples = cells.clone();
            rec.sample_asked.insert(producer);
            self.send(to, producer, Payload::GetSamples(hash, cells));
        } else if spec.kind != NodeKind::Storage {
            // simplistic acquisition (also the fallback for probabilistic
            // nodes seeing a simplistic block)
            self.send(to, producer, Payload::GetBlock(hash));
            self.nodes[idx].headers.get_mut(&hash).unwrap().asked.insert(producer);
        }
    }

    fn on_block_data(&mut self, to: u32, block: Block) {
        let hash = block.header.hash();
        let idx = self.node_index[&to];
        let Some(rec) = self.nodes[idx].headers.get_mut(&hash) else {
            return;
        };
        if rec.block.is_some() || rec.fraud_rejected {
            return;
        }
        if block_valid_simplistic(&block.header, Some(&block.messages), &self.chain) {
            // rebuild the square so this node can serve samples onward
            let block = match block.header.mode {
                ValidityMode::Probabilistic if block.square.is_none() => {
                    match crate::block::Block::from_canonical_bytes(&block.canonical_bytes(), &self.chain) {
                        Ok(b) => b,
                        Err(_) => return,
                    }
                }
                _ => block,
            };
            rec.square = block.square.clone();
            rec.block = Some(block);
            rec.data_round = Some(self.round);
            self.trace.full_data.push(DataEvent { node: to, header: hash, round: self.round });
            let accept_now = match self.nodes[idx].spec.rule {
                Rule::Simplistic => true,
                // a probabilistic node holding the data can answer its own
                // samples; a simplistic-mode block has nothing to sample
                Rule::Probabilistic => true,
            };
            if accept_now {
                self.set_verdict(to, hash, true);
            }
        } else {
            // data arrived but contradicts the root: a permanent rejection
            self.set_verdict(to, hash, false);
        }
    }

    fn on_square_data(&mut self, to: u32, hash: [u8; 32], cells: Vec<Option<Vec<u8>>>) {
        let idx = self.node_index[&to];
        let Some(rec) = self.nodes[idx].headers.get_mut(&hash) else {
            return;
        };
        let Some(wide) = rec.wide.clone() else { return };
        let k = wide.header.k as usize;
        if cells.len() != 4 * k * k {
            return;
        }
        rec.served_cells = Some(cells);
        self.try_reconstruct(to, hash);
    }

    fn serve_samples(
        &mut self,
        node: u32,
        to: u32,
        hash: [u8; 32],
        cells: &[(u16, u16)],
        _cap: Option<usize>,
    ) {
        let idx = self.node_index[&node];
        let Some(rec) = self.nodes[idx].headers.get(&hash) else {
            return;
        };
        let Some(square) = rec.square.as_ref() else {
            return;
        };
        let side = square.side();
        let mut replies = Vec::new();
        for &(r, c) in cells {
            let (r, c) = (r as usize, c as usize);
            if r >= side || c >= side {
                continue;
            }
            let path = square.line_tree(Axis::Row, r).audit_path(c);
            replies.push(SampleReply {
                row: r as u16,
                col: c as u16,
                bytes: square.cell(r, c).bytes().to_vec(),
                path,
            });
        }
        if !replies.is_empty() {
            self.send(node, to, Payload::Samples(hash, replies));
        }
    }

    fn on_samples(&mut self, to: u32, hash: [u8; 32], replies: Vec<SampleReply>) {
        let idx = self.node_index[&to];
        let Some(rec) = self.nodes[idx].headers.get_mut(&hash) else {
            return;
        };
        let Some(wide) = rec.wide.clone() else { return };
        let mut fresh = Vec::new();
        for reply in replies {
            let cell = (reply.row, reply.col);
            if rec.sample_ok.contains_key(&cell) {
                continue;
            }
            let outcome = SampleOutcome {
                row: reply.row as usize,
                col: reply.col as usize,
                response: Some((reply.bytes.clone(), reply.path.clone())),
            };
            if outcome.verifies(&wide) {
                rec.sample_ok.insert(cell, (reply.bytes.clone(), reply.path.clone()));
                rec.cells.insert(cell, (reply.bytes.clone(), reply.path.clone()));
                fresh.push(reply);
            }
        }
        let all_answered =
            !rec.samples.is_empty() && rec.samples.iter().all(|c| rec.sample_ok.contains_key(c));
        if all_answered && !rec.fraud_rejected {
            self.set_verdict(to, hash, true);
        }
        // forward verified shares to the storage layer
        if !fresh.is_empty() {
            for storage in self.storage_ids.clone() {
                if storage != to {
                    self.send(to, storage, Payload::ShareGossip(hash, fresh.clone()));
                }
            }
        }
    }

    fn on_gossip(&mut self, to: u32, hash: [u8; 32], replies: Vec<SampleReply>) {
        let idx = self.node_index[&to];
        if self.nodes[idx].spec.kind != NodeKind::Storage {
            return;
        }
        let Some(rec) = self.nodes[idx].headers.get_mut(&hash) else {
            return;
        };
        let Some(wide) = rec.wide.clone() else { return };
        let mut changed = false;
        for reply in replies {
            let cell = (reply.row, reply.col);
            if rec.cells.contains_key(&cell) {
                continue;
            }
            let outcome = SampleOutcome {
                row: reply.row as usize,
                col: reply.col as usize,
                response: Some((reply.bytes.clone(), reply.path.clone())),
            };
            if outcome.verifies(&wide) {
                rec.cells.insert(cell, (reply.bytes, reply.path));
                changed = true;
            }
        }
        if changed {
            self.try_reconstruct(to, hash);
        }
    }

    /// Storage-node reconstruction: merge served cells with gossiped ones and
    /// run the decoder. Success yields the full block; a mismatching line
    /// yields a fraud proof.
    fn try_reconstruct(&mut self, node: u32, hash: [u8; 32]) {
        let idx = self.node_index[&node];
        let rec = &self.nodes[idx].headers[&hash];
        if rec.block.is_some() {
            return;
        }
        let Some(wide) = rec.wide.clone() else { return };
        if wide.header.mode != ValidityMode::Probabilistic {
            return;
        }
        let k = wide.header.k as usize;
        let side = 2 * k;
        let mut grid = CellGrid { k, cells: vec![None; side * side] };
        if let Some(served) = &rec.served_cells {
            grid.cells.clone_from(served);
        }
        for (&(r, c), (bytes, _)) in &rec.cells {
            grid.cells[r as usize * side + c as usize] = Some(bytes.clone());
        }
        if grid.known() < k * k {
            return; // cannot possibly decode yet
        }
        match reconstruct(&grid, wide.row_roots(), wide.col_roots(), self.chain.share_payload_size)
        {
            Ok(square) => {
                let recovered = grid.known() < side * side;
                let messages = match crate::coding::parse_shares(&square.original_shares()) {
                    Ok(m) => m,
                    Err(_) => return,
                };
                let block = Block { header: wide.header.clone(), messages, square: Some(square) };
                // the reconstructed data must also stand behind the message root
                if !block_valid_simplistic(&block.header, Some(&block.messages), &self.chain) {
                    self.set_verdict(node, hash, false);
                    return;
                }
                let rec = self.nodes[idx].headers.get_mut(&hash).unwrap();
                rec.square = block.square.clone();
                rec.block = Some(block);
                rec.data_round = Some(self.round);
                self.trace.full_data.push(DataEvent { node, header: hash, round: self.round });
                if recovered {
                    self.trace.reconstructions.push(DataEvent { node, header: hash, round: self.round });
                }
                if !self.nodes[idx].headers[&hash].fraud_rejected
                    && self.nodes[idx].spec.rule == Rule::Simplistic
                {
                    self.set_verdict(node, hash, true);
                }
            }
            Err(crate::coding::ReconstructError::RootMismatch { axis, index }) => {
                // only a complete published square supports a proof
                if grid.cells.iter().any(Option::is_none) {
                    return;
                }
                let cells: Vec<Vec<u8>> =
                    grid.cells.iter().map(|c| c.clone().unwrap()).collect();
                let Ok(published) = ExtendedDataSquare::from_published(
                    k,
                    cells,
                    self.chain.share_payload_size,
                ) else {
                    return;
                };
                if published.line_roots() != wide.line_roots {
                    return; // served cells do not even match the commitment
                }
                if let Ok(proof) = gen_coding_fraud_proof(&published, axis, index) {
                    self.trace.fraud_events.push(FraudEvent {
                        node,
                        header: hash,
                        round: self.round,
                        emitted: true,
                    });
                    let rec = self.nodes[idx].headers.get_mut(&hash).unwrap();
                    rec.fraud = Some(proof.clone());
                    rec.fraud_rejected = true;
                    rec.fraud_rebroadcast = true;
                    self.set_verdict(node, hash, false);
                    for neighbor in self.cfg.neighbors(node) {
                        self.send(node, neighbor, Payload::Fraud(hash, proof.clone()));
                    }
                }
            }
            Err(_) => {}
        }
    }

    fn on_fraud(&mut self, to: u32, hash: [u8; 32], proof: CodingFraudProof) {
        let idx = self.node_index[&to];
        let Some(rec) = self.nodes[idx].headers.get_mut(&hash) else {
            return;
        };
        if rec.fraud.is_some() {
            return;
        }
        let Some(wide) = rec.wide.clone() else { return };
        if !verify_coding_fraud_proof(
            wide.row_roots(),
            wide.col_roots(),
            &proof,
            self.chain.share_size(),
        ) {
            return;
        }
        rec.fraud = Some(proof.clone());
        rec.fraud_rejected = true;
        self.trace.fraud_events.push(FraudEvent { node: to, header: hash, round: self.round, emitted: false });
        self.set_verdict(to, hash, false);
        if !self.nodes[idx].headers[&hash].fraud_rebroadcast {
            self.nodes[idx].headers.get_mut(&hash).unwrap().fraud_rebroadcast = true;
            for neighbor in self.cfg.neighbors(to) {
                self.send(to, neighbor, Payload::Fraud(hash, proof.clone()));
            }
        }
    }

    // ----------------------------------------------------------------- tick

    fn tick_nodes(&mut self) {
        for i in 0..self.nodes.len() {
            if !self.nodes[i].spec.honest {
                continue;
            }
            let node = self.nodes[i].spec.id;
            let hashes: Vec<[u8; 32]> = self.nodes[i].headers.keys().copied().collect();
            for hash in hashes {
                self.tick_header(i, node, hash);
            }
        }
    }

    fn tick_header(&mut self, idx: usize, node: u32, hash: [u8; 32]) {
        let spec = self.nodes[idx].spec.clone();
        let rec = &self.nodes[idx].headers[&hash];
        let received = rec.received;
        let has_data = rec.block.is_some();
        let verdict = rec.verdict;
        let fraud_rejected = rec.fraud_rejected;
        let Some(wide) = rec.wide.clone() else { return };
        let probabilistic_block = wide.header.mode == ValidityMode::Probabilistic;
        let samples_pending: Vec<(u16, u16)> = rec
            .samples
            .iter()
            .filter(|c| !rec.sample_ok.contains_key(c))
            .copied()
            .collect();
        let wants_samples = probabilistic_block && spec.rule == Rule::Probabilistic;
        let needs_data = spec.kind == NodeKind::Storage || !wants_samples;

        // a probabilistic node that came to hold full data answers itself
        if wants_samples && !samples_pending.is_empty() && has_data {
            let square = self.nodes[idx].headers[&hash].square.clone();
            if let Some(square) = square {
                let rec = self.nodes[idx].headers.get_mut(&hash).unwrap();
                for cell in samples_pending.clone() {
                    let (r, c) = (cell.0 as usize, cell.1 as usize);
                    let path = square.line_tree(Axis::Row, r).audit_path(c);
                    rec.sample_ok.insert(cell, (square.cell(r, c).bytes().to_vec(), path));
                }
                if !fraud_rejected {
                    self.set_verdict(node, hash, true);
                }
                return;
            }
        }

        // retries: one further peer per round until the timeout fires
        if self.round > received && self.round <= received + self.cfg.delta {
            if needs_data && !has_data {
                let asked = self.nodes[idx].headers[&hash].asked.clone();
                let candidates: Vec<u32> = if spec.kind == NodeKind::Storage && probabilistic_block
                {
                    self.storage_ids.clone()
                } else {
                    self.cfg.neighbors(node)
                };
                if let Some(next) = candidates.into_iter().find(|p| *p != node && !asked.contains(p)) {
                    self.nodes[idx].headers.get_mut(&hash).unwrap().asked.insert(next);
                    let msg = if spec.kind == NodeKind::Storage && probabilistic_block {
                        Payload::GetSquare(hash)
                    } else {
                        Payload::GetBlock(hash)
                    };
                    self.send(node, next, msg);
                }
            }
            if wants_samples && !samples_pending.is_empty() && !has_data {
                let asked = self.nodes[idx].headers[&hash].sample_asked.clone();
                if let Some(next) = self
                    .storage_ids
                    .clone()
                    .into_iter()
                    .find(|p| *p != node && !asked.contains(p))
                {
                    self.nodes[idx].headers.get_mut(&hash).unwrap().sample_asked.insert(next);
                    self.send(node, next, Payload::GetSamples(hash, samples_pending.clone()));
                }
            }
        }

        // fetch timeout: δ rounds after the header arrived
        if verdict.is_none() && self.round >= received + self.cfg.delta {
            let complete = if wants_samples {
                !self.nodes[idx].headers[&hash].samples.is_empty() && samples_pending.is_empty()
            } else {
                has_data
            };
            if !complete {
                self.set_verdict(node, hash, false);
            }
        }
    }

    fn set_verdict(&mut self, node: u32, hash: [u8; 32], accepted: bool) {
        let idx = self.node_index[&node];
        let rec = self.nodes[idx].headers.get_mut(&hash).unwrap();
        if rec.fraud_rejected && accepted {
            return; // fraud rejections are final
        }
        if rec.verdict == Some(accepted) {
            return;
        }
        rec.verdict = Some(accepted);
        if accepted && rec.first_accept.is_none() {
            rec.first_accept = Some(self.round);
        }
        self.trace.verdicts.push(VerdictEvent { node, header: hash, accepted, round: self.round });
    }

    // ------------------------------------------------------------- wrap-up

    fn finish_chain_views(&mut self) {
        let chains = self.planned_chains();
        for node in &self.nodes {
            if !node.spec.honest {
                continue;
            }
            let accepted = |h: &BlockHeader| {
                node.headers
                    .get(&h.hash())
                    .and_then(|r| r.verdict)
                    .unwrap_or(false)
            };
            let view = crate::block::ChainView { chains: chains.clone() };
            if let Some(best) = view.best_chain(&accepted) {
                self.trace.tips.push((node.spec.id, best.last().unwrap().hash()));
            } else {
                self.trace.tips.push((node.spec.id, [0u8; 32]));
            }
        }
    }

    /// Root-to-leaf header paths of the planned block tree.
    fn planned_chains(&self) -> Vec<Vec<BlockHeader>> {
        let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for plan in &self.cfg.blocks {
            children.entry(plan.parent).or_default().push(plan.id);
        }
        let mut chains = Vec::new();
        let mut stack = vec![(0u32, vec![self.headers_by_plan[&0].clone()])];
        while let Some((id, path)) = stack.pop() {
            match children.get(&id) {
                None => chains.push(path),
                Some(kids) => {
                    for &kid in kids.iter().rev() {
                        if let Some(h) = self.headers_by_plan.get(&kid) {
                            let mut next = path.clone();
                            next.push(h.clone());
                            stack.push((kid, next));
                        }
                    }
                }
            }
        }
        chains
    }

    /// After the rounds: every honest client replays its applications
    /// against the storage layer, and the trace records what that cost.
    fn run_app_sync(&mut self) {
        let genesis_states = self.gen.genesis_states();
        let chains = self.planned_chains();
        let clients: Vec<(u32, Vec<u64>)> = self
            .nodes
            .iter()
            .filter(|n| n.spec.honest && !n.spec.apps.is_empty())
            .map(|n| (n.spec.id, n.spec.apps.clone()))
            .collect();
        for (client, app_list) in clients {
            let idx = self.node_index[&client];
            let accepted = |h: &BlockHeader| {
                self.nodes[idx]
                    .headers
                    .get(&h.hash())
                    .and_then(|r| r.verdict)
                    .unwrap_or(false)
            };
            let view = crate::block::ChainView { chains: chains.clone() };
            let headers: Vec<BlockHeader> = view
                .best_chain(&accepted)
                .map(|c| c.to_vec())
                .unwrap_or_default();
            for app in &app_list {
                let app_ns = NamespaceId(*app);
                let mut peers: Vec<SimStoragePeer> = self
                    .storage_ids
                    .iter()
                    .map(|&sid| SimStoragePeer::new(self, sid))
                    .collect();
                let mut peer_refs: Vec<&mut dyn StoragePeer> =
                    peers.iter_mut().map(|p| p as &mut dyn StoragePeer).collect();
                let result = sync_app(
                    &mut peer_refs,
                    &self.registry,
                    app_ns,
                    &headers,
                    &self.producers_by_height,
                    &genesis_states,
                    &self.chain,
                );
                let report = match result {
                    Ok(synced) => SyncReport {
                        node: client,
                        app: app_ns,
                        ok: true,
                        commitment: synced.states[&app_ns].commitment(),
                        leaf_bytes_by_namespace: synced.stats.leaf_bytes_by_namespace,
                        proof_bytes: synced.stats.proof_bytes,
                        rejected_responses: synced.stats.rejected_responses,
                    },
                    Err(_) => SyncReport {
                        node: client,
                        app: app_ns,
                        ok: false,
                        commitment: [0; 32],
                        leaf_bytes_by_namespace: BTreeMap::new(),
                        proof_bytes: 0,
                        rejected_responses: 0,
                    },
                };
                self.trace.sync_reports.push(report);
            }
        }
    }
}

/// A storage node's query surface during the sync phase. Honest nodes answer
/// from their held blocks; a dishonest node scripted to omit a namespace
/// drops the last message of every response for it.
struct SimStoragePeer {
    honest: bool,
    omit: Option<NamespaceId>,
    trees: BTreeMap<[u8; 32], NamespaceTree>,
}

impl SimStoragePeer {
    fn new(engine: &Engine, storage_id: u32) -> Self {
        let idx = engine.node_index[&storage_id];
        let node = &engine.nodes[idx];
        let omit = match (&node.spec.honest, &engine.cfg.adversary) {
            (false, Adversary::OmitNamespace { ns }) => Some(NamespaceId(*ns)),
            _ => None,
        };
        let trees = node
            .headers
            .iter()
            .filter_map(|(hash, rec)| {
                rec.block.as_ref().map(|b| (*hash, b.message_tree(&engine.chain)))
            })
            .collect();
        Self { honest: node.spec.honest || omit.is_some(), omit, trees }
    }
}

impl StoragePeer for SimStoragePeer {
    fn namespace_data(
        &mut self,
        header: &BlockHeader,
        nid: NamespaceId,
    ) -> Option<(Vec<Message>, NamespaceProof)> {
        if !self.honest {
            return None;
        }
        let tree = self.trees.get(&header.hash())?;
        let mut messages = tree.namespace_messages(nid);
        let mut proof = tree.prove_namespace(nid);
        if self.omit == Some(nid) && messages.len() >= 2 {
            messages.pop();
            if let NamespaceProof::Presence { paths, .. } = &mut proof {
                paths.pop();
            }
        }
        Some((messages, proof))
    }

    fn leaf_path(
        &mut self,
        header: &BlockHeader,
        leaf_hash: [u8; 32],
    ) -> Option<(crate::nmt::NamespacedDigest, crate::nmt::AuditPath)> {
        let tree = self.trees.get(&header.hash())?;
        let idx = (0..tree.len()).find(|&i| tree.leaf_digest(i).hash_bytes() == &leaf_hash)?;
        Some((tree.leaf_digest(idx), tree.audit_path(idx)))
    }
}

fn descriptor_for(app: &AppSetup, chain: &ChainConfig) -> AppDescriptor {
    match app {
        AppSetup::Currency { ns, .. } => {
            AppDescriptor { namespace: NamespaceId(*ns), logic: AppLogic::Currency }
        }
        AppSetup::Registrar { ns, currency, price, key_seed } => AppDescriptor {
            namespace: NamespaceId(*ns),
            logic: AppLogic::Registrar {
                currency_ns: NamespaceId(*currency),
                registrar: apps::keypair_from_seed(*key_seed).address(),
                price: if *price == 0 { chain.name_price } else { *price },
            },
        },
        AppSetup::Dummy { ns } => {
            AppDescriptor { namespace: NamespaceId(*ns), logic: AppLogic::Dummy }
        }
    }
}

/// Deterministic workload construction: accounts, nonces, names, and dummy
/// payloads all derive from the scenario.
struct WorkloadGen {
    chain: ChainConfig,
    accounts: BTreeMap<u64, Vec<KeyPair>>,
    balances: BTreeMap<u64, u64>,
    registrars: BTreeMap<u64, (u64, KeyPair, u64)>,
    dummy_ns: Vec<u64>,
    nonces: BTreeMap<(u64, apps::Address), u64>,
    counters: BTreeMap<&'static str, u64>,
    producer_keys: BTreeMap<u32, KeyPair>,
}

impl WorkloadGen {
    fn new(cfg: &ScenarioConfig, chain: &ChainConfig) -> Self {
        let mut accounts = BTreeMap::new();
        let mut balances = BTreeMap::new();
        let mut registrars = BTreeMap::new();
        let mut dummy_ns = Vec::new();
        for app in &cfg.apps {
            match app {
                AppSetup::Currency { ns, accounts: n, balance } => {
                    let keys = (0..*n).map(|i| apps::keypair_from_seed(ns * 10_000 + i as u64)).collect();
                    accounts.insert(*ns, keys);
                    balances.insert(*ns, *balance);
                }
                AppSetup::Registrar { ns, currency, price, key_seed } => {
                    let price = if *price == 0 { chain.name_price } else { *price };
                    registrars.insert(*ns, (*currency, apps::keypair_from_seed(*key_seed), price));
                }
                AppSetup::Dummy { ns } => dummy_ns.push(*ns),
            }
        }
        let producer_keys = cfg
            .nodes
            .iter()
            .map(|n| (n.id, apps::keypair_from_seed(PRODUCER_KEY_BASE + u64::from(n.id))))
            .collect();
        Self {
            chain: chain.clone(),
            accounts,
            balances,
            registrars,
            dummy_ns,
            nonces: BTreeMap::new(),
            counters: BTreeMap::new(),
            producer_keys,
        }
    }

    fn producer_key(&self, node: u32) -> &KeyPair {
        &self.producer_keys[&node]
    }

    fn genesis_states(&self) -> BTreeMap<NamespaceId, AppState> {
        self.accounts
            .iter()
            .map(|(ns, keys)| {
                let funded: Vec<(apps::Address, u64)> =
                    keys.iter().map(|k| (k.address(), self.balances[ns])).collect();
                (NamespaceId(*ns), currency::genesis(&funded))
            })
            .collect()
    }

    fn next_nonce(&mut self, ns: u64, addr: apps::Address) -> u64 {
        let e = self.nonces.entry((ns, addr)).or_insert(0);
        let n = *e;
        *e += 1;
        n
    }

    fn bump(&mut self, key: &'static str) -> u64 {
        let e = self.counters.entry(key).or_insert(0);
        let n = *e;
        *e += 1;
        n
    }

    fn build(&mut self, workload: &Workload, producer: u32) -> Vec<Message> {
        let mut out = Vec::new();
        for &(ns, count) in &workload.transfers {
            let keys = self.accounts.get(&ns).cloned().unwrap_or_default();
            if keys.is_empty() {
                continue;
            }
            for _ in 0..count {
                let i = self.bump("transfer") as usize;
                let sender = &keys[i % keys.len()];
                let recipient = keys[(i + 1) % keys.len()].address();
                let nonce = self.next_nonce(ns, sender.address());
                let tx = currency::make_transfer(sender, recipient, 1, nonce, vec![], None);
                out.push(Message::new(NamespaceId(ns), tx.encode()).unwrap());
            }
        }
        for &(ns, count) in &workload.fee_txs {
            let keys = self.accounts.get(&ns).cloned().unwrap_or_default();
            if keys.is_empty() {
                continue;
            }
            let child_ns = self.dummy_ns.first().copied().unwrap_or(ns);
            for _ in 0..count {
                let i = self.bump("fee") as usize;
                let child_key = format!("fee-child-{i}");
                let child_payload = dummy::encode(child_key.as_bytes(), &[0xFE; 24]);
                let child = Message::new(NamespaceId(child_ns), child_payload).unwrap();
                let child_hash = apps::fee_child_hash(&child, self.chain.max_leaf_size).unwrap();
                let sender = &keys[i % keys.len()];
                let nonce = self.next_nonce(ns, sender.address());
                let tx = currency::make_transfer(sender, [0; 32], 1, nonce, vec![], Some(child_hash));
                let _ = producer; // fee recipient is implied by the block context
                out.push(Message::new(NamespaceId(ns), tx.encode()).unwrap());
                out.push(child);
            }
        }
        for &(ns, count) in &workload.top_ups {
            let Some((currency_ns, registrar_key, price)) = self.registrars.get(&ns).cloned()
            else {
                continue;
            };
            let keys = self.accounts.get(&currency_ns).cloned().unwrap_or_default();
            if keys.is_empty() {
                continue;
            }
            for _ in 0..count {
                let i = self.bump("topup") as usize;
                let sender = &keys[i % keys.len()];
                let nonce = self.next_nonce(currency_ns, sender.address());
                let transfer = currency::make_transfer(
                    sender,
                    registrar_key.address(),
                    price,
                    nonce,
                    ns.to_be_bytes().to_vec(),
                    None,
                );
                let top_up = registrar::RegistrarTx::TopUp { currency_tx_hash: transfer.tx_hash() };
                out.push(Message::new(NamespaceId(currency_ns), transfer.encode()).unwrap());
                out.push(Message::new(NamespaceId(ns), top_up.encode()).unwrap());
            }
        }
        for &(ns, count) in &workload.registrations {
            let Some((currency_ns, _, _)) = self.registrars.get(&ns).cloned() else {
                continue;
            };
            let keys = self.accounts.get(&currency_ns).cloned().unwrap_or_default();
            if keys.is_empty() {
                continue;
            }
            for _ in 0..count {
                let i = self.bump("register") as usize;
                let owner = &keys[i % keys.len()];
                let name = format!("name-{ns}-{i}");
                let tx = registrar::make_register(name.as_bytes(), owner);
                out.push(Message::new(NamespaceId(ns), tx.encode()).unwrap());
            }
        }
        for &(ns, count, size) in &workload.dummy {
            for _ in 0..count {
                let i = self.bump("dummy");
                let key = format!("k-{ns}-{i}");
                let payload = dummy::encode(key.as_bytes(), &vec![0xD7; size as usize]);
                out.push(Message::new(NamespaceId(ns), payload).unwrap());
            }
        }
        out
    }
}
