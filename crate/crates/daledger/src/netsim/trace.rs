//! Run traces, the metrics CSV, and the soundness/agreement checkers.

use super::config::{NodeKind, Rule};
use crate::nmt::NamespaceId;
use std::collections::BTreeMap;

/// Everything observable about one scenario run. Deterministic given the
/// scenario; the CSV rendering is byte-stable.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub scenario: String,
    pub rounds: u32,
    pub delta: u32,
    /// Hop bound `k` in the soundness/agreement deadlines: the honest
    /// subgraph's diameter.
    pub hop_bound: u32,
    pub nodes: Vec<TraceNode>,
    /// Produced blocks by header hash.
    pub headers: BTreeMap<[u8; 32], TraceHeader>,
    /// Every verdict event, in (round, node) order.
    pub verdicts: Vec<VerdictEvent>,
    /// Rounds at which nodes came to hold a block's full data.
    pub full_data: Vec<DataEvent>,
    /// Reconstruction completions (subset of `full_data` achieved by
    /// decoding rather than download).
    pub reconstructions: Vec<DataEvent>,
    /// Fraud proofs emitted and verified: `(node, header, round, emitted?)`.
    pub fraud_events: Vec<FraudEvent>,
    /// Wire bytes per node per round.
    pub bytes: BTreeMap<(u32, u32), (u64, u64)>,
    /// Chain tip per node after the final round.
    pub tips: Vec<(u32, [u8; 32])>,
    /// Application sync reports for client nodes.
    pub sync_reports: Vec<SyncReport>,
}

#[derive(Debug, Clone)]
pub struct TraceNode {
    pub id: u32,
    pub kind: NodeKind,
    pub honest: bool,
    pub rule: Rule,
}

#[derive(Debug, Clone)]
pub struct TraceHeader {
    pub plan_id: u32,
    pub height: u64,
    pub producer: u32,
    pub probabilistic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerdictEvent {
    pub node: u32,
    pub header: [u8; 32],
    pub accepted: bool,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataEvent {
    pub node: u32,
    pub header: [u8; 32],
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FraudEvent {
    pub node: u32,
    pub header: [u8; 32],
    pub round: u32,
    pub emitted: bool,
}

#[derive(Debug, Clone)]
pub struct SyncReport {
    pub node: u32,
    pub app: NamespaceId,
    pub ok: bool,
    pub commitment: [u8; 32],
    pub leaf_bytes_by_namespace: BTreeMap<NamespaceId, u64>,
    pub proof_bytes: u64,
    pub rejected_responses: u32,
}

impl Trace {
    /// Final verdict of a node on a header, with the first round it accepted
    /// (if it ever did).
    fn final_verdict(&self, node: u32, header: &[u8; 32]) -> Option<(bool, Option<u32>)> {
        let mut last = None;
        let mut first_accept = None;
        for v in self.verdicts.iter().filter(|v| v.node == node && &v.header == header) {
            if v.accepted && first_accept.is_none() {
                first_accept = Some(v.round);
            }
            last = Some(v.accepted);
        }
        last.map(|l| (l, first_accept))
    }

    /// Honest nodes whose final verdict on `header` is accept, with their
    /// first acceptance rounds.
    pub fn honest_accepts(&self, header: &[u8; 32]) -> Vec<(u32, u32)> {
        self.nodes
            .iter()
            .filter(|n| n.honest)
            .filter_map(|n| match self.final_verdict(n.id, header) {
                Some((true, Some(round))) => Some((n.id, round)),
                _ => None,
            })
            .collect()
    }

    /// Deadline horizon for the availability definitions.
    pub fn deadline(&self, from_round: u32) -> u32 {
        from_round + self.hop_bound * self.delta
    }

    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(u32, u32, String, String)> = Vec::new();
        let kind_str = |k: NodeKind| match k {
            NodeKind::Consensus => "consensus",
            NodeKind::Storage => "storage",
            NodeKind::Client => "client",
        };
        let node_kind: BTreeMap<u32, &str> =
            self.nodes.iter().map(|n| (n.id, kind_str(n.kind))).collect();
        let short = |h: &[u8; 32]| hex::encode(&h[..8]);
        for (&(node, round), &(down, up)) in &self.bytes {
            rows.push((node, round, "bytes_down".into(), down.to_string()));
            rows.push((node, round, "bytes_up".into(), up.to_string()));
        }
        for v in &self.verdicts {
            let metric = if v.accepted { "accept" } else { "reject" };
            rows.push((v.node, v.round, format!("{metric}:{}", short(&v.header)), "1".into()));
        }
        for d in &self.full_data {
            rows.push((d.node, d.round, format!("full_data:{}", short(&d.header)), "1".into()));
        }
        for d in &self.reconstructions {
            rows.push((d.node, d.round, format!("reconstructed:{}", short(&d.header)), "1".into()));
        }
        for f in &self.fraud_events {
            let metric = if f.emitted { "fraud_emitted" } else { "fraud_verified" };
            rows.push((f.node, f.round, format!("{metric}:{}", short(&f.header)), "1".into()));
        }
        for (node, tip) in &self.tips {
            rows.push((*node, self.rounds, format!("tip:{}", short(tip)), "1".into()));
        }
        for s in &self.sync_reports {
            rows.push((
                s.node,
                self.rounds,
                format!("sync_ok:{}", s.app),
                if s.ok { "1".into() } else { "0".into() },
            ));
            rows.push((
                s.node,
                self.rounds,
                format!("sync_commitment:{}", s.app),
                hex::encode(s.commitment),
            ));
            for (ns, bytes) in &s.leaf_bytes_by_namespace {
                rows.push((s.node, self.rounds, format!("sync_leaf_bytes:{ns}"), bytes.to_string()));
            }
            rows.push((s.node, self.rounds, format!("sync_proof_bytes:{}", s.app), s.proof_bytes.to_string()));
            rows.push((
                s.node,
                self.rounds,
                format!("sync_rejected:{}", s.app),
                s.rejected_responses.to_string(),
            ));
        }
        rows.sort();
        let mut out = String::from("scenario,node,kind,round,metric,value\n");
        for (node, round, metric, value) in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.scenario,
                node,
                node_kind.get(&node).copied().unwrap_or("?"),
                round,
                metric,
                value
            ));
        }
        out
    }
}

/// Data availability soundness over a trace: whenever an honest node's final
/// verdict accepts a block, some honest storage node holds the block's full
/// data within `k·δ` rounds of the first acceptance. Deadlines past the end
/// of the trace cannot be falsified and pass.
pub fn check_soundness(trace: &Trace) -> bool {
    let storage: Vec<u32> = trace
        .nodes
        .iter()
        .filter(|n| n.honest && n.kind == NodeKind::Storage)
        .map(|n| n.id)
        .collect();
    for header in trace.headers.keys() {
        let accepts = trace.honest_accepts(header);
        let Some(&(_, first)) = accepts.iter().min_by_key(|(_, r)| *r) else {
            continue;
        };
        let deadline = trace.deadline(first);
        let held = storage.iter().any(|&s| {
            trace
                .full_data
                .iter()
                .any(|d| d.node == s && &d.header == header && d.round <= deadline)
        });
        if !held && deadline <= trace.rounds {
            return false;
        }
    }
    true
}

/// Data availability agreement over a trace: whenever an honest node's final
/// verdict accepts a block, every honest node's final verdict accepts it,
/// with first acceptance within `k·δ` rounds of the earliest one.
pub fn check_agreement(trace: &Trace) -> bool {
    let honest: Vec<u32> = trace.nodes.iter().filter(|n| n.honest).map(|n| n.id).collect();
    for header in trace.headers.keys() {
        let accepts = trace.honest_accepts(header);
        if accepts.is_empty() {
            continue;
        }
        let first = accepts.iter().map(|&(_, r)| r).min().unwrap();
        let deadline = trace.deadline(first);
        if deadline > trace.rounds {
            continue; // cannot be falsified within this trace
        }
        for &node in &honest {
            if !accepts.iter().any(|&(n, r)| n == node && r <= deadline) {
                return false;
            }
        }
    }
    true
}
