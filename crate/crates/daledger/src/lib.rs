//! A desk-scale, data-availability-first ledger.
//!
//! The chain in this crate does exactly two things: it orders messages and it
//! guarantees that the ordered data was published. Nothing on the consensus
//! path ever interprets message contents; applications are executed entirely
//! client-side. The pieces that make this work:
//!
//! * [`nmt`] — a namespaced Merkle tree. Every node carries the min/max
//!   namespace of its descendants, so a storage node can prove it returned the
//!   *complete* set of messages for a namespace (or that the namespace is
//!   absent), and any omission is detectable.
//! * [`coding`] — fixed-size shares, the 2D Reed-Solomon extended data square
//!   over GF(2^8), reconstruction from partial data, and erasure-coding fraud
//!   proofs.
//! * [`block`] — headers, chain linkage, the two block validity rules
//!   (download-everything vs. random sampling), and a minimal longest-chain
//!   fork choice.
//! * [`sampler`] — the probability mathematics: withholding-detection odds,
//!   the coupon-collector coverage formula for group drawings, and the
//!   stake-proportional sample-count rule.
//! * [`apps`] — client-side applications over never-failing transition
//!   functions: a currency (with fee transactions), a name registrar that
//!   depends on the currency, and a dummy key-value app.
//! * [`netsim`] — a deterministic, round-based simulator of consensus,
//!   storage, and client nodes with scripted adversaries, plus soundness and
//!   agreement checkers over the recorded traces.
//! * [`bench`] — the measurement harness behind the CLI; produces CSV tables
//!   of download costs, proof sizes, and state growth.
//!
//! Start with the runnable programs in `examples/` — there is one per major
//! capability — or with the `daledger` binary (`daledger --help`).

pub mod apps;
pub mod bench;
pub mod block;
pub mod coding;
pub mod config;
pub mod netsim;
pub mod nmt;
pub mod sampler;

pub use config::ChainConfig;
