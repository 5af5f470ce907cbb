//! The currency application: signed transfers between Ed25519 accounts, with
//! optional fee transactions that pay the block producer for carrying a
//! child message.
//!
//! A fee transaction names the leaf hash of the message it pays for. The fee
//! moves if and only if a Merkle path shows that leaf under the same block's
//! message root — the child's content is never parsed, so currency clients
//! stay sovereign over their own namespace.
//!
//! State: `balances` (address → amount), `nonces` (address → next nonce),
//! and `applied` (transaction hash → sender ‖ recipient ‖ amount), the log
//! dependency applications read to confirm a transfer happened.

use super::{Address, AppState, BlockContext};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use sha2::{Digest, Sha256};

pub const BALANCES: &str = "balances";
pub const NONCES: &str = "nonces";
pub const APPLIED: &str = "applied";

const TAG: u8 = 0x01;

/// A signing identity. Keys derive deterministically from seeds so tests,
/// scenarios, and benches can agree on accounts.
#[derive(Debug, Clone)]
pub struct KeyPair {
    sk: SigningKey,
    pk: Address,
}

impl KeyPair {
    pub fn address(&self) -> Address {
        self.pk
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.sk.sign(msg).to_bytes()
    }
}

pub fn keypair_from_seed(seed: u64) -> KeyPair {
    let mut h = Sha256::new();
    h.update(b"daledger-account");
    h.update(seed.to_be_bytes());
    let sk = SigningKey::from_bytes(&h.finalize().into());
    let pk = sk.verifying_key().to_bytes();
    KeyPair { sk, pk }
}

/// A transfer, signed over its canonical encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurrencyTx {
    pub sender: Address,
    pub recipient: Address,
    pub amount: u64,
    pub nonce: u64,
    /// Free-form routing hint (e.g. which registrar a top-up is meant for).
    pub memo: Vec<u8>,
    /// Leaf hash of the child message this fee pays for. Fee transactions
    /// credit the block producer, not `recipient`.
    pub fee_child: Option<[u8; 32]>,
    pub signature: [u8; 64],
}

impl CurrencyTx {
    /// Canonical encoding. Everything before the signature is the signature
    /// preimage; the encoding is bit-exact by construction.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.preimage();
        out.extend_from_slice(&self.signature);
        out
    }

    fn preimage(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(128 + self.memo.len());
        out.push(TAG);
        out.extend_from_slice(&self.sender);
        out.extend_from_slice(&self.recipient);
        out.extend_from_slice(&self.amount.to_be_bytes());
        out.extend_from_slice(&self.nonce.to_be_bytes());
        out.extend_from_slice(&(self.memo.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.memo);
        match &self.fee_child {
            None => out.push(0),
            Some(h) => {
                out.push(1);
                out.extend_from_slice(h);
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Option<&[u8]> {
            let s = bytes.get(*pos..*pos + n)?;
            *pos += n;
            Some(s)
        };
        if *take(&mut pos, 1)?.first()? != TAG {
            return None;
        }
        let sender: Address = take(&mut pos, 32)?.try_into().ok()?;
        let recipient: Address = take(&mut pos, 32)?.try_into().ok()?;
        let amount = u64::from_be_bytes(take(&mut pos, 8)?.try_into().ok()?);
        let nonce = u64::from_be_bytes(take(&mut pos, 8)?.try_into().ok()?);
        let memo_len = u16::from_be_bytes(take(&mut pos, 2)?.try_into().ok()?) as usize;
        let memo = take(&mut pos, memo_len)?.to_vec();
        let fee_child = match take(&mut pos, 1)?[0] {
            0 => None,
            1 => Some(take(&mut pos, 32)?.try_into().ok()?),
            _ => return None,
        };
        let signature: [u8; 64] = take(&mut pos, 64)?.try_into().ok()?;
        if pos != bytes.len() {
            return None;
        }
        Some(Self { sender, recipient, amount, nonce, memo, fee_child, signature })
    }

    /// Hash of the full encoding: the identity dependency apps reference.
    pub fn tx_hash(&self) -> [u8; 32] {
        Sha256::digest(self.encode()).into()
    }

    pub fn signature_valid(&self) -> bool {
        let Ok(vk) = VerifyingKey::from_bytes(&self.sender) else {
            return false;
        };
        vk.verify(&self.preimage(), &Signature::from_bytes(&self.signature)).is_ok()
    }
}

/// Builds and signs a transfer.
pub fn make_transfer(
    sender: &KeyPair,
    recipient: Address,
    amount: u64,
    nonce: u64,
    memo: Vec<u8>,
    fee_child: Option<[u8; 32]>,
) -> CurrencyTx {
    let mut tx = CurrencyTx {
        sender: sender.address(),
        recipient,
        amount,
        nonce,
        memo,
        fee_child,
        signature: [0; 64],
    };
    tx.signature = sender.sign(&tx.preimage());
    tx
}

/// Genesis state with the given funded accounts.
pub fn genesis(accounts: &[(Address, u64)]) -> AppState {
    let mut state = AppState::default();
    for (addr, amount) in accounts {
        state.set_u64(BALANCES, addr, *amount);
    }
    state
}

/// The currency transition. Total: every rejection returns the input state.
pub fn apply(state: &AppState, payload: &[u8], ctx: &BlockContext) -> AppState {
    let Some(tx) = CurrencyTx::decode(payload) else {
        return state.clone();
    };
    if !tx.signature_valid() {
        return state.clone();
    }
    if state.get_u64(NONCES, &tx.sender) != tx.nonce {
        return state.clone();
    }
    let recipient = match &tx.fee_child {
        None => tx.recipient,
        // a fee is only collectable with inclusion evidence for its child
        Some(child) => match collect_fee_recipient(ctx, child) {
            Some(producer) => producer,
            None => return state.clone(),
        },
    };
    let sender_balance = state.get_u64(BALANCES, &tx.sender);
    if sender_balance < tx.amount {
        return state.clone();
    }
    let mut next = state.clone();
    next.set_u64(BALANCES, &tx.sender, sender_balance - tx.amount);
    if recipient != tx.sender {
        next.set_u64(BALANCES, &recipient, state.get_u64(BALANCES, &recipient) + tx.amount);
    } else {
        next.set_u64(BALANCES, &tx.sender, sender_balance);
    }
    next.set_u64(NONCES, &tx.sender, tx.nonce + 1);
    let mut record = Vec::with_capacity(72);
    record.extend_from_slice(&tx.sender);
    record.extend_from_slice(&recipient);
    record.extend_from_slice(&tx.amount.to_be_bytes());
    next.insert(APPLIED, tx.tx_hash().to_vec(), record);
    next
}

/// Fee collection check: the proof must show a leaf whose hash is exactly
/// the named child under this block's message root. Returns the producer
/// address to credit, or `None` when the evidence does not hold up.
fn collect_fee_recipient(ctx: &BlockContext, child: &[u8; 32]) -> Option<Address> {
    let (leaf, path) = ctx.fee_proofs.get(child)?;
    if leaf.hash_bytes() != child {
        return None;
    }
    // the boundary between leaf and node digests matters: a leaf digest has
    // equal namespace labels
    if leaf.min_ns() != leaf.max_ns() {
        return None;
    }
    match path.apply(*leaf) {
        Ok(root) if root == ctx.m_root => Some(ctx.producer),
        _ => None,
    }
}

/// Reads an applied-transfer record: `(sender, recipient, amount)`.
pub fn applied_transfer(state: &AppState, tx_hash: &[u8; 32]) -> Option<(Address, Address, u64)> {
    let record = state.get(APPLIED, tx_hash)?;
    if record.len() != 72 {
        return None;
    }
    Some((
        record[..32].try_into().unwrap(),
        record[32..64].try_into().unwrap(),
        u64::from_be_bytes(record[64..].try_into().unwrap()),
    ))
}
