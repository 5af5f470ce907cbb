//! Name registrar: the example application with a dependency.
//!
//! Clients top up an in-app balance by making a currency transfer to the
//! registrar's address and then referencing that transfer's hash here; the
//! registrar's clients verify the reference against the currency state they
//! already replay (the pre-condition pattern). Registration binds a name to
//! a key and debits the fixed price. First writer wins, by block order then
//! leaf order.
//!
//! State: `inapp` (address → topped-up balance), `names` (name → owner),
//! `consumed` (currency tx hash → marker, so one transfer tops up once).

use super::{Address, AppState, BlockContext};
use crate::nmt::NamespaceId;
use ed25519_dalek::{Signature, Verifier, VerifyingKey};

pub const INAPP: &str = "inapp";
pub const NAMES: &str = "names";
pub const CONSUMED: &str = "consumed";

const TAG: u8 = 0x02;

/// A registrar transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistrarTx {
    /// Credit the in-app balance of whoever made the referenced currency
    /// transfer to the registrar's address.
    TopUp { currency_tx_hash: [u8; 32] },
    /// Bind `name` to `owner`, debiting the fixed price from its in-app
    /// balance. Signed by the owner over the canonical encoding.
    Register {
        name: Vec<u8>,
        owner: Address,
        signature: [u8; 64],
    },
}

impl RegistrarTx {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            RegistrarTx::TopUp { currency_tx_hash } => {
                let mut out = vec![TAG, 0];
                out.extend_from_slice(currency_tx_hash);
                out
            }
            RegistrarTx::Register { name, owner, signature } => {
                let mut out = Self::register_preimage(name, owner);
                out.extend_from_slice(signature);
                out
            }
        }
    }

    pub fn register_preimage(name: &[u8], owner: &Address) -> Vec<u8> {
        let mut out = vec![TAG, 1];
        out.extend_from_slice(&(name.len() as u16).to_be_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(owner);
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < 2 || bytes[0] != TAG {
            return None;
        }
        match bytes[1] {
            0 => {
                let hash: [u8; 32] = bytes.get(2..34)?.try_into().ok()?;
                (bytes.len() == 34).then_some(RegistrarTx::TopUp { currency_tx_hash: hash })
            }
            1 => {
                let name_len = u16::from_be_bytes(bytes.get(2..4)?.try_into().ok()?) as usize;
                let name = bytes.get(4..4 + name_len)?.to_vec();
                let owner: Address = bytes.get(4 + name_len..36 + name_len)?.try_into().ok()?;
                let signature: [u8; 64] =
                    bytes.get(36 + name_len..100 + name_len)?.try_into().ok()?;
                (bytes.len() == 100 + name_len).then_some(RegistrarTx::Register {
                    name,
                    owner,
                    signature,
                })
            }
            _ => None,
        }
    }
}

/// Signs a registration with the owner's key.
pub fn make_register(name: &[u8], owner: &super::KeyPair) -> RegistrarTx {
    let preimage = RegistrarTx::register_preimage(name, &owner.address());
    RegistrarTx::Register {
        name: name.to_vec(),
        owner: owner.address(),
        signature: owner.sign(&preimage),
    }
}

/// The registrar transition. `ctx.dep_states` must hold the currency state
/// at this block height; without it every top-up is a no-op.
pub fn apply(
    state: &AppState,
    payload: &[u8],
    ctx: &BlockContext,
    currency_ns: NamespaceId,
    registrar: &Address,
    price: u64,
) -> AppState {
    let Some(tx) = RegistrarTx::decode(payload) else {
        return state.clone();
    };
    match tx {
        RegistrarTx::TopUp { currency_tx_hash } => {
            let Some(currency) = ctx.dep_states.get(&currency_ns) else {
                return state.clone();
            };
            if state.get(CONSUMED, &currency_tx_hash).is_some() {
                return state.clone();
            }
            let Some((sender, recipient, amount)) =
                super::currency::applied_transfer(currency, &currency_tx_hash)
            else {
                return state.clone();
            };
            if recipient != *registrar {
                return state.clone();
            }
            let mut next = state.clone();
            next.set_u64(INAPP, &sender, state.get_u64(INAPP, &sender) + amount);
            next.insert(CONSUMED, currency_tx_hash.to_vec(), vec![1]);
            next
        }
        RegistrarTx::Register { name, owner, signature } => {
            let Ok(vk) = VerifyingKey::from_bytes(&owner) else {
                return state.clone();
            };
            let preimage = RegistrarTx::register_preimage(&name, &owner);
            if vk.verify(&preimage, &Signature::from_bytes(&signature)).is_err() {
                return state.clone();
            }
            if state.get(NAMES, &name).is_some() {
                return state.clone(); // first writer won
            }
            let balance = state.get_u64(INAPP, &owner);
            if balance < price {
                return state.clone();
            }
            let mut next = state.clone();
            next.set_u64(INAPP, &owner, balance - price);
            next.insert(NAMES, name, owner.to_vec());
            next
        }
    }
}
