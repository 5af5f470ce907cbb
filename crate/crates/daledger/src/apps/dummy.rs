//! Dummy app: inserts arbitrary key-value pairs. Exists to generate traffic
//! that other applications must be able to ignore.

use super::AppState;

pub const KV: &str = "kv";

const TAG: u8 = 0x03;

/// `tag || key_len(u16) || key || value` — the value runs to the end.
pub fn encode(key: &[u8], value: &[u8]) -> Vec<u8> {
    let mut out = vec![TAG];
    out.extend_from_slice(&(key.len() as u16).to_be_bytes());
    out.extend_from_slice(key);
    out.extend_from_slice(value);
    out
}

pub fn apply(state: &AppState, payload: &[u8]) -> AppState {
    let Some(&tag) = payload.first() else {
        return state.clone();
    };
    if tag != TAG || payload.len() < 3 {
        return state.clone();
    }
    let key_len = u16::from_be_bytes(payload[1..3].try_into().unwrap()) as usize;
    let Some(key) = payload.get(3..3 + key_len) else {
        return state.clone();
    };
    let value = payload[3 + key_len..].to_vec();
    let mut next = state.clone();
    next.insert(KV, key.to_vec(), value);
    next
}
