//! Message ↔ share serialization.
//!
//! Messages are grouped by namespace; each group is serialized as a stream of
//! `varint(payload length + 1) || payload` records, chunked into shares of
//! the configured payload size, with the group's final share zero-padded.
//! Every share is prefixed with its group's namespace, and every group starts
//! a fresh share, so shares never mix namespaces.
//!
//! The length prefix is shifted by one so that a zero byte unambiguously
//! marks the start of padding: a zero-length message encodes as `0x01`,
//! padding as `0x00...`. Without the shift an empty message at the end of a
//! group would be indistinguishable from padding.

use super::{CodingError, Share};
use crate::nmt::Message;

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(buf: &[u8], pos: &mut usize) -> Result<u64, CodingError> {
    let mut v = 0u64;
    let mut shift = 0u32;
    loop {
        let byte = *buf
            .get(*pos)
            .ok_or(CodingError::MalformedShares("truncated length prefix"))?;
        *pos += 1;
        if shift >= 63 && byte > 1 {
            return Err(CodingError::MalformedShares("length prefix overflows"));
        }
        v |= u64::from(byte & 0x7f) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
    }
}

/// Serializes a namespace-sorted message list into shares.
pub fn split_to_shares(messages: &[Message], payload_size: usize) -> Vec<Share> {
    assert!(payload_size >= 2, "share payload must hold at least a record header");
    let mut shares = Vec::new();
    let mut i = 0;
    while i < messages.len() {
        let ns = messages[i].namespace();
        let mut stream = Vec::new();
        while i < messages.len() && messages[i].namespace() == ns {
            write_varint(&mut stream, messages[i].payload().len() as u64 + 1);
            stream.extend_from_slice(messages[i].payload());
            i += 1;
        }
        for chunk in stream.chunks(payload_size) {
            shares.push(Share::original(ns, chunk, payload_size));
        }
    }
    shares
}

/// Exact inverse of [`split_to_shares`] over a complete original-data
/// sequence. Shares in reserved namespaces (padding) parse to nothing.
pub fn parse_shares(shares: &[Share]) -> Result<Vec<Message>, CodingError> {
    let mut messages = Vec::new();
    let mut i = 0;
    while i < shares.len() {
        let ns = shares[i].label();
        let mut stream = Vec::new();
        while i < shares.len() && shares[i].label() == ns {
            stream.extend_from_slice(shares[i].payload());
            i += 1;
        }
        let mut pos = 0;
        while pos < stream.len() {
            let v = read_varint(&stream, &mut pos)?;
            if v == 0 {
                if stream[pos..].iter().any(|&b| b != 0) {
                    return Err(CodingError::MalformedShares("nonzero bytes inside padding"));
                }
                break;
            }
            let len = (v - 1) as usize;
            if pos + len > stream.len() {
                return Err(CodingError::MalformedShares("record runs past the stream"));
            }
            messages.push(Message::reserved(ns, stream[pos..pos + len].to_vec()));
            pos += len;
        }
    }
    Ok(messages)
}
