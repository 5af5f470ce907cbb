use super::*;
use crate::nmt::{Message, NamespaceId};
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

const PAYLOAD: usize = 225;

fn msg(ns: u64, payload: Vec<u8>) -> Message {
    Message::new(NamespaceId(ns), payload).unwrap()
}

// ---------------------------------------------------------------------------
// Independent Reed-Solomon reference. Own field arithmetic (shift-and-add
// multiply), own interpolation (Gaussian elimination on the Vandermonde
// system), own evaluation (Horner). Shares no code with the implementation.
// ---------------------------------------------------------------------------
mod rs_oracle {
    fn gmul(mut a: u8, mut b: u8) -> u8 {
        let mut acc = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            let hi = a & 0x80 != 0;
            a <<= 1;
            if hi {
                a ^= 0x1D;
            }
            b >>= 1;
        }
        acc
    }

    fn ginv(a: u8) -> u8 {
        assert!(a != 0);
        // brute force: the field is tiny
        (1..=255u8).find(|&x| gmul(a, x) == 1).unwrap()
    }

    /// Coefficients of the degree-<k polynomial with p(j) = values[j].
    fn interpolate(values: &[u8]) -> Vec<u8> {
        let k = values.len();
        // Vandermonde system rows: [1, x, x², ...] for x = 0..k
        let mut m: Vec<Vec<u8>> = (0..k)
            .map(|x| {
                let mut row: Vec<u8> = Vec::with_capacity(k + 1);
                let mut pow = 1u8;
                for _ in 0..k {
                    row.push(pow);
                    pow = gmul(pow, x as u8);
                }
                row.push(values[x]);
                row
            })
            .collect();
        // Gaussian elimination
        for col in 0..k {
            let pivot = (col..k).find(|&r| m[r][col] != 0).expect("singular");
            m.swap(col, pivot);
            let inv = ginv(m[col][col]);
            for v in m[col].iter_mut() {
                *v = gmul(*v, inv);
            }
            for r in 0..k {
                if r != col && m[r][col] != 0 {
                    let f = m[r][col];
                    let src = m[col].clone();
                    for (dst, s) in m[r].iter_mut().zip(src) {
                        *dst ^= gmul(f, s);
                    }
                }
            }
        }
        m.into_iter().map(|row| row[k]).collect()
    }

    fn eval(coeffs: &[u8], x: u8) -> u8 {
        let mut acc = 0u8;
        for &c in coeffs.iter().rev() {
            acc = gmul(acc, x) ^ c;
        }
        acc
    }

    /// Parity shares for one line, byte position by byte position.
    pub fn extend(data: &[Vec<u8>]) -> Vec<Vec<u8>> {
        let k = data.len();
        let len = data[0].len();
        let mut parity = vec![vec![0u8; len]; k];
        for b in 0..len {
            let column: Vec<u8> = data.iter().map(|s| s[b]).collect();
            let coeffs = interpolate(&column);
            for (p, out) in parity.iter_mut().enumerate() {
                out[b] = eval(&coeffs, (k + p) as u8);
            }
        }
        parity
    }
}

#[test]
fn line_extension_matches_the_independent_reference() {
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    for k in [1usize, 2, 4, 8] {
        let data: Vec<Vec<u8>> = (0..k)
            .map(|_| (0..17).map(|_| rng.random()).collect())
            .collect();
        let ours = LineCodec::new(k).unwrap().extend(&data).unwrap();
        let reference = rs_oracle::extend(&data);
        assert_eq!(ours, reference, "k={k}");
    }
    // a fixed k=2 pattern, checked against the reference explicitly
    let data = vec![vec![0x01, 0xAB, 0x00], vec![0xFF, 0x02, 0x80]];
    let ours = LineCodec::new(2).unwrap().extend(&data).unwrap();
    assert_eq!(ours, rs_oracle::extend(&data));
}

#[test]
fn any_k_cells_of_a_line_determine_it() {
    // exhaustive over every k-subset of the 2k positions, k ∈ {1, 2, 4}
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for k in [1usize, 2, 4] {
        let codec = LineCodec::new(k).unwrap();
        let data: Vec<Vec<u8>> = (0..k)
            .map(|_| (0..9).map(|_| rng.random()).collect())
            .collect();
        let full = codec.reencode(&data).unwrap();
        let n = 2 * k;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let cells: Vec<Option<Vec<u8>>> = (0..n)
                .map(|i| (mask >> i & 1 == 1).then(|| full[i].clone()))
                .collect();
            let decoded = codec.decode(&cells).unwrap();
            assert_eq!(decoded, full, "k={k} mask={mask:b}");
        }
    }
}

#[test]
fn short_message_fills_one_padded_share() {
    let shares = split_to_shares(&[msg(3, vec![7u8; 10])], PAYLOAD);
    assert_eq!(shares.len(), 1);
    assert_eq!(shares[0].label(), NamespaceId(3));
    assert_eq!(shares[0].bytes().len(), PAYLOAD + 8);
    assert_eq!(parse_shares(&shares).unwrap(), vec![msg(3, vec![7u8; 10])]);
}

#[test]
fn message_longer_than_a_share_spans_two() {
    let m = msg(3, vec![9u8; 226]);
    let shares = split_to_shares(std::slice::from_ref(&m), PAYLOAD);
    assert_eq!(shares.len(), 2);
    assert!(shares.iter().all(|s| s.label() == NamespaceId(3)));
    assert_eq!(parse_shares(&shares).unwrap(), vec![m]);
}

#[test]
fn empty_payload_message_round_trips() {
    let msgs = vec![msg(1, vec![]), msg(1, vec![0xAA]), msg(2, vec![])];
    let shares = split_to_shares(&msgs, PAYLOAD);
    assert_eq!(parse_shares(&shares).unwrap(), msgs);
}

#[test]
fn truncated_record_is_rejected() {
    let m = msg(3, vec![1u8; 300]);
    let shares = split_to_shares(std::slice::from_ref(&m), PAYLOAD);
    // drop the final share: the varint promises more bytes than remain
    assert_eq!(
        parse_shares(&shares[..1]).err(),
        Some(CodingError::MalformedShares("record runs past the stream"))
    );
}

#[test]
fn garbage_in_padding_is_rejected() {
    let mut shares = split_to_shares(&[msg(3, vec![5u8; 10])], PAYLOAD);
    let last = shares[0].bytes().len() - 1;
    shares[0].bytes[last] = 0xFF;
    assert!(matches!(
        parse_shares(&shares),
        Err(CodingError::MalformedShares(_))
    ));
}

#[test]
fn smallest_square_has_consistent_parity_relations() {
    let shares = split_to_shares(&[msg(5, b"tiny".to_vec())], 32);
    let square = ExtendedDataSquare::extend(shares, 32).unwrap();
    assert_eq!(square.k(), 1);
    assert_eq!(square.cells().len(), 4);
    let codec = LineCodec::new(1).unwrap();
    for r in 0..2 {
        let row: Vec<Vec<u8>> = square.line(Axis::Row, r).iter().map(|s| s.bytes().to_vec()).collect();
        assert_eq!(codec.reencode(&row[..1]).unwrap(), row);
    }
    for c in 0..2 {
        let col: Vec<Vec<u8>> = square.line(Axis::Col, c).iter().map(|s| s.bytes().to_vec()).collect();
        assert_eq!(codec.reencode(&col[..1]).unwrap(), col);
    }
}

#[test]
fn square_geometry_and_labels_hold() {
    let msgs: Vec<Message> = (0..6).map(|i| msg(i + 1, vec![i as u8; 40])).collect();
    let original = split_to_shares(&msgs, 32);
    let orig_len = original.len();
    let square = ExtendedDataSquare::extend(original, 32).unwrap();
    let k = square.k();
    assert!(k * k >= orig_len);
    // rate: exactly 4 cells per original-quadrant cell
    assert_eq!(square.cells().len(), 4 * k * k);
    assert_eq!(square.row_roots().len() + square.col_roots().len(), 2 * (2 * k));
    // original quadrant is namespace-sorted row-major, parity is parity
    let labels: Vec<NamespaceId> = square.original_shares().iter().map(|s| s.label()).collect();
    assert!(labels.windows(2).all(|w| w[0] <= w[1]));
    for r in 0..2 * k {
        for c in 0..2 * k {
            if r >= k || c >= k {
                assert_eq!(square.cell(r, c).label(), NamespaceId::PARITY);
            }
        }
    }
    // round trip back to messages
    let parsed = parse_shares(&square.original_shares()).unwrap();
    assert_eq!(parsed, msgs);
}

#[test]
fn extension_order_does_not_matter() {
    // columns-first must yield the same parity-of-parity quadrant
    let mut rng = ChaCha12Rng::seed_from_u64(23);
    for count in [1usize, 3, 4, 9] {
        let msgs: Vec<Message> = (0..count)
            .map(|i| msg(i as u64 + 1, (0..50).map(|_| rng.random()).collect()))
            .collect();
        let original = split_to_shares(&msgs, 24);
        let square = ExtendedDataSquare::extend(original.clone(), 24).unwrap();
        let k = square.k();
        let codec = LineCodec::new(k).unwrap();

        // independent columns-first construction over the same originals
        let mut padded = original;
        padded.resize(k * k, Share::pad(24));
        let mut grid: Vec<Vec<Vec<u8>>> = vec![vec![Vec::new(); 2 * k]; 2 * k];
        for r in 0..k {
            for c in 0..k {
                grid[r][c] = padded[r * k + c].bytes().to_vec();
            }
        }
        for c in 0..k {
            let col: Vec<Vec<u8>> = (0..k).map(|r| grid[r][c].clone()).collect();
            for (i, bytes) in codec.extend(&col).unwrap().into_iter().enumerate() {
                grid[k + i][c] = bytes;
            }
        }
        for r in 0..2 * k {
            let row: Vec<Vec<u8>> = (0..k).map(|c| grid[r][c].clone()).collect();
            for (i, bytes) in codec.extend(&row).unwrap().into_iter().enumerate() {
                grid[r][k + i] = bytes;
            }
        }
        for r in 0..2 * k {
            for c in 0..2 * k {
                assert_eq!(
                    &grid[r][c],
                    square.cell(r, c).bytes(),
                    "count={count} cell=({r},{c})"
                );
            }
        }
    }
}

fn sample_square(seed: u64, count: usize, payload: usize, msg_len: usize) -> ExtendedDataSquare {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let msgs: Vec<Message> = (0..count)
        .map(|i| msg(i as u64 / 2 + 1, (0..msg_len).map(|_| rng.random()).collect()))
        .collect();
    ExtendedDataSquare::extend(split_to_shares(&msgs, payload), payload).unwrap()
}

#[test]
fn losing_any_single_cell_is_recoverable() {
    let square = sample_square(1, 2, 16, 10);
    let side = square.side();
    for r in 0..side {
        for c in 0..side {
            let grid = square.withhold(&[(r, c)]);
            let back = reconstruct(&grid, square.row_roots(), square.col_roots(), 16).unwrap();
            assert_eq!(back.cells(), square.cells());
        }
    }
}

#[test]
fn withholding_a_full_subgrid_defeats_recovery() {
    let square = sample_square(2, 5, 16, 30); // k = 4
    let k = square.k();
    assert_eq!(k, 4);
    // (k+1)² cells arranged on a (k+1)×(k+1) grid of rows × columns
    let rows: Vec<usize> = (0..=k).collect();
    let cols: Vec<usize> = (0..=k).collect();
    let withheld: Vec<(usize, usize)> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    assert_eq!(withheld.len(), (k + 1) * (k + 1));
    let grid = square.withhold(&withheld);
    match reconstruct(&grid, square.row_roots(), square.col_roots(), 16) {
        Err(ReconstructError::Unrecoverable { .. }) => {}
        other => panic!("expected Unrecoverable, got {other:?}"),
    }
}

/// Row/column closure: can iterated line-solving fill the whole square?
/// Independent of the decoder — pure boolean propagation.
pub(crate) fn closure_recoverable(k: usize, present: &[bool]) -> bool {
    let side = 2 * k;
    let mut known: Vec<bool> = present.to_vec();
    loop {
        let mut progress = false;
        for r in 0..side {
            let cnt = (0..side).filter(|&c| known[r * side + c]).count();
            if cnt >= k && cnt < side {
                for c in 0..side {
                    known[r * side + c] = true;
                }
                progress = true;
            }
        }
        for c in 0..side {
            let cnt = (0..side).filter(|&r| known[r * side + c]).count();
            if cnt >= k && cnt < side {
                for r in 0..side {
                    known[r * side + c] = true;
                }
                progress = true;
            }
        }
        if !progress {
            break;
        }
    }
    known.iter().all(|&b| b)
}

#[test]
fn reconstruction_agrees_with_the_closure_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    for k in [1usize, 2] {
        let square = sample_square(k as u64 + 10, k * k, 16, 10);
        assert_eq!(square.k(), k);
        let side = 2 * k;
        for _ in 0..200 {
            let present: Vec<bool> = (0..side * side).map(|_| rng.random_bool(0.6)).collect();
            let withheld: Vec<(usize, usize)> = (0..side * side)
                .filter(|&i| !present[i])
                .map(|i| (i / side, i % side))
                .collect();
            let grid = square.withhold(&withheld);
            let expected = closure_recoverable(k, &present);
            let got = reconstruct(&grid, square.row_roots(), square.col_roots(), 16);
            assert_eq!(got.is_ok(), expected, "k={k} pattern disagreed with oracle");
            if let Ok(sq) = got {
                assert_eq!(sq.cells(), square.cells());
            }
        }
    }
}

#[test]
fn tampered_parity_cell_yields_a_working_fraud_proof() {
    let square = sample_square(4, 4, 16, 10);
    let k = square.k();
    // flip one parity byte in row 0, then recommit all roots
    let bad = square.tamper(0, k, |bytes| bytes[3] ^= 0x40);
    let proof = gen_coding_fraud_proof(&bad, Axis::Row, 0).unwrap();
    assert!(verify_coding_fraud_proof(
        bad.row_roots(),
        bad.col_roots(),
        &proof,
        bad.share_size()
    ));
    // round-trips through the wire encoding
    let decoded = CodingFraudProof::decode(&proof.encode()).unwrap();
    assert_eq!(decoded, proof);
    assert!(verify_coding_fraud_proof(
        bad.row_roots(),
        bad.col_roots(),
        &decoded,
        bad.share_size()
    ));
    // reconstruct flags the same line when handed the full tampered square
    match reconstruct(&bad.to_grid(), bad.row_roots(), bad.col_roots(), 16) {
        Err(ReconstructError::RootMismatch { axis: Axis::Row, index: 0 }) => {}
        other => panic!("expected row-0 mismatch, got {other:?}"),
    }
}

#[test]
fn honest_squares_never_prove_fraudulent() {
    let square = sample_square(5, 7, 16, 10);
    for axis in [Axis::Row, Axis::Col] {
        for index in 0..square.side() {
            assert!(matches!(
                gen_coding_fraud_proof(&square, axis, index),
                Err(CodingError::NotFraudulent { .. })
            ));
        }
    }
}

#[test]
fn corrupting_a_membership_path_invalidates_the_proof() {
    let square = sample_square(6, 4, 16, 10);
    let bad = square.tamper(1, 0, |bytes| bytes[10] ^= 1);
    let mut proof = gen_coding_fraud_proof(&bad, Axis::Row, 1).unwrap();
    let step = &mut proof.paths[0].steps[0];
    let mut raw = step.sibling.to_bytes();
    raw[20] ^= 0xFF;
    step.sibling = crate::nmt::NamespacedDigest::from_bytes(&raw).unwrap();
    assert!(!verify_coding_fraud_proof(
        bad.row_roots(),
        bad.col_roots(),
        &proof,
        bad.share_size()
    ));
}

#[test]
fn bit_flips_never_frame_an_honest_square() {
    // 10^4 randomized corruptions of well-formed proof structures over an
    // honest square: none may verify as fraud
    let square = sample_square(7, 4, 16, 10);
    let k = square.k();
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    let honest_lines: Vec<CodingFraudProof> = (0..square.side())
        .flat_map(|i| {
            [Axis::Row, Axis::Col].into_iter().map(move |axis| (axis, i))
        })
        .map(|(axis, index)| CodingFraudProof {
            axis,
            index: index as u32,
            k: k as u32,
            shares: square.line(axis, index).iter().map(|s| s.bytes().to_vec()).collect(),
            paths: (0..k)
                .map(|pos| square.line_tree(axis.other(), pos).audit_path(index))
                .collect(),
        })
        .collect();
    for trial in 0..10_000 {
        let mut proof = honest_lines[trial % honest_lines.len()].clone();
        let mut bytes = proof.encode();
        // flip between one and four random bits past the geometry header
        for _ in 0..rng.random_range(1..=4) {
            let i = rng.random_range(14..bytes.len());
            bytes[i] ^= 1 << rng.random_range(0..8);
        }
        if let Ok(mutated) = CodingFraudProof::decode(&bytes) {
            proof = mutated;
        } else {
            continue;
        }
        assert!(
            !verify_coding_fraud_proof(
                square.row_roots(),
                square.col_roots(),
                &proof,
                square.share_size()
            ),
            "trial {trial} framed an honest square"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn share_round_trip(groups in proptest::collection::vec((1u64..9, proptest::collection::vec(any::<u8>(), 0..600)), 1..12)) {
        let mut msgs: Vec<Message> = groups.into_iter().map(|(ns, payload)| msg(ns, payload)).collect();
        msgs.sort_by_key(|m| m.namespace());
        let shares = split_to_shares(&msgs, PAYLOAD);
        prop_assert_eq!(parse_shares(&shares).unwrap(), msgs);
    }

    #[test]
    fn recoverable_patterns_restore_the_square_bit_exactly(seed in 0u64..500) {
        let square = sample_square(seed, 4, 16, 10); // k = 2
        let k = square.k();
        let side = 2 * k;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xDEAD);
        // fewer than (k+1)² erased cells: always recoverable, always exact
        let erase_count = rng.random_range(0..(k + 1) * (k + 1));
        let mut positions: Vec<usize> = (0..side * side).collect();
        positions.shuffle(&mut rng);
        let withheld: Vec<(usize, usize)> = positions[..erase_count]
            .iter()
            .map(|&i| (i / side, i % side))
            .collect();
        let grid = square.withhold(&withheld);
        let back = reconstruct(&grid, square.row_roots(), square.col_roots(), 16).unwrap();
        prop_assert_eq!(back.cells(), square.cells());
    }
}
