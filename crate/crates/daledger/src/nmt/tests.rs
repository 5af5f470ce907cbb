use super::*;
use proptest::prelude::*;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

const MAX_LEAF: usize = 1024;

fn msg(ns: u64, payload: &[u8]) -> Message {
    Message::reserved(NamespaceId(ns), payload.to_vec())
}

fn tree(ns: &[u64]) -> NamespaceTree {
    let msgs = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| msg(n, format!("leaf_{i}").as_bytes()))
        .collect();
    NamespaceTree::build(msgs, MAX_LEAF).unwrap()
}

// ---------------------------------------------------------------------------
// Independent byte-layout oracle. Everything below re-derives the documented
// wire format from scratch (raw sha2 calls over manually assembled buffers)
// so the production serialization has a second, unrelated implementation to
// agree with.
// ---------------------------------------------------------------------------

mod oracle {
    use sha2::{Digest, Sha256};

    pub fn leaf(ns: u64, payload: &[u8]) -> [u8; 48] {
        let mut pre = vec![0x00u8];
        pre.extend_from_slice(&ns.to_be_bytes());
        pre.extend_from_slice(payload);
        let h: [u8; 32] = Sha256::digest(&pre).into();
        let mut out = [0u8; 48];
        out[..8].copy_from_slice(&ns.to_be_bytes());
        out[8..16].copy_from_slice(&ns.to_be_bytes());
        out[16..].copy_from_slice(&h);
        out
    }

    pub fn node(l: &[u8; 48], r: &[u8; 48]) -> [u8; 48] {
        let l_min = u64::from_be_bytes(l[..8].try_into().unwrap());
        let l_max = u64::from_be_bytes(l[8..16].try_into().unwrap());
        let r_min = u64::from_be_bytes(r[..8].try_into().unwrap());
        let r_max = u64::from_be_bytes(r[8..16].try_into().unwrap());
        assert!(l_max <= r_min, "oracle fed an inverted pair");
        let mut pre = vec![0x01u8];
        pre.extend_from_slice(l);
        pre.extend_from_slice(r);
        let h: [u8; 32] = Sha256::digest(&pre).into();
        let mut out = [0u8; 48];
        out[..8].copy_from_slice(&l_min.min(r_min).to_be_bytes());
        out[8..16].copy_from_slice(&l_max.max(r_max).to_be_bytes());
        out[16..].copy_from_slice(&h);
        out
    }

    pub fn root(leaves: &[(u64, Vec<u8>)]) -> [u8; 48] {
        fn largest_pow2_below(n: usize) -> usize {
            let mut p = 1;
            while p * 2 < n {
                p *= 2;
            }
            p
        }
        fn rec(leaves: &[(u64, Vec<u8>)]) -> [u8; 48] {
            if leaves.len() == 1 {
                return leaf(leaves[0].0, &leaves[0].1);
            }
            let m = largest_pow2_below(leaves.len());
            node(&rec(&leaves[..m]), &rec(&leaves[m..]))
        }
        rec(leaves)
    }
}

#[test]
fn leaf_hash_labels_both_ranges_with_the_namespace() {
    let d = ns_hash_leaf(&msg(5, b"a"), MAX_LEAF).unwrap();
    assert_eq!(d.min_ns(), NamespaceId(5));
    assert_eq!(d.max_ns(), NamespaceId(5));
}

#[test]
fn leaf_hash_rejects_oversized_payload() {
    let m = msg(5, &vec![0u8; MAX_LEAF + 1]);
    assert_eq!(
        ns_hash_leaf(&m, MAX_LEAF),
        Err(NmtError::OversizedLeaf { got: MAX_LEAF + 1, max: MAX_LEAF })
    );
    // boundary itself is fine
    assert!(ns_hash_leaf(&msg(5, &vec![0u8; MAX_LEAF]), MAX_LEAF).is_ok());
}

#[test]
fn leaf_hash_matches_independent_byte_layout() {
    // empty payload in the highest application-visible namespace
    let ns = u64::MAX - 2; // one below the PAD reservation
    let d = ns_hash_leaf(&msg(ns, b""), MAX_LEAF).unwrap();
    assert_eq!(d.to_bytes(), oracle::leaf(ns, b""));
    let d2 = ns_hash_leaf(&msg(7, b"payload"), MAX_LEAF).unwrap();
    assert_eq!(d2.to_bytes(), oracle::leaf(7, b"payload"));
}

#[test]
fn node_hash_merges_ranges_and_allows_shared_namespace() {
    let l = NamespacedDigest::from_bytes(&oracle::leaf(1, b"x")).unwrap();
    let l = {
        // widen the leaf into a {1,3} range via an extra node
        let r3 = NamespacedDigest::from_bytes(&oracle::leaf(3, b"y")).unwrap();
        ns_hash_node(&l, &r3).unwrap()
    };
    let r = {
        let a = NamespacedDigest::from_bytes(&oracle::leaf(3, b"z")).unwrap();
        let b = NamespacedDigest::from_bytes(&oracle::leaf(7, b"w")).unwrap();
        ns_hash_node(&a, &b).unwrap()
    };
    // left {1,3} against right {3,7}: equality at the seam is allowed
    let parent = ns_hash_node(&l, &r).unwrap();
    assert_eq!(parent.min_ns(), NamespaceId(1));
    assert_eq!(parent.max_ns(), NamespaceId(7));
}

#[test]
fn node_hash_rejects_strict_inversion() {
    let l = {
        let a = NamespacedDigest::from_bytes(&oracle::leaf(1, b"a")).unwrap();
        let b = NamespacedDigest::from_bytes(&oracle::leaf(5, b"b")).unwrap();
        ns_hash_node(&a, &b).unwrap()
    };
    let r = {
        let a = NamespacedDigest::from_bytes(&oracle::leaf(3, b"c")).unwrap();
        let b = NamespacedDigest::from_bytes(&oracle::leaf(7, b"d")).unwrap();
        ns_hash_node(&a, &b).unwrap()
    };
    assert_eq!(
        ns_hash_node(&l, &r),
        Err(NmtError::OrderingViolation { left_max: 5, right_min: 3 })
    );
}

#[test]
fn node_hash_serialization_matches_oracle() {
    let l = ns_hash_leaf(&msg(2, b"l"), MAX_LEAF).unwrap();
    let r = ns_hash_leaf(&msg(9, b"r"), MAX_LEAF).unwrap();
    let n = ns_hash_node(&l, &r).unwrap();
    assert_eq!(n.min_ns(), NamespaceId(2));
    assert_eq!(n.max_ns(), NamespaceId(9));
    assert_eq!(n.to_bytes(), oracle::node(&oracle::leaf(2, b"l"), &oracle::leaf(9, b"r")));
}

#[test]
fn single_leaf_tree_root_is_the_leaf() {
    let t = tree(&[3]);
    assert_eq!(t.root().min_ns(), NamespaceId(3));
    assert_eq!(t.root().max_ns(), NamespaceId(3));
    assert_eq!(t.root(), t.leaf_digest(0));
}

#[test]
fn build_rejects_unsorted_input() {
    let msgs = vec![msg(2, b"leaf_0"), msg(1, b"leaf_1")];
    assert_eq!(
        NamespaceTree::build(msgs, MAX_LEAF).err(),
        Some(NmtError::UnsortedInput { index: 0 })
    );
}

#[test]
fn build_rejects_empty_input() {
    assert_eq!(NamespaceTree::build(vec![], MAX_LEAF).err(), Some(NmtError::EmptyTree));
}

#[test]
fn four_leaf_root_matches_brute_force_oracle() {
    let t = tree(&[1, 1, 4, 9]);
    assert_eq!(t.root().min_ns(), NamespaceId(1));
    assert_eq!(t.root().max_ns(), NamespaceId(9));
    let leaves: Vec<(u64, Vec<u8>)> = [1u64, 1, 4, 9]
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, format!("leaf_{i}").into_bytes()))
        .collect();
    assert_eq!(t.root().to_bytes(), oracle::root(&leaves));
}

#[test]
fn roots_match_oracle_for_every_small_size() {
    // ragged shapes included: 1..=17 leaves
    for n in 1usize..=17 {
        let ns: Vec<u64> = (0..n as u64).map(|i| i / 3 + 1).collect();
        let t = tree(&ns);
        let leaves: Vec<(u64, Vec<u8>)> = ns
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, format!("leaf_{i}").into_bytes()))
            .collect();
        assert_eq!(t.root().to_bytes(), oracle::root(&leaves), "n={n}");
    }
}

#[test]
fn prove_namespace_returns_consecutive_paths() {
    let t = tree(&[1, 4, 4, 9]);
    let proof = t.prove_namespace(NamespaceId(4));
    match &proof {
        NamespaceProof::Presence { start_index, paths } => {
            assert_eq!(*start_index, 1);
            assert_eq!(paths.len(), 2);
        }
        _ => panic!("expected presence proof"),
    }
    let msgs = t.namespace_messages(NamespaceId(4));
    assert!(verify_namespace(&t.root(), NamespaceId(4), &msgs, &proof, MAX_LEAF));
}

#[test]
fn absence_proof_uses_the_boundary_leaf() {
    let t = tree(&[1, 9]);
    let proof = t.prove_namespace(NamespaceId(4));
    match &proof {
        NamespaceProof::Absence { index, boundary, .. } => {
            assert_eq!(*index, 1); // the ns=9 leaf
            assert_eq!(boundary.min_ns(), NamespaceId(9));
        }
        _ => panic!("expected absence proof"),
    }
    assert!(verify_namespace(&t.root(), NamespaceId(4), &[], &proof, MAX_LEAF));
    // all namespaces smaller than the query: boundary is the rightmost leaf
    let proof_hi = t.prove_namespace(NamespaceId(20));
    assert!(verify_namespace(&t.root(), NamespaceId(20), &[], &proof_hi, MAX_LEAF));
    // all namespaces larger: boundary is the leftmost leaf
    let proof_lo = t.prove_namespace(NamespaceId(0));
    assert!(verify_namespace(&t.root(), NamespaceId(0), &[], &proof_lo, MAX_LEAF));
}

#[test]
fn random_trees_agree_with_linear_scan() {
    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for _ in 0..50 {
        let mut ns: Vec<u64> = (0..64).map(|_| rng.random_range(1..20)).collect();
        ns.sort_unstable();
        let t = tree(&ns);
        let nid = NamespaceId(rng.random_range(0..22));
        let proof = t.prove_namespace(nid);
        let got = t.namespace_messages(nid);
        let expected: Vec<&Message> =
            t.messages().iter().filter(|m| m.namespace() == nid).collect();
        assert_eq!(got.iter().collect::<Vec<_>>(), expected);
        assert!(verify_namespace(&t.root(), nid, &got, &proof, MAX_LEAF));
    }
}

#[test]
fn omitting_a_message_is_detected() {
    let t = tree(&[1, 4, 4, 4, 9]);
    let nid = NamespaceId(4);
    let msgs = t.namespace_messages(nid);
    let NamespaceProof::Presence { start_index, paths } = t.prove_namespace(nid) else {
        panic!()
    };
    // drop each message (and its path) in turn
    for omit in 0..msgs.len() {
        let mut m = msgs.clone();
        let mut p = paths.clone();
        m.remove(omit);
        p.remove(omit);
        let start = if omit == 0 { start_index + 1 } else { start_index };
        let doctored = NamespaceProof::Presence { start_index: start, paths: p };
        assert!(
            !verify_namespace(&t.root(), nid, &m, &doctored, MAX_LEAF),
            "omission of message {omit} went undetected"
        );
    }
    // presenting an absence proof for a present namespace must also fail
    let NamespaceProof::Absence { index, path, boundary } =
        tree(&[1, 9]).prove_namespace(NamespaceId(4))
    else {
        panic!()
    };
    let foreign = NamespaceProof::Absence { index, path, boundary };
    assert!(!verify_namespace(&t.root(), nid, &[], &foreign, MAX_LEAF));
}

#[test]
fn wrong_namespace_messages_fail_verification() {
    let t = tree(&[1, 4, 9]);
    let proof = t.prove_namespace(NamespaceId(4));
    let wrong = vec![msg(9, b"leaf_2")];
    assert!(!verify_namespace(&t.root(), NamespaceId(4), &wrong, &proof, MAX_LEAF));
}

#[test]
fn proof_wire_encoding_round_trips() {
    let t = tree(&[1, 4, 4, 9, 12, 12, 12, 20, 33]);
    for nid in [1u64, 4, 5, 12, 33, 40] {
        let proof = t.prove_namespace(NamespaceId(nid));
        let bytes = proof.encode();
        assert_eq!(bytes.len(), proof.wire_len());
        let back = NamespaceProof::decode(&bytes).unwrap();
        assert_eq!(back, proof);
        let msgs = t.namespace_messages(NamespaceId(nid));
        assert!(verify_namespace(&t.root(), NamespaceId(nid), &msgs, &back, MAX_LEAF));
    }
    assert!(NamespaceProof::decode(&[]).is_err());
    assert!(NamespaceProof::decode(&[1, 0, 0]).is_err());
}

// Every binary tree shape over a leaf list with an inversion must fail to
// hash somewhere: sortedness is bound into the root itself.
#[test]
fn no_tree_shape_roots_an_unsorted_leaf_list() {
    fn all_shapes(leaves: &[NamespacedDigest]) -> Vec<Result<NamespacedDigest, NmtError>> {
        if leaves.len() == 1 {
            return vec![Ok(leaves[0])];
        }
        let mut out = Vec::new();
        for split in 1..leaves.len() {
            for l in all_shapes(&leaves[..split]) {
                for r in all_shapes(&leaves[split..]) {
                    match (&l, &r) {
                        (Ok(a), Ok(b)) => out.push(ns_hash_node(a, b)),
                        _ => out.push(Err(NmtError::EmptyTree)), // child already failed
                    }
                }
            }
        }
        out
    }
    let lists: &[&[u64]] = &[&[2, 1], &[1, 3, 2], &[1, 2, 4, 3], &[5, 1, 2, 3], &[1, 2, 3, 2, 4]];
    for ns in lists {
        let leaves: Vec<NamespacedDigest> = ns
            .iter()
            .map(|&n| ns_hash_leaf(&msg(n, b"x"), MAX_LEAF).unwrap())
            .collect();
        for result in all_shapes(&leaves) {
            assert!(result.is_err(), "unsorted list {ns:?} produced a root");
        }
    }
}

#[test]
fn audit_path_length_is_log_bounded() {
    for n in 1usize..=33 {
        let ns: Vec<u64> = (1..=n as u64).collect();
        let t = tree(&ns);
        let bound = (n as f64).log2().ceil() as usize;
        let max_len = (0..n).map(|i| t.audit_path(i).len()).max().unwrap();
        assert!(max_len <= bound, "n={n}: path of {max_len} exceeds {bound}");
        assert_eq!(max_len, bound, "n={n}: deepest path should reach the bound");
    }
}

proptest! {
    #[test]
    fn root_is_deterministic_and_ranges_are_true(ns in proptest::collection::vec(1u64..12, 1..40)) {
        let mut ns = ns;
        ns.sort_unstable();
        let t1 = tree(&ns);
        let t2 = tree(&ns);
        prop_assert_eq!(t1.root(), t2.root());
        prop_assert_eq!(t1.root().min_ns().0, *ns.first().unwrap());
        prop_assert_eq!(t1.root().max_ns().0, *ns.last().unwrap());
        // every subtree's labels equal the true min/max over its leaf range
        for (&(lo, hi), digest) in &t1.subtrees {
            prop_assert_eq!(digest.min_ns().0, ns[lo..hi].iter().copied().min().unwrap());
            prop_assert_eq!(digest.max_ns().0, ns[lo..hi].iter().copied().max().unwrap());
        }
    }

    #[test]
    fn honest_proofs_verify_for_any_query(ns in proptest::collection::vec(1u64..10, 1..24), nid in 0u64..12) {
        let mut ns = ns;
        ns.sort_unstable();
        let t = tree(&ns);
        let proof = t.prove_namespace(NamespaceId(nid));
        let msgs = t.namespace_messages(NamespaceId(nid));
        prop_assert!(verify_namespace(&t.root(), NamespaceId(nid), &msgs, &proof, MAX_LEAF));
        prop_assert_eq!(msgs.is_empty(), proof.is_absence());
    }
}
