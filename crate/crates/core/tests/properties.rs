use flipctl_core::{
    apply_flip, parse_network, ActionSpace, BoolExpr, FlipMask, FlipSet, InputVec, NetworkDef,
    StateVec,
};
use proptest::prelude::*;

fn expr(n: usize, m: usize) -> impl Strategy<Value = BoolExpr> {
    let leaf = prop_oneof![
        (1..=n).prop_map(BoolExpr::Var),
        (1..=m).prop_map(BoolExpr::Input),
        any::<bool>().prop_map(BoolExpr::Const),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(BoolExpr::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| BoolExpr::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| BoolExpr::or(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| BoolExpr::xor(a, b)),
        ]
    })
}

fn network() -> impl Strategy<Value = NetworkDef> {
    (1usize..=4, 1usize..=2).prop_flat_map(|(n, m)| {
        proptest::collection::vec(expr(n, m), n)
            .prop_map(move |updates| NetworkDef::new(n, m, updates).unwrap())
    })
}

proptest! {
    #[test]
    fn flip_is_an_involution(n in 1usize..=10, x in any::<u64>(), f in any::<u64>()) {
        let x = StateVec::from_index(n, x & ((1 << n) - 1)).unwrap();
        let f = FlipMask::from_raw(n, f & ((1 << n) - 1));
        prop_assert_eq!(apply_flip(&apply_flip(&x, &f).unwrap(), &f).unwrap(), x);
    }

    #[test]
    fn printed_networks_parse_back(net in network()) {
        let text = net.to_string();
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn flipped_step_decomposes(net in network(), x in any::<u64>(), u in any::<u64>(), f in any::<u64>()) {
        let n = net.nodes();
        let x = StateVec::from_index(n, x & ((1 << n) - 1)).unwrap();
        let u = InputVec::from_index(net.inputs(), u & ((1 << net.inputs()) - 1)).unwrap();
        let f = FlipMask::from_raw(n, f & ((1 << n) - 1));
        let composed = net.eval_update(&apply_flip(&x, &f).unwrap(), &u).unwrap();
        prop_assert_eq!(net.step_flipped(&x, &u, &f).unwrap(), composed.clone());
        prop_assert_eq!(net.eval_update(&x, &u).unwrap(),
            net.step_flipped(&x, &u, &FlipMask::empty(n)).unwrap());
        prop_assert_eq!(net.step_flipped(&x, &u, &f).unwrap(), composed);
    }

    #[test]
    fn compiled_and_tree_evaluation_agree(net in network(), x in any::<u64>(), u in any::<u64>()) {
        let n = net.nodes();
        let m = net.inputs();
        let (x, u) = (x & ((1 << n) - 1), u & ((1 << m) - 1));
        for i in 1..=n {
            let tree = net.updates()[i - 1].eval_with(
                &|k| x >> (n - k) & 1 == 1,
                &|k| u >> (m - k) & 1 == 1,
            );
            prop_assert_eq!(net.eval_node(i, x, u), tree);
        }
    }

    #[test]
    fn actions_round_trip(a in 0usize..256, nodes in proptest::sample::subsequence(vec![1usize, 2, 3, 4, 5], 0..=5)) {
        let space = ActionSpace::new(5, 3, FlipSet::new(nodes)).unwrap();
        let a = a % space.len();
        let (u, f) = space.decode(a);
        prop_assert_eq!(space.encode(&u, &f).unwrap(), a);
    }
}

#[test]
fn small_action_space_is_a_bijection() {
    let space = ActionSpace::new(3, 1, FlipSet::new(vec![2, 3])).unwrap();
    assert_eq!(space.len(), 8);
    let zero = space
        .encode(&InputVec::from_index(1, 0).unwrap(), &FlipMask::empty(3))
        .unwrap();
    assert_eq!(zero, 0);
    let mut seen: Vec<(u64, u64)> = (0..8)
        .map(|a| {
            let (u, f) = space.decode(a);
            (u.index(), f.raw())
        })
        .collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 8);
    assert!(space
        .encode(&InputVec::from_index(1, 0).unwrap(), &FlipMask::from_indices(3, &[1]).unwrap())
        .is_err());
}
