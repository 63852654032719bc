use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use treeshap_core::game::{brute_force_shapley, grouped_game, interventional_game};
use treeshap_core::harness::random_tree;
use treeshap_core::{explain_interactions_tree, explain_partition_tree, explain_tree, Node, PartitionIndex, Tree};

fn tree_and_pair(seed: u64, d: usize, depth: usize) -> (Tree, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // coarse thresholds make ties and shared branches common
    let tree = random_tree(&mut rng, d, depth, (-2.0, 2.0), |r, _| r.gen_range(-2..=2) as f64 / 2.0);
    let x = (0..d).map(|_| rng.gen_range(-3..=3) as f64 / 2.0).collect();
    let z = (0..d).map(|_| rng.gen_range(-3..=3) as f64 / 2.0).collect();
    (tree, x, z)
}

fn with_leaves(tree: &Tree, f: impl Fn(usize, f64) -> f64) -> Tree {
    let nodes = tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(n, node)| match *node {
            Node::Leaf { value } => Node::Leaf { value: f(n, value) },
            split => split,
        })
        .collect();
    Tree::from_nodes(nodes, tree.feature_count()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn matches_enumeration(seed in any::<u64>(), d in 1usize..=7, depth in 0usize..=6) {
        let (tree, x, z) = tree_and_pair(seed, d, depth);
        let game = interventional_game(|p: &[f64]| tree.evaluate(p).unwrap(), &x, &z).unwrap();
        let oracle = brute_force_shapley(&game).unwrap();
        let phi = explain_tree(&tree, &x, &z).unwrap();
        prop_assert!(phi.max_abs_diff(&oracle) <= 1e-9);
    }

    #[test]
    fn swapping_input_and_baseline_negates(seed in any::<u64>(), d in 1usize..=8, depth in 0usize..=6) {
        let (tree, x, z) = tree_and_pair(seed, d, depth);
        let forward = explain_tree(&tree, &x, &z).unwrap();
        let backward = explain_tree(&tree, &z, &x).unwrap();
        for (a, b) in forward.iter().zip(backward.iter()) {
            prop_assert!((a + b).abs() <= 1e-12);
        }
        // interaction diagonals are first-order effects, which do not flip;
        // only the totals do
        let m = explain_interactions_tree(&tree, &x, &z).unwrap();
        let n = explain_interactions_tree(&tree, &z, &x).unwrap();
        prop_assert!((m.total() + n.total()).abs() <= 1e-9);
    }

    #[test]
    fn linear_in_leaf_values(seed in any::<u64>(), d in 1usize..=8, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let (tree, x, z) = tree_and_pair(seed, d, 5);
        let other = with_leaves(&tree, |n, _| (n % 5) as f64 - 2.0);
        let mixed = with_leaves(&tree, |n, v| a * v + b * ((n % 5) as f64 - 2.0));
        let mut expect = explain_tree(&tree, &x, &z).unwrap();
        expect.scale(a);
        expect.add_scaled(&explain_tree(&other, &x, &z).unwrap(), b);
        prop_assert!(explain_tree(&mixed, &x, &z).unwrap().max_abs_diff(&expect) <= 1e-12);
    }

    #[test]
    fn taylor_total_matches_shapley_sum(seed in any::<u64>(), d in 1usize..=7, depth in 0usize..=6) {
        // both split the same gap, so their totals agree
        let (tree, x, z) = tree_and_pair(seed, d, depth);
        let phi = explain_tree(&tree, &x, &z).unwrap();
        let m = explain_interactions_tree(&tree, &x, &z).unwrap();
        prop_assert!((phi.sum() - m.total()).abs() <= 1e-9);
    }

    #[test]
    fn arbitrary_partitions_match_grouped_enumeration(
        seed in any::<u64>(),
        d in 1usize..=8,
        groups in 1usize..=8,
        assignment in proptest::collection::vec(0usize..8, 8),
    ) {
        let groups = groups.min(d);
        // first `groups` coordinates cover every group, the rest go anywhere
        let group_of: Vec<usize> = (0..d)
            .map(|i| if i < groups { (i + seed as usize) % groups } else { assignment[i] % groups })
            .collect();
        let index = PartitionIndex::new(group_of, groups).unwrap();
        let (tree, x, z) = tree_and_pair(seed, d, 6);
        let game = interventional_game(|p: &[f64]| tree.evaluate(p).unwrap(), &x, &z).unwrap();
        let oracle = brute_force_shapley(&grouped_game(game, &index).unwrap()).unwrap();
        let phi = explain_partition_tree(&tree, &x, &z, &index).unwrap();
        prop_assert!(phi.max_abs_diff(&oracle) <= 1e-9, "{:?} vs {:?}", phi, oracle);
    }
}
