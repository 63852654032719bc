use treeshap_core::harness::{
    generate_random_tree, replay, run_axiom_suite, run_axiom_suite_with, Engines, FuzzConfig, Status,
};
use treeshap_core::treeshap::exact_contribution;
use treeshap_core::{explain_tree_with, AttributionVector, Result, Tree};

fn quick() -> FuzzConfig {
    FuzzConfig {
        seed: 99,
        tree_count: 30,
        pairs_per_tree: 4,
        ..FuzzConfig::default()
    }
}

fn sign_flipped(tree: &Tree, x: &[f64], z: &[f64]) -> Result<AttributionVector> {
    explain_tree_with(tree, x, z, |k, n, in_x, v| -exact_contribution(k, n, in_x, v))
}

#[test]
fn default_campaign_passes() {
    let report = run_axiom_suite(&FuzzConfig::default());
    println!("{}", report.summary_table());
    assert!(report.passed());
    assert!(report.entries.iter().all(|e| e.status == Status::Pass));
    assert!(report.entries.iter().all(|e| e.max_error <= 1e-9));
}

#[test]
fn report_bytes_do_not_depend_on_threads() {
    let cfg = quick();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_axiom_suite(&cfg))
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one.to_jsonl(), four.to_jsonl());
    assert_eq!(one.summary_table(), four.summary_table());
    assert_eq!(one.to_jsonl(), run_axiom_suite(&cfg).to_jsonl());
}

#[test]
fn different_seeds_draw_different_cases() {
    let a = generate_random_tree(&quick(), 0);
    let b = generate_random_tree(&FuzzConfig { seed: 100, ..quick() }, 0);
    assert_ne!(a, b);
}

#[test]
fn corrupted_leaf_rule_fails_efficiency() {
    let engines = Engines {
        shapley: sign_flipped,
        ..Engines::default()
    };
    let cfg = quick();
    let report = run_axiom_suite_with(&cfg, None, &engines);
    assert!(!report.passed());
    let eff = report.entry("fuzz", "treeshap", "efficiency").unwrap();
    assert_eq!(eff.status, Status::Fail);
    let oracle = report.entry("fuzz", "treeshap", "oracle_equivalence").unwrap();
    assert_eq!(oracle.status, Status::Fail);
    // untouched engines still pass
    let taylor = report.entry("fuzz", "taylor_treeshap", "oracle_equivalence").unwrap();
    assert_eq!(taylor.status, Status::Pass);

    let failure = eff.failure.clone().unwrap();
    assert_eq!(failure.seed, cfg.seed);
    let again = replay(&cfg, None, &engines, &failure);
    let replayed = again.entry("fuzz", "treeshap", "efficiency").unwrap();
    assert_eq!(replayed.status, Status::Fail);
    assert_eq!(replayed.cases, 1);
    assert_eq!(replayed.max_error, failure.error);
    assert!(replay(&cfg, None, &Engines::default(), &failure).passed());
}

#[test]
fn oracle_rows_skip_above_guard() {
    let cfg = FuzzConfig {
        feature_count: 30,
        tree_count: 20,
        pairs_per_tree: 3,
        ..FuzzConfig::default()
    };
    let report = run_axiom_suite(&cfg);
    assert!(report.passed(), "{}", report.summary_table());
    for e in &report.entries {
        let tree_level = e.module == "treeshap" || e.module == "taylor_treeshap";
        if tree_level && e.property.contains("oracle") {
            assert_eq!(e.status, Status::Skipped, "{}", e.property);
            assert_eq!(e.cases, 0);
            assert!(e.skipped > 0);
        }
    }
    let eff = report.entry("fuzz", "treeshap", "efficiency").unwrap();
    assert_eq!(eff.status, Status::Pass);
    assert!(eff.cases > 0);
}

#[test]
fn thousand_generated_trees_are_valid() {
    let cfg = FuzzConfig {
        tree_count: 1000,
        ..FuzzConfig::default()
    };
    for i in 0..cfg.tree_count {
        let tree = generate_random_tree(&cfg, i);
        let rebuilt = Tree::from_nodes(tree.nodes().to_vec(), tree.feature_count()).unwrap();
        assert_eq!(rebuilt, tree);
        assert!(tree.depth() <= cfg.max_depth);
    }
}
