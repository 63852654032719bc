//! Acceptance checks. Prints one line per criterion and exits nonzero if any
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{numeric_csv, random_forest, s, treeshap, write};
use treeshap_cli::output::{parse_csv_output, BaselineRef};
use treeshap_core::game::{brute_force_shapley, brute_force_shapley_taylor, grouped_game, interventional_game};
use treeshap_core::harness::{
    generate_grouped_case, generate_pair, generate_random_tree, run_axiom_suite, FuzzConfig, Status,
};
use treeshap_core::naive::{path_shapley, NaiveOptions};
use treeshap_core::treeshap::{classify_edge, classify_path, explain_forest_instrumented};
use treeshap_core::{
    explain_interactions_tree, explain_partition_tree, explain_tree, visit_counter, Aggregation, EdgeType, Node,
    PartitionIndex, Tree,
};

const ORACLE_TOL: f64 = 1e-9;
const ALGEBRAIC_TOL: f64 = 1e-12;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn split(feature: usize, threshold: f64, left: usize, right: usize) -> Node {
    Node::Split {
        feature,
        threshold,
        left,
        right,
    }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(f)
}

fn and_toy() -> Outcome {
    let tree = Tree::from_nodes(
        vec![
            split(0, 0.0, 1, 2),
            Node::Leaf { value: 0.0 },
            split(1, 0.0, 3, 4),
            Node::Leaf { value: 0.0 },
            Node::Leaf { value: 1.0 },
        ],
        2,
    )
    .unwrap();
    let (x, z) = ([1.0, 1.0], [-1.0, -1.0]);
    // the first call also builds the shared weight table
    let start = Instant::now();
    explain_tree(&tree, &x, &z).unwrap();
    let cold = start.elapsed();
    let start = Instant::now();
    let phi = explain_tree(&tree, &x, &z).unwrap();
    let elapsed = start.elapsed();
    let err = (phi[0] - 0.5).abs().max((phi[1] - 0.5).abs());
    let gap_err = (phi.sum() - 1.0).abs();
    outcome(
        err <= ALGEBRAIC_TOL && gap_err <= ALGEBRAIC_TOL && elapsed < Duration::from_millis(1),
        format!(
            "phi={:?} sum={} err={err:e} time={elapsed:?}, first call {cold:?} (tol 1e-12, < 1 ms)",
            phi.values(),
            phi.sum()
        ),
    )
}

const X3: [f64; 3] = [0.0, 0.0, 1.0];
const Z3: [f64; 3] = [-2.0, -1.0, 2.0];

fn edge_table() -> Outcome {
    let tree = Tree::from_nodes(
        vec![
            split(1, 0.5, 1, 2),
            split(2, 1.33, 3, 4),
            split(0, 0.25, 5, 6),
            Node::Leaf { value: 1.0 },
            Node::Leaf { value: 2.0 },
            Node::Leaf { value: 3.0 },
            Node::Leaf { value: 4.0 },
        ],
        3,
    )
    .unwrap();
    let edges = [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)];
    let got: Vec<EdgeType> = edges
        .iter()
        .map(|&(p, c)| classify_edge(&tree, p, c, &X3, &Z3).unwrap())
        .collect();
    use EdgeType::{B, F, X, Z};
    let want = [F, B, X, Z, F, B];
    outcome(got == want, format!("{got:?} (exact)"))
}

fn chain_tree() -> Tree {
    // (feature, threshold, chain continues on the left?)
    let tests = [
        (1, -0.5, false),
        (2, 1.5, false),
        (1, 1.0, true),
        (0, -1.0, false),
        (1, -0.33, false),
        (0, -1.5, true),
    ];
    let mut nodes = vec![Node::Leaf { value: 0.0 }; 13];
    for (k, &(feature, threshold, left_on_chain)) in tests.iter().enumerate() {
        let (on, off) = (k + 1, 7 + k);
        let (left, right) = if left_on_chain { (on, off) } else { (off, on) };
        nodes[k] = split(feature, threshold, left, right);
        nodes[off] = Node::Leaf {
            value: -(k as f64) - 1.0,
        };
    }
    nodes[6] = Node::Leaf { value: 10.0 };
    Tree::from_nodes(nodes, 3).unwrap()
}

fn path_sets() -> Outcome {
    let tree = chain_tree();
    let path = tree.maximal_paths().into_iter().find(|p| p.leaf == 6).unwrap();
    let sets = classify_path(&tree, &path, &X3, &Z3).unwrap();
    let s_x: Vec<usize> = sets.s_x.iter().collect();
    let s_z: Vec<usize> = sets.s_z.iter().collect();
    // enumerate the path game without skipping, and run the engine on the
    // path alone
    let enumerated = path_shapley(&tree, &path, &X3, &Z3, NaiveOptions { skip_null_paths: false }).unwrap();
    let engine = explain_tree(&tree.isolate_leaf(6), &X3, &Z3).unwrap();
    let zero = enumerated.iter().chain(engine.iter()).all(|&v| v == 0.0);
    outcome(
        s_x == [0, 1] && s_z == [0, 2] && sets.is_null() && zero,
        format!(
            "S_X={s_x:?} S_Z={s_z:?} enumerated={:?} engine={:?} (exact)",
            enumerated.values(),
            engine.values()
        ),
    )
}

fn corpus(feature_count: usize) -> FuzzConfig {
    FuzzConfig {
        seed: 2024,
        tree_count: 200,
        max_depth: 6,
        feature_count,
        pairs_per_tree: 10,
        ..FuzzConfig::default()
    }
}

fn shapley_oracle() -> Outcome {
    let cfg = corpus(10);
    let start = Instant::now();
    let (cases, worst) = single_thread(|| {
        let mut cases = 0;
        let mut worst = 0.0f64;
        for i in 0..cfg.tree_count {
            let tree = generate_random_tree(&cfg, i);
            for j in 0..cfg.pairs_per_tree {
                let (x, z) = generate_pair(&cfg, &tree, i, j);
                let game = interventional_game(|p: &[f64]| tree.evaluate(p).unwrap(), &x, &z).unwrap();
                let oracle = brute_force_shapley(&game).unwrap();
                let phi = explain_tree(&tree, &x, &z).unwrap();
                worst = worst.max(phi.max_abs_diff(&oracle));
                cases += 1;
            }
        }
        (cases, worst)
    });
    let elapsed = start.elapsed();
    outcome(
        cases >= 2000 && worst <= ORACLE_TOL && elapsed < Duration::from_secs(60),
        format!(
            "{cases} cases, d=10, depth<=6, max err {worst:.2e} (tol 1e-9), {elapsed:.1?} single-threaded (< 60 s)"
        ),
    )
}

fn taylor_oracle() -> Outcome {
    let cfg = corpus(8);
    let mut cases = 0;
    let mut worst = 0.0f64;
    let mut worst_gap = 0.0f64;
    for i in 0..cfg.tree_count {
        let tree = generate_random_tree(&cfg, i);
        for j in 0..cfg.pairs_per_tree {
            let (x, z) = generate_pair(&cfg, &tree, i, j);
            let game = interventional_game(|p: &[f64]| tree.evaluate(p).unwrap(), &x, &z).unwrap();
            let oracle = brute_force_shapley_taylor(&game).unwrap();
            let m = explain_interactions_tree(&tree, &x, &z).unwrap();
            worst = worst.max(m.max_abs_diff(&oracle));
            let gap = tree.evaluate(&x).unwrap() - tree.evaluate(&z).unwrap();
            worst_gap = worst_gap.max((m.total() - gap).abs());
            cases += 1;
        }
    }
    outcome(
        cases >= 2000 && worst <= ORACLE_TOL && worst_gap <= ORACLE_TOL,
        format!("{cases} cases, d=8, max matrix err {worst:.2e}, max |total - gap| {worst_gap:.2e} (tol 1e-9)"),
    )
}

fn partition_oracle() -> Outcome {
    let cfg = FuzzConfig {
        seed: 77,
        tree_count: 120,
        ..FuzzConfig::default()
    };
    let mut worst = 0.0f64;
    let mut cases = 0;
    let mut mixed = 0;
    let mut widest = (0, 0);
    for i in 0..cfg.tree_count {
        let case = generate_grouped_case(&cfg, i);
        if !case.spec.is_identity() {
            mixed += 1;
        }
        widest = (
            widest.0.max(case.spec.raw_width()),
            widest.1.max(case.spec.embedded_width()),
        );
        for (x, z) in &case.pairs {
            let tree = &case.tree;
            let game = interventional_game(|p: &[f64]| tree.evaluate(p).unwrap(), x, z).unwrap();
            let oracle = brute_force_shapley(&grouped_game(game, &case.index).unwrap()).unwrap();
            let phi = explain_partition_tree(tree, x, z, &case.index).unwrap();
            worst = worst.max(phi.max_abs_diff(&oracle));
            cases += 1;
        }
    }
    // identity partitions against the plain engine, bit for bit
    let plain = corpus(10);
    let mut identical = true;
    for i in 0..plain.tree_count {
        let tree = generate_random_tree(&plain, i);
        let index = PartitionIndex::identity(tree.feature_count());
        for j in 0..plain.pairs_per_tree {
            let (x, z) = generate_pair(&plain, &tree, i, j);
            identical &= explain_partition_tree(&tree, &x, &z, &index).unwrap() == explain_tree(&tree, &x, &z).unwrap();
        }
    }
    outcome(
        mixed >= 100 && widest.0 <= 6 && widest.1 <= 10 && worst <= ORACLE_TOL && identical,
        format!(
            "{mixed} mixed specs (d<={}, d'<={}), {cases} cases, max err {worst:.2e} (tol 1e-9); identity runs bit-identical: {identical}",
            widest.0, widest.1
        ),
    )
}

fn axiom_suite() -> Outcome {
    let report = run_axiom_suite(&FuzzConfig::default());
    let wanted = [
        ("shapley_core", "efficiency"),
        ("shapley_core", "dummy"),
        ("shapley_core", "symmetry"),
        ("shapley_core", "linearity"),
        ("shapley_core", "dummy_reduction"),
        ("treeshap", "efficiency"),
        ("treeshap", "dummy"),
        ("treeshap", "forest_linearity"),
        ("taylor_treeshap", "efficiency"),
        ("taylor_treeshap", "symmetry"),
        ("taylor_treeshap", "dummy"),
        ("partition_treeshap", "efficiency"),
        ("partition_treeshap", "dummy_lifting"),
    ];
    let missing: Vec<_> = wanted
        .iter()
        .filter(|(m, p)| report.entry("fuzz", m, p).map(|e| e.status) != Some(Status::Pass))
        .collect();
    let all_pass = report.entries.iter().all(|e| e.status == Status::Pass);
    outcome(
        report.passed() && all_pass && missing.is_empty(),
        format!(
            "{} properties, {} failed; synthetic games d<=8 and tree games (tol 1e-9 oracle / 1e-12 algebraic)",
            report.entries.len(),
            report.failures().count()
        ),
    )
}

fn complexity() -> Outcome {
    let cfg = corpus(8);
    let mut cases = 0;
    let mut within = 0;
    for i in 0..cfg.tree_count {
        let tree = generate_random_tree(&cfg, i);
        for j in 0..cfg.pairs_per_tree {
            let (x, z) = generate_pair(&cfg, &tree, i, j);
            let stats = visit_counter(&tree, &x, &z).unwrap();
            cases += 1;
            if stats.nodes_visited <= tree.node_count() && stats.leaf_work <= tree.leaf_count() * tree.feature_count() {
                within += 1;
            }
        }
    }
    let forest = random_forest(31, 100, 8, Aggregation::Mean);
    let doubled = forest.repeated(2);
    let mut work = (0usize, 0usize);
    for j in 0..10 {
        let (x, z) = generate_pair(&cfg, &forest.trees()[j], j, 0);
        let (_, a) = explain_forest_instrumented(&forest, &x, &z).unwrap();
        let (_, b) = explain_forest_instrumented(&doubled, &x, &z).unwrap();
        work.0 += a.nodes_visited + a.leaf_work;
        work.1 += b.nodes_visited + b.leaf_work;
    }
    let ratio = work.1 as f64 / work.0 as f64;
    outcome(
        within == cases && (1.8..=2.2).contains(&ratio),
        format!("{within}/{cases} explanations within nodes<=|N|, leaf_work<=|L|d; doubled-forest work ratio {ratio} (range [1.8, 2.2])"),
    )
}

fn background_averaging() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let forest = random_forest(9, 25, 5, Aggregation::Mean);
    let model = write(dir.path(), "m.json", &forest.to_json());
    let data = write(dir.path(), "x.csv", &numeric_csv(8, 5, 0));
    let bg = write(dir.path(), "z.csv", &numeric_csv(10, 5, 100));
    let mut worst = 0.0f64;
    let mut checked = 0;
    for mode in ["shap", "taylor"] {
        let base = [
            "explain",
            "--mode",
            mode,
            "--model",
            s(&model),
            "--data",
            s(&data),
            "--background",
            s(&bg),
        ];
        let single = treeshap(&base);
        let averaged = treeshap(&[&base[..], &["--aggregate-background"]].concat());
        if single.code != 0 || averaged.code != 0 {
            return outcome(false, format!("cli failed: {} {}", single.stderr, averaged.stderr));
        }
        let single = parse_csv_output(&single.stdout).unwrap();
        let averaged = parse_csv_output(&averaged.stdout).unwrap();
        for rec in &averaged.records {
            let rows: Vec<_> = single.records.iter().filter(|r| r.instance == rec.instance).collect();
            if rows.len() != 10 || rec.baseline != BaselineRef::AVERAGED {
                return outcome(
                    false,
                    format!("instance {} has {} baseline rows", rec.instance, rows.len()),
                );
            }
            for k in 0..rec.values.len() {
                let mean = rows.iter().map(|r| r.values[k]).sum::<f64>() / 10.0;
                worst = worst.max((mean - rec.values[k]).abs());
            }
            let mean_gap = rows.iter().map(|r| r.gap).sum::<f64>() / 10.0;
            worst = worst.max((mean_gap - rec.gap).abs());
            checked += 1;
        }
    }
    outcome(
        checked == 16 && worst <= ALGEBRAIC_TOL,
        format!("{checked} averaged records over 10 baselines, max |aggregated - mean| {worst:.2e} (tol 1e-12)"),
    )
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check); 9] = [
        ("AND toy example", and_toy),
        ("edge-type table", edge_table),
        ("path-set example", path_sets),
        ("Shapley oracle equivalence", shapley_oracle),
        ("Shapley-Taylor oracle equivalence", taylor_oracle),
        ("partition oracle equivalence", partition_oracle),
        ("axiom suite", axiom_suite),
        ("complexity bound", complexity),
        ("background-averaging linearity", background_averaging),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} - {}",
            n + 1,
            if result.pass { "PASS" } else { "FAIL" },
            name,
            result.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
