#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use treeshap_core::harness::{generate_random_tree, FuzzConfig};
use treeshap_core::{Aggregation, Forest};

pub const AND_MODEL: &str = r#"{
  "feature_count": 2,
  "trees": [{
    "split_feature": [0, -1, 1, -1, -1],
    "threshold":     [0, 0, 0, 0, 0],
    "left_child":    [1, -1, 3, -1, -1],
    "right_child":   [2, -1, 4, -1, -1],
    "leaf_value":    [0, 0, 0, 0, 1]
  }]
}"#;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn treeshap(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_treeshap"))
        .args(args)
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn random_forest(seed: u64, trees: usize, features: usize, aggregation: Aggregation) -> Forest {
    let cfg = FuzzConfig {
        seed,
        feature_count: features,
        tree_count: trees,
        ..FuzzConfig::default()
    };
    Forest::new((0..trees).map(|i| generate_random_tree(&cfg, i)).collect(), aggregation).unwrap()
}

/// Header-bearing CSV with columns `f0..f{d-1}`; cells from a fixed
/// arithmetic pattern spread over the threshold range.
pub fn numeric_csv(rows: usize, d: usize, offset: usize) -> String {
    let mut out = (0..d).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for r in 0..rows {
        let row: Vec<String> = (0..d)
            .map(|j| {
                let k = (r + offset) * 7919 + j * 104_729;
                format!("{}", (k % 400) as f64 / 200.0 - 1.0)
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
