use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use treeshap_core::harness::{run_axiom_suite_with, Engines, FuzzConfig};
use treeshap_core::treeshap::explain_forest_instrumented;
use treeshap_core::{
    build_index, embed, explain_forest, explain_interactions_forest, explain_partition_forest, parse_model, Forest,
    PartitionIndex,
};

use crate::data::{parse_inline_row, read_dataset, Dataset, Schema};
use crate::output::{write_records, BaselineRef, Format, Mode, Record};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "treeshap", version, about = "Exact attributions for decision tree ensembles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shapley value of every feature, for each data row against each baseline.
    Explain(ExplainArgs),
    /// Pairwise Shapley-Taylor interactions; `explain --mode taylor`.
    Interactions(ExplainArgs),
    /// One attribution per raw column of one-hot encoded data; `explain --mode grouped`.
    Grouped(ExplainArgs),
    /// Runs the verification campaign on a model and a random corpus.
    Validate(ValidateArgs),
    /// Times explanations and checks the traversal work bounds.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// Foreground rows, header-bearing CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Baseline rows, same columns as the data.
    #[arg(long, conflicts_with = "baseline")]
    pub background: Option<PathBuf>,
    /// A single inline baseline row, e.g. `--baseline=-1,0.5,2`.
    #[arg(long, allow_hyphen_values = true)]
    pub baseline: Option<String>,
    /// Column kinds; categorical columns are one-hot encoded before the model sees them.
    #[arg(long, alias = "spec")]
    pub schema: Option<PathBuf>,
    /// Worker threads; output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Emit one record per row: the mean over all baselines.
    #[arg(long)]
    pub aggregate_background: bool,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Jsonl,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip every comparison against an enumeration oracle.
    #[arg(long)]
    pub skip_oracle: bool,
    /// Largest feature count compared against an enumeration oracle.
    #[arg(long, default_value_t = treeshap_core::harness::DEFAULT_ORACLE_GUARD)]
    pub max_oracle_dim: usize,
    /// Random trees in the fuzz corpus.
    #[arg(long, default_value_t = 200)]
    pub tree_count: usize,
    /// Input pairs per tree.
    #[arg(long, default_value_t = 10)]
    pub pairs: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: ReportFormat,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum, default_value = "table")]
    pub format: ReportFormat,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// Runs one command. Results go to `out` unless an output file is given;
/// notes go to `err`.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Explain(a) => explain(a, a.mode.unwrap_or(Mode::Shap), out),
        Command::Interactions(a) => explain(a, fixed_mode(a, Mode::Taylor)?, out),
        Command::Grouped(a) => explain(a, fixed_mode(a, Mode::Grouped)?, out),
        Command::Validate(a) => validate(a, out, err),
        Command::Bench(a) => bench(a, out),
    }
}

fn fixed_mode(args: &ExplainArgs, mode: Mode) -> Result<Mode, CliError> {
    match args.mode {
        Some(m) if m != mode => Err(CliError::Input(format!(
            "--mode {} conflicts with this command",
            m.name()
        ))),
        _ => Ok(mode),
    }
}

fn with_sink<T>(
    path: Option<&Path>,
    out: &mut dyn Write,
    f: impl FnOnce(&mut dyn Write) -> Result<T, CliError>,
) -> Result<T, CliError> {
    match path {
        Some(p) => {
            let file =
                std::fs::File::create(p).map_err(|e| CliError::Input(format!("cannot create {}: {e}", p.display())))?;
            let mut w = std::io::BufWriter::new(file);
            let v = f(&mut w)?;
            w.flush()
                .map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))?;
            Ok(v)
        }
        None => f(out),
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Input(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub(crate) fn load_model(path: &Path) -> Result<Forest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_model(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Model, data and baselines, embedded and checked against each other.
struct Prepared {
    forest: Forest,
    schema: Schema,
    data: Dataset,
    index: PartitionIndex,
    xs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
}

fn prepare(inputs: &Inputs, baseline_required: bool) -> Result<Prepared, CliError> {
    let forest = load_model(&inputs.model)?;
    let schema = inputs.schema.as_deref().map(Schema::read).transpose()?;
    let data = read_dataset(&inputs.data, schema.as_ref())?;
    let schema = schema.unwrap_or_else(|| Schema::numeric(data.column_count()));
    let width = schema.spec.embedded_width();
    if forest.feature_count() != width {
        return Err(CliError::Input(format!(
            "model has {} features but the data has {} after encoding",
            forest.feature_count(),
            width
        )));
    }
    let embed_row =
        |row: &[f64], what: &str| embed(row, &schema.spec).map_err(|e| CliError::Input(format!("{what}: {e}")));
    let xs = data
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| embed_row(row, &format!("row {r}")))
        .collect::<Result<Vec<_>, _>>()?;
    let raw_baselines = match (&inputs.background, &inputs.baseline) {
        (Some(path), _) => {
            let bg = read_dataset(path, Some(&schema))?;
            if bg.columns != data.columns {
                return Err(CliError::Input("background columns differ from data columns".into()));
            }
            if bg.rows.is_empty() {
                return Err(CliError::Input(format!("{}: background has no rows", path.display())));
            }
            bg.rows
        }
        (None, Some(text)) => {
            let row = parse_inline_row(text)?;
            if row.len() != data.column_count() {
                return Err(CliError::Input(format!(
                    "baseline has {} values, data has {} columns",
                    row.len(),
                    data.column_count()
                )));
            }
            vec![row]
        }
        (None, None) if baseline_required => {
            return Err(CliError::Input(
                "a baseline is required: pass --background or --baseline".into(),
            ))
        }
        (None, None) => data.rows.first().cloned().into_iter().collect(),
    };
    let zs = raw_baselines
        .iter()
        .enumerate()
        .map(|(r, row)| embed_row(row, &format!("baseline {r}")))
        .collect::<Result<Vec<_>, _>>()?;
    let index = build_index(&schema.spec).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Prepared {
        forest,
        schema,
        data,
        index,
        xs,
        zs,
    })
}

fn attribution(p: &Prepared, mode: Mode, x: &[f64], z: &[f64]) -> Result<Vec<f64>, CliError> {
    let out = match mode {
        Mode::Shap => explain_forest(&p.forest, x, z).map(|v| v.into_inner()),
        Mode::Taylor => explain_interactions_forest(&p.forest, x, z).map(|m| m.values().to_vec()),
        Mode::Grouped => explain_partition_forest(&p.forest, x, z, &p.index).map(|v| v.into_inner()),
    };
    out.map_err(|e| CliError::Input(e.to_string()))
}

fn records_for(p: &Prepared, mode: Mode, aggregate: bool, i: usize, x: &[f64]) -> Result<Vec<Record>, CliError> {
    let hx = p.forest.evaluate(x).map_err(|e| CliError::Input(e.to_string()))?;
    let mut records = Vec::with_capacity(if aggregate { 1 } else { p.zs.len() });
    let mut sum: Option<(Vec<f64>, f64)> = None;
    for (j, z) in p.zs.iter().enumerate() {
        let values = attribution(p, mode, x, z)?;
        let gap = hx - p.forest.evaluate(z).map_err(|e| CliError::Input(e.to_string()))?;
        if aggregate {
            match &mut sum {
                None => sum = Some((values, gap)),
                Some((acc, g)) => {
                    acc.iter_mut().zip(&values).for_each(|(a, v)| *a += v);
                    *g += gap;
                }
            }
        } else {
            records.push(Record {
                instance: i,
                baseline: BaselineRef::Index(j),
                values,
                gap,
            });
        }
    }
    if let Some((mut values, gap)) = sum {
        let m = p.zs.len() as f64;
        values.iter_mut().for_each(|v| *v /= m);
        records.push(Record {
            instance: i,
            baseline: BaselineRef::AVERAGED,
            values,
            gap: gap / m,
        });
    }
    Ok(records)
}

fn explain(args: &ExplainArgs, mode: Mode, out: &mut dyn Write) -> Result<(), CliError> {
    let p = prepare(&args.inputs, true)?;
    let names = match mode {
        Mode::Grouped => p.data.columns.clone(),
        Mode::Shap | Mode::Taylor => p.schema.coordinate_names(&p.data.columns),
    };
    let per_row = in_pool(args.inputs.threads, || {
        p.xs.par_iter()
            .enumerate()
            .map(|(i, x)| records_for(&p, mode, args.aggregate_background, i, x))
            .collect::<Result<Vec<_>, _>>()
    })??;
    let records: Vec<Record> = per_row.into_iter().flatten().collect();
    with_sink(args.output.as_deref(), out, |w| {
        write_records(w, args.format, mode, &names, &records)
    })
}

fn validate(args: &ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let forest = load_model(&args.model)?;
    let d = forest.feature_count();
    let guard = if args.skip_oracle { 0 } else { args.max_oracle_dim };
    if !args.skip_oracle && d > guard {
        let _ = writeln!(
            err,
            "model has {d} features, above the oracle guard of {guard}; oracle checks on the model are skipped"
        );
    }
    let cfg = FuzzConfig {
        seed: args.seed,
        tree_count: args.tree_count,
        pairs_per_tree: args.pairs,
        oracle_guard: guard,
        ..FuzzConfig::default()
    };
    let report = in_pool(args.threads, || {
        run_axiom_suite_with(&cfg, Some(&forest), &Engines::default())
    })?;
    let text = match args.format {
        ReportFormat::Table => report.summary_table(),
        ReportFormat::Jsonl => report.to_jsonl(),
    };
    with_sink(args.output.as_deref(), out, |w| {
        w.write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write report: {e}")))
    })?;
    let failed = report.failures().count();
    if failed > 0 {
        return Err(CliError::Validation(format!("{failed} properties failed")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct BenchLine {
    instance: usize,
    baseline: usize,
    nanos: u128,
    nodes_visited: usize,
    leaf_work: usize,
}

#[derive(Debug, Clone, Serialize)]
struct BenchSummary {
    explanations: usize,
    trees: usize,
    node_bound: usize,
    leaf_work_bound: usize,
    nodes_visited: usize,
    leaf_work: usize,
    max_nodes_visited: usize,
    max_leaf_work: usize,
    mean_nanos: f64,
    doubled_nodes_visited: usize,
    doubled_leaf_work: usize,
    work_ratio: f64,
    bounds_hold: bool,
    ratio_in_range: bool,
}

fn instrumented(forest: &Forest, p: &Prepared) -> Result<Vec<BenchLine>, CliError> {
    let pairs: Vec<(usize, usize)> = (0..p.xs.len())
        .flat_map(|i| (0..p.zs.len()).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| {
            let start = Instant::now();
            let (_, stats) =
                explain_forest_instrumented(forest, &p.xs[i], &p.zs[j]).map_err(|e| CliError::Input(e.to_string()))?;
            Ok(BenchLine {
                instance: i,
                baseline: j,
                nanos: start.elapsed().as_nanos(),
                nodes_visited: stats.nodes_visited,
                leaf_work: stats.leaf_work,
            })
        })
        .collect()
}

/// Accepted range for the work ratio of a forest repeated twice.
pub const DOUBLING_RANGE: (f64, f64) = (1.8, 2.2);

fn bench(args: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = prepare(&args.inputs, false)?;
    let forest = &p.forest;
    let d = forest.feature_count();
    let node_bound = forest.node_count();
    let leaf_work_bound = forest.trees().iter().map(|t| t.leaf_count()).sum::<usize>() * d;
    let doubled = forest.repeated(2);
    let (lines, doubled_lines) = in_pool(args.inputs.threads, || {
        Ok::<_, CliError>((instrumented(forest, &p)?, instrumented(&doubled, &p)?))
    })??;

    let total = |ls: &[BenchLine]| {
        ls.iter()
            .fold((0, 0), |(n, l), b| (n + b.nodes_visited, l + b.leaf_work))
    };
    let (nodes_visited, leaf_work) = total(&lines);
    let (doubled_nodes, doubled_leaf) = total(&doubled_lines);
    let work = (nodes_visited + leaf_work) as f64;
    let work_ratio = if work > 0.0 {
        (doubled_nodes + doubled_leaf) as f64 / work
    } else {
        2.0
    };
    let bounds_hold = lines
        .iter()
        .all(|b| b.nodes_visited <= node_bound && b.leaf_work <= leaf_work_bound);
    let ratio_in_range = (DOUBLING_RANGE.0..=DOUBLING_RANGE.1).contains(&work_ratio);
    let summary = BenchSummary {
        explanations: lines.len(),
        trees: forest.trees().len(),
        node_bound,
        leaf_work_bound,
        nodes_visited,
        leaf_work,
        max_nodes_visited: lines.iter().map(|b| b.nodes_visited).max().unwrap_or(0),
        max_leaf_work: lines.iter().map(|b| b.leaf_work).max().unwrap_or(0),
        mean_nanos: lines.iter().map(|b| b.nanos as f64).sum::<f64>() / lines.len().max(1) as f64,
        doubled_nodes_visited: doubled_nodes,
        doubled_leaf_work: doubled_leaf,
        work_ratio,
        bounds_hold,
        ratio_in_range,
    };

    with_sink(args.output.as_deref(), out, |w| {
        let io = |e: std::io::Error| CliError::Input(format!("cannot write report: {e}"));
        match args.format {
            ReportFormat::Jsonl => {
                for line in &lines {
                    writeln!(w, "{}", serde_json::to_string(line).unwrap()).map_err(io)?;
                }
                writeln!(
                    w,
                    "{}",
                    serde_json::to_string(&serde_json::json!({ "summary": &summary })).unwrap()
                )
                .map_err(io)?;
            }
            ReportFormat::Table => {
                let s = &summary;
                writeln!(w, "explanations        {}", s.explanations).map_err(io)?;
                writeln!(w, "trees               {}", s.trees).map_err(io)?;
                writeln!(w, "mean time           {:.1} us", s.mean_nanos / 1e3).map_err(io)?;
                writeln!(
                    w,
                    "max nodes visited   {} (bound {})",
                    s.max_nodes_visited, s.node_bound
                )
                .map_err(io)?;
                writeln!(
                    w,
                    "max leaf work       {} (bound {})",
                    s.max_leaf_work, s.leaf_work_bound
                )
                .map_err(io)?;
                writeln!(
                    w,
                    "total work          {} nodes + {} leaf",
                    s.nodes_visited, s.leaf_work
                )
                .map_err(io)?;
                writeln!(
                    w,
                    "doubled forest      {} nodes + {} leaf, ratio {:.4}",
                    s.doubled_nodes_visited, s.doubled_leaf_work, s.work_ratio
                )
                .map_err(io)?;
                writeln!(
                    w,
                    "bounds              {}",
                    if s.bounds_hold { "ok" } else { "VIOLATED" }
                )
                .map_err(io)?;
            }
        }
        Ok(())
    })?;
    if !bounds_hold {
        return Err(CliError::Validation("work bound violated".into()));
    }
    if !ratio_in_range {
        return Err(CliError::Validation(format!(
            "doubled-forest work ratio {work_ratio} out of range"
        )));
    }
    Ok(())
}
