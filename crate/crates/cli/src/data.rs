//! Dataset CSV and schema sidecar ingestion.

use std::path::Path;

use serde::Deserialize;
use treeshap_core::{EmbeddingSpec, FeatureEmbedding};

use crate::CliError;

/// Column types of a dataset. The sidecar is either a bare list of
/// `{"kind": ...}` entries or an object `{"columns": [...]}` whose entries
/// may also carry a `name`.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub names: Vec<Option<String>>,
    pub spec: EmbeddingSpec,
}

#[derive(Deserialize)]
struct Column {
    name: Option<String>,
    #[serde(flatten)]
    embedding: FeatureEmbedding,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SchemaDocument {
    Columns { columns: Vec<Column> },
    List(Vec<Column>),
}

impl Schema {
    pub fn numeric(d: usize) -> Self {
        Schema {
            names: vec![None; d],
            spec: EmbeddingSpec::identity(d),
        }
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: SchemaDocument =
            serde_json::from_str(text).map_err(|e| CliError::Input(format!("bad schema: {e}")))?;
        let columns = match doc {
            SchemaDocument::Columns { columns } | SchemaDocument::List(columns) => columns,
        };
        let names = columns.iter().map(|c| c.name.clone()).collect();
        let spec = EmbeddingSpec::new(columns.into_iter().map(|c| c.embedding).collect())
            .map_err(|e| CliError::Input(format!("bad schema: {e}")))?;
        Ok(Schema { names, spec })
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read_text(path)?)
    }

    /// Names of the embedded coordinates: a numeric column keeps its name, a
    /// categorical column `c` becomes `c=0`, `c=1`, ...
    pub fn coordinate_names(&self, columns: &[String]) -> Vec<String> {
        let mut out = Vec::new();
        for (name, e) in columns.iter().zip(self.spec.features()) {
            match *e {
                FeatureEmbedding::Identity => out.push(name.clone()),
                FeatureEmbedding::OneHot { categories } => out.extend((0..categories).map(|k| format!("{name}={k}"))),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Reads a header-bearing CSV and checks every cell against `schema`
/// (all-numeric when absent).
pub fn read_dataset(path: &Path, schema: Option<&Schema>) -> Result<Dataset, CliError> {
    let file =
        std::fs::File::open(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_dataset(file, schema).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_dataset(reader: impl std::io::Read, schema: Option<&Schema>) -> Result<Dataset, CliError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let columns: Vec<String> = csv
        .headers()
        .map_err(|e| CliError::Input(format!("bad header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let numeric;
    let schema = match schema {
        Some(s) => s,
        None => {
            numeric = Schema::numeric(columns.len());
            &numeric
        }
    };
    if schema.spec.raw_width() != columns.len() {
        return Err(CliError::Input(format!(
            "schema declares {} columns, header has {}",
            schema.spec.raw_width(),
            columns.len()
        )));
    }
    for (c, (want, got)) in schema.names.iter().zip(&columns).enumerate() {
        if let Some(want) = want {
            if want != got {
                return Err(CliError::Input(format!(
                    "column {c} is '{got}', schema expects '{want}'"
                )));
            }
        }
    }
    let mut rows = Vec::new();
    for (r, record) in csv.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("row {r}: {e}")))?;
        if record.len() != columns.len() {
            return Err(CliError::Input(format!(
                "row {r} has {} cells, expected {}",
                record.len(),
                columns.len()
            )));
        }
        let mut row = Vec::with_capacity(columns.len());
        for (c, cell) in record.iter().enumerate() {
            let name = &columns[c];
            let v: f64 = cell
                .parse()
                .map_err(|_| CliError::Input(format!("row {r}, column '{name}': '{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(CliError::Input(format!(
                    "row {r}, column '{name}': value is not finite"
                )));
            }
            if let FeatureEmbedding::OneHot { categories } = schema.spec.features()[c] {
                if v.fract() != 0.0 || v < 0.0 || v >= categories as f64 {
                    return Err(CliError::Input(format!(
                        "row {r}, column '{name}': category {v} out of range 0..{categories}"
                    )));
                }
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Dataset { columns, rows })
}

/// Inline comma-separated vector, as given to `--baseline`.
pub fn parse_inline_row(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|cell| {
            let cell = cell.trim();
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("baseline: '{cell}' is not a finite number")))
        })
        .collect()
}
