//! Explanation records and their CSV / JSON-lines encodings.

use std::io::Write;

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Shap,
    Taylor,
    Grouped,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Shap => "shap",
            Mode::Taylor => "taylor",
            Mode::Grouped => "grouped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum BaselineRef {
    Index(usize),
    Label(&'static str),
}

impl BaselineRef {
    pub const AVERAGED: BaselineRef = BaselineRef::Label("averaged");
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub instance: usize,
    pub baseline: BaselineRef,
    /// Attribution vector, or a row-major `d x d` matrix in taylor mode.
    pub values: Vec<f64>,
    pub gap: f64,
}

/// Output column labels: one per attribution, and for matrices one per
/// ordered pair `i:j`.
pub fn value_columns(mode: Mode, names: &[String]) -> Vec<String> {
    match mode {
        Mode::Taylor => names
            .iter()
            .flat_map(|a| names.iter().map(move |b| format!("{a}:{b}")))
            .collect(),
        _ => names.to_vec(),
    }
}

fn io(e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("cannot write output: {e}"))
}

pub fn write_records(
    out: &mut dyn Write,
    format: Format,
    mode: Mode,
    names: &[String],
    records: &[Record],
) -> Result<(), CliError> {
    match format {
        Format::Csv => write_csv(out, mode, names, records),
        Format::Jsonl => write_jsonl(out, mode, names, records),
    }
}

fn write_csv(out: &mut dyn Write, mode: Mode, names: &[String], records: &[Record]) -> Result<(), CliError> {
    writeln!(out, "# mode={}", mode.name()).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["instance".to_string(), "baseline".to_string()];
    header.extend(value_columns(mode, names));
    header.push("gap".to_string());
    w.write_record(&header).map_err(io)?;
    for r in records {
        let baseline = match r.baseline {
            BaselineRef::Index(i) => i.to_string(),
            BaselineRef::Label(l) => l.to_string(),
        };
        let mut row = vec![r.instance.to_string(), baseline];
        row.extend(r.values.iter().map(f64::to_string));
        row.push(r.gap.to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Serialize)]
struct Header<'a> {
    mode: Mode,
    columns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<&'a [String]>,
}

#[derive(Serialize)]
struct Line<'a> {
    instance: usize,
    baseline: &'a BaselineRef,
    values: serde_json::Value,
    gap: f64,
}

fn write_jsonl(out: &mut dyn Write, mode: Mode, names: &[String], records: &[Record]) -> Result<(), CliError> {
    let header = Header {
        mode,
        columns: value_columns(mode, names),
        features: (mode == Mode::Taylor).then_some(names),
    };
    writeln!(out, "{}", serde_json::to_string(&header).map_err(io)?).map_err(io)?;
    let d = names.len();
    for r in records {
        let values = if mode == Mode::Taylor {
            serde_json::to_value(r.values.chunks(d.max(1)).collect::<Vec<_>>())
        } else {
            serde_json::to_value(&r.values)
        }
        .map_err(io)?;
        let line = Line {
            instance: r.instance,
            baseline: &r.baseline,
            values,
            gap: r.gap,
        };
        writeln!(out, "{}", serde_json::to_string(&line).map_err(io)?).map_err(io)?;
    }
    Ok(())
}

/// Parsed CSV output, for checks on emitted files.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedOutput {
    pub mode: String,
    pub columns: Vec<String>,
    pub records: Vec<Record>,
}

pub fn parse_csv_output(text: &str) -> Result<ParsedOutput, CliError> {
    let bad = |msg: String| CliError::Input(format!("bad explanation file: {msg}"));
    let (first, rest) = text.split_once('\n').ok_or_else(|| bad("empty".into()))?;
    let mode = first
        .strip_prefix("# mode=")
        .ok_or_else(|| bad("missing mode line".into()))?
        .to_string();
    let mut reader = csv::Reader::from_reader(rest.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 {
        return Err(bad("too few columns".into()));
    }
    let columns = header[2..header.len() - 1].to_vec();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("'{s}' is not a number")));
        let instance = row[0].parse().map_err(|_| bad(format!("bad instance '{}'", &row[0])))?;
        let baseline = match &row[1] {
            "averaged" => BaselineRef::AVERAGED,
            other => BaselineRef::Index(other.parse().map_err(|_| bad(format!("bad baseline '{other}'")))?),
        };
        let values = row
            .iter()
            .skip(2)
            .take(columns.len())
            .map(num)
            .collect::<Result<_, _>>()?;
        let gap = num(&row[row.len() - 1])?;
        records.push(Record {
            instance,
            baseline,
            values,
            gap,
        });
    }
    Ok(ParsedOutput { mode, columns, records })
}
