//! Output emission: JSON records and CSV tables, rendered to stdout or
//! written atomically to files, with seed and RNG provenance attached.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Output syntax, selectable with --format. Without the flag a record
/// prints as JSON and a table as CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

/// One result ready for emission.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// A structured record; fields keep insertion order.
    Record(Value),
    /// A numeric series with named columns.
    Table {
        columns: Vec<String>,
        rows: Vec<Vec<f64>>,
    },
}

/// Provenance block recorded with every stochastic output.
pub fn rng_block(master_seed: u64, streams: &str) -> Value {
    rng_block_with(master_seed, streams, "step-major, agent-minor")
}

/// As [`rng_block`] with an explicit draw-order description, for models
/// that do not draw one gaussian per agent per step.
pub fn rng_block_with(master_seed: u64, streams: &str, draw_order: &str) -> Value {
    serde_json::json!({
        "algorithm": "chacha8",
        "master_seed": master_seed,
        "streams": streams,
        "draw_order": draw_order,
    })
}

impl Payload {
    fn render(&self, format: Format) -> CliResult<String> {
        match (self, format) {
            (Payload::Record(v), Format::Json) => {
                let mut s = serde_json::to_string_pretty(v)
                    .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
                s.push('\n');
                Ok(s)
            }
            (Payload::Record(v), Format::Csv) => record_to_csv(v),
            (Payload::Table { columns, rows }, Format::Csv) => Ok(table_to_csv(columns, rows)),
            (Payload::Table { columns, rows }, Format::Json) => {
                let v = serde_json::json!({"columns": columns, "rows": rows});
                let mut s = serde_json::to_string_pretty(&v)
                    .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
                s.push('\n');
                Ok(s)
            }
        }
    }

    fn natural_format(&self) -> Format {
        match self {
            Payload::Record(_) => Format::Json,
            Payload::Table { .. } => Format::Csv,
        }
    }
}

/// A rendered result bound for stdout (no path) or a file, with an
/// optional metadata sidecar for file-bound tables.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub path: Option<PathBuf>,
    pub payload: Payload,
    /// Seed and RNG provenance for outputs whose syntax cannot embed it.
    /// Written as `<path>.meta.json` next to a file-bound table; printed
    /// as one line on stderr for a stdout-bound table.
    pub meta: Option<Value>,
}

impl Artifact {
    pub fn to_stdout(payload: Payload) -> Self {
        Artifact {
            path: None,
            payload,
            meta: None,
        }
    }

    pub fn emit(&self, format: Option<Format>) -> CliResult<()> {
        let format = format.unwrap_or_else(|| self.payload.natural_format());
        let body = self.payload.render(format)?;
        match &self.path {
            None => {
                let mut stdout = std::io::stdout().lock();
                match stdout.write_all(body.as_bytes()).and_then(|_| stdout.flush()) {
                    Ok(()) => {}
                    // The reader closed the pipe; there is nobody left
                    // to deliver to, which is not a failure.
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => return Ok(()),
                    Err(e) => return Err(e.into()),
                }
                if let Some(meta) = &self.meta {
                    if format == Format::Csv {
                        eprintln!("{}", serde_json::json!({ "meta": meta }));
                    }
                }
            }
            Some(path) => {
                atomic_write(path, body.as_bytes())?;
                if let Some(meta) = &self.meta {
                    if format == Format::Csv {
                        let mut sidecar = path.as_os_str().to_owned();
                        sidecar.push(".meta.json");
                        let text = serde_json::to_string_pretty(meta)
                            .map_err(|e| CliError::Numeric(format!("serialization failed: {e}")))?;
                        atomic_write(Path::new(&sidecar), format!("{text}\n").as_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Joins a relative output path onto the --out-dir root; absolute paths
/// pass through untouched.
pub fn resolve_out(out_dir: &Path, out: Option<PathBuf>) -> Option<PathBuf> {
    out.map(|p| if p.is_absolute() { p } else { out_dir.join(p) })
}

/// Writes via a temp file in the target directory plus rename, so a
/// crash never leaves a partial file at the destination.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::Io(format!("cannot move output into {}: {e}", path.display()))
    })
}

/// Shortest decimal that round-trips the exact f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn table_to_csv(columns: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&columns.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        let line = row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Flattens a record into one CSV header row and one value row, nested
/// objects joined with '.', arrays with numeric indices.
fn record_to_csv(v: &Value) -> CliResult<String> {
    let mut fields: Vec<(String, String)> = Vec::new();
    flatten_value("", v, &mut fields)?;
    let header = fields
        .iter()
        .map(|(k, _)| csv_field(k))
        .collect::<Vec<_>>()
        .join(",");
    let row = fields
        .iter()
        .map(|(_, val)| csv_field(val))
        .collect::<Vec<_>>()
        .join(",");
    Ok(format!("{header}\n{row}\n"))
}

fn flatten_value(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) -> CliResult<()> {
    let key = |name: &str| {
        if prefix.is_empty() {
            name.to_string()
        } else {
            format!("{prefix}.{name}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, inner) in map {
                flatten_value(&key(k), inner, out)?;
            }
        }
        Value::Array(items) => {
            for (i, inner) in items.iter().enumerate() {
                flatten_value(&key(&i.to_string()), inner, out)?;
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Number(n) => out.push((prefix.to_string(), n.to_string())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
    }
    Ok(())
}
