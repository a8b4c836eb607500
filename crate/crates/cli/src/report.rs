use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use bmech_core::Error;
use nalgebra::DMatrix;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

pub type Outcome<T> = Result<T, Failure>;

pub fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

pub fn matrix(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>())
}

/// Where a run writes its report and CSV dumps.
pub struct Sink {
    out: Option<PathBuf>,
    envelope: Value,
    artifacts: Vec<String>,
}

impl Sink {
    pub fn new(out: Option<PathBuf>, command: &str, spec_hash: Option<String>, config: Value) -> Self {
        let envelope = json!({
            "tool": "bmech",
            "tool_version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "spec_hash": spec_hash,
            "config_echo": config,
        });
        Sink { out, envelope, artifacts: vec![] }
    }

    /// Writes `rows` as CSV next to the report, as `<stem>.<name>.csv`.
    /// Skipped when the report goes to stdout.
    pub fn csv(&mut self, name: &str, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Outcome<()> {
        let Some(out) = &self.out else {
            log::info!("no --out given, skipping {name}.csv");
            return Ok(());
        };
        let path = sibling(out, name);
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        self.artifacts.push(path.file_name().unwrap().to_string_lossy().into_owned());
        Ok(())
    }

    pub fn finish(mut self, body: Result<Value, &Error>) -> Outcome<()> {
        let obj = self.envelope.as_object_mut().unwrap();
        match body {
            Ok(v) => {
                obj.insert("status".into(), json!("ok"));
                obj.insert("result".into(), v);
            }
            Err(e) => {
                obj.insert("status".into(), json!("error"));
                obj.insert("error".into(), json!({ "kind": e.kind(), "message": e.to_string() }));
            }
        }
        obj.insert("artifacts".into(), json!(self.artifacts));
        let mut text = serde_json::to_string_pretty(&self.envelope).expect("report serializes");
        text.push('\n');
        match &self.out {
            Some(p) => fs::write(p, text).map_err(|e| usage(format!("{}: {e}", p.display())))?,
            None => {
                // A closed pipe (`| head`) is not an error of the run.
                if let Err(e) = std::io::stdout().lock().write_all(text.as_bytes()) {
                    if e.kind() != std::io::ErrorKind::BrokenPipe {
                        return Err(usage(format!("stdout: {e}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn sibling(out: &Path, name: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.{name}.csv"))
}
