//! Plain-file artifacts: CSV tables with a manifest comment line, JSON indices.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

/// Collects the files of one output directory so the manifest can list them.
#[derive(Debug)]
pub struct ArtifactWriter {
    pub dir: PathBuf,
    /// Stamped into every CSV header line.
    pub config_hash: String,
    pub files: Vec<FileEntry>,
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

impl ArtifactWriter {
    pub fn new(dir: &Path, config_hash: &str) -> Result<Self, CliError> {
        create_dir(dir)?;
        Ok(Self { dir: dir.to_path_buf(), config_hash: config_hash.to_string(), files: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            create_dir(parent)?;
        }
        write_bytes(&path, bytes)?;
        self.files.push(FileEntry { name: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let bytes = csv_bytes(rows, &format!("# manifest={MANIFEST} config={}", self.config_hash))
            .map_err(|e| CliError::io(&self.path(name), e))?;
        self.bytes(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::io(&self.path(name), e))?;
        bytes.push(b'\n');
        self.bytes(name, &bytes)
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.bytes(name, text.as_bytes())
    }

    /// Writes the manifest last; it is not listed in itself.
    pub fn finish<M: Serialize>(self, manifest: &M) -> Result<(), CliError> {
        let path = self.path(MANIFEST);
        let mut bytes = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::io(&path, e))?;
        bytes.push(b'\n');
        write_bytes(&path, &bytes)
    }
}

fn csv_bytes<T: Serialize>(rows: &[T], comment: &str) -> Result<Vec<u8>, csv::Error> {
    let mut out = format!("{comment}\n").into_bytes();
    let mut w = csv::Writer::from_writer(&mut out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    drop(w);
    Ok(out)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Names among `required` that do not exist under `dir`.
pub fn missing(dir: &Path, required: &[&str]) -> Vec<String> {
    required.iter().filter(|n| !dir.join(n).is_file()).map(|n| n.to_string()).collect()
}

pub fn require(dir: &Path, what: &str, required: &[&str], hint: &str) -> Result<(), CliError> {
    let m = missing(dir, required);
    if m.is_empty() {
        return Ok(());
    }
    Err(CliError::input(format!("missing {what} in {}: {}{hint}", dir.display(), m.join(", "))))
}

pub fn tool_version() -> String {
    format!("isal {}", env!("CARGO_PKG_VERSION"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct Row {
        a: f64,
        b: Option<bool>,
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let rows =
            vec![Row { a: 0.1 + 0.2, b: None }, Row { a: f64::NAN, b: Some(true) }, Row { a: 1e-300, b: Some(false) }];
        let mut w = ArtifactWriter::new(dir.path(), "abc").unwrap();
        w.csv("t.csv", &rows).unwrap();
        let back: Vec<Row> = read_csv(&dir.path().join("t.csv")).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].a.is_nan() && back[1].b == Some(true));
        assert_eq!(back[2], rows[2]);
        let text = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert!(text.starts_with("# manifest=manifest.json config=abc\n"));
    }
}
