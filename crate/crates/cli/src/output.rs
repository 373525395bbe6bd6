//! Output files: CSV/JSON writers that keep a content hash of everything
//! written, for the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use nitrosep_core::numfmt::sig12;
use nitrosep_core::Matrix;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputRecord {
    pub file: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::runtime("output", format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, stage: &str, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::runtime(stage, format!("{}: {e}", path.display())))?;
        self.written.retain(|r| r.file != name);
        self.written.push(OutputRecord {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, stage: &str, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::runtime(stage, e))?;
        bytes.push(b'\n');
        self.write(stage, name, &bytes)
    }

    pub fn records(&self) -> &[OutputRecord] {
        &self.written
    }
}

/// A JSON number rounded to 12 significant digits; `null` when not finite.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = sig12(x).parse().expect("sig12 output parses");
    serde_json::Number::from_f64(rounded).map(Value::Number).unwrap_or(Value::Null)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| num(*x)).collect())
}

pub fn matrix_json(m: &Matrix) -> Value {
    Value::Array((0..m.rows()).map(|i| nums(m.row(i))).collect())
}

/// Builds a CSV in memory from a header and rows of fields.
pub struct CsvTable {
    writer: csv::Writer<Vec<u8>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer
            .write_record(header.iter().map(|h| h.as_ref()))
            .expect("in-memory write");
        Self { writer }
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) {
        self.writer
            .write_record(fields.iter().map(|f| f.as_ref()))
            .expect("in-memory write");
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.writer.into_inner().expect("in-memory flush")
    }
}

/// `corner,col…` header, one labelled row per matrix row.
pub fn labelled_matrix_csv(corner: &str, rows: &[String], cols: &[String], m: &Matrix) -> Vec<u8> {
    let mut header = vec![corner.to_string()];
    header.extend(cols.iter().cloned());
    let mut t = CsvTable::new(&header);
    for (i, label) in rows.iter().enumerate() {
        let mut fields = vec![label.clone()];
        fields.extend(m.row(i).iter().map(|v| sig12(*v)));
        t.row(&fields);
    }
    t.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_numbers_are_rounded() {
        assert_eq!(num(0.1 + 0.2).to_string(), "0.3");
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(num(-2.5e-7).as_f64(), Some(-2.5e-7));
    }

    #[test]
    fn matrix_csv_layout() {
        let m = Matrix::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let labels = vec!["a".to_string(), "b,c".to_string()];
        let text = String::from_utf8(labelled_matrix_csv("variable", &labels, &labels, &m)).unwrap();
        assert_eq!(text, "variable,a,\"b,c\"\na,1,0.5\n\"b,c\",0.5,1\n");
    }

    #[test]
    fn records_track_rewrites() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("t", "a.txt", b"one").unwrap();
        out.write("t", "a.txt", b"two").unwrap();
        assert_eq!(out.records().len(), 1);
        assert_eq!(out.records()[0].sha256, sha256_hex(b"two"));
        assert_eq!(fs::read(dir.path().join("a.txt")).unwrap(), b"two");
    }
}
