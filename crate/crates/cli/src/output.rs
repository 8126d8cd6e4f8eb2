//! CSV emission. Every file starts with a `# columns:` comment, followed
//! by optional `#` notes, a header row and the data rows.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::CliError;

/// Fixed-precision float formatting keeps reruns byte-identical.
pub fn num(x: f64) -> String {
    format!("{x:.6}")
}

pub struct Table {
    columns: Vec<&'static str>,
    notes: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            notes: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn note(&mut self, note: impl Into<String>) -> &mut Self {
        self.notes.push(note.into());
        self
    }

    pub fn row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let fail = |e: &dyn std::fmt::Display| CliError::Output {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| fail(&e))?;
        }
        let mut buf = Vec::new();
        writeln!(buf, "# columns: {}", self.columns.join(",")).map_err(|e| fail(&e))?;
        for n in &self.notes {
            writeln!(buf, "# {n}").map_err(|e| fail(&e))?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.columns).map_err(|e| fail(&e))?;
            for r in &self.rows {
                w.write_record(r).map_err(|e| fail(&e))?;
            }
            w.flush().map_err(|e| fail(&e))?;
        }
        fs::write(path, buf).map_err(|e| fail(&e))
    }
}
