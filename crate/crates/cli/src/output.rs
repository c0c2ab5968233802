use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Output directory of one scenario. Every CSV starts with a metadata
/// comment line carrying the scenario name and hash.
pub struct OutputDir {
    root: PathBuf,
    name: String,
    hash: String,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path, name: &str, hash: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            name: name.to_string(),
            hash: hash.to_string(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Writes `rows` under `header`; `extra` is appended to the metadata
    /// line (e.g. the time of a snapshot).
    pub fn csv<R>(&mut self, file: &str, extra: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<f64>>,
    {
        let path = self.root.join(file);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        writeln!(f, "# scenario={} hash={}{extra}", self.name, self.hash)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        self.written.push(file.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let path = self.root.join(file);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(file.to_string());
        Ok(())
    }
}
