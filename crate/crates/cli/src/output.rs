use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use pagkit::evaluation::{render_table, table_file_name, Table, TableFormat};

use crate::CliError;

/// `out/{checkpoints,tables,figures,logs}` plus the provenance every file
/// carries.
pub struct Output {
    pub root: PathBuf,
    pub digest: String,
    pub seed: u64,
    /// Digest prefix under `--deterministic`, otherwise unix seconds.
    pub stamp: String,
}

impl Output {
    pub fn create(root: &Path, digest: String, seed: u64, deterministic: bool) -> Result<Self, CliError> {
        for sub in ["checkpoints", "tables", "figures", "logs"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        }
        let stamp = if deterministic {
            digest[..12].to_string()
        } else {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
            format!("t{secs}")
        };
        Ok(Self {
            root: root.to_path_buf(),
            digest,
            seed,
            stamp,
        })
    }

    pub fn dir(&self, sub: &str) -> PathBuf {
        self.root.join(sub)
    }

    pub fn provenance(&self) -> Vec<(&'static str, String)> {
        vec![("config_digest", self.digest.clone()), ("seed", self.seed.to_string())]
    }

    pub fn provenance_json(&self) -> serde_json::Value {
        serde_json::json!({ "config_digest": self.digest, "seed": self.seed })
    }

    /// Writes `table` as CSV and markdown; returns both paths.
    pub fn write_table(&self, experiment: &str, dataset: &str, table: &Table, extra: &[(&str, String)]) -> Result<Vec<PathBuf>, CliError> {
        let mut prov: Vec<(&str, String)> = self.provenance();
        prov.extend(extra.iter().cloned());
        let mut paths = Vec::new();
        for format in [TableFormat::Csv, TableFormat::Markdown] {
            let path = self.dir("tables").join(table_file_name(experiment, dataset, &self.stamp, format));
            write_text(&path, &render_table(table, format, &prov))?;
            paths.push(path);
        }
        Ok(paths)
    }

    pub fn write_json(&self, path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        write_text(path, &text)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}
