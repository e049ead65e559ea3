//! Output files are assembled in memory and committed at the end of a run;
//! each is written to a temporary file in the output directory and renamed
//! into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::FileConfig;
use crate::error::{io_err, CliError, Result};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DFRESID_OUTPUT_DIR";

pub fn resolve_output_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("dfresid-out"))
}

#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, String)>,
}

impl OutputSet {
    pub fn add(&mut self, name: impl Into<String>, contents: impl Into<String>) {
        self.files.push((name.into(), contents.into()));
    }

    pub fn add_toml<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = toml::to_string(value).map_err(|e| CliError::Config(e.to_string()))?;
        self.add(name, text);
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file; a file either appears complete or not at all.
    pub fn commit(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        for (name, contents) in &self.files {
            let target = dir.join(name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
            tmp.write_all(contents.as_bytes()).map_err(io_err(tmp.path()))?;
            tmp.as_file().sync_all().map_err(io_err(tmp.path()))?;
            tmp.persist(&target).map_err(|e| CliError::Io {
                path: target.clone(),
                source: e.error,
            })?;
        }
        Ok(())
    }
}

/// Echo of a run: what was asked for and the full effective configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    pub output_dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
    /// Command-line parameters of subcommands that take no config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameters: Option<toml::Table>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<FileConfig>,
}
