use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::failure::{io_failure, usage, CliResult};

/// Relative output paths are resolved against this directory when set.
pub const OUTPUT_ROOT_VAR: &str = "ARGFILL_OUTPUT_ROOT";

pub fn resolve(out: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if out.is_relative() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

/// An output directory that refuses to clobber existing files without `force`.
pub struct OutputDir {
    pub path: PathBuf,
    force: bool,
}

impl OutputDir {
    pub fn create(path: PathBuf, force: bool) -> CliResult<Self> {
        if path.exists() && !path.is_dir() {
            return usage(format!("{} exists and is not a directory", path.display()));
        }
        std::fs::create_dir_all(&path).map_err(|e| io_failure(&path, e))?;
        Ok(Self { path, force })
    }

    /// Path of `name` inside the directory, checked for overwrite.
    pub fn file(&self, name: &str) -> CliResult<PathBuf> {
        let p = self.path.join(name);
        if p.exists() && !self.force {
            return usage(format!("{} already exists; pass --force to overwrite", p.display()));
        }
        Ok(p)
    }

    pub fn subdir(&self, name: &str) -> CliResult<OutputDir> {
        OutputDir::create(self.path.join(name), self.force)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.file(name)?;
        std::fs::write(&p, contents).map_err(|e| io_failure(&p, e))?;
        Ok(p)
    }

    pub fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("value serializes");
        text.push('\n');
        self.write(name, text)
    }
}
