//! Run directories named by config hash, with atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stablesde::hashing::config_hash;

use crate::config::RunConfig;
use crate::CliError;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "STABLESDE_OUT";
pub const DEFAULT_ROOT: &str = "runs";
pub const MANIFEST: &str = "manifest.json";

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    tool_version: &'a str,
    command: &'a str,
    config_hash: &'a str,
    config: &'a RunConfig,
    outputs: &'a [String],
    exit_status: i32,
}

/// Files of a run, staged in a temporary directory and moved into
/// `<root>/<command>-<hash>` on completion. An existing directory is never
/// touched; a numbered sibling is used instead.
pub struct RunDir {
    root: PathBuf,
    staging: PathBuf,
    name: String,
    hash: String,
    outputs: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path, command: &str, cfg: &RunConfig) -> Result<Self, CliError> {
        let hash = config_hash(cfg);
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        let name = format!("{command}-{}", &hash[..16]);
        let staging = root.join(format!(".{name}.tmp-{}", std::process::id()));
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
        }
        fs::create_dir(&staging).map_err(|e| io_err(&staging, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            staging,
            name,
            hash,
            outputs: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Writes `name` through a temporary file and a rename.
    pub fn write_with(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let tmp = self.staging.join(format!(".{name}.part"));
        let path = self.staging.join(name);
        {
            let file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
            let mut w = std::io::BufWriter::new(file);
            f(&mut w).map_err(|e| io_err(&tmp, e))?;
            w.flush().map_err(|e| io_err(&tmp, e))?;
        }
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)
        })
    }

    /// Writes the manifest and moves the run into place; returns its path.
    pub fn finish(mut self, command: &str, cfg: &RunConfig, exit_status: i32) -> Result<PathBuf, CliError> {
        let hash = self.hash.clone();
        let mut outputs = self.outputs.clone();
        outputs.sort();
        let manifest = Manifest {
            schema_version: 1,
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            config_hash: &hash,
            config: cfg,
            outputs: &outputs,
            exit_status,
        };
        self.write_json(MANIFEST, &manifest)?;
        let mut target = self.root.join(&self.name);
        let mut k = 1;
        while target.exists() {
            target = self.root.join(format!("{}.{k}", self.name));
            k += 1;
        }
        fs::rename(&self.staging, &target).map_err(|e| io_err(&target, e))?;
        self.staging = PathBuf::new();
        Ok(target)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.staging.as_os_str().is_empty() {
            let _ = fs::remove_dir_all(&self.staging);
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
