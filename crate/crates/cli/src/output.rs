//! Output directory plumbing: run manifests, JSON and CSV files.

use std::path::{Path, PathBuf};

use serde::Serialize;
use tailext::{Error, Result};

pub const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "+", env!("TAILEXT_GIT_DESCRIBE"));

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    inputs: &'a [(String, String)],
    config: &'a C,
}

pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.to_path_buf() })
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes `manifest.json`: the resolved config, seed, input paths and
    /// tool version.
    pub fn manifest<C: Serialize>(&self, command: &str, seed: u64, inputs: &[(String, String)], config: &C) -> Result<()> {
        let m = RunManifest {
            tool: "tailext",
            version: VERSION,
            command,
            seed,
            inputs,
            config,
        };
        self.json("manifest.json", &m)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        tailext::dataset::write_json(&self.join(name), value)
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<()> {
        let path = self.join(name);
        write_csv(&path, rows)
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let to_err = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    for r in rows {
        w.serialize(r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
