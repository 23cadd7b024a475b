//! Output directory handling. Every JSON file is wrapped in an envelope with
//! the schema version; CSV files are listed in `manifest.json`, which carries
//! the version for them.

use crate::preset::SCHEMA_VERSION;
use crate::CliError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const OUT_DIR_ENV: &str = "HDMBQC_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "hdmbqc-out";

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    preset: &'a str,
    seed: u64,
    data: T,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub preset: String,
    pub seed: u64,
    /// File name to content kind.
    pub files: BTreeMap<String, String>,
}

pub struct OutputDir {
    path: PathBuf,
    preset: String,
    seed: u64,
}

impl OutputDir {
    /// `<root>/<preset name>`, created if missing.
    pub fn create(root: &Path, preset: &str, seed: u64) -> Result<Self, CliError> {
        let path = root.join(preset);
        std::fs::create_dir_all(&path)?;
        Ok(Self {
            path,
            preset: preset.into(),
            seed,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, kind: &str, data: T) -> Result<(), CliError> {
        let env = Envelope {
            schema_version: SCHEMA_VERSION,
            kind,
            preset: &self.preset,
            seed: self.seed,
            data,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        std::fs::write(self.file(name), text)?;
        self.record(name, kind)
    }

    pub fn write_csv<T: Serialize>(&self, name: &str, kind: &str, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(self.file(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.record(name, kind)
    }

    /// Writes raw bytes produced elsewhere.
    pub fn write_bytes(&self, name: &str, kind: &str, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(self.file(name), bytes)?;
        self.record(name, kind)
    }

    /// Adds a file written by another routine to the manifest.
    pub fn record(&self, name: &str, kind: &str) -> Result<(), CliError> {
        let mpath = self.file("manifest.json");
        let mut m: Manifest = match std::fs::read_to_string(&mpath) {
            Ok(t) => serde_json::from_str(&t).unwrap_or_default(),
            Err(_) => Manifest::default(),
        };
        if m.preset != self.preset || m.seed != self.seed {
            m.files.clear();
        }
        m.schema_version = SCHEMA_VERSION;
        m.preset = self.preset.clone();
        m.seed = self.seed;
        m.files.insert(name.into(), kind.into());
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        std::fs::write(mpath, text)?;
        Ok(())
    }
}

/// `--out-dir`, then the environment, then the default.
pub fn resolve_root(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}
