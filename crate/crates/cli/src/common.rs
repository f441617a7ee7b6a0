use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use swingpinn::dataset::{Database, GridSpec};
use swingpinn::power_system::{ReducedSystem, SystemConfig};
use swingpinn::training::LossMode;

use crate::error::{CliError, Result};

pub const SUMMARY: &str = "summary.json";
pub const CONFIG: &str = "config.json";

/// Options shared by every stage that writes under `<out>/<stage>/`.
#[derive(Args, Debug, Clone)]
pub struct StageOpts {
    /// Root of the experiment output tree.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Reuse or overwrite outputs of an earlier run instead of refusing.
    #[arg(long)]
    pub resume: bool,
}

impl Default for StageOpts {
    fn default() -> Self {
        Self {
            out: PathBuf::from("runs"),
            resume: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestGrid {
    /// 31 disturbances by 201 instants.
    #[default]
    Small,
    /// 301 disturbances by 2001 instants.
    Full,
}

impl TestGrid {
    pub fn spec(self) -> GridSpec {
        match self {
            TestGrid::Small => GridSpec::test_reduced(),
            TestGrid::Full => GridSpec::test_full(),
        }
    }
}

/// The system under study and where it came from.
pub struct Context {
    pub system: ReducedSystem,
    pub system_path: Option<PathBuf>,
}

impl Context {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let system = match path {
            Some(p) => ReducedSystem::from_config(SystemConfig::load(p)?)?,
            None => ReducedSystem::kundur_two_area(),
        };
        Ok(Self {
            system,
            system_path: path.map(Path::to_path_buf),
        })
    }

    pub fn system_json(&self) -> Result<serde_json::Value> {
        serde_json::from_str(&self.system.config().canonical_json()).map_err(|e| CliError::cli(e.to_string()))
    }

    pub fn system_hash(&self) -> String {
        sha256_hex(self.system.config().canonical_json().as_bytes())
    }

    pub fn open_database(&self, path: &Path) -> Result<Database> {
        Ok(Database::open(path, &self.system, GridSpec::database_lattice())?)
    }
}

pub fn default_database(out: &Path) -> PathBuf {
    out.join("gen-data").join("database")
}

/// Creates `dir`, refusing one that already holds a finished run unless
/// `resume` is set.
pub fn claim_dir(dir: &Path, resume: bool) -> Result<()> {
    if dir.join(SUMMARY).exists() && !resume {
        return Err(CliError::cli(format!(
            "{} already holds results; pass --resume to reuse it",
            dir.display()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn parse_mode(s: &str) -> std::result::Result<LossMode, String> {
    s.parse().map_err(|e: swingpinn::Error| e.to_string())
}

pub fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("{v} is not a positive number")),
        Err(e) => Err(e.to_string()),
    }
}

pub fn log_written(path: &Path) {
    info!("wrote {}", path.display());
}
