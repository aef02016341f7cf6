use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use llt_core::{Error, Result};

pub const BUILD_ID: &str = env!("LLT_BUILD_ID");

/// Everything needed to re-run a command: the fully resolved configuration
/// plus provenance. Outputs are a pure function of `config`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub build_id: String,
    pub started_unix_seconds: f64,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn new<C: Serialize>(subcommand: &str, config: &C, seed: u64) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| Error::Config(format!("cannot encode config: {e}")))?;
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Ok(RunManifest {
            subcommand: subcommand.to_string(),
            config,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            build_id: BUILD_ID.to_string(),
            started_unix_seconds: started,
            wall_seconds: 0.0,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest {}: {e}", path.display())))
    }

    pub fn write(&mut self, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = dir.join(name);
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        self.wall_seconds = (now - self.started_unix_seconds).max(0.0);
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn config<C: for<'de> Deserialize<'de>>(&self) -> Result<C> {
        serde_json::from_value(self.config.clone())
            .map_err(|e| Error::Config(format!("manifest config for `{}`: {e}", self.subcommand)))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(format!("cannot encode JSON: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Decimal scientific notation with 17 significant digits, which round-trips
/// every `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, f64::MAX, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
    }
}
