use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

/// Record of one command run. Written after every other output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub preset: Option<String>,
    pub data_path: Option<String>,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub runtime_seconds: f64,
    pub outputs: Vec<String>,
    pub library_version: String,
    pub cli_version: String,
    #[serde(skip)]
    clock: Instant,
    #[serde(skip)]
    out_dir: PathBuf,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

impl RunManifest {
    pub fn start(command: &str, out_dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out_dir)?;
        Ok(Self {
            command: command.to_string(),
            config_path: None,
            preset: None,
            data_path: None,
            seed: None,
            started_unix: unix_now(),
            finished_unix: 0.0,
            runtime_seconds: 0.0,
            outputs: Vec::new(),
            library_version: spades::VERSION.to_string(),
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            clock: Instant::now(),
            out_dir: out_dir.to_path_buf(),
        })
    }

    /// Writes `bytes` to `name` inside the output directory and records it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(path.display().to_string());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::new(1, e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.finished_unix = unix_now();
        self.runtime_seconds = self.clock.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self).map_err(|e| CliError::new(1, e.to_string()))?;
        fs::write(self.out_dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
