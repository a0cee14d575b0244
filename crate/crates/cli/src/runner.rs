//! Run-directory bookkeeping: artifact checksums and the JSON manifest.

use lidlab_core::config::ExperimentConfig;
use lidlab_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Serialize)]
struct ArtifactRecord {
    name: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    seed: u64,
    threads: usize,
    artifacts: &'a [ArtifactRecord],
    wall_clock_seconds: f64,
}

/// Process exit code for a failed run: 2 for anything wrong with the
/// requested configuration or its files, 3 for a numerical failure inside
/// an otherwise valid experiment.
pub fn exit_code_for(e: &Error) -> u8 {
    if e.is_config() || matches!(e, Error::Io(_)) {
        2
    } else {
        3
    }
}

/// One run directory: collects artifact records as files are written and
/// emits `manifest.json` at the end.
pub struct RunContext {
    dir: PathBuf,
    command: &'static str,
    config_hash: String,
    config_echo: String,
    seed: u64,
    threads: usize,
    artifacts: Vec<ArtifactRecord>,
    started: Instant,
}

impl RunContext {
    pub fn new(
        dir: PathBuf,
        command: &'static str,
        cfg: &ExperimentConfig,
        threads: usize,
    ) -> Self {
        Self {
            dir,
            command,
            config_hash: cfg.hash(),
            config_echo: cfg.to_toml_string(),
            seed: cfg.seed,
            threads,
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Echo the effective config (after flag overrides) next to the data.
    pub fn write_config_echo(&mut self) -> Result<(), Error> {
        std::fs::write(self.path("config.toml"), &self.config_echo)?;
        self.record("config.toml")
    }

    /// Checksum a file just written into the run directory.
    pub fn record(&mut self, name: &str) -> Result<(), Error> {
        let bytes = std::fs::read(self.path(name))?;
        let digest = Sha256::digest(&bytes);
        self.artifacts.push(ArtifactRecord {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Numerical(format!("serializing {name}: {e}")))?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        self.record(name)
    }

    /// Write the manifest and print where everything went.
    pub fn finish(self) -> Result<(), Error> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            threads: self.threads,
            artifacts: &self.artifacts,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| Error::Numerical(format!("serializing manifest: {e}")))?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;

        for a in &self.artifacts {
            println!("wrote {}", self.dir.join(&a.name).display());
        }
        println!("run {} -> {}", &self.config_hash[..12], self.dir.display());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_shaped_errors_exit_with_two_and_numerics_with_three() {
        assert_eq!(exit_code_for(&Error::Config("bad".into())), 2);
        assert_eq!(exit_code_for(&Error::Dimension("1 vs 2".into())), 2);
        assert_eq!(
            exit_code_for(&Error::Schema {
                row: 1,
                column: "mean".into(),
                message: "not a number".into()
            }),
            2
        );
        assert_eq!(
            exit_code_for(&Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "gone"))),
            2
        );
        assert_eq!(exit_code_for(&Error::SingularSystem("rank".into())), 3);
        assert_eq!(exit_code_for(&Error::Domain("log of zero".into())), 3);
        assert_eq!(exit_code_for(&Error::Numerical("diverged".into())), 3);
    }
}
