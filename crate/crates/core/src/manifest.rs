//! Run manifests and output writers. Every output carries the manifest
//! hash: JSON files in a `manifest_hash` field, CSV files in a leading
//! `# manifest_hash=` comment line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything that determines the primary outputs of a command.
#[derive(Debug, Clone, Serialize)]
struct HashInput<'a> {
    tool_version: &'a str,
    command: &'a str,
    config: &'a RunConfig,
    options: &'a BTreeMap<String, String>,
    inputs: &'a BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_hash: String,
    pub tool_version: String,
    pub command: String,
    pub config_paths: Vec<String>,
    /// Command options not carried by the config.
    pub options: BTreeMap<String, String>,
    /// sha256 of every input file other than the config, keyed by role.
    pub inputs: BTreeMap<String, String>,
    pub resolved_config: RunConfig,
    pub deterministic: bool,
    pub determinism_note: String,
    pub started_unix_s: f64,
    pub wall_clock_s: f64,
    pub outputs: Vec<OutputRecord>,
}

/// Collects outputs for one command invocation.
pub struct Run {
    pub manifest: RunManifest,
    out_dir: PathBuf,
    started: Instant,
}

impl Run {
    pub fn start(
        command: &str,
        config_paths: &[PathBuf],
        config: &RunConfig,
        options: BTreeMap<String, String>,
        inputs: BTreeMap<String, String>,
        out_dir: &Path,
    ) -> Result<Self> {
        let hash_input = HashInput {
            tool_version: TOOL_VERSION,
            command,
            config,
            options: &options,
            inputs: &inputs,
        };
        let manifest_hash = sha256_hex(&serde_json::to_vec(&hash_input)?);
        std::fs::create_dir_all(out_dir)?;
        let started_unix_s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs_f64())
            .unwrap_or(0.0);
        Ok(Run {
            manifest: RunManifest {
                manifest_hash,
                tool_version: TOOL_VERSION.into(),
                command: command.into(),
                config_paths: config_paths.iter().map(|p| p.display().to_string()).collect(),
                options,
                inputs,
                resolved_config: config.clone(),
                deterministic: true,
                determinism_note: "no random numbers are drawn; parallel work is reduced in a fixed order, \
                                   so outputs do not depend on the thread count"
                    .into(),
                started_unix_s,
                wall_clock_s: 0.0,
                outputs: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
            started: Instant::now(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.manifest.manifest_hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, bytes)?;
        self.manifest.outputs.push(OutputRecord {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Pretty JSON object with a `manifest_hash` field; non-object values
    /// go under `data`.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let body = serde_json::to_value(value)?;
        let mut object = serde_json::Map::new();
        object.insert("manifest_hash".into(), self.hash().into());
        match body {
            serde_json::Value::Object(fields) => {
                for (k, v) in fields {
                    if k != "manifest_hash" {
                        object.insert(k, v);
                    }
                }
            }
            other => {
                object.insert("data".into(), other);
            }
        }
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(object))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_csv(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let text = format!("# manifest_hash={}\n{body}", self.hash());
        self.write_bytes(name, text.as_bytes())
    }

    /// Writes `resolved_config.toml` and `manifest.json`.
    pub fn finish(mut self) -> Result<RunManifest> {
        let toml = self.manifest.resolved_config.to_toml();
        self.write_bytes("resolved_config.toml", toml.as_bytes())?;
        self.manifest.wall_clock_s = self.started.elapsed().as_secs_f64();
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        std::fs::write(self.path("manifest.json"), text)?;
        Ok(self.manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> RunConfig {
        RunConfig::parse(
            "[chain]\nn_ions = 2\naxial_freq_hz = 1e6\nradial_freq_hz = 3e6\nwavevector_radial = 8.6e6\nilluminated_pair = [0, 1]\n",
            false,
        )
        .unwrap()
    }

    #[test]
    fn hash_ignores_paths_and_time() {
        let dir = tempfile::tempdir().unwrap();
        let a = Run::start("modes", &[PathBuf::from("a.toml")], &config(), BTreeMap::new(), BTreeMap::new(), dir.path())
            .unwrap();
        let b = Run::start("modes", &[PathBuf::from("b.toml")], &config(), BTreeMap::new(), BTreeMap::new(), dir.path())
            .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = Run::start("design", &[], &config(), BTreeMap::new(), BTreeMap::new(), dir.path()).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn outputs_reference_hash() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = Run::start("modes", &[], &config(), BTreeMap::new(), BTreeMap::new(), dir.path()).unwrap();
        let hash = run.hash().to_string();
        let json = run.write_json("x.json", &serde_json::json!({"a": 1})).unwrap();
        let csv = run.write_csv("x.csv", "a,b\n1,2\n").unwrap();
        let manifest = run.finish().unwrap();
        assert!(std::fs::read_to_string(json).unwrap().contains(&hash));
        assert!(std::fs::read_to_string(csv).unwrap().starts_with(&format!("# manifest_hash={hash}")));
        assert_eq!(manifest.outputs.len(), 3);
        let resolved = RunConfig::load(&dir.path().join("resolved_config.toml")).unwrap();
        assert_eq!(resolved, config());
    }
}
