use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;

/// Record of one invocation: full configuration, seeds, outputs and timing.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    command: String,
    tool_version: String,
    config: serde_json::Value,
    seeds: serde_json::Map<String, serde_json::Value>,
    artifacts: Vec<String>,
    started_unix_seconds: u64,
    wall_seconds: f64,
    #[serde(skip)]
    clock: Option<Instant>,
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seeds: Vec<(&str, u64)>) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(config).expect("serializable flags"),
            seeds: seeds.into_iter().map(|(k, v)| (k.to_string(), v.into())).collect(),
            artifacts: Vec::new(),
            started_unix_seconds: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            wall_seconds: 0.0,
            clock: Some(Instant::now()),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value.into());
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn finish(mut self, path: &Path) -> anyhow::Result<()> {
        self.wall_seconds = self.clock.take().map(|c| c.elapsed().as_secs_f64()).unwrap_or(0.0);
        let text = serde_json::to_string_pretty(&self)?;
        write_file(path, text.as_bytes())
    }
}

/// `<path>.manifest.json`.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_file(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}
