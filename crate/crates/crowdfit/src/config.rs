//! TOML configuration: the study itself plus server settings.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::Context;
use crowdfit_core::StudyConfig;
use serde::Deserialize;

/// Environment variable holding the admin bearer token.
pub const ADMIN_TOKEN_ENV: &str = "CROWDFIT_ADMIN_TOKEN";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub study: StudyConfig,
    #[serde(default)]
    pub server: ServerSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSettings {
    pub bind: SocketAddr,
    /// Event log; relative paths resolve against the config file.
    pub log: PathBuf,
    /// Snapshot after this many appended events (0 disables snapshots).
    pub snapshot_every: u64,
}

impl Default for ServerSettings {
    fn default() -> Self {
        ServerSettings {
            bind: ([127, 0, 0, 1], 8080).into(),
            log: PathBuf::from("events.jsonl"),
            snapshot_every: 500,
        }
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> anyhow::Result<ConfigFile> {
        let cfg: ConfigFile = toml::from_str(text)?;
        cfg.study.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<ConfigFile> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.server.log.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.server.log = dir.join(&cfg.server.log);
            }
        }
        Ok(cfg)
    }
}
