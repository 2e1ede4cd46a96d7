//! Run manifests: every command writes `manifest_<command>.toml` into its
//! output directory with the fully resolved config, the config hash, a build
//! id, and the master seed. Feeding a manifest back through `--config`
//! replays the command bit for bit.

use crate::config::RunConfig;
use gcttt_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// Extra command arguments (eval mode, sweep horizons) in stable text form.
    pub args: String,
    pub config_hash: String,
    pub build_id: String,
    pub master_seed: u64,
    pub config: RunConfig,
}

pub fn build_id() -> String {
    format!(
        "gcttt-{}-{}",
        env!("CARGO_PKG_VERSION"),
        option_env!("GCTTT_BUILD_ID").unwrap_or("dev")
    )
}

pub fn config_hash(config: &RunConfig) -> Result<String> {
    let canonical = toml::to_string(config).map_err(|e| Error::config(e.to_string()))?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_manifest(command: &str, args: &str, config: &RunConfig, out_dir: &Path) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        args: args.to_string(),
        config_hash: config_hash(config)?,
        build_id: build_id(),
        master_seed: config.master_seed,
        config: config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::config(e.to_string()))?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(format!("manifest_{command}.toml")), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_replays_through_config_loader() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::parse("[ttt]\nk = 25\n[backbone]\nalgo = \"gciql_awr\"").unwrap();
        write_manifest("eval", "mode=ttt", &cfg, dir.path()).unwrap();
        let path = dir.path().join("manifest_eval.toml");
        let replayed = RunConfig::load(&path).unwrap();
        assert_eq!(replayed, cfg);
    }

    #[test]
    fn hash_tracks_config_content() {
        let a = RunConfig::parse("[ttt]\nk = 25").unwrap();
        let b = RunConfig::parse("[ttt]\nk = 26").unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
