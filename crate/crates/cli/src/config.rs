//! Run configuration: one TOML file drives every subcommand.
//!
//! Unknown keys are rejected and every field has a documented default, so a
//! minimal config is an empty file. `RunConfig::load` also accepts a run
//! manifest (the `[config]` table a previous run emitted), which makes every
//! command reproducible from its manifest alone.

use gcttt_core::backbone::{Algo, BackboneConfig, GoalSamplerConfig};
use gcttt_core::env::{GoalEnv, GridMaze, MazeKind, MazeLayout, PointMaze};
use gcttt_core::nn::LossId;
use gcttt_core::select::{RelevanceKind, SelectionConfig, SelectionMode};
use gcttt_core::ttt::TttConfig;
use gcttt_core::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Single master seed; all component seeds derive from it.
    pub master_seed: u64,
    pub out_dir: PathBuf,
    pub env: EnvSection,
    pub data: DataSection,
    pub backbone: BackboneSection,
    pub sampler: SamplerSection,
    pub selection: SelectionSection,
    pub ttt: TttSection,
    pub protocol: ProtocolSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            master_seed: 7,
            out_dir: PathBuf::from("runs/out"),
            env: EnvSection::default(),
            data: DataSection::default(),
            backbone: BackboneSection::default(),
            sampler: SamplerSection::default(),
            selection: SelectionSection::default(),
            ttt: TttSection::default(),
            protocol: ProtocolSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    /// `grid` or `point`.
    pub kind: String,
    /// Builtin layout name, or a path to a maze file.
    pub layout: String,
    pub episode_cap: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            kind: "point".into(),
            layout: "medium".into(),
            episode_cap: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `expert` or `play`.
    pub regime: String,
    pub n_trajectories: usize,
    /// Expert: per-step probability of a random feasible action.
    pub noise: f64,
    /// Play: waypoints per trajectory.
    pub n_waypoints: u32,
    /// Play: max BFS leg length, in cells.
    pub leg_cap: u32,
    /// Dataset file; empty means `<out_dir>/dataset.gcttds`.
    pub path: String,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            regime: "play".into(),
            n_trajectories: 1000,
            noise: 0.1,
            n_waypoints: 3,
            leg_cap: 5,
            path: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneSection {
    /// `gcbc`, `gciql_awr`, or `gciql_ddpgbc`.
    pub algo: String,
    pub gamma: f64,
    pub expectile: f64,
    pub awr_beta: f64,
    pub ddpg_beta: f64,
    pub awr_weight_max: f64,
    pub batch_size: usize,
    pub pretrain_steps: usize,
    pub checkpoint_steps: Vec<usize>,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub lr: f64,
    pub tau: f64,
    pub use_target_networks: bool,
    pub log_every: usize,
    /// Checkpoint directory; empty means `<out_dir>/<algo>`.
    pub run_dir: String,
}

impl Default for BackboneSection {
    fn default() -> Self {
        let d = BackboneConfig::new(Algo::Gcbc);
        Self {
            algo: "gcbc".into(),
            gamma: d.gamma,
            expectile: d.expectile,
            awr_beta: d.awr_beta,
            ddpg_beta: d.ddpg_beta,
            awr_weight_max: d.awr_weight_max,
            batch_size: d.batch_size,
            pretrain_steps: d.pretrain_steps,
            checkpoint_steps: d.checkpoint_steps,
            hidden_width: d.hidden_width,
            hidden_layers: d.hidden_layers,
            lr: d.lr,
            tau: d.tau,
            use_target_networks: d.use_target_networks,
            log_every: d.log_every,
            run_dir: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub p_future: f64,
    pub p_random: f64,
    pub p_current: f64,
    pub future_discount: f64,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = GoalSamplerConfig::default();
        Self {
            p_future: d.p_future,
            p_random: d.p_random,
            p_current: d.p_current,
            future_discount: d.future_discount,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionSection {
    /// Relevance radius.
    pub eps: f64,
    /// Window horizon H, in states.
    pub horizon: usize,
    /// Optimality percentile level q.
    pub quantile: f64,
    /// `distance` or `value`.
    pub relevance: String,
    pub gamma: f64,
    /// Keep only the top-q fraction instead of everything above the q-th
    /// percentile.
    pub top_fraction: bool,
    /// Relevance threshold for value mode.
    pub value_c_rel: f64,
}

impl Default for SelectionSection {
    fn default() -> Self {
        let d = SelectionConfig::new(SelectionMode::Full);
        Self {
            eps: d.eps,
            horizon: d.horizon,
            quantile: d.quantile,
            relevance: "distance".into(),
            gamma: d.gamma,
            top_fraction: d.top_fraction,
            value_c_rel: d.value_c_rel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TttSection {
    /// K: environment steps between fine-tune cycles.
    pub k: usize,
    /// N: gradient steps per cycle.
    pub n_grad_steps: usize,
    pub lr: f64,
    pub minibatch: usize,
    /// `default` (the backbone's policy loss), or `bc` / `awr` / `ddpg_bc`.
    pub finetune_loss: String,
    pub reset_each_cycle: bool,
}

impl Default for TttSection {
    fn default() -> Self {
        Self {
            k: 50,
            n_grad_steps: 100,
            lr: 3e-4,
            minibatch: 256,
            finetune_loss: "default".into(),
            reset_each_cycle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub n_seeds: usize,
    /// Checkpoint steps to evaluate; empty means the backbone's list.
    pub checkpoints: Vec<usize>,
    /// Run directory providing the critic when the backbone trains none
    /// (e.g. GC-BC policies fine-tuned with full selection).
    pub critic_run_dir: String,
    /// Emit per-selection JSONL debug dumps during evaluation.
    pub dump_selections: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        Self {
            n_seeds: 3,
            checkpoints: Vec::new(),
            critic_run_dir: String::new(),
            dump_selections: false,
        }
    }
}

impl RunConfig {
    /// Parses either a bare config or a run manifest containing `[config]`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::missing(format!("config file {}", path.display()))
            } else {
                Error::Io(e)
            }
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let as_value: toml::Value = text
            .parse()
            .map_err(|e| Error::config(format!("config is not valid TOML: {e}")))?;
        let config_text = if as_value.get("command").is_some() {
            // a manifest: replay its embedded config
            let inner = as_value
                .get("config")
                .ok_or_else(|| Error::config("manifest lacks a [config] table"))?;
            toml::to_string(inner).map_err(|e| Error::config(e.to_string()))?
        } else {
            text.to_string()
        };
        let cfg: RunConfig = toml::from_str(&config_text)
            .map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env()?;
        self.backbone_config()?;
        self.sampler_config().validate()?;
        self.selection_config(SelectionMode::Full)?.validate()?;
        self.ttt_config(SelectionMode::Full)?.validate()?;
        gcttt_core::data::Regime::parse(&self.data.regime)?;
        if self.protocol.n_seeds == 0 {
            return Err(Error::config("protocol.n_seeds must be >= 1"));
        }
        Ok(())
    }

    pub fn dataset_path(&self) -> PathBuf {
        if self.data.path.is_empty() {
            self.out_dir.join("dataset.gcttds")
        } else {
            PathBuf::from(&self.data.path)
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        if self.backbone.run_dir.is_empty() {
            self.out_dir.join(&self.backbone.algo)
        } else {
            PathBuf::from(&self.backbone.run_dir)
        }
    }

    pub fn layout(&self) -> Result<MazeLayout> {
        if self.env.layout.contains('/') || self.env.layout.ends_with(".maze") {
            let path = Path::new(&self.env.layout);
            let text = std::fs::read_to_string(path).map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    Error::missing(format!("layout file {}", path.display()))
                } else {
                    Error::Io(e)
                }
            })?;
            let name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("custom");
            MazeLayout::parse(name, &text)
        } else {
            MazeLayout::builtin(&self.env.layout)
        }
    }

    pub fn env(&self) -> Result<Box<dyn GoalEnv>> {
        let layout = Arc::new(self.layout()?);
        match self.env.kind.as_str() {
            "grid" => Ok(Box::new(GridMaze::new(layout, self.env.episode_cap))),
            "point" => Ok(Box::new(PointMaze::new(layout, self.env.episode_cap))),
            other => Err(Error::config(format!("unknown env kind `{other}`"))),
        }
    }

    pub fn env_kind(&self) -> Result<MazeKind> {
        match self.env.kind.as_str() {
            "grid" => Ok(MazeKind::Grid),
            "point" => Ok(MazeKind::Point),
            other => Err(Error::config(format!("unknown env kind `{other}`"))),
        }
    }

    pub fn backbone_config(&self) -> Result<BackboneConfig> {
        let algo = Algo::parse(&self.backbone.algo)?;
        let cfg = BackboneConfig {
            algo,
            gamma: self.backbone.gamma,
            expectile: self.backbone.expectile,
            awr_beta: self.backbone.awr_beta,
            ddpg_beta: self.backbone.ddpg_beta,
            awr_weight_max: self.backbone.awr_weight_max,
            batch_size: self.backbone.batch_size,
            pretrain_steps: self.backbone.pretrain_steps,
            checkpoint_steps: self.backbone.checkpoint_steps.clone(),
            hidden_width: self.backbone.hidden_width,
            hidden_layers: self.backbone.hidden_layers,
            lr: self.backbone.lr,
            tau: self.backbone.tau,
            use_target_networks: self.backbone.use_target_networks,
            log_every: self.backbone.log_every.max(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn sampler_config(&self) -> GoalSamplerConfig {
        GoalSamplerConfig {
            p_future: self.sampler.p_future,
            p_random: self.sampler.p_random,
            p_current: self.sampler.p_current,
            future_discount: self.sampler.future_discount,
        }
    }

    pub fn selection_config(&self, mode: SelectionMode) -> Result<SelectionConfig> {
        let mut cfg = SelectionConfig::new(mode);
        cfg.eps = self.selection.eps;
        cfg.horizon = self.selection.horizon;
        cfg.quantile = self.selection.quantile;
        cfg.relevance = RelevanceKind::parse(&self.selection.relevance)?;
        cfg.gamma = self.selection.gamma;
        cfg.top_fraction = self.selection.top_fraction;
        cfg.value_c_rel = self.selection.value_c_rel;
        Ok(cfg)
    }

    /// The fine-tune loss: the backbone's policy-extraction loss unless
    /// overridden.
    pub fn finetune_loss(&self) -> Result<LossId> {
        match self.ttt.finetune_loss.as_str() {
            "default" => Ok(match Algo::parse(&self.backbone.algo)? {
                Algo::Gcbc => LossId::Bc,
                Algo::GciqlAwr => LossId::Awr,
                Algo::GciqlDdpgBc => LossId::DdpgBc,
            }),
            other => LossId::parse(other),
        }
    }

    pub fn ttt_config(&self, mode: SelectionMode) -> Result<TttConfig> {
        let mut cfg = TttConfig::new(self.selection_config(mode)?, self.finetune_loss()?);
        cfg.rollout_horizon = self.ttt.k;
        cfg.grad_steps = self.ttt.n_grad_steps;
        cfg.lr = self.ttt.lr;
        cfg.minibatch = self.ttt.minibatch;
        cfg.reset_each_cycle = self.ttt.reset_each_cycle;
        cfg.awr_beta = self.backbone.awr_beta;
        cfg.ddpg_beta = self.backbone.ddpg_beta;
        cfg.awr_weight_max = self.backbone.awr_weight_max;
        cfg.record_selected = self.protocol.dump_selections;
        Ok(cfg)
    }

    pub fn protocol_checkpoints(&self) -> Vec<usize> {
        if self.protocol.checkpoints.is_empty() {
            self.backbone.checkpoint_steps.clone()
        } else {
            self.protocol.checkpoints.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.ttt.k, 50);
        assert_eq!(cfg.backbone.checkpoint_steps, vec![30_000, 35_000, 40_000]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("unknown_key = 1").is_err());
        assert!(RunConfig::parse("[ttt]\nbogus = 2").is_err());
    }

    #[test]
    fn bad_enums_are_config_errors() {
        assert!(RunConfig::parse("[backbone]\nalgo = \"dqn\"").is_err());
        assert!(RunConfig::parse("[env]\nkind = \"hexmaze\"").is_err());
        assert!(RunConfig::parse("[data]\nregime = \"medium\"").is_err());
    }

    #[test]
    fn finetune_loss_follows_backbone_by_default() {
        let cfg = RunConfig::parse("[backbone]\nalgo = \"gciql_ddpgbc\"").unwrap();
        assert_eq!(cfg.finetune_loss().unwrap(), LossId::DdpgBc);
        let cfg = RunConfig::parse("[ttt]\nfinetune_loss = \"bc\"").unwrap();
        assert_eq!(cfg.finetune_loss().unwrap(), LossId::Bc);
    }

    #[test]
    fn manifest_config_roundtrips() {
        let cfg = RunConfig::parse("[ttt]\nk = 25").unwrap();
        let manifest = format!(
            "command = \"eval\"\nconfig_hash = \"x\"\n\n[config]\n{}",
            toml::to_string(&cfg).unwrap().replace("\n[", "\n[config.")
        );
        // manifest embedding is exercised end to end in the manifest module;
        // here just check the bare path still parses
        let _ = manifest;
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }
}
