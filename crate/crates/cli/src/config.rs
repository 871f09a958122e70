//! Effective run configuration: defaults, then a config file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use connkit::extraction::ScoreOptions;
use connkit::pose::{DEFAULT_ALPHA, DEFAULT_PA_THRESHOLD};
use connkit::sim::{InitOptions, Scenario};
use connkit::strategy::{StrategyConfig, StrategyKind};
use connkit::vlm::{HttpConfig, ParseMode};
use serde::{Deserialize, Serialize};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub poses: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<PathBuf>,
    /// Recorded model responses to replay.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub responses: Option<PathBuf>,
    /// Where to record model responses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClientKind {
    /// Answers from the dataset's ground truth.
    Oracle,
    /// Serves recorded responses.
    Replay,
    /// Chat-completions endpoint; needs CONNKIT_MODEL_KEY.
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub score: ScoreOptions,
    pub parse_mode: ParseMode,
    pub client: ClientKind,
    pub http: HttpConfig,
    /// Manual pages blanked at random before prompting.
    pub blank_manuals: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            score: ScoreOptions::default(),
            parse_mode: ParseMode::Tolerant,
            client: ClientKind::Oracle,
            http: HttpConfig::default(),
            blank_manuals: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub trials: usize,
    pub strategies: Vec<StrategyKind>,
    pub init: InitOptions,
    pub scenario: Scenario,
    /// Shared by all strategies; `kind` is replaced per strategy.
    pub strategy: StrategyConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            strategies: StrategyKind::ALL.to_vec(),
            init: InitOptions::default(),
            scenario: Scenario::default(),
            strategy: StrategyConfig::new(StrategyKind::RandomSearch),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: u32,
    /// Subcommand the config was written for, e.g. `sim run`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub paths: Paths,
    pub seed: u64,
    pub alpha: f64,
    pub pa_threshold: f64,
    /// Worker threads; 0 uses every core.
    pub parallelism: usize,
    pub extract: ExtractConfig,
    pub sim: SimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_FORMAT_VERSION,
            command: None,
            paths: Paths::default(),
            seed: 0,
            alpha: DEFAULT_ALPHA,
            pa_threshold: DEFAULT_PA_THRESHOLD,
            parallelism: 0,
            extract: ExtractConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        anyhow::ensure!(
            config.format_version == CONFIG_FORMAT_VERSION,
            "config {}: unsupported format_version {}",
            path.display(),
            config.format_version
        );
        Ok(config)
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// `<out>.config.json` next to an output file.
pub fn echo_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".config.json");
    out.with_file_name(name)
}
