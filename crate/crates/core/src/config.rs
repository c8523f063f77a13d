//! Layered run configuration: built-in defaults, then a TOML file, then
//! command-line overrides, then `PRONASSESS_*` environment variables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::ScoringScheme;
use crate::llm::{BackendConfig, BackendKind};
use crate::prompt::{Cue, Guideline, PromptConfig};

pub const ENV_PREFIX: &str = "PRONASSESS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    /// LLM scores only.
    Llm,
    /// LLM scores with accuracy refined by IPA match similarity.
    #[default]
    Full,
    /// IPA match similarity as the accuracy score; no LLM.
    IpaMatch,
    /// CMU match similarity as the accuracy score; no LLM.
    CmuMatch,
}

impl ScoringMode {
    pub fn uses_llm(self) -> bool {
        matches!(self, ScoringMode::Llm | ScoringMode::Full)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::Llm => "llm",
            ScoringMode::Full => "full",
            ScoringMode::IpaMatch => "ipa_match",
            ScoringMode::CmuMatch => "cmu_match",
        }
    }
}

impl std::str::FromStr for ScoringMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "llm" => Ok(Self::Llm),
            "full" => Ok(Self::Full),
            "ipa_match" => Ok(Self::IpaMatch),
            "cmu_match" => Ok(Self::CmuMatch),
            other => Err(format!("unknown scoring mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub cues: Vec<Cue>,
    pub guideline: Guideline,
    /// Text of the detailed guideline; required when `guideline = "detailed"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub guideline_file: Option<PathBuf>,
    pub prosody: bool,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            cues: vec![Cue::Transcript, Cue::Ipa, Cue::Cmu],
            guideline: Guideline::Basic,
            guideline_file: None,
            prosody: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub mode: ScoringMode,
    pub workers: usize,
    pub runs_dir: PathBuf,
    /// CMUdict-format file; the bundled dictionary is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    pub label_scale: String,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            mode: ScoringMode::Full,
            workers: 4,
            runs_dir: PathBuf::from("runs"),
            lexicon: None,
            label_scale: "unspecified".into(),
        }
    }
}

/// One row of an ablation sweep. Prompt fields fall back to `[prompt]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationEntry {
    pub name: String,
    pub mode: ScoringMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cues: Option<Vec<Cue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guideline: Option<Guideline>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guideline_file: Option<PathBuf>,
}

impl AblationEntry {
    fn new(name: &str, mode: ScoringMode, cues: Option<&[Cue]>) -> Self {
        Self {
            name: name.into(),
            mode,
            cues: cues.map(<[Cue]>::to_vec),
            guideline: None,
            guideline_file: None,
        }
    }
}

/// The seven cue/scoring configurations compared in the ablation table.
pub fn default_ablation() -> Vec<AblationEntry> {
    use Cue::*;
    vec![
        AblationEntry::new("transcript", ScoringMode::Llm, Some(&[Transcript])),
        AblationEntry::new("transcript+ipa", ScoringMode::Llm, Some(&[Transcript, Ipa])),
        AblationEntry::new("transcript+cmu", ScoringMode::Llm, Some(&[Transcript, Cmu])),
        AblationEntry::new("all", ScoringMode::Llm, Some(&[Transcript, Ipa, Cmu])),
        AblationEntry::new("full", ScoringMode::Full, Some(&[Transcript, Ipa, Cmu])),
        AblationEntry::new("ipa-match", ScoringMode::IpaMatch, None),
        AblationEntry::new("cmu-match", ScoringMode::CmuMatch, None),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub align: ScoringScheme,
    pub backend: BackendConfig,
    pub prompt: PromptSection,
    pub pipeline: PipelineSection,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ablation: Vec<AblationEntry>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("environment variable {var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub backend: Option<BackendKind>,
    pub cues: Option<Vec<Cue>>,
    /// `basic`, `detailed`, or a path to a detailed guideline file.
    pub guideline: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub mode: Option<ScoringMode>,
    pub mock_script: Option<PathBuf>,
    pub workers: Option<usize>,
    pub runs_dir: Option<PathBuf>,
}

pub fn parse_cue_list(s: &str) -> Result<Vec<Cue>, String> {
    s.split([',', '+'])
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(str::parse)
        .collect()
}

fn read_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn rebase(path: &mut Option<PathBuf>, base: &Path) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl Config {
    /// Parses TOML; relative input paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        if let Some(base) = base_dir {
            rebase(&mut config.backend.mock_script, base);
            rebase(&mut config.prompt.guideline_file, base);
            rebase(&mut config.pipeline.lexicon, base);
            for entry in &mut config.ablation {
                rebase(&mut entry.guideline_file, base);
            }
        }
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        Self::from_toml_str(&text, path.parent()).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    /// Applies every layer in order and validates the result.
    pub fn layered(
        file: Option<&Path>,
        overrides: &Overrides,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut config = match file {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        config.apply_overrides(overrides);
        config.apply_env(env)?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        if let Some(kind) = o.backend {
            self.backend.kind = kind;
        }
        if let Some(cues) = &o.cues {
            self.prompt.cues = cues.clone();
        }
        if let Some(g) = &o.guideline {
            self.set_guideline(g);
        }
        if let Some(p) = &o.lexicon {
            self.pipeline.lexicon = Some(p.clone());
        }
        if let Some(m) = o.mode {
            self.pipeline.mode = m;
        }
        if let Some(p) = &o.mock_script {
            self.backend.mock_script = Some(p.clone());
        }
        if let Some(w) = o.workers {
            self.pipeline.workers = w;
        }
        if let Some(d) = &o.runs_dir {
            self.pipeline.runs_dir = d.clone();
        }
    }

    fn set_guideline(&mut self, value: &str) {
        match value.trim().to_ascii_lowercase().as_str() {
            "basic" => {
                self.prompt.guideline = Guideline::Basic;
                self.prompt.guideline_file = None;
            }
            "detailed" => self.prompt.guideline = Guideline::Detailed,
            _ => {
                self.prompt.guideline = Guideline::Detailed;
                self.prompt.guideline_file = Some(PathBuf::from(value));
            }
        }
    }

    /// Reads `PRONASSESS_*` variables; unrelated variables are ignored.
    pub fn apply_env(&mut self, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in env {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let bad = |message: String| ConfigError::Env {
                var: key.clone(),
                message,
            };
            let number = |v: &str| v.trim().parse::<u64>().map_err(|e| bad(e.to_string()));
            match name {
                "BACKEND" => self.backend.kind = value.parse().map_err(bad)?,
                "ENDPOINT_URL" => self.backend.endpoint_url = value,
                "MODEL" => self.backend.model_name = value,
                "API_KEY_ENV" => self.backend.api_key_env_var = value,
                "MAX_ATTEMPTS" => self.backend.max_attempts = number(&value)? as u32,
                "MAX_IN_FLIGHT" => self.backend.max_in_flight = number(&value)? as usize,
                "TIMEOUT_S" => {
                    self.backend.request_timeout_s =
                        value.trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?
                }
                "MOCK_SCRIPT" => self.backend.mock_script = Some(value.into()),
                "CUES" => self.prompt.cues = parse_cue_list(&value).map_err(bad)?,
                "GUIDELINE" => self.set_guideline(&value),
                "MODE" => self.pipeline.mode = value.parse().map_err(bad)?,
                "WORKERS" => self.pipeline.workers = number(&value)? as usize,
                "LEXICON" => self.pipeline.lexicon = Some(value.into()),
                "RUNS_DIR" => self.pipeline.runs_dir = value.into(),
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.align
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.backend.validate().map_err(ConfigError::Invalid)?;
        if self.pipeline.workers == 0 {
            return Err(ConfigError::Invalid("pipeline.workers must be >= 1".into()));
        }
        if self.pipeline.mode.uses_llm() {
            self.prompt_config()?;
        }
        Ok(())
    }

    /// The prompt configuration for the main run, with guideline text loaded.
    pub fn prompt_config(&self) -> Result<PromptConfig, ConfigError> {
        build_prompt_config(
            &self.prompt.cues,
            self.prompt.guideline,
            self.prompt.guideline_file.as_deref(),
            self.prompt.prosody,
        )
    }

    /// Ablation rows from the `[[ablation]]` tables, or the default seven.
    pub fn ablation_configs(&self) -> Result<Vec<AblationConfig>, ConfigError> {
        let entries = if self.ablation.is_empty() {
            default_ablation()
        } else {
            self.ablation.clone()
        };
        entries
            .into_iter()
            .map(|e| {
                let prompt = if e.mode.uses_llm() {
                    let cues = e.cues.as_deref().unwrap_or(&self.prompt.cues);
                    let guideline = e.guideline.unwrap_or(self.prompt.guideline);
                    let file = e.guideline_file.as_deref().or(self.prompt.guideline_file.as_deref());
                    Some(build_prompt_config(cues, guideline, file, self.prompt.prosody)?)
                } else {
                    None
                };
                Ok(AblationConfig {
                    name: e.name,
                    mode: e.mode,
                    prompt,
                })
            })
            .collect()
    }
}

fn build_prompt_config(
    cues: &[Cue],
    guideline: Guideline,
    file: Option<&Path>,
    prosody: bool,
) -> Result<PromptConfig, ConfigError> {
    let mut config = PromptConfig::new(cues.iter().copied());
    if guideline == Guideline::Detailed {
        let path = file.ok_or_else(|| {
            ConfigError::Invalid("the detailed guideline needs prompt.guideline_file".into())
        })?;
        config = config.detailed(read_text(path)?);
    }
    if prosody {
        config = config.with_prosody();
    }
    config
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub name: String,
    pub mode: ScoringMode,
    /// Present for LLM modes only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt: Option<PromptConfig>,
}
