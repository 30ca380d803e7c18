//! TOML configuration for the pipeline, translator, and CLI.
//!
//! Every section has working defaults, so an empty file (or no file) yields
//! the shipped profile: all three layers enabled, heuristic detector, strict
//! signature checking, mock translator, fail-closed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetectorConfig;
use crate::pipeline::{FailPolicy, Layer, LayerConfig, MockRule, MockTable, RemoteEndpoint, Translator};
use crate::shield::IssConfig;
use crate::signature::{BlocklistCategory, QscConfig, QscProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Serializes a character set as a compact string, one entry per character.
pub mod char_set {
    use std::collections::BTreeSet;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(set: &BTreeSet<char>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&set.iter().collect::<String>())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeSet<char>, D::Error> {
        Ok(String::deserialize(d)?.chars().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayersSection {
    pub enabled: Vec<Layer>,
}

impl Default for LayersSection {
    fn default() -> Self {
        Self {
            enabled: vec![Layer::Iss, Layer::Td, Layer::Qsc],
        }
    }
}

/// Signature layer settings as written in the file: deltas against the
/// default allowlist plus optional per-category blocklist overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QscSection {
    pub profile: Option<QscProfile>,
    /// Characters added to the default allowlist.
    pub allow_chars: String,
    /// Characters removed from the default allowlist.
    pub deny_chars: String,
    /// Categories listed here replace the default keyword set wholesale.
    pub blocklist: BTreeMap<BlocklistCategory, Vec<String>>,
}

impl QscSection {
    pub fn to_config(&self) -> QscConfig {
        let mut cfg = QscConfig::default();
        if let Some(profile) = self.profile {
            cfg.profile = profile;
        }
        cfg.allowed_chars.extend(self.allow_chars.chars());
        for c in self.deny_chars.chars() {
            cfg.allowed_chars.remove(&c);
        }
        for (category, keywords) in &self.blocklist {
            cfg.blocklist
                .insert(*category, keywords.iter().cloned().collect());
        }
        cfg
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranslatorMode {
    #[default]
    Mock,
    Remote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslatorSection {
    pub mode: TranslatorMode,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    /// Mock rules; omitted means the built-in fixture table.
    pub rules: Option<Vec<MockRule>>,
    pub fallback_sql: String,
}

impl Default for TranslatorSection {
    fn default() -> Self {
        Self {
            mode: TranslatorMode::Mock,
            endpoint: None,
            timeout_ms: 5_000,
            rules: None,
            fallback_sql: MockTable::fixture().fallback_sql,
        }
    }
}

impl TranslatorSection {
    pub fn to_translator(&self) -> Result<Translator, ConfigError> {
        match self.mode {
            TranslatorMode::Mock => {
                let rules = match &self.rules {
                    Some(rules) => {
                        for rule in rules {
                            rule.validate()?;
                        }
                        rules.clone()
                    }
                    None => MockTable::fixture().rules,
                };
                Ok(Translator::Mock(MockTable {
                    rules,
                    fallback_sql: self.fallback_sql.clone(),
                }))
            }
            TranslatorMode::Remote => {
                let url = self.endpoint.clone().ok_or_else(|| {
                    ConfigError::Invalid("translator remote mode requires an endpoint".to_string())
                })?;
                if self.timeout_ms == 0 {
                    return Err(ConfigError::Invalid(
                        "translator timeout_ms must be > 0".to_string(),
                    ));
                }
                Ok(Translator::Remote(RemoteEndpoint {
                    url,
                    timeout_ms: self.timeout_ms,
                }))
            }
        }
    }
}

/// The whole configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub layers: LayersSection,
    pub fail_policy: FailPolicy,
    pub iss: IssConfig,
    pub td: DetectorConfig,
    pub qsc: QscSection,
    pub translator: TranslatorSection,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Builds and validates the runtime layer configuration.
    pub fn layer_config(&self) -> Result<LayerConfig, ConfigError> {
        let cfg = LayerConfig {
            enabled: self.layers.enabled.iter().copied().collect(),
            iss: self.iss.clone(),
            td: self.td.clone(),
            qsc: self.qsc.to_config(),
            fail_policy: self.fail_policy,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn translator(&self) -> Result<Translator, ConfigError> {
        self.translator.to_translator()
    }

    /// Canonical serialized form, used for change detection.
    pub fn canonical_string(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
