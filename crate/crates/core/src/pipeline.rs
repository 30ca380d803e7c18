//! End-to-end request flow: shield, detector, translator, signature control.
//!
//! Stages run in a fixed order and short-circuit: a rejection at one stage
//! leaves every later stage untouched. Layer membership is configurable; the
//! combined detection decision is the logical OR of the enabled layers.
//! Remote detector failures are resolved by the fail policy (closed rejects,
//! open continues); a translator failure is an error either way, since there
//! is no SQL to continue with.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::detect::{td_classify, DetectorConfig, ThreatVerdict};
use crate::shield::{classify_prompt, iss_decision, GateAction, IssConfig, RiskAssessment};
use crate::signature::{qsc_validate, QscConfig, SignatureVerdict};

/// A security layer of the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Iss,
    Td,
    Qsc,
}

impl Layer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Layer::Iss => "iss",
            Layer::Td => "td",
            Layer::Qsc => "qsc",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "iss" => Ok(Layer::Iss),
            "td" => Ok(Layer::Td),
            "qsc" => Ok(Layer::Qsc),
            other => Err(format!("unknown layer {other:?} (expected iss, td, or qsc)")),
        }
    }
}

/// What to do when a remote security component cannot answer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailPolicy {
    /// Treat the prompt as flagged and reject.
    #[default]
    FailClosed,
    /// Continue as if the layer had passed, recording an annotation.
    FailOpen,
}

/// Full pipeline configuration: which layers run and with what settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerConfig {
    pub enabled: BTreeSet<Layer>,
    pub iss: IssConfig,
    pub td: DetectorConfig,
    pub qsc: QscConfig,
    pub fail_policy: FailPolicy,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            enabled: [Layer::Iss, Layer::Td, Layer::Qsc].into_iter().collect(),
            iss: IssConfig::default(),
            td: DetectorConfig::default(),
            qsc: QscConfig::default(),
            fail_policy: FailPolicy::FailClosed,
        }
    }
}

impl LayerConfig {
    /// Convenience constructor for a specific layer subset with defaults.
    pub fn with_layers(layers: impl IntoIterator<Item = Layer>) -> Self {
        Self {
            enabled: layers.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.enabled.is_empty() {
            return Err(ConfigError::Invalid(
                "at least one layer must be enabled".to_string(),
            ));
        }
        self.iss.validate()?;
        self.td.validate()?;
        self.qsc.validate()
    }
}

/// Pipeline stages, in execution order. `Translate` is not a security layer
/// but is timed like one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Iss,
    Td,
    Translate,
    Qsc,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Iss => "iss",
            Stage::Td => "td",
            Stage::Translate => "translate",
            Stage::Qsc => "qsc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub micros: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Rejected,
    Completed,
}

/// Everything the pipeline recorded for one request. A rejection at stage k
/// leaves the fields of later stages `None`; the rejecting stage's own
/// verdict is kept as evidence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineResult {
    pub outcome: Outcome,
    pub rejected_stage: Option<Layer>,
    pub iss_assessment: Option<RiskAssessment>,
    pub td_verdict: Option<ThreatVerdict>,
    pub sql: Option<String>,
    pub qsc_verdict: Option<SignatureVerdict>,
    pub annotations: Vec<String>,
    pub timings: Vec<StageTiming>,
}

impl PipelineResult {
    /// Intermediate result; `outcome` is provisional until the pipeline
    /// finishes or rejects.
    fn pending() -> Self {
        Self {
            outcome: Outcome::Completed,
            rejected_stage: None,
            iss_assessment: None,
            td_verdict: None,
            sql: None,
            qsc_verdict: None,
            annotations: Vec::new(),
            timings: Vec::new(),
        }
    }

    fn reject(mut self, stage: Layer) -> Self {
        self.outcome = Outcome::Rejected;
        self.rejected_stage = Some(stage);
        self
    }

    fn record(&mut self, stage: Stage, elapsed: Duration) {
        self.timings.push(StageTiming {
            stage,
            micros: elapsed.as_micros() as u64,
        });
    }
}

/// One mock translation rule: a prompt matcher plus a SQL template in which
/// `{prompt}` is replaced with the raw prompt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    /// Case-insensitive substring matcher.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    /// Exact full-prompt matcher.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equals: Option<String>,
    pub sql: String,
}

impl MockRule {
    fn matches(&self, prompt: &str) -> bool {
        if let Some(pat) = &self.equals {
            return prompt == pat;
        }
        if let Some(pat) = &self.contains {
            return prompt.to_lowercase().contains(&pat.to_lowercase());
        }
        false
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.contains, &self.equals) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(ConfigError::Invalid(
                "translator rule needs exactly one of `contains` or `equals`".to_string(),
            )),
        }
    }
}

/// Deterministic prompt-to-SQL lookup table; first matching rule wins and a
/// fallback guarantees every prompt translates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MockTable {
    pub rules: Vec<MockRule>,
    pub fallback_sql: String,
}

impl MockTable {
    /// The in-repo fixture table used by the demo gateway and the tests.
    pub fn fixture() -> Self {
        let rule = |contains: &str, sql: &str| MockRule {
            contains: Some(contains.to_string()),
            equals: None,
            sql: sql.to_string(),
        };
        Self {
            rules: vec![
                rule(
                    "flight date",
                    "SELECT date FROM flights WHERE origin = ny AND dest = paris",
                ),
                rule(
                    "union it with",
                    "SELECT details FROM flights UNION SELECT version(), user(), 1",
                ),
                rule("table name", "SELECT table_name FROM information_schema.tables"),
                rule("select", "{prompt}"),
                rule("drop", "DROP TABLE flights"),
                rule("delete", "DELETE FROM flights"),
            ],
            fallback_sql: "SELECT id FROM flights WHERE id = 12".to_string(),
        }
    }

    pub fn translate(&self, prompt: &str) -> String {
        let template = self
            .rules
            .iter()
            .find(|r| r.matches(prompt))
            .map(|r| r.sql.as_str())
            .unwrap_or(self.fallback_sql.as_str());
        template.replace("{prompt}", prompt)
    }
}

/// Remote HTTP endpoint: the request body is plain text, the response body is
/// taken verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemoteEndpoint {
    pub url: String,
    pub timeout_ms: u64,
}

/// The prompt-to-SQL component. The translation model itself is a black box;
/// only its boundary is represented here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Translator {
    Mock(MockTable),
    Remote(RemoteEndpoint),
}

impl Translator {
    pub fn mode(&self) -> &'static str {
        match self {
            Translator::Mock(_) => "mock",
            Translator::Remote(_) => "remote",
        }
    }
}

impl Default for Translator {
    fn default() -> Self {
        Translator::Mock(MockTable::fixture())
    }
}

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("translator unavailable: {0}")]
    RemoteUnavailable(String),
}

/// Translates a prompt to SQL text.
pub fn translate(prompt: &str, translator: &Translator) -> Result<String, TranslateError> {
    match translator {
        Translator::Mock(table) => Ok(table.translate(prompt)),
        Translator::Remote(endpoint) => {
            let client = reqwest::blocking::Client::builder()
                .timeout(Duration::from_millis(endpoint.timeout_ms))
                .build()
                .map_err(|e| TranslateError::RemoteUnavailable(e.to_string()))?;
            client
                .post(&endpoint.url)
                .body(prompt.to_string())
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.text())
                .map_err(|e| TranslateError::RemoteUnavailable(e.to_string()))
        }
    }
}

/// Runs the pre-translation layers. Returns `(proceed, partial)`: when
/// `proceed` is false the partial result is final and carries the rejection.
pub fn run_pre_llm(prompt: &str, cfg: &LayerConfig) -> (bool, PipelineResult) {
    let mut result = PipelineResult::pending();

    if cfg.enabled.contains(&Layer::Iss) {
        let started = Instant::now();
        let decision = iss_decision(classify_prompt(prompt, &cfg.iss), &cfg.iss);
        result.record(Stage::Iss, started.elapsed());
        let action = decision.action;
        result.iss_assessment = Some(decision.assessment);
        match action {
            GateAction::Reject => return (false, result.reject(Layer::Iss)),
            GateAction::PassAnnotated => {
                let triggers = result
                    .iss_assessment
                    .as_ref()
                    .map(|a| a.triggers.len())
                    .unwrap_or(0);
                result
                    .annotations
                    .push(format!("iss: low-risk prompt passed with {triggers} trigger(s)"));
            }
            GateAction::Pass => {}
        }
    }

    if cfg.enabled.contains(&Layer::Td) {
        let started = Instant::now();
        let verdict = td_classify(prompt, &cfg.td);
        result.record(Stage::Td, started.elapsed());
        match verdict {
            Ok(v) => {
                let flagged = v.flag;
                result.td_verdict = Some(v);
                if flagged {
                    return (false, result.reject(Layer::Td));
                }
            }
            Err(e) => match cfg.fail_policy {
                FailPolicy::FailClosed => {
                    result
                        .annotations
                        .push(format!("td: detector error, fail-closed rejection: {e}"));
                    return (false, result.reject(Layer::Td));
                }
                FailPolicy::FailOpen => {
                    result
                        .annotations
                        .push(format!("td: detector error ignored by fail-open policy: {e}"));
                }
            },
        }
    }

    (true, result)
}

/// Runs the post-translation layer over the generated SQL.
pub fn run_post_llm(sql: String, cfg: &LayerConfig, mut partial: PipelineResult) -> PipelineResult {
    partial.sql = Some(sql);
    if cfg.enabled.contains(&Layer::Qsc) {
        let started = Instant::now();
        let verdict = qsc_validate(partial.sql.as_deref().unwrap_or(""), &cfg.qsc);
        partial.record(Stage::Qsc, started.elapsed());
        let passed = verdict.pass;
        partial.qsc_verdict = Some(verdict);
        if !passed {
            return partial.reject(Layer::Qsc);
        }
    }
    partial.outcome = Outcome::Completed;
    partial
}

/// Full guarded flow: pre-translation layers, translation, post-translation
/// validation. Deterministic whenever the detector is heuristic and the
/// translator is a mock table.
pub fn process_request(
    prompt: &str,
    cfg: &LayerConfig,
    translator: &Translator,
) -> Result<PipelineResult, TranslateError> {
    let (proceed, mut partial) = run_pre_llm(prompt, cfg);
    if !proceed {
        return Ok(partial);
    }
    let started = Instant::now();
    let sql = translate(prompt, translator)?;
    partial.record(Stage::Translate, started.elapsed());
    Ok(run_post_llm(sql, cfg, partial))
}

/// OR-aggregation of per-layer detection flags; an empty list is not a
/// detection.
pub fn aggregate_detection(verdicts: &[bool]) -> bool {
    verdicts.iter().any(|&flagged| flagged)
}
