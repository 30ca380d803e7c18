//! Evaluation harness: runs layer configurations over labeled corpora and
//! reports per-attack-type confusion matrices with accuracy, precision,
//! recall, F1, and the overall false-positive rate.
//!
//! Every attack-type slice shares the full legitimate pool as its negative
//! set, which is why one corpus yields per-type accuracy figures alongside a
//! single false-positive rate. Counts are exact integers; ratios are derived
//! from them at render time. The 0/0 convention for precision, recall, and
//! F1 is 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ConfigError;
use crate::corpus::{AttackSample, AttackType};
use crate::detect::td_classify;
use crate::pipeline::{
    aggregate_detection, translate, FailPolicy, Layer, LayerConfig, TranslateError, Translator,
};
use crate::shield::classify_prompt;
use crate::signature::qsc_validate;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    #[serde(rename = "tp")]
    pub true_pos: u64,
    #[serde(rename = "fp")]
    pub false_pos: u64,
    #[serde(rename = "fn")]
    pub false_neg: u64,
    #[serde(rename = "tn")]
    pub true_neg: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }

    pub fn record(&mut self, predicted_positive: bool, actually_positive: bool) {
        match (predicted_positive, actually_positive) {
            (true, true) => self.true_pos += 1,
            (true, false) => self.false_pos += 1,
            (false, true) => self.false_neg += 1,
            (false, false) => self.true_neg += 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix has no counts")]
    EmptyMatrix,
    #[error("false-positive rate needs at least one negative sample")]
    NoNegatives,
    #[error("no samples to evaluate")]
    NoSamples,
    #[error("sample {id:?} needs generated_sql or a translator for the qsc layer")]
    MissingSql { id: String },
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Accuracy, precision, recall, and F1 from exact counts. Division by zero
/// yields 0 for precision/recall/F1; an all-zero matrix is an error because
/// accuracy is undefined.
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricSet, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let accuracy = (cm.true_pos + cm.true_neg) as f64 / total as f64;
    let precision = ratio(cm.true_pos, cm.true_pos + cm.false_pos);
    let recall = ratio(cm.true_pos, cm.true_pos + cm.false_neg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(MetricSet {
        accuracy,
        precision,
        recall,
        f1,
    })
}

/// `fp / (fp + tn)`; errors when there are no negatives at all.
pub fn false_positive_rate(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    let negatives = cm.false_pos + cm.true_neg;
    if negatives == 0 {
        return Err(EvalError::NoNegatives);
    }
    Ok(cm.false_pos as f64 / negatives as f64)
}

/// One attack-type row of a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeReport {
    pub attack_type: AttackType,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricSet,
}

/// Metrics for one layer configuration over one corpus. Single-pass,
/// sample-level figures; the stored matrices always reproduce the stored
/// metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Enabled layers, in canonical order.
    pub layers: Vec<Layer>,
    pub per_type: Vec<TypeReport>,
    /// Overall false-positive rate over the legitimate pool; absent when the
    /// corpus has no legitimate samples.
    pub overall_fpr: Option<f64>,
    pub legitimate_total: u64,
    pub evaluated: u64,
}

/// Whether the enabled layers flag one sample as an attack.
///
/// The shield contributes detections at or above its threshold, the detector
/// contributes its flag (remote errors resolve per the fail policy), and the
/// signature layer contributes a failed validation of the sample's SQL. The
/// SQL comes from `generated_sql` when present, otherwise from the supplied
/// translator.
pub fn predict_sample(
    sample: &AttackSample,
    cfg: &LayerConfig,
    translator: Option<&Translator>,
) -> Result<bool, EvalError> {
    let mut flags = Vec::with_capacity(3);
    if cfg.enabled.contains(&Layer::Iss) {
        let assessment = classify_prompt(&sample.prompt, &cfg.iss);
        flags.push(cfg.iss.is_detected(&assessment));
    }
    if cfg.enabled.contains(&Layer::Td) {
        match td_classify(&sample.prompt, &cfg.td) {
            Ok(verdict) => flags.push(verdict.flag),
            Err(_) => flags.push(cfg.fail_policy == FailPolicy::FailClosed),
        }
    }
    if cfg.enabled.contains(&Layer::Qsc) {
        let sql = match &sample.generated_sql {
            Some(sql) => sql.clone(),
            None => {
                let translator = translator.ok_or_else(|| EvalError::MissingSql {
                    id: sample.id.clone(),
                })?;
                translate(&sample.prompt, translator)?
            }
        };
        flags.push(!qsc_validate(&sql, &cfg.qsc).pass);
    }
    Ok(aggregate_detection(&flags))
}

/// Evaluates one layer configuration over a corpus.
pub fn evaluate_config(
    samples: &[AttackSample],
    cfg: &LayerConfig,
    translator: Option<&Translator>,
) -> Result<EvaluationReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::NoSamples);
    }
    cfg.validate()?;

    let mut predictions = Vec::with_capacity(samples.len());
    for sample in samples {
        predictions.push(predict_sample(sample, cfg, translator)?);
    }

    let legit: Vec<bool> = samples
        .iter()
        .zip(&predictions)
        .filter(|(s, _)| s.is_legitimate())
        .map(|(_, &p)| p)
        .collect();
    let legit_fp = legit.iter().filter(|&&p| p).count() as u64;
    let legit_tn = legit.len() as u64 - legit_fp;

    let mut per_type = Vec::new();
    for ty in AttackType::FAMILIES {
        let family: Vec<bool> = samples
            .iter()
            .zip(&predictions)
            .filter(|(s, _)| s.attack_type == ty)
            .map(|(_, &p)| p)
            .collect();
        if family.is_empty() {
            continue;
        }
        let tp = family.iter().filter(|&&p| p).count() as u64;
        let matrix = ConfusionMatrix {
            true_pos: tp,
            false_neg: family.len() as u64 - tp,
            false_pos: legit_fp,
            true_neg: legit_tn,
        };
        per_type.push(TypeReport {
            attack_type: ty,
            metrics: metrics(&matrix)?,
            matrix,
        });
    }

    let overall_matrix = ConfusionMatrix {
        false_pos: legit_fp,
        true_neg: legit_tn,
        ..ConfusionMatrix::default()
    };
    let overall_fpr = if legit.is_empty() {
        None
    } else {
        Some(false_positive_rate(&overall_matrix)?)
    };

    Ok(EvaluationReport {
        layers: cfg.enabled.iter().copied().collect(),
        per_type,
        overall_fpr,
        legitimate_total: legit.len() as u64,
        evaluated: samples.len() as u64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    PlainTable,
    Structured,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "plain_table" => Ok(ReportFormat::PlainTable),
            "structured" => Ok(ReportFormat::Structured),
            other => Err(format!(
                "unknown format {other:?} (expected plain_table or structured)"
            )),
        }
    }
}

fn pct(value: f64) -> String {
    format!("{:.2}%", value * 100.0)
}

/// Renders a report. Both formats are byte-deterministic for a given report:
/// the plain table has one metrics row per attack type plus the
/// false-positive line, and the structured form is a JSON document carrying
/// the matrices.
pub fn render_report(report: &EvaluationReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::PlainTable => {
            let mut out = String::new();
            out.push_str(&format!(
                "{:<20} {:>9} {:>10} {:>8} {:>9}\n",
                "Attack Type", "Accuracy", "Precision", "Recall", "F1 Score"
            ));
            for row in &report.per_type {
                out.push_str(&format!(
                    "{:<20} {:>9} {:>10} {:>8} {:>9}\n",
                    row.attack_type.display_name(),
                    pct(row.metrics.accuracy),
                    pct(row.metrics.precision),
                    pct(row.metrics.recall),
                    pct(row.metrics.f1),
                ));
            }
            match report.overall_fpr {
                Some(fpr) => out.push_str(&format!("False-positive rate: {}\n", pct(fpr))),
                None => out.push_str("False-positive rate: n/a\n"),
            }
            out
        }
        ReportFormat::Structured => {
            let mut out = serde_json::to_string_pretty(report).expect("report serializes");
            out.push('\n');
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, CorpusCounts, CorpusSpec};

    fn cm(tp: u64, fp: u64, fn_count: u64, tn: u64) -> ConfusionMatrix {
        ConfusionMatrix {
            true_pos: tp,
            false_pos: fp,
            false_neg: fn_count,
            true_neg: tn,
        }
    }

    #[test]
    fn metric_arithmetic() {
        let m = metrics(&cm(2, 1, 0, 7)).unwrap();
        assert!((m.accuracy - 0.9).abs() < 1e-12);
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.recall - 1.0).abs() < 1e-12);
        assert!((m.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let m = metrics(&cm(0, 0, 5, 5)).unwrap();
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn perfect_classifier_scores_one() {
        let m = metrics(&cm(3, 0, 0, 7)).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(matches!(metrics(&cm(0, 0, 0, 0)), Err(EvalError::EmptyMatrix)));
    }

    #[test]
    fn fpr_arithmetic() {
        let fpr = false_positive_rate(&cm(0, 1, 0, 36)).unwrap();
        assert!((fpr - 1.0 / 37.0).abs() < 1e-12);
        assert_eq!(false_positive_rate(&cm(5, 0, 2, 10)).unwrap(), 0.0);
        assert!(matches!(
            false_positive_rate(&cm(5, 0, 2, 0)),
            Err(EvalError::NoNegatives)
        ));
    }

    #[test]
    fn metrics_are_scale_invariant() {
        let base = cm(2, 1, 0, 7);
        for k in [2, 3, 10] {
            let scaled = cm(2 * k, k, 0, 7 * k);
            assert_eq!(metrics(&base).unwrap(), metrics(&scaled).unwrap());
        }
    }

    #[test]
    fn tiny_corpus_confusion_counts() {
        // Two flagged ignore attacks plus two clean legitimate prompts under
        // the shield alone: a perfect 2x2 split.
        let spec = CorpusSpec {
            counts: CorpusCounts {
                direct_sqli: 0,
                completion: 0,
                obfuscation: 0,
                ignore: 2,
                combination: 0,
                legitimate: 2,
            },
            ..CorpusSpec::default()
        };
        let samples = generate_corpus(&spec).unwrap();
        let cfg = LayerConfig::with_layers([Layer::Iss]);
        let report = evaluate_config(&samples, &cfg, None).unwrap();
        assert_eq!(report.per_type.len(), 1);
        let row = &report.per_type[0];
        assert_eq!(row.attack_type, AttackType::Ignore);
        assert_eq!(row.matrix, cm(2, 0, 0, 2));
        assert_eq!(row.metrics.f1, 1.0);
        assert_eq!(report.overall_fpr, Some(0.0));
    }

    #[test]
    fn empty_layer_set_is_rejected() {
        let samples = crate::corpus::exemplar_corpus();
        let cfg = LayerConfig::with_layers([]);
        assert!(matches!(
            evaluate_config(&samples, &cfg, None),
            Err(EvalError::Config(_))
        ));
    }

    #[test]
    fn flagged_legitimate_sample_counts_toward_fpr() {
        let mut cfg = LayerConfig::with_layers([Layer::Td]);
        cfg.td.threshold = 0.2;
        let sample = AttackSample {
            id: "hard".to_string(),
            prompt: "forget the friday option and book the morning flight".to_string(),
            attack_type: AttackType::Legitimate,
            label: crate::corpus::Label::Legitimate,
            generated_sql: Some("SELECT id FROM flights".to_string()),
            expected_layers: None,
        };
        let report = evaluate_config(&[sample], &cfg, None).unwrap();
        assert_eq!(report.overall_fpr, Some(1.0));
    }

    #[test]
    fn qsc_without_sql_needs_a_translator() {
        let sample = AttackSample {
            id: "nosql".to_string(),
            prompt: "hello".to_string(),
            attack_type: AttackType::Legitimate,
            label: crate::corpus::Label::Legitimate,
            generated_sql: None,
            expected_layers: None,
        };
        let cfg = LayerConfig::with_layers([Layer::Qsc]);
        assert!(matches!(
            evaluate_config(std::slice::from_ref(&sample), &cfg, None),
            Err(EvalError::MissingSql { .. })
        ));
        let translator = Translator::default();
        assert!(evaluate_config(&[sample], &cfg, Some(&translator)).is_ok());
    }

    #[test]
    fn rendered_tables_are_deterministic() {
        let samples = generate_corpus(&CorpusSpec::default()).unwrap();
        let cfg = LayerConfig::default();
        let report = evaluate_config(&samples, &cfg, None).unwrap();
        let a = render_report(&report, ReportFormat::PlainTable);
        let b = render_report(&report, ReportFormat::PlainTable);
        assert_eq!(a, b);
        // Header, five attack rows, false-positive line.
        assert_eq!(a.lines().count(), 7);
    }

    #[test]
    fn structured_render_round_trips() {
        let samples = generate_corpus(&CorpusSpec::default()).unwrap();
        let cfg = LayerConfig::default();
        let report = evaluate_config(&samples, &cfg, None).unwrap();
        let json = render_report(&report, ReportFormat::Structured);
        let reloaded: EvaluationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(reloaded, report);
        for row in &reloaded.per_type {
            assert_eq!(metrics(&row.matrix).unwrap(), row.metrics);
        }
    }

    #[test]
    fn single_report_row_renders_two_lines_plus_fpr() {
        let report = EvaluationReport {
            layers: vec![Layer::Iss],
            per_type: vec![TypeReport {
                attack_type: AttackType::Ignore,
                matrix: cm(1, 0, 0, 1),
                metrics: metrics(&cm(1, 0, 0, 1)).unwrap(),
            }],
            overall_fpr: Some(0.0),
            legitimate_total: 1,
            evaluated: 2,
        };
        let text = render_report(&report, ReportFormat::PlainTable);
        assert_eq!(text.lines().count(), 3);
    }
}
