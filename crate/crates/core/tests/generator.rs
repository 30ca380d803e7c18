//! Cross-module guarantees of the generated corpora: the generator and the
//! security layers must agree on the ground truth each template encodes.

use sqlshield_core::corpus::{generate_corpus, AttackSample, AttackType, CorpusSpec, Label};
use sqlshield_core::detect::{td_classify, DetectorConfig};
use sqlshield_core::pipeline::Layer;
use sqlshield_core::shield::{classify_prompt, IssConfig, RiskLabel};
use sqlshield_core::signature::{qsc_validate, QscConfig};

fn paper_corpus() -> Vec<AttackSample> {
    generate_corpus(&CorpusSpec::paper_scale(42)).unwrap()
}

#[test]
fn every_sample_carries_sql_and_a_consistent_label() {
    for sample in paper_corpus() {
        assert!(sample.generated_sql.is_some(), "sample {}", sample.id);
        assert_eq!(
            sample.label == Label::Legitimate,
            sample.attack_type == AttackType::Legitimate,
            "sample {}",
            sample.id
        );
        if sample.attack_type == AttackType::Legitimate {
            assert!(sample.expected_layers.is_none());
        } else {
            let expected = sample.expected_layers.as_ref().unwrap();
            assert!(!expected.is_empty(), "sample {}", sample.id);
        }
    }
}

#[test]
fn iss_expectation_means_high_risk() {
    let cfg = IssConfig::default();
    for sample in paper_corpus() {
        let Some(expected) = &sample.expected_layers else { continue };
        if expected.contains(&Layer::Iss) {
            let assessment = classify_prompt(&sample.prompt, &cfg);
            assert_eq!(
                assessment.label,
                RiskLabel::HighRisk,
                "sample {} prompt {:?}",
                sample.id,
                sample.prompt
            );
        }
    }
}

#[test]
fn qsc_expectation_means_failing_sql() {
    let cfg = QscConfig::default();
    for sample in paper_corpus() {
        let Some(expected) = &sample.expected_layers else { continue };
        if expected.contains(&Layer::Qsc) {
            let sql = sample.generated_sql.as_deref().unwrap();
            assert!(
                !qsc_validate(sql, &cfg).pass,
                "sample {} sql {:?}",
                sample.id,
                sql
            );
        }
    }
}

#[test]
fn td_expectation_means_flagged() {
    let cfg = DetectorConfig::default();
    for sample in paper_corpus() {
        let Some(expected) = &sample.expected_layers else { continue };
        if expected.contains(&Layer::Td) {
            let verdict = td_classify(&sample.prompt, &cfg).unwrap();
            assert!(
                verdict.flag,
                "sample {} prompt {:?}",
                sample.id,
                sample.prompt
            );
        }
    }
}

#[test]
fn legitimate_sql_always_passes_signature_checks() {
    let cfg = QscConfig::default();
    for sample in paper_corpus() {
        if sample.attack_type != AttackType::Legitimate {
            continue;
        }
        let sql = sample.generated_sql.as_deref().unwrap();
        let verdict = qsc_validate(sql, &cfg);
        assert!(verdict.pass, "sample {} sql {:?}", sample.id, sql);
    }
}

#[test]
fn hard_negatives_produce_a_modest_shield_fpr() {
    let cfg = IssConfig::default();
    let corpus = paper_corpus();
    let legit: Vec<&AttackSample> = corpus
        .iter()
        .filter(|s| s.attack_type == AttackType::Legitimate)
        .collect();
    let false_positives = legit
        .iter()
        .filter(|s| classify_prompt(&s.prompt, &cfg).label == RiskLabel::HighRisk)
        .count();
    let fpr = false_positives as f64 / legit.len() as f64;
    assert!(
        fpr > 0.0 && fpr < 0.10,
        "shield false-positive rate {fpr} outside the expected band"
    );
}

#[test]
fn family_ids_are_sequential_and_prefixed() {
    let corpus = paper_corpus();
    for ty in AttackType::ALL {
        let ids: Vec<&str> = corpus
            .iter()
            .filter(|s| s.attack_type == ty)
            .map(|s| s.id.as_str())
            .collect();
        for (i, id) in ids.iter().enumerate() {
            assert_eq!(*id, format!("{}-{:04}", ty.as_str(), i));
        }
    }
}
