//! Precision/recall/F1 computation, macro averaging, confusion matrices,
//! and report emission.
//!
//! The zero-division convention is F1 = 0: a class that is never predicted
//! and never correct scores exactly 0.0 rather than NaN. Reports round to
//! three decimals with round-half-even; the JSON schema keeps full
//! precision.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ClassLabel;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("gold and predicted sequences differ in length: {gold} vs {predicted}")]
    LengthMismatch { gold: usize, predicted: usize },
    #[error("label {label:?} at position {position} is not in the label order")]
    UnknownLabel { label: String, position: usize },
    #[error("cannot average an empty list")]
    EmptyInput,
    #[error("failed to write report: {0}")]
    Io(#[from] std::io::Error),
}

/// Row-gold, column-predicted count matrix with its label order attached.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    /// `matrix[gold][predicted]`
    pub matrix: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_pairs<L: ClassLabel>(
        gold: &[L],
        predicted: &[L],
        label_order: &[L],
    ) -> Result<Self, MetricsError> {
        if gold.len() != predicted.len() {
            return Err(MetricsError::LengthMismatch {
                gold: gold.len(),
                predicted: predicted.len(),
            });
        }
        let index: HashMap<L, usize> = label_order
            .iter()
            .enumerate()
            .map(|(i, l)| (*l, i))
            .collect();
        let k = label_order.len();
        let mut matrix = vec![vec![0u64; k]; k];
        for (position, (g, p)) in gold.iter().zip(predicted).enumerate() {
            let gi = *index.get(g).ok_or_else(|| MetricsError::UnknownLabel {
                label: g.label_name().to_string(),
                position,
            })?;
            let pi = *index.get(p).ok_or_else(|| MetricsError::UnknownLabel {
                label: p.label_name().to_string(),
                position,
            })?;
            matrix[gi][pi] += 1;
        }
        Ok(ConfusionMatrix {
            labels: label_order.iter().map(|l| l.label_name().to_string()).collect(),
            matrix,
        })
    }

    pub fn total(&self) -> u64 {
        self.matrix.iter().flatten().sum()
    }

    fn true_positives(&self, class: usize) -> u64 {
        self.matrix[class][class]
    }

    /// Row sum: how many gold instances the class has.
    pub fn support(&self, class: usize) -> u64 {
        self.matrix[class].iter().sum()
    }

    fn predicted_count(&self, class: usize) -> u64 {
        self.matrix.iter().map(|row| row[class]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class metrics plus the macro average, mirroring the row layout of
/// the evaluation tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_before_augmentation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_after_augmentation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_ref: Option<String>,
    pub confusion: ConfusionMatrix,
}

pub const METRICS_SCHEMA_VERSION: u32 = 1;

fn ratio_or_zero(numerator: u64, denominator: u64, what: &str, label: &str) -> f64 {
    if denominator == 0 {
        log::warn!("{what} for class {label} divides by zero; reporting 0.0");
        0.0
    } else {
        numerator as f64 / denominator as f64
    }
}

/// Compute per-class precision, recall, and F1 from a confusion matrix.
pub fn metrics_from_confusion(confusion: &ConfusionMatrix) -> Vec<ClassMetrics> {
    confusion
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let tp = confusion.true_positives(i);
            let precision = ratio_or_zero(tp, confusion.predicted_count(i), "precision", label);
            let recall = ratio_or_zero(tp, confusion.support(i), "recall", label);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                label: label.clone(),
                precision,
                recall,
                f1,
                support: confusion.support(i),
            }
        })
        .collect()
}

/// Unweighted arithmetic mean of per-class F1 values.
pub fn macro_f1(per_class: &[f64]) -> Result<f64, MetricsError> {
    if per_class.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Full report for a batch of gold/predicted label pairs.
pub fn f1_scores<L: ClassLabel>(
    gold: &[L],
    predicted: &[L],
    label_order: &[L],
) -> Result<MetricReport, MetricsError> {
    let confusion = ConfusionMatrix::from_pairs(gold, predicted, label_order)?;
    let per_class = metrics_from_confusion(&confusion);
    let macro_value = macro_f1(&per_class.iter().map(|c| c.f1).collect::<Vec<_>>())?;
    Ok(MetricReport {
        schema_version: METRICS_SCHEMA_VERSION,
        per_class,
        macro_f1: macro_value,
        entropy_before_augmentation: None,
        entropy_after_augmentation: None,
        manifest_ref: None,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

/// Round to `digits` decimals with ties going to the even neighbor,
/// matching the presentation convention of the reference tables.
pub fn round_half_even(value: f64, digits: u32) -> f64 {
    let scale = 10f64.powi(digits as i32);
    let scaled = value * scale;
    // Work around accumulated binary representation error right at a tie.
    let nearest = (scaled * 1e6).round() / 1e6;
    let rounded = if (nearest - nearest.trunc()).abs() == 0.5 {
        let down = nearest.trunc();
        if (down as i64) % 2 == 0 {
            down
        } else {
            down + nearest.signum()
        }
    } else {
        nearest.round()
    };
    rounded / scale
}

fn fmt3(value: f64) -> String {
    format!("{:.3}", round_half_even(value, 3))
}

/// Render the report in the requested format.
pub fn render_report(report: &MetricReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes") + "\n"
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| Class | Precision | Recall | F1 | Support |\n");
            out.push_str("|---|---|---|---|---|\n");
            for class in &report.per_class {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    class.label,
                    fmt3(class.precision),
                    fmt3(class.recall),
                    fmt3(class.f1),
                    class.support
                );
            }
            let _ = writeln!(
                out,
                "| Macro-Avg. | | | {} | {} |",
                fmt3(report.macro_f1),
                report.confusion.total()
            );
            out
        }
        ReportFormat::Csv => {
            let mut out = String::from("class,precision,recall,f1,support\n");
            for class in &report.per_class {
                let _ = writeln!(
                    out,
                    "{},{:.6},{:.6},{:.6},{}",
                    class.label, class.precision, class.recall, class.f1, class.support
                );
            }
            let _ = writeln!(
                out,
                "MACRO_AVG,,,{:.6},{}",
                report.macro_f1,
                report.confusion.total()
            );
            out
        }
    }
}

/// Write the report to a file in the requested format.
pub fn emit_report(
    report: &MetricReport,
    format: ReportFormat,
    path: &Path,
) -> Result<(), MetricsError> {
    std::fs::write(path, render_report(report, format))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BinaryLabel, SatdLabel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_checked_confusion_arithmetic() {
        // Class A: TP=2, FP=1, FN=1 -> P = R = F1 = 2/3.
        use BinaryLabel::{NotSatd, Satd};
        let gold = [Satd, Satd, Satd, NotSatd, NotSatd];
        let predicted = [Satd, Satd, NotSatd, Satd, NotSatd];
        let report = f1_scores(&gold, &predicted, &BinaryLabel::ALL).unwrap();
        let satd = report.per_class.iter().find(|c| c.label == "SATD").unwrap();
        assert!((satd.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((satd.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((satd.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(satd.support, 3);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let gold = [
            SatdLabel::CodeDesign,
            SatdLabel::Documentation,
            SatdLabel::Test,
            SatdLabel::Requirement,
        ];
        let report = f1_scores(&gold, &gold, &SatdLabel::DEBT_TYPES).unwrap();
        for class in &report.per_class {
            assert_eq!(class.f1, 1.0);
        }
        assert_eq!(report.macro_f1, 1.0);
    }

    #[test]
    fn never_predicted_class_scores_exactly_zero() {
        // REQUIREMENT never predicted and never correct: its cells must be
        // exactly 0.0, not NaN.
        let gold = [SatdLabel::Requirement, SatdLabel::CodeDesign];
        let predicted = [SatdLabel::CodeDesign, SatdLabel::CodeDesign];
        let report = f1_scores(&gold, &predicted, &SatdLabel::DEBT_TYPES).unwrap();
        let req = report
            .per_class
            .iter()
            .find(|c| c.label == "REQUIREMENT")
            .unwrap();
        assert_eq!(req.precision, 0.0);
        assert_eq!(req.recall, 0.0);
        assert_eq!(req.f1, 0.0);
        let test = report.per_class.iter().find(|c| c.label == "TEST").unwrap();
        assert_eq!(test.f1, 0.0);
        assert_eq!(test.support, 0);
    }

    #[test]
    fn macro_average_of_reference_row() {
        let value = macro_f1(&[0.885, 0.925, 0.925, 0.796]).unwrap();
        assert!((value - 0.88275).abs() < 1e-12);
        assert_eq!(round_half_even(value, 3), 0.883);
    }

    #[test]
    fn macro_rejects_empty_and_averages_trivially() {
        assert!(matches!(macro_f1(&[]), Err(MetricsError::EmptyInput)));
        assert_eq!(macro_f1(&[1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn macro_equals_independent_mean_on_random_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let len = rng.gen_range(1..8);
            let values: Vec<f64> = (0..len).map(|_| rng.gen::<f64>()).collect();
            // Independent route: running mean.
            let mut mean = 0.0;
            for (i, v) in values.iter().enumerate() {
                mean += (v - mean) / (i + 1) as f64;
            }
            assert!((macro_f1(&values).unwrap() - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_and_unknown_label_are_rejected() {
        let gold = [BinaryLabel::Satd];
        assert!(matches!(
            f1_scores(&gold, &[], &BinaryLabel::ALL),
            Err(MetricsError::LengthMismatch { .. })
        ));
        let err = f1_scores(
            &[SatdLabel::NotSatd],
            &[SatdLabel::NotSatd],
            &SatdLabel::DEBT_TYPES,
        )
        .unwrap_err();
        assert!(matches!(err, MetricsError::UnknownLabel { position: 0, .. }));
    }

    #[test]
    fn round_half_even_matches_convention() {
        assert_eq!(round_half_even(0.8825, 3), 0.882);
        assert_eq!(round_half_even(0.8835, 3), 0.884);
        assert_eq!(round_half_even(0.88275, 3), 0.883);
        assert_eq!(round_half_even(0.1, 3), 0.1);
    }

    #[test]
    fn json_report_roundtrips() {
        let gold = [BinaryLabel::Satd, BinaryLabel::NotSatd];
        let predicted = [BinaryLabel::Satd, BinaryLabel::Satd];
        let report = f1_scores(&gold, &predicted, &BinaryLabel::ALL).unwrap();
        let rendered = render_report(&report, ReportFormat::Json);
        let parsed: MetricReport = serde_json::from_str(&rendered).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn csv_report_parses_back_to_six_decimals() {
        let gold = [
            BinaryLabel::Satd,
            BinaryLabel::Satd,
            BinaryLabel::Satd,
            BinaryLabel::NotSatd,
        ];
        let predicted = [
            BinaryLabel::Satd,
            BinaryLabel::NotSatd,
            BinaryLabel::Satd,
            BinaryLabel::NotSatd,
        ];
        let report = f1_scores(&gold, &predicted, &BinaryLabel::ALL).unwrap();
        let rendered = render_report(&report, ReportFormat::Csv);
        for (line, class) in rendered.lines().skip(1).zip(&report.per_class) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], class.label);
            for (field, value) in fields[1..4]
                .iter()
                .zip([class.precision, class.recall, class.f1])
            {
                let parsed: f64 = field.parse().unwrap();
                assert!((parsed - value).abs() < 5e-7, "{parsed} vs {value}");
            }
        }
    }

    #[test]
    fn markdown_report_has_per_class_rows_and_macro() {
        let gold = [SatdLabel::Test, SatdLabel::CodeDesign];
        let report = f1_scores(&gold, &gold, &SatdLabel::DEBT_TYPES).unwrap();
        let rendered = render_report(&report, ReportFormat::Markdown);
        assert!(rendered.contains("| CODE_DESIGN |"));
        assert!(rendered.contains("| Macro-Avg. |"));
        // Zero-support class prints support 0.
        assert!(rendered.contains("| DOCUMENTATION | 0.000 | 0.000 | 0.000 | 0 |"));
    }

    proptest! {
        #[test]
        fn metrics_are_invariant_under_pair_permutation(
            pairs in proptest::collection::vec((0..4usize, 0..4usize), 1..60),
            seed in 0..u64::MAX,
        ) {
            let order = SatdLabel::DEBT_TYPES;
            let gold: Vec<SatdLabel> = pairs.iter().map(|(g, _)| order[*g]).collect();
            let pred: Vec<SatdLabel> = pairs.iter().map(|(_, p)| order[*p]).collect();
            let base = f1_scores(&gold, &pred, &order).unwrap();

            let mut shuffled = pairs.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let gold2: Vec<SatdLabel> = shuffled.iter().map(|(g, _)| order[*g]).collect();
            let pred2: Vec<SatdLabel> = shuffled.iter().map(|(_, p)| order[*p]).collect();
            let permuted = f1_scores(&gold2, &pred2, &order).unwrap();

            prop_assert_eq!(base.per_class, permuted.per_class);
            prop_assert!((base.macro_f1 - permuted.macro_f1).abs() < 1e-15);
        }

        #[test]
        fn macro_is_invariant_to_class_ordering(
            pairs in proptest::collection::vec((0..4usize, 0..4usize), 1..60),
        ) {
            let forward = SatdLabel::DEBT_TYPES;
            let mut reversed = SatdLabel::DEBT_TYPES;
            reversed.reverse();
            let gold: Vec<SatdLabel> = pairs.iter().map(|(g, _)| forward[*g]).collect();
            let pred: Vec<SatdLabel> = pairs.iter().map(|(_, p)| forward[*p]).collect();
            let a = f1_scores(&gold, &pred, &forward).unwrap();
            let b = f1_scores(&gold, &pred, &reversed).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        }
    }

    /// Independent oracle: per-instance counting without a matrix.
    fn direct_count_metrics<L: ClassLabel>(
        gold: &[L],
        predicted: &[L],
        class: L,
    ) -> (f64, f64, f64) {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for (g, p) in gold.iter().zip(predicted) {
            if *p == class && *g == class {
                tp += 1;
            } else if *p == class {
                fp += 1;
            } else if *g == class {
                fn_ += 1;
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        (precision, recall, f1)
    }

    #[test]
    fn confusion_route_equals_direct_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = rng.gen_range(1..100);
            let k = rng.gen_range(2..=5usize);
            let order: Vec<SatdLabel> = SatdLabel::ALL[..k].to_vec();
            let gold: Vec<SatdLabel> = (0..n).map(|_| order[rng.gen_range(0..k)]).collect();
            let pred: Vec<SatdLabel> = (0..n).map(|_| order[rng.gen_range(0..k)]).collect();
            let report = f1_scores(&gold, &pred, &order).unwrap();
            for (i, class) in order.iter().enumerate() {
                let (p, r, f) = direct_count_metrics(&gold, &pred, *class);
                assert!((report.per_class[i].precision - p).abs() < 1e-12);
                assert!((report.per_class[i].recall - r).abs() < 1e-12);
                assert!((report.per_class[i].f1 - f).abs() < 1e-12);
            }
        }
    }
}
