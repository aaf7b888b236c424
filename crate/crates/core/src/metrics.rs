//! Binary classification metrics with `ai_generated` as the positive class.
//!
//! Every metric is a ratio of confusion-matrix counts, so values are kept as
//! exact rationals and only rounded for display (half-up, 3 decimals).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

pub type Rate = Ratio<u64>;

pub const POSITIVE_CLASS: Label = Label::AiGenerated;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("malformed report line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("report is missing key `{0}`")]
    MissingKey(String),
}

/// 2x2 counts. `tp` is predicted AI-generated and actually AI-generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, predicted: Label, actual: Label) {
        match (predicted == POSITIVE_CLASS, actual == POSITIVE_CLASS) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn scaled(&self, k: u64) -> Self {
        ConfusionMatrix::new(self.tp * k, self.fp * k, self.fn_ * k, self.tn * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Rate,
    pub precision: Option<Rate>,
    pub recall: Option<Rate>,
    pub f1: Option<Rate>,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> Option<Rate> {
    (den > 0).then(|| Ratio::new(num, den))
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let recall = ratio(cm.tp, cm.tp + cm.fn_);
    // Harmonic mean 2pr/(p+r) simplifies to 2tp/(2tp+fp+fn); it is undefined
    // when either operand is, or when p + r = 0.
    let f1 = match (precision, recall) {
        (Some(_), Some(_)) if cm.tp > 0 => ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_),
        _ => None,
    };
    Ok(MetricsReport {
        accuracy: Ratio::new(cm.tp + cm.tn, total),
        precision,
        recall,
        f1,
        total,
    })
}

pub fn rate_value(r: &Rate) -> f64 {
    r.to_f64().expect("u64 ratio converts to f64")
}

/// Half-up decimal rounding computed on the exact rational.
pub fn round_half_up(r: &Rate, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let num = *r.numer() as u128;
    let den = *r.denom() as u128;
    let scaled = (2 * num * scale + den) / (2 * den);
    if decimals == 0 {
        return scaled.to_string();
    }
    format!("{}.{:0width$}", scaled / scale, scaled % scale, width = decimals as usize)
}

fn display(r: &Option<Rate>) -> String {
    r.as_ref().map_or_else(|| "undefined".to_string(), |r| round_half_up(r, 3))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    MachineReadable,
}

pub fn render_report(report: &MetricsReport, cm: &ConfusionMatrix, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report, cm),
        ReportFormat::MachineReadable => render_machine(report, cm),
    }
}

fn render_text(report: &MetricsReport, cm: &ConfusionMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "positive class: {}", POSITIVE_CLASS);
    let _ = writeln!(out, "{:<26}{:>22}{:>25}", "", "Actual AI-generated", "Actual Human-designed");
    let _ = writeln!(out, "{:<26}{:>22}{:>25}", "Predicted AI-generated", cm.tp, cm.fp);
    let _ = writeln!(out, "{:<26}{:>22}{:>25}", "Predicted Human-designed", cm.fn_, cm.tn);
    let _ = writeln!(out);
    let _ = writeln!(out, "accuracy   {}", round_half_up(&report.accuracy, 3));
    let _ = writeln!(out, "precision  {}", display(&report.precision));
    let _ = writeln!(out, "recall     {}", display(&report.recall));
    let _ = writeln!(out, "f1         {}", display(&report.f1));
    let _ = writeln!(out, "total      {}", report.total);
    out
}

/// Stable `key=value` lines. Rates are written as exact `num/den` with a
/// companion `<key>_value` decimal for readers that only want a float.
fn render_machine(report: &MetricsReport, cm: &ConfusionMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "positive_class={}", POSITIVE_CLASS);
    for (k, v) in [("tp", cm.tp), ("fp", cm.fp), ("fn", cm.fn_), ("tn", cm.tn), ("total", report.total)] {
        let _ = writeln!(out, "{k}={v}");
    }
    let rates = [
        ("accuracy", Some(report.accuracy)),
        ("precision", report.precision),
        ("recall", report.recall),
        ("f1", report.f1),
    ];
    for (k, r) in rates {
        match r {
            Some(r) => {
                let _ = writeln!(out, "{k}={}/{}", r.numer(), r.denom());
                let _ = writeln!(out, "{k}_value={:.6}", rate_value(&r));
            }
            None => {
                let _ = writeln!(out, "{k}=undefined");
                let _ = writeln!(out, "{k}_value=undefined");
            }
        }
    }
    out
}

pub fn parse_machine_report(text: &str) -> Result<(MetricsReport, ConfusionMatrix), MetricsError> {
    let mut kv = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| MetricsError::Malformed {
            line: i + 1,
            message: "expected key=value".into(),
        })?;
        kv.insert(k.to_string(), (i + 1, v.to_string()));
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| MetricsError::MissingKey(k.to_string()));
    let count = |k: &str| -> Result<u64, MetricsError> {
        let (line, v) = get(k)?;
        v.parse().map_err(|_| MetricsError::Malformed { line: *line, message: format!("`{k}` is not a count") })
    };
    let rate = |k: &str| -> Result<Option<Rate>, MetricsError> {
        let (line, v) = get(k)?;
        if v == "undefined" {
            return Ok(None);
        }
        let bad = || MetricsError::Malformed { line: *line, message: format!("`{k}` is not a num/den rate") };
        let (n, d) = v.split_once('/').ok_or_else(bad)?;
        let n: u64 = n.parse().map_err(|_| bad())?;
        let d: u64 = d.parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        Ok(Some(Ratio::new(n, d)))
    };
    let cm = ConfusionMatrix::new(count("tp")?, count("fp")?, count("fn")?, count("tn")?);
    let report = MetricsReport {
        accuracy: rate("accuracy")?.ok_or_else(|| MetricsError::Malformed {
            line: get("accuracy").map(|x| x.0).unwrap_or(0),
            message: "accuracy cannot be undefined".into(),
        })?,
        precision: rate("precision")?,
        recall: rate("recall")?,
        f1: rate("f1")?,
        total: count("total")?,
    };
    Ok((report, cm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reported_matrix_metrics() {
        let cm = ConfusionMatrix::new(616, 92, 86, 1135);
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.accuracy, Ratio::new(1751, 1929));
        assert_eq!(round_half_up(&m.accuracy, 3), "0.908");
        assert_eq!(round_half_up(&m.precision.unwrap(), 3), "0.870");
        // 616/702 = 0.877492..., below the 0.8775 rounding boundary.
        assert_eq!(m.recall.unwrap(), Ratio::new(616, 702));
        assert_eq!(round_half_up(&m.recall.unwrap(), 3), "0.877");
        assert_eq!(round_half_up(&m.f1.unwrap(), 3), "0.874");
        assert!((rate_value(&m.accuracy) - 0.9077).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_degenerate_matrices() {
        let m = compute_metrics(&ConfusionMatrix::new(10, 0, 0, 10)).unwrap();
        let one = Ratio::from_integer(1);
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (one, Some(one), Some(one), Some(one)));

        let m = compute_metrics(&ConfusionMatrix::new(0, 0, 5, 5)).unwrap();
        assert_eq!(m.accuracy, Ratio::new(1, 2));
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(Ratio::from_integer(0)));
        assert_eq!(m.f1, None);

        assert_eq!(compute_metrics(&ConfusionMatrix::default()), Err(MetricsError::EmptyMatrix));
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(&Ratio::new(1, 8), 2), "0.13");
        assert_eq!(round_half_up(&Ratio::new(1, 2), 0), "1");
        assert_eq!(round_half_up(&Ratio::new(8745, 10000), 3), "0.875");
        assert_eq!(round_half_up(&Ratio::from_integer(1), 3), "1.000");
    }

    #[test]
    fn text_report_keeps_table_orientation() {
        let cm = ConfusionMatrix::new(616, 92, 86, 1135);
        let text = render_report(&compute_metrics(&cm).unwrap(), &cm, ReportFormat::Text);
        let ai_row = text.lines().find(|l| l.starts_with("Predicted AI-generated")).unwrap();
        let human_row = text.lines().find(|l| l.starts_with("Predicted Human-designed")).unwrap();
        assert_eq!(ai_row.split_whitespace().skip(2).collect::<Vec<_>>(), ["616", "92"]);
        assert_eq!(human_row.split_whitespace().skip(2).collect::<Vec<_>>(), ["86", "1135"]);
        assert!(text.contains("accuracy   0.908"));
        assert!(text.contains("positive class: ai_generated"));
    }

    #[test]
    fn undefined_propagates_to_reports() {
        let cm = ConfusionMatrix::new(0, 0, 0, 1);
        let m = compute_metrics(&cm).unwrap();
        assert!(render_report(&m, &cm, ReportFormat::Text).contains("precision  undefined"));
        let kv = render_report(&m, &cm, ReportFormat::MachineReadable);
        assert!(kv.contains("precision=undefined\n"));
        assert_eq!(parse_machine_report(&kv).unwrap(), (m, cm));
    }

    #[test]
    fn machine_parse_errors() {
        assert_eq!(parse_machine_report("tp=1\n"), Err(MetricsError::MissingKey("fp".into())));
        assert!(matches!(parse_machine_report("garbage"), Err(MetricsError::Malformed { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn scale_covariance(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500, k in 1u64..50) {
            let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
            prop_assume!(cm.total() > 0);
            prop_assert_eq!(compute_metrics(&cm).unwrap().accuracy, compute_metrics(&cm.scaled(k)).unwrap().accuracy);
            let (a, b) = (compute_metrics(&cm).unwrap(), compute_metrics(&cm.scaled(k)).unwrap());
            prop_assert_eq!((a.precision, a.recall, a.f1), (b.precision, b.recall, b.f1));
        }

        #[test]
        fn f1_between_precision_and_recall(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
            prop_assume!(cm.total() > 0);
            let m = compute_metrics(&cm).unwrap();
            if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f1) {
                prop_assert!(p.min(r) <= f && f <= p.max(r));
            }
        }

        #[test]
        fn machine_format_round_trips(tp in 0u64..5000, fp in 0u64..5000, fn_ in 0u64..5000, tn in 0u64..5000) {
            let cm = ConfusionMatrix::new(tp, fp, fn_, tn);
            prop_assume!(cm.total() > 0);
            let m = compute_metrics(&cm).unwrap();
            let text = render_report(&m, &cm, ReportFormat::MachineReadable);
            prop_assert_eq!(parse_machine_report(&text).unwrap(), (m, cm));
        }
    }
}
