//! Line-delimited JSON records and text tables.

use std::fmt::Write as _;
use std::io::Write;

use imba_ids::trainer::StrategyResult;
use imba_ids::ClassReport;
use serde::Serialize;

#[derive(Serialize)]
struct ClassRecord<'a> {
    record: &'static str,
    class: &'a str,
    support: u64,
    precision: f64,
    recall: f64,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    record: &'static str,
    rows: u64,
    cba: f64,
    omega_imb: f64,
    confusion: &'a [Vec<u64>],
}

/// One `class` line per class, then a `summary` line.
pub fn write_report(report: &ClassReport, mut out: impl Write) -> std::io::Result<()> {
    for (i, class) in report.class_names.iter().enumerate() {
        let line = ClassRecord {
            record: "class",
            class,
            support: report.support[i],
            precision: report.precision[i],
            recall: report.recall[i],
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    let summary = SummaryRecord {
        record: "summary",
        rows: report.confusion.total(),
        cba: report.cba,
        omega_imb: report.omega_imb,
        confusion: report.confusion.rows(),
    };
    writeln!(out, "{}", serde_json::to_string(&summary)?)
}

#[derive(Serialize)]
struct CompareRecord<'a> {
    strategy: &'a str,
    best: bool,
    cba: f64,
    classes: &'a [String],
    precision: &'a [f64],
    recall: &'a [f64],
    predicted_non_benign: u64,
}

/// Index of the first result with the highest CBA.
pub fn best_index(results: &[StrategyResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if best.is_none_or(|b| r.report.cba > results[b].report.cba) {
            best = Some(i);
        }
    }
    best
}

pub fn write_comparison(results: &[StrategyResult], mut out: impl Write) -> std::io::Result<()> {
    let best = best_index(results);
    for (i, r) in results.iter().enumerate() {
        let line = CompareRecord {
            strategy: r.strategy.name(),
            best: best == Some(i),
            cba: r.report.cba,
            classes: &r.report.class_names,
            precision: &r.report.precision,
            recall: &r.report.recall,
            predicted_non_benign: r.report.predicted_non_benign(0),
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    Ok(())
}

/// Strategies as rows; per-class Pre and Rec columns, then CBA. The best row
/// is marked with `*`.
pub fn comparison_table(results: &[StrategyResult]) -> String {
    let Some(first) = results.first() else {
        return String::new();
    };
    let best = best_index(results);
    let classes = &first.report.class_names;
    let name_w = results
        .iter()
        .map(|r| r.strategy.name().len())
        .max()
        .unwrap_or(8)
        .max(8);
    let col_w = classes
        .iter()
        .map(|c| c.len() + 4)
        .max()
        .unwrap_or(7)
        .max(7);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "strategy");
    for c in classes {
        let _ = write!(
            out,
            "  {:>col_w$}  {:>col_w$}",
            format!("{c} Pre"),
            format!("{c} Rec")
        );
    }
    let _ = writeln!(out, "  {:>7}", "CBA");
    for (i, r) in results.iter().enumerate() {
        let _ = write!(out, "{:<name_w$}", r.strategy.name());
        for (p, rec) in r.report.precision.iter().zip(&r.report.recall) {
            let _ = write!(out, "  {p:>col_w$.2}  {rec:>col_w$.2}");
        }
        let mark = if best == Some(i) { " *" } else { "" };
        let _ = writeln!(out, "  {:>7.2}{mark}", r.report.cba);
    }
    out
}
