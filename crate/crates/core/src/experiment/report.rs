use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One table row: a method combination and its test accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    /// Test accuracy in [0, 1].
    pub accuracy: f64,
    /// `float_accuracy − accuracy`, signed, in [−1, 1].
    pub drop: f64,
    /// Wall-clock seconds for this row's own work (not reproducible).
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    /// `.md` and `.markdown` select Markdown; anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("md" | "markdown") => ReportFormat::Markdown,
            _ => ReportFormat::Csv,
        }
    }
}

/// Quotes a CSV field when it contains a comma, quote or line break.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders rows with columns combination, accuracy, drop, time. Accuracy
/// and drop are percentages with two decimals.
pub fn render_report(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("report needs at least one row".into()));
    }
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str("combination,accuracy,drop,time_s\n");
            for r in rows {
                writeln!(out, "{},{:.2},{:.2},{:.1}", csv_field(&r.label), 100.0 * r.accuracy, 100.0 * r.drop, r.seconds).unwrap();
            }
        }
        ReportFormat::Markdown => {
            out.push_str("| Combination | Accuracy (%) | Drop (points) | Time (s) |\n");
            out.push_str("|---|---:|---:|---:|\n");
            for r in rows {
                writeln!(out, "| {} | {:.2} | {:.2} | {:.1} |", r.label.replace('|', "\\|"), 100.0 * r.accuracy, 100.0 * r.drop, r.seconds)
                    .unwrap();
            }
        }
    }
    Ok(out)
}

/// Writes [`render_report`] output to `path`.
pub fn emit_report(rows: &[ReportRow], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_report(rows, format)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn split_csv_line(line: &str) -> Result<Vec<String>> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match (quoted, c) {
            (true, '"') if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            (true, '"') => quoted = false,
            (false, '"') if cur.is_empty() => quoted = true,
            (false, ',') => fields.push(std::mem::take(&mut cur)),
            (_, c) => cur.push(c),
        }
    }
    if quoted {
        return Err(Error::Parse(format!("unterminated quote in {line:?}")));
    }
    fields.push(cur);
    Ok(fields)
}

/// Parses CSV produced by [`render_report`]. Values keep the two-decimal
/// rounding of the file.
pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("combination,accuracy,drop,time_s") => {}
        other => return Err(Error::Parse(format!("unexpected report header {other:?}"))),
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f = split_csv_line(line)?;
            if f.len() != 4 {
                return Err(Error::Parse(format!("expected 4 fields in {line:?}")));
            }
            let n = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
            Ok(ReportRow { label: f[0].clone(), accuracy: n(&f[1])? / 100.0, drop: n(&f[2])? / 100.0, seconds: n(&f[3])? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(label: &str) -> ReportRow {
        ReportRow { label: label.into(), accuracy: 0.9077, drop: 0.0838, seconds: 12.34 }
    }

    #[test]
    fn one_row_csv() {
        let text = render_report(&[row("naive")], ReportFormat::Csv).unwrap();
        assert_eq!(text, "combination,accuracy,drop,time_s\nnaive,90.77,8.38,12.3\n");
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn quoting_and_round_trip() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
        let rows = vec![row("DQ+QR"), row("odd, \"label\"")];
        let text = render_report(&rows, ReportFormat::Csv).unwrap();
        let back = parse_report_csv(&text).unwrap();
        assert_eq!(back[1].label, "odd, \"label\"");
        assert_eq!(render_report(&back, ReportFormat::Csv).unwrap(), text);
    }

    #[test]
    fn markdown_table_rows() {
        let rows: Vec<ReportRow> = (0..8).map(|i| row(&format!("r{i}"))).collect();
        let md = render_report(&rows, ReportFormat::Markdown).unwrap();
        // header + 8 rows, plus the alignment line
        assert_eq!(md.lines().filter(|l| !l.starts_with("|---")).count(), 9);
        assert!(render_report(&[], ReportFormat::Csv).is_err());
    }
}
