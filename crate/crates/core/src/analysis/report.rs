//! Text renderings of analysis results.
//!
//! Numbers are printed with six decimals in CSV and markdown. JSON keeps
//! full precision so it parses back to the same value. CSV is comma
//! separated with LF line endings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::analysis::{ModelHint, SweepCurve};
use crate::feature_store::ValidationReport;
use crate::metrics::SimilarityMatrix;
use crate::vcr::{EpsPolicy, PruneManifest, VcrReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    Csv,
    Json,
    #[default]
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<ReportFormat, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(format!(
                "unknown format {other:?} (expected csv, json or markdown)"
            )),
        }
    }
}

/// Something that can be rendered as CSV, JSON and markdown.
pub trait Report: Serialize {
    fn to_csv(&self) -> String;
    fn to_markdown(&self) -> String;

    fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report types serialize");
        s.push('\n');
        s
    }
}

pub fn render_report<R: Report + ?Sized>(report: &R, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => report.to_csv(),
        ReportFormat::Json => report.to_json(),
        ReportFormat::Markdown => report.to_markdown(),
    }
}

fn num(v: f64) -> String {
    format!("{v:.6}")
}

/// Trailing markdown note for per-class thresholds; none for a fixed eps.
fn policy_note(out: &mut String, policy: &EpsPolicy) {
    if let EpsPolicy::Adaptive { base_eps, alpha } = policy {
        let _ = writeln!(
            out,
            "\nHeuristic adaptive eps per class: min(base_eps, alpha * nearest class distance), base_eps {}, alpha {}",
            num(*base_eps),
            num(*alpha)
        );
    }
}

fn csv_rows<I, R>(rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.write_record(row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 input")
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

/// Appends a markdown table. `align` holds one of `l`/`r` per column.
fn md_table(out: &mut String, header: &[&str], align: &str, rows: &[Vec<String>]) {
    let line = |cells: &mut dyn Iterator<Item = String>| {
        let joined: Vec<String> = cells.collect();
        format!("| {} |\n", joined.join(" | "))
    };
    out.push_str(&line(&mut header.iter().map(|h| md_cell(h))));
    let rule: Vec<&str> = align
        .chars()
        .map(|a| if a == 'r' { "---:" } else { ":---" })
        .collect();
    let _ = writeln!(out, "|{}|", rule.join("|"));
    for row in rows {
        out.push_str(&line(&mut row.iter().map(|c| md_cell(c))));
    }
}

impl Report for VcrReport {
    fn to_csv(&self) -> String {
        let header = ["class", "samples", "clusters", "vcr", "eps"].map(String::from);
        let rows = self.classes.iter().map(|c| {
            [
                c.class_name.clone(),
                c.sample_count.to_string(),
                c.cluster_count.to_string(),
                num(c.vcr),
                num(c.eps),
            ]
        });
        csv_rows(std::iter::once(header).chain(rows))
    }

    /// Index, class name and VCR, one row per class.
    fn to_markdown(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| vec![(i + 1).to_string(), c.class_name.clone(), num(c.vcr)])
            .collect();
        let mut out = String::new();
        md_table(&mut out, &["#", "Class", "VCR"], "rlr", &rows);
        policy_note(&mut out, &self.eps_policy);
        out
    }
}

impl Report for SimilarityMatrix {
    fn to_csv(&self) -> String {
        let header = std::iter::once("Class".to_string()).chain(self.class_names.iter().cloned());
        let rows = self
            .class_names
            .iter()
            .zip(&self.entries)
            .map(|(name, row)| {
                std::iter::once(name.clone())
                    .chain(row.iter().map(|&d| num(d)))
                    .collect::<Vec<_>>()
            });
        csv_rows(std::iter::once(header.collect::<Vec<_>>()).chain(rows))
    }

    fn to_markdown(&self) -> String {
        let mut out =
            String::from("Cosine distance between class centroids (lower = more similar)\n\n");
        let header: Vec<&str> = std::iter::once("Class")
            .chain(self.class_names.iter().map(String::as_str))
            .collect();
        let align: String = std::iter::once('l')
            .chain(std::iter::repeat_n('r', self.len()))
            .collect();
        let rows: Vec<Vec<String>> = self
            .class_names
            .iter()
            .zip(&self.entries)
            .map(|(name, row)| {
                std::iter::once(name.clone())
                    .chain(row.iter().map(|&d| num(d)))
                    .collect()
            })
            .collect();
        md_table(&mut out, &header, &align, &rows);
        out
    }
}

impl Report for SweepCurve {
    fn to_csv(&self) -> String {
        let header = ["class", "eps", "vcr", "clusters"].map(String::from);
        let rows = self.points.iter().map(|p| {
            [
                self.class_name.clone(),
                num(p.eps),
                num(p.vcr),
                p.cluster_count.to_string(),
            ]
        });
        csv_rows(std::iter::once(header).chain(rows))
    }

    fn to_markdown(&self) -> String {
        let mut out = format!("VCR sweep for class {}\n\n", md_cell(&self.class_name));
        let rows: Vec<Vec<String>> = self
            .points
            .iter()
            .map(|p| vec![num(p.eps), num(p.vcr), p.cluster_count.to_string()])
            .collect();
        md_table(&mut out, &["eps", "VCR", "Clusters"], "rrr", &rows);
        out
    }
}

impl Report for PruneManifest {
    fn to_csv(&self) -> String {
        let header = ["class", "eps", "original", "kept", "removed"].map(String::from);
        let rows = self.classes.iter().map(|c| {
            [
                c.name.clone(),
                num(c.eps),
                (c.kept.len() + c.removed.len()).to_string(),
                c.kept.len().to_string(),
                c.removed.len().to_string(),
            ]
        });
        csv_rows(std::iter::once(header).chain(rows))
    }

    fn to_markdown(&self) -> String {
        let mut rows: Vec<Vec<String>> = self
            .classes
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    num(c.eps),
                    (c.kept.len() + c.removed.len()).to_string(),
                    c.kept.len().to_string(),
                    c.removed.len().to_string(),
                ]
            })
            .collect();
        rows.push(vec![
            "Total".into(),
            String::new(),
            self.totals.original.to_string(),
            self.totals.optimized.to_string(),
            (self.totals.original - self.totals.optimized).to_string(),
        ]);
        let mut out = String::new();
        md_table(
            &mut out,
            &["Class", "eps", "Original", "Kept", "Removed"],
            "lrrrr",
            &rows,
        );
        policy_note(&mut out, &self.eps_policy);
        out
    }
}

impl Report for ModelHint {
    fn to_csv(&self) -> String {
        let header = [
            "verdict",
            "min_offdiag",
            "mean_offdiag",
            "class_a",
            "class_b",
            "low",
            "high",
        ]
        .map(String::from);
        let row = [
            self.verdict.to_string(),
            num(self.evidence.min_offdiag),
            num(self.evidence.mean_offdiag),
            self.evidence.most_confusable_pair.0.clone(),
            self.evidence.most_confusable_pair.1.clone(),
            num(self.low),
            num(self.high),
        ];
        csv_rows([header, row])
    }

    fn to_markdown(&self) -> String {
        let (a, b) = &self.evidence.most_confusable_pair;
        let mut out = String::new();
        let _ = writeln!(out, "Model hint (heuristic): **{}**\n", self.verdict);
        let _ = writeln!(
            out,
            "- closest class pair: {} / {} at {}",
            md_cell(a),
            md_cell(b),
            num(self.evidence.min_offdiag)
        );
        let _ = writeln!(
            out,
            "- mean off-diagonal distance: {}",
            num(self.evidence.mean_offdiag)
        );
        let _ = writeln!(
            out,
            "- thresholds: low {}, high {}",
            num(self.low),
            num(self.high)
        );
        out
    }
}

impl Report for ValidationReport {
    fn to_csv(&self) -> String {
        let header = ["code", "class", "row", "message"].map(String::from);
        let rows = self.violations.iter().map(|v| {
            [
                v.code.clone(),
                v.class.clone().unwrap_or_default(),
                v.row.map(|r| r.to_string()).unwrap_or_default(),
                v.message.clone(),
            ]
        });
        csv_rows(std::iter::once(header).chain(rows))
    }

    fn to_markdown(&self) -> String {
        let mut out = String::new();
        match self.dimension {
            Some(d) => {
                let _ = writeln!(out, "Dimension: {d}\n");
            }
            None => out.push_str("Dimension: unknown\n\n"),
        }
        let rows: Vec<Vec<String>> = self
            .classes
            .iter()
            .map(|c| vec![c.name.clone(), c.samples.to_string()])
            .collect();
        md_table(&mut out, &["Class", "Samples"], "lr", &rows);
        out.push('\n');
        if self.violations.is_empty() {
            out.push_str("No violations.\n");
        } else {
            let rows: Vec<Vec<String>> = self
                .violations
                .iter()
                .map(|v| {
                    vec![
                        v.code.clone(),
                        v.class.clone().unwrap_or_default(),
                        v.row.map(|r| r.to_string()).unwrap_or_default(),
                        v.message.clone(),
                    ]
                })
                .collect();
            md_table(
                &mut out,
                &["Code", "Class", "Row", "Message"],
                "lllr",
                &rows,
            );
        }
        out
    }
}
