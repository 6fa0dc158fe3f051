use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use resume_ie::corpus::ClassLabel;
use resume_ie::metrics::{DetectionEval, F1Report};
use resume_ie::pipeline::ResumeExtraction;

use crate::args::{require, ReportArgs, ReportFormat};
use crate::commands::emit;

/// Output of `eval-text`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextEvalReport {
    pub classes: Vec<ClassLabel>,
    pub records: usize,
    pub report: F1Report,
    /// Rows are gold classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
}

/// Header plus rows, rendered as a Markdown or tab-separated table.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    fn render(&self, format: ReportFormat, out: &mut String) {
        match format {
            ReportFormat::Markdown => {
                let line = |cells: &[String]| {
                    let cells: Vec<String> = cells.iter().map(|c| c.replace('|', "\\|").replace('\n', " ")).collect();
                    format!("| {} |\n", cells.join(" | "))
                };
                out.push_str(&line(&self.header));
                out.push_str(&format!("|{}\n", "---|".repeat(self.header.len())));
                for r in &self.rows {
                    out.push_str(&line(r));
                }
            }
            ReportFormat::Tsv => {
                for r in std::iter::once(&self.header).chain(&self.rows) {
                    let cells: Vec<String> = r.iter().map(|c| c.replace(['\t', '\n'], " ")).collect();
                    out.push_str(&cells.join("\t"));
                    out.push('\n');
                }
            }
        }
    }
}

fn title(format: ReportFormat, text: &str, out: &mut String) {
    if format == ReportFormat::Markdown {
        let _ = writeln!(out, "## {text}\n");
    }
}

fn gap(format: ReportFormat, out: &mut String) {
    if format == ReportFormat::Markdown {
        out.push('\n');
    }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

pub fn render_extraction(doc: &ResumeExtraction, format: ReportFormat) -> String {
    let mut out = String::new();
    title(format, &doc.document_id, &mut out);
    let mut t = Table::new(&["class", "text", "probability", "page"]);
    for s in &doc.sections {
        t.row(vec![
            s.label.name().to_string(),
            s.text.clone(),
            f4(s.probabilities[s.label.id()]),
            s.page.to_string(),
        ]);
    }
    t.render(format, &mut out);
    out
}

pub fn render_text_eval(r: &TextEvalReport, format: ReportFormat) -> String {
    let mut out = String::new();
    title(format, &format!("Section classification ({} records)", r.records), &mut out);
    let mut t = Table::new(&["class", "precision", "recall", "f1", "support"]);
    for (class, s) in r.classes.iter().zip(&r.report.per_class) {
        t.row(vec![
            class.name().to_string(),
            f4(s.precision),
            f4(s.recall),
            f4(s.f1),
            s.support.to_string(),
        ]);
    }
    for (name, value) in [
        ("micro", r.report.micro),
        ("macro", r.report.macro_avg),
        ("weighted", r.report.weighted),
    ] {
        t.row(vec![format!("F1 {name}"), String::new(), String::new(), f4(value), String::new()]);
    }
    t.render(format, &mut out);
    gap(format, &mut out);

    title(format, "Confusion matrix (rows gold, columns predicted)", &mut out);
    let mut header = vec![String::new()];
    header.extend(r.classes.iter().map(|c| c.name().to_string()));
    let mut cm = Table {
        header,
        rows: Vec::new(),
    };
    for (class, row) in r.classes.iter().zip(&r.confusion) {
        let mut cells = vec![class.name().to_string()];
        cells.extend(row.iter().map(u64::to_string));
        cm.row(cells);
    }
    cm.render(format, &mut out);
    out
}

pub fn render_detection_eval(e: &DetectionEval, format: ReportFormat) -> String {
    let mut out = String::new();
    title(format, "Text-group detection", &mut out);
    let mut t = Table::new(&["class", "AP50", "AP50-95"]);
    for (c, aps) in e.per_class.iter().enumerate() {
        let Some(aps) = aps else { continue };
        let mean = aps.iter().sum::<f64>() / aps.len() as f64;
        t.row(vec![c.to_string(), f4(aps[0]), f4(mean)]);
    }
    t.row(vec!["all".into(), f4(e.map50), f4(e.map50_95)]);
    t.render(format, &mut out);
    out
}

/// Picks the renderer from the document's top-level fields.
pub fn render(text: &str, format: ReportFormat) -> Result<String> {
    let value: serde_json::Value = serde_json::from_str(text).context("input is not JSON")?;
    let has = |key: &str| value.get(key).is_some();
    if has("schema_version") {
        let doc: ResumeExtraction = serde_json::from_value(value)?;
        doc.validate()?;
        Ok(render_extraction(&doc, format))
    } else if has("confusion") {
        Ok(render_text_eval(&serde_json::from_value(value)?, format))
    } else if has("map50") {
        Ok(render_detection_eval(&serde_json::from_value(value)?, format))
    } else {
        bail!("not an extraction, eval-text or eval-detect document")
    }
}

pub fn export(a: ReportArgs) -> Result<()> {
    let input = require(&a.input, "input")?;
    let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
    let out = render(&text, a.format.unwrap_or_default()).with_context(|| input.display().to_string())?;
    emit(a.output.as_deref(), &out)
}
