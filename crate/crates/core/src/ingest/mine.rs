use std::collections::BTreeMap;
use std::path::Path;

use lopdf::content::Content;
use lopdf::Encoding;
use lopdf::{Document, Object};

use super::DocumentKind;
use crate::error::{Error, Result};
use crate::geometry::BBox;

/// A run of embedded text, one per PDF text object (`BT … ET`).
#[derive(Clone, Debug, PartialEq)]
pub struct RawTextBlock {
    pub text: String,
    pub page: usize,
    pub bbox: Option<BBox>,
}

/// Extracts the embedded text layer of a born-digital document. An empty
/// result means the document has no text layer and should go through OCR.
pub trait TextMiner: Send + Sync {
    fn mine(&self, path: &Path) -> Result<Vec<RawTextBlock>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PdfTextMiner;

impl TextMiner for PdfTextMiner {
    fn mine(&self, path: &Path) -> Result<Vec<RawTextBlock>> {
        let corrupt = |message: String| Error::CorruptDocument {
            path: path.to_path_buf(),
            message,
        };
        let doc = Document::load(path).map_err(|e| corrupt(e.to_string()))?;
        let mut blocks = Vec::new();
        for (page_index, (_, page_id)) in doc.get_pages().into_iter().enumerate() {
            let fonts = doc.get_page_fonts(page_id).map_err(|e| corrupt(e.to_string()))?;
            let encodings: BTreeMap<Vec<u8>, Encoding> = fonts
                .into_iter()
                .filter_map(|(name, font)| Some((name, font.get_font_encoding(&doc).ok()?)))
                .collect();
            let data = doc.get_page_content(page_id);
            let content = Content::decode(&data).map_err(|e| corrupt(e.to_string()))?;
            mine_page(&content, &encodings, page_index, &mut blocks);
        }
        Ok(blocks)
    }
}

fn decode_string(encoding: Option<&Encoding>, bytes: &[u8]) -> String {
    match encoding.and_then(|enc| Document::decode_text(enc, bytes).ok()) {
        Some(s) => s,
        // Latin-1 fallback for fonts without a usable encoding.
        None => bytes.iter().map(|&b| b as char).collect(),
    }
}

fn mine_page(
    content: &Content,
    encodings: &BTreeMap<Vec<u8>, Encoding>,
    page: usize,
    out: &mut Vec<RawTextBlock>,
) {
    let mut encoding: Option<&Encoding> = None;
    let mut current: Option<String> = None;

    let flush = |text: String, out: &mut Vec<RawTextBlock>| {
        let lines: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        if !lines.is_empty() {
            out.push(RawTextBlock {
                text: lines.join("\n"),
                page,
                bbox: None,
            });
        }
    };

    for op in &content.operations {
        match op.operator.as_str() {
            "BT" => current = Some(String::new()),
            "ET" => {
                if let Some(text) = current.take() {
                    flush(text, out);
                }
            }
            "Tf" => {
                encoding = op
                    .operands
                    .first()
                    .and_then(|o| o.as_name().ok())
                    .and_then(|name| encodings.get(name));
            }
            "Td" | "TD" | "T*" | "Tm" => {
                if let Some(text) = current.as_mut() {
                    if !text.is_empty() && !text.ends_with('\n') {
                        text.push('\n');
                    }
                }
            }
            "Tj" | "'" | "\"" | "TJ" => {
                let Some(text) = current.as_mut() else { continue };
                if op.operator != "Tj" && op.operator != "TJ" && !text.is_empty() {
                    text.push('\n');
                }
                for operand in &op.operands {
                    match operand {
                        Object::String(bytes, _) => text.push_str(&decode_string(encoding, bytes)),
                        Object::Array(items) => {
                            for item in items {
                                match item {
                                    Object::String(bytes, _) => {
                                        text.push_str(&decode_string(encoding, bytes))
                                    }
                                    // Large negative kerning is a word gap.
                                    Object::Integer(n) if *n <= -250 => text.push(' '),
                                    Object::Real(n) if *n <= -250.0 => text.push(' '),
                                    _ => {}
                                }
                            }
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }
    if let Some(text) = current.take() {
        flush(text, out);
    }
}

/// Mines through an external program that prints plain text to stdout,
/// e.g. `antiword {input}`. Blank lines separate blocks; layout is unknown
/// and every block lands on page 0.
#[derive(Clone, Debug)]
pub struct ExternalTextMiner {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalTextMiner {
    /// Splits a shell-style `program arg …` line on whitespace. `{input}`
    /// is appended when no argument mentions it.
    pub fn from_command(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace().map(String::from);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty text miner command".into()))?;
        let mut args: Vec<String> = parts.collect();
        if !args.iter().any(|a| a.contains("{input}")) {
            args.push("{input}".into());
        }
        Ok(Self { program, args })
    }
}

impl TextMiner for ExternalTextMiner {
    fn mine(&self, path: &Path) -> Result<Vec<RawTextBlock>> {
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| a.replace("{input}", &path.to_string_lossy()))
            .collect();
        let output = std::process::Command::new(&self.program)
            .args(&args)
            .output()
            .map_err(|e| Error::port("doc text miner", format!("{}: {e}", self.program)))?;
        if !output.status.success() {
            return Err(Error::CorruptDocument {
                path: path.to_path_buf(),
                message: format!(
                    "{} exited with {}: {}",
                    self.program,
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            });
        }
        let text = String::from_utf8_lossy(&output.stdout);
        let mut blocks = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in text.lines().chain(std::iter::once("")) {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    blocks.push(RawTextBlock {
                        text: current.join(" "),
                        page: 0,
                        bbox: None,
                    });
                    current.clear();
                }
            } else {
                current.push(line.trim());
            }
        }
        Ok(blocks)
    }
}

/// Mines the text layer of `path`. PDFs use the built-in miner; word
/// documents need `doc_miner`. Image files have no text layer and are
/// rejected.
pub fn mine_text(path: impl AsRef<Path>, doc_miner: Option<&dyn TextMiner>) -> Result<Vec<RawTextBlock>> {
    let path = path.as_ref();
    match DocumentKind::detect(path)? {
        DocumentKind::Pdf => PdfTextMiner.mine(path),
        DocumentKind::Doc => doc_miner
            .ok_or_else(|| Error::port("doc text miner", "no miner configured for word documents"))?
            .mine(path),
        kind => Err(Error::UnsupportedDocument(format!(
            "{}: {kind:?} files have no text layer",
            path.display()
        ))),
    }
}
