//! Port implementations and the manifest documents that select them.
//!
//! A manifest is a JSON document naming the adapter `kind` plus either
//! inline `params` (built-in stand-ins) or an exported model file
//! (`target`) whose SHA-256 must match the recorded `sha256`:
//!
//! ```json
//! {"kind": "onnx", "source": "distilbert-base-uncased", "target": "backbone.onnx",
//!  "sha256": "…", "inputs": [{"name": "input_ids", "shape": [1, 75]}],
//!  "outputs": [{"name": "last_hidden_state", "shape": [1, 75, 768]}]}
//! ```
//!
//! Built-in kinds: `ink_blob` (detector), `glyph_strip` (recognizer) and
//! `hashed` (backbone). `onnx` needs the `onnx` cargo feature.

mod blob;
mod glyph;
mod hashed;
#[cfg(feature = "onnx")]
mod onnx;
mod tables;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::EmbeddingPort;
use crate::detect::Detector;
use crate::error::{Error, Result};
use crate::ocr::{Charset, Recognizer};

pub use blob::InkBlobDetector;
pub use glyph::{ascii_charset, GlyphFont, GlyphStripParams, GlyphStripRecognizer};
pub use hashed::HashedBackbone;
#[cfg(feature = "onnx")]
pub use onnx::{OnnxBackbone, OnnxDetector, OnnxRecognizer};
pub use tables::{DictionaryTranslator, SimilarityTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    /// Negative entries mark dynamic axes.
    pub shape: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortManifest {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<TensorSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<TensorSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sidecars: BTreeMap<String, PathBuf>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(skip)]
    base_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl PortManifest {
    pub fn builtin(kind: &str, params: serde_json::Value) -> Self {
        Self {
            kind: kind.to_string(),
            source: None,
            target: None,
            sha256: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            sidecars: BTreeMap::new(),
            params,
            base_dir: PathBuf::new(),
        }
    }

    /// Reads a manifest and checks the hash of its model file, if any.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.verify()?;
        Ok(m)
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        self.base_dir.join(relative)
    }

    pub fn target_path(&self) -> Option<PathBuf> {
        self.target.as_deref().map(|t| self.resolve(t))
    }

    pub fn sidecar(&self, name: &str) -> Option<PathBuf> {
        self.sidecars.get(name).map(|p| self.resolve(p))
    }

    fn verify(&self) -> Result<()> {
        let Some(target) = self.target_path() else {
            return Ok(());
        };
        let expected = self
            .sha256
            .as_deref()
            .ok_or_else(|| Error::Config(format!("manifest for {} lacks sha256", target.display())))?;
        let bytes = std::fs::read(&target).map_err(|e| Error::io(&target, e))?;
        let actual = sha256_hex(&bytes);
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(Error::Config(format!(
                "{} hash mismatch: manifest {expected}, file {actual}",
                target.display()
            )));
        }
        Ok(())
    }

    fn params<T: DeserializeOwned + Default>(&self) -> Result<T> {
        if self.params.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.params.clone())
            .map_err(|e| Error::Config(format!("{} params: {e}", self.kind)))
    }

    fn unsupported(&self, role: &str) -> Error {
        if self.kind == "onnx" && cfg!(not(feature = "onnx")) {
            Error::Config(format!("{role} manifest needs the onnx feature, which this build lacks"))
        } else {
            Error::Config(format!("unknown {role} kind {:?}", self.kind))
        }
    }

    pub fn detector(&self) -> Result<Box<dyn Detector>> {
        match self.kind.as_str() {
            "ink_blob" => Ok(Box::new(self.params::<InkBlobDetector>()?)),
            #[cfg(feature = "onnx")]
            "onnx" => Ok(Box::new(OnnxDetector::from_manifest(self)?)),
            _ => Err(self.unsupported("detector")),
        }
    }

    pub fn recognizer(&self, charset: Charset) -> Result<Box<dyn Recognizer>> {
        match self.kind.as_str() {
            "glyph_strip" => Ok(Box::new(GlyphStripRecognizer::with_params(
                charset,
                &self.params::<GlyphStripParams>()?,
            ))),
            #[cfg(feature = "onnx")]
            "onnx" => Ok(Box::new(OnnxRecognizer::from_manifest(self, charset)?)),
            _ => Err(self.unsupported("recognizer")),
        }
    }

    pub fn backbone(&self) -> Result<Arc<dyn EmbeddingPort>> {
        match self.kind.as_str() {
            "hashed" => {
                let p: HashedBackbone = serde_json::from_value(self.params.clone())
                    .map_err(|e| Error::Config(format!("hashed params: {e}")))?;
                Ok(Arc::new(HashedBackbone::new(p.dim, p.seed)?))
            }
            #[cfg(feature = "onnx")]
            "onnx" => Ok(Arc::new(OnnxBackbone::from_manifest(self)?)),
            _ => Err(self.unsupported("backbone")),
        }
    }
}
