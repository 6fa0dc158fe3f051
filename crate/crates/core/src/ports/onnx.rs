//! Adapters for exported interchange-format models, run with tract.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::RgbImage;
use tract_onnx::prelude::*;

use super::PortManifest;
use crate::classify::EmbeddingPort;
use crate::detect::{DetTensor, Detector};
use crate::error::{Error, Result};
use crate::ingest::{PageImage, CANVAS_SIZE};
use crate::ocr::{Charset, LogitSeq, Recognizer};
use crate::tokenizers::{TokenSequence, MAX_LEN};

type Plan = Arc<TypedRunnableModel>;

fn port_err(port: &'static str) -> impl Fn(TractError) -> Error {
    move |e| Error::port(port, format!("{e:#}"))
}

fn input_shape(manifest: &PortManifest, index: usize) -> Option<Vec<i64>> {
    manifest.inputs.get(index).map(|t| t.shape.clone())
}

fn load_plan(path: &Path, fixed_inputs: &[(DatumType, Option<Vec<usize>>)], port: &'static str) -> Result<Plan> {
    let mut model = tract_onnx::onnx().model_for_path(path).map_err(port_err(port))?;
    for (i, (dt, shape)) in fixed_inputs.iter().enumerate() {
        if let Some(shape) = shape {
            let fact = InferenceFact::dt_shape(*dt, shape.as_slice());
            model = model.with_input_fact(i, fact).map_err(port_err(port))?;
        }
    }
    model
        .into_optimized()
        .and_then(|m| m.into_runnable())
        .map_err(port_err(port))
}

fn concrete(shape: &Option<Vec<i64>>) -> Option<Vec<usize>> {
    shape
        .as_ref()
        .filter(|s| s.iter().all(|&d| d > 0))
        .map(|s| s.iter().map(|&d| d as usize).collect())
}

fn target(manifest: &PortManifest, port: &'static str) -> Result<std::path::PathBuf> {
    manifest
        .target_path()
        .ok_or_else(|| Error::port(port, "manifest has no target model file"))
}

fn image_tensor(image: &RgbImage, channels: usize) -> Result<Tensor> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut data = vec![0f32; channels * h * w];
    for (x, y, p) in image.enumerate_pixels() {
        let (x, y) = (x as usize, y as usize);
        if channels == 1 {
            let [r, g, b] = p.0.map(f32::from);
            data[y * w + x] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
        } else {
            for c in 0..3 {
                data[c * h * w + y * w + x] = f32::from(p.0[c]) / 255.0;
            }
        }
    }
    Tensor::from_shape(&[1, channels, h, w], &data).map_err(port_err("onnx"))
}

/// Single-output detector with a `1×3×640×640` RGB input scaled to [0, 1]
/// and a `1×(4+C)×N` (or `1×N×(4+C)`) output of centre boxes and class
/// scores.
pub struct OnnxDetector {
    plan: Plan,
}

impl OnnxDetector {
    pub fn from_manifest(manifest: &PortManifest) -> Result<Self> {
        let shape = vec![1, 3, CANVAS_SIZE as usize, CANVAS_SIZE as usize];
        Ok(Self {
            plan: load_plan(&target(manifest, "detector")?, &[(DatumType::F32, Some(shape))], "detector")?,
        })
    }
}

impl Detector for OnnxDetector {
    fn detect(&self, page: &PageImage) -> Result<DetTensor> {
        let input = image_tensor(&page.pixels, 3)?;
        let out = self.plan.run(tvec!(input.into())).map_err(port_err("detector"))?;
        let view = out[0].to_plain_array_view::<f32>().map_err(port_err("detector"))?;
        let shape = view.shape().to_vec();
        if shape.len() != 3 || shape[0] != 1 {
            return Err(Error::port("detector", format!("unexpected output shape {shape:?}")));
        }
        let channels_first = shape[1] < shape[2];
        let (width, n) = if channels_first { (shape[1], shape[2]) } else { (shape[2], shape[1]) };
        if width < 5 {
            return Err(Error::port("detector", format!("output rows of width {width} carry no class scores")));
        }
        let mut data = Vec::with_capacity(width * n);
        for i in 0..n {
            for c in 0..width {
                data.push(if channels_first { view[[0, c, i]] } else { view[[0, i, c]] });
            }
        }
        DetTensor::new(width - 4, data)
    }
}

/// Recognizer over `1×C×H×W` inputs (C = 1 grey or 3 RGB, scaled to [0, 1]).
/// Crops are resized to height H, and to width W when W is fixed, else
/// keeping the aspect ratio. The output, `T×1×K`, `1×T×K` or `T×K`, is read
/// as T timesteps of K = charset + 1 logits.
pub struct OnnxRecognizer {
    plan: Plan,
    charset: Charset,
    channels: usize,
    height: u32,
    width: Option<u32>,
}

impl OnnxRecognizer {
    pub fn from_manifest(manifest: &PortManifest, charset: Charset) -> Result<Self> {
        let shape = input_shape(manifest, 0)
            .filter(|s| s.len() == 4 && s[2] > 0)
            .ok_or_else(|| Error::port("recognizer", "manifest input must be 1×C×H×W with a fixed H"))?;
        let channels = if shape[1] == 1 { 1 } else { 3 };
        let fixed = concrete(&Some(shape.clone()));
        Ok(Self {
            plan: load_plan(&target(manifest, "recognizer")?, &[(DatumType::F32, fixed)], "recognizer")?,
            charset,
            channels,
            height: shape[2] as u32,
            width: (shape[3] > 0).then_some(shape[3] as u32),
        })
    }
}

impl Recognizer for OnnxRecognizer {
    fn charset(&self) -> &Charset {
        &self.charset
    }

    fn recognize(&self, crop: &RgbImage) -> Result<LogitSeq> {
        let width = self.width.unwrap_or_else(|| {
            ((crop.width() as f64 * self.height as f64 / crop.height().max(1) as f64).round() as u32).max(1)
        });
        let resized = imageops::resize(crop, width, self.height, FilterType::Triangle);
        let input = image_tensor(&resized, self.channels)?;
        let out = self.plan.run(tvec!(input.into())).map_err(port_err("recognizer"))?;
        let view = out[0].to_plain_array_view::<f32>().map_err(port_err("recognizer"))?;
        let shape = view.shape().to_vec();
        let classes = *shape.last().unwrap_or(&0);
        let steps = match shape.as_slice() {
            [t, 1, _] | [1, t, _] | [t, _] => *t,
            _ => return Err(Error::port("recognizer", format!("unexpected output shape {shape:?}"))),
        };
        let data: Vec<f32> = view.iter().copied().collect();
        debug_assert_eq!(data.len(), steps * classes);
        LogitSeq::new(classes, data)
    }
}

/// Backbone with `input_ids` and `attention_mask` inputs (`1×75`, int64)
/// and a `1×75×D` hidden-state output.
pub struct OnnxBackbone {
    plan: Plan,
    dim: usize,
}

impl OnnxBackbone {
    pub fn from_manifest(manifest: &PortManifest) -> Result<Self> {
        let dim = manifest
            .outputs
            .first()
            .and_then(|o| o.shape.last().copied())
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::port("backbone", "manifest output must declare the hidden width"))?;
        let ids = (DatumType::I64, Some(vec![1, MAX_LEN]));
        let mut inputs = vec![ids.clone()];
        if manifest.inputs.len() > 1 {
            inputs.push(ids);
        }
        Ok(Self {
            plan: load_plan(&target(manifest, "backbone")?, &inputs, "backbone")?,
            dim: dim as usize,
        })
    }
}

impl EmbeddingPort for OnnxBackbone {
    fn hidden_dim(&self) -> usize {
        self.dim
    }

    fn hidden_states(&self, seq: &TokenSequence) -> Result<Vec<Vec<f32>>> {
        let ids: Vec<i64> = seq.ids.iter().map(|&i| i64::from(i)).collect();
        let mask: Vec<i64> = seq.mask.iter().map(|&m| i64::from(m)).collect();
        let n = seq.len();
        let mut inputs: TVec<TValue> = tvec!(Tensor::from_shape(&[1, n], &ids).map_err(port_err("backbone"))?.into());
        if self.plan.model().inputs.len() > 1 {
            inputs.push(Tensor::from_shape(&[1, n], &mask).map_err(port_err("backbone"))?.into());
        }
        let out = self.plan.run(inputs).map_err(port_err("backbone"))?;
        let view = out[0].to_plain_array_view::<f32>().map_err(port_err("backbone"))?;
        if view.shape() != [1, n, self.dim] {
            return Err(Error::port("backbone", format!("unexpected output shape {:?}", view.shape())));
        }
        Ok((0..n).map(|i| (0..self.dim).map(|d| view[[0, i, d]]).collect()).collect())
    }
}
