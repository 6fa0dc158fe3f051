use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::corpus::NUM_CLASSES;
use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 128;
pub const DEFAULT_DROPOUT: f64 = 0.1;

const MAGIC: &[u8; 8] = b"RIEHEAD\0";
const FORMAT_VERSION: u32 = 1;

/// `dropout → linear(D→H) → ReLU → dropout → linear(H→5)`.
///
/// Parameters live in one flat vector laid out as W1 (H×D, row-major), b1
/// (H), W2 (5×H, row-major), b2 (5).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    input_dim: usize,
    hidden_dim: usize,
    dropout: f64,
    params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub input_mask: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden_mask: Vec<f64>,
    pub logits: [f64; NUM_CLASSES],
}

fn param_count(d: usize, h: usize) -> usize {
    h * d + h + NUM_CLASSES * h + NUM_CLASSES
}

fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout must lie in [0, 1), got {p}")))
    }
}

impl ClassifierHead {
    pub fn zeros(input_dim: usize, hidden_dim: usize, dropout: f64) -> Result<Self> {
        check_dropout(dropout)?;
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Shape("head dimensions must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            dropout,
            params: vec![0.0; param_count(input_dim, hidden_dim)],
        })
    }

    /// Uniform init in ±1/√fan_in for every weight and bias.
    pub fn random(input_dim: usize, hidden_dim: usize, dropout: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut head = Self::zeros(input_dim, hidden_dim, dropout)?;
        let (w1, rest) = head.params.split_at_mut(hidden_dim * input_dim + hidden_dim);
        let b1 = 1.0 / (input_dim as f64).sqrt();
        w1.iter_mut().for_each(|w| *w = rng.gen_range(-b1..b1));
        let b2 = 1.0 / (hidden_dim as f64).sqrt();
        rest.iter_mut().for_each(|w| *w = rng.gen_range(-b2..b2));
        Ok(head)
    }

    pub fn from_params(input_dim: usize, hidden_dim: usize, dropout: f64, params: Vec<f64>) -> Result<Self> {
        let mut head = Self::zeros(input_dim, hidden_dim, dropout)?;
        if params.len() != head.params.len() {
            return Err(Error::Shape(format!(
                "expected {} head parameters, got {}",
                head.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Checkpoint("non-finite head parameter".into()));
        }
        head.params = params;
        Ok(head)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden_dim * self.input_dim;
        let w2 = b1 + self.hidden_dim;
        let b2 = w2 + NUM_CLASSES * self.hidden_dim;
        (b1, w2, b2)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "head expects {} inputs, got {}",
                self.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Dropout mask entries: 0 for dropped units, 1/(1-p) for kept ones.
    pub fn sample_masks(&self, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
        let keep = 1.0 - self.dropout;
        let mut mask = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if self.dropout > 0.0 && rng.gen::<f64>() < self.dropout { 0.0 } else { 1.0 / keep })
                .collect()
        };
        let input = mask(self.input_dim);
        let hidden = mask(self.hidden_dim);
        (input, hidden)
    }

    /// Forward pass with explicit dropout masks.
    pub fn forward_masked(&self, x: &[f64], input_mask: &[f64], hidden_mask: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        if input_mask.len() != self.input_dim || hidden_mask.len() != self.hidden_dim {
            return Err(Error::Shape("dropout mask size mismatch".into()));
        }
        let (b1_at, w2_at, b2_at) = self.offsets();
        let (d, h) = (self.input_dim, self.hidden_dim);
        let xd: Vec<f64> = x.iter().zip(input_mask).map(|(a, m)| a * m).collect();
        let hidden_pre: Vec<f64> = (0..h)
            .map(|j| {
                let row = &self.params[j * d..(j + 1) * d];
                self.params[b1_at + j] + row.iter().zip(&xd).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        let act: Vec<f64> = hidden_pre
            .iter()
            .zip(hidden_mask)
            .map(|(z, m)| z.max(0.0) * m)
            .collect();
        let mut logits = [0.0; NUM_CLASSES];
        for (k, out) in logits.iter_mut().enumerate() {
            let row = &self.params[w2_at + k * h..w2_at + (k + 1) * h];
            *out = self.params[b2_at + k] + row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
        }
        Ok(ForwardTrace {
            input: x.to_vec(),
            input_mask: input_mask.to_vec(),
            hidden_pre,
            hidden_mask: hidden_mask.to_vec(),
            logits,
        })
    }

    /// Training-mode forward pass: fresh dropout masks from `rng`.
    pub fn forward_train(&self, x: &[f64], rng: &mut impl Rng) -> Result<ForwardTrace> {
        let (mi, mh) = self.sample_masks(rng);
        self.forward_masked(x, &mi, &mh)
    }

    /// Evaluation-mode logits (dropout off).
    pub fn forward(&self, x: &[f64]) -> Result<[f64; NUM_CLASSES]> {
        let ones_in = vec![1.0; self.input_dim];
        let ones_h = vec![1.0; self.hidden_dim];
        Ok(self.forward_masked(x, &ones_in, &ones_h)?.logits)
    }

    /// Adds ∂L/∂θ to `grads` given ∂L/∂logits for the traced pass.
    pub fn backward(&self, trace: &ForwardTrace, dlogits: &[f64; NUM_CLASSES], grads: &mut [f64]) {
        let (b1_at, w2_at, b2_at) = self.offsets();
        let (d, h) = (self.input_dim, self.hidden_dim);
        let mut dact = vec![0.0; h];
        for (k, &g) in dlogits.iter().enumerate() {
            grads[b2_at + k] += g;
            for j in 0..h {
                let a = trace.hidden_pre[j].max(0.0) * trace.hidden_mask[j];
                grads[w2_at + k * h + j] += g * a;
                dact[j] += g * self.params[w2_at + k * h + j];
            }
        }
        for j in 0..h {
            if trace.hidden_pre[j] <= 0.0 {
                continue;
            }
            let dz = dact[j] * trace.hidden_mask[j];
            grads[b1_at + j] += dz;
            for i in 0..d {
                grads[j * d + i] += dz * trace.input[i] * trace.input_mask[i];
            }
        }
    }

    /// Versioned little-endian layout: magic, format version, D, H, class
    /// count (u32 each), dropout (f64), then every parameter as f64.
    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        for v in [FORMAT_VERSION, self.input_dim as u32, self.hidden_dim as u32, NUM_CLASSES as u32] {
            out.write_all(&v.to_le_bytes())?;
        }
        out.write_all(&self.dropout.to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + 8 * self.params.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| Error::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        bytes.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
        if &magic != MAGIC {
            return Err(corrupt("not a head checkpoint"));
        }
        let mut word = [0u8; 4];
        let mut header = [0u32; 4];
        for v in header.iter_mut() {
            bytes.read_exact(&mut word).map_err(|_| corrupt("truncated header"))?;
            *v = u32::from_le_bytes(word);
        }
        let [version, d, h, k] = header;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        if k as usize != NUM_CLASSES {
            return Err(Error::Checkpoint(format!("checkpoint has {k} classes, expected {NUM_CLASSES}")));
        }
        let mut dword = [0u8; 8];
        bytes.read_exact(&mut dword).map_err(|_| corrupt("truncated header"))?;
        let dropout = f64::from_le_bytes(dword);
        let n = param_count(d as usize, h as usize);
        if bytes.len() != 8 * n {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter bytes, found {}",
                8 * n,
                bytes.len()
            )));
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        check_dropout(dropout).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_params(d as usize, h as usize, dropout, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::softmax;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_head_is_uniform() {
        let head = ClassifierHead::zeros(4, 3, 0.1).unwrap();
        let logits = head.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(logits, [0.0; NUM_CLASSES]);
        assert!(softmax(&logits).iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ClassifierHead::random(6, 4, 0.5, &mut rng).unwrap();
        let x = [0.3, -0.1, 0.7, 0.0, 1.0, -2.0];
        assert_eq!(head.forward(&x).unwrap(), head.forward(&x).unwrap());
        assert!(head.forward(&[0.0; 5]).is_err());
    }

    #[test]
    fn dropout_masks_scale_kept_units() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let head = ClassifierHead::zeros(1000, 10, 0.25).unwrap();
        let (mi, _) = head.sample_masks(&mut rng);
        let kept = mi.iter().filter(|&&m| m > 0.0).count();
        assert!(mi.iter().all(|&m| m == 0.0 || (m - 1.0 / 0.75).abs() < 1e-15));
        assert!((700..800).contains(&kept));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let head = ClassifierHead::random(7, 5, 0.1, &mut rng).unwrap();
        let bytes = head.to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        let back = ClassifierHead::from_bytes(&bytes).unwrap();
        assert_eq!(back, head);
        assert_eq!(back.to_bytes(), bytes);

        assert!(ClassifierHead::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        assert!(matches!(ClassifierHead::from_bytes(&wrong_version), Err(Error::Checkpoint(_))));
        assert!(ClassifierHead::from_bytes(b"garbage").is_err());
    }
}
