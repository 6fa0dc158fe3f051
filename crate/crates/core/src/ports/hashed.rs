//! A deterministic stand-in backbone: every token id owns a pseudo-random
//! vector and each position sees its own vector plus the mean over the
//! active positions, so any pooling carries bag-of-tokens content.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classify::EmbeddingPort;
use crate::error::{Error, Result};
use crate::seed::derive_rng;
use crate::tokenizers::TokenSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashedBackbone {
    pub dim: usize,
    pub seed: u64,
}

impl HashedBackbone {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("backbone width must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    pub fn token_vector(&self, id: u32) -> Vec<f32> {
        let mut rng = derive_rng(&[b"hashed-backbone", &self.seed.to_le_bytes(), &id.to_le_bytes()]);
        (0..self.dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
    }
}

impl EmbeddingPort for HashedBackbone {
    fn hidden_dim(&self) -> usize {
        self.dim
    }

    fn hidden_states(&self, seq: &TokenSequence) -> Result<Vec<Vec<f32>>> {
        let own: Vec<Vec<f32>> = seq.ids.iter().map(|&id| self.token_vector(id)).collect();
        let active: Vec<usize> = (0..seq.len()).filter(|&i| seq.mask[i] == 1).collect();
        let mut context = vec![0.0f32; self.dim];
        for &i in &active {
            for (c, v) in context.iter_mut().zip(&own[i]) {
                *c += v;
            }
        }
        let n = active.len().max(1) as f32;
        context.iter_mut().for_each(|c| *c /= n);
        Ok(own
            .into_iter()
            .map(|v| v.iter().zip(&context).map(|(a, c)| a + c).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{embed, Pooling};
    use crate::tokenizers::MAX_LEN;

    #[test]
    fn deterministic_and_content_sensitive() {
        let b = HashedBackbone::new(16, 3).unwrap();
        let s1 = TokenSequence::pack(&[10, 11, 12], &[1], &[2], 0, MAX_LEN);
        let s2 = TokenSequence::pack(&[10, 11, 13], &[1], &[2], 0, MAX_LEN);
        let e1 = embed(&s1, &b, Pooling::Cls).unwrap();
        assert_eq!(e1, embed(&s1, &b, Pooling::Cls).unwrap());
        assert_ne!(e1, embed(&s2, &b, Pooling::Cls).unwrap());
        assert_eq!(b.hidden_states(&s1).unwrap().len(), MAX_LEN);
        assert_ne!(HashedBackbone::new(16, 4).unwrap().token_vector(10), b.token_vector(10));
        assert!(HashedBackbone::new(0, 1).is_err());
    }
}
