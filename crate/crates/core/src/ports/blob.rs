//! Connected-component detector: dark pixels inside the page content are
//! dilated into blobs and every blob becomes one text group.

use serde::{Deserialize, Serialize};

use crate::detect::{DetTensor, Detector};
use crate::error::Result;
use crate::ingest::PageImage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InkBlobDetector {
    /// Pixels whose darkest channel is below this count as ink.
    pub ink_threshold: u8,
    /// Chebyshev radius used to merge nearby ink.
    pub dilate: u32,
    /// Blobs with fewer ink pixels are ignored.
    pub min_pixels: usize,
    pub score: f32,
}

impl Default for InkBlobDetector {
    fn default() -> Self {
        Self {
            ink_threshold: 200,
            dilate: 8,
            min_pixels: 16,
            score: 0.99,
        }
    }
}

fn dilate_1d(src: &[bool], len: usize, stride: usize, lines: usize, line_stride: usize, r: usize) -> Vec<bool> {
    let mut out = vec![false; src.len()];
    for l in 0..lines {
        let base = l * line_stride;
        let mut last: Option<usize> = None;
        // Forward pass marks cells within r after an ink cell, backward within r before.
        for i in 0..len {
            if src[base + i * stride] {
                last = Some(i);
            }
            if last.is_some_and(|j| i - j <= r) {
                out[base + i * stride] = true;
            }
        }
        last = None;
        for i in (0..len).rev() {
            if src[base + i * stride] {
                last = Some(i);
            }
            if last.is_some_and(|j| j - i <= r) {
                out[base + i * stride] = true;
            }
        }
    }
    out
}

impl InkBlobDetector {
    fn components(&self, page: &PageImage) -> Vec<(u32, u32, u32, u32)> {
        let content = page.content_box();
        let (x0, y0) = (content.x1 as u32, content.y1 as u32);
        let w = (content.x2 as u32).min(page.pixels.width()).saturating_sub(x0) as usize;
        let h = (content.y2 as u32).min(page.pixels.height()).saturating_sub(y0) as usize;
        if w == 0 || h == 0 {
            return Vec::new();
        }
        let ink: Vec<bool> = (0..h * w)
            .map(|i| {
                let p = page.pixels.get_pixel(x0 + (i % w) as u32, y0 + (i / w) as u32);
                p.0.into_iter().min().unwrap() < self.ink_threshold
            })
            .collect();
        let r = self.dilate as usize;
        let horizontal = dilate_1d(&ink, w, 1, h, w, r);
        let grown = dilate_1d(&horizontal, h, w, w, 1, r);

        let mut label = vec![usize::MAX; w * h];
        let mut out = Vec::new();
        for seed in 0..w * h {
            if !grown[seed] || label[seed] != usize::MAX {
                continue;
            }
            let id = out.len();
            label[seed] = id;
            let mut stack = vec![seed];
            let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
            let mut count = 0;
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                if ink[i] {
                    count += 1;
                    x1 = x1.min(x);
                    y1 = y1.min(y);
                    x2 = x2.max(x + 1);
                    y2 = y2.max(y + 1);
                }
                let neighbours = [
                    (x > 0).then(|| i - 1),
                    (x + 1 < w).then(|| i + 1),
                    (y > 0).then(|| i - w),
                    (y + 1 < h).then(|| i + w),
                ];
                for n in neighbours.into_iter().flatten() {
                    if grown[n] && label[n] == usize::MAX {
                        label[n] = id;
                        stack.push(n);
                    }
                }
            }
            out.push((count, (x1, y1, x2, y2)));
        }
        out.into_iter()
            .filter(|(count, _)| *count >= self.min_pixels.max(1))
            .map(|(_, (a, b, c, d))| (x0 + a as u32, y0 + b as u32, x0 + c as u32, y0 + d as u32))
            .collect()
    }
}

impl Detector for InkBlobDetector {
    fn detect(&self, page: &PageImage) -> Result<DetTensor> {
        let rows: Vec<Vec<f32>> = self
            .components(page)
            .into_iter()
            .map(|(x1, y1, x2, y2)| {
                let (w, h) = ((x2 - x1) as f32, (y2 - y1) as f32);
                vec![x1 as f32 + w / 2.0, y1 as f32 + h / 2.0, w, h, self.score]
            })
            .collect();
        DetTensor::from_rows(1, &rows)
    }
}
