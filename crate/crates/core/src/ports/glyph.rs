//! A column "barcode" font and the recognizer that reads it back.
//!
//! Every character is one column of eight square cells: a black start cell
//! followed by its charset index in seven bits, most significant first
//! (black = 1, grey = 0). Glyphs are separated by one white cell, lines by
//! four. The recognizer emits one confident timestep per glyph, a blank
//! after each glyph and a space between lines, so text drawn with
//! [`GlyphFont`] decodes back exactly through greedy CTC as long as the
//! rendering survives at least a 2× downscale.

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::ocr::{Charset, LogitSeq, Recognizer, BLANK_INDEX};

const CELLS: u32 = 8;
const BITS: u32 = 7;
const LINE_GAP_CELLS: u32 = 4;
const BLACK: u8 = 0;
const GREY: u8 = 150;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlyphFont {
    /// Cell edge in pixels.
    pub cell: u32,
}

impl Default for GlyphFont {
    fn default() -> Self {
        Self { cell: 4 }
    }
}

impl GlyphFont {
    pub fn advance(&self) -> u32 {
        2 * self.cell
    }

    pub fn line_height(&self) -> u32 {
        CELLS * self.cell
    }

    pub fn line_pitch(&self) -> u32 {
        (CELLS + LINE_GAP_CELLS) * self.cell
    }

    /// Greedy word wrap at single spaces; `lines.join(" ")` gives `text`
    /// back. Words longer than a line overflow.
    pub fn wrap(&self, text: &str, max_width: u32) -> Vec<String> {
        let max_chars = (max_width / self.advance()).max(1) as usize;
        let mut lines: Vec<String> = Vec::new();
        let mut current: Option<String> = None;
        for word in text.split(' ') {
            current = Some(match current.take() {
                None => word.to_string(),
                Some(line) if line.chars().count() + 1 + word.chars().count() <= max_chars => {
                    format!("{line} {word}")
                }
                Some(line) => {
                    lines.push(line);
                    word.to_string()
                }
            });
        }
        lines.extend(current);
        lines
    }

    /// Draws wrapped `text` with its top-left corner at `(x, y)`; returns the
    /// inked box.
    pub fn draw(&self, image: &mut RgbImage, x: u32, y: u32, text: &str, max_width: u32, charset: &Charset) -> Result<BBox> {
        let lines = self.wrap(text, max_width);
        let mut right = x;
        for (row, line) in lines.iter().enumerate() {
            let top = y + row as u32 * self.line_pitch();
            for (col, ch) in line.chars().enumerate() {
                let index = charset
                    .index_of(&ch.to_string())
                    .filter(|&i| i < (1 << BITS))
                    .ok_or_else(|| Error::port("glyph font", format!("character {ch:?} has no glyph")))?;
                let left = x + col as u32 * self.advance();
                self.draw_glyph(image, left, top, index)?;
                right = right.max(left + self.cell);
            }
        }
        let bottom = y + lines.len().saturating_sub(1) as u32 * self.line_pitch() + self.line_height();
        Ok(BBox::new(x as f64, y as f64, right as f64, bottom as f64))
    }

    fn draw_glyph(&self, image: &mut RgbImage, left: u32, top: u32, index: usize) -> Result<()> {
        if left + self.cell > image.width() || top + self.line_height() > image.height() {
            return Err(Error::port("glyph font", "text runs off the page"));
        }
        for k in 0..CELLS {
            let black = k == 0 || (index >> (BITS - k)) & 1 == 1;
            let value = if black { BLACK } else { GREY };
            for dy in 0..self.cell {
                for dx in 0..self.cell {
                    image.put_pixel(left + dx, top + k * self.cell + dy, Rgb([value; 3]));
                }
            }
        }
        Ok(())
    }
}

/// Reads [`GlyphFont`] text from a crop at any scale.
#[derive(Clone, Debug)]
pub struct GlyphStripRecognizer {
    charset: Charset,
    pub ink_threshold: u8,
    pub black_threshold: u8,
    pub confidence_logit: f32,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlyphStripParams {
    pub ink_threshold: Option<u8>,
    pub black_threshold: Option<u8>,
}

fn runs(flags: impl Iterator<Item = bool>) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, f) in flags.enumerate() {
        n = i as u32 + 1;
        match (f, start) {
            (true, None) => start = Some(i as u32),
            (false, Some(s)) => {
                out.push((s, i as u32));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, n));
    }
    out
}

fn darkness(p: &Rgb<u8>) -> u8 {
    p.0.into_iter().min().unwrap()
}

impl GlyphStripRecognizer {
    pub fn new(charset: Charset) -> Self {
        Self {
            charset,
            ink_threshold: 200,
            black_threshold: 75,
            confidence_logit: 8.0,
        }
    }

    pub fn with_params(charset: Charset, params: &GlyphStripParams) -> Self {
        let mut r = Self::new(charset);
        if let Some(t) = params.ink_threshold {
            r.ink_threshold = t;
        }
        if let Some(t) = params.black_threshold {
            r.black_threshold = t;
        }
        r
    }

    fn read_glyph(&self, crop: &RgbImage, x: u32, top: u32, height: u32) -> Option<usize> {
        let cell = |k: u32| {
            let y = top + ((2 * k + 1) * height) / (2 * CELLS);
            darkness(crop.get_pixel(x, y.min(crop.height() - 1)))
        };
        if cell(0) >= self.black_threshold {
            return None;
        }
        let mut index = 0usize;
        for k in 1..CELLS {
            let v = cell(k);
            if v >= self.ink_threshold {
                return None;
            }
            index = (index << 1) | usize::from(v < self.black_threshold);
        }
        (index != BLANK_INDEX && index < self.charset.num_classes()).then_some(index)
    }

    fn step(&self, class: usize) -> Vec<f32> {
        let mut row = vec![0.0; self.charset.num_classes()];
        row[class] = self.confidence_logit;
        row
    }
}

impl Recognizer for GlyphStripRecognizer {
    fn charset(&self) -> &Charset {
        &self.charset
    }

    fn recognize(&self, crop: &RgbImage) -> Result<LogitSeq> {
        let ink = |x: u32, y: u32| darkness(crop.get_pixel(x, y)) < self.ink_threshold;
        let (w, h) = crop.dimensions();
        let bands: Vec<(u32, u32)> = runs((0..h).map(|y| (0..w).any(|x| ink(x, y))))
            .into_iter()
            .filter(|(a, b)| b - a >= CELLS)
            .collect();
        let space = self.charset.index_of(" ");
        let mut rows: Vec<Vec<f32>> = Vec::new();
        for (i, &(top, bottom)) in bands.iter().enumerate() {
            if i > 0 {
                if let Some(s) = space {
                    rows.push(self.step(s));
                    rows.push(self.step(BLANK_INDEX));
                }
            }
            for (a, b) in runs((0..w).map(|x| (top..bottom).any(|y| ink(x, y)))) {
                if let Some(index) = self.read_glyph(crop, (a + b - 1) / 2, top, bottom - top) {
                    rows.push(self.step(index));
                    rows.push(self.step(BLANK_INDEX));
                }
            }
        }
        if rows.is_empty() {
            rows.push(self.step(BLANK_INDEX));
        }
        LogitSeq::from_rows(&rows)
    }
}

/// The 95 printable ASCII characters, space first.
pub fn ascii_charset() -> Charset {
    Charset::new((0x20u8..0x7F).map(|b| (b as char).to_string()).collect()).expect("printable ASCII is duplicate free")
}
