//! Document ingestion: page images letterboxed to the detector's 640×640
//! canvas, and the text-layer shortcut for born-digital documents.

mod mine;
mod render;

use std::fs;
use std::path::Path;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::geometry::BBox;

pub use mine::{mine_text, ExternalTextMiner, PdfTextMiner, RawTextBlock, TextMiner};
pub use render::{ExternalRenderer, PageRenderer};

pub const CANVAS_SIZE: u32 = 640;
pub const PAD_VALUE: u8 = 114;
pub const DEFAULT_DPI: u32 = 150;

/// A page letterboxed onto the square detector canvas.
#[derive(Clone, Debug, PartialEq)]
pub struct PageImage {
    pub pixels: RgbImage,
    /// Canvas pixels per original pixel.
    pub scale: f64,
    pub pad_left: u32,
    pub pad_top: u32,
    pub source_page: usize,
    pub original_width: u32,
    pub original_height: u32,
}

impl PageImage {
    /// The canvas area covered by page content (everything else is padding).
    pub fn content_box(&self) -> BBox {
        let w = (self.original_width as f64 * self.scale).round();
        let h = (self.original_height as f64 * self.scale).round();
        BBox::new(
            self.pad_left as f64,
            self.pad_top as f64,
            self.pad_left as f64 + w,
            self.pad_top as f64 + h,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DocumentKind {
    Png,
    Jpeg,
    Pdf,
    Doc,
}

impl DocumentKind {
    /// Sniffs magic bytes, falling back to the extension.
    pub fn detect(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            return Ok(DocumentKind::Png);
        }
        if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            return Ok(DocumentKind::Jpeg);
        }
        if bytes.starts_with(b"%PDF") {
            return Ok(DocumentKind::Pdf);
        }
        if bytes.starts_with(&[0xD0, 0xCF, 0x11, 0xE0, 0xA1, 0xB1, 0x1A, 0xE1]) {
            return Ok(DocumentKind::Doc);
        }
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(DocumentKind::Png),
            "jpg" | "jpeg" => Ok(DocumentKind::Jpeg),
            "pdf" => Ok(DocumentKind::Pdf),
            "doc" | "docx" => Ok(DocumentKind::Doc),
            _ => Err(Error::UnsupportedDocument(path.display().to_string())),
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, DocumentKind::Png | DocumentKind::Jpeg)
    }
}

/// Scale and padding that fit a `w`×`h` page onto the canvas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LetterboxLayout {
    pub scale: f64,
    pub width: u32,
    pub height: u32,
    pub pad_left: u32,
    pub pad_top: u32,
}

impl LetterboxLayout {
    pub fn for_size(w: u32, h: u32) -> Self {
        let size = CANVAS_SIZE as f64;
        let scale = (size / w as f64).min(size / h as f64);
        let width = ((w as f64 * scale).round() as u32).clamp(1, CANVAS_SIZE);
        let height = ((h as f64 * scale).round() as u32).clamp(1, CANVAS_SIZE);
        Self {
            scale,
            width,
            height,
            pad_left: (CANVAS_SIZE - width) / 2,
            pad_top: (CANVAS_SIZE - height) / 2,
        }
    }
}

/// Aspect-preserving resize onto a grey 640×640 canvas, content centred.
pub fn letterbox(image: &RgbImage, source_page: usize) -> PageImage {
    let (w, h) = image.dimensions();
    let LetterboxLayout {
        scale,
        width: new_w,
        height: new_h,
        pad_left,
        pad_top,
    } = LetterboxLayout::for_size(w, h);

    let mut canvas = RgbImage::from_pixel(CANVAS_SIZE, CANVAS_SIZE, Rgb([PAD_VALUE; 3]));
    if (new_w, new_h) == (w, h) {
        imageops::replace(&mut canvas, image, pad_left as i64, pad_top as i64);
    } else {
        let resized = imageops::resize(image, new_w, new_h, FilterType::Triangle);
        imageops::replace(&mut canvas, &resized, pad_left as i64, pad_top as i64);
    }

    PageImage {
        pixels: canvas,
        scale,
        pad_left,
        pad_top,
        source_page,
        original_width: w,
        original_height: h,
    }
}

/// Maps a canvas box back to original page coordinates, clamped to the page.
pub fn unletterbox(b: &BBox, page: &PageImage) -> BBox {
    let px = page.pad_left as f64;
    let py = page.pad_top as f64;
    BBox::new(
        (b.x1 - px) / page.scale,
        (b.y1 - py) / page.scale,
        (b.x2 - px) / page.scale,
        (b.y2 - py) / page.scale,
    )
    .clamp(page.original_width as f64, page.original_height as f64)
}

/// Forward transform of [`unletterbox`]: original page coordinates to canvas.
pub fn to_canvas(b: &BBox, page: &PageImage) -> BBox {
    let px = page.pad_left as f64;
    let py = page.pad_top as f64;
    BBox::new(
        b.x1 * page.scale + px,
        b.y1 * page.scale + py,
        b.x2 * page.scale + px,
        b.y2 * page.scale + py,
    )
}

/// Loads a document as letterboxed pages. Images decode directly; PDFs need a
/// [`PageRenderer`]. Word documents are only supported through text mining.
pub fn rasterize(
    path: impl AsRef<Path>,
    dpi: u32,
    renderer: Option<&dyn PageRenderer>,
) -> Result<Vec<PageImage>> {
    let path = path.as_ref();
    match DocumentKind::detect(path)? {
        DocumentKind::Png | DocumentKind::Jpeg => {
            let image = image::open(path).map_err(|e| Error::CorruptDocument {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            Ok(vec![letterbox(&image.to_rgb8(), 0)])
        }
        DocumentKind::Pdf => {
            let renderer = renderer.ok_or_else(|| {
                Error::port("pdf renderer", "no renderer configured for PDF rasterization")
            })?;
            let pages = renderer.render(path, dpi)?;
            Ok(pages
                .iter()
                .enumerate()
                .map(|(i, page)| letterbox(page, i))
                .collect())
        }
        DocumentKind::Doc => Err(Error::UnsupportedDocument(format!(
            "{}: word-processing documents are read through text mining only",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn page(w: u32, h: u32) -> PageImage {
        letterbox(&RgbImage::from_pixel(w, h, Rgb([255, 255, 255])), 0)
    }

    #[test]
    fn letterbox_landscape() {
        let p = page(1280, 960);
        assert_eq!(p.scale, 0.5);
        assert_eq!((p.pad_left, p.pad_top), (0, 80));
        assert_eq!(p.pixels.dimensions(), (640, 640));
        assert_eq!(p.content_box(), BBox::new(0.0, 80.0, 640.0, 560.0));
        assert_eq!(p.pixels.get_pixel(10, 10), &Rgb([114; 3]));
        assert_eq!(p.pixels.get_pixel(10, 100), &Rgb([255; 3]));
    }

    #[test]
    fn letterbox_identity() {
        let mut img = RgbImage::from_pixel(640, 640, Rgb([200, 10, 10]));
        img.put_pixel(3, 4, Rgb([1, 2, 3]));
        let p = letterbox(&img, 0);
        assert_eq!(p.scale, 1.0);
        assert_eq!((p.pad_left, p.pad_top), (0, 0));
        assert_eq!(p.pixels, img);
    }

    #[test]
    fn unletterbox_examples() {
        let p = page(1280, 960);
        let b = unletterbox(&BBox::new(0.0, 80.0, 640.0, 560.0), &p);
        assert_eq!(b, BBox::new(0.0, 0.0, 1280.0, 960.0));

        let id = page(640, 640);
        let b = BBox::new(12.5, 3.0, 100.0, 200.0);
        assert_eq!(unletterbox(&b, &id), b);

        let b = unletterbox(&BBox::new(0.0, 0.0, 640.0, 640.0), &p);
        assert_eq!(b, BBox::new(0.0, 0.0, 1280.0, 960.0));
    }

    #[test]
    fn rasterize_rejects_unknown_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let txt = dir.path().join("a.txt");
        fs::write(&txt, "hello").unwrap();
        assert!(matches!(rasterize(&txt, 150, None), Err(Error::UnsupportedDocument(_))));

        let bad = dir.path().join("b.png");
        fs::write(&bad, b"\x89PNG\r\n\x1a\nnot really").unwrap();
        assert!(matches!(rasterize(&bad, 150, None), Err(Error::CorruptDocument { .. })));

        let pdf = dir.path().join("c.pdf");
        fs::write(&pdf, b"%PDF-1.5\n").unwrap();
        assert!(matches!(rasterize(&pdf, 150, None), Err(Error::Port { .. })));
    }

    #[test]
    fn rasterize_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        let img = RgbImage::from_fn(333, 517, |x, y| Rgb([(x * 7 % 256) as u8, (y % 256) as u8, 9]));
        img.save(&path).unwrap();
        let a = rasterize(&path, 150, None).unwrap();
        let b = rasterize(&path, 150, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].source_page, 0);
    }

    proptest! {
        #[test]
        fn unletterbox_inverts_forward(
            w in 50u32..3000, h in 50u32..3000,
            fx1 in 0.0f64..1.0, fy1 in 0.0f64..1.0, fw in 0.0f64..1.0, fh in 0.0f64..1.0,
        ) {
            let layout = LetterboxLayout::for_size(w, h);
            let p = PageImage {
                pixels: RgbImage::new(1, 1),
                scale: layout.scale,
                pad_left: layout.pad_left,
                pad_top: layout.pad_top,
                source_page: 0,
                original_width: w,
                original_height: h,
            };
            let x1 = fx1 * w as f64;
            let y1 = fy1 * h as f64;
            let b = BBox::new(x1, y1, x1 + fw * (w as f64 - x1), y1 + fh * (h as f64 - y1));
            let back = unletterbox(&to_canvas(&b, &p), &p);
            for (a, e) in back.to_array().iter().zip(b.to_array()) {
                prop_assert!((a - e).abs() < 1e-6 * (1.0 + e.abs()));
            }
        }
    }
}
