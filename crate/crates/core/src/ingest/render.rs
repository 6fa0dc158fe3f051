use std::path::{Path, PathBuf};
use std::process::Command;

use image::RgbImage;

use crate::error::{Error, Result};

/// Renders every page of a paged document (PDF) to an RGB image.
///
/// Implementations are used by one worker at a time unless they say
/// otherwise; the pipeline builds one renderer per worker.
pub trait PageRenderer: Send + Sync {
    fn render(&self, path: &Path, dpi: u32) -> Result<Vec<RgbImage>>;
}

/// Renders through an external program, e.g. `pdftoppm -r {dpi} -png
/// {input} {output}`. The program must write one image per page named
/// `<output>-<page number>.<ext>`; pages are ordered by that number.
#[derive(Clone, Debug)]
pub struct ExternalRenderer {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalRenderer {
    pub fn pdftoppm() -> Self {
        Self {
            program: "pdftoppm".into(),
            args: ["-r", "{dpi}", "-png", "{input}", "{output}"]
                .map(String::from)
                .to_vec(),
        }
    }

    fn page_number(prefix: &str, path: &Path) -> Option<u32> {
        let stem = path.file_stem()?.to_str()?;
        stem.strip_prefix(prefix)?.strip_prefix('-')?.parse().ok()
    }
}

impl PageRenderer for ExternalRenderer {
    fn render(&self, path: &Path, dpi: u32) -> Result<Vec<RgbImage>> {
        let workdir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let prefix = "page";
        let output = workdir.path().join(prefix);
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                a.replace("{input}", &path.to_string_lossy())
                    .replace("{dpi}", &dpi.to_string())
                    .replace("{output}", &output.to_string_lossy())
            })
            .collect();
        let status = Command::new(&self.program)
            .args(&args)
            .status()
            .map_err(|e| Error::port("pdf renderer", format!("{}: {e}", self.program)))?;
        if !status.success() {
            return Err(Error::CorruptDocument {
                path: path.to_path_buf(),
                message: format!("{} exited with {status}", self.program),
            });
        }

        let mut pages: Vec<(u32, PathBuf)> = std::fs::read_dir(workdir.path())
            .map_err(|e| Error::io(workdir.path(), e))?
            .filter_map(|entry| {
                let p = entry.ok()?.path();
                Some((Self::page_number(prefix, &p)?, p))
            })
            .collect();
        pages.sort();
        pages
            .into_iter()
            .map(|(_, p)| Ok(image::open(&p)?.to_rgb8()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::rasterize;
    use image::Rgb;
    use std::os::unix::fs::PermissionsExt;

    #[test]
    fn three_page_document_yields_three_pages() {
        let dir = tempfile::tempdir().unwrap();
        for (i, shade) in [10u8, 120, 250].iter().enumerate() {
            RgbImage::from_pixel(320, 400, Rgb([*shade; 3]))
                .save(dir.path().join(format!("src{}.png", i + 1)))
                .unwrap();
        }
        // Mimics pdftoppm's naming, writing pages out of order on purpose.
        let script = dir.path().join("fake-render.sh");
        std::fs::write(
            &script,
            format!(
                "#!/bin/sh\nfor n in 3 1 2; do cp {}/src$n.png \"$2-$n.png\"; done\n",
                dir.path().display()
            ),
        )
        .unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let pdf = dir.path().join("doc.pdf");
        std::fs::write(&pdf, b"%PDF-1.4\n").unwrap();

        let renderer = ExternalRenderer {
            program: script.to_string_lossy().into_owned(),
            args: vec!["{input}".into(), "{output}".into(), "{dpi}".into()],
        };
        let pages = rasterize(&pdf, 150, Some(&renderer)).unwrap();
        assert_eq!(pages.len(), 3);
        for (i, (page, shade)) in pages.iter().zip([10u8, 120, 250]).enumerate() {
            assert_eq!(page.source_page, i);
            assert_eq!(page.pixels.get_pixel(320, 320), &Rgb([shade; 3]));
        }
    }

    #[test]
    fn failing_renderer_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let pdf = dir.path().join("doc.pdf");
        std::fs::write(&pdf, b"%PDF-1.4\n").unwrap();
        let renderer = ExternalRenderer {
            program: "false".into(),
            args: vec![],
        };
        assert!(rasterize(&pdf, 150, Some(&renderer)).is_err());
    }
}
