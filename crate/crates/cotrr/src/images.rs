//! Image loading for prompts: files are resolved under a root directory,
//! downscaled so the longest side is at most 512 px, and re-encoded as JPEG.
//! The re-encoded bytes are what the cache key sees, so they must be
//! deterministic for a given file.

use std::collections::HashMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use cotrr_core::pipeline::{ImageError, ImageSource};
use cotrr_core::ImagePart;
use image::codecs::jpeg::JpegEncoder;
use image::imageops::FilterType;
use image::DynamicImage;

pub const MAX_SIDE: u32 = 512;
pub const JPEG_QUALITY: u8 = 85;
const EXTENSIONS: [&str; 4] = ["jpg", "jpeg", "png", "JPG"];

/// Images under a root directory, addressed by relative path or by id
/// (tried with common extensions). Encoded results are memoized.
pub struct FileImageSource {
    root: PathBuf,
    cache: Mutex<HashMap<String, ImagePart>>,
}

impl FileImageSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, reference: &str) -> Option<PathBuf> {
        let direct = self.root.join(reference);
        if direct.is_file() {
            return Some(direct);
        }
        EXTENSIONS
            .iter()
            .map(|ext| self.root.join(format!("{reference}.{ext}")))
            .find(|p| p.is_file())
    }
}

impl ImageSource for FileImageSource {
    fn load(&self, reference: &str) -> Result<ImagePart, ImageError> {
        if let Some(hit) = self.cache.lock().expect("image cache poisoned").get(reference) {
            return Ok(hit.clone());
        }
        let error = |message: String| ImageError {
            reference: reference.to_string(),
            message,
        };
        let path = self
            .resolve(reference)
            .ok_or_else(|| error(format!("no such file under {}", self.root.display())))?;
        let bytes = std::fs::read(&path).map_err(|e| error(e.to_string()))?;
        let part = reencode(&bytes).map_err(error)?;
        self.cache
            .lock()
            .expect("image cache poisoned")
            .insert(reference.to_string(), part.clone());
        Ok(part)
    }
}

/// Decodes any supported format, clamps the longest side to [`MAX_SIDE`],
/// and encodes as baseline JPEG.
pub fn reencode(bytes: &[u8]) -> Result<ImagePart, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let img = if img.width().max(img.height()) > MAX_SIDE {
        img.resize(MAX_SIDE, MAX_SIDE, FilterType::Triangle)
    } else {
        img
    };
    let rgb = DynamicImage::ImageRgb8(img.to_rgb8());
    let mut out = Cursor::new(Vec::new());
    rgb.write_with_encoder(JpegEncoder::new_with_quality(&mut out, JPEG_QUALITY))
        .map_err(|e| e.to_string())?;
    Ok(ImagePart {
        media_type: "image/jpeg".into(),
        data: out.into_inner(),
    })
}

/// A stand-in that never touches the disk: every reference becomes a tiny
/// lossless PNG whose pixels are the SHA-256 of the reference, so distinct
/// references never share bytes (or cache keys). Only meant for mock runs
/// without an image root.
#[derive(Debug, Default, Clone, Copy)]
pub struct PlaceholderImages;

impl ImageSource for PlaceholderImages {
    fn load(&self, reference: &str) -> Result<ImagePart, ImageError> {
        let hex = cotrr_core::chat::digest_hex(reference.as_bytes());
        let mut pixels: Vec<u8> = (0..hex.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).unwrap_or(0))
            .collect();
        pixels.resize(4 * 3 * 3, 0);
        let img = image::RgbImage::from_raw(4, 3, pixels).expect("buffer sized for 4x3 RGB");
        let mut out = Cursor::new(Vec::new());
        DynamicImage::ImageRgb8(img)
            .write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| ImageError {
                reference: reference.to_string(),
                message: e.to_string(),
            })?;
        Ok(ImagePart {
            media_type: "image/png".into(),
            data: out.into_inner(),
        })
    }
}
