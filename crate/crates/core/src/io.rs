//! Image file I/O. Binary PPM (P6, maxval 255) is the canonical lossless
//! format; 8-bit RGB PNG is accepted at the boundary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::Image;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptHeader(String),
}

impl ImageIoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ImageIoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self, ImageIoError> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("ppm") => Ok(ImageFormat::Ppm),
            Some("png") => Ok(ImageFormat::Png),
            other => Err(ImageIoError::UnsupportedFormat(format!(
                "{} (extension {:?})",
                path.display(),
                other.unwrap_or("")
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }
}

pub fn load_image(path: &Path) -> Result<Image, ImageIoError> {
    let format = ImageFormat::from_path(path)?;
    let bytes = fs::read(path).map_err(|e| ImageIoError::io(path, e))?;
    match format {
        ImageFormat::Ppm => decode_ppm(&bytes),
        ImageFormat::Png => decode_png(&bytes),
    }
}

pub fn save_image(path: &Path, image: &Image) -> Result<(), ImageIoError> {
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Ppm => encode_ppm(image),
        ImageFormat::Png => encode_png(image)?,
    };
    let file = File::create(path).map_err(|e| ImageIoError::io(path, e))?;
    let mut writer = BufWriter::new(file);
    writer
        .write_all(&bytes)
        .and_then(|_| writer.flush())
        .map_err(|e| ImageIoError::io(path, e))
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend_from_slice(image.pixels());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image, ImageIoError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(ImageIoError::UnsupportedFormat(
            "only binary PPM (P6) is supported".into(),
        ));
    }
    let mut pos = 2;
    let mut header = [0u32; 3];
    for slot in &mut header {
        // whitespace and `#` comments between tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(ImageIoError::CorruptHeader("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let token = std::str::from_utf8(&bytes[start..pos]).unwrap_or_default();
        *slot = token
            .parse()
            .map_err(|_| ImageIoError::CorruptHeader(format!("bad header token at byte {start}")))?;
    }
    let [width, height, maxval] = header;
    if maxval != 255 {
        return Err(ImageIoError::UnsupportedFormat(format!(
            "PPM maxval {maxval} (only 255 is supported)"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(ImageIoError::CorruptHeader("missing separator after maxval".into()));
    }
    pos += 1;
    let expected = width as usize * height as usize * 3;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(ImageIoError::CorruptHeader(format!(
            "payload has {} bytes, header declares {expected}",
            payload.len()
        )));
    }
    Image::new(width, height, payload[..expected].to_vec()).map_err(|e| ImageIoError::CorruptHeader(e.to_string()))
}

pub fn encode_png(image: &Image) -> Result<Vec<u8>, ImageIoError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, image.width(), image.height());
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| ImageIoError::CorruptHeader(e.to_string()))?;
        writer
            .write_image_data(image.pixels())
            .map_err(|e| ImageIoError::CorruptHeader(e.to_string()))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Image, ImageIoError> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageIoError::CorruptHeader(e.to_string()))?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight || info.color_type != png::ColorType::Rgb {
        return Err(ImageIoError::UnsupportedFormat(format!(
            "PNG {:?} {:?} (only 8-bit RGB is supported)",
            info.color_type, info.bit_depth
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageIoError::CorruptHeader("PNG too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageIoError::CorruptHeader(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    Image::new(frame.width, frame.height, buf).map_err(|e| ImageIoError::CorruptHeader(e.to_string()))
}
