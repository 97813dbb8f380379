//! Binary PGM (P5) read/write and grayscale PNG input.

use std::fs;
use std::io::{Cursor, ErrorKind};
use std::path::Path;

use super::GrayImage;
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = &[0x89, b'P', b'N', b'G', b'\r', b'\n', 0x1a, b'\n'];

/// Reads a binary PGM (maxval 255) or an 8-bit grayscale PNG.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::IoFailure(e),
    })?;
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Writes canonical P5: `"P5\n<w> <h>\n255\n"` followed by the raw bytes.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(img))?;
    Ok(())
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.pixels());
    out
}

/// Decodes a binary PGM. Header comments are tolerated; anything other
/// than maxval 255 is rejected.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    match bytes.get(..2) {
        Some(b"P5") => cursor.pos = 2,
        Some(_) => return Err(malformed("bad magic, expected P5")),
        None => return Err(malformed("file too short for a PGM header")),
    }
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval != 255 {
        return Err(malformed(format!(
            "maxval {maxval} unsupported, expected 255"
        )));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(malformed("missing whitespace after maxval")),
    }
    if width == 0 || height == 0 {
        return Err(malformed(format!("zero dimension {width}x{height}")));
    }
    let len = width
        .checked_mul(height)
        .ok_or_else(|| malformed("dimensions overflow"))?;
    let payload = &bytes[cursor.pos..];
    if payload.len() < len {
        return Err(malformed(format!(
            "truncated payload: {} of {len} bytes",
            payload.len()
        )));
    }
    GrayImage::new(width, height, payload[..len].to_vec())
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| malformed(format!("png: {e}")))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(malformed(format!(
            "png must be 8-bit grayscale without alpha, got {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| malformed("png: image too large"))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| malformed(format!("png: {e}")))?;
    let (w, h) = (frame.width as usize, frame.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf.chunks(frame.line_size).take(h) {
        pixels.extend_from_slice(&row[..w]);
    }
    GrayImage::new(w, h, pixels)
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedImage(msg.into())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let before = self.pos;
        self.skip_separators();
        if self.pos == before {
            return Err(malformed(format!("expected whitespace before {what}")));
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(malformed(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed(format!("{what} out of range")))
    }
}
