//! Binary PGM (P5) reader and writer. Only 8-bit files (maxval 255) are accepted.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::GrayImage;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("not a binary PGM: expected magic \"P5\"")]
    BadMagic,
    #[error("malformed PGM header: {0}")]
    BadHeader(&'static str),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    BadMaxval(u64),
    #[error("PGM has a zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("truncated PGM payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
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

    fn number(&mut self, what: &'static str) -> Result<u64, PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::BadHeader(what));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(PgmError::BadHeader(what))
    }
}

pub fn load_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::BadMagic);
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    if !cur
        .bytes
        .get(cur.pos)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(PgmError::BadMagic);
    }
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(PgmError::ZeroDimension {
            width: width as usize,
            height: height as usize,
        });
    }
    if maxval != 255 {
        return Err(PgmError::BadMaxval(maxval));
    }
    // exactly one whitespace byte separates maxval from the raster
    match cur.bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(PgmError::BadHeader("missing separator after maxval")),
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width
        .checked_mul(height)
        .ok_or(PgmError::BadHeader("dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    Ok(GrayImage::new(width, height, payload[..expected].to_vec()).expect("dimensions were validated above"))
}

/// Canonical encoding: `P5\n<w> <h>\n255\n` followed by the raw pixels.
pub fn save_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.pixels());
    out
}

pub fn read_pgm_file(path: &Path) -> Result<GrayImage, PgmError> {
    let bytes = fs::read(path).map_err(|source| PgmError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_pgm(&bytes)
}

pub fn write_pgm_file(path: &Path, img: &GrayImage) -> Result<(), PgmError> {
    fs::write(path, save_pgm(img)).map_err(|source| PgmError::Io {
        path: path.display().to_string(),
        source,
    })
}
