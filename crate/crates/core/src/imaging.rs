//! 8-bit grayscale rasters and the binary PGM (P5) codec.

use std::fmt;

use thiserror::Error;

/// Row-major 8-bit grayscale raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("image dimensions must be positive (got {width}x{height})")]
    EmptyDimensions { width: usize, height: usize },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDimensions { width, height });
        }
        let expected = width * height;
        if pixels.len() != expected {
            return Err(ImageError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self { width, height, pixels })
    }

    /// An image with every pixel set to `level`.
    pub fn filled(width: usize, height: usize, level: u8) -> Result<Self, ImageError> {
        Self::new(width, height, vec![level; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    /// Panics when `(x, y)` is outside the raster.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, level: u8) {
        assert!(x < self.width && y < self.height, "pixel ({x}, {y}) out of bounds");
        self.pixels[y * self.width + x] = level;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("pixels", &format_args!("[{} bytes]", self.pixels.len()))
            .finish()
    }
}

/// Decoding failures. Every variant carries the byte offset where parsing stopped.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PgmError {
    #[error("unsupported magic at byte {offset}: only binary P5 graymaps are accepted")]
    UnsupportedMagic { offset: usize },
    #[error("unexpected end of header at byte {offset}")]
    TruncatedHeader { offset: usize },
    #[error("non-numeric header token {token:?} at byte {offset}")]
    BadToken { offset: usize, token: String },
    #[error("zero or oversized dimension in header at byte {offset}")]
    BadDimension { offset: usize },
    #[error("unsupported maxval {maxval} at byte {offset}: only 255 is accepted")]
    UnsupportedMaxval { offset: usize, maxval: u64 },
    #[error("missing whitespace after maxval at byte {offset}")]
    MissingSeparator { offset: usize },
    #[error("truncated raster at byte {offset}: expected {expected} bytes, found {found}")]
    TruncatedRaster {
        offset: usize,
        expected: usize,
        found: usize,
    },
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    /// Skips whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<(usize, u64), PgmError> {
        self.skip_separators();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::TruncatedHeader { offset: start });
        }
        let token = &self.bytes[start..self.pos];
        let text = String::from_utf8_lossy(token);
        if !token.iter().all(u8::is_ascii_digit) {
            return Err(PgmError::BadToken {
                offset: start,
                token: text.into_owned(),
            });
        }
        text.parse::<u64>()
            .map(|v| (start, v))
            .map_err(|_| PgmError::BadDimension { offset: start })
    }
}

/// Decodes a binary P5 graymap with maxval 255.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, PgmError> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(PgmError::UnsupportedMagic { offset: 0 });
    }
    let mut cur = HeaderCursor { bytes, pos: 2 };
    // The magic must be followed by a separator, otherwise "P55 ..." would parse.
    match bytes.get(2) {
        Some(b) if b.is_ascii_whitespace() || *b == b'#' => {}
        Some(_) => return Err(PgmError::UnsupportedMagic { offset: 0 }),
        None => return Err(PgmError::TruncatedHeader { offset: 2 }),
    }

    let (w_off, width) = cur.number()?;
    let (h_off, height) = cur.number()?;
    let (m_off, maxval) = cur.number()?;
    let to_dim = |v: u64, offset: usize| -> Result<usize, PgmError> {
        usize::try_from(v)
            .ok()
            .filter(|&d| d > 0 && d <= 1 << 20)
            .ok_or(PgmError::BadDimension { offset })
    };
    let width = to_dim(width, w_off)?;
    let height = to_dim(height, h_off)?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval { offset: m_off, maxval });
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(PgmError::MissingSeparator { offset: cur.pos }),
    }

    let expected = width * height;
    let raster = &bytes[cur.pos..];
    if raster.len() < expected {
        return Err(PgmError::TruncatedRaster {
            offset: cur.pos,
            expected,
            found: raster.len(),
        });
    }
    Ok(GrayImage {
        width,
        height,
        pixels: raster[..expected].to_vec(),
    })
}

/// Canonical encoding: `P5\n<w> <h>\n255\n` followed by the raster.
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.pixels.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}
