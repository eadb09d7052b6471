//! Dense class-index maps and their on-disk formats.
//!
//! Two encodings are understood:
//!
//! * binary PGM (`P5`, maxval 255), the canonical format, read and written
//!   bit-exactly;
//! * 8-bit single-channel grayscale PNG, accepted on input and written when
//!   the target path ends in `.png`.
//!
//! Every decoded value must be a valid class index for the supplied
//! [`ClassSet`] or the ignore value [`IGNORE`].

use std::fs;
use std::io::{self, Cursor};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Reserved label marking ground-truth pixels that take no part in scoring.
pub const IGNORE: u8 = 255;

#[derive(Debug, Error)]
pub enum LabelMapError {
    #[error("number of classes must be in 1..=255, got {0}")]
    InvalidClassCount(usize),
    #[error("degenerate dimensions {width}x{height}")]
    DegenerateDimensions { width: u32, height: u32 },
    #[error("expected {expected} values for the given dimensions, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("class index out of range at ({x},{y}): value {value}, {num_classes} classes")]
    ClassOutOfRange {
        x: u32,
        y: u32,
        value: u8,
        num_classes: usize,
    },
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("png decode: {0}")]
    Png(String),
}

/// The set of valid class indices `0..num_classes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassSet {
    num_classes: usize,
}

impl ClassSet {
    pub fn new(num_classes: usize) -> Result<Self, LabelMapError> {
        // IGNORE must stay outside 0..K, so K tops out at 255.
        if num_classes == 0 || num_classes > IGNORE as usize {
            return Err(LabelMapError::InvalidClassCount(num_classes));
        }
        Ok(Self { num_classes })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn ignore_value(&self) -> u8 {
        IGNORE
    }

    /// True for class indices and the ignore value.
    pub fn admits(&self, value: u8) -> bool {
        (value as usize) < self.num_classes || value == IGNORE
    }
}

/// Row-major grid of class indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    width: u32,
    height: u32,
    values: Vec<u8>,
}

impl LabelMap {
    /// Builds a map, checking dimensions and every value against `classes`.
    pub fn new(
        width: u32,
        height: u32,
        values: Vec<u8>,
        classes: &ClassSet,
    ) -> Result<Self, LabelMapError> {
        check_dimensions(width, height)?;
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(LabelMapError::LengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|&v| !classes.admits(v)) {
            return Err(LabelMapError::ClassOutOfRange {
                x: (i % width as usize) as u32,
                y: (i / width as usize) as u32,
                value: values[i],
                num_classes: classes.num_classes(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// A map with every pixel set to `value`.
    pub fn filled(
        width: u32,
        height: u32,
        value: u8,
        classes: &ClassSet,
    ) -> Result<Self, LabelMapError> {
        Self::new(
            width,
            height,
            vec![value; width as usize * height as usize],
            classes,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> Option<u8> {
        if x < self.width && y < self.height {
            Some(self.values[y as usize * self.width as usize + x as usize])
        } else {
            None
        }
    }

    pub fn same_dimensions(&self, other: &LabelMap) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Crate-internal constructor for callers that already hold valid data.
    pub(crate) fn from_parts_unchecked(width: u32, height: u32, values: Vec<u8>) -> Self {
        debug_assert_eq!(values.len(), width as usize * height as usize);
        Self {
            width,
            height,
            values,
        }
    }
}

fn check_dimensions(width: u32, height: u32) -> Result<(), LabelMapError> {
    if width == 0 || height == 0 {
        Err(LabelMapError::DegenerateDimensions { width, height })
    } else {
        Ok(())
    }
}

/// Reads a PGM or PNG label map, detecting the format from its magic bytes.
pub fn read_labelmap(
    path: impl AsRef<Path>,
    classes: &ClassSet,
) -> Result<LabelMap, LabelMapError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| LabelMapError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_labelmap(&bytes, classes)
}

pub fn decode_labelmap(bytes: &[u8], classes: &ClassSet) -> Result<LabelMap, LabelMapError> {
    if bytes.starts_with(b"P5") {
        decode_pgm(bytes, classes)
    } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
        decode_png(bytes, classes)
    } else if bytes.len() >= 2 && bytes[0] == b'P' && bytes[1].is_ascii_digit() {
        Err(LabelMapError::UnsupportedFormat(format!(
            "netpbm variant P{}",
            bytes[1] as char
        )))
    } else {
        Err(LabelMapError::UnsupportedFormat(
            "neither binary PGM nor PNG".into(),
        ))
    }
}

/// Writes `map` as PNG when the path ends in `.png`, as binary PGM otherwise.
pub fn write_labelmap(map: &LabelMap, path: impl AsRef<Path>) -> Result<(), LabelMapError> {
    let path = path.as_ref();
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let bytes = if is_png {
        encode_png(map)?
    } else {
        encode_pgm(map)?
    };
    fs::write(path, bytes).map_err(|source| LabelMapError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn encode_pgm(map: &LabelMap) -> Result<Vec<u8>, LabelMapError> {
    check_dimensions(map.width, map.height)?;
    let header = format!("P5\n{} {}\n255\n", map.width, map.height);
    let mut out = Vec::with_capacity(header.len() + map.values.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&map.values);
    Ok(out)
}

pub fn encode_png(map: &LabelMap) -> Result<Vec<u8>, LabelMapError> {
    check_dimensions(map.width, map.height)?;
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, map.width, map.height);
        encoder.set_color(png::ColorType::Grayscale);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| LabelMapError::Png(e.to_string()))?;
        writer
            .write_image_data(&map.values)
            .map_err(|e| LabelMapError::Png(e.to_string()))?;
    }
    Ok(out)
}

fn decode_png(bytes: &[u8], classes: &ClassSet) -> Result<LabelMap, LabelMapError> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| LabelMapError::Png(e.to_string()))?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale {
        return Err(LabelMapError::UnsupportedFormat(format!(
            "PNG color type {:?}, expected single-channel grayscale",
            info.color_type
        )));
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(LabelMapError::UnsupportedBitDepth(format!(
            "PNG bit depth {:?}",
            info.bit_depth
        )));
    }
    let (width, height) = (info.width, info.height);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| LabelMapError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| LabelMapError::Png(e.to_string()))?;
    buf.truncate(frame.buffer_size());
    LabelMap::new(width, height, buf, classes)
}

/// Header tokenizer for netpbm: whitespace-separated ASCII fields with `#`
/// comments running to end of line.
struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, field: &str) -> Result<u32, LabelMapError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(LabelMapError::MalformedHeader(format!("missing {field}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                LabelMapError::MalformedHeader(format!("{field} does not fit in 32 bits"))
            })
    }
}

fn decode_pgm(bytes: &[u8], classes: &ClassSet) -> Result<LabelMap, LabelMapError> {
    let mut cursor = HeaderCursor { bytes, pos: 2 };
    if !bytes
        .get(2)
        .is_some_and(|b| b.is_ascii_whitespace() || *b == b'#')
    {
        return Err(LabelMapError::MalformedHeader("bad magic".into()));
    }
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval != 255 {
        return Err(LabelMapError::UnsupportedBitDepth(format!(
            "PGM maxval {maxval}, expected 255"
        )));
    }
    // Exactly one whitespace byte separates maxval from the raster.
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => {
            return Err(LabelMapError::MalformedHeader(
                "missing separator before raster".into(),
            ))
        }
    }
    check_dimensions(width, height)?;
    let payload = &bytes[cursor.pos..];
    let expected = width as usize * height as usize;
    if payload.len() != expected {
        return Err(LabelMapError::MalformedHeader(format!(
            "raster holds {} bytes, header declares {expected}",
            payload.len()
        )));
    }
    LabelMap::new(width, height, payload.to_vec(), classes)
}
