//! On-disk formats: PRAW images, PATCH datasets, and validity masks.
//!
//! PRAW v1: ASCII header `PRAW 1 <width> <height> <channels> <tau_ms>`,
//! newline, then little-endian float32 row-major channel-interleaved payload.
//!
//! PATCH v1: ASCII header `PATCH 1 <count> 25 50 3`, newline, then per patch
//! a uint8 class label, a uint8 flavor id, and the float32 payload. Patch
//! origins are provenance of extraction and are not persisted.
//!
//! MASK v1: ASCII header `MASK 1 <width> <height>`, newline, then one byte
//! per pixel (0 = masked, 1 = valid), row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::{Patch, CHANNELS, PATCH_HEIGHT, PATCH_LEN, PATCH_WIDTH};

#[derive(Debug, Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad header: {detail}")]
    BadHeader { path: String, detail: String },
    #[error("{path}: payload truncated or oversized")]
    BadPayload { path: String },
    #[error("{path}: non-finite or negative value at index {index}")]
    BadValue { path: String, index: usize },
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> FileError {
    FileError::Io { path: path.display().to_string(), source }
}

pub(crate) fn header_err(path: &Path, detail: impl Into<String>) -> FileError {
    FileError::BadHeader { path: path.display().to_string(), detail: detail.into() }
}

/// Reads the ASCII header line (up to the first newline) as whitespace fields.
pub(crate) fn read_header_line(reader: &mut impl Read, path: &Path) -> Result<Vec<String>, FileError> {
    let mut line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        match reader.read(&mut byte).map_err(|e| io_err(path, e))? {
            0 => return Err(header_err(path, "missing newline")),
            _ if byte[0] == b'\n' => break,
            _ => line.push(byte[0]),
        }
        if line.len() > 256 {
            return Err(header_err(path, "header line too long"));
        }
    }
    let text = String::from_utf8(line).map_err(|_| header_err(path, "non-ASCII header"))?;
    Ok(text.split_whitespace().map(str::to_owned).collect())
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    fields: &[String],
    idx: usize,
    name: &str,
    path: &Path,
) -> Result<T, FileError> {
    fields
        .get(idx)
        .and_then(|f| f.parse().ok())
        .ok_or_else(|| header_err(path, format!("missing or invalid {name}")))
}

/// A PRAW file: image payload as f64 plus the recorded exposure time.
#[derive(Debug, Clone, PartialEq)]
pub struct PrawFile {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub tau_ms: f64,
}

/// Writes a PRAW v1 file; values are narrowed to f32.
pub fn write_praw(
    path: &Path,
    width: usize,
    height: usize,
    data: &[f64],
    tau_ms: f64,
) -> Result<(), FileError> {
    assert_eq!(data.len(), width * height * CHANNELS, "payload length mismatch");
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "PRAW 1 {width} {height} {CHANNELS} {tau_ms}").map_err(|e| io_err(path, e))?;
    for v in data {
        w.write_all(&(*v as f32).to_le_bytes()).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a PRAW v1 file; payload values must be finite and non-negative.
pub fn read_praw(path: &Path) -> Result<PrawFile, FileError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let fields = read_header_line(&mut r, path)?;
    if fields.len() != 6 || fields[0] != "PRAW" || fields[1] != "1" {
        return Err(header_err(path, "expected `PRAW 1 <w> <h> <c> <tau_ms>`"));
    }
    let width: usize = parse_field(&fields, 2, "width", path)?;
    let height: usize = parse_field(&fields, 3, "height", path)?;
    let channels: usize = parse_field(&fields, 4, "channels", path)?;
    let tau_ms: f64 = parse_field(&fields, 5, "tau_ms", path)?;
    if channels != CHANNELS {
        return Err(header_err(path, format!("expected 3 channels, got {channels}")));
    }
    if width == 0 || height == 0 || width * height > (1 << 28) {
        return Err(header_err(path, format!("implausible dimensions {width}x{height}")));
    }
    let data = read_f32_payload(&mut r, width * height * CHANNELS, path)?;
    for (index, v) in data.iter().enumerate() {
        if !v.is_finite() || *v < 0.0 {
            return Err(FileError::BadValue { path: path.display().to_string(), index });
        }
    }
    Ok(PrawFile { width, height, data, tau_ms })
}

fn read_f32_payload(r: &mut impl Read, count: usize, path: &Path) -> Result<Vec<f64>, FileError> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes).map_err(|_| FileError::BadPayload { path: path.display().to_string() })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(FileError::BadPayload { path: path.display().to_string() });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

/// Writes a PATCH v1 dataset.
pub fn write_patches(path: &Path, patches: &[Patch]) -> Result<(), FileError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(
        w,
        "PATCH 1 {} {PATCH_HEIGHT} {PATCH_WIDTH} {CHANNELS}",
        patches.len()
    )
    .map_err(|e| io_err(path, e))?;
    for p in patches {
        assert_eq!(p.pixels.len(), PATCH_LEN, "patch payload length mismatch");
        w.write_all(&[p.class, p.flavor_id]).map_err(|e| io_err(path, e))?;
        for v in &p.pixels {
            w.write_all(&v.to_le_bytes()).map_err(|e| io_err(path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a PATCH v1 dataset; loaded patches carry no origin.
pub fn read_patches(path: &Path) -> Result<Vec<Patch>, FileError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let fields = read_header_line(&mut r, path)?;
    if fields.len() != 6 || fields[0] != "PATCH" || fields[1] != "1" {
        return Err(header_err(path, "expected `PATCH 1 <count> 25 50 3`"));
    }
    let count: usize = parse_field(&fields, 2, "count", path)?;
    let (ph, pw, pc): (usize, usize, usize) = (
        parse_field(&fields, 3, "patch height", path)?,
        parse_field(&fields, 4, "patch width", path)?,
        parse_field(&fields, 5, "patch channels", path)?,
    );
    if (ph, pw, pc) != (PATCH_HEIGHT, PATCH_WIDTH, CHANNELS) {
        return Err(header_err(path, format!("unsupported patch shape {ph}x{pw}x{pc}")));
    }
    if count > (1 << 24) {
        return Err(header_err(path, format!("implausible patch count {count}")));
    }
    let mut patches = Vec::with_capacity(count);
    let mut tag = [0u8; 2];
    let mut payload = vec![0u8; PATCH_LEN * 4];
    for i in 0..count {
        r.read_exact(&mut tag)
            .map_err(|_| FileError::BadPayload { path: path.display().to_string() })?;
        r.read_exact(&mut payload)
            .map_err(|_| FileError::BadPayload { path: path.display().to_string() })?;
        let pixels: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if let Some(j) = pixels.iter().position(|v| !v.is_finite()) {
            return Err(FileError::BadValue { path: path.display().to_string(), index: i * PATCH_LEN + j });
        }
        patches.push(Patch { pixels, origin: None, class: tag[0], flavor_id: tag[1] });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| io_err(path, e))? != 0 {
        return Err(FileError::BadPayload { path: path.display().to_string() });
    }
    Ok(patches)
}

/// Writes a MASK v1 file.
pub fn write_mask(path: &Path, width: usize, height: usize, mask: &[bool]) -> Result<(), FileError> {
    assert_eq!(mask.len(), width * height, "mask length mismatch");
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "MASK 1 {width} {height}").map_err(|e| io_err(path, e))?;
    let bytes: Vec<u8> = mask.iter().map(|m| u8::from(*m)).collect();
    w.write_all(&bytes).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a MASK v1 file.
pub fn read_mask(path: &Path) -> Result<(usize, usize, Vec<bool>), FileError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(file);
    let fields = read_header_line(&mut r, path)?;
    if fields.len() != 4 || fields[0] != "MASK" || fields[1] != "1" {
        return Err(header_err(path, "expected `MASK 1 <w> <h>`"));
    }
    let width: usize = parse_field(&fields, 2, "width", path)?;
    let height: usize = parse_field(&fields, 3, "height", path)?;
    if width == 0 || height == 0 || width * height > (1 << 28) {
        return Err(header_err(path, format!("implausible dimensions {width}x{height}")));
    }
    let mut bytes = vec![0u8; width * height];
    r.read_exact(&mut bytes)
        .map_err(|_| FileError::BadPayload { path: path.display().to_string() })?;
    Ok((width, height, bytes.iter().map(|b| *b != 0).collect()))
}
