//! File formats: the `CWTN` tensor container and binary PGM images.
//!
//! A tensor file is
//!
//! ```text
//! "CWTN" | version u16 = 1 | kind u8 (0 real, 1 complex) | rank u8 | dims u32 x rank | f64 payload
//! ```
//!
//! with every number little-endian and the payload row-major; complex
//! entries are stored as interleaved (re, im) pairs.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayD, IxDyn};
use num_complex::Complex;

use crate::error::{CwmiError, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"CWTN";
pub const TENSOR_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Real(ArrayD<f64>),
    Complex(ArrayD<Complex<f64>>),
}

impl TensorData {
    pub fn shape(&self) -> &[usize] {
        match self {
            TensorData::Real(a) => a.shape(),
            TensorData::Complex(a) => a.shape(),
        }
    }

    /// The tensor as an H×W real matrix, if it is one.
    pub fn into_matrix(self) -> Result<Array2<f64>> {
        match self {
            TensorData::Real(a) if a.ndim() == 2 => Ok(a.into_dimensionality().expect("rank checked")),
            other => Err(CwmiError::Format(format!(
                "expected a rank-2 real tensor, found {} with shape {:?}",
                if matches!(other, TensorData::Real(_)) { "real" } else { "complex" },
                other.shape()
            ))),
        }
    }
}

impl From<Array2<f64>> for TensorData {
    fn from(a: Array2<f64>) -> Self {
        TensorData::Real(a.into_dyn())
    }
}

pub fn encode_tensor(tensor: &TensorData) -> Result<Vec<u8>> {
    let (kind, shape) = match tensor {
        TensorData::Real(a) => (0u8, a.shape()),
        TensorData::Complex(a) => (1u8, a.shape()),
    };
    let rank = u8::try_from(shape.len()).map_err(|_| CwmiError::Format("rank exceeds 255".into()))?;
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + 16 * shape.iter().product::<usize>());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.push(kind);
    out.push(rank);
    for &d in shape {
        let d = u32::try_from(d).map_err(|_| CwmiError::Format(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    match tensor {
        TensorData::Real(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        TensorData::Complex(a) => a.iter().for_each(|v| {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }),
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len());
    let end = end.ok_or_else(|| CwmiError::Format("tensor file truncated".into()))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<TensorData> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != TENSOR_MAGIC {
        return Err(CwmiError::Format("missing CWTN magic".into()));
    }
    let version = u16::from_le_bytes(take(bytes, &mut at, 2)?.try_into().expect("2 bytes"));
    if version != TENSOR_VERSION {
        return Err(CwmiError::Format(format!("unsupported tensor version {version}")));
    }
    let kind = take(bytes, &mut at, 1)?[0];
    let rank = take(bytes, &mut at, 1)?[0] as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().expect("4 bytes")) as usize);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| CwmiError::Format("tensor dimensions overflow".into()))?;
    let width = match kind {
        0 => 1,
        1 => 2,
        k => return Err(CwmiError::Format(format!("unknown element kind {k}"))),
    };
    let payload = take(bytes, &mut at, count * width * 8)?;
    if at != bytes.len() {
        return Err(CwmiError::Format(format!("{} trailing bytes after payload", bytes.len() - at)));
    }
    let floats: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let shape = IxDyn(&shape);
    Ok(if kind == 0 {
        TensorData::Real(ArrayD::from_shape_vec(shape, floats).expect("length checked"))
    } else {
        let values = floats.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect();
        TensorData::Complex(ArrayD::from_shape_vec(shape, values).expect("length checked"))
    })
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &TensorData) -> Result<()> {
    fs::write(path, encode_tensor(tensor)?)?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<TensorData> {
    decode_tensor(&fs::read(path)?)
}

/// Parses a binary (P5) PGM and divides samples by maxval.
pub fn decode_pgm(bytes: &[u8]) -> Result<Array2<f64>> {
    let bad = |msg: &str| CwmiError::Format(format!("PGM: {msg}"));
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("unsupported magic, expected P5"));
    }
    let mut at = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(at) {
                Some(b'#') => {
                    while bytes.get(at).is_some_and(|&b| b != b'\n') {
                        at += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => at += 1,
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = at;
        while bytes.get(at).is_some_and(u8::is_ascii_digit) {
            at += 1;
        }
        if start == at {
            return Err(bad("malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..at])
            .expect("ascii digits")
            .parse()
            .map_err(|_| bad("header number out of range"))?;
    }
    if !bytes.get(at).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after maxval"));
    }
    at += 1;
    let [w, h, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval outside 1..=65535"));
    }
    let depth = if maxval < 256 { 1 } else { 2 };
    let need = w * h * depth;
    let data = &bytes[at..];
    if data.len() != need {
        return Err(bad(&format!("expected {need} sample bytes, found {}", data.len())));
    }
    let m = maxval as f64;
    let samples: Vec<f64> = if depth == 1 {
        data.iter().map(|&b| b as f64 / m).collect()
    } else {
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / m).collect()
    };
    Ok(Array2::from_shape_vec((h, w), samples).expect("length checked"))
}

/// Encodes values in `[0, 1]` as a P5 PGM with the given maxval (16-bit
/// samples when `maxval > 255`), rounding to the nearest level.
pub fn encode_pgm(image: &Array2<f64>, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(CwmiError::Format("PGM maxval must be positive".into()));
    }
    if let Some(v) = image.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(CwmiError::OutOfRange(format!("PGM sample {v} outside [0, 1]")));
    }
    let (h, w) = image.dim();
    let mut out = format!("P5\n{w} {h}\n{maxval}\n").into_bytes();
    let m = maxval as f64;
    for &v in image.iter() {
        let q = (v * m).round() as u16;
        if maxval > 255 {
            out.extend_from_slice(&q.to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    Ok(out)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    decode_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Array2<f64>, maxval: u16) -> Result<()> {
    fs::write(path, encode_pgm(image, maxval)?)?;
    Ok(())
}

/// Reads an H×W real matrix from either a PGM or a rank-2 real tensor file.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(TENSOR_MAGIC) {
        decode_tensor(&bytes)?.into_matrix()
    } else {
        decode_pgm(&bytes)
    }
}

/// Rescales non-negative values so the maximum maps to 1 (all-zero input
/// stays zero).
pub fn normalize_for_display(values: &Array2<f64>) -> Array2<f64> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        values.mapv(|v| (v / max).clamp(0.0, 1.0))
    } else {
        values.mapv(|_| 0.0)
    }
}
