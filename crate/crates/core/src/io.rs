//! Flat binary records for channel data and beamformed images.
//!
//! ```text
//! kind   u32   (see RecordKind)
//! rows   u32   elements, or depth samples
//! cols   u32   time samples, or angle lines
//! a      f64   sampling rate (Hz) for channel data, tilt (deg) for images
//! b      f64   t0 (s) for channel data, unused (0) for images
//! data   f32   row-major; complex records store the real plane then the imaginary plane
//! ```
//!
//! All fields little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Signal;
use crate::tensor::{ComplexTensor, RealTensor, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    RfChannels = 1,
    IqChannels = 2,
    RfImage = 3,
    IqImage = 4,
}

impl RecordKind {
    fn from_u32(v: u32) -> Option<Self> {
        Some(match v {
            1 => RecordKind::RfChannels,
            2 => RecordKind::IqChannels,
            3 => RecordKind::RfImage,
            4 => RecordKind::IqImage,
            _ => return None,
        })
    }

    pub fn is_complex(self) -> bool {
        matches!(self, RecordKind::IqChannels | RecordKind::IqImage)
    }
}

/// A decoded record: a single-channel `rows × cols` signal plus two scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub kind: RecordKind,
    pub data: Signal,
    pub a: f64,
    pub b: f64,
}

const HEADER: usize = 4 + 4 + 4 + 8 + 8;

pub fn encode(kind: RecordKind, data: &Signal, a: f64, b: f64) -> Result<Vec<u8>> {
    let s = data.shape();
    if s.channels != 1 {
        return Err(Error::Dimension(format!(
            "records hold one channel, got {s}"
        )));
    }
    if kind.is_complex() != matches!(data, Signal::Complex(_)) {
        return Err(Error::Dimension(format!(
            "{kind:?} record given the wrong scalar type"
        )));
    }
    let values = data.values();
    let mut buf = Vec::with_capacity(HEADER + 4 * values.len());
    buf.extend_from_slice(&(kind as u32).to_le_bytes());
    buf.extend_from_slice(&(s.height as u32).to_le_bytes());
    buf.extend_from_slice(&(s.width as u32).to_le_bytes());
    buf.extend_from_slice(&a.to_le_bytes());
    buf.extend_from_slice(&b.to_le_bytes());
    for v in values {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Record> {
    if bytes.len() < HEADER {
        return Err(Error::Truncated(format!(
            "record header needs {HEADER} bytes, got {}",
            bytes.len()
        )));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let f = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let kind = RecordKind::from_u32(u(0)).ok_or_else(|| Error::Format {
        path: Default::default(),
        reason: format!("unknown record kind {}", u(0)),
    })?;
    let (rows, cols) = (u(4) as usize, u(8) as usize);
    let planes = if kind.is_complex() { 2 } else { 1 };
    let n = planes * rows * cols;
    let body = &bytes[HEADER..];
    if body.len() != 4 * n {
        return Err(Error::Truncated(format!(
            "{rows}x{cols} record needs {} data bytes, got {}",
            4 * n,
            body.len()
        )));
    }
    let values: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let shape = Shape::new(1, rows, cols);
    let data = if kind.is_complex() {
        Signal::Complex(ComplexTensor::from_planes(shape, values)?)
    } else {
        Signal::Real(RealTensor::from_vec(shape, values)?)
    };
    Ok(Record {
        kind,
        data,
        a: f(12),
        b: f(20),
    })
}

pub fn write_record(
    path: impl AsRef<Path>,
    kind: RecordKind,
    data: &Signal,
    a: f64,
    b: f64,
) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(kind, data, a, b)?).map_err(|e| Error::io(path, e))
}

pub fn read_record(path: impl AsRef<Path>) -> Result<Record> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        Error::Truncated(r) => Error::Truncated(format!("{}: {r}", path.display())),
        other => other,
    })
}

/// Write a `[0, 1]` image as an 8-bit binary portable graymap.
pub fn write_pgm(path: impl AsRef<Path>, img: &RealTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &RealTensor) -> Vec<u8> {
    let s = img.shape();
    let mut buf = format!("P5\n{} {}\n255\n", s.width, s.height).into_bytes();
    buf.extend(
        img.channel(0)
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    buf
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Complex;

    #[test]
    fn complex_record_round_trip() {
        let z = ComplexTensor::from_fn(Shape::new(1, 3, 4), |_, y, x| {
            Complex::new(y as f64 - 0.5, x as f64 * 0.25)
        });
        let bytes = encode(RecordKind::IqImage, &Signal::Complex(z.clone()), -20.0, 0.0).unwrap();
        let r = decode(&bytes).unwrap();
        assert_eq!(r.kind, RecordKind::IqImage);
        assert_eq!(r.data, Signal::Complex(z));
        assert_eq!(r.a, -20.0);
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated(_))
        ));
    }

    #[test]
    fn kind_and_type_must_agree() {
        let r = Signal::Real(RealTensor::zeros(Shape::new(1, 2, 2)));
        assert!(encode(RecordKind::IqChannels, &r, 0.0, 0.0).is_err());
    }

    #[test]
    fn pgm_header_and_levels() {
        let img = RealTensor::from_vec(Shape::new(1, 1, 3), vec![0.0, 0.5, 1.0]).unwrap();
        let pgm = encode_pgm(&img);
        assert!(pgm.starts_with(b"P5\n3 1\n255\n"));
        assert_eq!(&pgm[pgm.len() - 3..], &[0, 128, 255]);
    }
}
