//! Binary weight archive.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic        8 bytes  "CIDNETW1"
//! fingerprint  u64
//! layer count  u32
//! layer table  per convolution: out, in, kh, kw, planes (u32 each)
//! data         f32, per convolution: kernels (re then im), then biases (re then im)
//! ```
//!
//! Kernels are row-major `[out, in, kh, kw]`. Values are stored as `f32`, so a
//! network round-trips bit-exactly once its parameters are `f32`-representable
//! (see [`Network::quantize_f32`]).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::netspec::{Domain, NetworkSpec};
use crate::nn::Network;

pub const ARCHIVE_MAGIC: &[u8; 8] = b"CIDNETW1";

const LAYER_ENTRY: usize = 5 * 4;

/// Size in bytes of the archive of `spec`.
pub fn archive_size(spec: &NetworkSpec) -> usize {
    8 + 8 + 4 + LAYER_ENTRY * spec.conv_shapes().len() + 4 * spec.parameter_count()
}

fn planes(spec: &NetworkSpec) -> u32 {
    match spec.domain {
        Domain::Real => 1,
        Domain::Complex => 2,
    }
}

pub(crate) fn encode(net: &Network) -> Vec<u8> {
    let spec = net.spec();
    let shapes = spec.conv_shapes();
    let mut buf = Vec::with_capacity(archive_size(spec));
    buf.extend_from_slice(ARCHIVE_MAGIC);
    buf.extend_from_slice(&spec.fingerprint().to_le_bytes());
    buf.extend_from_slice(&(shapes.len() as u32).to_le_bytes());
    for s in &shapes {
        for v in [s.out_channels, s.in_channels, s.kernel.0, s.kernel.1] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
        buf.extend_from_slice(&planes(spec).to_le_bytes());
    }
    for v in net.params_flat() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    buf
}

pub(crate) fn decode(bytes: &[u8], spec: &NetworkSpec) -> Result<Network> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic: [u8; 8] = cur.take(8, "magic")?.try_into().expect("8 bytes");
    if &magic != ARCHIVE_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let found = cur.u64("fingerprint")?;
    let expected = spec.fingerprint();
    if found != expected {
        return Err(Error::FingerprintMismatch { expected, found });
    }
    let shapes = spec.conv_shapes();
    let count = cur.u32("layer count")? as usize;
    if count != shapes.len() {
        return Err(Error::Format {
            path: Default::default(),
            reason: format!("{count} layers recorded, spec has {}", shapes.len()),
        });
    }
    for (i, s) in shapes.iter().enumerate() {
        let mut entry = [0usize; 5];
        for e in &mut entry {
            *e = cur.u32("layer table")? as usize;
        }
        let want = [
            s.out_channels,
            s.in_channels,
            s.kernel.0,
            s.kernel.1,
            planes(spec) as usize,
        ];
        if entry != want {
            return Err(Error::Format {
                path: Default::default(),
                reason: format!("layer {i} recorded as {entry:?}, spec has {want:?}"),
            });
        }
    }
    let n = spec.parameter_count();
    let raw = cur.take(4 * n, "parameter data")?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if cur.pos != bytes.len() {
        return Err(Error::Format {
            path: Default::default(),
            reason: format!("{} trailing bytes", bytes.len() - cur.pos),
        });
    }
    let mut net = Network::new(spec)?;
    net.set_params_flat(&values)?;
    Ok(net)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }
}

pub fn save_weights(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

/// Load an archive, checking it against the expected spec.
pub fn load_weights(path: impl AsRef<Path>, spec: &NetworkSpec) -> Result<Network> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, spec).map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::{ActivationKind, ActivationSpec, LayerDecl, LayerKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> NetworkSpec {
        let act = ActivationSpec {
            kind: ActivationKind::Amu,
            pieces: 2,
        };
        NetworkSpec::custom(
            "small",
            Domain::Complex,
            3,
            vec![
                LayerDecl {
                    kind: LayerKind::Conv,
                    kernel_count: 4,
                    kernels: vec![(3, 5)],
                    activation: act,
                },
                LayerDecl {
                    kind: LayerKind::Final1x1,
                    kernel_count: 2,
                    kernels: vec![(1, 1)],
                    activation: act,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn encode_decode_is_bit_exact_after_quantization() {
        let mut net = Network::initialized(&small(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        net.quantize_f32();
        let bytes = encode(&net);
        assert_eq!(bytes.len(), archive_size(net.spec()));
        let back = decode(&bytes, net.spec()).unwrap();
        let a: Vec<u64> = net.params_flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params_flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn corrupt_inputs_give_distinct_errors() {
        let net = Network::initialized(&small(), &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let bytes = encode(&net);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, net.spec()), Err(Error::BadMagic(_))));

        assert!(matches!(
            decode(&bytes[..bytes.len() - 3], net.spec()),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(
            decode(&bytes[..5], net.spec()),
            Err(Error::Truncated(_))
        ));

        let mut other = small();
        other.label = "other".into();
        assert!(matches!(
            decode(&bytes, &other),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
