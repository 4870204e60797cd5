//! Declarative network descriptions and their static accounting.
//!
//! Three families share one layer plan: three convolutions, a four-path
//! inception layer and a final 1×1 reduction, each followed by a 4-piece
//! maxout. The complex network (CID) and the two-branch real network (2BID)
//! use small kernels sized for baseband images; the RF network (ID) uses
//! axially elongated kernels covering the same physical extent on the 3×
//! denser RF grid.

mod archive;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use archive::{archive_size, load_weights, save_weights, ARCHIVE_MAGIC};

/// Network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Complex network on I/Q images.
    #[serde(rename = "cid")]
    Cid,
    /// Real network on RF images.
    #[serde(rename = "id")]
    Id,
    /// Two independent real networks on the real and imaginary I/Q planes.
    #[serde(rename = "2bid")]
    TwoBranch,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Cid, Variant::Id, Variant::TwoBranch];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Cid => "CID-Net",
            Variant::Id => "ID-Net",
            Variant::TwoBranch => "2BID-Net",
        }
    }

    /// Whether the network consumes baseband (I/Q) rather than RF images.
    pub fn uses_iq(&self) -> bool {
        !matches!(self, Variant::Id)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Cid => "cid",
            Variant::Id => "id",
            Variant::TwoBranch => "2bid",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cid" | "cid-net" => Ok(Variant::Cid),
            "id" | "id-net" => Ok(Variant::Id),
            "2bid" | "2bid-net" | "two-branch" => Ok(Variant::TwoBranch),
            other => Err(Error::Config(format!("unknown model variant {other:?}"))),
        }
    }
}

/// Scalar field the network computes in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    Real,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    /// Real maxout.
    Mu,
    /// Amplitude maxout.
    Amu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub pieces: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Conv,
    Inception,
    Final1x1,
}

/// One stage: `kernels.len()` parallel paths of `kernel_count` kernels each,
/// every path followed by its own activation, outputs concatenated.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerDecl {
    pub kind: LayerKind,
    pub kernel_count: usize,
    /// (height, width) per path.
    pub kernels: Vec<(usize, usize)>,
    pub activation: ActivationSpec,
}

impl LayerDecl {
    pub fn out_channels(&self) -> usize {
        self.kernels.len() * (self.kernel_count / self.activation.pieces)
    }
}

/// One convolution (a single path of a stage).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: (usize, usize),
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel.0 * self.kernel.1
    }
}

/// A single network (one branch). Two-branch models consist of two of these.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Human-readable identity, part of the fingerprint ("CID-Net", "2BID-Net/re", ...).
    pub label: String,
    pub domain: Domain,
    pub in_channels: usize,
    pub layers: Vec<LayerDecl>,
}

const PIECES: usize = 4;
const KERNEL_COUNTS: [usize; 5] = [256, 128, 64, 8, 4];
const CID_KERNELS: [&[(usize, usize)]; 5] = [
    &[(3, 3)],
    &[(5, 5)],
    &[(11, 9)],
    &[(15, 11), (17, 13), (19, 15), (21, 17)],
    &[(1, 1)],
];
const ID_KERNELS: [&[(usize, usize)]; 5] = [
    &[(9, 3)],
    &[(17, 5)],
    &[(33, 9)],
    &[(41, 11), (49, 13), (57, 15), (65, 17)],
    &[(1, 1)],
];

fn table_layers(kernels: &[&[(usize, usize)]; 5], kind: ActivationKind) -> Vec<LayerDecl> {
    kernels
        .iter()
        .zip(KERNEL_COUNTS)
        .enumerate()
        .map(|(i, (k, count))| LayerDecl {
            kind: match i {
                3 => LayerKind::Inception,
                4 => LayerKind::Final1x1,
                _ => LayerKind::Conv,
            },
            kernel_count: count,
            kernels: k.to_vec(),
            activation: ActivationSpec {
                kind,
                pieces: PIECES,
            },
        })
        .collect()
}

impl NetworkSpec {
    /// The branch specs making up a variant (two for 2BID-Net, one otherwise).
    pub fn branches(variant: Variant) -> Vec<NetworkSpec> {
        let branch = |label: &str, domain, kernels, act| NetworkSpec {
            label: label.to_string(),
            domain,
            in_channels: 3,
            layers: table_layers(kernels, act),
        };
        match variant {
            Variant::Cid => vec![branch(
                "CID-Net",
                Domain::Complex,
                &CID_KERNELS,
                ActivationKind::Amu,
            )],
            Variant::Id => vec![branch(
                "ID-Net",
                Domain::Real,
                &ID_KERNELS,
                ActivationKind::Mu,
            )],
            Variant::TwoBranch => vec![
                branch(
                    "2BID-Net/re",
                    Domain::Real,
                    &CID_KERNELS,
                    ActivationKind::Mu,
                ),
                branch(
                    "2BID-Net/im",
                    Domain::Real,
                    &CID_KERNELS,
                    ActivationKind::Mu,
                ),
            ],
        }
    }

    /// Free-form spec, validated: activation kind must match the domain and
    /// every kernel count must be divisible by its piece count.
    pub fn custom(
        label: impl Into<String>,
        domain: Domain,
        in_channels: usize,
        layers: Vec<LayerDecl>,
    ) -> Result<NetworkSpec> {
        let spec = NetworkSpec {
            label: label.into(),
            domain,
            in_channels,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.layers.is_empty() {
            return Err(Error::Config(
                "network needs inputs and at least one layer".into(),
            ));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let want = match self.domain {
                Domain::Real => ActivationKind::Mu,
                Domain::Complex => ActivationKind::Amu,
            };
            if l.activation.kind != want {
                return Err(Error::Config(format!(
                    "layer {i}: {:?} activation in a {:?} network",
                    l.activation.kind, self.domain
                )));
            }
            let p = l.activation.pieces;
            if p == 0 || p > 256 || l.kernel_count % p != 0 {
                return Err(Error::Config(format!(
                    "layer {i}: {} kernels are not divisible into {p}-piece units",
                    l.kernel_count
                )));
            }
            if l.kernels.is_empty() || l.kernels.iter().any(|&(h, w)| h == 0 || w == 0) {
                return Err(Error::Config(format!("layer {i}: empty kernel")));
            }
        }
        Ok(())
    }

    /// Channel count produced by the network.
    pub fn out_channels(&self) -> usize {
        self.layers
            .last()
            .map_or(self.in_channels, LayerDecl::out_channels)
    }

    /// Convolutions in declaration order (stage by stage, paths in row order),
    /// which is also the parameter and archive order.
    pub fn conv_shapes(&self) -> Vec<ConvShape> {
        let mut shapes = Vec::new();
        let mut channels = self.in_channels;
        for l in &self.layers {
            for &kernel in &l.kernels {
                shapes.push(ConvShape {
                    out_channels: l.kernel_count,
                    in_channels: channels,
                    kernel,
                });
            }
            channels = l.out_channels();
        }
        shapes
    }

    /// Channel count after each stage, pre- and post-activation.
    pub fn channel_trace(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.kernels.len() * l.kernel_count, l.out_channels()))
            .collect()
    }

    /// Real scalars per complex weight.
    fn planes(&self) -> usize {
        match self.domain {
            Domain::Real => 1,
            Domain::Complex => 2,
        }
    }

    /// Trainable real scalars including biases.
    pub fn parameter_count(&self) -> usize {
        self.conv_shapes()
            .iter()
            .map(|s| self.planes() * (s.weight_len() + s.out_channels))
            .sum()
    }

    /// Stable 64-bit identity of the spec (first 8 bytes of a SHA-256 digest of
    /// its canonical description).
    pub fn fingerprint(&self) -> u64 {
        let canonical = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// Real trainable parameters of a variant (all branches).
pub fn count_parameters(variant: Variant) -> usize {
    NetworkSpec::branches(variant)
        .iter()
        .map(NetworkSpec::parameter_count)
        .sum()
}

/// Smallest and largest receptive field (height, width) over the paths of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceptiveField {
    pub min: (usize, usize),
    pub max: (usize, usize),
}

/// Accumulate `Σ (k − 1) + 1` along each axis, choosing the smallest or the
/// largest kernel at every multi-path stage.
pub fn receptive_field(spec: &NetworkSpec) -> ReceptiveField {
    let mut min = (1, 1);
    let mut max = (1, 1);
    for l in &spec.layers {
        let hs = l.kernels.iter().map(|k| k.0 - 1);
        let ws = l.kernels.iter().map(|k| k.1 - 1);
        min.0 += hs.clone().min().unwrap_or(0);
        max.0 += hs.max().unwrap_or(0);
        min.1 += ws.clone().min().unwrap_or(0);
        max.1 += ws.max().unwrap_or(0);
    }
    ReceptiveField { min, max }
}

/// Counting convention used by [`count_flops`].
pub const FLOP_CONVENTION: &str = "2 FLOPs per real multiply-accumulate; \
     one complex multiply-accumulate = 4 real ones; convolution taps only \
     (bias and activation excluded); same-padded output extent";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlopCount {
    pub flops: u64,
    pub real_macs: u64,
}

/// Multiply-accumulate based FLOP count of one network on an `h × w` input.
pub fn count_flops_spec(spec: &NetworkSpec, height: usize, width: usize) -> FlopCount {
    let per_mac = match spec.domain {
        Domain::Real => 1,
        Domain::Complex => 4,
    };
    let pixels = (height * width) as u64;
    let real_macs: u64 = spec
        .conv_shapes()
        .iter()
        .map(|s| s.weight_len() as u64 * pixels * per_mac)
        .sum();
    FlopCount {
        flops: 2 * real_macs,
        real_macs,
    }
}

/// FLOP count of a variant (all branches) on an `h × w` input.
pub fn count_flops(variant: Variant, height: usize, width: usize) -> FlopCount {
    NetworkSpec::branches(variant)
        .iter()
        .map(|s| count_flops_spec(s, height, width))
        .fold(
            FlopCount {
                flops: 0,
                real_macs: 0,
            },
            |a, b| FlopCount {
                flops: a.flops + b.flops,
                real_macs: a.real_macs + b.real_macs,
            },
        )
}

/// Commonly quoted full-grid FLOPs of each variant, shown beside the computed count.
pub fn nominal_flops(variant: Variant) -> f64 {
    match variant {
        Variant::Id => 23.8e9,
        Variant::Cid => 7.0e9,
        Variant::TwoBranch => 3.5e9,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form parameter sum written out longhand from the kernel table.
    fn closed_form(kernels: &[&[(usize, usize)]; 5], planes: usize) -> usize {
        let ins = [3, 64, 32, 16, 8];
        let mut weights = 0;
        let mut biases = 0;
        for i in 0..5 {
            for &(h, w) in kernels[i] {
                weights += KERNEL_COUNTS[i] * ins[i] * h * w;
                biases += KERNEL_COUNTS[i];
            }
        }
        planes * (weights + biases)
    }

    #[test]
    fn parameter_counts_match_closed_form() {
        assert_eq!(closed_form(&CID_KERNELS, 2), 1_093_128);
        assert_eq!(count_parameters(Variant::Cid), 1_093_128);
        assert_eq!(count_parameters(Variant::TwoBranch), 1_093_128);
        assert_eq!(closed_form(&CID_KERNELS, 1), 546_564);
        assert_eq!(closed_form(&ID_KERNELS, 1), 1_715_972);
        assert_eq!(count_parameters(Variant::Id), 1_715_972);
        // weights alone
        let cid = &NetworkSpec::branches(Variant::Cid)[0];
        let w: usize = cid.conv_shapes().iter().map(|s| 2 * s.weight_len()).sum();
        assert_eq!(w, 1_092_160);
    }

    #[test]
    fn receptive_fields() {
        let cid = &NetworkSpec::branches(Variant::Cid)[0];
        assert_eq!(
            receptive_field(cid),
            ReceptiveField {
                min: (31, 25),
                max: (37, 31)
            }
        );
        let id = &NetworkSpec::branches(Variant::Id)[0];
        // 1 + 8 + 16 + 32 + {40..64} and 1 + 2 + 4 + 8 + {10..16}
        assert_eq!(
            receptive_field(id),
            ReceptiveField {
                min: (97, 25),
                max: (121, 31)
            }
        );
        let single = NetworkSpec::custom(
            "one",
            Domain::Real,
            1,
            vec![LayerDecl {
                kind: LayerKind::Conv,
                kernel_count: 1,
                kernels: vec![(3, 3)],
                activation: ActivationSpec {
                    kind: ActivationKind::Mu,
                    pieces: 1,
                },
            }],
        )
        .unwrap();
        assert_eq!(
            receptive_field(&single),
            ReceptiveField {
                min: (3, 3),
                max: (3, 3)
            }
        );
    }

    #[test]
    fn channel_trace_follows_table() {
        for v in Variant::ALL {
            for spec in NetworkSpec::branches(v) {
                assert_eq!(
                    spec.channel_trace(),
                    vec![(256, 64), (128, 32), (64, 16), (32, 8), (4, 1)]
                );
            }
        }
    }

    #[test]
    fn flops() {
        let tiny = NetworkSpec::custom(
            "1x1",
            Domain::Real,
            1,
            vec![LayerDecl {
                kind: LayerKind::Final1x1,
                kernel_count: 1,
                kernels: vec![(1, 1)],
                activation: ActivationSpec {
                    kind: ActivationKind::Mu,
                    pieces: 1,
                },
            }],
        )
        .unwrap();
        assert_eq!(count_flops_spec(&tiny, 10, 10).flops, 200);
        let two = count_flops(Variant::TwoBranch, 338, 192).flops;
        let branch =
            count_flops_spec(&NetworkSpec::branches(Variant::TwoBranch)[0], 338, 192).flops;
        assert_eq!(two, 2 * branch);
        assert_eq!(count_flops(Variant::Cid, 338, 192).flops, 2 * two);
    }

    #[test]
    fn receptive_field_grows_with_kernels() {
        let base = NetworkSpec::branches(Variant::Cid)[0].clone();
        let rf = receptive_field(&base);
        for layer in 0..base.layers.len() {
            for path in 0..base.layers[layer].kernels.len() {
                let mut grown = base.clone();
                grown.layers[layer].kernels[path].0 += 2;
                grown.layers[layer].kernels[path].1 += 2;
                let g = receptive_field(&grown);
                assert!(g.max.0 >= rf.max.0 && g.max.1 >= rf.max.1);
                assert!(g.min.0 >= rf.min.0 && g.min.1 >= rf.min.1);
                // interior inception paths sit strictly between the bounds
                let n = base.layers[layer].kernels.len();
                if path == 0 || path == n - 1 {
                    assert!(g != rf);
                }
            }
        }
    }

    #[test]
    fn fingerprints_distinguish_branches() {
        let b = NetworkSpec::branches(Variant::TwoBranch);
        assert_ne!(b[0].fingerprint(), b[1].fingerprint());
        assert_eq!(
            b[0].fingerprint(),
            NetworkSpec::branches(Variant::TwoBranch)[0].fingerprint()
        );
        let cid = &NetworkSpec::branches(Variant::Cid)[0];
        assert_ne!(cid.fingerprint(), b[0].fingerprint());
    }

    #[test]
    fn custom_spec_validation() {
        let bad = NetworkSpec::custom(
            "bad",
            Domain::Complex,
            1,
            vec![LayerDecl {
                kind: LayerKind::Conv,
                kernel_count: 6,
                kernels: vec![(3, 3)],
                activation: ActivationSpec {
                    kind: ActivationKind::Amu,
                    pieces: 4,
                },
            }],
        );
        assert!(matches!(bad, Err(Error::Config(_))));
        let wrong_kind = NetworkSpec::custom(
            "bad",
            Domain::Complex,
            1,
            vec![LayerDecl {
                kind: LayerKind::Conv,
                kernel_count: 4,
                kernels: vec![(3, 3)],
                activation: ActivationSpec {
                    kind: ActivationKind::Mu,
                    pieces: 4,
                },
            }],
        );
        assert!(wrong_kind.is_err());
    }
}
