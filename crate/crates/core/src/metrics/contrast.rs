//! Region-based contrast measures.

use crate::beamform::BeamformGrid;
use crate::error::{Error, Result};
use crate::metrics::Envelope;
use crate::sim::Disk;
use crate::tensor::Shape;

/// Disjoint, non-empty target and background pixel sets on one image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    shape: Shape,
    target: Vec<bool>,
    background: Vec<bool>,
}

impl RegionMask {
    pub fn new(shape: Shape, target: Vec<bool>, background: Vec<bool>) -> Result<Self> {
        if target.len() != shape.len() || background.len() != shape.len() {
            return Err(Error::Dimension(format!(
                "mask length does not match shape {shape}"
            )));
        }
        if !target.iter().any(|&t| t) || !background.iter().any(|&b| b) {
            return Err(Error::Degenerate(
                "target and background regions must be non-empty".into(),
            ));
        }
        if target.iter().zip(&background).any(|(&t, &b)| t && b) {
            return Err(Error::Config(
                "target and background regions overlap".into(),
            ));
        }
        Ok(Self {
            shape,
            target,
            background,
        })
    }

    /// Disk interior as target; the background is the concentric annulus of
    /// equal area separated from the disk by `guard_px` pixels. The guard is
    /// converted to metres with the coarser of the axial and lateral pixel
    /// sizes at the disk centre.
    pub fn from_disk(grid: &BeamformGrid, disk: &Disk, guard_px: f64) -> Result<Self> {
        let lateral = disk.x.hypot(disk.z) * grid.angle_step();
        let guard = guard_px * grid.axial_spacing().max(lateral);
        let inner = disk.radius + guard;
        let outer = (disk.radius * disk.radius + inner * inner).sqrt();
        let shape = grid.shape();
        let mut target = vec![false; shape.len()];
        let mut background = vec![false; shape.len()];
        for row in 0..grid.depth_samples {
            for col in 0..grid.angle_lines {
                let (x, z) = grid.position(row, col);
                let d = (x - disk.x).hypot(z - disk.z);
                let i = row * grid.angle_lines + col;
                target[i] = d < disk.radius;
                background[i] = d >= inner && d < outer;
            }
        }
        Self::new(shape, target, background)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn target(&self) -> &[bool] {
        &self.target
    }

    pub fn background(&self) -> &[bool] {
        &self.background
    }

    fn split(&self, img: &Envelope) -> Result<(Vec<f64>, Vec<f64>)> {
        if img.tensor().shape() != self.shape {
            return Err(Error::Dimension(format!(
                "mask shape {} does not match image {}",
                self.shape,
                img.tensor().shape()
            )));
        }
        let pick = |m: &[bool]| {
            img.data()
                .iter()
                .zip(m)
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v)
                .collect()
        };
        Ok((pick(&self.target), pick(&self.background)))
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
}

/// Contrast ratio `−20 log10(μ_t / μ_b)` in dB.
pub fn cr(img: &Envelope, mask: &RegionMask) -> Result<f64> {
    let (t, b) = mask.split(img)?;
    let (mt, _) = mean_var(&t);
    let (mb, _) = mean_var(&b);
    if !(mb > 0.0) {
        return Err(Error::Degenerate("background mean is zero".into()));
    }
    Ok(-20.0 * (mt / mb).log10())
}

/// Contrast-to-noise ratio `20 log10(|μ_t − μ_b| / sqrt(σ²_t + σ²_b))` in dB,
/// with population variances.
pub fn cnr(img: &Envelope, mask: &RegionMask) -> Result<f64> {
    let (t, b) = mask.split(img)?;
    let (mt, vt) = mean_var(&t);
    let (mb, vb) = mean_var(&b);
    if !(vt + vb > 0.0) {
        return Err(Error::Degenerate("both regions have zero variance".into()));
    }
    Ok(20.0 * ((mt - mb).abs() / (vt + vb).sqrt()).log10())
}

/// Generalized CNR from a shared `bins`-cell histogram over `[0, max]`,
/// `max` being the largest intensity in either region.
pub fn gcnr(img: &Envelope, mask: &RegionMask, bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let (t, b) = mask.split(img)?;
    let top = t.iter().chain(&b).copied().fold(0.0, f64::max);
    let edges: Vec<f64> = (0..=bins).map(|k| top * k as f64 / bins as f64).collect();
    Ok(overlap_complement(&t, &b, &edges))
}

/// Generalized CNR with caller-supplied increasing bin edges. Values outside
/// the edges fall into the end bins.
pub fn gcnr_with_edges(img: &Envelope, mask: &RegionMask, edges: &[f64]) -> Result<f64> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "histogram edges must be strictly increasing, at least two".into(),
        ));
    }
    let (t, b) = mask.split(img)?;
    Ok(overlap_complement(&t, &b, edges))
}

fn overlap_complement(t: &[f64], b: &[f64], edges: &[f64]) -> f64 {
    let bins = edges.len() - 1;
    let index = |v: f64| {
        if !(edges[bins] > edges[0]) {
            return 0;
        }
        // last edge closes the final bin
        edges[1..bins].partition_point(|&e| e <= v)
    };
    let hist = |v: &[f64]| {
        let mut h = vec![0.0; bins];
        for &x in v {
            h[index(x)] += 1.0 / v.len() as f64;
        }
        h
    };
    let (ht, hb) = (hist(t), hist(b));
    let overlap: f64 = ht.iter().zip(&hb).map(|(a, b)| a.min(*b)).sum();
    (1.0 - overlap).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::RealTensor;

    fn image(values: &[f64]) -> Envelope {
        Envelope::new(
            RealTensor::from_vec(Shape::new(1, 1, values.len()), values.to_vec()).unwrap(),
        )
        .unwrap()
    }

    fn halves(n: usize) -> RegionMask {
        let t: Vec<bool> = (0..2 * n).map(|i| i < n).collect();
        let b = t.iter().map(|v| !v).collect();
        RegionMask::new(Shape::new(1, 1, 2 * n), t, b).unwrap()
    }

    #[test]
    fn mask_validation() {
        let s = Shape::new(1, 1, 3);
        assert!(RegionMask::new(s, vec![true, false, false], vec![false; 3]).is_err());
        assert!(RegionMask::new(s, vec![true, true, false], vec![false, true, true]).is_err());
        assert!(RegionMask::new(s, vec![true, false], vec![false, true]).is_err());
    }

    #[test]
    fn contrast_ratio_twenty_db() {
        let img = image(&[0.1, 0.1, 1.0, 1.0]);
        assert!((cr(&img, &halves(2)).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn cnr_zero_db() {
        // target mean 0.25, background mean 0.75, both variances 0.125
        let img = image(&[0.0, 0.0, 0.75, 1.0, 1.0, 0.25]);
        assert!(cnr(&img, &halves(3)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn degenerate_contrast_errors() {
        let img = image(&[0.5, 0.5, 0.0, 0.0]);
        assert!(matches!(cr(&img, &halves(2)), Err(Error::Degenerate(_))));
        assert!(matches!(cnr(&img, &halves(2)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn gcnr_extremes_and_half() {
        let same = image(&[0.2, 0.7, 0.2, 0.7]);
        assert_eq!(gcnr(&same, &halves(2), 256).unwrap(), 0.0);
        let apart = image(&[0.0, 0.1, 0.9, 1.0]);
        assert_eq!(gcnr(&apart, &halves(2), 256).unwrap(), 1.0);
        // p_t = (½, ½, 0), p_b = (0, ½, ½)
        let img = image(&[0.1, 0.5, 0.5, 0.9]);
        let edges = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        assert_eq!(gcnr_with_edges(&img, &halves(2), &edges).unwrap(), 0.5);
    }

    #[test]
    fn disk_mask_has_equal_areas() {
        let grid = BeamformGrid::new(400, 400, 10e-3, 70e-3, 90.0);
        let disk = Disk {
            x: 0.0,
            z: 40e-3,
            radius: 5e-3,
        };
        let m = RegionMask::from_disk(&grid, &disk, 2.0).unwrap();
        let nt = m.target().iter().filter(|&&v| v).count() as f64;
        let nb = m.background().iter().filter(|&&v| v).count() as f64;
        assert!((nt / nb - 1.0).abs() < 0.05, "{nt} vs {nb}");
    }
}
