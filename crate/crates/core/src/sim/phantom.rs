//! Point-scatterer phantoms with anechoic disks and wire targets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub x: f64,
    pub z: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub z: f64,
}

/// Anechoic disk annotation (metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub x: f64,
    pub z: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhantomScene {
    pub scatterers: Vec<Scatterer>,
    pub disks: Vec<Disk>,
    pub wires: Vec<Point>,
}

impl PhantomScene {
    pub fn validate(&self) -> Result<()> {
        if self
            .scatterers
            .iter()
            .any(|s| !(s.x.is_finite() && s.z.is_finite() && s.amplitude.is_finite()))
        {
            return Err(Error::Config(
                "scatterer with non-finite position or amplitude".into(),
            ));
        }
        Ok(())
    }

    /// Annotations only (scatterers dropped), for storage beside images.
    pub fn annotations(&self) -> PhantomScene {
        PhantomScene {
            scatterers: Vec::new(),
            disks: self.disks.clone(),
            wires: self.wires.clone(),
        }
    }

    pub fn scaled(&self, k: f64) -> PhantomScene {
        let mut s = self.clone();
        for p in &mut s.scatterers {
            p.amplitude *= k;
        }
        s
    }
}

/// Scene randomization settings. Lengths in metres, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    /// Imaged depth range; disks and wires are placed inside it.
    pub depth_min: f64,
    pub depth_max: f64,
    pub sector_deg: f64,
    /// Extra speckle around the imaged region so its edges are fully developed.
    pub margin: f64,
    pub margin_deg: f64,
    /// Scatterers per square millimetre.
    pub density: f64,
    pub disks_min: usize,
    pub disks_max: usize,
    pub disk_radius_min: f64,
    pub disk_radius_max: f64,
    /// Clearance kept around each disk for its background annulus.
    pub disk_clearance: f64,
    pub wires: usize,
    pub wire_amplitude: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            depth_min: 10e-3,
            depth_max: 70e-3,
            sector_deg: 90.0,
            margin: 3e-3,
            margin_deg: 5.0,
            density: 25.0,
            disks_min: 1,
            disks_max: 3,
            disk_radius_min: 3e-3,
            disk_radius_max: 6e-3,
            disk_clearance: 1.5e-3,
            wires: 1,
            wire_amplitude: 30.0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.depth_min > 0.0 && self.depth_max > self.depth_min) {
            return Err(Error::Config(
                "scene depth range must be positive and increasing".into(),
            ));
        }
        if self.disks_min > self.disks_max || self.disk_radius_min > self.disk_radius_max {
            return Err(Error::Config(
                "disk count and radius ranges must be ordered".into(),
            ));
        }
        if !(self.density >= 0.0) || !(self.sector_deg > 0.0 && self.sector_deg < 180.0) {
            return Err(Error::Config(
                "density must be non-negative and sector in (0°, 180°)".into(),
            ));
        }
        Ok(())
    }

    /// Outer radius of the equal-area background annulus around a disk of radius `r`.
    pub fn annulus_outer(&self, r: f64) -> f64 {
        (r * r + (r + self.disk_clearance).powi(2)).sqrt()
    }
}

fn inside_sector(p: &SceneParams, x: f64, z: f64, reach: f64) -> bool {
    let rho = x.hypot(z);
    let half = (p.sector_deg / 2.0).to_radians();
    if rho - reach < p.depth_min || rho + reach > p.depth_max || rho <= reach {
        return false;
    }
    x.atan2(z).abs() + (reach / rho).asin() <= half
}

fn place<R: Rng + ?Sized>(
    p: &SceneParams,
    rng: &mut R,
    reach: f64,
    taken: &[(f64, f64, f64)],
) -> Option<(f64, f64)> {
    let half = (p.sector_deg / 2.0).to_radians();
    for _ in 0..1000 {
        let rho = rng.gen_range(p.depth_min..p.depth_max);
        let phi = rng.gen_range(-half..half);
        let (x, z) = (rho * phi.sin(), rho * phi.cos());
        if inside_sector(p, x, z, reach)
            && taken
                .iter()
                .all(|&(tx, tz, tr)| (x - tx).hypot(z - tz) > reach + tr)
        {
            return Some((x, z));
        }
    }
    None
}

/// Draw a speckle scene with anechoic disks and wire targets.
pub fn random_scene<R: Rng + ?Sized>(params: &SceneParams, rng: &mut R) -> Result<PhantomScene> {
    params.validate()?;
    let mut taken: Vec<(f64, f64, f64)> = Vec::new();
    let mut disks = Vec::new();
    let n_disks = rng.gen_range(params.disks_min..=params.disks_max);
    for _ in 0..n_disks {
        let r = rng.gen_range(params.disk_radius_min..=params.disk_radius_max);
        let reach = params.annulus_outer(r);
        let (x, z) = place(params, rng, reach, &taken).ok_or_else(|| {
            Error::Config("could not fit the requested disks in the sector".into())
        })?;
        taken.push((x, z, reach));
        disks.push(Disk { x, z, radius: r });
    }
    let mut wires = Vec::new();
    // keep a few resolution cells of plain speckle around each wire
    let wire_reach = 4e-3;
    for _ in 0..params.wires {
        let (x, z) = place(params, rng, wire_reach, &taken).ok_or_else(|| {
            Error::Config("could not fit the requested wires in the sector".into())
        })?;
        taken.push((x, z, wire_reach));
        wires.push(Point { x, z });
    }

    let r0 = (params.depth_min - params.margin).max(1e-3);
    let r1 = params.depth_max + params.margin;
    let half = (params.sector_deg / 2.0 + params.margin_deg)
        .to_radians()
        .min(std::f64::consts::FRAC_PI_2);
    let area_mm2 = half * (r1 * r1 - r0 * r0) * 1e6;
    let count = (params.density * area_mm2).round() as usize;
    let mut scatterers = Vec::with_capacity(count + wires.len());
    for _ in 0..count {
        let rho = rng.gen_range(r0 * r0..r1 * r1).sqrt();
        let phi = rng.gen_range(-half..half);
        let amplitude: f64 = rng.sample(StandardNormal);
        let (x, z) = (rho * phi.sin(), rho * phi.cos());
        if disks.iter().any(|d| (x - d.x).hypot(z - d.z) < d.radius) {
            continue;
        }
        scatterers.push(Scatterer { x, z, amplitude });
    }
    for w in &wires {
        scatterers.push(Scatterer {
            x: w.x,
            z: w.z,
            amplitude: params.wire_amplitude,
        });
    }
    Ok(PhantomScene {
        scatterers,
        disks,
        wires,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disks_are_empty_and_inside_the_region() {
        let p = SceneParams::default();
        for seed in 0..5 {
            let s = random_scene(&p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            assert!((p.disks_min..=p.disks_max).contains(&s.disks.len()));
            assert_eq!(s.wires.len(), p.wires);
            for d in &s.disks {
                assert!(inside_sector(&p, d.x, d.z, p.annulus_outer(d.radius)));
                assert!(s
                    .scatterers
                    .iter()
                    .all(|q| (q.x - d.x).hypot(q.z - d.z) >= d.radius));
            }
            s.validate().unwrap();
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let p = SceneParams {
            density: 2.0,
            ..Default::default()
        };
        let a = random_scene(&p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = random_scene(&p, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn density_sets_scatterer_count() {
        let p = SceneParams {
            disks_min: 0,
            disks_max: 0,
            wires: 0,
            ..Default::default()
        };
        let s = random_scene(&p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let r0 = p.depth_min - p.margin;
        let r1 = p.depth_max + p.margin;
        let half = (45.0 + p.margin_deg).to_radians();
        let expect = p.density * half * (r1 * r1 - r0 * r0) * 1e6;
        assert!((s.scatterers.len() as f64 - expect).abs() < 1.0);
    }
}
