//! Lateral resolution as the full width at half maximum of a wire response.

use crate::beamform::BeamformGrid;
use crate::error::{Error, Result};
use crate::metrics::Envelope;
use crate::sim::Point;

/// Full width at half maximum of `profile` around index `peak`, in samples,
/// with linear interpolation of both half-maximum crossings.
pub fn fwhm_samples(profile: &[f64], peak: usize) -> Result<f64> {
    let top = *profile.get(peak).ok_or_else(|| {
        Error::Dimension(format!(
            "peak index {peak} outside profile of {}",
            profile.len()
        ))
    })?;
    if !(top > 0.0) {
        return Err(Error::Degenerate("profile peak is not positive".into()));
    }
    let half = top / 2.0;
    let never =
        || Error::Degenerate("profile does not fall below half maximum on both sides".into());
    let left = (0..peak)
        .rev()
        .find(|&i| profile[i] < half)
        .ok_or_else(never)?;
    let right = (peak + 1..profile.len())
        .find(|&i| profile[i] < half)
        .ok_or_else(never)?;
    let cross = |below: usize, above: usize| {
        let (lo, hi) = (profile[below], profile[above]);
        below as f64 + (above as f64 - below as f64) * (half - lo) / (hi - lo)
    };
    Ok(cross(right, right - 1) - cross(left, left + 1))
}

/// Lateral FWHM (mm) of the response to a wire target. The peak is taken in
/// a ±2 pixel neighbourhood of the annotated position; the angular width of
/// the profile through it becomes an arc length at the peak depth.
pub fn lateral_resolution_fwhm(img: &Envelope, wire: &Point, grid: &BeamformGrid) -> Result<f64> {
    let shape = img.tensor().shape();
    if shape != grid.shape() {
        return Err(Error::Dimension(format!(
            "image {shape} does not match grid {}",
            grid.shape()
        )));
    }
    let (r, c) = grid.locate(wire.x, wire.z);
    let (rows, cols) = (grid.depth_samples as f64, grid.angle_lines as f64);
    if !(r >= 0.0 && r <= rows - 1.0 && c >= 0.0 && c <= cols - 1.0) {
        return Err(Error::Config(format!(
            "wire at ({}, {}) m lies outside the grid",
            wire.x, wire.z
        )));
    }
    let (r, c) = (r.round() as usize, c.round() as usize);
    let mut best = (r, c);
    for row in r.saturating_sub(2)..=(r + 2).min(grid.depth_samples - 1) {
        for col in c.saturating_sub(2)..=(c + 2).min(grid.angle_lines - 1) {
            if img.tensor().get(0, row, col) > img.tensor().get(0, best.0, best.1) {
                best = (row, col);
            }
        }
    }
    let w = grid.angle_lines;
    let profile = &img.data()[best.0 * w..(best.0 + 1) * w];
    let width = fwhm_samples(profile, best.1)?;
    Ok(width * grid.angle_step() * grid.depth(best.0) * 1e3)
}
