//! Percepts: force, torque, object, and slip extracted from the displacement
//! field and the silhouette channel.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::SensorGeometry;
use crate::image::{GrayImage, Mask};
use crate::track::DisplacementField;

/// Wrench proxy in px-units: `f[0]`/`f[1]` are mean marker displacements,
/// `f[2]` is the mean size-ratio excess scaled by `z_gain`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForceEstimate {
    pub f: [f64; 3],
}

impl ForceEstimate {
    pub fn norm(&self) -> f64 {
        (self.f[0].powi(2) + self.f[1].powi(2) + self.f[2].powi(2)).sqrt()
    }
}

/// Mean z-component of `r_i x d_i` over fresh markers, with lever arms taken
/// from the nominal layout centroid.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TorqueEstimate {
    pub tau_z: f64,
}

/// Object percept from image moments of the silhouette mask.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectPercept {
    pub present: bool,
    /// Centroid in image pixels; zero when absent.
    pub centroid: [f64; 2],
    /// Area (pixel count).
    pub m: f64,
    /// Orientation in (-pi/2, pi/2]; 0 with `degenerate` set when the second
    /// moments carry no direction (disk, square).
    pub theta: f64,
    pub degenerate_orientation: bool,
}

impl ObjectPercept {
    pub fn absent() -> Self {
        Self { present: false, centroid: [0.0, 0.0], m: 0.0, theta: 0.0, degenerate_orientation: false }
    }
}

/// Mean block-matching flow over the object region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlipSignal {
    /// Mean best-match displacement norm, px/frame.
    pub flow_magnitude: f64,
    pub active: bool,
}

/// Componentwise means over fresh field entries; stale markers are excluded.
pub fn force_from_field(field: &DisplacementField, z_gain: f64) -> Result<ForceEstimate> {
    let mut n = 0usize;
    let mut sum = [0.0f64; 3];
    for e in field.fresh_entries() {
        sum[0] += e.dx;
        sum[1] += e.dy;
        sum[2] += e.size_ratio - 1.0;
        n += 1;
    }
    if n == 0 {
        return Err(CoreError::EmptyField);
    }
    let n = n as f64;
    Ok(ForceEstimate { f: [sum[0] / n, sum[1] / n, z_gain * sum[2] / n] })
}

/// `tau_z = mean_i (r_ix * d_iy - r_iy * d_ix)`; zero for any uniform
/// translation because lever arms sum to zero about the layout centroid.
pub fn torque_from_field(field: &DisplacementField, geometry: &SensorGeometry) -> Result<TorqueEstimate> {
    let c = geometry.layout_centroid();
    let mut n = 0usize;
    let mut sum = 0.0;
    for e in field.fresh_entries() {
        let [px, py] = geometry.marker_layout[e.marker_id];
        let r = [px - c[0], py - c[1]];
        sum += r[0] * e.dy - r[1] * e.dx;
        n += 1;
    }
    if n < 3 {
        return Err(CoreError::TooFewMarkers { need: 3, got: n });
    }
    Ok(TorqueEstimate { tau_z: sum / n as f64 })
}

/// Area, centroid, and orientation from image moments of the mask.
///
/// Raw moments accumulate in row-major pixel order; the orientation is
/// `0.5 * atan2(2*mu11, mu20 - mu02)` from central second moments.
pub fn object_moments(mask: &Mask) -> ObjectPercept {
    let (mut m00, mut m10, mut m01, mut m20, mut m02, mut m11) = (0.0f64, 0.0, 0.0, 0.0, 0.0, 0.0);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                let (xf, yf) = (x as f64, y as f64);
                m00 += 1.0;
                m10 += xf;
                m01 += yf;
                m20 += xf * xf;
                m02 += yf * yf;
                m11 += xf * yf;
            }
        }
    }
    if m00 == 0.0 {
        return ObjectPercept::absent();
    }
    let cx = m10 / m00;
    let cy = m01 / m00;
    let mu20 = m20 - cx * m10;
    let mu02 = m02 - cy * m01;
    let mu11 = m11 - cx * m01;
    let degenerate = mu11.abs() < 1e-9 && (mu20 - mu02).abs() < 1e-9;
    let mut theta = if degenerate { 0.0 } else { 0.5 * (2.0 * mu11).atan2(mu20 - mu02) };
    // Fold onto (-pi/2, pi/2].
    if theta <= -std::f64::consts::FRAC_PI_2 {
        theta += std::f64::consts::PI;
    }
    ObjectPercept { present: true, centroid: [cx, cy], m: m00, theta, degenerate_orientation: degenerate }
}

/// Block geometry for slip estimation: 8x8 blocks, exhaustive +/-4 px search.
pub const SLIP_BLOCK: usize = 8;
pub const SLIP_SEARCH: i32 = 4;

/// Default activity threshold, px/frame.
pub const SLIP_THRESHOLD: f64 = 0.5;

/// Block-matching flow restricted to the object region.
///
/// A block participates only if it lies entirely inside the mask, its search
/// window stays in bounds, and it contains no blob-dark pixel in either frame
/// (markers belong to the skin, not the object, and would bias the match).
/// Magnitude is the mean best-match displacement norm; SAD ties prefer the
/// smaller displacement so a static scene reads exactly zero.
pub fn slip_estimate(prev: &GrayImage, cur: &GrayImage, mask: &Mask, threshold: f64) -> SlipSignal {
    assert_eq!((prev.width, prev.height), (cur.width, cur.height), "frame dimensions differ");
    let (w, h) = (prev.width, prev.height);
    let b = SLIP_BLOCK;
    let s = SLIP_SEARCH;
    let mut total = 0.0;
    let mut blocks = 0usize;

    for by in (0..h.saturating_sub(b)).step_by(b) {
        'block: for bx in (0..w.saturating_sub(b)).step_by(b) {
            if (bx as i32) < s || (by as i32) < s || bx + b + s as usize > w || by + b + s as usize > h {
                continue;
            }
            for y in by..by + b {
                for x in bx..bx + b {
                    if !mask.get(x, y) || prev.get(x, y) < 96 || cur.get(x, y) < 96 {
                        continue 'block;
                    }
                }
            }
            let mut best = (u32::MAX, 0i32, 0i32);
            for dy in -s..=s {
                for dx in -s..=s {
                    let mut sad = 0u32;
                    for y in by..by + b {
                        for x in bx..bx + b {
                            let p = prev.get(x, y) as i32;
                            let c = cur.get((x as i32 + dx) as usize, (y as i32 + dy) as usize) as i32;
                            sad += p.abs_diff(c);
                        }
                    }
                    let key = (sad, dx * dx + dy * dy);
                    if key < (best.0, best.1 * best.1 + best.2 * best.2) {
                        best = (sad, dx, dy);
                    }
                }
            }
            total += ((best.1 * best.1 + best.2 * best.2) as f64).sqrt();
            blocks += 1;
        }
    }

    let flow_magnitude = if blocks == 0 { 0.0 } else { total / blocks as f64 };
    SlipSignal { flow_magnitude, active: flow_magnitude > threshold }
}
