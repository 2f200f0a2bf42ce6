//! Simulated world: elastic skin deformation, frame rendering, and the
//! end-effector/gripper plant.
//!
//! The skin is linear-elastic with additive Gaussian pixel noise: tangential
//! force translates all markers, torque about the sensor normal produces a
//! circular field around the layout centroid, and normal force scales marker
//! sizes. Linearity keeps every downstream estimate checkable against a
//! closed form.

pub mod scenario;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{MarkerObservation, SensorGeometry};
use crate::image::{GrayImage, Mask};
use crate::skills::SkillCommand;

/// Wrench applied to the sensor skin for one frame.
///
/// `f[0..2]` are tangential (image-plane) force-units, `f[2]` is the normal
/// component, `tau_z` the torque about the sensor normal. Force-units are
/// abstract: the physical claim being modeled is proportionality between
/// force and marker displacement, not a Newton calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AppliedWrench {
    pub f: [f64; 3],
    pub tau_z: f64,
}

impl AppliedWrench {
    pub const ZERO: Self = Self { f: [0.0; 3], tau_z: 0.0 };

    pub fn tangential(fx: f64, fy: f64) -> Self {
        Self { f: [fx, fy, 0.0], tau_z: 0.0 }
    }

    pub fn normal(fz: f64) -> Self {
        Self { f: [0.0, 0.0, fz], tau_z: 0.0 }
    }

    pub fn torque(tau_z: f64) -> Self {
        Self { f: [0.0; 3], tau_z }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { f: [self.f[0] * k, self.f[1] * k, self.f[2] * k], tau_z: self.tau_z * k }
    }

    pub fn plus(&self, o: &Self) -> Self {
        Self {
            f: [self.f[0] + o.f[0], self.f[1] + o.f[1], self.f[2] + o.f[2]],
            tau_z: self.tau_z + o.tau_z,
        }
    }
}

/// Linear-elastic skin response parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SkinModel {
    /// Marker translation per tangential force-unit, px.
    pub c_shear: f64,
    /// Marker translation per torque-unit per px of lever arm.
    pub c_rot: f64,
    /// Relative marker-size gain per normal force-unit.
    pub c_normal: f64,
    /// Torque below which a loosely held object sticks instead of rotating.
    pub stiction_threshold: f64,
    /// Std of additive Gaussian position noise, px.
    pub noise_sigma: f64,
    /// Saturation limits; wrenches beyond these are rejected.
    pub f_saturation: f64,
    pub tau_saturation: f64,
}

impl Default for SkinModel {
    fn default() -> Self {
        Self {
            // One force-unit moves markers one pixel: displacement IS the
            // force readout, so estimates stay in px-units end to end.
            c_shear: 1.0,
            // Full-scale torque (~5) on the outer ring (90 px lever) moves
            // markers a few px.
            c_rot: 0.01,
            // Ten normal force-units grow a marker 50% in area.
            c_normal: 0.05,
            stiction_threshold: 0.0,
            noise_sigma: 0.05,
            f_saturation: 100.0,
            tau_saturation: 50.0,
        }
    }
}

/// Rotate a lever arm by +90 degrees; builds the circular field for torque.
#[inline]
fn perp(r: [f64; 2]) -> [f64; 2] {
    [-r[1], r[0]]
}

/// Applies the skin model: marker positions and sizes under `wrench`.
///
/// Each marker at rest position `p_i` with lever arm `r_i = p_i - centroid`
/// moves to `p_i + c_shear*(f_x, f_y) + c_rot*tau_z*perp(r_i)` plus Gaussian
/// noise; its size becomes `s_0*(1 + c_normal*f_z)`. With `noise_sigma = 0`
/// the response is exactly linear in the wrench.
pub fn deform_markers<R: Rng>(
    geometry: &SensorGeometry,
    skin: &SkinModel,
    wrench: &AppliedWrench,
    rng: &mut R,
) -> Result<Vec<MarkerObservation>> {
    for &c in &wrench.f {
        if !c.is_finite() || c.abs() > skin.f_saturation {
            return Err(CoreError::SaturationExceeded { value: c, limit: skin.f_saturation });
        }
    }
    if !wrench.tau_z.is_finite() || wrench.tau_z.abs() > skin.tau_saturation {
        return Err(CoreError::SaturationExceeded {
            value: wrench.tau_z,
            limit: skin.tau_saturation,
        });
    }

    let centroid = geometry.layout_centroid();
    let s0 = std::f64::consts::PI * geometry.nominal_marker_radius.powi(2);
    let noise = Normal::new(0.0, skin.noise_sigma.max(f64::EPSILON)).expect("sigma >= 0");
    let mut out = Vec::with_capacity(geometry.n_markers());
    for (id, &[px, py]) in geometry.marker_layout.iter().enumerate() {
        let r = [px - centroid[0], py - centroid[1]];
        let t = perp(r);
        let (nx, ny) = if skin.noise_sigma > 0.0 {
            (noise.sample(rng), noise.sample(rng))
        } else {
            (0.0, 0.0)
        };
        out.push(MarkerObservation {
            marker_id: id,
            x: px + skin.c_shear * wrench.f[0] + skin.c_rot * wrench.tau_z * t[0] + nx,
            y: py + skin.c_shear * wrench.f[1] + skin.c_rot * wrench.tau_z * t[1] + ny,
            s: s0 * (1.0 + skin.c_normal * wrench.f[2]),
            valid: true,
        });
    }
    Ok(out)
}

/// Object silhouette shapes; poses are in image pixels.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Silhouette {
    Disk { radius: f64 },
    Rect { width: f64, height: f64 },
}

/// A scene object seen through the transparent skin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SceneObject {
    pub silhouette: Silhouette,
    /// Center position in image pixels.
    pub pose: [f64; 2],
    /// Orientation, radians.
    pub theta: f64,
    pub mass_proxy: f64,
    /// Friction in [0, 2]; dimensionless.
    pub friction: f64,
}

impl SceneObject {
    pub fn rect(width: f64, height: f64, pose: [f64; 2], theta: f64) -> Self {
        Self { silhouette: Silhouette::Rect { width, height }, pose, theta, mass_proxy: 1.0, friction: 0.5 }
    }

    pub fn disk(radius: f64, pose: [f64; 2]) -> Self {
        Self { silhouette: Silhouette::Disk { radius }, pose, theta: 0.0, mass_proxy: 1.0, friction: 0.5 }
    }

    /// Object-local coordinates of an image point.
    #[inline]
    fn to_local(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - self.pose[0], y - self.pose[1]);
        let (s, c) = (-self.theta).sin_cos();
        (c * dx - s * dy, s * dx + c * dy)
    }

    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.to_local(x, y);
        match self.silhouette {
            Silhouette::Disk { radius } => u * u + v * v <= radius * radius,
            Silhouette::Rect { width, height } => u.abs() <= width / 2.0 && v.abs() <= height / 2.0,
        }
    }
}

/// One rendered time step: grayscale image plus object silhouette channel.
///
/// The silhouette mask is the simulated stand-in for background subtraction;
/// it is exact by construction rather than estimated from the image.
#[derive(Debug, Clone)]
pub struct SensorFrame {
    pub gray: GrayImage,
    pub mask: Mask,
}

const BACKGROUND: u8 = 200;
const MARKER_INK: f64 = 30.0;

/// Renders markers (dark anti-aliased disks) over the textured object region
/// on a light background.
///
/// The object texture is a fixed sinusoid in object-local coordinates, so it
/// translates rigidly with the object: block matching between consecutive
/// frames recovers object motion exactly for integer shifts. Texture values
/// stay well above the blob threshold, so markers remain the only dark blobs.
pub fn render_frame(
    geometry: &SensorGeometry,
    markers: &[MarkerObservation],
    object: Option<&SceneObject>,
) -> SensorFrame {
    let (w, h) = (geometry.image_width as usize, geometry.image_height as usize);
    let mut gray = GrayImage::filled(w, h, BACKGROUND);
    let mut mask = Mask::empty(w, h);

    if let Some(obj) = object {
        for y in 0..h {
            for x in 0..w {
                if obj.contains(x as f64, y as f64) {
                    let (u, v) = obj.to_local(x as f64, y as f64);
                    let tex = 140.0 + 25.0 * (0.7 * u).sin() * (0.9 * v).cos();
                    gray.set(x, y, tex.round() as u8);
                    mask.set(x, y, true);
                }
            }
        }
    }

    for m in markers {
        if !m.valid {
            continue;
        }
        let radius = (m.s / std::f64::consts::PI).sqrt();
        let x0 = (m.x - radius - 1.0).floor().max(0.0) as usize;
        let x1 = (m.x + radius + 1.0).ceil().min(w as f64 - 1.0) as usize;
        let y0 = (m.y - radius - 1.0).floor().max(0.0) as usize;
        let y1 = (m.y + radius + 1.0).ceil().min(h as f64 - 1.0) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = ((x as f64 - m.x).powi(2) + (y as f64 - m.y).powi(2)).sqrt();
                // Coverage ramp one pixel wide: anti-aliasing that keeps
                // intensity-weighted centroids accurate to ~0.03 px.
                let cov = (radius + 0.5 - d).clamp(0.0, 1.0);
                if cov > 0.0 {
                    let bg = gray.get(x, y) as f64;
                    gray.set(x, y, (bg + (MARKER_INK - bg) * cov).round() as u8);
                }
            }
        }
    }

    SensorFrame { gray, mask }
}

/// End-effector and gripper state integrated at the frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// End-effector position, mm.
    pub ee_position: [f64; 3],
    /// End-effector rotation about the tool axis, radians.
    pub ee_rotation: f64,
    /// Gripper opening, mm.
    pub gripper_opening: f64,
    pub contact: bool,
}

impl PlantState {
    pub fn at_rest(gripper_opening: f64) -> Self {
        Self { ee_position: [0.0; 3], ee_rotation: 0.0, gripper_opening, contact: false }
    }
}

/// Maximum gripper opening, mm.
pub const MAX_OPENING: f64 = 100.0;

/// Euler-integrates one command over `dt`; gripper targets apply directly
/// (their smoothing is the leaky integrator upstream) and clamp to range.
pub fn step_plant(state: &PlantState, cmd: &SkillCommand, dt: f64) -> Result<PlantState> {
    let finite = cmd.ee_velocity.iter().all(|v| v.is_finite())
        && cmd.ee_rot_velocity.is_finite()
        && cmd.gripper_target.map_or(true, |g| g.is_finite());
    if !finite {
        return Err(CoreError::NonFiniteCommand);
    }
    let mut next = *state;
    for a in 0..3 {
        next.ee_position[a] += cmd.ee_velocity[a] * dt;
    }
    next.ee_rotation += cmd.ee_rot_velocity * dt;
    if let Some(g) = cmd.gripper_target {
        next.gripper_opening = g.clamp(0.0, MAX_OPENING);
    }
    Ok(next)
}
