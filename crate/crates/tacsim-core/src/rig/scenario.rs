//! Scripted world models. Each scenario turns plant state and time into the
//! wrench applied to the skin plus the silhouette in view, so the same
//! percept pipeline and skills run against every scene.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::SensorGeometry;
use crate::percept::{ForceEstimate, SlipSignal};
use crate::rig::{deform_markers, AppliedWrench, SceneObject, SkinModel};

// ---------------------------------------------------------------------------
// FollowMe

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PullAxis {
    X,
    Y,
    Z,
}

impl PullAxis {
    pub fn index(self) -> usize {
        match self {
            PullAxis::X => 0,
            PullAxis::Y => 1,
            PullAxis::Z => 2,
        }
    }
}

/// A human pulling a gripped object along one axis, modeled as a spring
/// between the hand target and the end effector. A controller that follows
/// the hand relaxes the spring; one that cannot leaves a sustained residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FollowMe {
    pub axis: PullAxis,
    /// Spring stiffness, force-units per mm of tracking error.
    pub k_h: f64,
    /// Piecewise-constant hand targets: (end time s, target mm).
    pub profile: Vec<(f64, f64)>,
    /// Centroid shift of the gripped object per mm of error, px. Applies to
    /// x/y pulls only: a z pull changes marker sizes, not the silhouette.
    pub sil_gain: f64,
    pub object_radius: f64,
}

impl FollowMe {
    pub fn new(axis: PullAxis) -> Self {
        Self {
            axis,
            k_h: 0.1,
            profile: vec![(4.0, 25.0), (8.0, 50.0), (12.0, 15.0), (16.0, 35.0)],
            sil_gain: 2.0,
            object_radius: 26.0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.profile.last().map_or(0.0, |&(t, _)| t)
    }

    pub fn target(&self, t: f64) -> f64 {
        for &(until, g) in &self.profile {
            if t < until {
                return g;
            }
        }
        self.profile.last().map_or(0.0, |&(_, g)| g)
    }

    /// Wrench on the skin and object in view for the current frame.
    pub fn frame(&self, t: f64, ee: [f64; 3], geometry: &SensorGeometry) -> FollowMeFrame {
        let a = self.axis.index();
        let error = self.target(t) - ee[a];
        let f = self.k_h * error;
        let wrench = match self.axis {
            PullAxis::X => AppliedWrench::tangential(f, 0.0),
            PullAxis::Y => AppliedWrench::tangential(0.0, f),
            PullAxis::Z => AppliedWrench::normal(f),
        };
        let [cx, cy] = geometry.image_center();
        let pose = match self.axis {
            PullAxis::X => [cx + self.sil_gain * error, cy],
            PullAxis::Y => [cx, cy + self.sil_gain * error],
            PullAxis::Z => [cx, cy],
        };
        let object = SceneObject::disk(self.object_radius, pose);
        FollowMeFrame { wrench, object, error, applied_force: f }
    }
}

#[derive(Debug, Clone)]
pub struct FollowMeFrame {
    pub wrench: AppliedWrench,
    pub object: SceneObject,
    pub error: f64,
    pub applied_force: f64,
}

// ---------------------------------------------------------------------------
// Stuck pen

/// A light pen rotating in the fingers under gravity. Gravity torque is
/// `tau0 * cos(theta)` (horizontal start, vertical rest). The pen turns only
/// once the gripper is open enough, and freezes when gravity torque falls
/// below the stiction threshold; a frozen pen transmits no torque.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StuckPen {
    pub tau0: f64,
    pub stiction_threshold: f64,
    /// rad/s per torque-unit while slipping.
    pub rot_rate: f64,
    /// Gripper opening above which the pen can rotate, mm.
    pub release_opening: f64,
    pub theta: f64,
}

impl StuckPen {
    pub fn new(tau0: f64, stiction_threshold: f64) -> Self {
        Self { tau0, stiction_threshold, rot_rate: 2.0, release_opening: 60.0, theta: 0.0 }
    }

    /// Stiction calibrated so the pen stalls exactly at `angle` radians.
    pub fn stalling_at(tau0: f64, angle: f64) -> Self {
        Self::new(tau0, tau0 * angle.cos())
    }

    pub fn gravity_torque(&self) -> f64 {
        self.tau0 * self.theta.cos()
    }

    /// Advances the pen one frame and returns the torque felt by the skin.
    pub fn step(&mut self, gripper_opening: f64, dt: f64) -> f64 {
        let tau_g = self.gravity_torque();
        if gripper_opening < self.release_opening {
            // Held firmly: the full gravity torque loads the fingers.
            return tau_g;
        }
        // The continuous dynamics brake to a halt exactly where the gravity
        // torque meets stiction; cap the Euler step there so the discrete
        // pen cannot overshoot the stall angle.
        let cap = if self.tau0 > 0.0 {
            (self.stiction_threshold / self.tau0)
                .clamp(-1.0, 1.0)
                .acos()
                .min(std::f64::consts::FRAC_PI_2)
        } else {
            std::f64::consts::FRAC_PI_2
        };
        if tau_g > self.stiction_threshold && self.theta < cap {
            self.theta = (self.theta + self.rot_rate * tau_g * dt).min(cap);
            tau_g
        } else {
            // Stuck (or at rest): nothing moves, the skin relaxes.
            0.0
        }
    }
}

// ---------------------------------------------------------------------------
// Stirring

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Substance {
    Flour,
    Sugar,
    Peas,
}

pub const SUBSTANCES: [Substance; 3] = [Substance::Flour, Substance::Sugar, Substance::Peas];
pub const N_MOVEMENTS: u8 = 8;

impl Substance {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "flour" => Ok(Substance::Flour),
            "sugar" => Ok(Substance::Sugar),
            "peas" => Ok(Substance::Peas),
            other => Err(CoreError::UnknownName { kind: "substance", name: other.to_string() }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Substance::Flour => "flour",
            Substance::Sugar => "sugar",
            Substance::Peas => "peas",
        }
    }

    pub fn class_index(self) -> usize {
        match self {
            Substance::Flour => 0,
            Substance::Sugar => 1,
            Substance::Peas => 2,
        }
    }

    /// Mean drag displacement against the stir direction, px. A viscosity
    /// proxy: fine powders resist the spoon far more than loose peas.
    pub fn drag(self) -> f64 {
        match self {
            Substance::Flour => 3.6,
            Substance::Sugar => 2.2,
            Substance::Peas => 0.8,
        }
    }

    /// High-frequency jitter amplitude, px. A granularity proxy: coarse
    /// grains rattle the fingers.
    pub fn jitter(self) -> f64 {
        match self {
            Substance::Flour => 0.10,
            Substance::Sugar => 0.30,
            Substance::Peas => 0.75,
        }
    }
}

/// 6 s of stirring at 15 fps.
pub const STIR_FRAMES: usize = 90;

/// Unit drag direction (opposite the spoon velocity) for one of the 8
/// scripted stir paths at time `t` with per-trial phase `phase`.
///
/// Movements 1..4 are circles at 2..5 cycles per 6 s window, alternating
/// handedness; 5..8 are 3-cycle ellipses with the major axis rotated in 45
/// degree steps. Every path completes whole cycles inside the window, so the
/// time-averaged drag direction is exactly zero regardless of phase.
pub fn stir_direction(movement_id: u8, t: f64, phase: f64) -> [f64; 2] {
    let m = movement_id as f64;
    let (vx, vy) = if movement_id <= 4 {
        let omega = (m + 1.0) * std::f64::consts::FRAC_PI_3 * if movement_id % 2 == 0 { -1.0 } else { 1.0 };
        let a = omega * t + phase;
        (-a.sin() * omega.signum(), a.cos() * omega.signum())
    } else {
        let a = std::f64::consts::PI * t + phase;
        let rot = std::f64::consts::FRAC_PI_4 * (m - 5.0);
        let (dxa, dya) = (-a.sin(), 0.6 * a.cos());
        (dxa * rot.cos() - dya * rot.sin(), dxa * rot.sin() + dya * rot.cos())
    };
    let n = (vx * vx + vy * vy).sqrt();
    [-vx / n, -vy / n]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StirFrame {
    /// Per-marker displacement, px.
    pub marker_dev: Vec<[f64; 2]>,
    /// Object percept channels: centroid offset x/y (px), orientation
    /// deviation (rad), relative area fluctuation.
    pub object: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StirTrial {
    pub substance: Substance,
    pub movement_id: u8,
    pub frames: Vec<StirFrame>,
}

/// One stirring trial: every marker shares the substance's drag response to
/// the common stir direction; jitter is independent per channel and frame.
pub fn stir_trial<R: Rng>(
    substance: Substance,
    movement_id: u8,
    n_markers: usize,
    rng: &mut R,
) -> Result<StirTrial> {
    if !(1..=N_MOVEMENTS).contains(&movement_id) {
        return Err(CoreError::UnknownName { kind: "movement", name: movement_id.to_string() });
    }
    let drag = substance.drag();
    let jitter = substance.jitter();
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let phase = rng.random::<f64>() * std::f64::consts::TAU;
    let dt = 1.0 / 15.0;

    let frames = (0..STIR_FRAMES)
        .map(|i| {
            let d = stir_direction(movement_id, i as f64 * dt, phase);
            let marker_dev = (0..n_markers)
                .map(|_| {
                    [
                        drag * d[0] + jitter * noise.sample(rng),
                        drag * d[1] + jitter * noise.sample(rng),
                    ]
                })
                .collect();
            let object = [
                drag * d[0] + jitter * noise.sample(rng),
                drag * d[1] + jitter * noise.sample(rng),
                0.2 * jitter * noise.sample(rng),
                jitter * noise.sample(rng),
            ];
            StirFrame { marker_dev, object }
        })
        .collect();
    Ok(StirTrial { substance, movement_id, frames })
}

/// Granularity statistic: per-channel temporal standard deviation after
/// removing the cross-marker common mode (which carries the shared drag
/// term), averaged over the x/y marker channels. Estimates the jitter
/// amplitude independent of movement and phase.
pub fn jitter_statistic(trial: &StirTrial) -> f64 {
    let n_frames = trial.frames.len();
    let n_markers = trial.frames.first().map_or(0, |f| f.marker_dev.len());
    if n_frames < 2 || n_markers == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for c in 0..2 * n_markers {
        let (m, ax) = (c / 2, c % 2);
        let mut sum = 0.0;
        let mut sq = 0.0;
        for frame in &trial.frames {
            let common: f64 =
                frame.marker_dev.iter().map(|d| d[ax]).sum::<f64>() / n_markers as f64;
            let r = frame.marker_dev[m][ax] - common;
            sum += r;
            sq += r * r;
        }
        let mean = sum / n_frames as f64;
        acc += (sq / n_frames as f64 - mean * mean).max(0.0).sqrt();
    }
    acc / (2 * n_markers) as f64
}

// ---------------------------------------------------------------------------
// Plate load probing

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoadSample {
    /// Normalized probe position in [0, 1].
    pub position: f64,
    /// Normal-force reading recovered from the marker-size channel.
    pub reading: f64,
}

/// Slides the probe under a plate, pressing with `profile(position)` plus
/// relative Gaussian noise, and reads the force back through the skin's
/// marker-size channel.
pub fn plate_load_stream<R: Rng>(
    profile: impl Fn(f64) -> f64,
    n_samples: usize,
    noise_rel: f64,
    geometry: &SensorGeometry,
    skin: &SkinModel,
    z_gain: f64,
    rng: &mut R,
) -> Result<Vec<LoadSample>> {
    let peak = (0..n_samples)
        .map(|i| profile(i as f64 / (n_samples.max(2) - 1) as f64))
        .fold(0.0_f64, f64::max);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut quiet = *skin;
    quiet.noise_sigma = 0.0;
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let position = i as f64 / (n_samples.max(2) - 1) as f64;
        let f = profile(position) + noise_rel * peak * noise.sample(rng);
        let markers = deform_markers(geometry, &quiet, &AppliedWrench::normal(f), rng)?;
        let mean_ratio = markers
            .iter()
            .zip(&geometry.marker_layout)
            .map(|(m, _)| {
                let s0 = std::f64::consts::PI * geometry.nominal_marker_radius.powi(2);
                m.s / s0 - 1.0
            })
            .sum::<f64>()
            / markers.len() as f64;
        out.push(LoadSample { position, reading: z_gain * mean_ratio });
    }
    Ok(out)
}

/// Parabola over [0, 1] peaking at `peak_pos` with maximum `peak`.
pub fn parabolic_profile(peak: f64, peak_pos: f64) -> impl Fn(f64) -> f64 {
    let half = peak_pos.max(1.0 - peak_pos);
    move |p: f64| peak * (1.0 - ((p - peak_pos) / half).powi(2))
}

// ---------------------------------------------------------------------------
// Press episodes (force-estimation dataset)

/// Oblique press against the finger: the normal force follows a smooth
/// sin^2 bump and drags a proportional tangential component with it, the
/// way a fingertip pushed into the skin also shears it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PressEpisode {
    pub peak: f64,
    pub frames: usize,
    /// Tangential fraction riding on the normal force.
    pub shear_ratio: f64,
}

impl PressEpisode {
    pub fn sample<R: Rng>(rng: &mut R, frames: usize) -> Self {
        Self { peak: 2.0 + 8.0 * rng.random::<f64>(), frames, shear_ratio: 0.35 }
    }

    /// Ground-truth normal force at frame `i` (this is the scale reading the
    /// labels come from).
    pub fn force_at(&self, i: usize) -> f64 {
        let x = std::f64::consts::PI * i as f64 / self.frames as f64;
        self.peak * x.sin().powi(2)
    }

    pub fn wrench_at(&self, i: usize) -> AppliedWrench {
        let fz = self.force_at(i);
        AppliedWrench { f: [0.0, self.shear_ratio * fz, fz], tau_z: 0.0 }
    }
}

// ---------------------------------------------------------------------------
// Adversarial handover schedule

/// A slip/force schedule in which both signals are individually active in
/// random bursts, the force flaps around the hysteresis band, but the two
/// are never active at once. Guard frames between bursts clear the force
/// latch, so a correct trigger never closes.
pub fn adversarial_handover_schedule<R: Rng>(
    frames: usize,
    force_threshold: f64,
    rng: &mut R,
) -> Vec<(SlipSignal, ForceEstimate)> {
    let mut out = Vec::with_capacity(frames);
    while out.len() < frames {
        let burst = 3 + (rng.random::<f64>() * 12.0) as usize;
        let slip_burst = rng.random::<f64>() < 0.5;
        for _ in 0..burst {
            if out.len() >= frames {
                break;
            }
            if slip_burst {
                // Slip active; force teases the band from below but can
                // never arm the latch (activation needs > 1.05x threshold).
                let f = force_threshold * (0.85 + 0.19 * rng.random::<f64>());
                let slip = SlipSignal { flow_magnitude: 1.0 + rng.random::<f64>(), active: true };
                out.push((slip, ForceEstimate { f: [f, 0.0, 0.0] }));
            } else {
                // Strong force, no slip.
                let f = force_threshold * (1.2 + 1.5 * rng.random::<f64>());
                let slip = SlipSignal { flow_magnitude: 0.0, active: false };
                out.push((slip, ForceEstimate { f: [0.0, f, 0.0] }));
            }
        }
        // Guard frame: everything quiet, releases any latched force state.
        if out.len() < frames {
            let slip = SlipSignal { flow_magnitude: 0.0, active: false };
            out.push((slip, ForceEstimate { f: [0.3 * force_threshold, 0.0, 0.0] }));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Assembly world

/// Plate-and-column desk scene for the scripted assembly pipeline.
///
/// World x is the scan axis in mm; the camera window spans
/// `2 * view_half_mm` around the end effector and maps to image pixels at
/// `px_per_mm`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssemblyWorld {
    pub px_per_mm: f64,
    pub view_half_mm: f64,
    /// Plate span along x, mm.
    pub plate_start: f64,
    pub plate_len: f64,
    /// Rendered plate thickness, px.
    pub plate_height_px: f64,
    /// Column silhouette width, mm.
    pub column_width: f64,
    /// Initial column tilt, rad.
    pub column_tilt: f64,
    /// Torque per radian of column misalignment.
    pub column_tau0: f64,
    /// Column root stiction; 0 for the free column.
    pub column_stiction: f64,
    /// Table surface height, mm (end effector z at contact).
    pub surface_z: f64,
    /// Normal force per mm of descent past the surface.
    pub contact_stiffness: f64,
    /// Pinch force per mm of squeeze past the column width.
    pub pinch_gain: f64,
    /// Relative position of the highest-load point along the plate.
    pub load_peak_pos: f64,
    pub load_peak_force: f64,
}

impl Default for AssemblyWorld {
    fn default() -> Self {
        Self {
            px_per_mm: 10.0,
            view_half_mm: 16.0,
            plate_start: 30.0,
            plate_len: 100.0,
            plate_height_px: 80.0,
            column_width: 24.0,
            column_tilt: 0.5,
            column_tau0: 1.0,
            column_stiction: 0.0,
            surface_z: -40.0,
            contact_stiffness: 2.0,
            pinch_gain: 0.25,
            load_peak_pos: 0.5,
            load_peak_force: 8.0,
        }
    }
}

impl AssemblyWorld {
    pub fn plate_end(&self) -> f64 {
        self.plate_start + self.plate_len
    }

    /// Silhouette of the plate segment inside the camera window at `ee_x`,
    /// or None when no part of the plate is in view.
    pub fn plate_object(&self, ee_x: f64, geometry: &SensorGeometry) -> Option<SceneObject> {
        let lo = (ee_x - self.view_half_mm).max(self.plate_start);
        let hi = (ee_x + self.view_half_mm).min(self.plate_end());
        if hi - lo < 0.2 {
            return None;
        }
        let width_px = (hi - lo) * self.px_per_mm;
        let seg_center = 0.5 * (lo + hi);
        let [cx, cy] = geometry.image_center();
        let pose = [cx + (seg_center - ee_x) * self.px_per_mm, cy];
        Some(SceneObject::rect(width_px, self.plate_height_px, pose, 0.0))
    }

    /// Visible plate area at `ee_x`, px^2 (analytic, for oracles).
    pub fn plate_area(&self, ee_x: f64) -> f64 {
        let lo = (ee_x - self.view_half_mm).max(self.plate_start);
        let hi = (ee_x + self.view_half_mm).min(self.plate_end());
        ((hi - lo).max(0.0)) * self.px_per_mm * self.plate_height_px
    }

    /// Area when the window is half filled: the edge-crossing set point used
    /// by both locate and scan.
    pub fn half_window_area(&self) -> f64 {
        self.view_half_mm * self.px_per_mm * self.plate_height_px
    }

    /// Column silhouette between the fingers (seen end-on).
    pub fn column_object(&self, geometry: &SensorGeometry) -> SceneObject {
        let [cx, cy] = geometry.image_center();
        SceneObject::rect(self.column_width * self.px_per_mm, 120.0, [cx, cy], 0.0)
    }

    /// Pinch wrench while grasping the column at `opening` mm.
    pub fn pinch_wrench(&self, opening: f64) -> AppliedWrench {
        let squeeze = (self.column_width - opening).max(0.0);
        AppliedWrench { f: [self.pinch_gain * squeeze, 0.0, 0.2 * self.pinch_gain * squeeze], tau_z: 0.0 }
    }

    /// Torque felt while aligning the tilted column; `rotation` is the wrist
    /// rotation since grasp. A stuck column freezes below stiction and
    /// transmits nothing.
    pub fn column_torque(&self, rotation: f64) -> f64 {
        let misalign = self.column_tilt + rotation;
        let tau = self.column_tau0 * misalign.sin();
        if tau.abs() < self.column_stiction {
            0.0
        } else {
            tau
        }
    }

    /// Contact normal force at height `z`.
    pub fn contact_force(&self, z: f64) -> f64 {
        self.contact_stiffness * (self.surface_z - z).max(0.0)
    }

    /// Load profile along the plate, normalized position in [0, 1].
    pub fn load_profile(&self) -> impl Fn(f64) -> f64 {
        parabolic_profile(self.load_peak_force, self.load_peak_pos)
    }

    /// World x of the highest-load point.
    pub fn load_peak_x(&self) -> f64 {
        self.plate_start + self.load_peak_pos * self.plate_len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SensorGeometry;
    use crate::rng::seeded_rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn followme_zero_profile_is_at_rest() {
        let mut fm = FollowMe::new(PullAxis::X);
        fm.profile = vec![(10.0, 0.0)];
        let g = SensorGeometry::default();
        let f = fm.frame(1.0, [0.0; 3], &g);
        assert_eq!(f.applied_force, 0.0);
        assert_eq!(f.wrench.f, [0.0; 3]);
        assert_eq!(f.object.pose, g.image_center());
    }

    #[test]
    fn followme_perfect_tracker_decays_residual() {
        // Ideal follower: every frame moves the full error. After the step
        // transient the residual force is zero.
        let mut fm = FollowMe::new(PullAxis::Y);
        fm.profile = vec![(100.0, 30.0)];
        let g = SensorGeometry::default();
        let mut p = [0.0; 3];
        let mut residuals = Vec::new();
        for i in 0..50 {
            let f = fm.frame(i as f64 / 15.0, p, &g);
            residuals.push(f.applied_force.abs());
            p[1] += f.error;
        }
        assert!(residuals[0] > 0.0);
        assert!(residuals[2..].iter().all(|&r| r < 1e-9));
    }

    #[test]
    fn followme_z_pull_leaves_silhouette_fixed() {
        let fm = FollowMe::new(PullAxis::Z);
        let g = SensorGeometry::default();
        let f = fm.frame(2.0, [0.0; 3], &g);
        assert!(f.error.abs() > 1.0);
        assert_eq!(f.object.pose, g.image_center());
        assert_eq!(f.wrench.f[0], 0.0);
        assert_eq!(f.wrench.f[1], 0.0);
        assert!(f.wrench.f[2] > 0.0);
    }

    #[test]
    fn stuck_pen_frictionless_reaches_vertical() {
        let mut pen = StuckPen::new(1.0, 0.0);
        for _ in 0..600 {
            pen.step(80.0, 1.0 / 15.0);
        }
        assert_abs_diff_eq!(pen.theta, std::f64::consts::FRAC_PI_2, epsilon = 1e-3);
    }

    #[test]
    fn stuck_pen_stalls_at_calibrated_angle() {
        let stall = 60f64.to_radians();
        let mut pen = StuckPen::stalling_at(1.0, stall);
        let mut last_tau = f64::MAX;
        for _ in 0..600 {
            last_tau = pen.step(80.0, 1.0 / 15.0);
        }
        assert!(pen.theta <= stall + 1e-9);
        assert!(pen.theta > 55f64.to_radians());
        // Frozen pen reads zero torque.
        assert_eq!(last_tau, 0.0);
    }

    #[test]
    fn stuck_pen_does_not_rotate_while_held() {
        let mut pen = StuckPen::new(1.0, 0.0);
        for _ in 0..100 {
            let tau = pen.step(40.0, 1.0 / 15.0);
            assert_abs_diff_eq!(tau, 1.0, epsilon = 1e-12);
        }
        assert_eq!(pen.theta, 0.0);
    }

    #[test]
    fn stir_directions_are_unit_and_mean_zero_over_window() {
        // Whole stir cycles inside the window: the sampled mean drag
        // direction vanishes for every movement and phase.
        let dt = 1.0 / 15.0;
        for movement in 1..=N_MOVEMENTS {
            for phase in [0.0, 0.7, 2.1, 4.4] {
                let mut mean = [0.0, 0.0];
                for i in 0..STIR_FRAMES {
                    let d = stir_direction(movement, i as f64 * dt, phase);
                    assert_abs_diff_eq!((d[0] * d[0] + d[1] * d[1]).sqrt(), 1.0, epsilon = 1e-12);
                    mean[0] += d[0];
                    mean[1] += d[1];
                }
                // Circles cancel exactly; ellipse tangents cancel pairwise
                // (a -> a + pi flips the velocity sign).
                assert!(mean[0].abs() / (STIR_FRAMES as f64) < 1e-10, "m{movement} ph{phase}");
                assert!(mean[1].abs() / (STIR_FRAMES as f64) < 1e-10);
            }
        }
    }

    #[test]
    fn stir_trial_is_deterministic_per_seed() {
        let a = stir_trial(Substance::Sugar, 3, 37, &mut seeded_rng(9)).unwrap();
        let b = stir_trial(Substance::Sugar, 3, 37, &mut seeded_rng(9)).unwrap();
        assert_eq!(a.frames.len(), b.frames.len());
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.marker_dev, fb.marker_dev);
            assert_eq!(fa.object, fb.object);
        }
    }

    #[test]
    fn stir_rejects_unknown_movement() {
        assert!(stir_trial(Substance::Flour, 0, 37, &mut seeded_rng(1)).is_err());
        assert!(stir_trial(Substance::Flour, 9, 37, &mut seeded_rng(1)).is_err());
        assert!(Substance::from_name("gravel").is_err());
    }

    #[test]
    fn jitter_statistic_separates_peas_from_flour_by_5_sigma() {
        let mut rng = seeded_rng(42);
        let collect = |s: Substance, rng: &mut _| -> Vec<f64> {
            (0..100)
                .map(|i| {
                    let m = (i % N_MOVEMENTS as usize) as u8 + 1;
                    jitter_statistic(&stir_trial(s, m, 37, rng).unwrap())
                })
                .collect()
        };
        let peas = collect(Substance::Peas, &mut rng);
        let flour = collect(Substance::Flour, &mut rng);
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
            (m, var.sqrt())
        };
        let (mp, sp) = stats(&peas);
        let (mf, sf) = stats(&flour);
        let gap = (mp - mf).abs();
        let sigma = sp.max(sf).max(1e-12);
        assert!(gap > 5.0 * sigma, "gap {gap} sigma {sigma}");
        // The statistic tracks the configured amplitudes.
        assert_abs_diff_eq!(mp, Substance::Peas.jitter(), epsilon = 0.05);
        assert_abs_diff_eq!(mf, Substance::Flour.jitter(), epsilon = 0.05);
    }

    #[test]
    fn plate_load_reads_back_the_profile() {
        let g = SensorGeometry::default();
        let skin = SkinModel::default();
        let profile = parabolic_profile(8.0, 0.5);
        let mut rng = seeded_rng(5);
        let stream = plate_load_stream(&profile, 41, 0.0, &g, &skin, 10.0, &mut rng).unwrap();
        assert_eq!(stream.len(), 41);
        // Noiseless readings recover z_gain * c_normal * f exactly.
        for s in &stream {
            assert_abs_diff_eq!(s.reading, 10.0 * skin.c_normal * profile(s.position), epsilon = 1e-9);
        }
        let max = stream.iter().max_by(|a, b| a.reading.total_cmp(&b.reading)).unwrap();
        assert_abs_diff_eq!(max.position, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn press_episode_is_a_smooth_bump() {
        let ep = PressEpisode { peak: 6.0, frames: 75, shear_ratio: 0.35 };
        assert_abs_diff_eq!(ep.force_at(0), 0.0, epsilon = 1e-12);
        // Peak near the middle, equal to the configured amplitude.
        let mid = ep.force_at(37).max(ep.force_at(38));
        assert!(mid > 0.99 * ep.peak);
        let w = ep.wrench_at(37);
        assert_abs_diff_eq!(w.f[1], 0.35 * w.f[2], epsilon = 1e-12);
    }

    #[test]
    fn adversarial_schedule_never_has_both_active() {
        let thr = 0.5;
        let mut rng = seeded_rng(11);
        let sched = adversarial_handover_schedule(1000, thr, &mut rng);
        assert_eq!(sched.len(), 1000);
        let mut slip_frames = 0;
        let mut force_frames = 0;
        for (slip, f) in &sched {
            if slip.active {
                slip_frames += 1;
                // While slipping, force always stays below the arming level.
                assert!(f.norm() < 1.05 * thr);
            }
            if f.norm() > 1.05 * thr {
                force_frames += 1;
                assert!(!slip.active);
            }
        }
        // Both signals do fire individually: the schedule is adversarial,
        // not empty.
        assert!(slip_frames > 100, "slip {slip_frames}");
        assert!(force_frames > 100, "force {force_frames}");
    }

    #[test]
    fn assembly_world_plate_area_matches_geometry() {
        let w = AssemblyWorld::default();
        let g = SensorGeometry::default();
        // Centered over the plate interior: full window.
        let full = w.plate_area(w.plate_start + 50.0);
        assert_abs_diff_eq!(full, 2.0 * w.half_window_area(), epsilon = 1e-9);
        // Exactly over an edge: half window.
        assert_abs_diff_eq!(w.plate_area(w.plate_start), w.half_window_area(), epsilon = 1e-9);
        assert_abs_diff_eq!(w.plate_area(w.plate_end()), w.half_window_area(), epsilon = 1e-9);
        // Far away: nothing in view.
        assert!(w.plate_object(w.plate_start - 40.0, &g).is_none());
        assert_eq!(w.plate_area(w.plate_start - 40.0), 0.0);
        // Rendered silhouette pose sits where the segment center maps.
        let obj = w.plate_object(w.plate_start, &g).unwrap();
        let [cx, cy] = g.image_center();
        assert_abs_diff_eq!(obj.pose[0], cx + 0.5 * w.view_half_mm * w.px_per_mm, epsilon = 1e-9);
        assert_eq!(obj.pose[1], cy);
    }

    #[test]
    fn assembly_world_contact_and_column() {
        let w = AssemblyWorld::default();
        assert_eq!(w.contact_force(w.surface_z + 5.0), 0.0);
        assert_abs_diff_eq!(w.contact_force(w.surface_z - 2.0), 4.0, epsilon = 1e-12);
        // Column torque vanishes when the tilt is compensated.
        assert_abs_diff_eq!(w.column_torque(-w.column_tilt), 0.0, epsilon = 1e-12);
        assert!(w.column_torque(0.0) > 0.0);
        // Stuck variant reads zero inside the stiction band.
        let stuck = AssemblyWorld { column_stiction: 0.3, ..AssemblyWorld::default() };
        assert_eq!(stuck.column_torque(-w.column_tilt + 0.1), 0.0);
        let profile = w.load_profile();
        assert_abs_diff_eq!(profile(w.load_peak_pos), w.load_peak_force, epsilon = 1e-12);
        assert!(profile(0.0) < w.load_peak_force);
    }
}
