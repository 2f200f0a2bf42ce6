//! Feedback skills: per-frame policies mapping percepts to commands, plus
//! episode runners for the skills that own a stop condition.
//!
//! Episode runners talk to the world through a closure `FnMut(&SkillCommand)
//! -> SkillObs`, so they run unchanged against the full simulation pipeline
//! or against hand-built percept schedules in tests.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::percept::{ForceEstimate, ObjectPercept, SlipSignal, TorqueEstimate};
use crate::rig::{PlantState, MAX_OPENING};

/// End-effector velocity command plus optional gripper target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillCommand {
    /// mm/s in the shared axis convention.
    pub ee_velocity: [f64; 3],
    /// rad/s about the tool axis.
    pub ee_rot_velocity: f64,
    /// Gripper opening set point, mm; `None` leaves the gripper alone.
    pub gripper_target: Option<f64>,
}

impl SkillCommand {
    pub const ZERO: Self = Self { ee_velocity: [0.0; 3], ee_rot_velocity: 0.0, gripper_target: None };
}

/// One synchronized percept bundle as seen by a skill.
#[derive(Debug, Clone, Copy)]
pub struct SkillObs {
    pub force: ForceEstimate,
    pub tau_z: f64,
    pub object: ObjectPercept,
    pub slip: SlipSignal,
    /// Mean per-marker generalized displacement norm (xy plus size channel);
    /// the grasp-effort statistic.
    pub grip: f64,
    pub plant: PlantState,
}

pub type Env<'a> = dyn FnMut(&SkillCommand) -> SkillObs + 'a;

// ---------------------------------------------------------------------------
// ForceTrack + SpeedCtrl

/// Maps the force range onto the velocity range: `alpha = (v_max - v_min) /
/// (f_max - f_min)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForceTrackConfig {
    /// Force-units (px).
    pub f_min: f64,
    pub f_max: f64,
    /// mm/s.
    pub v_min: f64,
    pub v_max: f64,
    /// Dead zone on |f_a|, px.
    pub eps: f64,
}

impl Default for ForceTrackConfig {
    fn default() -> Self {
        Self { f_min: 0.1, f_max: 1.1, v_min: 0.0, v_max: 20.0, eps: 0.15 }
    }
}

impl ForceTrackConfig {
    pub fn alpha(&self) -> f64 {
        (self.v_max - self.v_min) / (self.f_max - self.f_min)
    }
}

/// Per-axis rule: `v_a = sign(f_a) * clamp(alpha * (|f_a| - f_min), v_min,
/// v_max)` outside the dead zone, else 0. Odd in `f` by construction.
pub fn force_track_step(f: &ForceEstimate, cfg: &ForceTrackConfig) -> SkillCommand {
    let alpha = cfg.alpha();
    let mut v = [0.0; 3];
    for a in 0..3 {
        if f.f[a].abs() > cfg.eps {
            v[a] = f.f[a].signum() * (alpha * (f.f[a].abs() - cfg.f_min)).clamp(cfg.v_min, cfg.v_max);
        }
    }
    SkillCommand { ee_velocity: v, ..SkillCommand::ZERO }
}

// ---------------------------------------------------------------------------
// ObjectTrack

/// Object-tracking sensitivities. The centroid rule drives the image x axis
/// and the area rule drives y; `swap_axes` exchanges the roles for tracking
/// motion along the other image axis.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObjectTrackConfig {
    /// Fixed area-rule step, mm per frame.
    pub delta: f64,
    /// Signed clamp on the centroid-rule step, mm per frame.
    pub x_max: f64,
    pub y_max: f64,
    /// Centroid dead zones, px.
    pub xbar_eps: f64,
    pub ybar_eps: f64,
    /// Area set point, px^2.
    pub m_eps: f64,
    /// Centroid offset to step gain, mm per px.
    pub px_to_mm: f64,
    pub swap_axes: bool,
}

impl Default for ObjectTrackConfig {
    fn default() -> Self {
        Self {
            delta: 0.4,
            x_max: 1.0,
            y_max: 1.0,
            xbar_eps: 3.0,
            ybar_eps: 3.0,
            m_eps: 1680.0,
            px_to_mm: 0.1,
            swap_axes: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectTrackOutput {
    pub command: SkillCommand,
    pub lost_object: bool,
}

/// Sign-preserving magnitude clamp of the centroid step.
fn centroid_step(offset_px: f64, eps_px: f64, gain: f64, max_mm: f64) -> f64 {
    if offset_px.abs() > eps_px {
        offset_px.signum() * (offset_px.abs() * gain).min(max_mm)
    } else {
        0.0
    }
}

/// The object-tracking update. Steps are emitted as velocities so that one
/// integration step of the plant applies exactly the per-frame increment;
/// the area rule contributes only `+delta` or `-delta` (advance when the
/// object looks small, retreat when it looks big). No z command exists: the
/// percept carries no depth, which is the documented failure on z pulls.
pub fn object_track_step(
    p: &ObjectPercept,
    cfg: &ObjectTrackConfig,
    image_center: [f64; 2],
    dt: f64,
) -> ObjectTrackOutput {
    if !p.present {
        return ObjectTrackOutput { command: SkillCommand::ZERO, lost_object: true };
    }
    let xbar = p.centroid[0] - image_center[0];
    let ybar = p.centroid[1] - image_center[1];
    let area_step = if p.m <= cfg.m_eps { cfg.delta } else { -cfg.delta };
    let (dx, dy) = if cfg.swap_axes {
        (area_step, centroid_step(ybar, cfg.ybar_eps, cfg.px_to_mm, cfg.y_max))
    } else {
        (centroid_step(xbar, cfg.xbar_eps, cfg.px_to_mm, cfg.x_max), area_step)
    };
    let command = SkillCommand { ee_velocity: [dx / dt, dy / dt, 0.0], ..SkillCommand::ZERO };
    ObjectTrackOutput { command, lost_object: false }
}

// ---------------------------------------------------------------------------
// ArmRot

#[derive(Debug, Clone, Copy)]
pub struct ArmRotOutput {
    pub command: SkillCommand,
    pub converged: bool,
}

/// Proportional torque nulling: rotate against the measured torque until it
/// falls inside the dead zone.
pub fn arm_rot_step(tau: &TorqueEstimate, k_tau: f64, eps_tau: f64) -> ArmRotOutput {
    if tau.tau_z.abs() > eps_tau {
        let command = SkillCommand { ee_rot_velocity: -k_tau * tau.tau_z, ..SkillCommand::ZERO };
        ArmRotOutput { command, converged: false }
    } else {
        ArmRotOutput { command: SkillCommand::ZERO, converged: true }
    }
}

// ---------------------------------------------------------------------------
// LeakyInt

/// Leak rate for the gripper integrator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LeakyConfig {
    /// In (0, 1); larger means more inertia.
    pub leak_alpha: f64,
}

impl Default for LeakyConfig {
    fn default() -> Self {
        Self { leak_alpha: 0.9 }
    }
}

/// `x_t = alpha * x_{t-1} - (1 - alpha) * L`, clamped to the gripper range.
/// The fixed point is `-L`; convergence is geometric with ratio `alpha`.
pub fn leaky_step(x_prev: f64, l: f64, cfg: &LeakyConfig) -> f64 {
    (cfg.leak_alpha * x_prev - (1.0 - cfg.leak_alpha) * l).clamp(0.0, MAX_OPENING)
}

// ---------------------------------------------------------------------------
// Handover trigger

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HandoverConfig {
    /// Force-activity threshold on |f|, px.
    pub force_threshold: f64,
    /// Gripper opening produced while the trigger is off, mm.
    pub open_target: f64,
    /// Gripper opening produced while the trigger is on, mm.
    pub close_target: f64,
}

impl Default for HandoverConfig {
    fn default() -> Self {
        Self { force_threshold: 0.5, open_target: 60.0, close_target: 10.0 }
    }
}

/// Stateful AND-trigger for handover: close only when slip and force are
/// simultaneously active. Force activity latches with a 10% hysteresis band
/// around the threshold (on above 1.05x, off below 0.95x) to prevent chatter.
#[derive(Debug, Clone, Copy)]
pub struct HandoverTrigger {
    pub cfg: HandoverConfig,
    force_active: bool,
}

impl HandoverTrigger {
    pub fn new(cfg: HandoverConfig) -> Self {
        Self { cfg, force_active: false }
    }

    pub fn force_active(&self) -> bool {
        self.force_active
    }

    /// Returns the gripper target for this frame.
    pub fn step(&mut self, slip: &SlipSignal, f: &ForceEstimate) -> f64 {
        let mag = f.norm();
        if self.force_active {
            if mag < 0.95 * self.cfg.force_threshold {
                self.force_active = false;
            }
        } else if mag > 1.05 * self.cfg.force_threshold {
            self.force_active = true;
        }
        if slip.active && self.force_active {
            self.cfg.close_target
        } else {
            self.cfg.open_target
        }
    }
}

// ---------------------------------------------------------------------------
// InHandRot

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InHandRotMode {
    Torque,
    Slip,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InHandRotConfig {
    pub mode: InHandRotMode,
    /// Torque dead zone.
    pub eps_tau: f64,
    pub leak: LeakyConfig,
    /// Opening the leaky integrator drifts toward while rotating, mm.
    pub open_target: f64,
    /// Regrip opening, mm.
    pub regrip_target: f64,
    /// Consecutive frames the stop condition must hold.
    pub stop_frames: u32,
    /// A drop from above `stall_jump_factor * eps_tau` straight into the dead
    /// zone marks a suspected stall: free rotation decays through the
    /// threshold smoothly, stiction cuts the torque off a cliff.
    pub stall_jump_factor: f64,
    pub max_frames: usize,
}

impl Default for InHandRotConfig {
    fn default() -> Self {
        Self {
            mode: InHandRotMode::Torque,
            eps_tau: 0.05,
            leak: LeakyConfig { leak_alpha: 0.97 },
            open_target: 80.0,
            regrip_target: 20.0,
            stop_frames: 5,
            stall_jump_factor: 4.0,
            max_frames: 600,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InHandRotResult {
    pub frames: usize,
    pub final_tau: f64,
    pub final_opening: f64,
    pub possible_stall: bool,
    pub failed: bool,
}

/// Opens the gripper through the leaky integrator so a gripped object
/// rotates under gravity, then regrips.
///
/// Torque mode stops when |tau| stays inside the dead zone for `stop_frames`
/// consecutive frames. Slip mode arms once slip activity starts (the object
/// is turning) and stops when slip has ceased again for `stop_frames`.
pub fn in_hand_rot(env: &mut Env, cfg: &InHandRotConfig) -> InHandRotResult {
    let mut obs = env(&SkillCommand::ZERO);
    let mut opening = obs.plant.gripper_opening;
    let mut hold = 0u32;
    let mut slip_seen = false;
    let mut last_active_tau = obs.tau_z;
    let mut possible_stall = false;

    for frame in 1..=cfg.max_frames {
        opening = leaky_step(opening, -cfg.open_target, &cfg.leak);
        let cmd = SkillCommand { gripper_target: Some(opening), ..SkillCommand::ZERO };
        obs = env(&cmd);

        let stopped = match cfg.mode {
            InHandRotMode::Torque => obs.tau_z.abs() < cfg.eps_tau,
            InHandRotMode::Slip => {
                if obs.slip.active {
                    slip_seen = true;
                }
                slip_seen && !obs.slip.active
            }
        };
        if obs.tau_z.abs() >= cfg.eps_tau {
            last_active_tau = obs.tau_z;
        }
        hold = if stopped { hold + 1 } else { 0 };
        if hold >= cfg.stop_frames {
            if cfg.mode == InHandRotMode::Torque {
                possible_stall = last_active_tau.abs() > cfg.stall_jump_factor * cfg.eps_tau;
            }
            let regrip = SkillCommand { gripper_target: Some(cfg.regrip_target), ..SkillCommand::ZERO };
            let fin = env(&regrip);
            return InHandRotResult {
                frames: frame,
                final_tau: fin.tau_z,
                final_opening: fin.plant.gripper_opening,
                possible_stall,
                failed: false,
            };
        }
    }
    InHandRotResult {
        frames: cfg.max_frames,
        final_tau: obs.tau_z,
        final_opening: obs.plant.gripper_opening,
        possible_stall,
        failed: true,
    }
}

// ---------------------------------------------------------------------------
// VisScan

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VisScanConfig {
    /// Scan direction and speed, mm/s.
    pub velocity: [f64; 3],
    /// Object-area floor, px^2; crossing below it marks the boundary.
    pub area_floor: f64,
    /// Consecutive below-floor frames required to stop.
    pub debounce: u32,
    pub max_frames: usize,
}

impl Default for VisScanConfig {
    fn default() -> Self {
        Self { velocity: [10.0, 0.0, 0.0], area_floor: 2000.0, debounce: 3, max_frames: 400 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VisScanResult {
    pub entry: [f64; 3],
    pub boundary: [f64; 3],
    /// Straight-line distance between entry and boundary, mm.
    pub extent: f64,
    /// Scan ran to the frame limit without the area dropping below floor.
    pub hit_limit: bool,
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Drives along the scan axis while the object area stays above the floor;
/// the boundary is the position at the first below-floor frame (recorded
/// retroactively once the drop survives debouncing).
pub fn vis_scan(env: &mut Env, cfg: &VisScanConfig) -> Result<VisScanResult> {
    let obs = env(&SkillCommand::ZERO);
    if !obs.object.present {
        return Err(CoreError::NothingToScan);
    }
    let entry = obs.plant.ee_position;
    let cmd = SkillCommand { ee_velocity: cfg.velocity, ..SkillCommand::ZERO };
    let mut below = 0u32;
    let mut boundary = entry;
    let mut last = obs;

    for _ in 0..cfg.max_frames {
        last = env(&cmd);
        if last.object.m > cfg.area_floor {
            below = 0;
        } else {
            if below == 0 {
                boundary = last.plant.ee_position;
            }
            below += 1;
            if below >= cfg.debounce {
                return Ok(VisScanResult { entry, boundary, extent: dist3(entry, boundary), hit_limit: false });
            }
        }
    }
    let boundary = last.plant.ee_position;
    Ok(VisScanResult { entry, boundary, extent: dist3(entry, boundary), hit_limit: true })
}

// ---------------------------------------------------------------------------
// GentleGrasp

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GentleGraspConfig {
    /// Stop once the grasp-effort statistic reaches this, px.
    pub grip_target: f64,
    pub leak: LeakyConfig,
    pub max_frames: usize,
}

impl Default for GentleGraspConfig {
    fn default() -> Self {
        // Slow closing: the per-frame opening decrement stays small enough
        // that the stop overshoot is well inside a 10% force tolerance.
        Self { grip_target: 0.8, leak: LeakyConfig { leak_alpha: 0.997 }, max_frames: 3000 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GentleGraspResult {
    pub final_opening: f64,
    pub final_grip: f64,
    pub frames: usize,
}

/// Closes the gripper through the leaky integrator until the grasp-effort
/// statistic reaches the target.
pub fn gentle_grasp(env: &mut Env, cfg: &GentleGraspConfig) -> Result<GentleGraspResult> {
    let obs = env(&SkillCommand::ZERO);
    let mut opening = obs.plant.gripper_opening;
    for frame in 1..=cfg.max_frames {
        opening = leaky_step(opening, 0.0, &cfg.leak);
        let cmd = SkillCommand { gripper_target: Some(opening), ..SkillCommand::ZERO };
        let obs = env(&cmd);
        if obs.grip >= cfg.grip_target {
            return Ok(GentleGraspResult {
                final_opening: obs.plant.gripper_opening,
                final_grip: obs.grip,
                frames: frame,
            });
        }
        if obs.plant.gripper_opening < 0.5 {
            return Err(CoreError::NoObject);
        }
    }
    Err(CoreError::Timeout { max_frames: cfg.max_frames })
}

// ---------------------------------------------------------------------------
// Hold

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HoldConfig {
    /// Opening reduction applied per slipping frame, mm.
    pub increment: f64,
    pub frames: usize,
}

impl Default for HoldConfig {
    fn default() -> Self {
        Self { increment: 1.0, frames: 150 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoldResult {
    pub openings: Vec<f64>,
    pub cannot_hold: bool,
}

/// Slip-triggered regrasp: tightens by a fixed increment whenever slip is
/// active, otherwise holds the current opening.
pub fn hold_regrip(env: &mut Env, cfg: &HoldConfig) -> HoldResult {
    let obs = env(&SkillCommand::ZERO);
    let mut target = obs.plant.gripper_opening;
    let mut openings = Vec::with_capacity(cfg.frames);
    let mut cannot_hold = false;
    for _ in 0..cfg.frames {
        let obs = env(&SkillCommand { gripper_target: Some(target), ..SkillCommand::ZERO });
        if obs.slip.active {
            target = (target - cfg.increment).max(0.0);
            if target == 0.0 {
                cannot_hold = true;
            }
        }
        openings.push(obs.plant.gripper_opening);
    }
    HoldResult { openings, cannot_hold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn force(f: [f64; 3]) -> ForceEstimate {
        ForceEstimate { f }
    }

    fn percept(centroid: [f64; 2], m: f64) -> ObjectPercept {
        ObjectPercept { present: true, centroid, m, theta: 0.0, degenerate_orientation: false }
    }

    const CENTER: [f64; 2] = [160.0, 120.0];
    const DT: f64 = 1.0 / 15.0;

    #[test]
    fn force_track_hand_evaluated() {
        let cfg = ForceTrackConfig { f_min: 0.1, f_max: 1.1, v_min: 0.0, v_max: 20.0, eps: 0.2 };
        assert_abs_diff_eq!(cfg.alpha(), 20.0, epsilon = 1e-12);
        // Dead zone.
        let cmd = force_track_step(&force([0.1, 0.0, 0.0]), &cfg);
        assert_eq!(cmd.ee_velocity, [0.0, 0.0, 0.0]);
        // alpha * (0.5 - 0.1) = 8.
        let cmd = force_track_step(&force([0.5, 0.0, 0.0]), &cfg);
        assert_abs_diff_eq!(cmd.ee_velocity[0], 8.0, epsilon = 1e-12);
        // Sign symmetry.
        let cmd = force_track_step(&force([-0.5, 0.0, 0.0]), &cfg);
        assert_abs_diff_eq!(cmd.ee_velocity[0], -8.0, epsilon = 1e-12);
        // Clamp to v_max above f_max.
        let cmd = force_track_step(&force([0.0, 5.0, 0.0]), &cfg);
        assert_abs_diff_eq!(cmd.ee_velocity[1], 20.0, epsilon = 1e-12);
    }

    #[test]
    fn force_track_is_odd_and_range_bounded() {
        let cfg = ForceTrackConfig::default();
        for i in 0..200 {
            let f = [i as f64 * 0.013 - 1.3, (i as f64 * 0.029).sin(), 0.3 - i as f64 * 0.004];
            let pos = force_track_step(&force(f), &cfg);
            let neg = force_track_step(&force([-f[0], -f[1], -f[2]]), &cfg);
            for a in 0..3 {
                assert_abs_diff_eq!(pos.ee_velocity[a], -neg.ee_velocity[a], epsilon = 1e-12);
                let v = pos.ee_velocity[a].abs();
                assert!(v <= cfg.v_max);
                if f[a].abs() >= cfg.f_min.max(cfg.eps) {
                    assert!(v >= cfg.v_min);
                }
            }
        }
    }

    #[test]
    fn object_track_follows_eq_structure() {
        let cfg = ObjectTrackConfig { m_eps: 1000.0, ..ObjectTrackConfig::default() };
        // Centered centroid, big object: retreat by delta on y.
        let out = object_track_step(&percept(CENTER, 2000.0), &cfg, CENTER, DT);
        assert_abs_diff_eq!(out.command.ee_velocity[1] * DT, -cfg.delta, epsilon = 1e-12);
        assert_eq!(out.command.ee_velocity[0], 0.0);
        // Small object: advance.
        let out = object_track_step(&percept(CENTER, 500.0), &cfg, CENTER, DT);
        assert_abs_diff_eq!(out.command.ee_velocity[1] * DT, cfg.delta, epsilon = 1e-12);
        // Inside centroid dead zone: no x step.
        let out = object_track_step(&percept([CENTER[0] + 2.0, CENTER[1]], 500.0), &cfg, CENTER, DT);
        assert_eq!(out.command.ee_velocity[0], 0.0);
        // Outside dead zone: gain then clamp.
        let out = object_track_step(&percept([CENTER[0] + 5.0, CENTER[1]], 500.0), &cfg, CENTER, DT);
        assert_abs_diff_eq!(out.command.ee_velocity[0] * DT, 0.5, epsilon = 1e-12);
        let out = object_track_step(&percept([CENTER[0] - 50.0, CENTER[1]], 500.0), &cfg, CENTER, DT);
        assert_abs_diff_eq!(out.command.ee_velocity[0] * DT, -cfg.x_max, epsilon = 1e-12);
        // Never a z command.
        assert_eq!(out.command.ee_velocity[2], 0.0);
        // Absent percept flags lost object.
        let out = object_track_step(&ObjectPercept::absent(), &cfg, CENTER, DT);
        assert!(out.lost_object);
        assert_eq!(out.command, SkillCommand::ZERO);
    }

    #[test]
    fn object_track_y_step_is_bang_bang() {
        let cfg = ObjectTrackConfig::default();
        for m in [1.0, 500.0, cfg.m_eps, cfg.m_eps + 1.0, 1e5] {
            let out = object_track_step(&percept(CENTER, m), &cfg, CENTER, DT);
            let dy = out.command.ee_velocity[1] * DT;
            assert!((dy - cfg.delta).abs() < 1e-12 || (dy + cfg.delta).abs() < 1e-12);
        }
    }

    #[test]
    fn object_track_swapped_axes() {
        let cfg = ObjectTrackConfig { swap_axes: true, ..ObjectTrackConfig::default() };
        let out = object_track_step(&percept([CENTER[0], CENTER[1] + 8.0], 500.0), &cfg, CENTER, DT);
        assert_abs_diff_eq!(out.command.ee_velocity[1] * DT, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(out.command.ee_velocity[0] * DT, cfg.delta, epsilon = 1e-12);
    }

    #[test]
    fn arm_rot_hand_evaluated() {
        let out = arm_rot_step(&TorqueEstimate { tau_z: 0.4 }, 0.5, 0.05);
        assert_abs_diff_eq!(out.command.ee_rot_velocity, -0.2, epsilon = 1e-12);
        assert!(!out.converged);
        let out = arm_rot_step(&TorqueEstimate { tau_z: 0.0 }, 0.5, 0.05);
        assert!(out.converged);
        assert_eq!(out.command, SkillCommand::ZERO);
    }

    #[test]
    fn leaky_fixed_point_and_44_step_bound() {
        let cfg = LeakyConfig { leak_alpha: 0.9 };
        assert_abs_diff_eq!(leaky_step(1.0, -1.0, &cfg), 1.0, epsilon = 1e-12);

        let mut x = 0.0;
        let mut steps_to_1pct = None;
        for t in 1..=60 {
            x = leaky_step(x, -1.0, &cfg);
            if steps_to_1pct.is_none() && (x - 1.0).abs() <= 0.01 {
                steps_to_1pct = Some(t);
            }
        }
        // 0.9^43 > 0.01 > 0.9^44: the bound is met at exactly 44 steps.
        assert_eq!(steps_to_1pct, Some(44));
    }

    #[test]
    fn leaky_contraction_is_exact() {
        let cfg = LeakyConfig { leak_alpha: 0.73 };
        let (l, mut x) = (-37.0, 5.0);
        for _ in 0..50 {
            let next = leaky_step(x, l, &cfg);
            assert_abs_diff_eq!((next - (-l)).abs(), cfg.leak_alpha * (x - (-l)).abs(), epsilon = 1e-9);
            x = next;
        }
    }

    #[test]
    fn leaky_alpha_zero_limit_jumps_immediately() {
        let cfg = LeakyConfig { leak_alpha: 1e-12 };
        assert_abs_diff_eq!(leaky_step(40.0, -25.0, &cfg), 25.0, epsilon = 1e-9);
    }

    #[test]
    fn handover_closes_only_on_slip_and_force() {
        let cfg = HandoverConfig::default();
        let slip_on = SlipSignal { flow_magnitude: 2.0, active: true };
        let slip_off = SlipSignal { flow_magnitude: 0.0, active: false };
        let strong = force([0.8, 0.0, 0.0]);
        let weak = force([0.1, 0.0, 0.0]);

        let mut t = HandoverTrigger::new(cfg);
        assert_eq!(t.step(&slip_on, &strong), cfg.close_target);
        let mut t = HandoverTrigger::new(cfg);
        assert_eq!(t.step(&slip_on, &weak), cfg.open_target);
        let mut t = HandoverTrigger::new(cfg);
        assert_eq!(t.step(&slip_off, &strong), cfg.open_target);
        let mut t = HandoverTrigger::new(cfg);
        assert_eq!(t.step(&slip_off, &weak), cfg.open_target);
    }

    #[test]
    fn handover_hysteresis_latches_across_the_band() {
        let cfg = HandoverConfig { force_threshold: 1.0, ..HandoverConfig::default() };
        let slip_on = SlipSignal { flow_magnitude: 2.0, active: true };
        let mut t = HandoverTrigger::new(cfg);
        // 1.02 is inside the band: not yet active.
        assert_eq!(t.step(&slip_on, &force([1.02, 0.0, 0.0])), cfg.open_target);
        // Crossing 1.05 activates.
        assert_eq!(t.step(&slip_on, &force([1.06, 0.0, 0.0])), cfg.close_target);
        // Falling back inside the band keeps it latched.
        assert_eq!(t.step(&slip_on, &force([0.97, 0.0, 0.0])), cfg.close_target);
        // Only dropping below 0.95 releases.
        assert_eq!(t.step(&slip_on, &force([0.94, 0.0, 0.0])), cfg.open_target);
    }

    /// Synthetic env: plays back a schedule and integrates gripper targets.
    struct Playback {
        tau: Vec<f64>,
        slip: Vec<bool>,
        grip: Vec<f64>,
        m: Vec<f64>,
        t: usize,
        plant: PlantState,
    }

    impl Playback {
        fn obs(&mut self, cmd: &SkillCommand) -> SkillObs {
            if let Some(g) = cmd.gripper_target {
                self.plant.gripper_opening = g.clamp(0.0, MAX_OPENING);
            }
            for a in 0..3 {
                self.plant.ee_position[a] += cmd.ee_velocity[a] * DT;
            }
            let i = self.t.min(self.tau.len().saturating_sub(1));
            self.t += 1;
            SkillObs {
                force: force([0.0; 3]),
                tau_z: *self.tau.get(i).unwrap_or(&0.0),
                object: percept(CENTER, *self.m.get(i).unwrap_or(&0.0)),
                slip: SlipSignal {
                    flow_magnitude: 0.0,
                    active: *self.slip.get(i).unwrap_or(&false),
                },
                grip: *self.grip.get(i).unwrap_or(&0.0),
                plant: self.plant,
            }
        }
    }

    fn playback(tau: Vec<f64>, slip: Vec<bool>, grip: Vec<f64>, m: Vec<f64>) -> Playback {
        Playback { tau, slip, grip, m, t: 0, plant: PlantState::at_rest(50.0) }
    }

    #[test]
    fn in_hand_rot_regrips_immediately_when_torque_already_zero() {
        let mut pb = playback(vec![0.0; 20], vec![], vec![], vec![1e4; 20]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let cfg = InHandRotConfig::default();
        let res = in_hand_rot(&mut env, &cfg);
        assert!(!res.failed);
        assert!(!res.possible_stall);
        assert_eq!(res.frames, cfg.stop_frames as usize);
        assert_abs_diff_eq!(res.final_opening, cfg.regrip_target, epsilon = 1e-9);
    }

    #[test]
    fn in_hand_rot_flags_torque_cliff_as_stall() {
        // Torque holds high then cuts to zero: stiction signature.
        let mut tau = vec![0.6; 30];
        tau.extend(vec![0.0; 30]);
        let n = tau.len();
        let mut pb = playback(tau, vec![], vec![], vec![1e4; n]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let res = in_hand_rot(&mut env, &InHandRotConfig::default());
        assert!(!res.failed);
        assert!(res.possible_stall);
    }

    #[test]
    fn in_hand_rot_smooth_decay_is_not_a_stall() {
        let tau: Vec<f64> = (0..200).map(|i| 0.6 * (1.0 - i as f64 / 60.0).max(0.0)).collect();
        let n = tau.len();
        let mut pb = playback(tau, vec![], vec![], vec![1e4; n]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let res = in_hand_rot(&mut env, &InHandRotConfig::default());
        assert!(!res.failed);
        assert!(!res.possible_stall);
    }

    #[test]
    fn in_hand_rot_slip_mode_waits_for_slip_to_cease() {
        let mut slip = vec![false; 5];
        slip.extend(vec![true; 40]);
        slip.extend(vec![false; 20]);
        let n = slip.len();
        let mut pb = playback(vec![1.0; n], slip, vec![], vec![1e4; n]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let cfg = InHandRotConfig { mode: InHandRotMode::Slip, ..InHandRotConfig::default() };
        let res = in_hand_rot(&mut env, &cfg);
        assert!(!res.failed);
        // The initial observation consumes one schedule slot; then 4 lead-in
        // frames, 40 slipping frames, and 5 debounce frames.
        assert_eq!(res.frames, 49);
    }

    #[test]
    fn in_hand_rot_times_out_without_stop_condition() {
        let mut pb = playback(vec![1.0; 700], vec![], vec![], vec![1e4; 700]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let res = in_hand_rot(&mut env, &InHandRotConfig { max_frames: 50, ..InHandRotConfig::default() });
        assert!(res.failed);
    }

    #[test]
    fn vis_scan_errors_without_an_object() {
        let mut pb = playback(vec![0.0; 10], vec![], vec![], vec![0.0; 10]);
        let mut env = |cmd: &SkillCommand| {
            let mut o = pb.obs(cmd);
            o.object = ObjectPercept::absent();
            o
        };
        assert!(matches!(vis_scan(&mut env, &VisScanConfig::default()), Err(CoreError::NothingToScan)));
    }

    #[test]
    fn vis_scan_records_boundary_at_first_drop() {
        // Area above floor for 30 frames, then below.
        let mut m = vec![5000.0; 30];
        m.extend(vec![100.0; 20]);
        let n = m.len();
        let mut pb = playback(vec![0.0; n], vec![], vec![], m);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let cfg = VisScanConfig { velocity: [10.0, 0.0, 0.0], area_floor: 2000.0, debounce: 3, max_frames: 100 };
        let res = vis_scan(&mut env, &cfg).unwrap();
        assert!(!res.hit_limit);
        // The initial look consumes schedule slot 0, so the first below-floor
        // read lands 30 velocity steps past entry; the 3-frame debounce only
        // delays the return, not the recorded boundary.
        assert_abs_diff_eq!(res.extent, 30.0 * 10.0 / 15.0, epsilon = 1e-9);
    }

    #[test]
    fn vis_scan_zero_floor_runs_to_limit() {
        let mut pb = playback(vec![0.0; 50], vec![], vec![], vec![5000.0; 50]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let cfg = VisScanConfig { area_floor: 0.0, max_frames: 40, ..VisScanConfig::default() };
        let res = vis_scan(&mut env, &cfg).unwrap();
        assert!(res.hit_limit);
    }

    #[test]
    fn gentle_grasp_stops_at_target_and_flags_empty_gripper() {
        // Grip grows as the gripper closes: proportional to (50 - opening).
        let mut plant = PlantState::at_rest(50.0);
        let mut env = |cmd: &SkillCommand| {
            if let Some(g) = cmd.gripper_target {
                plant.gripper_opening = g.clamp(0.0, MAX_OPENING);
            }
            SkillObs {
                force: force([0.0; 3]),
                tau_z: 0.0,
                object: ObjectPercept::absent(),
                slip: SlipSignal { flow_magnitude: 0.0, active: false },
                grip: (45.0 - plant.gripper_opening).max(0.0) * 0.1,
                plant,
            }
        };
        let cfg = GentleGraspConfig { grip_target: 0.8, ..GentleGraspConfig::default() };
        let res = gentle_grasp(&mut env, &cfg).unwrap();
        assert!(res.final_grip >= 0.8 && res.final_grip <= 0.88, "overshoot {}", res.final_grip);

        let mut plant = PlantState::at_rest(50.0);
        let mut empty = |cmd: &SkillCommand| {
            if let Some(g) = cmd.gripper_target {
                plant.gripper_opening = g.clamp(0.0, MAX_OPENING);
            }
            SkillObs {
                force: force([0.0; 3]),
                tau_z: 0.0,
                object: ObjectPercept::absent(),
                slip: SlipSignal { flow_magnitude: 0.0, active: false },
                grip: 0.0,
                plant,
            }
        };
        assert!(matches!(gentle_grasp(&mut empty, &cfg), Err(CoreError::NoObject)));
    }

    #[test]
    fn hold_tightens_during_slip_bursts_only() {
        let mut slip = vec![false; 10];
        slip.extend(vec![true; 5]);
        slip.extend(vec![false; 10]);
        let n = slip.len();
        let mut pb = playback(vec![0.0; n], slip, vec![0.0; n], vec![0.0; n]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let res = hold_regrip(&mut env, &HoldConfig { increment: 1.0, frames: n });
        assert!(!res.cannot_hold);
        assert!(res.openings[..10].iter().all(|&o| o == 50.0));
        for w in res.openings[10..15].windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_abs_diff_eq!(res.openings[n - 1], 45.0, epsilon = 1e-9);

        let mut pb = playback(vec![0.0; 80], vec![true; 80], vec![0.0; 80], vec![0.0; 80]);
        let mut env = |cmd: &SkillCommand| pb.obs(cmd);
        let res = hold_regrip(&mut env, &HoldConfig { increment: 1.0, frames: 80 });
        assert!(res.cannot_hold);
    }
}
