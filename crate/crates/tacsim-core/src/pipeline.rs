//! Full tactile processing chain: deform skin, render, track markers,
//! estimate percepts. One `step` per camera frame.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{MarkerObservation, SensorGeometry};
use crate::percept::{
    force_from_field, object_moments, slip_estimate, torque_from_field, ForceEstimate,
    ObjectPercept, SlipSignal, TorqueEstimate, SLIP_THRESHOLD,
};
use crate::rig::{deform_markers, render_frame, AppliedWrench, PlantState, SceneObject, SensorFrame, SkinModel};
use crate::skills::SkillObs;
use crate::track::kalman::KalmanConfig;
use crate::track::{DisplacementField, TrackBank};

/// Gain mapping relative marker-size change onto the normal-force channel.
pub const Z_GAIN: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerceptBundle {
    pub frame: u64,
    pub field: DisplacementField,
    pub force: ForceEstimate,
    pub torque: TorqueEstimate,
    pub object: ObjectPercept,
    pub slip: SlipSignal,
    /// Mean per-marker generalized displacement norm: xy shear plus the
    /// size channel scaled by `z_gain`. The grasp-effort statistic.
    pub grip: f64,
}

pub struct TactilePipeline {
    pub geometry: SensorGeometry,
    pub skin: SkinModel,
    pub bank: TrackBank,
    pub z_gain: f64,
    pub slip_threshold: f64,
    /// Last rendered frame, for inspection dumps.
    pub last_frame: Option<SensorFrame>,
    /// Raw per-marker detections from the last step, pre-filter.
    pub last_raw: Vec<MarkerObservation>,
    prev_gray: Option<crate::image::GrayImage>,
    frame: u64,
}

impl TactilePipeline {
    pub fn new(geometry: SensorGeometry, skin: SkinModel) -> Self {
        let bank = TrackBank::new(geometry.clone(), KalmanConfig::default());
        Self {
            geometry,
            skin,
            bank,
            z_gain: Z_GAIN,
            slip_threshold: SLIP_THRESHOLD,
            last_frame: None,
            last_raw: Vec::new(),
            prev_gray: None,
            frame: 0,
        }
    }

    /// Advances one camera frame under the given wrench and scene.
    pub fn step<R: Rng>(
        &mut self,
        wrench: &AppliedWrench,
        object: Option<&SceneObject>,
        rng: &mut R,
    ) -> Result<PerceptBundle> {
        let markers = deform_markers(&self.geometry, &self.skin, wrench, rng)?;
        let frame = render_frame(&self.geometry, &markers, object);
        let track = self.bank.step(&frame.gray);
        self.last_raw = track.raw;
        let field = track.field;

        let force = force_from_field(&field, self.z_gain)?;
        let torque = torque_from_field(&field, &self.geometry)?;
        let object_percept = object_moments(&frame.mask);
        let slip = match &self.prev_gray {
            Some(prev) => slip_estimate(prev, &frame.gray, &frame.mask, self.slip_threshold),
            None => SlipSignal { flow_magnitude: 0.0, active: false },
        };
        let grip = grip_statistic(&field, self.z_gain);

        self.prev_gray = Some(frame.gray.clone());
        self.last_frame = Some(frame);
        let bundle = PerceptBundle {
            frame: self.frame,
            field,
            force,
            torque,
            object: object_percept,
            slip,
            grip,
        };
        self.frame += 1;
        Ok(bundle)
    }

    /// `step` packaged as the observation a skill episode expects.
    pub fn observe<R: Rng>(
        &mut self,
        wrench: &AppliedWrench,
        object: Option<&SceneObject>,
        plant: PlantState,
        rng: &mut R,
    ) -> Result<SkillObs> {
        let b = self.step(wrench, object, rng)?;
        Ok(SkillObs {
            force: b.force,
            tau_z: b.torque.tau_z,
            object: b.object,
            slip: b.slip,
            grip: b.grip,
            plant,
        })
    }
}

/// Mean generalized per-marker displacement norm over fresh entries.
pub fn grip_statistic(field: &DisplacementField, z_gain: f64) -> f64 {
    let fresh: Vec<_> = field.fresh_entries().collect();
    if fresh.is_empty() {
        return 0.0;
    }
    fresh
        .iter()
        .map(|e| {
            let dz = z_gain * (e.size_ratio - 1.0);
            (e.dx * e.dx + e.dy * e.dy + dz * dz).sqrt()
        })
        .sum::<f64>()
        / fresh.len() as f64
}
