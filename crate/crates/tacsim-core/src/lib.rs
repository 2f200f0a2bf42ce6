//! Simulated tactile-skill stack for a marker-based optical skin sensor.
//!
//! The crate is layered bottom-up: `rig` simulates the elastic skin, scene
//! rendering, and scripted scenarios; `track` finds and Kalman-filters the
//! markers; `percept` turns displacement fields into force, torque, object,
//! and slip estimates; `skills` holds the feedback controllers; `learn` the
//! regression/classification skills; `pipeline` chains everything per frame.

pub mod error;
pub mod geometry;
pub mod image;
pub mod learn;
pub mod percept;
pub mod pipeline;
pub mod rig;
pub mod rng;
pub mod skills;
pub mod track;

pub use error::{CoreError, Result};
pub use geometry::{FrameClock, MarkerObservation, SensorGeometry, FRAME_RATE_HZ};
pub use image::{GrayImage, Mask};
pub use percept::{ForceEstimate, ObjectPercept, SlipSignal, TorqueEstimate};
pub use pipeline::{PerceptBundle, TactilePipeline, Z_GAIN};
pub use rig::{AppliedWrench, PlantState, SceneObject, SensorFrame, SkinModel, MAX_OPENING};
pub use skills::{SkillCommand, SkillObs};
pub use track::{DisplacementField, FieldEntry, TrackBank};
