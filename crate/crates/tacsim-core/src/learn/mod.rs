//! Learning-based skills: kernel ridge regression for force estimation and
//! an MLP substance classifier, with shared featureization and metrics.

pub mod dataset;
pub mod krr;
pub mod metrics;
pub mod mlp;

use serde::{Deserialize, Serialize};

use crate::geometry::SensorGeometry;
use crate::percept::ObjectPercept;
use crate::rig::scenario::StirFrame;
use crate::track::DisplacementField;

/// Fixed-length per-frame feature layout: `[dx_0, dy_0, .., dx_{N-1},
/// dy_{N-1}, centroid_x_offset, centroid_y_offset, theta, area]`.
/// Stale markers contribute zeros and set their mask bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// One bit per marker; true when the marker was stale this frame.
    pub stale: Vec<bool>,
}

pub const OBJECT_CHANNELS: usize = 4;

pub fn feature_dim(n_markers: usize) -> usize {
    2 * n_markers + OBJECT_CHANNELS
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn from_percepts(
        field: &DisplacementField,
        object: &ObjectPercept,
        geometry: &SensorGeometry,
    ) -> Self {
        let n = field.entries.len();
        let mut values = Vec::with_capacity(feature_dim(n));
        let mut stale = Vec::with_capacity(n);
        for e in &field.entries {
            if e.stale {
                values.push(0.0);
                values.push(0.0);
            } else {
                values.push(e.dx);
                values.push(e.dy);
            }
            stale.push(e.stale);
        }
        let [cx, cy] = geometry.image_center();
        if object.present {
            values.push(object.centroid[0] - cx);
            values.push(object.centroid[1] - cy);
            values.push(object.theta);
            values.push(object.m);
        } else {
            values.extend_from_slice(&[0.0; OBJECT_CHANNELS]);
        }
        Self { values, stale }
    }

    pub fn from_stir_frame(frame: &StirFrame) -> Self {
        let n = frame.marker_dev.len();
        let mut values = Vec::with_capacity(feature_dim(n));
        for d in &frame.marker_dev {
            values.push(d[0]);
            values.push(d[1]);
        }
        values.extend_from_slice(&frame.object);
        Self { values, stale: vec![false; n] }
    }
}

/// Pools a trial into one vector of the same width: per channel, the
/// temporal mean plus the temporal standard deviation. The sum keeps the
/// classifier input at the per-frame dimensionality while exposing both the
/// drag level and its spread.
pub fn summarize_trial(frames: &[FeatureVector]) -> Vec<f64> {
    let Some(first) = frames.first() else {
        return Vec::new();
    };
    let dim = first.dim();
    let n = frames.len() as f64;
    let mut out = vec![0.0; dim];
    for c in 0..dim {
        let mean = frames.iter().map(|f| f.values[c]).sum::<f64>() / n;
        let var = frames.iter().map(|f| (f.values[c] - mean).powi(2)).sum::<f64>() / n;
        out[c] = mean + var.sqrt();
    }
    out
}
