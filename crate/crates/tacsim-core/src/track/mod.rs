//! Marker tracking: blob detection, track association, and the per-marker
//! filter bank producing the displacement field.

pub mod blob;
pub mod kalman;

use serde::{Deserialize, Serialize};

use crate::geometry::{MarkerObservation, SensorGeometry};
use crate::image::GrayImage;
use blob::{detect_blobs, Blob, BlobConfig};
use kalman::{kf_step, KalmanConfig, MarkerTrack};

/// Per-marker filtered displacement and size ratio for one frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FieldEntry {
    pub marker_id: usize,
    /// Filtered displacement from the pinned rest position, px.
    pub dx: f64,
    pub dy: f64,
    /// Filtered size over pinned rest size.
    pub size_ratio: f64,
    /// No fresh measurement this frame; values carry the last filtered state.
    pub stale: bool,
}

/// The tactile readout: one entry per configured marker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisplacementField {
    pub frame: u64,
    pub entries: Vec<FieldEntry>,
}

impl DisplacementField {
    pub fn fresh_entries(&self) -> impl Iterator<Item = &FieldEntry> {
        self.entries.iter().filter(|e| !e.stale)
    }
}

/// Greedy nearest-neighbor assignment of blobs to reference positions.
///
/// Pairs within `gate` are taken in ascending distance order; distance ties
/// go to the lower marker id. Each blob and each marker is used at most once.
/// Returns, per marker, the index of its assigned blob.
pub fn associate(blobs: &[Blob], references: &[[f64; 2]], gate: f64) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (m, r) in references.iter().enumerate() {
        for (b, blob) in blobs.iter().enumerate() {
            let d = ((blob.x - r[0]).powi(2) + (blob.y - r[1]).powi(2)).sqrt();
            if d <= gate {
                pairs.push((d, m, b));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut marker_taken = vec![false; references.len()];
    let mut blob_taken = vec![false; blobs.len()];
    let mut out = vec![None; references.len()];
    for (_, m, b) in pairs {
        if !marker_taken[m] && !blob_taken[b] {
            marker_taken[m] = true;
            blob_taken[b] = true;
            out[m] = Some(b);
        }
    }
    out
}

/// Raw and filtered tracking output for one frame.
#[derive(Debug, Clone)]
pub struct TrackFrame {
    /// Per-marker raw observation (missing when no blob was assigned).
    pub raw: Vec<MarkerObservation>,
    pub field: DisplacementField,
}

/// Bank of independent per-marker filters plus the detection front end.
///
/// Tracks initialize lazily from each marker's first valid detection; until
/// then the marker reports a stale zero-displacement entry.
#[derive(Debug, Clone)]
pub struct TrackBank {
    pub geometry: SensorGeometry,
    pub kalman: KalmanConfig,
    pub blob_cfg: BlobConfig,
    /// Association gate radius, px.
    pub gate: f64,
    tracks: Vec<Option<MarkerTrack>>,
    frame: u64,
}

impl TrackBank {
    pub fn new(geometry: SensorGeometry, kalman: KalmanConfig) -> Self {
        let n = geometry.n_markers();
        let gate = 2.0 * geometry.nominal_marker_radius;
        Self { geometry, kalman, blob_cfg: BlobConfig::default(), gate, tracks: vec![None; n], frame: 0 }
    }

    /// Total covariance re-symmetrizations across the bank (diagnostics).
    pub fn resym_count(&self) -> u32 {
        self.tracks.iter().flatten().map(|t| t.resym_count).sum()
    }

    pub fn track(&self, marker_id: usize) -> Option<&MarkerTrack> {
        self.tracks[marker_id].as_ref()
    }

    /// Detects blobs, associates them to markers, and advances every filter.
    pub fn step(&mut self, gray: &GrayImage) -> TrackFrame {
        let blobs = detect_blobs(gray, &self.blob_cfg);
        let references: Vec<[f64; 2]> = self
            .tracks
            .iter()
            .enumerate()
            .map(|(id, t)| match t {
                Some(t) => [t.mean[1], t.mean[3]],
                None => self.geometry.marker_layout[id],
            })
            .collect();
        let assignment = associate(&blobs, &references, self.gate);

        let mut raw = Vec::with_capacity(self.tracks.len());
        let mut entries = Vec::with_capacity(self.tracks.len());
        for (id, assigned) in assignment.iter().enumerate() {
            let obs = match assigned {
                Some(b) => {
                    let blob = &blobs[*b];
                    MarkerObservation { marker_id: id, x: blob.x, y: blob.y, s: blob.size, valid: true }
                }
                None => MarkerObservation::missing(id),
            };
            match (&mut self.tracks[id], obs.valid) {
                (Some(track), true) => kf_step(track, &self.kalman, Some(&obs)),
                (Some(track), false) => kf_step(track, &self.kalman, None),
                (None, true) => self.tracks[id] = Some(MarkerTrack::from_first_detection(&obs, &self.kalman)),
                (None, false) => {}
            }
            let entry = match &self.tracks[id] {
                Some(t) => {
                    let [dx, dy] = t.displacement();
                    FieldEntry { marker_id: id, dx, dy, size_ratio: t.size_ratio(), stale: !obs.valid }
                }
                None => FieldEntry { marker_id: id, dx: 0.0, dy: 0.0, size_ratio: 1.0, stale: true },
            };
            raw.push(obs);
            entries.push(entry);
        }

        let field = DisplacementField { frame: self.frame, entries };
        self.frame += 1;
        TrackFrame { raw, field }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rig::{deform_markers, render_frame, AppliedWrench, SkinModel};
    use crate::rng::seeded_rng;

    fn quiet_skin() -> SkinModel {
        SkinModel { noise_sigma: 0.0, ..SkinModel::default() }
    }

    #[test]
    fn rest_round_trip_recovers_nominal_centers() {
        let g = SensorGeometry::default();
        let mut bank = TrackBank::new(g.clone(), KalmanConfig::default());
        let obs = deform_markers(&g, &quiet_skin(), &AppliedWrench::ZERO, &mut seeded_rng(0)).unwrap();
        let frame = render_frame(&g, &obs, None);
        let out = bank.step(&frame.gray);
        for (m, &[x, y]) in out.raw.iter().zip(&g.marker_layout) {
            assert!(m.valid);
            assert!((m.x - x).abs() < 0.5 && (m.y - y).abs() < 0.5, "marker {}", m.marker_id);
        }
    }

    #[test]
    fn identity_assignment_when_blobs_sit_on_references() {
        let refs = [[10.0, 10.0], [40.0, 10.0], [10.0, 40.0]];
        let blobs: Vec<Blob> = refs.iter().map(|r| Blob { x: r[0], y: r[1], size: 20.0 }).collect();
        let got = associate(&blobs, &refs, 8.0);
        assert_eq!(got, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn missing_blob_leaves_other_assignments_intact() {
        let refs = [[10.0, 10.0], [40.0, 10.0]];
        let blobs = [Blob { x: 40.5, y: 10.0, size: 20.0 }];
        let got = associate(&blobs, &refs, 8.0);
        assert_eq!(got, vec![None, Some(0)]);
    }

    #[test]
    fn equidistant_tie_goes_to_lower_marker_id() {
        let refs = [[10.0, 10.0], [20.0, 10.0]];
        let blobs = [Blob { x: 15.0, y: 10.0, size: 20.0 }];
        let got = associate(&blobs, &refs, 8.0);
        assert_eq!(got, vec![Some(0), None]);
    }

    #[test]
    fn uniform_shift_converges_to_two_px_displacement() {
        let g = SensorGeometry::default();
        let mut bank = TrackBank::new(g.clone(), KalmanConfig::default());
        let rng = &mut seeded_rng(3);
        let skin = quiet_skin();
        // c_shear = 1: two force-units shift every marker +2 px in x.
        let rest = deform_markers(&g, &skin, &AppliedWrench::ZERO, rng).unwrap();
        bank.step(&render_frame(&g, &rest, None).gray);
        let pulled = deform_markers(&g, &skin, &AppliedWrench::tangential(2.0, 0.0), rng).unwrap();
        let frame = render_frame(&g, &pulled, None);
        let mut last = None;
        for _ in 0..50 {
            last = Some(bank.step(&frame.gray));
        }
        for e in last.unwrap().field.fresh_entries() {
            assert!((e.dx - 2.0).abs() < 0.1, "marker {} dx {}", e.marker_id, e.dx);
            assert!(e.dy.abs() < 0.1);
        }
    }

    #[test]
    fn occluded_marker_goes_stale_and_recovers() {
        let g = SensorGeometry::default();
        let mut bank = TrackBank::new(g.clone(), KalmanConfig::default());
        let rng = &mut seeded_rng(0);
        let rest = deform_markers(&g, &quiet_skin(), &AppliedWrench::ZERO, rng).unwrap();
        let full = render_frame(&g, &rest, None);
        bank.step(&full.gray);

        let mut occluded = rest.clone();
        occluded[5].valid = false;
        let partial = render_frame(&g, &occluded, None);
        let out = bank.step(&partial.gray);
        assert!(!out.raw[5].valid);
        assert!(out.field.entries[5].stale);
        assert_eq!(out.field.fresh_entries().count(), 36);

        let again = bank.step(&full.gray);
        assert!(again.raw[5].valid);
        assert!(!again.field.entries[5].stale);
    }
}
