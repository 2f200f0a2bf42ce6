//! Sensor geometry, frame timing, and the shared coordinate convention.

use serde::{Deserialize, Serialize};

/// Default camera frame rate; all control loops run at this rate.
pub const FRAME_RATE_HZ: f64 = 15.0;

/// Marker layout plus image dimensions for one tactile sensor.
///
/// The default layout places 37 markers (3 concentric rings of 6/12/18 plus
/// one center marker) on a 320x240 image with nominal radius 4 px, echoing a
/// radially symmetric fingertip pattern.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub schema_version: u32,
    pub image_width: u32,
    pub image_height: u32,
    /// Nominal marker centers (x, y) in pixels, indexed by marker id.
    pub marker_layout: Vec<[f64; 2]>,
    pub nominal_marker_radius: f64,
    pub frame_rate_hz: f64,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        let cx = 160.0;
        let cy = 120.0;
        let mut layout = vec![[cx, cy]];
        for (count, radius) in [(6, 30.0), (12, 60.0), (18, 90.0)] {
            for j in 0..count {
                let a = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                layout.push([cx + radius * a.cos(), cy + radius * a.sin()]);
            }
        }
        let g = Self {
            schema_version: 1,
            image_width: 320,
            image_height: 240,
            marker_layout: layout,
            nominal_marker_radius: 4.0,
            frame_rate_hz: FRAME_RATE_HZ,
        };
        g.validate().expect("default geometry satisfies invariants");
        g
    }
}

impl SensorGeometry {
    /// Checks the layout invariants: margins, pairwise separation, rate.
    ///
    /// Separation must exceed 4x the nominal radius so blob detection cannot
    /// merge neighbors at rest; centers need a 2-radius margin to the bounds.
    pub fn validate(&self) -> Result<(), String> {
        if self.frame_rate_hz <= 0.0 {
            return Err("frame_rate_hz must be positive".into());
        }
        let m = 2.0 * self.nominal_marker_radius;
        for (i, &[x, y]) in self.marker_layout.iter().enumerate() {
            if x < m
                || y < m
                || x > self.image_width as f64 - m
                || y > self.image_height as f64 - m
            {
                return Err(format!("marker {i} within {m} px of image bounds"));
            }
            for (j, &[x2, y2]) in self.marker_layout.iter().enumerate().skip(i + 1) {
                let d = ((x - x2).powi(2) + (y - y2).powi(2)).sqrt();
                if d <= 4.0 * self.nominal_marker_radius {
                    return Err(format!("markers {i} and {j} separated by only {d:.2} px"));
                }
            }
        }
        Ok(())
    }

    pub fn n_markers(&self) -> usize {
        self.marker_layout.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.frame_rate_hz
    }

    /// Mean of all nominal centers; lever arms for torque are taken from here.
    pub fn layout_centroid(&self) -> [f64; 2] {
        let n = self.marker_layout.len() as f64;
        let (sx, sy) = self
            .marker_layout
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &[x, y]| (sx + x, sy + y));
        [sx / n, sy / n]
    }

    pub fn image_center(&self) -> [f64; 2] {
        [self.image_width as f64 / 2.0, self.image_height as f64 / 2.0]
    }
}

/// One detected (or missed) marker measurement for a frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MarkerObservation {
    pub marker_id: usize,
    /// Blob center x in pixels; meaningful only when `valid`.
    pub x: f64,
    pub y: f64,
    /// Blob size in pixels squared (pixel count).
    pub s: f64,
    pub valid: bool,
}

impl MarkerObservation {
    pub fn missing(marker_id: usize) -> Self {
        Self { marker_id, x: 0.0, y: 0.0, s: 0.0, valid: false }
    }
}

/// Frame counter with the shared control period.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrameClock {
    pub t: u64,
    pub dt: f64,
}

impl FrameClock {
    pub fn new(frame_rate_hz: f64) -> Self {
        Self { t: 0, dt: 1.0 / frame_rate_hz }
    }

    pub fn tick(&mut self) {
        self.t += 1;
    }

    pub fn seconds(&self) -> f64 {
        self.t as f64 * self.dt
    }
}

impl Default for FrameClock {
    fn default() -> Self {
        Self::new(FRAME_RATE_HZ)
    }
}

/// The single source of truth for coordinate axes.
///
/// The xy-plane is the image plane (x along image columns, y along rows);
/// z points from one fingertip to the other, i.e. along the camera axis, and
/// is observed only through marker size change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisConvention {
    pub x: &'static str,
    pub y: &'static str,
    pub z: &'static str,
}

impl AxisConvention {
    /// Maps an image-plane displacement plus size-derived component into the
    /// end-effector frame. The map is the identity by construction.
    pub fn image_to_ee(&self, d: [f64; 3]) -> [f64; 3] {
        d
    }

    pub fn ee_to_image(&self, d: [f64; 3]) -> [f64; 3] {
        d
    }
}

/// Returns the fixed axis convention used by every module.
pub fn axis_convention() -> AxisConvention {
    AxisConvention {
        x: "image horizontal (columns)",
        y: "image vertical (rows)",
        z: "fingertip-to-fingertip normal (marker size channel)",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_geometry_is_valid_and_radial() {
        let g = SensorGeometry::default();
        assert_eq!(g.n_markers(), 37);
        assert!(g.validate().is_ok());
        let c = g.layout_centroid();
        assert!((c[0] - 160.0).abs() < 1e-9 && (c[1] - 120.0).abs() < 1e-9);
    }

    #[test]
    fn geometry_construction_is_pure() {
        let a = SensorGeometry::default();
        let b = SensorGeometry::default();
        assert_eq!(a.marker_layout, b.marker_layout);
    }

    #[test]
    fn geometry_round_trips_through_json() {
        let g = SensorGeometry::default();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"schema_version\":1"));
        let back: SensorGeometry = serde_json::from_str(&s).unwrap();
        assert_eq!(back.marker_layout, g.marker_layout);
    }

    #[test]
    fn axis_convention_round_trip_is_identity() {
        let ax = axis_convention();
        let d = [1.5, -2.0, 0.25];
        assert_eq!(ax.ee_to_image(ax.image_to_ee(d)), d);
        assert!(ax.x.contains("horizontal"));
        assert!(ax.z.contains("fingertip"));
    }

    #[test]
    fn clock_ticks_monotonically() {
        let mut c = FrameClock::default();
        assert!((c.dt - 1.0 / 15.0).abs() < 1e-15);
        for i in 0..10 {
            assert_eq!(c.t, i);
            c.tick();
        }
    }
}
