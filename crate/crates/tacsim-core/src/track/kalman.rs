//! Per-marker Kalman filter.
//!
//! State (9 entries): `[x0, x, y0, y, s0, s, vx, vy, vs]`. The current
//! components follow a constant-velocity model over `dt`; the initial
//! components have identity dynamics and near-zero process noise, so they
//! stay pinned to the first detection. The measurement re-feeds that first
//! detection for the initial components alongside the fresh blob reading,
//! which keeps the six measured entries observable with a fixed 6x9 H.

use nalgebra::{SMatrix, SVector};

use crate::geometry::MarkerObservation;

pub type State = SVector<f64, 9>;
pub type Cov = SMatrix<f64, 9, 9>;
type Meas = SVector<f64, 6>;
type MeasMat = SMatrix<f64, 6, 9>;
type MeasCov = SMatrix<f64, 6, 6>;

/// Filter noise scales; covariances enter as `q`-scaled and `r`-scaled
/// identities (initial components get `q * 1e-6`).
#[derive(Debug, Clone, Copy)]
pub struct KalmanConfig {
    pub q: f64,
    pub r: f64,
    pub dt: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { q: 0.01, r: 0.1, dt: 1.0 / 15.0 }
    }
}

impl KalmanConfig {
    pub fn transition(&self) -> Cov {
        let mut a = Cov::identity();
        a[(1, 6)] = self.dt;
        a[(3, 7)] = self.dt;
        a[(5, 8)] = self.dt;
        a
    }

    pub fn process_noise(&self) -> Cov {
        let mut q = Cov::zeros();
        for (i, scale) in [1e-6, 1.0, 1e-6, 1.0, 1e-6, 1.0, 1.0, 1.0, 1.0].iter().enumerate() {
            q[(i, i)] = self.q * scale;
        }
        q
    }

    pub fn measurement_matrix(&self) -> MeasMat {
        let mut h = MeasMat::zeros();
        for i in 0..6 {
            h[(i, i)] = 1.0;
        }
        h
    }

    pub fn measurement_noise(&self) -> MeasCov {
        MeasCov::identity() * self.r
    }
}

/// One tracked marker: filter state plus bookkeeping.
#[derive(Debug, Clone)]
pub struct MarkerTrack {
    pub marker_id: usize,
    pub mean: State,
    pub cov: Cov,
    /// First valid detection `(x, y, s)`; pins the initial components.
    pub pin: [f64; 3],
    /// Consecutive frames without a measurement.
    pub missing_streak: u32,
    /// Times the covariance had to be re-symmetrized after losing PD.
    pub resym_count: u32,
}

impl MarkerTrack {
    /// Starts a track from its first valid detection. The initial covariance
    /// is `r * I`: the first measurement's own uncertainty.
    pub fn from_first_detection(obs: &MarkerObservation, cfg: &KalmanConfig) -> Self {
        let mut mean = State::zeros();
        mean[0] = obs.x;
        mean[1] = obs.x;
        mean[2] = obs.y;
        mean[3] = obs.y;
        mean[4] = obs.s;
        mean[5] = obs.s;
        Self {
            marker_id: obs.marker_id,
            mean,
            cov: Cov::identity() * cfg.r,
            pin: [obs.x, obs.y, obs.s],
            missing_streak: 0,
            resym_count: 0,
        }
    }

    /// Filtered displacement from the pinned rest components.
    pub fn displacement(&self) -> [f64; 2] {
        [self.mean[1] - self.mean[0], self.mean[3] - self.mean[2]]
    }

    pub fn size_ratio(&self) -> f64 {
        self.mean[5] / self.mean[4]
    }
}

/// Standard predict/update step; predict-only when the measurement is
/// missing. Uses the Joseph-form covariance update; if the posterior loses
/// positive definiteness numerically it is re-symmetrized and counted.
pub fn kf_step(track: &mut MarkerTrack, cfg: &KalmanConfig, measurement: Option<&MarkerObservation>) {
    let a = cfg.transition();
    track.mean = a * track.mean;
    track.cov = a * track.cov * a.transpose() + cfg.process_noise();

    let Some(obs) = measurement else {
        track.missing_streak += 1;
        return;
    };
    track.missing_streak = 0;

    let h = cfg.measurement_matrix();
    let r = cfg.measurement_noise();
    let z = Meas::from([track.pin[0], obs.x, track.pin[1], obs.y, track.pin[2], obs.s]);

    let s = h * track.cov * h.transpose() + r;
    let pht = track.cov * h.transpose();
    let chol = nalgebra::Cholesky::new(s).expect("innovation covariance PD (R > 0)");
    let k = chol.solve(&pht.transpose()).transpose();

    track.mean += k * (z - h * track.mean);
    let ikh = Cov::identity() - k * h;
    track.cov = ikh * track.cov * ikh.transpose() + k * r * k.transpose();

    if nalgebra::Cholesky::new(track.cov).is_none() {
        track.cov = (track.cov + track.cov.transpose()) * 0.5;
        track.resym_count += 1;
    }
}
