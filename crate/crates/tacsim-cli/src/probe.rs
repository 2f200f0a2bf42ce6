//! Locating the highest-load point along a probed span.

use serde::{Deserialize, Serialize};
use tacsim_core::rig::scenario::LoadSample;
use tacsim_core::CoreError;

pub const DEFAULT_PROBE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Center sample of the winning window.
    pub index: usize,
    /// Normalized position of that sample.
    pub position: f64,
    /// Its moving-average reading.
    pub smoothed: f64,
}

/// Moving-average argmax over the load stream. Ties pick the window whose
/// center sample lies closest to the span midpoint; a flat smoothed profile
/// has no unique maximum and is rejected.
pub fn probe_max_load(samples: &[LoadSample], window: usize) -> Result<ProbeResult, CoreError> {
    if window == 0 || samples.len() < window {
        return Err(CoreError::TooFewSamples { need: window.max(1), got: samples.len() });
    }
    let mid = 0.5 * (samples[0].position + samples[samples.len() - 1].position);
    let mut best: Option<ProbeResult> = None;
    let mut flattest = f64::INFINITY;
    for start in 0..=samples.len() - window {
        let center = start + (window - 1) / 2;
        let smoothed =
            samples[start..start + window].iter().map(|s| s.reading).sum::<f64>() / window as f64;
        flattest = flattest.min(smoothed);
        let cand = ProbeResult { index: center, position: samples[center].position, smoothed };
        best = Some(match best {
            None => cand,
            Some(b) if smoothed > b.smoothed => cand,
            Some(b)
                if smoothed == b.smoothed
                    && (cand.position - mid).abs() < (b.position - mid).abs() =>
            {
                cand
            }
            Some(b) => b,
        });
    }
    let best = best.expect("at least one window fits");
    if best.smoothed == flattest {
        return Err(CoreError::NoUniqueMaximum);
    }
    Ok(best)
}
