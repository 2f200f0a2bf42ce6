//! Dataset generation for the two learning skills: pressing episodes for
//! force regression, stirring trials for substance classification.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::SensorGeometry;
use crate::learn::{summarize_trial, FeatureVector};
use crate::pipeline::TactilePipeline;
use crate::rig::scenario::{stir_trial, PressEpisode, N_MOVEMENTS, SUBSTANCES};
use crate::rig::SkinModel;

pub const PRESS_EPISODES: usize = 20;
pub const PRESS_FRAMES_PER_EPISODE: usize = 75;
pub const TRIALS_PER_MOVEMENT: usize = 15;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PressDataset {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<f64>,
    pub train_episodes: Vec<usize>,
    pub test_episodes: Vec<usize>,
}

impl PressDataset {
    pub fn force_range(&self) -> f64 {
        let all = self.train_y.iter().chain(&self.test_y);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for &v in all {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }
}

/// 20 pressing episodes of 5 s at 15 fps against the skin, run through the
/// full tracking pipeline; labels are the scripted ground-truth normal
/// force. The split is episode-wise (16 train / 4 test), so no frames leak
/// across it.
pub fn gen_press_dataset<R: Rng>(
    geometry: &SensorGeometry,
    skin: &SkinModel,
    rng: &mut R,
) -> Result<PressDataset> {
    let mut episode_ids: Vec<usize> = (0..PRESS_EPISODES).collect();
    episode_ids.shuffle(rng);
    let test_set: Vec<usize> = episode_ids[..PRESS_EPISODES / 5].to_vec();

    let mut out = PressDataset {
        train_x: Vec::new(),
        train_y: Vec::new(),
        test_x: Vec::new(),
        test_y: Vec::new(),
        train_episodes: Vec::new(),
        test_episodes: Vec::new(),
    };
    for ep_id in 0..PRESS_EPISODES {
        let episode = PressEpisode::sample(rng, PRESS_FRAMES_PER_EPISODE);
        let mut pipeline = TactilePipeline::new(geometry.clone(), *skin);
        let is_test = test_set.contains(&ep_id);
        if is_test {
            out.test_episodes.push(ep_id);
        } else {
            out.train_episodes.push(ep_id);
        }
        for i in 0..episode.frames {
            let bundle = pipeline.step(&episode.wrench_at(i), None, rng)?;
            let fv = FeatureVector::from_percepts(&bundle.field, &bundle.object, geometry);
            if is_test {
                out.test_x.push(fv.values);
                out.test_y.push(episode.force_at(i));
            } else {
                out.train_x.push(fv.values);
                out.train_y.push(episode.force_at(i));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StirDataset {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<usize>,
    pub test_x: Vec<Vec<f64>>,
    pub test_y: Vec<usize>,
    pub class_names: Vec<String>,
}

/// 120 stirring trials: 15 per movement, balanced over the three
/// substances, summarized per trial; stratified 72/48 split (24 train and
/// 16 test per substance).
pub fn gen_stir_dataset<R: Rng>(geometry: &SensorGeometry, rng: &mut R) -> Result<StirDataset> {
    let n_markers = geometry.n_markers();
    let mut by_class: Vec<Vec<Vec<f64>>> = vec![Vec::new(); SUBSTANCES.len()];
    for movement in 1..=N_MOVEMENTS {
        for _rep in 0..TRIALS_PER_MOVEMENT / SUBSTANCES.len() {
            for &substance in &SUBSTANCES {
                let trial = stir_trial(substance, movement, n_markers, rng)?;
                let frames: Vec<FeatureVector> =
                    trial.frames.iter().map(FeatureVector::from_stir_frame).collect();
                by_class[substance.class_index()].push(summarize_trial(&frames));
            }
        }
    }

    let mut out = StirDataset {
        train_x: Vec::new(),
        train_y: Vec::new(),
        test_x: Vec::new(),
        test_y: Vec::new(),
        class_names: SUBSTANCES.iter().map(|s| s.name().to_string()).collect(),
    };
    for (class, mut trials) in by_class.into_iter().enumerate() {
        let n_test = trials.len() * 2 / 5;
        let mut order: Vec<usize> = (0..trials.len()).collect();
        order.shuffle(rng);
        for (pos, &i) in order.iter().enumerate() {
            let x = std::mem::take(&mut trials[i]);
            if pos < n_test {
                out.test_x.push(x);
                out.test_y.push(class);
            } else {
                out.train_x.push(x);
                out.train_y.push(class);
            }
        }
    }
    Ok(out)
}

/// Convenience: substance display names in class order.
pub fn substance_names() -> Vec<&'static str> {
    SUBSTANCES.iter().map(|s| s.name()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Z_GAIN;
    use crate::rig::AppliedWrench;
    use crate::rng::seeded_rng;

    #[test]
    fn press_dataset_has_paper_protocol_counts() {
        let g = SensorGeometry::default();
        let skin = SkinModel::default();
        let mut rng = seeded_rng(21);
        let d = gen_press_dataset(&g, &skin, &mut rng).unwrap();
        assert_eq!(d.train_x.len() + d.test_x.len(), 1500);
        assert_eq!(d.train_episodes.len(), 16);
        assert_eq!(d.test_episodes.len(), 4);
        assert_eq!(d.train_x.len(), 1200);
        assert_eq!(d.test_x.len(), 300);
        // Episode-wise split: id sets disjoint.
        for id in &d.test_episodes {
            assert!(!d.train_episodes.contains(id));
        }
        assert!(d.train_x.iter().all(|x| x.len() == 78));
        assert!(d.force_range() > 1.0);
    }

    #[test]
    fn zero_force_frames_have_near_zero_features() {
        let g = SensorGeometry::default();
        let skin = SkinModel::default();
        let mut rng = seeded_rng(22);
        let d = gen_press_dataset(&g, &skin, &mut rng).unwrap();
        // Episode starts carry zero force; their features are noise-level.
        for (x, &y) in d.train_x.iter().zip(&d.train_y) {
            if y == 0.0 {
                let mag = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
                assert!(mag < 0.5, "zero-force feature magnitude {mag}");
            }
        }
        assert!(d.train_y.iter().filter(|&&y| y == 0.0).count() >= 16);
    }

    #[test]
    fn size_ratio_tracks_force_within_an_episode() {
        // Linear skin: the mean size-ratio deviation rides the true normal
        // force. The Kalman filter lags the sin^2 ramp slightly, so the
        // correlation is high but not exactly one.
        let g = SensorGeometry::default();
        let mut skin = SkinModel::default();
        skin.noise_sigma = 0.0;
        let mut rng = seeded_rng(23);
        let episode = PressEpisode { peak: 7.0, frames: 75, shear_ratio: 0.35 };
        let mut pipeline = TactilePipeline::new(g.clone(), skin);
        let mut forces = Vec::new();
        let mut ratios = Vec::new();
        for i in 0..episode.frames {
            let b = pipeline.step(&episode.wrench_at(i), None, &mut rng).unwrap();
            forces.push(episode.force_at(i));
            ratios.push(b.force.f[2] / Z_GAIN);
        }
        let n = forces.len() as f64;
        let (mf, mr) = (forces.iter().sum::<f64>() / n, ratios.iter().sum::<f64>() / n);
        let cov: f64 = forces.iter().zip(&ratios).map(|(f, r)| (f - mf) * (r - mr)).sum();
        let vf: f64 = forces.iter().map(|f| (f - mf).powi(2)).sum();
        let vr: f64 = ratios.iter().map(|r| (r - mr).powi(2)).sum();
        let corr = cov / (vf.sqrt() * vr.sqrt());
        assert!(corr > 0.95, "force/size-ratio correlation {corr}");
        // And the association is positive: bigger press, bigger markers.
        assert!(cov > 0.0);
    }

    #[test]
    fn press_wrench_is_oblique() {
        // The tangential component rides the normal one, so planar marker
        // displacement carries force information too.
        let ep = PressEpisode { peak: 5.0, frames: 75, shear_ratio: 0.35 };
        let w: AppliedWrench = ep.wrench_at(30);
        assert!(w.f[2] > 0.0);
        assert!((w.f[1] - 0.35 * w.f[2]).abs() < 1e-12);
    }

    #[test]
    fn stir_dataset_matches_paper_counts() {
        let g = SensorGeometry::default();
        let mut rng = seeded_rng(24);
        let d = gen_stir_dataset(&g, &mut rng).unwrap();
        assert_eq!(d.train_x.len(), 72);
        assert_eq!(d.test_x.len(), 48);
        for class in 0..3 {
            assert_eq!(d.test_y.iter().filter(|&&y| y == class).count(), 16);
            assert_eq!(d.train_y.iter().filter(|&&y| y == class).count(), 24);
        }
        assert_eq!(d.class_names, vec!["flour", "sugar", "peas"]);
        assert!(d.train_x.iter().all(|x| x.len() == 78));
    }

    #[test]
    fn stir_dataset_is_deterministic_per_seed() {
        let g = SensorGeometry::default();
        let a = gen_stir_dataset(&g, &mut seeded_rng(25)).unwrap();
        let b = gen_stir_dataset(&g, &mut seeded_rng(25)).unwrap();
        assert_eq!(a.train_x, b.train_x);
        assert_eq!(a.test_y, b.test_y);
        let c = gen_stir_dataset(&g, &mut seeded_rng(26)).unwrap();
        assert_ne!(a.train_x, c.train_x);
    }
}
