//! Small fully-connected classifier: logistic hidden layers, softmax
//! output, cross-entropy loss, plain batch gradient descent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::learn::krr::{apply_standardize, standardize_params};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub schema_version: u32,
    /// Layer widths including input and output, e.g. [78, 10, 10, 10, 3].
    pub layers: Vec<usize>,
    /// Per-dimension standardization of the raw inputs.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// weights[l][j][i]: layer l, output unit j, input unit i.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

/// The substance-classifier shape: three hidden layers of ten.
pub fn default_layers(input_dim: usize, n_classes: usize) -> Vec<usize> {
    vec![input_dim, 10, 10, 10, n_classes]
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl MlpModel {
    /// Xavier-uniform initialization, biases zero.
    pub fn new<R: Rng>(layers: Vec<usize>, rng: &mut R) -> Self {
        let mut weights = Vec::with_capacity(layers.len() - 1);
        let mut biases = Vec::with_capacity(layers.len() - 1);
        for l in 0..layers.len() - 1 {
            let (fan_in, fan_out) = (layers[l], layers[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_out)
                    .map(|_| (0..fan_in).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit).collect())
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        let dim = layers[0];
        Self { schema_version: 1, layers, mean: vec![0.0; dim], scale: vec![1.0; dim], weights, biases }
    }

    pub fn n_classes(&self) -> usize {
        *self.layers.last().expect("at least one layer")
    }

    /// Post-activation values per layer; index 0 is the standardized input,
    /// the last entry the softmax probabilities.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.layers.len();
        let mut acts = Vec::with_capacity(n_layers);
        acts.push(apply_standardize(x, &self.mean, &self.scale));
        for l in 0..n_layers - 1 {
            let prev = &acts[l];
            let mut a: Vec<f64> = self.weights[l]
                .iter()
                .zip(&self.biases[l])
                .map(|(row, b)| row.iter().zip(prev).map(|(w, h)| w * h).sum::<f64>() + b)
                .collect();
            if l + 1 < n_layers - 1 {
                for v in &mut a {
                    *v = sigmoid(*v);
                }
            } else {
                a = softmax(&a);
            }
            acts.push(a);
        }
        acts
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.layers[0] {
            return Err(CoreError::DimensionMismatch { expected: self.layers[0], got: x.len() });
        }
        Ok(self.activations(x).pop().expect("nonempty"))
    }

    /// Argmax class; exact ties resolve to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let p = self.predict_proba(x)?;
        let mut best = 0;
        for (i, &v) in p.iter().enumerate().skip(1) {
            if v > p[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(model: &MlpModel, x: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let mut loss = 0.0;
    for (xi, &yi) in x.iter().zip(labels) {
        let p = model.predict_proba(xi)?;
        let pv = p[yi];
        // max() would swallow a NaN probability; keep it visible so training
        // can abort on divergence.
        loss -= if pv.is_finite() { pv.max(1e-300).ln() } else { pv };
    }
    Ok(loss / x.len() as f64)
}

/// Batch-mean gradients of the cross-entropy, by backpropagation.
pub fn gradients(
    model: &MlpModel,
    x: &[Vec<f64>],
    labels: &[usize],
) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let n_w = model.weights.len();
    let mut gw: Vec<Vec<Vec<f64>>> = model
        .weights
        .iter()
        .map(|l| l.iter().map(|r| vec![0.0; r.len()]).collect())
        .collect();
    let mut gb: Vec<Vec<f64>> = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    let scale = 1.0 / x.len() as f64;

    for (xi, &yi) in x.iter().zip(labels) {
        let acts = model.activations(xi);
        // Softmax + cross-entropy: output delta is p - onehot.
        let mut delta: Vec<f64> = acts[n_w].clone();
        delta[yi] -= 1.0;
        for l in (0..n_w).rev() {
            let prev = &acts[l];
            for (j, d) in delta.iter().enumerate() {
                gb[l][j] += scale * d;
                for (i, h) in prev.iter().enumerate() {
                    gw[l][j][i] += scale * d * h;
                }
            }
            if l > 0 {
                let mut next = vec![0.0; prev.len()];
                for (i, nv) in next.iter_mut().enumerate() {
                    let back: f64 = delta.iter().zip(&model.weights[l]).map(|(d, row)| d * row[i]).sum();
                    // Logistic derivative in terms of the activation.
                    *nv = back * prev[i] * (1.0 - prev[i]);
                }
                delta = next;
            }
        }
    }
    (gw, gb)
}

/// Max relative error between backprop and central finite differences over
/// every parameter, on the given probe batch.
pub fn gradient_check(model: &MlpModel, x: &[Vec<f64>], labels: &[usize], eps: f64) -> f64 {
    let (gw, gb) = gradients(model, x, labels);
    let mut worst = 0.0_f64;
    let mut probe = model.clone();
    for l in 0..model.weights.len() {
        for j in 0..model.weights[l].len() {
            for i in 0..model.weights[l][j].len() {
                let orig = probe.weights[l][j][i];
                probe.weights[l][j][i] = orig + eps;
                let up = cross_entropy(&probe, x, labels).expect("finite probe");
                probe.weights[l][j][i] = orig - eps;
                let dn = cross_entropy(&probe, x, labels).expect("finite probe");
                probe.weights[l][j][i] = orig;
                let num = (up - dn) / (2.0 * eps);
                let ana = gw[l][j][i];
                worst = worst.max((num - ana).abs() / (num.abs() + ana.abs()).max(1.0));
            }
            let orig = probe.biases[l][j];
            probe.biases[l][j] = orig + eps;
            let up = cross_entropy(&probe, x, labels).expect("finite probe");
            probe.biases[l][j] = orig - eps;
            let dn = cross_entropy(&probe, x, labels).expect("finite probe");
            probe.biases[l][j] = orig;
            let num = (up - dn) / (2.0 * eps);
            worst = worst.max((num - gb[l][j]).abs() / (num.abs() + gb[l][j].abs()).max(1.0));
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MlpTrainConfig {
    pub lr: f64,
    pub epochs: usize,
}

impl Default for MlpTrainConfig {
    fn default() -> Self {
        Self { lr: 0.5, epochs: 800 }
    }
}

#[derive(Debug, Clone)]
pub struct MlpTrained {
    pub model: MlpModel,
    /// Mean cross-entropy after each epoch.
    pub losses: Vec<f64>,
}

/// Batch gradient descent from a fresh Xavier init.
pub fn mlp_train<R: Rng>(
    x: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    cfg: &MlpTrainConfig,
    rng: &mut R,
) -> Result<MlpTrained> {
    if x.is_empty() {
        return Err(CoreError::TooFewSamples { need: 2, got: 0 });
    }
    if x.len() != labels.len() {
        return Err(CoreError::DimensionMismatch { expected: x.len(), got: labels.len() });
    }
    let mut seen = vec![false; n_classes];
    for &l in labels {
        if l >= n_classes {
            return Err(CoreError::DimensionMismatch { expected: n_classes, got: l });
        }
        seen[l] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(CoreError::SingleClass);
    }

    let mut model = MlpModel::new(default_layers(x[0].len(), n_classes), rng);
    // Trial summaries carry a large common offset; center and rescale so the
    // class signal reaches the sigmoids instead of pinning them.
    (model.mean, model.scale) = standardize_params(x);
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (gw, gb) = gradients(&model, x, labels);
        for l in 0..model.weights.len() {
            for j in 0..model.weights[l].len() {
                for i in 0..model.weights[l][j].len() {
                    model.weights[l][j][i] -= cfg.lr * gw[l][j][i];
                }
                model.biases[l][j] -= cfg.lr * gb[l][j];
            }
        }
        let loss = cross_entropy(&model, x, labels)?;
        if !loss.is_finite() {
            return Err(CoreError::NonFiniteLoss { epoch });
        }
        losses.push(loss);
    }
    Ok(MlpTrained { model, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn random_batch(n: usize, dim: usize, classes: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = seeded_rng(seed);
        let x = (0..n).map(|_| (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()).collect();
        let y = (0..n).map(|i| i % classes).collect();
        (x, y)
    }

    #[test]
    fn output_is_a_probability_simplex() {
        let mut rng = seeded_rng(1);
        let model = MlpModel::new(default_layers(78, 3), &mut rng);
        for scale in [1.0, 100.0, 1e4] {
            let x: Vec<f64> = (0..78).map(|i| ((i as f64).sin()) * scale).collect();
            let p = model.predict_proba(&x).unwrap();
            assert_eq!(p.len(), 3);
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn backprop_matches_central_differences() {
        let (x, y) = random_batch(5, 78, 3, 2);
        let mut rng = seeded_rng(3);
        let model = MlpModel::new(default_layers(78, 3), &mut rng);
        let err = gradient_check(&model, &x, &y, 1e-5);
        assert!(err < 1e-4, "gradient check failed: {err}");
    }

    #[test]
    fn learns_xor_style_problem() {
        // Four clusters with XOR labels: not linearly separable.
        let mut rng = seeded_rng(4);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..200 {
            let (sa, sb) = ([1.0, -1.0][i % 2], [1.0, -1.0][(i / 2) % 2]);
            let a = sa + 0.2 * (rng.random::<f64>() * 2.0 - 1.0);
            let b = sb + 0.2 * (rng.random::<f64>() * 2.0 - 1.0);
            x.push(vec![a, b]);
            y.push(usize::from(sa * sb > 0.0));
        }
        let cfg = MlpTrainConfig { lr: 2.0, epochs: 800 };
        let trained = mlp_train(&x, &y, 2, &cfg, &mut rng).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, &yi)| trained.model.predict(xi).unwrap() == yi)
            .count();
        assert!(correct as f64 / x.len() as f64 > 0.95, "accuracy {}/{}", correct, x.len());
    }

    #[test]
    fn single_class_input_rejected() {
        let (x, _) = random_batch(10, 4, 3, 5);
        let y = vec![1usize; 10];
        let mut rng = seeded_rng(6);
        assert!(matches!(
            mlp_train(&x, &y, 3, &MlpTrainConfig::default(), &mut rng),
            Err(CoreError::SingleClass)
        ));
    }

    #[test]
    fn non_finite_loss_aborts_with_epoch() {
        let mut x = random_batch(6, 3, 2, 7).0;
        x[0][0] = f64::NAN;
        let y = vec![0, 1, 0, 1, 0, 1];
        let mut rng = seeded_rng(8);
        let err = mlp_train(&x, &y, 2, &MlpTrainConfig { lr: 0.5, epochs: 5 }, &mut rng).unwrap_err();
        assert!(matches!(err, CoreError::NonFiniteLoss { epoch: 0 }));
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (x, y) = random_batch(30, 6, 3, 9);
        let cfg = MlpTrainConfig { lr: 0.3, epochs: 50 };
        let a = mlp_train(&x, &y, 3, &cfg, &mut seeded_rng(10)).unwrap();
        let b = mlp_train(&x, &y, 3, &cfg, &mut seeded_rng(10)).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
        let c = mlp_train(&x, &y, 3, &cfg, &mut seeded_rng(11)).unwrap();
        assert_ne!(a.model, c.model);
    }

    #[test]
    fn tie_breaks_to_lowest_class_index() {
        // Force exact ties: zero final layer makes all logits equal.
        let mut rng = seeded_rng(12);
        let mut model = MlpModel::new(default_layers(4, 3), &mut rng);
        let last = model.weights.len() - 1;
        for row in &mut model.weights[last] {
            row.iter_mut().for_each(|w| *w = 0.0);
        }
        model.biases[last].iter_mut().for_each(|b| *b = 0.0);
        assert_eq!(model.predict(&[0.3, -0.7, 1.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn model_round_trips_through_json() {
        let mut rng = seeded_rng(13);
        let model = MlpModel::new(default_layers(6, 3), &mut rng);
        let s = serde_json::to_string(&model).unwrap();
        assert!(s.contains("\"schema_version\":1"));
        let back: MlpModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn dimension_mismatch_on_predict() {
        let mut rng = seeded_rng(14);
        let model = MlpModel::new(default_layers(6, 3), &mut rng);
        assert!(matches!(
            model.predict(&[1.0, 2.0]),
            Err(CoreError::DimensionMismatch { expected: 6, got: 2 })
        ));
    }
}
