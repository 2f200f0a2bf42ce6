//! Kernel ridge regression with a radial basis kernel, for the marker
//! displacement to force mapping.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub schema_version: u32,
    pub gamma: f64,
    pub lambda: f64,
    /// Per-dimension standardization of the raw inputs.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Standardized support inputs.
    pub support: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub(crate) fn standardize_params(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let dim = x[0].len();
    let mut mean = vec![0.0; dim];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut scale = vec![0.0; dim];
    for row in x {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    for s in &mut scale {
        *s = (*s / n).sqrt();
        // Constant columns carry no information; leave them at zero after
        // centering instead of dividing by ~0.
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (mean, scale)
}

pub(crate) fn apply_standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Solves `(K + lambda I) w = y` with `K_ij = exp(-gamma ||x_i - x_j||^2)`
/// on standardized inputs, via a symmetric Cholesky solve.
pub fn krr_fit(x: &[Vec<f64>], y: &[f64], lambda: f64, gamma: f64) -> Result<KrrModel> {
    if x.len() != y.len() {
        return Err(CoreError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(CoreError::TooFewSamples { need: 2, got: x.len() });
    }
    let dim = x[0].len();
    for row in x {
        if row.len() != dim {
            return Err(CoreError::DimensionMismatch { expected: dim, got: row.len() });
        }
    }
    let (mean, scale) = standardize_params(x);
    let support: Vec<Vec<f64>> = x.iter().map(|r| apply_standardize(r, &mean, &scale)).collect();

    let n = support.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (-gamma * sq_dist(&support[i], &support[j])).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += lambda;
    }
    let rhs = DVector::from_column_slice(y);
    let chol = k.clone().cholesky().ok_or(CoreError::SingularSystem)?;
    let w = chol.solve(&rhs);

    let residual = (&k * &w - &rhs).norm();
    if residual > 1e-8 * rhs.norm().max(1e-12) {
        return Err(CoreError::SingularSystem);
    }
    Ok(KrrModel {
        schema_version: 1,
        gamma,
        lambda,
        mean,
        scale,
        support,
        weights: w.iter().copied().collect(),
    })
}

pub fn krr_predict(model: &KrrModel, x: &[f64]) -> Result<f64> {
    if x.len() != model.mean.len() {
        return Err(CoreError::DimensionMismatch { expected: model.mean.len(), got: x.len() });
    }
    let z = apply_standardize(x, &model.mean, &model.scale);
    Ok(model
        .support
        .iter()
        .zip(&model.weights)
        .map(|(s, w)| w * (-model.gamma * sq_dist(&z, s)).exp())
        .sum())
}

/// Default cross-validation grids.
pub fn default_gammas() -> Vec<f64> {
    vec![0.001, 0.00316, 0.01, 0.0316, 0.1, 0.316, 1.0]
}

pub fn default_lambdas() -> Vec<f64> {
    vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KrrSelection {
    pub gamma: f64,
    pub lambda: f64,
    pub cv_rmse: f64,
}

/// K-fold cross-validated grid search. The training set is subsampled to at
/// most `subsample_max` points for the search (final fits use everything).
pub fn krr_select<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    folds: usize,
    subsample_max: usize,
    rng: &mut R,
) -> Result<KrrSelection> {
    let groups: Vec<usize> = (0..x.len()).collect();
    krr_select_grouped(x, y, &groups, folds, subsample_max, rng)
}

/// Grouped k-fold grid search: whole groups move between folds, so frames
/// of one episode never straddle a validation split. Consecutive frames are
/// near-duplicates; splitting them rewards vanishing regularization. The
/// subsample keeps whole groups until it reaches `subsample_max` points.
pub fn krr_select_grouped<R: Rng>(
    x: &[Vec<f64>],
    y: &[f64],
    groups: &[usize],
    folds: usize,
    subsample_max: usize,
    rng: &mut R,
) -> Result<KrrSelection> {
    if x.len() != y.len() {
        return Err(CoreError::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if groups.len() != x.len() {
        return Err(CoreError::DimensionMismatch { expected: x.len(), got: groups.len() });
    }
    // Group ids -> member indices, in first-appearance order.
    let mut ids: Vec<usize> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, &g) in groups.iter().enumerate() {
        match ids.iter().position(|&id| id == g) {
            Some(pos) => members[pos].push(i),
            None => {
                ids.push(g);
                members.push(vec![i]);
            }
        }
    }
    if ids.len() < 2 {
        return Err(CoreError::TooFewSamples { need: 2, got: ids.len() });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(rng);
    let cap = subsample_max.max(folds * 2);
    let mut taken: Vec<&[usize]> = Vec::new();
    let mut total = 0usize;
    for &pos in &order {
        if total >= cap && taken.len() >= 2 {
            break;
        }
        taken.push(&members[pos]);
        total += members[pos].len();
    }
    let k = folds.min(taken.len());

    let mut best = KrrSelection { gamma: 1.0, lambda: 1e-3, cv_rmse: f64::INFINITY };
    for &gamma in &default_gammas() {
        for &lambda in &default_lambdas() {
            let mut sq_err = 0.0;
            let mut count = 0usize;
            let mut failed = false;
            for fold in 0..k {
                let (mut tx, mut ty, mut vx, mut vy) = (vec![], vec![], vec![], vec![]);
                for (pos, grp) in taken.iter().enumerate() {
                    for &i in *grp {
                        if pos % k == fold {
                            vx.push(x[i].clone());
                            vy.push(y[i]);
                        } else {
                            tx.push(x[i].clone());
                            ty.push(y[i]);
                        }
                    }
                }
                match krr_fit(&tx, &ty, lambda, gamma) {
                    Ok(model) => {
                        for (xv, yv) in vx.iter().zip(&vy) {
                            let p = krr_predict(&model, xv)?;
                            sq_err += (p - yv) * (p - yv);
                            count += 1;
                        }
                    }
                    Err(_) => {
                        failed = true;
                        break;
                    }
                }
            }
            if failed || count == 0 {
                continue;
            }
            let rmse = (sq_err / count as f64).sqrt();
            if rmse < best.cv_rmse {
                best = KrrSelection { gamma, lambda, cv_rmse: rmse };
            }
        }
    }
    if best.cv_rmse.is_finite() {
        Ok(best)
    } else {
        Err(CoreError::SingularSystem)
    }
}
