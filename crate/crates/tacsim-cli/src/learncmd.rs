//! Dataset generation, training, and evaluation for the learned skills:
//! force regression on press episodes (KRR) and substance classification on
//! stirring trials (MLP).
//!
//! Datasets are plain CSV (`f0..f{D-1},label`) plus a `meta.json` sidecar;
//! models are JSON with their own schema version; predictions are JSONL so
//! the plot exporter can read them like any other log.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tacsim_core::learn::dataset::{gen_press_dataset, gen_stir_dataset};
use tacsim_core::learn::krr::{krr_fit, krr_predict, krr_select, krr_select_grouped, KrrModel};
use tacsim_core::learn::metrics::ClassReport;
use tacsim_core::learn::mlp::{mlp_train, MlpModel, MlpTrainConfig};
use tacsim_core::rig::SkinModel;
use tacsim_core::rng::seeded_rng;
use tacsim_core::SensorGeometry;

use crate::config::{CliError, CliResult};
use crate::logio::{
    save_bytes, write_json, ClassRecord, EvalHeader, EvalRecord, LogWriter, EVAL_SCHEMA,
};

pub const DATASETS: &[&str] = &["press", "stir"];
pub const MODELS: &[&str] = &["krr", "mlp"];

pub const DATASET_SCHEMA: &str = "tacsim.dataset.v1";
pub const METRICS_SCHEMA: &str = "tacsim.metrics.v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema: String,
    pub dataset: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_episodes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_episodes: Option<Vec<usize>>,
}

fn xy_csv(x: &[Vec<f64>], y: &[f64]) -> CliResult<Vec<u8>> {
    let dim = x.first().map_or(0, Vec::len);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    wtr.write_record(&header)?;
    for (row, label) in x.iter().zip(y) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        wtr.write_record(&rec)?;
    }
    wtr.into_inner().map_err(|e| CliError::Internal(format!("flush csv: {e}")))
}

pub fn load_xy(path: &Path) -> CliResult<(Vec<Vec<f64>>, Vec<f64>)> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("dataset file not found: {}", path.display())));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row: Vec<f64> = Vec::with_capacity(rec.len().saturating_sub(1));
        for field in rec.iter() {
            row.push(field.parse::<f64>().map_err(|e| {
                CliError::Usage(format!("{}: row {}: bad number {field:?}: {e}", path.display(), i))
            })?);
        }
        let label = row.pop().ok_or_else(|| {
            CliError::Usage(format!("{}: row {} is empty", path.display(), i))
        })?;
        x.push(row);
        y.push(label);
    }
    Ok((x, y))
}

fn load_meta(data_dir: &Path) -> CliResult<DatasetMeta> {
    let path = data_dir.join("meta.json");
    if !path.is_file() {
        return Err(CliError::Usage(format!("dataset meta not found: {}", path.display())));
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn gen_dataset(name: &str, seed: u64, out_dir: &Path) -> CliResult<DatasetMeta> {
    let geometry = SensorGeometry::default();
    let mut rng = seeded_rng(seed);
    let meta = match name {
        "press" => {
            let skin = SkinModel::default();
            let d = gen_press_dataset(&geometry, &skin, &mut rng)?;
            save_bytes(&out_dir.join("train.csv"), &xy_csv(&d.train_x, &d.train_y)?)?;
            save_bytes(&out_dir.join("test.csv"), &xy_csv(&d.test_x, &d.test_y)?)?;
            DatasetMeta {
                schema: DATASET_SCHEMA.into(),
                dataset: "press".into(),
                seed,
                n_train: d.train_x.len(),
                n_test: d.test_x.len(),
                feature_dim: d.train_x.first().map_or(0, Vec::len),
                force_range: Some(d.force_range()),
                class_names: None,
                train_episodes: Some(d.train_episodes),
                test_episodes: Some(d.test_episodes),
            }
        }
        "stir" => {
            let d = gen_stir_dataset(&geometry, &mut rng)?;
            let as_f64 = |v: &[usize]| v.iter().map(|&c| c as f64).collect::<Vec<_>>();
            save_bytes(&out_dir.join("train.csv"), &xy_csv(&d.train_x, &as_f64(&d.train_y))?)?;
            save_bytes(&out_dir.join("test.csv"), &xy_csv(&d.test_x, &as_f64(&d.test_y))?)?;
            DatasetMeta {
                schema: DATASET_SCHEMA.into(),
                dataset: "stir".into(),
                seed,
                n_train: d.train_x.len(),
                n_test: d.test_x.len(),
                feature_dim: d.train_x.first().map_or(0, Vec::len),
                force_range: None,
                class_names: Some(d.class_names),
                train_episodes: None,
                test_episodes: None,
            }
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown dataset name: {other}; known datasets: {}",
                DATASETS.join(", ")
            )))
        }
    };
    write_json(&out_dir.join("meta.json"), &meta)?;
    Ok(meta)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDatasetCfg {
    pub dataset: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalCfg {
    pub model: String,
    pub model_path: String,
    pub data: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCfg {
    pub model: String,
    pub data: String,
    pub seed: u64,
    /// Negative requests cross-validated selection.
    pub gamma: f64,
    pub lambda: f64,
    pub cv_folds: usize,
    pub cv_subsample: usize,
    /// 0 selects the trainer default.
    pub epochs: usize,
    /// Non-positive selects the trainer default.
    pub lr: f64,
}

impl Default for TrainCfg {
    fn default() -> Self {
        Self {
            model: String::new(),
            data: String::new(),
            seed: 0,
            gamma: -1.0,
            lambda: -1.0,
            cv_folds: 5,
            cv_subsample: 300,
            epochs: 0,
            lr: 0.0,
        }
    }
}

fn labels_as_classes(y: &[f64], n_classes: usize, path: &Path) -> CliResult<Vec<usize>> {
    y.iter()
        .map(|&v| {
            let c = v.round();
            if (v - c).abs() > 1e-9 || c < 0.0 || c as usize >= n_classes {
                Err(CliError::Usage(format!(
                    "{}: label {v} is not a class index below {n_classes}",
                    path.display()
                )))
            } else {
                Ok(c as usize)
            }
        })
        .collect()
}

pub fn train(cfg: &TrainCfg, out_dir: &Path) -> CliResult<String> {
    let data_dir = PathBuf::from(&cfg.data);
    let meta = load_meta(&data_dir)?;
    let train_path = data_dir.join("train.csv");
    let (x, y) = load_xy(&train_path)?;
    match cfg.model.as_str() {
        "krr" => {
            let mut rng = seeded_rng(cfg.seed);
            let (gamma, lambda, picked) = if cfg.gamma > 0.0 && cfg.lambda > 0.0 {
                (cfg.gamma, cfg.lambda, String::new())
            } else {
                // Episode-generated datasets are written as contiguous
                // per-episode blocks; grouped folds keep each episode's
                // near-duplicate frames on one side of the split.
                let block = meta
                    .train_episodes
                    .as_ref()
                    .map(Vec::len)
                    .filter(|&n| n > 0 && x.len() % n == 0)
                    .map(|n| x.len() / n);
                let sel = match block {
                    Some(block) => {
                        let groups: Vec<usize> = (0..x.len()).map(|i| i / block).collect();
                        krr_select_grouped(&x, &y, &groups, cfg.cv_folds, cfg.cv_subsample, &mut rng)?
                    }
                    None => krr_select(&x, &y, cfg.cv_folds, cfg.cv_subsample, &mut rng)?,
                };
                let note = format!(
                    " (cv: gamma {} lambda {} rmse {:.4})",
                    sel.gamma, sel.lambda, sel.cv_rmse
                );
                (sel.gamma, sel.lambda, note)
            };
            let model = krr_fit(&x, &y, lambda, gamma)?;
            write_json(&out_dir.join("model.json"), &model)?;
            Ok(format!(
                "trained krr on {} samples{picked} -> {}",
                x.len(),
                out_dir.join("model.json").display()
            ))
        }
        "mlp" => {
            let names = meta.class_names.ok_or_else(|| {
                CliError::Usage(format!(
                    "dataset {} has no class names; mlp needs a classification dataset",
                    meta.dataset
                ))
            })?;
            let labels = labels_as_classes(&y, names.len(), &train_path)?;
            let mut tc = MlpTrainConfig::default();
            if cfg.epochs > 0 {
                tc.epochs = cfg.epochs;
            }
            if cfg.lr > 0.0 {
                tc.lr = cfg.lr;
            }
            let mut rng = seeded_rng(cfg.seed);
            let trained = mlp_train(&x, &labels, names.len(), &tc, &mut rng)?;
            write_json(&out_dir.join("model.json"), &trained.model)?;
            let last = trained.losses.last().copied().unwrap_or(f64::NAN);
            Ok(format!(
                "trained mlp on {} samples, final loss {last:.4} -> {}",
                x.len(),
                out_dir.join("model.json").display()
            ))
        }
        other => Err(CliError::Usage(format!(
            "unknown model name: {other}; known models: {}",
            MODELS.join(", ")
        ))),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionMetrics {
    pub schema: String,
    pub rmse: f64,
    pub force_range: f64,
    pub rmse_rel: f64,
}

fn load_model<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("model file not found: {}", path.display())));
    }
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn eval(model_kind: &str, model_path: &Path, data: &Path, out_dir: &Path) -> CliResult<String> {
    let meta = load_meta(data)?;
    let test_path = data.join("test.csv");
    let (x, y) = load_xy(&test_path)?;
    if x.is_empty() {
        return Err(CliError::Usage(format!("{}: test set is empty", test_path.display())));
    }
    match model_kind {
        "krr" => {
            let model: KrrModel = load_model(model_path)?;
            let mut writer = LogWriter::new(&EvalHeader {
                schema: EVAL_SCHEMA.into(),
                model: "krr".into(),
            })?;
            let mut sq = 0.0;
            for (i, (xi, &yi)) in x.iter().zip(&y).enumerate() {
                let p = krr_predict(&model, xi)?;
                sq += (p - yi) * (p - yi);
                writer.push(&EvalRecord { sample: i, measured: yi, predicted: p })?;
            }
            save_bytes(&out_dir.join("predictions.jsonl"), &writer.bytes())?;
            let rmse = (sq / x.len() as f64).sqrt();
            let force_range = meta.force_range.unwrap_or(f64::NAN);
            let metrics = RegressionMetrics {
                schema: METRICS_SCHEMA.into(),
                rmse,
                force_range,
                rmse_rel: rmse / force_range,
            };
            write_json(&out_dir.join("metrics.json"), &metrics)?;
            Ok(format!(
                "krr test rmse {rmse:.4} ({:.2}% of range {force_range:.3})",
                100.0 * metrics.rmse_rel
            ))
        }
        "mlp" => {
            let names = meta.class_names.ok_or_else(|| {
                CliError::Usage(format!(
                    "dataset {} has no class names; mlp needs a classification dataset",
                    meta.dataset
                ))
            })?;
            let labels = labels_as_classes(&y, names.len(), &test_path)?;
            let model: MlpModel = load_model(model_path)?;
            let mut writer = LogWriter::new(&EvalHeader {
                schema: EVAL_SCHEMA.into(),
                model: "mlp".into(),
            })?;
            let mut preds = Vec::with_capacity(x.len());
            for (i, xi) in x.iter().enumerate() {
                let p = model.predict(xi)?;
                preds.push(p);
                writer.push(&ClassRecord { sample: i, label: labels[i], predicted: p })?;
            }
            save_bytes(&out_dir.join("predictions.jsonl"), &writer.bytes())?;
            let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let report = ClassReport::from_predictions(&labels, &preds, &name_refs)?;
            write_json(&out_dir.join("report.json"), &report)?;
            Ok(report.text_table())
        }
        other => Err(CliError::Usage(format!(
            "unknown model name: {other}; known models: {}",
            MODELS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_preserves_floats_exactly() {
        let x = vec![vec![1.0, -0.5, 3.25e-7], vec![0.0, 2.0f64.sqrt(), 1e9]];
        let y = vec![0.75, -2.0];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_bytes(&path, &xy_csv(&x, &y).unwrap()).unwrap();
        let (x2, y2) = load_xy(&path).unwrap();
        assert_eq!(x, x2);
        assert_eq!(y, y2);
    }

    #[test]
    fn unknown_dataset_and_model_names_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            gen_dataset("pressing", 0, dir.path()),
            Err(CliError::Usage(_))
        ));
        let cfg = TrainCfg { model: "svm".into(), data: ".".into(), ..TrainCfg::default() };
        assert!(matches!(train(&cfg, dir.path()), Err(CliError::Usage(_))));
    }

    #[test]
    fn class_labels_must_be_integral() {
        let p = PathBuf::from("x.csv");
        assert!(labels_as_classes(&[0.0, 1.0, 2.0], 3, &p).is_ok());
        assert!(labels_as_classes(&[0.5], 3, &p).is_err());
        assert!(labels_as_classes(&[3.0], 3, &p).is_err());
    }
}
