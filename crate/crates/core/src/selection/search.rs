use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{stratified_folds, FoldAssignment};
use super::grid::GridConfig;
use crate::classify::{train, Family, LabeledDataset, ModelSpec, TrainedModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub spec: ModelSpec,
    pub fold_accuracies: Vec<f64>,
    /// `None` when any fold failed to train.
    pub mean_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CvResult {
    pub fn succeeded(&self) -> bool {
        self.mean_accuracy.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: ModelSpec,
    pub results: Vec<CvResult>,
    pub folds: FoldAssignment,
}

/// Train `spec` on every example outside `fold`.
pub fn fit_fold(spec: &ModelSpec, dataset: &LabeledDataset, folds: &FoldAssignment, fold: usize) -> Result<TrainedModel> {
    check_folds(dataset, folds)?;
    train(spec, &dataset.subset(&folds.training_indices(fold))?)
}

fn check_folds(dataset: &LabeledDataset, folds: &FoldAssignment) -> Result<()> {
    if folds.len() != dataset.len() {
        return Err(Error::Contract(format!(
            "fold assignment covers {} examples, dataset has {}",
            folds.len(),
            dataset.len()
        )));
    }
    Ok(())
}

fn fold_accuracy(spec: &ModelSpec, dataset: &LabeledDataset, folds: &FoldAssignment, fold: usize) -> Result<f64> {
    let model = fit_fold(spec, dataset, folds, fold)?;
    let val = folds.validation_indices(fold);
    if val.is_empty() {
        return Err(Error::Dataset(format!("fold {fold} has no validation examples")));
    }
    let mut correct = 0usize;
    for &i in &val {
        if model.predict(&dataset.rows()[i])? == *dataset.label_of(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / val.len() as f64)
}

/// k-fold estimate for a single spec. Training failures are reported in the
/// result rather than returned.
pub fn cross_validate(spec: &ModelSpec, dataset: &LabeledDataset, folds: &FoldAssignment) -> CvResult {
    let mut accs = Vec::with_capacity(folds.k());
    for fold in 0..folds.k() {
        match fold_accuracy(spec, dataset, folds, fold) {
            Ok(a) => accs.push(a),
            Err(e) => {
                return CvResult {
                    spec: *spec,
                    fold_accuracies: accs,
                    mean_accuracy: None,
                    error: Some(format!("fold {fold}: {e}")),
                }
            }
        }
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    CvResult {
        spec: *spec,
        fold_accuracies: accs,
        mean_accuracy: Some(mean),
        error: None,
    }
}

/// Evaluate every spec on the same folds; best is the highest mean accuracy,
/// the earliest spec winning ties.
pub fn search_specs(specs: &[ModelSpec], dataset: &LabeledDataset, folds: &FoldAssignment) -> Result<(ModelSpec, Vec<CvResult>)> {
    if specs.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    check_folds(dataset, folds)?;
    let results: Vec<CvResult> = specs.par_iter().map(|s| cross_validate(s, dataset, folds)).collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some(m) = r.mean_accuracy {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i, m));
            }
        }
    }
    match best {
        Some((i, _)) => Ok((specs[i], results)),
        None => Err(Error::Dataset(format!(
            "every grid point failed; first error: {}",
            results[0].error.as_deref().unwrap_or("unknown")
        ))),
    }
}

pub fn grid_search(family: Family, grid: &GridConfig, dataset: &LabeledDataset, k: usize, seed: u64) -> Result<SearchOutcome> {
    dataset.check_trainable()?;
    let folds = stratified_folds(dataset, k, seed)?;
    let specs = grid.enumerate(family, seed)?;
    let (best, results) = search_specs(&specs, dataset, &folds)?;
    Ok(SearchOutcome { best, results, folds })
}

/// Final model: standardizer and classifier fit on the full training set.
pub fn refit_best(best: &ModelSpec, dataset: &LabeledDataset) -> Result<TrainedModel> {
    train(best, dataset)
}

pub fn write_cv_report(path: impl AsRef<Path>, results: &[CvResult]) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(results)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_cv_report(path: impl AsRef<Path>) -> Result<Vec<CvResult>> {
    let path = path.as_ref();
    Ok(serde_json::from_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?)
}
