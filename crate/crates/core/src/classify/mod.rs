//! The five classical classifier families trained on standardized face
//! embeddings: random forest, support vector machine, k-nearest neighbor,
//! gradient boosting and decision tree.

mod boosting;
mod dataset;
mod forest;
mod impurity;
mod knn;
mod standardize;
mod svm;
mod tree;

pub use boosting::{BoostingModel, BoostingParams};
pub use dataset::{LabeledDataset, StudentId};
pub use forest::{Forest, ForestParams};
pub use impurity::{entropy_impurity, gini_impurity, Criterion};
pub use knn::{KnnParams, NeighborStore};
pub use standardize::{fit_standardizer, standardize, Standardizer};
pub use svm::{Gamma, Kernel, SvmModel, SvmParams};
pub use tree::{ClassificationTree, MaxFeatures, TreeParams};

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Rf,
    Svm,
    Knn,
    Gb,
    Dt,
}

impl Family {
    pub const ALL: [Family; 5] = [Family::Rf, Family::Svm, Family::Knn, Family::Gb, Family::Dt];

    pub fn key(self) -> &'static str {
        match self {
            Family::Rf => "rf",
            Family::Svm => "svm",
            Family::Knn => "knn",
            Family::Gb => "gb",
            Family::Dt => "dt",
        }
    }

    /// Display name used in result tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Family::Rf => "Random Forest",
            Family::Svm => "Support Vector Machine",
            Family::Knn => "k-Nearest Neighbor",
            Family::Gb => "Gradient Boosting",
            Family::Dt => "Decision Tree",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.key().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Spec(format!("unknown classifier family {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "hyperparameters", rename_all = "lowercase")]
pub enum Hyperparams {
    Rf(ForestParams),
    Svm(SvmParams),
    Knn(KnnParams),
    Gb(BoostingParams),
    Dt(TreeParams),
}

impl Hyperparams {
    pub fn family(&self) -> Family {
        match self {
            Hyperparams::Rf(_) => Family::Rf,
            Hyperparams::Svm(_) => Family::Svm,
            Hyperparams::Knn(_) => Family::Knn,
            Hyperparams::Gb(_) => Family::Gb,
            Hyperparams::Dt(_) => Family::Dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Hyperparams::Rf(p) => p.validate(),
            Hyperparams::Svm(p) => p.validate(),
            Hyperparams::Knn(p) => p.validate(),
            Hyperparams::Gb(p) => p.validate(),
            Hyperparams::Dt(p) => p.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub params: Hyperparams,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(params: Hyperparams, seed: u64) -> Self {
        Self { params, seed }
    }

    pub fn family(&self) -> Family {
        self.params.family()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum FittedState {
    Rf(Forest),
    Svm(SvmModel),
    Knn(NeighborStore),
    Gb(BoostingModel),
    Dt(ClassificationTree),
}

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    version: u32,
    spec: ModelSpec,
    standardizer: Standardizer,
    class_set: Vec<StudentId>,
    n_train: usize,
    state: FittedState,
}

/// Fit a classifier. The standardizer is estimated on `data` alone and
/// stored with the model; all fitting happens in standardized space.
pub fn train(spec: &ModelSpec, data: &LabeledDataset) -> Result<TrainedModel> {
    spec.params.validate()?;
    data.check_trainable()?;
    let standardizer = fit_standardizer(data);
    let rows = standardizer.transform_rows(data.rows())?;
    let labels = data.labels();
    let n_classes = data.class_set().len();
    let state = match &spec.params {
        Hyperparams::Knn(p) => FittedState::Knn(NeighborStore {
            rows,
            labels: labels.to_vec(),
            n_classes,
            k: p.k,
        }),
        Hyperparams::Dt(p) => {
            let mut r = rng::stream(spec.seed);
            FittedState::Dt(tree::grow_tree(&rows, labels, n_classes, (0..rows.len()).collect(), p, &mut r))
        }
        Hyperparams::Rf(p) => FittedState::Rf(forest::fit_forest(&rows, labels, n_classes, p, spec.seed)),
        Hyperparams::Svm(p) => FittedState::Svm(svm::fit_svm(&rows, labels, n_classes, p)),
        Hyperparams::Gb(p) => FittedState::Gb(boosting::fit_boosting(&rows, labels, n_classes, p)),
    };
    Ok(TrainedModel {
        version: ARTIFACT_VERSION,
        spec: *spec,
        standardizer,
        class_set: data.class_set().to_vec(),
        n_train: data.len(),
        state,
    })
}

/// Predict the student for one raw (unstandardized) feature vector.
pub fn predict(model: &TrainedModel, v: &[f64]) -> Result<StudentId> {
    model.predict(v)
}

impl TrainedModel {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn class_set(&self) -> &[StudentId] {
        &self.class_set
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_features(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn predict_index(&self, v: &[f64]) -> Result<usize> {
        let x = self.standardizer.transform(v)?;
        Ok(match &self.state {
            FittedState::Knn(m) => m.predict_index(&x),
            FittedState::Dt(m) => m.predict_index(&x),
            FittedState::Rf(m) => m.predict_index(&x),
            FittedState::Svm(m) => m.predict_index(&x),
            FittedState::Gb(m) => m.predict_index(&x),
        })
    }

    pub fn predict(&self, v: &[f64]) -> Result<StudentId> {
        Ok(self.class_set[self.predict_index(v)?].clone())
    }

    /// Per-class decision values for the margin-based families.
    pub fn decision_scores(&self, v: &[f64]) -> Result<Option<Vec<f64>>> {
        let x = self.standardizer.transform(v)?;
        Ok(match &self.state {
            FittedState::Svm(m) => Some(m.decision_scores(&x)),
            FittedState::Gb(m) => Some(m.raw_scores(&x)),
            _ => None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: TrainedModel = serde_json::from_str(s)?;
        if m.version != ARTIFACT_VERSION {
            return Err(Error::Config(format!(
                "model artifact version {} is not supported (expected {ARTIFACT_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
