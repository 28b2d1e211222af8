use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{
    BoostingParams, Criterion, Family, ForestParams, Gamma, Hyperparams, Kernel, KnnParams, MaxFeatures, ModelSpec,
    SvmParams, TreeParams,
};
use crate::error::{Error, Result};
use crate::rng;

const DEFAULT_GRID: &str = include_str!("default_grid.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfGrid {
    pub max_depth: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub n_estimators: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmGrid {
    pub c: Vec<f64>,
    pub gamma: Vec<Gamma>,
    pub kernel: Vec<Kernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnnGrid {
    pub k: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbGrid {
    pub n_estimators: Vec<usize>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    #[serde(default = "gb_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "gb_depth")]
    pub max_depth: usize,
}

fn gb_learning_rate() -> f64 {
    0.1
}

fn gb_depth() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtGrid {
    pub max_depth: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub min_samples_leaf: Vec<usize>,
    pub min_samples_split: Vec<usize>,
    pub criterion: Vec<Criterion>,
}

/// Search grids for every family. Families left out of a config file cannot be trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rf: Option<RfGrid>,
    pub svm: Option<SvmGrid>,
    pub knn: Option<KnnGrid>,
    pub gb: Option<GbGrid>,
    pub dt: Option<DtGrid>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self::from_toml(DEFAULT_GRID).expect("built-in grid parses")
    }
}

/// Mixed-radix counter over column sizes; the first column varies fastest.
fn digits(mut n: usize, radices: &[usize]) -> Vec<usize> {
    radices
        .iter()
        .map(|&r| {
            let d = n % r;
            n /= r;
            d
        })
        .collect()
}

fn product(radices: &[usize]) -> impl Iterator<Item = Vec<usize>> + '_ {
    let total = radices.iter().product::<usize>();
    (0..total).map(move |n| digits(n, radices))
}

impl GridConfig {
    pub fn from_toml(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_toml(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// `"default"` selects the built-in grid, anything else is read as a TOML path.
    pub fn resolve(name: &str) -> Result<Self> {
        if name == "default" {
            Ok(Self::default())
        } else {
            Self::load(name)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid serializes")
    }

    fn radices(&self, family: Family) -> Result<Vec<usize>> {
        let missing = || Error::Config(format!("grid has no [{}] table", family.key()));
        Ok(match family {
            Family::Rf => {
                let g = self.rf.as_ref().ok_or_else(missing)?;
                vec![
                    g.max_depth.len(),
                    g.max_features.len(),
                    g.min_samples_leaf.len(),
                    g.min_samples_split.len(),
                    g.n_estimators.len(),
                ]
            }
            Family::Svm => {
                let g = self.svm.as_ref().ok_or_else(missing)?;
                vec![g.c.len(), g.gamma.len(), g.kernel.len()]
            }
            Family::Knn => vec![self.knn.as_ref().ok_or_else(missing)?.k.len()],
            Family::Gb => {
                let g = self.gb.as_ref().ok_or_else(missing)?;
                vec![g.n_estimators.len(), g.min_samples_leaf.len(), g.min_samples_split.len()]
            }
            Family::Dt => {
                let g = self.dt.as_ref().ok_or_else(missing)?;
                vec![
                    g.max_depth.len(),
                    g.max_features.len(),
                    g.min_samples_leaf.len(),
                    g.min_samples_split.len(),
                    g.criterion.len(),
                ]
            }
        })
    }

    /// Number of grid points for `family`.
    pub fn cardinality(&self, family: Family) -> Result<usize> {
        Ok(self.radices(family)?.iter().product())
    }

    /// Every grid point in enumeration order. Spec `i` gets seed `derive(seed, i)`.
    pub fn enumerate(&self, family: Family, seed: u64) -> Result<Vec<ModelSpec>> {
        let radices = self.radices(family)?;
        if radices.contains(&0) {
            return Err(Error::Config(format!("grid for {family} has an empty column")));
        }
        let specs = product(&radices)
            .enumerate()
            .map(|(i, d)| ModelSpec::new(self.point(family, &d), rng::derive(seed, i as u64)))
            .collect();
        Ok(specs)
    }

    fn point(&self, family: Family, d: &[usize]) -> Hyperparams {
        match family {
            Family::Rf => {
                let g = self.rf.as_ref().unwrap();
                Hyperparams::Rf(ForestParams {
                    max_depth: Some(g.max_depth[d[0]]),
                    max_features: g.max_features[d[1]],
                    min_samples_leaf: g.min_samples_leaf[d[2]],
                    min_samples_split: g.min_samples_split[d[3]],
                    n_estimators: g.n_estimators[d[4]],
                    criterion: Criterion::Gini,
                    bootstrap: true,
                })
            }
            Family::Svm => {
                let g = self.svm.as_ref().unwrap();
                Hyperparams::Svm(SvmParams {
                    c: g.c[d[0]],
                    gamma: g.gamma[d[1]],
                    kernel: g.kernel[d[2]],
                    tol: 1e-3,
                })
            }
            Family::Knn => Hyperparams::Knn(KnnParams {
                k: self.knn.as_ref().unwrap().k[d[0]],
            }),
            Family::Gb => {
                let g = self.gb.as_ref().unwrap();
                Hyperparams::Gb(BoostingParams {
                    n_estimators: g.n_estimators[d[0]],
                    min_samples_leaf: g.min_samples_leaf[d[1]],
                    min_samples_split: g.min_samples_split[d[2]],
                    learning_rate: g.learning_rate,
                    max_depth: g.max_depth,
                })
            }
            Family::Dt => {
                let g = self.dt.as_ref().unwrap();
                Hyperparams::Dt(TreeParams {
                    max_depth: Some(g.max_depth[d[0]]),
                    max_features: g.max_features[d[1]],
                    min_samples_leaf: g.min_samples_leaf[d[2]],
                    min_samples_split: g.min_samples_split[d[3]],
                    criterion: g.criterion[d[4]],
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cardinalities() {
        let g = GridConfig::default();
        let n: Vec<usize> = Family::ALL.iter().map(|&f| g.cardinality(f).unwrap()).collect();
        assert_eq!(n, vec![2200, 56, 9, 24, 400]);
        for f in Family::ALL {
            assert_eq!(g.enumerate(f, 0).unwrap().len(), g.cardinality(f).unwrap());
        }
    }

    #[test]
    fn default_values() {
        let g = GridConfig::default();
        let rf = g.rf.as_ref().unwrap();
        assert_eq!(rf.n_estimators, vec![25, 50, 100, 200, 400, 600, 800, 1000, 1200, 1400, 1600]);
        assert_eq!(g.svm.as_ref().unwrap().c, vec![0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0]);
        assert_eq!(g.knn.as_ref().unwrap().k, vec![5, 7, 9, 11, 13, 15, 17, 19, 21]);
        assert_eq!(g.gb.as_ref().unwrap().min_samples_split, vec![2, 4, 8]);
        assert_eq!(g.dt.as_ref().unwrap().criterion, vec![Criterion::Gini, Criterion::Entropy]);
    }

    #[test]
    fn first_column_varies_fastest() {
        let specs = GridConfig::default().enumerate(Family::Svm, 0).unwrap();
        let c: Vec<f64> = specs[..8]
            .iter()
            .map(|s| match s.params {
                Hyperparams::Svm(p) => p.c,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(c, vec![0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 0.001]);
        match (specs[0].params, specs[7].params, specs[14].params) {
            (Hyperparams::Svm(a), Hyperparams::Svm(b), Hyperparams::Svm(c)) => {
                assert_eq!((a.gamma, a.kernel), (Gamma::Auto, Kernel::Rbf));
                assert_eq!((b.gamma, b.kernel), (Gamma::Scale, Kernel::Rbf));
                assert_eq!((c.gamma, c.kernel), (Gamma::Auto, Kernel::Linear));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn enumeration_is_stable_and_seeded_by_index() {
        let g = GridConfig::default();
        let a = g.enumerate(Family::Dt, 11).unwrap();
        assert_eq!(a, g.enumerate(Family::Dt, 11).unwrap());
        assert_eq!(a[3].seed, rng::derive(11, 3));
    }

    #[test]
    fn toml_round_trip_and_partial_grid() {
        let g = GridConfig::default();
        assert_eq!(GridConfig::from_toml(&g.to_toml()).unwrap(), g);
        let only = GridConfig::from_toml("[knn]\nk = [1, 3]\n").unwrap();
        assert_eq!(only.cardinality(Family::Knn).unwrap(), 2);
        assert!(matches!(only.enumerate(Family::Rf, 0), Err(Error::Config(_))));
        let empty = GridConfig::from_toml("[knn]\nk = []\n").unwrap();
        assert!(empty.enumerate(Family::Knn, 0).is_err());
    }
}
