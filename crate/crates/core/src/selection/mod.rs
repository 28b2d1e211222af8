//! Stratified k-fold grid search over the classifier hyperparameter grids.

mod folds;
mod grid;
mod search;

pub use folds::{stratified_folds, FoldAssignment};
pub use grid::{DtGrid, GbGrid, GridConfig, KnnGrid, RfGrid, SvmGrid};
pub use search::{
    cross_validate, fit_fold, grid_search, read_cv_report, refit_best, search_specs, write_cv_report, CvResult,
    SearchOutcome,
};
