//! Imputation of missing error-tensor entries.

mod em;
mod kfmc;

pub use em::{em_matrix, em_tucker, relative_error, CompletionResult, DEFAULT_EM_MAX_ITER, DEFAULT_EM_TOL};
pub use kfmc::{
    kfmc_fit, kfmc_gradients, kfmc_objective, kfmc_predict_new_column, kfmc_predict_new_row,
    median_pairwise_distance, KfmcConfig, KfmcFit, KfmcModel,
};
