//! Measurement toolkit: rank correlation, binary association, confidence
//! intervals, correlograms and ROC-AUC.

mod auc;
mod correlation;
mod correlogram;

pub use auc::{auc, AucResult};
pub use correlation::{average_ranks, pearson, phi, phi_from_table, spearman, spearman_ci, Contingency};
pub use correlogram::{correlogram, variable_index, Correlogram, VARIABLES};

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
