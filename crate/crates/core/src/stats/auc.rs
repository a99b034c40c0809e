use serde::{Deserialize, Serialize};

use super::average_ranks;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub value: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// ROC-AUC as the Mann-Whitney statistic: the fraction of (positive, negative)
/// pairs ranked correctly, ties counting one half. Computed from average ranks
/// in O(n log n); the result is exact because every rank sum is a multiple of
/// one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<AucResult> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(format!(
            "{n_pos} positives and {n_neg} negatives"
        )));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(AucResult {
        value: u / (n_pos as f64 * n_neg as f64),
        n_pos,
        n_neg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spec_cases() {
        let l = [false, false, true, true];
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &l).unwrap().value, 1.0);
        assert_eq!(auc(&[0.5; 4], &l).unwrap().value, 0.5);
        // pairs: (0.35,0.1) ok, (0.35,0.4) miss, (0.8,0.1) ok, (0.8,0.4) ok
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &l).unwrap().value, 0.75);
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(Error::SingleClass(_))
        ));
    }

    proptest! {
        #[test]
        fn complement_and_monotone_invariance(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0)).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
            let a = auc(&scores, &labels).unwrap().value;
            let b = auc(&scores, &flipped).unwrap().value;
            prop_assert_eq!(a + b, 1.0);
            let warped: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
            prop_assert_eq!(auc(&warped, &labels).unwrap().value, a);
        }
    }
}
