//! Rank statistics used throughout: Spearman with ties, its confidence
//! interval, phi on binary flags and tie-aware AUC.

use lesion_debias::stats::{auc, average_ranks, phi, spearman, spearman_ci};

fn main() -> lesion_debias::Result<()> {
    let x = [1.0, 2.0, 2.0, 3.0, 5.0, 5.0, 5.0, 8.0];
    let y = [2.0, 1.0, 4.0, 3.0, 6.0, 7.0, 7.0, 9.0];
    println!("ranks of x: {:?}", average_ranks(&x));
    let rho = spearman(&x, &y)?;
    let (lo, hi) = spearman_ci(rho, x.len())?;
    println!("spearman {rho:.4}  95% CI [{lo:.3}, {hi:.3}]");

    let a = [true, true, false, false, true, false];
    let b = [true, false, false, false, true, true];
    println!("phi {:.4}", phi(&a, &b)?);

    let scores = [0.9, 0.8, 0.8, 0.3, 0.2, 0.8];
    let labels = [true, true, false, false, false, true];
    let r = auc(&scores, &labels)?;
    println!("auc {:.4} ({} positives, {} negatives)", r.value, r.n_pos, r.n_neg);

    // Constant input has no defined rank correlation.
    if let Err(e) = spearman(&[1.0; 5], &y[..5]) {
        println!("constant input: {e}");
    }
    Ok(())
}
