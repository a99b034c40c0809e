use crate::error::{Error, Result};

/// Mean cross-entropy over the batch and its gradient `(softmax - onehot) / B`.
pub fn cross_entropy(logits: &[[f64; 2]], labels: &[usize]) -> Result<(f64, Vec<[f64; 2]>)> {
    if logits.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: logits.len(),
            right: labels.len(),
        });
    }
    if logits.is_empty() {
        return Err(Error::Empty("cross_entropy batch"));
    }
    let b = logits.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (l, &y) in logits.iter().zip(labels) {
        if y > 1 {
            return Err(Error::InvalidConfig(format!("label {y} is not binary")));
        }
        let m = l[0].max(l[1]);
        let lse = m + ((l[0] - m).exp() + (l[1] - m).exp()).ln();
        loss += lse - l[y];
        let p = [(l[0] - lse).exp(), (l[1] - lse).exp()];
        let mut g = [p[0] / b, p[1] / b];
        g[y] -= 1.0 / b;
        grad.push(g);
    }
    Ok((loss / b, grad))
}

/// Gradient reversal: the forward pass is the identity.
pub fn grad_reverse_forward(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// Gradient reversal backward pass: `-lambda * upstream`.
pub fn grad_reverse_backward(upstream: &[f64], lambda: f64) -> Vec<f64> {
    upstream.iter().map(|g| -lambda * g).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confident_and_uniform() {
        let (l, _) = cross_entropy(&[[25.0, 0.0]], &[0]).unwrap();
        assert!(l <= 1e-8);
        for y in 0..2 {
            let (l, g) = cross_entropy(&[[0.0, 0.0]], &[y]).unwrap();
            assert!((l - 2f64.ln()).abs() < 1e-15);
            assert!((g[0][y] + 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form() {
        let (l, _) = cross_entropy(&[[1.0, -1.0]], &[1]).unwrap();
        assert!((l - (1.0 + 2f64.exp()).ln()).abs() < 1e-14);
    }

    #[test]
    fn huge_logits_are_stable() {
        let (l, g) = cross_entropy(&[[1000.0, -1000.0]], &[1]).unwrap();
        assert!((l - 2000.0).abs() < 1e-9);
        assert!(g[0].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn gradient_is_mean_over_batch() {
        let (_, g) = cross_entropy(&[[0.0, 0.0], [0.0, 0.0]], &[0, 1]).unwrap();
        assert_eq!(g[0], [-0.25, 0.25]);
        assert_eq!(g[1], [0.25, -0.25]);
    }

    #[test]
    fn reversal() {
        assert_eq!(grad_reverse_forward(&[1.5, -2.0]), vec![1.5, -2.0]);
        assert_eq!(grad_reverse_backward(&[1.0], 0.3), vec![-0.3]);
        let r = grad_reverse_backward(&[2.0, -4.0], 0.3);
        assert!((r[0] + 0.6).abs() < 1e-15 && (r[1] - 1.2).abs() < 1e-15);
    }
}
