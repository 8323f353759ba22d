//! Softmax cross-entropy with log-sum-exp stabilization.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean cross-entropy over the batch and its gradient with respect to the
/// logits: `(softmax − onehot)/batch`.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, labels: &[u32]) -> Result<(T, Tensor<T>)> {
    let (batch, classes) = logits.dims2("softmax_xent")?;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch {
            op: "softmax_xent",
            left: vec![batch, classes],
            right: vec![labels.len()],
        });
    }
    let mut grad = logits.clone();
    let inv_batch = T::one() / T::from_usize(batch);
    let mut total = T::zero();
    for (row, &label) in grad.data_mut().chunks_exact_mut(classes).zip(labels.iter()) {
        let label = label as usize;
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let label_logit = row[label];
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        total += max + sum.ln() - label_logit;
        let inv_sum = T::one() / sum;
        for v in row.iter_mut() {
            *v = *v * inv_sum * inv_batch;
        }
        row[label] -= inv_batch;
    }
    Ok((total * inv_batch, grad))
}

/// Fraction of rows whose argmax equals the label, in percent.
pub fn accuracy_percent<T: Scalar>(logits: &Tensor<T>, labels: &[u32]) -> Result<f64> {
    let (batch, classes) = logits.dims2("accuracy")?;
    if labels.len() != batch {
        return Err(Error::ShapeMismatch {
            op: "accuracy",
            left: vec![batch, classes],
            right: vec![labels.len()],
        });
    }
    let mut hits = 0usize;
    for (row, &label) in logits.data().chunks_exact(classes).zip(labels.iter()) {
        let mut best = 0usize;
        for (i, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = i;
            }
        }
        if best == label as usize {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / batch as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn uniform_logits_give_ln_classes() {
        for classes in [2usize, 10, 100] {
            let logits = Tensor::<f64>::zeros(vec![4, classes]).unwrap();
            let labels = vec![0u32; 4];
            let (loss, _) = softmax_xent(&logits, &labels).unwrap();
            assert!((loss - (classes as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn huge_margin_drives_loss_to_zero() {
        let mut logits = Tensor::<f64>::zeros(vec![1, 5]).unwrap();
        logits.data_mut()[2] = 1e4;
        let (loss, _) = softmax_xent(&logits, &[2]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(loss >= 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(70);
        let logits = Tensor::<f64>::randn(vec![4, 10], &mut rng).unwrap();
        let labels = [3u32, 0, 9, 5];
        let (_, grad) = softmax_xent(&logits, &labels).unwrap();
        let h = 1e-6;
        for idx in 0..40 {
            let mut plus = logits.clone();
            plus.data_mut()[idx] += h;
            let mut minus = logits.clone();
            minus.data_mut()[idx] -= h;
            let (lp, _) = softmax_xent(&plus, &labels).unwrap();
            let (lm, _) = softmax_xent(&minus, &labels).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - grad.data()[idx]).abs() <= 1e-6,
                "index {idx}: fd {fd} vs analytic {}",
                grad.data()[idx]
            );
        }
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let logits = Tensor::<f64>::zeros(vec![2, 3]).unwrap();
        assert!(matches!(
            softmax_xent(&logits, &[0, 3]),
            Err(Error::LabelOutOfRange { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn accuracy_counts_argmax_hits() {
        let logits = Tensor::new(vec![2, 3], vec![0.1, 0.9, 0.0, 0.8, 0.1, 0.1]).unwrap();
        assert_eq!(accuracy_percent(&logits, &[1, 0]).unwrap(), 100.0);
        assert_eq!(accuracy_percent(&logits, &[0, 0]).unwrap(), 50.0);
    }
}
